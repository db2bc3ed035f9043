"""Exact integrals against piecewise-constant profiles on [0, 1].

A profile is a right-continuous step function v given by nodes
0 = s_0 < ... < s_M = 1 and cell values v_i on [s_i, s_{i+1}).  Everything
downstream needs integrals of the forms

    W(x)  = int_0^x xi''(q) v(q) dq,
    int_{x0}^{x1} xi''(q) / (c + kappa * W(q)) dq,
    int_0^1 q xi''(q) v(q) dq,

all of which have closed forms per cell because W is built from antiderivatives
of xi''.  ``xi`` is any callable (s, order) -> value so callers can pass a
temperature-scaled covariance function.
"""

from __future__ import annotations

import numpy as np


class StepProfile:
    """Step function with exact xi''-weighted cumulative integrals."""

    def __init__(self, nodes, vals, xi):
        nodes = np.asarray(nodes, dtype=float)
        vals = np.asarray(vals, dtype=float)
        if nodes.ndim != 1 or nodes.size != vals.size + 1:
            raise ValueError("nodes must be 1-d with len(vals)+1 entries")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        self.nodes = nodes
        self.vals = vals
        self.xi = xi
        self._xi1_nodes = np.asarray(xi(nodes, 1), dtype=float)
        cells = vals * np.diff(self._xi1_nodes)
        self._W_nodes = np.concatenate([[0.0], np.cumsum(cells)])

    def value(self, x):
        """Step-function value v(x); right-continuous, v(1) = last cell value."""
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, self.vals.size - 1)
        out = self.vals[idx]
        return float(out) if out.ndim == 0 else out

    def W(self, x):
        """Cumulative int_0^x xi'' v, exact."""
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, self.vals.size - 1)
        xi1 = np.asarray(self.xi(x, 1), dtype=float)
        out = self._W_nodes[idx] + self.vals[idx] * (xi1 - self._xi1_nodes[idx])
        return float(out) if out.ndim == 0 else out

    def _pieces(self, x0, x1):
        """Sub-cell boundaries covering [x0, x1] plus owning-cell indices."""
        lo = np.searchsorted(self.nodes, x0, side="right")
        hi = np.searchsorted(self.nodes, x1, side="left")
        pts = np.concatenate([[x0], self.nodes[lo:hi], [x1]])
        idx = np.clip(np.searchsorted(self.nodes, pts[:-1], side="right") - 1, 0, self.vals.size - 1)
        return pts, idx

    def integral_recip(self, x0, x1, c, kappa):
        """Exact int_{x0}^{x1} xi''(q) / (c + kappa*W(q)) dq.

        Requires the denominator to stay positive on [x0, x1]; kappa >= 0.
        """
        if x1 <= x0:
            return 0.0
        pts, idx = self._pieces(x0, x1)
        v = self.vals[idx]
        xi1 = np.asarray(self.xi(pts, 1), dtype=float)
        dxi1 = np.diff(xi1)
        den_l = c + kappa * self.W(pts[:-1])
        if np.min(den_l) <= 0 or c + kappa * self.W(x1) <= 0:
            raise ValueError("denominator c + kappa*W must stay positive")
        z = kappa * v * dxi1 / den_l
        small = np.abs(z) < 1e-10
        factor = np.where(small, 1.0 - 0.5 * z, np.log1p(np.where(small, 0.0, z)) / np.where(z == 0.0, 1.0, z))
        return float(np.sum(dxi1 / den_l * factor))

    def integral_q_weighted(self):
        """Exact int_0^1 q xi''(q) v(q) dq via the antiderivative q xi' - xi."""
        n = self.nodes
        anti = n * self._xi1_nodes - np.asarray(self.xi(n, 0), dtype=float)
        return float(np.sum(self.vals * np.diff(anti)))

    def integral_against(self, antideriv):
        """Exact int_0^1 f(q) v(q) dq for f with the given antiderivative."""
        vals = np.asarray(antideriv(self.nodes), dtype=float)
        return float(np.sum(self.vals * np.diff(vals)))
