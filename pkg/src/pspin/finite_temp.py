"""Finite-temperature variational functionals and the zero-temperature limit sweep.

Order parameters are k-atom distribution functions x on [0, 1] with x = 0
below the first atom, x = x_i on [q_i, q_{i+1}), and x = 1 at and above the
last atom q_k (so x(qhat) = 1 holds at qhat = q_k; any qhat in [q_k, 1) gives
the same functional values).  With xi_b = beta^2 xi and h_b = beta*h, the two
equivalent free-energy functionals are

    Q_b(x)   = 1/2 [ (xi_b'(1)+h_b^2) X(1) - int xi_b'' X + int_0^qhat dq/(X(1)-X(q))
                     + log(1-qhat) ],                      X(q) = int_0^q x,
    P_b(x,b) = 1/2 [ h_b^2/(b-d(0)) + int xi_b''(q)/(b-d(q)) dq + b - 1 - log b
                     - int q xi_b''(q) x(q) dq ],          d(q) = int_q^1 xi_b'' x,

with P_b defined for b > max(1, d(0)).  As beta grows, F(beta)/beta rises to
the ground-state energy and beta*x_beta approaches the zero-temperature order
parameter (L0, alpha0); beta_sweep reports those diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from ._stepfun import StepProfile
from .errors import PreconditionError
from .mixture import MixtureSpec


@dataclass(frozen=True)
class FiniteTempOrder:
    """Step distribution function with atoms (q_i, x_i), x_k = 1, at inverse
    temperature beta.  qhat defaults to the last atom location."""

    qs: np.ndarray
    xs: np.ndarray
    beta: float
    qhat: float | None = None

    def __post_init__(self):
        qs = np.atleast_1d(np.asarray(self.qs, dtype=float))
        xs = np.atleast_1d(np.asarray(self.xs, dtype=float))
        if qs.size != xs.size or qs.size == 0:
            raise PreconditionError("qs and xs must be nonempty and equally sized")
        if qs[0] < 0 or qs[-1] >= 1.0 or np.any(np.diff(qs) <= 0):
            raise PreconditionError("atom locations must satisfy 0 <= q_1 < ... < q_k < 1")
        if np.any(xs < 0) or (xs.size > 1 and np.any(np.diff(xs) <= 0)):
            raise PreconditionError("atom values must be strictly increasing and >= 0")
        if abs(xs[-1] - 1.0) > 1e-12:
            raise PreconditionError("last atom value must be 1 (x(qhat) = 1)")
        xs = xs.copy()
        xs[-1] = 1.0
        qhat = self.qhat if self.qhat is not None else float(qs[-1])
        if not qs[-1] <= qhat < 1.0:
            raise PreconditionError("qhat must lie in [q_k, 1)")
        if self.beta <= 0:
            raise PreconditionError("beta must be positive")
        object.__setattr__(self, "qs", qs)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "qhat", float(qhat))
        object.__setattr__(self, "beta", float(self.beta))

    def breakpoints(self):
        """Cell edges and values of x as a step function on [0, 1].

        Cells: [0, q_1) -> 0, [q_i, q_{i+1}) -> x_i, [q_k, 1] -> 1.  The empty
        leading cell is dropped when q_1 = 0.
        """
        nodes = np.concatenate([[0.0], self.qs, [1.0]])
        vals = np.concatenate([[0.0], self.xs])
        if self.qs[0] <= 1e-15:
            nodes, vals = nodes[1:], vals[1:]
        return nodes, vals

    def x_at(self, s):
        """x(s), right-continuous."""
        nodes, vals = self.breakpoints()
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(nodes, s, side="right") - 1, 0, vals.size - 1)
        out = vals[idx]
        return float(out) if out.ndim == 0 else out

    def x_cumulative(self, s):
        """X(s) = int_0^s x, exact piecewise-linear evaluation."""
        nodes, vals = self.breakpoints()
        cum = np.concatenate([[0.0], np.cumsum(vals * np.diff(nodes))])
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(nodes, s, side="right") - 1, 0, vals.size - 1)
        out = cum[idx] + vals[idx] * (s - nodes[idx])
        return float(out) if out.ndim == 0 else out

    def with_qhat(self, qhat: float) -> "FiniteTempOrder":
        return FiniteTempOrder(self.qs, self.xs, self.beta, qhat=qhat)

    def scaled_profile(self, m: MixtureSpec) -> StepProfile:
        """Step profile of x against xi_beta'' for exact weighted integrals."""
        beta2 = self.beta**2
        nodes, vals = self.breakpoints()

        def xi_b(s, order):
            return beta2 * m.xi(s, order)

        return StepProfile(nodes, vals, xi_b)


def _recip_term(o: FiniteTempOrder):
    """Exact int_0^qhat dq / (X(1) - X(q)) for the step function x.

    On each cell X is linear with slope v, so the integrand has antiderivative
    -(1/v) log(X(1) - X(q)); cells with v = 0 contribute length / constant.
    """
    nodes, vals = o.breakpoints()
    cum = np.concatenate([[0.0], np.cumsum(vals * np.diff(nodes))])
    x1 = cum[-1]
    total = 0.0
    for left, right, v, c_left in zip(nodes[:-1], nodes[1:], vals, cum[:-1]):
        right = min(right, o.qhat)
        if right <= left:
            break
        xhat_left = x1 - c_left
        if xhat_left <= 0:
            raise PreconditionError("X(1) - X(q) must stay positive below qhat")
        width = right - left
        if v > 0:
            z = v * width / xhat_left
            factor = -math.log1p(-z) / z if z > 1e-10 else 1.0 + 0.5 * z
            total += width / xhat_left * factor
        else:
            total += width / xhat_left
    return total


def eval_CS(m: MixtureSpec, o: FiniteTempOrder) -> float:
    """Free-energy functional Q_beta(x) in the integrated-by-parts form.

    The xi_b'' term uses composite Simpson on the atom cells refined to ~2048
    subintervals; the reciprocal term and X are exact.
    """
    beta2 = o.beta**2
    h_b2 = beta2 * m.h**2
    x1 = o.x_cumulative(1.0)
    term1 = (beta2 * m.xi(1.0, 1) + h_b2) * x1

    nodes, _ = o.breakpoints()
    term2 = 0.0
    for left, right in zip(nodes[:-1], nodes[1:]):
        if right <= left:
            continue
        n_sub = max(2, int(math.ceil((right - left) * 2048)))
        edges = np.linspace(left, right, n_sub + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        f_edges = beta2 * m.xi(edges, 2) * o.x_cumulative(edges)
        f_mids = beta2 * m.xi(mids, 2) * o.x_cumulative(mids)
        term2 += float(np.sum(np.diff(edges) / 6.0 * (f_edges[:-1] + 4.0 * f_mids + f_edges[1:])))

    term3 = _recip_term(o)
    term4 = math.log1p(-o.qhat)
    return 0.5 * (term1 - term2 + term3 + term4)


def eval_CS_reference(m: MixtureSpec, o: FiniteTempOrder) -> float:
    """Independent evaluation of the same functional in its direct form.

    int (xi_b' + h_b^2) x dq is exact for step x; serves as an oracle for
    eval_CS.
    """
    beta2 = o.beta**2
    h_b2 = beta2 * m.h**2
    nodes, vals = o.breakpoints()
    anti = beta2 * np.asarray(m.xi(nodes, 0), dtype=float) + h_b2 * nodes
    term1 = float(np.sum(vals * np.diff(anti)))
    return 0.5 * (term1 + _recip_term(o) + math.log1p(-o.qhat))


def eval_parisi_P(m: MixtureSpec, o: FiniteTempOrder, b: float) -> float:
    """Parisi-form functional P_beta(x, b); exact closed-form evaluation."""
    prof = o.scaled_profile(m)
    d0 = prof.W(1.0)
    if b <= max(1.0, d0):
        raise PreconditionError(f"b={b} must exceed max(1, int xi_b'' x)={max(1.0, d0)}")
    beta2 = o.beta**2
    h_b2 = beta2 * m.h**2
    # d(q) = W(1) - W(q) so b - d(q) = (b - W(1)) + W(q)
    integral = prof.integral_recip(0.0, 1.0, b - d0, 1.0)
    qterm = prof.integral_q_weighted()
    return 0.5 * (h_b2 / (b - d0) + integral + b - 1.0 - math.log(b) - qterm)


def minimize_parisi_b(m: MixtureSpec, o: FiniteTempOrder) -> tuple[float, float]:
    """Minimize P_beta(x, b) over admissible b at fixed x; returns (b, value)."""
    prof = o.scaled_profile(m)
    lo = max(1.0, prof.W(1.0)) + 1e-9
    span = 10.0
    while eval_parisi_P(m, o, lo + span) < eval_parisi_P(m, o, lo + span * 0.99):
        span *= 4.0
        if span > 1e8:
            raise RuntimeError("b-minimization bracket expansion failed")
    res = minimize_scalar(
        lambda b: eval_parisi_P(m, o, b),
        bounds=(lo, lo + span),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x), float(res.fun)


def _theta_to_order(theta: np.ndarray, beta: float, k: int) -> FiniteTempOrder:
    """Unconstrained reals -> valid k-atom order via sigmoid + sorting."""
    raw_q = 1.0 / (1.0 + np.exp(-theta[:k]))
    qs = np.sort(np.clip(raw_q, 1e-9, 1.0 - 1e-9))
    qs += 1e-9 * np.arange(k)  # break exact ties
    qs = np.clip(qs, 1e-9, 1.0 - 1e-9)
    if k > 1:
        raw_x = 1.0 / (1.0 + np.exp(-theta[k:]))
        xs_mid = np.sort(np.clip(raw_x, 1e-9, 1.0 - 1e-9))
        xs_mid = np.minimum(xs_mid + 1e-12 * np.arange(k - 1), 1.0 - 1e-9)
        xs = np.concatenate([xs_mid, [1.0]])
        fix = np.maximum.accumulate(xs + np.arange(k) * 1e-15)
        xs = np.minimum(fix, 1.0)
        xs[-1] = 1.0
    else:
        xs = np.array([1.0])
    return FiniteTempOrder(qs, xs, beta)


def minimize_CS_krsb(
    m: MixtureSpec,
    beta: float,
    k: int = 2,
    tol: float = 1e-8,
    n_starts: int = 8,
    seed: int = 0,
    maxiter: int = 600,
) -> tuple[FiniteTempOrder, float]:
    """Heuristic global minimization of Q_beta over k-atom order parameters.

    Multi-start Nelder-Mead over a sorted sigmoid re-parameterization; returns
    (best order, best value).  Quality is asserted elsewhere through the
    monotone-in-k and beta-sweep diagnostics, not here.
    """
    if k < 1:
        raise PreconditionError("k must be >= 1")
    dim = 2 * k - 1

    def objective(theta):
        try:
            return eval_CS(m, _theta_to_order(np.asarray(theta), beta, k))
        except (PreconditionError, FloatingPointError, ValueError):
            return 1e12

    rng = np.random.default_rng(seed)
    # structured start near the low-temperature scaling qhat ~ 1 - 1/beta
    q_target = np.clip(1.0 - 1.0 / beta, 0.05, 1.0 - 1e-6)
    logit = math.log(q_target / (1.0 - q_target))
    starts = [np.concatenate([np.full(k, logit) + 0.5 * np.arange(k), np.zeros(dim - k)])]
    starts += [rng.normal(scale=2.0, size=dim) for _ in range(n_starts - 1)]

    best_val, best_theta = np.inf, None
    finals = []
    for theta0 in starts:
        res = minimize(
            objective,
            theta0,
            method="Nelder-Mead",
            options={"maxiter": maxiter, "xatol": 1e-10, "fatol": 1e-13},
        )
        finals.append(res.fun)
        if res.fun < best_val:
            best_val, best_theta = res.fun, res.x
    # stability across restarts: polish the winner once more
    res = minimize(
        objective,
        best_theta,
        method="Nelder-Mead",
        options={"maxiter": 2 * maxiter, "xatol": 1e-12, "fatol": 1e-14},
    )
    if res.fun < best_val:
        best_val, best_theta = res.fun, res.x
    order = _theta_to_order(best_theta, beta, k)
    return order, float(best_val)


def beta_sweep(
    m: MixtureSpec,
    betas,
    k: int = 2,
    s_grid=None,
    seed: int = 0,
    n_starts: int = 8,
) -> list[dict]:
    """Minimize Q_beta along increasing betas and report convergence diagnostics.

    Each row carries F(beta)/beta, L_beta = int beta*x_beta, beta*(1 - qhat)
    (diagnostic only; no limit is asserted), and beta*x_beta sampled on a fixed
    grid of [0, 0.95].
    """
    betas = list(betas)
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise PreconditionError("betas must be increasing")
    if s_grid is None:
        s_grid = np.linspace(0.0, 0.95, 20)
    rows = []
    for beta in betas:
        order, val = minimize_CS_krsb(m, beta, k=k, seed=seed, n_starts=n_starts)
        rows.append(
            {
                "beta": beta,
                "F_over_beta": val / beta,
                "L_beta": beta * order.x_cumulative(1.0),
                "beta_one_minus_qhat": beta * (1.0 - order.qs[-1]),
                "s_grid": np.asarray(s_grid, dtype=float),
                "scaled_x": beta * order.x_at(np.asarray(s_grid, dtype=float)),
                "order": order,
            }
        )
    return rows


def write_sweep_csv(rows, path):
    """Emit beta-sweep rows: beta, F_over_beta, L_beta, then beta*x_beta samples."""
    import csv

    s_grid = rows[0]["s_grid"]
    header = ["beta", "F_over_beta", "L_beta", "beta_one_minus_qhat"] + [
        f"beta_x_at_{s:.4f}" for s in s_grid
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    format(row["beta"], ".17g"),
                    format(row["F_over_beta"], ".17g"),
                    format(row["L_beta"], ".17g"),
                    format(row["beta_one_minus_qhat"], ".17g"),
                ]
                + [format(v, ".17g") for v in row["scaled_x"]]
            )
