"""Zero-temperature variational problem for the ground-state energy.

Minimizes, over the cone K = {(L, alpha): L > int_0^1 alpha}, the strictly
convex functional

    Q(L, alpha) = 1/2 [ (xi'(1) + h^2) L
                        - int_0^1 xi''(q) A(q) dq
                        + int_0^1 dq / (L - A(q)) ],        A(q) = int_0^q alpha,

with alpha a nonnegative nondecreasing step function on a grid of [0, 1).
The minimizer is characterized by a KKT-style certificate: the stationarity
equation xi'(1) + h^2 = int_0^1 dq / (L - A(q))^2, nonnegativity of

    g(u) = int_u^1 gbar,   gbar(s) = xi'(s) + h^2 - int_0^s dq / (L - A(q))^2,

and g = 0 on the support of the measure induced by alpha.  Closed forms are
available in three phases (replica symmetric, full RSB, pure 1-RSB) and are
used as oracles for the projected-gradient minimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad
from scipy.optimize import isotonic_regression

from .errors import ConvergenceError, FeasibilityError, PreconditionError
from .mixture import MixtureSpec


class Phase(str, Enum):
    RS = "RS"
    ONE_RSB = "OneRSB"
    FULL_RSB = "FullRSB"
    OTHER = "Other"


@dataclass(frozen=True)
class OrderParamZeroT:
    """Feasible point (L, alpha): alpha(s) = alpha_vals[i] on [grid[i], grid[i+1])."""

    grid: np.ndarray
    alpha_vals: np.ndarray
    L: float

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        a = np.asarray(self.alpha_vals, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or a.size != grid.size - 1:
            raise PreconditionError("grid must be 1-d with len(alpha_vals)+1 nodes")
        if abs(grid[0]) > 1e-12 or abs(grid[-1] - 1.0) > 1e-12:
            raise PreconditionError("grid must span [0, 1]")
        if np.any(np.diff(grid) <= 0):
            raise PreconditionError("grid nodes must be strictly increasing")
        if np.any(a < -1e-12) or np.any(np.diff(a) < -1e-12):
            raise PreconditionError("alpha_vals must be nonnegative and nondecreasing")
        a = np.maximum(a, 0.0)
        np.maximum.accumulate(a, out=a)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "alpha_vals", a)
        object.__setattr__(self, "L", float(self.L))

    def cumulative(self) -> np.ndarray:
        """A(s_i) = int_0^{s_i} alpha, exact for the step function."""
        cells = self.alpha_vals * np.diff(self.grid)
        return np.concatenate([[0.0], np.cumsum(cells)])

    def alpha_mass(self) -> float:
        return float(self.cumulative()[-1])

    def gap(self) -> float:
        return self.L - self.alpha_mass()

    @staticmethod
    def uniform(grid_size: int, alpha_vals=None, L: float = 1.0) -> "OrderParamZeroT":
        grid = np.linspace(0.0, 1.0, grid_size + 1)
        if alpha_vals is None:
            alpha_vals = np.zeros(grid_size)
        return OrderParamZeroT(grid, alpha_vals, L)


@dataclass(frozen=True)
class Certificate:
    """Optimality-condition residuals for a candidate (L, alpha)."""

    min_g: float
    eq_residual: float
    support_violation: float
    g_samples: np.ndarray
    eq_scale: float

    def passes(self, tol: float) -> bool:
        return (
            self.eq_residual <= tol * self.eq_scale
            and self.min_g >= -tol
            and abs(self.support_violation) <= tol
        )

    def to_dict(self, with_samples: bool = False) -> dict:
        out = {
            "min_g": self.min_g,
            "eq_residual": self.eq_residual,
            "support_violation": self.support_violation,
            "eq_scale": self.eq_scale,
        }
        if with_samples:
            out["g_samples"] = self.g_samples.tolist()
        return out


@dataclass(frozen=True)
class ZeroTempSolution:
    param: OrderParamZeroT
    gs_value: float
    q0: float
    phase: Phase
    certificate: Certificate

    @property
    def L0(self) -> float:
        return self.param.L

    def to_dict(self, m: MixtureSpec, with_samples: bool = False) -> dict:
        return {
            "mixture": {str(p): g for p, g in m.coeffs.items()},
            "h": m.h,
            "grid": self.param.grid.tolist(),
            "alpha_vals": self.param.alpha_vals.tolist(),
            "L0": self.L0,
            "gs": self.gs_value,
            "q0": self.q0,
            "phase": self.phase.value,
            "certificate": self.certificate.to_dict(with_samples),
        }


def _node_data(m: MixtureSpec, p: OrderParamZeroT, margin: float):
    A = p.cumulative()
    if p.L - A[-1] < margin:
        raise FeasibilityError(
            f"feasibility margin violated: L - int(alpha) = {p.L - A[-1]:.3e} < {margin:.3e}"
        )
    s, a = p.grid, p.alpha_vals
    d = np.diff(s)
    sm = s[:-1] + 0.5 * d
    Am = A[:-1] + 0.5 * a * d
    return A, s, a, d, sm, Am


def eval_Q(m: MixtureSpec, p: OrderParamZeroT, margin: float = 1e-12) -> float:
    """Value of the zero-temperature functional.

    Outer integrals by composite Simpson on the grid refined at the cell
    midpoints, so every alpha-step boundary is a node.
    """
    A, s, a, d, sm, Am = _node_data(m, p, margin)
    xiph2 = m.xi(1.0, 1) + m.h**2
    f0 = m.xi(s[:-1], 2) * A[:-1]
    fm = m.xi(sm, 2) * Am
    f1 = m.xi(s[1:], 2) * A[1:]
    term2 = float(np.sum(d / 6.0 * (f0 + 4.0 * fm + f1)))
    r0 = 1.0 / (p.L - A[:-1])
    rm = 1.0 / (p.L - Am)
    r1 = 1.0 / (p.L - A[1:])
    term3 = float(np.sum(d / 6.0 * (r0 + 4.0 * rm + r1)))
    return 0.5 * (xiph2 * p.L - term2 + term3)


def grad_Q(m: MixtureSpec, p: OrderParamZeroT, margin: float = 1e-12):
    """Exact gradient of the discretized functional.

    Differentiates the same Simpson sums eval_Q computes, so central finite
    differences of eval_Q reproduce it to roundoff.  Returns (dL, dAlpha).
    """
    A, s, a, d, sm, Am = _node_data(m, p, margin)
    xiph2 = m.xi(1.0, 1) + m.h**2
    u0 = 1.0 / (p.L - A[:-1]) ** 2
    um = 1.0 / (p.L - Am) ** 2
    u1 = 1.0 / (p.L - A[1:]) ** 2
    dL = 0.5 * (xiph2 - float(np.sum(d / 6.0 * (u0 + 4.0 * um + u1))))
    v0 = u0 - m.xi(s[:-1], 2)
    vm = um - m.xi(sm, 2)
    v1 = u1 - m.xi(s[1:], 2)
    cell_v = d / 6.0 * (v0 + 4.0 * vm + v1)
    suffix = np.concatenate([np.cumsum(cell_v[::-1])[::-1], [0.0]])
    dAlpha = 0.5 * (d * suffix[1:] + d * d / 6.0 * (2.0 * vm + v1))
    return float(dL), dAlpha


def certificate(m: MixtureSpec, p: OrderParamZeroT, margin: float = 1e-12) -> Certificate:
    """Optimality certificate at (L, alpha).

    The inner cumulative int_0^s dq/(L-A)^2 is exact per cell (A is piecewise
    linear); g is integrated from gbar by composite Simpson on the refined grid.
    """
    A, s, a, d, sm, Am = _node_data(m, p, margin)
    xiph2 = m.xi(1.0, 1) + m.h**2
    den0 = p.L - A[:-1]
    den1 = p.L - A[1:]
    I2 = np.concatenate([[0.0], np.cumsum(d / (den0 * den1))])
    I2m = I2[:-1] + 0.5 * d / (den0 * (p.L - Am))
    eq_residual = abs(xiph2 - I2[-1])
    gbar_nodes = m.xi(s, 1) + m.h**2 - I2
    gbar_mids = m.xi(sm, 1) + m.h**2 - I2m
    cell_g = d / 6.0 * (gbar_nodes[:-1] + 4.0 * gbar_mids + gbar_nodes[1:])
    g_nodes = np.concatenate([np.cumsum(cell_g[::-1])[::-1], [0.0]])
    nu = np.clip(np.diff(np.concatenate([[0.0], a])), 0.0, None)
    total = float(a[-1]) if a.size else 0.0
    if total > 1e-15:
        support_violation = float(nu @ g_nodes[:-1]) / total
    else:
        support_violation = 0.0
    return Certificate(
        min_g=float(np.min(g_nodes)),
        eq_residual=float(eq_residual),
        support_violation=support_violation,
        g_samples=np.column_stack([s, g_nodes]),
        eq_scale=float(xiph2),
    )


def classify_phase(m: MixtureSpec) -> Phase:
    """A-priori phase of the model at zero temperature.

    RS iff xi'(1) + h^2 >= xi''(1); otherwise full RSB if xi''(s)^(-1/2) is
    concave on (0, 1] (second-difference scan); otherwise pure 1-RSB for a
    single p >= 3 term without field; otherwise undetermined.
    """
    if m.xi(1.0, 1) + m.h**2 >= m.xi(1.0, 2):
        return Phase.RS
    s = np.linspace(1e-3, 1.0, 1000)
    f = m.xi(s, 2) ** -0.5
    second = f[:-2] - 2.0 * f[1:-1] + f[2:]
    if np.all(second <= 1e-10):
        return Phase.FULL_RSB
    if len(m.coeffs) == 1 and m.max_p >= 3 and m.h == 0.0:
        return Phase.ONE_RSB
    return Phase.OTHER


def _solution(m, param, gs_value, q0, phase) -> ZeroTempSolution:
    return ZeroTempSolution(
        param=param,
        gs_value=float(gs_value),
        q0=float(q0),
        phase=phase,
        certificate=certificate(m, param),
    )


def closed_form_rs(m: MixtureSpec, grid_size: int = 1000) -> ZeroTempSolution:
    """RS minimizer: L0 = (xi'(1)+h^2)^(-1/2), alpha = 0, GS = (xi'(1)+h^2)^(1/2)."""
    if classify_phase(m) is not Phase.RS:
        raise PreconditionError("model is not replica symmetric: xi'(1)+h^2 < xi''(1)")
    xiph2 = m.xi(1.0, 1) + m.h**2
    param = OrderParamZeroT.uniform(grid_size, L=xiph2**-0.5)
    return _solution(m, param, math.sqrt(xiph2), 1.0, Phase.RS)


def closed_form_frsb(m: MixtureSpec, tol: float = 1e-12, grid_size: int = 1000) -> ZeroTempSolution:
    """Full-RSB minimizer.

    q0 is the unique root of xi'(q) + h^2 - q xi''(q) (bisection), then
    L0 = xi''(q0)^(-1/2), alpha(s) = xi'''(s) / (2 xi''(s)^(3/2)) above q0, and
    GS = q0 xi''(q0)^(1/2) + int_{q0}^1 xi''(q)^(1/2) dq.
    """
    if classify_phase(m) is not Phase.FULL_RSB:
        raise PreconditionError("model is not in the full-RSB phase")

    def root_fn(q):
        return m.xi(q, 1) + m.h**2 - q * m.xi(q, 2)

    if root_fn(0.0) <= 0.0:
        q0 = 0.0
    else:
        lo, hi = 0.0, 1.0
        if root_fn(hi) >= 0.0:
            raise PreconditionError("no sign change for q0: phase misclassified")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if root_fn(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        q0 = 0.5 * (lo + hi)

    L0 = m.xi(q0, 2) ** -0.5

    # cell averages of alpha are exact: the antiderivative of
    # xi'''/(2 xi''^{3/2}) is -xi''^{-1/2}.  The support edge q0 becomes a grid
    # node so no alpha mass leaks below it.
    grid = np.linspace(0.0, 1.0, grid_size + 1)
    if 0.0 < q0 < 1.0 and np.min(np.abs(grid - q0)) > 1e-9:
        grid = np.sort(np.append(grid, q0))

    def anti(s):
        s = np.maximum(s, q0)
        return m.xi(q0, 2) ** -0.5 - m.xi(s, 2) ** -0.5

    alpha_vals = np.diff(anti(grid)) / np.diff(grid)
    gs = q0 * m.xi(q0, 2) ** 0.5 + quad(lambda q: m.xi(q, 2) ** 0.5, q0, 1.0, epsabs=1e-13, limit=200)[0]
    param = OrderParamZeroT(grid, alpha_vals, L0)
    return _solution(m, param, gs, q0, Phase.FULL_RSB)


def onersb_root(p: int, tol: float = 1e-14) -> float:
    """Positive root z of 1/p = (1+z)/z^2 log(1+z) - 1/z, by bisection."""
    if p < 3:
        raise PreconditionError("pure 1-RSB closed form needs p >= 3")

    def fn(z):
        return (1.0 + z) / z**2 * math.log1p(z) - 1.0 / z - 1.0 / p

    lo, hi = 1e-8, 1000.0
    while fn(hi) > 0.0:
        hi *= 2.0
        if hi > 1e12:
            raise PreconditionError("root bracket expansion failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, lo):
            break
    return 0.5 * (lo + hi)


def closed_form_1rsb(p: int, grid_size: int = 1000) -> ZeroTempSolution:
    """Pure p-spin (p >= 3, h = 0) minimizer: one atom at the origin.

    alpha = (z delta)^(1/2) constant, L0 = (z delta)^(1/2) + (delta/z)^(1/2),
    GS = (1 + z/p) / sqrt(1+z), with delta = z/(1+z).
    """
    z = onersb_root(p)
    delta = z / (1.0 + z)
    a0 = math.sqrt(z * delta)
    L0 = a0 + math.sqrt(delta / z)
    gs = (1.0 + z / p) / math.sqrt(1.0 + z)
    m = MixtureSpec.pure(p)
    param = OrderParamZeroT.uniform(grid_size, alpha_vals=np.full(grid_size, a0), L=L0)
    return _solution(m, param, gs, 0.0, Phase.ONE_RSB)


def _project_cone(y: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Euclidean projection (grid-cell weighted) onto {nondecreasing, >= 0}.

    Pool-adjacent-violators, then clipping at zero; the lower bound only binds
    from the left so the composition is the exact projection.
    """
    iso = isotonic_regression(y, weights=weights, increasing=True)
    return np.clip(iso.x, 0.0, None)


def _resample_cells(a: np.ndarray, new_size: int) -> np.ndarray:
    idx = (np.arange(new_size) * a.size) // new_size
    return a[idx]


def _pgd(m, grid, a, L, tol, margin, max_iters, cert_every=25):
    """Projected gradient descent with Armijo backtracking on one grid level.

    The a-gradient is rescaled by cell widths (descent in the L2([0,1]) metric)
    before the monotone-cone projection.  Returns (param, certificate, passed).
    """
    d = np.diff(grid)
    mass = float(a @ d)
    L = max(L, mass + margin)
    p = OrderParamZeroT(grid, a, L)
    q_val = eval_Q(m, p, margin=0.0)
    step = 1.0
    cert = None
    for it in range(max_iters):
        dL, dA = grad_Q(m, p, margin=0.0)
        dir_a = dA / d
        a_cur, L_cur = p.alpha_vals, p.L
        moved2 = 0.0
        for _ in range(60):
            Lc = L_cur - step * dL
            ac = _project_cone(a_cur - step * dir_a, weights=d)
            mass = float(ac @ d)
            if Lc < mass + margin:
                Lc = mass + margin
            pc = OrderParamZeroT(grid, ac, Lc)
            qc = eval_Q(m, pc, margin=0.0)
            dist2 = (Lc - L_cur) ** 2 + float(((ac - a_cur) ** 2) @ d)
            if qc <= q_val - 1e-4 * dist2 / max(step, 1e-16) or step <= 1e-15:
                moved2 = dist2
                break
            step *= 0.5
        p, q_val = pc, qc
        step = min(step * 1.4, 1e4)
        if it % cert_every == cert_every - 1 or moved2 <= 1e-26:
            cert = certificate(m, p, margin=0.0)
            if cert.passes(tol):
                return p, cert, True
            if moved2 <= 1e-26 and it > 50:
                break
    if cert is None:
        cert = certificate(m, p, margin=0.0)
    return p, cert, cert.passes(tol)


def minimize_Q(
    m: MixtureSpec,
    grid_size: int = 1000,
    tol: float = 1e-6,
    *,
    margin: float = 1e-6,
    max_iters: int = 40000,
) -> ZeroTempSolution:
    """Minimize Q over the feasible cone on a uniform grid.

    Starts from the always-feasible RS point and warm-starts fine grids from
    coarse ones.  Raises ConvergenceError (carrying the best iterate) if the
    certificate does not pass at the requested tolerance.
    """
    if grid_size < 50:
        raise PreconditionError("grid_size must be >= 50")
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    levels = []
    sz = grid_size
    while sz >= 100 and len(levels) < 3:
        levels.append(sz)
        sz //= 2
    levels.append(sz)
    levels.reverse()

    xiph2 = m.xi(1.0, 1) + m.h**2
    L = xiph2**-0.5
    a = np.zeros(levels[0])
    passed = False
    for i, M in enumerate(levels):
        if i:
            a = _resample_cells(a, M)
        grid = np.linspace(0.0, 1.0, M + 1)
        final = i == len(levels) - 1
        iters = max_iters if final else min(4000, max_iters)
        level_tol = tol if final else max(tol, 1e-4)
        p, cert, passed = _pgd(m, grid, a, L, level_tol, margin, iters)
        a, L = p.alpha_vals, p.L

    phase = classify_phase(m)
    q0 = extract_q0(p)
    sol = ZeroTempSolution(param=p, gs_value=eval_Q(m, p), q0=q0, phase=phase, certificate=cert)
    if not passed:
        raise ConvergenceError(
            f"certificate did not pass at tol={tol:g} within {max_iters} iterations "
            f"(eq_residual={cert.eq_residual:.3e}, min_g={cert.min_g:.3e}, "
            f"support_violation={cert.support_violation:.3e})",
            best=sol,
        )
    return sol


def extract_q0(p: OrderParamZeroT) -> float:
    """Smallest grid node carrying alpha mass above the support floor, else 1."""
    a = p.alpha_vals
    if a.size == 0 or a[-1] <= 0.0:
        return 1.0
    thr = max(1e-6 * float(a.max()), 1e-9)
    idx = np.nonzero(a > thr)[0]
    return float(p.grid[idx[0]]) if idx.size else 1.0


def gs_partials(m: MixtureSpec, sol: ZeroTempSolution) -> dict:
    """Partial derivatives of GS in h and in each gamma_p at the minimizer."""
    p_ = sol.param
    s = p_.grid
    mass = p_.alpha_mass()
    out_gamma = {}
    for p, g in m.coeffs.items():
        moment = float(np.sum(p_.alpha_vals * np.diff(s**p) / p))
        out_gamma[p] = p * g * (sol.L0 - mass + moment)
    return {"d_h": m.h * sol.L0, "d_gamma": out_gamma}
