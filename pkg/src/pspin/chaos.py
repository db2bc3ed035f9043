"""Disorder-chaos prediction at zero temperature.

From a certified minimizer (L0, alpha0) of the zero-temperature functional,
builds the derived quantities

    delta0 = L0 - int alpha0,                     B  = xi''(1) delta0 + 1/delta0,
    V0 = int xi'' alpha0 + xi''(1) delta0,        V1 = int s xi''(s) alpha0 + xi''(1) delta0,
    D(q) = V0 - int_0^q xi'' alpha0  (q < 1),     D(1) = 0,

and evaluates the coupled-system energy functional E(t, u, lambda), its error
term, the overlap equation f_t(u) = L0^2 (t xi'(u) + h^2) - u with root u_t,
and the fluctuation constant chi = int_0^1 xi(u_t) dt.  delta0 is defined as
the gap, which turns B - D(0) = 1/L0 into a consistency test of the upstream
minimizer rather than a definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._stepfun import StepProfile
from .errors import InconsistentSolutionError, PreconditionError
from .finite_temp import FiniteTempOrder
from .mixture import MixtureSpec
from .zero_temp import ZeroTempSolution


@dataclass(frozen=True)
class ChaosContext:
    mixture: MixtureSpec
    sol: ZeroTempSolution
    delta0: float
    V0: float
    V1: float
    B: float
    profile: StepProfile = field(repr=False)

    @property
    def L0(self) -> float:
        return self.sol.L0

    @property
    def q0(self) -> float:
        return self.sol.q0

    def D(self, q):
        """D(q) = V0 - int_0^q xi'' alpha0 for q < 1; D(1) = 0 by convention."""
        q = np.asarray(q, dtype=float)
        out = np.where(q >= 1.0, 0.0, self.V0 - self.profile.W(np.minimum(q, 1.0)))
        return float(out) if out.ndim == 0 else out


def build_context(
    m: MixtureSpec, sol: ZeroTempSolution, rel_tol: float = 1e-6, require_even: bool = True
) -> ChaosContext:
    """Derive the chaos quantities and validate their consistency invariants.

    The coupled-system prediction is only meaningful for even mixtures; pass
    require_even=False to compute the derived quantities and identities alone
    (they are facts about the minimizer, not about coupled disorder).
    """
    if require_even and not m.is_even:
        raise PreconditionError("chaos analysis requires an even mixture")
    delta0 = sol.param.gap()
    if delta0 <= 0:
        raise InconsistentSolutionError(f"gap delta0={delta0:.3e} must be positive")
    prof = StepProfile(sol.param.grid, sol.param.alpha_vals, m.xi)
    xipp1 = m.xi(1.0, 2)
    V0 = prof.W(1.0) + xipp1 * delta0
    V1 = prof.integral_q_weighted() + xipp1 * delta0
    B = xipp1 * delta0 + 1.0 / delta0
    ctx = ChaosContext(mixture=m, sol=sol, delta0=delta0, V0=V0, V1=V1, B=B, profile=prof)

    b_minus_d0 = B - ctx.D(0.0)
    if abs(b_minus_d0 * sol.L0 - 1.0) > rel_tol:
        raise InconsistentSolutionError(
            f"B - D(0) = {b_minus_d0:.8e} deviates from 1/L0 = {1.0 / sol.L0:.8e} "
            f"beyond relative tolerance {rel_tol:g}"
        )
    qs = np.linspace(0.0, 1.0, 257)
    dvals = ctx.D(qs[:-1])
    if np.any(dvals < -1e-12) or np.any(dvals > ctx.D(0.0) + 1e-12) or not ctx.D(0.0) < B:
        raise InconsistentSolutionError("D(q) must satisfy 0 <= D(q) <= D(0) < B")
    return ctx


def f_t(ctx: ChaosContext, t: float, u: float) -> float:
    """Overlap equation residual L0^2 (t xi'(u) + h^2) - u."""
    return ctx.L0**2 * (t * ctx.mixture.xi(u, 1) + ctx.mixture.h**2) - u


def solve_u_t(ctx: ChaosContext, t: float, tol: float = 1e-12) -> float:
    """Unique root of f_t on [0, q0]; 0 exactly when h = 0.

    Bisection; the endpoints have opposite signs for h > 0 and 0 < t < 1.
    """
    if not 0.0 < t < 1.0:
        raise PreconditionError("t must lie strictly inside (0, 1)")
    if ctx.mixture.h == 0.0:
        return 0.0
    lo, hi = 0.0, ctx.q0
    flo, fhi = f_t(ctx, t, lo), f_t(ctx, t, hi)
    if flo <= 0.0 or fhi >= 0.0:
        raise InconsistentSolutionError(
            f"bisection bracket failed: f_t(0)={flo:.3e}, f_t(q0)={fhi:.3e}"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f_t(ctx, t, mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def chi(ctx: ChaosContext, quad_points: int = 64) -> float:
    """Fluctuation constant int_0^1 xi(u_t) dt by Gauss-Legendre quadrature."""
    if ctx.mixture.h == 0.0:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(quad_points)
    ts = 0.5 * (x + 1.0)
    vals = [ctx.mixture.xi(solve_u_t(ctx, t), 0) for t in ts]
    return float(0.5 * np.dot(w, vals))


def _du_params(ctx: ChaosContext, au: float, t: float, shift: float):
    """Denominator shift + kappa for B + shift - D_u(q) = c + kappa W(q)."""
    kt = (1.0 - t) / (1.0 + t)
    if au >= 1.0:
        return ctx.B + shift - kt * ctx.V0, kt
    w_au = ctx.profile.W(au)
    return ctx.B + shift - ctx.V0 + (1.0 - kt) * w_au, kt


def D_u(ctx: ChaosContext, q, u: float, t: float):
    """Deformed kernel D_u(q) on [0, |u|]; three-branch definition."""
    au = abs(u)
    q = np.asarray(q, dtype=float)
    kt = (1.0 - t) / (1.0 + t)
    if au >= 1.0:
        out = np.where(q >= 1.0, 0.0, kt * (ctx.V0 - ctx.profile.W(np.minimum(q, 1.0))))
    else:
        w_au = ctx.profile.W(au)
        out = np.asarray(ctx.V0 - w_au + kt * (w_au - ctx.profile.W(q)))
    return float(out) if out.ndim == 0 else out


def eval_E(ctx: ChaosContext, t: float, u: float, lam: float) -> float:
    """Scaled coupled-system energy bound E(t, u, lambda).

    Requires |lambda| < B - D(0).  All q-integrals are exact per grid cell.
    """
    B, V0 = ctx.B, ctx.V0
    if abs(lam) >= B - ctx.D(0.0):
        raise PreconditionError(f"|lambda|={abs(lam):.4g} must be < B - D(0) = {B - ctx.D(0.0):.4g}")
    if abs(u) > 1.0 or not 0.0 <= t <= 1.0:
        raise PreconditionError("require |u| <= 1 and t in [0, 1]")
    prof = ctx.profile
    au = abs(u)
    iota = 1.0 if u >= 0 else -1.0
    h2 = ctx.mixture.h**2

    i1 = prof.integral_recip(0.0, au, B - iota * lam - V0, 1.0)
    c_u, k_u = _du_params(ctx, au, t, iota * lam)
    i2 = prof.integral_recip(0.0, au, c_u, k_u)
    i3 = prof.integral_recip(au, 1.0, B - lam - V0, 1.0)
    i4 = prof.integral_recip(au, 1.0, B + lam - V0, 1.0)
    T = (
        0.5 * (1.0 + t) * i1
        + 0.5 * (1.0 - t) * i2
        + 0.5 * i3
        + 0.5 * i4
        - lam * u
        + B
        - ctx.V1
    )
    if u >= 0:
        field_term = h2 / (B - lam - ctx.D(0.0))
    else:
        field_term = h2 / (B - lam - D_u(ctx, 0.0, u, t))
    return T + field_term


def eval_error_term(ctx: ChaosContext, t: float, u: float) -> float:
    """Error term in E(t, u, 0) = 2 GS - error(t, u); nonnegative, zero on |u| <= q0."""
    B, V0 = ctx.B, ctx.V0
    prof = ctx.profile
    au = abs(u)
    i_d = prof.integral_recip(0.0, au, B - V0, 1.0)
    c_u, k_u = _du_params(ctx, au, t, 0.0)
    i_du = prof.integral_recip(0.0, au, c_u, k_u)
    out = 0.5 * (1.0 - t) * (i_d - i_du)
    if u < 0:
        d0 = ctx.D(0.0)
        du0 = D_u(ctx, 0.0, u, t)
        out += ctx.mixture.h**2 * (d0 - du0) / ((B - d0) * (B - du0))
    return out


@dataclass(frozen=True)
class ChaosProfile:
    """Overlap prediction u_t on a t-grid plus the constant chi."""

    t_grid: np.ndarray
    u_t_vals: np.ndarray
    chi: float

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        u = np.asarray(self.u_t_vals, dtype=float)
        if t.shape != u.shape:
            raise PreconditionError("t_grid and u_t_vals must align")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "u_t_vals", u)


def compute_profile(ctx: ChaosContext, t_grid, quad_points: int = 64) -> ChaosProfile:
    t_grid = np.asarray(t_grid, dtype=float)
    u_vals = np.array([solve_u_t(ctx, t) for t in t_grid])
    c = chi(ctx, quad_points)
    if ctx.mixture.h == 0.0 and np.any(u_vals != 0.0):
        raise InconsistentSolutionError("u_t must vanish identically when h = 0")
    if ctx.mixture.h > 0.0 and (np.any(u_vals <= 0.0) or np.any(u_vals >= ctx.q0)):
        raise InconsistentSolutionError("u_t must lie in (0, q0) when h > 0")
    return ChaosProfile(t_grid=t_grid, u_t_vals=u_vals, chi=c)


def eval_coupled_parisi(
    m: MixtureSpec, o: FiniteTempOrder, t: float, u: float, b: float, lam: float
) -> float:
    """Finite-temperature coupled two-system functional.

    Requires b > int xi_b'' x + |lambda|.  Exact per-cell evaluation; at t = 1,
    lambda = 0 it collapses to twice the single-system Parisi functional.
    """
    if abs(u) > 1.0 or not 0.0 <= t <= 1.0:
        raise PreconditionError("require |u| <= 1 and t in [0, 1]")
    prof = o.scaled_profile(m)
    d0 = prof.W(1.0)
    if b <= d0 + abs(lam):
        raise PreconditionError(f"b={b} must exceed int xi_b'' x + |lambda| = {d0 + abs(lam)}")
    beta2 = o.beta**2
    h_b2 = beta2 * m.h**2
    au = abs(u)
    iota = 1.0 if u >= 0 else -1.0
    kt = (1.0 - t) / (1.0 + t)
    w_au = prof.W(au)

    # d(q) = W(1) - W(q); d_u(q) = d(au) + kt (d(q) - d(au))
    i1 = prof.integral_recip(0.0, au, b - iota * lam - d0, 1.0)
    c_u = b + iota * lam - d0 + (1.0 - kt) * w_au
    i2 = prof.integral_recip(0.0, au, c_u, kt)
    i3 = prof.integral_recip(au, 1.0, b - lam - d0, 1.0)
    i4 = prof.integral_recip(au, 1.0, b + lam - d0, 1.0)

    log_term = -0.5 * math.log1p(-((lam / b) ** 2))
    T = (
        log_term
        + 0.5 * (1.0 + t) * i1
        + 0.5 * (1.0 - t) * i2
        + 0.5 * i3
        + 0.5 * i4
        - lam * u
        + b
        - 1.0
        - math.log(b)
        - prof.integral_q_weighted()
    )
    if u >= 0:
        field_term = h_b2 / (b - lam - d0)
    else:
        du0 = (1.0 - kt) * (d0 - w_au) + kt * d0
        field_term = h_b2 / (b - lam - du0)
    return T + field_term
