"""Finite-N disorder sampling, sphere optimization, and fluctuation estimators.

Disorder tensors are stored raw (not symmetrized) exactly as they enter the
Hamiltonian, so the covariance E X(sigma) X(tau) = N xi(R) holds without
combinatorial bookkeeping.  Streams come from counter-based Philox generators
keyed by (seed, purpose tag, p), which makes common and independent tensors in
coupled runs provably disjoint and every estimator a pure function of its
arguments.

Local ascent cannot certify global maxima for p >= 3; those results are
optimizer lower bounds and are labeled as such by callers.  For the pure p = 2
case a power-iteration eigenvalue oracle provides per-instance exactness
checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import PreconditionError, ResourceCapError
from .mixture import MixtureSpec

DEFAULT_SCALAR_CAP = 20_000_000

# purpose tags for disjoint Philox streams
TAG_TENSOR = 1
TAG_COMMON = 2
TAG_SYS1 = 3
TAG_SYS2 = 4
TAG_RESTART = 5
TAG_POWER = 6


def _rng(*key) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


@dataclass(frozen=True)
class DisorderSample:
    """Gaussian coupling tensors for each active p at system size N."""

    N: int
    seed: int
    stream: int
    tensors: dict[int, np.ndarray]


@dataclass(frozen=True)
class GroundStateResult:
    sigma: np.ndarray
    energy: float
    energy_per_site: float
    restarts: int
    best_restart: int
    converged: bool


def sample_disorder(
    m: MixtureSpec, N: int, seed: int, max_scalars: int = DEFAULT_SCALAR_CAP, stream: int = TAG_TENSOR
) -> DisorderSample:
    """Draw the i.i.d. standard Gaussian tensors, p ascending, row-major."""
    if N < 1 or seed < 0:
        raise PreconditionError("need N >= 1 and seed >= 0")
    total = 0
    for p in m.coeffs:
        total += N**p
        if total > max_scalars:
            raise ResourceCapError(
                f"tensor for p={p} pushes total scalars to {total} > cap {max_scalars}"
            )
    tensors = {}
    for p in m.coeffs:
        g = _rng(seed, stream, p).standard_normal(N**p)
        tensors[p] = g.reshape((N,) * p)
    return DisorderSample(N=N, seed=seed, stream=stream, tensors=tensors)


def _combine(common: DisorderSample, indep: DisorderSample, t: float) -> DisorderSample:
    tensors = {
        p: np.sqrt(t) * common.tensors[p] + np.sqrt(1.0 - t) * indep.tensors[p]
        for p in common.tensors
    }
    return DisorderSample(N=common.N, seed=common.seed, stream=indep.stream, tensors=tensors)


def _check_sphere(sigma: np.ndarray, N: int):
    if abs(float(sigma @ sigma) / N - 1.0) > 1e-10:
        raise PreconditionError("sigma must lie on the sphere |sigma|^2 = N")


def _contract_suffix(tensor: np.ndarray, sigma: np.ndarray, p: int):
    """Suffix contractions S_j (last j axes against sigma), j = 0..p."""
    out = [tensor]
    cur = tensor
    for _ in range(p):
        cur = np.tensordot(cur, sigma, axes=([-1], [0]))
        out.append(cur)
    return out


def eval_energy(d: DisorderSample, m: MixtureSpec, sigma: np.ndarray) -> float:
    """H_N(sigma) = sum_p gamma_p N^{-(p-1)/2} <g, sigma^{(x)p}> + h sum_i sigma_i."""
    sigma = np.asarray(sigma, dtype=float)
    _check_sphere(sigma, d.N)
    total = m.h * float(np.sum(sigma))
    for p, g in m.coeffs.items():
        contraction = d.tensors[p]
        for _ in range(p):
            contraction = np.tensordot(contraction, sigma, axes=([-1], [0]))
        total += g * d.N ** (-(p - 1) / 2.0) * float(contraction)
    return total


def energy_gradient(d: DisorderSample, m: MixtureSpec, sigma: np.ndarray):
    """(H_N(sigma), grad H_N(sigma)), reusing suffix contractions per p."""
    sigma = np.asarray(sigma, dtype=float)
    _check_sphere(sigma, d.N)
    N = d.N
    energy = m.h * float(np.sum(sigma))
    grad = np.full(N, m.h, dtype=float)
    for p, g in m.coeffs.items():
        scale = g * N ** (-(p - 1) / 2.0)
        suffix = _contract_suffix(d.tensors[p], sigma, p)
        energy += scale * float(suffix[p])
        gp = np.zeros(N)
        for axis in range(p):
            # tensor with axis `axis` free: take suffix over the trailing
            # p-1-axis block, then fold the leading axes with sigma
            block = suffix[p - 1 - axis]
            for _ in range(axis):
                block = np.tensordot(sigma, block, axes=([0], [0]))
            gp += block
        grad += scale * gp
    return energy, grad


def ground_state(
    d: DisorderSample,
    m: MixtureSpec,
    restarts: int = 4,
    max_iters: int = 2000,
    grad_tol: float = 1e-7,
    restart_key: int | None = None,
) -> GroundStateResult:
    """Maximize H_N over the sphere by Riemannian gradient ascent.

    Projects the Euclidean gradient onto the tangent space, takes a
    backtracking step, retracts by rescaling to the sphere; best over
    `restarts` uniform starts drawn from per-restart Philox streams (so the
    best energy is nondecreasing in `restarts` for a fixed stream).
    """
    if restarts < 1:
        raise PreconditionError("restarts must be >= 1")
    N = d.N
    key = d.seed if restart_key is None else restart_key
    sqrt_n = np.sqrt(N)
    best = None
    for r in range(restarts):
        x = _rng(key, TAG_RESTART, r).standard_normal(N)
        x *= sqrt_n / np.linalg.norm(x)
        energy, grad = energy_gradient(d, m, x)
        step = 0.1
        converged = False
        for _ in range(max_iters):
            tangent = grad - (grad @ x / N) * x
            tnorm2 = float(tangent @ tangent)
            if np.sqrt(tnorm2) / sqrt_n <= grad_tol:
                converged = True
                break
            improved = False
            for _ in range(50):
                cand = x + step * tangent
                cand *= sqrt_n / np.linalg.norm(cand)
                e_cand, g_cand = energy_gradient(d, m, cand)
                if e_cand >= energy + 1e-4 * step * tnorm2:
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
            x, energy, grad = cand, e_cand, g_cand
            step = min(step * 1.5, 1e3)
        if best is None or energy > best[0]:
            best = (energy, x, r, converged)
    energy, x, r, converged = best
    return GroundStateResult(
        sigma=x,
        energy=energy,
        energy_per_site=energy / N,
        restarts=restarts,
        best_restart=r,
        converged=converged,
    )


def sk_eigen_oracle(d: DisorderSample, m: MixtureSpec, tol: float = 1e-12) -> float:
    """Exact p=2 ground state N*lambda_max/2 via shifted power iteration.

    Phase one estimates the spectral radius; phase two iterates A + (rho+1) I,
    which is positive definite, until the eigen-residual is below tol.
    """
    if set(m.coeffs) != {2} or abs(m.coeffs[2] ** 2 - 0.5) > 1e-12 or m.h != 0.0:
        raise PreconditionError("eigen oracle requires the pure SK mixture (gamma_2^2 = 1/2, h = 0)")
    N = d.N
    g = d.tensors[2]
    A = m.coeffs[2] / np.sqrt(N) * (g + g.T)
    v = _rng(d.seed, TAG_POWER).standard_normal(N)
    v /= np.linalg.norm(v)
    # phase one: spectral radius estimate (|lambda|-largest eigenvalue)
    rho = 0.0
    for _ in range(300):
        w = A @ v
        rho = float(np.linalg.norm(w))
        v = w / rho
    # phase two: A + (rho+1) I is positive definite with the same top eigenvector,
    # so plain power iteration now targets lambda_max; one matvec per sweep
    shift = rho + 1.0
    lam = float(v @ (A @ v))
    for _ in range(500_000):
        w = A @ v
        lam = float(v @ w)
        if np.linalg.norm(w - lam * v) <= tol:
            break
        v = w + shift * v
        v /= np.linalg.norm(v)
    return N * lam / 2.0


def coupled_ground_states(
    m: MixtureSpec,
    N: int,
    t: float,
    seed: int,
    restarts: int = 4,
    max_iters: int = 2000,
    grad_tol: float = 1e-7,
    max_scalars: int = DEFAULT_SCALAR_CAP,
) -> dict:
    """Optimize the two correlated systems sqrt(t) X + sqrt(1-t) X^j + field.

    Both optimizations reuse the same restart stream, so at t = 1 the two
    trajectories coincide and |R| = 1 is reproduced exactly.  For h = 0 the
    overlap is reported as |R| (the two maximizers differ by a global sign).
    """
    if not m.is_even:
        raise PreconditionError("coupled runs require an even mixture")
    if not 0.0 <= t <= 1.0:
        raise PreconditionError("coupling parameter t must lie in [0, 1]")
    common = sample_disorder(m, N, seed, max_scalars, stream=TAG_COMMON)
    d1 = _combine(common, sample_disorder(m, N, seed, max_scalars, stream=TAG_SYS1), t)
    d2 = _combine(common, sample_disorder(m, N, seed, max_scalars, stream=TAG_SYS2), t)
    r1 = ground_state(d1, m, restarts, max_iters, grad_tol, restart_key=seed)
    r2 = ground_state(d2, m, restarts, max_iters, grad_tol, restart_key=seed)
    overlap = float(r1.sigma @ r2.sigma) / N
    if m.h == 0.0:
        overlap = abs(overlap)
    return {"overlap": overlap, "L1": r1.energy, "L2": r2.energy}


def _gauss_t_grid(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _jackknife_se(values: np.ndarray, statistic) -> float:
    n = values.shape[0]
    loo = np.array([statistic(np.delete(values, i, axis=0)) for i in range(n)])
    return float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def variance_identity_check(
    m: MixtureSpec,
    N: int,
    n_seeds: int,
    t_grid: int = 8,
    seed0: int = 0,
    restarts: int = 4,
    max_iters: int = 2000,
    grad_tol: float = 1e-7,
) -> dict:
    """Compare Var(L_N) against N int_0^1 E xi(R_t*) dt.

    The identity is exact at every N; the check is statistical.  Standard
    errors come from delete-one jackknife over seeds; the coupled estimate is
    jackknifed as a whole so cross-t correlations (seeds are shared across
    quadrature nodes) are handled correctly.
    """
    if not m.is_even:
        raise PreconditionError("the variance identity requires an even mixture")
    if n_seeds < 2:
        raise PreconditionError("need at least two seeds")
    energies = np.array(
        [
            ground_state(sample_disorder(m, N, seed0 + i), m, restarts, max_iters, grad_tol).energy
            for i in range(n_seeds)
        ]
    )
    var_direct = float(np.var(energies, ddof=1))
    se_direct = _jackknife_se(energies, lambda v: np.var(v, ddof=1))

    ts, ws = _gauss_t_grid(t_grid)
    xi_overlaps = np.empty((n_seeds, ts.size))
    for j, t in enumerate(ts):
        for i in range(n_seeds):
            res = coupled_ground_states(
                m, N, float(t), seed0 + i, restarts, max_iters, grad_tol
            )
            xi_overlaps[i, j] = m.xi(res["overlap"], 0)

    def ident(block):
        return N * float(ws @ block.mean(axis=0))

    var_ident = ident(xi_overlaps)
    se_ident = _jackknife_se(xi_overlaps, ident)
    denom = np.sqrt(se_direct**2 + se_ident**2)
    z = abs(var_direct - var_ident) / denom if denom > 0 else np.inf
    return {
        "var_direct": var_direct,
        "var_via_identity": var_ident,
        "se_direct": se_direct,
        "se_identity": se_ident,
        "z_score": float(z),
    }


def superconcentration_trend(
    m: MixtureSpec,
    N_list,
    n_seeds: int,
    seed0: int = 0,
    restarts: int = 4,
    max_iters: int = 2000,
    grad_tol: float = 1e-7,
) -> list[dict]:
    """Var(L_N)/N with jackknife standard errors along increasing N."""
    if not m.is_even:
        raise PreconditionError("superconcentration analysis requires an even mixture")
    rows = []
    for N in N_list:
        energies = np.array(
            [
                ground_state(
                    sample_disorder(m, N, seed0 + i), m, restarts, max_iters, grad_tol
                ).energy
                for i in range(n_seeds)
            ]
        )
        rows.append(
            {
                "N": N,
                "var_over_N": float(np.var(energies, ddof=1)) / N,
                "stderr": _jackknife_se(energies, lambda v: np.var(v, ddof=1)) / N,
            }
        )
    return rows


def clt_check(
    m: MixtureSpec,
    N: int,
    n_samples: int,
    chi_value: float,
    seed0: int = 0,
    restarts: int = 4,
    max_iters: int = 2000,
    grad_tol: float = 1e-7,
) -> dict:
    """Kolmogorov-Smirnov distance of (L_N - mean)/sqrt(chi N) to the standard normal."""
    if m.h == 0.0:
        raise PreconditionError("the CLT check needs h > 0 (chi vanishes at h = 0)")
    if not m.is_even:
        raise PreconditionError("the CLT check requires an even mixture")
    if chi_value <= 0:
        raise PreconditionError("chi must be positive")
    energies = np.array(
        [
            ground_state(sample_disorder(m, N, seed0 + i), m, restarts, max_iters, grad_tol).energy
            for i in range(n_samples)
        ]
    )
    w = (energies - energies.mean()) / np.sqrt(chi_value * N)
    ks = stats.kstest(w, "norm").statistic
    return {"ks_distance": float(ks), "chi_used": chi_value, "scaled_std": float(w.std(ddof=1))}
