"""Model definition: mixture coefficients, external field, and the covariance
function xi(s) = sum_p gamma_p^2 s^p with its derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError

_MAX_ORDER = 3


@dataclass(frozen=True)
class MixtureSpec:
    """Mixture coefficients gamma_p (unsquared) and field strength h.

    The Hamiltonian weights the pure p-spin interactions by gamma_p, so the
    covariance function is xi(s) = sum_p gamma_p^2 s^p.  Only finitely many
    coefficients are supported; keys must be integers p >= 2 and at least one
    gamma_p must be positive.
    """

    coeffs: dict[int, float]
    h: float = 0.0

    def __post_init__(self):
        clean = {}
        for p, g in self.coeffs.items():
            if not isinstance(p, (int, np.integer)) or isinstance(p, bool):
                raise PreconditionError(f"mixture power p={p!r} must be an integer")
            if p < 2:
                raise PreconditionError(f"mixture power p={p} must be >= 2")
            g = float(g)
            if g < 0:
                raise PreconditionError(f"gamma_{p}={g} must be nonnegative")
            if g > 0:
                clean[int(p)] = g
        if not clean:
            raise PreconditionError("mixture needs at least one positive gamma_p")
        if not np.isfinite(self.h) or self.h < 0:
            raise PreconditionError(f"external field h={self.h} must be finite and >= 0")
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def from_squares(cls, squares: dict[int, float], h: float = 0.0) -> "MixtureSpec":
        """Build from the squared coefficients gamma_p^2 that enter xi directly."""
        return cls({p: float(np.sqrt(v)) for p, v in squares.items()}, h=h)

    @classmethod
    def sk(cls, h: float = 0.0) -> "MixtureSpec":
        """Spherical SK model, xi(s) = s^2/2."""
        return cls.from_squares({2: 0.5}, h=h)

    @classmethod
    def pure(cls, p: int, h: float = 0.0) -> "MixtureSpec":
        """Pure p-spin model, xi(s) = s^p/p."""
        return cls.from_squares({p: 1.0 / p}, h=h)

    @property
    def is_even(self) -> bool:
        return all(p % 2 == 0 for p in self.coeffs)

    @property
    def max_p(self) -> int:
        return max(self.coeffs)

    def xi(self, s, order: int = 0):
        """Evaluate the order-th derivative of xi at s, |s| <= 1.

        Exact Horner evaluation of sum_p gamma_p^2 p(p-1)...(p-order+1) s^(p-order).
        Accepts scalars or arrays.
        """
        if order not in (0, 1, 2, 3):
            raise PreconditionError(f"derivative order {order} not in {{0,1,2,3}}")
        arr = np.asarray(s, dtype=float)
        if np.any(np.abs(arr) > 1.0 + 1e-12):
            raise PreconditionError("xi argument must satisfy |s| <= 1")
        sq = {p: g * g for p, g in self.coeffs.items()}
        acc = np.zeros_like(arr)
        for k in range(self.max_p, order - 1, -1):
            c = sq.get(k, 0.0)
            if c:
                falling = 1.0
                for j in range(order):
                    falling *= k - j
                acc = acc * arr + c * falling
            else:
                acc = acc * arr
        if np.isscalar(s) or arr.ndim == 0:
            return float(acc)
        return acc


def xi(m: MixtureSpec, s, order: int = 0):
    """Functional form of MixtureSpec.xi."""
    return m.xi(s, order)


def check_even(m: MixtureSpec) -> bool:
    """True iff every odd-p coefficient vanishes."""
    return m.is_even
