import numpy as np
import pytest

from pspin import MixtureSpec


@pytest.fixture(scope="session")
def sk():
    return MixtureSpec.sk()


@pytest.fixture(scope="session")
def sk_h1():
    return MixtureSpec.sk(h=1.0)


@pytest.fixture(scope="session")
def frsb_mix():
    # xi(s) = s^2/2 + s^4/24: xi''(s)^{-1/2} concave, xi'(1) < xi''(1)
    return MixtureSpec.from_squares({2: 0.5, 4: 1.0 / 24.0})


@pytest.fixture(scope="session")
def frsb_mix_h():
    return MixtureSpec.from_squares({2: 0.5, 4: 1.0 / 24.0}, h=0.1)


@pytest.fixture(scope="session")
def pure3():
    return MixtureSpec.pure(3)


def trapezoid_sqrt_xipp(m, q0=0.0, n=1_000_000):
    """Independent high-resolution quadrature of int_{q0}^1 sqrt(xi''(q)) dq."""
    q = np.linspace(q0, 1.0, n + 1)
    return float(np.trapezoid(np.sqrt(m.xi(q, 2)), q))
