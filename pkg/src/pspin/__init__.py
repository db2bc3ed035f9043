"""Toolkit for ground states of spherical mixed p-spin glass models.

Modules:
    mixture      model definition (gamma_p, h) and the covariance function xi
    zero_temp    zero-temperature variational solver, certificates, closed forms
    finite_temp  Crisanti-Sommers / Parisi functionals and the beta-sweep diagnostic
    chaos        disorder-chaos prediction u_t, chi, and coupled functionals
    monte_carlo  finite-N disorder sampling, sphere optimization, estimators
    cli          config-driven command line entry point
"""

from .mixture import MixtureSpec, check_even, xi
from .zero_temp import (
    Certificate,
    OrderParamZeroT,
    Phase,
    ZeroTempSolution,
    certificate,
    classify_phase,
    closed_form_1rsb,
    closed_form_frsb,
    closed_form_rs,
    eval_Q,
    grad_Q,
    gs_partials,
    minimize_Q,
)

__all__ = [
    "MixtureSpec",
    "check_even",
    "xi",
    "Certificate",
    "OrderParamZeroT",
    "Phase",
    "ZeroTempSolution",
    "certificate",
    "classify_phase",
    "closed_form_1rsb",
    "closed_form_frsb",
    "closed_form_rs",
    "eval_Q",
    "grad_Q",
    "gs_partials",
    "minimize_Q",
]

__version__ = "0.1.0"
