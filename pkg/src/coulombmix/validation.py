"""Numerical self-checks of the ensemble formulas.

Normalising constants are checked by adaptive quadrature (``M <= 2``) and
against the one-point closed forms; moments are checked against Monte
Carlo draws from the density sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import ensembles
from ._errors import InvalidInputError, UnsupportedMomentError
from .ensembles import EnsembleParams

__all__ = [
    "CheckResult",
    "DEFAULT_SETTINGS",
    "quadrature_mass",
    "one_point_log_norm",
    "symmetric_product_statistic",
    "check_normalisation",
    "check_moments",
]

DEFAULT_SETTINGS = (
    EnsembleParams.hermite(1.0),
    EnsembleParams.hermite(2.5),
    EnsembleParams.laguerre(1.0, 2.0),
    EnsembleParams.laguerre(0.5, 1.0),
    EnsembleParams.jacobi(2.0, 3.0, 1.0),
    EnsembleParams.jacobi(1.5, 1.5, 0.5),
)


@dataclass(frozen=True)
class CheckResult:
    check: str
    params: EnsembleParams
    M: int
    value: float
    reference: float
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tolerance)

    def row(self) -> list:
        p = self.params
        return [self.check, p.kind, p.alpha, p.beta, p.zeta, self.M, self.value,
                self.reference, self.error, self.tolerance, int(self.passed)]


CHECK_HEADER = ["check", "ensemble", "alpha", "beta", "zeta", "M", "value",
                "reference", "error", "tolerance", "passed"]


def _limits(params: EnsembleParams, M: int):
    if params.kind == "hermite":
        half = 12.0 * math.sqrt((1 + params.zeta * M) / params.zeta)
        return -half, half
    if params.kind == "laguerre":
        mean = ensembles.moment(params, M, "mean")
        return 0.0, 40.0 * mean + 60.0 / params.zeta
    return 0.0, 1.0


def quadrature_mass(params: EnsembleParams, M: int) -> float:
    """Total mass of ``exp(log_density)`` by adaptive quadrature, ``M <= 2``.

    The two-point integral runs over the ordered region and is doubled.
    """
    if M not in (1, 2):
        raise InvalidInputError("adaptive quadrature is provided for M = 1, 2 only")
    lo, hi = _limits(params, M)
    lnc = ensembles.log_norm_const(params, M)
    w = lambda x: float(ensembles.log_weight(params, x))
    if M == 1:
        val, _ = integrate.quad(lambda x: math.exp(w(x) - lnc), lo, hi, limit=400,
                                epsabs=1e-13, epsrel=1e-11)
        return val
    p = params.vandermonde_exponent

    def f(y, x):
        if y <= x:
            return 0.0
        return math.exp(w(x) + w(y) + p * math.log(y - x) - lnc)

    val, _ = integrate.dblquad(f, lo, hi, lambda x: x, lambda x: hi,
                               epsabs=1e-12, epsrel=1e-10)
    return 2.0 * val


def one_point_log_norm(params: EnsembleParams) -> float:
    """Normaliser of the one-point law from the Gaussian, Gamma or Beta integral."""
    z = params.zeta
    if params.kind == "hermite":
        return 0.5 * math.log(2 * math.pi / z)
    if params.kind == "laguerre":
        shape = params.alpha * z / 2 + 1
        return math.lgamma(shape) - shape * math.log(z / 2)
    return float(special.betaln(params.alpha, params.beta))


def symmetric_product_statistic(draws, k: int) -> np.ndarray:
    """Average of ``theta_i1 ... theta_ik`` over all ``k``-subsets, per draw.

    Computed as the elementary symmetric polynomial divided by ``C(M, k)``.
    """
    x = np.atleast_2d(np.asarray(draws, dtype=float))
    e = np.zeros((x.shape[0], k + 1))
    e[:, 0] = 1.0
    for col in x.T:
        e[:, 1:] = e[:, 1:] + col[:, None] * e[:, :-1]
    return e[:, k] / math.comb(x.shape[1], k)


def check_normalisation(settings=DEFAULT_SETTINGS, Ms=(1, 2), tol: float = 1e-5,
                        closed_form_tol: float = 1e-12) -> list[CheckResult]:
    out = []
    for p in settings:
        for M in Ms:
            mass = quadrature_mass(p, M)
            out.append(CheckResult("quadrature_mass", p, M, mass, 1.0, abs(mass - 1.0), tol))
        lnc = ensembles.log_norm_const(p, 1)
        ref = one_point_log_norm(p)
        out.append(CheckResult("one_point_log_norm", p, 1, lnc, ref, abs(lnc - ref), closed_form_tol))
    return out


def check_moments(settings=DEFAULT_SETTINGS, M: int = 3, rng=None, n_chains: int = 20000,
                  n_sweeps: int = 200, max_z: float = 4.0) -> list[CheckResult]:
    """Compare closed-form moments with sampler averages.

    The error column is ``|estimate - formula| / standard error`` and must
    stay below ``max_z``.
    """
    rng = np.random.default_rng() if rng is None else rng
    out = []
    for p in settings:
        x = ensembles.sample_prior_chains(p, M, rng, n_chains=n_chains, n_sweeps=n_sweeps)[:, 0, :]
        stats = {
            "mean": x.mean(axis=1),
            "second_moment": (x * x).mean(axis=1),
            "product_moment": symmetric_product_statistic(x, 2) if M >= 2 else None,
        }
        for which, per_draw in stats.items():
            if per_draw is None:
                continue
            try:
                ref = ensembles.moment(p, M, which, k=2 if which == "product_moment" else None)
            except UnsupportedMomentError:
                continue
            est = float(per_draw.mean())
            se = float(per_draw.std(ddof=1) / math.sqrt(per_draw.size))
            out.append(CheckResult(which, p, M, est, ref, abs(est - ref) / se, max_z))
    return out
