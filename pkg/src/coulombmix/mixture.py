"""Finite mixture state, kernels and joint density.

Component weights are ``S_h / sum(S)`` with ``S_h ~ Gamma(gamma_s, 1)``, the
number of components is ``1 + Poisson(Lambda)`` and locations follow a
:class:`~coulombmix.priors.CoulombPrior`.  Allocation labels ``z`` are stored
0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats
from scipy.special import gammaln, log_expit, logsumexp

from . import priors
from ._errors import InvalidInputError
from .priors import CoulombPrior

__all__ = [
    "Kernel",
    "Hyper",
    "MixtureModel",
    "MixtureState",
    "Dataset",
    "log_kernel",
    "log_kernel_matrix",
    "allocation_log_probs",
    "log_joint",
    "predictive_density_grid",
]

KERNELS = ("gaussian1d", "gaussiand", "binomial")


@dataclass(frozen=True)
class Kernel:
    """Component likelihood.

    Parameters
    ----------
    kind : {"gaussian1d", "gaussiand", "binomial"}
    dim : int
        Observation dimension (1 except for ``gaussiand``).
    trials : int, optional
        Number of binomial trials ``R``.
    """

    kind: str
    dim: int = 1
    trials: int | None = None

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise InvalidInputError(f"unknown kernel {self.kind!r}")
        if self.kind != "gaussiand" and self.dim != 1:
            raise InvalidInputError(f"{self.kind} kernel is one-dimensional")
        if self.dim < 1:
            raise InvalidInputError("kernel dimension must be positive")
        if self.kind == "binomial" and (self.trials is None or self.trials < 1):
            raise InvalidInputError("binomial kernel needs trials >= 1")

    @property
    def has_params(self) -> bool:
        return self.kind != "binomial"


@dataclass(frozen=True)
class Hyper:
    """Hyperparameters of weights, component count, covariances and ``zeta``.

    ``nu`` and ``psi`` parametrise the inverse-Wishart covariance prior; in
    one dimension this is the inverse-Gamma ``(nu / 2, psi / 2)`` law.
    ``zeta_shape`` and ``zeta_rate`` give the Gamma prior on ``zeta``.
    """

    gamma_s: float = 1.0
    Lambda: float = 1.0
    nu: float = 6.0
    psi: np.ndarray | None = None
    zeta_shape: float = 1.0
    zeta_rate: float = 1.0

    def __post_init__(self):
        for name in ("gamma_s", "Lambda", "zeta_shape", "zeta_rate"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")

    def psi_matrix(self, d: int) -> np.ndarray:
        if self.psi is None:
            return np.eye(d)
        psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        if psi.shape != (d, d):
            raise InvalidInputError(f"psi must be {d}x{d}")
        return psi


@dataclass(frozen=True)
class MixtureModel:
    """Everything needed to evaluate the joint density besides the state."""

    prior: CoulombPrior
    kernel: Kernel
    hyper: Hyper = field(default_factory=Hyper)
    shared_zeta: bool = True

    def __post_init__(self):
        if self.prior.d != self.kernel.dim:
            raise InvalidInputError("prior and kernel dimensions differ")
        if self.kernel.has_params and self.hyper.nu <= self.kernel.dim - 1:
            raise InvalidInputError("nu must exceed dim - 1")

    def check_data(self, data: "Dataset") -> "Dataset":
        """Raise unless ``data`` is compatible with the kernel."""
        if data.d != self.kernel.dim:
            raise InvalidInputError(f"data must have {self.kernel.dim} column(s)")
        if self.kernel.kind == "binomial":
            y = data.y[:, 0]
            if np.any(y != np.round(y)) or np.any(y < 0) or np.any(y > self.kernel.trials):
                raise InvalidInputError("binomial observations must be integers in 0..R")
        return data

    def log_zeta_prior(self, zeta) -> float:
        z = np.atleast_1d(np.asarray(zeta, dtype=float))
        if self.shared_zeta:
            z = z[:1]
        h = self.hyper
        return float(np.sum(stats.gamma.logpdf(z, h.zeta_shape, scale=1.0 / h.zeta_rate)))


@dataclass(frozen=True)
class Dataset:
    """Observations as an ``(n, d)`` array (integer counts for binomial data)."""

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2:
            raise InvalidInputError("observations must be a 1-d or 2-d array")
        y = y.astype(float)
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("observations must be finite")
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.y.shape[1]


@dataclass
class MixtureState:
    """Mutable MCMC state.

    Attributes
    ----------
    locations : ndarray of shape (M, d)
    S : ndarray of shape (M,)
        Unnormalised weights.
    z : ndarray of shape (n,), int
        0-based component labels.
    kernel_params : ndarray or None
        ``(M,)`` variances, ``(M, d, d)`` covariances or ``None``.
    zeta : ndarray of shape (d,)
        Repulsion strength per dimension (equal entries when shared).
    u : float
        Auxiliary variable.
    """

    locations: np.ndarray
    S: np.ndarray
    z: np.ndarray
    kernel_params: np.ndarray | None
    zeta: np.ndarray
    u: float = 1.0

    @property
    def M(self) -> int:
        return self.S.shape[0]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.z, minlength=self.M)

    @property
    def K(self) -> int:
        return int(np.unique(self.z).size)

    def copy(self) -> "MixtureState":
        return replace(
            self,
            locations=self.locations.copy(),
            S=self.S.copy(),
            z=self.z.copy(),
            kernel_params=None if self.kernel_params is None else self.kernel_params.copy(),
            zeta=self.zeta.copy(),
        )

    def validate(self, n: int | None = None):
        M = self.M
        if M < 1:
            raise InvalidInputError("a state needs at least one component")
        if self.locations.shape[0] != M:
            raise InvalidInputError("locations and weights disagree on M")
        if np.any(self.S <= 0) or not np.all(np.isfinite(self.S)):
            raise InvalidInputError("weights must be positive and finite")
        if n is not None and self.z.shape != (n,):
            raise InvalidInputError("one label per observation is required")
        if self.z.size and (self.z.min() < 0 or self.z.max() >= M):
            raise InvalidInputError("labels out of range")
        return self


# ---------------------------------------------------------------- kernels


def _log_binom_coef(R, y):
    return gammaln(R + 1) - gammaln(y + 1) - gammaln(R - y + 1)


def log_kernel(kernel: Kernel, params_m, location_m, y_i) -> float:
    """Log likelihood of one observation under one component.

    Parameters
    ----------
    kernel : Kernel
    params_m : float, ndarray or None
        Variance (``gaussian1d``), covariance matrix (``gaussiand``) or
        ``None`` (``binomial``).
    location_m : array_like of shape (d,)
    y_i : array_like of shape (d,)
    """
    loc = np.atleast_1d(np.asarray(location_m, dtype=float))
    y = np.atleast_1d(np.asarray(y_i, dtype=float))
    if loc.shape != (kernel.dim,) or y.shape != (kernel.dim,):
        raise InvalidInputError(f"location and observation must have {kernel.dim} entries")
    if kernel.kind == "gaussian1d":
        s2 = float(params_m)
        return -0.5 * (math.log(2 * math.pi * s2) + (y[0] - loc[0]) ** 2 / s2)
    if kernel.kind == "gaussiand":
        return float(stats.multivariate_normal.logpdf(y, loc, np.asarray(params_m)))
    R = kernel.trials
    return float(
        _log_binom_coef(R, y[0]) + y[0] * log_expit(loc[0]) + (R - y[0]) * log_expit(-loc[0])
    )


def log_kernel_matrix(kernel: Kernel, kernel_params, locations, y) -> np.ndarray:
    """Vectorised log kernel, returning an ``(n, M)`` matrix."""
    y = np.asarray(y, dtype=float)
    loc = np.asarray(locations, dtype=float)
    if kernel.kind == "gaussian1d":
        s2 = np.asarray(kernel_params, dtype=float)
        r = y[:, :1] - loc[None, :, 0]
        return -0.5 * (np.log(2 * np.pi * s2)[None, :] + r * r / s2[None, :])
    if kernel.kind == "binomial":
        R = kernel.trials
        yy = y[:, :1]
        t = loc[None, :, 0]
        return _log_binom_coef(R, yy) + yy * log_expit(t) + (R - yy) * log_expit(-t)
    d = kernel.dim
    out = np.empty((y.shape[0], loc.shape[0]))
    for h in range(loc.shape[0]):
        chol = np.linalg.cholesky(kernel_params[h])
        sol = np.linalg.solve(chol, (y - loc[h]).T)
        out[:, h] = (
            -0.5 * np.sum(sol * sol, axis=0)
            - np.sum(np.log(np.diag(chol)))
            - 0.5 * d * math.log(2 * math.pi)
        )
    return out


def _kernel_params_row(state: MixtureState, h: int):
    return None if state.kernel_params is None else state.kernel_params[h]


def allocation_log_probs(state: MixtureState, y_i, model: MixtureModel) -> np.ndarray:
    """Unnormalised log allocation probabilities ``log S_h + log f(y_i | h)``."""
    y = np.atleast_2d(np.asarray(y_i, dtype=float))
    return np.log(state.S) + log_kernel_matrix(
        model.kernel, state.kernel_params, state.locations, y
    )[0]


# ---------------------------------------------------------------- priors


def log_kernel_param_prior(model: MixtureModel, params) -> np.ndarray:
    """Log prior density of each component's kernel parameters."""
    hyper, d = model.hyper, model.kernel.dim
    if model.kernel.kind == "gaussian1d":
        psi = float(hyper.psi_matrix(1)[0, 0])
        return stats.invgamma.logpdf(np.asarray(params), hyper.nu / 2, scale=psi / 2)
    if model.kernel.kind == "gaussiand":
        psi = hyper.psi_matrix(d)
        return np.array([stats.invwishart.logpdf(s, df=hyper.nu, scale=psi) for s in params])
    return np.zeros(0)


def sample_kernel_param_prior(model: MixtureModel, rng, size: int):
    """Draw ``size`` kernel parameter sets from their prior."""
    return sample_kernel_param_posterior(model, rng, [np.empty((0, model.kernel.dim))] * size,
                                         np.zeros((size, model.kernel.dim)))


def sample_kernel_param_posterior(model: MixtureModel, rng, groups, locations):
    """Conjugate draws of variances/covariances given grouped observations.

    Parameters
    ----------
    groups : sequence of ndarray
        Observations allocated to each component (possibly empty).
    locations : ndarray of shape (M, d)
    """
    kind = model.kernel.kind
    if kind == "binomial":
        return None
    hyper, d = model.hyper, model.kernel.dim
    psi = hyper.psi_matrix(d)
    M = len(groups)
    if kind == "gaussian1d":
        out = np.empty(M)
        for h, g in enumerate(groups):
            r = g[:, 0] - locations[h, 0]
            shape = (hyper.nu + r.size) / 2
            rate = (psi[0, 0] + float(r @ r)) / 2
            out[h] = rate / rng.gamma(shape)
        return out
    out = np.empty((M, d, d))
    for h, g in enumerate(groups):
        r = g - locations[h]
        out[h] = _sample_inv_wishart(hyper.nu + r.shape[0], psi + r.T @ r, rng)
    return out


def _sample_inv_wishart(df, scale, rng):
    # Bartlett decomposition of W ~ Wishart(df, scale^{-1}); returns W^{-1}
    d = scale.shape[0]
    chol = np.linalg.cholesky(np.linalg.inv(scale))
    A = np.zeros((d, d))
    A[np.diag_indices(d)] = np.sqrt(rng.chisquare(df - np.arange(d)))
    A[np.tril_indices(d, -1)] = rng.standard_normal(d * (d - 1) // 2)
    L = chol @ A
    W = L @ L.T
    return np.linalg.inv(W)


def log_m_prior(M: int, Lambda: float) -> float:
    """Log pmf of ``1 + Poisson(Lambda)`` at ``M``."""
    k = M - 1
    return k * math.log(Lambda) - Lambda - math.lgamma(k + 1)


def log_joint(state: MixtureState, data: Dataset, model: MixtureModel,
              augmented: bool = False) -> float:
    """Log joint density of state and data.

    Sums the data log-likelihood, ``sum_i log(S_{z_i} / T)`` with
    ``T = sum(S)``, Gamma weight priors, the location prior, the ``zeta``
    prior, covariance priors and the shifted-Poisson prior on ``M``.

    Parameters
    ----------
    augmented : bool
        If true, also add ``log Gamma(u; n, rate T)``, the conditional of the
        auxiliary variable.  This is the target the sampler leaves invariant.
    """
    state.validate(data.n)
    h = model.hyper
    M, n = state.M, data.n
    T = float(np.sum(state.S))
    prior = model.prior.with_zeta(state.zeta)

    lik = log_kernel_matrix(model.kernel, state.kernel_params, state.locations, data.y)
    out = float(np.sum(lik[np.arange(n), state.z]))
    out += float(np.sum(np.log(state.S[state.z]))) - n * math.log(T)
    out += float(np.sum(stats.gamma.logpdf(state.S, h.gamma_s)))
    out += priors.log_prior(prior, state.locations)
    out += model.log_zeta_prior(state.zeta)
    if model.kernel.has_params:
        out += float(np.sum(log_kernel_param_prior(model, state.kernel_params)))
    out += log_m_prior(M, h.Lambda)
    if augmented and n > 0:
        out += float(stats.gamma.logpdf(state.u, n, scale=1.0 / T))
    return out


def predictive_density_grid(samples, grid, model: MixtureModel) -> np.ndarray:
    """Posterior predictive density averaged over states.

    Parameters
    ----------
    samples : sequence of MixtureState
    grid : array_like of shape (G, d)
    model : MixtureModel

    Returns
    -------
    ndarray of shape (G,)
    """
    samples = list(samples)
    if not samples:
        raise InvalidInputError("at least one posterior sample is required")
    g = np.asarray(grid, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[0] == 0:
        raise InvalidInputError("grid must be non-empty")
    total = np.zeros(g.shape[0])
    for s in samples:
        logw = np.log(s.S) - math.log(float(np.sum(s.S)))
        lk = log_kernel_matrix(model.kernel, s.kernel_params, s.locations, g)
        total += np.exp(logsumexp(lk + logw[None, :], axis=1))
    return total / len(samples)
