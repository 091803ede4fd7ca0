"""Repulsive location priors for mixture components.

Each data dimension carries its own eigenvalue ensemble and a link that
maps the ensemble's support onto the space where the component location
lives.  Dimensions are a priori independent, so repulsion acts coordinate
by coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit, logit

from . import ensembles
from ._errors import InvalidInputError
from .ensembles import EnsembleParams

__all__ = [
    "CoulombPrior",
    "inverse_link",
    "log_prior",
    "log_prior_ratio_update",
    "log_prior_ratio_birth",
    "log_prior_ratio_death",
    "sample_birth_proposal",
    "log_birth_proposal_density",
]

LINKS = ("identity", "log", "logit")
_LINK_SUPPORT = {"log": "positive", "logit": "unit"}


def inverse_link(link: str, x):
    """Map data-space values back to the ensemble support."""
    x = np.asarray(x, dtype=float)
    if link == "identity":
        return x
    if link == "log":
        return np.exp(x)
    return expit(x)


def link_forward(link: str, t):
    """Map ensemble-support values to data space."""
    t = np.asarray(t, dtype=float)
    if link == "identity":
        return t
    if link == "log":
        return np.log(t)
    return logit(t)


def log_abs_jacobian(link: str, x):
    """``log |d inverse_link / dx|`` elementwise."""
    x = np.asarray(x, dtype=float)
    if link == "identity":
        return np.zeros_like(x)
    if link == "log":
        return x
    return log_expit(x) + log_expit(-x)


@dataclass(frozen=True)
class CoulombPrior:
    """Product of independent ensemble priors, one per dimension.

    Parameters
    ----------
    per_dim : sequence of EnsembleParams
    links : sequence of {"identity", "log", "logit"}, optional
        Defaults to identity everywhere.
    """

    per_dim: tuple
    links: tuple = field(default=None)

    def __post_init__(self):
        per_dim = tuple(self.per_dim)
        if not per_dim or not all(isinstance(p, EnsembleParams) for p in per_dim):
            raise InvalidInputError("per_dim must be a non-empty sequence of EnsembleParams")
        links = tuple(self.links) if self.links is not None else ("identity",) * len(per_dim)
        if len(links) != len(per_dim):
            raise InvalidInputError("one link per dimension is required")
        for p, link in zip(per_dim, links):
            if link not in LINKS:
                raise InvalidInputError(f"unknown link {link!r}")
            if link != "identity" and _LINK_SUPPORT[link] != p.support:
                raise InvalidInputError(
                    f"{link} link cannot be used with the {p.kind} ensemble"
                )
        object.__setattr__(self, "per_dim", per_dim)
        object.__setattr__(self, "links", links)

    @property
    def d(self) -> int:
        return len(self.per_dim)

    @property
    def zeta(self) -> np.ndarray:
        return np.array([p.zeta for p in self.per_dim])

    def with_zeta(self, zeta) -> "CoulombPrior":
        """Copy with new repulsion strengths (scalar or one per dimension)."""
        z = np.broadcast_to(np.asarray(zeta, dtype=float), (self.d,))
        return CoulombPrior(tuple(p.with_zeta(zk) for p, zk in zip(self.per_dim, z)), self.links)

    def zeta_feasible(self, zeta) -> bool:
        """Whether every per-dimension ensemble accepts the given strengths."""
        try:
            self.with_zeta(zeta)
        except InvalidInputError:
            return False
        return True


def _as_matrix(prior: CoulombPrior, locs) -> np.ndarray:
    x = np.asarray(locs, dtype=float)
    if x.ndim == 1 and prior.d == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != prior.d:
        raise InvalidInputError(f"locations must have shape (M, {prior.d})")
    return x


def log_prior(prior: CoulombPrior, locs) -> float:
    """Joint log prior density of a location matrix.

    Parameters
    ----------
    prior : CoulombPrior
    locs : array_like of shape (M, d)
        Component locations in data space.

    Returns
    -------
    float
    """
    x = _as_matrix(prior, locs)
    total = 0.0
    for k, (p, link) in enumerate(zip(prior.per_dim, prior.links)):
        col = x[:, k]
        total += ensembles.log_density(p, inverse_link(link, col))
        total += float(np.sum(log_abs_jacobian(link, col)))
    return total


def _check_row(prior, new_row):
    row = np.asarray(new_row, dtype=float).reshape(-1)
    if row.size != prior.d:
        raise InvalidInputError(f"a location row must have {prior.d} entries")
    return row


def log_prior_ratio_update(prior: CoulombPrior, locs, m: int, new_row) -> float:
    """Log prior ratio for replacing row ``m`` by ``new_row``, in O(M d)."""
    x = _as_matrix(prior, locs)
    row = _check_row(prior, new_row)
    others = np.delete(x, m, axis=0)
    total = 0.0
    for k, (p, link) in enumerate(zip(prior.per_dim, prior.links)):
        t_new = float(inverse_link(link, row[k]))
        t_old = float(inverse_link(link, x[m, k]))
        if not p.in_support(t_new):
            raise InvalidInputError("proposed location is outside the prior support")
        t_rest = inverse_link(link, others[:, k])
        d_new = np.abs(t_rest - t_new)
        if np.any(d_new == 0):
            raise InvalidInputError("proposed location ties with another component")
        total += float(ensembles.log_weight(p, t_new) - ensembles.log_weight(p, t_old))
        total += p.vandermonde_exponent * float(
            np.sum(np.log(d_new)) - np.sum(np.log(np.abs(t_rest - t_old)))
        )
        total += float(log_abs_jacobian(link, row[k]) - log_abs_jacobian(link, x[m, k]))
    return total


def log_prior_ratio_birth(prior: CoulombPrior, locs, new_row) -> float:
    """Log prior ratio ``p_{M+1}(locs + new_row) / p_M(locs)``."""
    x = _as_matrix(prior, locs)
    row = _check_row(prior, new_row)
    total = 0.0
    for k, (p, link) in enumerate(zip(prior.per_dim, prior.links)):
        total += ensembles.log_density_ratio_insert(
            p, inverse_link(link, x[:, k]), float(inverse_link(link, row[k]))
        )
        total += float(log_abs_jacobian(link, row[k]))
    return total


def log_prior_ratio_death(prior: CoulombPrior, locs, m: int) -> float:
    """Log prior ratio for removing row ``m``; needs at least two rows."""
    x = _as_matrix(prior, locs)
    if x.shape[0] < 2:
        raise InvalidInputError("cannot remove the only component")
    return -log_prior_ratio_birth(prior, np.delete(x, m, axis=0), x[m])


def log_birth_proposal_density(prior: CoulombPrior, row) -> float:
    """Log density of the birth proposal at ``row`` (data space)."""
    row = _check_row(prior, row)
    total = 0.0
    for k, (p, link) in enumerate(zip(prior.per_dim, prior.links)):
        t = float(inverse_link(link, row[k]))
        total += ensembles.log_density(p, [t]) + float(log_abs_jacobian(link, row[k]))
    return total


def sample_birth_proposal(prior: CoulombPrior, rng):
    """Draw a new component location from the one-point marginals.

    Hermite dimensions draw ``N(0, 1/zeta)``, Laguerre dimensions
    ``Gamma(alpha zeta / 2 + 1, rate zeta / 2)`` and Jacobi dimensions
    ``Beta(alpha, beta)``; the link is then applied.

    Returns
    -------
    new_row : ndarray of shape (d,)
    log_q : float
        Log proposal density of ``new_row`` including the link Jacobian.
    """
    t = np.empty(prior.d)
    for k, p in enumerate(prior.per_dim):
        if p.kind == "hermite":
            t[k] = rng.normal(0.0, 1.0 / np.sqrt(p.zeta))
        elif p.kind == "laguerre":
            t[k] = rng.gamma(p.alpha * p.zeta / 2 + 1.0, 2.0 / p.zeta)
        else:
            t[k] = rng.beta(p.alpha, p.beta)
    # guard against draws rounding onto the boundary of the support
    for k, p in enumerate(prior.per_dim):
        if p.kind == "laguerre":
            t[k] = max(t[k], np.finfo(float).tiny)
        elif p.kind == "jacobi":
            t[k] = min(max(t[k], 1e-300), np.nextafter(1.0, 0.0))
    row = np.array([float(link_forward(link, t[k])) for k, link in enumerate(prior.links)])
    return row, log_birth_proposal_density(prior, row)
