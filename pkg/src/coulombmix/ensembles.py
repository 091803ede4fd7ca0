"""Hermite, Laguerre and Jacobi eigenvalue ensembles.

Each ensemble is a joint density on ``M`` real points of the form

    weight(theta_1) ... weight(theta_M) * prod_{i<j} |theta_i - theta_j|^p

with a closed-form normalising constant.  The weights and Vandermonde
exponents are

========  ===============================================  ===========
kind      log weight                                       exponent p
========  ===============================================  ===========
hermite   ``-zeta * x**2 / 2``                             ``zeta``
laguerre  ``-zeta * x / 2 + alpha * zeta / 2 * log(x)``    ``zeta``
jacobi    ``(alpha-1) log(x) + (beta-1) log(1-x)``         ``2 * zeta``
========  ===============================================  ===========

Everything is evaluated in log space with ``gammaln`` so that ``M`` in the
hundreds does not overflow.  The module also provides moments, a
Metropolis-within-Gibbs sampler for all three ensembles, an exact
tridiagonal sampler for the Hermite case and three classical pair
potentials used as unnormalised baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import eigvalsh_tridiagonal
from scipy.special import gammaln

from ._errors import InvalidInputError, UnsupportedMomentError

__all__ = [
    "EnsembleParams",
    "LocationSet",
    "PairPotential",
    "log_vandermonde",
    "log_weight",
    "log_unnorm_density",
    "log_norm_const",
    "log_norm_const_step",
    "log_density",
    "log_density_ratio_insert",
    "moment",
    "sample_prior",
    "sample_prior_chains",
    "sample_hermite_tridiagonal",
    "pair_potential",
]

KINDS = ("hermite", "laguerre", "jacobi")
SUPPORTS = {"hermite": "real", "laguerre": "positive", "jacobi": "unit"}
_KIND_CODE = {"hermite": 0, "laguerre": 1, "jacobi": 2}


@dataclass(frozen=True)
class EnsembleParams:
    """Parameters of one eigenvalue ensemble.

    Parameters
    ----------
    kind : {"hermite", "laguerre", "jacobi"}
    zeta : float
        Repulsion strength.  Strictly positive for Hermite and Laguerre,
        non-negative for Jacobi.
    alpha : float
        Shape parameter (Laguerre, Jacobi).  Laguerre needs
        ``alpha > -2 / zeta``; Jacobi needs ``alpha > 0``.
    beta : float
        Second shape parameter (Jacobi only), ``beta > 0``.
    """

    kind: str
    zeta: float
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown ensemble kind {self.kind!r}")
        z, a, b = float(self.zeta), float(self.alpha), float(self.beta)
        if not all(math.isfinite(v) for v in (z, a, b)):
            raise InvalidInputError("ensemble parameters must be finite")
        if self.kind == "hermite" and not z > 0:
            raise InvalidInputError("hermite ensemble needs zeta > 0")
        if self.kind == "laguerre":
            if not z > 0:
                raise InvalidInputError("laguerre ensemble needs zeta > 0")
            if not a > -2.0 / z:
                raise InvalidInputError("laguerre ensemble needs alpha > -2/zeta")
        if self.kind == "jacobi":
            if not z >= 0:
                raise InvalidInputError("jacobi ensemble needs zeta >= 0")
            if not (a > 0 and b > 0):
                raise InvalidInputError("jacobi ensemble needs alpha > 0 and beta > 0")
        object.__setattr__(self, "zeta", z)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def hermite(cls, zeta):
        return cls("hermite", zeta)

    @classmethod
    def laguerre(cls, alpha, zeta):
        return cls("laguerre", zeta, alpha=alpha)

    @classmethod
    def jacobi(cls, alpha, beta, zeta):
        return cls("jacobi", zeta, alpha=alpha, beta=beta)

    @property
    def support(self) -> str:
        return SUPPORTS[self.kind]

    @property
    def vandermonde_exponent(self) -> float:
        return 2.0 * self.zeta if self.kind == "jacobi" else self.zeta

    def with_zeta(self, zeta) -> "EnsembleParams":
        return EnsembleParams(self.kind, zeta, self.alpha, self.beta)

    def in_support(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "hermite":
            return np.isfinite(x)
        if self.kind == "laguerre":
            return np.isfinite(x) & (x > 0)
        return (x > 0) & (x < 1)


@dataclass(frozen=True)
class LocationSet:
    """``M`` distinct points inside the support of an ensemble.

    Parameters
    ----------
    values : array_like of shape (M,)
    support : {"real", "positive", "unit"}
    """

    values: np.ndarray
    support: str

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if v.size < 1:
            raise InvalidInputError("a location set needs at least one point")
        if self.support not in ("real", "positive", "unit"):
            raise InvalidInputError(f"unknown support {self.support!r}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("locations must be finite")
        if self.support == "positive" and np.any(v <= 0):
            raise InvalidInputError("locations must be strictly positive")
        if self.support == "unit" and np.any((v <= 0) | (v >= 1)):
            raise InvalidInputError("locations must lie strictly inside (0, 1)")
        if v.size > 1 and np.any(np.diff(np.sort(v)) == 0):
            raise InvalidInputError("locations must be pairwise distinct")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def _values(params: EnsembleParams, locs) -> np.ndarray:
    if isinstance(locs, LocationSet):
        if locs.support != params.support:
            raise InvalidInputError(
                f"{params.kind} ensemble expects support {params.support!r}, "
                f"got {locs.support!r}"
            )
        return locs.values
    return LocationSet(locs, params.support).values


def log_vandermonde(x) -> float:
    """Return ``sum_{i<j} log|x_i - x_j|`` (0 for a single point)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size < 2:
        return 0.0
    i, j = np.triu_indices(x.size, k=1)
    return float(np.sum(np.log(np.abs(x[i] - x[j]))))


def log_weight(params: EnsembleParams, x) -> np.ndarray:
    """Elementwise log weight function of the ensemble."""
    x = np.asarray(x, dtype=float)
    z = params.zeta
    if params.kind == "hermite":
        return -0.5 * z * x * x
    if params.kind == "laguerre":
        return -0.5 * z * x + 0.5 * params.alpha * z * np.log(x)
    return (params.alpha - 1.0) * np.log(x) + (params.beta - 1.0) * np.log1p(-x)


def log_unnorm_density(params: EnsembleParams, locs) -> float:
    """Log of the unnormalised joint density.

    Parameters
    ----------
    params : EnsembleParams
    locs : LocationSet or array_like
        Points in the support, pairwise distinct.

    Returns
    -------
    float
    """
    x = _values(params, locs)
    return float(np.sum(log_weight(params, x))) + params.vandermonde_exponent * log_vandermonde(x)


def log_norm_const(params: EnsembleParams, M: int) -> float:
    """Log normalising constant of the ``M``-point ensemble.

    Hermite and Laguerre use Mehta-type product formulas; Jacobi uses the
    Selberg integral.  All products run over ``j = 0, ..., M-1``.
    """
    M = _check_M(M)
    z, a, b = params.zeta, params.alpha, params.beta
    j = np.arange(M, dtype=float)
    if params.kind == "hermite":
        return float(
            -(M / 2 + z * M * (M - 1) / 4) * math.log(z)
            + (M / 2) * math.log(2 * math.pi)
            + np.sum(gammaln(1 + (j + 1) * z / 2) - gammaln(1 + z / 2))
        )
    if params.kind == "laguerre":
        return float(
            -M * (1 + z / 2 * (a + M - 1)) * math.log(z / 2)
            + np.sum(
                gammaln(1 + (j + 1) * z / 2)
                + gammaln(1 + a * z / 2 + j * z / 2)
                - gammaln(1 + z / 2)
            )
        )
    return float(
        np.sum(
            gammaln(a + j * z)
            + gammaln(b + j * z)
            + gammaln(1 + (j + 1) * z)
            - gammaln(a + b + (M + j - 1) * z)
            - gammaln(1 + z)
        )
    )


def log_norm_const_step(params: EnsembleParams, M: int) -> float:
    """Return ``log_norm_const(M + 1) - log_norm_const(M)`` in O(1).

    ``M = 0`` is allowed and gives the one-point constant.
    """
    M = int(M)
    if M < 0:
        raise InvalidInputError("M must be non-negative")
    z, a, b = params.zeta, params.alpha, params.beta
    lg = math.lgamma
    if params.kind == "hermite":
        return (
            -(0.5 + z * M / 2) * math.log(z)
            + 0.5 * math.log(2 * math.pi)
            + lg(1 + (M + 1) * z / 2)
            - lg(1 + z / 2)
        )
    if params.kind == "laguerre":
        return (
            -(1 + z * (a + 2 * M) / 2) * math.log(z / 2)
            + lg(1 + (M + 1) * z / 2)
            + lg(1 + a * z / 2 + M * z / 2)
            - lg(1 + z / 2)
        )
    out = lg(a + M * z) + lg(b + M * z) + lg(1 + (M + 1) * z) - lg(1 + z)
    if M == 0:
        return out - lg(a + b)
    # the denominator gammas all shift with M, leaving three boundary terms
    return (
        out
        - lg(a + b + (2 * M - 1) * z)
        - lg(a + b + 2 * M * z)
        + lg(a + b + (M - 1) * z)
    )


def log_density(params: EnsembleParams, locs) -> float:
    """Normalised joint log-density."""
    x = _values(params, locs)
    return log_unnorm_density(params, x) - log_norm_const(params, x.size)


def log_density_ratio_insert(params: EnsembleParams, locs, new_value: float) -> float:
    """Log ratio ``p_{M+1}(locs + new) / p_M(locs)`` computed incrementally.

    Parameters
    ----------
    params : EnsembleParams
    locs : LocationSet or array_like of shape (M,)
        Current points.  An empty array is accepted (``M = 0``).
    new_value : float
        Point to insert, distinct from every current point.
    """
    x = np.asarray(locs.values if isinstance(locs, LocationSet) else locs, dtype=float).reshape(-1)
    if x.size:
        x = _values(params, x)
    new_value = float(new_value)
    if not params.in_support(new_value):
        raise InvalidInputError(f"{new_value!r} is outside the {params.support} support")
    diff = np.abs(x - new_value)
    if np.any(diff == 0):
        raise InvalidInputError("inserted value ties with an existing location")
    return (
        float(log_weight(params, new_value))
        + params.vandermonde_exponent * float(np.sum(np.log(diff)))
        - log_norm_const_step(params, x.size)
    )


def _check_M(M) -> int:
    if int(M) != M or M < 1:
        raise InvalidInputError("M must be a positive integer")
    return int(M)


# ---------------------------------------------------------------- moments


def moment(params: EnsembleParams, M: int, which: str, k: int | None = None,
           convention: str = "density") -> float:
    """Closed-form moments of a single eigenvalue.

    Parameters
    ----------
    params : EnsembleParams
    M : int
        Number of points.
    which : {"mean", "second_moment", "product_moment"}
        ``"product_moment"`` returns ``E[theta_1 ... theta_k]`` for ``k``
        distinct points.
    k : int, optional
        Order of the product moment, ``1 <= k <= M``.  Must be even for
        Hermite.
    convention : {"density", "table"}
        Only matters for Laguerre.  ``"density"`` gives moments of the
        density ``exp(-zeta x / 2) x^(alpha zeta / 2) |Delta|^zeta`` used
        throughout the package.  ``"table"`` gives the commonly tabulated
        expressions, which are moments of the rescaled variable
        ``zeta * theta / 2``; they agree with ``"density"`` only at
        ``zeta = 2`` (and the tabulated second moment only at ``M = 1``
        with a particular ``alpha``).

    Returns
    -------
    float

    Raises
    ------
    UnsupportedMomentError
        For the Hermite mean (no tabulated value; it is 0 by symmetry) and
        odd Hermite product moments.
    """
    M = _check_M(M)
    if which not in ("mean", "second_moment", "product_moment"):
        raise InvalidInputError(f"unknown moment {which!r}")
    if convention not in ("density", "table"):
        raise InvalidInputError(f"unknown convention {convention!r}")
    if which == "product_moment":
        if k is None or int(k) != k or not 1 <= k <= M:
            raise InvalidInputError("product moment needs an integer 1 <= k <= M")
        k = int(k)
    z, a, b = params.zeta, params.alpha, params.beta

    if params.kind == "hermite":
        if which == "mean":
            raise UnsupportedMomentError("no closed-form Hermite mean is provided")
        if which == "second_moment":
            return (1 + z * (M - 1) / 2) / z
        if k % 2:
            raise UnsupportedMomentError("Hermite product moments need even k")
        h = k // 2
        return (-1) ** h * math.factorial(k) / (4**h * math.factorial(h))

    if params.kind == "laguerre":
        # moments of x = zeta * theta / 2, rescaled back unless the
        # tabulated convention is requested
        s = 1.0 if convention == "table" else 2.0 / z
        if which == "mean":
            return s * (1 + (a + M - 1) * z / 2)
        if which == "second_moment":
            if convention == "table":
                return 2 + (a + 2 * M - 1) * z / 2
            return s * s * (2 + a * z / 2 + z * (M - 1)) * (1 + (a + M - 1) * z / 2)
        return s**k * math.prod(1 + (a + M - l) * z / 2 for l in range(1, k + 1))

    def product(order):
        return math.prod(
            (a + (M - l) * z) / (a + b + (2 * M - l - 1) * z) for l in range(1, order + 1)
        )

    if which == "mean":
        return product(1)
    if which == "product_moment":
        return product(k)
    cross = product(2) if M > 1 else 0.0
    return ((a + 1 + 2 * (M - 1) * z) * product(1) - (M - 1) * z * cross) / (
        a + b + 1 + 2 * (M - 1) * z
    )


# ---------------------------------------------------------------- sampling


@numba.njit(cache=True)
def _mwg_sweep(x, kind, zeta, alpha, beta, step, noise, log_u, accepted):
    """One single-site random-walk Metropolis sweep over every chain."""
    n_chains, M = x.shape
    p = 2.0 * zeta if kind == 2 else zeta
    for c in range(n_chains):
        for i in range(M):
            old = x[c, i]
            new = old + step[c] * noise[c, i]
            if kind == 1 and new <= 0.0:
                continue
            if kind == 2 and (new <= 0.0 or new >= 1.0):
                continue
            if kind == 0:
                d = -0.5 * zeta * (new * new - old * old)
            elif kind == 1:
                d = -0.5 * zeta * (new - old) + 0.5 * alpha * zeta * (np.log(new) - np.log(old))
            else:
                d = (alpha - 1.0) * (np.log(new) - np.log(old)) + (beta - 1.0) * (
                    np.log1p(-new) - np.log1p(-old)
                )
            tie = False
            if p != 0.0:
                for j in range(M):
                    if j != i:
                        dn = abs(new - x[c, j])
                        if dn == 0.0:
                            tie = True
                            break
                        d += p * np.log(dn / abs(old - x[c, j]))
            if not tie and log_u[c, i] < d:
                x[c, i] = new
                accepted[c] += 1


def _initial_points(params: EnsembleParams, M: int, n_chains: int, rng) -> np.ndarray:
    # overdispersed relative to the bulk of each ensemble
    if params.kind == "hermite":
        scale = math.sqrt(moment(params, M, "second_moment"))
        return rng.normal(0.0, 1.5 * scale, size=(n_chains, M))
    if params.kind == "laguerre":
        upper = 2.0 * math.sqrt(moment(params, M, "second_moment"))
        return rng.uniform(0.0, upper, size=(n_chains, M)) + 1e-12
    return rng.uniform(0.0, 1.0, size=(n_chains, M)).clip(1e-12, 1 - 1e-12)


def sample_prior_chains(params: EnsembleParams, M: int, rng, n_chains: int = 1,
                        n_sweeps: int = 500, n_keep: int = 1, keep_every: int = 1,
                        target_accept: float = 0.44) -> np.ndarray:
    """Run independent Metropolis-within-Gibbs chains on an ensemble.

    Each chain starts from an overdispersed point, adapts a random-walk step
    size by Robbins-Monro during the first half of the ``n_sweeps`` warm-up
    sweeps and keeps it fixed afterwards.  After warm-up, ``n_keep`` states
    spaced ``keep_every`` sweeps apart are stored.

    Parameters
    ----------
    params : EnsembleParams
    M : int
    rng : numpy.random.Generator
    n_chains : int
    n_sweeps : int
        Warm-up sweeps per chain.
    n_keep, keep_every : int
        Number of retained states and their spacing in sweeps.
    target_accept : float
        Acceptance rate targeted by the adaptation.

    Returns
    -------
    ndarray of shape (n_chains, n_keep, M)
        Each retained state sorted increasingly.
    """
    M = _check_M(M)
    if n_sweeps < 1 or n_keep < 1 or keep_every < 1 or n_chains < 1:
        raise InvalidInputError("sweep counts must be positive")
    x = _initial_points(params, M, n_chains, rng)
    kind = _KIND_CODE[params.kind]
    log_step = np.full(n_chains, math.log(0.5 if params.kind == "jacobi" else 1.0)
                       - 0.5 * math.log(M))
    accepted = np.zeros(n_chains, dtype=np.int64)
    n_adapt = n_sweeps // 2
    out = np.empty((n_chains, n_keep, M))

    def sweep():
        accepted[:] = 0
        noise = rng.standard_normal((n_chains, M))
        log_u = np.log(rng.random((n_chains, M)))
        _mwg_sweep(x, kind, params.zeta, params.alpha, params.beta,
                   np.exp(log_step), noise, log_u, accepted)
        return accepted / M

    for t in range(n_sweeps):
        rate = sweep()
        if t < n_adapt:
            log_step += (t + 1) ** -0.6 * (rate - target_accept)
    for r in range(n_keep):
        for _ in range(keep_every):
            sweep()
        out[:, r, :] = np.sort(x, axis=1)
    return out


def sample_hermite_tridiagonal(zeta: float, M: int, rng, size: int = 1) -> np.ndarray:
    """Exact Hermite draws from the tridiagonal matrix model.

    The symmetric tridiagonal matrix with ``N(0, 1)`` diagonal and
    off-diagonal entries ``chi_{(M-i) zeta} / sqrt(2)``, ``i = 1..M-1``, has
    eigenvalue density proportional to
    ``exp(-sum lambda^2 / 2) |Delta|^zeta``.  Dividing by ``sqrt(zeta)``
    gives the Hermite ensemble with repulsion ``zeta``.

    Returns
    -------
    ndarray of shape (size, M), rows sorted increasingly.
    """
    M = _check_M(M)
    if not zeta > 0:
        raise InvalidInputError("zeta must be positive")
    diag = rng.standard_normal((size, M))
    dof = zeta * np.arange(M - 1, 0, -1, dtype=float)
    off = np.sqrt(rng.chisquare(dof, size=(size, M - 1)) / 2.0) if M > 1 else np.empty((size, 0))
    if M == 1:
        eig = diag
    elif M <= 64:
        mats = np.zeros((size, M, M))
        idx = np.arange(M)
        mats[:, idx, idx] = diag
        mats[:, idx[:-1], idx[1:]] = off
        mats[:, idx[1:], idx[:-1]] = off
        eig = np.linalg.eigvalsh(mats)
    else:
        eig = np.stack([eigvalsh_tridiagonal(diag[s], off[s]) for s in range(size)])
    return np.sort(eig, axis=1) / math.sqrt(zeta)


def sample_prior(params: EnsembleParams, M: int, rng, n_sweeps: int = 500,
                 method: str = "mcmc") -> LocationSet:
    """Draw one location set from an ensemble.

    Parameters
    ----------
    params : EnsembleParams
    M : int
    rng : numpy.random.Generator
    n_sweeps : int
        Sweeps of the Metropolis-within-Gibbs path.
    method : {"mcmc", "matrix"}
        ``"matrix"`` uses the exact tridiagonal model (Hermite only).
    """
    if method == "matrix":
        if params.kind != "hermite":
            raise InvalidInputError("the matrix model path is only available for hermite")
        values = sample_hermite_tridiagonal(params.zeta, M, rng)[0]
    elif method == "mcmc":
        values = sample_prior_chains(params, M, rng, n_chains=1, n_sweeps=n_sweeps)[0, 0]
    else:
        raise InvalidInputError(f"unknown sampling method {method!r}")
    return LocationSet(values, params.support)


# ---------------------------------------------------------------- baselines


@dataclass(frozen=True)
class PairPotential:
    """Unnormalised pairwise repulsion potential.

    Parameters
    ----------
    kind : {"soft_core", "lennard_jones", "strauss"}
    zeta : float
        Length scale, positive.
    m1, m2 : float
        Lennard-Jones exponents with ``m1 > m2 >= 0``.
    """

    kind: str
    zeta: float
    m1: float = 12.0
    m2: float = 6.0

    def __post_init__(self):
        if self.kind not in ("soft_core", "lennard_jones", "strauss"):
            raise InvalidInputError(f"unknown potential {self.kind!r}")
        if not self.zeta > 0:
            raise InvalidInputError("potential scale must be positive")
        if self.kind == "lennard_jones" and not self.m1 > self.m2 >= 0:
            raise InvalidInputError("lennard-jones needs m1 > m2 >= 0")


def pair_potential(potential: PairPotential, r: float) -> float:
    """Evaluate a pair potential at distance ``r``; returns ``math.inf`` for hard cores."""
    r = float(r)
    if not r >= 0:
        raise InvalidInputError("distance must be non-negative")
    z = potential.zeta
    if potential.kind == "strauss":
        return math.inf if r <= z else 0.0
    if r == 0:
        return math.inf
    if potential.kind == "soft_core":
        t = -((r / z) ** 2)
        # stable log(1 - exp(t)) for t < 0
        return -(math.log(-math.expm1(t)) if t > -math.log(2) else math.log1p(-math.exp(t)))
    q = z / r
    return q**potential.m1 - q**potential.m2
