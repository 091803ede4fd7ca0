"""Empirical spectral measures, limit laws and the Jacobi rate function.

The rate function for the empirical measure of a Jacobi ensemble with
``alpha - 1 = N1 - (M + 1) / 2``, ``beta - 1 = N2 - (M + 1) / 2`` and
``M / N1 -> a``, ``M / N2 -> b`` is ``I(mu) = J(mu) + B`` with

    J(mu) = -a^2 zeta \\iint log|x - y| dmu dmu - A \\int log x + log(1 - x) dmu

and ``A = a (1 - a / 2)``.  ``B = -min J`` is computed by minimising a
discretised ``J`` over the probability simplex on a fixed grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space
from scipy.stats import wasserstein_distance

from ._errors import ConvergenceError, InvalidInputError
from .ensembles import EnsembleParams, LocationSet

__all__ = [
    "DiscreteMeasure",
    "empirical_measure",
    "Semicircle",
    "MarchenkoPastur",
    "ReferenceSample",
    "ks_to_limit",
    "esd_scaling",
    "RateFunctionParams",
    "rate_function_J",
    "rate_function_I",
    "RateMinimizer",
    "minimize_rate_function",
    "estimate_B_and_minimizer",
    "matched_jacobi_params",
    "wasserstein1",
]


# ---------------------------------------------------------------- measures


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure with finitely many atoms.

    Parameters
    ----------
    support : array_like
        Strictly increasing atom locations.
    weights : array_like
        Non-negative weights summing to one.
    """

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.support, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if x.size == 0 or x.size != w.size:
            raise InvalidInputError("support and weights must be non-empty and of equal length")
        if not np.all(np.isfinite(x)) or np.any(np.diff(x) <= 0):
            raise InvalidInputError("support must be finite and strictly increasing")
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise InvalidInputError("weights must be non-negative and sum to 1")
        x.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "support", x)
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return self.support.size

    def cdf(self, t) -> np.ndarray:
        """Right-continuous distribution function."""
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        return cum[np.searchsorted(self.support, np.asarray(t, dtype=float), side="right")]

    def mean(self) -> float:
        return float(self.weights @ self.support)

    def second_moment(self) -> float:
        return float(self.weights @ self.support**2)


def empirical_measure(locs, scale: float = 1.0) -> DiscreteMeasure:
    """Uniform measure on the sorted locations divided by ``scale``.

    Accepts a :class:`LocationSet` or any 1-d array of distinct values.
    """
    x = locs.values if isinstance(locs, LocationSet) else np.asarray(locs, dtype=float)
    x = np.sort(x.reshape(-1)) / scale
    if x.size < 1:
        raise InvalidInputError("need at least one location")
    return DiscreteMeasure(x, np.full(x.size, 1.0 / x.size))


# ---------------------------------------------------------------- limit laws


@dataclass(frozen=True)
class Semicircle:
    """Semicircle law on ``[-radius, radius]``."""

    radius: float = math.sqrt(2.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInputError("radius must be positive")

    def cdf(self, t):
        u = np.clip(np.asarray(t, dtype=float) / self.radius, -1.0, 1.0)
        return 0.5 + (u * np.sqrt(1.0 - u * u) + np.arcsin(u)) / math.pi

    def second_moment(self) -> float:
        return self.radius**2 / 4.0


@dataclass(frozen=True)
class MarchenkoPastur:
    """Marchenko-Pastur law with unit variance and ratio in ``(0, 1]``.

    Support is ``[(1 - sqrt(ratio))^2, (1 + sqrt(ratio))^2]``.
    """

    ratio: float

    def __post_init__(self):
        if not 0 < self.ratio <= 1:
            raise InvalidInputError("ratio must lie in (0, 1]")

    @property
    def edges(self) -> tuple[float, float]:
        s = math.sqrt(self.ratio)
        return (1 - s) ** 2, (1 + s) ** 2

    def pdf(self, t):
        lo, hi = self.edges
        t = np.asarray(t, dtype=float)
        inside = (t > lo) & (t < hi)
        out = np.zeros_like(t)
        ti = t[inside]
        out[inside] = np.sqrt((hi - ti) * (ti - lo)) / (2 * math.pi * self.ratio * ti)
        return out

    def cdf(self, t):
        # substitute t = m - r cos(phi); the integral is then elementary
        lo, hi = self.edges
        m, r = (lo + hi) / 2, (hi - lo) / 2
        t = np.clip(np.asarray(t, dtype=float), lo, hi)
        phi = np.arccos(np.clip((m - t) / r, -1.0, 1.0))
        g = math.sqrt(lo * hi)
        if g > 0:
            # arctan(k tan(phi/2)) continued to pi/2 at phi = pi
            half = phi / 2
            corr = np.where(phi < math.pi,
                            np.arctan2(math.sqrt(hi / lo) * np.sin(half), np.cos(half)),
                            math.pi / 2)
        else:
            corr = np.zeros_like(phi)
        val = (m * phi + r * np.sin(phi) - 2 * g * corr) / (2 * math.pi * self.ratio)
        return np.clip(val, 0.0, 1.0)

    def second_moment(self) -> float:
        return 1.0 + self.ratio


@dataclass(frozen=True)
class ReferenceSample:
    """Empirical law of a large reference draw, for limits without a closed form."""

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).reshape(-1))
        if v.size < 1 or not np.all(np.isfinite(v)):
            raise InvalidInputError("reference sample must be non-empty and finite")
        object.__setattr__(self, "values", v)

    def cdf(self, t):
        return np.searchsorted(self.values, np.asarray(t, dtype=float), side="right") / self.values.size


def ks_to_limit(measure: DiscreteMeasure, law) -> float:
    """Sup-norm distance between the CDF of ``measure`` and that of ``law``.

    Continuous laws are compared at both one-sided limits of every atom.  A
    :class:`ReferenceSample` is compared on the union of both supports.
    """
    if isinstance(law, ReferenceSample):
        pts = np.union1d(measure.support, law.values)
        return float(np.max(np.abs(measure.cdf(pts) - law.cdf(pts))))
    if not isinstance(law, (Semicircle, MarchenkoPastur)):
        raise InvalidInputError(f"unsupported limit law {law!r}")
    f = law.cdf(measure.support)
    upper = np.cumsum(measure.weights)
    lower = upper - measure.weights
    return float(max(np.max(np.abs(upper - f)), np.max(np.abs(lower - f))))


def esd_scaling(params: EnsembleParams, M: int):
    """Scale and limit law for the empirical measure of an ensemble draw.

    Hermite draws divided by ``sqrt(M)`` approach the semicircle of radius
    ``sqrt(2)``.  Laguerre draws divided by ``N = M - 1 + alpha + 2 / zeta``
    (the one-point mean) approach Marchenko-Pastur with ratio ``M / N``.

    Returns
    -------
    scale : float
    law : Semicircle or MarchenkoPastur
    """
    if params.kind == "hermite":
        return math.sqrt(M), Semicircle(math.sqrt(2.0))
    if params.kind == "laguerre":
        n_eff = M - 1 + params.alpha + 2.0 / params.zeta
        return n_eff, MarchenkoPastur(min(1.0, M / n_eff))
    raise InvalidInputError("the Jacobi limit has no closed form; use a ReferenceSample")


def wasserstein1(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Wasserstein-1 distance between two discrete measures."""
    return float(wasserstein_distance(mu.support, nu.support, mu.weights, nu.weights))


# ---------------------------------------------------------------- rate function


@dataclass(frozen=True)
class RateFunctionParams:
    """Limit ratios ``a = lim M/N1``, ``b = lim M/N2`` and repulsion ``zeta``.

    ``B`` is filled in after minimisation (see :func:`estimate_B_and_minimizer`).
    """

    a: float
    b: float
    zeta: float
    B: float | None = None

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.zeta > 0):
            raise InvalidInputError("a, b and zeta must be positive")
        if not 0 < self.c < 1:
            raise InvalidInputError("c = ab/(a+b) must lie in (0, 1)")
        if not self.a < 2:
            raise InvalidInputError("a must be below 2 so that A = a(1 - a/2) > 0")

    @property
    def c(self) -> float:
        return self.a * self.b / (self.a + self.b)

    @property
    def A(self) -> float:
        return self.a * (1 - self.a / 2)

    @property
    def interaction(self) -> float:
        """Coefficient of ``-log|x - y|``."""
        return self.a**2 * self.zeta

    def with_B(self, B: float) -> "RateFunctionParams":
        return RateFunctionParams(self.a, self.b, self.zeta, B)


def _phi2(t):
    # second antiderivative of log|t|, zero at t = 0
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 0.5 * t * t * np.log(np.abs(t)) - 0.75 * t * t
    return np.where(t == 0, 0.0, val)


def _xlogx_minus_x(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = t * np.log(t) - t
    return np.where(t == 0, 0.0, val)


def _cells(support: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mids = (support[1:] + support[:-1]) / 2
    return np.concatenate([[0.0], mids]), np.concatenate([mids, [1.0]])


def _histogram_terms(support: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cell-averaged ``-log|x - y|`` matrix and ``log x + log(1 - x)`` vector.

    Each atom is spread uniformly over its cell, the cells splitting
    ``[0, 1]`` at midpoints between neighbouring atoms.
    """
    lo, hi = _cells(support)
    width = hi - lo
    d = lambda u, v: u[:, None] - v[None, :]
    total = _phi2(d(hi, lo)) - _phi2(d(lo, lo)) - _phi2(d(hi, hi)) + _phi2(d(lo, hi))
    kernel = -total / np.outer(width, width)
    barrier = (
        _xlogx_minus_x(hi) - _xlogx_minus_x(lo)
        - (_xlogx_minus_x(1 - hi) - _xlogx_minus_x(1 - lo))
    ) / width
    return kernel, barrier


def _atomic_terms(support: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diff = np.abs(support[:, None] - support[None, :])
    with np.errstate(divide="ignore"):
        kernel = -np.log(diff)
    np.fill_diagonal(kernel, 0.0)
    barrier = np.log(support) + np.log1p(-support)
    return kernel, barrier


def _quadratic_form(support, params: RateFunctionParams, mode: str):
    if mode == "atomic":
        kernel, barrier = _atomic_terms(support)
    elif mode == "histogram":
        kernel, barrier = _histogram_terms(support)
    else:
        raise InvalidInputError(f"unknown mode {mode!r}")
    return params.interaction * kernel, -params.A * barrier


def rate_function_J(measure: DiscreteMeasure, params: RateFunctionParams,
                    mode: str = "atomic") -> float:
    """Evaluate ``J`` at a discrete measure on ``(0, 1)``.

    Parameters
    ----------
    measure : DiscreteMeasure
        Support strictly inside ``(0, 1)``.
    params : RateFunctionParams
    mode : {"atomic", "histogram"}
        ``"atomic"`` treats atoms as point masses and drops the infinite
        diagonal of the interaction (the barrier still applies to every
        atom).  ``"histogram"`` spreads each atom uniformly over its cell,
        which keeps every term finite and is the discretisation used for
        minimisation.

    Returns
    -------
    float
    """
    x, w = measure.support, measure.weights
    if x[0] <= 0 or x[-1] >= 1:
        raise InvalidInputError("support must lie strictly inside (0, 1)")
    Q, lin = _quadratic_form(x, params, mode)
    return float(w @ Q @ w + lin @ w)


def rate_function_I(measure: DiscreteMeasure, params: RateFunctionParams,
                    mode: str = "histogram") -> float:
    """``J(measure) + B``; ``params.B`` must be set."""
    if params.B is None:
        raise InvalidInputError("params.B is not set; run estimate_B_and_minimizer first")
    return rate_function_J(measure, params, mode) + params.B


# ---------------------------------------------------------------- minimisation


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


@dataclass(frozen=True)
class RateMinimizer:
    """Result of the simplex-constrained minimisation of ``J``.

    Attributes
    ----------
    B : float
        ``-min J``.
    measure : DiscreteMeasure
        Minimising weights on the grid.
    gap : float
        Frank-Wolfe duality gap, an upper bound on ``J(measure) - min J``.
    min_tangent_eigenvalue : float
        Smallest eigenvalue of the interaction matrix on the tangent space
        of the simplex; positive means the minimiser is unique.
    iterations : int
    """

    B: float
    measure: DiscreteMeasure
    gap: float
    min_tangent_eigenvalue: float
    iterations: int


def default_grid(k: int) -> np.ndarray:
    """Midpoints of ``k`` equal cells of ``[0, 1]``."""
    return (np.arange(k) + 0.5) / k


def _active_set_polish(Q, lin, w, tol):
    """Solve the KKT system on the support of ``w``, dropping negative weights."""
    active = w > tol
    for _ in range(w.size):
        idx = np.nonzero(active)[0]
        n = idx.size
        kkt = np.zeros((n + 1, n + 1))
        kkt[:n, :n] = 2 * Q[np.ix_(idx, idx)]
        kkt[:n, n] = -1.0
        kkt[n, :n] = 1.0
        rhs = np.concatenate([-lin[idx], [1.0]])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return w
        v = sol[:n]
        if np.all(v >= 0):
            out = np.zeros_like(w)
            out[idx] = v
            grad = 2 * Q @ out + lin
            # add back the most violating inactive coordinate if any
            lam = sol[n]
            viol = np.where(~active, lam - grad, -np.inf)
            j = int(np.argmax(viol))
            if viol[j] <= 1e-14:
                return out
            active[j] = True
        else:
            active[idx[v < 0]] = False
            if not active.any():
                return w
    return w


def minimize_rate_function(params: RateFunctionParams, k: int = 128, grid=None,
                           tol: float = 1e-8, max_iter: int = 200_000) -> RateMinimizer:
    """Minimise the histogram discretisation of ``J`` over the simplex.

    Uses accelerated projected gradient (FISTA with restarts), then an
    active-set solve of the KKT conditions.  Convergence is certified by the
    Frank-Wolfe gap ``max_i (g . w - g_i)`` falling below ``tol``.

    Raises
    ------
    ConvergenceError
        If the gap does not fall below ``tol`` within ``max_iter`` steps.
    """
    if grid is None:
        if k < 10:
            raise InvalidInputError("need at least 10 grid points")
        grid = default_grid(k)
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2 or grid[0] <= 0 or grid[-1] >= 1 or np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be increasing inside (0, 1)")
    Q, lin = _quadratic_form(grid, params, "histogram")
    Q = (Q + Q.T) / 2
    L = 2 * np.linalg.eigvalsh(Q)[-1]

    def value(w):
        return float(w @ Q @ w + lin @ w)

    def gap_of(w):
        g = 2 * Q @ w + lin
        return float(g @ w - g.min())

    w = np.full(grid.size, 1.0 / grid.size)
    y, t, f_prev = w.copy(), 1.0, value(w)
    it = 0
    for it in range(1, max_iter + 1):
        w_new = project_simplex(y - (2 * Q @ y + lin) / L)
        f_new = value(w_new)
        if f_new > f_prev:
            # restart momentum when the objective goes up
            y, t = w.copy(), 1.0
            continue
        t_new = (1 + math.sqrt(1 + 4 * t * t)) / 2
        y = w_new + (t - 1) / t_new * (w_new - w)
        w, t, f_prev = w_new, t_new, f_new
        if it % 50 == 0:
            polished = _active_set_polish(Q, lin, w, 1e-12)
            if np.all(polished >= 0) and value(polished) <= f_prev and gap_of(polished) < tol:
                w = polished
                break
            if gap_of(w) < tol:
                break
    gap = gap_of(w)
    if gap >= tol:
        raise ConvergenceError(f"rate-function minimisation stalled with gap {gap:.3e}")
    w = np.maximum(w, 0.0)
    w = w / w.sum()
    basis = null_space(np.ones((1, grid.size)))
    lam_min = float(np.linalg.eigvalsh(basis.T @ Q @ basis)[0])
    return RateMinimizer(-value(w), DiscreteMeasure(grid, w), gap, lam_min, it)


def estimate_B_and_minimizer(params: RateFunctionParams, k: int = 128):
    """``B = -min J`` and the minimising measure on a ``k``-point grid.

    Returns
    -------
    B : float
    mu0 : DiscreteMeasure
    """
    res = minimize_rate_function(params, k)
    return res.B, res.measure


def matched_jacobi_params(params: RateFunctionParams, M: int) -> EnsembleParams:
    """Jacobi ensemble whose empirical measure has ``params`` as limit ratios.

    Uses ``N1 = M / a``, ``N2 = M / b`` and exponents
    ``alpha - 1 = N1 - (M + 1) / 2``, ``beta - 1 = N2 - (M + 1) / 2``.
    """
    n1, n2 = M / params.a, M / params.b
    return EnsembleParams.jacobi(1 + n1 - (M + 1) / 2, 1 + n2 - (M + 1) / 2, params.zeta)
