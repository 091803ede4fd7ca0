"""Two-dimensional Ising model with Gaussian observations.

Spins ``theta`` on an ``n x n`` lattice with free boundary have prior
``exp(h * sum(theta) + zeta * sum_{i~j} theta_i theta_j)`` over
4-neighbour pairs, so ``zeta > 0`` favours aligned neighbours.  Each site
emits ``y ~ N(theta, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from ._errors import InvalidInputError

__all__ = [
    "CRITICAL_ZETA",
    "IsingState",
    "IsingExperimentGrid",
    "conditional_logodds",
    "gibbs_sweep",
    "checkerboard_data",
    "run_single",
    "run_ising_experiment",
]

CRITICAL_ZETA = math.log(1 + math.sqrt(2)) / 2


@dataclass
class IsingState:
    """Spin configuration with its coupling and field."""

    spins: np.ndarray
    zeta: float
    h: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.spins)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise InvalidInputError("spins must be a square lattice")
        if not np.all((s == 1) | (s == -1)):
            raise InvalidInputError("spins must be +1 or -1")
        if not self.zeta >= 0:
            raise InvalidInputError("zeta must be non-negative")
        self.spins = s.astype(np.int8)

    @property
    def n(self) -> int:
        return self.spins.shape[0]

    def positive_proportion(self) -> float:
        return float(np.mean(self.spins == 1))

    def magnetisation(self) -> float:
        return float(np.mean(self.spins))


def conditional_logodds(state: IsingState, data, site) -> float:
    """Log odds of ``theta_site = +1`` against ``-1`` given everything else."""
    i, j = site
    n = state.n
    if not (0 <= i < n and 0 <= j < n):
        raise InvalidInputError(f"site {site} is outside the {n}x{n} lattice")
    s = state.spins
    nb = 0
    for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
        if 0 <= a < n and 0 <= b < n:
            nb += int(s[a, b])
    return 2.0 * state.h + 2.0 * state.zeta * nb + 2.0 * float(data[i, j])


@numba.njit(cache=True)
def _sweep(spins, y, zeta, h, u):
    n = spins.shape[0]
    for i in range(n):
        for j in range(n):
            nb = 0
            if i > 0:
                nb += spins[i - 1, j]
            if i < n - 1:
                nb += spins[i + 1, j]
            if j > 0:
                nb += spins[i, j - 1]
            if j < n - 1:
                nb += spins[i, j + 1]
            eta = 2.0 * h + 2.0 * zeta * nb + 2.0 * y[i, j]
            # P(+1) = 1 / (1 + exp(-eta)), written to avoid overflow
            if eta >= 0:
                p = 1.0 / (1.0 + math.exp(-eta))
            else:
                e = math.exp(eta)
                p = e / (1.0 + e)
            spins[i, j] = 1 if u[i, j] < p else -1


def gibbs_sweep(state: IsingState, data, rng) -> IsingState:
    """One raster-scan Gibbs sweep, updating ``state`` in place."""
    y = np.ascontiguousarray(data, dtype=float)
    if y.shape != state.spins.shape:
        raise InvalidInputError("data must match the lattice shape")
    _sweep(state.spins, y, float(state.zeta), float(state.h), rng.random(y.shape))
    return state


def checkerboard_data(n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Balanced truth ``+1/-1`` in a checkerboard and ``y = truth + N(0, 1)``."""
    idx = np.add.outer(np.arange(n), np.arange(n))
    truth = np.where(idx % 2 == 0, 1, -1).astype(np.int8)
    return truth, truth + rng.standard_normal((n, n))


def run_single(data, zeta: float, h: float, pi_init: float, rng, n_iter: int = 1500,
               n_burnin: int = 1000) -> tuple[float, float]:
    """Run one chain and return posterior means of the positive proportion
    and the magnetisation over the post-burn-in sweeps."""
    n = data.shape[0]
    spins = np.where(rng.random((n, n)) < pi_init, 1, -1)
    state = IsingState(spins, zeta, h)
    pos = mag = 0.0
    for t in range(n_iter):
        gibbs_sweep(state, data, rng)
        if t >= n_burnin:
            m = state.magnetisation()
            mag += m
            pos += (m + 1) / 2
    kept = n_iter - n_burnin
    return pos / kept, mag / kept


@dataclass(frozen=True)
class IsingExperimentGrid:
    """Grid of lattice sizes, couplings, fields and initial proportions."""

    sides: tuple = (5, 10, 15, 20)
    zetas: tuple = (0.0, 0.1, 0.25, CRITICAL_ZETA, 0.5, 0.75, 1.0, 10.0, 100.0)
    hs: tuple = (-5.0, 0.0, 5.0)
    pis: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    n_iter: int = 1500
    n_burnin: int = 1000
    seed: int = 0

    def __post_init__(self):
        if any(s < 1 for s in self.sides):
            raise InvalidInputError("lattice sides must be positive")
        if any(z < 0 for z in self.zetas):
            raise InvalidInputError("zetas must be non-negative")
        if any(not 0 <= p <= 1 for p in self.pis):
            raise InvalidInputError("initial proportions must lie in [0, 1]")
        if not 0 <= self.n_burnin < self.n_iter:
            raise InvalidInputError("need 0 <= n_burnin < n_iter")


def run_ising_experiment(grid: IsingExperimentGrid, rng=None) -> list[dict]:
    """Run every ``(n, zeta, h, pi_init)`` cell of the grid.

    Data are simulated once per lattice size.  Each cell uses its own random
    stream derived from ``grid.seed`` and the cell's position, so results
    do not depend on execution order.

    Returns
    -------
    list of dict
        Rows with keys ``n, zeta, h, pi_init, mean_positive_prop,
        mean_magnetisation``.
    """
    seed = grid.seed if rng is None else int(rng.integers(2**63))
    rows = []
    for a, n in enumerate(grid.sides):
        _, y = checkerboard_data(n, np.random.default_rng([seed, a]))
        for b, zeta in enumerate(grid.zetas):
            for c, h in enumerate(grid.hs):
                for e, pi in enumerate(grid.pis):
                    cell_rng = np.random.default_rng([seed, a, b, c, e, 1])
                    pos, mag = run_single(y, zeta, h, pi, cell_rng, grid.n_iter, grid.n_burnin)
                    rows.append({"n": n, "zeta": zeta, "h": h, "pi_init": pi,
                                 "mean_positive_prop": pos, "mean_magnetisation": mag})
    return rows
