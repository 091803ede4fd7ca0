"""Posterior sampler for mixtures with a random number of components.

One iteration updates, in order:

1. allocations ``z`` by Gibbs sampling;
2. the auxiliary variable ``u | S ~ Gamma(n, sum S)`` and the weights
   ``S_h | u, z ~ Gamma(gamma_s + n_h, 1 + u)``;
3. component locations by Gaussian random-walk Metropolis, one component at
   a time, with the full repulsive prior ratio;
4. the number of components by birth and death of non-allocated
   components;
5. the repulsion strength ``zeta`` by a log-normal random walk;
6. kernel variances/covariances by conjugate Gibbs draws.

Every Metropolis move is written as a ``propose_*`` function returning the
proposal and its log acceptance ratio, so the ratios can be checked against
:func:`coulombmix.mixture.log_joint` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import mixture, priors
from ._errors import InvalidInputError
from .mixture import Dataset, MixtureModel, MixtureState

__all__ = [
    "SamplerConfig",
    "ChainOutput",
    "initial_state",
    "propose_location",
    "propose_birth",
    "propose_death",
    "propose_zeta",
    "step_allocations",
    "step_weights_and_u",
    "step_allocated_locations",
    "step_birth_death",
    "step_zeta",
    "step_kernel_params",
    "run_chain",
]


@dataclass(frozen=True)
class SamplerConfig:
    """Run-length, adaptation and move settings.

    Parameters
    ----------
    n_iter, n_burnin, thin : int
        Total iterations, discarded iterations and thinning of the rest.
    adapt_iters : int
        Iterations during which random-walk step sizes are adapted.  Must
        not exceed ``n_burnin``.
    location_step, zeta_step : float
        Initial random-walk scales for locations (data scale) and
        ``log zeta``.
    birth_death_attempts : int
        Birth-or-death proposals per iteration.
    init_components : int
        Number of components in the initial state.
    fixed_M : int, optional
        Hold the number of components fixed (no birth-death).  All
        components then receive random-walk location updates.
    infer_zeta : bool
        Update ``zeta``; otherwise it stays at its initial value.
    zeta_init : float
        Initial repulsion strength.
    """

    n_iter: int = 7500
    n_burnin: int = 2500
    thin: int = 2
    adapt_iters: int = 100
    location_step: float = 0.5
    zeta_step: float = 0.5
    birth_death_attempts: int = 5
    init_components: int = 3
    fixed_M: int | None = None
    infer_zeta: bool = True
    zeta_init: float = 1.0

    def __post_init__(self):
        if self.n_iter < 1 or self.thin < 1 or self.birth_death_attempts < 1:
            raise InvalidInputError("n_iter, thin and birth_death_attempts must be positive")
        if not 0 <= self.n_burnin < self.n_iter:
            raise InvalidInputError("need 0 <= n_burnin < n_iter")
        if not 0 <= self.adapt_iters <= self.n_burnin:
            raise InvalidInputError("adaptation must finish within the burn-in")
        if self.location_step < 0 or self.zeta_step < 0:
            raise InvalidInputError("step sizes must be non-negative")
        if self.init_components < 1:
            raise InvalidInputError("init_components must be positive")
        if self.fixed_M is not None and self.fixed_M < 1:
            raise InvalidInputError("fixed_M must be positive")
        if not self.zeta_init > 0:
            raise InvalidInputError("zeta_init must be positive")

    @property
    def n_records(self) -> int:
        return (self.n_iter - self.n_burnin) // self.thin


@dataclass
class ChainOutput:
    """Retained draws and move diagnostics."""

    M: np.ndarray
    K: np.ndarray
    z: np.ndarray
    zeta: np.ndarray
    locations: list
    S: list
    kernel_params: list
    u: np.ndarray
    location_step: np.ndarray
    zeta_step: np.ndarray
    acceptance: dict = field(default_factory=dict)

    def __len__(self):
        return self.M.size

    def states(self):
        """Yield the retained draws as :class:`MixtureState` objects."""
        for r in range(len(self)):
            yield MixtureState(self.locations[r], self.S[r], self.z[r],
                               self.kernel_params[r], self.zeta[r], float(self.u[r]))


class _Counter:
    def __init__(self):
        self.proposed = {}
        self.accepted = {}

    def add(self, move, accepted, proposed=1):
        self.proposed[move] = self.proposed.get(move, 0) + proposed
        self.accepted[move] = self.accepted.get(move, 0) + accepted

    def summary(self):
        return {
            m: {"proposed": self.proposed[m], "accepted": self.accepted[m],
                "rate": self.accepted[m] / self.proposed[m] if self.proposed[m] else float("nan")}
            for m in sorted(self.proposed)
        }


def _prior_at(state: MixtureState, model: MixtureModel):
    return model.prior.with_zeta(state.zeta)


# ---------------------------------------------------------------- Gibbs steps


def step_allocations(state: MixtureState, data: Dataset, model: MixtureModel, rng) -> MixtureState:
    """Resample every label from its full conditional."""
    if data.n == 0:
        return state
    logp = np.log(state.S)[None, :] + mixture.log_kernel_matrix(
        model.kernel, state.kernel_params, state.locations, data.y
    )
    logp -= logsumexp(logp, axis=1, keepdims=True)
    cum = np.cumsum(np.exp(logp), axis=1)
    draw = rng.random(data.n)[:, None] * cum[:, -1:]
    state.z = np.minimum(np.sum(cum <= draw, axis=1), state.M - 1).astype(np.int64)
    return state


def step_weights_and_u(state: MixtureState, data: Dataset, model: MixtureModel, rng) -> MixtureState:
    """Draw ``u | S`` then ``S | u, z``."""
    n = data.n
    state.u = float(rng.gamma(n) / np.sum(state.S)) if n > 0 else 0.0
    shape = model.hyper.gamma_s + state.counts
    state.S = rng.gamma(shape) / (1.0 + state.u)
    # Gamma draws can underflow to 0 for tiny shapes
    state.S = np.maximum(state.S, np.finfo(float).tiny)
    return state


def step_kernel_params(state: MixtureState, data: Dataset, model: MixtureModel, rng) -> MixtureState:
    """Conjugate draws of each component's variance or covariance."""
    if not model.kernel.has_params:
        return state
    order = np.argsort(state.z, kind="stable")
    splits = np.cumsum(state.counts)[:-1]
    groups = np.split(data.y[order], splits)
    state.kernel_params = mixture.sample_kernel_param_posterior(model, rng, groups, state.locations)
    return state


# ---------------------------------------------------------------- Metropolis moves


def propose_location(state: MixtureState, data: Dataset, model: MixtureModel, m: int,
                     step: float, rng):
    """Random-walk proposal for component ``m``.

    Returns
    -------
    new_row : ndarray of shape (d,)
    log_ratio : float
        Log acceptance ratio (``-inf`` for proposals outside the support).
    """
    old = state.locations[m]
    new = old + step * rng.standard_normal(old.shape)
    try:
        log_ratio = priors.log_prior_ratio_update(_prior_at(state, model), state.locations, m, new)
    except InvalidInputError:
        return new, -math.inf
    idx = np.flatnonzero(state.z == m)
    if idx.size:
        kp = None if state.kernel_params is None else state.kernel_params[m:m + 1]
        y = data.y[idx]
        log_ratio += float(
            np.sum(mixture.log_kernel_matrix(model.kernel, kp, new[None, :], y))
            - np.sum(mixture.log_kernel_matrix(model.kernel, kp, old[None, :], y))
        )
    return new, log_ratio


def _birth_log_ratio(prior, model, locations, row, log_q, M, K, u):
    """Log acceptance ratio of inserting ``row`` into an ``M``-component state."""
    h = model.hyper
    return (
        priors.log_prior_ratio_birth(prior, locations, row)
        + mixture.log_m_prior(M + 1, h.Lambda)
        - mixture.log_m_prior(M, h.Lambda)
        - log_q
        - h.gamma_s * math.log1p(u)
        + math.log(M + 1)
        - math.log(M + 1 - K)
    )


def propose_birth(state: MixtureState, model: MixtureModel, rng):
    """Propose a new non-allocated component.

    The location comes from the one-point prior marginal, the weight from
    ``Gamma(gamma_s, 1 + u)`` and kernel parameters from their prior.  The
    new component is inserted at a uniformly random label position, which
    makes the move the exact reverse of deleting a uniformly chosen
    non-allocated component.

    Returns
    -------
    proposal : MixtureState
    log_ratio : float
    info : dict
        The drawn pieces (``row``, ``S``, ``kernel_params``, ``position``,
        ``log_q``) for diagnostics and tests.
    """
    prior = _prior_at(state, model)
    row, log_q = priors.sample_birth_proposal(prior, rng)
    s_new = max(rng.gamma(model.hyper.gamma_s) / (1.0 + state.u), np.finfo(float).tiny)
    kp_new = mixture.sample_kernel_param_prior(model, rng, 1)
    pos = int(rng.integers(state.M + 1))
    try:
        log_ratio = _birth_log_ratio(prior, model, state.locations, row, log_q,
                                     state.M, state.K, state.u)
    except InvalidInputError:
        log_ratio = -math.inf
    new = state.copy()
    new.locations = np.insert(state.locations, pos, row, axis=0)
    new.S = np.insert(state.S, pos, s_new)
    if kp_new is not None:
        new.kernel_params = np.insert(state.kernel_params, pos, kp_new[0], axis=0)
    new.z = np.where(state.z >= pos, state.z + 1, state.z)
    info = {"row": row, "S": s_new, "kernel_params": kp_new, "position": pos, "log_q": log_q}
    return new, log_ratio, info


def propose_death(state: MixtureState, model: MixtureModel, rng):
    """Propose deleting a uniformly chosen non-allocated component.

    Returns ``None`` when no component can be removed (``M = 1`` or all
    components allocated); otherwise ``(proposal, log_ratio, index)``.
    """
    counts = state.counts
    empty = np.flatnonzero(counts == 0)
    if state.M < 2 or empty.size == 0:
        return None
    k = int(empty[rng.integers(empty.size)])
    prior = _prior_at(state, model)
    rest = np.delete(state.locations, k, axis=0)
    row = state.locations[k]
    log_q = priors.log_birth_proposal_density(prior, row)
    log_ratio = -_birth_log_ratio(prior, model, rest, row, log_q, state.M - 1, state.K, state.u)
    new = state.copy()
    new.locations = rest
    new.S = np.delete(state.S, k)
    if state.kernel_params is not None:
        new.kernel_params = np.delete(state.kernel_params, k, axis=0)
    new.z = np.where(state.z > k, state.z - 1, state.z)
    return new, log_ratio, k


def propose_zeta(state: MixtureState, model: MixtureModel, step: float, rng):
    """Log-normal random-walk proposal for ``zeta``.

    A shared ``zeta`` moves all dimensions together; otherwise each
    dimension gets its own perturbation.

    Returns
    -------
    zeta_new : ndarray of shape (d,)
    log_ratio : float
    """
    d = state.zeta.size
    if model.shared_zeta:
        eps = np.full(d, rng.standard_normal())
    else:
        eps = rng.standard_normal(d)
    zeta_new = state.zeta * np.exp(step * eps)
    if not model.prior.zeta_feasible(zeta_new):
        return zeta_new, -math.inf
    prior_old = model.prior.with_zeta(state.zeta)
    prior_new = model.prior.with_zeta(zeta_new)
    jac = np.log(zeta_new) - np.log(state.zeta)
    log_ratio = (
        priors.log_prior(prior_new, state.locations)
        - priors.log_prior(prior_old, state.locations)
        + model.log_zeta_prior(zeta_new)
        - model.log_zeta_prior(state.zeta)
        + float(jac[0] if model.shared_zeta else np.sum(jac))
    )
    return zeta_new, log_ratio


def _accept(log_ratio, rng) -> bool:
    # draw unconditionally so the random stream does not depend on the ratio
    return math.log(rng.random()) < log_ratio


def step_allocated_locations(state: MixtureState, data: Dataset, model: MixtureModel, rng,
                             step: float = 0.5, which: str = "allocated", counter=None):
    """Random-walk updates of component locations in random order.

    Parameters
    ----------
    which : {"allocated", "all"}
        ``"all"`` also moves non-allocated components; used when the number
        of components is held fixed.
    """
    if which == "allocated":
        comps = np.flatnonzero(state.counts > 0)
    else:
        comps = np.arange(state.M)
    comps = rng.permutation(comps)
    accepted = 0
    for m in comps:
        new, log_ratio = propose_location(state, data, model, int(m), step, rng)
        if _accept(log_ratio, rng):
            state.locations = state.locations.copy()
            state.locations[m] = new
            accepted += 1
    if counter is not None:
        counter.add("location", accepted, comps.size)
    return state


def step_birth_death(state: MixtureState, data: Dataset, model: MixtureModel, rng,
                     attempts: int = 1, counter=None):
    """Birth or death proposals, each chosen with probability 1/2."""
    for _ in range(attempts):
        if rng.random() < 0.5:
            new, log_ratio, _ = propose_birth(state, model, rng)
            ok = _accept(log_ratio, rng)
            if counter is not None:
                counter.add("birth", int(ok))
        else:
            out = propose_death(state, model, rng)
            if out is None:
                if counter is not None:
                    counter.add("death", 0)
                continue
            new, log_ratio, _ = out
            ok = _accept(log_ratio, rng)
            if counter is not None:
                counter.add("death", int(ok))
        if ok:
            state = new
    return state


def step_zeta(state: MixtureState, model: MixtureModel, rng, step: float = 0.5, counter=None):
    """One log-normal random-walk update of ``zeta``."""
    zeta_new, log_ratio = propose_zeta(state, model, step, rng)
    ok = _accept(log_ratio, rng)
    if ok:
        state.zeta = zeta_new
    if counter is not None:
        counter.add("zeta", int(ok))
    return state


# ---------------------------------------------------------------- driver


def initial_state(data: Dataset, model: MixtureModel, config: SamplerConfig, rng) -> MixtureState:
    """Starting state drawn from the priors, with labels set greedily."""
    M = config.fixed_M or config.init_components
    d = model.kernel.dim
    zeta = np.full(d, float(config.zeta_init))
    prior = model.prior.with_zeta(zeta)
    locations = np.empty((M, d))
    for h in range(M):
        locations[h], _ = priors.sample_birth_proposal(prior, rng)
    S = np.maximum(rng.gamma(model.hyper.gamma_s, size=M), np.finfo(float).tiny)
    kp = mixture.sample_kernel_param_prior(model, rng, M)
    z = np.zeros(data.n, dtype=np.int64)
    state = MixtureState(locations, S, z, kp, zeta, u=1.0)
    if data.n:
        logp = np.log(S)[None, :] + mixture.log_kernel_matrix(model.kernel, kp, locations, data.y)
        state.z = np.argmax(logp, axis=1).astype(np.int64)
    return state


def run_chain(config: SamplerConfig, data: Dataset, model: MixtureModel, rng,
              init: MixtureState | None = None) -> ChainOutput:
    """Run the sampler and keep thinned post-burn-in draws.

    Parameters
    ----------
    config : SamplerConfig
    data : Dataset
        May have zero rows, giving a prior-only chain.
    model : MixtureModel
    rng : numpy.random.Generator
    init : MixtureState, optional
        Starting state; drawn by :func:`initial_state` if omitted.

    Returns
    -------
    ChainOutput
    """
    model.check_data(data)
    state = init.copy() if init is not None else initial_state(data, model, config, rng)
    state.validate(data.n)
    if config.fixed_M is not None and state.M != config.fixed_M:
        raise InvalidInputError("initial state does not have fixed_M components")
    counter = _Counter()
    d = model.kernel.dim
    loc_target = 0.44 if d == 1 else 0.234
    zeta_target = 0.44 if (model.shared_zeta or d == 1) else 0.234
    log_loc_step = math.log(config.location_step) if config.location_step > 0 else -math.inf
    log_zeta_step = math.log(config.zeta_step) if config.zeta_step > 0 else -math.inf
    which = "all" if config.fixed_M is not None else "allocated"

    rec = {k: [] for k in ("M", "K", "z", "zeta", "locations", "S", "kernel_params", "u",
                           "location_step", "zeta_step")}
    for t in range(config.n_iter):
        step_allocations(state, data, model, rng)
        step_weights_and_u(state, data, model, rng)

        before = counter.accepted.get("location", 0), counter.proposed.get("location", 0)
        step_allocated_locations(state, data, model, rng, math.exp(log_loc_step), which, counter)
        acc = counter.accepted.get("location", 0) - before[0]
        prop = counter.proposed.get("location", 0) - before[1]

        if config.fixed_M is None:
            state = step_birth_death(state, data, model, rng, config.birth_death_attempts, counter)

        zeta_ok = None
        if config.infer_zeta:
            before_z = counter.accepted.get("zeta", 0)
            step_zeta(state, model, rng, math.exp(log_zeta_step), counter)
            zeta_ok = counter.accepted["zeta"] - before_z

        step_kernel_params(state, data, model, rng)

        if t < config.adapt_iters:
            gain = (t + 1) ** -0.6
            if prop and math.isfinite(log_loc_step):
                log_loc_step += gain * (acc / prop - loc_target)
            if zeta_ok is not None and math.isfinite(log_zeta_step):
                log_zeta_step += gain * (zeta_ok - zeta_target)

        if t >= config.n_burnin and (t - config.n_burnin) % config.thin == config.thin - 1:
            rec["M"].append(state.M)
            rec["K"].append(state.K)
            rec["z"].append(state.z.copy())
            rec["zeta"].append(state.zeta.copy())
            rec["locations"].append(state.locations.copy())
            rec["S"].append(state.S.copy())
            rec["kernel_params"].append(
                None if state.kernel_params is None else state.kernel_params.copy())
            rec["u"].append(state.u)
            rec["location_step"].append(math.exp(log_loc_step))
            rec["zeta_step"].append(math.exp(log_zeta_step))

    n, r = data.n, len(rec["M"])
    return ChainOutput(
        M=np.asarray(rec["M"], dtype=np.int64),
        K=np.asarray(rec["K"], dtype=np.int64),
        z=np.asarray(rec["z"], dtype=np.int64).reshape(r, n),
        zeta=np.asarray(rec["zeta"]).reshape(r, d),
        locations=rec["locations"],
        S=rec["S"],
        kernel_params=rec["kernel_params"],
        u=np.asarray(rec["u"]),
        location_step=np.asarray(rec["location_step"]),
        zeta_step=np.asarray(rec["zeta_step"]),
        acceptance=counter.summary(),
    )
