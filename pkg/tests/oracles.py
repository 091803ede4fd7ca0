"""Independent numerical oracles used by the test-suite."""

import math

import numpy as np
from scipy.special import roots_legendre


def log_unnorm_density_grid(kind, zeta, alpha=0.0, beta=0.0):
    """Vectorised unnormalised log-density written out from scratch.

    Returns a function of a list of equally shaped arrays, one per point.
    """
    power = 2 * zeta if kind == "jacobi" else zeta

    def log_weight(x):
        if kind == "hermite":
            return -zeta * x * x / 2
        if kind == "laguerre":
            return -zeta * x / 2 + alpha * zeta / 2 * np.log(x)
        return (alpha - 1) * np.log(x) + (beta - 1) * np.log(1 - x)

    def f(xs):
        out = sum(log_weight(x) for x in xs)
        for i in range(len(xs)):
            for j in range(i + 1, len(xs)):
                out = out + power * np.log(np.abs(xs[i] - xs[j]))
        return out

    return f


def _smooth_map(w, q):
    # (0,1) -> (0,1) with derivatives up to order q-1 vanishing at both ends
    a, b = w**q, (1 - w) ** q
    s = a / (a + b)
    ds = q * (w ** (q - 1) * b + a * (1 - w) ** (q - 1)) / (a + b) ** 2
    return s, ds


def _support_map(kind, s, c):
    # (0,1) -> support with length scale c, and the Jacobian
    if kind == "jacobi":
        return s, np.ones_like(s)
    if kind == "laguerre":
        return c * s / (1 - s), c / (1 - s) ** 2
    t = 2 * s - 1
    return c * t / (1 - t * t), 2 * c * (1 + t * t) / (1 - t * t) ** 2


def ordered_integral(log_f, kind, M, n=160, q=3, log_scale=0.0, length=1.0):
    """Integral of ``exp(log_f - log_scale)`` over the full support box.

    The symmetric integrand is integrated over the ordered region
    ``x_1 < ... < x_M`` and multiplied by ``M!``.  The ordered region is
    parametrised by nested fractions of the remaining interval so that the
    diagonal singularities ``|x_i - x_j|^p`` sit on cube faces, where an
    endpoint-flattening substitution and a tensor Gauss-Legendre rule
    handle them.  ``length`` sets the scale of the map onto unbounded
    supports.
    """
    nodes, weights = roots_legendre(n)
    w = (nodes + 1) / 2
    gw = weights / 2
    s, ds = _smooth_map(w, q)
    grids = np.meshgrid(*([s] * M), indexing="ij")
    dgrids = np.meshgrid(*([ds * gw] * M), indexing="ij")
    # u_1 = s_1, u_k = u_{k-1} + (1 - u_{k-1}) s_k
    us, jac = [], np.ones_like(grids[0])
    prev = None
    for k in range(M):
        if k == 0:
            u = grids[0]
        else:
            u = prev + (1 - prev) * grids[k]
            jac = jac * (1 - prev)
        us.append(u)
        prev = u
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        xs, log_jac = [], np.log(jac)
        for u in us:
            x, dx = _support_map(kind, u, length)
            xs.append(x)
            log_jac = log_jac + np.log(dx)
        vals = np.exp(log_f(xs) + log_jac - log_scale)
    vals = np.where(np.isfinite(vals), vals, 0.0)
    weight = np.ones_like(vals)
    for dg in dgrids:
        weight = weight * dg
    return math.factorial(M) * float(np.sum(vals * weight))


# ---------------------------------------------------------------- Metropolis-Hastings anchor

def _anchor_models():
    from coulombmix.ensembles import EnsembleParams
    from coulombmix.mixture import Hyper, Kernel, MixtureModel
    from coulombmix.priors import CoulombPrior

    return {
        "gauss1d": MixtureModel(CoulombPrior((EnsembleParams.hermite(1.0),)), Kernel("gaussian1d"),
                                Hyper(gamma_s=0.7, Lambda=2.0, zeta_shape=2.0, zeta_rate=1.0)),
        "binomial": MixtureModel(CoulombPrior((EnsembleParams.jacobi(1.0, 1.5, 0.5),), ("logit",)),
                                 Kernel("binomial", trials=8), Hyper(gamma_s=1.3, Lambda=3.0)),
        "gauss2d": MixtureModel(CoulombPrior((EnsembleParams.hermite(1.0),
                                              EnsembleParams.laguerre(0.5, 1.0)), ("identity", "log")),
                                Kernel("gaussiand", dim=2), Hyper(nu=5.0), shared_zeta=False),
    }


ANCHOR_MODELS = _anchor_models()


def random_problem(key, rng):
    """Random model state and data, with some components left empty."""
    from coulombmix import mixture, priors
    from coulombmix.mixture import Dataset, MixtureState

    model = ANCHOR_MODELS[key]
    d = model.kernel.dim
    M = int(rng.integers(1, 7))
    n = int(rng.integers(1, 9))
    k_max = int(rng.integers(1, M + 1))
    used = rng.choice(M, size=k_max, replace=False)
    z = used[rng.integers(0, k_max, n)].astype(np.int64)
    y = rng.integers(0, 9, (n, 1)) if key == "binomial" else rng.normal(size=(n, d))
    zeta = np.full(d, rng.uniform(0.3, 3.0)) if model.shared_zeta else rng.uniform(0.3, 3.0, d)
    prior = model.prior.with_zeta(zeta)
    loc = np.array([priors.sample_birth_proposal(prior, rng)[0] for _ in range(M)])
    S = rng.gamma(1.0, size=M) + 1e-3
    kp = mixture.sample_kernel_param_prior(model, rng, M)
    return model, Dataset(y), MixtureState(loc, S, z, kp, zeta, u=float(rng.gamma(2.0)))


def mh_anchor_residuals(n_per_move, seed=2024):
    """Compare every move's log acceptance ratio with an independent recomputation.

    The reference is the difference of augmented log joint densities plus
    the log reverse-minus-forward proposal density, written out in labelled
    space: a birth inserts at one of ``M + 1`` positions and is reversed by
    deleting one of the empty components.

    Returns
    -------
    dict
        ``move -> (n_checked, max_abs_residual)``.
    """
    from scipy import stats

    from coulombmix import mcmc, mixture, priors

    def lj(state, data, model):
        return mixture.log_joint(state, data, model, augmented=True)

    def log_g(S, model, u):
        return float(stats.gamma.logpdf(S, model.hyper.gamma_s, scale=1.0 / (1.0 + u)))

    def log_kp(model, kp):
        return 0.0 if kp is None else float(np.sum(mixture.log_kernel_param_prior(model, kp)))

    rng = np.random.default_rng(seed)
    keys = sorted(ANCHOR_MODELS)
    res = {m: [] for m in ("location", "birth", "death", "zeta")}
    t = 0
    while min(len(v) for v in res.values()) < n_per_move:
        key = keys[t % len(keys)]
        t += 1
        model, data, s = random_problem(key, rng)
        base = lj(s, data, model)

        m = int(rng.integers(s.M))
        new_row, r = mcmc.propose_location(s, data, model, m, 0.4, rng)
        if math.isfinite(r):
            s2 = s.copy()
            s2.locations[m] = new_row
            res["location"].append(r - (lj(s2, data, model) - base))

        prop, r, info = mcmc.propose_birth(s, model, rng)
        if math.isfinite(r):
            fwd = (-math.log(s.M + 1) + info["log_q"] + log_g(info["S"], model, s.u)
                   + log_kp(model, info["kernel_params"]))
            rev = -math.log(prop.M - prop.K)
            res["birth"].append(r - (lj(prop, data, model) - base + rev - fwd))

        out = mcmc.propose_death(s, model, rng)
        if out is not None:
            prop, r, k = out
            prior = model.prior.with_zeta(s.zeta)
            kp_k = None if s.kernel_params is None else s.kernel_params[k:k + 1]
            rev = (-math.log(s.M) + priors.log_birth_proposal_density(prior, s.locations[k])
                   + log_g(s.S[k], model, s.u) + log_kp(model, kp_k))
            fwd = -math.log(int(np.sum(s.counts == 0)))
            res["death"].append(r - (lj(prop, data, model) - base + rev - fwd))

        zeta_new, r = mcmc.propose_zeta(s, model, 0.5, rng)
        if math.isfinite(r):
            s2 = s.copy()
            s2.zeta = zeta_new
            jac = np.log(zeta_new) - np.log(s.zeta)
            jac = jac[0] if model.shared_zeta else jac.sum()
            res["zeta"].append(r - (lj(s2, data, model) - base + jac))
    return {m: (len(v), float(np.max(np.abs(v)))) for m, v in res.items()}
