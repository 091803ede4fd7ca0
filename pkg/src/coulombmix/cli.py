"""Command-line experiment runners.

Usage::

    coulombmix <experiment> [--config PATH] [--seed N] [--out DIR]

Exit codes: 0 success, 1 configuration error, 2 numerical check failed,
3 input/output error.
"""

from __future__ import annotations

import argparse
import logging
import math
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__, ensembles, io, ldp, mcmc, partition, validation
from ._errors import (ConfigError, ConvergenceError, DataError, InvalidInputError,
                      NumericCheckError)
from .ensembles import EnsembleParams
from .ising import CRITICAL_ZETA, IsingExperimentGrid, run_ising_experiment
from .mixture import Dataset, Hyper, Kernel, MixtureModel, predictive_density_grid
from .priors import CoulombPrior

__all__ = ["main", "run_experiment", "build_model", "load_data"]

log = logging.getLogger("coulombmix")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


# ---------------------------------------------------------------- builders


def build_model(cfg: io.ModelConfig) -> MixtureModel:
    """Translate the model block of a config into a :class:`MixtureModel`."""
    per_dim = tuple(EnsembleParams(p.family, 1.0, p.alpha, p.beta) for p in cfg.prior)
    links = tuple(p.link for p in cfg.prior)
    d = len(per_dim)
    if cfg.kernel == "gaussiand":
        kernel = Kernel("gaussiand", dim=d)
    else:
        kernel = Kernel(cfg.kernel, trials=cfg.trials)
    h = cfg.hyper
    hyper = Hyper(gamma_s=h.gamma_s, Lambda=h.Lambda, nu=h.nu,
                  psi=None if h.psi is None else np.asarray(h.psi),
                  zeta_shape=h.zeta_shape, zeta_rate=h.zeta_rate)
    return MixtureModel(CoulombPrior(per_dim, links), kernel, hyper, cfg.shared_zeta)


def load_data(config: io.RunConfig, rng) -> tuple[Dataset, dict]:
    """Dataset for a ``fit`` run plus a description for the manifest.

    Without a path or simulation spec, the bundled air-quality data
    (Ozone and Solar.R) are used.
    """
    dc = config.data
    if dc.simulate is not None:
        data, truth = io.simulate_binomial(dc.simulate, rng)
        return data, {"source": "simulated_binomial",
                      "weights": [float(w) for w in truth["weights"]]}
    path = Path(dc.path) if dc.path is not None else io.airquality_path()
    columns = dc.columns if dc.columns is not None else (
        ["Ozone", "Solar.R"] if dc.path is None else None)
    data, info = io.load_csv_dataset(path, columns, integer=config.model.kernel == "binomial")
    info = {"source": str(path) if dc.path is not None else "bundled:airquality.csv", **info}
    if dc.standardize and config.model.kernel != "binomial":
        y, mean, sd = io.standardize(data.y)
        data = Dataset(y)
        info.update(mean=[float(v) for v in mean], sd=[float(v) for v in sd])
    return data, info


def _sampler_config(cfg: io.SamplerBlock) -> mcmc.SamplerConfig:
    return mcmc.SamplerConfig(**cfg.model_dump())


def _pmf_rows(values) -> list:
    v, c = np.unique(np.asarray(values), return_counts=True)
    return [[int(a), b / len(values)] for a, b in zip(v, c)]


# ---------------------------------------------------------------- runners


def _run_fit(config, rng, out: Path) -> dict:
    data, data_info = load_data(config, rng)
    model = build_model(config.model)
    model.check_data(data)
    sampler = _sampler_config(config.sampler)
    t0 = time.perf_counter()
    chain = mcmc.run_chain(sampler, data, model, rng)
    elapsed = time.perf_counter() - t0
    if len(chain) == 0:
        raise ConfigError("no draws retained; check n_iter, n_burnin and thin")

    psm = partition.cocluster_matrix(chain.z)
    labels = partition.binder_estimate(chain.z, psm)
    io.write_csv(out / "kn_posterior.csv", ["K", "probability"], _pmf_rows(chain.K))
    io.write_csv(out / "m_posterior.csv", ["M", "probability"], _pmf_rows(chain.M))
    d = data.d
    io.write_csv(out / "zeta_posterior.csv", ["draw"] + [f"zeta_{j + 1}" for j in range(d)],
                 [[r, *row] for r, row in enumerate(chain.zeta)])
    io.write_csv(out / "binder_partition.csv", ["observation", "cluster"],
                 [[i + 1, int(c)] for i, c in enumerate(labels)])
    io.write_csv(out / "psm.csv", [f"obs_{i + 1}" for i in range(data.n)], psm.tolist())

    # predictive density on a regular grid spanning the data
    y = data.y
    if model.kernel.kind == "binomial":
        axes = [np.arange(model.kernel.trials + 1, dtype=float)]
    else:
        span = y.max(axis=0) - y.min(axis=0)
        m = config.fit.grid_margin
        axes = [np.linspace(y[:, j].min() - m * span[j], y[:, j].max() + m * span[j],
                            config.fit.grid_points) for j in range(d)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    dens = predictive_density_grid(chain.states(), mesh, model)
    io.write_csv(out / "predictive_grid.csv", [f"y_{j + 1}" for j in range(d)] + ["density"],
                 [[*p, v] for p, v in zip(mesh, dens)])

    k_mode = int(np.bincount(chain.K).argmax())
    return {
        "data": data_info,
        "n_observations": data.n,
        "n_draws": len(chain),
        "chain_seconds": elapsed,
        "binder_clusters": int(labels.max()),
        "kn_mode": k_mode,
        "zeta_mean": [float(v) for v in chain.zeta.mean(axis=0)],
        "acceptance": chain.acceptance,
    }


def _run_ising(config, rng, out: Path) -> dict:
    ic = config.ising
    zetas = tuple(ic.zetas) if ic.zetas is not None else (
        0.0, 0.1, 0.25, CRITICAL_ZETA, 0.5, 0.75, 1.0, 10.0, 100.0)
    grid = IsingExperimentGrid(tuple(ic.sides), zetas, tuple(ic.hs), tuple(ic.pis),
                               ic.n_iter, ic.n_burnin, config.seed)
    rows = run_ising_experiment(grid)
    cols = ["n", "zeta", "h", "pi_init", "mean_positive_prop", "mean_magnetisation"]
    io.write_csv(out / "ising.csv", cols, [[r[c] for c in cols] for r in rows])
    return {"n_cells": len(rows)}


def _run_ensemble_sample(config, rng, out: Path) -> dict:
    ec = config.ensemble_sample
    params = EnsembleParams(ec.family, ec.zeta, ec.alpha, ec.beta)
    if ec.method == "matrix":
        if ec.family != "hermite":
            raise ConfigError("the matrix method is available for the Hermite ensemble only")
        draws = ensembles.sample_hermite_tridiagonal(ec.zeta, ec.M, rng, size=ec.n_draws)
    else:
        draws = ensembles.sample_prior_chains(params, ec.M, rng, n_chains=ec.n_draws,
                                              n_sweeps=ec.n_sweeps)[:, 0, :]
    io.write_csv(out / "draws.csv", ["draw"] + [f"theta_{i + 1}" for i in range(ec.M)],
                 [[r, *row] for r, row in enumerate(draws)])
    return {"n_draws": ec.n_draws, "M": ec.M}


def _write_checks(out: Path, rows) -> list:
    header = ["check", "value", "threshold", "passed"]
    io.write_csv(out / "checks.csv", header, rows)
    return [r[0] for r in rows if not r[3]]


def _run_validate_ldp(config, rng, out: Path) -> dict:
    lc = config.validate_ldp
    ks_rows, medians = [], {}
    specs = [("hermite", EnsembleParams.hermite(lc.hermite_zeta)),
             ("laguerre", EnsembleParams.laguerre(lc.laguerre_alpha, lc.laguerre_zeta))]
    for name, params in specs:
        for M in lc.Ms:
            scale, law = ldp.esd_scaling(params, M)
            if name == "hermite":
                draws = ensembles.sample_hermite_tridiagonal(params.zeta, M, rng, size=lc.replicates)
            else:
                draws = ensembles.sample_prior_chains(params, M, rng, n_chains=lc.replicates,
                                                      n_sweeps=lc.sweeps_per_M * M)[:, 0, :]
            ks = [ldp.ks_to_limit(ldp.empirical_measure(row, scale), law) for row in draws]
            ks_rows += [[name, M, r, v] for r, v in enumerate(ks)]
            medians[(name, M)] = float(np.median(ks))
    io.write_csv(out / "ks_convergence.csv", ["ensemble", "M", "replicate", "ks"], ks_rows)

    params = ldp.RateFunctionParams(lc.a, lc.b, lc.zeta)
    fine = ldp.minimize_rate_function(params, lc.k)
    coarse = ldp.minimize_rate_function(params, lc.k_coarse)
    mu0 = fine.measure
    io.write_csv(out / "rate_minimizer.csv", ["support", "weight"],
                 list(zip(mu0.support, mu0.weights)))
    jac = ldp.matched_jacobi_params(params, lc.jacobi_M)
    jdraws = ensembles.sample_prior_chains(jac, lc.jacobi_M, rng, n_chains=lc.jacobi_chains,
                                           n_sweeps=lc.sweeps_per_M * lc.jacobi_M)[:, 0, :]
    w1_esd = max(ldp.wasserstein1(ldp.empirical_measure(row), mu0) for row in jdraws)
    w1_grid = ldp.wasserstein1(fine.measure, coarse.measure)

    checks = []
    for name, _ in specs:
        meds = [medians[(name, M)] for M in lc.Ms]
        checks.append([f"{name}_ks_median_decreasing", max(np.diff(meds), default=0.0), 0.0,
                       all(b < a for a, b in zip(meds, meds[1:]))])
    h_last = medians[("hermite", lc.Ms[-1])]
    checks.append([f"hermite_ks_median_M{lc.Ms[-1]}", h_last, lc.ks_threshold,
                   h_last < lc.ks_threshold])
    checks.append(["rate_frank_wolfe_gap", fine.gap, 1e-8, fine.gap < 1e-8])
    checks.append(["rate_min_tangent_eigenvalue", fine.min_tangent_eigenvalue, 0.0,
                   fine.min_tangent_eigenvalue > 0])
    checks.append(["rate_grid_w1", w1_grid, lc.w1_grid_threshold, w1_grid < lc.w1_grid_threshold])
    checks.append(["jacobi_esd_w1", w1_esd, lc.w1_esd_threshold, w1_esd < lc.w1_esd_threshold])
    failed = _write_checks(out, checks)
    return {"B": fine.B, "failed_checks": failed}


def _run_validate_ensembles(config, rng, out: Path) -> dict:
    vc = config.validate_ensembles
    results = validation.check_normalisation(Ms=tuple(vc.Ms), tol=vc.norm_tol,
                                             closed_form_tol=vc.closed_form_tol)
    results += validation.check_moments(M=vc.moment_M, rng=rng, n_chains=vc.n_chains,
                                        n_sweeps=vc.n_sweeps, max_z=vc.max_z)
    io.write_csv(out / "ensemble_checks.csv", validation.CHECK_HEADER, [r.row() for r in results])
    failed = [f"{r.check}:{r.params.kind}:M={r.M}" for r in results if not r.passed]
    return {"n_checks": len(results), "failed_checks": failed}


RUNNERS = {
    "fit": _run_fit,
    "ising": _run_ising,
    "ensemble-sample": _run_ensemble_sample,
    "validate-ldp": _run_validate_ldp,
    "validate-ensembles": _run_validate_ensembles,
}


def _versions() -> dict:
    out = {"python": platform.python_version(), "coulombmix": __version__}
    for pkg in ("numpy", "scipy", "numba", "scikit-learn", "pydantic"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def run_experiment(config: io.RunConfig) -> dict:
    """Run one experiment, write its CSV files and ``manifest.json``.

    Returns
    -------
    dict
        The manifest.

    Raises
    ------
    NumericCheckError
        For validation experiments whose checks fail (files are still written).
    """
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    rng = np.random.default_rng([config.seed, 0])
    t0 = time.perf_counter()
    summary = RUNNERS[config.experiment](config, rng, out)
    manifest = {
        "experiment": config.experiment,
        "seed": config.seed,
        "config_hash": io.config_hash(config),
        "config": config.model_dump(mode="json"),
        "versions": _versions(),
        "wall_time_seconds": time.perf_counter() - t0,
        "summary": summary,
    }
    io.write_json(out / "manifest.json", _jsonable(manifest))
    failed = summary.get("failed_checks") if isinstance(summary, dict) else None
    if failed:
        raise NumericCheckError(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


# ---------------------------------------------------------------- entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coulombmix", description="Repulsive mixture experiments.")
    p.add_argument("experiment", choices=io.EXPERIMENTS)
    p.add_argument("--config", help="JSON run configuration or a previous manifest.json")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.config:
            config = io.load_config(args.config, seed=args.seed, output_dir=args.out)
            if config.experiment != args.experiment:
                raise ConfigError(f"config is for {config.experiment!r}, not {args.experiment!r}")
        else:
            config = io.load_config({"experiment": args.experiment}, seed=args.seed,
                                    output_dir=args.out)
        manifest = run_experiment(config)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except InvalidInputError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG
    except (NumericCheckError, ConvergenceError) as exc:
        log.error("numerical check failed: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return EXIT_IO
    print(f"{manifest['experiment']} finished; results in {config.output_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
