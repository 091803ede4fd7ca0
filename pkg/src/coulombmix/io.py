"""Run configuration, dataset loading and result writing."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from importlib import resources
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ._errors import ConfigError, DataError, InvalidInputError
from .mixture import Dataset

__all__ = [
    "RunConfig",
    "BinomialSimSpec",
    "load_config",
    "config_hash",
    "load_csv_dataset",
    "airquality_path",
    "simulate_binomial",
    "standardize",
    "write_csv",
    "write_json",
    "format_float",
]

EXPERIMENTS = ("fit", "ising", "ensemble-sample", "validate-ldp", "validate-ensembles")
NA_TOKENS = {"", "NA", "NaN", "nan", "N/A", "null"}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------- config schema


class PriorDim(_Strict):
    family: Literal["hermite", "laguerre", "jacobi"] = "hermite"
    alpha: float = 0.0
    beta: float = 0.0
    link: Literal["identity", "log", "logit"] = "identity"


class HyperConfig(_Strict):
    gamma_s: float = Field(1.0, gt=0)
    Lambda: float = Field(1.0, gt=0)
    nu: float = 6.0
    psi: list[list[float]] | None = None
    zeta_shape: float = Field(1.0, gt=0)
    zeta_rate: float = Field(1.0, gt=0)


class ModelConfig(_Strict):
    kernel: Literal["gaussian1d", "gaussiand", "binomial"] = "gaussiand"
    trials: int | None = None
    prior: list[PriorDim] = Field(default_factory=lambda: [PriorDim(), PriorDim()])
    hyper: HyperConfig = Field(default_factory=HyperConfig)
    shared_zeta: bool = True


class SamplerBlock(_Strict):
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


class BinomialSimSpec(_Strict):
    """Five-component binomial mixture with Dirichlet(1) weights."""

    n: int = Field(150, ge=1)
    trials: int = Field(15, ge=1)
    logits: list[float] = Field(default_factory=lambda: [-5.0, -2.5, 0.0, 2.5, 5.0])
    dirichlet: float = Field(1.0, gt=0)


class DataConfig(_Strict):
    path: str | None = None
    columns: list[str] | None = None
    standardize: bool = True
    simulate: BinomialSimSpec | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if self.path is not None and self.simulate is not None:
            raise ValueError("give either a data path or a simulation spec, not both")
        return self


class FitOptions(_Strict):
    grid_points: int = Field(40, ge=2)
    grid_margin: float = Field(0.25, ge=0)


class IsingConfig(_Strict):
    sides: list[int] = Field(default_factory=lambda: [5, 10, 15, 20])
    zetas: list[float] | None = None
    hs: list[float] = Field(default_factory=lambda: [-5.0, 0.0, 5.0])
    pis: list[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    n_iter: int = 1500
    n_burnin: int = 1000


class EnsembleSampleConfig(_Strict):
    family: Literal["hermite", "laguerre", "jacobi"] = "hermite"
    alpha: float = 0.0
    beta: float = 0.0
    zeta: float = Field(2.0, gt=0)
    M: int = Field(10, ge=1)
    n_draws: int = Field(100, ge=1)
    n_sweeps: int = Field(500, ge=1)
    method: Literal["mcmc", "matrix"] = "mcmc"


class LdpConfig(_Strict):
    Ms: list[int] = Field(default_factory=lambda: [50, 200, 500])
    replicates: int = Field(10, ge=1)
    hermite_zeta: float = Field(2.0, gt=0)
    laguerre_alpha: float = 1.0
    laguerre_zeta: float = Field(2.0, gt=0)
    sweeps_per_M: int = Field(4, ge=1)
    ks_threshold: float = 0.05
    a: float = 0.5
    b: float = 0.5
    zeta: float = 1.0
    k: int = Field(128, ge=10)
    k_coarse: int = Field(64, ge=10)
    jacobi_M: int = Field(200, ge=2)
    jacobi_chains: int = Field(2, ge=1)
    w1_grid_threshold: float = 0.02
    w1_esd_threshold: float = 0.05


class EnsembleCheckConfig(_Strict):
    Ms: list[int] = Field(default_factory=lambda: [1, 2])
    norm_tol: float = 1e-5
    closed_form_tol: float = 1e-12
    n_chains: int = Field(20000, ge=100)
    n_sweeps: int = Field(200, ge=1)
    moment_M: int = Field(3, ge=1)
    max_z: float = 4.0


class RunConfig(_Strict):
    """Complete description of one experiment run."""

    experiment: Literal["fit", "ising", "ensemble-sample", "validate-ldp", "validate-ensembles"]
    seed: int = 0
    output_dir: str = "results"
    model: ModelConfig = Field(default_factory=ModelConfig)
    sampler: SamplerBlock = Field(default_factory=SamplerBlock)
    data: DataConfig = Field(default_factory=DataConfig)
    fit: FitOptions = Field(default_factory=FitOptions)
    ising: IsingConfig = Field(default_factory=IsingConfig)
    ensemble_sample: EnsembleSampleConfig = Field(default_factory=EnsembleSampleConfig)
    validate_ldp: LdpConfig = Field(default_factory=LdpConfig)
    validate_ensembles: EnsembleCheckConfig = Field(default_factory=EnsembleCheckConfig)


def load_config(source, **overrides) -> RunConfig:
    """Build a :class:`RunConfig` from a JSON file, a dict or a manifest.

    A ``manifest.json`` written by a previous run is accepted too; its
    ``config`` entry is used.  Keyword overrides replace top-level fields.

    Raises
    ------
    ConfigError
        On unreadable JSON, unknown keys or invalid values.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.is_file():
            raise DataError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    elif isinstance(source, dict):
        raw = dict(source)
    else:
        raise ConfigError("config source must be a path or a dict")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in raw and "config_hash" in raw:
        raw = dict(raw["config"])
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical config JSON, ignoring the output directory."""
    body = config.model_dump(mode="json")
    body.pop("output_dir")
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------- data


def airquality_path() -> Path:
    """Path of the bundled New York air-quality table (153 rows)."""
    return Path(str(resources.files("coulombmix") / "data" / "airquality.csv"))


def load_csv_dataset(path, columns=None, integer: bool = False) -> tuple[Dataset, dict]:
    """Read selected numeric columns of a CSV file with a header row.

    Rows with a missing value in any selected column are dropped.

    Parameters
    ----------
    path : str or Path
    columns : sequence of str, optional
        Columns to keep; all columns by default.
    integer : bool
        Require integer values (binomial counts).

    Returns
    -------
    dataset : Dataset
    info : dict
        ``n_rows``, ``n_dropped`` and ``columns``.

    Raises
    ------
    DataError
        Missing file, missing column, unparseable cell (with its row and
        column) or no complete rows.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        cols = list(columns) if columns is not None else [h for h in header if h]
        missing = [c for c in cols if c not in header]
        if missing:
            raise DataError(f"{path}: columns not found: {', '.join(missing)}")
        idx = [header.index(c) for c in cols]
        rows, dropped = [], 0
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) < len(header):
                raise DataError(f"{path}: row {line_no} has {len(rec)} fields, expected {len(header)}")
            vals = []
            for j, c in zip(idx, cols):
                cell = rec[j].strip()
                if cell in NA_TOKENS:
                    vals = None
                    break
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: cannot parse {cell!r} at row {line_no}, column {c!r}"
                    ) from None
                if integer and v != math.floor(v):
                    raise DataError(f"{path}: non-integer {cell!r} at row {line_no}, column {c!r}")
                vals.append(v)
            if vals is None:
                dropped += 1
            else:
                rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no complete rows in columns {cols}")
    y = np.asarray(rows)
    return Dataset(y), {"n_rows": len(rows), "n_dropped": dropped, "columns": cols}


def standardize(y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centre and scale each column to unit sample standard deviation."""
    y = np.asarray(y, dtype=float)
    mean = y.mean(axis=0)
    sd = y.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise InvalidInputError("cannot standardise a constant column")
    return (y - mean) / sd, mean, sd


def simulate_binomial(spec: BinomialSimSpec, rng) -> tuple[Dataset, dict]:
    """Draw counts from the binomial mixture described by ``spec``.

    Returns
    -------
    dataset : Dataset
        ``n`` counts in ``0..trials``.
    truth : dict
        ``weights`` (Dirichlet draw) and ``labels`` (component of each count).
    """
    logits = np.asarray(spec.logits, dtype=float)
    w = rng.dirichlet(np.full(logits.size, spec.dirichlet))
    labels = rng.choice(logits.size, size=spec.n, p=w)
    prob = 1.0 / (1.0 + np.exp(-logits))
    y = rng.binomial(spec.trials, prob[labels])
    return Dataset(y), {"weights": w, "labels": labels}


# ---------------------------------------------------------------- writing


def format_float(x) -> str:
    """Round-trip representation with 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def write_csv(path, header, rows) -> Path:
    """Write a header row and data rows with fixed float formatting."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([format_float(v) for v in r])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path
