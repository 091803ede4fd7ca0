import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coulombmix import cli, io
from coulombmix._errors import ConfigError, DataError, InvalidInputError

SMALL_FIT = {
    "experiment": "fit",
    "sampler": {"n_iter": 40, "n_burnin": 20, "thin": 2, "adapt_iters": 10},
    "fit": {"grid_points": 6},
}


def write_config(tmp_path, body, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(body))
    return p


class TestConfig:
    def test_defaults(self):
        cfg = io.load_config({"experiment": "fit"})
        assert cfg.seed == 0
        assert cfg.model.kernel == "gaussiand"
        assert len(cfg.model.prior) == 2
        assert cfg.validate_ldp.Ms == [50, 200, 500]

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            io.load_config({"experiment": "fit", "sampler": {"n_iters": 3}})

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            io.load_config({"experiment": "train"})

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            io.load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            io.load_config(tmp_path / "nope.json")

    def test_data_sources_exclusive(self):
        with pytest.raises(ConfigError):
            io.load_config({"experiment": "fit", "data": {"path": "x.csv", "simulate": {}}})

    def test_overrides(self):
        cfg = io.load_config({"experiment": "ising", "seed": 3}, seed=9, output_dir=None)
        assert cfg.seed == 9 and cfg.output_dir == "results"

    def test_hash_ignores_output_dir(self):
        a = io.load_config({"experiment": "fit", "output_dir": "a"})
        b = io.load_config({"experiment": "fit", "output_dir": "b"})
        c = io.load_config({"experiment": "fit", "seed": 1})
        assert io.config_hash(a) == io.config_hash(b) != io.config_hash(c)

    def test_manifest_accepted(self):
        cfg = io.load_config({"experiment": "ising", "seed": 4})
        manifest = {"config": cfg.model_dump(mode="json"), "config_hash": io.config_hash(cfg)}
        assert io.load_config(manifest) == cfg


class TestCsv:
    def test_bundled_airquality(self):
        data, info = io.load_csv_dataset(io.airquality_path(), ["Ozone", "Solar.R"])
        assert data.y.shape == (111, 2)
        assert info["n_rows"] == 111 and info["n_dropped"] == 42
        full, _ = io.load_csv_dataset(io.airquality_path())
        assert full.n == 111

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            io.load_csv_dataset(tmp_path / "none.csv")

    def test_missing_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(DataError, match="columns not found"):
            io.load_csv_dataset(p, ["c"])

    def test_unparseable_cell_reports_location(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b\n1,2\n3,x\n")
        with pytest.raises(DataError, match=r"row 3, column 'b'"):
            io.load_csv_dataset(p)

    def test_short_row(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b\n1\n")
        with pytest.raises(DataError, match="row 2"):
            io.load_csv_dataset(p)

    def test_integer_required(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("y\n3\n2.5\n")
        with pytest.raises(DataError, match="non-integer"):
            io.load_csv_dataset(p, integer=True)

    def test_na_rows_dropped(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b\n1,NA\n2,3\n,4\n")
        data, info = io.load_csv_dataset(p)
        np.testing.assert_array_equal(data.y, [[2, 3]])
        assert info["n_dropped"] == 2

    def test_no_complete_rows(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a\nNA\n")
        with pytest.raises(DataError):
            io.load_csv_dataset(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("")
        with pytest.raises(DataError):
            io.load_csv_dataset(p)


class TestTransforms:
    def test_standardize(self):
        y = np.array([[1.0, 10.0], [2.0, 20.0], [4.0, 60.0]])
        z, mean, sd = io.standardize(y)
        np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-15)
        np.testing.assert_allclose(z.std(axis=0, ddof=1), 1)
        np.testing.assert_allclose(z * sd + mean, y)

    def test_constant_column(self):
        with pytest.raises(InvalidInputError):
            io.standardize(np.ones((3, 1)))

    def test_simulate_binomial(self):
        spec = io.BinomialSimSpec()
        data, truth = io.simulate_binomial(spec, np.random.default_rng(0))
        assert data.n == 150
        assert np.all((data.y >= 0) & (data.y <= 15))
        assert truth["weights"].sum() == pytest.approx(1.0)
        # extreme logits give counts near 0 and 15
        lab = truth["labels"]
        if np.any(lab == 0):
            assert data.y[lab == 0].mean() < 1
        if np.any(lab == 4):
            assert data.y[lab == 4].mean() > 14

    def test_simulate_deterministic(self):
        spec = io.BinomialSimSpec(n=20)
        a, _ = io.simulate_binomial(spec, np.random.default_rng(5))
        b, _ = io.simulate_binomial(spec, np.random.default_rng(5))
        np.testing.assert_array_equal(a.y, b.y)


class TestWriting:
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_float_roundtrip(self, x):
        assert float(io.format_float(x)) == x

    def test_special_values(self):
        assert io.format_float(float("nan")) == "nan"
        assert io.format_float(-math.inf) == "-inf"
        assert io.format_float(np.int64(3)) == "3"
        assert io.format_float(True) == "1"
        assert io.format_float("abc") == "abc"

    def test_csv(self, tmp_path):
        p = io.write_csv(tmp_path / "o.csv", ["a", "b"], [[1, 0.1], [2, 1e-20]])
        assert p.read_text() == "a,b\n1,0.10000000000000001\n2,9.9999999999999995e-21\n"

    def test_write_failure_is_data_error(self, tmp_path):
        with pytest.raises(DataError):
            io.write_csv(tmp_path / "missing" / "o.csv", ["a"], [])


class TestCli:
    def test_fit_outputs_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_FIT)
        assert cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "r1")]) == 0
        assert cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "r2")]) == 0
        names = sorted(p.name for p in (tmp_path / "r1").iterdir())
        for f in ("binder_partition.csv", "kn_posterior.csv", "m_posterior.csv", "manifest.json",
                  "predictive_grid.csv", "psm.csv", "zeta_posterior.csv"):
            assert f in names
        for f in names:
            if f.endswith(".csv"):
                assert (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes(), f
        m1 = json.loads((tmp_path / "r1" / "manifest.json").read_text())
        m2 = json.loads((tmp_path / "r2" / "manifest.json").read_text())
        assert m1["config_hash"] == m2["config_hash"]
        timing = lambda d: {k: v for k, v in d.items() if not k.endswith("_seconds")}
        assert timing(m1["summary"]) == timing(m2["summary"])
        for key in ("experiment", "seed", "config", "versions", "wall_time_seconds"):
            assert key in m1

    def test_rerun_from_manifest(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_FIT)
        assert cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
        man = tmp_path / "a" / "manifest.json"
        assert cli.main(["fit", "--config", str(man), "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "psm.csv").read_bytes() == (tmp_path / "b" / "psm.csv").read_bytes()

    def test_seed_changes_output(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_FIT)
        cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "a")])
        cli.main(["fit", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "psm.csv").read_bytes() != (tmp_path / "b" / "psm.csv").read_bytes()

    def test_binomial_simulation_fit(self, tmp_path):
        body = dict(SMALL_FIT)
        body["model"] = {"kernel": "binomial", "trials": 15,
                         "prior": [{"family": "jacobi", "alpha": 1.0, "beta": 1.0, "link": "logit"}]}
        body["data"] = {"simulate": {"n": 30}}
        cfg = write_config(tmp_path, body)
        assert cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0

    def test_ensemble_sample(self, tmp_path):
        body = {"experiment": "ensemble-sample",
                "ensemble_sample": {"family": "laguerre", "alpha": 1.0, "M": 4, "n_draws": 3, "n_sweeps": 10}}
        cfg = write_config(tmp_path, body)
        assert cli.main(["ensemble-sample", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        lines = (tmp_path / "o" / "draws.csv").read_text().splitlines()
        assert len(lines) == 1 + 3

    def test_ising_small(self, tmp_path):
        body = {"experiment": "ising",
                "ising": {"sides": [3], "zetas": [0.0, 1.0], "hs": [0.0], "pis": [0.0, 1.0],
                          "n_iter": 20, "n_burnin": 10}}
        cfg = write_config(tmp_path, body)
        assert cli.main(["ising", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        assert len((tmp_path / "o" / "ising.csv").read_text().splitlines()) == 1 + 4

    def test_exit_config_error(self, tmp_path):
        cfg = write_config(tmp_path, {"experiment": "fit", "bogus": 1})
        assert cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_exit_experiment_mismatch(self, tmp_path):
        cfg = write_config(tmp_path, {"experiment": "ising"})
        assert cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_exit_io_error(self, tmp_path):
        body = dict(SMALL_FIT, data={"path": str(tmp_path / "missing.csv")})
        cfg = write_config(tmp_path, body)
        assert cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3

    def test_exit_missing_config(self, tmp_path):
        assert cli.main(["fit", "--config", str(tmp_path / "none.json")]) == 3

    def test_exit_numeric_failure(self, tmp_path):
        # an impossible tolerance makes the validation report a failure
        body = {"experiment": "validate-ensembles",
                "validate_ensembles": {"Ms": [1], "norm_tol": 0.0, "closed_form_tol": 0.0,
                                       "n_chains": 100, "n_sweeps": 5, "moment_M": 1, "max_z": 0.0}}
        cfg = write_config(tmp_path, body)
        assert cli.main(["validate-ensembles", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert (tmp_path / "o" / "manifest.json").exists()

    def test_unknown_experiment_argument(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["train"])
        assert exc.value.code == 2
