import csv
import json

import numpy as np
import pytest
import yaml

from flmarket.cli import main
from flmarket.config import RunConfig
from flmarket.experiment import (
    bootstrap_history,
    emit_plots,
    market_csv_header,
    run_experiment,
    summary_csv_header,
)
from flmarket.market import ConfigurationError, generate_do_pool


def small_config(seed=7, out="out", **kw):
    defaults = dict(
        master_seed=seed,
        pool_size=20,
        bootstrap_rounds=8,
        estimator_epochs=800,
        local_epochs=20,
        output_dir=out,
    )
    defaults.update(kw)
    return RunConfig(**defaults)


class TestBootstrap:
    def test_zero_rounds_fails_closed(self, tmp_path):
        cfg = small_config(out=str(tmp_path), bootstrap_rounds=0)
        pool = generate_do_pool(cfg.pool_size, cfg.sample_range, 1)
        with pytest.raises(ConfigurationError, match="bootstrap_rounds"):
            bootstrap_history(cfg, pool, np.random.default_rng(0))

    def test_calibration_is_finite(self, tmp_path):
        cfg = small_config(out=str(tmp_path))
        pool = generate_do_pool(cfg.pool_size, cfg.sample_range, 1)
        cal = bootstrap_history(cfg, pool, np.random.default_rng(0))
        for name in ("fbs", "fbc"):
            assert cal[name].win_model.c > 0
            assert np.isfinite(cal[name].win_model.c)
            assert cal[name].lambda_solution.lam >= 0
            assert np.all(np.isfinite(cal[name].theta))

    def test_reproducible(self, tmp_path):
        cfg = small_config(out=str(tmp_path))
        pool = generate_do_pool(cfg.pool_size, cfg.sample_range, 1)
        a = bootstrap_history(cfg, pool, np.random.default_rng(5))
        b = bootstrap_history(cfg, pool, np.random.default_rng(5))
        for name in a:
            if a[name].theta is not None:
                np.testing.assert_array_equal(a[name].theta, b[name].theta)
            if a[name].win_model is not None:
                assert a[name].win_model == b[name].win_model
                assert a[name].lambda_solution.lam == b[name].lambda_solution.lam


class TestRunExperiment:
    def test_summary_schema(self, tmp_path):
        art = run_experiment(small_config(out=str(tmp_path)))
        with open(art.summary_csv) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == summary_csv_header("iid")
        assert rows[0] == [
            "agent", "strategy", "budget", "total_samples",
            "unit_price", "spend", "accuracy_iid",
        ]
        assert len(rows) == 7

    def test_market_schema(self, tmp_path):
        art = run_experiment(small_config(out=str(tmp_path), train_fl=False))
        with open(art.market_csv) as fh:
            rows = list(csv.reader(fh))
        names = [a.name for a in art.config.agents]
        assert rows[0] == market_csv_header(names)
        assert len(rows) == 1 + art.config.pool_size

    def test_spend_within_budget(self, tmp_path):
        art = run_experiment(small_config(out=str(tmp_path), train_fl=False))
        with open(art.summary_csv) as fh:
            for row in csv.DictReader(fh):
                assert float(row["spend"]) <= float(row["budget"]) + 1e-12

    def test_unit_price_recomputable_from_market_csv(self, tmp_path):
        art = run_experiment(small_config(out=str(tmp_path), train_fl=False))
        spend = {}
        samples = {}
        with open(art.market_csv) as fh:
            for row in csv.DictReader(fh):
                if row["winner"]:
                    spend[row["winner"]] = spend.get(row["winner"], 0.0) + float(
                        row["clearing_price"]
                    )
                    samples[row["winner"]] = samples.get(row["winner"], 0) + int(
                        row["num_samples"]
                    )
        with open(art.summary_csv) as fh:
            for row in csv.DictReader(fh):
                if row["unit_price"]:
                    recomputed = spend[row["agent"]] / (samples[row["agent"]] / 1000.0)
                    assert abs(float(row["unit_price"]) - recomputed) <= 1e-9

    def test_byte_identical_reruns(self, tmp_path):
        a = run_experiment(small_config(out=str(tmp_path / "a")))
        b = run_experiment(small_config(out=str(tmp_path / "b")))
        assert a.market_csv.read_bytes() == b.market_csv.read_bytes()
        assert a.summary_csv.read_bytes() == b.summary_csv.read_bytes()
        assert a.calibration_report.read_bytes() == b.calibration_report.read_bytes()

    def test_calibration_report_contents(self, tmp_path):
        art = run_experiment(small_config(out=str(tmp_path), train_fl=False))
        report = json.loads(art.calibration_report.read_text())
        assert report["budget_scale"] == 0.01
        for name in ("fbs", "fbc"):
            entry = report["agents"][name]
            assert entry["c"] > 0
            assert entry["lambda"] >= 0
            assert "estimator_final_loss" in entry


class TestCli:
    def _write_cfg(self, tmp_path, **kw):
        mapping = dict(
            master_seed=3, pool_size=15, bootstrap_rounds=6,
            estimator_epochs=500, local_epochs=10, train_fl=False,
        )
        mapping.update(kw)
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(mapping))
        return path

    def test_run_command(self, tmp_path, capsys):
        cfg = self._write_cfg(tmp_path)
        rc = main(["--out", str(tmp_path / "out"), "run", str(cfg)])
        assert rc == 0
        assert (tmp_path / "out" / "summary_seed3.csv").exists()

    def test_seed_override(self, tmp_path):
        cfg = self._write_cfg(tmp_path)
        rc = main(["--seed", "11", "--out", str(tmp_path / "out"), "run", str(cfg)])
        assert rc == 0
        assert (tmp_path / "out" / "summary_seed11.csv").exists()

    def test_bad_config_is_reported(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("budgt: 1\n")
        rc = main(["run", str(path)])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_sweep(self, tmp_path):
        self._write_cfg(tmp_path)
        rc = main(["--out", str(tmp_path / "sweep_out"), "sweep", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "sweep_out" / "cfg" / "summary_seed3.csv").exists()

    def test_plot_command(self, tmp_path):
        cfg = self._write_cfg(tmp_path)
        out = tmp_path / "out"
        assert main(["--out", str(out), "run", str(cfg)]) == 0
        assert main(["plot", str(out)]) == 0
        assert list(out.glob("*.png"))


class TestPlots:
    def test_charts_per_metric(self, tmp_path):
        art = run_experiment(small_config(out=str(tmp_path), train_fl=False))
        written = emit_plots(tmp_path)
        names = [p.name for p in written]
        assert any(n.startswith("total_samples") for n in names)
        assert any(n.startswith("unit_price") for n in names)
        assert all("seed7" in n for n in names)

    def test_empty_dir_notice(self, tmp_path, capsys):
        assert emit_plots(tmp_path) == []
        assert "no summary rows" in capsys.readouterr().out
