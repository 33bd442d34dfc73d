import csv
import json

import pytest
import yaml

from elephant_cl import cli

SMALL = {
    "experiment": "sine_stream",
    "model": {"m": 30, "activation": {"kind": "elephant", "a": 0.1, "d": 8}, "sigma_bias": 0.64},
    "optimizer": {"lr": 1e-3},
    "E": 1,
    "sine": {"n_train": 20, "n_test": 50},
}


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


class TestRun:
    def test_outputs(self, cfg_path, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(["run", "sine_stream", "--config", str(cfg_path), "--out", str(out), "--seeds", "2"]) == 0
        assert (out / "seed0_metrics.csv").exists() and (out / "seed1_metrics.csv").exists()
        rows = list(csv.DictReader(open(out / "aggregate.csv")))
        assert len(rows) == 1 and rows[0]["n_seeds"] == "2"
        snap = yaml.safe_load((out / "config.resolved.yaml").read_text())
        assert snap["seeds"] == [0, 1] and snap["model"]["m"] == 30
        assert "mean=" in capsys.readouterr().out

    def test_set_override_lands_in_snapshot(self, cfg_path, tmp_path):
        out = tmp_path / "o"
        cli.main(["run", "sine_stream", "--config", str(cfg_path), "--out", str(out), "--set", "optimizer.lr=5e-4"])
        assert yaml.safe_load((out / "config.resolved.yaml").read_text())["optimizer"]["lr"] == 5e-4

    def test_bad_key_is_reported(self, cfg_path, tmp_path, capsys):
        code = cli.main(["run", "sine_stream", "--config", str(cfg_path), "--out", str(tmp_path), "--set", "model.widht=3"])
        assert code == 2
        assert "model.widht" in capsys.readouterr().err

    def test_reruns_byte_identical(self, cfg_path, tmp_path):
        for name in ("a", "b"):
            cli.main(["run", "sine_stream", "--config", str(cfg_path), "--out", str(tmp_path / name)])
        assert (tmp_path / "a" / "seed0_metrics.csv").read_bytes() == (tmp_path / "b" / "seed0_metrics.csv").read_bytes()

    def test_sparsity_table(self, tmp_path):
        out = tmp_path / "sp"
        cli.main(["run", "sparsity_table", "--out", str(out), "--set", "sparsity.grid_points=20001",
                  "--set", "sparsity.C=100"])
        rows = {r["activation"]: r for r in csv.DictReader(open(out / "sparsity.csv"))}
        assert set(rows) == {"relu", "sigmoid", "tanh", "elu", "elephant", "rect"}
        assert float(rows["relu"]["function_sparsity"]) == pytest.approx(0.5, abs=0.01)

    def test_ntk_profile_files(self, cfg_path, tmp_path):
        out = tmp_path / "ntk"
        cli.main(["run", "ntk_profile", "--config", str(cfg_path), "--out", str(out),
                  "--set", "ntk.profile_steps=[10, 20]", "--set", "ntk.grid_points=11"])
        assert (out / "seed0_ntk_step10.csv").exists() and (out / "seed0_ntk_step20.csv").exists()
        assert (out / "seed0_metrics.csv").exists()

    def test_edit_files(self, cfg_path, tmp_path):
        out = tmp_path / "edit"
        cli.main(["run", "edit", "--config", str(cfg_path), "--out", str(out), "--set", "edit.pretrain_epochs=3"])
        summary = json.loads((out / "seed0_edit_summary.json").read_text())
        assert {"inside_max", "outside_max", "steps", "converged"} <= set(summary)
        assert (out / "seed0_edit.csv").read_text().startswith("x,before,after,delta")

    def test_missing_mnist_is_clean_error(self, tmp_path, capsys):
        code = cli.main(["run", "split_mnist", "--out", str(tmp_path), "--set", f"mnist.data_root={tmp_path}",
                         "--set", "model.n=784", "--set", "model.o=10"])
        assert code == 2
        assert "MNIST" in capsys.readouterr().err


class TestSweep:
    def test_grid_expansion(self):
        pts = cli.expand_grid({"b": [1, 2], "a": [3]})
        assert pts == [(("a", 3), ("b", 1)), (("a", 3), ("b", 2))]
        with pytest.raises(Exception):
            cli.expand_grid({})

    def test_sweep_picks_lowest_mse(self, cfg_path, tmp_path):
        grid = tmp_path / "grid.yaml"
        grid.write_text(yaml.safe_dump({"optimizer.lr": [1e-6, 1e-2]}))
        out = tmp_path / "sw"
        assert cli.main(["sweep", "--config", str(cfg_path), "--grid", str(grid), "--out", str(out)]) == 0
        summary = json.loads((out / "sweep_summary.json").read_text())
        assert summary["criterion"] == "min" and len(summary["points"]) == 2
        finals = {p["overrides"]["optimizer.lr"]: p["finals"][0] for p in summary["points"]}
        assert summary["best"]["overrides"]["optimizer.lr"] == min(finals, key=finals.get)
        rows = list(csv.DictReader(open(out / "aggregate.csv")))
        assert len(rows) == 2

    def test_sweep_rejects_bad_grid_key_before_running(self, cfg_path, tmp_path, capsys):
        grid = tmp_path / "grid.yaml"
        grid.write_text(yaml.safe_dump({"optimizer.rate": [1]}))
        assert cli.main(["sweep", "--config", str(cfg_path), "--grid", str(grid), "--out", str(tmp_path / "x")]) == 2
        assert not (tmp_path / "x").exists()

    def test_parallel_jobs_match_serial(self, cfg_path, tmp_path):
        grid = tmp_path / "grid.yaml"
        grid.write_text(yaml.safe_dump({"optimizer.lr": [1e-3, 3e-3]}))
        cli.main(["sweep", "--config", str(cfg_path), "--grid", str(grid), "--out", str(tmp_path / "s1")])
        cli.main(["sweep", "--config", str(cfg_path), "--grid", str(grid), "--out", str(tmp_path / "s2"), "--jobs", "2"])
        assert (tmp_path / "s1" / "aggregate.csv").read_bytes() == (tmp_path / "s2" / "aggregate.csv").read_bytes()
