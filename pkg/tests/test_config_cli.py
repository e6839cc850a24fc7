import csv
import json

import numpy as np
import pytest
import yaml

from nrflow import config as config_mod
from nrflow.cli import main
from nrflow.exceptions import ConfigError
from nrflow.runner import dump_trajectory, render_tables, run_matrix
from nrflow.trajectories import TrajectorySpec

SHORT = {"hover_lead": 0.5, "return_hold": 0.5, "total_time": 2.0}
TIMING = ("compute_ms_mean", "compute_ms_std", "compute_ms_max", "compute_ms_total",
          "time_miss_fraction", "deadline_miss_fraction", "csv")


def write(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return str(path)


def base(**extra):
    raw = {"seed": 3, "serial": True, "trajectory": dict(SHORT),
           "matrix": [{"platform": "quad", "controller": "NR", "trajectory": "CircleA"}]}
    raw.update(extra)
    return raw


def untimed(summary):
    return [{k: v for k, v in e.items() if k not in TIMING} for e in summary["episodes"]]


class TestResolve:
    def test_single_entry(self):
        cfg = config_mod.resolve(base(), env={})
        assert len(cfg.entries) == 1
        e = cfg.entries[0]
        assert e.key == ("quad", "NR", "CircleA") and e.error is None
        assert e.trajectory["total_time"] == 2.0
        assert e.settings["alpha"] == 10

    def test_all_expands_per_platform(self):
        raw = base(matrix=[{"platform": "blimp", "controller": "FBL", "trajectory": "all"},
                           {"platform": "quad", "controller": "NR", "trajectory": "all"}])
        cfg = config_mod.resolve(raw, env={})
        assert sum(e.platform == "blimp" for e in cfg.entries) == 8
        assert sum(e.platform == "quad" for e in cfg.entries) == 10

    @pytest.mark.parametrize("entry, key", [
        ({"platform": "quad", "controller": "FBL"}, "matrix[0].controller"),
        ({"platform": "mars", "controller": "NR"}, "matrix[0].platform"),
        ({"platform": "quad", "controller": "NR", "repetitions": 0}, "matrix[0].repetitions"),
        ({"platform": "blimp", "controller": "NR", "trajectory": "PolylineA"},
         "matrix[0].trajectory"),
        ({"platform": "quad", "controller": "NR", "overrides": {"controller": {"beta": 1}}},
         "matrix[0].overrides.controller.beta"),
        ({"platform": "quad", "controller": "NR", "overrides": {"controller": {"alpha": 0.5}}},
         "matrix[0].controller"),
        ({"platform": "quad", "controller": "NMPC", "overrides": {"episode": {"rate": 1}}},
         "matrix[0].episode.rate"),
    ])
    def test_entry_errors_name_the_key(self, entry, key):
        cfg = config_mod.resolve(base(matrix=[entry]), env={})
        assert cfg.entries[0].error.startswith(key)

    @pytest.mark.parametrize("raw, key", [
        ({"matrix": []}, "matrix"),
        ({"matrix": [{}], "colour": 1}, "config.colour"),
        ({"matrix": [{}], "trajectory": {"kind": "CircleA"}}, "trajectory.kind"),
        ({"matrix": [{}], "platforms": {"quad": {"FBL": {}}}}, "platforms.quad.FBL"),
        ({"matrix": [{}], "tuning": {"T_grid": []}}, "tuning.T_grid"),
    ])
    def test_structural_errors(self, raw, key):
        with pytest.raises(ConfigError, match="^" + key.replace(".", r"\.")):
            config_mod.resolve(raw, env={})

    def test_environment_overrides(self):
        env = {config_mod.ENV_OUT_DIR: "/tmp/elsewhere", config_mod.ENV_SERIAL: "0"}
        cfg = config_mod.resolve(base(out_dir="here"), env=env)
        assert cfg.out_dir == "/tmp/elsewhere" and cfg.serial is False
        cfg = config_mod.resolve(base(), out_dir="cli", serial=True, env=env)
        assert cfg.out_dir == "cli" and cfg.serial is True

    def test_platform_blocks_merge(self):
        raw = base(platforms={"quad": {"NR": {"alpha": 12, "predictor": {"T": 0.5}}}})
        e = config_mod.resolve(raw, env={}).entries[0]
        assert e.settings["alpha"] == 12 and e.settings["predictor"]["T"] == 0.5
        assert e.settings["predictor"]["n_steps"] == 8

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("matrix: [unclosed\n")
        with pytest.raises(ConfigError, match="malformed YAML"):
            config_mod.read(str(path))


class TestRunner:
    def test_single_entry_run(self, tmp_path):
        cfg = config_mod.resolve(base(), env={})
        summary, code = run_matrix(cfg, str(tmp_path))
        assert code == 0
        assert [p.name for p in (tmp_path / "logs").iterdir()] == ["quad_NR_CircleA_rep0.csv"]
        assert json.loads((tmp_path / "summary.json").read_text())["cells"][0]["rmse"] > 0
        assert (tmp_path / "resolved_config.yaml").exists()

    def test_repetitions_average(self, tmp_path):
        raw = base(matrix=[{"platform": "quad", "controller": "NR", "trajectory": "CircleA",
                            "repetitions": 3}])
        raw["platforms"] = {"quad": {"episode": {"noise": [1e-3] * 9}}}
        summary, _ = run_matrix(config_mod.resolve(raw, env={}), str(tmp_path))
        assert len(list((tmp_path / "logs").iterdir())) == 3
        assert [e["seed"] for e in summary["episodes"]] == [3, 4, 5]
        vals = [e["rmse"] for e in summary["episodes"]]
        assert summary["cells"][0]["rmse"] == pytest.approx(np.mean(vals))

    def test_resolved_config_round_trip(self, tmp_path):
        first, _ = run_matrix(config_mod.resolve(base(), env={}), str(tmp_path / "a"))
        again = config_mod.load(str(tmp_path / "a" / "resolved_config.yaml"), env={})
        second, _ = run_matrix(again, str(tmp_path / "b"))
        assert untimed(first) == untimed(second)

    def test_table_completeness(self, tmp_path):
        raw = base(matrix=[{"platform": "blimp", "controller": c, "trajectory": ["CircleA",
                                                                                 "HelixA"]}
                           for c in ("NR", "FBL")])
        summary, _ = run_matrix(config_mod.resolve(raw, env={}), str(tmp_path))
        text = (tmp_path / "tables.txt").read_text()
        assert text.count("blimp:") == 3
        for line in text.splitlines():
            if line.startswith(("CircleA", "HelixA")):
                cells = [c.strip() for c in line.split("|")]
                assert cells[1] != "-" and cells[2] == "-" and cells[3] != "-"
        assert "±" in text

    def test_diverged_cell_renders_dash(self, tmp_path):
        raw = base(matrix=[{"platform": "quad", "controller": "NR", "trajectory": "CircleC",
                            "overrides": {"controller": {"alpha": 5, "predictor": {"T": 0.3}},
                                          "trajectory": {"total_time": None,
                                                         "hover_lead": 1.0,
                                                         "return_hold": 0.0}}}])
        summary, _ = run_matrix(config_mod.resolve(raw, env={}), str(tmp_path))
        cell = summary["cells"][0]
        assert cell["crashed"] and cell["rmse_clipped"] is None
        row = [l for l in render_tables(summary["cells"]).splitlines()
               if l.startswith("CircleC")][0]
        assert row.split("|")[1].strip() == "-"

    def test_config_error_cell(self, tmp_path):
        raw = base(matrix=[{"platform": "quad", "controller": "NR", "trajectory": "CircleA"},
                           {"platform": "quad", "controller": "FBL", "trajectory": "CircleA"}])
        summary, code = run_matrix(config_mod.resolve(raw, env={}), str(tmp_path))
        assert code == 2 and len(summary["episodes"]) == 1
        assert summary["config_errors"][0].startswith("matrix[1].controller")


class TestDumpTrajectory:
    def read(self, path):
        with open(path) as fh:
            rows = list(csv.reader(fh))
        return rows[0], np.array([[float(v) for i, v in enumerate(r) if i != 1]
                                  for r in rows[1:]])

    def test_row_count_and_header(self, tmp_path):
        spec = TrajectorySpec("HelixB")
        assert dump_trajectory(spec, 50.0, tmp_path / "t.csv") == 1501
        header, data = self.read(tmp_path / "t.csv")
        assert header[:3] == ["t", "phase", "r0"] and header[-1] == "r_ddot3"
        assert data.shape == (1501, 13)

    def test_hover_only_rows_are_constant(self, tmp_path):
        spec = TrajectorySpec("CircleA", hover_lead=3.0, return_hold=0.0, total_time=3.0)
        dump_trajectory(spec, 10.0, tmp_path / "t.csv")
        _, data = self.read(tmp_path / "t.csv")
        np.testing.assert_array_equal(data[:-1, 1:], np.tile(data[0, 1:], (30, 1)))

    def test_circle_periodic(self, tmp_path):
        dump_trajectory(TrajectorySpec("CircleA"), 20.0, tmp_path / "t.csv")
        _, data = self.read(tmp_path / "t.csv")
        # active rows at 5 s and 15 s are one period apart
        np.testing.assert_allclose(data[100, 1:], data[300, 1:], atol=1e-12)

    @pytest.mark.parametrize("rate", [0.0, -1.0, 0.33])
    def test_bad_rate(self, tmp_path, rate):
        with pytest.raises(ConfigError, match="^rate"):
            dump_trajectory(TrajectorySpec("CircleA"), rate, tmp_path / "t.csv")


class TestCLI:
    def test_run(self, tmp_path, capsys):
        path = write(tmp_path, base())
        assert main(["run", "--config", path, "--out", str(tmp_path / "out")]) == 0
        assert "quad: Clipped RMSE" in capsys.readouterr().out

    def test_run_config_error_exit(self, tmp_path, capsys):
        path = write(tmp_path, base(matrix=[{"platform": "quad", "controller": "FBL"}]))
        assert main(["run", "--config", path, "--out", str(tmp_path / "out")]) == 2
        assert "matrix[0].controller" in capsys.readouterr().err

    def test_missing_config_exit(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "none.yaml")]) == 2

    def test_dump_trajectory(self, tmp_path, capsys):
        out = tmp_path / "t.csv"
        assert main(["dump-trajectory", "--kind", "LemniscateA", "--rate", "10",
                     "--total-time", "12", "--out", str(out)]) == 0
        assert "wrote 121 rows" in capsys.readouterr().out

    def test_sweep_tuning(self, tmp_path, capsys):
        raw = {"trajectory": dict(SHORT),
               "matrix": [{"platform": "quad", "controller": "NR"}],
               "tuning": {"platform": "quad", "trajectory": "CircleA",
                          "T_grid": [0.5, 0.8], "alpha_grid": [5, 10]}}
        path = write(tmp_path, raw)
        assert main(["sweep-tuning", "--config", path, "--out", str(tmp_path / "o")]) == 0
        out = json.loads((tmp_path / "o" / "tuning.json").read_text())
        assert 2 <= len(out["points"]) <= 4
        assert out["selected"]["stable"]
        assert "selected: T =" in capsys.readouterr().out


@pytest.mark.parametrize("name", ["demo.yaml", "full.yaml"])
def test_shipped_configs_resolve(name):
    import pathlib

    path = pathlib.Path(__file__).resolve().parents[1] / "configs" / name
    cfg = config_mod.load(str(path), env={})
    assert cfg.entries and all(e.error is None for e in cfg.entries)
