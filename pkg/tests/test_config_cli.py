import csv
import json

import numpy as np
import pytest

from bitreset.cli import build_parser, main
from bitreset.config import RunConfig, env_overrides, parse_config, parse_tau_grid, validate
from bitreset.errors import ConfigError


def write_config(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestValidate:
    def test_minimal_fixed_energy(self):
        cfg = validate({"experiment": "fixed-energy-sweep", "N": 100, "mu": 0.1, "beta": 1, "E_max": 10})
        assert (cfg.N, cfg.mu, cfg.beta, cfg.E_max) == (100, 0.1, 1.0, 10.0)
        assert len(cfg.taus()) == 60
        assert cfg.taus()[0] == pytest.approx(0.1) and cfg.taus()[-1] == pytest.approx(1000.0)

    def test_fixed_error(self):
        cfg = validate({"experiment": "fixed-error-sweep", "eps_target": 0.25})
        assert cfg.eps_target == 0.25

    @pytest.mark.parametrize(
        "raw,match",
        [
            ({"tau": -1}, "tau: must be positive"),
            ({"foo": 1}, "foo: unknown key"),
            ({"continuum": {"bogus": 1}}, r"continuum\.bogus: unknown key"),
            ({"region": {"n_E": 1.5}}, r"region\.n_E: expected an integer"),
            ({"N": "100"}, "N: expected a number"),
            ({"mu": True}, "mu: expected a number"),
            ({"eps_target": 0.7}, "eps_target"),
            ({"experiment": "other"}, "experiment: must be one of"),
            ({"tau_grid": [1, 1]}, "strictly increasing"),
            ({"tau_grid": {"min": 1, "max": 10}}, r"tau_grid\.num"),
            ({"p0": [0.5]}, "p0"),
            ({"continuum": {"M": 7}}, r"continuum\.M"),
            ({"continuum": {"taus": [1, -2]}}, r"continuum\.taus\[1\]"),
            ({"throughput": {"eps": 0.5}}, r"throughput\.eps"),
            ({"beta": float("inf")}, "finite"),
        ],
    )
    def test_rejected(self, raw, match):
        with pytest.raises(ConfigError, match=match):
            validate(raw)

    def test_sections_merge_defaults(self):
        cfg = validate({"continuum": {"M": 64}})
        assert cfg.continuum["M"] == 64 and cfg.continuum["a0"] == 4.0

    def test_roundtrip(self):
        cfg = RunConfig()
        assert validate({k: v for k, v in cfg.to_dict().items()}).to_dict() == cfg.to_dict()


class TestSources:
    def test_env(self):
        env = {"BITRESET_MU": "0.2", "BITRESET_TAU_GRID": "[1, 10]", "BITRESET_OUT": "dir", "OTHER": "x"}
        assert env_overrides(env) == {"mu": 0.2, "tau_grid": [1, 10], "out": "dir"}

    def test_env_unknown(self):
        with pytest.raises(ConfigError, match="BITRESET_NOPE"):
            env_overrides({"BITRESET_NOPE": "1"})

    def test_precedence(self, tmp_path):
        path = write_config(tmp_path, {"mu": 0.3, "beta": 2.0, "N": 7})
        cfg = parse_config(path, {"N": 9, "tau": None}, {"BITRESET_MU": "0.4", "BITRESET_N": "8"})
        assert cfg.beta == 2.0 and cfg.mu == 0.4 and cfg.N == 9 and cfg.tau == 100.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(str(tmp_path / "none.json"), environ={})

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{")
        with pytest.raises(ConfigError, match="invalid JSON"):
            parse_config(str(p), environ={})

    def test_tau_grid(self):
        assert parse_tau_grid("0.1:1000:60") == {"min": 0.1, "max": 1000.0, "num": 60}
        assert parse_tau_grid("1,2,5") == [1.0, 2.0, 5.0]
        with pytest.raises(ConfigError):
            parse_tau_grid("a:b")


class TestCLI:
    @pytest.fixture(autouse=True)
    def clean_env(self, monkeypatch):
        for k in list(__import__("os").environ):
            if k.startswith("BITRESET_"):
                monkeypatch.delenv(k)

    def test_help_documents_defaults(self):
        text = build_parser().format_help()
        assert "BITRESET_" in text and "tau_cap=5e4" in text

    def test_run_ok(self, tmp_path):
        assert main(["run", "--out", str(tmp_path), "--N", "20", "--tau", "10", "--workers", "1"]) == 0
        doc = json.loads((tmp_path / "run.json").read_text())
        assert all(set(r) >= {"lhs", "rhs", "slack", "satisfied"} for r in doc["bounds"]["records"])
        rows = read_csv(tmp_path / "trajectory.csv")
        assert rows[0]["P1"] == "0.5"

    def test_hypothesis_violation_exits_one(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"p0": [0.7, 0.3], "N": 10, "tau": 5})
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
        assert "not [1/2, 1/2]" in capsys.readouterr().err

    def test_config_error_exits_one(self, tmp_path, capsys):
        assert main(["run", "--out", str(tmp_path), "--tau", "-1"]) == 1
        assert "tau" in capsys.readouterr().err

    def test_violation_exits_two(self, tmp_path, monkeypatch):
        import bitreset.bounds as bounds

        monkeypatch.setattr(bounds, "ABS_SLACK", -1.0)  # every equality-tight record now fails
        assert main(["run", "--out", str(tmp_path), "--N", "5", "--tau", "5"]) == 2

    def test_sweep_monotone_and_deterministic(self, tmp_path):
        args = ["sweep", "--tau-grid", "0.1:1000:8", "--N", "50", "--out", str(tmp_path)]
        names = ("sweep.csv", "sweep_reports.json")
        assert main(args + ["--workers", "1"]) == 0
        first = [(tmp_path / n).read_bytes() for n in names]
        assert main(args + ["--workers", "2"]) == 0
        assert [(tmp_path / n).read_bytes() for n in names][0] == first[0]
        assert main(args + ["--workers", "1"]) == 0
        assert [(tmp_path / n).read_bytes() for n in names] == first
        W_pn = np.array([float(r["W_pn"]) for r in read_csv(tmp_path / "sweep.csv")])
        assert np.all(np.diff(W_pn) < 0)

    def test_fixed_error_sweep(self, tmp_path):
        argv = ["sweep", "--mode", "fixed-error", "--eps", "0.25", "--tau-grid", "0.1,10,100", "--workers", "1"]
        assert main(argv + ["--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "sweep.csv")
        assert [r["status"] for r in rows] == ["infeasible", "ok", "ok"]

    def test_region_map(self, tmp_path):
        cfg = write_config(tmp_path, {"region": {"n_E": 6, "n_eps": 5}, "tau_cap": 100})
        assert main(["region-map", "--config", cfg, "--out", str(tmp_path), "--workers", "1"]) == 0
        assert len(read_csv(tmp_path / "region_map.csv")) == 30

    def test_continuum_idle(self, tmp_path):
        cfg = write_config(tmp_path, {"continuum": {"idle": True, "M": 32, "taus": [1.0], "snapshots": [0.5]}})
        assert main(["continuum", "--config", cfg, "--out", str(tmp_path)]) == 0
        row = read_csv(tmp_path / "continuum.csv")[0]
        for key in ("W", "W_qs", "W_pn"):
            assert float(row[key]) == 0.0
        assert abs(float(row["Sigma"])) < 1e-8
        assert list(tmp_path.glob("snapshot_*.csv"))

    def test_throughput(self, tmp_path):
        assert main(["throughput", "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "throughput.json").read_text())
        assert abs(doc["identity_lhs"] - doc["identity_rhs"]) < 1e-10

    def test_env_reaches_cli(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BITRESET_N", "3")
        assert main(["run", "--out", str(tmp_path), "--tau", "3"]) == 0
        assert json.loads((tmp_path / "run.json").read_text())["config"]["N"] == 3
