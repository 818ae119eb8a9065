import json
import os

import pytest
from click.testing import CliRunner

from intermittency_lab.cli import ENV_WORKERS, main

SMALL = {
    "mesh_size": 1024,
    "y_mesh_size": 256,
    "n_max": 256,
}


@pytest.fixture()
def runner():
    return CliRunner()


def write_config(tmp_path, name, extra):
    cfg = dict(SMALL)
    cfg.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


class TestOrbit:
    def test_writes_samples_and_manifest(self, runner, tmp_path):
        out = tmp_path / "run"
        res = runner.invoke(
            main, ["orbit", "--out", str(out), "--steps", "100", "--x0", "0.6"]
        )
        assert res.exit_code == 0, res.output
        lines = (out / "orbit.csv").read_text().splitlines()
        assert lines[0] == "step,x"
        assert len(lines) == 101
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "orbit"
        assert manifest["config"]["steps"] == 100

    def test_stride(self, runner, tmp_path):
        out = tmp_path / "run"
        res = runner.invoke(
            main, ["orbit", "--out", str(out), "--steps", "100", "--stride", "10"]
        )
        assert res.exit_code == 0
        lines = (out / "orbit.csv").read_text().splitlines()
        assert len(lines) == 11
        assert lines[1].split(",")[0] == "10"

    def test_bad_start_exits_2(self, runner, tmp_path):
        res = runner.invoke(
            main, ["orbit", "--out", str(tmp_path / "o"), "--x0", "1.5"]
        )
        assert res.exit_code == 2


class TestConfigHandling:
    def test_bad_alpha_exits_2(self, runner, tmp_path):
        res = runner.invoke(
            main, ["density", "--out", str(tmp_path / "o"), "--alpha", "1.5"]
        )
        assert res.exit_code == 2

    def test_unknown_key_exits_2(self, runner, tmp_path):
        cfg = write_config(tmp_path, "cfg.json", {"mesh_siez": 64})
        res = runner.invoke(
            main, ["density", "--out", str(tmp_path / "o"), "--config", cfg]
        )
        assert res.exit_code == 2
        assert "unknown config key" in res.output

    def test_missing_config_exits_2(self, runner, tmp_path):
        res = runner.invoke(
            main,
            ["density", "--out", str(tmp_path / "o"), "--config",
             str(tmp_path / "nope.json")],
        )
        assert res.exit_code == 2

    def test_malformed_json_exits_2(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        res = runner.invoke(
            main, ["density", "--out", str(tmp_path / "o"), "--config", str(path)]
        )
        assert res.exit_code == 2

    def test_env_worker_fallback(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv(ENV_WORKERS, "2")
        cfg = write_config(tmp_path, "cfg.json", {})
        out = tmp_path / "o"
        res = runner.invoke(main, ["density", "--out", str(out), "--config", cfg])
        assert res.exit_code == 0, res.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["workers"] == 2

    def test_bad_env_worker_exits_2(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv(ENV_WORKERS, "many")
        res = runner.invoke(main, ["density", "--out", str(tmp_path / "o")])
        assert res.exit_code == 2


class TestDensity:
    def test_outputs(self, runner, tmp_path):
        cfg = write_config(tmp_path, "cfg.json", {})
        out = tmp_path / "o"
        res = runner.invoke(main, ["density", "--out", str(out), "--config", cfg])
        assert res.exit_code == 0, res.output
        summary = json.loads((out / "density_summary.json").read_text())
        assert summary["mass"] == pytest.approx(1.0, abs=1e-10)
        assert 0.3 < summary["mu_Y"] < 0.4
        lines = (out / "density.csv").read_text().splitlines()
        assert len(lines) == SMALL["mesh_size"] + 1

    def test_rerun_byte_identical(self, runner, tmp_path):
        cfg = write_config(tmp_path, "cfg.json", {"seed": 7})
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            res = runner.invoke(main, ["density", "--out", str(out), "--config", cfg])
            assert res.exit_code == 0
            outputs.append(
                ((out / "density.csv").read_bytes(),
                 (out / "density_summary.json").read_bytes(),
                 (out / "manifest.json").read_bytes())
            )
        assert outputs[0] == outputs[1]


class TestRenewal:
    def test_outputs(self, runner, tmp_path):
        cfg = write_config(
            tmp_path, "cfg.json",
            {"kac_terms": 256, "c_n_max": 64, "residual_n_max": 32},
        )
        out = tmp_path / "o"
        res = runner.invoke(main, ["renewal", "--out", str(out), "--config", cfg])
        assert res.exit_code == 0, res.output
        summary = json.loads((out / "renewal_summary.json").read_text())
        assert summary["gamma_hat"] * summary["mu_Y"] == pytest.approx(1.0, abs=1e-12)
        assert 0.8 < summary["kac_total"] <= 1.01
        lines = (out / "renewal.csv").read_text().splitlines()
        assert len(lines) == 257
        assert lines[0] == "n,leb_In,mu_In,kac_partial,c_n_hat,residual_bound_stat"


class TestBc:
    def test_hits_and_criterion(self, runner, tmp_path):
        cfg = write_config(
            tmp_path, "cfg.json",
            {
                "orbits": 10,
                "horizon": 2000,
                "burn_in": 100,
                "checkpoints": [1000, 2000],
                "band": 64,
                "criterion_horizons": [200, 400],
                "run_criterion": True,
            },
        )
        out = tmp_path / "o"
        res = runner.invoke(main, ["bc", "--out", str(out), "--config", cfg])
        assert res.exit_code == 0, res.output
        hits = (out / "hits.csv").read_text().splitlines()
        assert len(hits) == 1 + 10 * 2
        crit = (out / "criterion.csv").read_text().splitlines()
        assert crit[0] == "n,numerator,denominator,ratio"
        assert len(crit) == 3
        ratio = float(crit[-1].split(",")[-1])
        assert 0.0 < ratio < 1.0

    def test_kind_override_recorded(self, runner, tmp_path):
        cfg = write_config(
            tmp_path, "cfg.json",
            {"orbits": 3, "horizon": 500, "burn_in": 10, "checkpoints": [500]},
        )
        out = tmp_path / "o"
        res = runner.invoke(
            main, ["bc", "--out", str(out), "--config", cfg, "--kind", "nested"]
        )
        assert res.exit_code == 0, res.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["schedule"]["kind"] == "nested"

    def test_rerun_byte_identical_across_worker_counts(self, runner, tmp_path):
        base = {
            "orbits": 8, "horizon": 1000, "burn_in": 50, "checkpoints": [1000],
            "seed": 3,
        }
        digests = []
        for name, workers in (("a", 1), ("b", 4)):
            cfg = write_config(tmp_path, f"cfg_{name}.json", dict(base, workers=workers))
            out = tmp_path / name
            res = runner.invoke(main, ["bc", "--out", str(out), "--config", cfg])
            assert res.exit_code == 0, res.output
            digests.append((out / "hits.csv").read_bytes())
        assert digests[0] == digests[1]
