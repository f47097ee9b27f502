import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from twowall.cli import main, run
from twowall.config import ConfigError, RunConfig, dump_config, load_config, parse_config

ROOT = Path(__file__).resolve().parents[1]

MINIMAL = """
grid: {nx: 32, nt: 128, T: 0.25}
walls: {kind: constant, params: {lower: -0.1, upper: 0.1}}
coefficients:
  sigma: {kind: constant, params: {value: 0.5}}
  L: 0.0
  M_sigma: 0.5
  sigma_min: 0.5
"""


def config_with(tmp_path, **sections):
    doc = yaml.safe_load(MINIMAL)
    doc["output"] = {"directory": str(tmp_path / "out")}
    for key, value in sections.items():
        doc[key] = value
    return parse_config(doc)


def write_config(tmp_path, doc) -> str:
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc) if isinstance(doc, dict) else doc)
    return str(path)


class TestParseConfig:
    def test_defaults_and_round_trip(self):
        cfg = parse_config(MINIMAL)
        doc = cfg.to_document()
        assert doc["penalty"] == {"variant": "hard", "epsilon": 1e-2, "delta": 1e-2}
        assert doc["observation"]["t0"] == 0.25
        assert doc["coefficients"]["f"] == {"kind": "constant", "params": {"value": 0.0}}
        assert doc["walls"]["params"] == {"lower": -0.1, "upper": 0.1}
        again = parse_config(dump_config(cfg))
        assert again.to_document() == doc
        assert dump_config(again) == dump_config(cfg)

    def test_echo_spells_out_catalog_defaults(self):
        doc = parse_config({"walls": {"kind": "affine"}}).to_document()
        assert doc["walls"]["params"] == {"lower": -1.0, "lower_slope": 0.0, "upper": 1.0,
                                          "upper_slope": 0.0}
        assert doc["initial"] == {"kind": "zero", "params": {}}

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError) as err:
            parse_config({"penalty": {"epsilonn": 0.1}})
        assert err.value.errors == ["penalty.epsilonn: unknown key"]

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="solver: unknown key"):
            parse_config({"solver": {}})

    def test_negative_epsilon(self):
        with pytest.raises(ConfigError, match="penalty.epsilon"):
            parse_config({"penalty": {"epsilon": -0.1}})

    def test_type_mismatch(self):
        with pytest.raises(ConfigError, match="grid.nx"):
            parse_config({"grid": {"nx": "many"}})

    def test_catalog_parameter_named(self):
        with pytest.raises(ConfigError, match="walls.params: unknown parameter 'lowr'"):
            parse_config({"walls": {"kind": "constant", "params": {"lowr": -1}}})

    def test_constraints(self):
        for doc in ({"observation": {"t0": 1.0}}, {"grid": {"nx": 3}},
                    {"sweep": {"deltas": [1e-3, 1e-2]}}, {"ensemble": {"N": 10}},
                    {"output": {"formats": ["xml"]}}, {"observation": {"x0": 1.0}}):
            with pytest.raises(ConfigError):
                parse_config(doc)

    def test_not_a_mapping(self):
        with pytest.raises(ConfigError):
            parse_config("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            parse_config("grid: [unclosed")

    def test_empty_document_is_all_defaults(self):
        assert parse_config("").to_document() == RunConfig().to_document()

    def test_snapping_reported(self):
        cfg = parse_config({"grid": {"nx": 64, "nt": 512, "T": 0.25},
                            "observation": {"x0": 0.507, "t0": 0.2001}})
        obs = cfg.observation_indices()
        assert obs["x0_index"] == 32 and obs["x0"] == 0.5
        assert obs["x0_snap_distance"] == pytest.approx(0.007)
        assert obs["t0_index"] == 410
        assert obs["t0_snap_distance"] == pytest.approx(abs(410 * 0.25 / 512 - 0.2001))

    @pytest.mark.parametrize("name", ["constant_walls.yaml", "smooth_gap1.yaml"])
    def test_shipped_configs_parse(self, name):
        cfg = load_config(ROOT / "configs" / name)
        assert cfg.solver_config().grid.nx == 64


class TestRun:
    def test_validate_constant_walls(self, tmp_path):
        report = run("validate", config_with(tmp_path))
        assert report["headline"]["ok"] is True
        statuses = {k: v["status"] for k, v in report["hypotheses"]["checks"].items()}
        assert set(statuses) >= {"H1", "H2", "H3", "H4", "F", "boundary", "sigma_positive"}
        assert all(s == "pass" for s in statuses.values())

    def test_solve_twice_same_checksums(self, tmp_path):
        cfg = config_with(tmp_path)
        a = run("solve", cfg, seed=4, out_dir=tmp_path / "a")
        b = run("solve", cfg, seed=4, out_dir=tmp_path / "b")
        assert [e["path"] for e in a["manifest"]] == ["u.csv", "eta.csv", "xi.csv",
                                                      "solve_summary.json"]
        assert a["manifest"] == b["manifest"]
        c = run("solve", cfg, seed=5, out_dir=tmp_path / "c")
        assert c["manifest"][0]["sha256"] != a["manifest"][0]["sha256"]

    def test_density_manifest(self, tmp_path):
        cfg = config_with(tmp_path, ensemble={"N": 1000, "base_seed": 2},
                          observation={"x0": 0.5, "a": 0.02, "b": 0.02})
        report = run("density", cfg)
        names = {e["path"] for e in report["manifest"]}
        assert names == {"samples.csv", "density.csv", "summary.json"}
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["N"] == 1000 and summary["schema_version"] == 1
        assert len(summary["atom_masses"]) == 3
        assert summary["bandwidth"] > 0
        on_disk = json.loads((tmp_path / "out" / "report.json").read_text())
        assert on_disk["manifest"] == report["manifest"]
        assert "wall_seconds" in on_disk["timings"]

    def test_sweep_and_malliavin(self, tmp_path):
        cfg = config_with(tmp_path, penalty={"variant": "smooth"})
        sw = run("sweep", cfg, out_dir=tmp_path / "s")
        assert {e["path"] for e in sw["manifest"]} == {"sweep.csv", "sweep_summary.json"}
        ml = run("malliavin", cfg, source=(10, 20), out_dir=tmp_path / "m")
        assert {e["path"] for e in ml["manifest"]} == {"variation_j10_m20.csv",
                                                       "dominating_j10_m20.csv",
                                                       "malliavin_summary.json"}
        assert ml["headline"]["min_D"] >= -1e-10

    def test_csv_headers_carry_units(self, tmp_path):
        run("solve", config_with(tmp_path), seed=0)
        header = (tmp_path / "out" / "u.csv").read_text().splitlines()[0].split(",")
        assert header[:3] == ["n", "t[time]", "u(x=0.000000)[field]"]
        header = (tmp_path / "out" / "eta.csv").read_text().splitlines()[0].split(",")
        assert header[1] == "t_end[time]"

    def test_json_only(self, tmp_path):
        cfg = config_with(tmp_path, output={"directory": str(tmp_path / "j"), "formats": ["json"]})
        report = run("solve", cfg)
        assert [e["path"] for e in report["manifest"]] == ["solve_summary.json"]

    def test_refuses_invalid_walls(self, tmp_path):
        cfg = config_with(tmp_path, walls={"kind": "affine",
                                           "params": {"lower": -0.1, "lower_slope": 2.0,
                                                      "upper": 0.1}})
        with pytest.raises(RuntimeError, match="H1"):
            run("solve", cfg)

    def test_error_context(self, tmp_path):
        with pytest.raises(RuntimeError, match=r"malliavin failed \(seed=0, source=\(99, 0\)\)"):
            run("malliavin", config_with(tmp_path), source=(99, 0))


class TestMain:
    def test_exit_codes(self, tmp_path, capsys):
        good = yaml.safe_load(MINIMAL)
        good["output"] = {"directory": str(tmp_path / "o")}
        path = write_config(tmp_path, good)
        assert main(["validate", "--config", path]) == 0
        assert main(["solve", "--config", path, "--seed", "3"]) == 0
        assert "u.csv" in capsys.readouterr().out
        assert main(["malliavin", "--config", path, "--source", "99,1"]) == 1
        bad = write_config(tmp_path, {"penalty": {"epsilonn": 1}})
        assert main(["solve", "--config", bad]) == 2
        assert "penalty.epsilonn: unknown key" in capsys.readouterr().err
        assert main(["solve", "--config", str(tmp_path / "missing.yaml")]) == 2
        crossing = dict(good, walls={"kind": "affine", "params": {"lower": -0.1,
                                                                  "lower_slope": 2.0}})
        assert main(["validate", "--config", write_config(tmp_path, crossing)]) == 3

    def test_bad_source_argument(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["malliavin", "--config", "x.yaml", "--source", "1"])
        assert exc.value.code == 2

    def test_module_entry_point(self, tmp_path):
        out = subprocess.run([sys.executable, "-m", "twowall", "defaults"], capture_output=True,
                             text=True, check=True)
        assert parse_config(out.stdout).to_document() == RunConfig().to_document()
