"""Configuration parsing, run orchestration, artifact reproducibility."""

import json

import pytest

from narrowgap.cli import main, run
from narrowgap.config import (ConfigError, config_from_dict, parse_config,
                              validate_config)

MINI = {
    "geometry": {"m": 2, "R0": 0.5},
    "tensor": {"kind": "lame", "lam": 1.0, "mu": 1.0},
    "traces": {"family": "constant", "phi": [1.0, 0.0], "psi": [0.0, 0.0]},
    "solver": {"tangential_nodes": 33, "vertical_nodes": 9},
    "experiment": {"checks": ["residual"],
                   "eps_list": [0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001]},
}


def write_cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

class TestParseConfig:
    def test_minimal_laplace_parses_with_defaults(self, tmp_path):
        cfg = parse_config(write_cfg(tmp_path, {"tensor": {"kind": "laplace"}}))
        assert cfg.solver.tangential_nodes == 257
        assert cfg.experiment.richardson_tol == 0.1
        assert cfg.N == 1

    def test_unknown_keys_collected(self, tmp_path):
        bad = {"tensor": {"kindd": "lame"}, "solver": {"tangental_nodes": 9},
               "nonsense": {}}
        with pytest.raises(ConfigError) as err:
            parse_config(write_cfg(tmp_path, bad))
        msg = str(err.value)
        assert "kindd" in msg and "tangental_nodes" in msg and "nonsense" in msg

    def test_monomial_degree_must_stay_below_convexity_order(self, tmp_path):
        bad = dict(MINI)
        bad["experiment"] = {"checks": ["remark13"], "monomial_k": 3}
        with pytest.raises(ConfigError, match="m > k"):
            parse_config(write_cfg(tmp_path, bad))

    def test_closed_form_mode_needs_elasticity_tensor(self):
        with pytest.raises(ConfigError, match="lame_closed_form"):
            config_from_dict({"tensor": {"kind": "laplace"},
                              "solver": {"ansatz_mode": "lame_closed_form"}})

    def test_roundtrip_structural_equality(self, tmp_path):
        cfg = parse_config(write_cfg(tmp_path, MINI))
        echoed = tmp_path / "echo.json"
        echoed.write_text(cfg.to_json())
        assert parse_config(echoed) == cfg

    def test_invalid_json_reported(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            parse_config(p)

    def test_validate_config_accumulates(self):
        cfg = config_from_dict(MINI)
        assert validate_config(cfg) == []


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------

class TestRun:
    def test_validate_command_solve_free(self, tmp_path):
        cfg = config_from_dict({**MINI, "output": {"dir": str(tmp_path / "v")}})
        report = run(cfg, "validate")
        assert report.all_passed
        log = (tmp_path / "v" / "runlog.jsonl").read_text()
        assert '"event": "solve"' not in log

    def test_reports_reproducible_byte_for_byte(self, tmp_path):
        cfg = config_from_dict({**MINI, "output": {"dir": str(tmp_path / "same")}})
        outs = []
        for _ in range(2):
            run(cfg, "all")
            outs.append({p.name: p.read_bytes()
                         for p in sorted((tmp_path / "same").iterdir())
                         if p.name != "runlog.jsonl"})
        assert outs[0].keys() == outs[1].keys()
        for name in outs[0]:
            assert outs[0][name] == outs[1][name], name

    def test_exit_status_tracks_verdicts(self, tmp_path):
        ok = {**MINI, "output": {"dir": str(tmp_path / "ok")}}
        code = main(["all", "--config", str(write_cfg(tmp_path, ok, "ok.json"))])
        assert code == 0
        # a sweep that only spans the transient fails the flatness band
        bad = {**MINI, "experiment": {"checks": ["residual"],
                                      "eps_list": [0.9, 0.7, 0.5, 0.3]}}
        bad["output"] = {"dir": str(tmp_path / "bad")}
        code = main(["all", "--config", str(write_cfg(tmp_path, bad, "bad.json"))])
        assert code == 1

    def test_config_errors_exit_2(self, tmp_path):
        p = write_cfg(tmp_path, {"tensor": {"kind": "nope"}})
        assert main(["validate", "--config", str(p)]) == 2
        assert main(["validate", "--config", str(tmp_path / "missing.json")]) == 2

    def test_ansatz_command_emits_field_samples(self, tmp_path):
        cfg = {**MINI, "output": {"dir": str(tmp_path / "anz")}}
        code = main(["ansatz", "--config", str(write_cfg(tmp_path, cfg, "a.json"))])
        assert code == 0
        head = (tmp_path / "anz" / "ansatz_field.csv").read_text().splitlines()
        assert head[0].startswith("xprime0,t,xn,u0,u1,du0_dx0")
        assert len(head) == 33 * 9 + 1

    def test_solve_command_emits_solution(self, tmp_path):
        cfg = {**MINI, "output": {"dir": str(tmp_path / "sol")}}
        code = main(["solve", "--config", str(write_cfg(tmp_path, cfg, "s.json"))])
        assert code == 0
        assert (tmp_path / "sol" / "solution.csv").exists()
        log = (tmp_path / "sol" / "runlog.jsonl").read_text()
        assert '"event": "solve"' in log

    def test_decay_zero_lateral_informative_verdict(self, tmp_path):
        cfg = {
            "geometry": {"R0": 0.25},
            "tensor": {"kind": "laplace"},
            "traces": {"family": "constant", "phi": [0.0], "psi": [0.0]},
            "solver": {"tangential_nodes": 33, "vertical_nodes": 9,
                       "closure": "constant", "lateral_value": [0.0]},
            "output": {"dir": str(tmp_path / "dz")},
        }
        code = main(["decay", "--config", str(write_cfg(tmp_path, cfg, "d.json"))])
        assert code == 0
        report = (tmp_path / "dz" / "report.txt").read_text()
        assert "SKIPPED" in report and "zero solution" in report

    def test_grid_scale_override(self, tmp_path):
        cfg = config_from_dict(MINI)
        from narrowgap.cli import _apply_overrides
        import argparse
        ns = argparse.Namespace(threads=None, seed=None, grid_scale=2.0, out=None)
        scaled = _apply_overrides(cfg, ns)
        assert scaled.solver.scaled_nodes() == (65, 17)

    def test_manifest_covers_emitted_files(self, tmp_path):
        cfg = config_from_dict({**MINI, "output": {"dir": str(tmp_path / "m")}})
        report = run(cfg, "all")
        emitted = {p.name for p in (tmp_path / "m").iterdir()}
        assert set(report.manifest) == emitted

    def test_grid_limited_decay_aborts_with_diagnostics(self, tmp_path):
        # a coarse grid cannot certify the deep-decay points: Richardson
        # flags them, the fit starves, and the verdict aborts honestly
        cfg = {
            "geometry": {"R0": 0.25},
            "tensor": {"kind": "laplace"},
            "traces": {"family": "constant", "phi": [0.0], "psi": [0.0]},
            "solver": {"tangential_nodes": 65, "vertical_nodes": 17,
                       "closure": "constant", "lateral_value": [1.0]},
            "experiment": {"eps_list": [0.1, 0.06, 0.04, 0.025]},
            "output": {"dir": str(tmp_path / "coarse")},
        }
        code = main(["decay", "--config", str(write_cfg(tmp_path, cfg, "c.json"))])
        assert code == 1
        report = (tmp_path / "coarse" / "report.txt").read_text()
        assert "ABORTED" in report and "clean points" in report
