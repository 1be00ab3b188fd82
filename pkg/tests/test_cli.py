"""Configuration parsing, canonical round trip, CLI commands and exit codes."""
import json
import math
import os

import numpy as np
import pytest

from cbve import emit_config, load_config, parse_config
from cbve.cli import main

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def _cfg_path(name):
    return os.path.join(CONFIG_DIR, name)


def _write(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return str(path)


class TestConfigRoundTrip:
    def test_environment_round_trip(self, tmp_path):
        cfg = load_config(_cfg_path("mixed_environment.json"))
        emitted = emit_config(cfg.environment)
        reparsed = parse_config(emitted)
        env_a, env_b = cfg.environment, reparsed.environment
        assert np.array_equal(env_a.grid.nodes, env_b.grid.nodes)
        for key in ("b11", "b22", "b12", "b21", "c1", "c2"):
            ma, mb = getattr(env_a, key), getattr(env_b, key)
            assert np.array_equal(ma.density, mb.density)
            assert ma.atoms == mb.atoms
        for key in ("m1", "m2"):
            ja, jb = getattr(env_a, key), getattr(env_b, key)
            assert tuple(k.points for k in ja.cell_kernels) == tuple(
                k.points for k in jb.cell_kernels
            )
            assert tuple((t, s.points) for t, s in ja.time_atoms) == tuple(
                (t, s.points) for t, s in jb.time_atoms
            )
        # canonical: emitting again reproduces the same document
        assert emit_config(reparsed.environment) == emitted

    def test_special_form_round_trip(self):
        cfg = load_config(_cfg_path("jump_special.json"))
        emitted = emit_config(cfg.special_form)
        reparsed = parse_config(emitted)
        assert np.array_equal(
            cfg.special_form.gamma12.density, reparsed.special_form.gamma12.density
        )
        assert cfg.special_form.gamma11.atoms == reparsed.special_form.gamma11.atoms

    def test_grid_contains_atoms_and_breakpoints(self):
        cfg = load_config(_cfg_path("jump_special.json"))
        for t in (0.5, 0.75):
            assert cfg.grid.is_node(t)

    def test_field_precise_errors(self, tmp_path):
        from cbve import ConfigError

        with pytest.raises(ConfigError, match="b11.atoms"):
            parse_config({"horizon": 1.0, "grid_cells": 4, "b11": {"atoms": [[0.5]]}})
        with pytest.raises(ConfigError, match="c1"):
            parse_config(
                {"horizon": 1.0, "grid_cells": 4, "c1": {"atoms": [[0.5, 0.1]]}}
            )
        with pytest.raises(ConfigError, match="unknown"):
            parse_config({"horizon": 1.0, "grid_cells": 4, "b99": {}})


class TestCommands:
    def test_validate_ok_zero(self, tmp_path, capsys):
        path = _write(tmp_path, {"horizon": 1.0, "grid_cells": 8})
        assert main(["validate", "--config", path]) == 0
        out = capsys.readouterr().out
        assert "ok: True" in out

    def test_validate_rejects_excess_load(self, tmp_path, capsys):
        path = _write(
            tmp_path,
            {"horizon": 1.0, "grid_cells": 8, "b11": {"atoms": [[0.5, 1.2]]}},
        )
        assert main(["validate", "--config", path]) == 3
        out = capsys.readouterr().out
        assert "exceeds 1" in out

    def test_validate_reports_bottleneck(self, capsys):
        assert main(["validate", "--config", _cfg_path("bottleneck.json")]) == 0
        out = capsys.readouterr().out
        assert "bottlenecks: 0.5" in out

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["validate", "--config", str(bad)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_solve_zero_constant_rows(self, tmp_path, capsys):
        path = _write(tmp_path, {"horizon": 1.0, "grid_cells": 8})
        assert main(["solve", "--config", path, "--lambda", "2,3"]) == 0
        rows = capsys.readouterr().out.strip().splitlines()
        assert rows[0] == "r,v1,v2"
        assert len(rows) == 10
        for row in rows[1:]:
            _, v1, v2 = row.split(",")
            assert float(v1) == 2.0 and float(v2) == 3.0

    def test_solve_feller_row(self, capsys):
        assert main([
            "solve", "--config", _cfg_path("feller.json"), "--lambda", "1,0",
        ]) == 0
        rows = capsys.readouterr().out.strip().splitlines()
        r0 = rows[1].split(",")
        assert float(r0[0]) == 0.0
        expect = math.exp(-1.0) / (1.0 + (1.0 - math.exp(-1.0)))
        assert abs(float(r0[1]) - expect) <= 1e-4

    def test_solve_bottleneck_zero_column(self, capsys):
        assert main([
            "solve", "--config", _cfg_path("bottleneck.json"), "--lambda", "3,5",
        ]) == 0
        rows = capsys.readouterr().out.strip().splitlines()
        for row in rows[1:]:
            r, v1, _ = row.split(",")
            if float(r) < 0.5:
                assert float(v1) == 0.0

    def test_moments_csv(self, tmp_path, capsys):
        path = _write(
            tmp_path,
            {"horizon": 1.0, "grid_cells": 8, "b12": {"density": [[0.0, 1.0, 1.0]]}},
        )
        assert main(["moments", "--config", path, "--lambda", "0,1"]) == 0
        rows = capsys.readouterr().out.strip().splitlines()
        assert rows[0] == "r,pi1,pi2"
        first = rows[1].split(",")
        assert float(first[1]) == pytest.approx(1.0, abs=1e-12)

    def test_simulate_requires_special_form(self, tmp_path, capsys):
        path = _write(tmp_path, {"horizon": 1.0, "grid_cells": 8})
        assert main(["simulate", "--config", path]) == 2

    def test_simulate_csv(self, capsys):
        assert main([
            "simulate", "--config", _cfg_path("jump_special.json"),
            "--x0", "1,0", "--paths", "3", "--seed", "11",
        ]) == 0
        rows = capsys.readouterr().out.strip().splitlines()
        assert rows[0] == "path_id,time,kind,type_source,dx1,dx2,x1,x2"
        assert len(rows) > 1
        kinds = {row.split(",")[2] for row in rows[1:]}
        assert kinds <= {"deterministic_atom", "branch_jump"}

    def test_approx_table(self, tmp_path, capsys):
        path = _write(
            tmp_path,
            {
                "horizon": 1.0,
                "grid_cells": 200,
                "c1": {"density": [[0.0, 1.0, 0.4]]},
                "m1": {"kernel": [[0.0, 1.0, [[0.4, 0.2, 0.5]]]]},
            },
        )
        assert main(["approx", "--config", path, "--lambda", "1,0.5"]) == 0
        rows = capsys.readouterr().out.strip().splitlines()
        assert rows[0] == "n,sup_gap"
        gaps = [float(r.split(",")[1]) for r in rows[1:]]
        assert len(gaps) == 6
        assert gaps[-1] < gaps[0]

    def test_verify_zero_env_all_pass(self, tmp_path, capsys):
        path = _write(tmp_path, {"horizon": 1.0, "grid_cells": 64})
        assert main(["verify", "--config", path]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out
        assert "PASS flow_residual" in out

    def test_verify_special_form(self, capsys):
        assert main(["verify", "--config", _cfg_path("jump_special.json")]) == 0
        out = capsys.readouterr().out
        assert "PASS picard_monotonicity" in out
        assert "PASS special_general_agreement" in out
        assert "PASS h_transform_round_trip" in out

    def test_out_file(self, tmp_path):
        path = _write(tmp_path, {"horizon": 1.0, "grid_cells": 8})
        out_file = tmp_path / "result.csv"
        assert main([
            "solve", "--config", path, "--lambda", "1,1", "--out", str(out_file),
        ]) == 0
        assert out_file.read_text().startswith("r,v1,v2")

    def test_refine_flag(self, tmp_path, capsys):
        path = _write(tmp_path, {"horizon": 1.0, "grid_cells": 8})
        assert main(["solve", "--config", path, "--lambda", "1,1", "--refine", "4"]) == 0
        rows = capsys.readouterr().out.strip().splitlines()
        assert len(rows) == 34  # header + 33 nodes

    def test_numerical_failure_exit_code(self, tmp_path, capsys):
        # deliberately coarse grid with a stiff quadratic coefficient drives
        # the sweep negative beyond tolerance
        path = _write(
            tmp_path,
            {"horizon": 1.0, "grid_cells": 4, "c1": {"density": [[0.0, 1.0, 100.0]]}},
        )
        assert main(["solve", "--config", path, "--lambda", "10,0"]) == 4
        assert "numerical failure" in capsys.readouterr().err

    def test_verify_failure_exit_code(self, tmp_path, capsys):
        path = _write(
            tmp_path,
            {"horizon": 1.0, "grid_cells": 8, "b11": {"atoms": [[0.5, 1.5]]}},
        )
        assert main(["verify", "--config", path]) == 5
        assert "FAIL admissibility" in capsys.readouterr().out

    def test_log_env_var(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("CBVE_LOG", "debug")
        path = _write(tmp_path, {"horizon": 1.0, "grid_cells": 8})
        assert main(["validate", "--config", path]) == 0
