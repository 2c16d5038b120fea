import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from relham.cli import RELATIVE_COLUMNS, TRAJECTORY_COLUMNS, main, write_atomic
from relham.config import ConfigError, compile_profile, parse_config

SMALL = """
[model]
formulation = B
[discretization]
n = 8
[integrator]
dt = 1e-3
t_end = 0.5
stride = 50
[initial]
position = x
velocity = 0.1 * sin(2 * pi * x)
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_minimal_config_fills_defaults():
    cfg = parse_config("[model]\nformulation = B\n")
    assert cfg.integrator.dt == 1e-3 and cfg.integrator.output_stride == 100
    assert cfg.model.formulation == "B" and cfg.n == 64 and cfg.seed == 0
    assert cfg.reference == cfg.initial


def test_excluded_exponent_is_reported_with_its_range():
    with pytest.raises(ConfigError) as info:
        parse_config("[model]\nformulation = A\np = 0\nq = 2\n")
    assert any("p=0.0" in e and "kernel-law range" in e for e in info.value.errors)


def test_gamma_boundary_is_rejected():
    with pytest.raises(ConfigError, match="gamma"):
        parse_config("[model]\nformulation = A\np = 0.5\nq = 2\ngamma = 1\n")


def test_all_errors_are_collected():
    text = "[model]\nformulation = A\np = 0\nq = 2\ncolour = red\n[integrator]\ndt = -1\n[bogus]\nx = 1\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    joined = "\n".join(info.value.errors)
    assert "colour" in joined and "dt" in joined and "[bogus]" in joined and "p=0.0" in joined


def test_pressureless_model_rejects_kernel_overrides():
    with pytest.raises(ConfigError, match="fixes"):
        parse_config("[model]\nformulation = B\np = 0.5\n")


def test_environment_overrides_file_values():
    cfg = parse_config(SMALL, {"RELHAM_INTEGRATOR__DT": "5e-4", "RELHAM_BACKEND": "python", "HOME": "/"})
    assert cfg.integrator.dt == 5e-4
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(SMALL, {"RELHAM_INTEGRATOR__DTT": "1"})


def test_profile_expressions_are_restricted():
    f = compile_profile("x + 0.1 * sin(2 * pi * x) - abs(x) ** 2")
    x = np.linspace(0, 1, 5)
    assert np.allclose(f(x), x + 0.1 * np.sin(2 * np.pi * x) - x ** 2)
    assert np.allclose(compile_profile("1")(x), 1.0)
    for bad in ("__import__('os')", "x.real", "y + 1", "sin(x, 2)", "x if x else 1", "'a'"):
        with pytest.raises(ValueError):
            compile_profile(bad)


def test_unknown_subcommand_exits_2(capsys):
    assert main(["explode"]) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_config_exits_2(tmp_path, capsys):
    assert main(["simulate", "--config", write(tmp_path, "[model]\nformulation = C\n")]) == 2
    assert "formulation" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 2


def test_simulate_writes_trajectory_and_summary(tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", "--config", write(tmp_path, SMALL), "--out", str(out)]) == 0
    rows = read_csv(out / "simulate.csv")
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS and len(rows) == 12
    summary = json.loads((out / "simulate.json").read_text())
    assert summary["passed"] and summary["config"]["integrator"]["dt"] == 1e-3 and summary["version"]


def test_rerun_overwrites_deterministically(tmp_path):
    cfg = write(tmp_path, SMALL)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    first = (tmp_path / "a" / "simulate.csv").read_bytes()
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    assert (tmp_path / "a" / "simulate.csv").read_bytes() == first
    assert not [p for p in os.listdir(tmp_path / "a") if p.startswith(".tmp-")]


def test_floats_round_trip_exactly(tmp_path):
    main(["simulate", "--config", write(tmp_path, SMALL), "--out", str(tmp_path)])
    rows = read_csv(tmp_path / "simulate.csv")
    h = float(rows[1][1])
    assert repr(h) == repr(float(format(h, ".17g")))


def test_compare_identical_configs_gives_zero_series(tmp_path):
    assert main(["compare", "--config", write(tmp_path, SMALL), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "compare.csv")
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS + RELATIVE_COLUMNS
    col = rows[0].index("H_rel")
    assert all(float(r[col]) == 0.0 for r in rows[1:])


def test_oracle_check_prints_table_and_passes(tmp_path, capsys):
    cfg = write(tmp_path, "[experiment]\nn_states = 10\noracle_particles = 5\n")
    assert main(["oracle-check", "--config", cfg, "--out", str(tmp_path), "--seed", "7"]) == 0
    assert "max scaled force error" in capsys.readouterr().out
    rows = read_csv(tmp_path / "oracle-check.csv")
    assert rows[0] == ["formulation", "p", "q", "gamma", "max_error", "ratio"] and len(rows) == 21
    assert json.loads((tmp_path / "oracle-check.json").read_text())["seed"] == 7


def test_check_bounds_small(tmp_path):
    cfg = write(tmp_path, "[experiment]\nn_pairs = 5\ncells = pressure_gamma_2, repulsion_p_0_to_1\n")
    assert main(["check-bounds", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert len(read_csv(tmp_path / "check-bounds.csv")) == 3


def test_rarefaction_requires_power_law_model(tmp_path):
    assert main(["rarefaction", "--config", write(tmp_path, SMALL), "--out", str(tmp_path)]) == 2


def test_rarefaction_runs(tmp_path):
    text = ("[model]\nformulation = A\np = 0.5\nq = 1.5\ngamma = 2\nkappa_a = 0.1\n"
            "[discretization]\nn = 8\n[integrator]\nt_end = 0.5\nstride = 10\n")
    assert main(["rarefaction", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == 0
    assert read_csv(tmp_path / "rarefaction.csv")[0] == ["t", "H_rel", "decay_integral", "lhs"]


def test_hypothesis_violation_exits_1(tmp_path):
    text = ("[model]\nformulation = A\np = 0.5\nq = 1.5\ngamma = 2\nkappa_a = 3\n"
            "[discretization]\nn = 8\n[integrator]\nt_end = 3\nstride = 10\n")
    assert main(["rarefaction", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == 1
    assert "aborted" in json.loads((tmp_path / "rarefaction.json").read_text())["measured"]


def test_sweep_friction_small(tmp_path):
    cfg = write(tmp_path, "[discretization]\nn = 6\n[experiment]\neps_list = 0.2 0.1\ns_end = 0.2\ndt_factor = 0.05\n")
    main(["sweep-friction", "--config", cfg, "--out", str(tmp_path), "--threads", "2"])
    rows = read_csv(tmp_path / "sweep-friction.csv")
    assert rows[0] == ["eps", "sup_distance", "sup_velocity_norm", "dt"] and len(rows) == 3


def test_invalid_seed_and_threads_exit_2(tmp_path):
    assert main(["oracle-check", "--seed", "-1", "--out", str(tmp_path)]) == 2
    assert main(["oracle-check", "--threads", "0", "--out", str(tmp_path)]) == 2


def test_write_atomic_replaces_content(tmp_path):
    p = tmp_path / "f.txt"
    write_atomic(str(p), "one")
    write_atomic(str(p), "two")
    assert p.read_text() == "two" and os.listdir(tmp_path) == ["f.txt"]


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "relham", "simulate", "--config", write(tmp_path, SMALL),
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0 and "PASS" in out.stdout
