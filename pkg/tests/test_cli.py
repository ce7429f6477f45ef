import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lieripm.cli import (BENCH_COLUMNS, EXIT_FAIL, EXIT_OK, EXIT_USAGE, SWEEP_COLUMNS, TRACE_COLUMNS,
                         ConfigError, ResultRecord, build_config, main, make_parser, write_config)


def run(argv, environ=None):
    out = io.StringIO()
    code = main(argv, environ={} if environ is None else environ, stream=out)
    return code, out.getvalue()


def write(path, text):
    path.write_text(text)
    return str(path)


def test_check_passes_and_fault_fails():
    code, out = run(["check", "--states", "10"])
    assert code == EXIT_OK and "all families pass" in out
    code, out = run(["check", "--states", "10", "--fault", "pivot"])
    assert code == EXIT_FAIL and "failed: pivot" in out


def test_check_empty_family_list(tmp_path):
    cfg = write(tmp_path / "c.cfg", "run.families = none\n")
    assert run(["check", "--config", cfg, "--states", "3"])[0] == EXIT_OK
    cfg = write(tmp_path / "e.cfg", "run.families =\n")
    code, out = run(["check", "--config", cfg])
    assert code == EXIT_OK and "all families pass" in out


def test_check_unknown_fault_is_usage_error():
    assert run(["check", "--fault", "nope"])[0] == EXIT_USAGE


def test_optimize_trace_and_summary(tmp_path):
    cfg = write(tmp_path / "c.cfg", "scenario.N = 8\nscenario.angle_max = 0.5\nscenario.box = 0.5\n")
    code, _ = run(["optimize", "--config", cfg, "--seed", "0", "--out", str(tmp_path / "a")])
    lines = (tmp_path / "a" / "trace.txt").read_text().splitlines()
    assert lines[0] == "# " + " ".join(TRACE_COLUMNS)
    rows = [dict(zip(TRACE_COLUMNS, map(float, ln.split()))) for ln in lines[1:]]
    assert [r["iter"] for r in rows] == list(range(1, len(rows) + 1))
    rec = ResultRecord.from_line((tmp_path / "a" / "summary.txt").read_text())
    assert rec.iterations == len(rows) and rec.E_0 == rows[-1]["E_0"] and rec.cost == rows[-1]["cost"]
    assert code == (EXIT_OK if rec.status == "converged" else EXIT_FAIL)
    run(["optimize", "--config", cfg, "--seed", "0", "--out", str(tmp_path / "b")])
    again = ResultRecord.from_line((tmp_path / "b" / "summary.txt").read_text())
    assert again.iterations == rec.iterations and again.E_0 == rec.E_0


def test_tolerance_presets():
    parser = make_parser()
    for name, tol in (("figure", 1e-14), ("table", 1e-11), ("ipopt-default", 1e-6)):
        cfg = build_config(parser.parse_args(["optimize", "--tol", name]), {})
        assert cfg.solver.eps_tol == tol
    assert run(["optimize", "--tol", "loose"])[0] == EXIT_USAGE


def test_sweep_csv(tmp_path):
    cfg = write(tmp_path / "c.cfg", "scenario.N = 6\nscenario.angle_max = 0.3\n")
    code, _ = run(["sweep", "--config", cfg, "--seeds", "0,1", "--out", str(tmp_path)])
    assert code == EXIT_OK
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(SWEEP_COLUMNS) and len(rows) == 3
    assert [int(r[0]) for r in rows[1:]] == [0, 1]


def test_sweep_rejects_manipulator():
    assert run(["sweep", "--scenario", "manipulator"])[0] == EXIT_USAGE


def test_bench_csv(tmp_path):
    code, out = run(["bench", "--depths", "2,4,8", "--repeats", "20", "--out", str(tmp_path)])
    assert code == EXIT_OK and "slope" in out
    with open(tmp_path / "bench.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(BENCH_COLUMNS) and len(rows) == 4
    t = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    assert np.all(np.diff(t[:, 2]) > 0)


@pytest.mark.parametrize("text", ["solver.eps_tol 1e-9\n", "solver.nonsense = 3\n",
                                  "scenario.N = many\n", "[section]\nsolver.eps_tol = 1\n"])
def test_malformed_config_is_usage_error(tmp_path, text):
    cfg = write(tmp_path / "bad.cfg", text)
    assert run(["optimize", "--config", cfg])[0] == EXIT_USAGE


def test_missing_config_file(tmp_path, capsys):
    assert run(["check", "--config", str(tmp_path / "missing.cfg")])[0] == EXIT_USAGE
    assert "missing.cfg" in capsys.readouterr().err


def test_unwritable_output_reports_path(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _ = run(["bench", "--depths", "1", "--repeats", "1", "--out", str(blocker / "sub")])
    assert code == EXIT_FAIL and str(blocker) in capsys.readouterr().err


def test_bad_flags_are_usage_errors():
    assert run([])[0] == EXIT_USAGE
    assert run(["frobnicate"])[0] == EXIT_USAGE
    assert run(["check", "--seed", "x"])[0] == EXIT_USAGE


def test_precedence_file_env_flags(tmp_path):
    parser = make_parser()
    cfg_file = write(tmp_path / "c.cfg", "scenario.N = 12\nsolver.N_max = 7\nscenario.seed = 4\n")
    args = parser.parse_args(["optimize", "--config", cfg_file])
    cfg = build_config(args, {"LIERIPM_SOLVER__N_MAX": "9"})
    assert cfg.scenario.N == 12 and cfg.solver.N_max == 9 and cfg.scenario.seed == 4
    args = parser.parse_args(["optimize", "--config", cfg_file, "--seed", "2"])
    assert build_config(args, {"LIERIPM_SCENARIO__SEED": "3"}).scenario.seed == 2
    with pytest.raises(ConfigError):
        build_config(parser.parse_args(["optimize"]), {"LIERIPM_SOLVER__BETA": "2.0"})


def test_config_round_trip(tmp_path):
    parser = make_parser()
    env = {"LIERIPM_SOLVER__EPS_TOL": "3.3e-10", "LIERIPM_SCENARIO__OBSTACLES": "1,2,0.5;0,-1,0.25"}
    cfg = build_config(parser.parse_args(["sweep", "--seeds", "0-3"]), env)
    assert cfg.run.seeds == (0, 1, 2, 3)
    assert cfg.scenario.obstacles == ((1.0, 2.0, 0.5), (0.0, -1.0, 0.25))
    path = tmp_path / "out.cfg"
    write_config(cfg, path)
    back = build_config(parser.parse_args(["sweep", "--config", str(path)]), {})
    assert back == cfg


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(st.sampled_from(["converged", "max-iters"]), st.integers(0, 10**6), finite, finite, finite,
       finite, finite)
def test_result_record_round_trip(status, iters, e0, cost, t, a, b):
    rec = ResultRecord(status, iters, e0, cost, t, a, b)
    assert ResultRecord.from_line(rec.to_line()) == rec
