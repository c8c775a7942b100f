import json
import subprocess
import sys

import pytest

from malcal.cli import parse_and_run


def run_cli(args, tmp_path=None, env=None):
    import os
    e = {k: v for k, v in os.environ.items() if k != "MALCAL_SEED"}
    e.update(env or {})
    return subprocess.run([sys.executable, "-m", "malcal", *args], capture_output=True, text=True,
                          env=e, cwd=tmp_path)


def test_skorokhod_csv_and_sidecar(tmp_path):
    out = tmp_path / "sk.csv"
    r = run_cli(["skorokhod-convergence", "--b", "1", "--n-list", "4,8,16", "--paths", "200",
                 "--seed", "7", "-o", str(out)])
    assert r.returncode == 0, r.stderr
    lines = out.read_text().splitlines()
    assert lines[0] == "n,mse,ci_low,ci_high" and len(lines) == 4
    summary = json.loads((tmp_path / "sk.summary.json").read_text())
    assert summary["paths"] == 200 and summary["seed"] == 7
    assert "config:" in r.stderr


def test_missing_n_list_exits_2():
    r = run_cli(["skorokhod-convergence", "--paths", "100"])
    assert r.returncode == 2 and "usage" in r.stderr


@pytest.mark.parametrize("args", [
    ["skorokhod-convergence", "--n-list", "4,7"],
    ["skorokhod-convergence", "--n-list", "8,4"],
    ["chaos-estimate", "--paths", "0"],
    ["exact-check", "--m", "20"],
    ["simulate-paths", "--b", "-1"],
    ["bogus"],
])
def test_usage_errors(args, capsys):
    assert parse_and_run(args, {}) == 2


def test_bad_env_seed(capsys):
    assert parse_and_run(["simulate-paths", "--n", "4"], {"MALCAL_SEED": "x"}) == 2


def test_runtime_error_exits_1(tmp_path, capsys):
    code = parse_and_run(["chaos-estimate", "--x", "B1^2-1", "--k", "5", "--n", "4",
                          "-o", str(tmp_path / "c.csv")], {})
    assert code == 1


def _sim(tmp_path, name, extra, env=None):
    out = tmp_path / name
    assert parse_and_run(["simulate-paths", "--n", "8", "-o", str(out), *extra], env or {}) == 0
    return out.read_bytes()


def test_seed_precedence(tmp_path, capsys):
    flag = _sim(tmp_path, "a.csv", ["--seed", "5", "--paths", "3"], {"MALCAL_SEED": "9"})
    env = _sim(tmp_path, "b.csv", ["--paths", "3"], {"MALCAL_SEED": "5"})
    default = _sim(tmp_path, "c.csv", ["--paths", "3"])
    explicit = _sim(tmp_path, "d.csv", ["--seed", "42", "--paths", "3"])
    assert flag == env and default == explicit and flag != default


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('paths = 2\nseed = 3\n[noise]\nkind = "binary"\nb = 2.0\n')
    a = _sim(tmp_path, "a.csv", ["--config", str(cfg)])
    b = _sim(tmp_path, "b.csv", ["--paths", "2", "--seed", "3", "--b", "2"])
    assert a == b
    assert a.decode().splitlines()[0] == "n=8,b=2.0,seed=3"
    # flags win over the file
    c = _sim(tmp_path, "c.csv", ["--config", str(cfg), "--seed", "4"])
    assert c != a


def test_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("paths = [\n")
    assert parse_and_run(["simulate-paths", "--config", str(cfg)], {}) == 2


@pytest.mark.parametrize("cmd", [
    ["skorokhod-convergence", "--n-list", "4,8", "--paths", "300"],
    ["clark-ocone", "--n-list", "4,8", "--paths", "300"],
    ["chaos-estimate", "--x", "wick", "--k", "2", "--n", "8", "--paths", "500"],
    ["s-transform", "--n-list", "2,8,64", "--paths", "200"],
    ["simulate-paths", "--n", "8", "--paths", "4"],
])
def test_thread_count_does_not_change_output(cmd, tmp_path, capsys):
    outs = []
    for t in ("1", "4"):
        out = tmp_path / f"t{t}.csv"
        assert parse_and_run([*cmd, "--seed", "13", "--threads", t, "-o", str(out)], {}) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_json_format(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert parse_and_run(["s-transform", "--n-list", "2,1000", "--format", "json", "-o", str(out)], {}) == 0
    rows = json.loads(out.read_text())
    assert rows[0]["exact"] == 2.25


def test_exact_check_small(tmp_path, capsys):
    out = tmp_path / "e.csv"
    code = parse_and_run(["exact-check", "--m", "4", "--instances", "5", "--seed", "7", "-o", str(out)], {})
    err = capsys.readouterr().err
    assert code == 0
    assert err.count("PASS") >= 11 * 2 and "FAIL" not in err
    assert out.read_text().startswith("identity,b,M,instances,max_error,passed\n")


def test_exact_check_reports_failure(capsys):
    code = parse_and_run(["exact-check", "--m", "4", "--instances", "3", "--tol", "1e-300",
                          "-o", "-"], {})
    assert code == 1
    assert "FAIL" in capsys.readouterr().err
