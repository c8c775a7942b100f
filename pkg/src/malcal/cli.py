"""Command-line front end: ``malcal <command> [options]``."""
from __future__ import annotations

import argparse
import contextlib
import io
import json
import os
import sys
from pathlib import Path

from . import experiments as ex
from .identities import run_equivalence_suite, run_identity_suite
from .kernels import StepFunction, write_kernel_csv
from .noise import NoiseValidationError, noise_from_config
from .oracle import CostGuardError as OracleCostGuard
from .operators import CostGuardError as LatticeCostGuard
from .paths import CouplingUnderrunError, simulate_coupled_binary, write_path_csv
from .rng import DEFAULT_SEED, stream

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

DEFAULTS = {
    "b": 1.0,
    "paths": 1000,
    "fine_factor": 64,
    "threads": None,
    "output": "-",
    "format": "csv",
    "k": 1,
    "n": 16,
    "x": "B1",
    "m": 8,
    "instances": 100,
    "b_list": "1,2",
    "tol": 1e-10,
    "grid": 8,
    "g": "1:0:1",
    "h": "1:0:1",
}

# per-command overrides of DEFAULTS
COMMAND_DEFAULTS = {"simulate-paths": {"m": None, "paths": 1}, "s-transform": {"paths": 0}}

FULL_SCALE_N = [2**k for k in range(2, 16)]
TAG_SIM = 21


class UsageError(Exception):
    pass


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"cannot parse integer list {text!r}") from e


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def parse_step(text: str) -> StepFunction:
    """``level:lo:hi[,level:lo:hi...]`` -> sum of level * 1_(lo, hi]."""
    terms = []
    for part in str(text).split(","):
        if not part.strip():
            continue
        try:
            a, lo, hi = (float(v) for v in part.split(":"))
        except ValueError as e:
            raise UsageError(f"step term {part!r} is not level:lo:hi") from e
        if not 0 <= lo <= hi:
            raise UsageError(f"step term {part!r} needs 0 <= lo <= hi")
        terms.append((a, lo, hi))
    return StepFunction(tuple(terms))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="malcal", description="Discrete Malliavin calculus experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (env MALCAL_SEED, default 42)")
    common.add_argument("--threads", type=int, help="worker threads (default: CPU count)")
    common.add_argument("--config", help="TOML file with option values")
    common.add_argument("--output", "-o", help="output path, '-' for stdout")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--b", type=float, help="binary noise parameter b > 0")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    s = sub.add_parser("skorokhod-convergence", parents=[common], help="sign-integrand Skorokhod study")
    s.add_argument("--n-list", help="comma-separated even n values")
    s.add_argument("--paths", type=int)
    s.add_argument("--fine-factor", type=int)
    s.add_argument("--full-scale", action="store_true", help="n = 4..2^15 with 10000 paths")

    s = sub.add_parser("chaos-estimate", parents=[common], help="Monte Carlo chaos kernels")
    s.add_argument("--x", choices=("B1", "B1^2-1", "wick"))
    s.add_argument("--k", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--paths", type=int)

    s = sub.add_parser("clark-ocone", parents=[common], help="Clark-Ocone derivative of B_1^2")
    s.add_argument("--n-list")
    s.add_argument("--paths", type=int)
    s.add_argument("--fine-factor", type=int)
    s.add_argument("--grid", type=int, help="t-grid j/grid, j = 1..grid")

    s = sub.add_parser("s-transform", parents=[common], help="S-transform of Wick exponentials")
    s.add_argument("--n-list")
    s.add_argument("--paths", type=int, help="Monte Carlo paths per n (0 = exact only)")
    s.add_argument("--g", help="step function level:lo:hi[,...]")
    s.add_argument("--h", help="step function level:lo:hi[,...]")

    s = sub.add_parser("exact-check", parents=[common], help="exact identity suite")
    s.add_argument("--m", type=int, help="horizon M (2..12)")
    s.add_argument("--instances", type=int)
    s.add_argument("--b-list", help="comma-separated b values")
    s.add_argument("--tol", type=float)

    s = sub.add_parser("simulate-paths", parents=[common], help="dump coupled binary paths")
    s.add_argument("--n", type=int)
    s.add_argument("--m", type=int, help="increments per path (default n)")
    s.add_argument("--paths", type=int)
    s.add_argument("--fine-factor", type=int)
    return p


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    cfg = {k.replace("-", "_"): v for k, v in data.items()}
    if "noise" in cfg:
        try:
            spec = noise_from_config(cfg.pop("noise"))
        except NoiseValidationError as e:
            raise UsageError(f"config noise: {e}") from e
        if not spec.is_binary:
            raise UsageError("experiments need binary noise")
        cfg.setdefault("b", spec.b)
    return cfg


def resolve(args: argparse.Namespace, env) -> dict:
    """Merge flags over config file over defaults and validate."""
    cfg = _load_config(args.config)
    defaults = {**DEFAULTS, **COMMAND_DEFAULTS.get(args.command, {})}
    out = {"command": args.command}
    for key in vars(args):
        if key in ("command", "config", "full_scale"):
            continue
        val = getattr(args, key)
        if val is None:
            val = cfg.get(key)
        if val is None:
            val = defaults.get(key)
        out[key] = val
    if out.get("seed") is None:
        raw = env.get("MALCAL_SEED")
        try:
            out["seed"] = int(raw) if raw not in (None, "") else DEFAULT_SEED
        except ValueError as e:
            raise UsageError(f"MALCAL_SEED={raw!r} is not an integer") from e
    if getattr(args, "full_scale", False):
        out["n_list"] = FULL_SCALE_N
        out["paths"] = 10000
    _validate(out)
    return out


def _validate(cfg: dict):
    cmd = cfg["command"]
    if cfg.get("b") is not None and not cfg["b"] > 0:
        raise UsageError("--b must be positive")
    for key in ("paths", "fine_factor", "k", "n", "m", "instances", "grid", "threads"):
        if cfg.get(key) is not None and not isinstance(cfg[key], int):
            raise UsageError(f"--{key.replace('_', '-')} must be an integer")
    for key in ("paths", "fine_factor", "n", "m", "instances", "grid"):
        if cfg.get(key) is not None and cfg[key] < 1 and not (key == "paths" and cmd == "s-transform"):
            raise UsageError(f"--{key.replace('_', '-')} must be positive")
    if cfg.get("threads") is not None and cfg["threads"] < 1:
        raise UsageError("--threads must be positive")
    if cmd in ("skorokhod-convergence", "clark-ocone", "s-transform"):
        if cfg.get("n_list") is None:
            raise UsageError("--n-list is required")
        ns = _int_list(cfg["n_list"])
        if not ns or any(n < 1 for n in ns):
            raise UsageError("--n-list needs positive integers")
        if ns != sorted(ns):
            raise UsageError("--n-list must be sorted ascending")
        if cmd == "skorokhod-convergence" and any(n % 2 for n in ns):
            raise UsageError("--n-list entries must be even")
        cfg["n_list"] = ns
    if cmd == "skorokhod-convergence" and cfg["fine_factor"] < 8:
        raise UsageError("--fine-factor must be at least 8")
    if cmd == "chaos-estimate" and cfg["k"] < 0:
        raise UsageError("--k must be nonnegative")
    if cmd == "exact-check":
        cfg["b_list"] = _float_list(cfg["b_list"])
        if any(b <= 0 for b in cfg["b_list"]):
            raise UsageError("--b-list entries must be positive")
        if not 2 <= cfg["m"] <= 12:
            raise UsageError("--m must lie in 2..12")
    if cmd == "simulate-paths" and cfg.get("m") is None:
        cfg["m"] = cfg["n"]
    if cmd == "s-transform":
        cfg["g_fn"] = parse_step(cfg["g"])
        cfg["h_fn"] = parse_step(cfg["h"])


@contextlib.contextmanager
def _open_output(path: str):
    if path in (None, "-"):
        buf = io.StringIO()
        yield buf
        sys.stdout.write(buf.getvalue())
        sys.stdout.flush()
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _sidecar(path: str, payload: dict):
    text = json.dumps(payload) + "\n"
    if path in (None, "-"):
        sys.stderr.write(text)
        return
    Path(str(Path(path).with_suffix("")) + ".summary.json").write_text(text)


def _emit_report(cfg, report: ex.ConvergenceReport):
    with _open_output(cfg["output"]) as fh:
        if cfg["format"] == "json":
            fh.write(json.dumps({**report.summary(), "n": report.n_values, "mse": report.mse,
                                 "ci_low": report.ci_low, "ci_high": report.ci_high}) + "\n")
        else:
            report.write_csv(fh)
    _sidecar(cfg["output"], report.summary())


def run(cfg: dict) -> int:
    cmd = cfg["command"]
    if cmd == "skorokhod-convergence":
        report = ex.skorokhod_convergence_experiment(
            cfg["b"], cfg["n_list"], cfg["paths"], cfg["fine_factor"], cfg["seed"], cfg["threads"],
            progress=lambda msg: print(msg, file=sys.stderr))
        _emit_report(cfg, report)
        return 0
    if cmd == "clark-ocone":
        report = ex.clark_ocone_convergence_experiment(
            cfg["n_list"], cfg["paths"], cfg["seed"], cfg["b"], cfg["fine_factor"], cfg["grid"], cfg["threads"])
        _emit_report(cfg, report)
        return 0
    if cmd == "chaos-estimate":
        est = ex.chaos_estimation_experiment(cfg["x"], cfg["k"], cfg["n"], cfg["paths"], cfg["seed"], cfg["b"])
        with _open_output(cfg["output"]) as fh:
            if cfg["format"] == "json":
                fh.write(json.dumps(est.summary()) + "\n")
            else:
                write_kernel_csv(est.kernel, fh)
        _sidecar(cfg["output"], est.summary())
        return 0
    if cmd == "s-transform":
        rows = ex.s_transform_convergence_experiment(cfg["g_fn"], cfg["h_fn"], cfg["n_list"],
                                                     cfg["paths"], cfg["seed"], cfg["b"])
        with _open_output(cfg["output"]) as fh:
            if cfg["format"] == "json":
                fh.write(json.dumps([r.__dict__ for r in rows]) + "\n")
            else:
                ex.write_s_transform_csv(rows, fh)
        return 0
    if cmd == "exact-check":
        results = run_identity_suite(cfg["m"], cfg["b_list"], cfg["instances"], cfg["seed"], cfg["tol"])
        results += run_equivalence_suite(cfg["m"], cfg["b_list"], cfg["instances"], cfg["seed"], cfg["tol"])
        with _open_output(cfg["output"]) as fh:
            if cfg["format"] == "json":
                fh.write(json.dumps([{**r.__dict__, "passed": r.passed} for r in results]) + "\n")
            else:
                fh.write("identity,b,M,instances,max_error,passed\n")
                for r in results:
                    fh.write(f"{r.name},{r.b!r},{r.M},{r.instances},{r.max_error!r},{int(r.passed)}\n")
        for r in results:
            print(r.line(), file=sys.stderr)
        return 0 if all(r.passed for r in results) else 1
    if cmd == "simulate-paths":
        with _open_output(cfg["output"]) as fh:
            for l in range(cfg["paths"]):
                p = simulate_coupled_binary(cfg["b"], cfg["n"], [], cfg["fine_factor"],
                                            stream(cfg["seed"], TAG_SIM, cfg["n"], l), M=cfg["m"])
                write_path_csv(p, fh, cfg["b"], cfg["seed"])
        return 0
    raise UsageError(f"unknown command {cmd}")


def _echo(cfg: dict) -> str:
    shown = {k: v for k, v in sorted(cfg.items()) if not k.endswith("_fn")}
    return json.dumps(shown, default=str)


def parse_and_run(argv=None, env=None) -> int:
    env = os.environ if env is None else env
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = resolve(args, env)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"malcal: error: {e}", file=sys.stderr)
        return 2
    print(f"config: {_echo(cfg)}", file=sys.stderr)
    try:
        return run(cfg)
    except (CouplingUnderrunError, OracleCostGuard, LatticeCostGuard, MemoryError,
            NoiseValidationError, ValueError) as e:
        print(f"malcal: error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(parse_and_run())
