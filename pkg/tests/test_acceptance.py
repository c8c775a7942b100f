"""Acceptance gate: one test per criterion, each reporting a single PASS/FAIL line."""
import math

import numpy as np
import pytest

from malcal import experiments as ex
from malcal.cli import parse_and_run
from malcal.identities import run_equivalence_suite, run_identity_suite
from malcal.kernels import StepFunction, l2_distance, unit_cube
from malcal.paths import sample_exit, sample_first_passage_time
from malcal.rng import stream
from malcal import walsh as Wl

pytestmark = pytest.mark.slow


def test_criterion_1_skorokhod_slope(report_criterion):
    ns = [2**k for k in range(2, 13)]
    rep = ex.skorokhod_convergence_experiment(1.0, ns, 10000, fine_factor=64, seed=42, threads=None)
    ok = -0.65 <= rep.slope <= -0.35 and rep.non_monotone_pairs() <= 1
    detail = (f"slope={rep.slope:.4f} (band [-0.65, -0.35]) r2={rep.r_squared:.4f} "
              f"non_monotone={rep.non_monotone_pairs()} time={rep.wall_time_seconds:.0f}s")
    assert report_criterion(1, ok, detail)


def test_criterion_2_identity_suite(report_criterion):
    results = []
    for M in (8, 10):
        results += run_identity_suite(M, (1.0, 2.0), 100, seed=42, tol=1e-10)
    failed = [r.line() for r in results if not r.passed]
    worst = max(r.max_error for r in results)
    detail = f"{len(results)} checks, {len(failed)} failures, worst error {worst:.2e}"
    assert report_criterion(2, not failed and len(results) == 44, detail), failed


def test_criterion_3_oracle_equivalence(report_criterion):
    results = run_equivalence_suite(8, (1.0, 2.0), 100, seed=42, tol=1e-10)
    failed = [r.line() for r in results if not r.passed]
    worst = max(r.max_error for r in results)
    detail = f"{len(results)} pairwise checks, {len(failed)} failures, worst gap {worst:.2e}"
    assert report_criterion(3, not failed, detail), failed


def test_criterion_4_chaos_distance(report_criterion):
    gaps = {}
    for n in (4, 16, 64):
        B = Wl.walk_walsh(n, 1.0, n)
        f2 = Wl.chaos_coefficients(B * B - Wl.constant(n, 1.0, 1.0), n)[2]
        gaps[n] = abs(l2_distance(f2, unit_cube(2)) - n**-0.5)
    ok = max(gaps.values()) <= 1e-12
    assert report_criterion(4, ok, "max |dist - n^-1/2| = " + f"{max(gaps.values()):.2e}")


def test_criterion_5_s_transform(report_criterion):
    g = StepFunction.indicator(0, 1)
    rows = ex.s_transform_convergence_experiment(g, g, [2, 1000])
    mc = ex.s_transform_convergence_experiment(g, g, [64], paths=10**5, seed=42)[0]
    z = abs(mc.estimate - mc.exact) / mc.standard_error
    ok = rows[0].exact == 2.25 and abs(rows[1].exact - math.e) < 5e-3 and z < 3
    detail = (f"n=2: {rows[0].exact!r}; |p(1000) - e| = {abs(rows[1].exact - math.e):.2e}; "
              f"n=64 MC {mc.estimate:.5f} vs {mc.exact:.5f} ({z:.2f} SE)")
    assert report_criterion(5, ok, detail)


def test_criterion_6_first_passage(report_criterion):
    tau = sample_first_passage_time(1.0, 1.0, stream(42, 6, 0), size=10**5)
    b = 2.0
    _, up = sample_exit(1 / b, b, stream(42, 6, 1), 10**5)
    ok = abs(tau.mean() - 1.0) < 0.02 and abs(up.mean() - 0.2) < 0.01
    detail = f"mean tau = {tau.mean():.4f}; upper-side frequency (b=2) = {up.mean():.4f}"
    assert report_criterion(6, ok, detail)


COMMANDS = [
    ["skorokhod-convergence", "--n-list", "4,8,16", "--paths", "500"],
    ["clark-ocone", "--n-list", "4,8,16", "--paths", "500"],
    ["chaos-estimate", "--x", "B1^2-1", "--k", "2", "--n", "16", "--paths", "2000"],
    ["s-transform", "--n-list", "2,16,64", "--paths", "2000"],
    ["exact-check", "--m", "4", "--instances", "5"],
    ["simulate-paths", "--n", "16", "--paths", "5"],
]


def test_criterion_7_thread_determinism(report_criterion, tmp_path, capsys):
    mismatched = []
    for c, cmd in enumerate(COMMANDS):
        outs = []
        for t in ("1", "2", "8"):
            out = tmp_path / f"{c}-{t}.csv"
            assert parse_and_run([*cmd, "--seed", "2024", "--threads", t, "-o", str(out)], {}) == 0
            outs.append(out.read_bytes())
        if len(set(outs)) != 1:
            mismatched.append(cmd[0])
    capsys.readouterr()
    detail = f"{len(COMMANDS)} commands x threads 1,2,8; mismatches: {mismatched or 'none'}"
    assert report_criterion(7, not mismatched, detail)
