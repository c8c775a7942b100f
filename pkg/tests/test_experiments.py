import io
import json
import math

import numpy as np
import pytest
from scipy.special import comb

from malcal import experiments as ex
from malcal import walsh as Wl
from malcal.functionals import RandomVariableFn
from malcal.kernels import DiscreteKernel, StepFunction
from malcal.noise import binary_noise
from malcal.operators import clark_ocone_table, skorokhod_integral_batch
from malcal.oracle import EnumeratedSpace


def test_fit_slope_exact():
    xs = [4, 8, 16, 32]
    assert ex.fit_loglog_slope(xs, [3 / x for x in xs])[0] == pytest.approx(-1.0, abs=1e-12)
    s, c, r2 = ex.fit_loglog_slope(xs, [2 / math.sqrt(x) for x in xs])
    assert s == pytest.approx(-0.5, abs=1e-12) and c == pytest.approx(math.log(2)) and r2 == pytest.approx(1.0)


def test_fit_slope_rejects_bad_input():
    with pytest.raises(ValueError):
        ex.fit_loglog_slope([1, 2, 3], [1, 0, 2])
    with pytest.raises(ValueError):
        ex.fit_loglog_slope([1, 2], [1, 2])


@pytest.mark.parametrize("b", [1.0, 2.0])
def test_pathwise_skorokhod_matches_generic(b):
    n = 6
    spec = binary_noise(b)
    S = EnumeratedSpace(spec, n)
    generic = skorokhod_integral_batch(ex.sign_integrand_process(n), n, S.outcomes, spec, n)
    fast = np.array([ex.skorokhod_sign_integrand_binary(w, b, n) for w in S.outcomes])
    assert np.max(np.abs(generic - fast)) < 1e-12


def test_skorokhod_reference_formula():
    assert ex.skorokhod_reference(1.0, 2.0) == pytest.approx(2 - 1 - 1)
    assert ex.skorokhod_reference(0.0, 0.0) == 0.0


def test_skorokhod_experiment_report():
    rep = ex.skorokhod_convergence_experiment(1.0, [4, 8, 16], 200, seed=7)
    assert rep.n_values == [4, 8, 16]
    assert all(lo <= m <= hi for lo, m, hi in zip(rep.ci_low, rep.mse, rep.ci_high))
    buf = io.StringIO()
    rep.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "n,mse,ci_low,ci_high" and len(lines) == 4
    assert set(rep.summary()) == {"slope", "intercept", "r2", "paths", "seed"}
    again = ex.skorokhod_convergence_experiment(1.0, [4, 8, 16], 200, seed=7, threads=3, block=37)
    assert again.mse == rep.mse


def test_skorokhod_experiment_rejects_odd_n():
    with pytest.raises(ValueError):
        ex.skorokhod_convergence_experiment(1.0, [4, 7], 100)


def test_ci_width_shrinks_when_paths_double():
    # width scales like 1/sqrt(L)
    a = ex.skorokhod_convergence_experiment(1.0, [4], 2000, seed=11)
    b = ex.skorokhod_convergence_experiment(1.0, [4], 4000, seed=11)
    ratio = (b.ci_high[0] - b.ci_low[0]) / (a.ci_high[0] - a.ci_low[0])
    assert 0.6 <= ratio <= 0.85


@pytest.mark.parametrize("b", [1.0, 2.0])
def test_clark_ocone_closed_form_matches_lattice(b):
    n = 5
    spec = binary_noise(b)
    sq = RandomVariableFn(n, lambda w: (w.sum() / math.sqrt(n)) ** 2, "B1^2",
                          lambda W: (W.sum(axis=1) / math.sqrt(n)) ** 2)
    S = EnumeratedSpace(spec, n)
    closed = np.array([ex.clark_ocone_square_exact(w, b, n) for w in S.outcomes])
    for i in range(1, n + 1):
        tab = clark_ocone_table(sq, i, spec, n)
        lat = tab[tuple(S.digits[:, : i - 1].T)] if i > 1 else np.full(len(S), float(tab))
        assert np.max(np.abs(lat - closed[:, i - 1])) < 1e-12


def test_clark_ocone_experiment_small():
    rep = ex.clark_ocone_convergence_experiment([8, 16, 32, 64], 200, seed=3)
    assert rep.slope < 0
    assert all(m > 0 for m in rep.mse)


def test_chaos_b1_has_no_bias():
    est = ex.chaos_estimation_experiment("B1", 1, 16, 4000, seed=1)
    assert est.bias < 1e-12
    assert est.total_error == pytest.approx(est.noise, abs=1e-12)
    assert est.noise < 5 * est.standard_error


def test_chaos_square_bias_is_diagonal():
    for n in (4, 16):
        est = ex.chaos_estimation_experiment("B1^2-1", 2, n, 500, seed=2)
        assert est.bias == pytest.approx(n**-0.5, abs=1e-12)


@pytest.mark.parametrize("b", [1.0, 2.0])
def test_exact_coefficients_against_oracle(b):
    n = 6
    spec = binary_noise(b)
    S = EnumeratedSpace(spec, n)
    W = S.outcomes
    for label in ("B1", "B1^2-1", "wick"):
        vals = ex._functional_values(label, W, n)
        for k in range(0, 4):
            basis = np.prod([W[:, j] for j in range(k)], axis=0) if k else np.ones(len(W))
            assert ex.exact_symmetric_coefficient(label, k, n, b) == pytest.approx(S.expect(vals * basis), abs=1e-12)


def test_chaos_k0_centered():
    est = ex.chaos_estimation_experiment("B1^2-1", 0, 8, 4000, seed=3)
    assert est.total_error < 3 * est.standard_error + 1e-12


def test_chaos_unknown_label():
    with pytest.raises(ValueError):
        ex.chaos_estimation_experiment("B2", 1, 4, 10)


def test_s_transform_rows():
    g = StepFunction.indicator(0, 1)
    rows = ex.s_transform_convergence_experiment(g, g, [2, 10, 100, 1000])
    assert rows[0].exact == 2.25
    diffs = [r.difference for r in rows]
    assert diffs == sorted(diffs, reverse=True)
    assert rows[-1].exact == pytest.approx(1.001**1000, rel=1e-12)
    h = StepFunction.indicator(1, 2)
    assert all(r.exact == 1.0 for r in ex.s_transform_convergence_experiment(g, h, [3, 8, 50]))
    buf = io.StringIO()
    ex.write_s_transform_csv(rows, buf)
    assert buf.getvalue().startswith("n,exact,target,difference,estimate,standard_error\n")


def test_tail_mass_examples():
    n = 10
    f = DiscreteKernel(1, n, {(i,): 1.0 for i in range(1, n + 1)})
    E = Wl.wick_exponential_walsh(f, n, n, 1.0)
    assert ex.tail_mass_diagnostic(E, n, 0) == pytest.approx(E.norm_sq(), abs=1e-12)
    assert ex.tail_mass_diagnostic(E, n, n + 1) == 0
    for m in range(n + 1):
        want = math.fsum(comb(n, k, exact=True) / n**k for k in range(m, n + 1))
        assert ex.tail_mass_diagnostic(E, n, m) == pytest.approx(want, abs=1e-12)
        weighted = math.fsum(k * comb(n, k, exact=True) / n**k for k in range(m, n + 1))
        assert ex.tail_mass_diagnostic(E, n, m, weighted=True) == pytest.approx(weighted, abs=1e-12)


def test_report_non_monotone_count():
    rep = ex.ConvergenceReport([1, 2, 3, 4], [4.0, 3.0, 3.5, 1.0], [0] * 4, [9] * 4, 0, 0, 0, 1, 1)
    assert rep.non_monotone_pairs() == 1
    buf = io.StringIO()
    rep.write_summary(buf)
    assert json.loads(buf.getvalue())["paths"] == 1
