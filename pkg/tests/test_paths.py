import io
import math

import numpy as np
import pytest
from scipy import integrate, stats

from malcal.noise import binary_noise
from malcal.paths import (CouplingUnderrunError, WalkPath, exit_density, sample_exit,
                          sample_first_passage_time, simulate_coupled_binary,
                          simulate_skeleton_binary, simulate_walk, walk_value, write_path_csv)
from malcal.rng import stream


def test_walk_value_hand_sums():
    p = WalkPath(4, np.array([1.0, -1.0, 1.0, 1.0]))
    assert walk_value(p, 0) == 0
    assert walk_value(p, 0.5) == 0
    assert walk_value(p, 1.0) == 1
    with pytest.raises(IndexError):
        walk_value(p, 1.5)
    with pytest.raises(ValueError):
        walk_value(p, -0.1)


def test_simulate_walk_rejects_empty():
    with pytest.raises(ValueError):
        simulate_walk(binary_noise(1), 4, 0, stream(0))


def test_simulate_walk_atoms_and_determinism():
    spec = binary_noise(2)
    a = simulate_walk(spec, 8, 50, stream(5, 1))
    b = simulate_walk(spec, 8, 50, stream(5, 1))
    assert np.array_equal(a.increments, b.increments)
    assert set(np.unique(a.increments)) <= set(spec.values)


def test_walk_second_moment():
    spec = binary_noise(1)
    x = np.array([simulate_walk(spec, 16, 16, stream(9, l)).partial_sums()[-1] for l in range(20000)])
    assert abs(np.mean(x**2) - 1) < 0.03


def test_coupled_symmetric_increments():
    n = 16
    p = simulate_coupled_binary(1.0, n, [0.5, 1.0], 64, stream(1, 2))
    assert np.all(np.abs(np.abs(p.walk.increments) - 1) == 0)
    assert p.passage_times[0] > 0 and np.all(np.diff(p.passage_times) > 0)
    assert p.walk.M == n


def test_coupled_consistency_with_grid():
    n, K, b = 64, 64, 2.0
    tol = 6 * math.sqrt(1 / (K * n))
    bad = total = 0
    for l in range(100):
        p = simulate_coupled_binary(b, n, [1.0], K, stream(2, l))
        vals = np.concatenate([[0.0], p.passage_values])
        dev = np.abs(math.sqrt(n) * np.diff(vals) - p.walk.increments)
        bad += int(np.sum(dev > tol * math.sqrt(n)))
        total += n
    assert bad / total <= 1e-4 + 1.0 / total


def _first_passages(b, n, L, seed):
    taus, ups = np.empty(L), np.empty(L)
    for l in range(L):
        p = simulate_coupled_binary(b, n, [], 64, stream(seed, n, l), M=1)
        taus[l], ups[l] = p.passage_times[0], p.walk.increments[0] > 0
    return taus, ups


def test_coupled_first_passage_mean():
    n = 8
    taus, _ = _first_passages(1.0, n, 10**5, 3)
    assert abs(taus.mean() - 1 / n) < 5e-3 / n


def test_coupled_upper_side_frequency():
    _, ups = _first_passages(2.0, 8, 10**5, 4)
    assert abs(ups.mean() - 0.2) < 0.01


def test_coupled_bm_readout_at_lattice():
    p = simulate_coupled_binary(1.0, 8, [0.0, 0.5, 1.0], 16, stream(4, 0))
    assert p.bm_at(0.0) == 0.0
    assert p.bm_values.shape == (3,)
    with pytest.raises(KeyError):
        p.bm_at(0.3)


def test_coupled_rejects_small_fine_factor():
    with pytest.raises(ValueError):
        simulate_coupled_binary(1.0, 8, [1.0], 4, stream(0))


def test_coupled_underrun():
    with pytest.raises(CouplingUnderrunError) as e:
        simulate_coupled_binary(1.0, 4, [], 8, stream(0), M=400, max_time=1.0)
    assert e.value.achieved < 400 and e.value.requested == 400


def test_path_csv_format():
    p = simulate_coupled_binary(1.0, 4, [], 8, stream(0))
    buf = io.StringIO()
    write_path_csv(p, buf, 1.0, 7)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "n=4,b=1.0,seed=7"
    assert lines[1] == "i,xi,tau"
    assert len(lines) == 6


# exact exit times

def test_exit_density_mass_split():
    for a, b in [(1.0, 1.0), (0.5, 2.0)]:
        up = integrate.quad(lambda t: exit_density(np.array([t]), a, b, +1)[0], 0, 60, limit=400)[0]
        lo = integrate.quad(lambda t: exit_density(np.array([t]), a, b, -1)[0], 0, 60, limit=400)[0]
        assert abs(up - a / (a + b)) < 1e-7
        assert abs(lo - b / (a + b)) < 1e-7


def test_first_passage_mean():
    t = sample_first_passage_time(1.0, 1.0, stream(6, 0), size=10**5)
    assert abs(t.mean() - 1.0) < 0.02


def test_first_passage_tail_vs_density():
    t = sample_first_passage_time(1.0, 1.0, stream(6, 1), size=10**5)
    dens = lambda s: exit_density(np.array([s]), 1, 1, 1)[0] + exit_density(np.array([s]), 1, 1, -1)[0]
    tail = integrate.quad(dens, 3, 80, limit=200)[0]
    emp = np.mean(t > 3)
    se = math.sqrt(tail * (1 - tail) / len(t))
    assert abs(emp - tail) < 3 * se


def test_first_passage_scaling_ks():
    a = sample_first_passage_time(0.5, 1.5, stream(7, 0), size=10**4)
    b = sample_first_passage_time(1.0, 3.0, stream(7, 1), size=10**4)
    assert stats.ks_2samp(4 * a, b).pvalue > 0.01


def test_exit_side_frequency():
    _, up = sample_exit(0.5, 2.0, stream(8, 0), 10**5)
    assert abs(up.mean() - 0.2) < 0.01


def test_first_passage_tol_bounds():
    with pytest.raises(ValueError):
        sample_first_passage_time(1, 1, stream(0), tol=1e-3)


def test_skeleton_marginals():
    w, tau = simulate_skeleton_binary(2.0, 16, 20000, stream(9, 0))
    assert abs(np.mean(w.increments == 2.0) - 0.2) < 4 * math.sqrt(0.16 / 20000)
    assert abs(tau[-1] / 20000 - 1 / 16) < 0.002
