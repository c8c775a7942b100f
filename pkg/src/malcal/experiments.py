"""Monte Carlo convergence studies and their reporting."""
from __future__ import annotations

import csv
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import walsh
from .kernels import (DiscreteKernel, StepFunction, chaos_tail, discretize, l2_distance,
                      l2_inner, unit_cube)
from .noise import binary_noise, sample
from .operators import s_transform_estimate, s_transform_exact, wick_exponential_fn
from .functionals import RandomVariableFn
from .paths import simulate_coupled_binary
from .rng import DEFAULT_SEED, parallel_map, stream

# stream tags keep the experiments' random numbers disjoint
TAG_SKOROKHOD = 1
TAG_CHAOS = 2
TAG_CLARK_OCONE = 3
TAG_S_TRANSFORM = 4


@dataclass
class ConvergenceReport:
    n_values: list
    mse: list
    ci_low: list
    ci_high: list
    slope: float
    intercept: float
    r_squared: float
    paths: int
    seed: int
    wall_time_seconds: float = 0.0
    label: str = ""

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "mse", "ci_low", "ci_high"])
        for row in zip(self.n_values, self.mse, self.ci_low, self.ci_high):
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])

    def summary(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r_squared,
                "paths": self.paths, "seed": self.seed}

    def write_summary(self, fh) -> None:
        fh.write(json.dumps(self.summary()) + "\n")

    def non_monotone_pairs(self) -> int:
        return sum(b > a for a, b in zip(self.mse, self.mse[1:]))


def fit_loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least squares of log y on log x; returns (slope, intercept, r^2)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 3:
        raise ValueError("need at least 3 matching points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit needs positive data")
    fit = stats.linregress(np.log(xs), np.log(ys))
    return float(fit.slope), float(fit.intercept), float(fit.rvalue**2)


def _mean_ci(samples: np.ndarray) -> tuple[float, float, float]:
    L = len(samples)
    mean = math.fsum(samples) / L
    sd = float(np.std(samples, ddof=1)) if L > 1 else 0.0
    half = 1.96 * sd / math.sqrt(L)
    return mean, mean - half, mean + half


def _report(ns, per_n, paths, seed, label, started) -> ConvergenceReport:
    mse, lo, hi = zip(*(_mean_ci(s) for s in per_n))
    if len(ns) >= 3:
        slope, intercept, r2 = fit_loglog_slope(ns, mse)
    else:
        slope = intercept = r2 = float("nan")
    return ConvergenceReport(list(ns), list(mse), list(lo), list(hi), slope, intercept, r2,
                             paths, seed, time.perf_counter() - started, label)


def _blocks(L: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(s + size, L)) for s in range(0, L, size)]


# ---------------------------------------------------------------------------
# Skorokhod integral of the sign integrand


def skorokhod_sign_integrand_binary(xi: np.ndarray, b: float, n: int) -> float:
    """Pathwise ``delta^n(Z^n)`` for ``Z^n_i = sign(1/2 - i/n)(B^n_1 B^n_{(n-i)/n} - (1 - i/n))``.

    ``Z^n_n = 0``; ``sign(0) = +1``.  Uses the binary formula
    ``sum Z_i xi_i / sqrt(n) - (1/n) sum xi_i^2 D_i Z_i`` with every D_i Z_i
    obtained by flipping coordinate i in closed form.
    """
    xi = np.asarray(xi, dtype=float)[:n]
    r = math.sqrt(n)
    P = np.concatenate([[0.0], np.cumsum(xi)])
    total = P[n]
    i = np.arange(1, n + 1)
    m = n - i
    sgn = np.where(2 * i <= n, 1.0, -1.0)
    centre = 1.0 - i / n
    active = (i <= n - 1).astype(float)
    Pm = P[m]
    # coordinate i enters B^n_{m/n} only when i <= m
    inside = i <= m

    def Z_with(x):
        B1 = (total - xi + x) / r
        Bm = (Pm + np.where(inside, x - xi, 0.0)) / r
        return sgn * (B1 * Bm - centre) * active

    Z = Z_with(xi)
    D = r * b / (b * b + 1.0) * (Z_with(b) - Z_with(-1.0 / b))
    return float(np.sum(Z * xi) / r - np.sum(xi * xi * D) / n)


def sign_integrand_process(n: int):
    """The same integrand as a DiscreteProcessFn on horizon n (for exact checks)."""
    from .functionals import DiscreteProcessFn

    r = math.sqrt(n)

    def component(i):
        s = 1.0 if 2 * i <= n else -1.0
        m = n - i

        def batch(W):
            if i > n - 1:
                return np.zeros(len(W))
            return s * (W.sum(axis=1) / r * W[:, :m].sum(axis=1) / r - (1.0 - i / n))

        return RandomVariableFn(n, lambda w: float(batch(w[None, :])[0]), f"Z{i}", batch)

    return DiscreteProcessFn(tuple(component(i) for i in range(1, n + 1)))


def skorokhod_reference(B_half: float, B_one: float) -> float:
    """``delta(Z) = B_1 B_{1/2}^2 - B_1/2 - B_{1/2}`` for the continuous integrand."""
    return B_one * B_half**2 - B_one / 2.0 - B_half


def skorokhod_errors(b: float, n: int, paths: range | Sequence[int], fine_factor: int,
                     seed: int) -> np.ndarray:
    out = np.empty(len(paths))
    for k, l in enumerate(paths):
        p = simulate_coupled_binary(b, n, [0.5, 1.0], fine_factor, stream(seed, TAG_SKOROKHOD, n, l))
        B_half, B_one = p.bm_values
        d_n = skorokhod_sign_integrand_binary(p.walk.increments, b, n)
        out[k] = (d_n - skorokhod_reference(B_half, B_one)) ** 2
    return out


def skorokhod_convergence_experiment(b: float, n_values: Sequence[int], paths: int,
                                     fine_factor: int = 64, seed: int = DEFAULT_SEED,
                                     threads: int | None = 1, block: int = 250,
                                     progress: Callable[[str], None] | None = None) -> ConvergenceReport:
    """Mean squared distance of ``delta^n(Z^n)`` from ``delta(Z)`` on coupled paths."""
    ns = [int(n) for n in n_values]
    if any(n % 2 for n in ns):
        raise ValueError(f"all n must be even so that 1/2 is a lattice time, got {ns}")
    if any(n < 2 for n in ns):
        raise ValueError("n must be at least 2")
    if paths < 2:
        raise ValueError("need at least 2 paths")
    started = time.perf_counter()
    per_n = []
    for n in ns:
        chunks = parallel_map(lambda bl: skorokhod_errors(b, n, range(*bl), fine_factor, seed),
                              _blocks(paths, block), threads)
        per_n.append(np.concatenate(chunks))
        if progress:
            progress(f"n={n}: mse={per_n[-1].mean():.6g}")
    return _report(ns, per_n, paths, seed, "skorokhod", started)


# ---------------------------------------------------------------------------
# Clark-Ocone derivative of (B_1)^2


def clark_ocone_square_exact(xi: np.ndarray, b: float, n: int) -> np.ndarray:
    """``nabla^n_i (B^n_1)^2`` for i = 1..n, i.e. ``2 B^n_{(i-1)/n} + (b - 1/b)/sqrt(n)``.

    Exact: with ``S`` the partial sum before i and ``R`` the centred sum after i,
    ``E[xi_i (S + xi_i + R)^2 | F_{i-1}] = 2 S + E[xi^3]``.
    """
    xi = np.asarray(xi, dtype=float)[:n]
    before = np.concatenate([[0.0], np.cumsum(xi)[:-1]])
    return 2.0 * before / math.sqrt(n) + (b - 1.0 / b) / math.sqrt(n)


def clark_ocone_errors(b: float, n: int, paths, t_grid: np.ndarray, fine_factor: int, seed: int) -> np.ndarray:
    idx = np.ceil(np.round(n * t_grid, 9)).astype(int)
    out = np.empty(len(paths))
    for k, l in enumerate(paths):
        p = simulate_coupled_binary(b, n, t_grid, fine_factor, stream(seed, TAG_CLARK_OCONE, n, l))
        grad = clark_ocone_square_exact(p.walk.increments, b, n)[idx - 1]
        out[k] = np.mean((grad - 2.0 * p.bm_values) ** 2)
    return out


def clark_ocone_convergence_experiment(n_values: Sequence[int], paths: int, seed: int = DEFAULT_SEED,
                                       b: float = 1.0, fine_factor: int = 64, grid: int = 8,
                                       threads: int | None = 1, block: int = 250) -> ConvergenceReport:
    """MSE of ``nabla^n_{ceil(nt)} (B^n_1)^2`` against ``2 B_t`` over t = j/grid, j = 1..grid."""
    ns = [int(n) for n in n_values]
    if any(n < 1 for n in ns) or paths < 2:
        raise ValueError("need n >= 1 and at least 2 paths")
    t_grid = np.arange(1, grid + 1) / grid
    started = time.perf_counter()
    per_n = []
    for n in ns:
        chunks = parallel_map(lambda bl: clark_ocone_errors(b, n, range(*bl), t_grid, fine_factor, seed),
                              _blocks(paths, block), threads)
        per_n.append(np.concatenate(chunks))
    return _report(ns, per_n, paths, seed, "clark-ocone", started)


# ---------------------------------------------------------------------------
# chaos coefficient estimation


def _functional_values(label: str, W: np.ndarray, n: int) -> np.ndarray:
    if label == "B1":
        return W.sum(axis=1) / math.sqrt(n)
    if label == "B1^2-1":
        return W.sum(axis=1) ** 2 / n - 1.0
    if label == "wick":
        return np.prod(1.0 + W / math.sqrt(n), axis=1)
    raise ValueError(f"unknown functional {label!r}; choose from B1, B1^2-1, wick")


def _continuous_kernel(label: str, k: int):
    """Continuous chaos kernel of order k, or None when it vanishes."""
    if label == "B1":
        return unit_cube(1) if k == 1 else None
    if label == "B1^2-1":
        return unit_cube(2) if k == 2 else None
    if label == "wick":
        return unit_cube(k, 1.0 / math.factorial(k)) if k >= 1 else None
    raise ValueError(f"unknown functional {label!r}; choose from B1, B1^2-1, wick")


def exact_symmetric_coefficient(label: str, k: int, n: int, b: float) -> float:
    """``E[X^n Xi_A]`` for any |A| = k inside {1..n} by binomial enumeration of up-moves."""
    p = 1.0 / (b * b + 1.0)
    j = np.arange(k + 1)
    m = np.arange(n - k + 1)
    pj = stats.binom.pmf(j, k, p)
    pm = stats.binom.pmf(m, n - k, p)
    basis = b**j * (-1.0 / b) ** (k - j)
    ups = j[:, None] + m[None, :]
    S = ups * b - (n - ups) / b
    if label == "wick":
        vals = (1.0 + b / math.sqrt(n)) ** ups * (1.0 - 1.0 / (b * math.sqrt(n))) ** (n - ups)
    elif label == "B1":
        vals = S / math.sqrt(n)
    elif label == "B1^2-1":
        vals = S * S / n - 1.0
    else:
        raise ValueError(f"unknown functional {label!r}")
    return float(np.sum((pj * basis)[:, None] * pm[None, :] * vals))


@dataclass
class ChaosEstimate:
    label: str
    k: int
    n: int
    paths: int
    seed: int
    kernel: DiscreteKernel
    exact_kernel: DiscreteKernel
    total_error: float
    bias: float
    noise: float
    standard_error: float

    def summary(self) -> dict:
        return {"label": self.label, "k": self.k, "n": self.n, "paths": self.paths, "seed": self.seed,
                "total_error": self.total_error, "bias": self.bias, "noise": self.noise,
                "standard_error": self.standard_error}


def chaos_estimation_experiment(label: str, k: int, n: int, paths: int, seed: int = DEFAULT_SEED,
                                b: float = 1.0, max_cells: int = 50_000_000) -> ChaosEstimate:
    """Monte Carlo estimate of ``f^{n,k}_X`` on off-diagonal cells of {1..n}^k.

    The estimate of the cell {i_1<..<i_k} is the sample mean of
    ``X^n (n^{k/2}/k!) xi_{i_1}..xi_{i_k}``.  Errors are embedded L2 distances:
    total (estimate vs continuous kernel), bias (exact discrete vs continuous)
    and noise (estimate vs exact discrete).
    """
    _continuous_kernel(label, 1)
    if k < 0 or n < 1 or paths < 2:
        raise ValueError("need k >= 0, n >= 1 and at least 2 paths")
    if k > n:
        raise ValueError("order k cannot exceed n")
    tuples = list(itertools.combinations(range(1, n + 1), k))
    if len(tuples) * paths > max_cells:
        raise MemoryError(f"{len(tuples)} cells x {paths} paths exceeds the work guard")
    spec = binary_noise(b)
    W = sample(spec, stream(seed, TAG_CHAOS, n, k), paths * n).reshape(paths, n)
    X = _functional_values(label, W, n)
    scale = n ** (k / 2) / math.factorial(k)
    est, var = {}, {}
    block = max(1, 2_000_000 // paths)
    for s in range(0, len(tuples), block):
        chunk = tuples[s:s + block]
        cols = np.array(chunk, dtype=int).reshape(len(chunk), k) - 1
        prod = np.ones((paths, len(chunk)))
        for c in range(k):
            prod *= W[:, cols[:, c]]
        vals = scale * X[:, None] * prod
        for t, mu, v in zip(chunk, vals.mean(axis=0), vals.var(axis=0, ddof=1)):
            est[t] = float(mu)
            var[t] = float(v)
    estimate = DiscreteKernel(k, n, est, symmetric=True, off_diagonal=True)
    exact_value = scale * exact_symmetric_coefficient(label, k, n, b)
    exact = DiscreteKernel(k, n, {t: exact_value for t in tuples}, symmetric=True, off_diagonal=True)
    target = _continuous_kernel(label, k)
    mult = math.factorial(k)
    se = math.sqrt(math.fsum(mult * v / paths for v in var.values()) / n**k)
    if k == 0:
        c0 = 1.0 if label == "wick" else 0.0
        return ChaosEstimate(label, k, n, paths, seed, estimate, exact,
                             abs(estimate.scalar() - c0), abs(exact.scalar() - c0),
                             abs(estimate.scalar() - exact.scalar()), se)
    total = l2_distance(estimate, target) if target is not None else estimate.norm()
    bias = l2_distance(exact, target) if target is not None else exact.norm()
    noise = (estimate - exact).norm()
    return ChaosEstimate(label, k, n, paths, seed, estimate, exact, total, bias, noise, se)


# ---------------------------------------------------------------------------
# S-transform


@dataclass
class STransformRow:
    n: int
    exact: float
    target: float
    difference: float
    estimate: float | None = None
    standard_error: float | None = None


def s_transform_convergence_experiment(g: StepFunction, h: StepFunction, n_values: Sequence[int],
                                       paths: int = 0, seed: int = DEFAULT_SEED,
                                       b: float = 1.0) -> list[STransformRow]:
    """Exact ``prod (1 + g(i/n) h(i/n)/n)`` against ``exp(<g, h>)``, with optional MC estimates.

    The MC estimate is the sample mean of ``exp(I(h_check)) exp(I(g_check))``.
    """
    target = math.exp(l2_inner(g, h))
    spec = binary_noise(b)
    rows = []
    for n in n_values:
        n = int(n)
        exact = s_transform_exact(g, h, n)
        row = STransformRow(n, exact, target, abs(exact - target))
        if paths:
            M = max(discretize(g, n).max_index, discretize(h, n).max_index, 1)
            X = wick_exponential_fn(discretize(h, n), M, n)
            est, se = s_transform_estimate(X, g, n, spec, paths, stream(seed, TAG_S_TRANSFORM, n))
            row.estimate, row.standard_error = est, se
        rows.append(row)
    return rows


def write_s_transform_csv(rows: Sequence[STransformRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "exact", "target", "difference", "estimate", "standard_error"])
    for r in rows:
        w.writerow([r.n, repr(r.exact), repr(r.target), repr(r.difference),
                    "" if r.estimate is None else repr(r.estimate),
                    "" if r.standard_error is None else repr(r.standard_error)])


# ---------------------------------------------------------------------------
# tail mass


def tail_mass_diagnostic(X: walsh.WalshVector, n: int, m: int, weighted: bool = False) -> float:
    """``sum_{k >= m} k! ||f^{n,k}_X||^2`` from the chaos kernels (times k when weighted)."""
    return chaos_tail(walsh.chaos_coefficients(X, n), m, weighted)
