"""Exact finite-n identity checks and cross-implementation agreement.

Each check draws random functionals (arbitrary value tables over the sample
space), evaluates both sides with full enumeration and reports the largest
discrepancy over all instances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracle as O
from . import operators as L
from . import walsh as Wl
from .functionals import (DiscreteProcessFn, RandomVariableFn, constant, random_process,
                          random_table_function)
from .kernels import DiscreteKernel
from .noise import NoiseSpec, binary_noise
from .rng import stream

TAG_IDENTITIES = 11
TAG_EQUIVALENCE = 12


@dataclass
class CheckResult:
    name: str
    b: float
    M: int
    instances: int
    max_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} b={self.b:g} M={self.M} instances={self.instances} max_error={self.max_error:.3e}"


class _Ctx:
    def __init__(self, spec: NoiseSpec, M: int, rng: np.random.Generator):
        self.spec, self.M, self.rng = spec, M, rng
        self.space = O.EnumeratedSpace(spec, M)
        self.W = self.space.outcomes
        self.E = lambda v: math.fsum(np.asarray(v) * self.space.weights)

    def n(self) -> int:
        return int(self.rng.integers(1, 6))

    def X(self) -> RandomVariableFn:
        return random_table_function(self.spec, self.M, self.rng)

    def Z(self) -> DiscreteProcessFn:
        return random_process(self.spec, self.M, self.M, self.rng)

    def f(self, n) -> DiscreteKernel:
        vals = self.rng.standard_normal(self.M) * self.rng.integers(0, 2, self.M)
        return DiscreteKernel(1, n, {(i + 1,): v for i, v in enumerate(vals)})

    def sym_kernel(self, k, n) -> DiscreteKernel:
        from itertools import combinations

        return DiscreteKernel(k, n, {t: self.rng.standard_normal()
                                     for t in combinations(range(1, self.M + 1), k)},
                              symmetric=True, off_diagonal=True)

    def walsh(self, X) -> Wl.WalshVector:
        return Wl.from_function(X, self.spec)


def _cut(process: DiscreteProcessFn, i: int, D_of: Callable) -> DiscreteProcessFn:
    comps = []
    for j in range(1, process.N + 1):
        comps.append(constant(process.M, 0.0) if j == i else D_of(process[j]))
    return DiscreteProcessFn(tuple(comps))


# ---------------------------------------------------------------------------
# identities; each returns the discrepancy for one random instance
# (moment identities are scaled by max(1, |moment|))


def duality(c: _Ctx) -> float:
    n, X, Z = c.n(), c.X(), c.Z()
    lhs = sum(c.E(Z[i].evaluate(c.W) * L.malliavin_derivative_batch(X, i, c.W, c.spec, n))
              for i in range(1, c.M + 1)) / n
    rhs = c.E(L.skorokhod_integral_batch(Z, c.M, c.W, c.spec, n) * X.evaluate(c.W))
    return abs(lhs - rhs)


def skorokhod_variance(c: _Ctx) -> float:
    n, Z = c.n(), c.Z()
    M = c.M
    delta = L.skorokhod_integral_batch(Z, M, c.W, c.spec, n)
    lhs = c.E(delta**2)
    first = sum(c.E(L.cond_minus_i_batch(Z[i], i, c.W, c.spec) ** 2) for i in range(1, M + 1)) / n
    D = {(i, j): L.malliavin_derivative_batch(Z[j], i, c.W, c.spec, n)
         for i in range(1, M + 1) for j in range(1, M + 1) if i != j}
    second = sum(c.E(D[i, j] * D[j, i]) for (i, j) in D) / n**2
    return abs(lhs - first - second)


def commutation(c: _Ctx) -> float:
    n, Z = c.n(), c.Z()
    i = int(c.rng.integers(1, c.M + 1))
    delta = L.skorokhod_integral_fn(Z, c.M, c.spec, n)
    lhs = L.malliavin_derivative_batch(delta, i, c.W, c.spec, n)
    DZ = _cut(Z, i, lambda z: L.malliavin_derivative_fn(z, i, c.spec, n))
    rhs = L.cond_minus_i_batch(Z[i], i, c.W, c.spec) + L.skorokhod_integral_batch(DZ, c.M, c.W, c.spec, n)
    return float(np.max(np.abs(lhs - rhs)))


def fubini_swap(c: _Ctx) -> float:
    X = c.X()
    i, j = c.rng.choice(np.arange(1, c.M + 1), size=2, replace=False)

    def cond(Y, k):
        return RandomVariableFn(c.M, lambda w: float(L.cond_minus_i_batch(Y, k, w, c.spec)[0]), "E",
                                lambda W: L.cond_minus_i_batch(Y, k, W, c.spec))

    a = cond(cond(X, int(i)), int(j)).evaluate(c.W)
    b = cond(cond(X, int(j)), int(i)).evaluate(c.W)
    return float(np.max(np.abs(a - b)))


def doleans_dade(c: _Ctx) -> float:
    n = c.n()
    f = c.f(n)
    lhs = L.wick_exponential_fn(f, c.M, n).evaluate(c.W)
    rhs = np.ones(len(c.W))
    for i in range(1, c.M + 1):
        head = DiscreteKernel(1, n, {k: v for k, v in f.stored_items() if k[0] < i})
        rhs += f[(i,)] * L.wick_exponential_fn(head, c.M, n).evaluate(c.W) * c.W[:, i - 1] / math.sqrt(n)
    return float(np.max(np.abs(lhs - rhs)))


def mobius_inversion(c: _Ctx) -> float:
    n = c.n()
    size = int(c.rng.integers(0, min(6, c.M) + 1))
    B = sorted(int(x) for x in c.rng.choice(np.arange(1, c.M + 1), size=size, replace=False))
    got = Wl.mobius_basis(B, n, c.M, c.spec.b)
    return got.max_abs_diff(Wl.basis(c.M, c.spec.b, B))


def multiple_wiener_isometry(c: _Ctx) -> float:
    n = c.n()
    k = int(c.rng.integers(1, min(4, c.M) + 1))
    f, g = c.sym_kernel(k, n), c.sym_kernel(k, n)
    If = Wl.multiple_wiener_walsh(f, n, c.M, c.spec.b).evaluate(c.W)
    Ig = Wl.multiple_wiener_walsh(g, n, c.M, c.spec.b).evaluate(c.W)
    rhs = math.factorial(k) * f.inner(g)
    return abs(c.E(If * Ig) - rhs) / max(1.0, abs(rhs))


def walsh_inner_product(c: _Ctx) -> float:
    X, Y = c.X(), c.X()
    return abs(c.E(X.evaluate(c.W) * Y.evaluate(c.W)) - c.walsh(X).inner(c.walsh(Y)))


def predictable_representation(c: _Ctx) -> float:
    n, X = c.n(), c.X()
    rhs = np.full(len(c.W), c.E(X.evaluate(c.W)))
    for i in range(1, c.M + 1):
        tab = L.clark_ocone_table(X, i, c.spec, n)
        grad = tab[tuple(c.space.digits[:, : i - 1].T)] if i > 1 else np.full(len(c.W), float(tab))
        rhs += grad * c.W[:, i - 1] / math.sqrt(n)
    return float(np.max(np.abs(X.evaluate(c.W) - rhs)))


def malliavin_chaos_isometry(c: _Ctx) -> float:
    n, X = c.n(), c.X()
    lhs = sum(c.E(L.malliavin_derivative_batch(X, i, c.W, c.spec, n) ** 2) for i in range(1, c.M + 1)) / n
    kernels = Wl.chaos_coefficients(c.walsh(X), n)
    rhs = math.fsum(f.k * math.factorial(f.k) * f.norm_sq() for f in kernels)
    return abs(lhs - rhs)


def wick_second_moment(c: _Ctx) -> float:
    n = c.n()
    f = c.f(n)
    lhs = c.E(L.wick_exponential_fn(f, c.M, n).evaluate(c.W) ** 2)
    rhs = L.wick_second_moment(f, n)
    return abs(lhs - rhs) / max(1.0, rhs)


IDENTITIES = {
    "duality": duality,
    "skorokhod-variance": skorokhod_variance,
    "d-delta-commutation": commutation,
    "fubini-swap": fubini_swap,
    "doleans-dade": doleans_dade,
    "mobius-inversion": mobius_inversion,
    "multiple-wiener-isometry": multiple_wiener_isometry,
    "walsh-inner-product": walsh_inner_product,
    "predictable-representation": predictable_representation,
    "malliavin-chaos-isometry": malliavin_chaos_isometry,
    "wick-second-moment": wick_second_moment,
}


def run_identity_suite(M: int = 8, b_values=(1.0, 2.0), instances: int = 100, seed: int = 42,
                       tol: float = 1e-10, names=None) -> list[CheckResult]:
    if not 2 <= M <= 12:
        raise ValueError("identity suite supports 2 <= M <= 12")
    results = []
    for bi, b in enumerate(b_values):
        for ni, (name, check) in enumerate(IDENTITIES.items()):
            if names and name not in names:
                continue
            ctx = _Ctx(binary_noise(b), M, stream(seed, TAG_IDENTITIES, bi, ni))
            worst = max(check(ctx) for _ in range(instances))
            results.append(CheckResult(name, b, M, instances, worst, tol))
    return results


# ---------------------------------------------------------------------------
# lattice vs Walsh vs oracle


def _prefix_lookup(c: _Ctx, tab: np.ndarray, i: int) -> np.ndarray:
    return tab[tuple(c.space.digits[:, : i - 1].T)] if i > 1 else np.full(len(c.W), float(tab))


def equivalence_triple(c: _Ctx) -> dict[str, float]:
    """Pairwise maximal discrepancies for one random (X, Z, i) triple."""
    n, X, Z = c.n(), c.X(), c.Z()
    i = int(c.rng.integers(1, c.M + 1))
    S = c.space
    TX = S.tensor(X)
    WX = c.walsh(X)
    out = {}

    def gap(name, a, b):
        out[name] = max(out.get(name, 0.0), float(np.max(np.abs(np.asarray(a) - np.asarray(b)))))

    ora = S.flat(O.malliavin_tensor(S, TX, i, n))
    lat_a = L.malliavin_derivative_batch(X, i, c.W, c.spec, n, "atoms")
    lat_b = L.malliavin_derivative_batch(X, i, c.W, c.spec, n, "binary")
    wal = Wl.malliavin_derivative_walsh(WX, i, n).evaluate(c.W)
    gap("malliavin lattice-oracle", lat_a, ora)
    gap("malliavin binary-atoms", lat_b, lat_a)
    gap("malliavin walsh-oracle", wal, ora)
    gap("malliavin walsh-lattice", wal, lat_b)

    comps = [S.tensor(Z[j]) for j in range(1, c.M + 1)]
    ora = S.flat(O.skorokhod_tensor(S, comps, n))
    lat_a = L.skorokhod_integral_batch(Z, c.M, c.W, c.spec, n, "atoms")
    lat_b = L.skorokhod_integral_batch(Z, c.M, c.W, c.spec, n, "binary")
    wal = Wl.skorokhod_walsh([c.walsh(Z[j]) for j in range(1, c.M + 1)], n).evaluate(c.W)
    gap("skorokhod lattice-oracle", lat_a, ora)
    gap("skorokhod binary-atoms", lat_b, lat_a)
    gap("skorokhod walsh-oracle", wal, ora)
    gap("skorokhod walsh-lattice", wal, lat_b)

    ora = S.flat(O.clark_ocone_tensor(S, TX, i, n))
    lat = _prefix_lookup(c, L.clark_ocone_table(X, i, c.spec, n), i)
    wal = Wl.clark_ocone_walsh(WX, i, n).evaluate(c.W)
    gap("clark-ocone lattice-oracle", lat, ora)
    gap("clark-ocone walsh-oracle", wal, ora)
    gap("clark-ocone walsh-lattice", wal, lat)

    # E[X | F_{-i}] and E[X | F_i]
    ora = S.flat(S.cond(TX, [j for j in range(1, c.M + 1) if j != i]))
    gap("cond-minus-i lattice-oracle", L.cond_minus_i_batch(X, i, c.W, c.spec), ora)
    gap("cond-minus-i walsh-oracle", Wl.conditional_expectation_minus_i_walsh(WX, i).evaluate(c.W), ora)
    gap("cond-F_i walsh-oracle", Wl.conditional_expectation_walsh(WX, i).evaluate(c.W),
        S.flat(S.cond(TX, range(1, i + 1))))

    Y = c.X()
    gap("product walsh-oracle", Wl.multiply(WX, c.walsh(Y)).evaluate(c.W), X.evaluate(c.W) * Y.evaluate(c.W))
    gap("walsh round trip", WX.evaluate(c.W), X.evaluate(c.W))
    return out


def run_equivalence_suite(M: int = 8, b_values=(1.0, 2.0), instances: int = 100, seed: int = 42,
                          tol: float = 1e-10) -> list[CheckResult]:
    results = []
    for bi, b in enumerate(b_values):
        ctx = _Ctx(binary_noise(b), M, stream(seed, TAG_EQUIVALENCE, bi))
        worst: dict[str, float] = {}
        for _ in range(instances):
            for k, v in equivalence_triple(ctx).items():
                worst[k] = max(worst.get(k, 0.0), v)
        results.extend(CheckResult(k, b, M, instances, v, tol) for k, v in worst.items())
    return results
