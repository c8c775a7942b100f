"""Exact calculus for binary noise through Walsh coefficients.

A functional of ``xi_1..xi_M`` is stored as a sparse map from subsets of
{1..M} (bitmask, bit i-1 for coordinate i) to the coefficient of
``Xi_A = prod_{i in A} xi_i``.  The basis is orthonormal, and products reduce
through ``xi^2 = 1 + (b - 1/b) xi``.
"""
from __future__ import annotations

import csv
import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .functionals import RandomVariableFn
from .kernels import DiscreteKernel, KernelValidationError, zero_kernel
from .noise import NoiseSpec, binary_noise

DENSE_LIMIT = 24


def mask_of(subset: Iterable[int]) -> int:
    m = 0
    for i in subset:
        m |= 1 << (int(i) - 1)
    return m


def subset_of(mask: int) -> tuple[int, ...]:
    out, i = [], 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def _submasks(mask: int):
    s = mask
    while True:
        yield s
        if s == 0:
            return
        s = (s - 1) & mask


class WalshVector:
    """Sparse Walsh expansion over binary(b) noise on horizon M."""

    __slots__ = ("M", "b", "coeffs")

    def __init__(self, M: int, b: float, coeffs: Mapping | None = None):
        if M < 1:
            raise ValueError("M must be positive")
        self.M = int(M)
        self.b = float(b)
        top = 1 << self.M
        data = {}
        for key, v in (coeffs or {}).items():
            m = key if isinstance(key, int) else mask_of(key)
            if m < 0 or m >= top:
                raise ValueError(f"subset {subset_of(m)} not within 1..{self.M}")
            if v != 0:
                data[m] = data.get(m, 0.0) + float(v)
        self.coeffs = data

    # -- basics -----------------------------------------------------------
    @property
    def c(self) -> float:
        return self.b - 1.0 / self.b

    def _like(self, coeffs) -> "WalshVector":
        return WalshVector(self.M, self.b, coeffs)

    def coeff(self, subset) -> float:
        m = subset if isinstance(subset, int) else mask_of(subset)
        return self.coeffs.get(m, 0.0)

    def mean(self) -> float:
        return self.coeffs.get(0, 0.0)

    def inner(self, other: "WalshVector") -> float:
        _compatible(self, other)
        small, big = sorted((self.coeffs, other.coeffs), key=len)
        return math.fsum(v * big.get(m, 0.0) for m, v in small.items())

    def norm_sq(self) -> float:
        return math.fsum(v * v for v in self.coeffs.values())

    def __add__(self, other: "WalshVector") -> "WalshVector":
        _compatible(self, other)
        out = dict(self.coeffs)
        for m, v in other.coeffs.items():
            out[m] = out.get(m, 0.0) + v
        return self._like(out)

    def __sub__(self, other: "WalshVector") -> "WalshVector":
        return self + other * -1.0

    def __mul__(self, other):
        if isinstance(other, WalshVector):
            return multiply(self, other)
        return self._like({m: float(other) * v for m, v in self.coeffs.items()})

    __rmul__ = __mul__

    def max_abs_diff(self, other: "WalshVector") -> float:
        keys = set(self.coeffs) | set(other.coeffs)
        return max((abs(self.coeff(k) - other.coeff(k)) for k in keys), default=0.0)

    def __repr__(self):
        items = sorted(self.coeffs.items())[:6]
        body = ", ".join(f"{set(subset_of(m)) or '{}'}: {v:.6g}" for m, v in items)
        more = "" if len(self.coeffs) <= 6 else ", ..."
        return f"WalshVector(M={self.M}, b={self.b:g}, {{{body}{more}}})"

    # -- evaluation -------------------------------------------------------
    def evaluate(self, outcomes) -> np.ndarray:
        W = np.atleast_2d(np.asarray(outcomes, dtype=float))
        out = np.zeros(len(W))
        for m, v in self.coeffs.items():
            cols = [i - 1 for i in subset_of(m)]
            out += v * np.prod(W[:, cols], axis=1)
        return out

    def as_function(self, label: str = "walsh") -> RandomVariableFn:
        return RandomVariableFn(self.M, lambda w: float(self.evaluate(w)[0]), label, self.evaluate)

    def dump_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(["subset", "coefficient"])
        for m in sorted(self.coeffs, key=lambda m: (bin(m).count("1"), subset_of(m))):
            w.writerow([",".join(str(i) for i in subset_of(m)), repr(self.coeffs[m])])


def _compatible(x: WalshVector, y: WalshVector):
    if x.M != y.M or x.b != y.b:
        raise ValueError(f"Walsh vectors differ: (M={x.M}, b={x.b}) vs (M={y.M}, b={y.b})")


def _binary_b(spec: NoiseSpec) -> float:
    if not spec.is_binary:
        raise ValueError("Walsh engine needs binary noise")
    b = spec.b
    if not np.allclose(spec.values, (-1.0 / b, b), rtol=0, atol=1e-12):
        raise ValueError("Walsh engine needs atoms ordered (-1/b, b)")
    return b


# ---------------------------------------------------------------------------
# construction


def constant(M: int, b: float, c: float) -> WalshVector:
    return WalshVector(M, b, {0: c})


def basis(M: int, b: float, subset: Iterable[int], coef: float = 1.0) -> WalshVector:
    return WalshVector(M, b, {mask_of(subset): coef})


def walk_walsh(M: int, b: float, n: int, m: int | None = None) -> WalshVector:
    """``B^n_{m/n}`` with m defaulting to M."""
    m = M if m is None else m
    return WalshVector(M, b, {1 << (i - 1): 1.0 / math.sqrt(n) for i in range(1, m + 1)})


def from_function(X: RandomVariableFn, spec: NoiseSpec, n: int | None = None) -> WalshVector:
    """Coefficients ``E[X Xi_A]`` from the values of X on all 2^M outcomes."""
    b = _binary_b(spec)
    M = X.M
    if M > DENSE_LIMIT:
        raise MemoryError(f"2^{M} outcomes exceeds the 2^{DENSE_LIMIT} guard")
    vals, probs = spec.values_array(), spec.probs_array()
    idx = np.arange(1 << M)
    bits = (idx[:, None] >> np.arange(M)) & 1
    T = X.evaluate(vals[bits]).reshape((2,) * M, order="F")
    # per-axis transform: slot 0 -> E over the atom, slot 1 -> E[xi * .]
    Tm = np.array([probs, probs * vals])
    for j in range(M):
        T = np.moveaxis(np.tensordot(Tm, T, axes=([1], [j])), 0, j)
    flat = T.reshape(-1, order="F")
    nz = np.nonzero(flat)[0]
    return WalshVector(M, b, {int(m): float(flat[m]) for m in nz})


def to_tensor(X: WalshVector) -> np.ndarray:
    """Values at all 2^M outcomes, axis j holding the digit of coordinate j+1."""
    if X.M > DENSE_LIMIT:
        raise MemoryError(f"2^{X.M} outcomes exceeds the guard")
    spec = binary_noise(X.b)
    vals = spec.values_array()
    idx = np.arange(1 << X.M)
    bits = (idx[:, None] >> np.arange(X.M)) & 1
    return X.evaluate(vals[bits]).reshape((2,) * X.M, order="F")


# ---------------------------------------------------------------------------
# algebra


def multiply(X: WalshVector, Y: WalshVector) -> WalshVector:
    """Pointwise product via ``Xi_A Xi_B = prod_{i in A&B} (1 + c xi_i) Xi_{A^B}``."""
    _compatible(X, Y)
    c = X.c
    out: dict[int, float] = {}
    for a, va in X.coeffs.items():
        for bm, vb in Y.coeffs.items():
            inter, sym = a & bm, a ^ bm
            v = va * vb
            if c == 0.0 or inter == 0:
                out[sym] = out.get(sym, 0.0) + v
                continue
            for t in _submasks(inter):
                key = sym | t
                out[key] = out.get(key, 0.0) + v * c ** bin(t).count("1")
    return X._like(out)


def malliavin_derivative_walsh(X: WalshVector, i: int, n: int) -> WalshVector:
    """``D^n_i Xi_A = sqrt(n) Xi_{A minus i}`` for i in A, zero otherwise."""
    _check(i, X.M)
    bit, r = 1 << (i - 1), math.sqrt(n)
    return X._like({m ^ bit: r * v for m, v in X.coeffs.items() if m & bit})


def skorokhod_walsh(Z: Sequence[WalshVector], n: int) -> WalshVector:
    """``delta^n`` of ``Z_1..Z_N``: coefficient of B is ``n^{-1/2} sum_{i in B} Z_i(B minus i)``."""
    if not Z:
        raise ValueError("empty integrand")
    for z in Z:
        _compatible(Z[0], z)
    if len(Z) > Z[0].M:
        raise ValueError("integrand longer than the horizon")
    r = math.sqrt(n)
    out: dict[int, float] = {}
    for i, z in enumerate(Z, start=1):
        bit = 1 << (i - 1)
        for m, v in z.coeffs.items():
            if not m & bit:
                out[m | bit] = out.get(m | bit, 0.0) + v / r
    return Z[0]._like(out)


def clark_ocone_walsh(X: WalshVector, i: int, n: int) -> WalshVector:
    """``nabla^n_i``: keep subsets whose largest element is i, then drop i."""
    _check(i, X.M)
    bit, r = 1 << (i - 1), math.sqrt(n)
    return X._like({m ^ bit: r * v for m, v in X.coeffs.items() if m & bit and m < (bit << 1)})


def conditional_expectation_walsh(X: WalshVector, i: int) -> WalshVector:
    """``E[X | F_i]``, the projection onto subsets of {1..i}."""
    if not 0 <= i <= X.M:
        raise IndexError(f"i={i} outside 0..{X.M}")
    return X._like({m: v for m, v in X.coeffs.items() if m < (1 << i)})


projection_H_i = conditional_expectation_walsh


def conditional_expectation_minus_i_walsh(X: WalshVector, i: int) -> WalshVector:
    """``E[X | F_{-i}]``: drop subsets containing i."""
    _check(i, X.M)
    bit = 1 << (i - 1)
    return X._like({m: v for m, v in X.coeffs.items() if not m & bit})


def predictable_sum(X: WalshVector, n: int) -> WalshVector:
    """``E[X] + sum_i nabla_i X xi_i / sqrt(n)`` computed in the Walsh algebra."""
    out = constant(X.M, X.b, X.mean())
    r = math.sqrt(n)
    for i in range(1, X.M + 1):
        out = out + multiply(clark_ocone_walsh(X, i, n), basis(X.M, X.b, [i], 1.0 / r))
    return out


def _check(i: int, M: int):
    if not 1 <= i <= M:
        raise IndexError(f"coordinate {i} outside 1..{M}")


# ---------------------------------------------------------------------------
# Wick exponentials and multiple integrals


def wick_exponential_walsh(f: DiscreteKernel, n: int, M: int, b: float, max_terms: int = 2**22) -> WalshVector:
    """Coefficient of A is ``n^{-|A|/2} prod_{i in A} f(i)``."""
    if f.k != 1:
        raise KernelValidationError("expected an order-1 kernel")
    if f.max_index > M:
        raise ValueError("kernel support beyond the horizon")
    support = sorted((i[0], v) for i, v in f.stored_items())
    if 2 ** len(support) > max_terms:
        raise MemoryError(f"2^{len(support)} Walsh terms exceeds the guard")
    r = math.sqrt(n)
    coeffs = {0: 1.0}
    for i, v in support:
        bit = 1 << (i - 1)
        coeffs.update({m | bit: c * v / r for m, c in list(coeffs.items())})
    return WalshVector(M, b, coeffs)


def mobius_basis(B: Iterable[int], n: int, M: int, b: float) -> WalshVector:
    """``n^{|B|/2} sum_{C subset B} (-1)^{|B|-|C|} exp(I(1_C))``; equals Xi_B."""
    mask = mask_of(B)
    size = bin(mask).count("1")
    out = WalshVector(M, b)
    for C in _submasks(mask):
        ind = DiscreteKernel(1, n, {(i,): 1.0 for i in subset_of(C)})
        sign = -1.0 if (size - bin(C).count("1")) % 2 else 1.0
        out = out + wick_exponential_walsh(ind, n, M, b) * sign
    return out * n ** (size / 2)


def _validate_chaos_kernel(f: DiscreteKernel):
    if f.k <= 1:
        return
    for idx, v in f.items():
        if len(set(idx)) < len(idx):
            raise KernelValidationError(f"kernel does not vanish on the diagonal at {idx}")
        if not f.symmetric:
            for j in range(f.k - 1):
                swapped = idx[:j] + (idx[j + 1], idx[j]) + idx[j + 2:]
                if abs(f[swapped] - v) > 1e-12 * max(1.0, abs(v)):
                    raise KernelValidationError(f"kernel is not symmetric at {idx}")


def multiple_wiener_walsh(f: DiscreteKernel, n: int, M: int, b: float) -> WalshVector:
    """``I^{n,k}(f)``: coefficient of {i1<..<ik} is ``n^{-k/2} k! f(i1..ik)``."""
    _validate_chaos_kernel(f)
    if f.max_index > M:
        raise ValueError("kernel support beyond the horizon")
    scale = math.factorial(f.k) / n ** (f.k / 2)
    coeffs = {}
    for idx, v in f.items():
        if list(idx) == sorted(idx):
            coeffs[mask_of(idx)] = scale * v
    return WalshVector(M, b, coeffs)


def chaos_coefficients(X: WalshVector, n: int) -> list[DiscreteKernel]:
    """Kernels ``f^{n,k}_X`` for k = 0..M, symmetric and zero on the diagonal."""
    by_order: dict[int, dict] = {}
    for m, v in X.coeffs.items():
        s = subset_of(m)
        k = len(s)
        by_order.setdefault(k, {})[s] = v * n ** (k / 2) / math.factorial(k)
    return [DiscreteKernel(k, n, by_order[k], symmetric=True, off_diagonal=True)
            if k in by_order else zero_kernel(k, n) for k in range(X.M + 1)]


def from_chaos(kernels: Sequence[DiscreteKernel], n: int, M: int, b: float) -> WalshVector:
    out = WalshVector(M, b)
    for f in kernels:
        if f.k == 0:
            out = out + constant(M, b, f.scalar())
        elif not f.is_zero():
            out = out + multiple_wiener_walsh(f, n, M, b)
    return out


def chaos_tail_mass(X: WalshVector, m: int, weighted: bool = False) -> float:
    """``sum_{|A| >= m} X_A^2`` (times |A| when weighted), which equals the kernel tail sum."""
    terms = []
    for mask, v in X.coeffs.items():
        k = bin(mask).count("1")
        if k >= m:
            terms.append((k if weighted else 1) * v * v)
    return math.fsum(terms)
