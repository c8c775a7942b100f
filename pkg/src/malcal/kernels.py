"""Discrete kernels on N^k, their step-function embeddings, and exact L2 geometry.

A kernel of order k with mesh n carries the inner product
``<f, g> = n^{-k} sum f(i) g(i)`` over k-tuples of positive integers.  Its
embedding is the piecewise-constant function ``u -> f(ceil(n u_1), ..., ceil(n u_k))``
on [0, inf)^k, so every cell has measure ``n^{-k}`` and the two norms agree.
"""
from __future__ import annotations

import csv
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

COST_GUARD = 2**24


class KernelValidationError(ValueError):
    pass


def _multiplicity(idx: tuple) -> int:
    """Number of distinct orderings of a tuple."""
    out = math.factorial(len(idx))
    for c in Counter(idx).values():
        out //= math.factorial(c)
    return out


def _on_diagonal(idx: tuple) -> bool:
    return len(set(idx)) < len(idx)


class DiscreteKernel:
    """Finitely supported function on k-tuples of positive integers.

    Symmetric kernels store one value per sorted tuple; lookups sort the index.
    """

    def __init__(self, k: int, n: int, values: Mapping[tuple, float] | None = None,
                 symmetric: bool = False, off_diagonal: bool = False):
        if k < 0 or n < 1:
            raise KernelValidationError(f"need k >= 0 and n >= 1, got k={k}, n={n}")
        self.k = int(k)
        self.n = int(n)
        self.symmetric = bool(symmetric) or self.k <= 1
        self.off_diagonal = bool(off_diagonal) or self.k <= 1
        data: dict[tuple, float] = {}
        for idx, v in (values or {}).items():
            idx = tuple(int(i) for i in (idx if isinstance(idx, tuple) else (idx,)))
            if len(idx) != self.k:
                raise KernelValidationError(f"index {idx} does not have length {self.k}")
            if any(i < 1 for i in idx):
                raise KernelValidationError(f"index {idx} has a non-positive entry")
            if self.symmetric:
                idx = tuple(sorted(idx))
                if idx in data and data[idx] != float(v):
                    raise KernelValidationError(f"kernel flagged symmetric but values differ at {idx}")
            if v != 0:
                data[idx] = float(v)
        if self.off_diagonal and self.k > 1:
            for idx in data:
                if _on_diagonal(idx):
                    raise KernelValidationError(f"kernel flagged off-diagonal but nonzero at {idx}")
        self._data = data

    # -- access -----------------------------------------------------------
    def __getitem__(self, idx) -> float:
        idx = tuple(idx) if isinstance(idx, (tuple, list)) else (idx,)
        if any(i < 1 for i in idx):
            return 0.0
        if self.symmetric:
            idx = tuple(sorted(idx))
        return self._data.get(idx, 0.0)

    def stored_items(self) -> Iterator[tuple[tuple, float]]:
        return iter(self._data.items())

    def items(self) -> Iterator[tuple[tuple, float]]:
        """Every nonzero (tuple, value), permutations of symmetric entries included."""
        if not self.symmetric or self.k <= 1:
            yield from self._data.items()
            return
        for idx, v in self._data.items():
            for perm in set(itertools.permutations(idx)):
                yield perm, v

    def __len__(self) -> int:
        return sum(_multiplicity(i) for i in self._data) if self.symmetric else len(self._data)

    @property
    def max_index(self) -> int:
        return max((max(i) for i in self._data if i), default=0)

    def is_zero(self) -> bool:
        return not self._data

    def scalar(self) -> float:
        if self.k != 0:
            raise ValueError("scalar() only for order-0 kernels")
        return self._data.get((), 0.0)

    # -- geometry ---------------------------------------------------------
    def norm_sq(self) -> float:
        if self.symmetric:
            s = math.fsum(_multiplicity(i) * v * v for i, v in self._data.items())
        else:
            s = math.fsum(v * v for v in self._data.values())
        return s / self.n**self.k

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def inner(self, other: "DiscreteKernel") -> float:
        _check_compatible(self, other)
        return math.fsum(v * other[i] for i, v in self.items()) / self.n**self.k

    def to_dense(self, size: int | None = None) -> np.ndarray:
        size = self.max_index if size is None else size
        if size**self.k > COST_GUARD:
            raise MemoryError(f"dense kernel of {size}^{self.k} cells exceeds the cost guard")
        out = np.zeros((size,) * self.k)
        for idx, v in self.items():
            if max(idx, default=0) <= size:
                out[tuple(i - 1 for i in idx)] = v
        return out

    # -- arithmetic -------------------------------------------------------
    def _combine(self, other: "DiscreteKernel", sign: float) -> "DiscreteKernel":
        _check_compatible(self, other)
        if self.symmetric and other.symmetric:
            vals = dict(self._data)
            for i, v in other._data.items():
                vals[i] = vals.get(i, 0.0) + sign * v
            return DiscreteKernel(self.k, self.n, vals, True, self.off_diagonal and other.off_diagonal)
        vals = dict(self.items())
        for i, v in other.items():
            vals[i] = vals.get(i, 0.0) + sign * v
        return DiscreteKernel(self.k, self.n, vals, False, self.off_diagonal and other.off_diagonal)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, c: float) -> "DiscreteKernel":
        return DiscreteKernel(self.k, self.n, {i: c * v for i, v in self._data.items()},
                              self.symmetric, self.off_diagonal)

    __rmul__ = __mul__

    def __repr__(self):
        return (f"DiscreteKernel(k={self.k}, n={self.n}, nnz={len(self._data)}, "
                f"symmetric={self.symmetric}, off_diagonal={self.off_diagonal})")

    def check_symmetric(self, samples: int = 64, rng: np.random.Generator | None = None) -> bool:
        """Spot-check permutation invariance on sampled stored tuples."""
        if self.symmetric:
            return True
        rng = rng or np.random.default_rng(0)
        keys = list(self._data)
        if not keys:
            return True
        for j in rng.choice(len(keys), size=min(samples, len(keys)), replace=False):
            idx = keys[j]
            for perm in itertools.permutations(idx):
                if not math.isclose(self[perm], self._data[idx], rel_tol=1e-12, abs_tol=1e-15):
                    return False
        return True


def _check_compatible(a: DiscreteKernel, b: DiscreteKernel):
    if a.k != b.k or a.n != b.n:
        raise KernelValidationError(f"kernels differ in order or mesh: ({a.k},{a.n}) vs ({b.k},{b.n})")


def zero_kernel(k: int, n: int) -> DiscreteKernel:
    return DiscreteKernel(k, n, {}, symmetric=True, off_diagonal=True)


def kernel_from_vector(values: Sequence[float], n: int) -> DiscreteKernel:
    """Order-1 kernel with ``f(i) = values[i-1]``."""
    return DiscreteKernel(1, n, {(i + 1,): float(v) for i, v in enumerate(values)})


def write_kernel_csv(f: DiscreteKernel, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"i{j + 1}" for j in range(f.k)] + ["value"])
    for idx, v in sorted(f.items()):
        w.writerow(list(idx) + [repr(v)])


# ---------------------------------------------------------------------------
# step functions


@dataclass(frozen=True)
class StepFunction:
    """``sum_j a_j 1_(lo_j, hi_j]`` on the real line."""

    terms: tuple[tuple[float, float, float], ...]

    @classmethod
    def indicator(cls, lo: float, hi: float, level: float = 1.0) -> "StepFunction":
        return cls(((float(level), float(lo), float(hi)),))

    @classmethod
    def zero(cls) -> "StepFunction":
        return cls(())

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, lo, hi in self.terms:
            out = out + a * ((x > lo) & (x <= hi))
        return out

    def breakpoints(self) -> np.ndarray:
        pts = {0.0}
        for _, lo, hi in self.terms:
            pts.update((max(lo, 0.0), max(hi, 0.0)))
        return np.array(sorted(pts))

    @property
    def total_variation_weight(self) -> float:
        return math.fsum(abs(a) for a, _, _ in self.terms)

    @property
    def support_end(self) -> float:
        return max((hi for a, _, hi in self.terms if a != 0), default=0.0)

    def as_tensor(self) -> "TensorStep":
        return TensorStep(((1.0, (self,)),))

    def __mul__(self, c: float) -> "StepFunction":
        return StepFunction(tuple((c * a, lo, hi) for a, lo, hi in self.terms))


@dataclass(frozen=True)
class TensorStep:
    """Finite sum of scaled tensor products of step functions, a target on [0, inf)^k."""

    terms: tuple[tuple[float, tuple[StepFunction, ...]], ...]

    @property
    def k(self) -> int:
        return len(self.terms[0][1]) if self.terms else 0

    def breakpoints(self, dim: int) -> np.ndarray:
        pts = {0.0}
        for _, gs in self.terms:
            pts.update(gs[dim].breakpoints().tolist())
        return np.array(sorted(pts))

    def cell_values(self, mids: Sequence[np.ndarray]) -> np.ndarray:
        out = np.zeros(tuple(len(m) for m in mids))
        for c, gs in self.terms:
            term = np.array(c)
            for g, m in zip(gs, mids):
                term = np.multiply.outer(term, g(m))
            out += term
        return out


def tensor_step(*factors: StepFunction, coef: float = 1.0) -> TensorStep:
    return TensorStep(((float(coef), tuple(factors)),))


def unit_cube(k: int, scale: float = 1.0) -> TensorStep:
    """``scale * 1_[0,1]^k`` (the left endpoint is a null set)."""
    return tensor_step(*([StepFunction.indicator(0.0, 1.0)] * k), coef=scale)


# ---------------------------------------------------------------------------
# discretization and embedding


def discretize(g: StepFunction, n: int) -> DiscreteKernel:
    """Order-1 kernel ``i -> g(i / n)``."""
    top = int(math.ceil(g.support_end * n)) if g.terms else 0
    idx = np.arange(1, top + 1)
    vals = g(idx / n) if top else np.zeros(0)
    return DiscreteKernel(1, n, {(int(i),): float(v) for i, v in zip(idx, vals) if v != 0})


class EmbeddedKernel:
    """Piecewise-constant function ``u -> f(ceil(n u))`` of a discrete kernel."""

    def __init__(self, kernel: DiscreteKernel):
        self.kernel = kernel
        self.k = kernel.k
        self.n = kernel.n

    def __call__(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        idx = np.ceil(u * self.n).astype(int)
        return np.array([self.kernel[tuple(row)] if np.all(row >= 1) else 0.0 for row in idx])

    def breakpoints(self, dim: int) -> np.ndarray:
        return np.arange(self.kernel.max_index + 1) / self.n

    def cell_values(self, mids: Sequence[np.ndarray]) -> np.ndarray:
        size = self.kernel.max_index
        dense = np.zeros((size + 1,) * self.k)
        if size:
            dense[(slice(0, size),) * self.k] = self.kernel.to_dense(size)
        # cell indices beyond the support read the trailing zero slab
        idx = [np.minimum(np.ceil(m * self.n).astype(int), size + 1) - 1 for m in mids]
        idx = [np.where(i < 0, size, i) for i in idx]
        return dense[np.ix_(*idx)]

    def norm(self) -> float:
        return l2_distance(self, None)

    def distance(self, target) -> float:
        return l2_distance(self, target)


def embed(f: DiscreteKernel) -> EmbeddedKernel:
    return EmbeddedKernel(f)


def _as_piecewise(obj):
    if isinstance(obj, DiscreteKernel):
        return EmbeddedKernel(obj)
    if isinstance(obj, StepFunction):
        return obj.as_tensor()
    return obj


def _refine(objs, k):
    grids, mids, widths = [], [], []
    for d in range(k):
        pts = np.unique(np.concatenate([o.breakpoints(d) for o in objs]))
        grids.append(pts)
        mids.append(0.5 * (pts[1:] + pts[:-1]))
        widths.append(np.diff(pts))
    ncells = math.prod(len(m) for m in mids)
    if ncells > COST_GUARD:
        raise MemoryError(f"common refinement has {ncells} cells, beyond the cost guard")
    return mids, widths


def _weights(widths):
    w = np.array(1.0)
    for wd in widths:
        w = np.multiply.outer(w, wd)
    return w


def l2_inner(a, b) -> float:
    """Exact L2 inner product of two piecewise-constant functions on [0, inf)^k."""
    a, b = _as_piecewise(a), _as_piecewise(b)
    k = a.k
    if b.k != k:
        raise KernelValidationError("orders differ")
    if k == 0:
        return float(_scalar(a) * _scalar(b))
    mids, widths = _refine([a, b], k)
    return float(np.sum(a.cell_values(mids) * b.cell_values(mids) * _weights(widths)))


def l2_distance(a, b=None) -> float:
    """Exact L2 distance; ``b=None`` gives the norm of ``a``."""
    a = _as_piecewise(a)
    b = _as_piecewise(b) if b is not None else None
    k = a.k
    if k == 0:
        return abs(_scalar(a) - (_scalar(b) if b is not None else 0.0))
    objs = [a] if b is None else [a, b]
    mids, widths = _refine(objs, k)
    diff = a.cell_values(mids)
    if b is not None:
        diff = diff - b.cell_values(mids)
    return math.sqrt(float(np.sum(diff * diff * _weights(widths))))


def _scalar(obj) -> float:
    if isinstance(obj, EmbeddedKernel):
        return obj.kernel.scalar()
    return math.fsum(c for c, _ in obj.terms)


# ---------------------------------------------------------------------------
# kernel operations


def symmetrize(F: DiscreteKernel) -> DiscreteKernel:
    """Average over all coordinate permutations."""
    if F.symmetric:
        return F
    acc: dict[tuple, float] = {}
    for idx, v in F.items():
        key = tuple(sorted(idx))
        acc[key] = acc.get(key, 0.0) + v
    # each sorted tuple collects one term per distinct ordering
    vals = {key: s / _multiplicity(key) for key, s in acc.items()}
    return DiscreteKernel(F.k, F.n, vals, symmetric=True, off_diagonal=F.off_diagonal)


def remove_diagonal(f: DiscreteKernel) -> DiscreteKernel:
    """Zero the kernel on tuples with a repeated index."""
    vals = {i: v for i, v in f.stored_items() if not _on_diagonal(i)}
    return DiscreteKernel(f.k, f.n, vals, symmetric=f.symmetric, off_diagonal=True)


def tensor_power(f: DiscreteKernel, k: int) -> DiscreteKernel:
    if f.k != 1:
        raise KernelValidationError("tensor_power expects an order-1 kernel")
    if k < 1:
        raise KernelValidationError("tensor power order must be >= 1")
    support = sorted(f.stored_items())
    if len(support) ** k > COST_GUARD:
        raise MemoryError(f"tensor power with {len(support)}^{k} entries exceeds the cost guard")
    vals = {}
    for combo in itertools.combinations_with_replacement(support, k):
        idx = tuple(i[0] for i, _ in combo)
        vals[idx] = math.prod(v for _, v in combo)
    return DiscreteKernel(k, f.n, vals, symmetric=True)


def process_kernel(Z: Sequence[DiscreteKernel]) -> DiscreteKernel:
    """Stack kernels ``Z[i-1]`` (order k) into one order-(k+1) kernel with time last."""
    if not Z:
        raise KernelValidationError("empty process")
    k, n = Z[0].k, Z[0].n
    vals = {}
    for i, z in enumerate(Z, start=1):
        if z.k != k or z.n != n:
            raise KernelValidationError("process components differ in order or mesh")
        for idx, v in z.items():
            vals[idx + (i,)] = v
    return DiscreteKernel(k + 1, n, vals, symmetric=False)


def chaos_tail(kernels: Iterable[DiscreteKernel], m: int, weighted: bool = False) -> float:
    """``sum_{k >= m} k! ||f_k||^2`` (times k when weighted)."""
    total = []
    for f in kernels:
        if f.k >= m:
            w = math.factorial(f.k) * (f.k if weighted else 1)
            total.append(w * f.norm_sq())
    return math.fsum(total)
