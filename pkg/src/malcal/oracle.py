"""Brute-force ground truth over the full product sample space.

Every random variable is materialized as a tensor of shape ``(A,)*M`` whose
axis j carries the atom index of coordinate j+1.  Conditional expectations are
weighted averages over the free axes.  Nothing here relies on the binary
difference formulas or on the Walsh algebra.
"""
from __future__ import annotations

import math
from typing import Iterable, Iterator, Sequence

import numpy as np

from .functionals import RandomVariableFn, digits
from .noise import NoiseSpec

COST_GUARD = 2**24


class CostGuardError(RuntimeError):
    pass


class EnumeratedSpace:
    """All ``A^M`` outcomes in mixed-radix little-endian order (coordinate 1 fastest)."""

    def __init__(self, spec: NoiseSpec, M: int):
        if M < 1:
            raise ValueError("M must be positive")
        count = spec.size**M
        if count > COST_GUARD:
            raise CostGuardError(f"{spec.size}^{M} = {count} outcomes exceeds the 2^24 guard")
        self.spec = spec
        self.M = M
        self.A = spec.size
        idx = np.arange(count)
        dig = (idx[:, None] // (self.A ** np.arange(M))) % self.A
        self.digits = dig
        self.outcomes = spec.values_array()[dig]
        self.weights = np.prod(spec.probs_array()[dig], axis=1)
        self.shape = (self.A,) * M
        # per-axis probability and value vectors shaped for broadcasting
        self._p = [self._axis_vec(spec.probs_array(), j) for j in range(M)]
        self._v = [self._axis_vec(spec.values_array(), j) for j in range(M)]

    def _axis_vec(self, vec, j):
        shape = [1] * self.M
        shape[j] = self.A
        return vec.reshape(shape)

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self) -> Iterator[tuple[np.ndarray, float]]:
        return iter(zip(self.outcomes, self.weights))

    # -- tensors ----------------------------------------------------------
    def tensor(self, X: RandomVariableFn) -> np.ndarray:
        if X.M != self.M:
            raise ValueError(f"functional horizon {X.M} != space horizon {self.M}")
        return X.evaluate(self.outcomes).reshape(self.shape, order="F")

    def flat(self, T: np.ndarray) -> np.ndarray:
        return np.asarray(T).reshape(-1, order="F")

    def xi(self, i: int) -> np.ndarray:
        """Tensor of the i-th increment (one-based)."""
        self._check_index(i)
        return np.broadcast_to(self._v[i - 1], self.shape)

    def weight_tensor(self) -> np.ndarray:
        return self.weights.reshape(self.shape, order="F")

    def _check_index(self, i):
        if not 1 <= i <= self.M:
            raise IndexError(f"coordinate {i} outside 1..{self.M}")

    def expect(self, T: np.ndarray) -> float:
        return math.fsum(self.flat(T) * self.weights)

    def cond(self, T: np.ndarray, given: Iterable[int]) -> np.ndarray:
        """E[T | coordinates in ``given``] as a full-shape tensor."""
        given = {int(g) for g in given}
        for g in given:
            self._check_index(g)
        out = np.asarray(T, dtype=float)
        for j in range(self.M):
            if j + 1 not in given:
                out = np.sum(out * self._p[j], axis=j, keepdims=True)
        return np.broadcast_to(out, self.shape).copy()

    def value_at(self, T: np.ndarray, outcome) -> float:
        d = digits(self.spec, np.asarray(outcome, dtype=float))
        return float(np.asarray(T)[tuple(d)])


# ---------------------------------------------------------------------------
# functional-level API


def expectation(space: EnumeratedSpace, X: RandomVariableFn) -> float:
    return space.expect(space.tensor(X))


def conditional_expectation(space: EnumeratedSpace, X: RandomVariableFn,
                            given: Sequence[int], at: Sequence[float]) -> float:
    """Average of X over the coordinates outside ``given`` with ``given`` fixed to ``at``."""
    given = [int(g) for g in given]
    if len(given) != len(at):
        raise ValueError("partial outcome must assign exactly the given coordinates")
    at_d = digits(space.spec, np.asarray(at, dtype=float)) if len(at) else np.zeros(0, int)
    T = space.cond(space.tensor(X), given)
    index = [0] * space.M
    for g, d in zip(given, at_d):
        index[g - 1] = int(d)
    return float(T[tuple(index)])


def malliavin_tensor(space: EnumeratedSpace, T: np.ndarray, i: int, n: int) -> np.ndarray:
    """``sqrt(n) E[xi_i T | F_{-i}]``."""
    others = [j for j in range(1, space.M + 1) if j != i]
    return math.sqrt(n) * space.cond(space.xi(i) * T, others)


def skorokhod_tensor(space: EnumeratedSpace, Z: Sequence[np.ndarray], n: int) -> np.ndarray:
    """``sum_i E[Z_i | F_{-i}] xi_i / sqrt(n)`` over the components given."""
    if len(Z) > space.M:
        raise ValueError("more integrand components than coordinates")
    out = np.zeros(space.shape)
    for i, Zi in enumerate(Z, start=1):
        others = [j for j in range(1, space.M + 1) if j != i]
        out += space.cond(Zi, others) * space.xi(i) / math.sqrt(n)
    return out


def clark_ocone_tensor(space: EnumeratedSpace, T: np.ndarray, i: int, n: int) -> np.ndarray:
    """``sqrt(n) E[xi_i T | F_{i-1}]``."""
    space._check_index(i)
    return math.sqrt(n) * space.cond(space.xi(i) * T, range(1, i))


def oracle_malliavin(space: EnumeratedSpace, X: RandomVariableFn, i: int, outcome, n: int) -> float:
    return space.value_at(malliavin_tensor(space, space.tensor(X), i, n), outcome)


def oracle_skorokhod(space: EnumeratedSpace, Z, N: int, outcome, n: int) -> float:
    comps = [space.tensor(Z[i]) for i in range(1, N + 1)]
    return space.value_at(skorokhod_tensor(space, comps, n), outcome)


def oracle_clark_ocone(space: EnumeratedSpace, X: RandomVariableFn, i: int, outcome, n: int) -> float:
    return space.value_at(clark_ocone_tensor(space, space.tensor(X), i, n), outcome)


def walsh_basis_tensor(space: EnumeratedSpace, subset: Iterable[int]) -> np.ndarray:
    out = np.ones(space.shape)
    for i in subset:
        out = out * space.xi(i)
    return out
