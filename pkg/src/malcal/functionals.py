"""Random variables and processes as evaluation maps on increment vectors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .noise import NoiseSpec


@dataclass(frozen=True)
class RandomVariableFn:
    """A functional of the first ``M`` increments.

    ``fn`` maps one length-M vector to a float.  ``batch`` (optional) maps an
    array of shape (rows, M) to a vector of rows; it must agree with ``fn``.
    """

    M: int
    fn: Callable[[np.ndarray], float]
    label: str = "X"
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __call__(self, outcome) -> float:
        outcome = np.asarray(outcome, dtype=float)
        if outcome.shape[-1] != self.M:
            raise ValueError(f"{self.label}: expected {self.M} increments, got {outcome.shape[-1]}")
        return float(self.fn(outcome))

    def evaluate(self, outcomes: np.ndarray) -> np.ndarray:
        outcomes = np.atleast_2d(np.asarray(outcomes, dtype=float))
        if outcomes.shape[1] != self.M:
            raise ValueError(f"{self.label}: expected {self.M} columns, got {outcomes.shape[1]}")
        if self.batch is not None:
            return np.asarray(self.batch(outcomes), dtype=float)
        return np.array([self.fn(row) for row in outcomes], dtype=float)

    def __mul__(self, other: "RandomVariableFn") -> "RandomVariableFn":
        _same_horizon(self, other)
        return RandomVariableFn(self.M, lambda w: self.fn(w) * other.fn(w), f"{self.label}*{other.label}",
                                lambda W: self.evaluate(W) * other.evaluate(W))


def _same_horizon(a, b):
    if a.M != b.M:
        raise ValueError(f"horizons differ: {a.M} vs {b.M}")


@dataclass(frozen=True)
class DiscreteProcessFn:
    """Family ``Z_1..Z_N`` of random variables on a common horizon."""

    components: tuple[RandomVariableFn, ...]
    predictable: bool = False

    def __post_init__(self):
        if not self.components:
            raise ValueError("process needs at least one component")
        M = self.components[0].M
        if any(c.M != M for c in self.components):
            raise ValueError("process components differ in horizon")

    @property
    def M(self) -> int:
        return self.components[0].M

    @property
    def N(self) -> int:
        return len(self.components)

    def __getitem__(self, i: int) -> RandomVariableFn:
        """One-based component access."""
        if not 1 <= i <= self.N:
            raise IndexError(f"component {i} outside 1..{self.N}")
        return self.components[i - 1]


def constant(M: int, c: float) -> RandomVariableFn:
    return RandomVariableFn(M, lambda w: c, f"{c:g}", lambda W: np.full(len(W), float(c)))


def coordinate_product(M: int, idx: Sequence[int]) -> RandomVariableFn:
    """``prod_{i in idx} xi_i`` with one-based indices."""
    cols = [i - 1 for i in idx]
    return RandomVariableFn(M, lambda w: float(np.prod(w[cols])), f"Xi{tuple(idx)}",
                            lambda W: np.prod(W[:, cols], axis=1))


def walk_at(M: int, n: int, m: int) -> RandomVariableFn:
    """``B^n_{m/n} = n^{-1/2} sum_{i <= m} xi_i``."""
    r = np.sqrt(n)
    return RandomVariableFn(M, lambda w: float(np.sum(w[:m]) / r), f"B^{n}_{m}/{n}",
                            lambda W: W[:, :m].sum(axis=1) / r)


def digits(spec: NoiseSpec, outcomes: np.ndarray) -> np.ndarray:
    """Atom index of every entry; raises on values that are not atoms."""
    vals = spec.values_array()
    outcomes = np.asarray(outcomes, dtype=float)
    d = np.argmin(np.abs(outcomes[..., None] - vals), axis=-1)
    if not np.allclose(vals[d], outcomes, rtol=0, atol=1e-9):
        raise ValueError(f"outcome contains a value that is not an atom of {spec.label}")
    return d


def table_function(spec: NoiseSpec, table: np.ndarray, label: str = "table") -> RandomVariableFn:
    """Functional given by its value at every outcome.

    ``table`` has shape ``(A,)*M`` where axis j holds the atom index of coordinate j+1.
    """
    table = np.asarray(table, dtype=float)
    M = table.ndim
    A = spec.size
    if table.shape != (A,) * M:
        raise ValueError(f"table must have shape {(A,) * M}")
    flat = table.reshape(-1, order="F")
    radix = A ** np.arange(M)

    def batch(W):
        return flat[digits(spec, W) @ radix]

    return RandomVariableFn(M, lambda w: float(batch(w[None, :])[0]), label, batch)


def random_table_function(spec: NoiseSpec, M: int, rng: np.random.Generator, label: str = "random") -> RandomVariableFn:
    return table_function(spec, rng.standard_normal((spec.size,) * M), label)


def random_process(spec: NoiseSpec, M: int, N: int, rng: np.random.Generator) -> DiscreteProcessFn:
    return DiscreteProcessFn(tuple(random_table_function(spec, M, rng, f"Z{i + 1}") for i in range(N)))
