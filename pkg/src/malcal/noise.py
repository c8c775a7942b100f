"""Finite-atom noise distributions for the random-walk increments."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

TOL = 1e-12


class NoiseValidationError(ValueError):
    """Raised when an atom list violates one of the noise invariants."""


@dataclass(frozen=True)
class NoiseSpec:
    """Distribution of a single increment: finitely many atoms, mean 0, variance 1.

    Atoms keep the order they were given in; that order defines the digit
    encoding used by every exact enumeration in the package.
    """

    values: tuple[float, ...]
    probs: tuple[float, ...]
    label: str = "custom"

    def __post_init__(self):
        _validate(self.values, self.probs)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values, self.probs))

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def is_binary(self) -> bool:
        return self.size == 2

    @property
    def b(self) -> float:
        """Binary parameter b, defined when the atoms are (-1/b, b)."""
        if not self.is_binary:
            raise ValueError(f"noise {self.label!r} is not binary")
        return max(self.values)

    def values_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def probs_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def describe(self) -> dict:
        return {"label": self.label, "atoms": [[v, p] for v, p in self.atoms]}


def _validate(values, probs):
    if len(values) != len(probs):
        raise NoiseValidationError("atom values and probabilities differ in length")
    if len(values) < 2:
        raise NoiseValidationError("at least 2 atoms required")
    if not all(math.isfinite(v) for v in values) or not all(math.isfinite(p) for p in probs):
        raise NoiseValidationError("atoms must be finite")
    if len(set(values)) != len(values):
        raise NoiseValidationError("atom values must be pairwise distinct")
    if any(p <= 0 for p in probs):
        raise NoiseValidationError("probabilities must be strictly positive")
    total = math.fsum(probs)
    if abs(total - 1.0) > TOL:
        raise NoiseValidationError(f"probabilities sum to {total!r}, not 1")
    mean = math.fsum(p * v for v, p in zip(values, probs))
    if abs(mean) > TOL:
        raise NoiseValidationError(f"mean = {mean!r} != 0")
    var = math.fsum(p * v * v for v, p in zip(values, probs))
    if abs(var - 1.0) > TOL:
        raise NoiseValidationError(f"variance = {var!r} != 1")


def binary_noise(b: float) -> NoiseSpec:
    """Two-point law P(xi = -1/b) = b^2/(b^2+1), P(xi = b) = 1/(b^2+1)."""
    b = float(b)
    if not math.isfinite(b) or b <= 0:
        raise NoiseValidationError(f"binary parameter must be finite and positive, got {b!r}")
    b2 = b * b
    return NoiseSpec(
        values=(-1.0 / b, b),
        probs=(b2 / (b2 + 1.0), 1.0 / (b2 + 1.0)),
        label=f"binary(b={b:g})",
    )


def custom_noise(atoms: Iterable[tuple[float, float]], label: str = "custom") -> NoiseSpec:
    """Build a NoiseSpec from ``(value, probability)`` pairs. Nothing is renormalized."""
    atoms = [(float(v), float(p)) for v, p in atoms]
    return NoiseSpec(
        values=tuple(v for v, _ in atoms),
        probs=tuple(p for _, p in atoms),
        label=label,
    )


def noise_from_config(cfg: Mapping) -> NoiseSpec:
    """Parse ``{kind = "binary", b = 1.0}`` or ``{kind = "atoms", atoms = [[v, p], ...]}``."""
    kind = cfg.get("kind", "binary" if "b" in cfg else "atoms")
    if kind == "binary":
        return binary_noise(cfg.get("b", 1.0))
    if kind == "atoms":
        if "atoms" not in cfg:
            raise NoiseValidationError("atom list missing from noise config")
        return custom_noise(cfg["atoms"], label=cfg.get("label", "custom"))
    raise NoiseValidationError(f"unknown noise kind {kind!r}")


def sample(spec: NoiseSpec, stream: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. increments; reproducible given the stream state."""
    if spec.is_binary:
        # one uniform per draw keeps the binary path cheap for long walks
        up = stream.random(count) < spec.probs[1]
        return np.where(up, spec.values[1], spec.values[0])
    idx = stream.choice(spec.size, size=count, p=spec.probs_array())
    return spec.values_array()[idx]
