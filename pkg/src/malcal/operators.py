"""Pathwise discrete operators for finite-atom noise on a finite horizon.

Conditional expectations over a single coordinate are computed by summing
over the atoms of that coordinate with everything else held fixed.  Binary
noise additionally has closed difference formulas; both routes are exposed so
they can be checked against each other.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .functionals import DiscreteProcessFn, RandomVariableFn
from .kernels import COST_GUARD, DiscreteKernel, StepFunction, discretize
from .noise import NoiseSpec, sample
from .paths import WalkPath


class CostGuardError(RuntimeError):
    pass


def _check_coord(i: int, M: int):
    if not 1 <= i <= M:
        raise IndexError(f"coordinate {i} outside 1..{M}")


def _kernel_vector(f: DiscreteKernel, M: int) -> np.ndarray:
    if f.k != 1:
        raise ValueError("expected an order-1 kernel")
    if f.max_index > M:
        raise ValueError(f"kernel support reaches {f.max_index} beyond horizon {M}")
    out = np.zeros(M)
    for (i,), v in f.stored_items():
        out[i - 1] = v
    return out


# ---------------------------------------------------------------------------
# Wick exponential


def wick_exponential(f: DiscreteKernel, outcome, n: int) -> float:
    """``prod_i (1 + f(i) xi_i / sqrt(n))``."""
    w = np.atleast_1d(np.asarray(outcome, dtype=float))
    fv = _kernel_vector(f, w.shape[-1])
    return float(np.prod(1.0 + fv * w / math.sqrt(n)))


def wick_exponential_fn(f: DiscreteKernel, M: int, n: int) -> RandomVariableFn:
    fv = _kernel_vector(f, M)
    r = math.sqrt(n)
    return RandomVariableFn(M, lambda w: float(np.prod(1.0 + fv * w / r)), "wick",
                            lambda W: np.prod(1.0 + fv * W / r, axis=1))


def wick_second_moment(f: DiscreteKernel, n: int) -> float:
    """Closed form ``prod_i (1 + f(i)^2 / n)``."""
    return math.prod(1.0 + v * v / n for _, v in f.stored_items())


# ---------------------------------------------------------------------------
# single-coordinate conditional expectations (batch over rows)


def _substituted(W: np.ndarray, i: int, a: float) -> np.ndarray:
    V = W.copy()
    V[:, i - 1] = a
    return V


def cond_minus_i_batch(X: RandomVariableFn, i: int, outcomes: np.ndarray, spec: NoiseSpec,
                       weight_by_xi: bool = False) -> np.ndarray:
    """``E[X | F_{-i}]`` (or ``E[xi_i X | F_{-i}]``) at each row by summing over atoms."""
    W = np.atleast_2d(np.asarray(outcomes, dtype=float))
    _check_coord(i, X.M)
    acc = np.zeros(len(W))
    for a, p in spec.atoms:
        acc += (p * a if weight_by_xi else p) * X.evaluate(_substituted(W, i, a))
    return acc


def malliavin_derivative_batch(X: RandomVariableFn, i: int, outcomes, spec: NoiseSpec, n: int,
                               route: str = "auto") -> np.ndarray:
    W = np.atleast_2d(np.asarray(outcomes, dtype=float))
    _check_coord(i, X.M)
    if route == "auto":
        route = "binary" if spec.is_binary else "atoms"
    if route == "binary":
        b = spec.b
        hi = X.evaluate(_substituted(W, i, b))
        lo = X.evaluate(_substituted(W, i, -1.0 / b))
        return math.sqrt(n) * b / (b * b + 1.0) * (hi - lo)
    if route == "atoms":
        return math.sqrt(n) * cond_minus_i_batch(X, i, W, spec, weight_by_xi=True)
    raise ValueError(f"unknown route {route!r}")


def malliavin_derivative(X: RandomVariableFn, i: int, outcome, spec: NoiseSpec, n: int,
                         route: str = "auto") -> float:
    """``D^n_i X = sqrt(n) E[xi_i X | F_{-i}]`` at one outcome."""
    return float(malliavin_derivative_batch(X, i, outcome, spec, n, route)[0])


def malliavin_derivative_fn(X: RandomVariableFn, i: int, spec: NoiseSpec, n: int,
                            route: str = "auto") -> RandomVariableFn:
    return RandomVariableFn(X.M, lambda w: malliavin_derivative(X, i, w, spec, n, route),
                            f"D{i}{X.label}",
                            lambda W: malliavin_derivative_batch(X, i, W, spec, n, route))


def skorokhod_integral_batch(Z: DiscreteProcessFn, N: int, outcomes, spec: NoiseSpec, n: int,
                             route: str = "auto") -> np.ndarray:
    if N > Z.M or N > Z.N:
        raise ValueError(f"N={N} exceeds horizon M={Z.M} or process length {Z.N}")
    W = np.atleast_2d(np.asarray(outcomes, dtype=float))
    if route == "auto":
        route = "binary" if spec.is_binary else "atoms"
    r = math.sqrt(n)
    out = np.zeros(len(W))
    if route == "atoms":
        for i in range(1, N + 1):
            out += cond_minus_i_batch(Z[i], i, W, spec) * W[:, i - 1] / r
    elif route == "binary":
        # sum Z_i xi_i / sqrt(n) - (1/n) sum xi_i^2 D_i Z_i
        for i in range(1, N + 1):
            xi = W[:, i - 1]
            out += Z[i].evaluate(W) * xi / r
            out -= xi * xi * malliavin_derivative_batch(Z[i], i, W, spec, n, "binary") / n
    else:
        raise ValueError(f"unknown route {route!r}")
    return out


def skorokhod_integral(Z: DiscreteProcessFn, N: int, outcome, spec: NoiseSpec, n: int,
                       route: str = "auto") -> float:
    """``delta^n(Z 1_[1,N]) = sum_{i<=N} E[Z_i | F_{-i}] xi_i / sqrt(n)``."""
    return float(skorokhod_integral_batch(Z, N, outcome, spec, n, route)[0])


def skorokhod_integral_fn(Z: DiscreteProcessFn, N: int, spec: NoiseSpec, n: int,
                          route: str = "auto") -> RandomVariableFn:
    return RandomVariableFn(Z.M, lambda w: skorokhod_integral(Z, N, w, spec, n, route), "delta",
                            lambda W: skorokhod_integral_batch(Z, N, W, spec, n, route))


def ito_integral(Z: DiscreteProcessFn, path: WalkPath) -> float:
    """``sum_i Z_i xi_i / sqrt(n)`` for a predictable integrand."""
    if not Z.predictable:
        raise ValueError("ito_integral requires a process flagged predictable")
    w = np.asarray(path.increments, dtype=float)
    if len(w) < Z.M:
        raise ValueError("path shorter than the process horizon")
    w = w[: Z.M]
    return math.fsum(Z[i](w) * w[i - 1] for i in range(1, Z.N + 1)) / math.sqrt(path.n)


def ito_integral_batch(Z: DiscreteProcessFn, outcomes, n: int) -> np.ndarray:
    if not Z.predictable:
        raise ValueError("ito_integral requires a process flagged predictable")
    W = np.atleast_2d(np.asarray(outcomes, dtype=float))
    out = np.zeros(len(W))
    for i in range(1, Z.N + 1):
        out += Z[i].evaluate(W) * W[:, i - 1]
    return out / math.sqrt(n)


def check_predictable(Z: DiscreteProcessFn, spec: NoiseSpec, rng: np.random.Generator,
                      trials: int = 16) -> bool:
    """Spot-check that component i ignores coordinates i..M."""
    M = Z.M
    for _ in range(trials):
        w = sample(spec, rng, M)
        for i in range(1, Z.N + 1):
            v = w.copy()
            v[i - 1:] = sample(spec, rng, M - i + 1)
            if Z[i](w) != Z[i](v):
                return False
    return True


# ---------------------------------------------------------------------------
# Clark-Ocone derivative


def _suffix_grid(spec: NoiseSpec, length: int) -> tuple[np.ndarray, np.ndarray]:
    A = spec.size
    idx = np.arange(A**length)
    dig = (idx[:, None] // (A ** np.arange(length))) % A
    return spec.values_array()[dig], np.prod(spec.probs_array()[dig], axis=1)


def clark_ocone(X: RandomVariableFn, i: int, prefix, spec: NoiseSpec, n: int, mode: str = "exact",
                samples: int = 1000, stream: np.random.Generator | None = None) -> float:
    """``sqrt(n) E[xi_i X | xi_1..xi_{i-1} = prefix]``."""
    _check_coord(i, X.M)
    prefix = np.asarray(prefix, dtype=float).reshape(-1)
    if len(prefix) != i - 1:
        raise ValueError(f"prefix must have {i - 1} entries, got {len(prefix)}")
    length = X.M - i + 1
    if mode == "exact":
        if spec.size**length > COST_GUARD:
            raise CostGuardError(f"{spec.size}^{length} suffixes exceeds the 2^24 guard; use mode='mc'")
        suffix, weight = _suffix_grid(spec, length)
    elif mode == "mc":
        if stream is None:
            raise ValueError("mc mode needs a stream")
        suffix = sample(spec, stream, samples * length).reshape(samples, length)
        weight = np.full(samples, 1.0 / samples)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    W = np.hstack([np.broadcast_to(prefix, (len(suffix), i - 1)), suffix])
    return math.sqrt(n) * float(np.sum(weight * suffix[:, 0] * X.evaluate(W)))


def clark_ocone_table(X: RandomVariableFn, i: int, spec: NoiseSpec, n: int) -> np.ndarray:
    """Exact ``nabla_i X`` for every prefix, as an array of shape ``(A,)*(i-1)``.

    Prefix axis j carries the atom index of coordinate j+1.
    """
    _check_coord(i, X.M)
    A, M = spec.size, X.M
    if A**M > COST_GUARD:
        raise CostGuardError(f"{A}^{M} outcomes exceeds the 2^24 guard")
    W, weight = _suffix_grid(spec, M)
    vals = (weight * W[:, i - 1] * X.evaluate(W)).reshape((A,) * M, order="F")
    # integrate out coordinates i..M; weights of the prefix are divided back out
    summed = vals.sum(axis=tuple(range(i - 1, M)))
    if i == 1:
        return math.sqrt(n) * np.asarray(summed)
    prefix_w = np.ones((A,) * (i - 1))
    p = spec.probs_array()
    for j in range(i - 1):
        shape = [1] * (i - 1)
        shape[j] = A
        prefix_w = prefix_w * p.reshape(shape)
    return math.sqrt(n) * summed / prefix_w


# ---------------------------------------------------------------------------
# S-transform


def s_transform_estimate(X: RandomVariableFn, g: StepFunction, n: int, spec: NoiseSpec, paths: int,
                         stream: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo ``E[X exp^{diamond_n}(I^n(g_check))]`` with its standard error."""
    gk = discretize(g, n)
    if gk.max_index > X.M:
        raise ValueError("step function support exceeds the functional's horizon")
    W = sample(spec, stream, paths * X.M).reshape(paths, X.M)
    vals = X.evaluate(W) * wick_exponential_fn(gk, X.M, n).evaluate(W)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(paths))


def s_transform_exact(g: StepFunction, h: StepFunction, n: int) -> float:
    """``E[exp(I(g_check)) exp(I(h_check))] = prod_i (1 + g(i/n) h(i/n) / n)``."""
    gk, hk = discretize(g, n), discretize(h, n)
    top = max(gk.max_index, hk.max_index)
    return math.prod(1.0 + gk[(i,)] * hk[(i,)] / n for i in range(1, top + 1))
