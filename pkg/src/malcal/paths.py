"""Random-walk paths, Brownian coupling via first-passage skeletons, exit-time sampling."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np

from .noise import NoiseSpec, binary_noise, sample


class CouplingUnderrunError(RuntimeError):
    """The simulated Brownian horizon ran out before the requested number of crossings."""

    def __init__(self, achieved: int, requested: int, horizon: float):
        super().__init__(
            f"coupling under-run: {achieved} of {requested} crossings within horizon {horizon:g}"
        )
        self.achieved = achieved
        self.requested = requested
        self.horizon = horizon


@dataclass(frozen=True)
class WalkPath:
    n: int
    increments: np.ndarray
    spec_label: str = ""

    @property
    def M(self) -> int:
        return len(self.increments)

    def partial_sums(self) -> np.ndarray:
        """Scaled walk at lattice times 0, 1/n, ..., M/n."""
        out = np.zeros(self.M + 1)
        np.cumsum(self.increments, out=out[1:])
        return out / math.sqrt(self.n)


@dataclass(frozen=True)
class CoupledPath:
    walk: WalkPath
    bm_times: np.ndarray
    bm_values: np.ndarray
    passage_times: np.ndarray
    fine_mesh: float
    # Brownian values on the fine grid at the recorded passage times
    passage_values: np.ndarray = field(default=None)

    def bm_at(self, t: float) -> float:
        hits = np.flatnonzero(np.isclose(self.bm_times, t, rtol=0, atol=1e-12))
        if hits.size == 0:
            raise KeyError(f"B was not recorded at t={t}")
        return float(self.bm_values[hits[0]])


def _lattice_index(n: int, t: float) -> int:
    # floor(n t) robust to representation error in t
    return int(math.floor(round(n * t, 9)))


def simulate_walk(spec: NoiseSpec, n: int, M: int, stream: np.random.Generator) -> WalkPath:
    if n < 1 or M < 1:
        raise ValueError(f"need n >= 1 and M >= 1, got n={n}, M={M}")
    return WalkPath(n=int(n), increments=sample(spec, stream, int(M)), spec_label=spec.label)


def walk_value(path: WalkPath, t: float) -> float:
    """B^n_t = n^{-1/2} times the sum of the first floor(n t) increments."""
    if t < 0:
        raise ValueError(f"negative time {t}")
    k = _lattice_index(path.n, t)
    if k > path.M:
        raise IndexError(f"t={t} needs {k} increments, path has {path.M}")
    return float(np.sum(path.increments[:k]) / math.sqrt(path.n))


# ---------------------------------------------------------------------------
# fine-grid coupling

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@nb.njit(inline="always")
def _splitmix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always")
def _counter_uniform(key, j):
    # uniform in [0, 1) addressed by (path key, grid index)
    z = _splitmix(key + np.uint64(j) * _GOLDEN)
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@nb.njit(nogil=True, cache=True)
def _scan_crossings(z, sigma, j, x, level, count, M, up_step, down_step, up_value, down_value,
                    incr, tau_idx, tau_val, need_idx, need_val, need_ptr, key):
    inv_var = 1.0 / (sigma * sigma)
    near = 6.0 * sigma
    n_need = need_idx.shape[0]
    for m in range(z.shape[0]):
        j += 1
        x_new = x + sigma * z[m]
        if count < M:
            upper = level + up_step
            lower = level - down_step
            crossed = 0
            if x_new >= upper:
                crossed = 1
            elif x_new <= lower:
                crossed = -1
            elif upper - x_new < near or upper - x < near or x_new - lower < near or x - lower < near:
                # Brownian-bridge excursion past a barrier between grid points
                eu = 2.0 * (upper - x) * (upper - x_new) * inv_var
                ed = 2.0 * (x - lower) * (x_new - lower) * inv_var
                if eu < 60.0 or ed < 60.0:
                    pu = math.exp(-eu) if eu < 60.0 else 0.0
                    pd = math.exp(-ed) if ed < 60.0 else 0.0
                    u = _counter_uniform(key, j)
                    if u < pu:
                        crossed = 1
                    elif u < pu + pd:
                        crossed = -1
            while crossed != 0 and count < M:
                if crossed == 1:
                    incr[count] = up_value
                    level = upper
                else:
                    incr[count] = down_value
                    level = lower
                tau_idx[count] = j
                tau_val[count] = x_new
                count += 1
                upper = level + up_step
                lower = level - down_step
                if x_new >= upper:
                    crossed = 1
                elif x_new <= lower:
                    crossed = -1
                else:
                    crossed = 0
        while need_ptr < n_need and need_idx[need_ptr] == j:
            need_val[need_ptr] = x_new
            need_ptr += 1
        x = x_new
        if count >= M and need_ptr >= n_need:
            break
    return j, x, level, count, need_ptr


def simulate_coupled_binary(
    b: float,
    n: int,
    bm_times: Sequence[float],
    fine_factor: int,
    stream: np.random.Generator,
    M: int | None = None,
    max_time: float | None = None,
) -> CoupledPath:
    """Brownian motion on a grid of mesh 1/(K n) together with its binary skeleton.

    Crossings of ``level + b/sqrt(n)`` and ``level - 1/(b sqrt(n))`` are detected
    on the grid and, between grid points, through the Brownian-bridge crossing
    probability.  The walk level moves to the exact barrier value, so the
    extracted increments follow the binary law exactly and the grid value at a
    recorded passage differs from the walk level by within-step fluctuation only.
    Requested Brownian times are read at the nearest grid point.  Passage
    times are the midpoints of the grid cells in which the crossings occur.
    """
    if b <= 0 or n < 1:
        raise ValueError("need b > 0 and n >= 1")
    if fine_factor < 8:
        raise ValueError(f"fine factor must be >= 8, got {fine_factor}")
    M = int(n if M is None else M)
    if M < 1:
        raise ValueError("M must be positive")
    K = int(fine_factor)
    cells = K * n
    h = 1.0 / cells
    sigma = math.sqrt(h)
    times = np.asarray(bm_times, dtype=float)
    if np.any(times < 0):
        raise ValueError("Brownian times must be nonnegative")
    order = np.argsort(times, kind="stable")
    need_idx_sorted = np.rint(times[order] * cells).astype(np.int64)
    t_max = float(times.max()) if times.size else 0.0
    scale = max(M / n, t_max)
    if max_time is None:
        max_time = 20.0 * scale + 5.0
    if t_max > max_time:
        raise ValueError(f"Brownian time {t_max} beyond the simulated horizon {max_time}")

    spec = binary_noise(b)
    root = math.sqrt(n)
    key = np.uint64(stream.integers(0, 2**63))
    incr = np.zeros(M)
    tau_idx = np.zeros(M, dtype=np.int64)
    tau_val = np.zeros(M)
    need_val = np.zeros(len(need_idx_sorted))
    need_ptr = 0
    # the t = 0 grid point carries B_0 = 0
    while need_ptr < len(need_idx_sorted) and need_idx_sorted[need_ptr] == 0:
        need_ptr += 1

    j, x, level, count = 0, 0.0, 0.0, 0
    # mean of the M-th passage time is M/n; cover four standard deviations up front
    tau_sd = math.sqrt(M * (b * b + 1.0 / (b * b)) / 3.0) / n
    chunk = int(cells * (max(M / n + 4.0 * tau_sd, t_max) + 0.01)) + 1
    max_steps = int(math.ceil(max_time * cells))
    while count < M or need_ptr < len(need_idx_sorted):
        if j >= max_steps:
            raise CouplingUnderrunError(count, M, max_time)
        size = min(chunk, max_steps - j)
        z = stream.standard_normal(size)
        j, x, level, count, need_ptr = _scan_crossings(
            z, sigma, j, x, level, count, M, b / root, 1.0 / (b * root), b, -1.0 / b,
            incr, tau_idx, tau_val, need_idx_sorted, need_val, need_ptr, key,
        )
        chunk = int(cells * (0.1 * scale + 0.05)) + 1

    bm_values = np.empty_like(need_val)
    bm_values[order] = need_val
    walk = WalkPath(n=int(n), increments=incr, spec_label=spec.label)
    return CoupledPath(
        walk=walk,
        bm_times=times,
        bm_values=bm_values,
        # a crossing somewhere in grid cell (j-1, j] is stamped at the cell midpoint
        passage_times=(tau_idx - 0.5) * h,
        fine_mesh=h,
        passage_values=tau_val,
    )


def write_path_csv(path: CoupledPath, fh, b: float, seed: int) -> None:
    """Dump a coupled path as ``i,xi,tau`` rows after a header row with n, b, seed."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"n={path.walk.n}", f"b={b!r}", f"seed={seed}"])
    w.writerow(["i", "xi", "tau"])
    for i, (xi, tau) in enumerate(zip(path.walk.increments, path.passage_times), start=1):
        w.writerow([i, repr(float(xi)), repr(float(tau))])


# ---------------------------------------------------------------------------
# exact two-sided exit times


def _levy_ratio_small(t, d, w, tol):
    """Exit density at the barrier at distance d, divided by the one-sided Levy density.

    Method-of-images series, accurate for small t.
    """
    ratio = np.ones_like(t)
    for k in range(1, 10_000):
        xp = d + 2 * k * w
        xn = d - 2 * k * w
        tp = (xp / d) * np.exp(-(xp * xp - d * d) / (2 * t))
        tn = (xn / d) * np.exp(-(xn * xn - d * d) / (2 * t))
        ratio += tp + tn
        # magnitudes shrink super-geometrically; four times the next term bounds the tail
        xq = d + 2 * (k + 1) * w
        nxt = (xq / d) * np.exp(-((abs(d - 2 * (k + 1) * w)) ** 2 - d * d) / (2 * t))
        if np.all(4 * nxt < tol):
            return ratio
    raise RuntimeError("small-time exit density series did not converge")


def _density_large(t, d, w, tol):
    """Exit density at the barrier at distance d; eigenfunction series for large t."""
    c = math.pi**2 * t / (2 * w * w)
    pref = math.pi / (w * w)
    out = np.zeros_like(t)
    cmin = float(np.min(c))
    for k in range(1, 100_000):
        out += k * math.sin(k * math.pi * d / w) * np.exp(-c * k * k)
        k1 = k + 1
        if k1 * k1 * 2 * cmin > 1:
            r = (k1 + 1) / k1 * math.exp(-cmin * (2 * k1 + 1))
            if r < 1:
                bound = pref * k1 * math.exp(-cmin * k1 * k1) / (1 - r)
                if bound < tol:
                    return pref * out
    raise RuntimeError("large-time exit density series did not converge")


def exit_density(t, alpha: float, beta: float, side: int, tol: float = 1e-12) -> np.ndarray:
    """Density of (exit time, exit side) for W started at 0 in (-alpha, beta).

    ``side = +1`` is the upper barrier, ``-1`` the lower one.  Small-time and
    large-time series switch at ``t = alpha * beta``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    w = alpha + beta
    d = beta if side > 0 else alpha
    out = np.zeros_like(t)
    small = (t > 0) & (t <= alpha * beta)
    large = t > alpha * beta
    if small.any():
        ts = t[small]
        levy = d / np.sqrt(2 * math.pi * ts**3) * np.exp(-d * d / (2 * ts))
        out[small] = levy * _levy_ratio_small(ts, d, w, tol)
    if large.any():
        out[large] = _density_large(t[large], d, w, tol)
    return out


def _acceptance_ratio(t, d, w, switch, tol):
    ratio = np.zeros_like(t)
    small = t <= switch
    if small.any():
        ratio[small] = _levy_ratio_small(t[small], d, w, tol)
    if (~small).any():
        tl = t[~small]
        levy = d / np.sqrt(2 * math.pi * tl**3) * np.exp(-d * d / (2 * tl))
        ratio[~small] = _density_large(tl, d, w, tol) / levy
    return ratio


def sample_exit(alpha: float, beta: float, stream: np.random.Generator, size: int,
                tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Exact draws of (exit time, exited at the upper barrier) for W in (-alpha, beta).

    Acceptance-rejection: the joint density of exit time and side is dominated by
    the equal mixture of the one-sided first-passage (Levy) laws to beta and to
    -alpha, with constant 2.
    """
    if not (alpha > 0 and beta > 0):
        raise ValueError("barriers must be positive distances")
    if not (0 < tol <= 1e-6):
        raise ValueError(f"tol must lie in (0, 1e-6], got {tol}")
    w = alpha + beta
    switch = alpha * beta
    times = np.empty(size)
    upper = np.empty(size, dtype=bool)
    filled = 0
    while filled < size:
        batch = 2 * (size - filled) + 16
        up = stream.random(batch) < 0.5
        z = stream.standard_normal(batch)
        u = stream.random(batch)
        d = np.where(up, beta, alpha)
        t = d * d / (z * z)
        accept = np.zeros(batch, dtype=bool)
        for side, dist in ((True, beta), (False, alpha)):
            sel = up == side
            accept[sel] = u[sel] <= _acceptance_ratio(t[sel], dist, w, switch, tol)
        take = np.flatnonzero(accept)[: size - filled]
        times[filled:filled + take.size] = t[take]
        upper[filled:filled + take.size] = up[take]
        filled += take.size
    return times, upper


def sample_first_passage_time(alpha: float, beta: float, stream: np.random.Generator,
                              tol: float = 1e-10, size: int | None = None):
    """First exit time of W from (-alpha, beta); a float when ``size`` is None."""
    times, _ = sample_exit(alpha, beta, stream, 1 if size is None else size, tol)
    return float(times[0]) if size is None else times


def simulate_skeleton_binary(b: float, n: int, M: int, stream: np.random.Generator,
                             tol: float = 1e-10) -> tuple[WalkPath, np.ndarray]:
    """Walk and passage times from exact exit-time draws (no Brownian values in between)."""
    root = math.sqrt(n)
    dt, up = sample_exit(1.0 / (b * root), b / root, stream, M, tol)
    incr = np.where(up, b, -1.0 / b)
    return WalkPath(n=n, increments=incr, spec_label=binary_noise(b).label), np.cumsum(dt)
