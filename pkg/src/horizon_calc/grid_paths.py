"""Uniform time grids, grid paths and per-path random streams.

A path batch is stored as a 2-D array with one row per scenario and one
column per grid node.  Node ``k`` holds the (right-continuous) value at
``t_k``; a jump is simply the node increment, and the value before node 0
is taken to be the value at node 0.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

THREADS_ENV = "HORIZON_CALC_THREADS"

# stream tags, first component of a per-path spawn key
STREAM_BROWNIAN = 0
STREAM_EXIT = 1
STREAM_DRIVER = 2
STREAM_SUITE = 3
STREAM_GALLERY = 4


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be a positive finite number, got {self.horizon!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n_nodes) * self.dt
        t[-1] = self.horizon
        t.flags.writeable = False
        return t

    def node_at_or_after(self, t: float) -> int:
        """Index of the first node ``>= t``; ``n_steps + 1`` if ``t`` is past the horizon."""
        if t <= 0:
            return 0
        k = math.ceil(t / self.dt - 1e-9)
        return min(k, self.n_steps + 1)

    def nearest_node(self, t: float) -> int:
        return int(round(t / self.dt))


def make_grid(horizon: float, n_steps: int) -> TimeGrid:
    return TimeGrid(horizon, n_steps)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SamplePath:
    """A batch of grid paths, shape ``(n_paths, n_steps + 1)``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.ndim != 2 or v.shape[1] != self.grid.n_nodes:
            raise ValueError(f"expected {self.grid.n_nodes} nodes per path, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("sample path values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, rows) -> SamplePath:
        return SamplePath(self.grid, self.values[rows])


@dataclass(frozen=True, eq=False)
class PredictablePath:
    """Predictable integrand on the grid.

    Column 0 is the atom at time 0; column ``k >= 1`` is the value used on
    the interval ``(t_{k-1}, t_k]``, i.e. the multiplier of increment ``k``.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.ndim != 2 or v.shape[1] != self.grid.n_nodes:
            raise ValueError(f"expected {self.grid.n_nodes} columns, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("predictable path values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def atom_at_zero(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def interval_values(self) -> np.ndarray:
        return self.values[:, 1:]

    @classmethod
    def constant(cls, grid: TimeGrid, n_paths: int, c: float = 1.0) -> PredictablePath:
        return cls(grid, np.full((n_paths, grid.n_nodes), float(c)))

    @classmethod
    def from_parts(cls, grid: TimeGrid, atom, interval_values) -> PredictablePath:
        iv = np.atleast_2d(np.asarray(interval_values, dtype=float))
        atom = np.broadcast_to(np.asarray(atom, dtype=float), (iv.shape[0],))
        return cls(grid, np.column_stack([atom, iv]))

    @classmethod
    def from_function(cls, grid: TimeGrid, f: Callable[[np.ndarray], np.ndarray],
                      n_paths: int = 1) -> PredictablePath:
        """Deterministic integrand ``f`` sampled at left interval endpoints."""
        t = grid.nodes
        left = np.concatenate([[t[0]], t[:-1]])
        row = np.asarray(f(left), dtype=float)
        return cls(grid, np.tile(row, (n_paths, 1)))

    @classmethod
    def left_limits(cls, x) -> PredictablePath:
        """``X_-`` as an integrand; works for a SamplePath or a BProcess.

        Values outside a B-process domain are irrelevant and set to 0.
        """
        v = np.nan_to_num(np.asarray(x.values, dtype=float), nan=0.0)
        return cls(x.grid, left_shift(v))

    def __mul__(self, other):
        if isinstance(other, PredictablePath):
            return PredictablePath(self.grid, self.values * other.values)
        return PredictablePath(self.grid, self.values * float(other))

    __rmul__ = __mul__

    def __add__(self, other: PredictablePath) -> PredictablePath:
        return PredictablePath(self.grid, self.values + other.values)


def left_shift(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    out[..., 0] = v[..., 0]
    out[..., 1:] = v[..., :-1]
    return out


def node_increments(v: np.ndarray) -> np.ndarray:
    """Increments with the convention that node 0 carries no jump."""
    out = np.zeros_like(v)
    out[..., 1:] = v[..., 1:] - v[..., :-1]
    return out


def jump(path: SamplePath, k: int) -> np.ndarray:
    """Jump ``X_k - X_{k-1}`` per scenario (0 at node 0)."""
    n = path.grid.n_steps
    if not 0 <= k <= n:
        raise IndexError(f"node {k} outside 0..{n}")
    if k == 0:
        return np.zeros(path.n_paths)
    return path.values[:, k] - path.values[:, k - 1]


def left_limit(path: SamplePath) -> SamplePath:
    return SamplePath(path.grid, left_shift(path.values))


@dataclass(frozen=True)
class ScenarioBatch:
    """Scenarios ``first_path .. first_path + n_paths - 1`` under one seed."""

    n_paths: int
    seed: int = 0
    first_path: int = 0

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError("n_paths must be a positive integer")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @property
    def path_ids(self) -> np.ndarray:
        return np.arange(self.first_path, self.first_path + self.n_paths)

    def chunks(self, size: int):
        for start in range(0, self.n_paths, size):
            yield ScenarioBatch(min(size, self.n_paths - start), self.seed, self.first_path + start)


def path_generator(seed: int, path_id: int, stream: tuple[int, ...] = ()) -> np.random.Generator:
    """Counter-based generator for one (seed, stream, path) triple."""
    ss = np.random.SeedSequence(seed, spawn_key=(*stream, int(path_id)))
    return np.random.Generator(np.random.Philox(ss))


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def standard_normals(batch: ScenarioBatch, size: int, stream: tuple[int, ...]) -> np.ndarray:
    """``(n_paths, size)`` normals; row ``i`` depends only on (seed, stream, path id)."""
    out = np.empty((batch.n_paths, size))

    def fill(rows):
        for i in rows:
            out[i] = path_generator(batch.seed, batch.first_path + i, stream).standard_normal(size)

    workers = min(thread_cap(), batch.n_paths)
    if workers == 1:
        fill(range(batch.n_paths))
    else:
        parts = np.array_split(np.arange(batch.n_paths), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, parts))
    return out


def standard_uniforms(batch: ScenarioBatch, stream: tuple[int, ...]) -> np.ndarray:
    return np.array([path_generator(batch.seed, p, stream).random() for p in batch.path_ids])


def sample_brownian(grid: TimeGrid, batch: ScenarioBatch,
                    stream: tuple[int, ...] = (STREAM_BROWNIAN,)) -> SamplePath:
    z = standard_normals(batch, grid.n_steps, stream)
    w = np.zeros((batch.n_paths, grid.n_nodes))
    np.cumsum(z * math.sqrt(grid.dt), axis=1, out=w[:, 1:])
    return SamplePath(grid, w)
