"""Random sets of interval type on a grid, and grid stopping times.

Each scenario's section is either ``[0, T[`` (open) or ``[0, T]`` (closed),
where ``T`` is a grid index or the infinity marker ``INF``.  On the grid the
open section ``[0, T[`` is the node set ``{0, ..., T-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .grid_paths import TimeGrid

INF = np.iinfo(np.int64).max


def _as_index(index, n_paths: int | None = None) -> np.ndarray:
    a = np.asarray(index)
    if a.dtype.kind == "f":
        if np.isnan(a).any():
            raise ValueError("stopping time index must not be NaN")
        fin = np.isfinite(a)
        if (fin & (a != np.round(a))).any():
            raise ValueError("stopping time index must be integral")
        out = np.where(fin, a, 0).astype(np.int64)
        out[~fin & (a > 0)] = INF
        if (~fin & (a < 0)).any():
            raise ValueError("stopping time index must be nonnegative")
        a = out
    a = np.atleast_1d(a.astype(np.int64))
    if n_paths is not None and a.shape == (1,) and n_paths != 1:
        a = np.full(n_paths, a[0], dtype=np.int64)
    if a.ndim != 1:
        raise ValueError("stopping time index must be one-dimensional")
    if (a < 0).any():
        raise ValueError("stopping time index must be nonnegative")
    return a


@dataclass(frozen=True, eq=False)
class StoppingTime:
    """Per-scenario grid index; ``INF`` marks a time beyond every node."""

    index: np.ndarray

    def __post_init__(self):
        a = _as_index(self.index).copy()
        a.flags.writeable = False
        object.__setattr__(self, "index", a)

    @classmethod
    def constant(cls, k: int, n_paths: int) -> StoppingTime:
        return cls(np.full(n_paths, k, dtype=np.int64))

    @classmethod
    def infinite(cls, n_paths: int) -> StoppingTime:
        return cls(np.full(n_paths, INF, dtype=np.int64))

    @property
    def n_paths(self) -> int:
        return self.index.shape[0]

    @property
    def is_infinite(self) -> np.ndarray:
        return self.index == INF

    def __and__(self, other: StoppingTime) -> StoppingTime:
        return StoppingTime(np.minimum(self.index, other.index))

    def minimum(self, other: StoppingTime) -> StoppingTime:
        return self & other

    def capped(self, n_steps: int) -> np.ndarray:
        """Index clipped to the last grid node."""
        return np.minimum(self.index, n_steps)

    def __eq__(self, other):
        return isinstance(other, StoppingTime) and np.array_equal(self.index, other.index)

    def __hash__(self):
        return hash(self.index.tobytes())


def earliest(*times: StoppingTime) -> StoppingTime:
    out = times[0].index
    for t in times[1:]:
        out = np.minimum(out, t.index)
    return StoppingTime(out)


@dataclass(frozen=True, eq=False)
class IntervalTypeSet:
    """Per-scenario sections ``[0, T[`` (open flag set) or ``[0, T]``.

    ``kind`` records whether the set is meant as optional or predictable;
    it is carried along but never enforced.
    """

    grid: TimeGrid
    debut: StoppingTime
    open_flag: np.ndarray
    kind: str = "optional"

    def __post_init__(self):
        if not isinstance(self.debut, StoppingTime):
            object.__setattr__(self, "debut", StoppingTime(self.debut))
        flag = np.asarray(self.open_flag, dtype=bool)
        if flag.ndim == 0:
            flag = np.full(self.debut.n_paths, bool(flag))
        if flag.shape != (self.debut.n_paths,):
            raise ValueError("open_flag must have one entry per scenario")
        k = self.debut.index
        bad_range = np.flatnonzero((k != INF) & (k > self.grid.n_steps))
        if bad_range.size:
            raise ValueError(f"debut beyond the last grid node in scenarios {bad_range.tolist()}; "
                             "use INF for times past the horizon")
        bad = np.flatnonzero(flag & (k == 0))
        if bad.size:
            raise ValueError(f"open section with debut 0 is empty in scenarios {bad.tolist()}")
        if self.kind not in ("optional", "predictable"):
            raise ValueError(f"unknown set kind {self.kind!r}")
        flag = flag.copy()
        flag.flags.writeable = False
        object.__setattr__(self, "open_flag", flag)

    @property
    def n_paths(self) -> int:
        return self.debut.n_paths

    @cached_property
    def last_member(self) -> np.ndarray:
        """Largest member node per scenario."""
        k = self.debut.index
        n = self.grid.n_steps
        last = np.where(self.open_flag, k - 1, k)
        last = np.where(k == INF, n, np.minimum(last, n))
        last.flags.writeable = False
        return last

    @cached_property
    def mask(self) -> np.ndarray:
        m = np.arange(self.grid.n_nodes)[None, :] <= self.last_member[:, None]
        m.flags.writeable = False
        return m

    @property
    def is_full(self) -> np.ndarray:
        return self.last_member == self.grid.n_steps

    def contains(self, scenario: int, node: int) -> bool:
        return membership(self, scenario, node)

    def same_sections(self, other: IntervalTypeSet) -> bool:
        return (self.grid == other.grid and self.n_paths == other.n_paths
                and np.array_equal(self.last_member, other.last_member))

    def issubset(self, other: IntervalTypeSet) -> bool:
        return (self.grid == other.grid and self.n_paths == other.n_paths
                and bool((self.last_member <= other.last_member).all()))

    def __getitem__(self, rows) -> IntervalTypeSet:
        rows = np.atleast_1d(np.arange(self.n_paths)[rows])
        return IntervalTypeSet(self.grid, StoppingTime(self.debut.index[rows]),
                               self.open_flag[rows], self.kind)

    @classmethod
    def full(cls, grid: TimeGrid, n_paths: int) -> IntervalTypeSet:
        return cls(grid, StoppingTime.infinite(n_paths), np.zeros(n_paths, bool))


def make_interval_set(grid: TimeGrid, T, open_flag, kind: str = "optional") -> IntervalTypeSet:
    debut = T if isinstance(T, StoppingTime) else StoppingTime(T)
    return IntervalTypeSet(grid, debut, open_flag, kind)


def intersect_sets(a: IntervalTypeSet, b: IntervalTypeSet) -> IntervalTypeSet:
    """Scenario-wise intersection; sections are down-sets so the smaller one wins."""
    if a.grid != b.grid or a.n_paths != b.n_paths:
        raise ValueError("sets live on different grids or scenario counts")
    take_a = a.last_member <= b.last_member
    debut = np.where(take_a, a.debut.index, b.debut.index)
    flag = np.where(take_a, a.open_flag, b.open_flag)
    return IntervalTypeSet(a.grid, StoppingTime(debut), flag, a.kind)


def membership(s: IntervalTypeSet, scenario: int, node: int) -> bool:
    if not 0 <= scenario < s.n_paths:
        raise IndexError(f"scenario {scenario} outside 0..{s.n_paths - 1}")
    if not 0 <= node <= s.grid.n_steps:
        raise IndexError(f"node {node} outside 0..{s.grid.n_steps}")
    return bool(node <= s.last_member[scenario])


@dataclass(frozen=True, eq=False)
class FundamentalSequence:
    """Nondecreasing ladder of stopping times."""

    times: tuple[StoppingTime, ...]

    def __post_init__(self):
        times = tuple(t if isinstance(t, StoppingTime) else StoppingTime(t) for t in self.times)
        if not times:
            raise ValueError("a fundamental sequence needs at least one stopping time")
        for a, b in zip(times, times[1:]):
            if a.n_paths != b.n_paths:
                raise ValueError("stopping times cover different scenario counts")
            if (b.index < a.index).any():
                raise ValueError("fundamental sequence must be nondecreasing per scenario")
        object.__setattr__(self, "times", times)

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(self.times)

    def __getitem__(self, i) -> StoppingTime:
        return self.times[i]


def predictable_from_fs(grid: TimeGrid, fs: FundamentalSequence | Sequence[StoppingTime]) -> IntervalTypeSet:
    """Union of ``[0, tau_n]``.

    A finite ladder attains its supremum, so sections are closed at the
    last time; an infinite last time gives the full grid.
    """
    if not isinstance(fs, FundamentalSequence):
        fs = FundamentalSequence(tuple(fs))
    top = fs.times[-1].index
    top = np.where((top != INF) & (top >= grid.n_steps), INF, top)
    return IntervalTypeSet(grid, StoppingTime(top), np.zeros(top.shape[0], bool), "predictable")


def intersect_stop(s: IntervalTypeSet, S: StoppingTime) -> IntervalTypeSet:
    """Sections ``B_w`` intersected with ``[0, S(w)]``."""
    if S.n_paths != s.n_paths:
        raise ValueError("stopping time and set cover different scenario counts")
    cut = S.index < s.last_member
    debut = np.where(cut, S.index, s.debut.index)
    flag = np.where(cut, False, s.open_flag)
    return IntervalTypeSet(s.grid, StoppingTime(debut), flag, s.kind)


def is_inner_stopping_time(s: IntervalTypeSet, S: StoppingTime) -> bool:
    """True when node ``S`` lies in every section (INF only on full sections)."""
    k = S.index
    inf = k == INF
    ok_finite = ~inf & (k <= s.last_member)
    ok_inf = inf & s.is_full
    return bool((ok_finite | ok_inf).all())
