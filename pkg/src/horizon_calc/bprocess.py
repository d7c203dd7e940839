"""Processes that live only on a random interval-type set.

A :class:`BProcess` stores values at member nodes (NaN elsewhere) together
with the exact node increments it was built from, an optional labelled
decomposition into continuous-martingale / discontinuous-martingale /
finite-variation increments, and the coupled ladder (stopping times plus
full-grid paths) it was glued from.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .grid_paths import SamplePath, TimeGrid, left_shift, node_increments
from .interval_sets import (
    INF,
    IntervalTypeSet,
    StoppingTime,
    is_inner_stopping_time,
)


class OutsideSetError(LookupError):
    """A value was requested at a node that is not in the process domain."""


class InvalidFCSError(ValueError):
    def __init__(self, report: "FCSReport"):
        self.report = report
        head = "; ".join(str(v) for v in report.violations[:5])
        more = f" (+{len(report.violations) - 5} more)" if len(report.violations) > 5 else ""
        super().__init__(f"invalid coupled sequence: {head}{more}")


class NotInnerTimeError(ValueError):
    """Stopping at a time that leaves the set."""


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Labelled increments ``dX = cont + disc + fv`` with initial value ``x0``.

    All increment arrays have column 0 equal to zero.  ``jumps`` marks the
    nodes treated as jump nodes by the bracket and the Ito jump term; it
    defaults to nodes with a nonzero ``disc`` or ``fv`` increment.
    """

    x0: np.ndarray
    cont: np.ndarray
    disc: np.ndarray
    fv: np.ndarray
    jumps: Optional[np.ndarray] = None

    def __post_init__(self):
        raw = {name: np.asarray(getattr(self, name), dtype=float) for name in ("cont", "disc", "fv")}
        shaped = [a for a in raw.values() if a.ndim > 0]
        if not shaped:
            raise ValueError("at least one increment array is needed to fix the shape")
        shape = np.atleast_2d(shaped[0]).shape
        x0 = np.broadcast_to(np.asarray(self.x0, dtype=float), (shape[0],))
        arrays = {}
        for name, a in raw.items():
            a = np.zeros(shape) if a.ndim == 0 and a == 0 else np.atleast_2d(a)
            if a.shape != shape:
                raise ValueError(f"{name} increments have shape {a.shape}, expected {shape}")
            arrays[name] = a
        for name, a in arrays.items():
            if not np.isfinite(a).all():
                raise ValueError(f"{name} increments must be finite")
            if (a[:, 0] != 0).any():
                raise ValueError(f"{name} increments must vanish at node 0")
            object.__setattr__(self, name, _frozen(a))
        object.__setattr__(self, "x0", _frozen(x0))
        if self.jumps is None:
            jm = (self.disc != 0) | (self.fv != 0)
        else:
            jm = np.asarray(self.jumps, dtype=bool)
            if jm.ndim == 0:
                jm = np.full(shape, bool(jm))
            if jm.shape != shape:
                raise ValueError("jump mask shape mismatch")
        jm = jm.copy()
        jm[:, 0] = False
        object.__setattr__(self, "jumps", _frozen(jm, bool))

    @property
    def total(self) -> np.ndarray:
        return self.cont + self.disc + self.fv

    @property
    def martingale(self) -> np.ndarray:
        return self.cont + self.disc

    def _map(self, fn, jumps=None) -> Decomposition:
        return Decomposition(fn(self.x0, True), fn(self.cont, False), fn(self.disc, False),
                             fn(self.fv, False), self.jumps if jumps is None else jumps)

    def masked(self, keep: np.ndarray) -> Decomposition:
        """Zero the increments where ``keep`` is False."""
        return self._map(lambda a, is0: a if is0 else np.where(keep, a, 0.0), self.jumps & keep)

    def scaled(self, c: float) -> Decomposition:
        return self._map(lambda a, is0: a * c)

    def __add__(self, other: Decomposition) -> Decomposition:
        return Decomposition(self.x0 + other.x0, self.cont + other.cont, self.disc + other.disc,
                             self.fv + other.fv, self.jumps | other.jumps)

    def with_x0(self, x0) -> Decomposition:
        return Decomposition(x0, self.cont, self.disc, self.fv, self.jumps)

    def rows(self, rows) -> Decomposition:
        return Decomposition(self.x0[rows], self.cont[rows], self.disc[rows], self.fv[rows],
                             self.jumps[rows])


@dataclass(frozen=True)
class Violation:
    kind: str            # "order", "debut", "exhaustion" or "consistency"
    scenario: int
    node: int
    k: int
    l: int

    def __str__(self):
        return f"{self.kind} at scenario {self.scenario}, node {self.node}, levels ({self.k}, {self.l})"


@dataclass(frozen=True)
class FCSReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True, eq=False)
class CoupledSequence:
    """Ladder of stopping times ``T_1 <= T_2 <= ...`` with one full path per level."""

    grid: TimeGrid
    times: tuple[StoppingTime, ...]
    levels: tuple[SamplePath, ...]

    def __post_init__(self):
        times = tuple(t if isinstance(t, StoppingTime) else StoppingTime(t) for t in self.times)
        levels = tuple(x if isinstance(x, SamplePath) else SamplePath(self.grid, x) for x in self.levels)
        if not times or len(times) != len(levels):
            raise ValueError("need the same positive number of times and levels")
        p = levels[0].n_paths
        if any(t.n_paths != p for t in times) or any(x.n_paths != p for x in levels):
            raise ValueError("levels and times cover different scenario counts")
        if any(x.grid != self.grid for x in levels):
            raise ValueError("levels live on a different grid")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "levels", levels)

    def __len__(self):
        return len(self.times)

    @property
    def n_paths(self) -> int:
        return self.levels[0].n_paths

    def padded(self, length: int) -> CoupledSequence:
        extra = length - len(self)
        return CoupledSequence(self.grid, self.times + (self.times[-1],) * extra,
                               self.levels + (self.levels[-1],) * extra)

    def map_levels(self, fn) -> CoupledSequence:
        return CoupledSequence(self.grid, self.times,
                               tuple(SamplePath(self.grid, fn(x.values)) for x in self.levels))

    def rows(self, rows) -> CoupledSequence:
        return CoupledSequence(self.grid, tuple(StoppingTime(t.index[rows]) for t in self.times),
                               tuple(x[rows] for x in self.levels))


def _upto(grid: TimeGrid, T: StoppingTime) -> np.ndarray:
    """Boolean mask of nodes ``<= T`` per scenario."""
    return np.arange(grid.n_nodes)[None, :] <= T.capped(grid.n_steps)[:, None]


def validate_fcs(domain: IntervalTypeSet, cs: CoupledSequence) -> FCSReport:
    """Every ordering, debut, exhaustion and consistency violation of ``cs`` on ``domain``."""
    out: list[Violation] = []
    if cs.n_paths != domain.n_paths or cs.grid != domain.grid:
        raise ValueError("coupled sequence and set disagree on grid or scenario count")
    debut = domain.debut.index
    for n, t in enumerate(cs.times):
        for s in np.flatnonzero(t.index > debut):
            out.append(Violation("debut", int(s), int(min(t.index[s], domain.grid.n_steps)), n + 1, n + 1))
        if n:
            for s in np.flatnonzero(t.index < cs.times[n - 1].index):
                out.append(Violation("order", int(s), int(t.index[s]), n, n + 1))
    last = cs.times[-1].index
    L = len(cs)
    for s in np.flatnonzero(last < domain.last_member):
        out.append(Violation("exhaustion", int(s), int(domain.last_member[s]), L, L))
    member = domain.mask
    for k in range(L):
        region = member & _upto(cs.grid, cs.times[k])
        xk = cs.levels[k].values
        for l in range(k + 1, L):
            bad = region & (xk != cs.levels[l].values)
            for s, node in np.argwhere(bad):
                out.append(Violation("consistency", int(s), int(node), k + 1, l + 1))
    return FCSReport(tuple(out))


@dataclass(frozen=True, eq=False)
class BProcess:
    """A process defined on the member nodes of ``domain`` only.

    ``steps`` holds the exact increments (column 0 and non-member columns
    are zero); integrals built from this process use them directly so that
    jump identities hold without re-differencing.  ``diffusion`` is the
    optional predictable coefficient ``sigma_k`` with ``d<X^c> = sigma^2 dt``.
    """

    domain: IntervalTypeSet
    values: np.ndarray
    decomposition: Optional[Decomposition] = None
    inner: bool = False
    fcs: Optional[CoupledSequence] = None
    diffusion: Optional[np.ndarray] = None
    steps: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        d = self.domain
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.shape != (d.n_paths, d.grid.n_nodes):
            raise ValueError(f"values have shape {v.shape}, expected {(d.n_paths, d.grid.n_nodes)}")
        mask = d.mask
        if not np.isfinite(v[mask]).all():
            bad = np.argwhere(mask & ~np.isfinite(v))[0]
            raise ValueError(f"non-finite value at scenario {bad[0]}, node {bad[1]}")
        v = np.where(mask, v, np.nan)
        object.__setattr__(self, "values", _frozen(v))
        inc_mask = mask.copy()
        inc_mask[:, 0] = False
        if self.steps is None:
            st = node_increments(np.where(mask, v, 0.0))
        else:
            st = np.asarray(self.steps, dtype=float)
            if st.shape != v.shape:
                raise ValueError("steps shape mismatch")
        object.__setattr__(self, "steps", _frozen(np.where(inc_mask, st, 0.0)))
        if self.decomposition is not None:
            dec = self.decomposition.masked(inc_mask)
            scale = np.maximum(1.0, np.abs(self.steps))
            if not (np.abs(dec.total - self.steps) <= 1e-9 * scale).all():
                raise ValueError("decomposition increments do not add up to the process increments")
            if not np.allclose(dec.x0, v[:, 0], rtol=1e-12, atol=1e-12):
                raise ValueError("decomposition initial value differs from the process at node 0")
            object.__setattr__(self, "decomposition", dec)
        if self.diffusion is not None:
            s = np.broadcast_to(np.asarray(self.diffusion, dtype=float), v.shape)
            object.__setattr__(self, "diffusion", _frozen(np.where(inc_mask, s, 0.0)))
        object.__setattr__(self, "inner", bool(self.inner))

    # -- access -------------------------------------------------------------
    @property
    def grid(self) -> TimeGrid:
        return self.domain.grid

    @property
    def n_paths(self) -> int:
        return self.domain.n_paths

    @property
    def mask(self) -> np.ndarray:
        return self.domain.mask

    @property
    def x0(self) -> np.ndarray:
        return self.values[:, 0]

    def value(self, scenario: int, node: int) -> float:
        if not 0 <= scenario < self.n_paths or not 0 <= node <= self.grid.n_steps:
            raise IndexError(f"(scenario {scenario}, node {node}) out of range")
        if not self.domain.mask[scenario, node]:
            raise OutsideSetError(f"node {node} is outside the domain in scenario {scenario}")
        return float(self.values[scenario, node])

    @property
    def ladder(self) -> CoupledSequence:
        """The coupled sequence the process was glued from, or the one-level ladder."""
        if self.fcs is not None:
            return self.fcs
        return CoupledSequence(self.grid, (StoppingTime(self.domain.last_member),),
                               (SamplePath(self.grid, _freeze_after(self.filled(), self.domain.last_member)),))

    def filled(self, fill: float = 0.0) -> np.ndarray:
        return np.where(self.mask, self.values, fill)

    def increments(self) -> np.ndarray:
        return self.steps

    def left_values(self) -> np.ndarray:
        """``X_-`` on the grid, 0 outside the domain."""
        return np.where(self.mask, left_shift(self.filled()), 0.0)

    def rows(self, rows) -> BProcess:
        rows = np.atleast_1d(np.arange(self.n_paths)[rows])
        return BProcess(self.domain[rows], self.values[rows],
                        None if self.decomposition is None else self.decomposition.rows(rows),
                        self.inner, None if self.fcs is None else self.fcs.rows(rows),
                        None if self.diffusion is None else self.diffusion[rows], self.steps[rows])

    # -- linear structure ---------------------------------------------------
    def _check_same(self, other: BProcess):
        if not self.domain.same_sections(other.domain):
            raise ValueError("processes live on different sets")

    def __add__(self, other):
        if not isinstance(other, BProcess):
            return NotImplemented
        self._check_same(other)
        dec = (self.decomposition + other.decomposition
               if self.decomposition is not None and other.decomposition is not None else None)
        fcs = None
        if self.fcs is not None and other.fcs is not None:
            a, b = merge_fcs_times(self.domain, self.fcs, other.fcs)
            fcs = CoupledSequence(a.grid, a.times,
                                  tuple(SamplePath(a.grid, x.values + y.values)
                                        for x, y in zip(a.levels, b.levels)))
        return BProcess(self.domain, self.filled() + other.filled(), dec,
                        self.inner and other.inner, fcs, None, self.steps + other.steps)

    def __mul__(self, c):
        if isinstance(c, BProcess):
            return NotImplemented
        c = float(c)
        return BProcess(self.domain, self.filled() * c,
                        None if self.decomposition is None else self.decomposition.scaled(c),
                        self.inner,
                        None if self.fcs is None else self.fcs.map_levels(lambda a: a * c),
                        None if self.diffusion is None else self.diffusion * c,
                        self.steps * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def minus_initial(self) -> BProcess:
        """``X - X_0`` on the domain."""
        x0 = self.x0[:, None]
        dec = None if self.decomposition is None else self.decomposition.with_x0(0.0)
        fcs = None if self.fcs is None else self.fcs.map_levels(lambda a: a - x0)
        return BProcess(self.domain, self.filled() - x0, dec, self.inner, fcs,
                        self.diffusion, self.steps)

    def with_(self, **kw) -> BProcess:
        return replace(self, **kw)


def from_path(path: SamplePath, domain: IntervalTypeSet, decomposition: Decomposition | None = None,
              inner: bool = False, diffusion=None) -> BProcess:
    """Restriction of a full path to ``domain`` with a one-level ladder."""
    if path.grid != domain.grid or path.n_paths != domain.n_paths:
        raise ValueError("path and set disagree on grid or scenario count")
    fcs = CoupledSequence(path.grid, (StoppingTime(domain.last_member),), (path,))
    return BProcess(domain, path.values, decomposition, inner, fcs, diffusion)


def glue(domain: IntervalTypeSet, cs: CoupledSequence, decomposition: Decomposition | None = None,
         inner: bool = False, diffusion=None) -> BProcess:
    """Value at member node ``t`` taken from the first level with ``t <= T_n``."""
    report = validate_fcs(domain, cs)
    if not report.ok:
        raise InvalidFCSError(report)
    vals = np.full((cs.n_paths, cs.grid.n_nodes), np.nan)
    todo = domain.mask.copy()
    for t, x in zip(cs.times, cs.levels):
        sel = todo & _upto(cs.grid, t)
        vals[sel] = x.values[sel]
        todo &= ~sel
    return BProcess(domain, vals, decomposition, inner, cs, diffusion)


def restrict(x, subset: IntervalTypeSet) -> BProcess:
    """Restriction of a full path or a B-process to a smaller set."""
    if isinstance(x, SamplePath):
        return from_path(x, subset)
    if not subset.issubset(x.domain):
        raise ValueError("restriction target is not contained in the process domain")
    keep = subset.mask.copy()
    keep[:, 0] = False
    dec = None if x.decomposition is None else x.decomposition.masked(keep)
    fcs = None
    if x.fcs is not None:
        cap = subset.debut.index
        fcs = CoupledSequence(x.grid, tuple(StoppingTime(np.minimum(t.index, cap)) for t in x.fcs.times),
                              x.fcs.levels)
    return BProcess(subset, x.filled(), dec, x.inner, fcs, x.diffusion,
                    np.where(keep, x.steps, 0.0))


def _freeze_after(values: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Hold each row constant from node ``k`` on (``k`` already capped to the grid)."""
    n = values.shape[1]
    idx = np.minimum(np.arange(n)[None, :], k[:, None])
    return np.take_along_axis(values, idx, axis=1)


def stop(bp: BProcess, T: StoppingTime) -> BProcess:
    """``X`` frozen at its value at ``T``; ``T`` must stay inside the domain."""
    if not is_inner_stopping_time(bp.domain, T):
        raise NotInnerTimeError("stopping time leaves the domain of the process")
    n = bp.grid.n_steps
    k = T.capped(n)
    live = _upto(bp.grid, T)
    dec = None if bp.decomposition is None else bp.decomposition.masked(live)
    fcs = None if bp.fcs is None else bp.fcs.map_levels(lambda a: _freeze_after(a, k))
    diff = None if bp.diffusion is None else np.where(live, bp.diffusion, 0.0)
    return BProcess(bp.domain, _freeze_after(bp.filled(), k), dec, bp.inner, fcs, diff,
                    np.where(live, bp.steps, 0.0))


def stop_minus(path: SamplePath, T: StoppingTime) -> SamplePath:
    """``X`` before ``T``, frozen at the left limit ``X_{T-}`` from ``T`` on."""
    n = path.grid.n_steps
    k = T.index
    freeze = np.where(k == INF, n, np.maximum(np.minimum(k, n + 1) - 1, 0))
    out = _freeze_after(path.values, freeze)
    return SamplePath(path.grid, out)


def bjump(bp: BProcess) -> BProcess:
    """The jump process ``X - X_-`` on the domain (zero at node 0)."""
    return BProcess(bp.domain, bp.steps)


def bsummation(bp: BProcess) -> BProcess:
    """Running sum of node values, node 0 included."""
    vals = np.cumsum(bp.filled(), axis=1)
    st = bp.filled().copy()
    st[:, 0] = 0.0
    return BProcess(bp.domain, vals, steps=st)


def merge_fcs_times(domain: IntervalTypeSet, cs1: CoupledSequence,
                    cs2: CoupledSequence) -> tuple[CoupledSequence, CoupledSequence]:
    """Both ladders re-indexed on the common times ``T_n ^ S_n``."""
    for cs in (cs1, cs2):
        rep = validate_fcs(domain, cs)
        if not rep.ok:
            raise InvalidFCSError(rep)
    L = max(len(cs1), len(cs2))
    a, b = cs1.padded(L), cs2.padded(L)
    times = tuple(StoppingTime(np.minimum(s.index, t.index)) for s, t in zip(a.times, b.times))
    return (CoupledSequence(a.grid, times, a.levels), CoupledSequence(b.grid, times, b.levels))


def sequence_from_levels(grid: TimeGrid, times: Sequence, levels: Sequence) -> CoupledSequence:
    return CoupledSequence(grid, tuple(times), tuple(levels))
