"""Worked counterexamples on small grids.

* A pathwise integral that blows up as the open end of a section is approached.
* A compensator restricted before its jump time: zero bracket but nonzero
  process, so it cannot serve as an inner martingale.
* A two-point jump time with a step-function compensator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bprocess import BProcess, CoupledSequence, Decomposition, from_path, glue
from .grid_paths import STREAM_GALLERY, PredictablePath, SamplePath, ScenarioBatch, TimeGrid, standard_uniforms
from .integration import NotInnerError, bracket, check_inner, martingale_integral, stieltjes
from .interval_sets import INF, IntervalTypeSet, StoppingTime


@dataclass(frozen=True)
class DivergentIntegral:
    n_steps: int
    probe_time: float
    probe_value: float
    probe_target: float
    end_values: dict            # n_steps -> value at the last member node

    @property
    def probe_rel_error(self) -> float:
        return abs(self.probe_value - self.probe_target) / abs(self.probe_target)


@dataclass(frozen=True)
class CompensatorExample:
    n_paths: int
    bracket_sup: float
    process_sup: float
    structural_inner: bool
    statistical_inner: bool
    z_score: float
    integral_rejected: bool

    @property
    def inner(self) -> bool:
        return self.structural_inner and self.statistical_inner


@dataclass(frozen=True)
class StepCompensator:
    probes: tuple[float, ...]
    values: tuple[float, ...]
    expected: tuple[float, ...]
    mean_gap: tuple[float, ...]   # E[f(T ^ t) - 1{T <= t}] at each probe, exactly


@dataclass(frozen=True)
class GalleryReport:
    stieltjes: DivergentIntegral
    compensator: CompensatorExample
    step: StepCompensator

    @property
    def passed(self) -> bool:
        s, c, f = self.stieltjes, self.compensator, self.step
        return (s.probe_rel_error <= 0.02
                and c.bracket_sup == 0.0 and c.process_sup > 0 and not c.inner and c.integral_rejected
                and f.values == f.expected and all(g == 0 for g in f.mean_gap))


def _divergent_value(n_steps: int, probe: float | None = None) -> tuple[float, float]:
    """``sum dt / (1 - t_{k-1})`` on a section ``[0, 1[``; value at ``probe`` and at the last node."""
    grid = TimeGrid(1.0, n_steps)
    # scenario 0: exit at the atom t = 1 (open section); scenario 1: exit at 1/2 (closed)
    dom = IntervalTypeSet(grid, StoppingTime(np.array([n_steps, n_steps // 2])), np.array([True, False]))
    A = from_path(SamplePath(grid, np.tile(grid.nodes, (2, 1))), dom)
    H = PredictablePath.from_function(grid, lambda t: 1.0 / (1.0 - t), n_paths=2)
    L = stieltjes(H, A)
    last = int(dom.last_member[0])
    at_probe = L.value(0, grid.nearest_node(probe)) if probe is not None else math.nan
    return at_probe, L.value(0, last)


def divergent_stieltjes(n_steps: int = 2**16, probe_time: float = 1 - 2**-6,
                        growth_sizes=(2**8, 2**12, 2**16)) -> DivergentIntegral:
    probe_value, _ = _divergent_value(n_steps, probe_time)
    ends = {n: _divergent_value(n)[1] for n in growth_sizes}
    return DivergentIntegral(n_steps, probe_time, probe_value, math.log(1.0 / (1.0 - probe_time)), ends)


def compensator_example(n_paths: int = 2000, n_steps: int = 512, horizon: float = 5.0,
                        seed: int = 0) -> CompensatorExample:
    """Exponential jump time ``T``; on ``[0, T[`` its compensator ``T ^ t`` is just ``t``."""
    grid = TimeGrid(horizon, n_steps)
    u = standard_uniforms(ScenarioBatch(n_paths, seed), (STREAM_GALLERY,))
    T = -np.log1p(-u)
    k = np.array([max(1, grid.node_at_or_after(t)) if t <= horizon else INF for t in T], dtype=np.int64)
    dom = IntervalTypeSet(grid, StoppingTime(k), np.ones(n_paths, bool))
    t = grid.nodes[None, :]
    kk = np.minimum(k, n_steps + 1)[:, None]
    node = np.arange(grid.n_nodes)[None, :]
    t_jump = np.where(kk <= n_steps, grid.nodes[np.minimum(kk, n_steps)], np.inf)
    level = np.minimum(t, t_jump) - (node >= kk)          # A^p - A, full grid
    cs = CoupledSequence(grid, (StoppingTime(k),), (SamplePath(grid, level),))
    inc = np.zeros_like(level)
    inc[:, 1:] = np.diff(np.where(dom.mask, level, 0.0), axis=1)
    inc = np.where(dom.mask, inc, 0.0)
    dec = Decomposition(0.0, 0.0 * inc, inc, 0.0, False)
    M = glue(dom, cs, dec, inner=False)
    br = bracket(M, M)
    rep = check_inner(M)
    try:
        martingale_integral(PredictablePath.constant(grid, n_paths), M)
        rejected = False
    except NotInnerError:
        rejected = True
    return CompensatorExample(n_paths, float(np.max(np.abs(br.filled()))), float(np.max(np.abs(M.filled()))),
                              rep.structural, rep.statistical, rep.z_scores[0], rejected)


def step_compensator(t):
    """``0`` on ``[0,1[``, ``1/2`` on ``[1,2[``, ``3/2`` from 2 on."""
    t = np.asarray(t, dtype=float)
    out = np.where(t < 1, 0.0, np.where(t < 2, 0.5, 1.5))
    return out if out.ndim else float(out)


def step_example(probes=(0.5, 1.5, 2.5)) -> StepCompensator:
    vals = tuple(float(step_compensator(p)) for p in probes)
    gaps = []
    for p in probes:
        # T is 1 or 2 with probability 1/2 each
        gap = sum(0.5 * (float(step_compensator(min(T, p))) - (1.0 if T <= p else 0.0)) for T in (1.0, 2.0))
        gaps.append(gap)
    return StepCompensator(tuple(probes), vals, (0.0, 0.5, 1.5), tuple(gaps))


def counterexample_gallery(seed: int = 0) -> GalleryReport:
    return GalleryReport(divergent_stieltjes(), compensator_example(seed=seed), step_example())
