"""Stochastic integrals and brackets for processes living on interval-type sets.

Conventions: an integrand column ``k >= 1`` multiplies increment ``k`` of the
integrator, and column 0 is the atom at time 0, so every integral starts at
``H_0 X_0``.  Integrals are built from the integrator's stored increments,
which makes ``d(H.X) = H dX`` hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .bprocess import BProcess, Decomposition, OutsideSetError, from_path  # noqa: F401
from .grid_paths import PredictablePath, SamplePath, node_increments
from .interval_sets import IntervalTypeSet

BracketConvention = Literal["realized", "analytic"]


class DivergenceError(ArithmeticError):
    def __init__(self, scenario: int, node: int, what: str = "integral"):
        self.scenario = scenario
        self.node = node
        super().__init__(f"{what} is not finite at scenario {scenario}, node {node}")


class NotInnerError(ValueError):
    """The integrator is not flagged as an inner martingale / semimartingale."""


def _integrand(H, X: BProcess) -> np.ndarray:
    h = H.values if isinstance(H, PredictablePath) else np.asarray(H, dtype=float)
    h = np.broadcast_to(h, X.values.shape) if h.ndim < 2 or h.shape[0] == 1 else h
    if h.shape != X.values.shape:
        raise ValueError(f"integrand shape {h.shape} does not match integrator {X.values.shape}")
    return h


def _first_bad(ok: np.ndarray, mask: np.ndarray) -> Optional[tuple[int, int]]:
    bad = mask & ~ok
    if bad.any():
        s, k = np.argwhere(bad)[0]
        return int(s), int(k)
    return None


def _integral_arrays(H, X: BProcess, what: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(h, terms, values)`` of ``H.X``; terms has column 0 set to zero."""
    h = _integrand(H, X)
    mask = X.mask
    with np.errstate(all="ignore"):
        h_in = np.where(mask, h, 0.0)
        bad = _first_bad(np.isfinite(h_in), mask)
        if bad:
            raise DivergenceError(*bad, what=what)
        terms = h_in * X.steps
        terms[:, 0] = 0.0
        atom = h_in[:, 0] * X.filled()[:, 0]
        vals = atom[:, None] + np.cumsum(terms, axis=1)
    bad = _first_bad(np.isfinite(vals), mask)
    if bad:
        raise DivergenceError(*bad, what=what)
    return h_in, terms, vals


def _labels(X: BProcess) -> Decomposition:
    """Decomposition of ``X``, treating an unlabelled process as pure jump."""
    if X.decomposition is not None:
        return X.decomposition
    z = np.zeros_like(X.steps)
    return Decomposition(X.filled()[:, 0], z, z, X.steps, X.steps != 0)


def stieltjes(H, A: BProcess) -> BProcess:
    """Pathwise integral ``H_0 A_0 + sum H_k dA_k`` on the domain of ``A``."""
    h, terms, vals = _integral_arrays(H, A, "Stieltjes integral")
    with np.errstate(all="ignore"):
        total_var = np.cumsum(np.abs(terms), axis=1)
    bad = _first_bad(np.isfinite(total_var), A.mask)
    if bad:
        raise DivergenceError(*bad, what="Stieltjes total variation")
    dec = Decomposition(vals[:, 0], np.zeros_like(terms), np.zeros_like(terms), terms)
    return BProcess(A.domain, vals, dec, True, None, None, terms)


def _scaled_decomposition(h: np.ndarray, X: BProcess, x0: np.ndarray) -> Decomposition:
    d = X.decomposition
    return Decomposition(x0, h * d.cont, h * d.disc, h * d.fv, d.jumps)


def martingale_integral(H, M: BProcess) -> BProcess:
    """Integral against an inner martingale; the result stays inner."""
    if not M.inner:
        raise NotInnerError("integrator is not flagged inner; the integral would not be unique")
    if M.decomposition is not None and (M.decomposition.fv != 0).any():
        raise NotInnerError("integrator carries a finite-variation part; use semimartingale_integral")
    h, terms, vals = _integral_arrays(H, M, "martingale integral")
    if M.decomposition is not None:
        dec = _scaled_decomposition(h, M, vals[:, 0])
    else:
        dec = Decomposition(vals[:, 0], np.zeros_like(terms), terms, 0.0, terms != 0)
    diff = None if M.diffusion is None else h * M.diffusion
    return BProcess(M.domain, vals, dec, True, None, diff, terms)


def semimartingale_integral(H, X: BProcess) -> BProcess:
    """Integral against an inner semimartingale, martingale and drift parts together."""
    if X.decomposition is None:
        raise ValueError("integrator carries no decomposition")
    if not X.inner:
        raise NotInnerError("integrator decomposition is not flagged inner")
    h, terms, vals = _integral_arrays(H, X, "semimartingale integral")
    dec = _scaled_decomposition(h, X, vals[:, 0])
    diff = None if X.diffusion is None else h * X.diffusion
    return BProcess(X.domain, vals, dec, True, None, diff, terms)


def integrate(H, X: BProcess) -> BProcess:
    """Semimartingale integral for decomposed integrators, pathwise otherwise."""
    if X.decomposition is not None:
        return semimartingale_integral(H, X)
    return stieltjes(H, X)


def _bracket_increments(X: BProcess, Y: BProcess) -> tuple[np.ndarray, np.ndarray]:
    if not X.domain.same_sections(Y.domain):
        raise ValueError("bracket of processes on different sets")
    dx, dy = _labels(X), _labels(Y)
    jx = np.where(dx.jumps, dx.disc + dx.fv, 0.0)
    jy = np.where(dy.jumps, dy.disc + dy.fv, 0.0)
    return dx.cont * dy.cont, jx * jy


def _accumulated(domain: IntervalTypeSet, x0: np.ndarray, inc: np.ndarray) -> BProcess:
    vals = x0[:, None] + np.cumsum(inc, axis=1)
    dec = Decomposition(x0, np.zeros_like(inc), np.zeros_like(inc), inc)
    return BProcess(domain, vals, dec, True, None, None, inc)


def bracket(X: BProcess, Y: BProcess) -> BProcess:
    """``[X, Y] = X_0 Y_0 + sum cont_X cont_Y + sum jump_X jump_Y``.

    ``jump`` is the discontinuous-martingale plus finite-variation increment
    at nodes flagged as jumps.  An unlabelled process counts as pure jump,
    which reduces this to the grid bracket ``X_0 Y_0 + sum dX dY``.
    """
    cont, jmp = _bracket_increments(X, Y)
    return _accumulated(X.domain, X.filled()[:, 0] * Y.filled()[:, 0], cont + jmp)


@dataclass(frozen=True)
class BracketParts:
    continuous: BProcess
    jumps: BProcess
    total: BProcess


def bracket_parts(X: BProcess, Y: BProcess) -> BracketParts:
    cont, jmp = _bracket_increments(X, Y)
    zero = np.zeros(X.n_paths)
    x0y0 = X.filled()[:, 0] * Y.filled()[:, 0]
    return BracketParts(_accumulated(X.domain, zero, cont), _accumulated(X.domain, zero, jmp),
                        _accumulated(X.domain, x0y0, cont + jmp))


def predictable_qv(X: BProcess, Y: BProcess | None = None,
                   convention: BracketConvention = "realized") -> BProcess:
    """``<X^c, Y^c>`` from continuous labels (realized) or diffusion coefficients (analytic).

    Unlabelled inputs contribute their raw increments in realized mode.
    """
    Y = X if Y is None else Y
    if not X.domain.same_sections(Y.domain):
        raise ValueError("covariation of processes on different sets")
    if convention == "realized":
        cx = X.decomposition.cont if X.decomposition is not None else X.steps
        cy = Y.decomposition.cont if Y.decomposition is not None else Y.steps
        inc = cx * cy
    elif convention == "analytic":
        if X.diffusion is None or Y.diffusion is None:
            raise ValueError("analytic covariation needs diffusion coefficients on both processes")
        inc = X.diffusion * Y.diffusion * X.grid.dt
    else:
        raise ValueError(f"unknown bracket convention {convention!r}")
    inc = np.array(inc, dtype=float)
    inc[:, 0] = 0.0
    return _accumulated(X.domain, np.zeros(X.n_paths), inc)


@dataclass(frozen=True)
class InnerReport:
    structural: bool
    statistical: bool
    z_scores: tuple[float, ...]
    means: tuple[float, ...]
    note: str = ""

    @property
    def inner(self) -> bool:
        return self.structural and self.statistical


def check_inner(M: BProcess, z_limit: float = 4.0) -> InnerReport:
    """Structural flag plus a mean-zero test of each level stopped before the set closes.

    Level ``n`` is stopped at ``T_n`` or just before an open debut, whichever
    comes first, and the martingale part's change up to there must have a
    sample mean within ``z_limit`` standard errors of zero.
    """
    vals = M.filled()
    if M.decomposition is not None:
        mart = M.decomposition.x0[:, None] + np.cumsum(M.decomposition.martingale, axis=1)
    else:
        mart = vals
    is_zero = not np.any(vals[M.mask])
    structural = bool(M.inner or is_zero)
    last = M.domain.last_member
    zs, means = [], []
    ok = True
    note = ""
    P = M.n_paths
    for t in M.ladder.times:
        stop_at = np.minimum(t.index, last)
        change = mart[np.arange(P), stop_at] - mart[:, 0]
        mean = float(change.mean())
        means.append(mean)
        if P < 2:
            zs.append(0.0)
            note = "single scenario: statistical test skipped"
            continue
        se = float(change.std(ddof=1) / np.sqrt(P))
        if se == 0.0:
            z = 0.0 if mean == 0.0 else float("inf")
        else:
            z = mean / se
        zs.append(z)
        ok &= abs(z) <= z_limit
    return InnerReport(structural, bool(ok), tuple(zs), tuple(means), note)


def brownian_bprocess(path: SamplePath, domain: IntervalTypeSet) -> BProcess:
    """A Brownian path batch restricted to ``domain``, labelled continuous and inner."""
    inc = node_increments(path.values)
    dec = Decomposition(path.values[:, 0], inc, 0.0, 0.0, False)
    return from_path(path, domain, dec, inner=True, diffusion=1.0)
