"""Executable checks of the change-of-variables formula, integration by parts,
and a randomized suite of exact grid identities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bprocess import (
    BProcess,
    CoupledSequence,
    Decomposition,
    bjump,
    bsummation,
    from_path,
    glue,
    merge_fcs_times,
    restrict,
    stop,
    stop_minus,
)
from .grid_paths import STREAM_SUITE, PredictablePath, SamplePath, TimeGrid, node_increments, path_generator
from .integration import (
    BracketConvention,
    NotInnerError,
    bracket,
    integrate,
    martingale_integral,
    predictable_qv,
    semimartingale_integral,
    stieltjes,
)
from .interval_sets import INF, IntervalTypeSet, StoppingTime, intersect_stop

EXACT_TOL = 1e-12


class DerivativeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothFunction:
    """``F: R^d -> R`` with closed-form gradient and Hessian.

    ``f`` maps an array of shape ``(..., d)`` to ``(...)``; ``grad`` to
    ``(..., d)`` and ``hess`` to ``(..., d, d)``.  The derivatives are
    compared against central differences when the object is created.
    """

    f: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    dim: int = 1
    name: str = "F"
    check_points: int = 5

    def __post_init__(self):
        rng = np.random.default_rng(12345)
        pts = rng.uniform(-1.0, 1.0, size=(self.check_points, self.dim))
        h = 1e-5
        g = np.asarray(self.grad(pts), dtype=float).reshape(self.check_points, self.dim)
        H = np.asarray(self.hess(pts), dtype=float).reshape(self.check_points, self.dim, self.dim)
        eye = np.eye(self.dim)
        for i in range(self.dim):
            fd = (np.asarray(self.f(pts + h * eye[i])) - np.asarray(self.f(pts - h * eye[i]))) / (2 * h)
            if not np.all(np.abs(fd - g[:, i]) <= 1e-5 * np.maximum(1.0, np.abs(g[:, i]))):
                raise DerivativeMismatchError(f"{self.name}: gradient component {i} disagrees with finite differences")
            gd = (np.asarray(self.grad(pts + h * eye[i])).reshape(-1, self.dim)
                  - np.asarray(self.grad(pts - h * eye[i])).reshape(-1, self.dim)) / (2 * h)
            if not np.all(np.abs(gd - H[:, :, i]) <= 1e-5 * np.maximum(1.0, np.abs(H[:, :, i]))):
                raise DerivativeMismatchError(f"{self.name}: Hessian column {i} disagrees with finite differences")

    @classmethod
    def linear(cls, coeffs: Sequence[float], const: float = 0.0) -> SmoothFunction:
        a = np.asarray(coeffs, dtype=float)
        d = a.size
        return cls(lambda x: x @ a + const,
                   lambda x: np.broadcast_to(a, np.shape(x)[:-1] + (d,)),
                   lambda x: np.zeros(np.shape(x)[:-1] + (d, d)), d, "linear")

    @classmethod
    def quadratic(cls, Q) -> SmoothFunction:
        """``x' Q x`` for a symmetric ``Q``."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        Q = (Q + Q.T) / 2
        d = Q.shape[0]
        return cls(lambda x: np.einsum("...i,ij,...j->...", x, Q, x),
                   lambda x: 2 * x @ Q,
                   lambda x: np.broadcast_to(2 * Q, np.shape(x)[:-1] + (d, d)), d, "quadratic")

    @classmethod
    def exp(cls) -> SmoothFunction:
        return cls(lambda x: np.exp(x[..., 0]), lambda x: np.exp(x),
                   lambda x: np.exp(x)[..., None], 1, "exp")

    @classmethod
    def product(cls) -> SmoothFunction:
        return cls(lambda x: x[..., 0] * x[..., 1],
                   lambda x: x[..., ::-1],
                   lambda x: np.broadcast_to(np.array([[0.0, 1.0], [1.0, 0.0]]), np.shape(x)[:-1] + (2, 2)),
                   2, "product")


@dataclass(frozen=True)
class ResidualReport:
    sup: float
    mean: float
    per_scenario_sup: np.ndarray
    n_steps: int
    relative_sup: float


@dataclass(frozen=True)
class ItoReport(ResidualReport):
    terms: dict = field(default_factory=dict)


def _report(residual: np.ndarray, mask: np.ndarray, scale: np.ndarray, n_steps: int) -> ResidualReport:
    r = np.where(mask, np.abs(residual), 0.0)
    per = r.max(axis=1)
    rel = np.where(mask, r / np.maximum(1.0, scale), 0.0)
    count = mask.sum()
    return ResidualReport(float(per.max()), float(r.sum() / count), per, n_steps, float(rel.max()))


def _stack(Z: Sequence[BProcess]) -> np.ndarray:
    return np.stack([z.filled() for z in Z], axis=-1)


def ito_residual(F: SmoothFunction, Z: Sequence[BProcess] | BProcess,
                 convention: BracketConvention = "realized") -> ItoReport:
    """Nodewise residual of the change-of-variables formula for ``F(Z)``.

    The five reported terms are ``F(Z)``, ``F(Z_0)``, the first-order
    integrals, the jump correction over labelled jump nodes, and half the
    Hessian integrated against the continuous covariations.
    """
    if isinstance(Z, BProcess):
        Z = [Z]
    Z = list(Z)
    if len(Z) != F.dim:
        raise ValueError(f"{F.name} takes {F.dim} arguments, got {len(Z)} processes")
    dom = Z[0].domain
    for z in Z:
        if z.decomposition is None:
            raise ValueError("every component needs a decomposition")
        if not z.inner:
            raise NotInnerError("every component must be an inner semimartingale")
        if not z.domain.same_sections(dom):
            raise ValueError("components live on different sets")
    mask = dom.mask
    x = _stack(Z)
    x_left = np.concatenate([x[:, :1], x[:, :-1]], axis=1)
    fz = np.asarray(F.f(x))
    fz_left = np.asarray(F.f(x_left))
    g_left = np.asarray(F.grad(x_left)).reshape(x.shape)
    h_left = np.asarray(F.hess(x_left)).reshape(x.shape + (F.dim,))

    f0 = np.broadcast_to(fz[:, :1], fz.shape)
    first = np.zeros_like(fz)
    for k, z in enumerate(Z):
        first += semimartingale_integral(g_left[..., k], z.minus_initial()).filled()

    jumps = np.zeros_like(mask)
    for z in Z:
        jumps |= z.decomposition.jumps
    linear_part = sum(g_left[..., k] * z.steps for k, z in enumerate(Z))
    eta_inc = np.where(jumps & mask, fz - fz_left - linear_part, 0.0)
    eta_inc[:, 0] = 0.0
    eta = bsummation(BProcess(dom, eta_inc)).filled()

    second = np.zeros_like(fz)
    for k in range(F.dim):
        for l in range(F.dim):
            qv = predictable_qv(Z[k], Z[l], convention)
            second += 0.5 * stieltjes(h_left[..., k, l], qv).filled()

    rhs = f0 + first + eta + second
    residual = np.where(mask, fz - rhs, 0.0)
    scale = np.maximum.reduce([np.abs(fz), np.abs(f0), np.abs(first), np.abs(eta), np.abs(second)])
    base = _report(residual, mask, scale, dom.grid.n_steps)
    terms = {"F(Z)": fz, "F(Z0)": f0, "first_order": first, "jump_correction": eta,
             "second_order": second, "residual": residual}
    return ItoReport(base.sup, base.mean, base.per_scenario_sup, base.n_steps, base.relative_sup, terms)


def ibp_residual(X: BProcess, Y: BProcess) -> ResidualReport:
    """Residual of ``XY = X_- . Y + Y_- . X + [X, Y] - 2 X_0 Y_0``."""
    if not X.domain.same_sections(Y.domain):
        raise ValueError("processes live on different sets")
    mask = X.mask
    lhs = X.filled() * Y.filled()
    a = integrate(PredictablePath.left_limits(X), Y).filled()
    b = integrate(PredictablePath.left_limits(Y), X).filled()
    c = bracket(X, Y).filled()
    d = 2.0 * (X.filled()[:, :1] * Y.filled()[:, :1])
    residual = lhs - (a + b + c - d)
    scale = np.maximum.reduce([np.abs(lhs), np.abs(a), np.abs(b), np.abs(c), np.broadcast_to(np.abs(d), lhs.shape)])
    return _report(residual, mask, scale, X.grid.n_steps)


# --------------------------------------------------------------------------
# randomized identity suite

@dataclass(frozen=True)
class LawResult:
    law: str
    max_residual: float
    tolerance: float = EXACT_TOL

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_residual) and self.max_residual <= self.tolerance)


@dataclass(frozen=True)
class SuiteReport:
    results: tuple[LawResult, ...]
    seed: int
    n_steps: int
    n_paths: int
    n_sets: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> list[LawResult]:
        return [r for r in self.results if not r.passed]

    def worst(self) -> dict[str, float]:
        return {r.law: r.max_residual for r in self.results}


def _rel(a, b, mask) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        d = np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    d = np.where(mask, d, 0.0)
    if np.isnan(d).any():
        return float("inf")
    return float(d.max())


class _Instances:
    """Random sets, paths, integrands and stopping times for the suite."""

    def __init__(self, rng: np.random.Generator, grid: TimeGrid, n_paths: int, force_kappa: int | None):
        self.rng = rng
        self.grid = grid
        self.P = n_paths
        self.force_kappa = force_kappa

    def domain(self) -> IntervalTypeSet:
        N, P, rng = self.grid.n_steps, self.P, self.rng
        if self.force_kappa is not None:
            return IntervalTypeSet(self.grid, StoppingTime.constant(self.force_kappa, P), np.ones(P, bool))
        k = rng.integers(0, N + 1, size=P)
        k = np.where(rng.random(P) < 0.2, INF, k)
        flag = rng.random(P) < 0.5
        flag &= k != 0
        return IntervalTypeSet(self.grid, StoppingTime(k), flag)

    def jump_path(self) -> SamplePath:
        N, P, rng = self.grid.n_steps, self.P, self.rng
        inc = rng.normal(size=(P, N)) * (rng.random((P, N)) < 0.6)
        inc += rng.choice([-2.0, 0.0, 3.0], size=(P, N), p=[0.1, 0.8, 0.1])
        v = np.concatenate([rng.normal(size=(P, 1)), inc], axis=1)
        return SamplePath(self.grid, np.cumsum(v, axis=1))

    def decomposition(self, x0: np.ndarray) -> Decomposition:
        N, P, rng = self.grid.n_steps, self.P, self.rng
        z = np.zeros((P, 1))
        cont = np.concatenate([z, rng.normal(size=(P, N)) * 0.5], axis=1)
        disc = np.concatenate([z, rng.normal(size=(P, N)) * (rng.random((P, N)) < 0.3)], axis=1)
        fv = np.concatenate([z, rng.normal(size=(P, N)) * 0.1 * (rng.random((P, N)) < 0.5)], axis=1)
        return Decomposition(x0, cont, disc, fv)

    def semimartingale(self, dom: IntervalTypeSet) -> BProcess:
        x0 = self.rng.normal(size=self.P)
        dec = self.decomposition(x0)
        path = SamplePath(self.grid, x0[:, None] + np.cumsum(dec.total, axis=1))
        dec = Decomposition(x0, dec.cont, dec.disc, dec.fv)
        return from_path(path, dom, dec, inner=True)

    def martingale(self, dom: IntervalTypeSet) -> BProcess:
        x0 = self.rng.normal(size=self.P)
        d = self.decomposition(x0)
        path = SamplePath(self.grid, x0[:, None] + np.cumsum(d.cont + d.disc, axis=1))
        return from_path(path, dom, Decomposition(x0, d.cont, d.disc, 0.0), inner=True)

    def split_path(self, dom: IntervalTypeSet) -> BProcess:
        """Every node is either a labelled jump or a drift-free continuous move."""
        N, P, rng = self.grid.n_steps, self.P, self.rng
        x0 = rng.normal(size=P)
        z = np.zeros((P, 1))
        is_jump = np.concatenate([np.zeros((P, 1), bool), rng.random((P, N)) < 0.3], axis=1)
        size = np.concatenate([z, rng.normal(size=(P, N))], axis=1)
        cont = np.where(is_jump, 0.0, size * 0.3)
        disc = np.where(is_jump, size, 0.0)
        path = SamplePath(self.grid, x0[:, None] + np.cumsum(cont + disc, axis=1))
        return from_path(path, dom, Decomposition(x0, cont, disc, 0.0, is_jump), inner=True)

    def integrand(self) -> PredictablePath:
        return PredictablePath(self.grid, self.rng.normal(size=(self.P, self.grid.n_nodes)))

    def inner_time(self, dom: IntervalTypeSet) -> StoppingTime:
        last = dom.last_member
        return StoppingTime(np.floor(self.rng.random(self.P) * (last + 1)).astype(np.int64))

    def fcs(self, dom: IntervalTypeSet, path: SamplePath) -> CoupledSequence:
        """Three-level ladder agreeing with ``path`` on the set up to each time."""
        N, P, rng = self.grid.n_steps, self.P, self.rng
        top = dom.debut.index
        t1 = np.minimum(np.floor(rng.random(P) * (dom.last_member + 1)).astype(np.int64), top)
        t2 = np.maximum(t1, np.minimum(dom.last_member, t1 + rng.integers(0, 4, size=P)))
        t3 = top
        nodes = np.arange(N + 1)[None, :]
        levels = []
        for t in (t1, t2, t3):
            noise = rng.normal(size=(P, N + 1)) * 10
            covered = (nodes <= np.minimum(t, N)[:, None]) & dom.mask
            levels.append(SamplePath(self.grid, np.where(covered, path.values, noise)))
        return CoupledSequence(self.grid, tuple(StoppingTime(t) for t in (t1, t2, t3)), tuple(levels))


def identity_suite(seed: int = 0, n_steps: int = 16, n_paths: int = 200, n_sets: int = 10,
                   force_kappa: int | None = None) -> SuiteReport:
    """Evaluate the exact grid identities on randomized instances.

    Each law's worst relative residual over all sets and scenarios is
    recorded; all laws are expected to hold to ``1e-12``.
    """
    grid = TimeGrid(1.0, n_steps)
    rng = path_generator(seed, 0, (STREAM_SUITE,))
    gen = _Instances(rng, grid, n_paths, force_kappa)
    worst: dict[str, float] = {}

    def record(law: str, value: float):
        worst[law] = max(worst.get(law, 0.0), value)

    for _ in range(n_sets):
        dom = gen.domain()
        m = dom.mask
        xp, yp = gen.jump_path(), gen.jump_path()
        X, Y = from_path(xp, dom), from_path(yp, dom)
        a, b = rng.normal(size=2)
        T, S = gen.inner_time(dom), gen.inner_time(dom)
        upto_T = np.arange(grid.n_nodes)[None, :] <= T.index[:, None]

        # jumps
        record("jump_linearity", _rel(bjump(a * X + b * Y).filled(),
                                      a * bjump(X).filled() + b * bjump(Y).filled(), m))
        sub = intersect_stop(dom, S)
        record("jump_restriction", _rel(bjump(restrict(X, sub)).filled(),
                                        restrict(bjump(X), sub).filled(), sub.mask))
        record("jump_stop", _rel(bjump(stop(X, T)).filled(), np.where(upto_T, bjump(X).filled(), 0.0), m))
        before_T = np.arange(grid.n_nodes)[None, :] < T.index[:, None]
        record("jump_stop_minus", _rel(node_increments(stop_minus(xp, T).values),
                                       np.where(before_T, node_increments(xp.values), 0.0),
                                       np.ones_like(m)))

        # stopping and summation
        TS = T & S
        record("stop_commutation", max(_rel(stop(stop(X, T), S).filled(), stop(X, TS).filled(), m),
                                       _rel(stop(stop(X, S), T).filled(), stop(X, TS).filled(), m)))
        cut = BProcess(dom, np.where(upto_T, X.filled(), 0.0))
        record("summation_stop", _rel(bsummation(cut).filled(), stop(bsummation(X), T).filled(), m))

        # coupled sequences
        cs1, cs2 = gen.fcs(dom, xp), gen.fcs(dom, xp)
        g1, g2 = glue(dom, cs1), glue(dom, cs2)
        record("fcs_glue_independence", _rel(g1.filled(), g2.filled(), m))
        record("fcs_glue_matches_path", _rel(g1.filled(), X.filled(), m))
        c1, c2 = merge_fcs_times(dom, cs1, cs2)
        record("fcs_merge", max(_rel(glue(dom, c1).filled(), g1.filled(), m),
                                _rel(glue(dom, c2).filled(), g2.filled(), m)))

        # pathwise integral
        H, K = gen.integrand(), gen.integrand()
        record("stieltjes_linearity_integrand",
               _rel(stieltjes(H.values * a + K.values * b, X).filled(),
                    a * stieltjes(H, X).filled() + b * stieltjes(K, X).filled(), m))
        record("stieltjes_linearity_integrator",
               _rel(stieltjes(H, a * X + b * Y).filled(),
                    a * stieltjes(H, X).filled() + b * stieltjes(H, Y).filled(), m))
        record("stieltjes_associativity",
               _rel(stieltjes(K.values * H.values, X).filled(), stieltjes(K, stieltjes(H, X)).filled(), m))

        # martingale integral
        M, Nm = gen.martingale(dom), gen.martingale(dom)
        record("martingale_linearity",
               max(_rel(martingale_integral(H, a * M + b * Nm).filled(),
                        a * martingale_integral(H, M).filled() + b * martingale_integral(H, Nm).filled(), m),
                   _rel(martingale_integral(H.values + K.values, M).filled(),
                        martingale_integral(H, M).filled() + martingale_integral(K, M).filled(), m)))
        record("martingale_associativity",
               _rel(martingale_integral(K.values * H.values, M).filled(),
                    martingale_integral(K, martingale_integral(H, M)).filled(), m))
        record("martingale_defining_identity",
               _rel(bracket(martingale_integral(H, M), Nm).filled(), stieltjes(H, bracket(M, Nm)).filled(), m))

        # semimartingale integral
        U, V = gen.semimartingale(dom), gen.semimartingale(dom)
        HU = semimartingale_integral(H, U)
        record("semimartingale_sum_integrator",
               _rel(semimartingale_integral(H, U + V).filled(), HU.filled() + semimartingale_integral(H, V).filled(), m))
        record("semimartingale_sum_integrand",
               _rel(semimartingale_integral(H.values + K.values, U).filled(),
                    HU.filled() + semimartingale_integral(K, U).filled(), m))
        record("semimartingale_associativity",
               _rel(semimartingale_integral(K.values * H.values, U).filled(),
                    semimartingale_integral(K, HU).filled(), m))
        record("semimartingale_jump", _rel(bjump(HU).filled(), np.where(m, H.values * U.steps, 0.0), m))
        record("semimartingale_atom", _rel(HU.filled()[:, 0], H.values[:, 0] * U.filled()[:, 0], np.ones(n_paths, bool)))
        record("semimartingale_stop", _rel(stop(HU, T).filled(), semimartingale_integral(H, stop(U, T)).filled(), m))

        # brackets
        record("bracket_integral", _rel(bracket(HU, V).filled(), stieltjes(H, bracket(U, V)).filled(), m))
        record("bracket_symmetry", max(_rel(bracket(U, V).filled(), bracket(V, U).filled(), m),
                                       _rel(bracket(X, Y).filled(), bracket(Y, X).filled(), m)))
        record("bracket_bilinearity",
               _rel(bracket(a * U + b * M, V).filled(), a * bracket(U, V).filled() + b * bracket(M, V).filled(), m))
        record("bracket_stop_both", _rel(bracket(stop(U, T), stop(V, T)).filled(), stop(bracket(U, V), T).filled(), m))
        record("bracket_stop_one", _rel(bracket(stop(U, T), V).filled(), stop(bracket(U, V), T).filled(), m))

        # decomposition independence: move part of the drift into the jump martingale
        d = U.decomposition
        shift = d.fv * 0.5
        U2 = U.with_(decomposition=Decomposition(d.x0, d.cont, d.disc + shift, d.fv - shift))
        record("decomposition_independence",
               _rel(semimartingale_integral(H, U2).filled(), HU.filled(), m))

        # integration by parts and change of variables
        record("integration_by_parts", ibp_residual(X, Y).relative_sup)
        W1, W2 = gen.split_path(dom), gen.split_path(dom)
        lin = SmoothFunction.linear([a, b], 0.7)
        record("ito_affine", ito_residual(lin, [U, V]).relative_sup)
        record("ito_quadratic", max(ito_residual(SmoothFunction.quadratic([[1.0]]), [W1]).relative_sup,
                                    ito_residual(SmoothFunction.product(), [W1, W2]).relative_sup))

    results = tuple(LawResult(k, v) for k, v in worst.items())
    return SuiteReport(results, seed, n_steps, n_paths, n_sets)
