"""A one-stock market that stops at a random exit time.

The horizon is split into periods ``(a_{n-1}, a_n]`` with constant drift
``mu_n`` and volatility ``sigma_n``.  Trading is only meaningful before the
exit time ``tau``, so every process lives on ``[0, tau[``.  The investor's
ladder is ``tau_n = a_n ^ tau``; each level ``n`` of the ladder is a full
stock path that uses the period-``n`` coefficients and driver from ``a_n`` on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .bprocess import BProcess, CoupledSequence, Decomposition, glue
from .grid_paths import (
    STREAM_DRIVER,
    STREAM_EXIT,
    PredictablePath,
    SamplePath,
    ScenarioBatch,
    TimeGrid,
    node_increments,
    standard_normals,
    standard_uniforms,
)
from .integration import semimartingale_integral
from .interval_sets import INF, FundamentalSequence, IntervalTypeSet, StoppingTime

CHUNK_PATHS = 1000


class ExitLawError(ValueError):
    pass


class AllRejectedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExitLaw:
    """Distribution of the exit time.

    ``kind`` is one of ``exponential`` (``rate``), ``uniform`` (``low``,
    ``high``), ``weibull`` (``shape``, ``scale``), ``none`` (never exits) or
    ``custom`` (``cdf`` callable, inverted numerically).
    """

    kind: str = "exponential"
    rate: float = 1.0
    low: float = 0.0
    high: float = 1.0
    shape: float = 1.0
    scale: float = 1.0
    cdf_fn: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self):
        k = self.kind
        if k == "exponential":
            if not self.rate > 0:
                raise ExitLawError("exponential rate must be positive")
        elif k == "uniform":
            if not 0 <= self.low < self.high:
                raise ExitLawError("uniform law needs 0 <= low < high")
        elif k == "weibull":
            if not (self.shape > 0 and self.scale > 0):
                raise ExitLawError("weibull shape and scale must be positive")
        elif k == "custom":
            if self.cdf_fn is None:
                raise ExitLawError("custom law needs a cdf")
            t = np.concatenate([[0.0], np.geomspace(1e-6, 1e6, 60)])
            v = np.array([float(self.cdf_fn(x)) for x in t])
            if not (np.all(np.isfinite(v)) and np.all((v >= 0) & (v <= 1)) and np.all(np.diff(v) >= 0)):
                raise ExitLawError("custom cdf must be nondecreasing with values in [0, 1]")
        elif k != "none":
            raise ExitLawError(f"unknown exit law {k!r}")

    @classmethod
    def exponential(cls, rate: float) -> ExitLaw:
        return cls("exponential", rate=rate)

    @classmethod
    def uniform(cls, low: float, high: float) -> ExitLaw:
        return cls("uniform", low=low, high=high)

    @classmethod
    def weibull(cls, shape: float, scale: float) -> ExitLaw:
        return cls("weibull", shape=shape, scale=scale)

    @classmethod
    def never(cls) -> ExitLaw:
        return cls("none")

    @classmethod
    def custom(cls, cdf: Callable[[float], float]) -> ExitLaw:
        return cls("custom", cdf_fn=cdf)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k == "exponential":
            out = -np.expm1(-self.rate * np.maximum(t, 0.0))
        elif k == "uniform":
            out = np.clip((t - self.low) / (self.high - self.low), 0.0, 1.0)
        elif k == "weibull":
            out = -np.expm1(-(np.maximum(t, 0.0) / self.scale) ** self.shape)
        elif k == "none":
            out = np.zeros_like(t)
        else:
            out = np.vectorize(lambda x: float(self.cdf_fn(x)))(t)
        return out if out.ndim else float(out)

    def ppf(self, u: float) -> float:
        """Smallest ``t`` with ``F(t) >= u``; ``inf`` if the law never gets there."""
        k = self.kind
        if k == "exponential":
            return -math.log1p(-u) / self.rate
        if k == "uniform":
            return self.low + u * (self.high - self.low)
        if k == "weibull":
            return self.scale * (-math.log1p(-u)) ** (1.0 / self.shape)
        if k == "none":
            return math.inf
        return self._invert(u)

    def _invert(self, u: float) -> float:
        F = lambda t: float(self.cdf_fn(t)) - u  # noqa: E731
        if F(0.0) >= 0:
            return 0.0
        hi = 1.0
        while F(hi) < 0:
            hi *= 2.0
            if hi > 1e12:
                return math.inf
        try:
            return float(optimize.brentq(F, 0.0, hi, xtol=1e-14, rtol=1e-14, maxiter=500))
        except (ValueError, RuntimeError) as exc:
            raise ExitLawError(f"could not invert the exit-time cdf at u={u}: {exc}") from exc


@dataclass(frozen=True)
class MarketConfig:
    s0: float
    x0: float
    mu_star: float
    sigma: tuple[float, ...]
    a: tuple[float, ...]
    exit_law: ExitLaw = field(default_factory=ExitLaw)
    b: float = 1.0
    n_paths: int = 10_000
    steps_per_unit: int = 4096
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sigma", tuple(float(s) for s in self.sigma))
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        errs = []
        if not self.s0 > 0:
            errs.append("s0 must be positive")
        if not self.x0 > 0:
            errs.append("x0 must be positive")
        if not (math.isfinite(self.mu_star) and self.mu_star >= 0):
            errs.append("mu_star must be finite and nonnegative")
        if not (math.isfinite(self.b) and self.b > 0):
            errs.append("b must be positive")
        if len(self.sigma) != len(self.a):
            errs.append("sigma and a must have the same length")
        if any(not (math.isfinite(s) and s >= 0) for s in self.sigma):
            errs.append("sigma entries must be finite and nonnegative")
        if any(x <= 0 for x in self.a[:1]) or any(y <= x for x, y in zip(self.a, self.a[1:])):
            errs.append("a must be positive and strictly increasing")
        if any(not math.isfinite(x) for x in self.a):
            errs.append("a entries must be finite")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            errs.append("n_paths must be a positive integer")
        if int(self.steps_per_unit) != self.steps_per_unit or self.steps_per_unit < 1:
            errs.append("steps_per_unit must be a positive integer")
        if not 0 <= self.seed < 2**64:
            errs.append("seed must fit in an unsigned 64-bit integer")
        if errs:
            raise ValueError("; ".join(errs))

    @property
    def n_periods(self) -> int:
        return len(self.a)

    def grid(self) -> TimeGrid:
        if not self.a:
            raise ValueError("market has no periods")
        n = max(1, int(round(self.steps_per_unit * self.a[-1])))
        return TimeGrid(self.a[-1], n)

    def period_ends(self, grid: TimeGrid | None = None) -> np.ndarray:
        grid = grid or self.grid()
        ends = np.array([grid.nearest_node(x) for x in self.a], dtype=np.int64)
        ends[-1] = grid.n_steps
        if ends[0] < 1 or np.any(np.diff(ends) < 1):
            raise ValueError("grid too coarse: two period ends fall on the same node")
        return ends

    def batch(self) -> ScenarioBatch:
        return ScenarioBatch(self.n_paths, self.seed)


def mu_sequence(config: MarketConfig) -> np.ndarray:
    """``mu_n = (1 + (b - 1) F(a_n)) mu*``."""
    F = np.asarray(config.exit_law.cdf(np.array(config.a)), dtype=float)
    return (1.0 + (config.b - 1.0) * F) * config.mu_star


def period_of_node(grid: TimeGrid, ends: np.ndarray) -> np.ndarray:
    """Period (0-based) owning increment ``k``; node 0 is assigned to the first period."""
    k = np.arange(grid.n_nodes)
    return np.minimum(np.searchsorted(ends, k, side="left"), len(ends) - 1)


@dataclass(frozen=True)
class ExitTimes:
    exact: np.ndarray
    index: StoppingTime


def sample_exit_time(config: MarketConfig, batch: ScenarioBatch, grid: TimeGrid | None = None) -> ExitTimes:
    """Inverse-transform draws of ``tau``, snapped to the first node at or after the draw."""
    grid = grid or config.grid()
    if config.exit_law.kind == "none":
        exact = np.full(batch.n_paths, math.inf)
    else:
        u = standard_uniforms(batch, (STREAM_EXIT,))
        exact = np.array([config.exit_law.ppf(x) for x in u])
    if np.isnan(exact).any():
        raise ExitLawError("exit-time draw produced NaN")
    idx = np.full(batch.n_paths, INF, dtype=np.int64)
    fin = np.isfinite(exact) & (exact <= grid.horizon)
    for i in np.flatnonzero(fin):
        idx[i] = max(1, grid.node_at_or_after(exact[i]))
    idx[idx > grid.n_steps] = INF
    return ExitTimes(exact, StoppingTime(idx))


def terminal_times(config: MarketConfig, tau: StoppingTime, grid: TimeGrid | None = None) -> FundamentalSequence:
    """Ladder ``tau_n = a_n ^ tau`` on grid indices."""
    grid = grid or config.grid()
    ends = config.period_ends(grid)
    return FundamentalSequence(tuple(StoppingTime(np.minimum(e, tau.index)) for e in ends))


def exit_set(grid: TimeGrid, tau: StoppingTime) -> IntervalTypeSet:
    """``[0, tau[`` on the grid."""
    return IntervalTypeSet(grid, tau, np.ones(tau.n_paths, bool))


@dataclass(frozen=True, eq=False)
class MarketProcesses:
    config: MarketConfig
    grid: TimeGrid
    batch: ScenarioBatch
    exit: ExitTimes
    ladder: FundamentalSequence
    domain: IntervalTypeSet
    mu: np.ndarray
    sigma: np.ndarray
    ends: np.ndarray
    drivers: tuple[np.ndarray, ...]
    driver: BProcess

    @property
    def period(self) -> np.ndarray:
        return period_of_node(self.grid, self.ends)

    def coefficient_columns(self, level: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Per-column ``(mu, sigma)``; level ``n`` keeps period-``n`` values after ``a_n``."""
        per = self.period
        if level is not None:
            per = np.minimum(per, level - 1)
        return self.mu[per], self.sigma[per]

    def level_increments(self, level: int) -> np.ndarray:
        """Driver increments of level ``level`` (1-based), column 0 zero."""
        return _level_increments(self.drivers, self.ends, self.grid, level)


def _driver_normals(batch: ScenarioBatch, ends: np.ndarray, n_steps: int,
                    periods: Sequence[int] | None = None) -> tuple[np.ndarray, ...]:
    """Period ``k`` driver covers increments ``a_{k-1} + 1 .. N``."""
    starts = np.concatenate([[0], ends[:-1]])
    out = []
    for k in range(len(ends)):
        if periods is not None and k not in periods:
            out.append(np.empty((batch.n_paths, 0)))
            continue
        out.append(standard_normals(batch, n_steps - int(starts[k]), (STREAM_DRIVER, k)))
    return tuple(out)


def _level_increments(drivers, ends, grid: TimeGrid, level: int) -> np.ndarray:
    P = drivers[0].shape[0]
    inc = np.zeros((P, grid.n_nodes))
    starts = np.concatenate([[0], ends[:-1]])
    sq = math.sqrt(grid.dt)
    for k in range(level):
        lo = int(starts[k]) + 1
        hi = int(ends[k]) if k < level - 1 else grid.n_steps
        inc[:, lo:hi + 1] = drivers[k][:, : hi - lo + 1] * sq
    return inc


def build_market_processes(config: MarketConfig, batch: ScenarioBatch | None = None,
                           grid: TimeGrid | None = None) -> MarketProcesses:
    grid = grid or config.grid()
    batch = batch or config.batch()
    ends = config.period_ends(grid)
    ex = sample_exit_time(config, batch, grid)
    ladder = terminal_times(config, ex.index, grid)
    dom = exit_set(grid, ex.index)
    drivers = _driver_normals(batch, ends, grid.n_steps)
    K = config.n_periods
    levels = tuple(SamplePath(grid, np.cumsum(_level_increments(drivers, ends, grid, n), axis=1))
                   for n in range(1, K + 1))
    inc = node_increments(levels[-1].values)
    dec = Decomposition(0.0, inc, 0.0, 0.0, False)
    M = glue(dom, CoupledSequence(grid, ladder.times, levels), dec, inner=True, diffusion=1.0)
    return MarketProcesses(config, grid, batch, ex, ladder, dom, mu_sequence(config),
                           np.array(config.sigma), ends, drivers, M)


def _stock_level(config: MarketConfig, proc: MarketProcesses, level: int) -> np.ndarray:
    mu, sig = proc.coefficient_columns(level)
    dt = proc.grid.dt
    dlog = (mu - 0.5 * sig**2) * dt + sig * proc.level_increments(level)
    dlog[:, 0] = 0.0
    return config.s0 * np.exp(np.cumsum(dlog, axis=1))


def simulate_stock(config: MarketConfig, proc: MarketProcesses) -> BProcess:
    """Exact lognormal node update, labelled ``cont = S_- sigma dM`` and drift ``fv``.

    No node is flagged as a jump: the drift increments discretize a
    continuous finite-variation motion.
    """
    K = config.n_periods
    levels = tuple(SamplePath(proc.grid, _stock_level(config, proc, n)) for n in range(1, K + 1))
    cs = CoupledSequence(proc.grid, proc.ladder.times, levels)
    S = glue(proc.domain, cs)
    s_left = S.left_values()
    _, sig = proc.coefficient_columns()
    cont = s_left * sig * proc.driver.steps
    fv = S.steps - cont
    dec = Decomposition(config.s0, cont, 0.0, fv, False)
    return S.with_(decomposition=dec, inner=True, diffusion=s_left * sig)


@dataclass(frozen=True)
class ClosedFormStrategy:
    fractions: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    a: tuple[float, ...]

    def fraction_columns(self, grid: TimeGrid, ends: np.ndarray) -> np.ndarray:
        return self.fractions[period_of_node(grid, ends)]


def closed_form_strategy(config: MarketConfig) -> ClosedFormStrategy:
    """Optimal fraction of wealth in the stock, ``mu_n / sigma_n^2`` per period."""
    sig = np.array(config.sigma)
    if (sig <= 0).any():
        raise ValueError("optimal fraction needs positive volatility in every period")
    mu = mu_sequence(config)
    return ClosedFormStrategy(mu / sig**2, mu, sig, config.a)


def optimal_wealth(config: MarketConfig, proc: MarketProcesses) -> BProcess:
    """``x0 exp(sum mu^2 / (2 sigma^2) dt + sum mu / sigma dM)`` on the exit set."""
    mu, sig = proc.coefficient_columns()
    lam = mu / sig
    dlog = 0.5 * lam**2 * proc.grid.dt + lam * proc.driver.steps
    dlog[:, 0] = 0.0
    return BProcess(proc.domain, config.x0 * np.exp(np.cumsum(dlog, axis=1)))


@dataclass(frozen=True, eq=False)
class WealthResult:
    wealth: BProcess
    shares: PredictablePath
    fractions: Optional[np.ndarray] = None


def wealth(shares: PredictablePath, stock: BProcess, x0: float) -> WealthResult:
    """Self-financing wealth ``(x0 - theta_0 S_0) + theta . S``."""
    gains = semimartingale_integral(shares, stock)
    cash = x0 - shares.values[:, :1] * stock.filled()[:, :1]
    vals = cash + gains.filled()
    dec = gains.decomposition.with_x0(vals[:, 0])
    X = BProcess(stock.domain, vals, dec, True, None, gains.diffusion, gains.steps)
    return WealthResult(X, shares)


def wealth_from_fractions(fractions, stock: BProcess, x0: float) -> WealthResult:
    """Share counts ``theta_k = w_k X_{k-1} / S_{k-1}`` resolved node by node."""
    P, n = stock.values.shape
    w = np.broadcast_to(np.asarray(fractions, dtype=float), (P, n))
    S = stock.filled(np.nan)
    dS = stock.steps
    mask = stock.mask
    theta = np.zeros((P, n))
    X = np.full(P, float(x0))
    theta[:, 0] = w[:, 0] * x0 / S[:, 0]
    for k in range(1, n):
        live = mask[:, k]
        th = np.where(live, w[:, k] * X / np.where(live, S[:, k - 1], 1.0), 0.0)
        theta[:, k] = th
        X = X + th * dS[:, k]
    shares = PredictablePath(stock.grid, theta)
    res = wealth(shares, stock, x0)
    return WealthResult(res.wealth, shares, np.array(w))


def self_financing_residual(X: BProcess, shares: PredictablePath, stock: BProcess, x0: float) -> float:
    expected = wealth(shares, stock, x0).wealth
    return float(np.max(np.abs(X.filled() - expected.filled())))


@dataclass(frozen=True)
class AdmissibilityReport:
    alpha: float
    per_scenario: np.ndarray
    first_violation: np.ndarray

    @property
    def admissible(self) -> bool:
        return bool(self.per_scenario.all())


def admissibility_check(shares: PredictablePath, stock: BProcess, alpha: float) -> AdmissibilityReport:
    """``theta . S >= -alpha`` at every member node, atom at 0 included."""
    gains = semimartingale_integral(shares, stock).filled()
    bad = stock.mask & (gains < -alpha)
    first = np.where(bad.any(axis=1), bad.argmax(axis=1), -1)
    return AdmissibilityReport(float(alpha), ~bad.any(axis=1), first)


@dataclass(frozen=True)
class NACertificate:
    granted: bool
    reasons: tuple[str, ...]
    vacuous: bool = False


def na_certificate(config: MarketConfig, stock: BProcess | None = None) -> NACertificate:
    """Structural no-arbitrage certificate for the ladder market.

    Each level must be a positive price driven by the Brownian driver with
    bounded coefficients, and no period may carry drift without risk.
    """
    if config.n_periods == 0:
        return NACertificate(True, ("no trading periods",), vacuous=True)
    if stock is None or stock.fcs is None:
        raise ValueError("certificate needs the stock with its coupled ladder")
    reasons = []
    mu = mu_sequence(config)
    for n, (m, s) in enumerate(zip(mu, config.sigma), start=1):
        if s == 0 and m != 0:
            reasons.append(f"period {n}: riskless drift {m:g} with zero volatility")
        if not (math.isfinite(m) and math.isfinite(s)):
            reasons.append(f"period {n}: unbounded coefficients")
    for n, lvl in enumerate(stock.fcs.levels, start=1):
        if not (lvl.values > 0).all():
            reasons.append(f"level {n}: price not strictly positive")
    if not stock.inner or stock.decomposition is None:
        reasons.append("stock is not a decomposed inner semimartingale")
    return NACertificate(not reasons, tuple(reasons))


# --------------------------------------------------------------------------
# Monte Carlo oracle for the optimal fraction

def _period_window(config: MarketConfig, grid: TimeGrid, ends: np.ndarray, n: int):
    starts = np.concatenate([[0], ends[:-1]])
    return int(starts[n - 1]), int(ends[n - 1])


def log_utility_matrix(config: MarketConfig, period: int, w_values: Sequence[float],
                       batch: ScenarioBatch | None = None, chunk: int = CHUNK_PATHS) -> np.ndarray:
    """``ln X`` at ``tau_n`` for each constant fraction, shape ``(len(w), n_paths)``.

    The same driver and exit draws are used for every fraction.  A scenario
    whose wealth factor ``1 + w R`` is not positive at some node is NaN.
    """
    grid = config.grid()
    batch = batch or config.batch()
    ends = config.period_ends(grid)
    if not 1 <= period <= config.n_periods:
        raise ValueError(f"period must be in 1..{config.n_periods}")
    lo, hi = _period_window(config, grid, ends, period)
    mu = mu_sequence(config)[period - 1]
    sig = config.sigma[period - 1]
    w = np.asarray(w_values, dtype=float)
    out = np.empty((w.size, batch.n_paths))
    dt = grid.dt
    L = hi - lo
    for part in batch.chunks(chunk):
        tau = sample_exit_time(config, part, grid).index.index
        prev = np.minimum(lo, tau)
        cur = np.minimum(hi, tau)
        z = standard_normals(part, L, (STREAM_DRIVER, period - 1))
        R = np.expm1((mu - 0.5 * sig**2) * dt + sig * math.sqrt(dt) * z)
        nodes = lo + 1 + np.arange(L)[None, :]
        live = (nodes > prev[:, None]) & (nodes <= cur[:, None])
        rows = slice(part.first_path - batch.first_path, part.first_path - batch.first_path + part.n_paths)
        for i, wi in enumerate(w):
            f = 1.0 + wi * R
            ok = np.where(live, f > 0, True).all(axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                lg = np.where(live, np.log(np.where(f > 0, f, 1.0)), 0.0).sum(axis=1)
            out[i, rows] = np.where(ok, math.log(config.x0) + lg, np.nan)
    return out


@dataclass(frozen=True)
class UtilityEstimate:
    mean: float
    stderr: float
    rejected: int


def _summarize(u: np.ndarray) -> UtilityEstimate:
    good = u[np.isfinite(u)]
    rejected = int(u.size - good.size)
    if good.size == 0:
        raise AllRejectedError("every scenario drove wealth to zero or below")
    se = float(good.std(ddof=1) / math.sqrt(good.size)) if good.size > 1 else 0.0
    return UtilityEstimate(float(good.mean()), se, rejected)


def expected_log_utility(w: float, config: MarketConfig, period: int = 1,
                         batch: ScenarioBatch | None = None) -> UtilityEstimate:
    return _summarize(log_utility_matrix(config, period, [w], batch)[0])


@dataclass(frozen=True)
class OracleResult:
    period: int
    w_grid: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    rejected: np.ndarray
    argmax: float
    closed_form: float
    elu_closed_form: float
    elu_argmax: float
    stderr_argmax: float


def w_grid(w_min: float = 0.0, w_max: float = 4.0, w_step: float = 0.1) -> np.ndarray:
    n = int(round((w_max - w_min) / w_step))
    return np.round(w_min + w_step * np.arange(n + 1), 12)


def grid_search_oracle(config: MarketConfig, period: int = 1, grid_w: Sequence[float] | None = None,
                       batch: ScenarioBatch | None = None) -> OracleResult:
    """Brute-force maximizer of expected log utility over constant fractions."""
    ws = w_grid() if grid_w is None else np.asarray(grid_w, dtype=float)
    try:
        cf = float(closed_form_strategy(config).fractions[period - 1])
    except ValueError:
        cf = float("nan")
    evals = np.append(ws, cf if math.isfinite(cf) else 0.0)
    U = log_utility_matrix(config, period, evals, batch)
    rows = []
    for u in U[:-1]:
        try:
            rows.append(_summarize(u))
        except AllRejectedError:
            rows.append(UtilityEstimate(-math.inf, math.nan, u.size))
    means = np.array([r.mean for r in rows])
    if not np.isfinite(means).any():
        raise AllRejectedError("every fraction on the grid was rejected in every scenario")
    best = int(np.argmax(means))
    at_cf = _summarize(U[-1]).mean if math.isfinite(cf) else math.nan
    return OracleResult(period, ws, means, np.array([r.stderr for r in rows]),
                        np.array([r.rejected for r in rows]), float(ws[best]), cf, at_cf,
                        float(means[best]), float(rows[best].stderr))
