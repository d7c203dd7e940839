"""Hypothesis checks of the exact grid identities on small random instances."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from horizon_calc.bprocess import bjump, bsummation, from_path, stop
from horizon_calc.calculus import ibp_residual
from horizon_calc.grid_paths import PredictablePath, SamplePath, make_grid
from horizon_calc.integration import bracket, stieltjes
from horizon_calc.interval_sets import INF, IntervalTypeSet, StoppingTime, intersect_stop

N = 6
P = 3
G = make_grid(1.0, N)
floats = st.floats(-50, 50, allow_nan=False, allow_infinity=False, width=64)
paths = arrays(np.float64, (P, N + 1), elements=floats)
debuts = st.lists(st.one_of(st.integers(1, N), st.just(INF)), min_size=P, max_size=P)
flags = st.lists(st.booleans(), min_size=P, max_size=P)
times = st.lists(st.integers(0, N), min_size=P, max_size=P)

SETTINGS = settings(max_examples=60, deadline=None)


def close(a, b, mask, tol=1e-9):
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return bool(np.all(np.where(mask, np.abs(a - b) / scale, 0.0) <= tol))


@SETTINGS
@given(debuts, flags)
def test_sections_are_down_sets(k, f):
    s = IntervalTypeSet(G, StoppingTime(k), f)
    m = s.mask.astype(int)
    assert m[:, 0].all() and np.all(np.diff(m, axis=1) <= 0)


@SETTINGS
@given(debuts, flags, times, times)
def test_stop_intersection_composes(k, f, a, b):
    s = IntervalTypeSet(G, StoppingTime(k), f)
    S, T = StoppingTime(a), StoppingTime(b)
    assert intersect_stop(intersect_stop(s, S), T).same_sections(intersect_stop(s, S & T))


@SETTINGS
@given(paths, paths, debuts, flags)
def test_bracket_symmetric_and_ibp_exact(x, y, k, f):
    dom = IntervalTypeSet(G, StoppingTime(k), f)
    X, Y = from_path(SamplePath(G, x), dom), from_path(SamplePath(G, y), dom)
    assert np.array_equal(bracket(X, Y).filled(), bracket(Y, X).filled())
    assert ibp_residual(X, Y).relative_sup <= 1e-9


@SETTINGS
@given(paths, paths, st.floats(-3, 3), debuts, flags)
def test_bracket_bilinear(x, y, c, k, f):
    dom = IntervalTypeSet(G, StoppingTime(k), f)
    X, Y = from_path(SamplePath(G, x), dom), from_path(SamplePath(G, y), dom)
    lhs = bracket(X + Y * c, X).filled()
    rhs = bracket(X, X).filled() + c * bracket(Y, X).filled()
    assert close(lhs, rhs, dom.mask, 1e-8)


@SETTINGS
@given(paths, paths, paths)
def test_stieltjes_linear_in_integrand(x, h1, h2):
    dom = IntervalTypeSet.full(G, P)
    X = from_path(SamplePath(G, x), dom)
    H1, H2 = PredictablePath(G, h1), PredictablePath(G, h2)
    lhs = stieltjes(H1 + H2, X).filled()
    rhs = stieltjes(H1, X).filled() + stieltjes(H2, X).filled()
    assert close(lhs, rhs, dom.mask)
    assert np.allclose(bjump(stieltjes(H1, X)).filled()[:, 1:], (h1 * bjump(X).filled())[:, 1:],
                       rtol=1e-12, atol=1e-9)


@SETTINGS
@given(paths, times, times)
def test_stopping_commutes_and_summation_inverts_jump(x, a, b):
    dom = IntervalTypeSet.full(G, P)
    X = from_path(SamplePath(G, x), dom)
    S, T = StoppingTime(a), StoppingTime(b)
    assert np.array_equal(stop(stop(X, S), T).filled(), stop(X, S & T).filled())
    back = bsummation(bjump(X)).filled() + x[:, :1]
    assert close(back, x, dom.mask)
