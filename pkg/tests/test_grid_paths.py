import numpy as np
import pytest

from horizon_calc.grid_paths import (
    PredictablePath,
    SamplePath,
    ScenarioBatch,
    TimeGrid,
    jump,
    left_limit,
    make_grid,
    path_generator,
    sample_brownian,
    standard_normals,
)


def test_grid_nodes():
    assert np.allclose(make_grid(1.0, 4).nodes, [0, 0.25, 0.5, 0.75, 1.0])
    g = make_grid(2.0, 1)
    assert list(g.nodes) == [0.0, 2.0]
    assert g.dt == 2.0


@pytest.mark.parametrize("h,n", [(1.0, 0), (0.0, 4), (-1.0, 3), (float("inf"), 2), (1.0, 2.5)])
def test_grid_rejects_bad_inputs(h, n):
    with pytest.raises(ValueError):
        make_grid(h, n)


def test_last_node_is_horizon_exactly():
    g = make_grid(0.3, 7)
    assert g.nodes[-1] == 0.3
    assert np.all(np.diff(g.nodes) > 0)


def test_node_at_or_after():
    g = make_grid(1.0, 4)
    assert g.node_at_or_after(0.0) == 0
    assert g.node_at_or_after(0.25) == 1
    assert g.node_at_or_after(0.26) == 2
    assert g.node_at_or_after(1.5) == 5


def test_jump_and_left_limit():
    g = make_grid(1.0, 2)
    p = SamplePath(g, [[0.0, 1.0, 1.0]])
    assert jump(p, 1)[0] == 1.0
    assert jump(p, 2)[0] == 0.0
    assert jump(p, 0)[0] == 0.0
    with pytest.raises(IndexError):
        jump(p, 3)
    q = SamplePath(g, [[0.0, 1.0, 2.0]])
    assert list(left_limit(q).values[0]) == [0.0, 0.0, 1.0]
    c = SamplePath(g, [[3.0, 3.0, 3.0]])
    assert np.array_equal(left_limit(c).values, c.values)


def test_value_equals_left_limit_plus_jump():
    rng = np.random.default_rng(1)
    g = make_grid(1.0, 10)
    p = SamplePath(g, rng.normal(size=(5, 11)))
    ll = left_limit(p).values
    for k in range(1, 11):
        assert np.array_equal(ll[:, k] + jump(p, k), p.values[:, k]) or np.allclose(ll[:, k] + jump(p, k), p.values[:, k], rtol=0, atol=1e-15)
    total = sum(jump(p, k) for k in range(1, 11))
    assert np.allclose(total, p.values[:, -1] - p.values[:, 0], atol=1e-13)


def test_sample_path_validation():
    g = make_grid(1.0, 2)
    with pytest.raises(ValueError):
        SamplePath(g, [[0.0, np.nan, 1.0]])
    with pytest.raises(ValueError):
        SamplePath(g, [[0.0, 1.0]])
    p = SamplePath(g, [[0.0, 1.0, 2.0]])
    with pytest.raises(ValueError):
        p.values[0, 0] = 5.0


def test_predictable_path_indexing():
    g = make_grid(1.0, 4)
    h = PredictablePath.from_function(g, lambda t: 1 + t)
    # column k uses the left end of (t_{k-1}, t_k]
    assert np.allclose(h.values[0], [1.0, 1.0, 1.25, 1.5, 1.75])
    assert h.atom_at_zero[0] == 1.0
    assert h.interval_values.shape == (1, 4)
    with pytest.raises(ValueError):
        PredictablePath(g, [[1.0, np.inf, 0, 0, 0]])


def test_brownian_moments_and_start():
    g = make_grid(1.0, 64)
    w = sample_brownian(g, ScenarioBatch(10_000, seed=3))
    assert np.all(w.values[:, 0] == 0)
    end = w.values[:, -1]
    assert -0.05 <= end.mean() <= 0.05
    assert 0.95 <= end.var(ddof=1) <= 1.05


def test_brownian_is_reproducible_and_order_independent():
    g = make_grid(1.0, 32)
    a = sample_brownian(g, ScenarioBatch(20, seed=9))
    b = sample_brownian(g, ScenarioBatch(20, seed=9))
    assert np.array_equal(a.values, b.values)
    tail = sample_brownian(g, ScenarioBatch(5, seed=9, first_path=15))
    assert np.array_equal(tail.values, a.values[15:])
    other = sample_brownian(g, ScenarioBatch(20, seed=10))
    assert not np.array_equal(other.values, a.values)


def test_stream_prefix_property():
    long = path_generator(4, 7, (2, 0)).standard_normal(100)
    short = path_generator(4, 7, (2, 0)).standard_normal(30)
    assert np.array_equal(long[:30], short)


def test_thread_cap_does_not_change_numbers(monkeypatch):
    batch = ScenarioBatch(40, seed=1)
    monkeypatch.setenv("HORIZON_CALC_THREADS", "1")
    a = standard_normals(batch, 16, (0,))
    monkeypatch.setenv("HORIZON_CALC_THREADS", "4")
    b = standard_normals(batch, 16, (0,))
    assert np.array_equal(a, b)


def test_batch_chunks_cover_all_paths():
    ids = np.concatenate([c.path_ids for c in ScenarioBatch(23, 0).chunks(5)])
    assert list(ids) == list(range(23))
    with pytest.raises(ValueError):
        ScenarioBatch(0)
