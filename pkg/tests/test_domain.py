import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anisoac.domain import (ConformalMetric, Grid, GridError, SnapshotError, ball_mass, corner_gradients,
                            corner_gradients_T, div, grad, inner, integrate, interpolate,
                            laplacian_symbol, line_slice, load_snapshot, save_snapshot)


def test_grid_validation():
    with pytest.raises(GridError):
        Grid((4, 16))
    with pytest.raises(GridError):
        Grid((16, 16), (1.0,))
    with pytest.raises(GridError):
        Grid((16,) * 4)
    g = Grid((16, 32), (1.0, 2.0))
    assert np.allclose(g.h, [1 / 16, 1 / 16])
    assert g.coords().shape == (16, 32, 2)
    with pytest.raises(GridError):
        g.check(np.zeros((16, 16)))
    with pytest.raises(GridError):
        g.check(np.full((16, 32), np.nan))


def test_sample_rejects_nonperiodic():
    g = Grid((16, 16))
    u = g.sample(lambda x: np.sin(2 * np.pi * x[..., 0]))
    assert u.shape == (16, 16)
    with pytest.raises(GridError):
        g.sample(lambda x: x[..., 0])


@given(seed=st.integers(0, 2**31), n=st.sampled_from([1, 2, 3]), curved=st.booleans())
def test_grad_div_adjoint(seed, n, curved):
    rng = np.random.default_rng(seed)
    g = Grid((12,) * n, tuple(rng.uniform(0.5, 2.0, n)))
    metric = ConformalMetric(g, 0.3 * rng.standard_normal(g.shape)) if curved else None
    u = rng.standard_normal(g.shape)
    X = rng.standard_normal(g.shape + (n,))
    lhs = inner(grad(u, g), X, g, metric)
    rhs = -inner(u, div(X, g, metric), g, metric)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


@given(seed=st.integers(0, 2**31))
def test_corner_transpose(seed):
    rng = np.random.default_rng(seed)
    g = Grid((10, 12))
    u = rng.standard_normal(g.shape)
    Y = rng.standard_normal((4,) + g.shape + (2,))
    assert np.sum(corner_gradients(u, g) * Y) == pytest.approx(np.sum(u * corner_gradients_T(Y, g)),
                                                               rel=1e-12, abs=1e-10)


def test_grad_of_trig_is_second_order():
    errs = []
    for N in (32, 64):
        g = Grid((N, N))
        x = g.coords()
        u = np.sin(2 * np.pi * x[..., 0]) * np.cos(2 * np.pi * x[..., 1])
        exact = 2 * np.pi * np.cos(2 * np.pi * x[..., 0]) * np.cos(2 * np.pi * x[..., 1])
        errs.append(np.max(np.abs(grad(u, g)[..., 0] - exact)))
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)


def test_laplacian_symbol_matches_stencil():
    g = Grid((16, 8))
    rng = np.random.default_rng(0)
    u = rng.standard_normal(g.shape)
    lap = sum((2 * u - np.roll(u, 1, i) - np.roll(u, -1, i)) / g.h[i] ** 2 for i in range(2))
    via = np.real(np.fft.ifftn(np.fft.fftn(u) * laplacian_symbol(g).sum(axis=0)))
    assert np.allclose(lap, via, atol=1e-9)


def test_integrate_and_ball_mass():
    g = Grid((64, 64))
    assert integrate(np.ones(g.shape), g) == pytest.approx(1.0)
    m = ball_mass(np.ones(g.shape), g, (0.0, 0.0), 0.25)
    assert m == pytest.approx(math.pi / 16, rel=0.02)
    with pytest.raises(GridError):
        ball_mass(np.ones(g.shape), g, (0, 0), 0.6)
    metric = ConformalMetric(g, np.full(g.shape, math.log(2.0)))
    assert integrate(np.ones(g.shape), g, metric) == pytest.approx(4.0)


def test_interpolation_and_slices():
    g = Grid((32, 32))
    x = g.coords()
    f = x[..., 0] * 0 + np.cos(2 * np.pi * x[..., 1])
    pts = np.array([[0.1, 0.0], [0.3, 1.0], [0.7, 0.5]])
    assert np.allclose(interpolate(f, g, pts), [1, 1, -1], atol=1e-12)
    s, vals = line_slice(f, g, (0.0, 0.0), (0, 1), 64)
    assert s[-1] < 1.0 and vals.shape == (64,)
    assert np.max(np.abs(vals - np.cos(2 * np.pi * s))) < 0.01


def test_snapshot_roundtrip_and_corruption(tmp_path):
    g = Grid((8, 16), (1.0, 2.0))
    u = np.random.default_rng(0).standard_normal(g.shape)
    p = save_snapshot(tmp_path / "u.f64", u, g, epsilon=0.1, delta=0.05, tags={"kind": "test"})
    v, g2, header = load_snapshot(p)
    assert np.array_equal(u, v) and g2 == g
    assert header["epsilon"] == 0.1 and header["tags"]["kind"] == "test"
    assert p.read_bytes() == np.asarray(u, "<f8").tobytes()
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(SnapshotError):
        load_snapshot(p)
    with pytest.raises(SnapshotError):
        load_snapshot(tmp_path / "missing.f64")
