import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anisoac.domain import ConformalMetric, Grid
from anisoac.energy import (EnergyError, EnergyParams, HessianOperator, energy, energy_density,
                            grad_energy, gradient_density, hess_apply, isotropic_energy)
from anisoac.integrand import Modulation, make_integrand
from anisoac.potential import compute_cw, make_potential

W = make_potential()


def params(family="quartic", n=2, delta=0.1, eps=1 / 8, metric_phi=None, modulation=None, cells=16):
    kw = {"beta": 1.0} if family == "quartic" else {"matrix": np.diag(np.arange(1.0, n + 1))} \
        if family == "quadratic" else {}
    spec = make_integrand(family, n, modulation=modulation, **kw)
    g = Grid((cells,) * n)
    metric = None if metric_phi is None else ConformalMetric(g, metric_phi(g))
    return EnergyParams(eps, delta, W, spec, g, metric)


def test_param_validation():
    with pytest.raises(EnergyError):
        params(eps=0.0)
    with pytest.raises(EnergyError):
        params(delta=1.0)
    with pytest.raises(EnergyError):
        EnergyParams(0.1, 0.1, W, make_integrand("isotropic", 3), Grid((8, 8)))
    with pytest.raises(EnergyError):
        HessianOperator(np.zeros((16, 16)), params(delta=0.0))


def test_constants_have_potential_energy_only():
    p = params()
    assert energy(np.ones(p.grid.shape), p) == pytest.approx(0.0, abs=1e-15)
    assert energy(np.zeros(p.grid.shape), p) == pytest.approx(0.25 / p.epsilon)


def test_one_dimensional_profile_energy_oracle():
    # the tanh profile has energy c_W per transition (up to O(h^2))
    eps = 1 / 32
    g = Grid((2048,))
    p = EnergyParams(eps, 0.0, W, make_integrand("isotropic", 1), g)
    x = g.coords()[..., 0]
    u = np.tanh((0.25 - np.abs(x - 0.5)) / (math.sqrt(2) * eps))
    assert energy(u, p) == pytest.approx(2 * compute_cw(W), rel=1e-4)


@pytest.mark.parametrize("family,n", [("isotropic", 2), ("quadratic", 3), ("quartic", 2), ("quartic", 1)])
@pytest.mark.parametrize("curved", [False, True])
def test_gradient_matches_finite_differences(family, n, curved):
    phi = (lambda g: 0.2 * np.cos(2 * np.pi * g.coords()[..., 0])) if curved else None
    p = params(family, n, metric_phi=phi, cells=12 if n == 3 else 16)
    rng = np.random.default_rng(0)
    u = 0.7 * rng.standard_normal(p.grid.shape)
    v = rng.standard_normal(p.grid.shape)
    gv = float(np.sum(grad_energy(u, p) * v * p.vol))
    h = 1e-5
    fd = (energy(u + h * v, p) - energy(u - h * v, p)) / (2 * h)
    assert fd == pytest.approx(gv, rel=1e-7, abs=1e-7)


@given(seed=st.integers(0, 2**31))
def test_hessian_symmetric_and_consistent(seed):
    p = params("quartic", 2, modulation=Modulation(0.2, (1, 1)))
    rng = np.random.default_rng(seed)
    u = 0.5 * rng.standard_normal(p.grid.shape)
    v, w = rng.standard_normal((2,) + p.grid.shape)
    H = HessianOperator(u, p)
    a = float(np.sum(H(v) * w * p.vol))
    b = float(np.sum(v * H(w) * p.vol))
    assert abs(a - b) <= 1e-10 * (abs(a) + abs(b) + 1)
    h = 1e-6
    fd = (grad_energy(u + h * v, p) - grad_energy(u - h * v, p)) / (2 * h)
    assert np.max(np.abs(fd - hess_apply(u, v, p))) <= 1e-4 * (1 + np.max(np.abs(fd)))


def test_isotropic_family_matches_isotropic_energy():
    p = params("isotropic", 2, delta=0.0)
    u = np.random.default_rng(2).standard_normal(p.grid.shape)
    assert energy(u, p) == pytest.approx(isotropic_energy(u, p), rel=1e-13)


def test_densities_are_consistent():
    p = params("quadratic", 2)
    u = np.random.default_rng(3).standard_normal(p.grid.shape)
    e = energy_density(u, p)
    assert np.sum(e * p.vol) == pytest.approx(energy(u, p), rel=1e-14)
    assert np.all(gradient_density(u, p) >= 0)


@given(shift=st.integers(0, 15), axis=st.integers(0, 1))
def test_translation_invariance(shift, axis):
    p = params("quartic", 2)
    u = np.random.default_rng(4).standard_normal(p.grid.shape)
    assert energy(np.roll(u, shift, axis=axis), p) == pytest.approx(energy(u, p), rel=1e-12)


def test_energy_even_in_u():
    p = params("quartic", 2)
    u = np.random.default_rng(5).standard_normal(p.grid.shape)
    assert energy(-u, p) == pytest.approx(energy(u, p), rel=1e-13)
