import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from anisoac.critical import newton_refine
from anisoac.domain import Grid
from anisoac.energy import EnergyParams, energy
from anisoac.geomlimits import (GeometryError, build_varifold, cf_map, cf_split, density_ratios,
                                divergence_test, extract_interface, first_variation_aniso,
                                first_variation_iso, modica_check, quantization_summary,
                                second_fundamental_form_sq, slice_quantization, stability_diagnostic,
                                standard_cutoff, stress_tensor, tangential_fraction, trig_fields,
                                unit_ball_measure, varifold_mass)
from anisoac.integrand import make_integrand
from anisoac.potential import compute_cw, make_potential

W = make_potential()
CW = compute_cw(W)
ANISO = [[4.0, 0.0], [0.0, 1.0]]


@pytest.fixture(scope="module")
def stripe():
    """Newton-refined stripe pair normal to e2 on a 16 x 512 grid, diag(4,1)."""
    p = EnergyParams(1 / 32, 0.1, W, make_integrand("quadratic", 2, matrix=ANISO), Grid((16, 512)))
    x = p.grid.coords()[..., 1]
    u0 = np.tanh((0.25 - np.abs(x - 0.5)) / (math.sqrt(2) * p.epsilon))
    u, _ = newton_refine(u0, p, spectrum_check=False)
    return u, p


def circle_field(r=0.25, eps=1 / 32, cells=256):
    g = Grid((cells, cells))
    p = EnergyParams(eps, 0.05, W, make_integrand("isotropic", 2), g)
    d = np.linalg.norm(g.coords() - 0.5, axis=-1) - r
    return np.tanh(d / (math.sqrt(2) * eps)), p


def test_modica_equipartition_on_stripe(stripe):
    u, p = stripe
    rep = modica_check(u, p)
    h = p.grid.h[1]
    assert rep.max <= h * h / p.epsilon**3
    assert rep.positive_mass < 1e-3
    assert set(rep.as_dict()) == {"max", "positive_mass"}


def test_varifold_mass_and_density_of_stripe(stripe):
    u, p = stripe
    V = build_varifold(u, p)
    assert V.mass == pytest.approx(2 * CW, rel=1e-3)
    assert varifold_mass(V, lambda x: x[..., 1] < 0.5) == pytest.approx(CW, rel=1e-3)
    x0 = np.array([0.3, 0.25])
    ratios = density_ratios(V, x0, [0.05, 0.1, 0.2])
    # diffuse smearing lowers small-ball ratios; they rise towards c_W
    assert np.all(np.diff(ratios) > 0) and ratios[-1] <= CW
    assert ratios[-1] == pytest.approx(CW, rel=0.08)
    with pytest.raises(GeometryError):
        density_ratios(V, x0, [0.6])
    assert unit_ball_measure(1) == pytest.approx(2.0) and unit_ball_measure(2) == pytest.approx(math.pi)


def test_mass_bound(stripe):
    u, p = stripe
    lam_p = 0.5  # audit value for diag(4, 1)
    assert build_varifold(u, p).mass <= energy(u, p) / lam_p


def test_flat_interface_first_variations_vanish(stripe):
    u, p = stripe
    V = build_varifold(u, p)
    for X in trig_fields(2, 12):
        assert abs(first_variation_iso(V, X)) < 1e-10
        assert abs(first_variation_aniso(V, p.integrand, X)) < 1e-10


def test_first_variation_of_circle_matches_curvature():
    r = 0.25
    u, p = circle_field(r)
    I = extract_interface(u, p.grid)
    assert I.total == pytest.approx(2 * math.pi * r, rel=1e-3)
    th = np.linspace(0, 2 * np.pi, 4001)[:-1]
    pts = 0.5 + r * np.stack([np.cos(th), np.sin(th)], axis=1)
    nu = np.stack([np.cos(th), np.sin(th)], axis=1)
    for X in trig_fields(2, 6):
        exact = float(np.mean(np.einsum("ij,ij->i", X.value(pts), nu)) / r * 2 * np.pi * r)
        got = first_variation_aniso(I, p.integrand, X)
        assert got == pytest.approx(exact, abs=2e-3)


def test_interface_extraction_1d_and_3d():
    g1 = Grid((256,))
    x = g1.coords()[..., 0]
    I1 = extract_interface(np.cos(2 * np.pi * x), g1)
    assert np.allclose(np.sort(I1.midpoints[:, 0]), [0.25, 0.75], atol=1e-4)
    g3 = Grid((40, 40, 40))
    d = np.linalg.norm(g3.coords() - 0.5, axis=-1) - 0.3
    I3 = extract_interface(d, g3)
    assert I3.total == pytest.approx(4 * math.pi * 0.09, rel=0.01)
    with pytest.raises(GeometryError):
        extract_interface(np.ones((16, 16)), Grid((16, 16)))


def test_stress_tensor_divergence_free_on_stripe(stripe):
    u, p = stripe
    T = stress_tensor(u, p)
    E = energy(u, p)
    for X in trig_fields(2, 12):
        assert abs(divergence_test(T, X, p.grid)) <= 1e-3 * X.c1_norm() * E


@given(theta=st.floats(0, 2 * np.pi))
def test_cf_map_annihilates_normal(theta):
    spec = make_integrand("quadratic", 2, matrix=ANISO)
    nu = np.array([[math.cos(theta), math.sin(theta)]])
    C = cf_map(spec, nu)[0]
    # one-homogeneity gives DF(nu).nu = F(nu), so nu is in the kernel
    assert np.allclose(C @ nu[0], 0.0, atol=1e-12)
    assert np.trace(C) == pytest.approx(1.0, abs=1e-12)


def test_cf_split_range(stripe):
    u, p = stripe
    lam, CF = cf_split(u, p)
    assert np.all((lam >= 0) & (lam <= 1))
    assert CF.shape == p.grid.shape + (2, 2)


def test_second_fundamental_form_of_circle():
    r = 0.25
    u, p = circle_field(r, eps=1 / 16)
    II2 = second_fundamental_form_sq(u, p.grid, 1.0)
    d = np.abs(np.linalg.norm(p.grid.coords() - 0.5, axis=-1) - r)
    near = d < 0.02
    assert np.allclose(II2[near] * (r + 0) ** 2, 1.0, atol=0.2)


def test_stability_diagnostic_scales_with_curvature():
    ratios = []
    for r in (0.15, 0.3):
        u, p = circle_field(r, eps=1 / 32)
        ratios.append(stability_diagnostic(u, p).ratio)
    assert math.log(ratios[0] / ratios[1]) / math.log(2) == pytest.approx(2.0, abs=0.3)


def test_stability_on_flat_stripe(stripe):
    u, p = stripe
    st_ = stability_diagnostic(u, p)
    assert st_.lhs <= 1e-6 * st_.rhs
    with pytest.raises(GeometryError):
        stability_diagnostic(u, p.with_delta(0.0))


def test_slices_of_stripe(stripe):
    u, p = stripe
    assert tangential_fraction(u, p, [0, 1]) < 1e-12
    recs = slice_quantization(u, p, axis=1)
    s = quantization_summary(recs)
    assert s["modal_integer"] == 2 and s["certified_fraction"] == 1.0 and s["within_tol_fraction"] == 1.0
    chi = lambda t: standard_cutoff(2 * (t - 0.5))  # noqa: E731
    half = slice_quantization(u, p, axis=1, offsets=[(0.1,)], chi=chi)
    assert half[0].k == 1


@given(t=arrays(float, 20, elements=st.floats(-2, 2)))
def test_standard_cutoff(t):
    c = standard_cutoff(t)
    assert np.all((c >= 0) & (c <= 1))
    assert np.all(c[np.abs(t) <= 0.5] == 1) and np.all(c[np.abs(t) >= 1] == 0)


def test_trig_fields_are_periodic_and_distinct():
    fields = trig_fields(2, 12)
    assert len({(X.component, X.wavevector, X.phase) for X in fields}) == 12
    x = np.array([[0.1, 0.2]])
    for X in fields:
        assert np.allclose(X.value(x), X.value(x + 1.0))
        h = 1e-6
        e = np.array([[h, 0.0]])
        fd = (X.value(x + e) - X.value(x - e)) / (2 * h)
        assert np.allclose(fd[0], X.jacobian(x)[0][:, 0], atol=1e-8)
