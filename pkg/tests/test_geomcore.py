"""Grids, spectral calculus, and induced geometry.

Oracles used here:
  * closed forms on the product torus (diagonal metric, volume, curvature form),
  * analytic derivatives of explicit trigonometric polynomials,
  * exact antisymmetry of the spectral derivative matrix,
  * the first-variation identity  d/ds Vol(iota + s X_u) = -<u, d*alpha_H>
    on a non-stationary Lagrangian (an ellipse), which exercises the full
    curvature + codifferential chain against an independent finite difference.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hslag.errors import GridMismatchError, ImmersionError, QuotientError
from hslag.geomcore import (
    GridDescriptor,
    Immersion,
    ScalarField,
    hs_residual,
    induced_metric,
    l2_inner,
    l2_norm,
    mean_curvature_one_form,
    one_form_l2_norm,
    sobolev_norm,
    spectral_derivative,
    standard_symplectic_matrix,
    translate,
    volume,
    volume_density,
)

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# grid descriptors


def test_grid_rejects_odd_and_tiny_sizes():
    with pytest.raises(GridMismatchError):
        GridDescriptor(sizes=(31,), periods=(TWO_PI,))
    with pytest.raises(GridMismatchError):
        GridDescriptor(sizes=(6,), periods=(TWO_PI,))
    with pytest.raises(GridMismatchError):
        GridDescriptor(sizes=(16, 16), periods=(TWO_PI,))
    with pytest.raises(GridMismatchError):
        GridDescriptor(sizes=(16,), periods=(-1.0,))


def test_quotient_flags_validated():
    with pytest.raises(QuotientError):
        GridDescriptor(sizes=(16, 16), periods=(TWO_PI, TWO_PI), quotient=(False, False))
    g = GridDescriptor(sizes=(16, 16), periods=(TWO_PI, TWO_PI), quotient=(True, True))
    assert g.quotient_shift() == (8, 8)


def test_node_weight_and_quotient_halving():
    g = GridDescriptor(sizes=(16, 32), periods=(TWO_PI, 2.0))
    assert np.isclose(g.node_weight(), TWO_PI * 2.0 / (16 * 32))
    q = GridDescriptor(sizes=(16, 16), periods=(TWO_PI, TWO_PI), quotient=(True, True))
    assert np.isclose(q.node_weight(), 0.5 * TWO_PI**2 / 256)
    one = ScalarField(q, np.ones(q.sizes))
    assert np.isclose(l2_inner(one, one), 0.5 * TWO_PI**2)


def test_scalar_field_quotient_gate():
    g = GridDescriptor(sizes=(16, 16), periods=(TWO_PI, TWO_PI), quotient=(True, True))
    s, phi = g.meshgrid()
    ScalarField(g, np.cos(s - phi))  # invariant under the half-period shift
    with pytest.raises(QuotientError):
        ScalarField(g, np.cos(s))  # flips sign under the shift


# ---------------------------------------------------------------------------
# spectral derivatives


@given(
    k=st.integers(min_value=-7, max_value=7),
    l=st.integers(min_value=-7, max_value=7),
    amp=st.floats(min_value=-3, max_value=3),
    phase=st.floats(min_value=0, max_value=6.0),
)
def test_spectral_derivative_exact_on_trig(k, l, amp, phase):
    g = GridDescriptor(sizes=(32, 32), periods=(TWO_PI, 4.0))
    t1, t2 = g.meshgrid()
    w2 = TWO_PI / 4.0
    f = ScalarField(g, amp * np.cos(k * t1 + l * w2 * t2 + phase))
    df0 = spectral_derivative(f, 0)
    df1 = spectral_derivative(f, 1)
    exact0 = -amp * k * np.sin(k * t1 + l * w2 * t2 + phase)
    exact1 = -amp * l * w2 * np.sin(k * t1 + l * w2 * t2 + phase)
    assert np.max(np.abs(df0.values - exact0)) < 1e-10 * max(1.0, abs(amp))
    assert np.max(np.abs(df1.values - exact1)) < 1e-10 * max(1.0, abs(amp))


def test_nyquist_mode_is_annihilated():
    g = GridDescriptor(sizes=(16,), periods=(TWO_PI,))
    th = g.axis_coordinates(0)
    f = ScalarField(g, np.cos(8 * th))
    df = spectral_derivative(f, 0)
    assert np.max(np.abs(df.values)) < 1e-12


@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=15)
def test_derivative_matrix_antisymmetric(seed):
    # <Df, g> + <f, Dg> = 0 for arbitrary node data, not only band-limited
    # fields; the adjoint-based volume gradient relies on this being exact.
    rng = np.random.default_rng(seed)
    g = GridDescriptor(sizes=(16, 12), periods=(TWO_PI, 1.0))
    f = ScalarField(g, rng.normal(size=g.sizes))
    h = ScalarField(g, rng.normal(size=g.sizes))
    for axis in range(2):
        lhs = l2_inner(spectral_derivative(f, axis), h)
        rhs = l2_inner(f, spectral_derivative(h, axis))
        assert abs(lhs + rhs) < 1e-12 * max(1.0, abs(lhs))


def test_translate_matches_analytic_shift():
    g = GridDescriptor(sizes=(32, 32), periods=(TWO_PI, TWO_PI))
    t1, t2 = g.meshgrid()
    f = ScalarField(g, np.sin(2 * t1) * np.cos(3 * t2) + 0.4 * np.cos(t1 + t2))
    off = (0.3137, -0.977)
    shifted = translate(f, off)
    expect = np.sin(2 * (t1 + off[0])) * np.cos(3 * (t2 + off[1])) + 0.4 * np.cos(
        t1 + off[0] + t2 + off[1]
    )
    assert np.max(np.abs(shifted.values - expect)) < 1e-12


def test_sobolev_norm_single_mode():
    g = GridDescriptor(sizes=(32, 32), periods=(TWO_PI, TWO_PI))
    t1, _ = g.meshgrid()
    f = ScalarField(g, np.cos(3 * t1))
    # |f|_{L2}^2 = (2 pi)^2 / 2; the H^s weight of the k = (3, 0) pair is (1+9)^s
    expect = np.sqrt((1 + 9.0) ** 4 * 0.5 * TWO_PI**2)
    assert np.isclose(sobolev_norm(f, order=4), expect, rtol=1e-12)
    assert np.isclose(l2_norm(f), np.sqrt(0.5) * TWO_PI, rtol=1e-12)


# ---------------------------------------------------------------------------
# immersion gates


def test_immersion_rejects_non_lagrangian():
    g = GridDescriptor(sizes=(16, 16), periods=(TWO_PI, TWO_PI))
    t1, t2 = g.meshgrid()
    # Graph of a non-closed one-form over the torus: y = (sin t2, sin t1) is
    # not Lagrangian for omega0 = dx1 ^ dy1 + dx2 ^ dy2 in these coordinates.
    coords = np.stack([np.cos(t1), np.sin(t2), np.cos(t2), np.sin(t1)], axis=-1)
    with pytest.raises(ImmersionError):
        Immersion(g, coords)


def test_immersion_rejects_rank_loss():
    g = GridDescriptor(sizes=(16, 16), periods=(TWO_PI, TWO_PI))
    t1, t2 = g.meshgrid()
    coords = np.stack([np.cos(t1), np.sin(t1), 0 * t2 + 1.0, 0 * t2], axis=-1)
    with pytest.raises(ImmersionError):
        Immersion(g, coords)


def test_quotient_immersion_gate(circle_sphere):
    g = circle_sphere.grid
    bad = circle_sphere.coords.copy()
    bad[0, 0, 0] += 1e-6  # break Z2 invariance at one node
    with pytest.raises((QuotientError, ImmersionError)):
        Immersion(g, bad)


def test_symplectic_matrix_convention():
    om = standard_symplectic_matrix(2)
    assert om[0, 1] == 1.0 and om[1, 0] == -1.0
    assert np.array_equal(om.T, -om)
    assert np.array_equal(om @ om, -np.eye(4))


# ---------------------------------------------------------------------------
# induced geometry on the model torus


def test_torus_induced_metric_diagonal(torus, torus_model):
    h = induced_metric(torus)
    a1, a2 = torus_model.radii
    assert np.max(np.abs(h.entries[..., 0, 0] - a1**2)) < 1e-12
    assert np.max(np.abs(h.entries[..., 1, 1] - a2**2)) < 1e-12
    assert np.max(np.abs(h.entries[..., 0, 1])) < 1e-12


def test_torus_volume_closed_form(torus, torus_model):
    a1, a2 = torus_model.radii
    assert np.isclose(volume(torus), TWO_PI**2 * a1 * a2, rtol=1e-13)


def test_torus_curvature_form_is_minus_one(torus):
    alpha = mean_curvature_one_form(torus)
    assert np.max(np.abs(alpha.components + 1.0)) < 1e-12


def test_torus_curvature_form_norm(torus, torus_model):
    a1, a2 = torus_model.radii
    h = induced_metric(torus)
    alpha = mean_curvature_one_form(torus)
    expect = np.sqrt((1 / a1**2 + 1 / a2**2) * TWO_PI**2 * a1 * a2)
    assert np.isclose(one_form_l2_norm(alpha, h), expect, rtol=1e-12)


def test_torus_is_discretely_stationary(torus):
    res = hs_residual(torus)
    assert np.max(np.abs(res.values)) < 1e-11


def test_residual_scaling_under_dilation(torus):
    # iota -> s iota scales d*alpha_H by 1/s^2
    s = 1.7
    big = Immersion(torus.grid, s * torus.coords)
    r1 = hs_residual(torus).values
    r2 = hs_residual(big).values
    assert np.max(np.abs(r2 - r1 / s**2)) < 1e-11


# ---------------------------------------------------------------------------
# first-variation identity on a non-stationary Lagrangian


def _ellipse(n_nodes=256, p=1.0, q=1.7):
    g = GridDescriptor(sizes=(n_nodes,), periods=(TWO_PI,))
    th = g.axis_coordinates(0)
    coords = np.stack([p * np.cos(th), q * np.sin(th)], axis=-1)
    return g, Immersion(g, coords)


def test_first_variation_identity_on_ellipse():
    g, imm = _ellipse()
    res = hs_residual(imm)
    dens = volume_density(induced_metric(imm))

    def u_fn(c):
        x, y = c[..., 0], c[..., 1]
        return 0.3 * x * y**2 + 0.2 * np.sin(x) * y - 0.11 * x**3 + 0.07 * np.cos(y)

    def hamiltonian_field(c):
        x, y = c[..., 0], c[..., 1]
        ux = 0.3 * y**2 + 0.2 * np.cos(x) * y - 0.33 * x**2
        uy = 0.6 * x * y + 0.2 * np.sin(x) - 0.07 * np.sin(y)
        return np.stack([uy, -ux], axis=-1)  # omega0(X_u, .) = du

    def vol_of(c):
        return volume(Immersion(g, c, check=False))

    s = 5e-5
    X = hamiltonian_field(imm.coords)
    dvol = (vol_of(imm.coords + s * X) - vol_of(imm.coords - s * X)) / (2 * s)
    u = ScalarField(g, u_fn(imm.coords), check=False)
    pairing = l2_inner(u, res, density=dens)
    # d/ds Vol = -<u, d*alpha_H>_{L2(dV)}
    assert abs(dvol + pairing) < 1e-7 * max(1.0, abs(pairing))


def test_ellipse_curvature_against_plane_curve_formula():
    # alpha_H(d_theta) = omega0(kappa nu, gamma'); for the ellipse the signed
    # curvature and unit normal are classical closed forms.
    g, imm = _ellipse(n_nodes=128, p=1.0, q=1.7)
    th = g.axis_coordinates(0)
    p, q = 1.0, 1.7
    speed2 = p**2 * np.sin(th) ** 2 + q**2 * np.cos(th) ** 2
    kappa = p * q / speed2**1.5
    gamma_p = np.stack([-p * np.sin(th), q * np.cos(th)], axis=-1)
    # inward normal of the counterclockwise ellipse
    nu = np.stack([-q * np.cos(th), -p * np.sin(th)], axis=-1) / np.sqrt(speed2)[:, None]
    H = kappa[:, None] * nu
    alpha_expect = H[:, 0] * gamma_p[:, 1] - H[:, 1] * gamma_p[:, 0]
    alpha = mean_curvature_one_form(imm)
    assert np.max(np.abs(alpha.components[0] - alpha_expect)) < 1e-10


# ---------------------------------------------------------------------------
# circle-sphere quotient model geometry


def test_circle_sphere_metric_volume_curvature(circle_sphere):
    h = induced_metric(circle_sphere)
    assert np.max(np.abs(h.entries - np.eye(2))) < 1e-12
    assert np.isclose(volume(circle_sphere), 2 * np.pi**2, rtol=1e-13)
    alpha = mean_curvature_one_form(circle_sphere)
    assert np.max(np.abs(alpha.components[0] + 2.0)) < 1e-12
    assert np.max(np.abs(alpha.components[1])) < 1e-12
    assert np.max(np.abs(hs_residual(circle_sphere).values)) < 1e-11
