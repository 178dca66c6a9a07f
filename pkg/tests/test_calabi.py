"""Tests for the radial geometry engine.

The volume density and Ricci eigenvalues are checked against the
independent extended-precision Hessian oracle in `_oracle.py`; the
curvature-norm evaluator is pinned by flat charts, model-space
constants, exact homothety equivariance, and a two-resolution
Richardson regression fixture.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kahlerflow.calabi import (
    KIND_BUNDLE,
    KIND_PRODUCT,
    AnsatzModel,
    Profile,
    ReferenceFamily,
    fiber_diameter,
    log_volume_form,
    metric_eigenvalues,
    ricci_eigenvalues,
    riemann_norm,
    scalar_curvature,
    traces,
)
from kahlerflow.classes import class_at, singular_time
from kahlerflow.errors import AccuracyWarning, ConfigurationError, GeometryError

from _families import (
    bundle_model,
    cpxcp_family,
    f1_family,
    f1_ledger,
    product_ledger,
    product_model,
    shrinker_family,
)
from _oracle import (
    log_det_hessian,
    log_det_hessian_1d,
    random_radial_potential,
    ricci_pair,
)

# Curvature norm of the unit model fiber at the waist, computed once at
# two resolutions (N = 512 / 1024 on [-4, 4]) and Richardson-combined;
# the analytic value is 2.
MODEL_FIBER_NORM_N512 = 2.0000639041495716
MODEL_FIBER_NORM_RICHARDSON = 1.9999998911232686


def fs_profile(lam: float = 1.0, radius: float = 4.0, n_nodes: int = 512,
               base_scale: float = 1.0) -> Profile:
    rho = np.linspace(-radius, radius, n_nodes)
    return Profile(rho=rho, u=lam * np.log1p(np.exp(rho)), base_scale=base_scale)


def flat_profile(n_nodes: int = 512) -> Profile:
    """u = e^rho = |z|^2 on a window away from the chart origin, where
    component noise is not amplified by the 1/|z|^2 probe scaling."""
    rho = np.linspace(0.0, 8.0, n_nodes)
    return Profile(rho=rho, u=np.exp(rho))


# ---------------------------------------------------------------------------
# profiles and stencils
# ---------------------------------------------------------------------------

def test_profile_rejects_nonuniform_grid():
    rho = np.linspace(-1, 1, 32)
    rho[5] += 1e-6
    with pytest.raises(ConfigurationError):
        Profile(rho=rho, u=rho**2)


def test_profile_rejects_decreasing_grid():
    rho = np.linspace(1, -1, 32)
    with pytest.raises(ConfigurationError):
        Profile(rho=rho, u=rho**2)


def test_profile_rejects_shape_mismatch_and_short_grids():
    with pytest.raises(ConfigurationError):
        Profile(rho=np.linspace(0, 1, 16), u=np.zeros(15))
    with pytest.raises(ConfigurationError):
        Profile(rho=np.linspace(0, 1, 5), u=np.zeros(5))


def test_profile_rejects_nonfinite_values():
    rho = np.linspace(-1, 1, 32)
    u = rho**2
    u[3] = np.nan
    with pytest.raises(ConfigurationError):
        Profile(rho=rho, u=u)


def test_profile_arrays_are_read_only():
    p = fs_profile(n_nodes=64)
    for arr in (p.rho, p.u, p.up, p.upp):
        with pytest.raises(ValueError):
            arr[0] = 0.0


def test_profile_derivatives_exact_on_quartic():
    rho = np.linspace(-2, 3, 129)
    p = Profile(rho=rho, u=rho**4 - 2 * rho**3 + rho + 5)
    up = 4 * rho**3 - 6 * rho**2 + 1
    upp = 12 * rho**2 - 12 * rho
    assert np.max(np.abs(p.up - up)) < 1e-10
    assert np.max(np.abs(p.upp - upp)) < 1e-8


def test_profile_derivatives_fourth_order_on_sine():
    errs = []
    for n_nodes in (129, 257):
        rho = np.linspace(-2, 2, n_nodes)
        p = Profile(rho=rho, u=np.sin(rho) + 2 * rho)
        errs.append(np.max(np.abs(p.upp + np.sin(rho))))
    assert errs[0] / errs[1] > 12.0  # ~16 for a fourth-order scheme


def test_endpoint_readoff_converges_with_radius():
    fam = f1_family()
    a4, b4 = fam.initial_profile(512, 4.0).endpoints
    a8, b8 = fam.initial_profile(512, 8.0).endpoints
    # at radius R the read-off carries the e^{-R} tail of the profile
    assert abs(a4 - 2.0) < 2.5e-2 and abs(b4 - 3.0) < 2.5e-2
    assert abs(a8 - 2.0) < 5e-4 and abs(b8 - 3.0) < 5e-4
    assert abs(a8 - 2.0) < abs(a4 - 2.0)


def test_first_nonpositive_node_reports_planted_defect():
    rho = np.linspace(-4, 4, 128)
    u = np.log1p(np.exp(rho))
    u[40] += 1.0  # a spike makes u'' negative next to it
    p = Profile(rho=rho, u=u)
    node = p.first_nonpositive_node(need_up=False)
    assert 36 <= node <= 44
    assert fs_profile().first_nonpositive_node() == -1


# ---------------------------------------------------------------------------
# model validation
# ---------------------------------------------------------------------------

def test_model_rejects_unknown_kind():
    with pytest.raises(ConfigurationError):
        AnsatzModel(kind="warped", n=2, base_einstein=2.0)


def test_model_rejects_wrong_base_constant():
    with pytest.raises(ConfigurationError):
        AnsatzModel(kind=KIND_BUNDLE, n=2, base_einstein=3.0)
    with pytest.raises(ConfigurationError):
        AnsatzModel(kind=KIND_PRODUCT, n=2, base_einstein=1.0)


def test_model_rejects_low_dimension():
    with pytest.raises(ConfigurationError):
        AnsatzModel(kind=KIND_BUNDLE, n=1, base_einstein=1.0)


# ---------------------------------------------------------------------------
# volume density and Ricci against the independent Hessian oracle
# ---------------------------------------------------------------------------

ORACLE_NODES = (-3.0, -1.5, 0.0, 1.0, 2.5)


def _oracle_worst_errors(n_profiles: int = 10, seed: int = 2024) -> dict[str, float]:
    """Worst relative deviation between the grid evaluators and the
    extended-precision coordinate-patch oracle, over random convex
    radial potentials."""
    rng = np.random.default_rng(seed)
    bundle = bundle_model(2)
    product = product_model(2, flat_base=True)
    rho = np.linspace(-4, 4, 512)
    worst = {"density": 0.0, "ricci_base": 0.0, "ricci_fiber": 0.0, "density_1d": 0.0}
    for _ in range(n_profiles):
        pot = random_radial_potential(rng)
        prof = Profile(rho=rho, u=np.asarray(pot(rho), dtype=np.float64))
        G2 = log_volume_form(bundle, prof)
        nu_b, nu_f = ricci_eigenvalues(bundle, prof)
        G1 = log_volume_form(product, prof)  # sigma = 1: no base offset
        for r in ORACLE_NODES:
            i = int(np.argmin(np.abs(rho - r)))
            g_ref = log_det_hessian(pot, rho[i])
            b_ref, f_ref = ricci_pair(pot, rho[i])
            g1_ref = log_det_hessian_1d(pot, rho[i])
            worst["density"] = max(
                worst["density"], abs(G2[i] - g_ref) / (1 + abs(g_ref)))
            worst["ricci_base"] = max(
                worst["ricci_base"], abs(nu_b[i] - b_ref) / (1 + abs(b_ref)))
            worst["ricci_fiber"] = max(
                worst["ricci_fiber"], abs(nu_f[i] - f_ref) / (1 + abs(f_ref)))
            worst["density_1d"] = max(
                worst["density_1d"], abs(G1[i] - g1_ref) / (1 + abs(g1_ref)))
    return worst


def test_density_and_ricci_match_hessian_oracle():
    worst = _oracle_worst_errors()
    for name, err in worst.items():
        assert err <= 1e-6, f"{name} deviates from the oracle by {err:.3e}"


def test_closed_form_density_bundle():
    rho = np.linspace(-4, 4, 512)
    sig = 1.0 / (1.0 + np.exp(-rho))
    p = Profile(rho=rho, u=2 * rho + np.log1p(np.exp(rho)))
    expected = np.log(sig * (1 - sig)) + np.log(2.0 + sig) - 2 * rho
    assert np.max(np.abs(log_volume_form(bundle_model(2), p) - expected)) < 1e-6


def test_closed_form_density_product():
    lam, sigma = 0.7, 2.5
    p = fs_profile(lam=lam, base_scale=sigma)
    expected = math.log(lam) - 2 * np.log1p(np.exp(p.rho)) + math.log(sigma)
    assert np.max(np.abs(log_volume_form(product_model(2), p) - expected)) < 1e-6


def test_density_ignores_additive_normalization():
    p = fs_profile(n_nodes=128)
    shifted = Profile(rho=p.rho, u=p.u + 17.25)
    a = log_volume_form(product_model(2, flat_base=True), p)
    b = log_volume_form(product_model(2, flat_base=True), shifted)
    assert np.max(np.abs(a - b)) < 1e-8


# ---------------------------------------------------------------------------
# positivity failures
# ---------------------------------------------------------------------------

def test_degenerate_fiber_raises_with_node():
    rho = np.linspace(-4, 4, 64)
    p = Profile(rho=rho, u=np.where(rho < 0, 0.0, rho**2))  # kink: u'' < 0 nearby
    with pytest.raises(GeometryError) as exc:
        log_volume_form(product_model(2, flat_base=True), p)
    assert exc.value.node is not None


def test_bundle_requires_positive_momentum_but_product_does_not():
    rho = np.linspace(-4, 4, 256)
    u = -rho + 3 * np.log1p(np.exp(rho))  # u' < 0 on the left, u'' > 0
    p = Profile(rho=rho, u=u)
    with pytest.raises(GeometryError):
        log_volume_form(bundle_model(2), p)
    log_volume_form(product_model(2, flat_base=True), p)  # fiber-only: fine


def test_nonpositive_base_scale_raises():
    p = fs_profile(n_nodes=64, base_scale=0.0)
    with pytest.raises(GeometryError):
        log_volume_form(product_model(2), p)


# ---------------------------------------------------------------------------
# curvature identities on model metrics
# ---------------------------------------------------------------------------

def test_fs_fiber_einstein_identity():
    model = product_model(2, flat_base=True)
    for lam in (1.0, 0.03):
        p = fs_profile(lam=lam)
        _, nu_f = ricci_eigenvalues(model, p)
        dev = np.abs(nu_f - (2.0 / lam) * p.upp)[4:-4]
        assert np.max(dev) <= 1e-4 * np.max(np.abs(nu_f))


def test_scalar_curvature_constant_on_model_fiber():
    model = product_model(2, flat_base=True)
    lam = 0.5
    s = scalar_curvature(model, fs_profile(lam=lam))
    assert np.max(np.abs(s[4:-4] - 2.0 / lam)) <= 1e-4 * (2.0 / lam)


def test_flat_chart_is_ricci_flat():
    """Away from the boundary-stencil region (12 nodes per side, where
    one-sided differencing of exponential data is h^3-limited) the flat
    chart reports zero scalar curvature to 1e-8."""
    p = flat_profile()
    interior = slice(12, -12)
    nu_b, nu_f = ricci_eigenvalues(bundle_model(2), p)
    assert np.max(np.abs(nu_b[interior])) < 1e-8
    assert np.max(np.abs(nu_f[interior])) < 1e-7  # eps/h^4 floor
    s = scalar_curvature(bundle_model(2), p)
    assert np.max(np.abs(s[interior])) < 1e-8
    assert np.max(np.abs(s)) < 1e-1  # one-sided boundary stencils


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

def test_trace_against_self_is_dimension():
    model = bundle_model(2)
    rho = np.linspace(-4, 4, 256)
    p = Profile(rho=rho, u=2 * rho + np.log1p(np.exp(rho)))
    tr1, tr2 = traces(model, p, metric_eigenvalues(model, p))
    assert np.max(np.abs(tr1 - 2.0)) < 1e-12
    assert np.max(np.abs(tr2 - 2.0)) < 1e-12


def test_trace_of_initial_metric_closed_form_on_shrinker():
    """Along the exact interpolating family, the scaled trace of the
    initial metric is T + (n-1)(T-t): it stays pinned near 2T early
    and drops to T at collapse."""
    fam = shrinker_family()  # T = 1, n = 2
    model = fam.model
    rho = np.linspace(-6, 6, 512)
    p0 = Profile(rho=rho, u=fam.uhat(rho, 0.0), base_scale=fam.sigma_at(0.0))
    for t in (0.0, 0.5, 0.9, 0.999):
        pt = Profile(rho=rho, u=fam.uhat(rho, t), base_scale=fam.sigma_at(t))
        tr, _ = traces(model, pt, metric_eigenvalues(model, p0))
        expected = fam.T + (model.n - 1) * (fam.T - t)
        assert np.max(np.abs((fam.T - t) * tr - expected)) < 1e-8


def test_trace_of_degenerate_pullback_is_infinite():
    model = product_model(2, flat_base=True)
    p = fs_profile()
    tr1, tr2 = traces(model, p, (1.0, 0.0))
    assert np.all(np.isfinite(tr1))
    assert np.all(np.isinf(tr2))


# ---------------------------------------------------------------------------
# fiber diameter
# ---------------------------------------------------------------------------

def test_model_fiber_diameter_closed_form():
    for lam in (1.0, 0.3):
        p = fs_profile(lam=lam, radius=10.0, n_nodes=1024)
        d = fiber_diameter(product_model(2, flat_base=True), p)
        assert abs(d - math.pi * math.sqrt(lam)) <= 2e-6 * math.sqrt(lam)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.25, max_value=4.0))
def test_diameter_homothety(c):
    model = product_model(2, flat_base=True)
    p1 = fs_profile(n_nodes=256)
    pc = Profile(rho=p1.rho, u=c * p1.u)
    assert fiber_diameter(model, pc) == pytest.approx(
        math.sqrt(c) * fiber_diameter(model, p1), rel=1e-10)


def test_reference_family_diameter_scaling_law():
    """The interpolating metrics shrink the fiber diameter by exactly
    sqrt((T - t)/T)."""
    fam = shrinker_family()
    model = fam.model
    rho = np.linspace(-10, 10, 1024)
    d0 = fiber_diameter(model, Profile(rho=rho, u=fam.uhat(rho, 0.0)))
    for t in (0.3, 0.9, 0.999):
        dt = fiber_diameter(model, Profile(rho=rho, u=fam.uhat(rho, t)))
        assert dt / d0 == pytest.approx(math.sqrt(1 - t / fam.T), abs=1e-8)


def test_diameter_requires_positive_fiber():
    rho = np.linspace(-4, 4, 64)
    p = Profile(rho=rho, u=np.where(rho < 0, 0.0, rho**2))
    with pytest.raises(GeometryError):
        fiber_diameter(product_model(2, flat_base=True), p)


# ---------------------------------------------------------------------------
# curvature-norm evaluator
# ---------------------------------------------------------------------------

def test_flat_chart_curvature_vanishes():
    assert np.max(riemann_norm(bundle_model(2), flat_profile())) <= 1e-8


def test_flat_fiber_curvature_vanishes():
    model = product_model(2, flat_base=True)
    assert np.max(riemann_norm(model, flat_profile())) <= 1e-8


def test_model_fiber_norm_regression():
    """Two-resolution Richardson value of the waist curvature norm of
    the unit model fiber; the analytic value is 2."""
    model = product_model(2, flat_base=True)
    v512 = riemann_norm(model, fs_profile(n_nodes=512))[256]
    v1024 = riemann_norm(model, fs_profile(n_nodes=1024))[512]
    assert v512 == pytest.approx(MODEL_FIBER_NORM_N512, abs=1e-10)
    rich = (16.0 * v1024 - v512) / 15.0
    assert rich == pytest.approx(MODEL_FIBER_NORM_RICHARDSON, abs=1e-9)
    assert abs(rich - 2.0) < 5e-7


def test_curvature_homothety_power_of_two_is_exact():
    model = product_model(2, flat_base=True)
    a = riemann_norm(model, fs_profile())
    b = riemann_norm(model, fs_profile(lam=4.0))
    assert np.max(np.abs(4.0 * b - a)) <= 1e-10 * np.max(a)


def test_curvature_homothety_generic_factors():
    model = product_model(2, flat_base=True)
    a = riemann_norm(model, fs_profile())
    for lam in (3.0, 1e-4):
        b = riemann_norm(model, fs_profile(lam=lam))
        assert np.max(np.abs(lam * b - a) / a) <= 5e-5


def test_collapsed_fiber_norm_scaling():
    """|Rm| of the model fiber at class lam is 2/lam at the waist, across
    eight orders of magnitude of collapse."""
    model = product_model(2, flat_base=True)
    for lam in (1.0, 1e-2, 1e-4):
        v = riemann_norm(model, fs_profile(lam=lam))[256]
        assert lam * v == pytest.approx(2.0, rel=1e-4)


def test_product_base_block_adds_in_quadrature():
    """Base CP^1 contributes norm-squared 4/sigma^2 on top of the unit
    fiber's 4."""
    model = product_model(2)  # projective base
    for sigma, expect in ((1.0, math.sqrt(8.0)), (2.0, math.sqrt(5.0))):
        v = riemann_norm(model, fs_profile(base_scale=sigma))[256]
        assert v == pytest.approx(expect, rel=1e-4)


def test_higher_dimensional_base_cross_check():
    """Fiber CP^1 over base CP^2, both at unit scale: norm-squared
    4 + 12 = 16."""
    model = product_model(3)
    v = riemann_norm(model, fs_profile())[256]
    assert v == pytest.approx(4.0, rel=1e-4)


def test_flat_base_keeps_fiber_norm_only():
    model_flat = product_model(2, flat_base=True)
    v = riemann_norm(model_flat, fs_profile())[256]
    assert v == pytest.approx(MODEL_FIBER_NORM_N512, abs=1e-12)


def test_bundle_initial_curvature_regression():
    fam = f1_family()
    v = riemann_norm(fam.model, fam.initial_profile(512, 4.0))
    assert np.all((v > 1.9) & (v < 2.6))
    assert v[256] == pytest.approx(2.127217941950799, abs=1e-6)


def test_extreme_anisotropy_warns_with_condition_estimate():
    model = product_model(2, flat_base=True)
    p = fs_profile(lam=1e-9, n_nodes=64)
    with pytest.warns(AccuracyWarning, match="condition estimate"):
        riemann_norm(model, p)


def test_resolution_warning_on_rough_density():
    rho = np.linspace(-4, 4, 512)
    noise = 5e-7 * np.where(np.arange(512) % 2 == 0, 1.0, -1.0) * np.exp(-rho**2)
    p = Profile(rho=rho, u=np.log1p(np.exp(rho)) + noise)
    with pytest.warns(AccuracyWarning):
        ricci_eigenvalues(product_model(2, flat_base=True), p)


def test_grid_too_short_for_probes_raises():
    rho = np.linspace(-0.5, 0.5, 16)
    p = Profile(rho=rho, u=np.log1p(np.exp(rho)))
    with pytest.raises(GeometryError, match="margin"):
        riemann_norm(product_model(2, flat_base=True), p)


def test_curvature_edge_fill_is_constant():
    v = riemann_norm(product_model(2, flat_base=True), fs_profile())
    assert np.ptp(v[:4]) == 0.0
    assert np.ptp(v[-4:]) == 0.0


# ---------------------------------------------------------------------------
# reference family
# ---------------------------------------------------------------------------

def test_family_validation():
    with pytest.raises(ConfigurationError):
        ReferenceFamily.for_model(bundle_model(2), T=0.5,
                                  fiber_span=(0.0, 3.0), lam_sigma=1.5)
    with pytest.raises(ConfigurationError):
        ReferenceFamily.for_model(product_model(2), T=1.0,
                                  fiber_span=(1.0, 3.0), lam_sigma=1.0)
    with pytest.raises(ConfigurationError):
        ReferenceFamily.for_model(bundle_model(2), T=0.0,
                                  fiber_span=(2.0, 3.0), lam_sigma=1.5)


def test_initial_profile_matches_closed_form_derivatives():
    fam = f1_family()
    p = fam.initial_profile(512, 4.0)
    interior = slice(4, -4)
    assert np.max(np.abs(p.up - fam.u0p(p.rho))[interior]) < 1e-8
    assert np.max(np.abs(p.upp - fam.u0pp(p.rho))[interior]) < 1e-8


def test_endpoint_paths_match_class_ledger():
    """The family's linear momentum paths are the fiber restriction of
    the evolving cohomology class."""
    fam = f1_family()
    _, _, cone, omega0, c1 = f1_ledger()
    assert float(singular_time(omega0, c1, cone)) == fam.T
    for t in (0.0, 0.25, 0.4):
        cls = class_at(omega0, c1, Fraction(t).limit_denominator())
        a_t, b_t = fam.endpoints_at(t)
        assert float(cls.coeff("a")) == pytest.approx(a_t, abs=1e-12)
        assert float(cls.coeff("b")) == pytest.approx(b_t, abs=1e-12)


def test_product_base_path_matches_class_ledger():
    fam = cpxcp_family()
    _, _, cone, omega0, c1 = product_ledger()
    assert float(singular_time(omega0, c1, cone)) == fam.T
    for t in (0.0, 0.5, 0.99):
        cls = class_at(omega0, c1, Fraction(t).limit_denominator())
        assert float(cls.coeff("B")) == pytest.approx(fam.sigma_at(t), abs=1e-12)
        assert float(cls.coeff("F")) == pytest.approx(fam.endpoints_at(t)[1], abs=1e-12)


def test_reference_eval_interpolates_endpoints():
    fam = f1_family()
    rho = np.linspace(-4, 4, 128)
    ev0 = fam.reference_eval(rho, 0.0)
    assert np.allclose(ev0.base, fam.u0p(rho), atol=1e-14)
    assert np.allclose(ev0.fiber, fam.u0pp(rho), atol=1e-14)
    evT = fam.reference_eval(rho, fam.T)
    assert np.max(np.abs(evT.fiber)) == 0.0
    assert np.allclose(evT.base, fam.lam_sigma, atol=1e-14)


def test_uhat_boundary_values():
    fam = f1_family()
    rho = np.linspace(-4, 4, 128)
    assert np.array_equal(fam.uhat(rho, 0.0), fam.u0(rho))
    assert np.allclose(fam.uhat(rho, fam.T), fam.lam_sigma * rho, atol=1e-14)


def test_sigma_path():
    fam = cpxcp_family()
    assert fam.sigma_at(0.0) == 3.0
    assert fam.sigma_at(1.0) == pytest.approx(fam.lam_sigma)
    assert f1_family().sigma_at(0.3) == 1.0


def test_gauge_shift_derivative_and_base_point():
    fam = f1_family()
    assert fam.gauge_shift(0.0) == pytest.approx(0.0, abs=1e-15)
    t, eps = 0.2, 1e-5
    deriv = (fam.gauge_shift(t + eps) - fam.gauge_shift(t - eps)) / (2 * eps)
    assert deriv == pytest.approx(math.log(fam.T - t), abs=1e-9)


def test_volume_datum_hessian_consistency():
    """T times the stored log-density has complex-Hessian eigenvalues
    (limit base - initial base, -initial fiber) in the radial frame."""
    from kahlerflow.calabi import _diff1, _diff2

    rho = np.linspace(-4, 4, 512)
    h = float(rho[1] - rho[0])
    interior = slice(4, -4)

    fam = f1_family()
    datum = fam.volume_datum(rho)
    d1 = _diff1(fam.T * datum.log_omega, h)
    d2 = _diff2(fam.T * datum.log_omega, h)
    assert np.max(np.abs(d1 - (fam.lam_sigma - fam.u0p(rho)))[interior]) < 1e-8
    assert np.max(np.abs(d2 + fam.u0pp(rho))[interior]) < 1e-8

    prod = shrinker_family()
    datum = prod.volume_datum(rho)
    d1 = _diff1(prod.T * datum.log_omega, h)
    d2 = _diff2(prod.T * datum.log_omega, h)
    assert np.max(np.abs(d1 + prod.u0p(rho))[interior]) < 1e-8
    assert np.max(np.abs(d2 + prod.u0pp(rho))[interior]) < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=-100.0, max_value=100.0))
def test_density_shift_invariance_property(c):
    model = product_model(2, flat_base=True)
    p = fs_profile(n_nodes=128)
    shifted = Profile(rho=p.rho, u=p.u + c)
    dev = log_volume_form(model, shifted) - log_volume_form(model, p)
    assert np.max(np.abs(dev)) <= 1e-9 * (1 + abs(c))
