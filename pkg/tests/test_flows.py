import math

import numpy as np
import pytest

from unbalanced_ot.exact_ot import wasserstein
from unbalanced_ot.flows import (
    FlowMap,
    IntegrationError,
    affine_field,
    constant_field,
    flow_push,
    gaussian_bump_function,
    gaussian_gradient_field,
    integrate_flow,
    parse_field,
    rotation_field,
    sup_difference_bound,
    time_scaled_field,
    verify_flow_estimates,
)
from unbalanced_ot.genwass import GenWassParams, generalized_distance
from unbalanced_ot.sampling import random_equal_mass_pair, random_measure


REGISTRY = [
    constant_field([0.4, -0.2], space_radius=6.0),
    rotation_field(0.8, center=(0.2, 0.1), space_radius=6.0),
    gaussian_gradient_field(1.0, 1.2, center=(0.5, 0.5), space_radius=6.0),
    time_scaled_field(rotation_field(0.5, space_radius=6.0), "sin_pi"),
]


def test_constant_field_exact():
    f = constant_field([2.0, -1.0])
    out = integrate_flow(f, 0.0, 1.5, np.array([1.0, 1.0]))
    assert np.allclose(out, [4.0, -0.5], atol=1e-12)


def test_rotation_period_returns():
    f = rotation_field(1.0)
    out = integrate_flow(f, 0.0, 2.0 * math.pi, np.array([1.0, 0.0]))
    assert np.allclose(out, [1.0, 0.0], atol=1e-8)


def test_affine_identity_exponential():
    f = affine_field(np.eye(2), [0.0, 0.0], space_radius=4.0)
    x = np.array([1.0, 0.5])
    out = integrate_flow(f, 0.0, 1.0, x)
    assert np.allclose(out, math.e * x, atol=1e-8)


def test_flow_semigroup(rng):
    for f in REGISTRY:
        pts = rng.uniform(-1, 1, (6, 2))
        direct = integrate_flow(f, 0.0, 0.9, pts)
        stepped = integrate_flow(f, 0.3, 0.9, integrate_flow(f, 0.0, 0.3, pts))
        assert np.max(np.abs(direct - stepped)) <= 1e-8


def test_flow_reversibility(rng):
    for f in REGISTRY:
        pts = rng.uniform(-1, 1, (5, 2))
        fwd = FlowMap(f, 0.0, 0.7)
        back = fwd.inverse()
        assert np.max(np.abs(back(fwd(pts)) - pts)) <= 1e-6


def test_flow_push_preserves_mass(rng):
    mu = random_measure(rng, 2, max_atoms=10, max_mass=3.0, box=1.0)
    moved = flow_push(REGISTRY[1], 0.0, 1.0, mu)
    assert moved.total_mass() == mu.total_mass()


def test_declared_bounds_are_valid(rng):
    for f in REGISTRY:
        pts = rng.uniform(-f.space_radius, f.space_radius, (15_000, 2))
        keep = np.linalg.norm(pts, axis=1) <= f.space_radius
        pts = pts[keep]
        for t in (0.0, 0.33, 0.8):
            vals = f(t, pts)
            norms = np.linalg.norm(vals, axis=1)
            assert norms.max() <= f.sup_bound * (1 + 1e-6)
            other = pts[rng.permutation(len(pts))]
            dist = np.linalg.norm(pts - other, axis=1)
            ok = dist > 1e-9
            quotient = np.linalg.norm(vals - f(t, other), axis=1)[ok] / dist[ok]
            assert quotient.max() <= f.lip_bound * (1 + 1e-6) + 1e-12


def test_integration_failure_diagnostic():
    with pytest.raises(IntegrationError):
        integrate_flow(rotation_field(3.0), 0.0, 1.0, np.array([1.0, 0.0]), tol=1e-14, max_steps=8)


def test_field_json_roundtrip(rng):
    pts = rng.uniform(-1, 1, (4, 2))
    for f in REGISTRY:
        g = parse_field(f.to_json_dict())
        assert g.lip_bound == f.lip_bound and g.sup_bound == f.sup_bound
        assert np.allclose(f(0.4, pts), g(0.4, pts))


def test_scalar_function_norms(rng):
    f = gaussian_bump_function(2.0, 0.7, [0.0, 0.0])
    pts = rng.uniform(-3, 3, (4000, 2))
    vals = f(pts)
    assert np.max(np.abs(vals)) <= f.sup_norm * (1 + 1e-9)
    other = pts[rng.permutation(len(pts))]
    dist = np.linalg.norm(pts - other, axis=1)
    ok = dist > 1e-9
    quotient = np.abs(vals - f(other))[ok] / dist[ok]
    assert quotient.max() <= f.lip_norm * (1 + 1e-6)


def test_sup_difference_bound_is_upper_bound(rng):
    v, w = REGISTRY[0], REGISTRY[1]
    bound = sup_difference_bound(v, w, t_max=1.0)
    pts = rng.uniform(-4, 4, (2000, 2))
    observed = np.linalg.norm(v(0.0, pts) - w(0.0, pts), axis=1).max()
    assert bound >= observed - 1e-12


# --- the six flow estimates ----------------------------------------------------


def test_zero_fields_give_equalities(rng):
    zero = constant_field([0.0, 0.0])
    mu, nu = random_equal_mass_pair(rng, 2, max_atoms=6, max_mass=2.0)
    report = verify_flow_estimates(zero, zero, mu, nu, 1.0, GenWassParams(1, 1, 2))
    assert report["ok"]
    for name, est in report["estimates"].items():
        assert est["slack"] == pytest.approx(0.0, abs=1e-9), name


def test_constant_drift_estimate_is_tight(rng):
    c = np.array([0.6, -0.3])
    f = constant_field(c)
    mu = random_measure(rng, 2, max_atoms=6, max_mass=3.0, box=1.0)
    for t in (0.1, 0.5, 1.0):
        moved = flow_push(f, 0.0, t, mu)
        lhs = wasserstein(mu, moved, 2.0).distance
        rhs = t * np.linalg.norm(c) * mu.total_mass()
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_translation_isometry(rng):
    f = constant_field([1.0, 2.0])
    mu, nu = random_equal_mass_pair(rng, 2, max_atoms=8, max_mass=3.0)
    before = wasserstein(mu, nu, 2.0).distance
    after = wasserstein(flow_push(f, 0, 1, mu), flow_push(f, 0, 1, nu), 2.0).distance
    assert after == pytest.approx(before, abs=1e-9)
    g_before = generalized_distance(mu, nu, GenWassParams(1, 1, 2)).distance
    g_after = generalized_distance(
        flow_push(f, 0, 1, mu), flow_push(f, 0, 1, nu), GenWassParams(1, 1, 2)
    ).distance
    assert g_after == pytest.approx(g_before, abs=1e-9)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_rotation_vs_constant_sweep(rng, t):
    mu, nu = random_equal_mass_pair(rng, 2, max_atoms=6, max_mass=2.0, box=1.0)
    report = verify_flow_estimates(
        REGISTRY[1], REGISTRY[0], mu, nu, t, GenWassParams(1, 1, 2)
    )
    assert report["ok"], report
