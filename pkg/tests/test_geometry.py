import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpvce.errors import InvalidArgumentError, UnsupportedExponentError
from lpvce.geometry import (INF, FeasibleRegion, lmo_ball, lmo_box_ball, lp_norm,
                            project_box_ball, sample_feasible)
from lpvce.oracles import lmo_bisection, lmo_linprog, project_grid_2d, random_instance


def feasible(region, y):
    return region.contains(y)


# -- lp_norm ------------------------------------------------------------------

def test_lp_norm_examples():
    assert lp_norm([3, 4], 2) == 5
    assert lp_norm([1, 1], 1.5) == pytest.approx(2 ** (2 / 3), rel=1e-15)
    for p in (1, 1.5, 2, 3, INF):
        assert lp_norm(np.zeros(5), p) == 0
    assert lp_norm([1, -7, 3], INF) == 7
    assert lp_norm([1, -7, 3], "inf") == 7


def test_lp_norm_rejects_nonfinite():
    with pytest.raises(InvalidArgumentError):
        lp_norm([1, np.nan], 2)
    with pytest.raises(InvalidArgumentError):
        lp_norm([1, np.inf], 2)


def test_lp_norm_no_overflow_for_tiny_and_huge():
    assert lp_norm([1e-200, 1e-200], 3) == pytest.approx(1e-200 * 2 ** (1 / 3))
    assert lp_norm([1e200, 1e200], 3) == pytest.approx(1e200 * 2 ** (1 / 3))


# -- region -------------------------------------------------------------------

def test_region_validation():
    with pytest.raises(InvalidArgumentError):
        FeasibleRegion([0.5, 1.2], 1.0, 2)
    with pytest.raises(InvalidArgumentError):
        FeasibleRegion([0.5], 0.0, 2)
    with pytest.raises(UnsupportedExponentError):
        FeasibleRegion([0.5], 1.0, 0.5)


def test_membership_tolerance():
    r = FeasibleRegion([0.5, 0.5], 0.2, 2)
    assert r.contains([0.7, 0.5])
    assert r.contains([0.5 + 0.2 * (1 + 5e-10), 0.5])
    assert not r.contains([0.5 + 0.2 * (1 + 1e-8), 0.5])
    assert not r.contains([0.5, 1.0 + 1e-12])


# -- LMO: worked examples -------------------------------------------------------

def test_lmo_unit_direction():
    sol = lmo_box_ball([1, 0], FeasibleRegion([0.5, 0.5], 0.2, 2))
    np.testing.assert_allclose(sol.delta, [0.2, 0.0], atol=1e-15)
    assert sol.objective == pytest.approx(0.2, abs=1e-15)


def test_lmo_corner_feasible_branch():
    sol = lmo_box_ball([1, -1], FeasibleRegion([0.9, 0.1], 10, 1.5))
    np.testing.assert_allclose(sol.delta, [0.1, -0.1], atol=1e-15)
    assert sol.mu_star == 0.0
    assert sorted(sol.saturated.tolist()) == [0, 1]


def test_lmo_matches_frozen_bruteforce_value():
    # frozen from oracles.lmo_bisection (cross-checked by lmo_projected_ascent)
    expected_delta = [0.4952890873341934, -0.055032120814910365, 0.22012848325964146]
    expected_obj = 1.9811563493367736
    sol = lmo_box_ball([3, -1, 2], FeasibleRegion([0.2, 0.9, 0.5], 0.6, 1.5))
    assert sol.objective == pytest.approx(expected_obj, abs=1e-8)
    np.testing.assert_allclose(sol.delta, expected_delta, atol=1e-8)
    assert sol.mu_star > 0


def test_lmo_greedy_l1():
    sol = lmo_box_ball([2, 1, 0.5], FeasibleRegion([0.5, 0.5, 0.5], 0.7, 1))
    np.testing.assert_allclose(sol.delta, [0.5, 0.2, 0.0], atol=1e-15)


def test_lmo_l1_matches_linprog():
    rng = np.random.default_rng(3)
    for _ in range(100):
        w, c, eps, _ = random_instance(rng)
        sol = lmo_box_ball(w, FeasibleRegion(c, eps, 1))
        ref = lmo_linprog(w, c, eps)
        assert sol.objective == pytest.approx(float(w @ ref), abs=1e-8)


def test_lmo_inf():
    sol = lmo_box_ball([1, -1, 0], FeasibleRegion([0.95, 0.5, 0.5], 0.1, INF))
    np.testing.assert_allclose(sol.delta, [0.05, -0.1, 0.0], atol=1e-15)


def test_lmo_errors():
    r = FeasibleRegion([0.5, 0.5], 0.2, 2)
    with pytest.raises(InvalidArgumentError):
        lmo_box_ball([1, 2, 3], r)
    with pytest.raises(InvalidArgumentError):
        lmo_box_ball([1, np.nan], r)
    with pytest.raises(UnsupportedExponentError):
        lmo_box_ball([1, 2], FeasibleRegion([0.5, 0.5], 0.2, 1.0005))


def test_lmo_zero_gradient_and_pinned_coordinates():
    # coordinate 0 pinned at the upper face with positive gradient: gamma = 0
    r = FeasibleRegion([1.0, 0.0, 0.5], 0.3, 1.5)
    sol = lmo_box_ball([5.0, -2.0, 0.0], r)
    np.testing.assert_array_equal(sol.delta, [0.0, 0.0, 0.0])
    sol = lmo_box_ball([5.0, 2.0, 0.0], r)
    assert sol.delta[0] == 0 and sol.delta[2] == 0
    assert sol.delta[1] == pytest.approx(0.3)


def test_lmo_close_to_one_is_stable():
    rng = np.random.default_rng(0)
    w = rng.normal(size=50) * 1e-4
    c = rng.uniform(size=50)
    r = FeasibleRegion(c, 0.7, 1.001)
    sol = lmo_box_ball(w, r)
    ref = lmo_bisection(w, c, 0.7, 1.001)
    assert np.all(np.isfinite(sol.delta))
    assert r.contains(c + sol.delta)
    assert sol.objective == pytest.approx(float(w @ ref), rel=1e-8)


# -- LMO: properties ----------------------------------------------------------

instances = st.integers(0, 2 ** 32 - 1).map(lambda s: random_instance(np.random.default_rng(s)))


@settings(max_examples=300, deadline=None)
@given(instances)
def test_lmo_feasible_and_sign_convention(inst):
    w, c, eps, p = inst
    r = FeasibleRegion(c, eps, p)
    sol = lmo_box_ball(w, r)
    y = c + sol.delta
    assert np.all(y >= 0) and np.all(y <= 1)
    assert lp_norm(sol.delta, p) <= eps * (1 + 1e-9)
    assert np.all(sol.delta[w == 0] == 0)
    assert np.all(sol.delta * w >= 0)
    assert sol.mu_star >= 0


@settings(max_examples=200, deadline=None)
@given(instances)
def test_lmo_brute_force_equivalence(inst):
    w, c, eps, p = inst
    sol = lmo_box_ball(w, FeasibleRegion(c, eps, p))
    opt = float(w @ lmo_bisection(w, c, eps, p))
    assert abs(sol.objective - opt) <= 1e-6 * (1 + abs(opt))


def test_lmo_optimality_certificate():
    rng = np.random.default_rng(11)
    for _ in range(20):
        w, c, eps, p = random_instance(rng)
        r = FeasibleRegion(c, eps, p)
        sol = lmo_box_ball(w, r)
        for s in range(50):
            pt = sample_feasible(r, s)
            assert w @ (pt - c) <= sol.objective + 1e-9 * (1 + abs(sol.objective))


@settings(max_examples=200, deadline=None)
@given(instances, st.floats(1e-3, 1e3))
def test_lmo_positive_scale_invariance(inst, scale):
    w, c, eps, p = inst
    r = FeasibleRegion(c, eps, p)
    a = lmo_box_ball(w, r).delta
    b = lmo_box_ball(scale * w, r).delta
    np.testing.assert_allclose(a, b, atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(instances)
def test_lmo_monotone_in_radius(inst):
    w, c, eps, p = inst
    prev = -math.inf
    for e in eps * np.array([0.25, 0.5, 1.0, 2.0, 4.0]):
        obj = lmo_box_ball(w, FeasibleRegion(c, e, p)).objective
        assert obj >= prev - 1e-12 * (1 + abs(obj))
        prev = obj


def test_lmo_l2_interior_matches_scaled_gradient():
    rng = np.random.default_rng(5)
    for _ in range(100):
        d = int(rng.integers(2, 20))
        w = rng.normal(size=d)
        c = np.full(d, 0.5)
        eps = 0.4 * rng.uniform()
        sol = lmo_box_ball(w, FeasibleRegion(c, eps, 2))
        # box inactive since every |delta_i| <= eps < 0.5
        np.testing.assert_allclose(sol.delta, eps * w / np.linalg.norm(w), atol=1e-10)


def test_lmo_handles_ties():
    w = np.array([1.0, 1.0, 1.0, -1.0])
    c = np.array([0.5, 0.5, 0.5, 0.5])
    sol = lmo_box_ball(w, FeasibleRegion(c, 0.6, 1.5))
    ref = lmo_bisection(w, c, 0.6, 1.5)
    np.testing.assert_allclose(sol.delta, ref, atol=1e-10)


def test_lmo_ball_ignores_box():
    r = FeasibleRegion([0.9, 0.5], 0.5, 2)
    np.testing.assert_allclose(lmo_ball([1, 0], r), [0.5, 0.0])
    np.testing.assert_allclose(lmo_box_ball([1, 0], r).delta, [0.1, 0.0], atol=1e-15)


# -- projections --------------------------------------------------------------

def test_projection_identity_on_feasible():
    for p in (1, 2, INF):
        r = FeasibleRegion([0.4, 0.6, 0.2], 0.3, p)
        z = np.array([0.45, 0.6, 0.25])
        np.testing.assert_array_equal(project_box_ball(z, r), z)


def test_projection_inf_clip():
    r = FeasibleRegion([0.5, 0.5], 0.1, INF)
    np.testing.assert_allclose(project_box_ball([0.9, 0.55], r), [0.6, 0.55])


def test_projection_l2_against_grid():
    r = FeasibleRegion([0.5, 0.5], 0.2, 2)
    y = project_box_ball([1.2, 0.5], r)
    ref = project_grid_2d([1.2, 0.5], [0.5, 0.5], 0.2, 2)
    np.testing.assert_allclose(y, ref, atol=2e-4)


@pytest.mark.parametrize("p", [1, 2])
def test_projection_against_grid_random(p):
    rng = np.random.default_rng(p)
    for _ in range(5):
        c = rng.uniform(0, 1, 2)
        eps = rng.uniform(0.1, 0.5)
        z = c + rng.normal(scale=0.6, size=2)
        r = FeasibleRegion(c, eps, p)
        y = project_box_ball(z, r)
        ref = project_grid_2d(z, c, eps, p)
        # the grid point is feasible, so the exact projection is never farther;
        # positions along a curved face are ill-conditioned, distances are not
        assert r.contains(y)
        assert np.linalg.norm(y - z) <= np.linalg.norm(ref - z) + 1e-12
        assert np.linalg.norm(y - z) >= np.linalg.norm(ref - z) - 1e-4


def test_projection_unsupported_exponent():
    with pytest.raises(UnsupportedExponentError):
        project_box_ball([0.1, 0.2], FeasibleRegion([0.5, 0.5], 0.2, 1.5))


@pytest.mark.parametrize("p", [1, 2, INF])
def test_projection_idempotent_and_nonexpansive(p):
    rng = np.random.default_rng(7)
    for _ in range(200):
        d = int(rng.integers(2, 10))
        c = rng.uniform(size=d)
        r = FeasibleRegion(c, rng.uniform(0.05, 1.5), p)
        a = c + rng.normal(scale=0.7, size=d)
        b = c + rng.normal(scale=0.7, size=d)
        pa, pb = project_box_ball(a, r), project_box_ball(b, r)
        assert r.contains(pa) and r.contains(pb)
        np.testing.assert_allclose(project_box_ball(pa, r), pa, atol=1e-12)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-9


# -- sampling -----------------------------------------------------------------

def test_sample_degenerate_ball():
    c = np.array([0.3, 0.7, 0.0])
    y = sample_feasible(FeasibleRegion(c, 1e-12, 1.5), 4)
    np.testing.assert_allclose(y, c, atol=1e-12)


def test_sample_deterministic():
    r = FeasibleRegion([0.3, 0.7, 0.5], 0.4, 1.5)
    np.testing.assert_array_equal(sample_feasible(r, 9), sample_feasible(r, 9))
    assert not np.array_equal(sample_feasible(r, 9), sample_feasible(r, 10))


def test_sample_always_feasible():
    rng = np.random.default_rng(0)
    exps = (1.0, 1.1, 1.5, 2.0, 3.0, INF)
    for s in range(1000):
        w, c, eps, _ = random_instance(rng)
        p = exps[s % len(exps)]
        r = FeasibleRegion(c, eps, p)
        assert r.contains(sample_feasible(r, s))
