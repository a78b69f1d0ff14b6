import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lyaplab.errors import DomainError
from lyaplab.linalg import (check_contraction_lemma, is_unimodular, min_expansion_direction,
                            normalize_unimodular, op_norm, proj_act, proj_dist, rotation,
                            singular_values_2x2, wrap_angle)

from oracles import min_norm_grid

angles = st.floats(min_value=0.0, max_value=math.pi, exclude_max=True)
entries = st.floats(min_value=-5, max_value=5, allow_nan=False)


@st.composite
def invertible(draw, max_cond=1e4):
    M = np.array([[draw(entries), draw(entries)], [draw(entries), draw(entries)]])
    assume(np.all(np.isfinite(M)) and np.abs(M).max() > 1e-3)
    assume(np.linalg.cond(M) <= max_cond)
    return M


def test_normalize_examples():
    assert np.array_equal(normalize_unimodular(np.diag([2.0, 2.0])), np.eye(2))
    assert np.array_equal(normalize_unimodular(np.eye(2)), np.eye(2))
    N = normalize_unimodular(np.diag([4.0, 1.0]))
    assert np.allclose(N, np.diag([2.0, 0.5]), atol=1e-15)
    assert abs(np.linalg.det(N) - 1) < 1e-12


@pytest.mark.parametrize("bad", [np.zeros((2, 2)), np.array([[1.0, 2.0], [2.0, 4.0]]),
                                 np.array([[np.nan, 0.0], [0.0, 1.0]]), np.array([[np.inf, 0], [0, 1.0]])])
def test_normalize_rejects(bad):
    with pytest.raises(DomainError):
        normalize_unimodular(bad)


@given(invertible(), angles)
def test_normalize_unit_det_and_projectively_neutral(A, t):
    N = normalize_unimodular(A)
    assert is_unimodular(N)
    # same line up to the last-bit rounding of the division
    assert proj_dist(proj_act(A, t), proj_act(N, t)) <= 1e-13


def test_proj_act_examples():
    assert proj_act(np.eye(2), 1.234) == 1.234
    for a in (0.3, 1.0, 2.9):
        assert proj_dist(proj_act(rotation(a), 0.7), (0.7 + a) % math.pi) < 1e-14
    # direct matrix-vector product then atan2
    v = np.diag([2.0, 0.5]) @ np.array([math.sqrt(2) / 2, math.sqrt(2) / 2])
    assert abs(proj_act(np.diag([2.0, 0.5]), math.pi / 4) - math.atan2(v[1], v[0])) < 1e-15
    assert abs(proj_act(np.diag([2.0, 0.5]), math.pi / 4) - math.atan(0.25)) < 1e-15


def test_proj_act_vectorized_matches_scalar():
    t = np.linspace(0, math.pi, 17, endpoint=False)
    A = np.array([[1.0, 2.0], [0.5, -1.0]])
    assert np.allclose(proj_act(A, t), [proj_act(A, s) for s in t], atol=0)


@given(invertible(max_cond=10.0), invertible(max_cond=10.0), angles)
def test_proj_act_composition(A, B, t):
    assert proj_dist(proj_act(B @ A, t), proj_act(B, proj_act(A, t))) <= 1e-12


@settings(max_examples=300)
@given(angles, angles, angles)
def test_proj_dist_is_a_metric(a, b, c):
    assert proj_dist(a, b) == pytest.approx(proj_dist(b, a), abs=1e-15)
    assert 0 <= proj_dist(a, b) <= math.pi / 2
    assert proj_dist(a, c) <= proj_dist(a, b) + proj_dist(b, c) + 1e-12


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
def test_wrap_angle_range(t):
    r = wrap_angle(t)
    assert 0.0 <= r < math.pi
    assert proj_dist(r, t % math.pi) < 1e-9


def test_wrap_angle_boundaries():
    assert wrap_angle(math.pi) == 0.0
    assert wrap_angle(-1e-300) == 0.0 or wrap_angle(-1e-300) < math.pi
    arr = wrap_angle(np.array([-math.pi, 0.0, math.pi, 2 * math.pi]))
    assert np.all((arr >= 0) & (arr < math.pi))


def test_rotation_quarter_turns_exact():
    assert np.array_equal(rotation(math.pi / 2), np.array([[0.0, -1.0], [1.0, 0.0]]))
    assert np.array_equal(rotation(math.pi), -np.eye(2))
    assert np.array_equal(rotation(0.0), np.eye(2))


def test_min_expansion_examples():
    r = min_expansion_direction(np.eye(2))
    assert r.degenerate and r.theta0 == 0.0 and r.s_min == pytest.approx(1) and r.s_max == pytest.approx(1)
    r = min_expansion_direction(np.diag([2.0, 0.5]))
    assert not r.degenerate
    assert proj_dist(r.theta0, math.pi / 2) < 1e-15
    assert (r.s_min, r.s_max) == pytest.approx((0.5, 2.0), abs=1e-15)
    assert min_expansion_direction(3.0 * rotation(0.4)).degenerate


def test_min_expansion_against_grid_search():
    rng = np.random.default_rng(7)
    n = 10 ** 6
    for _ in range(5):
        A = rng.normal(size=(2, 2))
        r = min_expansion_direction(A)
        t_grid, smin_grid, smax_grid = min_norm_grid(A, n)
        assert proj_dist(r.theta0, t_grid) <= 2 * math.pi / n * np.linalg.cond(A) ** 2
        assert r.s_min == pytest.approx(smin_grid, rel=1e-9)
        assert r.s_max == pytest.approx(smax_grid, rel=1e-9)


@given(invertible())
def test_min_expansion_consistency(A):
    r = min_expansion_direction(A)
    assert r.s_min * r.s_max == pytest.approx(abs(np.linalg.det(A)), rel=1e-9)
    assert r.s_max == pytest.approx(np.linalg.norm(A, 2), rel=1e-9)
    if not r.degenerate:
        h0 = np.array([math.cos(r.theta0), math.sin(r.theta0)])
        h1 = np.array([-h0[1], h0[0]])
        assert np.linalg.norm(A @ h0) == pytest.approx(r.s_min, abs=1e-10 * r.s_max)
        assert np.linalg.norm(A @ h1) == pytest.approx(r.s_max, abs=1e-10 * r.s_max)


def test_singular_values_closed_form():
    rng = np.random.default_rng(3)
    for _ in range(50):
        A = rng.normal(size=(2, 2))
        s = np.linalg.svd(A, compute_uv=False)
        lo, hi = singular_values_2x2(A)
        assert (lo, hi) == pytest.approx((s[1], s[0]), rel=1e-10)
        assert op_norm(A) == pytest.approx(s[0], rel=1e-12)


def test_contraction_examples():
    r = check_contraction_lemma(np.eye(2), 0.1, 0.2, 1.9)
    assert r.holds and r.bound == pytest.approx(2 * math.pi ** 3 / 0.01) and r.bound > math.pi
    t = 100.0
    r = check_contraction_lemma(np.diag([t, 1 / t]), 0.1, 0.5, 0.5)
    assert r.holds and r.lhs == 0.0
    assert r.bound == pytest.approx(2 * math.pi ** 3 / (t * t * 0.01))


def test_contraction_precondition_errors():
    with pytest.raises(DomainError, match="unimodular"):
        check_contraction_lemma(np.diag([2.0, 2.0]), 0.1, 0.0, 0.5)
    with pytest.raises(DomainError, match="theta2"):
        check_contraction_lemma(np.diag([10.0, 0.1]), 0.1, 0.0, math.pi / 2 + 0.01)
    with pytest.raises(DomainError):
        check_contraction_lemma(np.eye(2), 0.0, 0.0, 0.5)


def test_contraction_bound_is_not_trivially_loose_for_large_norm():
    # for large |A| the images of far-from-contracted angles really do bunch up
    t = 1e3
    A = np.diag([t, 1 / t])
    r = check_contraction_lemma(A, 0.5, 0.1, 1.0)
    assert r.lhs < 1e-5 and r.bound < 1e-3 and r.holds
