import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lyaplab.errors import ConfigError, DomainError
from lyaplab.linalg import proj_act, proj_dist, rotation
from lyaplab.systems import (BumpProfile, Composite, ConstantMatrix, FrameField, GeneratorSet,
                             LinearToralMap, Shear, StandardMap, Translation, WordSampler, cat_map,
                             cocycle_step, generator_from_spec, make_shear, sample_word, shear_pair,
                             verify_conservative)
from lyaplab.zoo import zoo

import oracles

unit = st.floats(min_value=0.0, max_value=1.0, exclude_max=True)


def test_sample_word_single_generator():
    s = WordSampler(5, (1.0,))
    assert np.all(sample_word(s, 1000) == 0)


def test_sample_word_frequency_3_sigma():
    n = 10 ** 6
    w = sample_word(WordSampler(11, (0.5, 0.5)), n)
    assert abs(np.mean(w == 0) - 0.5) <= 3 * 0.5 / math.sqrt(n)


def test_sample_word_weighted_frequencies():
    n = 10 ** 6
    p = np.array([0.2, 0.5, 0.3])
    w = sample_word(WordSampler(2, tuple(p)), n)
    freq = np.bincount(w, minlength=3) / n
    assert np.all(np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n))


def test_sample_word_deterministic_and_streams_differ():
    a = sample_word(WordSampler(3, (0.5, 0.5), 4), 500)
    b = sample_word(WordSampler(3, (0.5, 0.5), 4), 500)
    c = sample_word(WordSampler(3, (0.5, 0.5), 5), 500)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    # prefixes agree
    assert np.array_equal(sample_word(WordSampler(3, (0.5, 0.5), 4), 100), a[:100])


def test_word_and_points_streams_independent():
    s = WordSampler(1, (0.5, 0.5))
    assert not np.array_equal(s.rng(0).random(4), s.rng(1).random(4))


@pytest.mark.parametrize("w", [(0.5, 0.6), (1.0, 0.0), (-0.5, 1.5), (0.3,)])
def test_weights_validated(w):
    with pytest.raises(DomainError):
        GeneratorSet([ConstantMatrix(np.eye(2)), ConstantMatrix(np.eye(2))], w)


def test_translation_cocycle_identity():
    gs = GeneratorSet([Translation((0.3, 0.7))])
    x2, J = cocycle_step(gs, 0, (0.9, 0.5))
    assert np.array_equal(J, np.eye(2))
    assert x2 == pytest.approx((0.2, 0.2))


@given(unit, unit)
def test_cat_map_derivative(x, y):
    gs = GeneratorSet([cat_map()])
    (x2, y2), J = cocycle_step(gs, 0, (x, y))
    assert np.array_equal(J, [[2.0, 1.0], [1.0, 1.0]])
    assert (x2, y2) == pytest.approx(((2 * x + y) % 1.0, (x + y) % 1.0), abs=1e-12) or \
        min(abs(x2 - (2 * x + y) % 1.0), 1 - abs(x2 - (2 * x + y) % 1.0)) < 1e-12


@pytest.mark.parametrize("y", [0.0, 0.3, 0.77])
@pytest.mark.parametrize("K", [0.5, 1.2, 3.0])
def test_standard_map_against_finite_differences(K, y):
    g = StandardMap(K)
    for x in (0.25, 0.1, 0.6):
        (x2, y2), J = g.evaluate((x, y))
        assert (x2, y2) == pytest.approx(oracles.standard_map(K, x, y), abs=1e-12)
        fd = oracles.finite_difference_jacobian(lambda p: oracles.standard_map(K, *p), (x, y))
        assert np.allclose(J, fd, atol=1e-6)


def test_standard_map_at_quarter():
    # cos(2 pi / 4) = 0: the kick has zero slope there
    _, J = StandardMap(1.2).evaluate((0.25, 0.4))
    assert np.allclose(J, [[1.0, 1.0], [0.0, 1.0]], atol=1e-15)


def test_bump_profile_properties():
    b = BumpProfile(0.3, 0.2, 1.7)
    assert b.g(0.3) == 0.0 and b.dg(0.3) == 1.7
    for y in (0.0, 0.05, 0.55, 0.9):
        assert b.g(y) == 0.0 and b.dg(y) == 0.0
    # C1 check of g' against differences of g, including across the band edge
    for y in np.linspace(0.05, 0.55, 41):
        h = 1e-6
        assert (b.g(y + h) - b.g(y - h)) / (2 * h) == pytest.approx(b.dg(y), abs=1e-6)
    assert b.g(0.35) == pytest.approx(oracles.bump(0.35, 0.3, 0.2, 1.7), abs=1e-15)


@pytest.mark.parametrize("kw", [dict(center=0.5, radius=0.6, strength=1.0), dict(center=1.2, radius=0.1, strength=1.0),
                                dict(center=0.5, radius=0.0, strength=1.0)])
def test_bump_profile_domain(kw):
    with pytest.raises(DomainError):
        BumpProfile(**kw)


def test_bump_wraps_periodically():
    b = BumpProfile(0.05, 0.2, 1.0)
    assert b.g(0.95) == pytest.approx(oracles.bump(0.95, 0.05, 0.2, 1.0)) and b.g(0.95) != 0.0


def test_shear_strength_zero_is_identity():
    g = make_shear("horizontal", BumpProfile(0.5, 0.3, 0.0))
    for p in [(0.1, 0.5), (0.7, 0.4), (0.3, 0.9)]:
        q, J = g.evaluate(p)
        assert q == pytest.approx(p) and np.array_equal(J, np.eye(2))


@given(unit)
def test_shear_fixes_its_line(x):
    s = 0.8
    h = make_shear("horizontal", BumpProfile(0.4, 0.2, s))
    q, J = h.evaluate((x, 0.4))
    assert q == (x, 0.4)
    assert np.array_equal(J, [[1.0, s], [0.0, 1.0]])
    v = make_shear("vertical", BumpProfile(0.4, 0.2, s))
    q, J = v.evaluate((0.4, x))
    assert q == (0.4, x)
    assert np.array_equal(J, [[1.0, 0.0], [s, 1.0]])


def test_shear_invalid_axis():
    with pytest.raises(DomainError):
        Shear("diagonal", BumpProfile(0.5, 0.1, 1.0))


def test_horizontal_after_vertical_at_common_fixed_point():
    s, t, c, r = 0.7, -0.4, 0.5, 0.2
    g = Composite((make_shear("vertical", BumpProfile(c, r, t)), make_shear("horizontal", BumpProfile(c, r, s))))
    q, J = g.evaluate((c, c))
    assert q == (c, c)
    assert np.allclose(J, [[1 + s * t, s], [t, 1.0]], atol=1e-15)
    fd = oracles.finite_difference_jacobian(
        lambda p: oracles.horizontal_shear(c, r, s, oracles.vertical_shear(c, r, t, p)), (c, c))
    assert np.allclose(J, fd, atol=1e-6)


def test_shear_pair_derivative_and_fd_elsewhere():
    g = shear_pair(0.5, 0.25, 0.5)
    _, J = g.evaluate((0.5, 0.5))
    assert np.allclose(J, [[1.25, 0.5], [0.5, 1.0]], atol=1e-15)
    for p in [(0.45, 0.6), (0.62, 0.41), (0.1, 0.55)]:
        _, J = g.evaluate(p)
        fd = oracles.finite_difference_jacobian(
            lambda q: oracles.horizontal_shear(0.5, 0.25, 0.5, oracles.vertical_shear(0.5, 0.25, 0.5, q)), p)
        assert np.allclose(J, fd, atol=1e-6)


@settings(max_examples=50)
@given(unit, unit)
def test_torus_maps_land_in_unit_square_and_conserve(x, y):
    for g in [cat_map(), StandardMap(1.2), shear_pair(0.5, 0.25, 2.0), Translation((0.999, 0.5)),
              Composite((StandardMap(0.7), Translation((0.1, 0.2)), cat_map()))]:
        (x2, y2), J = g.evaluate((x, y))
        assert 0.0 <= x2 < 1.0 and 0.0 <= y2 < 1.0
        assert abs(abs(np.linalg.det(J)) - 1.0) <= 1e-10


def test_verify_conservative():
    assert verify_conservative(cat_map()).max_det_deviation == 0.0
    r = verify_conservative(StandardMap(1.2))
    assert r.max_det_deviation < 1e-12 and r.passed
    bad = verify_conservative(LinearToralMap(np.array([[2.0, 0.0], [0.0, 1.0]])))
    assert bad.max_det_deviation == 1.0 and not bad.passed
    assert verify_conservative(shear_pair(0.5, 0.3, 3.0)).passed


def test_identity_frame_gives_df_exactly():
    gs = GeneratorSet([StandardMap(1.2)])
    p = (0.13, 0.71)
    _, J = cocycle_step(gs, 0, p)
    _, D = StandardMap(1.2).evaluate(p)
    assert np.array_equal(J, D)


@pytest.mark.parametrize("frame", [FrameField("rotation", a=1.0, b=-2.0, phase=0.3),
                                   FrameField("constant", C=np.array([[2.0, 1.0], [0.5, 1.0]]))])
def test_frame_conjugation_identity(frame):
    base = GeneratorSet([StandardMap(1.2), Translation((0.2, 0.5))])
    gs = base.with_frame(frame)
    rng = np.random.default_rng(0)
    x = (0.3, 0.8)
    t = 0.9
    t_frame = proj_act(frame.at(x), t)
    for sym in rng.integers(0, 2, 50):
        x2, D = cocycle_step(base, int(sym), x)
        _, J = cocycle_step(gs, int(sym), x)
        assert np.allclose(J, frame.at(x2) @ D @ np.linalg.inv(frame.at(x)), atol=1e-12)
        t = proj_act(D, t)
        t_frame = proj_act(J, t_frame)
        assert proj_dist(proj_act(frame.at(x2), t), t_frame) < 1e-10
        x = x2
    if frame.orthonormal:
        assert abs(abs(np.linalg.det(J)) - 1) < 1e-10


def test_frame_validation():
    with pytest.raises(DomainError):
        FrameField("constant", C=np.zeros((2, 2)))
    with pytest.raises(DomainError):
        FrameField("spiral")
    assert not FrameField("constant", C=np.diag([2.0, 1.0])).orthonormal


def test_generator_from_spec_roundtrip():
    for e in zoo().values():
        for g in e.system.generators:
            g2 = generator_from_spec(g.to_spec())
            for p in [(0.1, 0.2), (0.6, 0.9)]:
                a, Ja = g.evaluate(p)
                b, Jb = g2.evaluate(p)
                assert a == b and np.array_equal(Ja, Jb)


@pytest.mark.parametrize("spec,key", [
    ({"type": "standard_map"}, "generator.K"),
    ({"type": "standard_map", "K": 1.0, "v": [0, 0]}, "generator.v"),
    ({"type": "warp"}, "generator.type"),
    ({"K": 1.0}, "generator"),
    ({"type": "composite", "compose": [{"type": "shear", "axis": "horizontal", "center": 0.5, "radius": 0.1}]},
     "generator.compose[0].strength"),
])
def test_generator_from_spec_errors_name_key(spec, key):
    with pytest.raises(ConfigError) as ei:
        generator_from_spec(spec)
    assert ei.value.key == key


def test_constant_matrix_frozen_and_invertible():
    g = ConstantMatrix(rotation(0.3))
    with pytest.raises(ValueError):
        g.M[0, 0] = 5.0
    with pytest.raises(DomainError):
        ConstantMatrix(np.zeros((2, 2)))
