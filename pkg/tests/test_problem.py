from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import bilinear_problem
from ddsaddle.evmarket import EvParams, build_problem
from ddsaddle.geometry import DimensionError
from ddsaddle.problem import (BootstrapBase, GaussianBase, LocationScaleMap, PointMassBase,
                              ProblemConstants, decoupled_gradient, monotonicity_probe,
                              sample_map, sensitivity)

EV_B = 0.3 * np.block([[-np.eye(3), np.eye(3)], [np.eye(3), -np.eye(3)]])


def test_stationary_map_returns_base_draws():
    base = GaussianBase(4)
    m = LocationScaleMap(np.eye(4), np.zeros((4, 6)), np.zeros(4), base)
    got = sample_map(m, np.arange(6.0), np.random.default_rng(3), 50)
    np.testing.assert_array_equal(got, base(np.random.default_rng(3), (50,)))


def test_ev_map_at_origin_returns_base_draws(ev_problem):
    m = ev_problem.dist_map
    got = sample_map(m, np.zeros(6), np.random.default_rng(5), 20)
    np.testing.assert_array_equal(got, m.base(np.random.default_rng(5), (20,)))


def test_sample_mean_matches_affine_formula(ev_problem):
    rng = np.random.default_rng(0)
    z = np.array([0.5, -0.3, 1.2, 0.1, 1.9, -0.7])
    w = sample_map(ev_problem.dist_map, z, rng, 100_000)
    se = w.std(axis=0, ddof=1) / np.sqrt(w.shape[0])
    assert np.all(np.abs(w.mean(axis=0) - EV_B @ z) <= 3 * se)


def test_sample_map_errors(ev_problem):
    with pytest.raises(DimensionError):
        sample_map(ev_problem.dist_map, np.zeros(4), np.random.default_rng(0), 3)
    with pytest.raises(ValueError):
        sample_map(ev_problem.dist_map, np.zeros(6), np.random.default_rng(0), 0)
    with pytest.raises(DimensionError):
        LocationScaleMap(np.eye(2), np.zeros((3, 4)), np.zeros(3), PointMassBase(3))


@pytest.mark.parametrize("b,expected", [(np.zeros((6, 6)), 0.0), (0.3 * np.eye(6), 0.3), (EV_B, 0.6)])
def test_sensitivity_examples(b, expected):
    m = LocationScaleMap(np.eye(6), b, np.zeros(6), PointMassBase(6))
    assert sensitivity(m) == pytest.approx(expected, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), rows=st.integers(1, 6), cols=st.integers(1, 6))
def test_sensitivity_matches_svd(seed, rows, cols):
    b = np.random.default_rng(seed).standard_normal((rows, cols))
    m = LocationScaleMap(np.eye(rows), b, np.zeros(rows), PointMassBase(rows))
    assert sensitivity(m) == pytest.approx(np.linalg.norm(b, 2), rel=1e-6)


def test_gaussian_base_zero_mean_and_truncation():
    draws = GaussianBase(3, truncate=1.0)(np.random.default_rng(1), (100_000,))
    assert np.max(np.abs(draws)) <= 1.0
    se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
    assert np.linalg.norm(draws.mean(axis=0)) <= 3 * np.linalg.norm(se)


def test_bootstrap_base_is_centred():
    data = np.random.default_rng(0).standard_normal((50, 2)) + 7.0
    base = BootstrapBase(data)
    np.testing.assert_allclose(base.data.mean(axis=0), 0.0, atol=1e-12)
    draws = base(np.random.default_rng(2), (10, 3))
    assert draws.shape == (10, 3, 2)


def test_constants_validation_and_derived():
    c = ProblemConstants(2.0, 2.0, 0.6)
    assert c.ratio == pytest.approx(0.6)
    assert c.full_modulus == pytest.approx(-0.4)
    assert ProblemConstants(2.0, 2.0, 0.6, mono_full=2.6).full_modulus == 2.6
    for args in [(0.0, 1.0, 0.0), (1.0, 0.0, 0.0), (1.0, 1.0, -0.1)]:
        with pytest.raises(ValueError):
            ProblemConstants(*args)
    with pytest.raises(ValueError):
        ProblemConstants(1.0, 1.0, 0.0, mono_full=-1.0)


def test_decoupled_gradient_examples(ev_problem):
    np.testing.assert_array_equal(decoupled_gradient(ev_problem, np.zeros(6), np.zeros(6)), 0.0)
    g = decoupled_gradient(ev_problem, [1, 0, 0, 0, 0, 0], np.zeros(6))
    np.testing.assert_allclose(g, [2, 0, 0, 0, 0, 0], atol=1e-15)


def test_decoupled_gradient_hand_evaluation(ev_problem):
    # Ψ(z; z') = (2x - (A1 x' + A2 y'), 2y - (B1 x' + B2 y')) at the default elasticities
    z = np.array([0.2, -0.4, 1.0, 0.3, 0.0, -1.0])
    zf = np.array([1.0, 0.5, -0.5, 0.0, 2.0, 1.0])
    x, y, xf, yf = z[:3], z[3:], zf[:3], zf[3:]
    expect = np.concatenate([2 * x - (-0.3 * xf + 0.3 * yf), 2 * y - (0.3 * xf - 0.3 * yf)])
    np.testing.assert_allclose(decoupled_gradient(ev_problem, z, zf), expect, atol=1e-14)


def test_decoupled_gradient_errors(ev_problem):
    with pytest.raises(ValueError):
        decoupled_gradient(ev_problem, np.zeros(6), np.zeros(6), "monte_carlo", count=0,
                           rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        decoupled_gradient(replace(bilinear_problem(), decoupled_grad=None), np.zeros(4), np.zeros(4))
    with pytest.raises(ValueError):
        decoupled_gradient(ev_problem, np.zeros(6), np.zeros(6), "bogus")


def test_monte_carlo_matches_closed_form_1e6(ev_problem):
    rng = np.random.default_rng(11)
    z, zf = rng.uniform(-1, 2, 6), rng.uniform(-1, 2, 6)
    mc, se = decoupled_gradient(ev_problem, z, zf, "monte_carlo", 10**6, rng, return_se=True)
    assert np.all(np.abs(mc - decoupled_gradient(ev_problem, z, zf)) <= 3 * se)


def test_monte_carlo_matches_closed_form_five_points(ev_problem):
    rng = np.random.default_rng(12)
    for _ in range(5):
        z, zf = rng.uniform(-1, 2, 6), rng.uniform(-1, 2, 6)
        mc, se = decoupled_gradient(ev_problem, z, zf, "monte_carlo", 10**5, rng, return_se=True)
        assert np.all(np.abs(mc - decoupled_gradient(ev_problem, z, zf)) <= 3 * se)


def test_monotonicity_probe_examples(ev_problem, ev_box):
    rng = np.random.default_rng(0)
    assert monotonicity_probe(ev_problem, ev_box, 20, rng) == pytest.approx(2.0, abs=1e-12)
    from ddsaddle.geometry import ProductBox
    assert monotonicity_probe(bilinear_problem(), ProductBox.uniform(-1, 1, 2, 2), 20, rng) == \
        pytest.approx(0.0, abs=1e-12)
    scaled = build_problem(EvParams(gamma1=2.0, gamma2=2.0))
    assert monotonicity_probe(scaled, ev_box, 20, rng) == pytest.approx(8.0, abs=1e-12)
    mc = monotonicity_probe(ev_problem, ev_box, 5, rng, estimator="monte_carlo", count=1000)
    assert mc == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError):
        monotonicity_probe(ev_problem, ev_box, 0, rng)


def test_mean_shift_bounded_by_sensitivity(ev_problem, ev_box):
    m = ev_problem.dist_map
    eps = sensitivity(m)
    rng = np.random.default_rng(4)
    for _ in range(200):
        z, z2 = ev_box.sample_uniform(rng, 2)
        assert np.linalg.norm(m.mean(z) - m.mean(z2)) <= eps * np.linalg.norm(z - z2) + 1e-12


def test_gradient_deviation_bound(ev_problem, ev_box):
    c = ev_problem.constants
    assert c.eps * c.lip_l == pytest.approx(1.2)
    rng = np.random.default_rng(5)
    for _ in range(200):
        zh, z, z2 = ev_box.sample_uniform(rng, 3)
        dev = np.linalg.norm(ev_problem.decoupled_grad(zh, z) - ev_problem.decoupled_grad(zh, z2))
        assert dev <= c.eps * c.lip_l * np.linalg.norm(z - z2) + 1e-12


def test_grad_matches_finite_differences(ev_problem):
    rng = np.random.default_rng(6)
    h = 1e-4
    for _ in range(10):
        z = rng.uniform(-1, 2, 6)
        w = rng.standard_normal(6)
        g = ev_problem.grad(z, w)
        fd = np.empty(6)
        for i in range(6):
            e = np.zeros(6)
            e[i] = h
            fd[i] = (ev_problem.payoff(z + e, w) - ev_problem.payoff(z - e, w)) / (2 * h)
        fd[3:] *= -1.0
        assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(g))
