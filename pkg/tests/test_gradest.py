"""Batched gradient estimation: batch-size formulas and error certificates."""

import math

import numpy as np
import pytest

from isograd.errors import ConfigurationError, InputError
from isograd.gradest import (MagoConfig, directional_batch_size,
                             directional_deriv_estimate, mago_batch_size,
                             mago_estimate)
from isograd.oracles import NoiseSpec


def make_isgo(sigma, delta, d, seed=0, grad=None):
    grad = grad or (lambda x: x)
    return NoiseSpec("isotropic", sigma, delta=delta, seed=seed).make_oracle(d, grad)


def test_batch_size_frozen_example():
    # ceil(2 * (1/(4*0.25)) * ln(800)) + 1 = 15
    assert mago_batch_size(1.0, 4, 0.5, 0.01, 2.0) == 15


def test_batch_size_overflow_guard_names_parameters():
    with pytest.raises(ConfigurationError, match="eta=1e-09"):
        mago_batch_size(1.0, 2, 1e-9, 0.01)


def test_noiseless_estimate_is_exact_with_single_draw():
    oracle = make_isgo(0.0, None, 3, grad=lambda x: 2.0 * x)
    x = np.array([1.0, -1.0, 0.5])
    got = mago_estimate(oracle, x, MagoConfig(eta=0.1, xi=0.1))
    np.testing.assert_array_equal(got.value, 2.0 * x)
    assert got.queries_charged == 1


def test_queries_charged_matches_batch_formula():
    sigma, delta, d = 1.0, 1e-4, 4
    cfg = MagoConfig(eta=0.5, xi=0.01)
    oracle = make_isgo(sigma, delta, d)
    got = mago_estimate(oracle, np.zeros(d), cfg)
    assert got.queries_charged == mago_batch_size(sigma, d, 0.5, 0.01)
    assert oracle.queries == got.queries_charged


def test_scale_equivariance_noiseless():
    c = 3.7
    base = make_isgo(0.0, None, 3, grad=lambda x: x + 1.0)
    scaled = make_isgo(0.0, None, 3, grad=lambda x: c * (x + 1.0))
    cfg = MagoConfig(eta=0.2, xi=0.05)
    x = np.array([0.3, -0.2, 0.9])
    np.testing.assert_allclose(mago_estimate(scaled, x, cfg).value,
                               c * mago_estimate(base, x, cfg).value)


def test_marginal_error_monte_carlo():
    # fraction of repetitions violating |<err, u>| <= eta stays within
    # xi + delta*d*K (+3 SE) for a direction fixed before sampling
    sigma, delta, d, eta, xi = 1.0, 1e-6, 4, 0.25, 0.05
    cfg = MagoConfig(eta=eta, xi=xi)
    oracle = make_isgo(sigma, delta, d, seed=5)
    k = mago_batch_size(sigma, d, eta, xi)
    rng = np.random.default_rng(19)
    u = rng.normal(size=d)
    u /= np.linalg.norm(u)
    x = np.array([0.5, -0.5, 0.25, 0.0])
    reps = 10_000
    grad = oracle.gradient(x)
    bad = 0
    bad_l2 = 0
    for _ in range(reps):
        err = mago_estimate(oracle, x, cfg).value - grad
        if abs(float(err @ u)) > eta:
            bad += 1
        if np.linalg.norm(err) > eta * math.sqrt(d):
            bad_l2 += 1
        else:
            # l2 success implies every basis marginal is within eta*sqrt(d)
            assert np.all(np.abs(err) <= eta * math.sqrt(d) + 1e-15)
    budget = xi + delta * d * k
    se = math.sqrt(budget * (1 - budget) / reps)
    assert bad / reps <= budget + 3.0 * se
    assert bad_l2 / reps <= budget + 3.0 * se


def test_directional_exact_for_linear_function():
    a = np.array([2.0, -1.0, 0.5])
    oracle = make_isgo(0.0, None, 3, grad=lambda x: a)
    got = directional_deriv_estimate(oracle, np.zeros(3), np.eye(3)[0], 0.1, 0.1)
    assert got == pytest.approx(a[0])


def test_directional_batch_invariant_to_joint_rescale():
    k1 = directional_batch_size(1.0, 4, 1.0, 0.05, 0.01)
    k2 = directional_batch_size(1.0, 4, 2.0, 0.10, 0.01)
    assert k1 == k2


def test_directional_rejects_zero_direction():
    oracle = make_isgo(1.0, 0.1, 3)
    with pytest.raises(InputError):
        directional_deriv_estimate(oracle, np.zeros(3), np.zeros(3), 0.1, 0.1)


def test_directional_error_monte_carlo():
    sigma, delta, d, gamma, xi = 1.0, 1e-6, 4, 0.3, 0.05
    oracle = make_isgo(sigma, delta, d, seed=23)
    rng = np.random.default_rng(3)
    direction = rng.normal(size=d)
    x = np.zeros(d)
    k = directional_batch_size(sigma, d, float(np.linalg.norm(direction)),
                               gamma, xi)
    truth = float(oracle.gradient(x) @ direction)
    reps = 10_000
    bad = sum(
        abs(directional_deriv_estimate(oracle, x, direction, gamma, xi) - truth)
        > gamma
        for _ in range(reps))
    budget = xi + delta * k
    se = math.sqrt(budget * (1 - budget) / reps)
    assert bad / reps <= budget + 3.0 * se


def test_requires_isotropic_class():
    oracle = NoiseSpec("variance", 1.0, seed=0).make_oracle(3, lambda x: x)
    with pytest.raises(InputError):
        mago_estimate(oracle, np.zeros(3), MagoConfig(eta=0.1, xi=0.1))
