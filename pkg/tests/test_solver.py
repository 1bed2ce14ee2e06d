"""Two-stage solver: stage guarantees, accounting, conversions, SGD."""

import math
import warnings

import numpy as np
import pytest

from isograd.geometry import REASON_TRIVIAL, WalkConfig
from isograd.instances import make_instance
from isograd.oracles import NoiseSpec, conversion_batch_size
from isograd.solver import (ConvertedIsgo, RelabeledIsgo, ScoProblem,
                            SolverConfig, candidates_stage,
                            delta_validity_bound, ensure_isotropic,
                            sgd_baseline, solve_sco)


def isgo_problem(inst, eps, sigma, seed, delta=None):
    if delta is None and sigma > 0:
        delta = delta_validity_bound(inst.d, inst.radius, sigma, eps)
    oracle = NoiseSpec("isotropic", sigma, delta=delta, seed=seed) \
        .make_oracle(inst.d, inst.subgrad)
    return ScoProblem(inst.d, inst.lipschitz, inst.radius, eps, oracle,
                      objective=inst.f, f_star=inst.f_star, x_star=inst.x_star)


def test_trivial_accuracy_returns_origin():
    inst = make_instance("quadratic", 3, 1.0, 2.0, seed=0)
    p = isgo_problem(inst, eps=5.0, sigma=0.0, seed=1)
    candidates, transcript, queries = candidates_stage(p, xi=0.1)
    assert len(candidates) == 1
    np.testing.assert_array_equal(candidates[0], np.zeros(3))
    assert queries == 0
    assert transcript.reason == REASON_TRIVIAL
    assert len(candidates) == len(transcript.points)


def test_candidates_contain_half_eps_optimal_point_noiseless_cog():
    inst = make_instance("smoothed-norm", 2, 1.0, 4.0, seed=3)
    eps = 0.1
    p = isgo_problem(inst, eps, sigma=0.0, seed=2)
    cfg = SolverConfig(walk=WalkConfig(samples=32, chains=16))
    candidates, transcript, _ = candidates_stage(
        p, xi=0.1, engine="hitandrun", config=cfg,
        rng=np.random.default_rng(5))
    best = min(inst.gap(c) for c in candidates)
    assert best <= eps / 2.0
    assert len(candidates) == len(transcript.points)


def test_candidates_success_rate_with_noise():
    inst = make_instance("quadratic", 5, 1.0, 5.0, seed=7)
    eps, sigma = 0.1, 1.0
    wins = 0
    trials = 30
    for t in range(trials):
        p = isgo_problem(inst, eps, sigma, seed=1000 + t)
        candidates, _, _ = candidates_stage(p, xi=0.1)
        if min(inst.gap(c) for c in candidates) <= eps / 2.0:
            wins += 1
    se = math.sqrt((2 / 3) * (1 / 3) / trials)
    assert wins / trials >= 2.0 / 3.0 - 3.0 * se


def test_zero_estimate_triggers_early_exit():
    # an oracle that is exactly zero everywhere produces a zero halfspace
    inst = make_instance("quadratic", 2, 1.0, 3.0, seed=1)
    oracle = NoiseSpec("isotropic", 0.0, seed=0).make_oracle(
        2, lambda x: np.zeros(2))
    p = ScoProblem(2, 3.0, 1.0, 0.05, oracle, objective=inst.f,
                   f_star=inst.f_star)
    candidates, transcript, _ = candidates_stage(p, xi=0.1)
    assert transcript.reason == "zero-cut"
    assert len(candidates) == 1


def test_solve_noiseless_quadratic_every_trial():
    inst = make_instance("quadratic", 3, 1.0, 3.0, seed=5)
    eps = 0.05
    for t in range(5):
        p = isgo_problem(inst, eps, sigma=0.0, seed=t)
        transcript = solve_sco(p, SolverConfig(seed=t))
        assert transcript.gap <= eps
        assert transcript.total_queries == \
            transcript.queries_stage1 + transcript.queries_stage2


def test_solver_determinism():
    inst = make_instance("smoothed-norm", 4, 1.0, 5.0, seed=9)
    results = []
    for _ in range(2):
        p = isgo_problem(inst, 0.1, 0.5, seed=77)
        results.append(solve_sco(p, SolverConfig(seed=13)))
    a, b = results
    np.testing.assert_array_equal(a.output, b.output)
    assert a.queries_stage1 == b.queries_stage1
    assert a.queries_stage2 == b.queries_stage2
    assert a.gap == b.gap
    assert len(a.candidates) == len(b.candidates)


def test_query_accounting_matches_oracle_counter():
    inst = make_instance("quadratic", 4, 1.0, 4.0, seed=11)
    p = isgo_problem(inst, 0.1, 0.8, seed=21)
    transcript = solve_sco(p, SolverConfig(seed=3))
    assert transcript.total_queries == p.oracle.queries


def test_relabeled_subexponential_oracle():
    inst = make_instance("quadratic", 3, 1.0, 3.0, seed=2)
    oracle = NoiseSpec("subexponential", 0.3, seed=4).make_oracle(
        3, inst.subgrad)
    p = ScoProblem(3, 3.0, 1.0, 0.2, oracle, objective=inst.f,
                   f_star=inst.f_star)
    isgo, factor = ensure_isotropic(p, SolverConfig())
    assert isinstance(isgo, RelabeledIsgo)
    assert factor == 1
    assert isgo.sigma == pytest.approx(0.3 * math.log(2.0 / isgo.delta))
    transcript = solve_sco(p, SolverConfig(seed=5))
    assert transcript.gap <= 0.2


def test_converted_variance_oracle_accounting():
    inst = make_instance("quadratic", 2, 1.0, 1.0, seed=6)
    sigma_v, delta = 1e-4, 0.1
    oracle = NoiseSpec("variance", sigma_v, seed=8).make_oracle(2, inst.subgrad)
    p = ScoProblem(2, 1.0, 1.0, 0.5, oracle, objective=inst.f,
                   f_star=inst.f_star)
    cfg = SolverConfig(seed=1, conversion_delta=delta)
    isgo, factor = ensure_isotropic(p, cfg)
    assert isinstance(isgo, ConvertedIsgo)
    k = conversion_batch_size(delta)
    assert factor == k
    sample = isgo.sample_mean(np.zeros(2), 7)
    assert sample.queries_charged == 7 * k
    assert oracle.queries == 7 * k

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        transcript = solve_sco(p, cfg)
    assert transcript.conversion_factor == k
    assert transcript.total_queries % k == 0
    # solve bill excludes the 7-draw probe made above
    assert transcript.total_queries == oracle.queries - 7 * k
    assert transcript.gap <= 0.5


def test_delta_warning_when_bound_exceeded():
    inst = make_instance("quadratic", 3, 1.0, 3.0, seed=2)
    p = isgo_problem(inst, 0.05, 1.0, seed=4, delta=0.2)
    with pytest.warns(RuntimeWarning, match="validity bound"):
        solve_sco(p, SolverConfig(seed=2))


def test_delta_validity_bound_formula():
    assert delta_validity_bound(5, 1.0, 1.0, 0.01) == \
        pytest.approx(1.0 / (5 * (1e4 + 5)))


def test_sgd_zero_gradient_stays_at_origin():
    oracle = NoiseSpec("isotropic", 0.0, seed=0).make_oracle(
        3, lambda x: np.zeros(3))
    out = sgd_baseline(oracle, radius=1.0, steps=50, step_size=0.1)
    np.testing.assert_array_equal(out, np.zeros(3))
    assert oracle.queries == 50


def test_sgd_noiseless_quadratic_closed_form_average():
    # x_{t+1} = x_t - 0.5 (x_t - x_star): averaged iterate has the exact
    # closed form x_star (1 - (1 - 2^-T)/T)
    x_star = np.array([0.5, -0.25])
    oracle = NoiseSpec("isotropic", 0.0, seed=0).make_oracle(
        2, lambda x: x - x_star)
    steps = 12
    out = sgd_baseline(oracle, radius=1.0, steps=steps, step_size=0.5)
    factor = 1.0 - (1.0 - 2.0 ** -steps) / steps
    np.testing.assert_allclose(out, x_star * factor, rtol=1e-12)


def test_sgd_variance_bounded_rate():
    # T = 4 R^2 (L^2 + sigma^2)/eps^2 with step R/(G sqrt(T)) gives mean gap
    # below eps across trials
    inst = make_instance("quadratic", 3, 1.0, 1.0, seed=15)
    sigma_v, eps = 1.0, 0.2
    g_bound = math.hypot(inst.lipschitz, sigma_v)
    steps = int(math.ceil(4.0 * (inst.lipschitz ** 2 + sigma_v ** 2) / eps ** 2))
    gaps = []
    for t in range(30):
        oracle = NoiseSpec("variance", sigma_v, seed=300 + t).make_oracle(
            3, inst.subgrad)
        out = sgd_baseline(oracle, inst.radius, steps,
                           inst.radius / (g_bound * math.sqrt(steps)))
        gaps.append(inst.gap(out))
    assert np.mean(gaps) <= eps
