"""Two-stage stochastic cutting-plane solver and an SGD baseline.

Stage one runs a feasibility engine whose halfspace oracle is a batched
gradient estimate, producing a candidate set containing a near-optimal point.
Stage two reduces the candidates with a tournament of noisy segment searches.
Oracles of the variance-bounded or sub-exponential classes are adapted to the
direction-wise certified interface transparently, with the conversion cost
reflected in the query accounting.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError
from .gradest import DEFAULT_BATCH_CONSTANT, MagoConfig, mago_estimate
from .geometry import (REASON_TRIVIAL, FeasibilityTranscript, WalkConfig,
                       grunbaum_call_cap, solve_feasibility)
from .minfind import tournament_min
from .oracles import (CLASS_BOUNDED, CLASS_ISOTROPIC, CLASS_SUBEXPONENTIAL,
                      CLASS_VARIANCE, DEFAULT_CONVERSION_CONSTANT,
                      GradientSample, conversion_batch_size, esgo_isgo_params,
                      vsgo_to_isgo)


@dataclass
class ScoProblem:
    """Minimize a convex L-Lipschitz f with ||argmin|| <= radius to accuracy
    eps, given a stochastic gradient oracle.  The objective itself is only
    used for evaluation on synthetic instances."""

    d: int
    lipschitz: float
    radius: float
    eps: float
    oracle: object
    objective: object = None       # callable x -> f(x), for evaluation only
    f_star: float | None = None
    x_star: np.ndarray | None = None

    def __post_init__(self):
        if min(self.lipschitz, self.radius, self.eps) <= 0:
            raise InputError("lipschitz, radius and eps must be positive")

    def gap(self, x):
        if self.objective is None or self.f_star is None:
            return None
        return float(self.objective(np.asarray(x, dtype=float))) - self.f_star


@dataclass
class SolverConfig:
    engine: str = "ellipsoid"
    xi_stage1: float = 0.1
    xi_stage2: float = 0.1
    batch_constant: float = DEFAULT_BATCH_CONSTANT
    conversion_constant: float = DEFAULT_CONVERSION_CONSTANT
    conversion_delta: float | None = None
    walk: WalkConfig = field(default_factory=WalkConfig)
    max_iters: int | None = None
    seed: int | None = None


@dataclass
class RunTranscript:
    """Everything one solver run produced, including the query bill."""

    candidates: list
    output: np.ndarray
    queries_stage1: int
    queries_stage2: int
    gap: float | None
    seed: int | None
    wall_ms: float
    feasibility: FeasibilityTranscript
    conversion_factor: int = 1
    flagged: bool = False

    @property
    def total_queries(self):
        return self.queries_stage1 + self.queries_stage2


class RelabeledIsgo:
    """A sub-exponential oracle re-certified as direction-wise bounded with
    sigma_i = sigma_e * ln(2/delta); draws pass through unchanged."""

    noise_class = CLASS_ISOTROPIC

    def __init__(self, base, delta):
        sigma_i, delta = esgo_isgo_params(base.sigma, delta)
        self.base = base
        self.d = base.d
        self.sigma = sigma_i
        self.delta = delta

    @property
    def queries(self):
        return self.base.queries

    def gradient(self, x):
        return self.base.gradient(x)

    def sample(self, x):
        return self.base.sample(x)

    def sample_mean(self, x, n):
        return self.base.sample_mean(x, n)


class ConvertedIsgo:
    """A variance-bounded oracle lifted to the direction-wise interface: each
    draw is a batched agreement vote of conversion_batch_size base draws and
    is certified as a (6*sigma_v*sqrt(d), delta) sample."""

    noise_class = CLASS_ISOTROPIC

    #: refuse conversions whose literal base-draw work would be absurd
    MAX_BASE_DRAWS = 10 ** 8

    def __init__(self, base, delta, c_k=DEFAULT_CONVERSION_CONSTANT):
        self.base = base
        self.d = base.d
        self.sigma = 6.0 * base.sigma * math.sqrt(base.d)
        self.delta = delta
        self.c_k = c_k
        self.per_draw = conversion_batch_size(delta, c_k)

    @property
    def queries(self):
        return self.base.queries

    def gradient(self, x):
        return self.base.gradient(x)

    def sample(self, x):
        return vsgo_to_isgo(self.base, self.delta, x, self.c_k)

    def sample_mean(self, x, n):
        if n * self.per_draw > self.MAX_BASE_DRAWS:
            raise ConfigurationError(
                f"converted batch of {n} draws x {self.per_draw} base queries "
                "is infeasible; lower the accuracy demands or supply an "
                "isotropic-class oracle")
        acc = np.zeros(self.d)
        flagged = False
        for _ in range(n):
            s = self.sample(x)
            acc += s.value
            flagged = flagged or s.flagged
        return GradientSample(acc / n, n * self.per_draw, flagged)


def delta_validity_bound(d, radius, sigma_i, eps, m_const=1.0):
    """Largest exceedance probability under which the two-stage guarantee is
    claimed (computed with the polylog factor set to m_const)."""
    return 1.0 / (m_const * d * (radius ** 2 * sigma_i ** 2 / eps ** 2 + d))


def ensure_isotropic(problem: ScoProblem, config: SolverConfig):
    """Adapt the problem's oracle to the direction-wise certified interface.

    Returns (oracle, conversion_factor): base queries charged per certified
    draw (1 except for variance-bounded inputs).
    """
    oracle = problem.oracle
    if oracle.noise_class == CLASS_ISOTROPIC:
        return oracle, 1
    delta = config.conversion_delta
    if oracle.noise_class == CLASS_SUBEXPONENTIAL:
        if delta is None:
            delta = _self_consistent_delta(problem, oracle.sigma)
        return RelabeledIsgo(oracle, delta), 1
    if oracle.noise_class in (CLASS_VARIANCE, CLASS_BOUNDED):
        if delta is None:
            sigma_i = 6.0 * oracle.sigma * math.sqrt(problem.d)
            delta = delta_validity_bound(problem.d, problem.radius, sigma_i,
                                         problem.eps)
        converted = ConvertedIsgo(oracle, delta, config.conversion_constant)
        return converted, converted.per_draw
    raise InputError(f"cannot adapt oracle class {oracle.noise_class!r}")


def _self_consistent_delta(problem, sigma_e):
    # sigma_i depends on delta only logarithmically; a few passes settle it,
    # and the final shrink keeps the result strictly inside the bound.
    delta = 1e-3
    for _ in range(4):
        sigma_i = sigma_e * math.log(2.0 / delta)
        delta = delta_validity_bound(problem.d, problem.radius, sigma_i,
                                     problem.eps)
    return 0.5 * delta


def planned_feasibility_cap(d, r_prime, r, engine):
    """A priori bound on oracle calls, used to split the failure budget."""
    if engine == "hitandrun":
        return grunbaum_call_cap(d, r_prime, r)
    if d == 1:
        return int(math.ceil(math.log2(r_prime / r))) + 1 if r_prime > r else 1
    return int(math.ceil(2.0 * (d + 1) * d * math.log(r_prime / r))) + 1


def candidates_stage(problem: ScoProblem, xi, engine="ellipsoid",
                     accuracy=None, config: SolverConfig | None = None,
                     rng=None):
    """Candidate set from a feasibility run whose halfspace oracle is the
    negated batched gradient estimate.

    With stage accuracy a (default eps/2) the parameters are r_prime = 2R,
    eta = a/(8 r_prime), gamma = eta*sqrt(d), r = min(a/(2L), a/(4 gamma));
    under the success event some candidate is a-optimal.  When the target
    accuracy already exceeds R*L the origin alone is returned for free, and a
    zero gradient estimate ends the run early with the query point kept.

    Returns (candidates, feasibility_transcript, queries).
    """
    config = config or SolverConfig()
    oracle = problem.oracle
    if oracle.noise_class != CLASS_ISOTROPIC:
        raise InputError("candidates_stage expects an isotropic-class oracle")
    if accuracy is None:
        accuracy = problem.eps / 2.0
    if problem.eps >= problem.radius * problem.lipschitz:
        transcript = FeasibilityTranscript(
            points=[np.zeros(problem.d)], reason=REASON_TRIVIAL,
            oracle_calls=0, engine=engine)
        return [np.zeros(problem.d)], transcript, 0

    r_prime = 2.0 * problem.radius
    eta = accuracy / (8.0 * r_prime)
    gamma = eta * math.sqrt(problem.d)
    r = min(accuracy / (2.0 * problem.lipschitz), accuracy / (4.0 * gamma))
    r = max(r, 1e-12)
    cap = planned_feasibility_cap(problem.d, r_prime, r, engine)
    cfg = MagoConfig(eta=eta, xi=xi / cap, batch_constant=config.batch_constant)

    queries_before = oracle.queries

    def halfspace(x):
        return -mago_estimate(oracle, x, cfg).value

    transcript = solve_feasibility(
        halfspace, r_prime, r, problem.d, engine=engine,
        max_iters=config.max_iters or max(cap, 1), walk=config.walk, rng=rng)
    return list(transcript.points), transcript, oracle.queries - queries_before


def solve_sco(problem: ScoProblem, config: SolverConfig | None = None) -> RunTranscript:
    """Run both stages at accuracy eps/2 each and return the transcript.

    Non-isotropic oracles are adapted first; a delta above the validity bound
    triggers a warning, not an error.
    """
    config = config or SolverConfig()
    started = time.perf_counter()
    isgo, factor = ensure_isotropic(problem, config)
    if isgo.delta is not None and isgo.delta > 0:
        bound = delta_validity_bound(problem.d, problem.radius, isgo.sigma,
                                     problem.eps)
        if isgo.delta > bound:
            warnings.warn(
                f"oracle delta={isgo.delta:.3g} exceeds the validity bound "
                f"{bound:.3g}; the success guarantee may not hold",
                RuntimeWarning, stacklevel=2)

    inner = ScoProblem(problem.d, problem.lipschitz, problem.radius,
                       problem.eps, isgo, objective=problem.objective,
                       f_star=problem.f_star, x_star=problem.x_star)
    walk_rng = np.random.default_rng(
        np.random.SeedSequence((0x15064AD, config.seed or 0)))
    candidates, feas, q1 = candidates_stage(
        inner, config.xi_stage1, engine=config.engine, config=config,
        rng=walk_rng)

    queries_before = isgo.queries
    if len(candidates) == 1:
        output = candidates[0]
        q2 = 0
    else:
        result = tournament_min(isgo, candidates, problem.eps / 2.0,
                                config.xi_stage2, problem.lipschitz,
                                diameter=4.0 * problem.radius,
                                batch_constant=config.batch_constant)
        output = result.point
        q2 = isgo.queries - queries_before

    wall_ms = 1000.0 * (time.perf_counter() - started)
    return RunTranscript(
        candidates=candidates, output=np.asarray(output, dtype=float),
        queries_stage1=q1, queries_stage2=q2, gap=problem.gap(output),
        seed=config.seed, wall_ms=wall_ms, feasibility=feas,
        conversion_factor=factor, flagged=feas.flagged())


def sgd_baseline(oracle, radius, steps, step_size):
    """Projected stochastic subgradient descent on ball(2R) from the origin,
    returning the average iterate; exactly `steps` oracle queries."""
    if steps < 1:
        raise InputError("steps must be >= 1")
    if step_size <= 0:
        raise InputError("step size must be positive")
    bound = 2.0 * radius
    x = np.zeros(oracle.d)
    total = np.zeros(oracle.d)
    for _ in range(steps):
        g = oracle.sample(x).value
        x = x - step_size * g
        norm = float(np.linalg.norm(x))
        if norm > bound:
            x *= bound / norm
        total += x
    return total / steps
