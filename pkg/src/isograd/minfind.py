"""Approximate minimum finding from noisy directional derivatives.

``inexact_line_search`` bisects [0, 1] for a convex G-Lipschitz function
given derivative estimates accurate to eps/4, returning a point within eps of
the minimum.  ``best_of_two`` applies it along the segment between two points
using a direction-wise certified oracle, and ``tournament_min`` reduces a
finite candidate set to a single near-minimizer through a binary tree of such
segment searches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import InputError
from .gradest import DEFAULT_BATCH_CONSTANT, directional_deriv_estimate
from .oracles import OracleHandle


@dataclass
class LineSearchProblem:
    """A convex 1-d objective known only through approximate derivatives.

    derivative_estimator(z) must return a value within accuracy/4 of h'(z).
    lipschitz is an upper bound G on |h'|.
    """

    derivative_estimator: Callable[[float], float]
    lipschitz: float
    accuracy: float

    def __post_init__(self):
        if self.lipschitz <= 0:
            raise InputError("lipschitz bound must be positive")
        if self.accuracy <= 0:
            raise InputError("accuracy must be positive")


class LineSearchResult(NamedTuple):
    z: float
    iterations: int
    early_return: bool


def max_line_search_iterations(lipschitz, accuracy):
    if accuracy / lipschitz >= 1.0:
        return 0
    return int(math.ceil(math.log2(lipschitz / accuracy))) + 1


def inexact_line_search(problem: LineSearchProblem) -> LineSearchResult:
    """Bisection on [0, 1] driven by approximate derivative signs.

    Maintains a bracket containing a minimizer as long as the estimator
    honors its accuracy/4 contract; returns early at a midpoint whose
    estimated derivative is within accuracy/4 of zero.  Iterations never
    exceed ceil(log2(G/accuracy)) + 1, and the returned point is within
    `accuracy` of the minimum over [0, 1].
    """
    eps, lip = problem.accuracy, problem.lipschitz
    z_left, z_right = 0.0, 1.0
    iterations = 0
    while z_right - z_left > eps / lip:
        z_mid = 0.5 * (z_right + z_left)
        estimate = float(problem.derivative_estimator(z_mid))
        iterations += 1
        if abs(estimate) <= eps / 4.0:
            return LineSearchResult(z_mid, iterations, True)
        if estimate > 0:
            z_right = z_mid
        else:
            z_left = z_mid
    return LineSearchResult(z_left, iterations, False)


class SegmentSearchResult(NamedTuple):
    point: np.ndarray
    lam: float
    queries: int
    iterations: int


def best_of_two(oracle: OracleHandle, x, x_prime, accuracy, xi, lipschitz,
                batch_constant=DEFAULT_BATCH_CONSTANT) -> SegmentSearchResult:
    """Point on the segment [x, x'] whose value is within `accuracy` of the
    segment minimum, found by bisection on h(z) = f(x + z(x'-x)).

    Derivative estimates come from batched directional projections at
    per-estimate accuracy accuracy/4, with the failure budget xi split evenly
    over the worst-case iteration count.  Identical endpoints return x with
    zero queries.
    """
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if accuracy <= 0:
        raise InputError("accuracy must be positive")
    span = x_prime - x
    dist = float(np.linalg.norm(span))
    if dist == 0.0:
        return SegmentSearchResult(x.copy(), 0.0, 0, 0)
    seg_lipschitz = dist * lipschitz
    budget_slots = max(1, max_line_search_iterations(seg_lipschitz, accuracy))
    xi_step = xi / budget_slots
    queries_before = oracle.queries

    def estimator(z):
        return directional_deriv_estimate(
            oracle, x + z * span, span, accuracy / 4.0, xi_step,
            batch_constant=batch_constant)

    result = inexact_line_search(
        LineSearchProblem(estimator, seg_lipschitz, accuracy))
    lam = result.z
    assert 0.0 <= lam <= 1.0
    point = x + lam * span
    return SegmentSearchResult(point, lam, oracle.queries - queries_before,
                               result.iterations)


class TournamentResult(NamedTuple):
    point: np.ndarray
    coefficients: np.ndarray
    comparisons: int
    queries: int


def tournament_min(oracle: OracleHandle, candidates, accuracy, xi, lipschitz,
                   diameter=None,
                   batch_constant=DEFAULT_BATCH_CONSTANT) -> TournamentResult:
    """Reduce a finite candidate set to one point of its convex hull whose
    value is within `accuracy` of the set minimum.

    The set is padded to a power of two by duplicating the first candidate
    and consumed by a complete binary tree of segment searches, each at
    accuracy `accuracy`/ceil(log2 T) with failure budget xi/ceil(log2 T); a
    union bound along any root path then gives total slack `accuracy` with
    failure xi (plus the oracle's own exceedance terms).

    Returns the root point, its convex-combination weights over the input
    set, the number of segment searches, and total oracle queries.
    """
    points = [np.asarray(p, dtype=float) for p in candidates]
    n = len(points)
    if n == 0:
        raise InputError("candidate set must be nonempty")
    if n == 1:
        weights = np.ones(1)
        return TournamentResult(points[0].copy(), weights, 0, 0)
    if diameter is not None:
        arr = np.asarray(points)
        sq = np.einsum("id,id->i", arr, arr)
        max_sq = float(np.max(sq[:, None] + sq[None, :] - 2.0 * arr @ arr.T))
        if math.sqrt(max(max_sq, 0.0)) > diameter * (1.0 + 1e-9):
            raise InputError("candidate set exceeds the declared diameter")
    size = 1 << (n - 1).bit_length()
    index = list(range(n)) + [0] * (size - n)
    depth = int(math.log2(size))
    sub_accuracy = accuracy / depth
    sub_xi = xi / depth

    level = [(points[i], _unit_weight(i, n)) for i in index]
    comparisons = 0
    queries_before = oracle.queries
    while len(level) > 1:
        next_level = []
        for a, b in zip(level[0::2], level[1::2]):
            (xa, wa), (xb, wb) = a, b
            result = best_of_two(oracle, xa, xb, sub_accuracy, sub_xi,
                                 lipschitz, batch_constant=batch_constant)
            comparisons += 1
            lam = result.lam
            next_level.append((result.point, (1.0 - lam) * wa + lam * wb))
        level = next_level
    point, weights = level[0]
    total = float(weights.sum())
    assert abs(total - 1.0) <= 1e-9 and np.all(weights >= -1e-9)
    return TournamentResult(point, weights, comparisons,
                            oracle.queries - queries_before)


def _unit_weight(i, n):
    w = np.zeros(n)
    w[i] = 1.0
    return w
