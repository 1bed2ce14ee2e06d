"""Halfspace-oracle feasibility solvers and their geometric primitives.

The task: query a halfspace oracle at points of the ball B(r_prime) until the
ball intersected with all returned halfspaces {x : <g_t, x> >= <g_t, x_t>}
provably contains no ball of radius r.

Two engines are shipped.  ``ellipsoid`` maintains a minimum-volume ellipsoid
around the surviving region via central cuts; it is deterministic and needs
O(d^2 log(r_prime/r)) oracle calls.  ``hitandrun`` queries at an approximate
centroid obtained by hit-and-run sampling and charges O(d log(r_prime/r))
calls under conservative volume bookkeeping (each centroid cut removes at
least a 1/e volume fraction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, WarmStartError

_SPD_TOL = 1e-10
_DEGENERATE_EIG = 1e-12


@dataclass
class Halfspace:
    """The set {x : <normal, x> >= offset}."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float)
        self.offset = float(self.offset)
        if not np.any(self.normal):
            raise InputError("halfspace normal must be nonzero")

    def contains(self, x, tol=1e-9):
        scale = np.linalg.norm(self.normal)
        return self.normal @ np.asarray(x) >= self.offset - tol * max(scale, 1.0)


class Ellipsoid:
    """{x : (x-c)^T A^{-1} (x-c) <= 1} with A symmetric positive definite."""

    def __init__(self, center, shape):
        self.center = np.asarray(center, dtype=float)
        shape = np.asarray(shape, dtype=float)
        if not np.allclose(shape, shape.T, atol=_SPD_TOL):
            raise InputError("shape matrix must be symmetric within 1e-10")
        self.shape = 0.5 * (shape + shape.T)
        self._eigvals = None

    @classmethod
    def ball(cls, radius, d):
        return cls(np.zeros(d), radius ** 2 * np.eye(d))

    @property
    def d(self):
        return self.center.size

    def eigvals(self):
        if self._eigvals is None:
            self._eigvals = np.linalg.eigvalsh(self.shape)
        return self._eigvals

    def min_semi_axis(self):
        return math.sqrt(max(self.eigvals()[0], 0.0))

    def log_volume(self):
        # log vol = log(unit ball volume) + (1/2) log det A
        ev = np.clip(self.eigvals(), 1e-300, None)
        return _log_unit_ball_volume(self.d) + 0.5 * float(np.sum(np.log(ev)))

    def contains(self, x, tol=1e-9):
        z = np.asarray(x) - self.center
        return float(z @ np.linalg.solve(self.shape, z)) <= 1.0 + tol

    def is_degenerate(self):
        ev = self.eigvals()
        return ev[0] < _DEGENERATE_EIG * max(ev[-1], 1e-300)


def _log_unit_ball_volume(d):
    return (d / 2.0) * math.log(math.pi) - math.lgamma(d / 2.0 + 1.0)


def log_ball_volume(radius, d):
    return _log_unit_ball_volume(d) + d * math.log(radius)


def central_cut_volume_ratio(d):
    """Closed-form volume ratio of one central-cut ellipsoid update."""
    if d == 1:
        return 0.5
    return (d / (d + 1.0)) * (d * d / (d * d - 1.0)) ** ((d - 1) / 2.0)


def ellipsoid_step(ellipsoid: Ellipsoid, cut: Halfspace) -> Ellipsoid:
    """Minimum-volume ellipsoid containing E intersected with the halfspace
    {x : <cut.normal, x - center> <= 0} (the cut passes through the center).

    The cut's offset is ignored; only the normal matters for a central cut.
    """
    a = cut.normal
    c, shape = ellipsoid.center, ellipsoid.shape
    d = ellipsoid.d
    if d == 1:
        half = 0.5 * math.sqrt(shape[0, 0])
        sign = 1.0 if a[0] > 0 else -1.0
        return Ellipsoid(c - sign * half, np.array([[half * half]]))
    aa = shape @ a
    s = float(a @ aa)
    if s <= 0:
        raise InputError("cut normal lies in the ellipsoid null space")
    b = aa / math.sqrt(s)
    new_center = c - b / (d + 1.0)
    new_shape = (d * d / (d * d - 1.0)) * (shape - (2.0 / (d + 1.0)) * np.outer(b, b))
    return Ellipsoid(new_center, 0.5 * (new_shape + new_shape.T))


@dataclass
class WalkConfig:
    """Hit-and-run parameters: steps per retained sample (default 50*d),
    samples per centroid estimate, and independent chains."""

    steps: int | None = None
    samples: int = 64
    chains: int = 32

    def resolved_steps(self, d):
        return 50 * d if self.steps is None else self.steps


REASON_CERTIFIED = "certified-no-r-ball"
REASON_CAP = "iteration-cap"
REASON_ZERO_CUT = "zero-cut"
REASON_TRIVIAL = "trivial"


@dataclass
class FeasibilityTranscript:
    """Ordered record of one feasibility run."""

    points: list = field(default_factory=list)
    halfspaces: list = field(default_factory=list)
    reason: str = REASON_CAP
    oracle_calls: int = 0
    engine: str = "ellipsoid"
    ball_cuts: int = 0
    fallback: bool = False

    def flagged(self):
        return self.reason == REASON_CAP


def _chord_interval(w, u, r_prime, normals, offsets):
    """Feasible t-range of {w + t*u} within ball(r_prime) and all cuts.

    w, u: (m, d) current points and unit directions for m chains.
    Returns (lo, hi) arrays of shape (m,).
    """
    b = np.einsum("md,md->m", w, u)
    c = r_prime ** 2 - np.einsum("md,md->m", w, w)
    disc = np.sqrt(np.maximum(b * b + c, 0.0))
    lo = -b - disc
    hi = -b + disc
    if normals is not None and len(normals):
        s = u @ normals.T                      # (m, ncuts)
        margin = offsets[None, :] - w @ normals.T   # need t*s >= margin
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = margin / s
        pos = s > 1e-14
        neg = s < -1e-14
        lo_cand = np.where(pos, bound, -np.inf)
        hi_cand = np.where(neg, bound, np.inf)
        lo = np.maximum(lo, lo_cand.max(axis=1, initial=-np.inf))
        hi = np.minimum(hi, hi_cand.min(axis=1, initial=np.inf))
    return lo, hi


def _region_contains(x, r_prime, cuts, tol=1e-9):
    if np.linalg.norm(x) > r_prime * (1.0 + tol):
        return False
    return all(h.contains(x, tol) for h in cuts)


def approx_centroid(cuts, r_prime, walk: WalkConfig, rng, warm_start=None, d=None):
    """Mean of hit-and-run samples from ball(r_prime) intersected with cuts.

    The warm start must lie in the region (boundary is fine); with no cuts the
    origin is used.  Raises WarmStartError if no valid start is available.
    Returns (centroid, samples) where every retained sample is certified
    inside the region.
    """
    if d is None:
        if warm_start is not None:
            d = np.asarray(warm_start).size
        elif cuts:
            d = cuts[0].normal.size
        else:
            raise InputError("dimension is required when no cuts are given")
    if warm_start is None:
        warm_start = np.zeros(d)
    warm_start = np.asarray(warm_start, dtype=float)
    if not _region_contains(warm_start, r_prime, cuts, tol=1e-7):
        raise WarmStartError("warm start point is outside the region")

    normals = np.array([h.normal for h in cuts]) if cuts else None
    offsets = np.array([h.offset for h in cuts]) if cuts else None
    m = max(1, walk.chains)
    steps = walk.resolved_steps(d)
    rounds = max(1, math.ceil(walk.samples / m))

    w = np.tile(warm_start, (m, 1))
    collected = []
    for _ in range(rounds):
        for _ in range(steps):
            u = rng.normal(size=(m, d))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            lo, hi = _chord_interval(w, u, r_prime, normals, offsets)
            ok = hi > lo
            t = np.where(ok, rng.uniform(size=m) * (hi - lo) + lo, 0.0)
            w = w + t[:, None] * u
        collected.append(w.copy())
    samples = np.vstack(collected)[: max(walk.samples, 1)]
    for s in samples:
        if not _region_contains(s, r_prime, cuts, tol=1e-7):
            raise WarmStartError("hit-and-run sample escaped the region")
    return samples.mean(axis=0), samples


def grunbaum_call_cap(d, r_prime, r):
    """Oracle calls after which centroid cuts certify no surviving r-ball:
    each cut keeps at most a (1 - 1/e) volume fraction."""
    per_step = math.log(math.e / (math.e - 1.0))
    return int(math.floor(d * math.log(r_prime / r) / per_step)) + 1


def _certified(ellipsoid, r, log_vol_r):
    if ellipsoid.min_semi_axis() < r:
        return True
    if ellipsoid.log_volume() < log_vol_r:
        return True
    return ellipsoid.is_degenerate()


def solve_feasibility(halfspace_oracle, r_prime, r, d, engine="ellipsoid",
                      max_iters=None, walk=None, rng=None):
    """Run a cutting-plane engine against a halfspace oracle.

    halfspace_oracle : callable mapping a point of ball(r_prime) to a vector
        g; the surviving region is intersected with {x : <g, x> >= <g, x_t>}.
        A zero output ends the run immediately (reason ``zero-cut``) with the
        query point kept in the transcript.
    r_prime, r : outer ball radius and target ball radius, r_prime >= r > 0.
    d : dimension.
    engine : ``ellipsoid`` or ``hitandrun``.
    max_iters : hard cap on oracle calls; a capped run is flagged.
    walk, rng : hit-and-run parameters and random stream (hitandrun only).
    """
    if not (r_prime >= r > 0):
        raise InputError(f"need r_prime >= r > 0, got {r_prime}, {r}")
    if engine not in ("ellipsoid", "hitandrun"):
        raise InputError(f"unknown engine {engine!r}")
    if max_iters is None:
        max_iters = 8 * (d + 1) * (d + 1) * max(1, math.ceil(math.log(r_prime / r) + 1))
    if engine == "hitandrun":
        transcript = _run_hitandrun(halfspace_oracle, r_prime, r, d,
                                    max_iters, walk or WalkConfig(),
                                    rng or np.random.default_rng())
        if transcript is not None:
            return transcript
        # fall through to the ellipsoid engine, preserving the fallback mark
        fallback = True
    else:
        fallback = False
    transcript = _run_ellipsoid(halfspace_oracle, r_prime, r, d, max_iters)
    transcript.fallback = fallback
    return transcript


def _run_ellipsoid(halfspace_oracle, r_prime, r, d, max_iters):
    transcript = FeasibilityTranscript(engine="ellipsoid")
    ell = Ellipsoid.ball(r_prime, d)
    log_vol_r = log_ball_volume(r, d)
    while transcript.oracle_calls < max_iters:
        guard = 0
        while np.linalg.norm(ell.center) > r_prime * (1.0 + 1e-12):
            ell = ellipsoid_step(ell, Halfspace(ell.center.copy(), 0.0))
            transcript.ball_cuts += 1
            guard += 1
            if _certified(ell, r, log_vol_r) or guard > 400 * (d + 1):
                transcript.reason = REASON_CERTIFIED
                return transcript
        x = ell.center.copy()
        g = np.asarray(halfspace_oracle(x), dtype=float)
        transcript.oracle_calls += 1
        transcript.points.append(x)
        if not np.any(g):
            transcript.reason = REASON_ZERO_CUT
            return transcript
        transcript.halfspaces.append(Halfspace(g, float(g @ x)))
        # keep {<g, x - center> >= 0}: central cut with normal -g
        ell = ellipsoid_step(ell, Halfspace(-g, 0.0))
        if _certified(ell, r, log_vol_r):
            transcript.reason = REASON_CERTIFIED
            return transcript
    transcript.reason = REASON_CAP
    return transcript


def _run_hitandrun(halfspace_oracle, r_prime, r, d, max_iters, walk, rng):
    """Returns a transcript, or None to request an ellipsoid fallback."""
    transcript = FeasibilityTranscript(engine="hitandrun")
    cap = min(grunbaum_call_cap(d, r_prime, r), max_iters)
    cuts = []
    prev_samples = None
    x = np.zeros(d)
    while transcript.oracle_calls < cap:
        g = np.asarray(halfspace_oracle(x), dtype=float)
        transcript.oracle_calls += 1
        transcript.points.append(x.copy())
        if not np.any(g):
            transcript.reason = REASON_ZERO_CUT
            return transcript
        cuts.append(Halfspace(g, float(g @ x)))
        transcript.halfspaces.append(cuts[-1])
        if transcript.oracle_calls >= cap:
            break
        warm = _pick_warm_start(x, prev_samples, cuts, r_prime)
        try:
            if warm is None:
                raise WarmStartError("no sample satisfies the newest cut")
            x, prev_samples = approx_centroid(cuts, r_prime, walk, rng,
                                              warm_start=warm, d=d)
        except WarmStartError:
            return None
    transcript.reason = REASON_CERTIFIED if transcript.oracle_calls >= cap \
        else REASON_CAP
    return transcript


def _pick_warm_start(x_last, prev_samples, cuts, r_prime):
    """Prefer the previous sample with the largest slack in the newest cut;
    the last query point itself sits exactly on that cut and works too."""
    newest = cuts[-1]
    best = None
    if prev_samples is not None:
        slack = prev_samples @ newest.normal - newest.offset
        idx = int(np.argmax(slack))
        if slack[idx] > 0 and _region_contains(prev_samples[idx], r_prime, cuts, 1e-7):
            best = prev_samples[idx]
    if best is None and _region_contains(x_last, r_prime, cuts, 1e-7):
        best = x_last
    return best
