"""Synthetic convex benchmark problems with known optima.

Three controlled families (quadratic, smoothed norm, linear-plus-hinge) plus
the two-point "hard" construction whose stochastic subgradient doubles as a
certified sub-exponential oracle: its coordinate noise takes two values with
a slight probability tilt, so estimating the objective's minimizer direction
is exactly a robust mean-estimation task.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .oracles import (CLASS_SUBEXPONENTIAL, NoiseSpec, OracleHandle,
                      TwoPointNoise)


@dataclass
class TestInstance:
    """A convex objective with a known minimizer and Lipschitz bound."""

    kind: str
    d: int
    radius: float          # bound R on ||x_star||
    lipschitz: float       # bound L on gradient norms over ball(2R)
    x_star: np.ndarray
    f_star: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x_star = np.asarray(self.x_star, dtype=float)
        if np.linalg.norm(self.x_star) > self.radius * (1.0 + 1e-12):
            raise InputError("x_star must lie within the radius bound")

    def f(self, x):
        raise NotImplementedError

    def subgrad(self, x):
        raise NotImplementedError

    def gap(self, x):
        return self.f(np.asarray(x, dtype=float)) - self.f_star

    def make_oracle(self, noise: NoiseSpec) -> OracleHandle:
        return noise.make_oracle(self.d, self.subgrad)


class QuadraticInstance(TestInstance):
    """f(x) = (c/2)||x - x_star||^2.  The default curvature c = L/(3R)
    saturates the declared Lipschitz bound on ball(2R); any smaller c gives a
    gentler member of the same L-Lipschitz class."""

    def __init__(self, d, radius, lipschitz, x_star, curvature=None):
        if curvature is None:
            curvature = lipschitz / (3.0 * radius)
        if not 0 < curvature <= lipschitz / (3.0 * radius) + 1e-12:
            raise InputError("curvature must lie in (0, L/(3R)]")
        super().__init__("quadratic", d, radius, lipschitz,
                         np.asarray(x_star, dtype=float), 0.0,
                         {"curvature": curvature})

    def f(self, x):
        z = np.asarray(x, dtype=float) - self.x_star
        return 0.5 * self.params["curvature"] * float(z @ z)

    def subgrad(self, x):
        return self.params["curvature"] * (np.asarray(x, dtype=float) - self.x_star)


class SmoothedNormInstance(TestInstance):
    """f(x) = L * huber(||x - x_star||; mu): quadratic within mu of the
    optimum, linear with slope L outside."""

    def __init__(self, d, radius, lipschitz, x_star, smoothing=None):
        mu = radius / 10.0 if smoothing is None else smoothing
        super().__init__("smoothed-norm", d, radius, lipschitz,
                         np.asarray(x_star, dtype=float), 0.0,
                         {"smoothing": mu})

    def f(self, x):
        s = float(np.linalg.norm(np.asarray(x, dtype=float) - self.x_star))
        mu = self.params["smoothing"]
        if s <= mu:
            return self.lipschitz * s * s / (2.0 * mu)
        return self.lipschitz * (s - mu / 2.0)

    def subgrad(self, x):
        z = np.asarray(x, dtype=float) - self.x_star
        s = float(np.linalg.norm(z))
        mu = self.params["smoothing"]
        if s == 0.0:
            return np.zeros(self.d)
        scale = self.lipschitz * min(s / mu, 1.0) / s
        return scale * z


class LinearHingeInstance(TestInstance):
    """f(x) = -<a, x> + c * max(0, ||x|| - rho) with c > ||a||, minimized at
    rho * a/||a||."""

    def __init__(self, d, radius, a, hinge_slope, rho):
        a = np.asarray(a, dtype=float)
        a_norm = float(np.linalg.norm(a))
        if hinge_slope <= a_norm:
            raise InputError("hinge slope must exceed ||a||")
        if not 0 < rho <= radius:
            raise InputError("rho must lie in (0, R]")
        x_star = rho * a / a_norm
        super().__init__("linear-plus-hinge", d, radius, a_norm + hinge_slope,
                         x_star, -rho * a_norm,
                         {"a": a, "hinge_slope": hinge_slope, "rho": rho})

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return -float(self.params["a"] @ x) + self.params["hinge_slope"] * max(
            0.0, float(np.linalg.norm(x)) - self.params["rho"])

    def subgrad(self, x):
        x = np.asarray(x, dtype=float)
        g = -self.params["a"].copy()
        nx = float(np.linalg.norm(x))
        if nx > self.params["rho"]:
            g += self.params["hinge_slope"] * x / nx
        return g


def _place_optimum(d, radius, rng, fraction=0.7):
    u = rng.normal(size=d)
    u /= np.linalg.norm(u)
    return fraction * radius * u


def make_instance(kind, d, radius, lipschitz, seed=None, **kwargs):
    """Factory for the controlled benchmark families."""
    rng = np.random.default_rng(seed)
    if kind == "quadratic":
        x_star = kwargs.get("x_star")
        if x_star is None:
            x_star = _place_optimum(d, radius, rng)
        return QuadraticInstance(d, radius, lipschitz, x_star,
                                 kwargs.get("curvature"))
    if kind == "smoothed-norm":
        x_star = kwargs.get("x_star")
        if x_star is None:
            x_star = _place_optimum(d, radius, rng)
        return SmoothedNormInstance(d, radius, lipschitz, x_star,
                                    kwargs.get("smoothing"))
    if kind == "linear-plus-hinge":
        a = kwargs.get("a")
        if a is None:
            a = rng.normal(size=d)
            a *= 0.25 * lipschitz / np.linalg.norm(a)
        hinge = kwargs.get("hinge_slope", lipschitz - np.linalg.norm(a))
        rho = kwargs.get("rho", 0.5 * radius)
        return LinearHingeInstance(d, radius, a, hinge, rho)
    if kind == "hard":
        return make_hard_instance(d, radius, lipschitz,
                                  sigma_e=kwargs.get("sigma_e"),
                                  eps_tilde=kwargs.get("eps_tilde"),
                                  eps=kwargs.get("eps"), seed=seed,
                                  v=kwargs.get("v"))
    raise InputError(f"unknown instance kind {kind!r}")


def verify_lipschitz(instance, n_points=10_000, seed=0, slack=1e-9):
    """Sampled check that subgradient norms stay below L on ball(2R)."""
    rng = np.random.default_rng(seed)
    for _ in range(n_points):
        z = rng.normal(size=instance.d)
        z /= np.linalg.norm(z)
        x = z * rng.uniform() ** (1.0 / instance.d) * 2.0 * instance.radius
        if np.linalg.norm(instance.subgrad(x)) > instance.lipschitz + slack:
            return False
    return True


# ---------------------------------------------------------------------------
# Two-point hard construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HardInstance:
    """Tilted two-point coordinate noise wrapped in a ball-hinged objective.

    Each coordinate of the noise vector X equals +v_i*sigma_e/(2 sqrt(d))
    with probability 1/2 + p and the negative otherwise, where
    p = 8*eps_tilde*sqrt(ln d)/sigma_e.  The objective
        f(x) = -<x, E[X]>/3 + (2L/3) max(0, ||x|| - R/2)
    is minimized at (R/2) * E[X]/||E[X]||, and the stochastic subgradient
        g_X(x) = -X/3 + (2L/3) 1{||x|| > R/2} x/||x||
    is an unbiased subgradient estimate with sub-exponential marginals of
    scale sigma_e.
    """

    v: np.ndarray
    sigma_e: float
    eps_tilde: float
    radius: float
    lipschitz: float

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.v.ndim != 1 or self.v.size < 2:
            raise InputError("sign vector must be 1-d with d >= 2")
        if not np.all(np.abs(self.v) == 1.0):
            raise InputError("sign vector entries must be +-1")
        if self.sigma_e <= 0 or self.eps_tilde < 0:
            raise InputError("sigma_e must be positive and eps_tilde nonnegative")
        if self.p > 0.25 + 1e-12:
            raise InputError(
                f"flip probability p={self.p:.4f} exceeds 1/4; decrease "
                "eps_tilde or increase sigma_e")
        if self.sigma_e / (2.0 * math.sqrt(self.d)) > self.lipschitz:
            raise InputError("need sigma_e/(2 sqrt(d)) <= L")
        if self.mean_norm > self.lipschitz:
            raise InputError("need ||E[X]|| <= L")

    @property
    def d(self):
        return self.v.size

    @property
    def p(self):
        return 8.0 * self.eps_tilde * math.sqrt(math.log(self.d)) / self.sigma_e

    @property
    def coord_scale(self):
        return self.sigma_e / (2.0 * math.sqrt(self.d))

    @property
    def mean(self):
        """Exact E[X] = v * sigma_e * p / sqrt(d) from the two-point law."""
        return self.v * (self.sigma_e * self.p / math.sqrt(self.d))

    @property
    def mean_norm(self):
        return self.sigma_e * self.p

    @property
    def mean_norm_nominal(self):
        """The 4*eps_tilde*sqrt(ln d) value quoted alongside the exact
        8*eps_tilde*sqrt(ln d); both are recorded, the exact one is used."""
        return 4.0 * self.eps_tilde * math.sqrt(math.log(self.d))

    @property
    def degenerate(self):
        """p = 0 flattens the objective on the whole inner ball; the reported
        minimizer is then the origin by convention."""
        return self.mean_norm == 0.0

    @property
    def direction(self):
        if self.degenerate:
            return np.zeros(self.d)
        return self.mean / self.mean_norm

    @property
    def x_star(self):
        return 0.5 * self.radius * self.direction

    @property
    def f_star(self):
        return -self.radius * self.mean_norm / 6.0

    def f(self, x):
        return hard_objective(x, self)

    def subgrad(self, x):
        """Exact subgradient of the averaged objective."""
        x = np.asarray(x, dtype=float)
        g = -self.mean / 3.0
        nx = float(np.linalg.norm(x))
        if nx > 0.5 * self.radius:
            g = g + (2.0 * self.lipschitz / 3.0) * x / nx
        return g

    def gap(self, x):
        return self.f(x) - self.f_star

    def make_oracle(self, seed=None) -> OracleHandle:
        """The intrinsic stochastic subgradient oracle: exact subgradient
        plus the centered two-point noise -(X - E[X])/3."""
        noise = TwoPointNoise(self.v, self.coord_scale, self.p, coeff=-1.0 / 3.0)
        return OracleHandle(self.d, CLASS_SUBEXPONENTIAL, self.sigma_e,
                            self.subgrad, seed=seed, noise=noise)


def make_hard_instance(d, radius, lipschitz, sigma_e=None, eps_tilde=None,
                       eps=None, seed=None, v=None):
    """Build a hard instance; fixes eps_tilde = 48*eps*sqrt(ln d)/R when an
    optimization accuracy eps is given, and picks sigma_e for p = 1/4 when
    left unspecified."""
    if d < 2:
        raise InputError("hard instance requires d >= 2")
    if v is None:
        rng = np.random.default_rng(seed)
        v = np.where(rng.uniform(size=d) < 0.5, -1.0, 1.0)
    if eps_tilde is None:
        if eps is None:
            raise InputError("give either eps_tilde or eps")
        eps_tilde = 48.0 * eps * math.sqrt(math.log(d)) / radius
    if sigma_e is None:
        sigma_e = 32.0 * eps_tilde * math.sqrt(math.log(d))
    return HardInstance(np.asarray(v, dtype=float), float(sigma_e),
                        float(eps_tilde), float(radius), float(lipschitz))


def sample_hard_X(instance: HardInstance, rng, n=None):
    """Draw the raw two-point vector(s) X."""
    size = (1, instance.d) if n is None else (n, instance.d)
    signs = np.where(rng.uniform(size=size) < 0.5 + instance.p, 1.0, -1.0)
    x = instance.coord_scale * signs * instance.v
    return x[0] if n is None else x


def hard_subgradient(x, x_draw, instance: HardInstance):
    """Stochastic subgradient -X/3 + (2L/3) 1{||x|| > R/2} x/||x||.

    The indicator is strict, so it is off exactly at ||x|| = R/2.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InputError("query point must be finite")
    g = -np.asarray(x_draw, dtype=float) / 3.0
    nx = float(np.linalg.norm(x))
    if nx > 0.5 * instance.radius:
        g = g + (2.0 * instance.lipschitz / 3.0) * x / nx
    return g


def hard_objective(x, instance: HardInstance):
    """Averaged objective -<x, E[X]>/3 + (2L/3) max(0, ||x|| - R/2) using the
    exact two-point expectation."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InputError("query point must be finite")
    hinge = max(0.0, float(np.linalg.norm(x)) - 0.5 * instance.radius)
    return -float(x @ instance.mean) / 3.0 \
        + (2.0 * instance.lipschitz / 3.0) * hinge
