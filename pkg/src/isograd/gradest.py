"""Mini-batched gradient estimation from a direction-wise certified oracle.

``mago_estimate`` averages enough oracle draws that the error is at most
eta in every fixed direction chosen independently of the draws (and hence at
most eta*sqrt(d) in l2 norm), without ever seeing the direction.
``directional_deriv_estimate`` is the cheaper single-direction variant used
by the line search: it only certifies the error of one inner product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError
from .oracles import CLASS_ISOTROPIC, GradientSample, OracleHandle

#: Hoeffding constant for marginals bounded by sigma_I/sqrt(d).
DEFAULT_BATCH_CONSTANT = 2.0

#: refuse full-gradient batch sizes past this point.
BATCH_OVERFLOW = 10 ** 9

#: single-direction batches may be far larger: oracles with closed-form mean
#: distributions sample them in O(d) regardless of the charge.
DIRECTIONAL_BATCH_OVERFLOW = 10 ** 14


@dataclass
class MagoConfig:
    """Accuracy/failure budget for one batched gradient estimate.

    eta is the per-direction accuracy; the l2 accuracy is coupled to it as
    gamma = eta*sqrt(d) (or infinity for the single-direction variant).
    """

    eta: float
    xi: float
    gamma: float | None = None
    batch_constant: float = DEFAULT_BATCH_CONSTANT

    def __post_init__(self):
        if self.eta <= 0:
            raise InputError(f"eta must be positive, got {self.eta}")
        if not 0.0 < self.xi < 1.0:
            raise InputError(f"xi must be in (0,1), got {self.xi}")
        if self.batch_constant <= 0:
            raise InputError("batch_constant must be positive")

    def resolved_gamma(self, d):
        """The l2 accuracy coupled to eta; a finite user-supplied gamma must
        agree with eta*sqrt(d) (infinity selects the single-direction mode)."""
        coupled = self.eta * math.sqrt(d)
        if self.gamma is None:
            return coupled
        if math.isfinite(self.gamma) and not math.isclose(self.gamma, coupled,
                                                          rel_tol=1e-9):
            raise InputError(
                f"gamma={self.gamma} breaks the eta*sqrt(d)={coupled} coupling")
        return self.gamma


def _require_isotropic(oracle):
    if oracle.noise_class != CLASS_ISOTROPIC:
        raise InputError(
            f"estimator requires an isotropic-class oracle, got {oracle.noise_class!r}")


def _checked_batch(raw, context, cap=BATCH_OVERFLOW):
    k = int(math.ceil(raw)) + 1
    if k > cap:
        raise ConfigurationError(
            f"batch size {k} exceeds {cap} for {context}")
    return k


def mago_batch_size(sigma_i, d, eta, xi, batch_constant=DEFAULT_BATCH_CONSTANT):
    """K = ceil(c * sigma_I^2/(d*eta^2) * ln(2d/xi)) + 1."""
    raw = batch_constant * (sigma_i ** 2 / (d * eta ** 2)) * math.log(2.0 * d / xi)
    return _checked_batch(raw, f"sigma_i={sigma_i}, d={d}, eta={eta}, xi={xi}")


def mago_estimate(oracle: OracleHandle, x, cfg: MagoConfig) -> GradientSample:
    """Average K oracle draws at x so that, with probability at least
    1 - xi - delta*d*K, the error is <= eta along every pre-fixed unit
    direction and <= eta*sqrt(d) in l2 norm."""
    _require_isotropic(oracle)
    cfg.resolved_gamma(oracle.d)
    k = mago_batch_size(oracle.sigma, oracle.d, cfg.eta, cfg.xi,
                        cfg.batch_constant)
    return oracle.sample_mean(x, k)


def directional_batch_size(sigma_i, d, dir_norm, gamma, xi,
                           batch_constant=DEFAULT_BATCH_CONSTANT):
    """K = ceil(c * sigma_I^2*||dir||^2/(d*gamma^2) * ln(2/xi)) + 1.

    Depends on dir only through ||dir||/gamma, so rescaling both leaves K
    unchanged.
    """
    raw = batch_constant * (sigma_i ** 2 * dir_norm ** 2 / (d * gamma ** 2)) \
        * math.log(2.0 / xi)
    return _checked_batch(
        raw,
        f"sigma_i={sigma_i}, d={d}, dir_norm={dir_norm}, gamma={gamma}, xi={xi}",
        cap=DIRECTIONAL_BATCH_OVERFLOW)


def directional_deriv_estimate(oracle: OracleHandle, x, direction, gamma, xi,
                               batch_constant=DEFAULT_BATCH_CONSTANT) -> float:
    """Estimate <grad f(x), direction> to within gamma with probability at
    least 1 - xi - delta*K, by averaging K draws and projecting."""
    _require_isotropic(oracle)
    direction = np.asarray(direction, dtype=float)
    dir_norm = float(np.linalg.norm(direction))
    if dir_norm == 0.0:
        raise InputError("direction must be nonzero")
    if gamma <= 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    if not 0.0 < xi < 1.0:
        raise InputError(f"xi must be in (0,1), got {xi}")
    k = directional_batch_size(oracle.sigma, oracle.d, dir_norm, gamma, xi,
                               batch_constant)
    zbar = oracle.sample_mean(x, k)
    return float(zbar.value @ direction)
