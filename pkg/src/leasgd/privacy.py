"""Gradient privatization and privacy-budget accounting.

The mechanism clips each gradient to L2 norm at most C and adds i.i.d.
gaussian noise with per-coordinate standard deviation sigma2*C.  Budgets
are tracked two ways: a log-moment accountant over integer orders 1..64
(tighter) and the classical advanced-composition bound (looser, kept for
comparison).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ValidationError

MOMENT_ORDERS = np.arange(1, 65)

# exponents above this are not representable in float64 integrals
_LOG_MOMENT_CAP = 650.0


@dataclass
class PrivacyConfig:
    clip_C: float
    sigma2: float
    delta: float
    sampling_ratio: float = 1.0

    def __post_init__(self):
        if self.clip_C <= 0:
            raise ValidationError("clip_C must be > 0")
        if self.sigma2 < 0:
            raise ValidationError("sigma2 must be >= 0")
        if not 0.0 < self.delta < 1.0:
            raise ValidationError("delta must be in (0, 1)")
        if not 0.0 < self.sampling_ratio <= 1.0:
            raise ValidationError("sampling_ratio must be in (0, 1]")

    @property
    def noise_std(self):
        """Per-coordinate standard deviation of the injected noise."""
        return self.sigma2 * self.clip_C


@dataclass
class PrivacyLedger:
    config: PrivacyConfig
    steps_taken: int = 0
    log_moments: np.ndarray = field(
        default_factory=lambda: np.zeros(len(MOMENT_ORDERS))
    )
    method: str = "moments"
    non_private: bool = False

    def to_dict(self):
        eps_m = spent_epsilon(self, self.config.delta) if self.steps_taken else 0.0
        eps_sc = (
            strong_composition_budget(
                self.config.sigma2, self.steps_taken, self.config.delta
            )[0]
            if self.steps_taken and not self.non_private
            else (math.inf if self.non_private else 0.0)
        )
        return {
            "steps": self.steps_taken,
            "sigma2": self.config.sigma2,
            "q": self.config.sampling_ratio,
            "delta": self.config.delta,
            "epsilon_moments": eps_m,
            "epsilon_strong_composition": eps_sc,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def clip_gradient(g, clip_C):
    """Rescale g to L2 norm clip_C when it is longer; direction preserved."""
    if clip_C <= 0:
        raise ValidationError("clip_C must be > 0")
    norm = float(np.linalg.norm(g))
    if norm <= clip_C:
        return g
    return g * (clip_C / norm)


def privatize_gradient(g, cfg, rng):
    """Clip, then add gaussian noise with per-coordinate std sigma2*C.

    sigma2 == 0 degrades to plain clipping and consumes no randomness.
    """
    clipped = clip_gradient(g, cfg.clip_C)
    if cfg.sigma2 == 0.0:
        return clipped
    return clipped + rng.normal(0.0, cfg.noise_std, size=g.shape)


def calibrate_sigma(epsilon, delta):
    """Noise multiplier making a single release (epsilon, delta)-private."""
    if epsilon <= 0:
        raise ValidationError("epsilon must be > 0")
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must be in (0, 1)")
    return math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def _gaussian_log_moment(order, sigma2):
    """Log-moment of one full-batch gaussian step: order*(order+1)/(2*sigma^2)."""
    return order * (order + 1) / (2.0 * sigma2 * sigma2)


def _subsampled_log_moment(order, sigma2, q):
    """Log-moment of one subsampled-gaussian step by adaptive quadrature.

    Integrates both likelihood-ratio directions against the base gaussian
    and keeps the larger one.  Orders whose moment would overflow float64
    report +inf and drop out of the epsilon minimization.
    """
    s2 = sigma2 * sigma2
    peak = (order + 1) ** 2 / (2.0 * s2)
    if peak > _LOG_MOMENT_CAP:
        return math.inf

    def log_ratio(z):
        # log of mix(z)/base(z) for base N(0, sigma^2), shifted N(1, sigma^2)
        return np.logaddexp(math.log1p(-q), math.log(q) + (2.0 * z - 1.0) / (2.0 * s2))

    def integrand_up(z):
        return math.exp(-z * z / (2.0 * s2) + (order + 1) * log_ratio(z)) / math.sqrt(
            2.0 * math.pi * s2
        )

    def integrand_down(z):
        return math.exp(-z * z / (2.0 * s2) - order * log_ratio(z)) / math.sqrt(
            2.0 * math.pi * s2
        )

    span = 40.0 * sigma2 + order + 2.0
    e_up, _ = integrate.quad(
        integrand_up, -span, span, epsabs=1e-12, epsrel=1e-12, limit=400
    )
    e_down, _ = integrate.quad(
        integrand_down, -span, span, epsabs=1e-12, epsrel=1e-12, limit=400
    )
    return math.log(max(e_up, e_down))


_step_moment_cache = {}


def single_step_log_moments(sigma2, q):
    """Per-order log-moments of one mechanism invocation."""
    if sigma2 <= 0:
        raise ValidationError("accountant requires sigma2 > 0")
    key = (float(sigma2), float(q))
    if key not in _step_moment_cache:
        if q == 1.0:
            vals = np.array(
                [_gaussian_log_moment(lam, sigma2) for lam in MOMENT_ORDERS]
            )
        else:
            vals = np.array(
                [_subsampled_log_moment(lam, sigma2, q) for lam in MOMENT_ORDERS]
            )
        _step_moment_cache[key] = vals
    return _step_moment_cache[key]


def account_step(ledger, cfg):
    """Charge one mechanism invocation per worker to the ledger."""
    if cfg.sigma2 == 0.0:
        ledger.non_private = True
        ledger.steps_taken += 1
        return ledger
    ledger.log_moments = ledger.log_moments + single_step_log_moments(
        cfg.sigma2, cfg.sampling_ratio
    )
    ledger.steps_taken += 1
    return ledger


def spent_epsilon(ledger, delta):
    """Tail-bound epsilon at ``delta``: min over orders of (moment + ln(1/delta))/order."""
    if ledger.steps_taken < 1:
        raise ValidationError("ledger has no steps")
    if ledger.non_private:
        return math.inf
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must be in (0, 1)")
    candidates = (ledger.log_moments + math.log(1.0 / delta)) / MOMENT_ORDERS
    return float(np.min(candidates))


def strong_composition_epsilon(eps0, delta0, T, delta_slack):
    """Advanced composition of T (eps0, delta0) mechanisms.

    Returns (eps_total, delta_total) with
    eps_total = eps0*sqrt(2T ln(1/delta')) + T*eps0*(e^eps0 - 1) and
    delta_total = T*delta0 + delta'.
    """
    if eps0 < 0:
        raise ValidationError("eps0 must be >= 0")
    if T < 1:
        raise ValidationError("T must be >= 1")
    if not 0.0 < delta0 < 1.0 or not 0.0 < delta_slack < 1.0:
        raise ValidationError("delta0 and delta_slack must be in (0, 1)")
    eps_total = eps0 * math.sqrt(2.0 * T * math.log(1.0 / delta_slack)) + T * eps0 * (
        math.exp(eps0) - 1.0
    )
    return eps_total, T * delta0 + delta_slack


def strong_composition_budget(sigma2, T, delta):
    """Canonical strong-composition total for T steps at overall budget delta.

    Splits delta as delta0 = delta/(2T) per step and delta' = delta/2, so the
    composed delta is exactly the requested one; the per-step epsilon inverts
    the single-release calibration for the given noise multiplier.
    """
    if sigma2 <= 0:
        raise ValidationError("sigma2 must be > 0")
    delta0 = delta / (2.0 * T)
    eps0 = math.sqrt(2.0 * math.log(1.25 / delta0)) / sigma2
    return strong_composition_epsilon(eps0, delta0, T, delta / 2.0)


def private_update(states, pairing, gradients, hp, cfg, noise_rngs, ledger=None):
    """Communication-round update with privatized gradients.

    Identical to the plain round except each worker's gradient passes through
    the clipping + noise mechanism first (the elastic difference terms are
    never noised).  Advances the per-worker ledger by one step when given.
    """
    from .optimizer import comm_round_update

    noised = [
        privatize_gradient(g, cfg, noise_rngs[i]) for i, g in enumerate(gradients)
    ]
    if ledger is not None:
        account_step(ledger, cfg)
    return comm_round_update(states, pairing, noised, hp)
