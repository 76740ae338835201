"""Gaussian mechanism on client updates.

Sensitivity is enforced by L2 clipping; sigma follows the analytic Gaussian
mechanism sigma = clip * sqrt(2 ln(1.25/delta)) / epsilon. Noise streams are
seeded so concurrent clients stay reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import BudgetExhaustedError, InvalidArgumentError
from .rngstream import NOISE, rng_for
from .training import Gradient


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidArgumentError("epsilon must be positive")
        if not 0.0 < self.delta < 1.0:
            raise InvalidArgumentError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class NoiseScale:
    sigma: float
    clip_norm: float

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidArgumentError("sigma must be nonnegative")
        if not self.clip_norm > 0:
            raise InvalidArgumentError("clip_norm must be positive")


def calibrate_sigma(budget: PrivacyBudget, sensitivity: float) -> NoiseScale:
    """Noise standard deviation for (epsilon, delta)-DP at the given L2 sensitivity."""
    if not sensitivity > 0:
        raise InvalidArgumentError("sensitivity must be positive")
    sigma = sensitivity * math.sqrt(2.0 * math.log(1.25 / budget.delta)) / budget.epsilon
    return NoiseScale(sigma=sigma, clip_norm=sensitivity)


def clip_update(update: Gradient, clip_norm: float) -> Gradient:
    """Scale the update down to clip_norm if its L2 norm exceeds it."""
    if not clip_norm > 0:
        raise InvalidArgumentError("clip_norm must be positive")
    norm = update.norm()
    if norm <= clip_norm:
        return update
    return Gradient(update.values * (clip_norm / norm))


def add_gaussian_noise(update: Gradient, scale: NoiseScale, rng_seed: int) -> Gradient:
    """Add IID Gaussian(0, sigma^2) per coordinate from the seeded stream."""
    if scale.sigma == 0.0:
        return update
    rng = rng_for(rng_seed, NOISE)
    noise = rng.standard_normal(update.values.shape[0]) * scale.sigma
    return Gradient(update.values + noise)


def sequential_budget(per_round: PrivacyBudget, rounds: int) -> PrivacyBudget:
    """Basic sequential composition: (rounds*epsilon, rounds*delta)."""
    if rounds < 1:
        raise InvalidArgumentError("rounds must be >= 1")
    delta = rounds * per_round.delta
    if delta >= 1.0:
        raise BudgetExhaustedError(
            "composed delta %.3g >= 1 after %d rounds" % (delta, rounds)
        )
    return PrivacyBudget(epsilon=rounds * per_round.epsilon, delta=delta)
