"""Utility scoring, availability, top-K selection, and the adaptive-K schedule."""

from __future__ import annotations

from dataclasses import dataclass

from .data import CAPACITY_RANGE, ClientProfile
from .errors import InvalidArgumentError, NoClientsError
from .rngstream import AVAILABILITY, rng_for
from .training import TrainStats

IMPROVEMENT_TOL = 0.001


@dataclass(frozen=True)
class UtilityScore:
    client_id: int
    value: float
    components: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SelectionConfig:
    k: int = 1
    alpha: float = 1.0
    gamma: float = 0.0
    adaptive: bool = False
    k_min: int = 1
    k_max: int = 1
    patience: int = 5
    utility_weights: tuple[float, float, float] = (0.5, 0.3, 0.2)
    ema_decay: float = 0.5
    policy: str = "utility"  # utility | random | full

    def __post_init__(self):
        if not 1 <= self.k_min <= self.k <= self.k_max:
            raise InvalidArgumentError("need k_min <= k <= k_max with k_min >= 1")
        if self.alpha < 0 or self.gamma < 0:
            raise InvalidArgumentError("alpha and gamma must be nonnegative")
        if any(b < 0 for b in self.utility_weights):
            raise InvalidArgumentError("utility weights must be nonnegative")
        if abs(sum(self.utility_weights) - 1.0) > 1e-9:
            raise InvalidArgumentError("utility weights must sum to 1")
        if not 0.0 <= self.ema_decay < 1.0:
            raise InvalidArgumentError("ema_decay must lie in [0, 1)")
        if self.policy not in ("utility", "random", "full"):
            raise InvalidArgumentError("policy must be utility, random, or full")


@dataclass(frozen=True)
class RoundSelection:
    round: int
    selected: frozenset[int]
    objective_value: float = 0.0


def compute_utility(
    prev: UtilityScore,
    stats: TrainStats,
    profile: ClientProfile,
    data_fraction: float,
    config: SelectionConfig,
    capacity_range: tuple[float, float] = CAPACITY_RANGE,
) -> UtilityScore:
    """EMA-smoothed weighted sum of loss improvement, data share, and capacity."""
    if stats.initial_loss > 0:
        c1 = (stats.initial_loss - stats.final_loss) / stats.initial_loss
    else:
        c1 = 0.0
    c1 = min(max(c1, 0.0), 1.0)
    c2 = min(max(data_fraction, 0.0), 1.0)
    lo, hi = capacity_range
    c3 = (profile.compute_capacity - lo) / (hi - lo) if hi > lo else 0.0
    c3 = min(max(c3, 0.0), 1.0)
    b1, b2, b3 = config.utility_weights
    raw = b1 * c1 + b2 * c2 + b3 * c3
    value = config.ema_decay * prev.value + (1.0 - config.ema_decay) * raw
    return UtilityScore(client_id=profile.client_id, value=value, components=(c1, c2, c3))


def get_available_clients(
    profiles: list[ClientProfile], round_num: int, rng_seed: int
) -> set[int]:
    """Independently include each client with its availability probability."""
    rng = rng_for(rng_seed, AVAILABILITY, round_num)
    draws = rng.random(len(profiles))
    return {p.client_id for p, u in zip(profiles, draws) if u < p.availability_prob}


def select_top_k(
    available: set[int], utilities: list[UtilityScore], k: int, round_num: int = 0
) -> RoundSelection:
    """Pick the min(k, |available|) available clients with highest utility.

    Ties break toward the lower client id.
    """
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    if not available:
        raise NoClientsError("no clients available in round %d" % round_num)
    ranked = sorted(
        (u for u in utilities if u.client_id in available),
        key=lambda u: (-u.value, u.client_id),
    )
    chosen = frozenset(u.client_id for u in ranked[: min(k, len(ranked))])
    return RoundSelection(round=round_num, selected=chosen)


def compute_cost(selected: set[int], profiles: list[ClientProfile]) -> float:
    """Sum of comm + comp cost over the selected clients."""
    by_id = {p.client_id: p for p in profiles}
    total = 0.0
    for cid in selected:
        if cid not in by_id:
            raise InvalidArgumentError("unknown client id %d" % cid)
        total += by_id[cid].comm_cost + by_id[cid].comp_cost
    return total


def compute_objective(accuracy: float, cost: float, alpha: float, gamma: float) -> float:
    """Round objective: alpha * accuracy - gamma * cost."""
    return alpha * accuracy - gamma * cost


def adapt_k(accuracy_history: list[float], config: SelectionConfig, current_k: int) -> int:
    """Grow K by one (up to k_max) after `patience` rounds without a new best.

    Identity when config.adaptive is false.
    """
    if not config.adaptive:
        return current_k
    if not config.k_min <= current_k <= config.k_max:
        raise InvalidArgumentError("current_k outside [k_min, k_max]")
    if len(accuracy_history) < config.patience:
        return current_k
    improved = False
    start = max(1, len(accuracy_history) - config.patience)
    for i in range(start, len(accuracy_history)):
        if accuracy_history[i] >= max(accuracy_history[:i]) + IMPROVEMENT_TOL:
            improved = True
            break
    if improved:
        return current_k
    return min(current_k + 1, config.k_max)
