"""Round loop over a simulated clock.

Each round: availability draw, client selection, per-client local training
with clipping and Gaussian noise, failure injection with checkpoint or
global-weights recovery, FedAvg aggregation over delivered updates, holdout
evaluation, utility update, and adaptive-K adjustment.

Per-client RNG streams are keyed by (run_seed, round, client_id, purpose),
so results do not depend on client scheduling order. Updates are aggregated
after a sort by client id to fix floating-point summation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import FederatedDataset
from .errors import InvalidArgumentError, NoUpdatesError
from .fault import CheckpointPolicy, CostModelParams, WeibullParams
from .privacy import (
    NoiseScale,
    PrivacyBudget,
    add_gaussian_noise,
    calibrate_sigma,
    clip_update,
    sequential_budget,
)
from .rngstream import FAILURE, NOISE, SELECTION, TRAIN, rng_for
from .selection import (
    RoundSelection,
    SelectionConfig,
    UtilityScore,
    compute_cost,
    compute_objective,
    compute_utility,
    adapt_k,
    get_available_clients,
    select_top_k,
)
from .stats import accuracy as accuracy_metric
from .stats import auc_roc
from .training import Gradient, ModelParams, evaluate, local_train

# Simulated seconds charged to a round in which no client was available.
SKIPPED_ROUND_TIME = 1.0

INITIAL_UTILITY = 1.0
MAX_RECOVERIES_PER_ROUND = 3


@dataclass(frozen=True)
class RoundConfig:
    local_epochs: int = 5
    lr: float = 0.1
    batch_size: int = 0  # 0 means full batch
    l2: float = 0.0
    privacy: PrivacyBudget | None = None
    clip_norm: float = 1.0
    per_step_noise: bool = False
    checkpoint: CheckpointPolicy = CheckpointPolicy(interval=1.0, enabled=False)
    weibull: WeibullParams = WeibullParams(scale_lambda=1e9, shape_k=1.0)
    cost: CostModelParams = CostModelParams(
        total_time=1.0, recovery_time=0.1, write_cost=0.01
    )
    failure_injection: bool = False
    cost_per_sample: float = 0.01
    max_rounds: int = 200
    convergence_tol: float = 0.001
    convergence_patience: int = 10

    def __post_init__(self):
        if self.max_rounds < 1:
            raise InvalidArgumentError("max_rounds must be >= 1")
        if self.local_epochs < 1:
            raise InvalidArgumentError("local_epochs must be >= 1")
        if not self.lr >= 0:
            raise InvalidArgumentError("lr must be nonnegative")
        if not self.cost_per_sample > 0:
            raise InvalidArgumentError("cost_per_sample must be positive")


@dataclass
class RoundRecord:
    round: int
    selected: list[int]
    k: int
    acc: float
    loss: float
    auc: float | None
    objective: float
    cost: float
    failures: int
    recoveries: int
    sim_clock: float
    skipped: bool = False


@dataclass
class RunReport:
    records: list[RoundRecord] = field(default_factory=list)
    rounds_run: int = 0
    sim_time: float = 0.0
    wall_time_sec: float = 0.0
    cumulative_epsilon: float | None = None
    converged: bool = False
    warnings: list[str] = field(default_factory=list)
    max_rounds: int = 0

    def rounds_to_target(self, target_acc: float) -> int:
        """First round whose holdout accuracy reaches the target.

        Runs that never reach it are censored at max_rounds + 1.
        """
        for rec in self.records:
            if not rec.skipped and rec.acc >= target_acc:
                return rec.round
        return self.max_rounds + 1

    def serialize(self) -> str:
        """Line-delimited round records followed by a summary object.

        Wall time is excluded so reruns with the same config and seed are
        byte-identical.
        """
        lines = []
        for rec in self.records:
            lines.append(
                json.dumps(
                    {
                        "round": rec.round,
                        "selected": rec.selected,
                        "k": rec.k,
                        "acc": rec.acc,
                        "loss": rec.loss,
                        "auc": rec.auc,
                        "objective": rec.objective,
                        "cost": rec.cost,
                        "failures": rec.failures,
                        "recoveries": rec.recoveries,
                        "sim_clock": rec.sim_clock,
                        "skipped": rec.skipped,
                    },
                    sort_keys=True,
                )
            )
        lines.append(
            json.dumps(
                {
                    "summary": {
                        "rounds_run": self.rounds_run,
                        "sim_time": self.sim_time,
                        "cumulative_epsilon": self.cumulative_epsilon,
                        "converged": self.converged,
                        "warnings": self.warnings,
                        "max_rounds": self.max_rounds,
                    }
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


@dataclass
class GlobalState:
    global_params: ModelParams
    round: int = 0
    utilities: list[UtilityScore] = field(default_factory=list)
    accuracy_history: list[float] = field(default_factory=list)
    sim_clock: float = 0.0
    rng_root: int = 0
    current_k: int = 1
    records: list[RoundRecord] = field(default_factory=list)
    failures_total: int = 0
    recoveries_total: int = 0


def aggregate(updates: list[ModelParams]) -> ModelParams:
    """Coordinate-wise mean over the updates actually received."""
    if not updates:
        raise NoUpdatesError("no updates to aggregate")
    length = len(updates[0])
    for u in updates:
        if len(u) != length:
            raise InvalidArgumentError("update length mismatch")
    acc = np.zeros(length)
    for u in updates:
        acc += u.weights
    return ModelParams(acc / len(updates))


def check_convergence(accuracy_history: list[float], tol: float, patience: int) -> bool:
    """True iff no new best (by >= tol) appeared over the last `patience` rounds."""
    if len(accuracy_history) < patience:
        return False
    start = max(1, len(accuracy_history) - patience)
    for i in range(start, len(accuracy_history)):
        if accuracy_history[i] >= max(accuracy_history[:i]) + tol:
            return False
    return True


@dataclass(frozen=True)
class _ClientOutcome:
    client_id: int
    delivered: ModelParams | None
    elapsed: float
    failures: int
    recoveries: int
    stats: object


def _run_client(
    client_id: int,
    round_num: int,
    state: GlobalState,
    fed: FederatedDataset,
    cfg: RoundConfig,
    noise: NoiseScale | None,
) -> _ClientOutcome:
    """One client's work for the round, including failures and recovery.

    Training is deterministic given (seed, round, client), so both recovery
    protocols deliver the same parameters as an uninterrupted run; failures
    only add simulated time (and can exhaust the recovery budget, in which
    case the client delivers nothing).
    """
    shard = fed.shards[client_id]
    profile = fed.profiles[client_id]
    batch = cfg.batch_size if cfg.batch_size >= 1 else shard.m
    train_seed = _client_seed(state.rng_root, round_num, client_id, TRAIN)
    per_step_sigma = noise.sigma if (noise and cfg.per_step_noise) else 0.0

    trained, stats = local_train(
        state.global_params,
        shard,
        epochs=cfg.local_epochs,
        lr=cfg.lr,
        batch_size=batch,
        l2=cfg.l2,
        rng_seed=train_seed,
        noise_sigma=per_step_sigma,
    )

    duration = cfg.local_epochs * shard.m * cfg.cost_per_sample / profile.compute_capacity
    epoch_time = duration / cfg.local_epochs
    elapsed = duration
    failures = 0
    recoveries = 0
    delivered: ModelParams | None = trained

    if cfg.failure_injection:
        elapsed = 0.0
        fail_rng = rng_for(state.rng_root, round_num, client_id, FAILURE)
        remaining = duration
        resume_epoch = 0
        while True:
            u = float(fail_rng.random())
            fail_at = cfg.weibull.scale_lambda * (-math.log1p(-u)) ** (
                1.0 / cfg.weibull.shape_k
            )
            if fail_at >= remaining:
                elapsed += remaining
                break
            failures += 1
            elapsed += fail_at
            if failures > MAX_RECOVERIES_PER_ROUND:
                delivered = None
                break
            recoveries += 1
            if cfg.checkpoint.enabled:
                done_epochs = resume_epoch + int(fail_at // epoch_time)
                ckpt_epoch = _last_checkpoint_epoch(
                    done_epochs, epoch_time, cfg.checkpoint.interval
                )
                elapsed += cfg.cost.recovery_time
                resume_epoch = ckpt_epoch
                remaining = (cfg.local_epochs - ckpt_epoch) * epoch_time
            else:
                # Reinitialize from global weights and redo the full pass;
                # no checkpoint read, so no recovery_time charge.
                resume_epoch = 0
                remaining = duration

    if delivered is not None and noise is not None and not cfg.per_step_noise:
        delta = Gradient(delivered.weights - state.global_params.weights)
        delta = clip_update(delta, noise.clip_norm)
        noise_seed = _client_seed(state.rng_root, round_num, client_id, NOISE)
        delta = add_gaussian_noise(delta, noise, noise_seed)
        delivered = ModelParams(state.global_params.weights + delta.values)

    return _ClientOutcome(client_id, delivered, elapsed, failures, recoveries, stats)


def _last_checkpoint_epoch(done_epochs: int, epoch_time: float, interval: float) -> int:
    """Latest epoch boundary at which a checkpoint was written.

    A checkpoint is taken at an epoch boundary whenever at least `interval`
    of client compute time has passed since the previous checkpoint.
    """
    stride = max(1, math.ceil(interval / epoch_time - 1e-12))
    return (done_epochs // stride) * stride


def _client_seed(root: int, round_num: int, client_id: int, purpose: int) -> int:
    # Fold the stream key into a single integer seed for module-level APIs
    # that take one; collision-resistant enough for simulation purposes.
    return ((root & 0xFFFFFFFF) << 32) ^ (round_num << 16) ^ (client_id << 4) ^ purpose


def run_round(
    state: GlobalState,
    fed: FederatedDataset,
    cfg: RoundConfig,
    sel_cfg: SelectionConfig,
) -> GlobalState:
    """Advance the federation by one communication round."""
    round_num = state.round + 1
    available = get_available_clients(fed.profiles, round_num, state.rng_root)
    noise = (
        calibrate_sigma(cfg.privacy, cfg.clip_norm) if cfg.privacy is not None else None
    )

    if not available:
        record = RoundRecord(
            round=round_num,
            selected=[],
            k=state.current_k,
            acc=float("nan"),
            loss=float("nan"),
            auc=None,
            objective=float("nan"),
            cost=0.0,
            failures=0,
            recoveries=0,
            sim_clock=state.sim_clock + SKIPPED_ROUND_TIME,
            skipped=True,
        )
        state.round = round_num
        state.sim_clock += SKIPPED_ROUND_TIME
        state.records.append(record)
        return state

    selection = _select(state, fed, sel_cfg, available, round_num)

    outcomes = [
        _run_client(cid, round_num, state, fed, cfg, noise)
        for cid in sorted(selection.selected)
    ]
    delivered = [o for o in outcomes if o.delivered is not None]
    failures = sum(o.failures for o in outcomes)
    recoveries = sum(o.recoveries for o in outcomes)

    if delivered:
        state.global_params = aggregate([o.delivered for o in delivered])

    loss, scores, labels = evaluate(state.global_params, fed.holdout)
    acc = accuracy_metric(labels, scores)
    try:
        auc = auc_roc(labels, scores)
    except Exception:
        auc = None
    cost = compute_cost(selection.selected, fed.profiles)
    objective = compute_objective(acc, cost, sel_cfg.alpha, sel_cfg.gamma)

    total_samples = sum(s.m for s in fed.shards)
    by_id = {u.client_id: u for u in state.utilities}
    for o in outcomes:
        prev = by_id[o.client_id]
        by_id[o.client_id] = compute_utility(
            prev,
            o.stats,
            fed.profiles[o.client_id],
            fed.shards[o.client_id].m / total_samples,
            sel_cfg,
        )
    state.utilities = [by_id[p.client_id] for p in fed.profiles]

    state.accuracy_history.append(acc)
    state.current_k = adapt_k(state.accuracy_history, sel_cfg, state.current_k)
    round_time = max(o.elapsed for o in outcomes)
    state.sim_clock += round_time
    state.round = round_num
    state.failures_total += failures
    state.recoveries_total += recoveries
    state.records.append(
        RoundRecord(
            round=round_num,
            selected=sorted(selection.selected),
            k=len(selection.selected),
            acc=acc,
            loss=loss,
            auc=auc,
            objective=objective,
            cost=cost,
            failures=failures,
            recoveries=recoveries,
            sim_clock=state.sim_clock,
        )
    )
    return state


def _select(
    state: GlobalState,
    fed: FederatedDataset,
    sel_cfg: SelectionConfig,
    available: set[int],
    round_num: int,
) -> RoundSelection:
    if sel_cfg.policy == "full":
        return RoundSelection(round=round_num, selected=frozenset(available))
    if sel_cfg.policy == "random":
        rng = rng_for(state.rng_root, round_num, SELECTION)
        pool = sorted(available)
        k = min(state.current_k, len(pool))
        chosen = rng.choice(len(pool), size=k, replace=False)
        return RoundSelection(
            round=round_num, selected=frozenset(pool[i] for i in chosen)
        )
    return select_top_k(available, state.utilities, state.current_k, round_num)


def initial_state(fed: FederatedDataset, sel_cfg: SelectionConfig, seed: int) -> GlobalState:
    utilities = [
        UtilityScore(client_id=p.client_id, value=INITIAL_UTILITY)
        for p in fed.profiles
    ]
    return GlobalState(
        global_params=ModelParams.zeros(fed.dim),
        utilities=utilities,
        rng_root=seed,
        current_k=min(sel_cfg.k, fed.n_clients),
    )


def run_simulation(
    fed: FederatedDataset,
    cfg: RoundConfig,
    sel_cfg: SelectionConfig,
    seed: int,
) -> RunReport:
    """Run rounds until convergence or max_rounds; deterministic per seed."""
    import time as _time

    start = _time.perf_counter()
    state = initial_state(fed, sel_cfg, seed)
    converged = False
    while state.round < cfg.max_rounds:
        state = run_round(state, fed, cfg, sel_cfg)
        if check_convergence(
            state.accuracy_history, cfg.convergence_tol, cfg.convergence_patience
        ):
            converged = True
            break

    cumulative_eps = None
    run_warnings: list[str] = []
    if cfg.privacy is not None and state.round >= 1:
        try:
            cumulative_eps = sequential_budget(cfg.privacy, state.round).epsilon
        except Exception:
            cumulative_eps = cfg.privacy.epsilon * state.round
            run_warnings.append("composed delta reached 1; epsilon reported without cap")

    return RunReport(
        records=state.records,
        rounds_run=state.round,
        sim_time=state.sim_clock,
        wall_time_sec=_time.perf_counter() - start,
        cumulative_epsilon=cumulative_eps,
        converged=converged,
        warnings=run_warnings,
        max_rounds=cfg.max_rounds,
    )
