"""Flat key=value experiment configuration with dotted namespaces.

Example:

    data.n_clients=10
    privacy.enabled=true
    privacy.epsilon=1.0
    run.trials=5
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .data import FederatedDataset, generate_synthetic_federation, load_csv_dataset, partition_noniid
from .fault import CheckpointPolicy, CostModelParams, WeibullParams
from .orchestrator import RoundConfig
from .privacy import PrivacyBudget
from .selection import SelectionConfig


class ConfigError(Exception):
    """Invalid configuration; message names the offending field."""


def parse_config_file(path: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError("line %d: expected key=value, got %r" % (lineno, line))
            key, value = line.split("=", 1)
            pairs[key.strip()] = value.strip()
    return pairs


def _get(pairs, key, cast, default):
    if key not in pairs:
        return default
    raw = pairs[key]
    try:
        if cast is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except ValueError:
        raise ConfigError("%s: cannot parse %r as %s" % (key, raw, cast.__name__))


@dataclass
class ExperimentConfig:
    # data
    n_clients: int = 10
    samples_per_client: int = 100
    dim: int = 2
    dirichlet_alpha: float = 1.0
    csv_path: str | None = None
    label_column: str = "label"
    feature_columns: list[str] = field(default_factory=list)
    # training
    local_epochs: int = 5
    lr: float = 0.1
    batch_size: int = 0
    l2: float = 0.0
    # privacy
    dp_enabled: bool = False
    epsilon: float = 1.0
    delta: float = 1e-5
    clip_norm: float = 1.0
    per_step_noise: bool = False
    # fault tolerance
    failure_injection: bool = False
    weibull_lambda: float = 10.0
    weibull_k: float = 1.0
    checkpoint_enabled: bool = False
    checkpoint_interval: float = 1.0
    recovery_time: float = 0.1
    write_cost: float = 0.01
    cost_per_sample: float = 0.01
    # selection
    k: int = 5
    sel_alpha: float = 1.0
    sel_gamma: float = 0.0
    adaptive: bool = False
    k_min: int = 1
    k_max: int = 10
    patience: int = 5
    beta1: float = 0.5
    beta2: float = 0.3
    beta3: float = 0.2
    ema_decay: float = 0.5
    policy: str = "utility"
    # run
    max_rounds: int = 50
    convergence_tol: float = 0.001
    convergence_patience: int = 10
    trials: int = 1
    seed: int = 0
    output_dir: str = "out"
    baseline: str = "random"
    target_accuracy: float = 0.8


def load_experiment_config(path: str) -> ExperimentConfig:
    pairs = parse_config_file(path)
    cfg = ExperimentConfig()
    spec = {
        "data.n_clients": ("n_clients", int),
        "data.samples_per_client": ("samples_per_client", int),
        "data.dim": ("dim", int),
        "data.dirichlet_alpha": ("dirichlet_alpha", float),
        "data.csv_path": ("csv_path", str),
        "data.label_column": ("label_column", str),
        "train.local_epochs": ("local_epochs", int),
        "train.lr": ("lr", float),
        "train.batch_size": ("batch_size", int),
        "train.l2": ("l2", float),
        "privacy.enabled": ("dp_enabled", bool),
        "privacy.epsilon": ("epsilon", float),
        "privacy.delta": ("delta", float),
        "privacy.clip_norm": ("clip_norm", float),
        "privacy.per_step_noise": ("per_step_noise", bool),
        "fault.failure_injection": ("failure_injection", bool),
        "fault.weibull_lambda": ("weibull_lambda", float),
        "fault.weibull_k": ("weibull_k", float),
        "fault.checkpoint_enabled": ("checkpoint_enabled", bool),
        "fault.checkpoint_interval": ("checkpoint_interval", float),
        "fault.recovery_time": ("recovery_time", float),
        "fault.write_cost": ("write_cost", float),
        "fault.cost_per_sample": ("cost_per_sample", float),
        "select.k": ("k", int),
        "select.alpha": ("sel_alpha", float),
        "select.gamma": ("sel_gamma", float),
        "select.adaptive": ("adaptive", bool),
        "select.k_min": ("k_min", int),
        "select.k_max": ("k_max", int),
        "select.patience": ("patience", int),
        "select.beta1": ("beta1", float),
        "select.beta2": ("beta2", float),
        "select.beta3": ("beta3", float),
        "select.ema_decay": ("ema_decay", float),
        "select.policy": ("policy", str),
        "run.max_rounds": ("max_rounds", int),
        "run.convergence_tol": ("convergence_tol", float),
        "run.convergence_patience": ("convergence_patience", int),
        "run.trials": ("trials", int),
        "run.seed": ("seed", int),
        "run.output_dir": ("output_dir", str),
        "run.baseline": ("baseline", str),
        "run.target_accuracy": ("target_accuracy", float),
    }
    if "data.feature_columns" in pairs:
        cfg.feature_columns = [
            c.strip() for c in pairs["data.feature_columns"].split(",") if c.strip()
        ]
    for key, (attr, cast) in spec.items():
        setattr(cfg, attr, _get(pairs, key, cast, getattr(cfg, attr)))
    known = set(spec) | {"data.feature_columns"}
    unknown = set(pairs) - known
    if unknown:
        raise ConfigError("unknown key(s): %s" % ", ".join(sorted(unknown)))
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    checks = [
        (cfg.n_clients >= 1, "data.n_clients"),
        (cfg.samples_per_client >= 2, "data.samples_per_client"),
        (cfg.dim >= 1, "data.dim"),
        (cfg.dirichlet_alpha > 0, "data.dirichlet_alpha"),
        (cfg.local_epochs >= 1, "train.local_epochs"),
        (cfg.lr >= 0, "train.lr"),
        (cfg.batch_size >= 0, "train.batch_size"),
        (cfg.l2 >= 0, "train.l2"),
        (cfg.epsilon > 0, "privacy.epsilon"),
        (0 < cfg.delta < 1, "privacy.delta"),
        (cfg.clip_norm > 0, "privacy.clip_norm"),
        (cfg.weibull_lambda > 0, "fault.weibull_lambda"),
        (cfg.weibull_k > 0, "fault.weibull_k"),
        (cfg.checkpoint_interval > 0, "fault.checkpoint_interval"),
        (cfg.recovery_time >= 0, "fault.recovery_time"),
        (cfg.write_cost > 0, "fault.write_cost"),
        (cfg.cost_per_sample > 0, "fault.cost_per_sample"),
        (1 <= cfg.k_min <= cfg.k <= cfg.k_max, "select.k"),
        (cfg.sel_alpha >= 0, "select.alpha"),
        (cfg.sel_gamma >= 0, "select.gamma"),
        (cfg.patience >= 1, "select.patience"),
        (
            cfg.beta1 >= 0
            and cfg.beta2 >= 0
            and cfg.beta3 >= 0
            and abs(cfg.beta1 + cfg.beta2 + cfg.beta3 - 1.0) < 1e-9,
            "select.beta1",
        ),
        (0 <= cfg.ema_decay < 1, "select.ema_decay"),
        (cfg.policy in ("utility", "random", "full"), "select.policy"),
        (cfg.max_rounds >= 1, "run.max_rounds"),
        (cfg.trials >= 1, "run.trials"),
        (cfg.baseline in ("utility", "random", "full"), "run.baseline"),
        (0 < cfg.target_accuracy <= 1, "run.target_accuracy"),
    ]
    for ok, name in checks:
        if not ok:
            raise ConfigError("%s: value out of range" % name)


def build_federation(cfg: ExperimentConfig, seed: int) -> FederatedDataset:
    if cfg.csv_path:
        dataset = load_csv_dataset(cfg.csv_path, cfg.label_column, cfg.feature_columns)
        return partition_noniid(
            dataset, cfg.n_clients, cfg.dirichlet_alpha, seed, holdout_fraction=0.2
        )
    return generate_synthetic_federation(
        cfg.n_clients, cfg.samples_per_client, cfg.dim, cfg.dirichlet_alpha, seed
    )


def build_round_config(cfg: ExperimentConfig) -> RoundConfig:
    return RoundConfig(
        local_epochs=cfg.local_epochs,
        lr=cfg.lr,
        batch_size=cfg.batch_size,
        l2=cfg.l2,
        privacy=PrivacyBudget(cfg.epsilon, cfg.delta) if cfg.dp_enabled else None,
        clip_norm=cfg.clip_norm,
        per_step_noise=cfg.per_step_noise,
        checkpoint=CheckpointPolicy(
            interval=cfg.checkpoint_interval, enabled=cfg.checkpoint_enabled
        ),
        weibull=WeibullParams(cfg.weibull_lambda, cfg.weibull_k),
        cost=CostModelParams(
            total_time=max(cfg.max_rounds * 1.0, 1.0),
            recovery_time=cfg.recovery_time,
            write_cost=cfg.write_cost,
        ),
        failure_injection=cfg.failure_injection,
        cost_per_sample=cfg.cost_per_sample,
        max_rounds=cfg.max_rounds,
        convergence_tol=cfg.convergence_tol,
        convergence_patience=cfg.convergence_patience,
    )


def build_selection_config(cfg: ExperimentConfig, policy: str | None = None) -> SelectionConfig:
    return SelectionConfig(
        k=cfg.k,
        alpha=cfg.sel_alpha,
        gamma=cfg.sel_gamma,
        adaptive=cfg.adaptive,
        k_min=cfg.k_min,
        k_max=cfg.k_max,
        patience=cfg.patience,
        utility_weights=(cfg.beta1, cfg.beta2, cfg.beta3),
        ema_decay=cfg.ema_decay,
        policy=policy if policy is not None else cfg.policy,
    )
