"""Synthetic non-IID federated datasets and CSV ingestion.

Shards are produced either by generating label-conditioned Gaussian clusters
per client (class proportions drawn from a symmetric Dirichlet) or by
partitioning an externally loaded dataset. Client resource profiles are drawn
from seeded uniform ranges.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidArgumentError,
    ParseError,
    SchemaError,
    UnsupportedLabelError,
)
from .rngstream import DATA, PROFILE, rng_for

# Seeded heterogeneity ranges for client resource profiles.
COMM_COST_RANGE = (0.5, 2.0)
COMP_COST_RANGE = (0.5, 2.0)
CAPACITY_RANGE = (0.5, 2.0)
AVAILABILITY_RANGE = (0.7, 1.0)

HOLDOUT_FRACTION = 0.2


@dataclass(frozen=True)
class Dataset:
    """Labeled feature rows: an (m, d) float matrix and m binary labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2:
            raise InvalidArgumentError("features must be a 2-D matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise InvalidArgumentError(
                "feature row count %d != label count %d"
                % (self.features.shape[0], self.labels.shape[0])
            )
        if self.features.shape[1] < 1:
            raise InvalidArgumentError("need at least one feature column")
        if not np.all(np.isfinite(self.features)):
            raise InvalidArgumentError("features contain non-finite values")
        self.features.flags.writeable = False
        self.labels.flags.writeable = False

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ClientProfile:
    """Per-client resource costs and availability."""

    client_id: int
    comm_cost: float
    comp_cost: float
    compute_capacity: float
    availability_prob: float

    def __post_init__(self):
        if self.client_id < 0:
            raise InvalidArgumentError("client_id must be >= 0")
        if self.comm_cost < 0 or self.comp_cost < 0:
            raise InvalidArgumentError("costs must be nonnegative")
        if self.compute_capacity <= 0:
            raise InvalidArgumentError("compute_capacity must be positive")
        if not 0.0 <= self.availability_prob <= 1.0:
            raise InvalidArgumentError("availability_prob must lie in [0, 1]")


@dataclass(frozen=True)
class FederatedDataset:
    """Per-client shards plus profiles and a global holdout split."""

    shards: list[Dataset]
    profiles: list[ClientProfile]
    holdout: Dataset

    def __post_init__(self):
        if len(self.shards) != len(self.profiles):
            raise InvalidArgumentError("shard/profile count mismatch")
        if len(self.shards) < 1:
            raise InvalidArgumentError("need at least one client")
        ids = [p.client_id for p in self.profiles]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("client ids must be unique")

    @property
    def n_clients(self) -> int:
        return len(self.shards)

    @property
    def dim(self) -> int:
        return self.shards[0].d


def _make_profiles(n_clients: int, seed: int) -> list[ClientProfile]:
    rng = rng_for(seed, PROFILE)
    profiles = []
    for cid in range(n_clients):
        profiles.append(
            ClientProfile(
                client_id=cid,
                comm_cost=float(rng.uniform(*COMM_COST_RANGE)),
                comp_cost=float(rng.uniform(*COMP_COST_RANGE)),
                compute_capacity=float(rng.uniform(*CAPACITY_RANGE)),
                availability_prob=float(rng.uniform(*AVAILABILITY_RANGE)),
            )
        )
    return profiles


def _gaussian_task(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Random unit direction; class means sit at +u and -u."""
    u = rng.standard_normal(dim)
    norm = np.linalg.norm(u)
    if norm == 0.0:
        u = np.zeros(dim)
        u[0] = 1.0
        return u
    return u / norm


def _sample_rows(
    rng: np.random.Generator, direction: np.ndarray, n_pos: int, n_neg: int
) -> Dataset:
    dim = direction.shape[0]
    labels = np.concatenate([np.ones(n_pos, dtype=np.int64), np.zeros(n_neg, dtype=np.int64)])
    means = np.where(labels[:, None] == 1, direction[None, :], -direction[None, :])
    features = means + rng.standard_normal((n_pos + n_neg, dim))
    order = rng.permutation(n_pos + n_neg)
    return Dataset(features[order].copy(), labels[order].copy())


def generate_synthetic_federation(
    n_clients: int,
    samples_per_client: int,
    dim: int,
    dirichlet_alpha: float,
    seed: int,
) -> FederatedDataset:
    """Generate a seeded synthetic federation of binary-classification shards.

    Per-client class proportions come from a symmetric Dirichlet(alpha);
    features are unit-covariance Gaussians around +/-1 along a random unit
    direction. The holdout is 20% of the shard total, drawn IID at the
    balanced global class fraction.
    """
    if n_clients < 1:
        raise InvalidArgumentError("n_clients must be >= 1")
    if samples_per_client < 2:
        raise InvalidArgumentError("samples_per_client must be >= 2")
    if dim < 1:
        raise InvalidArgumentError("dim must be >= 1")
    if not dirichlet_alpha > 0:
        raise InvalidArgumentError("dirichlet_alpha must be positive")

    rng = rng_for(seed, DATA)
    direction = _gaussian_task(rng, dim)

    shards = []
    for _ in range(n_clients):
        p1 = float(rng.dirichlet([dirichlet_alpha, dirichlet_alpha])[1])
        n_pos = int(round(p1 * samples_per_client))
        n_pos = min(max(n_pos, 0), samples_per_client)
        shards.append(_sample_rows(rng, direction, n_pos, samples_per_client - n_pos))

    holdout_m = max(2, int(round(HOLDOUT_FRACTION * n_clients * samples_per_client)))
    n_pos = holdout_m // 2
    holdout = _sample_rows(rng, direction, n_pos, holdout_m - n_pos)

    return FederatedDataset(shards, _make_profiles(n_clients, seed), holdout)


def load_csv_dataset(
    path: str, label_column: str, feature_columns: list[str]
) -> Dataset:
    """Load a labeled dataset from a headered CSV file.

    Labels are mapped to {0, 1} with the lexicographically smaller raw value
    becoming 0. Row order is preserved.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in [label_column, *feature_columns]:
            if col not in header:
                raise SchemaError("missing column %r" % col)
        raw_labels: list[str] = []
        rows: list[list[float]] = []
        for idx, record in enumerate(reader):
            vals = []
            for col in feature_columns:
                try:
                    v = float(record[col])
                except (TypeError, ValueError):
                    raise ParseError("unparseable cell in column %r at row %d" % (col, idx))
                if not math.isfinite(v):
                    raise ParseError("non-finite cell in column %r at row %d" % (col, idx))
                vals.append(v)
            rows.append(vals)
            raw_labels.append(record[label_column])

    distinct = sorted(set(raw_labels))
    if len(distinct) != 2:
        raise UnsupportedLabelError(
            "label column %r has %d distinct values; need exactly 2"
            % (label_column, len(distinct))
        )
    mapping = {distinct[0]: 0, distinct[1]: 1}
    labels = np.array([mapping[v] for v in raw_labels], dtype=np.int64)
    return Dataset(np.array(rows, dtype=np.float64), labels)


def partition_noniid(
    dataset: Dataset,
    n_clients: int,
    dirichlet_alpha: float,
    seed: int,
    holdout_fraction: float = 0.0,
) -> FederatedDataset:
    """Partition an existing dataset into Dirichlet-skewed client shards.

    With holdout_fraction=0 (the default) every source row lands in exactly
    one shard. A positive fraction carves a seeded IID holdout first and
    partitions the remainder.
    """
    if not dirichlet_alpha > 0:
        raise InvalidArgumentError("dirichlet_alpha must be positive")
    if n_clients < 1 or n_clients > dataset.m:
        raise InvalidArgumentError(
            "n_clients must lie in [1, %d], got %d" % (dataset.m, n_clients)
        )
    if not 0.0 <= holdout_fraction < 1.0:
        raise InvalidArgumentError("holdout_fraction must lie in [0, 1)")

    rng = rng_for(seed, DATA)
    all_idx = rng.permutation(dataset.m)
    n_holdout = int(round(holdout_fraction * dataset.m))
    holdout_idx = np.sort(all_idx[:n_holdout])
    pool_idx = all_idx[n_holdout:]
    if pool_idx.shape[0] < n_clients:
        raise InvalidArgumentError("too few rows left after holdout split")

    # Split each class's rows across clients by Dirichlet proportions.
    assignments: list[list[int]] = [[] for _ in range(n_clients)]
    for cls in (0, 1):
        cls_idx = pool_idx[dataset.labels[pool_idx] == cls]
        cls_idx = rng.permutation(cls_idx)
        props = rng.dirichlet(np.full(n_clients, dirichlet_alpha))
        cuts = np.floor(np.cumsum(props) * cls_idx.shape[0] + 0.5).astype(int)
        cuts[-1] = cls_idx.shape[0]
        start = 0
        for cid, stop in enumerate(cuts):
            assignments[cid].extend(cls_idx[start:stop].tolist())
            start = stop

    shards = []
    for rows in assignments:
        rows_arr = np.sort(np.array(rows, dtype=np.int64))
        shards.append(
            Dataset(dataset.features[rows_arr].copy(), dataset.labels[rows_arr].copy())
        )

    holdout = Dataset(
        dataset.features[holdout_idx].copy(), dataset.labels[holdout_idx].copy()
    ) if n_holdout else Dataset(np.zeros((0, dataset.d)), np.zeros(0, dtype=np.int64))

    return FederatedDataset(shards, _make_profiles(n_clients, seed), holdout)
