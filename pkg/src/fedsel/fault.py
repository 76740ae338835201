"""Weibull failure model, checkpoint cost models, and the checkpoint store.

Two cost models ship side by side. The literal model t_c/T + p_f(t_c)*t_r/T
is strictly increasing in t_c (its derivative 1/T + p_f'(t_c)*t_r/T is
positive), so minimizing it always drives the interval to the domain floor;
the solver emits MonotonicCostWarning when asked to use it. The amortized
model (c_w + p_f(t_c)*(t_c/2 + t_r)) / t_c adds an explicit write cost and
expected rework, and admits an interior optimum.
"""

from __future__ import annotations

import math
import struct
import warnings
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    CheckpointCorruptionError,
    CheckpointFormatError,
    InsufficientDataError,
    InvalidArgumentError,
    NumericError,
)
from .rngstream import FAILURE, rng_for
from .training import ModelParams

CHECKPOINT_MAGIC = b"FSCK"
CHECKPOINT_VERSION = 1
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class MonotonicCostWarning(UserWarning):
    """The literal cost model has no interior minimum; optimum sits at t_min."""


@dataclass(frozen=True)
class WeibullParams:
    scale_lambda: float
    shape_k: float

    def __post_init__(self):
        if not (self.scale_lambda > 0 and self.shape_k > 0):
            raise InvalidArgumentError("Weibull scale and shape must be positive")


@dataclass(frozen=True)
class CostModelParams:
    total_time: float
    recovery_time: float
    write_cost: float

    def __post_init__(self):
        if not self.total_time > 0:
            raise InvalidArgumentError("total_time must be positive")
        if self.recovery_time < 0:
            raise InvalidArgumentError("recovery_time must be nonnegative")
        if not self.write_cost > 0:
            raise InvalidArgumentError("write_cost must be positive")


@dataclass(frozen=True)
class CheckpointPolicy:
    interval: float
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and not self.interval > 0:
            raise InvalidArgumentError("interval must be positive when enabled")


@dataclass(frozen=True)
class Checkpoint:
    round: int
    client_id: int
    params: ModelParams
    epoch_progress: int
    rng_cursor: int


def weibull_failure_prob(t_c: float, params: WeibullParams) -> float:
    """P(failure within t_c) = 1 - exp(-(t_c/lambda)^k)."""
    if t_c < 0:
        raise InvalidArgumentError("t_c must be nonnegative")
    return 1.0 - math.exp(-((t_c / params.scale_lambda) ** params.shape_k))


def sample_failure_time(params: WeibullParams, rng_seed: int) -> float:
    """Inverse-CDF draw: lambda * (-ln(1-u))^(1/k)."""
    rng = rng_for(rng_seed, FAILURE)
    u = float(rng.random())
    return params.scale_lambda * (-math.log1p(-u)) ** (1.0 / params.shape_k)


def fit_weibull(failure_times: list[float] | np.ndarray, max_iter: int = 200) -> WeibullParams:
    """Maximum-likelihood Weibull fit.

    Newton iteration on the profile-likelihood score in k, then closed-form
    lambda = (mean(t^k))^(1/k).
    """
    t = np.asarray(failure_times, dtype=np.float64)
    if t.shape[0] < 10:
        raise InsufficientDataError("need at least 10 failure times, got %d" % t.shape[0])
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise InvalidArgumentError("failure times must be positive and finite")

    ln_t = np.log(t)
    if np.ptp(ln_t) == 0.0:
        raise NumericError("all failure times identical; shape MLE diverges")

    mean_ln = float(np.mean(ln_t))
    k = 1.0
    for _ in range(max_iter):
        tk = t**k
        a = float(np.sum(tk * ln_t))
        b = float(np.sum(tk))
        score = a / b - 1.0 / k - mean_ln
        a_prime = float(np.sum(tk * ln_t * ln_t))
        deriv = a_prime / b - (a / b) ** 2 + 1.0 / (k * k)
        if deriv == 0.0 or not math.isfinite(deriv):
            raise NumericError("degenerate curvature in Weibull shape iteration")
        step = score / deriv
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2.0
        if not math.isfinite(k_new) or k_new > 1e6:
            raise NumericError("Weibull shape iteration diverged")
        if abs(k_new - k) <= 1e-8 * max(abs(k), 1.0):
            k = k_new
            lam = float(np.mean(t**k) ** (1.0 / k))
            return WeibullParams(scale_lambda=lam, shape_k=k)
        k = k_new
    raise NumericError("Weibull shape iteration failed to converge in %d steps" % max_iter)


def checkpoint_cost_paper(t_c: float, cost: CostModelParams, weibull: WeibullParams) -> float:
    """Literal interval cost t_c/T + p_f(t_c) * t_r/T."""
    if not t_c > 0:
        raise InvalidArgumentError("t_c must be positive")
    p_f = weibull_failure_prob(t_c, weibull)
    return t_c / cost.total_time + p_f * cost.recovery_time / cost.total_time


def checkpoint_cost_amortized(
    t_c: float, cost: CostModelParams, weibull: WeibullParams
) -> float:
    """Expected overhead fraction per interval: write cost plus expected
    rework (half an interval) plus recovery, amortized over the interval."""
    if not t_c > 0:
        raise InvalidArgumentError("t_c must be positive")
    p_f = weibull_failure_prob(t_c, weibull)
    return (cost.write_cost + p_f * (t_c / 2.0 + cost.recovery_time)) / t_c


def optimal_checkpoint_interval(
    cost: CostModelParams,
    weibull: WeibullParams,
    model: str = "amortized",
    domain: tuple[float, float] = (1e-3, None),
) -> CheckpointPolicy:
    """Golden-section minimization of the chosen cost model over [t_min, t_max].

    model="paper" warns (MonotonicCostWarning) because the literal cost is
    strictly increasing, so the search lands on t_min.
    """
    t_min, t_max = domain
    if t_max is None:
        t_max = cost.total_time
    if not (0 < t_min < t_max <= cost.total_time):
        raise InvalidArgumentError("domain must satisfy 0 < t_min < t_max <= T")
    if model == "paper":
        fn = checkpoint_cost_paper
        warnings.warn(
            "literal cost model is strictly increasing in t_c; "
            "optimal interval is the domain minimum %g" % t_min,
            MonotonicCostWarning,
            stacklevel=2,
        )
    elif model == "amortized":
        fn = checkpoint_cost_amortized
    else:
        raise InvalidArgumentError("model must be 'paper' or 'amortized'")

    tol = 1e-6 * (t_max - t_min)
    # The objective need not be unimodal over a wide domain (the amortized
    # model has a local maximum past its interior minimum), so bracket the
    # global minimum with a coarse scan before refining by golden section.
    scan = np.linspace(t_min, t_max, 512)
    scan_vals = [fn(t, cost, weibull) for t in scan]
    i = int(np.argmin(scan_vals))
    a = float(scan[max(i - 1, 0)])
    b = float(scan[min(i + 1, scan.shape[0] - 1)])
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc = fn(c, cost, weibull)
    fd = fn(d, cost, weibull)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c, cost, weibull)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d, cost, weibull)
    best = (a + b) / 2.0
    # Endpoints can beat the interior when the objective is monotone.
    for cand in (t_min, t_max):
        if fn(cand, cost, weibull) < fn(best, cost, weibull):
            best = cand
    return CheckpointPolicy(interval=best, enabled=True)


def checkpoint_filename(client_id: int, round_num: int) -> str:
    return "ckpt_c%d_r%d.bin" % (client_id, round_num)


def _encode_checkpoint(cp: Checkpoint) -> bytes:
    params = np.asarray(cp.params.weights, dtype="<f8")
    body = CHECKPOINT_MAGIC + struct.pack(
        "<HIIIQI",
        CHECKPOINT_VERSION,
        cp.round,
        cp.client_id,
        cp.epoch_progress,
        cp.rng_cursor,
        params.shape[0],
    )
    body += params.tobytes()
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(cp: Checkpoint, path: str) -> None:
    """Write the checkpoint in the canonical binary format (CRC32-protected)."""
    with open(path, "wb") as fh:
        fh.write(_encode_checkpoint(cp))


def load_checkpoint(path: str) -> Checkpoint:
    """Read and validate a checkpoint written by save_checkpoint."""
    with open(path, "rb") as fh:
        blob = fh.read()
    header_len = len(CHECKPOINT_MAGIC) + struct.calcsize("<HIIIQI")
    if len(blob) < header_len + 4:
        raise CheckpointFormatError("file too short to be a checkpoint")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("bad magic %r" % blob[:4])
    version, round_num, client_id, epoch_progress, rng_cursor, count = struct.unpack(
        "<HIIIQI", blob[4:header_len]
    )
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError("unsupported checkpoint version %d" % version)
    expected_len = header_len + 8 * count + 4
    if len(blob) != expected_len:
        raise CheckpointCorruptionError(
            "length %d does not match declared parameter count" % len(blob)
        )
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointCorruptionError("checksum mismatch")
    params = np.frombuffer(blob[header_len:-4], dtype="<f8").copy()
    return Checkpoint(
        round=round_num,
        client_id=client_id,
        params=ModelParams(params),
        epoch_progress=epoch_progress,
        rng_cursor=rng_cursor,
    )


def recover_without_checkpoint(global_params: ModelParams) -> ModelParams:
    """Checkpoint-free recovery: reinitialize from the latest global weights."""
    return ModelParams(global_params.weights.copy())
