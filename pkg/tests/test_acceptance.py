"""Acceptance suite: one test per release criterion.

Each test prints a single "ACCEPTANCE n: PASS" line (bypassing capture) so a
plain pytest run yields one line per criterion, and asserts its runtime
budget. All experiments are fully seeded, so every number here is
reproducible bit for bit.
"""

import json
import math
import os
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from fedsel.cli import main as cli_main
from fedsel.data import (
    ClientProfile,
    Dataset,
    FederatedDataset,
    generate_synthetic_federation,
)
from fedsel.errors import CheckpointCorruptionError, CheckpointFormatError
from fedsel.fault import (
    Checkpoint,
    CheckpointPolicy,
    CostModelParams,
    MonotonicCostWarning,
    WeibullParams,
    load_checkpoint,
    optimal_checkpoint_interval,
    save_checkpoint,
)
from fedsel.orchestrator import (
    RoundConfig,
    _client_seed,
    initial_state,
    run_round,
    run_simulation,
)
from fedsel.privacy import Gradient, PrivacyBudget, add_gaussian_noise, calibrate_sigma
from fedsel.rngstream import TRAIN
from fedsel.selection import SelectionConfig
from fedsel.stats import mann_whitney_u
from fedsel.training import ModelParams, compute_gradient, local_train, logistic_loss


def announce(capsys, line):
    with capsys.disabled():
        print(line, flush=True)


def always_available(fed):
    profiles = [
        ClientProfile(p.client_id, p.comm_cost, p.comp_cost, p.compute_capacity, 1.0)
        for p in fed.profiles
    ]
    return FederatedDataset(fed.shards, profiles, fed.holdout)


def pooled(shards):
    return Dataset(
        np.vstack([s.features for s in shards]),
        np.concatenate([s.labels for s in shards]),
    )


def test_01_fedavg_oracle_equivalence(capsys):
    start = time.perf_counter()
    fed = always_available(generate_synthetic_federation(10, 50, 2, 1.0, seed=3))
    cfg = RoundConfig(local_epochs=3, lr=0.1, max_rounds=20)
    sel = SelectionConfig(k=10, k_max=10)
    seed = 17
    state = initial_state(fed, sel, seed)
    reference = np.zeros(fed.dim + 1)
    for round_num in range(1, 21):
        state = run_round(state, fed, cfg, sel)
        acc = np.zeros(fed.dim + 1)
        for cid in range(fed.n_clients):
            trained, _ = local_train(
                ModelParams(reference.copy()),
                fed.shards[cid],
                epochs=cfg.local_epochs,
                lr=cfg.lr,
                batch_size=fed.shards[cid].m,
                l2=cfg.l2,
                rng_seed=_client_seed(seed, round_num, cid, TRAIN),
            )
            acc += trained.weights
        reference = acc / fed.n_clients
        np.testing.assert_array_equal(state.global_params.weights, reference)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    announce(capsys, "ACCEPTANCE 1: PASS (20 rounds bit-identical to reference FedAvg, %.1fs)" % elapsed)


def test_02_convergence_vs_centralized_oracle(capsys):
    start = time.perf_counter()
    fed = always_available(generate_synthetic_federation(40, 50, 2, 1.0, seed=0))
    cfg = RoundConfig(
        local_epochs=5, lr=0.1, max_rounds=200, convergence_patience=200
    )
    report = run_simulation(fed, cfg, SelectionConfig(k=40, k_max=40), 0)

    data = pooled(fed.shards)
    w = ModelParams.zeros(data.d)
    for _ in range(5000):
        w = ModelParams(w.weights - 0.5 * compute_gradient(w, data).values)
    oracle_loss = logistic_loss(w, fed.holdout)
    ratio = report.records[-1].loss / oracle_loss
    assert ratio <= 1.05
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    announce(capsys, "ACCEPTANCE 2: PASS (federated/oracle holdout loss ratio %.4f, %.1fs)" % (ratio, elapsed))


def test_03_epsilon_accuracy_trend(capsys):
    start = time.perf_counter()
    fed = always_available(generate_synthetic_federation(8, 50, 2, 1.0, seed=0))
    epsilons = [0.1, 0.5, 1.0, 5.0, 10.0]
    mean_accs = []
    mean_losses = []
    for eps in epsilons:
        cfg = RoundConfig(
            local_epochs=2,
            lr=0.1,
            privacy=PrivacyBudget(epsilon=eps, delta=1e-5),
            clip_norm=0.5,
            max_rounds=30,
            convergence_patience=30,
        )
        finals = [
            run_simulation(fed, cfg, SelectionConfig(k=8, k_max=8), seed).records[-1]
            for seed in range(10)
        ]
        mean_accs.append(float(np.mean([r.acc for r in finals])))
        mean_losses.append(float(np.mean([r.loss for r in finals])))
    rho_acc = spearmanr(epsilons, mean_accs).statistic
    rho_loss = spearmanr(epsilons, mean_losses).statistic
    assert rho_acc >= 0.8
    assert rho_loss <= -0.8
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0
    announce(
        capsys,
        "ACCEPTANCE 3: PASS (Spearman acc=%.2f loss=%.2f over eps sweep, %.1fs)"
        % (rho_acc, rho_loss, elapsed),
    )


def test_04_fault_tolerance_value(capsys):
    start = time.perf_counter()
    fed = always_available(generate_synthetic_federation(10, 50, 2, 1.0, seed=1))
    durations = [
        5 * s.m * 0.01 / p.compute_capacity for s, p in zip(fed.shards, fed.profiles)
    ]
    # Scale chosen so roughly 20% of client-rounds hit a failure.
    lam = float(np.mean(durations)) / (-math.log(0.8))
    sel = SelectionConfig(k=10, k_max=10)
    common = dict(local_epochs=5, lr=0.1, max_rounds=40, convergence_patience=40)
    cost = CostModelParams(total_time=100.0, recovery_time=0.05, write_cost=0.01)
    weibull = WeibullParams(scale_lambda=lam, shape_k=1.0)

    def time_to(report, target):
        for rec in report.records:
            if not rec.skipped and rec.acc >= target:
                return rec.sim_clock
        return None

    direction_ok = 0
    ratios = []
    acc_drops = []
    for seed in range(10):
        clean = run_simulation(fed, RoundConfig(**common), sel, seed)
        target = clean.records[-1].acc - 0.01
        ckpt = run_simulation(
            fed,
            RoundConfig(
                failure_injection=True,
                weibull=weibull,
                cost=cost,
                checkpoint=CheckpointPolicy(interval=0.05, enabled=True),
                **common,
            ),
            sel,
            seed,
        )
        bare = run_simulation(
            fed,
            RoundConfig(failure_injection=True, weibull=weibull, cost=cost, **common),
            sel,
            seed,
        )
        acc_drops.append(target - ckpt.records[-1].acc)
        t_ckpt = time_to(ckpt, target)
        t_bare = time_to(bare, target)
        assert t_ckpt is not None and t_bare is not None
        if t_ckpt <= t_bare:
            direction_ok += 1
        ratios.append(t_bare / t_ckpt)

    mean_ratio = float(np.mean(ratios))
    assert max(acc_drops) <= 0.0  # checkpointed runs reach the target
    assert direction_ok >= 8
    assert mean_ratio >= 1.1
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0
    announce(
        capsys,
        "ACCEPTANCE 4: PASS (direction %d/10, mean time ratio %.2f, %.1fs)"
        % (direction_ok, mean_ratio, elapsed),
    )


def _quality_split_federation(seed=42, n=15, m=60, dim=5, sep=1.5, bad_sep=0.5):
    """Three informative clients; the rest carry weakly anti-predictive data.

    Bad shards pull the decision direction the wrong way but are barely
    learnable locally, so their loss-improvement utility stays low.
    """
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)

    def shard(d, n_pos, n_neg, scale):
        labels = np.concatenate(
            [np.ones(n_pos, dtype=np.int64), np.zeros(n_neg, dtype=np.int64)]
        )
        means = np.where(labels[:, None] == 1, scale * d[None, :], -scale * d[None, :])
        feats = means + rng.standard_normal((n_pos + n_neg, dim))
        order = rng.permutation(n_pos + n_neg)
        return Dataset(feats[order].copy(), labels[order].copy())

    good_fracs = {4: 0.5, 7: 0.35, 12: 0.65}
    shards = []
    for i in range(n):
        if i in good_fracs:
            n_pos = int(round(good_fracs[i] * m))
            shards.append(shard(direction, n_pos, m - n_pos, sep))
        else:
            shards.append(shard(-direction, m // 2, m - m // 2, bad_sep))
    profiles = [ClientProfile(i, 1.0, 1.0, 1.0, 1.0) for i in range(n)]
    holdout = shard(direction, 200, 200, sep)
    return FederatedDataset(shards, profiles, holdout)


def test_05_selection_benefit_significant(capsys):
    start = time.perf_counter()
    fed = _quality_split_federation()
    cfg = RoundConfig(local_epochs=3, lr=0.05, max_rounds=80, convergence_patience=80)
    target = 0.92

    def rounds(seed, policy):
        sel = SelectionConfig(
            k=3,
            k_max=3,
            policy=policy,
            utility_weights=(1.0, 0.0, 0.0),
            ema_decay=0.3,
        )
        return run_simulation(fed, cfg, sel, seed).rounds_to_target(target)

    utility = [rounds(seed, "utility") for seed in range(10)]
    random_ = [rounds(seed, "random") for seed in range(10)]
    result = mann_whitney_u(utility, random_)
    assert result.method == "exact"
    assert float(np.mean(utility)) < float(np.mean(random_))
    assert result.p_value < 0.05
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0
    announce(
        capsys,
        "ACCEPTANCE 5: PASS (rounds-to-%.2f utility vs random, exact p=%.4f, %.1fs)"
        % (target, result.p_value, elapsed),
    )


def test_06_dp_calibration(capsys):
    start = time.perf_counter()
    noise = calibrate_sigma(PrivacyBudget(epsilon=1.0, delta=1e-5), sensitivity=1.0)
    assert abs(noise.sigma - 4.8448) <= 1e-3

    noised = add_gaussian_noise(Gradient(np.zeros(100_000)), noise, rng_seed=7)
    empirical_var = float(np.var(noised.values))
    assert abs(empirical_var - noise.sigma**2) <= 0.02 * noise.sigma**2
    elapsed = time.perf_counter() - start
    announce(
        capsys,
        "ACCEPTANCE 6: PASS (sigma=%.4f, empirical var within 2%%, %.1fs)"
        % (noise.sigma, elapsed),
    )


def test_07_checkpoint_integrity(capsys, tmp_path):
    start = time.perf_counter()
    fed = generate_synthetic_federation(4, 50, 3, 1.0, seed=5)
    shard = fed.shards[0]
    epochs = 8
    rng = np.random.default_rng(21)
    for trial in range(20):
        seed = int(rng.integers(0, 2**31))
        fault_epoch = int(rng.integers(1, epochs))
        full, _ = local_train(
            ModelParams.zeros(shard.d), shard, epochs=epochs, lr=0.05,
            batch_size=9, l2=0.01, rng_seed=seed,
        )
        partial, _ = local_train(
            ModelParams.zeros(shard.d), shard, epochs=fault_epoch, lr=0.05,
            batch_size=9, l2=0.01, rng_seed=seed,
        )
        path = str(tmp_path / ("ckpt_c0_r%d.bin" % trial))
        save_checkpoint(
            Checkpoint(
                round=trial, client_id=0, params=partial,
                epoch_progress=fault_epoch, rng_cursor=fault_epoch,
            ),
            path,
        )
        resumed, _ = local_train(
            load_checkpoint(path).params, shard, epochs=epochs, lr=0.05,
            batch_size=9, l2=0.01, rng_seed=seed,
            start_epoch=fault_epoch,
        )
        np.testing.assert_array_equal(resumed.weights, full.weights)

    # Every single-byte corruption must be rejected.
    path = str(tmp_path / "ckpt_c0_r0.bin")
    with open(path, "rb") as fh:
        blob = fh.read()
    for pos in range(len(blob)):
        bad = blob[:pos] + bytes([blob[pos] ^ 0xFF]) + blob[pos + 1 :]
        bad_path = str(tmp_path / "corrupt.bin")
        with open(bad_path, "wb") as fh:
            fh.write(bad)
        with pytest.raises((CheckpointFormatError, CheckpointCorruptionError)):
            load_checkpoint(bad_path)
    elapsed = time.perf_counter() - start
    announce(
        capsys,
        "ACCEPTANCE 7: PASS (20 restores bit-identical, %d corruptions rejected, %.1fs)"
        % (len(blob), elapsed),
    )


def test_08_optimal_interval_solver(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(50):
        cost = CostModelParams(
            total_time=float(rng.uniform(10, 200)),
            recovery_time=float(rng.uniform(0.01, 5)),
            write_cost=float(rng.uniform(0.01, 2)),
        )
        weibull = WeibullParams(
            scale_lambda=float(rng.uniform(0.5, 100)),
            shape_k=float(rng.uniform(0.6, 3.0)),
        )
        grid = np.linspace(1e-3, cost.total_time, 100_000)
        step = grid[1] - grid[0]
        p_f = 1.0 - np.exp(-((grid / weibull.scale_lambda) ** weibull.shape_k))
        amortized = (cost.write_cost + p_f * (grid / 2.0 + cost.recovery_time)) / grid
        brute = float(grid[int(np.argmin(amortized))])
        policy = optimal_checkpoint_interval(cost, weibull, model="amortized")
        worst = max(worst, abs(policy.interval - brute))
        assert abs(policy.interval - brute) <= step

        literal = grid / cost.total_time + p_f * cost.recovery_time / cost.total_time
        assert np.all(np.diff(literal) > 0)
        with pytest.warns(MonotonicCostWarning):
            floor = optimal_checkpoint_interval(cost, weibull, model="paper")
        assert floor.interval == pytest.approx(1e-3)
    elapsed = time.perf_counter() - start
    announce(
        capsys,
        "ACCEPTANCE 8: PASS (50 params within one grid step, worst gap %.2g; "
        "literal model monotone + warning, %.1fs)" % (worst, elapsed),
    )


def test_09_exact_u_test(capsys):
    start = time.perf_counter()
    result = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert result.method == "exact"
    assert result.u_statistic == 0.0
    assert result.p_value == pytest.approx(0.1)

    dominant = mann_whitney_u(
        [0.9, 0.901, 0.902, 0.903, 0.904], [0.5, 0.501, 0.502, 0.503, 0.504]
    )
    assert dominant.u_statistic == 25.0
    assert dominant.p_value == pytest.approx(2 / math.comb(10, 5))

    rejections = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        if mann_whitney_u(rng.standard_normal(100), rng.standard_normal(100)).p_value < 0.05:
            rejections += 1
    rate = rejections / 200
    assert 0.01 <= rate <= 0.10
    elapsed = time.perf_counter() - start
    announce(
        capsys,
        "ACCEPTANCE 9: PASS (U=0 p=0.1 exact; null rejection rate %.3f, %.1fs)"
        % (rate, elapsed),
    )


CLI_CONFIG = """
data.n_clients=5
data.samples_per_client=40
data.dim=2
data.dirichlet_alpha=1.0
train.local_epochs=2
train.lr=0.1
select.k=3
select.k_max=5
run.max_rounds=6
run.convergence_patience=10
run.trials=2
run.seed=11
"""


def test_10_cli_determinism(capsys, tmp_path):
    start = time.perf_counter()
    config = tmp_path / "exp.conf"
    config.write_text(CLI_CONFIG)

    def run_twice(args, names):
        outputs = []
        for tag in ("a", "b"):
            out = str(tmp_path / (args[0] + tag))
            assert cli_main(args + ["--config", str(config), "--out", out]) == 0
            blobs = {}
            for name in names:
                with open(os.path.join(out, name), "rb") as fh:
                    blobs[name] = fh.read()
            outputs.append(blobs)
        assert outputs[0] == outputs[1]
        return outputs[0]

    run_blobs = run_twice(["run"], ["trial_000.jsonl", "trial_001.jsonl", "summary.json"])
    json.loads(run_blobs["summary.json"])  # outputs stay parseable
    run_twice(["sweep-epsilon", "--epsilons", "0.5,5"], ["epsilon_sweep.jsonl"])
    elapsed = time.perf_counter() - start
    announce(
        capsys,
        "ACCEPTANCE 10: PASS (run + sweep-epsilon reruns byte-identical, %.1fs)" % elapsed,
    )
