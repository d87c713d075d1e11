"""Epoch loop over prepared (conditioning, sample) pairs.

Determinism contract: the experiment seed fixes initialization, the epoch
shuffle and every per-sample noise draw, and parameters plus optimizer state
are rounded through float32 at epoch boundaries, so resuming from an f32
checkpoint at epoch E reproduces the uninterrupted trace bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..consistency import LossConfig
from ..rng import rng_for, seed_for
from .diffusion import NoiseSchedule, TrainingSample, train_step_batch
from .nets import Adam
from .params import PolicyConfig, PolicyParams
from .tokens import RawConditioning


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    l_diff: float
    l_soft: float
    total: float


def training_schedule(cfg: PolicyConfig) -> NoiseSchedule:
    return NoiseSchedule.linear(cfg.num_steps, cfg.beta_start, cfg.beta_end)


def train_policy(
    pairs: list[tuple[RawConditioning, TrainingSample]],
    cfg: PolicyConfig,
    loss_cfg: LossConfig,
    seed: int,
    params: PolicyParams | None = None,
    opt: Adam | None = None,
    start_epoch: int = 0,
    epochs: int | None = None,
    on_epoch=None,
) -> tuple[PolicyParams, Adam, list[EpochStats]]:
    """Train (or continue training) on a fixed sample set.

    `on_epoch` is called with each EpochStats row as it is produced. Losses
    logged per epoch are means over that epoch's batches.
    """
    if not pairs:
        raise ValueError("no training samples")
    sched = training_schedule(cfg)
    if params is None:
        params = PolicyParams.initialize(cfg, seed)
    if opt is None:
        opt = Adam(params.arrays(), lr=cfg.learning_rate)
    n = len(pairs)
    total_epochs = cfg.epochs if epochs is None else epochs
    log: list[EpochStats] = []
    arrays = params.arrays()
    for epoch in range(start_epoch, total_epochs):
        # Cosine decay to 5% of the base rate: the late epochs polish the
        # clean-chunk estimate, which sets the sampled keypose precision.
        frac = epoch / max(1, total_epochs - 1)
        opt.lr = cfg.learning_rate * (0.05 + 0.95 * 0.5 * (1.0 + np.cos(np.pi * frac)))
        order = rng_for(seed, "epoch-shuffle", epoch).permutation(n)
        diff_sum = soft_sum = 0.0
        batches = 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            conds = [pairs[i][0] for i in idx]
            samples = [pairs[i][1] for i in idx]
            seeds = [seed_for(seed, "step", epoch, int(i)) for i in idx]
            result = train_step_batch(samples, conds, params, sched, loss_cfg, cfg, seeds)
            opt.step(arrays, result.grads)
            diff_sum += result.l_diff
            soft_sum += result.l_soft
            batches += 1
        params.round_to_f32()
        opt.round_to_f32()
        l_diff = diff_sum / batches
        l_soft = soft_sum / batches
        stats = EpochStats(epoch, l_diff, l_soft, l_diff + loss_cfg.lambda_pose * l_soft)
        log.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
    return params, opt, log
