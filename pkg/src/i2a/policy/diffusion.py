"""Conditional denoising diffusion over action chunks.

Training follows the standard noise-prediction objective: corrupt the
encoded ground-truth chunk at a random step of the schedule and regress the
injected Gaussian noise. The consistency loss is evaluated on the implied
clean-chunk estimate x0_hat and its gradient flows back through the same
network, so one backward pass yields the combined-objective gradient

    L = L_diff + lambda_pose * L_soft.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..consistency import LossConfig, batched_soft_loss_grads
from ..geometry import Pose
from ..rng import rng_for
from .actions import ActionSequence, ROW_WIDTH, decode_chunk, encode_chunk, rot6d_backward, rot6d_to_matrix
from .nets import mlp_backward, mlp_forward
from .params import PolicyConfig, PolicyParams
from .tokens import RawConditioning, TokenSet, context_backward_batch, context_forward_batch, context_from_token_set


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances of the forward corruption process."""

    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.ndim != 1 or len(b) < 1:
            raise ValueError("betas must be a non-empty 1-d array")
        if np.any(b <= 0) or np.any(b >= 1):
            raise ValueError("betas must lie in (0, 1)")
        if np.any(np.diff(b) < 0):
            raise ValueError("betas must be nondecreasing")
        object.__setattr__(self, "betas", b)

    @staticmethod
    def linear(num_steps: int, beta_start: float, beta_end: float) -> "NoiseSchedule":
        return NoiseSchedule(np.linspace(beta_start, beta_end, num_steps))

    @property
    def num_steps(self) -> int:
        return len(self.betas)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(1.0 - self.betas)


def timestep_embedding(t: int, dim: int, num_steps: int) -> np.ndarray:
    """Fixed sinusoidal embedding of a diffusion step index."""
    half = dim // 2
    freqs = np.exp(-np.log(1000.0) * np.arange(half) / max(1, half - 1))
    ang = (t / max(1, num_steps)) * 1000.0 * freqs
    emb = np.concatenate([np.sin(ang), np.cos(ang)])
    if len(emb) < dim:
        emb = np.append(emb, 0.0)
    return emb


@dataclass(frozen=True)
class TrainingSample:
    """One supervised prediction step: the ground-truth chunk plus targets.

    `grasp_index` is the chunk-relative position of the grasp keypose, or
    None when the chunk does not contain it (the consistency loss then
    contributes nothing). `object_transform` is the registered object motion
    the post-grasp steps are measured against.
    """

    chunk: ActionSequence
    grasp_index: Optional[int] = None
    object_transform: Optional[Pose] = None


@dataclass(frozen=True)
class StepResult:
    l_diff: float
    l_soft: float
    grads: dict


def _decode_rows(x0_hat: np.ndarray, cfg: PolicyConfig):
    """Pose matrices/translations of every chunk row, with decode caches."""
    mats, cache = rot6d_to_matrix(x0_hat[:, :, 0:6])
    trans = x0_hat[:, :, 6:9] * cfg.trans_scale + np.asarray(cfg.trans_center)
    return mats, trans, cache


def train_step_batch(
    samples: list[TrainingSample],
    conds: list[RawConditioning],
    params: PolicyParams,
    sched: NoiseSchedule,
    loss_cfg: LossConfig,
    cfg: PolicyConfig,
    seeds: list[int],
) -> StepResult:
    """Combined loss and parameter gradients for a batch of samples.

    Deterministic given `seeds` (one per sample): each seed fixes the
    diffusion step draw and the injected noise. Gradients are averaged over
    the batch. When lambda_pose is zero the consistency term is still
    reported but contributes nothing to the gradient, bit for bit.
    """
    b = len(samples)
    k = cfg.chunk_size
    ab = sched.alpha_bars

    x0 = np.stack([encode_chunk(s.chunk, cfg.trans_center, cfg.trans_scale) for s in samples])
    if x0.shape[1] != k:
        raise ValueError(f"chunk size {x0.shape[1]} does not match config {k}")
    ts = np.zeros(b, dtype=np.int64)
    eps = np.zeros_like(x0)
    for i, seed in enumerate(seeds):
        rng = rng_for(seed, "train-step")
        ts[i] = rng.integers(sched.num_steps)
        eps[i] = rng.normal(size=(k, ROW_WIDTH))
    s0 = np.sqrt(ab[ts])[:, None, None]
    s1 = np.sqrt(1.0 - ab[ts])[:, None, None]
    x_t = s0 * x0 + s1 * eps

    ctx, ctx_cache = context_forward_batch(conds, params, cfg)
    temb = np.stack([timestep_embedding(int(t), cfg.time_embed_dim, sched.num_steps) for t in ts])
    net_in = np.concatenate([x_t.reshape(b, -1), temb, ctx], axis=1)
    net_out, acts = mlp_forward(params.den_layers, net_in)
    # The head predicts the clean chunk; the noise estimate is derived from
    # it, which keeps the network output well-scaled at low-noise steps
    # where the direct noise map has gain 1/sqrt(1 - alpha_bar).
    x0_hat = net_out.reshape(b, k, ROW_WIDTH)
    eps_hat = (x_t - s0 * x0_hat) / s1

    resid = eps_hat - eps
    l_diff = float((resid**2).mean())
    d_eps_hat = 2.0 * resid / resid.size

    mats, trans, rot_cache = _decode_rows(x0_hat, cfg)
    l_soft_total = 0.0
    n_soft = 0
    d_x0 = np.zeros_like(x0_hat)
    for i, s in enumerate(samples):
        if s.grasp_index is None or s.object_transform is None:
            continue
        # Raw matrices go straight into the loss; no SO(3) projection here so
        # the gradient path matches the forward exactly.
        loss_i, d_rot, d_trans = _soft_on_raw(mats[i], trans[i], s.grasp_index, s.object_transform, loss_cfg)
        l_soft_total += loss_i
        n_soft += 1
        if loss_cfg.lambda_pose != 0.0:
            d_x0[i, :, 0:6] = rot6d_backward(
                tuple(c[i] for c in rot_cache), d_rot
            )
            d_x0[i, :, 6:9] = d_trans * cfg.trans_scale
    l_soft = l_soft_total / b if n_soft else 0.0

    d_x0_hat = d_eps_hat * (-s0 / s1)
    if loss_cfg.lambda_pose != 0.0 and n_soft:
        d_x0_hat = d_x0_hat + (loss_cfg.lambda_pose / b) * d_x0

    grads = params.zero_grads()
    layer_grads, d_in = mlp_backward(params.den_layers, acts, d_x0_hat.reshape(b, -1))
    for i, (gw, gb) in enumerate(layer_grads):
        grads[f"den.{i}.w"] += gw
        grads[f"den.{i}.b"] += gb
    d_ctx = d_in[:, cfg.action_dim + cfg.time_embed_dim :]
    context_backward_batch(ctx_cache, d_ctx, params, grads)
    return StepResult(l_diff, l_soft, grads)


def _soft_on_raw(rot_mats: np.ndarray, translations: np.ndarray, grasp_index: int, t_obj: Pose, cfg: LossConfig):
    """batched_soft_loss_grads on raw (non-orthonormalized) matrices."""
    from ..consistency import _soft_terms

    k = len(rot_mats)
    if not 0 <= grasp_index < k:
        raise IndexError(f"grasp index {grasp_index} outside chunk of length {k}")
    d_rot = np.zeros((k, 3, 3))
    d_trans = np.zeros((k, 3))
    count = k - grasp_index - 1
    if count == 0:
        return 0.0, d_rot, d_trans
    r_g, p_g = rot_mats[grasp_index], translations[grasp_index]
    total = 0.0
    w = 1.0 / count
    for j in range(grasp_index + 1, k):
        r_j, p_j = rot_mats[j], translations[j]
        r_act = r_j @ r_g.T
        p_act = p_j - r_act @ p_g
        loss, g_r, g_p = _soft_terms(r_act, p_act, t_obj, cfg)
        total += loss
        d_rot[j] += w * (g_r @ r_g - np.outer(g_p, r_g.T @ p_g))
        d_trans[j] += w * g_p
        d_rot[grasp_index] += w * (g_r.T @ r_j - np.outer(p_g, r_j.T @ g_p))
        d_trans[grasp_index] += w * (-(r_g @ r_j.T @ g_p))
    return total * w, d_rot, d_trans


def diffusion_train_step(
    sample: TrainingSample,
    cond: RawConditioning,
    params: PolicyParams,
    sched: NoiseSchedule,
    loss_cfg: LossConfig,
    cfg: PolicyConfig,
    seed: int,
) -> StepResult:
    """Single-sample training step; see train_step_batch."""
    return train_step_batch([sample], [cond], params, sched, loss_cfg, cfg, [seed])


def _reverse_chain(x: np.ndarray, contexts: np.ndarray, params, sched, cfg, rng) -> np.ndarray:
    """Ancestral sampling for a batch of chunks with fixed contexts."""
    b = x.shape[0]
    betas = sched.betas
    alphas = sched.alphas
    ab = sched.alpha_bars
    for t in range(sched.num_steps - 1, -1, -1):
        temb = np.tile(timestep_embedding(t, cfg.time_embed_dim, sched.num_steps), (b, 1))
        net_in = np.concatenate([x.reshape(b, -1), temb, contexts], axis=1)
        x0_hat = mlp_forward(params.den_layers, net_in)[0].reshape(x.shape)
        eps_hat = (x - np.sqrt(ab[t]) * x0_hat) / np.sqrt(1.0 - ab[t])
        x = (x - betas[t] / np.sqrt(1.0 - ab[t]) * eps_hat) / np.sqrt(alphas[t])
        if t > 0:
            var = (1.0 - ab[t - 1]) / (1.0 - ab[t]) * betas[t]
            x = x + np.sqrt(var) * rng.normal(size=x.shape)
    return x


def sample_actions(
    tokens: TokenSet,
    params: PolicyParams,
    sched: NoiseSchedule,
    cfg: PolicyConfig,
    seed: int,
) -> ActionSequence:
    """Draw one action chunk by running the reverse chain from pure noise.

    Deterministic given all arguments; decoded rotations are re-projected
    onto SO(3).
    """
    return sample_actions_batch([tokens], params, sched, cfg, seed)[0]


def sample_actions_batch(
    token_sets: list[TokenSet],
    params: PolicyParams,
    sched: NoiseSchedule,
    cfg: PolicyConfig,
    seed: int,
) -> list[ActionSequence]:
    """Lockstep sampling for several episodes sharing one seed stream."""
    b = len(token_sets)
    rng = rng_for(seed, "sample-actions")
    contexts = np.stack([context_from_token_set(ts) for ts in token_sets])
    x = rng.normal(size=(b, cfg.chunk_size, ROW_WIDTH))
    x = _reverse_chain(x, contexts, params, sched, cfg, rng)
    return [decode_chunk(x[i], cfg.trans_center, cfg.trans_scale) for i in range(b)]
