"""Observation tokenization and the pooled conditioning context.

Scenes are voxel-downsampled into at most V tokens carrying centroid, mean
color and occupancy. Tokens are linearly embedded and mean-pooled per
segment class (table / action object / anchor), which keeps per-object
geometry visible to the feedforward denoiser after pooling. Language is a
learned per-task embedding; history poses go through a small MLP; the object
transform arrives as the transformation token.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..cameras import SceneObservation, unproject
from ..clouds import majority_labels, voxel_keys
from ..consistency import flatten_transform, token_encoder_backward, token_encoder_forward
from ..geometry import Pose
from .params import PolicyConfig, PolicyParams, VISUAL_FEATURE_DIM

# Segment classes pooled into separate context slots: table, action object,
# anchor object (the benchmark's label convention).
POOL_CLASSES = (1, 2, 3)
PAD_LABEL = -1


@dataclass(frozen=True)
class VisualTokens:
    """Pre-embedding voxel features (V, 7) and per-token segment labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        l = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2 or f.shape[1] != VISUAL_FEATURE_DIM or len(l) != len(f):
            raise ValueError("inconsistent visual token shapes")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", l)


def _farthest_point_order(points: np.ndarray) -> np.ndarray:
    """Deterministic FPS ordering starting nearest the centroid."""
    n = len(points)
    start = int(np.argmin(np.linalg.norm(points - points.mean(axis=0), axis=1)))
    order = np.empty(n, dtype=np.int64)
    dist = np.full(n, np.inf)
    cur = start
    for i in range(n):
        order[i] = cur
        dist = np.minimum(dist, np.linalg.norm(points - points[cur], axis=1))
        dist[order[: i + 1]] = -1.0
        cur = int(np.argmax(dist))
    return order


def tokenize_observation(obs: SceneObservation, num_tokens: int, voxel_size: float) -> VisualTokens:
    """Fixed-count voxel tokens; truncation follows farthest-point order."""
    feats = np.zeros((num_tokens, VISUAL_FEATURE_DIM))
    labels = np.full(num_tokens, PAD_LABEL, dtype=np.int64)
    cloud = unproject(obs)
    if len(cloud) == 0:
        return VisualTokens(feats, labels)
    keys = voxel_keys(cloud.points, voxel_size)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    n_vox = len(first)
    counts = np.bincount(inverse, minlength=n_vox).astype(np.float64)
    cent = np.zeros((n_vox, 3))
    color = np.zeros((n_vox, 3))
    for k in range(3):
        cent[:, k] = np.bincount(inverse, weights=cloud.points[:, k], minlength=n_vox) / counts
        color[:, k] = np.bincount(inverse, weights=cloud.colors[:, k], minlength=n_vox) / counts
    occ = counts / len(cloud)
    lab = majority_labels(inverse, cloud.labels, n_vox).astype(np.int64)
    if n_vox > num_tokens:
        keep = _farthest_point_order(cent)[:num_tokens]
        cent, color, occ, lab = cent[keep], color[keep], occ[keep], lab[keep]
        n_vox = num_tokens
    feats[:n_vox] = np.concatenate([cent, color, occ[:, None]], axis=1)
    labels[:n_vox] = lab
    return VisualTokens(feats, labels)


def empty_visual_tokens(num_tokens: int) -> VisualTokens:
    return VisualTokens(np.zeros((num_tokens, VISUAL_FEATURE_DIM)), np.full(num_tokens, PAD_LABEL, dtype=np.int64))


@dataclass(frozen=True)
class RawConditioning:
    """Pre-embedding inputs for one prediction step."""

    visual_current: VisualTokens
    visual_goal: Optional[VisualTokens]
    task_id: int
    history: tuple
    transform: Optional[Pose]


@dataclass(frozen=True)
class TokenSet:
    """Embedded conditioning tokens, all width d_model.

    `labels_*` and `weights_*` ride along per visual token: pooling averages
    each segment class weighted by occupancy, which makes the pooled slot the
    exact point-mass mean of that object's visible surface (voxel-boundary
    effects cancel).
    """

    visual_current: np.ndarray
    visual_goal: np.ndarray
    language: np.ndarray
    history: np.ndarray
    transformation: np.ndarray
    labels_current: np.ndarray
    labels_goal: np.ndarray
    weights_current: np.ndarray
    weights_goal: np.ndarray

    @property
    def d_model(self) -> int:
        return self.language.shape[-1]


def pad_history(history: Sequence[Pose], window: int) -> tuple:
    """Last window+1 poses, front-padded by repeating the earliest one."""
    h = list(history)
    if not h:
        raise ValueError("history must contain at least the current pose")
    h = h[-(window + 1):]
    while len(h) < window + 1:
        h.insert(0, h[0])
    return tuple(h)


def encode_history(history: Sequence[Pose], window: int, params: PolicyParams) -> np.ndarray:
    """One token per padded history pose via the flatten-12 + MLP path."""
    flats = np.stack([flatten_transform(p) for p in pad_history(history, window)])
    h = np.tanh(flats @ params.hist_w1 + params.hist_b1)
    return h @ params.hist_w2 + params.hist_b2


def build_token_set(raw: RawConditioning, params: PolicyParams, cfg: PolicyConfig) -> TokenSet:
    """Embed one conditioning record; disabled streams become zero tokens."""
    ctx, cache = context_forward_batch([raw], params, cfg)
    return TokenSet(
        visual_current=cache["e_cur"][0],
        visual_goal=cache["e_goal"][0] if cache["e_goal"] is not None else np.zeros_like(cache["e_cur"][0]),
        language=params.language[raw.task_id].copy(),
        history=cache["hist_tokens"][0],
        transformation=cache["token"][0] if cache["token"] is not None else np.zeros(cfg.d_model),
        labels_current=raw.visual_current.labels.copy(),
        labels_goal=(raw.visual_goal.labels.copy() if raw.visual_goal is not None
                     else np.full(cfg.v_tokens, PAD_LABEL, dtype=np.int64)),
    )


def context_from_token_set(ts: TokenSet) -> np.ndarray:
    """Pooled context vector from an embedded TokenSet (sampling path)."""
    parts = []
    for emb, lab in ((ts.visual_current, ts.labels_current), (ts.visual_goal, ts.labels_goal)):
        for c in POOL_CLASSES:
            mask = lab == c
            parts.append(emb[mask].mean(axis=0) if np.any(mask) else np.zeros(ts.d_model))
    parts.append(ts.language)
    parts.append(ts.history.mean(axis=0))
    parts.append(ts.transformation)
    return np.concatenate(parts)


def _stack_visual(tokens: list[VisualTokens]):
    feats = np.stack([t.features for t in tokens])
    labels = np.stack([t.labels for t in tokens])
    return feats, labels


def context_forward_batch(raws: list[RawConditioning], params: PolicyParams, cfg: PolicyConfig):
    """Context vectors (B, context_dim) plus the cache for the backward pass.

    All records in a batch must agree on whether goal tokens and the
    transformation token are present (ablation modes are uniform per run).
    """
    b = len(raws)
    d = cfg.d_model
    has_goal = raws[0].visual_goal is not None
    has_tf = raws[0].transform is not None
    if any((r.visual_goal is not None) != has_goal or (r.transform is not None) != has_tf for r in raws):
        raise ValueError("mixed conditioning modes in one batch")

    feats_cur, labels_cur = _stack_visual([r.visual_current for r in raws])
    e_cur = feats_cur @ params.visual_w + params.visual_b
    if has_goal:
        feats_goal, labels_goal = _stack_visual([r.visual_goal for r in raws])
        e_goal = feats_goal @ params.visual_w + params.visual_b
    else:
        feats_goal, labels_goal, e_goal = None, None, None

    def pooled(emb, labels):
        slots, masks, counts = [], [], []
        for c in POOL_CLASSES:
            mask = labels == c
            cnt = mask.sum(axis=1).astype(np.float64)
            safe = np.maximum(cnt, 1.0)
            slots.append((emb * mask[:, :, None]).sum(axis=1) / safe[:, None])
            masks.append(mask)
            counts.append(safe)
        return slots, masks, counts

    cur_slots, cur_masks, cur_counts = pooled(e_cur, labels_cur)
    if has_goal:
        goal_slots, goal_masks, goal_counts = pooled(e_goal, labels_goal)
    else:
        goal_slots = [np.zeros((b, d)) for _ in POOL_CLASSES]
        goal_masks = goal_counts = None

    task_ids = np.array([r.task_id for r in raws], dtype=np.int64)
    lang = params.language[task_ids]

    hist_flats = np.stack(
        [np.stack([flatten_transform(p) for p in pad_history(r.history, cfg.history_window)]) for r in raws]
    )  # (B, m+1, 12)
    n_hist = hist_flats.shape[1]
    flat2 = hist_flats.reshape(b * n_hist, 12)
    h1 = np.tanh(flat2 @ params.hist_w1 + params.hist_b1)
    hist_tokens = (h1 @ params.hist_w2 + params.hist_b2).reshape(b, n_hist, d)
    hist_mean = hist_tokens.mean(axis=1)

    if has_tf:
        tf_flats = np.stack([flatten_transform(r.transform) for r in raws])
        token, token_cache = token_encoder_forward(tf_flats, params.token_enc)
    else:
        tf_flats, token, token_cache = None, None, None
    token_slot = token if has_tf else np.zeros((b, d))

    ctx = np.concatenate([*cur_slots, *goal_slots, lang, hist_mean, token_slot], axis=1)
    cache = {
        "feats_cur": feats_cur, "e_cur": e_cur, "cur_masks": cur_masks, "cur_counts": cur_counts,
        "feats_goal": feats_goal, "e_goal": e_goal, "goal_masks": goal_masks, "goal_counts": goal_counts,
        "task_ids": task_ids, "hist_flats": hist_flats, "h1": h1, "hist_tokens": hist_tokens,
        "token": token, "token_cache": token_cache, "d": d, "b": b,
    }
    return ctx, cache


def context_backward_batch(cache, d_ctx: np.ndarray, params: PolicyParams, grads: dict) -> None:
    """Accumulate parameter gradients of <d_ctx, context> into `grads`."""
    d = cache["d"]
    b = cache["b"]
    slots = np.split(d_ctx, 9, axis=1)
    d_cur = slots[0:3]
    d_goal = slots[3:6]
    d_lang, d_hist_mean, d_token = slots[6], slots[7], slots[8]

    def visual_back(feats, masks, counts, d_slots):
        d_e = np.zeros((b, feats.shape[1], d))
        for mask, cnt, ds in zip(masks, counts, d_slots):
            d_e += mask[:, :, None] * (ds[:, None, :] / cnt[:, None, None])
        grads["visual_w"] += feats.reshape(-1, feats.shape[2]).T @ d_e.reshape(-1, d)
        grads["visual_b"] += d_e.sum(axis=(0, 1))

    visual_back(cache["feats_cur"], cache["cur_masks"], cache["cur_counts"], d_cur)
    if cache["e_goal"] is not None:
        visual_back(cache["feats_goal"], cache["goal_masks"], cache["goal_counts"], d_goal)

    np.add.at(grads["language"], cache["task_ids"], d_lang)

    n_hist = cache["hist_flats"].shape[1]
    d_tok = np.repeat(d_hist_mean[:, None, :] / n_hist, n_hist, axis=1).reshape(b * n_hist, d)
    h1 = cache["h1"]
    grads["hist_w2"] += h1.T @ d_tok
    grads["hist_b2"] += d_tok.sum(axis=0)
    d_h1 = (d_tok @ params.hist_w2.T) * (1.0 - h1**2)
    flat2 = cache["hist_flats"].reshape(b * n_hist, 12)
    grads["hist_w1"] += flat2.T @ d_h1
    grads["hist_b1"] += d_h1.sum(axis=0)

    if cache["token"] is not None:
        tok_grads, _ = token_encoder_backward(params.token_enc, cache["token_cache"], d_token)
        for name, g in tok_grads.items():
            grads[f"token.{name}"] += g
