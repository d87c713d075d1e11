"""Object-action consistency: transformation tokens and the soft pose loss.

The loss compares a predicted relative end-effector motion against the
object transform recovered by registration. Each component is a logistic
penalty that switches on once the deviation exceeds its tolerance:

    L = sigmoid(k_r (theta - tau_r)) + sigmoid(k_t (d - tau_t))

with theta the geodesic rotation error and d the translation error. All
gradients here are hand-derived; the rotation is differentiated through a
right-multiplied axis-angle increment at the current estimate, matching how
the policy decodes rotation updates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Pose, compose, inverse, skew

# Below this |sin(theta)| the geodesic angle is treated as non-differentiable
# (theta at 0 or pi) and the subgradient 0 is used.
SIN_THETA_FLOOR = 1e-7


@dataclass(frozen=True)
class LossConfig:
    """Tolerances, logistic slopes and the combined-objective weight."""

    tau_r: float = 0.1
    tau_t: float = 0.01
    k_r: float = 50.0
    k_t: float = 500.0
    lambda_pose: float = 1.0

    def __post_init__(self):
        if self.tau_r < 0 or self.tau_t < 0:
            raise ValueError("tolerances must be non-negative")
        if self.k_r <= 0 or self.k_t <= 0:
            raise ValueError("slopes must be positive")
        if self.lambda_pose < 0:
            raise ValueError("lambda_pose must be non-negative")


def sigmoid(x: float | np.ndarray):
    return 1.0 / (1.0 + np.exp(-x))


def relative_action_transform(a_grasp: Pose, a_t: Pose) -> Pose:
    """Motion since the grasp keypose: a_t composed with a_grasp^-1."""
    return compose(a_t, inverse(a_grasp))


def flatten_transform(t: Pose) -> np.ndarray:
    """Row-major rotation entries followed by the translation, shape (12,)."""
    return np.concatenate([t.rotation.m.reshape(9), t.translation])


def _soft_terms(r_act: np.ndarray, p_act: np.ndarray, t_obj: Pose, cfg: LossConfig):
    """Loss value plus gradients w.r.t. the 9 rotation entries and p_act."""
    r_obj = t_obj.rotation.m
    tr = float(np.trace(r_act.T @ r_obj))
    u = (tr - 1.0) / 2.0
    u_clamped = min(1.0, max(-1.0, u))
    theta = float(np.arccos(u_clamped))
    diff = p_act - t_obj.translation
    d = float(np.linalg.norm(diff))

    l_r = float(sigmoid(cfg.k_r * (theta - cfg.tau_r)))
    l_t = float(sigmoid(cfg.k_t * (d - cfg.tau_t)))
    loss = l_r + l_t

    sin_theta = np.sin(theta)
    if abs(u) >= 1.0 or sin_theta < SIN_THETA_FLOOR:
        d_rot = np.zeros((3, 3))
    else:
        # d theta / d r_act = -r_obj / (2 sin theta), chained with the
        # logistic slope.
        d_rot = (l_r * (1.0 - l_r) * cfg.k_r) * (-r_obj / (2.0 * sin_theta))
    if d < 1e-12:
        d_trans = np.zeros(3)
    else:
        d_trans = (l_t * (1.0 - l_t) * cfg.k_t) * (diff / d)
    return loss, d_rot, d_trans


def soft_pose_loss(t_act: Pose, t_obj: Pose, cfg: LossConfig) -> tuple[float, np.ndarray]:
    """Loss and its gradient in the minimal local parameterization of t_act.

    The gradient is a 6-vector (omega, dt): omega perturbs the rotation as
    R -> R exp(skew(omega)) and dt shifts the translation. At the arccos
    clamp boundary, at theta in {0, pi} and at d = 0 the subgradient 0 is
    returned for the affected block.
    """
    loss, d_rot, d_trans = _soft_terms(t_act.rotation.m, t_act.translation, t_obj, cfg)
    grad = np.zeros(6)
    r = t_act.rotation.m
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        grad[k] = float(np.sum(d_rot * (r @ skew(e))))
    grad[3:] = d_trans
    return loss, grad


def batched_soft_loss(poses: Sequence[Pose], grasp_index: int, t_obj: Pose, cfg: LossConfig) -> float:
    """Mean soft loss of the steps strictly after the grasp keypose.

    `poses` is the predicted keypose sequence (an action chunk); the step at
    `grasp_index` is the grasp pose every later step is measured against.
    Returns 0 when nothing follows the grasp.
    """
    loss, _, _ = batched_soft_loss_grads(poses, grasp_index, t_obj, cfg)
    return loss


def batched_soft_loss_grads(
    poses: Sequence[Pose], grasp_index: int, t_obj: Pose, cfg: LossConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    """Batched loss plus gradients w.r.t. every pose's matrix entries.

    Returns (loss, d_rot, d_trans) where d_rot[i] is dL/dR_i (3x3) and
    d_trans[i] is dL/dp_i for pose i of the sequence; the grasp pose itself
    accumulates gradient through every post-grasp term.
    """
    n = len(poses)
    if not 0 <= grasp_index < n:
        raise IndexError(f"grasp index {grasp_index} outside sequence of length {n}")
    d_rot = np.zeros((n, 3, 3))
    d_trans = np.zeros((n, 3))
    post = range(grasp_index + 1, n)
    count = len(post)
    if count == 0:
        return 0.0, d_rot, d_trans
    r_g = poses[grasp_index].rotation.m
    p_g = poses[grasp_index].translation
    total = 0.0
    for j in post:
        r_j = poses[j].rotation.m
        p_j = poses[j].translation
        # T_act = a_j * a_g^-1: R_act = R_j R_g^T, p_act = p_j - R_act p_g.
        r_act = r_j @ r_g.T
        p_act = p_j - r_act @ p_g
        loss, g_r, g_p = _soft_terms(r_act, p_act, t_obj, cfg)
        total += loss
        w = 1.0 / count
        d_rot[j] += w * (g_r @ r_g - np.outer(g_p, r_g.T @ p_g))
        d_trans[j] += w * g_p
        d_rot[grasp_index] += w * (g_r.T @ r_j - np.outer(p_g, r_j.T @ g_p))
        d_trans[grasp_index] += w * (-(r_g @ r_j.T @ g_p))
    return total / count, d_rot, d_trans


@dataclass(frozen=True)
class TransformationToken:
    """Embedding of an object transform, width d_model."""

    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("token has non-finite entries")
        object.__setattr__(self, "vector", v)


@dataclass
class TokenEncoderParams:
    """Scalar encoder (12 -> hidden -> d_model) plus a linear aggregator."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wa: np.ndarray
    ba: np.ndarray

    @staticmethod
    def initialize(rng: np.random.Generator, hidden: int, d_model: int) -> "TokenEncoderParams":
        return TokenEncoderParams(
            w1=rng.normal(0.0, 1.0 / np.sqrt(12), (12, hidden)),
            b1=np.zeros(hidden),
            w2=rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, d_model)),
            b2=np.zeros(d_model),
            wa=rng.normal(0.0, 1.0 / np.sqrt(d_model), (d_model, d_model)),
            ba=np.zeros(d_model),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2, "wa": self.wa, "ba": self.ba}

    @property
    def d_model(self) -> int:
        return self.ba.shape[0]


def token_encoder_forward(flat: np.ndarray, p: TokenEncoderParams):
    """Token vector and the cache needed for the backward pass.

    Accepts a single (12,) vector or a batch (B, 12).
    """
    h_pre = flat @ p.w1 + p.b1
    h = np.tanh(h_pre)
    y = h @ p.w2 + p.b2
    ya = np.tanh(y)
    token = ya @ p.wa + p.ba
    return token, (flat, h, y, ya)


def token_encoder_backward(p: TokenEncoderParams, cache, d_token: np.ndarray):
    """Gradients of <d_token, token> w.r.t. params and the flat input."""
    flat, h, y, ya = cache
    single = d_token.ndim == 1
    if single:
        flat, h, y, ya, d_token = (a[None] for a in (flat, h, y, ya, d_token))
    grads = {
        "wa": ya.T @ d_token,
        "ba": d_token.sum(axis=0),
    }
    d_ya = d_token @ p.wa.T
    d_y = d_ya * (1.0 - ya**2)
    grads["w2"] = h.T @ d_y
    grads["b2"] = d_y.sum(axis=0)
    d_h = d_y @ p.w2.T
    d_hpre = d_h * (1.0 - h**2)
    grads["w1"] = flat.T @ d_hpre
    grads["b1"] = d_hpre.sum(axis=0)
    d_flat = d_hpre @ p.w1.T
    return grads, (d_flat[0] if single else d_flat)


def encode_transformation_token(t: Pose, params: TokenEncoderParams) -> TransformationToken:
    """Deterministic embedding of the flattened 12-entry transform."""
    token, _ = token_encoder_forward(flatten_transform(t), params)
    return TransformationToken(token)
