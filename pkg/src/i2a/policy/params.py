"""Policy hyperparameters and the learnable parameter containers."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from ..consistency import TokenEncoderParams
from ..rng import rng_for
from .nets import linear_init, mlp_init

VISUAL_FEATURE_DIM = 7  # voxel centroid xyz, mean rgb, occupancy
FLAT_POSE_DIM = 12
ACTION_ROW = 10


@dataclass(frozen=True)
class PolicyConfig:
    """Shapes and training knobs; stored in every checkpoint manifest."""

    d_model: int = 64
    v_tokens: int = 128
    voxel_size: float = 0.025
    chunk_size: int = 4
    history_window: int = 2
    hidden: tuple[int, ...] = (256, 256)
    token_hidden: int = 32
    time_embed_dim: int = 16
    num_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    trans_center: tuple[float, float, float] = (0.0, 0.0, 0.12)
    trans_scale: float = 0.35
    num_tasks: int = 3
    learning_rate: float = 1e-3
    epochs: int = 40
    batch_size: int = 16

    @property
    def context_dim(self) -> int:
        # three pooled segment classes per visual stream + language +
        # history + transformation token
        return (3 + 3 + 1 + 1 + 1) * self.d_model

    @property
    def action_dim(self) -> int:
        return self.chunk_size * ACTION_ROW

    @property
    def denoiser_input_dim(self) -> int:
        return self.action_dim + self.time_embed_dim + self.context_dim

    def to_json(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["trans_center"] = list(self.trans_center)
        return d

    @staticmethod
    def from_json(d: dict) -> "PolicyConfig":
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        d["trans_center"] = tuple(d["trans_center"])
        return PolicyConfig(**d)


@dataclass
class PolicyParams:
    """All learnable arrays: embeddings, encoders and the denoiser."""

    visual_w: np.ndarray
    visual_b: np.ndarray
    language: np.ndarray
    hist_w1: np.ndarray
    hist_b1: np.ndarray
    hist_w2: np.ndarray
    hist_b2: np.ndarray
    token_enc: TokenEncoderParams
    den_layers: list

    @staticmethod
    def initialize(cfg: PolicyConfig, seed: int) -> "PolicyParams":
        rng = rng_for(seed, "policy-init")
        d = cfg.d_model
        visual_w, visual_b = linear_init(rng, VISUAL_FEATURE_DIM, d)
        language = rng.normal(0.0, 1.0, (cfg.num_tasks, d)) / np.sqrt(d)
        hist_w1, hist_b1 = linear_init(rng, FLAT_POSE_DIM, cfg.token_hidden)
        hist_w2, hist_b2 = linear_init(rng, cfg.token_hidden, d)
        token_enc = TokenEncoderParams.initialize(rng, cfg.token_hidden, d)
        sizes = [cfg.denoiser_input_dim, *cfg.hidden, cfg.action_dim]
        den_layers = mlp_init(rng, sizes)
        return PolicyParams(
            visual_w, visual_b, language, hist_w1, hist_b1, hist_w2, hist_b2, token_enc, den_layers
        )

    def arrays(self) -> dict[str, np.ndarray]:
        out = {
            "visual_w": self.visual_w,
            "visual_b": self.visual_b,
            "language": self.language,
            "hist_w1": self.hist_w1,
            "hist_b1": self.hist_b1,
            "hist_w2": self.hist_w2,
            "hist_b2": self.hist_b2,
        }
        for name, arr in self.token_enc.arrays().items():
            out[f"token.{name}"] = arr
        for i, (w, b) in enumerate(self.den_layers):
            out[f"den.{i}.w"] = w
            out[f"den.{i}.b"] = b
        return out

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays().items()}

    def load_arrays(self, values: dict[str, np.ndarray]) -> None:
        """Copy values into the live arrays (shapes must match)."""
        mine = self.arrays()
        for k, v in values.items():
            if mine[k].shape != v.shape:
                raise ValueError(f"array {k}: shape {v.shape} != expected {mine[k].shape}")
            mine[k][...] = v

    def round_to_f32(self) -> None:
        for arr in self.arrays().values():
            arr[...] = arr.astype(np.float32).astype(np.float64)
