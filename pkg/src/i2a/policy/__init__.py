"""Conditional diffusion keypose policy with hand-written gradients."""

from .actions import ActionSequence, decode_chunk, encode_chunk
from .checkpoint import CheckpointIncompatibleError, load_checkpoint, save_checkpoint
from .diffusion import (
    NoiseSchedule,
    StepResult,
    TrainingSample,
    diffusion_train_step,
    sample_actions,
    sample_actions_batch,
    train_step_batch,
)
from .nets import Adam
from .params import PolicyConfig, PolicyParams
from .tokens import (
    RawConditioning,
    TokenSet,
    VisualTokens,
    build_token_set,
    context_from_token_set,
    empty_visual_tokens,
    encode_history,
    pad_history,
    tokenize_observation,
)
from .trainer import EpochStats, train_policy, training_schedule

__all__ = [
    "ActionSequence",
    "Adam",
    "CheckpointIncompatibleError",
    "EpochStats",
    "NoiseSchedule",
    "PolicyConfig",
    "PolicyParams",
    "RawConditioning",
    "StepResult",
    "TokenSet",
    "TrainingSample",
    "VisualTokens",
    "build_token_set",
    "context_from_token_set",
    "decode_chunk",
    "diffusion_train_step",
    "empty_visual_tokens",
    "encode_chunk",
    "encode_history",
    "load_checkpoint",
    "pad_history",
    "sample_actions",
    "sample_actions_batch",
    "save_checkpoint",
    "tokenize_observation",
    "train_policy",
    "train_step_batch",
    "training_schedule",
]
