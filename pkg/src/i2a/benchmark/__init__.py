"""Synthetic relational-rearrangement benchmark."""

from .ablation import (
    AblationConfig,
    CellResult,
    GoalConditioning,
    RunParams,
    demo_training_pairs,
    ex_matrix,
    prepare_goal,
    run_ablation,
    run_cell,
    summarize,
    DiffusionKeyposePolicy,
)
from .data import ChecksumMismatchError, load_dataset, save_dataset
from .evaluate import (
    ATTACH_ROT_TOL,
    ATTACH_TRANS_TOL,
    EPISODE_HORIZON,
    EpisodeResult,
    ExpertPolicy,
    KeyposePolicy,
    RandomPolicy,
    check_success,
    replay_actions,
    run_episodes,
)
from .expert import Demonstration, GroundTruth, PlanFailureError, demonstration_object_transform, scripted_expert
from .scenes import PlacementFailureError, Scene, generate_scene, goal_observation, oracle_world, render_state
from .tasks import (
    ACTION_LABEL,
    ANCHOR_LABEL,
    TABLE_LABEL,
    TASK_BUILDERS,
    TaskSpec,
    default_camera,
    get_task,
    task_index,
)

__all__ = [name for name in dir() if not name.startswith("_")]
