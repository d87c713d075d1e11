"""Ablation matrix: train/evaluate the policy under toggled conditioning.

The six named presets Ex0..Ex5 toggle three ingredients: the goal
observation stream (none / imagined-with-noise / ground truth), the
transformation token, and the consistency loss. Layouts and parameter
counts never change across presets; disabled streams become zero tokens.

    Ex0  no goal conditioning
    Ex1  ground-truth goal observation
    Ex2  imagined goal observation only
    Ex3  imagined goal + transformation token
    Ex4  imagined goal + consistency loss
    Ex5  imagined goal + token + loss
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..consistency import LossConfig
from ..geometry import Pose, ScaleTransform, compose, inverse
from ..goal_synthesis import AdapterNoise, OracleAdapterSet, imagine_goal
from ..policy import (
    ActionSequence,
    PolicyConfig,
    RawConditioning,
    TrainingSample,
    VisualTokens,
    build_token_set,
    pad_history,
    sample_actions_batch,
    tokenize_observation,
    train_policy,
    training_schedule,
)
from ..rng import seed_for
from .evaluate import EPISODE_HORIZON, KeyposePolicy, run_episodes
from .expert import Demonstration, scripted_expert
from .scenes import Scene, generate_scene, goal_observation, oracle_world
from .tasks import ACTION_LABEL, ANCHOR_LABEL, HOME_POSE, get_task, task_index


@dataclass(frozen=True)
class AblationConfig:
    """One row of the ablation matrix."""

    name: str
    use_imagined_goal: bool
    use_gt_goal: bool
    use_transformation_token: bool
    use_soft_loss: bool
    noise: AdapterNoise = AdapterNoise()
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.use_imagined_goal and self.use_gt_goal:
            raise ValueError("imagined and ground-truth goals are mutually exclusive")
        if (self.use_transformation_token or self.use_soft_loss) and not (
            self.use_imagined_goal or self.use_gt_goal
        ):
            raise ValueError("token/loss need a goal source to register against")

    @property
    def has_goal(self) -> bool:
        return self.use_imagined_goal or self.use_gt_goal


EX_PRESETS = {
    "Ex0": dict(use_imagined_goal=False, use_gt_goal=False, use_transformation_token=False, use_soft_loss=False),
    "Ex1": dict(use_imagined_goal=False, use_gt_goal=True, use_transformation_token=False, use_soft_loss=False),
    "Ex2": dict(use_imagined_goal=True, use_gt_goal=False, use_transformation_token=False, use_soft_loss=False),
    "Ex3": dict(use_imagined_goal=True, use_gt_goal=False, use_transformation_token=True, use_soft_loss=False),
    "Ex4": dict(use_imagined_goal=True, use_gt_goal=False, use_transformation_token=False, use_soft_loss=True),
    "Ex5": dict(use_imagined_goal=True, use_gt_goal=False, use_transformation_token=True, use_soft_loss=True),
}


def ex_matrix(noise: AdapterNoise, seeds, names=tuple(EX_PRESETS)) -> list[AblationConfig]:
    return [AblationConfig(name=n, noise=noise, seeds=tuple(seeds), **EX_PRESETS[n]) for n in names]


@dataclass(frozen=True)
class RunParams:
    """Dataset and training shape shared by every cell of a matrix."""

    task_id: str = "peg-in-hole"
    num_demos: int = 20
    eval_scenes: int = 25
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    scale: float = 1.0
    recon_scale: float = 1.0
    horizon: int = EPISODE_HORIZON


@dataclass(frozen=True)
class CellResult:
    task_id: str
    config_name: str
    seed: int
    n_eval: int
    n_success: int
    success_rate: float
    wall_time_s: float
    error: str = ""


@dataclass(frozen=True)
class GoalConditioning:
    """Per-scene conditioning produced by the goal pipeline."""

    goal_tokens: VisualTokens | None
    object_transform: Pose | None


def prepare_goal(scene: Scene, config: AblationConfig, params: RunParams, scene_seed: int) -> GoalConditioning:
    """Goal tokens and registered object transform for one scene."""
    cfg = params.policy
    if config.use_gt_goal:
        tokens = tokenize_observation(goal_observation(scene), cfg.v_tokens, cfg.voxel_size)
        t_obj = compose(scene.action_goal_pose, inverse(scene.action_init_pose))
        return GoalConditioning(tokens, t_obj)
    if config.use_imagined_goal:
        noise = replace(config.noise, seed=seed_for(config.noise.seed, "scene-noise", scene_seed))
        adapters = OracleAdapterSet(oracle_world(scene, params.recon_scale), noise)
        goal = imagine_goal(
            adapters, scene.observation, scene.task_id, ScaleTransform(params.scale),
            ACTION_LABEL, ANCHOR_LABEL,
        )
        tokens = tokenize_observation(goal.observation, cfg.v_tokens, cfg.voxel_size)
        return GoalConditioning(tokens, goal.object_transform.transform)
    return GoalConditioning(None, None)


def demo_training_pairs(
    demo: Demonstration, goal: GoalConditioning, config: AblationConfig, cfg: PolicyConfig
) -> list[tuple[RawConditioning, TrainingSample]]:
    """Per-timestep (conditioning, target-chunk) pairs from one demo."""
    k = cfg.chunk_size
    horizon = len(demo)
    pairs = []
    for t in range(horizon):
        cur = tokenize_observation(demo.observations[t], cfg.v_tokens, cfg.voxel_size)
        history = pad_history([HOME_POSE, *demo.actions[:t]], cfg.history_window)
        poses = list(demo.actions[t : t + k])
        grips = list(demo.gripper[t : t + k])
        while len(poses) < k:
            poses.append(poses[-1])
            grips.append(grips[-1])
        rel = demo.grasp_index - t
        grasp_rel = rel if (config.use_soft_loss and 0 <= rel < k) else None
        sample = TrainingSample(
            ActionSequence(tuple(poses), np.array(grips, dtype=bool)),
            grasp_rel,
            goal.object_transform if config.use_soft_loss else None,
        )
        raw = RawConditioning(
            visual_current=cur,
            visual_goal=goal.goal_tokens,
            task_id=task_index(demo.task_id),
            history=history,
            transform=goal.object_transform if config.use_transformation_token else None,
        )
        pairs.append((raw, sample))
    return pairs


class DiffusionKeyposePolicy(KeyposePolicy):
    """Trained policy driving lockstep evaluation episodes."""

    def __init__(self, params, cfg: PolicyConfig, config: AblationConfig,
                 goals: dict[int, GoalConditioning], seed: int):
        self.params = params
        self.cfg = cfg
        self.config = config
        self.goals = goals
        self.seed = seed
        self.sched = training_schedule(cfg)

    def act_batch(self, scenes, stage, observations, histories):
        token_sets = []
        for scene, obs, hist in zip(scenes, observations, histories):
            goal = self.goals[scene.seed]
            raw = RawConditioning(
                visual_current=tokenize_observation(obs, self.cfg.v_tokens, self.cfg.voxel_size),
                visual_goal=goal.goal_tokens,
                task_id=task_index(scene.task_id),
                history=pad_history(hist, self.cfg.history_window),
                transform=goal.object_transform if self.config.use_transformation_token else None,
            )
            token_sets.append(build_token_set(raw, self.params, self.cfg))
        seqs = sample_actions_batch(
            token_sets, self.params, self.sched, self.cfg, seed_for(self.seed, "eval-stage", stage)
        )
        return [(s.poses[0], bool(s.gripper[0])) for s in seqs]


def run_cell(config: AblationConfig, params: RunParams, seed: int) -> CellResult:
    """Generate data, train and evaluate one (config, seed) cell."""
    t0 = time.perf_counter()
    spec = get_task(params.task_id)
    loss_cfg = params.loss if config.use_soft_loss else replace(params.loss, lambda_pose=0.0)

    pairs = []
    for i in range(params.num_demos):
        scene_seed = seed_for(seed, "train-scene", i)
        scene = generate_scene(spec, scene_seed)
        demo = scripted_expert(scene)
        goal = prepare_goal(scene, config, params, scene_seed)
        pairs.extend(demo_training_pairs(demo, goal, config, params.policy))

    policy_params, _, _ = train_policy(pairs, params.policy, loss_cfg, seed=seed_for(seed, "train", config.name))

    eval_scenes = []
    goals = {}
    for j in range(params.eval_scenes):
        scene_seed = seed_for(seed, "eval-scene", j)
        scene = generate_scene(spec, scene_seed)
        eval_scenes.append(scene)
        goals[scene.seed] = prepare_goal(scene, config, params, scene_seed)
    policy = DiffusionKeyposePolicy(policy_params, params.policy, config, goals,
                                    seed=seed_for(seed, "eval", config.name))
    results = run_episodes(eval_scenes, policy, params.horizon)
    n_success = sum(r.success for r in results)
    return CellResult(
        task_id=params.task_id,
        config_name=config.name,
        seed=seed,
        n_eval=len(results),
        n_success=n_success,
        success_rate=n_success / len(results),
        wall_time_s=time.perf_counter() - t0,
    )


def run_ablation(matrix: list[AblationConfig], params: RunParams, threads: int = 1,
                 on_cell=None) -> list[CellResult]:
    """Every (config, seed) cell; failures become error rows, not aborts."""
    cells = [(config, seed) for config in matrix for seed in config.seeds]

    def one(args):
        config, seed = args
        try:
            res = run_cell(config, params, seed)
        except Exception as e:  # noqa: BLE001 - cell isolation is the contract
            res = CellResult(params.task_id, config.name, seed, 0, 0, float("nan"), 0.0, repr(e))
        if on_cell is not None:
            on_cell(res)
        return res

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, cells))
    else:
        results = [one(c) for c in cells]
    return sorted(results, key=lambda r: (r.task_id, r.config_name, r.seed))


def summarize(results: list[CellResult]) -> list[dict]:
    """Per-config mean rows with the margin against Ex0 (when present)."""
    by_name: dict[str, list[CellResult]] = {}
    for r in results:
        if not r.error:
            by_name.setdefault(r.config_name, []).append(r)
    means = {n: float(np.mean([r.success_rate for r in rs])) for n, rs in by_name.items()}
    baseline = means.get("Ex0")
    rows = []
    for name in sorted(by_name):
        rows.append(
            {
                "config_name": name,
                "n_seeds": len(by_name[name]),
                "mean_success": means[name],
                "margin_vs_ex0": (means[name] - baseline) if baseline is not None else float("nan"),
            }
        )
    return rows
