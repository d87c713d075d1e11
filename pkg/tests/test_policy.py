import numpy as np
import pytest

from i2a.cameras import CameraModel, SceneObservation, look_at, project
from i2a.clouds import PointCloud, voxel_keys
from i2a.consistency import LossConfig
from i2a.geometry import Pose, Rotation, geodesic_distance
from i2a.policy import (
    ActionSequence,
    Adam,
    CheckpointIncompatibleError,
    NoiseSchedule,
    PolicyConfig,
    PolicyParams,
    RawConditioning,
    TrainingSample,
    build_token_set,
    decode_chunk,
    diffusion_train_step,
    encode_chunk,
    encode_history,
    load_checkpoint,
    pad_history,
    sample_actions,
    save_checkpoint,
    tokenize_observation,
    train_policy,
    training_schedule,
)
from i2a.policy.actions import rot6d_backward, rot6d_from_matrix, rot6d_to_matrix
from i2a.rng import rng_for

from helpers import random_pose, relative_error

TOY = PolicyConfig(
    d_model=16,
    v_tokens=6,
    voxel_size=0.05,
    chunk_size=2,
    history_window=1,
    hidden=(24,),
    token_hidden=8,
    time_embed_dim=8,
    num_steps=20,
    num_tasks=3,
)


def scene_observation(rng, n=300):
    cam = CameraModel(fx=128.0, fy=128.0, cx=64.0, cy=64.0, width=128, height=128,
                      extrinsic=look_at([0.0, -0.5, 0.4], [0.0, 0.0, 0.05]))
    pts = rng.uniform([-0.15, -0.15, 0.0], [0.15, 0.15, 0.12], (n, 3))
    colors = rng.uniform(0, 1, (n, 3))
    labels = rng.integers(1, 4, n).astype(np.uint32)
    return project(PointCloud(pts, colors, labels), cam)


def toy_conditioning(rng, cfg=TOY, with_goal=True, with_tf=True):
    obs = scene_observation(rng)
    cur = tokenize_observation(obs, cfg.v_tokens, cfg.voxel_size)
    goal = tokenize_observation(scene_observation(rng), cfg.v_tokens, cfg.voxel_size) if with_goal else None
    history = tuple(random_pose(rng, 0.2) for _ in range(cfg.history_window + 1))
    tf = random_pose(rng, 0.2) if with_tf else None
    return RawConditioning(cur, goal, int(rng.integers(cfg.num_tasks)), history, tf)


def toy_sample(rng, cfg=TOY, grasp_index=0):
    poses = tuple(random_pose(rng, 0.2) for _ in range(cfg.chunk_size))
    gripper = rng.integers(0, 2, cfg.chunk_size).astype(bool)
    return TrainingSample(ActionSequence(poses, gripper), grasp_index, random_pose(rng, 0.2))


def test_rot6d_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        r = Rotation.random(rng)
        m, _ = rot6d_to_matrix(rot6d_from_matrix(r.m))
        np.testing.assert_allclose(m, r.m, atol=1e-12)


def test_rot6d_backward_matches_fd():
    rng = np.random.default_rng(1)
    r6 = rng.normal(size=(4, 6))
    probe = rng.normal(size=(4, 3, 3))
    m, cache = rot6d_to_matrix(r6)
    grad = rot6d_backward(cache, probe)
    h = 1e-6
    for i in range(4):
        for j in range(6):
            rp = r6.copy()
            rp[i, j] += h
            rm = r6.copy()
            rm[i, j] -= h
            fd = (np.sum(probe[i] * rot6d_to_matrix(rp)[0][i]) - np.sum(probe[i] * rot6d_to_matrix(rm)[0][i])) / (2 * h)
            assert relative_error(fd, grad[i, j]) <= 1e-5 or abs(fd - grad[i, j]) < 1e-8


def test_chunk_encode_decode_roundtrip():
    rng = np.random.default_rng(2)
    seq = ActionSequence(tuple(random_pose(rng, 0.2) for _ in range(3)), np.array([True, False, True]))
    x = encode_chunk(seq, (0.0, 0.0, 0.1), 0.3)
    back = decode_chunk(x, (0.0, 0.0, 0.1), 0.3)
    for a, b in zip(seq.poses, back.poses):
        np.testing.assert_allclose(a.as_matrix(), b.as_matrix(), atol=1e-12)
    np.testing.assert_array_equal(seq.gripper, back.gripper)


def test_noise_schedule_validation():
    with pytest.raises(ValueError):
        NoiseSchedule(np.array([0.5, 0.1]))
    with pytest.raises(ValueError):
        NoiseSchedule(np.array([0.0, 0.1]))
    s = NoiseSchedule.linear(10, 1e-4, 2e-2)
    assert s.num_steps == 10
    assert np.all(s.alpha_bars > 0) and np.all(s.alpha_bars <= 1)


def test_tokenizer_deterministic_and_padded():
    rng = np.random.default_rng(3)
    obs = scene_observation(rng)
    a = tokenize_observation(obs, 128, 0.025)
    b = tokenize_observation(obs, 128, 0.025)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)

    cam = obs.camera
    empty = SceneObservation(np.zeros((128, 128, 3)), np.zeros((128, 128)),
                             np.zeros((128, 128), dtype=np.uint32), cam)
    toks = tokenize_observation(empty, 16, 0.025)
    np.testing.assert_array_equal(toks.features, np.zeros((16, 7)))
    assert np.all(toks.labels == -1)


def test_tokenizer_centroids_match_independent_pass():
    rng = np.random.default_rng(4)
    obs = scene_observation(rng, n=150)
    toks = tokenize_observation(obs, 256, 0.05)
    from i2a.cameras import unproject

    cloud = unproject(obs)
    keys = voxel_keys(cloud.points, 0.05)
    by_voxel = {}
    for p, key in zip(cloud.points, map(tuple, keys)):
        by_voxel.setdefault(key, []).append(p)
    expected = {tuple(np.mean(v, axis=0).round(12)) for v in by_voxel.values()}
    got = {tuple(f[:3].round(12)) for f, l in zip(toks.features, toks.labels) if l != -1}
    assert got == expected


def test_history_padding_and_tokens():
    rng = np.random.default_rng(5)
    params = PolicyParams.initialize(TOY, 0)
    p = random_pose(rng)
    padded = pad_history([p], 2)
    assert len(padded) == 3
    assert all(q is padded[0] for q in padded)
    toks = encode_history([p], 2, params)
    assert toks.shape == (3, TOY.d_model)
    assert np.allclose(toks[0], toks[1]) and np.allclose(toks[1], toks[2])

    ident_toks = encode_history([Pose.identity()] * 3, 2, params)
    assert np.allclose(ident_toks[0], ident_toks[2])


def test_history_gradient_via_train_step():
    # hist_w1/hist_w2 receive correct gradients; covered by the full FD test
    # below, but check quickly that they are nonzero.
    rng = np.random.default_rng(6)
    sample = toy_sample(rng)
    cond = toy_conditioning(rng)
    res = diffusion_train_step(sample, cond, PolicyParams.initialize(TOY, 1),
                               training_schedule(TOY), LossConfig(), TOY, seed=7)
    assert np.abs(res.grads["hist_w1"]).max() > 0
    assert np.abs(res.grads["language"]).max() > 0


def test_lambda_zero_gradient_bitwise_equal_to_diff_only():
    rng = np.random.default_rng(7)
    sample = toy_sample(rng)
    cond = toy_conditioning(rng)
    params = PolicyParams.initialize(TOY, 2)
    sched = training_schedule(TOY)
    res0 = diffusion_train_step(sample, cond, params, sched, LossConfig(lambda_pose=0.0), TOY, seed=11)
    # a sample with no consistency target yields the pure denoising gradient
    bare = TrainingSample(sample.chunk, None, None)
    res1 = diffusion_train_step(bare, cond, params, sched, LossConfig(lambda_pose=1.0), TOY, seed=11)
    for k in res0.grads:
        np.testing.assert_array_equal(res0.grads[k], res1.grads[k])
    assert res0.l_soft != 0.0  # value still reported when lambda is zero


def test_objective_linearity_in_lambda():
    rng = np.random.default_rng(8)
    sample = toy_sample(rng)
    cond = toy_conditioning(rng)
    params = PolicyParams.initialize(TOY, 3)
    sched = training_schedule(TOY)
    results = {}
    for lam in (0.0, 0.3, 0.7, 1.0):
        r = diffusion_train_step(sample, cond, params, sched, LossConfig(lambda_pose=lam), TOY, seed=13)
        results[lam] = r
        assert r.l_diff == results[0.0].l_diff
        assert r.l_soft == results[0.0].l_soft
    total = lambda lam: results[lam].l_diff + lam * results[lam].l_soft
    assert abs(total(1.0) - (results[0.0].l_diff + (0.3 + 0.7) * results[0.0].l_soft)) <= 1e-12


def test_full_gradient_matches_finite_differences():
    rng = np.random.default_rng(9)
    sample = toy_sample(rng, grasp_index=0)
    cond = toy_conditioning(rng)
    params = PolicyParams.initialize(TOY, 4)
    sched = training_schedule(TOY)
    loss_cfg = LossConfig(lambda_pose=0.7)

    def total_loss():
        r = diffusion_train_step(sample, cond, params, sched, loss_cfg, TOY, seed=17)
        return r.l_diff + loss_cfg.lambda_pose * r.l_soft

    res = diffusion_train_step(sample, cond, params, sched, loss_cfg, TOY, seed=17)
    h = 1e-5
    rng_pick = np.random.default_rng(10)
    for name, arr in params.arrays().items():
        flat = arr.reshape(-1)
        n_check = min(10, flat.size)
        for j in rng_pick.choice(flat.size, n_check, replace=False):
            orig = flat[j]
            flat[j] = orig + h
            up = total_loss()
            flat[j] = orig - h
            dn = total_loss()
            flat[j] = orig
            fd = (up - dn) / (2 * h)
            an = res.grads[name].reshape(-1)[j]
            assert relative_error(fd, an) <= 1e-3 or abs(fd - an) < 1e-8, (
                f"{name}[{j}]: fd={fd} analytic={an}"
            )


def test_sampling_deterministic_and_proper():
    rng = np.random.default_rng(11)
    cond = toy_conditioning(rng)
    params = PolicyParams.initialize(TOY, 5)
    sched = training_schedule(TOY)
    ts = build_token_set(cond, params, TOY)
    a = sample_actions(ts, params, sched, TOY, seed=23)
    b = sample_actions(ts, params, sched, TOY, seed=23)
    for pa, pb in zip(a.poses, b.poses):
        np.testing.assert_array_equal(pa.as_matrix(), pb.as_matrix())
    np.testing.assert_array_equal(a.gripper, b.gripper)
    for p in a.poses:
        m = p.rotation.m
        assert np.abs(m.T @ m - np.eye(3)).max() <= 1e-9
        assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-9)
    c = sample_actions(ts, params, sched, TOY, seed=24)
    assert any(not np.allclose(pa.as_matrix(), pc.as_matrix()) for pa, pc in zip(a.poses, c.poses))


def test_overfit_single_demo_recovers_chunk():
    rng = np.random.default_rng(12)
    cfg = PolicyConfig(
        d_model=16, v_tokens=6, voxel_size=0.05, chunk_size=2, history_window=1,
        hidden=(48,), token_hidden=8, time_embed_dim=8, num_steps=100,
        num_tasks=3, learning_rate=3e-3, epochs=4000, batch_size=8,
    )
    cond = toy_conditioning(rng, cfg)
    target = ActionSequence(
        (Pose(Rotation.about_z(0.3), np.array([0.05, -0.02, 0.15])),
         Pose(Rotation.about_x(-0.2), np.array([-0.04, 0.03, 0.2]))),
        np.array([True, False]),
    )
    pairs = [(cond, TrainingSample(target, None, None))] * cfg.batch_size
    params, _, log = train_policy(pairs, cfg, LossConfig(lambda_pose=0.0), seed=31)
    assert log[-1].l_diff < 0.01
    for seed in (99, 100, 101):
        ts = build_token_set(cond, params, cfg)
        out = sample_actions(ts, params, training_schedule(cfg), cfg, seed=seed)
        for got, want in zip(out.poses, target.poses):
            assert geodesic_distance(got.rotation, want.rotation) <= 0.02
            assert np.linalg.norm(got.translation - want.translation) <= 0.002
        np.testing.assert_array_equal(out.gripper, target.gripper)


def test_checkpoint_roundtrip_and_incompatibility(tmp_path):
    params = PolicyParams.initialize(TOY, 6)
    opt = Adam(params.arrays())
    save_checkpoint(tmp_path / "ck", params, TOY, LossConfig(), seed=3, epoch=5, opt=opt)
    loaded, cfg, loss_cfg, manifest, opt2 = load_checkpoint(tmp_path / "ck")
    assert cfg == TOY
    assert manifest["epoch"] == 5
    for k, v in params.arrays().items():
        np.testing.assert_allclose(loaded.arrays()[k], v.astype(np.float32), atol=0)
    with pytest.raises(CheckpointIncompatibleError):
        load_checkpoint(tmp_path / "ck", expected_cfg=PolicyConfig(d_model=32))


def test_ablation_modes_keep_parameter_layout():
    shapes = {k: v.shape for k, v in PolicyParams.initialize(TOY, 7).arrays().items()}
    # modes only change inputs (zero tokens), never the parameter set
    rng = np.random.default_rng(13)
    for with_goal in (False, True):
        for with_tf in (False, True):
            cond = toy_conditioning(rng, with_goal=with_goal, with_tf=with_tf)
            params = PolicyParams.initialize(TOY, 7)
            res = diffusion_train_step(toy_sample(rng), cond, params,
                                       training_schedule(TOY), LossConfig(), TOY, seed=37)
            assert {k: v.shape for k, v in res.grads.items()} == shapes
