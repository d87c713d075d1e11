import numpy as np
import pytest

from i2a.consistency import (
    LossConfig,
    TokenEncoderParams,
    batched_soft_loss,
    batched_soft_loss_grads,
    encode_transformation_token,
    flatten_transform,
    relative_action_transform,
    soft_pose_loss,
    token_encoder_forward,
    token_encoder_backward,
)
from i2a.geometry import Pose, Rotation, compose, geodesic_distance, inverse, skew

from helpers import random_pose, relative_error

CFG = LossConfig()


def pose_rt(r, t):
    return Pose(r, np.asarray(t, dtype=float))


def test_relative_action_transform_examples():
    rng = np.random.default_rng(0)
    a = random_pose(rng)
    ident = relative_action_transform(a, a)
    np.testing.assert_allclose(ident.as_matrix(), np.eye(4), atol=1e-12)

    t = random_pose(rng)
    np.testing.assert_allclose(
        relative_action_transform(Pose.identity(), t).as_matrix(), t.as_matrix(), atol=1e-12
    )

    g = pose_rt(Rotation.about_z(np.pi / 2), [1, 0, 0])
    f = pose_rt(Rotation.about_z(np.pi), [0, 1, 0])
    expected = f.as_matrix() @ np.linalg.inv(g.as_matrix())
    np.testing.assert_allclose(relative_action_transform(g, f).as_matrix(), expected, atol=1e-12)


def test_flatten_transform_examples():
    np.testing.assert_allclose(
        flatten_transform(Pose.identity()), [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]
    )
    np.testing.assert_allclose(
        flatten_transform(pose_rt(Rotation.identity(), [1, 2, 3])),
        [1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 2, 3],
    )
    np.testing.assert_allclose(
        flatten_transform(pose_rt(Rotation.about_z(np.pi / 2), [0, 0, 0])),
        [0, -1, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0],
        atol=1e-12,
    )


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(k_r=0.0)
    with pytest.raises(ValueError):
        LossConfig(tau_t=-1.0)
    with pytest.raises(ValueError):
        LossConfig(lambda_pose=-0.1)


def test_loss_is_one_exactly_at_thresholds():
    t_obj = Pose.identity()
    t_act = pose_rt(Rotation.about_z(CFG.tau_r), [CFG.tau_t, 0, 0])
    loss, _ = soft_pose_loss(t_act, t_obj, CFG)
    assert loss == pytest.approx(1.0, abs=1e-9)


def test_loss_below_one_at_zero_deviation():
    t = random_pose(np.random.default_rng(1))
    loss, _ = soft_pose_loss(t, t, CFG)
    expected = 1.0 / (1.0 + np.exp(CFG.k_r * CFG.tau_r)) + 1.0 / (1.0 + np.exp(CFG.k_t * CFG.tau_t))
    # arccos is ill-conditioned at theta = 0: comparing a rotation against
    # itself yields theta ~ sqrt(ulp), hence the loose absolute tolerance.
    assert loss == pytest.approx(expected, abs=1e-6)
    assert loss < 1.0
    ident = Pose.identity()
    exact, _ = soft_pose_loss(ident, ident, CFG)
    assert exact == pytest.approx(expected, abs=1e-15)


def test_loss_monotone_in_each_argument():
    thetas = np.linspace(0.0, np.pi, 100)
    dists = np.linspace(0.0, 0.1, 100)
    t_obj = Pose.identity()
    losses = np.zeros((100, 100))
    for i, th in enumerate(thetas):
        r = Rotation.about_z(th)
        for j, d in enumerate(dists):
            losses[i, j] = soft_pose_loss(pose_rt(r, [d, 0, 0]), t_obj, CFG)[0]
    assert np.all(np.diff(losses, axis=0) >= 0)
    assert np.all(np.diff(losses, axis=1) >= 0)


def test_loss_bounds():
    rng = np.random.default_rng(2)
    for _ in range(200):
        t_act = random_pose(rng, 0.05)
        t_obj = random_pose(rng, 0.05)
        loss, _ = soft_pose_loss(t_act, t_obj, CFG)
        assert 0.0 < loss <= 2.0


def test_rotation_term_crosses_half_at_tau():
    t_obj = Pose.identity()

    def rot_term(theta):
        loss, _ = soft_pose_loss(pose_rt(Rotation.about_z(theta), [0, 0, 0]), t_obj, CFG)
        # subtract the translation term at d=0
        return loss - 1.0 / (1.0 + np.exp(CFG.k_t * CFG.tau_t))

    assert rot_term(CFG.tau_r) == pytest.approx(0.5, abs=1e-9)
    loss_at_tau_t, _ = soft_pose_loss(pose_rt(Rotation.identity(), [CFG.tau_t, 0, 0]), t_obj, CFG)
    trans_term = loss_at_tau_t - 1.0 / (1.0 + np.exp(CFG.k_r * CFG.tau_r))
    assert trans_term == pytest.approx(0.5, abs=1e-9)


def _rise_width(cfg):
    """theta-interval where the rotation term climbs 0.25 -> 0.75, by bisection."""
    t_obj = Pose.identity()

    def term(theta):
        loss, _ = soft_pose_loss(pose_rt(Rotation.about_z(theta), [0, 0, 0]), t_obj, cfg)
        return loss - 1.0 / (1.0 + np.exp(cfg.k_t * cfg.tau_t))

    def solve(level):
        lo, hi = 0.0, np.pi / 2
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if term(mid) < level:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    return solve(0.75) - solve(0.25)


def test_doubling_slope_halves_rise_width():
    w1 = _rise_width(LossConfig(k_r=50.0))
    w2 = _rise_width(LossConfig(k_r=100.0))
    assert w1 == pytest.approx(2.0 * w2, abs=1e-9)


def _fd_soft_grad(t_act, t_obj, cfg, h=1e-6):
    grad = np.zeros(6)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        rp = Pose(t_act.rotation @ Rotation.from_rotvec(e), t_act.translation)
        rm = Pose(t_act.rotation @ Rotation.from_rotvec(-e), t_act.translation)
        grad[k] = (soft_pose_loss(rp, t_obj, cfg)[0] - soft_pose_loss(rm, t_obj, cfg)[0]) / (2 * h)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        tp = Pose(t_act.rotation, t_act.translation + e)
        tm = Pose(t_act.rotation, t_act.translation - e)
        grad[3 + k] = (soft_pose_loss(tp, t_obj, cfg)[0] - soft_pose_loss(tm, t_obj, cfg)[0]) / (2 * h)
    return grad


def test_soft_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 30:
        t_act = random_pose(rng, 0.05)
        t_obj = random_pose(rng, 0.05)
        theta = geodesic_distance(t_act.rotation, t_obj.rotation)
        if theta < 0.05 or theta > np.pi - 0.05:
            continue
        _, grad = soft_pose_loss(t_act, t_obj, CFG)
        fd = _fd_soft_grad(t_act, t_obj, CFG)
        scale = max(1e-6, np.abs(fd).max())
        assert np.abs(grad - fd).max() / scale <= 1e-4
        checked += 1


def test_soft_loss_subgradients_zero_at_kinks():
    t = random_pose(np.random.default_rng(4))
    _, grad = soft_pose_loss(t, t, CFG)  # theta = 0 and d = 0
    np.testing.assert_allclose(grad, np.zeros(6))


def test_batched_soft_loss_examples():
    rng = np.random.default_rng(5)
    poses = [random_pose(rng, 0.1) for _ in range(4)]
    t_obj = random_pose(rng, 0.1)
    # grasp at the last index: nothing follows
    assert batched_soft_loss(poses, 3, t_obj, CFG) == 0.0
    # single post-grasp step equals the plain loss of that step
    single = batched_soft_loss(poses[:3], 1, t_obj, CFG)
    rel = relative_action_transform(poses[1], poses[2])
    assert single == pytest.approx(soft_pose_loss(rel, t_obj, CFG)[0], abs=1e-12)
    # three post-grasp steps: arithmetic mean
    got = batched_soft_loss(poses, 0, t_obj, CFG)
    expected = np.mean(
        [soft_pose_loss(relative_action_transform(poses[0], p), t_obj, CFG)[0] for p in poses[1:]]
    )
    assert got == pytest.approx(expected, abs=1e-12)
    with pytest.raises(IndexError):
        batched_soft_loss(poses, 4, t_obj, CFG)
    with pytest.raises(IndexError):
        batched_soft_loss(poses, -1, t_obj, CFG)


def test_batched_grads_match_finite_differences():
    rng = np.random.default_rng(6)
    poses = [random_pose(rng, 0.05) for _ in range(4)]
    t_obj = random_pose(rng, 0.05)
    loss, d_rot, d_trans = batched_soft_loss_grads(poses, 1, t_obj, CFG)
    h = 1e-6
    for i in range(4):
        for a in range(3):
            for b in range(3):
                def perturbed(sign):
                    m = poses[i].rotation.m.copy()
                    m[a, b] += sign * h
                    ps = list(poses)
                    # bypass orthonormalization: evaluate the raw matrix path
                    ps_r = [p.rotation.m for p in poses]
                    ps_t = [p.translation for p in poses]
                    ps_r[i] = m
                    return _raw_batched_loss(ps_r, ps_t, 1, t_obj, CFG)

                fd = (perturbed(1.0) - perturbed(-1.0)) / (2 * h)
                assert abs(fd - d_rot[i, a, b]) <= 1e-5 * max(1.0, abs(fd))
        for a in range(3):
            tp = list(poses)
            delta = np.zeros(3)
            delta[a] = h
            tp[i] = Pose(poses[i].rotation, poses[i].translation + delta)
            tm = list(poses)
            tm[i] = Pose(poses[i].rotation, poses[i].translation - delta)
            fd = (batched_soft_loss(tp, 1, t_obj, CFG) - batched_soft_loss(tm, 1, t_obj, CFG)) / (2 * h)
            assert abs(fd - d_trans[i, a]) <= 1e-5 * max(1.0, abs(fd))


def _raw_batched_loss(rot_mats, translations, grasp_index, t_obj, cfg):
    """Loss recomputed on raw matrices (no SO(3) projection), for FD checks."""
    from i2a.consistency import _soft_terms

    total = 0.0
    count = 0
    rg, pg = rot_mats[grasp_index], translations[grasp_index]
    for j in range(grasp_index + 1, len(rot_mats)):
        r_act = rot_mats[j] @ rg.T
        p_act = translations[j] - r_act @ pg
        total += _soft_terms(r_act, p_act, t_obj, cfg)[0]
        count += 1
    return total / count if count else 0.0


def test_token_encoder_zero_weights_gives_bias_token():
    p = TokenEncoderParams(
        w1=np.zeros((12, 4)), b1=np.zeros(4), w2=np.zeros((4, 8)), b2=np.zeros(8),
        wa=np.zeros((8, 8)), ba=np.zeros(8),
    )
    tok = encode_transformation_token(Pose.identity(), p)
    np.testing.assert_allclose(tok.vector, np.zeros(8))
    p2 = TokenEncoderParams(
        w1=np.zeros((12, 4)), b1=np.zeros(4), w2=np.zeros((4, 8)), b2=np.zeros(8),
        wa=np.zeros((8, 8)), ba=np.full(8, 0.25),
    )
    np.testing.assert_allclose(encode_transformation_token(Pose.identity(), p2).vector, np.full(8, 0.25))


def test_token_encoder_deterministic():
    rng = np.random.default_rng(7)
    p = TokenEncoderParams.initialize(rng, hidden=8, d_model=16)
    t = random_pose(rng)
    a = encode_transformation_token(t, p).vector
    b = encode_transformation_token(t, p).vector
    np.testing.assert_array_equal(a, b)


def test_token_encoder_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    p = TokenEncoderParams.initialize(rng, hidden=8, d_model=16)
    t = random_pose(rng)
    flat = flatten_transform(t)
    probe = rng.normal(size=16)

    token, cache = token_encoder_forward(flat, p)
    grads, d_flat = token_encoder_backward(p, cache, probe)

    h = 1e-6
    for name, arr in p.arrays().items():
        g = grads[name]
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            up = float(probe @ token_encoder_forward(flat, p)[0])
            arr[idx] = orig - h
            dn = float(probe @ token_encoder_forward(flat, p)[0])
            arr[idx] = orig
            fd = (up - dn) / (2 * h)
            assert relative_error(fd, g[idx]) <= 1e-4 or abs(fd - g[idx]) < 1e-9
    for k in range(12):
        e = np.zeros(12)
        e[k] = h
        fd = (probe @ token_encoder_forward(flat + e, p)[0] - probe @ token_encoder_forward(flat - e, p)[0]) / (2 * h)
        assert relative_error(fd, d_flat[k]) <= 1e-4 or abs(fd - d_flat[k]) < 1e-9
