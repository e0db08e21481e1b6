import numpy as np
import pytest

from separation.envelope import SampleEnvelope
from separation.trajectory import (IntensityTrajectory, TrackLossConfig, Trajectory, differential, differential_loss,
                                   directions_from_intensity, frame_intensity_trajectory, make_intensity_trajectory,
                                   nearest_valid_index, tracking_loss, trajectory_loss)
from utils.errors import ConfigError, SignalShapeError, ZeroEnergyError


def _circle(n: int) -> Trajectory:
    phi = np.linspace(0, np.pi, n)
    return Trajectory(np.stack([np.cos(phi), np.sin(phi), np.zeros(n)], axis=1))


def test_trajectory_requires_unit_rows():
    with pytest.raises(SignalShapeError, match="row 1"):
        Trajectory(np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))


def test_intensity_scaling():
    traj = _circle(10)
    np.testing.assert_allclose(make_intensity_trajectory(SampleEnvelope(np.ones(10)), traj).vecs, traj.dirs)
    assert not np.any(make_intensity_trajectory(SampleEnvelope(np.zeros(10)), traj).vecs)
    it = make_intensity_trajectory(SampleEnvelope(np.full(3, 2.0)), Trajectory(np.tile([1.0, 0.0, 0.0], (3, 1))))
    np.testing.assert_array_equal(it.vecs[0], [2.0, 0.0, 0.0])
    assert np.linalg.norm(it.vecs[0]) == 2.0
    with pytest.raises(SignalShapeError):
        make_intensity_trajectory(SampleEnvelope(np.ones(9)), traj)


def test_framing_constant_and_cancelling():
    const = IntensityTrajectory(np.tile([0.1, 0.2, 0.3], (1024, 1)))
    framed = frame_intensity_trajectory(const)
    assert len(framed) == 7
    np.testing.assert_allclose(framed.vecs, np.tile([0.1, 0.2, 0.3], (7, 1)))

    signs = np.where(np.arange(1024) % 2 == 0, 1.0, -1.0)
    alternating = IntensityTrajectory(signs[:, None] * np.array([1.0, -1.0, 0.5]))
    np.testing.assert_allclose(frame_intensity_trajectory(alternating).vecs, 0.0, atol=1e-12)

    with pytest.raises(SignalShapeError):
        frame_intensity_trajectory(IntensityTrajectory(np.ones((100, 3))))


def test_directions_fill_silent_rows_from_neighbours():
    vecs = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 3.0, 0.0]])
    traj = directions_from_intensity(IntensityTrajectory(vecs))
    np.testing.assert_allclose(traj.dirs, [[1, 0, 0], [1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 1, 0]])
    with pytest.raises(ZeroEnergyError):
        directions_from_intensity(IntensityTrajectory(np.zeros((4, 3))))


def test_nearest_valid_index_ties_go_left():
    np.testing.assert_array_equal(nearest_valid_index(np.array([1, 3]), 5), [1, 1, 1, 3, 3])


def test_trajectory_loss_values():
    traj = _circle(20)
    assert trajectory_loss(traj, traj, np.ones(20)) == 0.0
    other = Trajectory(traj.dirs[::-1].copy())
    assert trajectory_loss(traj, other, np.zeros(20)) == 0.0
    # per-component mean: (1 + 1 + 0) / 3
    loss = trajectory_loss(np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]), np.ones(1))
    assert loss == pytest.approx(2.0 / 3.0)
    with pytest.raises(SignalShapeError):
        trajectory_loss(traj, traj, np.ones(19))


def test_differential_values():
    assert not np.any(differential(np.ones((10, 3)), 4))
    v = np.array([0.1, -0.2, 0.05])
    drift = np.arange(10)[:, None] * v
    np.testing.assert_allclose(differential(drift, 3), np.tile(3 * v, (7, 1)))
    with pytest.raises(SignalShapeError):
        differential(drift, 10)


def test_differential_loss_values():
    traj = _circle(2048)
    assert differential_loss(traj, traj) == 0.0
    shifted = traj.dirs + np.array([0.3, -0.1, 0.2])
    assert differential_loss(shifted, traj.dirs) == pytest.approx(0.0, abs=1e-24)

    v = np.array([0.1, 0.2, 0.3])
    slope = np.arange(50)[:, None] * v
    static = np.zeros((50, 3))
    assert differential_loss(static, slope, D=0) == pytest.approx(np.mean(v ** 2))


def test_differential_loss_scale_limit():
    x = np.zeros((8, 3))
    with pytest.raises(SignalShapeError):
        differential_loss(x, x, D=3)
    assert differential_loss(x, x, D=3, clip_scales=True) == 0.0


def test_tracking_loss_combination():
    traj = _circle(64)
    other = Trajectory(np.roll(traj.dirs, 5, axis=0))
    env = np.linspace(0.1, 1.0, 64)
    a = trajectory_loss(other, traj, env)
    b = differential_loss(other, traj, D=4)
    assert tracking_loss(traj, traj, env, TrackLossConfig(D=4)) == 0.0
    assert tracking_loss(other, traj, env, TrackLossConfig(alpha=1.0, beta=0.0, D=4)) == pytest.approx(a)
    assert tracking_loss(other, traj, env, TrackLossConfig(D=4)) == pytest.approx(0.5 * a + 0.5 * b)


def test_tracking_loss_with_groundtruth_weights():
    traj = _circle(64)
    other = Trajectory(np.roll(traj.dirs, 3, axis=0))
    est_env = np.ones(64)
    trg_env = np.zeros(64)
    cfg = TrackLossConfig(alpha=1.0, beta=0.0, D=2, weight="trg")
    assert tracking_loss(other, traj, est_env, cfg, trg_env=trg_env) == 0.0
    with pytest.raises(ConfigError):
        tracking_loss(other, traj, est_env, cfg)


def test_track_loss_config_validation():
    with pytest.raises(ConfigError):
        TrackLossConfig(alpha=-1.0)
    with pytest.raises(ConfigError):
        TrackLossConfig(weight="both")


def _loop_trajectory_loss(est, trg, env):
    total = 0.0
    for e, t, w in zip(est, trg, env):
        total += sum((w * (a - b)) ** 2 for a, b in zip(e, t))
    return total / (3 * len(env))


def _loop_differential_loss(est, trg, D):
    per_scale = []
    for d in [2 ** i for i in range(D + 1)]:
        total = 0.0
        for n in range(d, len(est)):
            total += sum(((est[n][k] - est[n - d][k]) - (trg[n][k] - trg[n - d][k])) ** 2 for k in range(3))
        per_scale.append(total / (3 * (len(est) - d)))
    return sum(per_scale) / len(per_scale)


def test_losses_match_loop_references():
    rng = np.random.default_rng(51)
    for _ in range(20):
        n = int(rng.integers(40, 120))
        est, trg = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
        env = rng.uniform(0.0, 1.0, n)
        D = int(rng.integers(0, 5))
        a = trajectory_loss(est, trg, env)
        b = differential_loss(est, trg, D=D)
        assert a == pytest.approx(_loop_trajectory_loss(est, trg, env), rel=1e-9)
        assert b == pytest.approx(_loop_differential_loss(est, trg, D), rel=1e-9)

        alpha, beta = rng.uniform(0.0, 2.0, 2)
        cfg = TrackLossConfig(alpha=float(alpha), beta=float(beta), D=D)
        assert tracking_loss(est, trg, env, cfg) == pytest.approx(alpha * a + beta * b, rel=1e-9)


def test_differential_loss_ignores_random_offsets():
    rng = np.random.default_rng(52)
    for _ in range(20):
        n = int(rng.integers(70, 200))
        est, trg = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
        value = differential_loss(est, trg, D=6)
        shifted = differential_loss(est + rng.uniform(-5, 5, 3), trg + rng.uniform(-5, 5, 3), D=6)
        assert shifted == pytest.approx(value, rel=1e-9)
