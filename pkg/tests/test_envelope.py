import math
from itertools import permutations

import numpy as np
import pytest

from separation.envelope import (FrameEnvelope, envelope_case_loss, envelope_set_loss, estimate_source_count,
                                 extract_envelope, groundtruth_envelopes, inactive_env_loss, interpolate_to_samples,
                                 nmse_loss, normalize_by_mixture_peak)
from utils.errors import SignalShapeError, SourceCountError, ZeroEnergyError


def test_constant_signal_envelope():
    env = extract_envelope(np.full(1000, 0.5))
    np.testing.assert_array_equal(env.values, 0.5)
    assert (env.win, env.hop) == (256, 128)


def test_impulse_only_in_covering_frames():
    x = np.zeros(1024)
    x[300] = 1.0
    env = extract_envelope(x, 256, 128)
    np.testing.assert_array_equal(env.values, [0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])


def test_envelope_uses_magnitude():
    x = np.zeros(512)
    x[10] = -0.7
    assert extract_envelope(x).values[0] == pytest.approx(0.7)


def test_short_signal_is_rejected():
    with pytest.raises(SignalShapeError):
        extract_envelope(np.zeros(255))


def test_interpolation_of_constant_frames():
    env = interpolate_to_samples(FrameEnvelope(np.full(5, 0.3)), 768)
    np.testing.assert_allclose(env.values, 0.3)
    assert len(env) == 768


def test_interpolation_midpoint():
    env = interpolate_to_samples(FrameEnvelope(np.array([0.0, 1.0])), 400)
    # anchors at 128 and 256
    assert env.values[192] == pytest.approx(0.5)
    assert env.values[0] == 0.0
    assert env.values[-1] == 1.0


def test_extract_then_interpolate_constant():
    x = np.full(2000, 0.25)
    env = interpolate_to_samples(extract_envelope(x), x.shape[0])
    np.testing.assert_allclose(env.values, 0.25)


def test_interpolation_needs_two_frames():
    with pytest.raises(SignalShapeError):
        interpolate_to_samples(FrameEnvelope(np.array([1.0])), 100)


def test_negative_envelope_is_rejected():
    with pytest.raises(SignalShapeError):
        FrameEnvelope(np.array([0.1, -0.1]))


def test_nmse_cases():
    trg = np.array([[1.0, 1.0, 1.0, 1.0]])
    assert nmse_loss(trg, trg) == -100.0
    assert nmse_loss(np.zeros_like(trg), trg) == pytest.approx(0.0)
    half = np.array([[2.0, 2.0, 1.0, 1.0]])
    assert nmse_loss(half, trg) == pytest.approx(-3.0103, abs=1e-4)


def test_nmse_averages_over_sources():
    trg = [FrameEnvelope(np.ones(4)), FrameEnvelope(np.ones(4))]
    est = [FrameEnvelope(np.ones(4)), FrameEnvelope(np.zeros(4))]
    assert nmse_loss(est, trg) == pytest.approx((-100.0 + 0.0) / 2)


def test_nmse_rejects_silent_target():
    with pytest.raises(ZeroEnergyError):
        nmse_loss(np.ones((1, 4)), np.zeros((1, 4)))


def test_inactive_loss():
    assert inactive_env_loss(np.zeros(4), np.full(4, 5.0)) == pytest.approx(0.0)
    assert inactive_env_loss(np.zeros(4), np.full(4, 0.5)) == pytest.approx(-20.0)
    with pytest.raises(SignalShapeError):
        inactive_env_loss(np.zeros(3), np.zeros(4))


def _targets():
    t = np.linspace(0, 1, 50)
    return np.stack([0.5 + 0.5 * np.sin(2 * np.pi * t), t, 1.0 - t]) + 0.01


def test_set_loss_identity_and_reversal():
    trg = _targets()
    mix = trg.sum(axis=0)
    loss, perm = envelope_set_loss(trg, trg, 3, mix)
    assert perm == (0, 1, 2)
    assert loss == -100.0
    _, perm = envelope_set_loss(trg[::-1], trg, 3, mix)
    assert perm == (2, 1, 0)


def test_set_loss_assigns_quiet_channel_to_silent_target():
    trg = _targets()[:2]
    mix = trg.sum(axis=0)
    est = np.stack([trg[0], np.full(50, 1e-6), trg[1]])
    loss, perm = envelope_set_loss(est, trg, 3, mix)
    assert perm == (0, 2, 1)

    # brute force over all 6 assignments
    padded = [trg[0], trg[1], None]
    totals = {p: sum(envelope_case_loss(est[i], padded[p[i]], mix) for i in range(3))
              for p in permutations(range(3))}
    best = min(totals, key=lambda p: (totals[p], p))
    assert perm == best
    assert loss == pytest.approx(totals[best] / 3)


def test_set_loss_rejects_too_many_targets():
    trg = _targets()
    with pytest.raises(SourceCountError):
        envelope_set_loss(trg[:2], trg, 2, trg.sum(axis=0))


def test_source_count_rule():
    assert estimate_source_count(np.full((3, 10), 0.9))[0] == 3
    count, mask = estimate_source_count(np.array([[0.2] * 5, [0.8] * 5, [0.8] * 5]))
    assert count == 2
    assert mask.tolist() == [False, True, True]
    assert estimate_source_count(np.array([[0.25, 0.1]]))[0] == 1


def test_groundtruth_envelopes_in_mixture_units():
    a = np.full(512, 0.2)
    b = np.full(512, 0.6)
    envs = groundtruth_envelopes([a, b], a + b)
    np.testing.assert_allclose(envs[0].values, 0.25)
    np.testing.assert_allclose(envs[1].values, 0.75)
    with pytest.raises(ZeroEnergyError):
        groundtruth_envelopes([a], np.zeros(512))


def test_normalize_by_mixture_peak():
    mixture = np.array([0.1, -0.8, 0.4])
    np.testing.assert_allclose(normalize_by_mixture_peak(np.array([0.4, -0.2]), mixture), [0.5, -0.25])
    with pytest.raises(ZeroEnergyError):
        normalize_by_mixture_peak(np.ones(2), np.zeros(3))


def test_groundtruth_envelopes_follow_mixture_normalization(rng):
    images = [rng.standard_normal(1024), 0.3 * rng.standard_normal(1024)]
    mixture = images[0] + images[1]
    for img, env in zip(images, groundtruth_envelopes(images, mixture)):
        expected = extract_envelope(normalize_by_mixture_peak(img, mixture))
        np.testing.assert_array_equal(env.values, expected.values)
        assert env.values.max() == pytest.approx(np.abs(img).max() / np.abs(mixture).max())


def _loop_nmse_db(est, trg):
    return 10 * math.log10(sum((e - t) ** 2 for e, t in zip(est, trg)) / sum(t * t for t in trg))


def test_nmse_matches_loop_reference():
    rng = np.random.default_rng(61)
    for _ in range(30):
        n_sources, n_frames = int(rng.integers(1, 4)), int(rng.integers(5, 60))
        trg = rng.uniform(0.0, 1.0, (n_sources, n_frames))
        est = np.abs(trg + rng.uniform(0.05, 0.5) * rng.standard_normal(trg.shape))
        reference = np.mean([_loop_nmse_db(e, t) for e, t in zip(est, trg)])
        assert nmse_loss(est, trg) == pytest.approx(reference, rel=1e-9)


@pytest.mark.parametrize("c_max", [2, 3, 4, 5])
def test_set_loss_matches_brute_force(c_max):
    rng = np.random.default_rng(70 + c_max)
    tau = 0.01
    for _ in range(10):
        n_frames = int(rng.integers(10, 40))
        n_active = int(rng.integers(0, c_max + 1))
        trg = rng.uniform(0.05, 1.0, (n_active, n_frames))
        est = rng.uniform(0.0, 1.0, (c_max, n_frames))
        mix = rng.uniform(0.1, 2.0, n_frames)
        padded = list(trg) + [None] * (c_max - n_active)

        def case(e, t):
            if t is None:
                return 10 * math.log10(sum(v * v for v in e) + tau * sum(m * m for m in mix))
            return _loop_nmse_db(e, t)

        totals = {p: sum(case(est[i], padded[p[i]]) for i in range(c_max)) for p in permutations(range(c_max))}
        best = min(totals.values())
        loss, perm = envelope_set_loss(est, trg, c_max, mix, tau)
        assert loss == pytest.approx(best / c_max, rel=1e-9, abs=1e-12)
        assert totals[perm] == pytest.approx(best, rel=1e-9, abs=1e-12)
