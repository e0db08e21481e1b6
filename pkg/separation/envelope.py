"""
Source envelopes: frame-wise peak extraction, sample-rate interpolation,
envelope losses and the source-count rule.

All envelopes handled by the pipeline are expressed relative to the peak of
the mixture's omnidirectional channel, which is what the fixed count
threshold is calibrated against.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.assignment import exhaustive_assignment
from utils.errors import SignalShapeError, SourceCountError, ZeroEnergyError
from utils.utils import frame_anchors, safe_db, sliding_frames

logger = logging.getLogger(__name__)

NMSE_FLOOR_DB = -100.0
DEFAULT_TAU = 0.01


@dataclass
class FrameEnvelope:
    values: np.ndarray
    win: int = 256
    hop: int = 128

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if np.any(self.values < 0):
            raise SignalShapeError("envelope values must be nonnegative")

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass
class SampleEnvelope:
    values: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if np.any(self.values < 0):
            raise SignalShapeError("envelope values must be nonnegative")

    def __len__(self) -> int:
        return self.values.shape[0]


EnvelopeLike = Union[FrameEnvelope, np.ndarray, Sequence[float]]


def _values(env: EnvelopeLike) -> np.ndarray:
    if isinstance(env, (FrameEnvelope, SampleEnvelope)):
        return env.values
    return np.asarray(env, dtype=np.float64)


def _stack(envs) -> np.ndarray:
    if isinstance(envs, np.ndarray):
        return np.atleast_2d(envs.astype(np.float64))
    return np.stack([_values(e) for e in envs]) if len(envs) else np.zeros((0, 0))


def extract_envelope(mono: np.ndarray, win: int = 256, hop: int = 128) -> FrameEnvelope:
    """Frame t holds the peak of |x| over samples [t*hop, t*hop + win)."""
    x = np.asarray(mono, dtype=np.float64).reshape(-1)
    if x.shape[0] < win:
        raise SignalShapeError(f"signal of {x.shape[0]} samples is shorter than envelope window {win}")
    frames = sliding_frames(np.abs(x), win, hop)
    return FrameEnvelope(frames.max(axis=1), win=win, hop=hop)


def interpolate_to_samples(env: FrameEnvelope, n_samples: int, sample_rate: int = 16000) -> SampleEnvelope:
    """
    Piecewise-linear envelope through the frame centers, held constant
    before the first and after the last center.
    """
    if len(env) < 2:
        raise SignalShapeError(f"need at least 2 frames to interpolate, got {len(env)}")
    anchors = frame_anchors(len(env), env.win, env.hop)
    values = np.interp(np.arange(n_samples, dtype=np.float64), anchors, env.values)
    return SampleEnvelope(values, sample_rate=sample_rate)


def nmse_channel_db(est: np.ndarray, trg: np.ndarray) -> float:
    trg_energy = float(np.sum(trg ** 2))
    if trg_energy <= 0.0:
        raise ZeroEnergyError("target envelope has zero energy; use inactive_env_loss instead")
    err_energy = float(np.sum((est - trg) ** 2))
    return safe_db(err_energy, trg_energy, cap=-NMSE_FLOOR_DB)


def nmse_loss(est, trg) -> float:
    """Mean over sources of 10*log10(sum (est-trg)^2 / sum trg^2), floored at -100 dB."""
    est = _stack(est)
    trg = _stack(trg)
    if est.shape != trg.shape:
        raise SignalShapeError(f"estimate shape {est.shape} does not match target shape {trg.shape}")
    return float(np.mean([nmse_channel_db(e, t) for e, t in zip(est, trg)]))


def inactive_env_loss(est: EnvelopeLike, mix_env: EnvelopeLike, tau: float = DEFAULT_TAU) -> float:
    """Loss of an estimate whose target is silent: 10*log10(sum est^2 + tau*sum mix^2)."""
    e = _values(est)
    m = _values(mix_env)
    if e.shape != m.shape:
        raise SignalShapeError(f"estimate has {e.shape[0]} frames, mixture envelope has {m.shape[0]}")
    return safe_db(float(np.sum(e ** 2) + tau * np.sum(m ** 2)), 1.0)


def envelope_case_loss(est: np.ndarray, trg: Optional[np.ndarray], mix_env: np.ndarray,
                       tau: float = DEFAULT_TAU) -> float:
    """NMSE against an active target, inactive loss against a silent (None or all-zero) one."""
    if trg is None or not np.any(trg):
        return inactive_env_loss(est, mix_env, tau)
    return nmse_channel_db(est, trg)


def envelope_set_loss(est, trg, c_max: int, mix_env: EnvelopeLike,
                      tau: float = DEFAULT_TAU) -> Tuple[float, Tuple[int, ...]]:
    """
    Permutation-invariant envelope loss for an unknown number of sources.

    The C active targets are padded with C_max - C silent ones; every
    estimate/target pair gets its case loss and the assignment minimizing
    the total is chosen exhaustively. Returns (mean loss in dB, permutation)
    with permutation[i] the target index assigned to estimate i.
    """
    est = _stack(est)
    trg = _stack(trg) if len(trg) else np.zeros((0, est.shape[1]))
    mix = _values(mix_env)
    n_active = trg.shape[0]
    if n_active > c_max:
        raise SourceCountError(f"{n_active} targets exceed c_max={c_max}", count_verdict=(n_active, c_max))
    if est.shape[0] != c_max:
        raise SignalShapeError(f"expected {c_max} estimated envelopes, got {est.shape[0]}")
    for c in range(n_active):
        if not np.any(trg[c]):
            raise ZeroEnergyError(f"active target envelope {c} has zero energy")

    cost = np.empty((c_max, c_max))
    for i in range(c_max):
        for j in range(c_max):
            target = trg[j] if j < n_active else None
            cost[i, j] = envelope_case_loss(est[i], target, mix, tau)
    perm, total = exhaustive_assignment(cost)
    return total / c_max, perm


def estimate_source_count(est, threshold: float = 0.25) -> Tuple[int, np.ndarray]:
    """A channel is active when its peak reaches the threshold (>=)."""
    est = _stack(est)
    mask = est.max(axis=1) >= threshold if est.size else np.zeros(0, dtype=bool)
    return int(np.count_nonzero(mask)), mask


def mixture_peak(mixture_omni: np.ndarray) -> float:
    peak = float(np.max(np.abs(mixture_omni)))
    if peak <= 0.0:
        raise ZeroEnergyError("mixture omnidirectional channel is silent")
    return peak


def normalize_by_mixture_peak(signal: np.ndarray, mixture_omni: np.ndarray) -> np.ndarray:
    """Express `signal` in units of the peak absolute value of the mixture's omni channel."""
    return np.asarray(signal, dtype=np.float64) / mixture_peak(mixture_omni)


def groundtruth_envelopes(images_omni: Sequence[np.ndarray], mixture_omni: np.ndarray,
                          win: int = 256, hop: int = 128) -> List[FrameEnvelope]:
    """Frame envelopes of each source's omni image, in mixture-peak units."""
    return [extract_envelope(normalize_by_mixture_peak(img, mixture_omni), win, hop) for img in images_omni]
