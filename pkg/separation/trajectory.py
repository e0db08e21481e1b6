import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from separation.envelope import SampleEnvelope
from utils.errors import ConfigError, SignalShapeError, ZeroEnergyError
from utils.utils import normalize_rows, sliding_frames

logger = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-6


@dataclass
class Trajectory:
    """Per-sample unit direction vectors (N×3, XYZ)."""
    dirs: np.ndarray

    def __post_init__(self):
        self.dirs = np.asarray(self.dirs, dtype=np.float64)
        if self.dirs.ndim != 2 or self.dirs.shape[1] != 3:
            raise SignalShapeError(f"trajectory must be N×3, got shape {self.dirs.shape}")
        norms = np.linalg.norm(self.dirs, axis=1)
        if norms.size and np.max(np.abs(norms - 1.0)) > UNIT_NORM_TOL:
            bad = int(np.argmax(np.abs(norms - 1.0) > UNIT_NORM_TOL))
            raise SignalShapeError(f"trajectory row {bad} has norm {norms[bad]:.6f}, expected 1")

    def __len__(self) -> int:
        return self.dirs.shape[0]


@dataclass
class IntensityTrajectory:
    """Trajectory scaled per sample by the source envelope."""
    vecs: np.ndarray

    def __post_init__(self):
        self.vecs = np.asarray(self.vecs, dtype=np.float64)
        if self.vecs.ndim != 2 or self.vecs.shape[1] != 3:
            raise SignalShapeError(f"intensity trajectory must be N×3, got shape {self.vecs.shape}")

    def __len__(self) -> int:
        return self.vecs.shape[0]


@dataclass
class FramedIntensityTrajectory:
    """Frame means of an intensity trajectory on the (win, hop) frame clock."""
    vecs: np.ndarray
    win: int = 256
    hop: int = 128

    def __len__(self) -> int:
        return self.vecs.shape[0]


@dataclass
class TrackLossConfig:
    alpha: float = 0.5
    beta: float = 0.5
    D: int = 10
    # "est" weights with the estimated envelope, "trg" with the groundtruth one
    weight: str = "est"
    clip_scales: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be nonnegative")
        if self.D < 0:
            raise ConfigError("D must be nonnegative")
        if self.weight not in ("est", "trg"):
            raise ConfigError(f"weight must be 'est' or 'trg', got {self.weight!r}")


ArrayLike3 = Union[Trajectory, IntensityTrajectory, np.ndarray]


def _rows(x: ArrayLike3) -> np.ndarray:
    if isinstance(x, Trajectory):
        return x.dirs
    if isinstance(x, IntensityTrajectory):
        return x.vecs
    return np.asarray(x, dtype=np.float64)


def _env(env: Union[SampleEnvelope, np.ndarray]) -> np.ndarray:
    return env.values if isinstance(env, SampleEnvelope) else np.asarray(env, dtype=np.float64).reshape(-1)


def make_intensity_trajectory(env: SampleEnvelope, traj: Trajectory) -> IntensityTrajectory:
    e = _env(env)
    if e.shape[0] != len(traj):
        raise SignalShapeError(f"envelope has {e.shape[0]} samples, trajectory has {len(traj)}")
    return IntensityTrajectory(e[:, None] * traj.dirs)


def frame_intensity_trajectory(it: IntensityTrajectory, win: int = 256,
                               hop: int = 128) -> FramedIntensityTrajectory:
    vecs = _rows(it)
    if vecs.shape[0] < win:
        raise SignalShapeError(f"intensity trajectory of {vecs.shape[0]} samples is shorter than window {win}")
    return FramedIntensityTrajectory(sliding_frames(vecs, win, hop).mean(axis=1), win=win, hop=hop)


def directions_from_intensity(it: IntensityTrajectory, eps: float = 1e-12) -> Trajectory:
    """
    Unit directions of an intensity trajectory; rows with (near) zero
    intensity take the direction of the nearest nonzero row.
    """
    vecs = _rows(it)
    norms = np.linalg.norm(vecs, axis=1)
    valid = np.flatnonzero(norms > eps)
    if valid.size == 0:
        raise ZeroEnergyError("intensity trajectory is zero everywhere")
    dirs = normalize_rows(vecs, eps)
    if valid.size < vecs.shape[0]:
        dirs = dirs[nearest_valid_index(valid, vecs.shape[0])]
    return Trajectory(dirs)


def nearest_valid_index(valid: np.ndarray, length: int) -> np.ndarray:
    """For every position in [0, length), the closest index in sorted `valid` (ties go left)."""
    idx = np.arange(length)
    if valid.size == 1:
        return np.full(length, valid[0])
    pos = np.clip(np.searchsorted(valid, idx), 1, valid.size - 1)
    left, right = valid[pos - 1], valid[pos]
    return np.where(idx - left <= right - idx, left, right)


def trajectory_loss(est: ArrayLike3, trg: ArrayLike3, env: Union[SampleEnvelope, np.ndarray]) -> float:
    """
    Envelope-weighted trajectory error: mean over samples and the three
    components of (env(n)·(est(n) - trg(n)))^2.
    """
    e, t, w = _rows(est), _rows(trg), _env(env)
    if e.shape != t.shape or w.shape[0] != e.shape[0]:
        raise SignalShapeError(f"length mismatch: est {e.shape}, trg {t.shape}, env {w.shape}")
    return float(np.mean((w[:, None] * (e - t)) ** 2))


def differential(traj: ArrayLike3, d: int) -> np.ndarray:
    """Row n is traj(n) - traj(n-d), for n in [d, N)."""
    x = _rows(traj)
    if d < 1:
        raise SignalShapeError(f"differential scale must be >= 1, got {d}")
    if d >= x.shape[0]:
        raise SignalShapeError(f"differential scale {d} must be smaller than length {x.shape[0]}")
    return x[d:] - x[:-d]


def differential_loss(est: ArrayLike3, trg: ArrayLike3, D: int = 10, clip_scales: bool = False) -> float:
    """
    Mean over dyadic scales d = 2^0 .. 2^D of the MSE between the
    differentials of est and trg.

    Scales reaching the trajectory length raise unless `clip_scales`, in
    which case they are skipped.
    """
    e, t = _rows(est), _rows(trg)
    if e.shape != t.shape:
        raise SignalShapeError(f"length mismatch: est {e.shape}, trg {t.shape}")
    n = e.shape[0]
    scales = [2 ** i for i in range(D + 1)]
    if scales[-1] >= n:
        if not clip_scales:
            raise SignalShapeError(f"largest scale 2^{D}={scales[-1]} must be smaller than length {n}")
        scales = [d for d in scales if d < n]
        if not scales:
            raise SignalShapeError(f"trajectory of length {n} is too short for any differential")
    return float(np.mean([np.mean((differential(e, d) - differential(t, d)) ** 2) for d in scales]))


def tracking_loss(est: ArrayLike3, trg: ArrayLike3, env: Union[SampleEnvelope, np.ndarray],
                  cfg: Optional[TrackLossConfig] = None,
                  trg_env: Optional[Union[SampleEnvelope, np.ndarray]] = None) -> float:
    """alpha·trajectory_loss + beta·differential_loss."""
    cfg = cfg if cfg is not None else TrackLossConfig()
    weight = env
    if cfg.weight == "trg":
        if trg_env is None:
            raise ConfigError("weight='trg' needs the groundtruth envelope")
        weight = trg_env
    return (cfg.alpha * trajectory_loss(est, trg, weight)
            + cfg.beta * differential_loss(est, trg, cfg.D, cfg.clip_scales))
