from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from separation.envelope import FrameEnvelope, SampleEnvelope, groundtruth_envelopes, interpolate_to_samples
from separation.trajectory import (FramedIntensityTrajectory, IntensityTrajectory, Trajectory,
                                   frame_intensity_trajectory, make_intensity_trajectory)
from simulation.acoustics import FoaSignal
from utils.errors import SignalShapeError


@dataclass
class Groundtruth:
    """Clean source images, DOA trajectories and envelopes of one scene."""
    images: List[FoaSignal]
    trajectories: List[Trajectory]
    frame_envelopes: List[FrameEnvelope]
    sample_envelopes: List[SampleEnvelope]
    win: int = 256
    hop: int = 128
    t60: Optional[float] = None
    separation_deg: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_sources(self) -> int:
        return len(self.images)

    def intensity(self, c: int) -> IntensityTrajectory:
        return make_intensity_trajectory(self.sample_envelopes[c], self.trajectories[c])

    def framed_intensity(self, c: int) -> FramedIntensityTrajectory:
        return frame_intensity_trajectory(self.intensity(c), self.win, self.hop)


def build_groundtruth(mixture: FoaSignal, images: Sequence[FoaSignal], trajectories: Sequence[Trajectory],
                      win: int = 256, hop: int = 128, t60: Optional[float] = None,
                      separation_deg: Optional[float] = None) -> Groundtruth:
    if len(images) != len(trajectories):
        raise SignalShapeError(f"{len(images)} images but {len(trajectories)} trajectories")
    n = len(mixture)
    for c, (img, traj) in enumerate(zip(images, trajectories)):
        if len(img) != n or len(traj) != n:
            raise SignalShapeError(f"source {c}: image/trajectory length does not match mixture length {n}")
    frames = groundtruth_envelopes([img.omni for img in images], mixture.omni, win, hop)
    samples = [interpolate_to_samples(f, n, mixture.sample_rate) for f in frames]
    return Groundtruth(images=list(images), trajectories=list(trajectories), frame_envelopes=frames,
                       sample_envelopes=samples, win=win, hop=hop, t60=t60, separation_deg=separation_deg)


def nearest_source(candidates: Sequence[np.ndarray], query: np.ndarray) -> int:
    """Index of the candidate closest to `query` in squared error."""
    errors = [float(np.sum((np.asarray(c) - query) ** 2)) for c in candidates]
    return int(np.argmin(errors))
