from dataclasses import dataclass
from typing import List

import numpy as np
import pytest

from separation.groundtruth import Groundtruth, build_groundtruth
from separation.trajectory import Trajectory
from simulation.acoustics import FoaSignal, encode_foa, mix_scene
from simulation.scene_generator import RoomSpec, SceneSpec, SourceSpec, TrajectorySpec
from simulation.sources import synthetic_source

SAMPLE_RATE = 16000


@dataclass
class PlaneWaveScene:
    mixture: FoaSignal
    images: List[FoaSignal]
    trajectories: List[Trajectory]
    groundtruth: Groundtruth


def plane_wave_scene(directions, n_samples: int = SAMPLE_RATE, seed: int = 3) -> PlaneWaveScene:
    """Free-field scene of static plane-wave sources, one synthetic band per source, no noise."""
    images, trajectories = [], []
    for c, direction in enumerate(directions):
        u = np.asarray(direction, dtype=np.float64)
        u = u / np.linalg.norm(u)
        images.append(encode_foa(synthetic_source(seed, c, n_samples, SAMPLE_RATE), u, SAMPLE_RATE))
        trajectories.append(Trajectory(np.tile(u, (n_samples, 1))))
    mixture, images, _ = mix_scene(images, None, seed)
    groundtruth = build_groundtruth(mixture, images, trajectories)
    return PlaneWaveScene(mixture, images, trajectories, groundtruth)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def shoebox():
    return RoomSpec(dims=(6.0, 5.0, 3.0), t60=0.4, array_center=(3.0, 2.5, 1.5))


@pytest.fixture
def anechoic_room():
    return RoomSpec(dims=(6.0, 5.0, 3.0), t60=0.0, array_center=(3.0, 2.5, 1.5))


@pytest.fixture
def static_scene(shoebox):
    """A valid one-source scene that satisfies every validation rule."""
    traj = TrajectorySpec(p0=(1.0, 1.0, 1.0), pN=(2.0, 1.0, 1.0), omega=(0.0, 0.0, 0.0),
                          amp=(0.0, 0.0, 0.0), n_samples=1600)
    return SceneSpec(room=shoebox, sources=[SourceSpec(trajectory=traj, audio="synthetic:0:0")],
                     noise_snr_db=25.0, seed=0, sample_rate=SAMPLE_RATE)


@pytest.fixture
def two_source_scene():
    return plane_wave_scene([(1.0, 0.0, 0.0), (0.0, 1.0, 0.0)])


@pytest.fixture
def opposite_source_scene():
    return plane_wave_scene([(1.0, 0.0, 0.0), (-1.0, 0.0, 0.0)])
