"""Numeric text files for trajectories (one XYZ row per sample) and envelopes."""
from pathlib import Path
from typing import Union

import numpy as np

from separation.envelope import FrameEnvelope
from separation.trajectory import Trajectory
from utils.errors import SignalShapeError

# 17 significant digits round-trip float64 exactly
FLOAT_FMT = "%.17g"


def save_trajectory(path: Union[str, Path], traj: Trajectory) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, traj.dirs, fmt=FLOAT_FMT, header="x y z")
    return path


def load_trajectory(path: Union[str, Path]) -> Trajectory:
    dirs = np.loadtxt(path, ndmin=2)
    if dirs.shape[1] != 3:
        raise SignalShapeError(f"{path} has {dirs.shape[1]} columns, expected 3")
    return Trajectory(dirs)


def save_envelope(path: Union[str, Path], env: FrameEnvelope) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, env.values, fmt=FLOAT_FMT, header=f"win={env.win} hop={env.hop}")
    return path


def load_envelope(path: Union[str, Path]) -> FrameEnvelope:
    with open(path) as f:
        header = f.readline().lstrip("# ").split()
    params = dict(item.split("=") for item in header if "=" in item)
    values = np.loadtxt(path, ndmin=1)
    return FrameEnvelope(values, win=int(params.get("win", 256)), hop=int(params.get("hop", 128)))
