import dataclasses
import json
import logging
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from configs.gen_sep_cfs import SamplingRanges
from separation.trajectory import Trajectory
from utils.errors import GeometryError, SceneValidationError
from utils.utils import make_rng, normalize_rows

logger = logging.getLogger(__name__)

Vec3 = Tuple[float, float, float]

# ω·N/(2π) comparisons tolerate float round-off from the sampler
_PERIOD_TOL = 1e-9


@dataclass
class RoomSpec:
    dims: Vec3
    t60: float
    array_center: Vec3


@dataclass
class TrajectorySpec:
    """Sinusoidal path around the straight line from p0 to pN."""
    p0: Vec3
    pN: Vec3
    omega: Vec3
    amp: Vec3
    n_samples: int

    def periods(self) -> np.ndarray:
        """Oscillation periods per axis over the whole path."""
        return np.abs(np.asarray(self.omega, dtype=np.float64)) * self.n_samples / (2 * np.pi)


@dataclass
class SourceSpec:
    trajectory: TrajectorySpec
    audio: str = ""


@dataclass
class SceneSpec:
    room: RoomSpec
    sources: List[SourceSpec] = field(default_factory=list)
    noise_snr_db: float = 25.0
    seed: int = 0
    sample_rate: int = 16000

    @property
    def n_samples(self) -> int:
        return self.sources[0].trajectory.n_samples if self.sources else 0


def trajectory_position(spec: TrajectorySpec, n) -> np.ndarray:
    """
    Source position at (possibly fractional, possibly array-valued) sample n.

    The straight-line part is written as (1 - n/N)·p0 + (n/N)·pN so both
    endpoints are reproduced exactly.
    """
    n = np.asarray(n, dtype=np.float64)
    p0 = np.asarray(spec.p0, dtype=np.float64)
    pN = np.asarray(spec.pN, dtype=np.float64)
    amp = np.asarray(spec.amp, dtype=np.float64)
    omega = np.asarray(spec.omega, dtype=np.float64)
    frac = (n / spec.n_samples)[..., None]
    return (1.0 - frac) * p0 + frac * pN + amp * np.sin(omega * n[..., None])


def sample_trajectory(spec: TrajectorySpec, room: Optional[RoomSpec] = None) -> np.ndarray:
    """
    Positions (N×3, meters) of the source for samples 0..N-1.

    With a room, the path is checked against the walls and the first sample
    that leaves the room raises SceneValidationError.
    """
    positions = trajectory_position(spec, np.arange(spec.n_samples))
    if room is not None:
        dims = np.asarray(room.dims, dtype=np.float64)
        outside = np.any((positions <= 0.0) | (positions >= dims), axis=1)
        if np.any(outside):
            first = int(np.argmax(outside))
            raise SceneValidationError(
                f"trajectory leaves the room at sample {first}: position {positions[first].tolist()}",
                sample_index=first,
            )
    return positions


def doa_trajectory(positions: np.ndarray, array_center: Sequence[float]) -> Trajectory:
    """Unit direction from the array center to each source position."""
    rel = positions - np.asarray(array_center, dtype=np.float64)
    if np.any(np.linalg.norm(rel, axis=1) == 0.0):
        raise GeometryError("source position coincides with the array center")
    return Trajectory(normalize_rows(rel))


def scene_doa_trajectories(spec: SceneSpec) -> List[Trajectory]:
    return [doa_trajectory(sample_trajectory(src.trajectory), spec.room.array_center)
            for src in spec.sources]


def mean_angular_separation_deg(trajs: Sequence[Trajectory]) -> Optional[float]:
    """Mean over samples and source pairs of the angle between source directions."""
    if len(trajs) < 2:
        return None
    pair_means = []
    for a, b in combinations(trajs, 2):
        cos = np.clip(np.sum(a.dirs * b.dirs, axis=1), -1.0, 1.0)
        pair_means.append(np.degrees(np.arccos(cos)).mean())
    return float(np.mean(pair_means))


def _sample_trajectory_spec(rng: np.random.Generator, dims: np.ndarray, array_center: np.ndarray,
                            ranges: SamplingRanges, n_samples: int) -> Optional[TrajectorySpec]:
    low = np.full(3, ranges.wall_margin)
    high = dims - ranges.wall_margin
    p0 = rng.uniform(low, high)
    if ranges.stationary:
        pN = p0.copy()
        omega = np.zeros(3)
        amp = np.zeros(3)
    else:
        pN = rng.uniform(low, high)
        periods = rng.uniform(0.0, ranges.max_periods, size=3)
        omega = 2 * np.pi * periods / n_samples
        wall_dist = np.minimum.reduce([p0, pN, dims - p0, dims - pN])
        amp = rng.uniform(0.0, 0.5 * wall_dist)

    spec = TrajectorySpec(
        p0=tuple(float(v) for v in p0),
        pN=tuple(float(v) for v in pN),
        omega=tuple(float(v) for v in omega),
        amp=tuple(float(v) for v in amp),
        n_samples=int(n_samples),
    )
    positions = trajectory_position(spec, np.arange(n_samples))
    if np.min(np.linalg.norm(positions - array_center, axis=1)) < ranges.min_array_distance:
        return None
    return spec


def sample_scene(rng_seed: int, ranges: Optional[SamplingRanges] = None,
                 audio_refs: Optional[Sequence[str]] = None) -> SceneSpec:
    """
    Draw a random room with moving sources, deterministically from `rng_seed`.

    Geometry is rejection-sampled up to `ranges.max_attempts` times; every
    source draws from its own sub-seed so scenes are reproducible.
    """
    ranges = ranges if ranges is not None else SamplingRanges()
    n_min, n_max = ranges.n_sources
    if n_min < 1 or n_max < n_min or n_max > ranges.c_max:
        raise GeometryError(f"source count range {ranges.n_sources} incompatible with c_max={ranges.c_max}")
    n_samples = int(round(ranges.duration_s * ranges.sample_rate))

    for attempt in range(ranges.max_attempts):
        rng = make_rng(rng_seed, "scene", attempt)
        dims = rng.uniform(ranges.room_min, ranges.room_max)
        t60 = 0.0 if ranges.anechoic else float(rng.uniform(*ranges.t60_range))
        array_center = rng.uniform(np.full(3, ranges.array_margin), dims - ranges.array_margin)
        n_src = int(rng.integers(n_min, n_max + 1))
        noise_snr_db = float(rng.uniform(*ranges.snr_range))

        sources = []
        for c in range(n_src):
            src_rng = make_rng(rng_seed, "scene", attempt, "source", c)
            traj = _sample_trajectory_spec(src_rng, dims, array_center, ranges, n_samples)
            if traj is None:
                break
            audio = (str(src_rng.choice(list(audio_refs))) if audio_refs
                     else f"synthetic:{rng_seed}:{c}")
            sources.append(SourceSpec(trajectory=traj, audio=audio))
        if len(sources) != n_src:
            continue

        spec = SceneSpec(
            room=RoomSpec(dims=tuple(float(v) for v in dims), t60=t60,
                          array_center=tuple(float(v) for v in array_center)),
            sources=sources,
            noise_snr_db=noise_snr_db,
            seed=int(rng_seed),
            sample_rate=int(ranges.sample_rate),
        )
        if ranges.min_separation_deg is not None or ranges.max_separation_deg is not None:
            separation = mean_angular_separation_deg(scene_doa_trajectories(spec))
            if separation is None:
                continue
            if ranges.min_separation_deg is not None and separation < ranges.min_separation_deg:
                continue
            if ranges.max_separation_deg is not None and separation > ranges.max_separation_deg:
                continue
        return spec

    raise GeometryError(f"no feasible scene for seed {rng_seed} after {ranges.max_attempts} attempts")


def validate_scene(spec: SceneSpec, ranges: Optional[SamplingRanges] = None) -> List[str]:
    """
    Check every scene invariant and return all violations (empty list means valid).
    """
    ranges = ranges if ranges is not None else SamplingRanges()
    violations = []
    axes = "xyz"
    dims = np.asarray(spec.room.dims, dtype=np.float64)
    center = np.asarray(spec.room.array_center, dtype=np.float64)

    if np.any(dims <= 0):
        violations.append(f"room dims must be positive, got {dims.tolist()}")
    for k in range(3):
        if not ranges.room_min[k] <= dims[k] <= ranges.room_max[k]:
            violations.append(f"room dim {axes[k]}={dims[k]:.3f} outside "
                              f"[{ranges.room_min[k]}, {ranges.room_max[k]}]")
    t60 = spec.room.t60
    if t60 != 0.0 and not ranges.t60_range[0] <= t60 <= ranges.t60_range[1]:
        violations.append(f"t60={t60:.3f} outside {list(ranges.t60_range)} (0 means anechoic)")
    for k in range(3):
        if not 0.0 < center[k] < dims[k]:
            violations.append(f"array_center axis {axes[k]}={center[k]:.3f} not strictly inside the room")
    if not 1 <= len(spec.sources) <= ranges.c_max:
        violations.append(f"source count {len(spec.sources)} outside [1, {ranges.c_max}]")
    if not ranges.snr_range[0] <= spec.noise_snr_db <= ranges.snr_range[1]:
        violations.append(f"noise_snr_db={spec.noise_snr_db:.2f} outside {list(ranges.snr_range)}")

    lengths = {src.trajectory.n_samples for src in spec.sources}
    if len(lengths) > 1:
        violations.append(f"sources have different lengths {sorted(lengths)}")

    for i, src in enumerate(spec.sources):
        traj = src.trajectory
        if traj.n_samples <= 0:
            violations.append(f"source {i}: n_samples must be positive")
            continue
        for name in ("p0", "pN"):
            point = np.asarray(getattr(traj, name), dtype=np.float64)
            for k in range(3):
                if not ranges.wall_margin <= point[k] <= dims[k] - ranges.wall_margin:
                    violations.append(f"source {i} {name} axis {axes[k]}={point[k]:.3f} closer than "
                                      f"{ranges.wall_margin} m to a wall or outside the room")
        periods = traj.periods()
        for k in range(3):
            if periods[k] > ranges.max_periods + _PERIOD_TOL:
                violations.append(f"source {i} axis {axes[k]}: omega implies {periods[k]:.2f} oscillation "
                                  f"periods, must be <= {ranges.max_periods:g}")
        try:
            positions = sample_trajectory(traj, spec.room)
        except SceneValidationError as e:
            violations.append(f"source {i}: {e}")
            continue
        distance = np.linalg.norm(positions - center, axis=1)
        if np.min(distance) < ranges.min_array_distance:
            first = int(np.argmax(distance < ranges.min_array_distance))
            violations.append(f"source {i}: closer than {ranges.min_array_distance} m to the array "
                              f"at sample {first}")
    return violations


def scene_to_dict(spec: SceneSpec) -> Dict:
    return dataclasses.asdict(spec)


def scene_from_dict(data: Dict) -> SceneSpec:
    room = RoomSpec(dims=tuple(data["room"]["dims"]), t60=float(data["room"]["t60"]),
                    array_center=tuple(data["room"]["array_center"]))
    sources = []
    for src in data["sources"]:
        t = src["trajectory"]
        sources.append(SourceSpec(
            trajectory=TrajectorySpec(p0=tuple(t["p0"]), pN=tuple(t["pN"]), omega=tuple(t["omega"]),
                                      amp=tuple(t["amp"]), n_samples=int(t["n_samples"])),
            audio=src.get("audio", ""),
        ))
    return SceneSpec(room=room, sources=sources, noise_snr_db=float(data["noise_snr_db"]),
                     seed=int(data["seed"]), sample_rate=int(data["sample_rate"]))


def scene_to_json(spec: SceneSpec) -> str:
    return json.dumps(scene_to_dict(spec), indent=2, sort_keys=True)


def save_scene(spec: SceneSpec, path: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(scene_to_json(spec))


def load_scene(path: str) -> SceneSpec:
    return scene_from_dict(json.loads(Path(path).read_text()))
