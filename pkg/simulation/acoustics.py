"""
First-order ambisonic rendering of moving sources in shoebox rooms.

Conventions: channel order (W, Y, Z, X), SN3D normalization with W gain 1,
speed of sound 343 m/s, point-source distance gain 1/r.
"""
import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import fftconvolve

from configs.gen_sep_cfs import RenderConfig
from simulation.scene_generator import RoomSpec, SceneSpec, sample_trajectory
from utils.errors import ConfigError, GeometryError, SignalShapeError, ZeroEnergyError
from utils.utils import derive_seed

logger = logging.getLogger(__name__)

SPEED_OF_SOUND = 343.0
N_FOA = 4
SABINE_CONSTANT = 0.161
COSTLY_ORDER = 60


@dataclass
class FoaRir:
    taps: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 2 or self.taps.shape[0] != N_FOA or self.taps.shape[1] == 0:
            raise SignalShapeError(f"FOA RIR must be 4×L with L > 0, got {self.taps.shape}")
        if not np.all(np.isfinite(self.taps)):
            raise SignalShapeError("FOA RIR has non-finite taps")


@dataclass
class FoaSignal:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[1] != N_FOA:
            raise SignalShapeError(f"FOA signal must be N×4, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise SignalShapeError("FOA signal has non-finite samples")

    @property
    def omni(self) -> np.ndarray:
        return self.samples[:, 0]

    def __len__(self) -> int:
        return self.samples.shape[0]


def foa_gains(directions: np.ndarray) -> np.ndarray:
    """SN3D/ACN encoding gains (…, 4) for unit directions (…, 3) given as XYZ."""
    d = np.asarray(directions, dtype=np.float64)
    return np.stack([np.ones(d.shape[:-1]), d[..., 1], d[..., 2], d[..., 0]], axis=-1)


def encode_foa(mono: np.ndarray, direction: np.ndarray, sample_rate: int = 16000) -> FoaSignal:
    """Plane-wave encode a mono signal from a fixed (3,) or per-sample (N×3) direction."""
    mono = np.asarray(mono, dtype=np.float64).reshape(-1)
    gains = foa_gains(direction)
    if gains.ndim == 1:
        gains = gains[None, :]
    return FoaSignal(mono[:, None] * gains, sample_rate=sample_rate)


def _room_volume_surface(room: RoomSpec) -> Tuple[float, float]:
    lx, ly, lz = (float(v) for v in room.dims)
    return lx * ly * lz, 2.0 * (lx * ly + lx * lz + ly * lz)


def sabine_absorption(room: RoomSpec) -> np.ndarray:
    """
    Uniform absorption coefficient for all six walls reaching the room's T60
    under Sabine's formula, clamped to 1.
    """
    if room.t60 <= 0:
        raise GeometryError(f"Sabine absorption needs t60 > 0, got {room.t60}")
    volume, surface = _room_volume_surface(room)
    alpha = SABINE_CONSTANT * volume / (room.t60 * surface)
    if alpha > 1.0:
        logger.warning("room %s too small for t60=%.2f s (alpha=%.3f), clamping absorption to 1",
                       tuple(room.dims), room.t60, alpha)
        alpha = 1.0
    return np.full(6, alpha)


def default_max_order(room: RoomSpec, sample_rate: int = 16000, ceiling: Optional[int] = None,
                      tail_factor: float = 1.5, c: float = SPEED_OF_SOUND) -> int:
    """
    Reflection order whose images span tail_factor·T60 at the mean free path.

    A `ceiling` below that order truncates the tail and is logged; costly
    orders are logged but never reduced.
    """
    if room.t60 <= 0:
        return 0
    volume, surface = _room_volume_surface(room)
    mean_free_path = 4.0 * volume / surface
    order = int(np.ceil(c * tail_factor * room.t60 / mean_free_path))
    if ceiling is not None and order > ceiling:
        logger.warning("image order %d needed for %.2f s of tail, limited to %d: the rendered tail is "
                       "shorter than the room's T60 implies", order, tail_factor * room.t60, ceiling)
        return ceiling
    if order > COSTLY_ORDER:
        logger.warning("image order %d for %.2f s of tail in room %s, rendering will be slow", order,
                       tail_factor * room.t60, tuple(room.dims))
    return order


def tail_taps(room: RoomSpec, sample_rate: int = 16000, tail_factor: float = 1.5) -> Optional[int]:
    """RIR length in taps covering tail_factor·T60; None for an anechoic room."""
    if room.t60 <= 0:
        return None
    return int(np.ceil(tail_factor * room.t60 * sample_rate)) + 2


def _axis_images(src: float, length: float, max_order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Image coordinates along one axis and their reflection counts."""
    reach = max_order // 2 + 1
    m = np.arange(-reach, reach + 1)
    coords, orders = [], []
    for q in (0, 1):
        order = np.abs(2 * m - q)
        keep = order <= max_order
        coords.append((1 - 2 * q) * src + 2 * m[keep] * length)
        orders.append(order[keep])
    return np.concatenate(coords), np.concatenate(orders)


def _image_slices(src: np.ndarray, dims: np.ndarray, center: np.ndarray, max_order: int,
                  max_dist: float) -> Iterator[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """
    Yield (offsets, distances, orders) of the images, one x-image at a time.

    Images farther than `max_dist` from the array center are skipped.
    """
    xs, x_orders = _axis_images(src[0], dims[0], max_order)
    ys, y_orders = _axis_images(src[1], dims[1], max_order)
    zs, z_orders = _axis_images(src[2], dims[2], max_order)
    gy, gz = np.meshgrid(np.arange(len(ys)), np.arange(len(zs)), indexing="ij")
    yz = np.stack([ys[gy.ravel()] - center[1], zs[gz.ravel()] - center[2]], axis=1)
    yz_orders = y_orders[gy.ravel()] + z_orders[gz.ravel()]
    yz_dist2 = np.sum(yz ** 2, axis=1)
    for x, x_order in zip(xs - center[0], x_orders):
        dist = np.sqrt(x * x + yz_dist2)
        keep = (yz_orders <= max_order - x_order) & (dist <= max_dist)
        if not np.any(keep):
            continue
        offsets = np.column_stack([np.full(int(keep.sum()), x), yz[keep]])
        yield offsets, dist[keep], yz_orders[keep] + x_order


def compute_foa_rir(room: RoomSpec, src_pos: Sequence[float], max_order: int,
                    sample_rate: int = 16000, n_taps: Optional[int] = None,
                    absorption: Optional[float] = None, c: float = SPEED_OF_SOUND) -> FoaRir:
    """
    Image-source FOA impulse response from `src_pos` to the array center.

    Every image contributes (1 - alpha)^order / r at a fractional delay
    r·fs/c, split over the two neighbouring taps by linear interpolation,
    and is encoded with the SN3D gains of its direction. A given `n_taps`
    truncates the response in time, so images arriving later are never built.
    """
    if max_order < 0:
        raise ConfigError(f"max_order must be >= 0, got {max_order}")
    dims = np.asarray(room.dims, dtype=np.float64)
    src = np.asarray(src_pos, dtype=np.float64)
    center = np.asarray(room.array_center, dtype=np.float64)
    if np.any(src <= 0) or np.any(src >= dims):
        raise GeometryError(f"source position {src.tolist()} is outside the room {dims.tolist()}")
    if np.linalg.norm(src - center) == 0.0:
        raise GeometryError("source position coincides with the array center")
    if n_taps is not None and n_taps < 1:
        raise ConfigError(f"n_taps must be >= 1, got {n_taps}")

    if absorption is None:
        absorption = 1.0 if room.t60 <= 0 else float(sabine_absorption(room)[0])
    reflection = 1.0 - absorption
    # reflection**0 is 1 even for a fully absorbing room, so such a room only has the direct path
    if reflection == 0.0:
        max_order = 0
    max_dist = np.inf if n_taps is None else n_taps * c / sample_rate

    if n_taps is None:
        farthest = max(float(dist.max()) for _, dist, _ in
                       _image_slices(src, dims, center, max_order, max_dist))
        n_taps = int(np.ceil(farthest * sample_rate / c)) + 2

    taps = np.zeros((N_FOA, n_taps))
    for rel, dist, order in _image_slices(src, dims, center, max_order, max_dist):
        gain = reflection ** order / dist
        delay = dist * sample_rate / c
        base = np.floor(delay).astype(np.int64)
        frac = delay - base
        channel_gains = foa_gains(rel / dist[:, None]) * gain[:, None]
        for idx, weight in ((base, 1.0 - frac), (base + 1, frac)):
            inside = idx < n_taps
            for ch in range(N_FOA):
                taps[ch] += np.bincount(idx[inside], weights=channel_gains[inside, ch] * weight[inside],
                                        minlength=n_taps)
    return FoaRir(taps, sample_rate=sample_rate)


def render_moving_source(signal: np.ndarray, traj: np.ndarray, room: RoomSpec, max_order: int,
                         block: Optional[RenderConfig] = None, sample_rate: int = 16000,
                         n_taps: Optional[int] = None) -> FoaSignal:
    """
    Time-varying rendering of a mono source following `traj` (N×3 positions).

    Block k is centered at sample k·hop and weighted by a triangular window
    of half-width hop; it is convolved with the RIR at its center position and
    overlap-added, so adjacent RIRs are linearly cross-faded. `n_taps` bounds
    the RIR length as in compute_foa_rir.
    """
    cfg = block if block is not None else RenderConfig()
    if cfg.block != 2 * cfg.hop:
        raise ConfigError(f"block ({cfg.block}) must be twice the hop ({cfg.hop}) for a linear crossfade")
    x = np.asarray(signal, dtype=np.float64).reshape(-1)
    positions = np.asarray(traj, dtype=np.float64)
    n = x.shape[0]
    if positions.shape != (n, 3):
        raise SignalShapeError(f"trajectory shape {positions.shape} does not match signal length {n}")
    if not np.all(np.isfinite(x)):
        raise SignalShapeError("source signal has non-finite samples")
    dims = np.asarray(room.dims, dtype=np.float64)
    outside = np.any((positions <= 0) | (positions >= dims), axis=1)
    if np.any(outside):
        raise GeometryError(f"trajectory exits the room at sample {int(np.argmax(outside))}")

    absorption = 1.0 if room.t60 <= 0 else float(sabine_absorption(room)[0])
    hop = cfg.hop
    out = np.zeros((n, N_FOA))
    n_blocks = int(np.ceil((n - 1) / hop)) + 1 if n > 1 else 1
    ramp = 1.0 - np.abs(np.arange(-hop + 1, hop)) / hop
    last_key, rir = None, None
    for k in range(n_blocks):
        center = k * hop
        start = max(0, center - hop + 1)
        stop = min(n, center + hop)
        window = ramp[start - (center - hop + 1):stop - (center - hop + 1)]
        segment = x[start:stop] * window
        if not np.any(segment):
            continue
        pos = positions[min(center, n - 1)]
        key = pos.tobytes()
        if key != last_key:
            rir = compute_foa_rir(room, pos, max_order, sample_rate, n_taps=n_taps,
                                  absorption=absorption, c=cfg.speed_of_sound)
            last_key = key
        y = fftconvolve(segment[:, None], rir.taps.T, axes=0)
        end = min(n, start + y.shape[0])
        out[start:end] += y[:end - start]
    return FoaSignal(out, sample_rate=sample_rate)


def sum_images(images: Sequence[FoaSignal]) -> np.ndarray:
    """Elementwise sum of source images in list order."""
    total = np.zeros_like(images[0].samples)
    for img in images:
        total = total + img.samples
    return total


def mix_scene(per_source: Sequence[FoaSignal], noise_snr_db: Optional[float], seed: int
              ) -> Tuple[FoaSignal, List[FoaSignal], np.ndarray]:
    """
    Sum the source images and add white Gaussian sensor noise whose
    channel-0 power sits `noise_snr_db` below the clean channel-0 power.

    Returns (mixture, images, noise) where noise is exactly
    mixture - sum_images(images). `noise_snr_db=None` disables noise.
    """
    if not per_source:
        raise SignalShapeError("cannot mix an empty source list")
    n = len(per_source[0])
    fs = per_source[0].sample_rate
    for i, img in enumerate(per_source):
        if len(img) != n or img.sample_rate != fs:
            raise SignalShapeError(f"source {i} has {len(img)} samples at {img.sample_rate} Hz, "
                                   f"expected {n} at {fs} Hz")

    clean = sum_images(per_source)
    if noise_snr_db is None:
        mixture = clean.copy()
    else:
        signal_power = float(np.mean(clean[:, 0] ** 2))
        if signal_power <= 0.0:
            raise ZeroEnergyError("cannot calibrate noise against a silent mixture")
        rng = np.random.default_rng(derive_seed(seed, "sensor-noise"))
        white = rng.standard_normal((n, N_FOA))
        target_power = signal_power / 10.0 ** (noise_snr_db / 10.0)
        white *= np.sqrt(target_power / np.mean(white[:, 0] ** 2))
        mixture = clean + white
    noise = mixture - clean
    return FoaSignal(mixture, sample_rate=fs), list(per_source), noise


def render_scene(spec: SceneSpec, signals: Sequence[np.ndarray], cfg: Optional[RenderConfig] = None,
                 add_noise: bool = True) -> Tuple[FoaSignal, List[FoaSignal], np.ndarray]:
    """Render every source of a scene and mix them with calibrated sensor noise."""
    cfg = cfg if cfg is not None else RenderConfig()
    if len(signals) != len(spec.sources):
        raise SignalShapeError(f"scene has {len(spec.sources)} sources but {len(signals)} signals were given")
    if cfg.max_order is not None:
        max_order = cfg.max_order
    else:
        max_order = default_max_order(spec.room, spec.sample_rate, cfg.max_order_ceiling,
                                      cfg.tail_factor, cfg.speed_of_sound)
    n_taps = tail_taps(spec.room, spec.sample_rate, cfg.tail_factor)
    images = []
    for src, sig in zip(spec.sources, signals):
        positions = sample_trajectory(src.trajectory, spec.room)
        images.append(render_moving_source(sig, positions, spec.room, max_order, cfg, spec.sample_rate,
                                           n_taps=n_taps))
    return mix_scene(images, spec.noise_snr_db if add_noise else None, spec.seed)
