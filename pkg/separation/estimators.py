"""
Component contracts used by the pipeline, a registry to select them by name,
and the classical signal-processing implementations.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Protocol, Tuple, runtime_checkable

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import istft, stft

from configs.gen_sep_cfs import ComponentNames
from separation.envelope import (FrameEnvelope, SampleEnvelope, extract_envelope, interpolate_to_samples,
                                 normalize_by_mixture_peak)
from separation.trajectory import FramedIntensityTrajectory, Trajectory, nearest_valid_index
from simulation.acoustics import FoaSignal, foa_gains
from utils.errors import SignalShapeError, UnknownComponentError, ZeroEnergyError
from utils.utils import frame_anchors, frame_count, normalize_rows, sliding_frames

logger = logging.getLogger(__name__)

CONFIDENCE_FLOOR = 1e-3
# (W, Y, Z, X) channel indices of the X, Y, Z dipoles
DIPOLE_XYZ = [3, 1, 2]


@runtime_checkable
class EnvelopeEstimator(Protocol):
    name: str

    def estimate(self, mixture: FoaSignal) -> List[FrameEnvelope]:
        ...


@runtime_checkable
class Tracker(Protocol):
    name: str

    def track(self, mixture: FoaSignal, env: SampleEnvelope,
              separated: Optional[FoaSignal] = None) -> Trajectory:
        ...


@runtime_checkable
class Extractor(Protocol):
    name: str

    def extract(self, mixture: FoaSignal, fit: FramedIntensityTrajectory) -> FoaSignal:
        ...


@runtime_checkable
class RefinementExtractor(Protocol):
    name: str

    def refine(self, mixture: FoaSignal, separated: FoaSignal, fit: FramedIntensityTrajectory) -> np.ndarray:
        ...


@dataclass
class Components:
    envelope: EnvelopeEstimator
    tracker: Tracker
    extractor: Extractor
    refiner: RefinementExtractor

    def names(self) -> Dict[str, str]:
        return {"envelope": self.envelope.name, "tracker": self.tracker.name,
                "extractor": self.extractor.name, "refiner": self.refiner.name}


_REGISTRY: Dict[str, Dict[str, Callable]] = {"envelope": {}, "tracker": {}, "extractor": {}, "refiner": {}}


def register_component(kind: str, name: str):
    """Class decorator adding a component factory to the registry."""
    def decorator(factory):
        _REGISTRY[kind][name] = factory
        return factory
    return decorator


def available_components(kind: str) -> List[str]:
    return sorted(_REGISTRY[kind])


def check_component_names(names: ComponentNames) -> None:
    for kind in _REGISTRY:
        name = getattr(names, kind)
        if name not in _REGISTRY[kind]:
            raise UnknownComponentError(f"unknown {kind} component '{name}' "
                                        f"(available: {', '.join(available_components(kind))})")


def build_components(names: ComponentNames, **context) -> Components:
    """
    Instantiate the named components. Every factory receives the shared
    context (c_max, win, hop, groundtruth, oracle settings) and picks what it needs.
    """
    check_component_names(names)
    return Components(**{kind: _REGISTRY[kind][getattr(names, kind)](**context) for kind in _REGISTRY})


def foa_stft(signal: FoaSignal, win: int = 256, hop: int = 128, on_frame_clock: bool = True) -> np.ndarray:
    """
    STFT of all four channels, shape (4, F, T). On the frame clock, frame t
    covers samples [t*hop, t*hop + win) like the envelope frames.
    """
    kwargs = dict(boundary=None, padded=False) if on_frame_clock else {}
    _, _, spec = stft(signal.samples.T, nperseg=win, noverlap=win - hop, window="hann", axis=-1, **kwargs)
    return spec


def intensity_vectors(spec: np.ndarray) -> np.ndarray:
    """Active intensity per time-frequency bin, (F, T, 3) in XYZ, pointing at the source."""
    omni = np.conj(spec[0])
    return np.stack([np.real(omni * spec[ch]) for ch in DIPOLE_XYZ], axis=-1)


def _interp_rows(anchors: np.ndarray, values: np.ndarray, n_samples: int) -> np.ndarray:
    samples = np.arange(n_samples, dtype=np.float64)
    return np.stack([np.interp(samples, anchors, values[:, k]) for k in range(values.shape[1])], axis=1)


def pseudo_intensity_track(mixture: FoaSignal, env: SampleEnvelope, smoothing: int = 5,
                           win: int = 256, hop: int = 128, dominance: float = 0.0) -> Trajectory:
    """
    Classical DOA track from the broadband pseudo-intensity vector.

    Per frame the intensity vectors of all frequency bins are summed and
    moving-averaged over `smoothing` frames. Frames where the envelope is
    below 1e-3 (or, with `dominance` > 0, where the envelope is below that
    fraction of the mixture envelope) take the direction of the nearest
    confident frame. Frame directions are linearly interpolated to samples.
    """
    n = len(mixture)
    if not np.any(mixture.samples):
        raise ZeroEnergyError("cannot track in an all-silent mixture")
    env_values = env.values if isinstance(env, SampleEnvelope) else np.asarray(env, dtype=np.float64)
    if env_values.shape[0] != n:
        raise SignalShapeError(f"envelope has {env_values.shape[0]} samples, mixture has {n}")

    intensity = intensity_vectors(foa_stft(mixture, win, hop)).sum(axis=0)
    if smoothing > 1:
        intensity = uniform_filter1d(intensity, size=smoothing, axis=0, mode="nearest")
    n_frames = intensity.shape[0]
    anchors = frame_anchors(n_frames, win, hop)
    env_frames = np.interp(anchors, np.arange(n), env_values)
    norms = np.linalg.norm(intensity, axis=1)

    confident = (env_frames >= CONFIDENCE_FLOOR) & (norms > 0)
    if dominance > 0.0:
        mix_frames = extract_envelope(normalize_by_mixture_peak(mixture.omni, mixture.omni), win, hop)
        mix_env = interpolate_to_samples(mix_frames, n).values
        dominant = confident & (env_frames >= dominance * np.interp(anchors, np.arange(n), mix_env))
        if np.any(dominant):
            confident = dominant
        else:
            logger.info("no frame where the source dominates the mixture, using all active frames")
    if not np.any(confident):
        raise ZeroEnergyError("no frame with enough energy to track")

    frame_dirs = normalize_rows(intensity)
    frame_dirs = frame_dirs[nearest_valid_index(np.flatnonzero(confident), n_frames)]
    dirs = normalize_rows(_interp_rows(anchors, frame_dirs, n), eps=1e-12)
    degenerate = np.linalg.norm(dirs, axis=1) == 0.0
    if np.any(degenerate):
        nearest_frame = np.clip(np.round((np.arange(n) - win / 2) / hop).astype(int), 0, n_frames - 1)
        dirs[degenerate] = frame_dirs[nearest_frame[degenerate]]
    return Trajectory(dirs)


def steered_extract_with_flags(mixture: FoaSignal, fit: FramedIntensityTrajectory
                               ) -> Tuple[FoaSignal, np.ndarray]:
    """
    Steered first-order extraction; also returns the mask of frames whose
    direction was zero. Those frames pass the mixture's omni channel through
    at unit gain and are re-encoded as omni only.
    """
    n = len(mixture)
    win, hop = fit.win, fit.hop
    n_frames = frame_count(n, win, hop)
    if len(fit) != n_frames:
        raise SignalShapeError(f"trajectory has {len(fit)} frames, mixture has {n_frames} on the "
                               f"(win={win}, hop={hop}) grid")
    anchors = frame_anchors(n_frames, win, hop)
    magnitude = np.linalg.norm(fit.vecs, axis=1)
    frame_dirs = normalize_rows(fit.vecs)
    passthrough = magnitude == 0.0

    # cardioid 0.5*(W + d·[X,Y,Z]); pass-through frames keep W only
    frame_weights = 0.5 * foa_gains(frame_dirs)
    frame_weights[passthrough] = np.array([1.0, 0.0, 0.0, 0.0])
    weights = _interp_rows(anchors, frame_weights, n)
    beam = np.einsum("nc,nc->n", weights, mixture.samples)

    if np.any(mixture.omni) and np.any(beam):
        beam_frames = extract_envelope(normalize_by_mixture_peak(beam, mixture.omni), win, hop)
        beam_env = interpolate_to_samples(beam_frames, n).values
        beam_level = sliding_frames(beam_env, win, hop).mean(axis=1)
    else:
        beam_level = np.zeros(n_frames)
    frame_gain = np.zeros(n_frames)
    np.divide(magnitude, beam_level, out=frame_gain, where=beam_level > 0)
    frame_gain = np.minimum(frame_gain, 1.0)
    frame_gain[passthrough] = 1.0
    gain = np.interp(np.arange(n), anchors, frame_gain)
    mono = gain * beam

    steer = normalize_rows(_interp_rows(anchors, frame_dirs, n), eps=1e-12)
    if np.any(passthrough):
        logger.warning("%d of %d frames have a zero direction, passing the omni channel through",
                       int(passthrough.sum()), n_frames)
    return FoaSignal(mono[:, None] * foa_gains(steer), sample_rate=mixture.sample_rate), passthrough


def steered_extract(mixture: FoaSignal, fit: FramedIntensityTrajectory) -> FoaSignal:
    """
    Per frame, a first-order cardioid steered along the trajectory direction
    and scaled toward the frame's intensity magnitude; the mono result is
    re-encoded to FOA at the steering direction.
    """
    return steered_extract_with_flags(mixture, fit)[0]


def _spherical_kmeans(dirs: np.ndarray, weights: np.ndarray, k: int, n_iter: int = 30) -> np.ndarray:
    """Energy-weighted k-means on the unit sphere with farthest-point initialization."""
    centroids = [dirs[int(np.argmax(weights))]]
    while len(centroids) < k:
        similarity = np.max(dirs @ np.array(centroids).T, axis=1)
        score = (1.0 - similarity) * np.sqrt(weights)
        centroids.append(dirs[int(np.argmax(score))])
    centroids = np.array(centroids)
    for _ in range(n_iter):
        labels = np.argmax(dirs @ centroids.T, axis=1)
        updated = centroids.copy()
        for c in range(k):
            members = labels == c
            if np.any(members):
                total = (weights[members, None] * dirs[members]).sum(axis=0)
                norm = np.linalg.norm(total)
                if norm > 0:
                    updated[c] = total / norm
        if np.allclose(updated, centroids):
            break
        centroids = updated
    return centroids


@register_component("envelope", "clustered")
class ClusteredEnvelopeEstimator:
    """
    Spatial-clustering envelope estimator: time-frequency bins are grouped
    by their intensity direction, each group masks the omni channel, and the
    masked signals go through the envelope detector.
    """
    name = "clustered"

    def __init__(self, c_max: int = 3, win: int = 256, hop: int = 128, merge_deg: float = 20.0,
                 energy_floor: float = 1e-3, **_):
        self.c_max = c_max
        self.win = win
        self.hop = hop
        self.merge_deg = merge_deg
        self.energy_floor = energy_floor

    def estimate(self, mixture: FoaSignal) -> List[FrameEnvelope]:
        n = len(mixture)
        spec = foa_stft(mixture, self.win, self.hop)
        intensity = intensity_vectors(spec)
        energy = np.abs(spec[0]) ** 2
        flat_dirs = normalize_rows(intensity.reshape(-1, 3))
        flat_energy = energy.reshape(-1)
        usable = (flat_energy >= self.energy_floor * flat_energy.max()) & np.any(flat_dirs != 0, axis=1)
        if not np.any(usable):
            raise ZeroEnergyError("mixture has no time-frequency bin to cluster")

        k = min(self.c_max, int(usable.sum()))
        centroids = _spherical_kmeans(flat_dirs[usable], flat_energy[usable], k)
        labels = np.argmax(flat_dirs @ centroids.T, axis=1).reshape(energy.shape)

        cluster_energy = np.array([energy[labels == c].sum() for c in range(k)])
        order = np.argsort(-cluster_energy, kind="stable")
        cos_merge = np.cos(np.radians(self.merge_deg))
        kept: List[int] = []
        for c in order:
            owner = next((p for p in kept if centroids[p] @ centroids[c] >= cos_merge), None)
            if owner is None:
                kept.append(int(c))
            else:
                labels[labels == c] = owner

        envelopes = []
        for c in kept:
            masked = np.where(labels == c, spec[0], 0.0)
            _, signal = istft(masked, nperseg=self.win, noverlap=self.win - self.hop, window="hann",
                              boundary=False)
            signal = np.pad(signal[:n], (0, max(0, n - signal.shape[0])))
            envelopes.append(extract_envelope(normalize_by_mixture_peak(signal, mixture.omni), self.win, self.hop))
        n_frames = frame_count(n, self.win, self.hop)
        while len(envelopes) < self.c_max:
            envelopes.append(FrameEnvelope(np.zeros(n_frames), self.win, self.hop))
        return envelopes


@register_component("tracker", "intensity")
class IntensityTracker:
    """Tracks the separated signal when available, otherwise the mixture."""
    name = "intensity"

    def __init__(self, win: int = 256, hop: int = 128, smoothing: int = 5, dominance: float = 0.6, **_):
        self.win = win
        self.hop = hop
        self.smoothing = smoothing
        self.dominance = dominance

    def track(self, mixture: FoaSignal, env: SampleEnvelope, separated: Optional[FoaSignal] = None) -> Trajectory:
        if separated is not None and np.any(separated.samples):
            return pseudo_intensity_track(separated, env, self.smoothing, self.win, self.hop)
        return pseudo_intensity_track(mixture, env, self.smoothing, self.win, self.hop, dominance=self.dominance)


@register_component("extractor", "steered")
class SteeredExtractor:
    name = "steered"

    def __init__(self, **_):
        pass

    def extract(self, mixture: FoaSignal, fit: FramedIntensityTrajectory) -> FoaSignal:
        return steered_extract(mixture, fit)


@register_component("refiner", "steered")
class SteeredRefinementExtractor:
    """
    Stage-3 reference-channel estimate from the mixture and the separated
    FOA signal: the steered beam of the mixture is post-filtered with a
    time-frequency Wiener-style mask built from the separated signal against
    the rest of the mixture, and channel 0 is returned.
    """
    name = "steered"

    def __init__(self, win: int = 256, hop: int = 128, floor: float = 0.0, **_):
        self.win = win
        self.hop = hop
        self.floor = floor

    def refine(self, mixture: FoaSignal, separated: FoaSignal, fit: FramedIntensityTrajectory) -> np.ndarray:
        n = len(mixture)
        if len(separated) != n:
            raise SignalShapeError(f"separated signal has {len(separated)} samples, mixture has {n}")
        beam = steered_extract(mixture, fit).omni
        stft_kwargs = dict(nperseg=self.win, noverlap=self.win - self.hop, window="hann")
        _, _, target = stft(separated.omni, **stft_kwargs)
        _, _, rest = stft(mixture.omni - separated.omni, **stft_kwargs)
        _, _, beam_spec = stft(beam, **stft_kwargs)
        target_power = np.abs(target) ** 2
        denom = target_power + np.abs(rest) ** 2
        mask = np.zeros_like(target_power)
        np.divide(target_power, denom, out=mask, where=denom > 0)
        mask = np.maximum(mask, self.floor)
        _, refined = istft(mask * beam_spec, **stft_kwargs)
        return np.pad(refined[:n], (0, max(0, n - refined.shape[0])))
