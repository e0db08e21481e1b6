"""Dry source signals: seeded synthetic sounds or mono audio files."""
import logging

import numpy as np
from scipy.signal import butter, sosfilt

from storage.wav_io import read_wav
from utils.errors import ConfigError, SignalShapeError
from utils.utils import make_rng

logger = logging.getLogger(__name__)

SYNTHETIC_PREFIX = "synthetic:"
# one octave-ish band per source index so synthetic sources overlap little in frequency
SYNTHETIC_BANDS_HZ = ((200.0, 600.0), (900.0, 2000.0), (3000.0, 6000.0))
MODULATION_HZ = 4.0


def synthetic_source(seed: int, index: int, n_samples: int, sample_rate: int = 16000) -> np.ndarray:
    """
    Band-limited noise under a slow random amplitude modulation, peak 0.5.
    The modulation has silent stretches, like syllables in speech.
    """
    rng = make_rng(seed, "source-signal", index)
    lo, hi = SYNTHETIC_BANDS_HZ[index % len(SYNTHETIC_BANDS_HZ)]
    shift = rng.uniform(0.9, 1.1)
    hi = min(hi * shift, 0.45 * sample_rate)
    lo = min(lo * shift, 0.5 * hi)
    carrier = sosfilt(butter(4, [lo, hi], btype="band", fs=sample_rate, output="sos"),
                      rng.standard_normal(n_samples))
    modulation = sosfilt(butter(2, MODULATION_HZ, fs=sample_rate, output="sos"), rng.standard_normal(n_samples))
    modulation = np.clip(modulation, 0.0, None)
    signal = carrier * modulation
    peak = np.max(np.abs(signal))
    if peak == 0.0:
        raise SignalShapeError(f"synthetic source {seed}:{index} came out silent")
    return 0.5 * signal / peak


def load_source_signal(ref: str, n_samples: int, sample_rate: int = 16000) -> np.ndarray:
    """
    Resolve an audio reference from a scene: "synthetic:<seed>:<index>" or
    a path to a float WAVE file, looped or trimmed to `n_samples`.
    """
    if ref.startswith(SYNTHETIC_PREFIX):
        try:
            seed, index = (int(v) for v in ref[len(SYNTHETIC_PREFIX):].split(":"))
        except ValueError as e:
            raise ConfigError(f"malformed synthetic source reference {ref!r}") from e
        return synthetic_source(seed, index, n_samples, sample_rate)

    data, fs = read_wav(ref)
    if fs != sample_rate:
        raise ConfigError(f"{ref} is sampled at {fs} Hz, scene expects {sample_rate} Hz")
    mono = (data if data.ndim == 1 else data[:, 0]).astype(np.float64)
    if mono.shape[0] == 0 or not np.any(mono):
        raise SignalShapeError(f"{ref} is empty or silent")
    if mono.shape[0] < n_samples:
        logger.debug("looping %s (%d samples) to %d samples", ref, mono.shape[0], n_samples)
        mono = np.tile(mono, int(np.ceil(n_samples / mono.shape[0])))
    return mono[:n_samples]
