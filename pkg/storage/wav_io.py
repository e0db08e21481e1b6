"""
32-bit IEEE-float WAVE persistence.

Payloads are written as float32, so a float32 array read back from a file
written here is bitwise identical to the original.
"""
import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import soundfile as sf

from simulation.acoustics import N_FOA, FoaSignal
from utils.errors import MalformedContainerError, NonFiniteAudioError, SignalShapeError, UnsupportedCodecError

logger = logging.getLogger(__name__)

FLOAT_SUBTYPE = "FLOAT"

Payload = Union[FoaSignal, np.ndarray]


def read_wav(path: Union[str, Path]) -> Tuple[np.ndarray, int]:
    """(samples, sample_rate); samples are (N, channels) float32, or (N,) for mono files."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"audio file not found: {path}")
    try:
        info = sf.info(str(path))
    except RuntimeError as e:
        raise MalformedContainerError(f"cannot parse {path}: {e}") from e
    if info.format != "WAV":
        raise MalformedContainerError(f"{path} is a {info.format} container, expected WAV")
    if info.subtype != FLOAT_SUBTYPE:
        raise UnsupportedCodecError(info.subtype, str(path))
    try:
        data, sample_rate = sf.read(str(path), dtype="float32", always_2d=False)
    except RuntimeError as e:
        raise MalformedContainerError(f"cannot decode {path}: {e}") from e
    return data, int(sample_rate)


def write_wav(path: Union[str, Path], payload: Payload, sample_rate: Optional[int] = None) -> Path:
    """
    Store `payload` as 32-bit float WAVE. Other dtypes are cast to float32;
    the cast and its rounding error are logged, and values float32 cannot
    hold are rejected.
    """
    if isinstance(payload, FoaSignal):
        samples = payload.samples
        sample_rate = payload.sample_rate if sample_rate is None else sample_rate
    else:
        samples = np.asarray(payload)
        if sample_rate is None:
            raise SignalShapeError("sample_rate is required for a raw array payload")
    if samples.ndim not in (1, 2) or samples.shape[0] == 0:
        raise SignalShapeError(f"payload must be (N,) or (N, channels) with N >= 1, got {samples.shape}")
    if not np.all(np.isfinite(samples)):
        raise NonFiniteAudioError(f"refusing to write non-finite samples to {path}")
    path = Path(path)
    payload32 = samples.astype(np.float32)
    if samples.dtype != np.float32:
        if not np.all(np.isfinite(payload32)):
            raise NonFiniteAudioError(f"samples for {path} overflow float32")
        rounding = float(np.max(np.abs(payload32.astype(np.float64) - samples)))
        logger.info("casting %s samples to float32 for %s (max rounding error %.3g)", samples.dtype, path,
                    rounding)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), payload32, int(sample_rate), subtype=FLOAT_SUBTYPE, format="WAV",
             endian="LITTLE")
    logger.debug("wrote %s (%s @ %d Hz)", path, samples.shape, sample_rate)
    return path


def read_foa(path: Union[str, Path]) -> FoaSignal:
    data, sample_rate = read_wav(path)
    if data.ndim != 2 or data.shape[1] != N_FOA:
        raise SignalShapeError(f"{path} has shape {data.shape}, expected (N, {N_FOA})")
    return FoaSignal(data.astype(np.float64), sample_rate=sample_rate)


def read_mono(path: Union[str, Path]) -> np.ndarray:
    """Channel 0 of any float WAVE file, as float64."""
    data, _ = read_wav(path)
    return (data if data.ndim == 1 else data[:, 0]).astype(np.float64)


def wav_io(path: Union[str, Path], mode: str, payload: Optional[Payload] = None,
           sample_rate: Optional[int] = None):
    """
    Single entry point: mode "read" returns a FoaSignal for 4-channel files
    and a mono array otherwise; mode "write" stores `payload`.
    """
    if mode == "read":
        data, fs = read_wav(path)
        if data.ndim == 2 and data.shape[1] == N_FOA:
            return FoaSignal(data.astype(np.float64), sample_rate=fs)
        return data
    if mode == "write":
        if payload is None:
            raise SignalShapeError("write mode needs a payload")
        return write_wav(path, payload, sample_rate)
    raise ValueError(f"mode must be 'read' or 'write', got {mode!r}")
