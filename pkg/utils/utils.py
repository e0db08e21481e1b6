# utils.py
import hashlib
import json
from typing import Any, Union

import numpy as np

from utils.errors import SignalShapeError

DB_CAP = 100.0


def derive_seed(*parts: Any) -> int:
    """
    Derive a 63-bit integer seed from an arbitrary sequence of parts.

    The parts are joined into a string and hashed with SHA-256, so the same
    parts always give the same seed regardless of process or thread.
    """
    seed_string = "/".join(str(p) for p in parts)
    sha256_hash = hashlib.sha256(seed_string.encode()).digest()
    return int.from_bytes(sha256_hash[:8], 'big') >> 1


def make_rng(*parts: Any) -> np.random.Generator:
    """Seeded NumPy generator derived from `parts`."""
    return np.random.default_rng(derive_seed(*parts))


def compute_hash(data: Union[np.ndarray, dict, list, str, bytes]) -> str:
    """Compute SHA-256 hash of array data or of a JSON-serializable object."""
    if isinstance(data, np.ndarray):
        data_bytes = np.ascontiguousarray(data).tobytes()
    elif isinstance(data, bytes):
        data_bytes = data
    elif isinstance(data, str):
        data_bytes = data.encode()
    else:
        data_bytes = json.dumps(data, sort_keys=True, default=str).encode()
    return hashlib.sha256(data_bytes).hexdigest()


def safe_db(numerator: float, denominator: float, cap: float = DB_CAP) -> float:
    """
    10*log10(numerator/denominator) clipped to [-cap, cap].

    A zero denominator maps to +cap and a zero numerator to -cap, so the
    result is always finite.
    """
    numerator = float(numerator)
    denominator = float(denominator)
    if denominator <= 0.0:
        return cap if numerator > 0.0 else 0.0
    if numerator <= 0.0:
        return -cap
    return float(np.clip(10.0 * np.log10(numerator / denominator), -cap, cap))


def frame_count(n_samples: int, win: int, hop: int) -> int:
    """Number of full frames of length `win` taken every `hop` samples."""
    if n_samples < win:
        raise SignalShapeError(f"signal of {n_samples} samples is shorter than window {win}")
    return 1 + (n_samples - win) // hop


def sliding_frames(x: np.ndarray, win: int, hop: int) -> np.ndarray:
    """
    Frame view of `x` along axis 0.

    Returns an array of shape (T, win, *x.shape[1:]) where frame t covers
    samples [t*hop, t*hop + win).
    """
    n_frames = frame_count(x.shape[0], win, hop)
    view = np.lib.stride_tricks.sliding_window_view(x, win, axis=0)[::hop][:n_frames]
    # sliding_window_view appends the window axis last
    return np.moveaxis(view, -1, 1)


def frame_anchors(n_frames: int, win: int, hop: int) -> np.ndarray:
    """Sample positions of frame centers."""
    return np.arange(n_frames) * hop + win / 2.0


def normalize_rows(vecs: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Divide every row by its Euclidean norm; rows with norm <= eps stay zero."""
    norms = np.linalg.norm(vecs, axis=-1, keepdims=True)
    out = np.zeros_like(vecs, dtype=np.float64)
    np.divide(vecs, norms, out=out, where=norms > eps)
    return out
