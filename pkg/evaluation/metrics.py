import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, LinAlgWarning, solve
from scipy.signal import fftconvolve

from separation.envelope import SampleEnvelope
from separation.trajectory import Trajectory
from utils.assignment import exhaustive_assignment
from utils.errors import GeometryError, SignalShapeError, ZeroEnergyError
from utils.utils import DB_CAP, safe_db

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = "1.0"
RIDGE_EPS = 1e-8
SEGMENT_24MS = 384


def _mono(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).reshape(-1)


def _check_pair(est: np.ndarray, trg: np.ndarray) -> None:
    if est.shape != trg.shape:
        raise SignalShapeError(f"estimate has {est.shape[0]} samples, target has {trg.shape[0]}")


def snr_db(est, trg) -> float:
    """10*log10(sum trg^2 / sum (est - trg)^2), capped at ±100 dB."""
    est, trg = _mono(est), _mono(trg)
    _check_pair(est, trg)
    trg_energy = float(np.sum(trg ** 2))
    if trg_energy <= 0.0:
        raise ZeroEnergyError("target has zero energy")
    return safe_db(trg_energy, float(np.sum((est - trg) ** 2)))


def si_snr_db(est, trg) -> float:
    """SNR after the optimal scalar projection of est onto trg."""
    est, trg = _mono(est), _mono(trg)
    _check_pair(est, trg)
    trg_energy = float(np.dot(trg, trg))
    if trg_energy <= 0.0 or not np.any(est):
        raise ZeroEnergyError("SI-SNR needs nonzero estimate and target")
    proj = (np.dot(est, trg) / trg_energy) * trg
    return safe_db(float(np.sum(proj ** 2)), float(np.sum((est - proj) ** 2)))


def _delayed_gram(trg: np.ndarray, filter_len: int) -> np.ndarray:
    """
    Gram matrix of trg delayed by 0..filter_len-1 samples, each delayed copy
    truncated to the original length.
    """
    n = trg.shape[0]
    gram = np.empty((filter_len, filter_len))
    for k in range(filter_len):
        products = trg[:n - k] * trg[k:]
        # entry (j-k, j) drops the last j-k products
        tail = np.concatenate([[0.0], np.cumsum(products[::-1][:filter_len])])
        values = products.sum() - tail[:filter_len - k]
        rows = np.arange(filter_len - k)
        gram[rows, rows + k] = values
        gram[rows + k, rows] = values
    return gram


def sdr_db(est, trg, filter_len: int = 512) -> float:
    """
    Distortion-tolerant SDR: est is projected by least squares onto trg
    filtered by any FIR of `filter_len` taps, and the projection energy is
    compared with the residual energy.
    """
    est, trg = _mono(est), _mono(trg)
    _check_pair(est, trg)
    if filter_len == 1:
        return si_snr_db(est, trg)
    if est.shape[0] < filter_len:
        raise SignalShapeError(f"signals of {est.shape[0]} samples are shorter than filter_len {filter_len}")
    if not np.any(trg) or not np.any(est):
        raise ZeroEnergyError("SDR needs nonzero estimate and target")

    n = est.shape[0]
    gram = _delayed_gram(trg, filter_len)
    cross = fftconvolve(est, trg[::-1])[n - 1:n - 1 + filter_len]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinAlgWarning)
            coeffs = solve(gram, cross, assume_a="pos")
    except (LinAlgError, LinAlgWarning):
        logger.warning("singular normal equations in SDR projection, using ridge eps=%g", RIDGE_EPS)
        ridge = RIDGE_EPS * max(float(np.mean(np.diag(gram))), 1.0)
        coeffs = solve(gram + ridge * np.eye(filter_len), cross, assume_a="sym")
    proj = fftconvolve(trg, coeffs)[:n]
    return safe_db(float(np.sum(proj ** 2)), float(np.sum((est - proj) ** 2)))


def snr_improvement_db(est, trg, mix) -> float:
    return snr_db(est, trg) - snr_db(mix, trg)


def si_snr_improvement_db(est, trg, mix) -> float:
    return si_snr_db(est, trg) - si_snr_db(mix, trg)


def segmental_snr_db(est, trg, segment: int = SEGMENT_24MS) -> np.ndarray:
    """SNR of every full `segment`-sample interval where the target is not silent."""
    est, trg = _mono(est), _mono(trg)
    _check_pair(est, trg)
    n_seg = est.shape[0] // segment
    values = []
    for s in range(n_seg):
        t = trg[s * segment:(s + 1) * segment]
        e = est[s * segment:(s + 1) * segment]
        energy = float(np.sum(t ** 2))
        if energy > 0.0:
            values.append(safe_db(energy, float(np.sum((e - t) ** 2))))
    return np.asarray(values)


def angular_error_deg(u, v) -> float:
    """Angle between two nonzero vectors in degrees, within [0, 180]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise GeometryError("angular error of a zero vector is undefined")
    return float(np.degrees(np.arccos(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))))


def _dirs(traj: Union[Trajectory, np.ndarray]) -> np.ndarray:
    return traj.dirs if isinstance(traj, Trajectory) else np.asarray(traj, dtype=np.float64)


def angular_error_series_deg(est: Union[Trajectory, np.ndarray], trg: Union[Trajectory, np.ndarray]) -> np.ndarray:
    """Per-sample angular error between two direction sequences."""
    e, t = _dirs(est), _dirs(trg)
    if e.shape != t.shape:
        raise SignalShapeError(f"trajectory shapes differ: {e.shape} vs {t.shape}")
    ne, nt = np.linalg.norm(e, axis=1), np.linalg.norm(t, axis=1)
    if np.any(ne == 0.0) or np.any(nt == 0.0):
        raise GeometryError("trajectory contains zero vectors")
    cos = np.einsum("ij,ij->i", e, t) / (ne * nt)
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def ewrmsae_deg(est: Trajectory, trg: Trajectory, trg_env: Union[SampleEnvelope, np.ndarray]) -> float:
    """Root mean square angular error, each sample weighted by the squared target envelope."""
    env = trg_env.values if isinstance(trg_env, SampleEnvelope) else _mono(trg_env)
    errors = angular_error_series_deg(est, trg)
    if env.shape[0] != errors.shape[0]:
        raise SignalShapeError(f"envelope has {env.shape[0]} samples, trajectories have {errors.shape[0]}")
    weights = env ** 2
    total = float(np.sum(weights))
    if total <= 0.0:
        raise ZeroEnergyError("EWRMSAE needs a target envelope with nonzero energy")
    return float(np.sqrt(np.sum(weights * errors ** 2) / total))


def angular_error_by_envelope(est: Trajectory, trg: Trajectory, env: Union[SampleEnvelope, np.ndarray],
                              edges: Sequence[float] = (0.0, 0.05, 0.1, 0.2, 0.4, np.inf)) -> Dict[str, float]:
    """Mean angular error of the samples falling in each envelope-magnitude bin."""
    values = env.values if isinstance(env, SampleEnvelope) else _mono(env)
    errors = angular_error_series_deg(est, trg)
    result = {}
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (values >= lo) & (values < hi)
        if np.any(mask):
            result[f"{lo:g}-{hi:g}"] = float(errors[mask].mean())
    return result


def upit_assign(pairwise_cost) -> Tuple[Tuple[int, ...], float]:
    """
    Assignment of estimates (rows) to targets (columns) with minimum total
    cost; ties go to the lexicographically smallest permutation.
    """
    return exhaustive_assignment(np.asarray(pairwise_cost, dtype=np.float64))


@dataclass
class SourceMetrics:
    estimate_index: int
    target_index: int
    snr_db: float
    si_snr_db: float
    sdr_db: float
    ewrmsae_deg: Optional[float]
    snr_improvement_db: Optional[float] = None
    si_snr_improvement_db: Optional[float] = None
    ewrmsae_history_deg: List[float] = field(default_factory=list)
    separated_si_snr_history_db: List[float] = field(default_factory=list)
    separated_snr_history_db: List[float] = field(default_factory=list)
    # channel 0 of the last separated signal, before the refinement stage
    unrefined_snr_db: Optional[float] = None
    unrefined_si_snr_db: Optional[float] = None
    segmental_snr_db: Optional[float] = None
    # trajectory tracked on the mixture alone
    mix_track_ewrmsae_deg: Optional[float] = None
    angular_error_by_envelope_deg: Dict[str, float] = field(default_factory=dict)


@dataclass
class EvalReport:
    """
    Metrics of one scene under the uPIT assignment.

    `permutation[i]` is the target scored against estimate i, or -1 when the
    estimate was left unmatched because more sources were estimated than
    exist; `missed_targets` lists targets no estimate was matched to.
    """
    per_source: List[SourceMetrics]
    permutation: Tuple[int, ...]
    count_verdict: Tuple[int, int]
    missed_targets: List[int] = field(default_factory=list)
    envelope_nmse_db: Optional[float] = None
    db_cap: float = DB_CAP
    schema_version: str = REPORT_SCHEMA_VERSION
    provenance: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["permutation"] = list(self.permutation)
        data["count_verdict"] = {"true": self.count_verdict[0], "estimated": self.count_verdict[1]}
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "EvalReport":
        return cls(
            per_source=[SourceMetrics(**s) for s in data["per_source"]],
            permutation=tuple(data["permutation"]),
            count_verdict=(data["count_verdict"]["true"], data["count_verdict"]["estimated"]),
            missed_targets=list(data.get("missed_targets", [])),
            envelope_nmse_db=data.get("envelope_nmse_db"),
            db_cap=data.get("db_cap", DB_CAP),
            schema_version=data.get("schema_version", REPORT_SCHEMA_VERSION),
            provenance=data.get("provenance", {}),
        )

    def render_table(self) -> str:
        header = f"{'est':>4} {'trg':>4} {'SNR':>8} {'SI-SNR':>8} {'SDR':>8} {'EWRMSAE':>9}"
        lines = [header, "-" * len(header)]
        for s in self.per_source:
            ew = f"{s.ewrmsae_deg:9.2f}" if s.ewrmsae_deg is not None else f"{'-':>9}"
            lines.append(f"{s.estimate_index:>4} {s.target_index:>4} {s.snr_db:8.2f} {s.si_snr_db:8.2f} "
                         f"{s.sdr_db:8.2f} {ew}")
        lines.append(f"count: true={self.count_verdict[0]} estimated={self.count_verdict[1]}")
        if self.envelope_nmse_db is not None:
            lines.append(f"envelope NMSE: {self.envelope_nmse_db:.2f} dB")
        if self.missed_targets:
            lines.append(f"missed targets: {', '.join(str(t) for t in self.missed_targets)}")
        return "\n".join(lines)
