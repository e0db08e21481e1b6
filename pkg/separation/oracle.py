"""
Groundtruth-backed components. With zero corruption they return the
groundtruth exactly; the corruption knobs (angular jitter, envelope noise,
residual-mixture leakage) are there to exercise the pipeline.
"""
import logging
from typing import List, Optional

import numpy as np

from configs.gen_sep_cfs import OracleSettings
from separation.envelope import FrameEnvelope, SampleEnvelope
from separation.estimators import Components, register_component
from separation.groundtruth import Groundtruth, nearest_source
from separation.trajectory import FramedIntensityTrajectory, Trajectory
from simulation.acoustics import FoaSignal
from utils.errors import ConfigError
from utils.utils import make_rng, normalize_rows

logger = logging.getLogger(__name__)


def jitter_directions(dirs: np.ndarray, sigma_deg: float, rng: np.random.Generator) -> np.ndarray:
    """
    Rotate every unit vector by exactly `sigma_deg` toward a uniformly drawn
    perpendicular direction.
    """
    if sigma_deg == 0.0:
        return dirs.copy()
    # orthonormal basis of the plane perpendicular to each row
    helper = np.where(np.abs(dirs[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = normalize_rows(np.cross(dirs, helper))
    e2 = np.cross(dirs, e1)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=dirs.shape[0])
    perp = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
    sigma = np.radians(sigma_deg)
    return normalize_rows(np.cos(sigma) * dirs + np.sin(sigma) * perp)


def _require(groundtruth: Optional[Groundtruth], name: str) -> Groundtruth:
    if groundtruth is None:
        raise ConfigError(f"oracle {name} needs the scene groundtruth")
    return groundtruth


class OracleEnvelopeEstimator:
    name = "oracle"

    def __init__(self, groundtruth: Optional[Groundtruth] = None, c_max: int = 3,
                 oracle: Optional[OracleSettings] = None, **_):
        self.groundtruth = _require(groundtruth, "envelope estimator")
        self.c_max = c_max
        self.settings = oracle if oracle is not None else OracleSettings()
        if self.groundtruth.n_sources > c_max:
            logger.warning("scene has %d sources but c_max is %d, dropping the extra envelopes",
                           self.groundtruth.n_sources, c_max)

    def estimate(self, mixture: FoaSignal) -> List[FrameEnvelope]:
        gt = self.groundtruth
        n_frames = len(gt.frame_envelopes[0])
        values = [env.values.copy() for env in gt.frame_envelopes[:self.c_max]]
        values += [np.zeros(n_frames) for _ in range(self.c_max - len(values))]
        if self.settings.envelope_noise > 0.0:
            rng = make_rng(self.settings.seed, "oracle-envelope")
            values = [np.maximum(v + self.settings.envelope_noise * rng.standard_normal(n_frames), 0.0)
                      for v in values]
        return [FrameEnvelope(v, gt.win, gt.hop) for v in values]


class OracleTracker:
    """
    Returns the groundtruth DOA trajectory of the source whose envelope is
    closest to the given one, jittered by `sigma_deg` (or by
    `refined_sigma_deg` once a separated signal is supplied).
    """
    name = "oracle"

    def __init__(self, groundtruth: Optional[Groundtruth] = None, oracle: Optional[OracleSettings] = None, **_):
        self.groundtruth = _require(groundtruth, "tracker")
        self.settings = oracle if oracle is not None else OracleSettings()

    def track(self, mixture: FoaSignal, env: SampleEnvelope, separated: Optional[FoaSignal] = None) -> Trajectory:
        gt = self.groundtruth
        query = env.values if isinstance(env, SampleEnvelope) else np.asarray(env, dtype=np.float64)
        c = nearest_source([e.values for e in gt.sample_envelopes], query)
        refined = separated is not None
        sigma = self.settings.sigma_deg
        if refined and self.settings.refined_sigma_deg is not None:
            sigma = self.settings.refined_sigma_deg
        rng = make_rng(self.settings.seed, "oracle-tracker", c, refined)
        return Trajectory(jitter_directions(gt.trajectories[c].dirs, sigma, rng))


class _FitMatcher:
    def __init__(self, groundtruth: Optional[Groundtruth], oracle: Optional[OracleSettings], name: str):
        self.groundtruth = _require(groundtruth, name)
        self.settings = oracle if oracle is not None else OracleSettings()
        self._framed = [self.groundtruth.framed_intensity(c).vecs for c in range(self.groundtruth.n_sources)]

    def _match(self, fit: FramedIntensityTrajectory) -> int:
        return nearest_source(self._framed, fit.vecs)

    def _leaky(self, image: np.ndarray, mixture: np.ndarray) -> np.ndarray:
        return image + self.settings.leakage * (mixture - image)


class OracleExtractor(_FitMatcher):
    name = "oracle"

    def __init__(self, groundtruth: Optional[Groundtruth] = None, oracle: Optional[OracleSettings] = None, **_):
        super().__init__(groundtruth, oracle, "extractor")

    def extract(self, mixture: FoaSignal, fit: FramedIntensityTrajectory) -> FoaSignal:
        image = self.groundtruth.images[self._match(fit)]
        return FoaSignal(self._leaky(image.samples, mixture.samples), sample_rate=mixture.sample_rate)


class OracleRefinementExtractor(_FitMatcher):
    name = "oracle"

    def __init__(self, groundtruth: Optional[Groundtruth] = None, oracle: Optional[OracleSettings] = None, **_):
        super().__init__(groundtruth, oracle, "refinement extractor")

    def refine(self, mixture: FoaSignal, separated: FoaSignal, fit: FramedIntensityTrajectory) -> np.ndarray:
        image = self.groundtruth.images[self._match(fit)]
        return self._leaky(image.omni, mixture.omni)


register_component("envelope", "oracle")(OracleEnvelopeEstimator)
register_component("tracker", "oracle")(OracleTracker)
register_component("extractor", "oracle")(OracleExtractor)
register_component("refiner", "oracle")(OracleRefinementExtractor)


def oracle_estimators(groundtruth: Groundtruth, settings: Optional[OracleSettings] = None,
                      c_max: int = 3) -> Components:
    """All four groundtruth-backed components sharing one corruption setting."""
    settings = settings if settings is not None else OracleSettings()
    return Components(
        envelope=OracleEnvelopeEstimator(groundtruth, c_max=c_max, oracle=settings),
        tracker=OracleTracker(groundtruth, oracle=settings),
        extractor=OracleExtractor(groundtruth, oracle=settings),
        refiner=OracleRefinementExtractor(groundtruth, oracle=settings),
    )
