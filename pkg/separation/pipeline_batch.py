import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from tqdm import tqdm

# registers the groundtruth-backed components under the name "oracle"
import separation.oracle  # noqa: F401
from configs.gen_sep_cfs import RunConfig, config_hash
from provenance.ledger import provenance_record
from separation.estimators import build_components, check_component_names
from separation.envelope import interpolate_to_samples
from separation.groundtruth import Groundtruth, build_groundtruth
from separation.pipeline import PipelineResult, SourceResult, run_full_pipeline
from simulation.acoustics import FoaSignal
from storage.arrays import load_envelope, load_trajectory, save_envelope, save_trajectory
from storage.manifest import DatasetManifest, ManifestEntry, load_manifest
from storage.reports import save_json
from storage.wav_io import read_foa, read_mono, write_wav

logger = logging.getLogger(__name__)

RESULT_NAME = "result.json"


def load_scene(entry: ManifestEntry, root: Path, win: int = 256,
               hop: int = 128) -> Tuple[FoaSignal, Groundtruth]:
    """Mixture and groundtruth of one manifest entry."""
    mixture = read_foa(root / entry.mixture_file)
    images = [read_foa(root / f) for f in entry.foa_image_files]
    trajectories = [load_trajectory(root / f) for f in entry.trajectory_files]
    groundtruth = build_groundtruth(mixture, images, trajectories, win, hop, t60=entry.t60,
                                    separation_deg=entry.separation_deg)
    return mixture, groundtruth


def save_result(result: PipelineResult, out_dir: Path, sample_rate: int, extra: Optional[Dict] = None) -> Path:
    """
    Write estimates, per-round separated signals and trajectories, the
    C_max estimated frame envelopes, plus an index JSON.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    envelopes = [save_envelope(out_dir / f"envelope_{k}.txt", env) for k, env in enumerate(result.frame_envelopes)]
    sources = []
    for i, src in enumerate(result.sources):
        estimate = write_wav(out_dir / f"estimate_{i}.wav", src.estimate, sample_rate)
        separated = [write_wav(out_dir / f"separated_{i}_round_{r + 1}.wav", s)
                     for r, s in enumerate(src.separated_history)]
        trajectories = [save_trajectory(out_dir / f"trajectory_{i}_round_{r}.txt", t)
                        for r, t in enumerate(src.trajectory_history)]
        sources.append({"slot": src.slot, "estimate_file": estimate.name,
                        "separated_files": [p.name for p in separated],
                        "trajectory_files": [p.name for p in trajectories]})
    index = {"count": result.count, "sources": sources, "envelope_files": [p.name for p in envelopes],
             "provenance": result.provenance}
    index.update(extra or {})
    return save_json(index, out_dir / RESULT_NAME)


def load_result(result_path: Path) -> Tuple[PipelineResult, Dict]:
    """Rebuild the parts of a PipelineResult that evaluation needs from its files."""
    with open(result_path) as f:
        index = json.load(f)
    root = result_path.parent
    frame_envelopes = [load_envelope(root / name) for name in index.get("envelope_files", [])]
    sources = []
    for src in index["sources"]:
        separated = [read_foa(root / name) for name in src["separated_files"]]
        trajectories = [load_trajectory(root / name) for name in src["trajectory_files"]]
        estimate = read_mono(root / src["estimate_file"])
        # stage 1 interpolates the slot's frame envelope; refreshed envelopes are not stored
        initial = []
        if src["slot"] < len(frame_envelopes):
            initial.append(interpolate_to_samples(frame_envelopes[src["slot"]], estimate.shape[0],
                                                  separated[-1].sample_rate))
        sources.append(SourceResult(slot=src["slot"], estimate=estimate, separated=separated[-1],
                                    trajectory=trajectories[-1], intensity_history=[],
                                    trajectory_history=trajectories, envelope_history=initial,
                                    separated_history=separated))
    return PipelineResult(sources, index["count"], frame_envelopes, index.get("provenance", {})), index


@dataclass
class BatchRunResult:
    processing_time: float
    total_scenes: int = 0
    processed_scenes: int = 0
    failed_scenes: List[str] = field(default_factory=list)
    result_files: List[str] = field(default_factory=list)


class BatchPipelineRunner:
    def __init__(self, config: RunConfig):
        check_component_names(config.components)
        self.config = config
        self.manifest_path = Path(config.manifest_path)
        self.out_dir = Path(config.out_dir)
        self.manifest: DatasetManifest = load_manifest(self.manifest_path)
        self.config_hash = config_hash(config)

    def run_entry(self, entry: ManifestEntry) -> Path:
        cfg = self.config
        root = self.manifest_path.parent
        mixture, groundtruth = load_scene(entry, root, cfg.pipeline.win, cfg.pipeline.hop)
        components = build_components(cfg.components, c_max=cfg.pipeline.c_max, win=cfg.pipeline.win,
                                      hop=cfg.pipeline.hop, groundtruth=groundtruth, oracle=cfg.oracle)
        result = run_full_pipeline(mixture, components, cfg.pipeline)
        run_info = {k: v for k, v in result.provenance.items() if k != "components"}
        result.provenance = provenance_record(self.config_hash, entry.seed, components.names(), **run_info)
        scene_name = Path(entry.mixture_file).parent.name
        return save_result(result, self.out_dir / scene_name, mixture.sample_rate,
                           extra={"manifest": str(self.manifest_path.resolve()), "entry_seed": entry.seed})

    def _safe_run(self, entry: ManifestEntry) -> Optional[Path]:
        try:
            return self.run_entry(entry)
        except Exception as e:
            logger.error("scene %s failed: %s", entry.mixture_file, e)
            return None

    def process(self) -> BatchRunResult:
        start_time = datetime.now()
        entries = self.manifest.entries
        logger.info("running %s components on %d scenes", self.config.components, len(entries))
        if self.config.parallelism <= 1:
            outcomes = [self._safe_run(e) for e in tqdm(entries, desc="Separating scenes")]
        else:
            with ThreadPoolExecutor(max_workers=self.config.parallelism) as executor:
                outcomes = list(tqdm(executor.map(self._safe_run, entries), total=len(entries),
                                     desc="Separating scenes"))

        result = BatchRunResult(
            processing_time=(datetime.now() - start_time).total_seconds(),
            total_scenes=len(entries),
            processed_scenes=sum(o is not None for o in outcomes),
            failed_scenes=[e.mixture_file for e, o in zip(entries, outcomes) if o is None],
            result_files=[str(o) for o in outcomes if o is not None],
        )
        logger.info("processed %d/%d scenes in %.2fs", result.processed_scenes, result.total_scenes,
                    result.processing_time)
        return result
