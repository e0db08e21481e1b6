import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Tuple, Union

from tqdm import tqdm

from configs.gen_sep_cfs import ConfigGenerator, DatasetConfig, config_hash
from separation.envelope import groundtruth_envelopes
from simulation.acoustics import render_scene
from simulation.scene_generator import mean_angular_separation_deg, sample_scene, save_scene, scene_doa_trajectories
from simulation.sources import load_source_signal
from storage.arrays import save_envelope, save_trajectory
from storage.manifest import DatasetManifest, FailedEntry, ManifestEntry
from storage.wav_io import write_wav
from utils.utils import derive_seed

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class BatchGenerationResult:
    manifest_path: str
    processing_time: float
    total_scenes: int = 0
    generated_scenes: int = 0
    failed_scenes: List[int] = field(default_factory=list)


def scene_seed(master_seed: int, index: int) -> int:
    return derive_seed(master_seed, "scene", index)


class BatchDatasetGenerator:
    """Renders every scene of a dataset config and writes the manifest once at the end."""

    def __init__(self, config: DatasetConfig, parallelism: Optional[int] = None):
        self.config = config
        self.parallelism = parallelism if parallelism is not None else config.parallelism
        self.out_dir = Path(config.out_dir)

    def _generate_scene(self, index: int) -> Tuple[Optional[ManifestEntry], Optional[FailedEntry]]:
        cfg = self.config
        seed = scene_seed(cfg.master_seed, index)
        scene_dir = Path(f"scene_{index:04d}")
        written: List[str] = []

        def track(path: Path) -> str:
            written.append(str(path.relative_to(self.out_dir)))
            return written[-1]

        try:
            spec = sample_scene(seed, cfg.sampling, cfg.source_files or None)
            n = spec.n_samples
            signals = [load_source_signal(src.audio, n, spec.sample_rate) for src in spec.sources]
            mixture, images, _ = render_scene(spec, signals, cfg.render)
            trajectories = scene_doa_trajectories(spec)
            envelopes = groundtruth_envelopes([img.omni for img in images], mixture.omni, cfg.win, cfg.hop)

            root = self.out_dir / scene_dir
            root.mkdir(parents=True, exist_ok=True)
            scene_path = root / "scene.json"
            save_scene(spec, str(scene_path))
            track(scene_path)
            track(write_wav(root / "mixture.wav", mixture))
            image_files, foa_files, traj_files, env_files = [], [], [], []
            for c, (img, traj, env) in enumerate(zip(images, trajectories, envelopes)):
                image_files.append(track(write_wav(root / f"source_{c}_image.wav", img.omni, spec.sample_rate)))
                foa_files.append(track(write_wav(root / f"source_{c}_foa.wav", img)))
                traj_files.append(track(save_trajectory(root / f"source_{c}_doa.txt", traj)))
                env_files.append(track(save_envelope(root / f"source_{c}_envelope.txt", env)))

            entry = ManifestEntry(
                scene_file=written[0],
                mixture_file=written[1],
                image_files=image_files,
                foa_image_files=foa_files,
                trajectory_files=traj_files,
                envelope_files=env_files,
                seed=seed,
                t60=spec.room.t60,
                separation_deg=mean_angular_separation_deg(trajectories),
            )
            return entry, None
        except Exception as e:
            logger.error("scene %d (seed %d) failed: %s", index, seed, e)
            return None, FailedEntry(index=index, seed=seed, error=f"{type(e).__name__}: {e}", written_files=written)

    def process(self) -> Tuple[DatasetManifest, BatchGenerationResult]:
        start_time = datetime.now()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        indices = range(self.config.n_scenes)
        logger.info("generating %d scenes into %s with %d worker(s)", len(indices), self.out_dir, self.parallelism)

        if self.parallelism <= 1:
            outcomes = [self._generate_scene(i) for i in tqdm(indices, desc="Generating scenes")]
        else:
            with ThreadPoolExecutor(max_workers=self.parallelism) as executor:
                outcomes = list(tqdm(executor.map(self._generate_scene, indices), total=len(indices),
                                     desc="Generating scenes"))

        manifest = DatasetManifest(
            entries=[entry for entry, _ in outcomes if entry is not None],
            failed=[failure for _, failure in outcomes if failure is not None],
            master_seed=self.config.master_seed,
            config_hash=config_hash(self.config),
        )
        manifest_path = manifest.save(self.out_dir / MANIFEST_NAME)

        result = BatchGenerationResult(
            manifest_path=str(manifest_path),
            processing_time=(datetime.now() - start_time).total_seconds(),
            total_scenes=len(indices),
            generated_scenes=len(manifest.entries),
            failed_scenes=[f.index for f in manifest.failed],
        )
        logger.info("generated %d/%d scenes in %.2fs", result.generated_scenes, result.total_scenes,
                    result.processing_time)
        if manifest.failed:
            logger.warning("%d scene(s) failed: %s", len(manifest.failed), result.failed_scenes)
        return manifest, result


def generate_dataset(config: Union[DatasetConfig, str], out_dir: Optional[str] = None,
                     parallelism: Optional[int] = None) -> DatasetManifest:
    """Render a dataset from a config object or config file; `out_dir` overrides the configured one."""
    if isinstance(config, (str, Path)):
        config = ConfigGenerator(str(Path(config).parent)).load_dataset_config(str(config))
    if out_dir is not None:
        config = replace(config, out_dir=str(out_dir))
    manifest, _ = BatchDatasetGenerator(config, parallelism).process()
    return manifest
