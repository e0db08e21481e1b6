import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import soundfile as sf

from utils.errors import ManifestError

logger = logging.getLogger(__name__)

MANIFEST_VERSION = "1.0"


@dataclass
class ManifestEntry:
    """One rendered scene. Paths are relative to the manifest directory."""
    scene_file: str
    mixture_file: str
    image_files: List[str]
    foa_image_files: List[str]
    trajectory_files: List[str]
    envelope_files: List[str]
    seed: int
    t60: float = 0.0
    separation_deg: Optional[float] = None


@dataclass
class FailedEntry:
    index: int
    seed: int
    error: str
    written_files: List[str] = field(default_factory=list)


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    failed: List[FailedEntry] = field(default_factory=list)
    master_seed: int = 0
    config_hash: str = ""
    version: str = MANIFEST_VERSION

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "DatasetManifest":
        if data.get("version") != MANIFEST_VERSION:
            raise ManifestError(f"unsupported manifest version {data.get('version')!r}")
        return cls(
            entries=[ManifestEntry(**e) for e in data.get("entries", [])],
            failed=[FailedEntry(**f) for f in data.get("failed", [])],
            master_seed=data.get("master_seed", 0),
            config_hash=data.get("config_hash", ""),
            version=data["version"],
        )

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=4, sort_keys=True)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise ManifestError(f"manifest not found: {path}")
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _frames(path: Path) -> int:
    return sf.info(str(path)).frames


def validate_entry(entry: ManifestEntry, root: Union[str, Path]) -> List[str]:
    """Every problem with one entry: missing files and length mismatches."""
    root = Path(root)
    problems = []
    n_sources = len(entry.image_files)
    for name, files in (("foa_image_files", entry.foa_image_files), ("trajectory_files", entry.trajectory_files),
                        ("envelope_files", entry.envelope_files)):
        if len(files) != n_sources:
            problems.append(f"{name} lists {len(files)} files for {n_sources} sources")

    referenced = [entry.scene_file, entry.mixture_file, *entry.image_files, *entry.foa_image_files,
                  *entry.trajectory_files, *entry.envelope_files]
    missing = [f for f in referenced if not (root / f).exists()]
    problems.extend(f"missing file {f}" for f in missing)
    if missing:
        return problems

    n = _frames(root / entry.mixture_file)
    for f in [*entry.image_files, *entry.foa_image_files]:
        if _frames(root / f) != n:
            problems.append(f"{f} has {_frames(root / f)} samples, mixture has {n}")
    for f in entry.trajectory_files:
        rows = np.loadtxt(root / f, ndmin=2).shape[0]
        if rows != n:
            problems.append(f"{f} has {rows} rows, mixture has {n} samples")
    return problems


def validate_manifest(manifest: DatasetManifest, root: Union[str, Path]) -> List[str]:
    problems = []
    seeds = [e.seed for e in manifest.entries]
    if len(set(seeds)) != len(seeds):
        problems.append("entry seeds are not unique")
    for i, entry in enumerate(manifest.entries):
        problems.extend(f"entry {i}: {p}" for p in validate_entry(entry, root))
    return problems


def load_manifest(path: Union[str, Path], validate: bool = True) -> DatasetManifest:
    manifest = DatasetManifest.load(path)
    if validate:
        problems = validate_manifest(manifest, Path(path).parent)
        if problems:
            raise ManifestError(f"manifest {path} is invalid: {problems[0]}", violations=problems)
    return manifest
