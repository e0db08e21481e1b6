import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from utils.errors import ConfigError
from utils.utils import compute_hash


@dataclass
class SamplingRanges:
    """Ranges the scene sampler draws rooms, sources and noise from."""
    room_min: Tuple[float, float, float] = (3.0, 3.0, 3.0)
    room_max: Tuple[float, float, float] = (10.0, 10.0, 6.0)
    t60_range: Tuple[float, float] = (0.2, 1.0)
    snr_range: Tuple[float, float] = (20.0, 30.0)
    n_sources: Tuple[int, int] = (2, 2)
    c_max: int = 3
    max_periods: float = 2.0
    wall_margin: float = 0.1
    array_margin: float = 0.5
    min_array_distance: float = 0.3
    duration_s: float = 10.0
    sample_rate: int = 16000
    stationary: bool = False
    anechoic: bool = False
    min_separation_deg: Optional[float] = None
    max_separation_deg: Optional[float] = None
    max_attempts: int = 100


@dataclass
class RenderConfig:
    block: int = 512
    hop: int = 256
    speed_of_sound: float = 343.0
    max_order: Optional[int] = None
    max_order_ceiling: Optional[int] = None
    tail_factor: float = 1.5


@dataclass
class PipelineConfig:
    rounds: int = 2
    c_max: int = 3
    count_threshold: float = 0.25
    win: int = 256
    hop: int = 128
    refresh_envelope: bool = False
    parallel_sources: int = 1

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.c_max < 1:
            raise ConfigError(f"c_max must be >= 1, got {self.c_max}")
        if self.hop <= 0 or self.win <= 0:
            raise ConfigError("win and hop must be positive")


@dataclass
class ComponentNames:
    envelope: str = "clustered"
    tracker: str = "intensity"
    extractor: str = "steered"
    refiner: str = "steered"


@dataclass
class OracleSettings:
    """Corruption applied by the groundtruth-backed components."""
    sigma_deg: float = 0.0
    refined_sigma_deg: Optional[float] = None
    leakage: float = 0.0
    envelope_noise: float = 0.0
    seed: int = 0


@dataclass
class DatasetConfig:
    out_dir: str
    master_seed: int = 0
    n_scenes: int = 20
    parallelism: int = 1
    source_files: List[str] = field(default_factory=list)
    sampling: SamplingRanges = field(default_factory=SamplingRanges)
    render: RenderConfig = field(default_factory=RenderConfig)
    win: int = 256
    hop: int = 128
    operation_type: str = "generation"


@dataclass
class RunConfig:
    manifest_path: str
    out_dir: str
    components: ComponentNames = field(default_factory=ComponentNames)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    parallelism: int = 1
    operation_type: str = "run"


@dataclass
class EvalConfig:
    run_dir: str
    report_path: str
    t60_edges: Tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    separation_edges_deg: Tuple[float, ...] = (0.0, 30.0, 60.0, 90.0, 180.0)
    plot: bool = False
    operation_type: str = "evaluation"


def _is_dataclass_type(tp: Any) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _coerce(tp: Any, value: Any) -> Any:
    if value is None:
        return None
    origin = typing.get_origin(tp)
    if origin is Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return _coerce(args[0], value) if len(args) == 1 else value
    if _is_dataclass_type(tp):
        return dataclass_from_dict(tp, value)
    if origin is tuple:
        return tuple(value)
    return value


def dataclass_from_dict(cls, data: Dict[str, Any]):
    """Rebuild a (possibly nested) config dataclass from its JSON dict."""
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}' in {cls.__name__} configuration")
    kwargs = {name: _coerce(hints[name], value) for name, value in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"invalid {cls.__name__} configuration: {e}") from e


# settings that change where or how fast outputs are produced, not what they are
NON_SEMANTIC_KEYS = ("out_dir", "parallelism", "parallel_sources")


def config_hash(config: Any, exclude: Tuple[str, ...] = NON_SEMANTIC_KEYS) -> str:
    """SHA-256 over the canonical JSON form of a config, without the `exclude` keys at any depth."""
    payload = dataclasses.asdict(config) if dataclasses.is_dataclass(config) else config

    def strip(value):
        if isinstance(value, dict):
            return {k: strip(v) for k, v in value.items() if k not in exclude}
        return value

    return compute_hash(strip(payload))


class ConfigGenerator:
    def __init__(self, config_dir: str = "configs/database"):
        self.config_dir = Path(config_dir)
        self.config_dir.mkdir(parents=True, exist_ok=True)

    def _save_config(self, config: Union[Dict, Any], filename: str) -> Path:
        """Save configuration to JSON file."""
        if dataclasses.is_dataclass(config):
            config_dict = dataclasses.asdict(config)
        else:
            config_dict = config

        config_path = self.config_dir / f"{filename}.json"
        with open(config_path, 'w') as f:
            json.dump(config_dict, f, indent=4)
        return config_path

    def _load_config(self, filename: str) -> Dict:
        """Load configuration from JSON file."""
        config_path = Path(filename)
        if config_path.suffix != ".json":
            config_path = self.config_dir / f"{filename}.json"
        if not config_path.exists():
            raise ConfigError(f"Configuration file not found: {config_path}")

        with open(config_path, 'r') as f:
            try:
                return json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Configuration file {config_path} is not valid JSON: {e}") from e

    def _validate_paths(self, paths: Dict[str, str]) -> None:
        """Create parent directories of the given paths."""
        for path_name, path_value in paths.items():
            if path_value:
                Path(path_value).parent.mkdir(parents=True, exist_ok=True)

    def generate_dataset_config(
            self,
            out_dir: str,
            master_seed: int = 0,
            n_scenes: int = 20,
            parallelism: int = 1,
            source_files: Optional[List[str]] = None,
            sampling: Optional[SamplingRanges] = None,
            render: Optional[RenderConfig] = None,
            filename: str = "dataset_config"
    ) -> DatasetConfig:
        """Generate dataset generation configuration."""
        self._validate_paths({'out_dir': str(Path(out_dir) / "manifest.json")})

        config = DatasetConfig(
            out_dir=out_dir,
            master_seed=master_seed,
            n_scenes=n_scenes,
            parallelism=parallelism,
            source_files=list(source_files or []),
            sampling=sampling if sampling is not None else SamplingRanges(),
            render=render if render is not None else RenderConfig(),
        )

        self._save_config(config, filename)
        return config

    def generate_run_config(
            self,
            manifest_path: str,
            out_dir: str,
            components: Optional[ComponentNames] = None,
            pipeline: Optional[PipelineConfig] = None,
            oracle: Optional[OracleSettings] = None,
            parallelism: int = 1,
            filename: str = "run_config"
    ) -> RunConfig:
        """Generate pipeline run configuration."""
        self._validate_paths({'out_dir': str(Path(out_dir) / "results.json")})

        config = RunConfig(
            manifest_path=manifest_path,
            out_dir=out_dir,
            components=components if components is not None else ComponentNames(),
            pipeline=pipeline if pipeline is not None else PipelineConfig(),
            oracle=oracle if oracle is not None else OracleSettings(),
            parallelism=parallelism,
        )

        self._save_config(config, filename)
        return config

    def generate_eval_config(
            self,
            run_dir: str,
            report_path: str,
            plot: bool = False,
            filename: str = "eval_config"
    ) -> EvalConfig:
        """Generate evaluation configuration."""
        self._validate_paths({'report_path': report_path})

        config = EvalConfig(run_dir=run_dir, report_path=report_path, plot=plot)

        self._save_config(config, filename)
        return config

    def load_dataset_config(self, filename: str = "dataset_config") -> DatasetConfig:
        return dataclass_from_dict(DatasetConfig, self._load_config(filename))

    def load_run_config(self, filename: str = "run_config") -> RunConfig:
        return dataclass_from_dict(RunConfig, self._load_config(filename))

    def load_eval_config(self, filename: str = "eval_config") -> EvalConfig:
        return dataclass_from_dict(EvalConfig, self._load_config(filename))
