import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib.pyplot as plt
import numpy as np
from tqdm import tqdm

from configs.gen_sep_cfs import EvalConfig, config_hash
from evaluation.metrics import EvalReport
from separation.pipeline import evaluate_pipeline
from separation.pipeline_batch import RESULT_NAME, load_result, load_scene
from storage.manifest import DatasetManifest
from storage.reports import save_json, save_report
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

METRICS = ("snr_db", "si_snr_db", "sdr_db", "ewrmsae_deg", "snr_improvement_db", "si_snr_improvement_db",
           "segmental_snr_db", "unrefined_snr_db", "unrefined_si_snr_db", "mix_track_ewrmsae_deg")
SCENE_METRICS = ("count_accuracy", "envelope_nmse_db")


def bucket_label(value: Optional[float], edges: Sequence[float]) -> str:
    """'lo-hi' of the bucket holding value; the last bucket includes its upper edge."""
    if value is None:
        return "n/a"
    if value == 0.0 and edges[0] > 0.0:
        return "anechoic"
    for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        if lo <= value < hi or (i == len(edges) - 2 and value == hi):
            return f"{lo:g}-{hi:g}"
    return "out-of-range"


@dataclass
class SceneRow:
    scene: str
    t60: float
    separation_deg: Optional[float]
    report: EvalReport

    @property
    def n_sources(self) -> int:
        return self.report.count_verdict[0]


@dataclass
class AggregateReport:
    """
    Dataset-level means. Every group holds the per-source METRICS averaged
    over its sources and the SCENE_METRICS averaged over its scenes; the
    per-round lists are cut to the shortest history.
    """
    n_scenes: int
    count_accuracy: float
    overall: Dict[str, float]
    by_t60: Dict[str, Dict[str, float]]
    by_separation: Dict[str, Dict[str, float]]
    ewrmsae_by_round_deg: List[float]
    by_n_sources: Dict[str, Dict[str, float]] = field(default_factory=dict)
    separated_snr_by_round_db: List[float] = field(default_factory=list)
    separated_si_snr_by_round_db: List[float] = field(default_factory=list)
    failed_scenes: List[str] = field(default_factory=list)
    provenance: Dict = field(default_factory=dict)

    def render_table(self) -> str:
        columns = METRICS + SCENE_METRICS
        width = max(len(m) for m in columns) + 1

        def block(title: str, groups: Dict[str, Dict[str, float]]) -> List[str]:
            header = f"{title:>16} {'n':>4} " + " ".join(f"{m:>{width}}" for m in columns)
            lines = [header, "-" * len(header)]
            for label, values in groups.items():
                cells = " ".join(f"{values.get(m, float('nan')):{width}.2f}" for m in columns)
                lines.append(f"{label:>16} {int(values['n']):>4} {cells}")
            return lines

        lines = (block("T60 [s]", self.by_t60) + [""] + block("separation [deg]", self.by_separation) + [""]
                 + block("sources", self.by_n_sources))

        def per_round(values: List[float]) -> str:
            return ", ".join(f"{v:.2f}" for v in values)

        lines += ["", f"EWRMSAE per round [deg]: {per_round(self.ewrmsae_by_round_deg)}",
                  f"separated SNR per round [dB]: {per_round(self.separated_snr_by_round_db)}",
                  f"separated SI-SNR per round [dB]: {per_round(self.separated_si_snr_by_round_db)}",
                  f"count accuracy: {self.count_accuracy:.3f} over {self.n_scenes} scenes"]
        return "\n".join(lines)


def _means(rows: List[SceneRow]) -> Dict[str, float]:
    per_source = [s for row in rows for s in row.report.per_source]
    values = {"n": float(len(rows))}
    for metric in METRICS:
        samples = [getattr(s, metric) for s in per_source if getattr(s, metric) is not None]
        if samples:
            values[metric] = float(np.mean(samples))
    if rows:
        values["count_accuracy"] = float(np.mean([r.report.count_verdict[0] == r.report.count_verdict[1]
                                                  for r in rows]))
    nmse = [r.report.envelope_nmse_db for r in rows if r.report.envelope_nmse_db is not None]
    if nmse:
        values["envelope_nmse_db"] = float(np.mean(nmse))
    return values


def _grouped(rows: List[SceneRow], key) -> Dict[str, Dict[str, float]]:
    groups: Dict[str, List[SceneRow]] = {}
    for row in rows:
        groups.setdefault(key(row), []).append(row)
    return {label: _means(members) for label, members in sorted(groups.items())}


def _by_round(rows: List[SceneRow], history: str) -> List[float]:
    histories = [getattr(s, history) for row in rows for s in row.report.per_source if getattr(s, history)]
    n_rounds = min((len(h) for h in histories), default=0)
    return [float(np.mean([h[r] for h in histories])) for r in range(n_rounds)]


def aggregate(rows: List[SceneRow], t60_edges: Sequence[float],
              separation_edges: Sequence[float]) -> AggregateReport:
    overall = _means(rows)
    return AggregateReport(
        n_scenes=len(rows),
        count_accuracy=overall.get("count_accuracy", 0.0),
        overall=overall,
        by_t60=_grouped(rows, lambda r: bucket_label(r.t60, t60_edges)),
        by_separation=_grouped(rows, lambda r: bucket_label(r.separation_deg, separation_edges)),
        ewrmsae_by_round_deg=_by_round(rows, "ewrmsae_history_deg"),
        by_n_sources=_grouped(rows, lambda r: str(r.n_sources)),
        separated_snr_by_round_db=_by_round(rows, "separated_snr_history_db"),
        separated_si_snr_by_round_db=_by_round(rows, "separated_si_snr_history_db"),
    )


def plot_by_t60(report: AggregateReport, path: Path) -> Path:
    labels = list(report.by_t60)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    x = np.arange(len(labels))
    for offset, metric in ((-0.2, "si_snr_db"), (0.2, "sdr_db")):
        axes[0].bar(x + offset, [report.by_t60[k].get(metric, np.nan) for k in labels], width=0.4, label=metric)
    axes[0].set_xticks(x, labels)
    axes[0].set_xlabel("T60 [s]")
    axes[0].set_ylabel("dB")
    axes[0].legend()
    axes[1].bar(x, [report.by_t60[k].get("ewrmsae_deg", np.nan) for k in labels], color="tab:red")
    axes[1].set_xticks(x, labels)
    axes[1].set_xlabel("T60 [s]")
    axes[1].set_ylabel("EWRMSAE [deg]")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


class BatchEvaluator:
    def __init__(self, config: EvalConfig):
        self.config = config
        self.run_dir = Path(config.run_dir)
        self._manifests: Dict[str, DatasetManifest] = {}

    def _manifest(self, path: str) -> DatasetManifest:
        if path not in self._manifests:
            self._manifests[path] = DatasetManifest.load(path)
        return self._manifests[path]

    def evaluate_scene(self, result_path: Path) -> SceneRow:
        result, index = load_result(result_path)
        manifest_path = Path(index["manifest"])
        entry = next(e for e in self._manifest(str(manifest_path)).entries if e.seed == index["entry_seed"])
        mixture, groundtruth = load_scene(entry, manifest_path.parent, result.provenance.get("win", 256),
                                          result.provenance.get("hop", 128))
        report = evaluate_pipeline(result, groundtruth, mixture)
        save_report(report, result_path.with_name("report.json"))
        return SceneRow(result_path.parent.name, entry.t60, entry.separation_deg, report)

    def process(self) -> AggregateReport:
        start_time = datetime.now()
        result_files = sorted(self.run_dir.glob(f"*/{RESULT_NAME}"))
        if not result_files:
            raise ConfigError(f"no {RESULT_NAME} found under {self.run_dir}")
        rows, failed = [], []
        for path in tqdm(result_files, desc="Evaluating scenes"):
            try:
                rows.append(self.evaluate_scene(path))
            except Exception as e:
                logger.error("evaluation of %s failed: %s", path.parent.name, e)
                failed.append(path.parent.name)

        report = aggregate(rows, self.config.t60_edges, self.config.separation_edges_deg)
        report.failed_scenes = failed
        report.provenance = {"config_hash": config_hash(self.config),
                             "runs": sorted({row.report.provenance.get("config_hash", "") for row in rows})}
        report_path = Path(self.config.report_path)
        save_json(asdict(report), report_path)
        report_path.with_suffix(".txt").write_text(report.render_table() + "\n")
        if self.config.plot:
            plot_by_t60(report, report_path.with_suffix(".png"))
        logger.info("evaluated %d scenes in %.2fs", len(rows), (datetime.now() - start_time).total_seconds())
        return report
