import json
from pathlib import Path
from typing import Dict, Union

from evaluation.metrics import EvalReport


def save_report(report: EvalReport, path: Union[str, Path]) -> Path:
    """Write the report as JSON and its rendered table next to it (.txt)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=4, sort_keys=True)
    path.with_suffix(".txt").write_text(report.render_table() + "\n")
    return path


def load_report(path: Union[str, Path]) -> EvalReport:
    with open(path) as f:
        return EvalReport.from_dict(json.load(f))


def save_json(data: Dict, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=4, sort_keys=True, default=str)
    return path
