"""
Report emission: Guide metric tables and per-task agent return tables as
aligned text, CSV and SVG.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "lge-report"
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from orchestrator.lge import MODES, final_score  # noqa: E402
from orchestrator.state_manager import read_jsonl  # noqa: E402

logger = logging.getLogger(__name__)

NA = "N/A"


def _cell(value: Optional[float], digits: int = 3) -> str:
    return NA if value is None or (isinstance(value, float) and np.isnan(value)) else f"{value:.{digits}f}"


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Left-aligned first column, right-aligned values"""
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    lines = []
    for index, row in enumerate([header, *rows]):
        cells = [str(row[0]).ljust(widths[0])] + [str(c).rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells))
        if index == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def read_csv(path: str) -> List[List[str]]:
    with open(path, encoding="utf-8", newline="") as handle:
        return [row for row in csv.reader(handle)]


#########################################
# Guide metrics
#########################################

def guide_table(rows: Sequence, ks: Sequence[int]) -> tuple:
    """(header, cells) of the Guide metric table; rows are MetricRow objects or their dicts"""
    header = (
        ["Model"] + [f"RSR@{k}" for k in ks]
        + ["|A|@thr", "RSR@thr", "MAP", "GAR", "GAR std", "%GAR", "GARR", "Steps"]
    )
    cells = []
    for row in rows:
        data = row if isinstance(row, dict) else row.to_dict()
        rsr = {int(k): v for k, v in data["rsr"].items()}
        cells.append(
            [data["model"]]
            + [_cell(rsr.get(k)) for k in ks]
            + [_cell(data.get("threshold_size"), 1), _cell(data.get("threshold_rsr")),
               _cell(data["map"]), _cell(data["gar_mean"], 2), _cell(data["gar_std"], 2),
               _cell(data["pct_gar"], 2), _cell(data["garr"]), str(data["steps"])]
        )
    return header, cells


def write_guide_report(
    rows: Sequence,
    ks: Sequence[int],
    out_dir: str,
    header: Dict[str, str],
    threshold: Optional[float] = None,
) -> List[Path]:
    """guide_metrics.{txt,csv,json} under out_dir; `threshold` is the cut behind the @thr columns"""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    table_header, cells = guide_table(rows, ks)
    text_path = root / "guide_metrics.txt"
    text_path.write_text(format_table(table_header, cells), encoding="utf-8")
    json_path = root / "guide_metrics.json"
    json_path.write_text(json.dumps({
        "header": dict(header),
        "ks": list(ks),
        "threshold": threshold,
        "rows": [r if isinstance(r, dict) else r.to_dict() for r in rows],
    }, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return [text_path, write_csv(root / "guide_metrics.csv", table_header, cells), json_path]


#########################################
# Agent returns
#########################################

@dataclass
class AgentTable:
    suite_hash: str
    task_types: List[int] = field(default_factory=list)
    modes: List[str] = field(default_factory=list)
    scores: Dict[str, Dict[int, List[float]]] = field(default_factory=dict)  # mode -> task -> one score per run

    def mean(self, mode: str, task_type: int) -> Optional[float]:
        values = self.scores.get(mode, {}).get(task_type)
        return float(np.mean(values)) if values else None

    def average(self, mode: str) -> Optional[float]:
        """Unweighted mean over task rows"""
        values = [self.mean(mode, t) for t in self.task_types]
        values = [v for v in values if v is not None]
        return float(np.mean(values)) if values else None

    @property
    def has_delta(self) -> bool:
        return "drrn" in self.modes and any(m.startswith("lge") for m in self.modes)


def collect_agent_scores(run_dirs: Sequence[str]) -> AgentTable:
    """
    Final scores of every mode and task type found in the run directories.
    Runs of the same mode are averaged (seed sweeps).

    Raises:
        ValueError: If runs were made on different suites or nothing was found
    """
    table: Optional[AgentTable] = None
    for run_dir in run_dirs:
        for log_path in sorted(Path(run_dir).glob("*/t*/eval.jsonl")):
            header, records = read_jsonl(str(log_path))
            if not records:
                continue
            if header is None:
                raise ValueError(f"{log_path} has no header")
            if table is None:
                table = AgentTable(suite_hash=header["suite_hash"])
            elif header["suite_hash"] != table.suite_hash:
                raise ValueError(
                    f"{log_path} was run on suite {header['suite_hash']}, "
                    f"other runs on {table.suite_hash}; refusing to merge"
                )
            mode = header.get("mode", log_path.parent.parent.name)
            task_type = int(log_path.parent.name[1:])
            score = final_score([r["score"] for r in records])
            table.scores.setdefault(mode, {}).setdefault(task_type, []).append(score)
    if table is None:
        raise ValueError(f"no eval logs found under {list(run_dirs)}")
    table.modes = sorted(table.scores, key=lambda m: (MODES.index(m) if m in MODES else len(MODES), m))
    table.task_types = sorted({t for per_task in table.scores.values() for t in per_task})
    return table


def _delta(table: AgentTable, values: Dict[str, Optional[float]]) -> str:
    lge = [values[m] for m in table.modes if m.startswith("lge") and values[m] is not None]
    if values.get("drrn") is None or not lge:
        return NA
    delta = max(lge) - values["drrn"]
    arrow = "↑" if delta > 0 else ("↓" if delta < 0 else "=")
    return f"{delta:+.3f}{arrow}"


def agent_table(table: AgentTable) -> tuple:
    """(header, cells) with one row per task type, an Avg row and a Delta column (best LGE minus DRRN)"""
    header = ["Task"] + list(table.modes) + (["Delta"] if table.has_delta else [])
    cells = []
    for label, values in [
        *[(str(t), {m: table.mean(m, t) for m in table.modes}) for t in table.task_types],
        ("Avg", {m: table.average(m) for m in table.modes}),
    ]:
        row = [label] + [_cell(values[m]) for m in table.modes]
        if table.has_delta:
            row.append(_delta(table, values))
        cells.append(row)
    return header, cells


def plot_agent_table(table: AgentTable, path: Path) -> Path:
    figure, axes = plt.subplots(figsize=(1.2 + 1.1 * len(table.task_types), 3.2))
    width = 0.8 / max(len(table.modes), 1)
    positions = np.arange(len(table.task_types))
    for index, mode in enumerate(table.modes):
        heights = [table.mean(mode, t) or 0.0 for t in table.task_types]
        axes.bar(positions + index * width, heights, width, label=mode)
    axes.set_xticks(positions + width * (len(table.modes) - 1) / 2)
    axes.set_xticklabels([f"t{t}" for t in table.task_types])
    axes.set_ylabel("final test return")
    axes.set_ylim(0, 1)
    axes.legend(frameon=False, fontsize="small")
    figure.tight_layout()
    # No Date entry: equal tables give byte-equal SVG
    figure.savefig(path, format="svg", metadata={"Date": None})
    plt.close(figure)
    return path


def emit_report(run_dirs: Sequence[str], out_dir: str) -> List[Path]:
    """
    Merge runs into the per-task return table (text, CSV, SVG). Guide metrics
    found in the first run directory are appended to the text report.

    Raises:
        ValueError: On mismatched suites or when no run has eval logs
    """
    table = collect_agent_scores(run_dirs)
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    header, cells = agent_table(table)
    text = f"suite {table.suite_hash}\n\n" + format_table(header, cells)

    guide_json = Path(run_dirs[0]) / "guide" / "guide_metrics.json"
    if guide_json.exists():
        payload = json.loads(guide_json.read_text(encoding="utf-8"))
        guide_header, guide_cells = guide_table(payload["rows"], payload["ks"])
        text += "\nGuide relevance metrics\n\n" + format_table(guide_header, guide_cells)

    text_path = root / "report.txt"
    text_path.write_text(text, encoding="utf-8")
    paths = [
        text_path,
        write_csv(root / "returns.csv", header, cells),
        plot_agent_table(table, root / "returns.svg"),
    ]
    logger.info(f"report written to {root}")
    return paths
