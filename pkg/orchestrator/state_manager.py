"""
Run-directory persistence for experiment pipelines.
Handles config snapshots, JSON-lines logs and stage transitions on disk.
"""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from config.experiment import ExperimentConfig, config_hash, parse_config, suite_hash
from config.settings import OUTPUT_ROOT

logger = logging.getLogger(__name__)

HEADER_KEY = "header"


#########################################
# JSON-lines logs
#########################################

def _dump(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def read_jsonl(path: str) -> Tuple[Optional[Dict[str, Any]], List[Dict[str, Any]]]:
    """
    Read a JSON-lines log.

    Returns:
        (header or None, records in file order)

    Raises:
        FileNotFoundError: If the log does not exist
        ValueError: If a line is not valid JSON
    """
    log_path = Path(path)
    if not log_path.exists():
        raise FileNotFoundError(f"log not found: {log_path}")
    header = None
    records = []
    for number, line in enumerate(log_path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValueError(f"{log_path}:{number}: invalid JSON: {e}")
        if number == 1 and HEADER_KEY in record:
            header = record[HEADER_KEY]
        else:
            records.append(record)
    return header, records


class JsonlLog:
    """
    Append-only JSON-lines file whose first line is a header carrying the
    config and suite hashes. Records are written with sorted keys so equal
    runs give byte-equal files.
    """

    def __init__(self, path: str, header: Dict[str, Any]):
        self.path = Path(path)
        self.header = dict(header)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            existing, _ = read_jsonl(str(self.path))
            if existing is not None and existing != self.header:
                raise ValueError(f"{self.path} belongs to another run: {existing}")
        else:
            self.path.write_text(_dump({HEADER_KEY: self.header}) + "\n", encoding="utf-8")

    def append(self, record: Dict[str, Any]) -> None:
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(_dump(record) + "\n")

    def records(self) -> List[Dict[str, Any]]:
        return read_jsonl(str(self.path))[1]

    def truncate_after(self, step: int) -> int:
        """Drop records logged after `step` (used when resuming from a checkpoint); returns how many"""
        kept = [r for r in self.records() if r.get("step", -1) <= step]
        dropped = len(self.records()) - len(kept)
        lines = [_dump({HEADER_KEY: self.header})] + [_dump(r) for r in kept]
        self.path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return dropped


#########################################
# Run directory
#########################################

class RunDirectory:
    """
    Layout of one experiment run:

        config.snapshot          YAML-compatible JSON dump of the config
        suite/                   splits, worlds, gold trajectories
        vocab.txt, guide.ckpt    shared vocabulary and trained Guide
        guide/                   tuples and Guide metric reports
        <mode>/tX/               explorer.ckpt, train.jsonl, eval.jsonl
        reports/                 tables, CSV and SVG
        transitions.jsonl        pipeline stage transitions
        pipeline.sqlite          LangGraph checkpoints
    """

    def __init__(self, root: str, config: ExperimentConfig):
        self.root = Path(root)
        self.config = config
        self.config_hash = config_hash(config)
        self.suite_hash = suite_hash(config)

    @classmethod
    def for_config(cls, config: ExperimentConfig, root: Optional[str] = None) -> "RunDirectory":
        """Default location: <output root>/<name>-<config hash>"""
        if root is None:
            root = config.output_dir or str(Path(OUTPUT_ROOT) / f"{config.name}-{config_hash(config)}")
        return cls(root, config)

    @property
    def header(self) -> Dict[str, str]:
        return {"config_hash": self.config_hash, "suite_hash": self.suite_hash}

    # -- paths --------------------------------------------------------------

    @property
    def snapshot_path(self) -> Path:
        return self.root / "config.snapshot"

    @property
    def suite_dir(self) -> Path:
        return self.root / "suite"

    @property
    def vocab_path(self) -> Path:
        return self.root / "vocab.txt"

    @property
    def guide_path(self) -> Path:
        return self.root / "guide.ckpt"

    @property
    def guide_dir(self) -> Path:
        return self.root / "guide"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def pipeline_db(self) -> Path:
        return self.root / "pipeline.sqlite"

    def task_dir(self, mode: str, task_type: int) -> Path:
        return self.root / mode / f"t{task_type}"

    def checkpoint_path(self, mode: str, task_type: int) -> Path:
        return self.task_dir(mode, task_type) / "explorer.ckpt"

    def train_log(self, mode: str, task_type: int) -> JsonlLog:
        return JsonlLog(str(self.task_dir(mode, task_type) / "train.jsonl"), dict(self.header, mode=mode, kind="train"))

    def eval_log(self, mode: str, task_type: int) -> JsonlLog:
        return JsonlLog(str(self.task_dir(mode, task_type) / "eval.jsonl"), dict(self.header, mode=mode, kind="eval"))

    def modes(self) -> List[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir() and any(p.glob("t*/eval.jsonl")))

    # -- snapshot -----------------------------------------------------------

    def prepare(self) -> "RunDirectory":
        """
        Create the directory and write the config snapshot.

        Raises:
            ValueError: If the directory already holds a run of another config
        """
        self.root.mkdir(parents=True, exist_ok=True)
        if self.snapshot_path.exists():
            existing = load_snapshot(str(self.root))
            if config_hash(existing) != self.config_hash:
                raise ValueError(
                    f"{self.root} holds config {config_hash(existing)}, refusing to mix it with {self.config_hash}"
                )
        else:
            self.snapshot_path.write_text(
                json.dumps(self.config.model_dump(mode="json"), sort_keys=True, indent=2) + "\n",
                encoding="utf-8",
            )
            logger.info(f"run directory {self.root} (config {self.config_hash}, suite {self.suite_hash})")
        return self


def load_snapshot(run_dir: str) -> ExperimentConfig:
    """Re-read the config a run was started with"""
    path = Path(run_dir) / "config.snapshot"
    if not path.exists():
        raise FileNotFoundError(f"no config.snapshot in {run_dir}")
    # JSON is a YAML subset, so the regular parser gives line-aware diagnostics
    return parse_config(path.read_text(encoding="utf-8"), str(path))


#########################################
# Stage transitions
#########################################

def log_state_transition(
    run: RunDirectory,
    from_stage: Optional[str],
    to_stage: str,
    reason: Optional[str] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> None:
    """Append one pipeline stage change to transitions.jsonl"""
    log = JsonlLog(str(run.root / "transitions.jsonl"), dict(run.header, kind="transitions"))
    log.append({
        "from_stage": from_stage,
        "to_stage": to_stage,
        "reason": reason,
        "metadata": metadata or {},
        "at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    })
    logger.info(f"pipeline {from_stage} -> {to_stage}" + (f" ({reason})" if reason else ""))


def completed_stages(run: RunDirectory) -> List[str]:
    """Stages reached so far, in order; RESUMED and FAILED markers are skipped"""
    path = run.root / "transitions.jsonl"
    if not path.exists():
        return []
    reached = [r["to_stage"] for r in read_jsonl(str(path))[1]]
    return [stage for stage in dict.fromkeys(reached) if stage not in ("RESUMED", "FAILED")]
