"""
Result file writer with atomic replace and checksum verification.

Trial tables go out as CSV (pandas), verdicts and summaries as JSON lines.
Every file is UTF-8 and newline-terminated, written to a temporary sibling
and renamed into place.
"""

import hashlib
import json
import threading
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence, Union

import pandas as pd
import structlog

from ..models.data_models import TrialRecord
from ..models.errors import OutputWriteError

logger = structlog.get_logger()


def trials_to_csv(records: Sequence[TrialRecord]) -> str:
    """Fixed column order: trial,seed,true_value,decision,statistic,sample_size,queries_used,wall_time_ms."""
    frame = pd.DataFrame([r.to_row() for r in records], columns=list(TrialRecord.CSV_COLUMNS))
    return frame.to_csv(index=False, lineterminator="\n")


def sweep_to_csv(thresholds: Sequence[float], means: Sequence[float], measure: str) -> str:
    """One row per threshold: threshold and the mean of the fitted measure."""
    frame = pd.DataFrame({"threshold": list(thresholds), f"mean_{measure}": list(means)})
    return frame.to_csv(index=False, lineterminator="\n")


def to_jsonl(objects: Iterable[Dict[str, Any]]) -> str:
    lines = [json.dumps(obj, default=str) for obj in objects]
    return "".join(line + "\n" for line in lines)


class ResultWriter:
    """
    Writes result files atomically and re-reads them to confirm the checksum.

    One lock per target path; the same writer may be shared across threads.
    """

    def __init__(self, verify: bool = True):
        self.verify = verify
        self.logger = logger.bind(service="result_writer")
        self._locks: Dict[str, threading.Lock] = {}
        self._guard = threading.Lock()
        self._stats_lock = threading.Lock()
        self.stats = {"total_writes": 0, "successful_writes": 0, "failed_writes": 0}

    def _lock_for(self, path: Path) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(str(path), threading.Lock())

    def _count(self, key: str) -> None:
        with self._stats_lock:
            self.stats[key] += 1

    @staticmethod
    def _checksum(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def write_text(self, path: Union[str, Path], text: str) -> Path:
        """
        Atomically write text to path.

        Raises:
            OutputWriteError: the directory or file cannot be written, or verification failed
        """
        path = Path(path)
        if not text.endswith("\n"):
            text += "\n"
        self._count("total_writes")
        checksum = self._checksum(text)
        with self._lock_for(path):
            temp_path = path.with_name(path.name + ".tmp")
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                with open(temp_path, "w", encoding="utf-8", newline="") as f:
                    f.write(text)
                    f.flush()
                temp_path.replace(path)
            except OSError as e:
                self._count("failed_writes")
                self.logger.error("Write failed", file=str(path), error=str(e))
                raise OutputWriteError(f"cannot write {path}: {e}") from e

            if self.verify:
                written = path.read_text(encoding="utf-8")
                if self._checksum(written) != checksum:
                    self._count("failed_writes")
                    self.logger.error("Checksum mismatch after write", file=str(path), expected=checksum[:8])
                    raise OutputWriteError(f"verification failed for {path}")

        self._count("successful_writes")
        self.logger.debug("File written", file=str(path), size=len(text), checksum=checksum[:8])
        return path

    def get_stats(self) -> Dict[str, int]:
        with self._stats_lock:
            return dict(self.stats)
