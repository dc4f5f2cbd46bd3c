"""CSV tables and the JSON Lines description sidecar."""
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from ._complexity import ImageDescription
from ._errors import ContractViolation, FormatError

__all__ = ("SCORE_COLUMNS", "THRESHOLD_COLUMNS", "ORACLE_COLUMNS", "PROFILE_COLUMNS",
           "METRICS_COLUMNS", "EVAL_COLUMNS", "REPORT_COLUMNS", "ScoreRow", "read_score_csv",
           "write_score_csv", "write_csv", "read_csv", "read_descriptions",
           "write_descriptions", "format_float",)

PathLike = Union[str, Path]

SCORE_COLUMNS = ("id", "score", "ratio", "mse_f1", "mse_f2", "mse_f3", "dct_complexity",
                 "source", "attempts")
THRESHOLD_COLUMNS = ("rank", "a", "b", "average_compression", "entropy", "p1", "p2", "p3")
ORACLE_COLUMNS = ("id", "max_ratio")
PROFILE_COLUMNS = ("tau", "ratio", "fraction")
METRICS_COLUMNS = ("step", "ratio", "loss_total", "loss_l1", "loss_kl", "loss_perc",
                   "loss_gan", "grad_norm", "lr")
EVAL_COLUMNS = ("id", "ratio", "mse", "psnr", "lpips_proxy")
REPORT_COLUMNS = ("metric", "value")


def format_float(value: Optional[float]) -> str:
    """Shortest round-tripping text; empty for ``None``."""
    if value is None:
        return ""
    return repr(float(value))


@dataclass
class ScoreRow:
    id: str
    score: Optional[int] = None
    ratio: Optional[int] = None
    mse_f1: Optional[float] = None
    mse_f2: Optional[float] = None
    mse_f3: Optional[float] = None
    dct_complexity: Optional[int] = None
    source: str = ""
    attempts: Optional[int] = None
    # columns that were absent or empty when read
    missing: Tuple[str, ...] = field(default=(), compare=False)

    @property
    def mse(self) -> Optional[Tuple[float, float, float]]:
        if self.mse_f1 is None or self.mse_f2 is None or self.mse_f3 is None:
            return None
        return (self.mse_f1, self.mse_f2, self.mse_f3)

    def to_csv(self) -> List[str]:
        def fmt(value: Any) -> str:
            if value is None:
                return ""
            if isinstance(value, float):
                return format_float(value)
            return str(value)
        return [fmt(getattr(self, column)) for column in SCORE_COLUMNS]


_INT_COLUMNS = ("score", "ratio", "dct_complexity", "attempts")
_FLOAT_COLUMNS = ("mse_f1", "mse_f2", "mse_f3")


def _open_for_write(path: PathLike) -> Any:
    return open(path, "w", newline="", encoding="utf-8")


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with _open_for_write(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if value is None else value for value in row])


def read_csv(path: PathLike, required: Sequence[str] = ()) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        fieldnames = reader.fieldnames or []
        absent = [column for column in required if column not in fieldnames]
        if absent:
            raise FormatError("{} lacks column(s) {}".format(path, ", ".join(absent)))
        return [dict(row) for row in reader]


def write_score_csv(rows: Iterable[ScoreRow], path: PathLike) -> None:
    write_csv(path, SCORE_COLUMNS, (row.to_csv() for row in rows))


def read_score_csv(path: PathLike) -> List[ScoreRow]:
    """Rows of a score table; any column other than ``id`` may be missing or empty."""
    out = []
    for index, raw in enumerate(read_csv(path, required=("id",))):
        values: Dict[str, Any] = {"id": raw["id"]}
        missing = []
        for column in SCORE_COLUMNS[1:]:
            text = (raw.get(column) or "").strip()
            if not text:
                missing += [column]
                continue
            try:
                if column in _INT_COLUMNS:
                    values[column] = int(text)
                elif column in _FLOAT_COLUMNS:
                    values[column] = float(text)
                else:
                    values[column] = text
            except ValueError:
                raise FormatError("{}: bad {} value {!r}".format(path, column, text),
                                  record_index=index) from None
        for column in _FLOAT_COLUMNS:
            if column in values and not math.isfinite(values[column]):
                raise ContractViolation("{}: {} of {} is not finite".format(
                    path, column, raw["id"]))
        out += [ScoreRow(missing=tuple(missing), **values)]
    return out


def read_descriptions(path: PathLike) -> List[Tuple[str, ImageDescription]]:
    """``(id, description)`` pairs from a JSON Lines sidecar, in file order."""
    out = []
    with open(path, encoding="utf-8") as f:
        for index, line in enumerate(f):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                item = (str(data["id"]), ImageDescription.from_json(data))
            except (ValueError, KeyError, TypeError) as e:
                raise FormatError("{}: bad description line: {}".format(path, e),
                                  record_index=index) from None
            out += [item]
    return out


def write_descriptions(items: Iterable[Tuple[str, ImageDescription]], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for image_id, desc in items:
            data = {"id": image_id}
            data.update(desc.to_json())
            f.write(json.dumps(data, ensure_ascii=False) + "\n")
