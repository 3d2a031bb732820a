"""Config files, MEV traces, metrics CSVs and summary tables."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, fields
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union, get_type_hints

from .agents import Mode
from .config import CONFIG_KEYS, ConfigError, InvalidValue, ScenarioConfig
from .engine import EmptyTrace, MetricsSeries, RoundRecord
from .money import fmt, to_ticks

PathLike = Union[str, os.PathLike]

METRICS_HEADER = (
    "round", "w_u_liquid", "w_u_total", "w_a_liquid", "w_a_total",
    "mev_made", "frontrun", "backrun", "tokens_bought_u", "tokens_bought_a", "epoch",
)
_MONEY = {"w_u_liquid", "w_u_total", "w_a_liquid", "w_a_total"}


class ParseError(ConfigError):
    def __init__(self, line: int, text: str):
        super().__init__(f"line {line}: cannot parse {text!r}")
        self.line = line


class UnknownKey(ConfigError):
    def __init__(self, key: str, line: int = 0):
        super().__init__(f"unknown key {key!r}" + (f" on line {line}" if line else ""))
        self.key = key


class MalformedRow(ValueError):
    def __init__(self, row: int, why: str):
        super().__init__(f"row {row}: {why}")
        self.row = row


# --------------------------------------------------------------------------
# config


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}
_NONE = {"", "none", "null"}


def coerce_value(key: str, raw: str, kind: str):
    v = raw.strip()
    optional = kind.startswith("Optional[")
    if optional:
        if v.lower() in _NONE:
            return None
        kind = kind[len("Optional["):-1]
    try:
        if kind == "Mode":
            return Mode(v)
        if kind == "bool":
            if v.lower() in _TRUE:
                return True
            if v.lower() in _FALSE:
                return False
            raise ValueError(v)
        if kind == "int":
            return int(v, 0)
        if kind == "float":
            return float(v)
        if kind == "Decimal":
            d = Decimal(v)
            if not d.is_finite():
                raise ValueError(v)
            return d
        return v
    except (ValueError, InvalidOperation):
        raise InvalidValue(key, repr(raw.strip())) from None


def field_kinds() -> dict[str, str]:
    hints = get_type_hints(ScenarioConfig, globalns={"Mode": Mode, "Decimal": Decimal, "Optional": Optional})
    out = {}
    for f in fields(ScenarioConfig):
        h = hints[f.name]
        args = getattr(h, "__args__", None)
        if args:
            inner = [a for a in args if a is not type(None)][0]
            out[f.name] = f"Optional[{inner.__name__}]"
        else:
            out[f.name] = h.__name__
    return out


FIELD_KINDS = field_kinds()


def parse_config(text: str, base: Optional[Path] = None, **overrides) -> ScenarioConfig:
    """Parse flat `key=value` lines; `#` starts a comment."""
    values: dict = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(n, line)
        key, raw = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError(n, line)
        if key not in CONFIG_KEYS:
            raise UnknownKey(key, n)
        values[key] = coerce_value(key, raw, FIELD_KINDS[key])
    values.update(overrides)
    if base is not None and values.get("trace_path") and not os.path.isabs(values["trace_path"]):
        values["trace_path"] = str(base / values["trace_path"])
    return ScenarioConfig(**values)


def load_config(path: PathLike, **overrides) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base=path.parent, **overrides)


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for key in CONFIG_KEYS:
        v = getattr(cfg, key)
        if isinstance(v, Mode):
            v = v.value
        elif isinstance(v, bool):
            v = str(v).lower()
        elif v is None:
            v = "none"
        lines.append(f"{key}={v}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class TraceFile:
    values: tuple[int, ...]  # ticks, file order
    path: str = ""

    def __len__(self) -> int:
        return len(self.values)


def load_trace(path: PathLike) -> TraceFile:
    """Read a CSV with a `value` column of positive MEV values."""
    values: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyTrace(f"{path}: empty file")
        header = [h.strip() for h in header]
        if "value" not in header:
            raise MalformedRow(1, "header has no 'value' column")
        col = header.index("value")
        for n, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                v = to_ticks(row[col].strip())
            except (ValueError, IndexError):
                raise MalformedRow(n, f"bad value {row!r}") from None
            if v <= 0:
                raise MalformedRow(n, f"non-positive value {row[col].strip()}")
            values.append(v)
    if not values:
        raise EmptyTrace(f"{path}: no values")
    return TraceFile(tuple(values), str(path))


# --------------------------------------------------------------------------
# metrics


def _row(rec: RoundRecord) -> list[str]:
    return [fmt(getattr(rec, k)) if k in _MONEY else str(getattr(rec, k)) for k in METRICS_HEADER]


def write_metrics(series: MetricsSeries, path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for rec in series.records:
            w.writerow(_row(rec))


def read_metrics(path: PathLike) -> list[RoundRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != METRICS_HEADER:
            raise MalformedRow(1, "unexpected metrics header")
        out = []
        for row in reader:
            kw = {k: to_ticks(v) if k in _MONEY else int(v) for k, v in zip(METRICS_HEADER, row)}
            out.append(RoundRecord(**kw))
    return out


@dataclass(frozen=True)
class SummaryStats:
    mode: str
    w_u0: int
    w_a0: int
    w_u_final: int
    w_a_final: int
    mev_count: int
    frontrun_count: int
    backrun_count: int

    @property
    def frontrun_pct(self) -> float:
        return 100.0 * self.frontrun_count / self.mev_count if self.mev_count else 0.0

    @property
    def backrun_pct(self) -> float:
        return 100.0 * self.backrun_count / self.mev_count if self.mev_count else 0.0


def summarize(series: MetricsSeries) -> SummaryStats:
    last = series.final
    return SummaryStats(
        series.mode.value, series.w_u0, series.w_a0, last.w_u_total, last.w_a_total,
        series.mev_count, series.frontrun_count, series.backrun_count,
    )


def summarize_rows(records: Sequence[RoundRecord], w_u0: int, w_a0: int, mode: str) -> SummaryStats:
    """Recompute a summary from raw rows, independently of the run's counters."""
    mev = sum(r.mev_made for r in records)
    fr = sum(r.frontrun for r in records)
    br = sum(r.backrun for r in records)
    last = records[-1]
    return SummaryStats(mode, w_u0, w_a0, last.w_u_total, last.w_a_total, mev, fr, br)


# --------------------------------------------------------------------------
# tables


def format_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    return "\n".join(lines) + "\n"


def write_table(stem: PathLike, header: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Write `<stem>.csv` and `<stem>.txt`; return the aligned text."""
    stem = Path(stem)
    with open(stem.with_suffix(".csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    text = format_table(header, rows)
    stem.with_suffix(".txt").write_text(text, encoding="utf-8")
    return text


SUMMARY_HEADER = ("label", "mode", "seeds", "w_u_initial", "w_u_final", "w_a_initial",
                  "w_a_final", "frontrun_pct", "backrun_pct")


def summary_row(label: str, stats: Sequence[SummaryStats]) -> list[str]:
    """One table row averaging wealth and pooling MEV counts over seeds."""
    n = len(stats)

    def mean(xs):
        return (sum(xs) + n // 2) // n

    mev = sum(s.mev_count for s in stats)
    fr = sum(s.frontrun_count for s in stats)
    br = sum(s.backrun_count for s in stats)
    return [
        label, stats[0].mode, str(n),
        fmt(mean(s.w_u0 for s in stats)), fmt(mean(s.w_u_final for s in stats)),
        fmt(mean(s.w_a0 for s in stats)), fmt(mean(s.w_a_final for s in stats)),
        f"{100.0 * fr / mev if mev else 0.0:.2f}", f"{100.0 * br / mev if mev else 0.0:.2f}",
    ]
