"""Machine telemetry and manual-record ingestion, windowed queries, storage.

Telemetry rows carry the energy a machine used since its previous row
(interval convention). Windows are half-open on the left, ``(start, end]``,
which matches that convention: a row stamped exactly at ``start`` reports
energy spent before the window opened.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

TELEMETRY_HEADER = ["timestamp", "machine_id", "event", "energy_kwh"]
MANUAL_HEADER = ["period_start", "period_end", "flow_name", "amount", "unit", "direction", "source_note"]
FORMAT_TAG = "factoryopm-dataset"
FORMAT_VERSION = 1


class IngestError(Exception):
    """A file could not be read or does not have a recognised header."""


class DatasetFormatError(Exception):
    """A persisted dataset is corrupt or has an unsupported version."""


class UnknownMachineError(KeyError):
    pass


@dataclass(frozen=True, order=True)
class TelemetryRecord:
    timestamp: datetime
    machine_id: str
    event: str
    energy_kwh: float


@dataclass(frozen=True, order=True)
class ManualRecord:
    period_start: datetime
    period_end: datetime
    flow_name: str
    amount: float
    unit: str
    direction: str
    source_note: str = ""


@dataclass(frozen=True)
class Source:
    name: str
    sha256: str


@dataclass(frozen=True)
class Dataset:
    telemetry: tuple[TelemetryRecord, ...] = ()
    manual: tuple[ManualRecord, ...] = ()
    provenance: tuple[Source, ...] = ()

    def machines(self) -> list[str]:
        return sorted({r.machine_id for r in self.telemetry})

    def stream(self, machine_id: str) -> list[TelemetryRecord]:
        return [r for r in self.telemetry if r.machine_id == machine_id]

    def span(self) -> tuple[datetime, datetime] | None:
        if not self.telemetry:
            return None
        return self.telemetry[0].timestamp, self.telemetry[-1].timestamp


@dataclass(frozen=True, order=True)
class Diagnostic:
    file: str
    line: int
    severity: str
    code: str
    message: str


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no timezone")
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat()


@dataclass(frozen=True)
class Window:
    """Half-open interval ``(start, end]``; ``None`` bounds are unbounded."""

    start: datetime | None = None
    end: datetime | None = None

    def __contains__(self, ts: datetime) -> bool:
        if self.start is not None and ts <= self.start:
            return False
        if self.end is not None and ts > self.end:
            return False
        return True

    @classmethod
    def parse(cls, text: str | None) -> Window:
        """'START/END' with ISO-8601 instants; either side may be empty."""
        if not text:
            return cls()
        start, sep, end = text.partition("/")
        if not sep:
            raise ValueError(f"window {text!r} must look like START/END")
        return cls(
            parse_timestamp(start) if start.strip() else None,
            parse_timestamp(end) if end.strip() else None,
        )

    def as_tuple(self) -> tuple[str | None, str | None]:
        return (
            format_timestamp(self.start) if self.start else None,
            format_timestamp(self.end) if self.end else None,
        )


ALL = Window()


def _number(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite number {text!r}")
    return value


def _read(path: Path) -> tuple[list[str], list[tuple[int, list[str]]], str]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise IngestError(f"{path} is not UTF-8: {exc}") from exc
    reader = csv.reader(text.splitlines())
    rows = [(i, row) for i, row in enumerate(reader, start=1) if row and any(c.strip() for c in row)]
    if not rows:
        raise IngestError(f"{path} is empty")
    header = [h.strip() for h in rows[0][1]]
    return header, rows[1:], hashlib.sha256(raw).hexdigest()


def _telemetry_rows(name: str, rows, diags: list[Diagnostic]) -> list[tuple[TelemetryRecord, str, int]]:
    out = []
    for line, row in rows:
        if len(row) != len(TELEMETRY_HEADER):
            diags.append(Diagnostic(name, line, "error", "BAD_ROW", f"expected 4 fields, got {len(row)}"))
            continue
        ts_text, machine, event, energy_text = (c.strip() for c in row)
        try:
            ts = parse_timestamp(ts_text)
        except ValueError as exc:
            diags.append(Diagnostic(name, line, "error", "BAD_TIMESTAMP", str(exc)))
            continue
        try:
            energy = _number(energy_text)
        except ValueError:
            diags.append(Diagnostic(name, line, "error", "BAD_ENERGY", f"not a number: {energy_text!r}"))
            continue
        if not machine:
            diags.append(Diagnostic(name, line, "error", "BAD_ROW", "empty machine_id"))
            continue
        out.append((TelemetryRecord(ts, machine, event, energy), name, line))
    return out


def _manual_rows(name: str, rows, diags: list[Diagnostic]) -> list[ManualRecord]:
    out = []
    for line, row in rows:
        if len(row) != len(MANUAL_HEADER):
            diags.append(Diagnostic(name, line, "error", "BAD_ROW", f"expected 7 fields, got {len(row)}"))
            continue
        start, end, flow, amount, unit, direction, note = (c.strip() for c in row)
        try:
            rec = ManualRecord(parse_timestamp(start), parse_timestamp(end), flow, _number(amount), unit, direction, note)
        except ValueError as exc:
            diags.append(Diagnostic(name, line, "error", "BAD_VALUE", str(exc)))
            continue
        if rec.period_start > rec.period_end:
            diags.append(Diagnostic(name, line, "error", "BAD_PERIOD", "period starts after it ends"))
            continue
        if direction not in ("input", "output"):
            diags.append(Diagnostic(name, line, "error", "BAD_DIRECTION", f"direction {direction!r}"))
            continue
        if not flow or not unit:
            diags.append(Diagnostic(name, line, "error", "BAD_ROW", "flow_name and unit are required"))
            continue
        out.append(rec)
    return out


def _first_difference(rows: list[tuple[TelemetryRecord, str, int]], diags: list[Diagnostic]):
    by_machine: dict[str, list[tuple[TelemetryRecord, str, int]]] = {}
    for item in rows:
        by_machine.setdefault(item[0].machine_id, []).append(item)
    out = []
    for items in by_machine.values():
        items.sort(key=lambda it: it[0])
        prev = None
        for rec, name, line in items:
            delta = 0.0 if prev is None else rec.energy_kwh - prev
            prev = rec.energy_kwh
            out.append((TelemetryRecord(rec.timestamp, rec.machine_id, rec.event, delta), name, line))
    return out


def ingest(paths: Iterable[str | Path], cumulative: bool = False) -> tuple[Dataset, list[Diagnostic]]:
    """Read telemetry and manual CSV files into one merged dataset.

    The file type is recognised from its header. Malformed rows are skipped
    with a diagnostic; unreadable files and unknown headers raise
    :class:`IngestError`. With ``cumulative=True`` telemetry energy columns are
    meter readings and are first-differenced per machine.
    """
    diags: list[Diagnostic] = []
    telemetry: list[tuple[TelemetryRecord, str, int]] = []
    manual: list[ManualRecord] = []
    sources: list[Source] = []
    for p in map(Path, paths):
        header, rows, digest = _read(p)
        sources.append(Source(p.name, digest))
        if header == TELEMETRY_HEADER:
            telemetry.extend(_telemetry_rows(p.name, rows, diags))
        elif header == MANUAL_HEADER:
            manual.extend(_manual_rows(p.name, rows, diags))
        else:
            raise IngestError(f"{p}: unrecognised header {','.join(header)}")

    if cumulative:
        telemetry = _first_difference(telemetry, diags)

    kept: dict[tuple[datetime, str], tuple[TelemetryRecord, str, int]] = {}
    dropped: list[tuple[TelemetryRecord, str, int]] = []
    for item in telemetry:
        rec = item[0]
        if rec.energy_kwh < 0:
            diags.append(Diagnostic(item[1], item[2], "error", "NEG_ENERGY", f"negative energy {rec.energy_kwh}"))
            continue
        key = (rec.timestamp, rec.machine_id)
        if key in kept:
            # keep the smallest record so the result does not depend on file order
            if rec < kept[key][0]:
                kept[key], item = item, kept[key]
            dropped.append(item)
        else:
            kept[key] = item
    for rec, name, line in dropped:
        diags.append(
            Diagnostic(name, line, "error", "DUPLICATE_KEY",
                       f"{rec.machine_id} already has a record at {format_timestamp(rec.timestamp)}")
        )
    dataset = Dataset(
        telemetry=tuple(sorted(item[0] for item in kept.values())),
        manual=tuple(sorted(manual)),
        provenance=tuple(sorted(set(sources), key=lambda s: (s.name, s.sha256))),
    )
    return dataset, sorted(diags)


def merge(*datasets: Dataset) -> Dataset:
    telemetry: dict[tuple[datetime, str], TelemetryRecord] = {}
    for d in datasets:
        for r in d.telemetry:
            key = (r.timestamp, r.machine_id)
            if key in telemetry and telemetry[key] != r:
                raise ValueError(f"conflicting records for {r.machine_id} at {format_timestamp(r.timestamp)}")
            telemetry[key] = r
    return Dataset(
        telemetry=tuple(sorted(telemetry.values())),
        manual=tuple(sorted({m for d in datasets for m in d.manual})),
        provenance=tuple(sorted({s for d in datasets for s in d.provenance}, key=lambda s: (s.name, s.sha256))),
    )


# -- queries --------------------------------------------------------------------


@dataclass(frozen=True)
class WindowEnergy:
    per_machine: dict[str, float]
    total: float
    records: int
    warnings: tuple[str, ...] = field(default=())


def window_energy(dataset: Dataset, machines: Iterable[str] | None = None, window: Window = ALL) -> WindowEnergy:
    """Energy per machine for records inside ``window`` plus the total."""
    wanted = sorted(set(machines)) if machines is not None else dataset.machines()
    wanted_set = set(wanted)
    sums: dict[str, list[float]] = {m: [] for m in wanted}
    count = 0
    for r in dataset.telemetry:
        if r.machine_id in wanted_set and r.timestamp in window:
            sums[r.machine_id].append(r.energy_kwh)
            count += 1
    per_machine = {m: math.fsum(v) for m, v in sums.items()}
    warnings = []
    if count == 0:
        warnings.append("EMPTY_WINDOW: no telemetry records fall in the window")
    absent = sorted(wanted_set - set(dataset.machines()))
    if absent:
        warnings.append(f"UNKNOWN_MACHINE: {', '.join(absent)}")
    total = math.fsum(v for values in sums.values() for v in values)
    return WindowEnergy(per_machine, total, count, tuple(warnings))


def count_events(
    dataset: Dataset, machine_id: str, event: str, rule: str = "transitions", window: Window = ALL
) -> int:
    """Count ``event`` on one machine.

    ``transitions`` counts records that enter the event (the machine's previous
    record, in or out of the window, has a different label); ``occurrences``
    counts every matching record.
    """
    if rule not in ("transitions", "occurrences"):
        raise ValueError(f"unknown count rule {rule!r}")
    stream = dataset.stream(machine_id)
    if not stream:
        raise UnknownMachineError(machine_id)
    n = 0
    prev: str | None = None
    for r in stream:
        if r.timestamp in window and r.event == event:
            if rule == "occurrences" or prev != event:
                n += 1
        prev = r.event
    return n


# -- storage --------------------------------------------------------------------


def dumps(dataset: Dataset) -> str:
    lines = [json.dumps({"format": FORMAT_TAG, "version": FORMAT_VERSION}, sort_keys=True)]
    for s in dataset.provenance:
        lines.append(json.dumps({"type": "source", "name": s.name, "sha256": s.sha256}, sort_keys=True))
    for r in dataset.telemetry:
        lines.append(json.dumps({
            "type": "telemetry",
            "timestamp": format_timestamp(r.timestamp),
            "machine_id": r.machine_id,
            "event": r.event,
            "energy_kwh": r.energy_kwh,
        }, sort_keys=True))
    for m in dataset.manual:
        lines.append(json.dumps({
            "type": "manual",
            "period_start": format_timestamp(m.period_start),
            "period_end": format_timestamp(m.period_end),
            "flow_name": m.flow_name,
            "amount": m.amount,
            "unit": m.unit,
            "direction": m.direction,
            "source_note": m.source_note,
        }, sort_keys=True))
    return "\n".join(lines) + "\n"


def loads(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError("empty dataset file")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"line 1: not a dataset header ({exc.msg})") from None
    if not isinstance(head, dict) or head.get("format") != FORMAT_TAG:
        raise DatasetFormatError("line 1: missing dataset format tag")
    if head.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {head.get('version')!r}")
    telemetry, manual, sources = [], [], []
    for n, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
            kind = obj["type"]
            if kind == "telemetry":
                telemetry.append(TelemetryRecord(
                    parse_timestamp(obj["timestamp"]), obj["machine_id"], obj["event"], float(obj["energy_kwh"])
                ))
            elif kind == "manual":
                manual.append(ManualRecord(
                    parse_timestamp(obj["period_start"]), parse_timestamp(obj["period_end"]),
                    obj["flow_name"], float(obj["amount"]), obj["unit"], obj["direction"], obj["source_note"],
                ))
            elif kind == "source":
                sources.append(Source(obj["name"], obj["sha256"]))
            else:
                raise ValueError(f"unknown record type {kind!r}")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"line {n}: {exc}") from None
    keys = [(r.timestamp, r.machine_id) for r in telemetry]
    if len(set(keys)) != len(keys):
        raise DatasetFormatError("duplicate (timestamp, machine_id) records")
    if keys != sorted(keys):
        raise DatasetFormatError("telemetry records are not sorted")
    return Dataset(tuple(telemetry), tuple(manual), tuple(sources))


def persist(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dumps(dataset), encoding="utf-8")


def load(path: str | Path) -> Dataset:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetFormatError(f"cannot read {path}: {exc}") from exc
    return loads(text)


def is_persisted(path: str | Path) -> bool:
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
        return FORMAT_TAG in first
    except (OSError, UnicodeDecodeError):
        return False
