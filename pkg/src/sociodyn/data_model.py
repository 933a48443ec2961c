"""Domain records, file parsers/serializers and corpus statistics.

Three tabular inputs are understood, each as CSV or as line-delimited
JSON records with the same keys:

* IR log: ``ego_id,alter_id,timestamp_utc`` (one infrared hit per row)
* surveys: ``participant_id,day,period,submitted_at_utc,item_code,value``
* traits: ``participant_id,wave,trait,raw_score``

Parsers never drop rows silently: every input row is either accepted or
listed in the returned :class:`RejectReport`.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .config import Period, StudyConfig

log = logging.getLogger(__name__)

IR_HEADER = ("ego_id", "alter_id", "timestamp_utc")
SURVEY_HEADER = ("participant_id", "day", "period", "submitted_at_utc", "item_code", "value")
TRAIT_HEADER = ("participant_id", "wave", "trait", "raw_score")
WAVES = ("Begin", "End")

UTC = dt.timezone.utc


class InputError(Exception):
    """Unreadable or structurally invalid input."""


class HeaderMismatch(InputError):
    pass


class CorpusQualityError(InputError):
    """Too many malformed rows to trust the file."""


class UnknownItemError(InputError):
    pass


class ScaleRangeError(InputError):
    pass


@dataclass(frozen=True)
class IrEvent:
    ego_id: str
    alter_id: str
    timestamp: dt.datetime

    def __post_init__(self):
        if self.ego_id == self.alter_id:
            raise ValueError("ego_id and alter_id must differ")


@dataclass(frozen=True)
class SurveyResponse:
    participant_id: str
    day: int
    period: Period
    items: Mapping[str, float]
    submitted_at: dt.datetime


@dataclass(frozen=True)
class TraitSurvey:
    participant_id: str
    raw_trait_scores: Mapping[str, float]
    wave: str = "Begin"


@dataclass(frozen=True)
class CorpusStats:
    n_participants: int = 0
    n_surveys: int = 0
    n_ir_hits: int = 0
    n_transient_edges: int = 0
    n_absences: int = 0


@dataclass(frozen=True)
class Reject:
    row: int
    record: str
    reason: str


@dataclass
class RejectReport:
    """Sidecar listing of every excluded input row."""

    source: str
    n_rows: int = 0
    rejects: list[Reject] = field(default_factory=list)

    def add(self, row: int, record: str, reason: str) -> None:
        self.rejects.append(Reject(row, record, reason))

    def __len__(self) -> int:
        return len(self.rejects)

    def __iter__(self) -> Iterator[Reject]:
        return iter(self.rejects)

    def reasons(self) -> dict[str, int]:
        out: dict[str, int] = defaultdict(int)
        for r in self.rejects:
            out[r.reason.split(":")[0]] += 1
        return dict(out)

    def write_csv(self, dest) -> None:
        with _open_dest(dest) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("source", "row", "reason", "record"))
            for r in sorted(self.rejects, key=lambda r: r.row):
                w.writerow((self.source, r.row, r.reason, r.record))


class IrLog(Sequence[IrEvent]):
    """Columnar, timestamp-sorted collection of IR hits.

    Behaves as a read-only sequence of :class:`IrEvent`; the numpy columns
    ``ego``, ``alter`` and ``ts`` (UTC epoch seconds) are exposed for
    vectorised consumers.
    """

    def __init__(self, ego, alter, ts, *, presorted: bool = False):
        ego = np.asarray(ego, dtype=str)
        alter = np.asarray(alter, dtype=str)
        ts = np.asarray(ts, dtype=np.int64)
        if not (ego.shape == alter.shape == ts.shape) or ego.ndim != 1:
            raise ValueError("columns must be 1-d and of equal length")
        if len(ts) and np.any(ego == alter):
            raise ValueError("ego_id and alter_id must differ")
        if not presorted and len(ts):
            order = np.lexsort((alter, ego, ts))
            ego, alter, ts = ego[order], alter[order], ts[order]
        for a in (ego, alter, ts):
            a.setflags(write=False)
        self.ego, self.alter, self.ts = ego, alter, ts

    @classmethod
    def from_events(cls, events: Iterable[IrEvent]) -> "IrLog":
        events = list(events)
        return cls(
            [e.ego_id for e in events],
            [e.alter_id for e in events],
            [_epoch(e.timestamp) for e in events],
        )

    def __len__(self) -> int:
        return len(self.ts)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return IrLog(self.ego[i], self.alter[i], self.ts[i], presorted=True)
        return IrEvent(str(self.ego[i]), str(self.alter[i]), _from_epoch(int(self.ts[i])))

    def __eq__(self, other):
        if not isinstance(other, IrLog):
            return NotImplemented
        return (
            np.array_equal(self.ego, other.ego)
            and np.array_equal(self.alter, other.alter)
            and np.array_equal(self.ts, other.ts)
        )

    def __repr__(self):
        return f"IrLog(n={len(self)})"


# ---------------------------------------------------------------- helpers


def _epoch(t: dt.datetime) -> int:
    if t.tzinfo is None:
        raise ValueError("naive datetime")
    return int(math.floor(t.timestamp()))


def _from_epoch(s: int) -> dt.datetime:
    return dt.datetime.fromtimestamp(s, tz=UTC)


def parse_instant(text: str) -> dt.datetime:
    """Parse an RFC-3339 instant to a second-resolution UTC datetime."""
    text = str(text).strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    t = dt.datetime.fromisoformat(text)
    if t.tzinfo is None:
        raise ValueError("timestamp lacks a UTC offset")
    return t.astimezone(UTC).replace(microsecond=0)


def format_instant(t: dt.datetime) -> str:
    return t.astimezone(UTC).strftime("%Y-%m-%dT%H:%M:%SZ")


def format_number(x: float) -> str:
    x = float(x)
    if x.is_integer():
        return str(int(x))
    return repr(x)


def _read_text(source) -> str:
    try:
        if isinstance(source, (str, os.PathLike)):
            with open(source, "rb") as fh:
                data = fh.read()
        elif isinstance(source, (bytes, bytearray)):
            data = bytes(source)
        else:
            data = source.read()
    except OSError as exc:
        raise InputError(f"cannot read source: {exc}") from exc
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise InputError(f"source is not UTF-8: {exc}") from exc
    return data.lstrip("﻿")


def _records(source, header: tuple[str, ...], name: str) -> list[tuple[int, str, dict | None]]:
    """Split a CSV or JSONL source into ``(row_number, raw, fields)``.

    ``fields`` is None for rows that cannot be tokenised.
    """
    text = _read_text(source)
    lines = text.splitlines()
    first = next((ln for ln in lines if ln.strip()), None)
    if first is None:
        raise HeaderMismatch(f"{name}: empty source (no header)")
    out = []
    if first.lstrip().startswith("{"):
        for i, ln in enumerate(lines, start=1):
            if not ln.strip():
                continue
            try:
                rec = json.loads(ln)
                if not isinstance(rec, dict) or set(rec) != set(header):
                    raise ValueError
                out.append((i, ln, {k: rec[k] for k in header}))
            except ValueError:
                out.append((i, ln, None))
        return out
    reader = csv.reader(io.StringIO(text))
    got = None
    for row in reader:
        if any(c.strip() for c in row):
            got = tuple(c.strip() for c in row)
            break
    if got != header:
        raise HeaderMismatch(f"{name}: expected header {','.join(header)!r}, got {','.join(got or ())!r}")
    for i, row in enumerate(reader, start=1):
        if not any(c.strip() for c in row):
            continue
        raw = ",".join(row)
        if len(row) != len(header):
            out.append((i, raw, None))
        else:
            out.append((i, raw, {k: v.strip() for k, v in zip(header, row)}))
    return out


def _check_quality(report: RejectReport, n_malformed: int, config: StudyConfig) -> None:
    if report.n_rows and n_malformed / report.n_rows > config.max_reject_fraction:
        raise CorpusQualityError(
            f"{report.source}: {n_malformed}/{report.n_rows} malformed rows "
            f"exceeds {config.max_reject_fraction:.0%}"
        )


class _open_dest:
    """Context manager writing text to a path (atomically) or a file object."""

    def __init__(self, dest):
        self.dest = dest
        self.tmp = None

    def __enter__(self):
        if isinstance(self.dest, (str, os.PathLike)):
            self.tmp = f"{os.fspath(self.dest)}.tmp{os.getpid()}"
            self.fh = open(self.tmp, "w", newline="", encoding="utf-8")
        else:
            self.fh = self.dest
        return self.fh

    def __exit__(self, exc_type, exc, tb):
        if self.tmp is not None:
            self.fh.close()
            if exc_type is None:
                os.replace(self.tmp, self.dest)
            else:
                os.unlink(self.tmp)
        return False


# ---------------------------------------------------------------- parsers


def parse_ir_log(source, config: StudyConfig) -> tuple[IrLog, RejectReport]:
    """Parse an IR hit log.

    Returns
    -------
    events : IrLog
        Accepted hits sorted by timestamp (ties by ego, alter).
    rejects : RejectReport
        Rows failing validation (self-loops, bad timestamps, hits outside
        the study calendar, wrong field count).

    Raises
    ------
    HeaderMismatch, InputError, CorpusQualityError
    """
    records = _records(source, IR_HEADER, "ir_log")
    report = RejectReport("ir_log", len(records))
    lo, hi = config.calendar_bounds
    ego, alter, ts = [], [], []
    malformed = 0
    for row, raw, rec in records:
        if rec is None:
            report.add(row, raw, "malformed: field count")
            malformed += 1
            continue
        e, a = str(rec["ego_id"]).strip(), str(rec["alter_id"]).strip()
        if not e or not a:
            report.add(row, raw, "malformed: empty participant id")
            malformed += 1
            continue
        if e == a:
            report.add(row, raw, "invariant: ego equals alter")
            malformed += 1
            continue
        try:
            s = _epoch(parse_instant(rec["timestamp_utc"]))
        except (ValueError, TypeError):
            report.add(row, raw, "malformed: timestamp")
            malformed += 1
            continue
        if not lo <= s < hi:
            report.add(row, raw, "invariant: outside study calendar")
            malformed += 1
            continue
        ego.append(e)
        alter.append(a)
        ts.append(s)
    _check_quality(report, malformed, config)
    return IrLog(ego, alter, ts), report


def parse_surveys(source, config: StudyConfig) -> tuple[list[SurveyResponse], RejectReport]:
    """Parse long-format experience-sampling responses.

    Rows sharing ``(participant, day, period, submitted_at)`` form one
    response. Exclusions are applied in this order: response window, then
    duplicate slots (the earliest submission wins).

    Raises
    ------
    UnknownItemError
        Item code not declared by any configured state.
    ScaleRangeError
        Value outside the item's declared scale.
    """
    records = _records(source, SURVEY_HEADER, "surveys")
    report = RejectReport("surveys", len(records))
    scales = config.item_scales
    groups: dict[tuple, list[tuple[int, str, str, float]]] = defaultdict(list)
    malformed = 0
    for row, raw, rec in records:
        if rec is None:
            report.add(row, raw, "malformed: field count")
            malformed += 1
            continue
        try:
            pid = str(rec["participant_id"]).strip()
            if not pid:
                raise ValueError
            day = int(str(rec["day"]).strip())
            period = Period.parse(rec["period"])
            submitted = parse_instant(rec["submitted_at_utc"])
            code = str(rec["item_code"]).strip()
            value = float(rec["value"])
            if not math.isfinite(value):
                raise ValueError
        except (ValueError, TypeError, KeyError):
            report.add(row, raw, "malformed: field value")
            malformed += 1
            continue
        if not 1 <= day <= config.n_days:
            report.add(row, raw, "malformed: day outside study")
            malformed += 1
            continue
        if code not in scales:
            raise UnknownItemError(f"surveys row {row}: unknown item code {code!r}")
        smin, smax = scales[code]
        if not smin <= value <= smax:
            raise ScaleRangeError(f"surveys row {row}: {code}={value} outside [{smin}, {smax}]")
        groups[(pid, day, period, submitted)].append((row, raw, code, value))
    _check_quality(report, malformed, config)

    window = config.response_window
    in_window: dict[tuple, list] = defaultdict(list)
    for (pid, day, period, submitted), rows in groups.items():
        trigger = config.trigger_utc(day, period)
        if not trigger <= submitted <= trigger + window:
            for row, raw, _, _ in rows:
                report.add(row, raw, "window: submitted outside response window")
            continue
        in_window[(pid, day, period)].append((submitted, rows))

    responses = []
    for key, candidates in in_window.items():
        candidates.sort(key=lambda c: c[0])
        submitted, rows = candidates[0]
        if len(candidates) > 1:
            log.warning("duplicate survey %s: keeping %s", key, format_instant(submitted))
            for _, later in candidates[1:]:
                for row, raw, _, _ in later:
                    report.add(row, raw, "duplicate: later submission for same slot")
        by_code: dict[str, list] = defaultdict(list)
        for r in sorted(rows):
            by_code[r[2]].append(r)
        items = {}
        for code, reps in by_code.items():
            # conflicting repeats cannot be resolved independently of row order
            if len({v for *_, v in reps}) > 1:
                for row, raw, _, _ in reps:
                    report.add(row, raw, "duplicate: conflicting repeated item code")
                continue
            for row, raw, _, _ in reps[1:]:
                report.add(row, raw, "duplicate: repeated item code")
            items[code] = reps[0][3]
        if not items:
            continue
        responses.append(SurveyResponse(key[0], key[1], key[2], items, submitted))
    responses.sort(key=lambda r: (r.participant_id, r.day, r.period.index))
    return responses, report


def parse_traits(source, config: StudyConfig) -> tuple[list[TraitSurvey], RejectReport]:
    """Parse dispositional trait scores (one row per trait per wave)."""
    records = _records(source, TRAIT_HEADER, "traits")
    report = RejectReport("traits", len(records))
    groups: dict[tuple[str, str], list] = defaultdict(list)
    malformed = 0
    for row, raw, rec in records:
        if rec is None:
            report.add(row, raw, "malformed: field count")
            malformed += 1
            continue
        try:
            pid = str(rec["participant_id"]).strip()
            wave = str(rec["wave"]).strip().capitalize()
            trait = str(rec["trait"]).strip()
            score = float(rec["raw_score"])
            if not pid or not trait or wave not in WAVES or not math.isfinite(score):
                raise ValueError
        except (ValueError, TypeError):
            report.add(row, raw, "malformed: field value")
            malformed += 1
            continue
        groups[(pid, wave)].append((row, raw, trait, score))
    _check_quality(report, malformed, config)

    out = []
    for (pid, wave), rows in sorted(groups.items()):
        scores = {}
        kept = []
        for row, raw, trait, score in sorted(rows):
            if trait in scores:
                report.add(row, raw, "duplicate: repeated trait")
                continue
            scores[trait] = score
            kept.append((row, raw))
        missing = [t for t in config.trait_names if t not in scores]
        if wave == "Begin" and missing:
            for row, raw in kept:
                report.add(row, raw, f"invariant: incomplete begin battery (missing {','.join(missing)})")
            continue
        out.append(TraitSurvey(pid, scores, wave))
    return out, report


# ------------------------------------------------------------ serializers


def write_ir_log(events: IrLog | Iterable[IrEvent], dest) -> None:
    """Write hits in canonical CSV form (sorted, ``...Z`` timestamps)."""
    if not isinstance(events, IrLog):
        events = IrLog.from_events(events)
    with _open_dest(dest) as fh:
        fh.write(",".join(IR_HEADER) + "\n")
        stamps = {}
        for e, a, s in zip(events.ego.tolist(), events.alter.tolist(), events.ts.tolist()):
            t = stamps.get(s)
            if t is None:
                t = stamps[s] = format_instant(_from_epoch(s))
            fh.write(f"{e},{a},{t}\n")


def write_surveys(responses: Iterable[SurveyResponse], dest) -> None:
    rows = []
    for r in responses:
        stamp = format_instant(r.submitted_at)
        for code, value in r.items.items():
            rows.append((r.participant_id, r.day, r.period.index, stamp, code, value, r.period.value))
    rows.sort(key=lambda x: x[:5])
    with _open_dest(dest) as fh:
        fh.write(",".join(SURVEY_HEADER) + "\n")
        for pid, day, _, stamp, code, value, pname in rows:
            fh.write(f"{pid},{day},{pname},{stamp},{code},{format_number(value)}\n")


def write_traits(traits: Iterable[TraitSurvey], dest) -> None:
    rows = sorted(
        (t.participant_id, WAVES.index(t.wave), t.wave, name, score)
        for t in traits
        for name, score in t.raw_trait_scores.items()
    )
    with _open_dest(dest) as fh:
        fh.write(",".join(TRAIT_HEADER) + "\n")
        for pid, _, wave, name, score in rows:
            fh.write(f"{pid},{wave},{name},{format_number(score)}\n")


# ------------------------------------------------------------- statistics


def corpus_stats(events, surveys: Sequence[SurveyResponse], windows=(), n_days: int | None = None) -> CorpusStats:
    """Count participants, surveys, hits, transient edges and absences.

    A transient edge is a distinct ``(ego, alter, window)`` triple. An
    absence is a ``(participant, study day)`` with no accepted survey;
    ``n_days`` defaults to the last day seen in ``surveys``.
    """
    if not isinstance(events, IrLog):
        events = IrLog.from_events(events)
    people = set(events.ego.tolist()) | set(events.alter.tolist())
    people |= {s.participant_id for s in surveys}
    present = {(s.participant_id, s.day) for s in surveys}
    if n_days is None:
        n_days = max((s.day for s in surveys), default=0)
    n_edges = sum(len(w.contacts) for w in windows)
    n_absences = len(people) * n_days - len(present) if surveys else 0
    return CorpusStats(
        n_participants=len(people),
        n_surveys=len(surveys),
        n_ir_hits=len(events),
        n_transient_edges=n_edges,
        n_absences=max(n_absences, 0),
    )
