"""Report files: CSV tables, JSON fit/effect records and run manifests.

Every CSV starts with a ``# manifest: <digest>`` comment line naming the
run it derives from; JSON documents carry a ``manifest`` key.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .config import LEVELS, Level
from .data_model import _open_dest
from .diagnostics import AnovaResult, TukeyComparison
from .gee import ModelFit, SelectionTrace
from .influence import ContagionVerdict, StateSummary
from .network import SimilaritySummary, intensity
from .transitions import TransitionSummary

TRAIT_CLASSES = ("LowTrait", "HighTrait")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False, default=str)


@dataclass
class RunManifest:
    """Provenance of one command run.

    ``digest`` covers the command, config digest, input digests, seed and
    tool version; outputs and wall-clock duration are recorded but left
    out so that reruns on identical inputs yield identical reports.
    """

    command: str
    config_digest: str
    input_digests: dict[str, str] = field(default_factory=dict)
    seed: int | None = None
    tool_version: str = __version__
    outputs: list[str] = field(default_factory=list)
    duration_s: float = 0.0

    @property
    def digest(self) -> str:
        core = {
            "command": self.command,
            "config_digest": self.config_digest,
            "input_digests": dict(sorted(self.input_digests.items())),
            "seed": self.seed,
            "tool_version": self.tool_version,
        }
        return sha256_bytes(canonical_json(core).encode())

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "digest": self.digest,
            "config_digest": self.config_digest,
            "input_digests": dict(sorted(self.input_digests.items())),
            "seed": self.seed,
            "tool_version": self.tool_version,
            "outputs": sorted(self.outputs),
            "duration_s": round(self.duration_s, 3),
        }


# -------------------------------------------------------------- primitives


def fmt(x) -> str:
    """Stable text form for CSV cells (blank for None/NaN)."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return ""
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.10g}"
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], digest: str | None = None) -> Path:
    buf = io.StringIO()
    if digest:
        buf.write(f"# manifest: {digest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    with _open_dest(path) as fh:
        fh.write(buf.getvalue())
    return Path(path)


def read_csv(path) -> list[dict[str, str]]:
    """Rows of a CSV file, skipping ``#`` comment lines."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Level):
        return obj.name
    return obj


def write_json(path, obj, digest: str | None = None) -> Path:
    data = _clean(obj)
    if digest is not None and isinstance(data, dict):
        data = {"manifest": digest, **data}
    text = json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"
    with _open_dest(path) as fh:
        fh.write(text)
    return Path(path)


def transition_name(x: Level, y: Level) -> str:
    return f"{Level.parse(x).name}->{Level.parse(y).name}"


# ------------------------------------------------------------------ tables


def fit_record(state: str, x: Level, y: Level, fit: ModelFit | None, trace: SelectionTrace | None, error: str | None):
    return {
        "state": state,
        "transition": transition_name(x, y),
        "fit": None if fit is None else fit.as_dict(),
        "selection": None if trace is None else trace.as_dict(),
        "error": error,
    }


def fits_rows(state: str, fits: Mapping, errors: Mapping) -> list[tuple]:
    """Rows shaped like the per-state result tables: term, coefficient, SE, p."""
    rows = []
    for x in LEVELS:
        for y in LEVELS:
            fit = fits.get((x, y))
            name = transition_name(x, y)
            if fit is None:
                rows.append((state, name, "", None, None, None, errors.get((x, y), "not fitted")))
                continue
            for t, b, se, p in zip(fit.terms, fit.params, fit.bse, fit.pvalues):
                rows.append((state, name, t, b, se, p, ""))
    return rows


FITS_HEADER = ("state", "transition", "term", "coefficient", "robust_se", "p_value", "note")


def qicc_rows(state: str, traces: Mapping[tuple[Level, Level], SelectionTrace]) -> list[tuple]:
    """Sub-model versus null-model QICC; only the null QICC when it wins."""
    rows = []
    for x in LEVELS:
        for y in LEVELS:
            tr = traces.get((x, y))
            if tr is None:
                continue
            sub = None if tr.chosen == "NullModel" else tr.submodel_qicc
            rows.append((state, transition_name(x, y), tr.chosen, sub, tr.null_qicc))
    return rows


QICC_HEADER = ("state", "transition", "chosen", "submodel_qicc", "null_qicc")


def counts_rows(counts: Mapping[str, np.ndarray]) -> list[tuple]:
    return [
        (state, x.name, y.name, int(c[int(x), int(y)]))
        for state, c in counts.items()
        for x in LEVELS
        for y in LEVELS
    ]


COUNTS_HEADER = ("state", "from", "to", "count")


def read_counts(path) -> dict[str, np.ndarray]:
    """``state,from,to,count`` rows into per-state 3x3 matrices."""
    out: dict[str, np.ndarray] = {}
    for i, row in enumerate(read_csv(path), start=1):
        try:
            state = row["state"].strip()
            x, y = Level.parse(row["from"]), Level.parse(row["to"])
            n = int(row["count"])
        except (KeyError, ValueError, AttributeError) as exc:
            raise ValueError(f"{path}: bad row {i}: {row}") from exc
        if n < 0:
            raise ValueError(f"{path}: negative count in row {i}")
        out.setdefault(state, np.zeros((3, 3), dtype=np.int64))[int(x), int(y)] = n
    if not out:
        raise ValueError(f"{path}: no transition counts")
    return out


def summary_rows(summary: TransitionSummary) -> list[tuple]:
    return [
        (transition_name(x, y), s["max"], s["min"], s["median"], s["mean"])
        for (x, y), s in sorted(summary.summary.items())
    ]


SUMMARY_HEADER = ("transition", "max", "min", "median", "mean")


def percentage_rows(summary: TransitionSummary) -> list[tuple]:
    rows = []
    for state in summary.counts:
        for i, lv in enumerate(LEVELS):
            rows.append((state, lv.name, summary.to_level_pct[state][i], summary.to_level_share[state][i]))
    return rows


PERCENT_HEADER = ("state", "target", "percent", "share_percent")


def homophily_rows(state: str, sims: Mapping[Level, SimilaritySummary]) -> list[tuple]:
    return [
        (state, lv.name, s.n_windows, s.count_mean, s.count_sd, s.hit_mean, s.hit_sd)
        for lv, s in sorted(sims.items())
    ]


HOMOPHILY_HEADER = ("state", "ego_level", "n_windows", "count_mean", "count_sd", "hit_mean", "hit_sd")


def anova_rows(results: Iterable[AnovaResult]) -> list[tuple]:
    return [
        (r.grouping, r.state, r.F, r.p, r.df_between, r.df_within, canonical_json(r.means), r.welch)
        for r in results
    ]


ANOVA_HEADER = ("grouping", "state", "F", "p", "df_between", "df_within", "means", "welch")


def tukey_rows(results: Iterable[TukeyComparison]) -> list[tuple]:
    return [
        (c.grouping, c.state, c.group_a, c.group_b, c.diff, c.p_adj, c.lower, c.upper, c.p_unadjusted)
        for c in results
    ]


TUKEY_HEADER = ("grouping", "state", "group_a", "group_b", "diff", "p_adj", "lower", "upper", "p_unadjusted")


def effects_document(summary: StateSummary, verdicts: Sequence[ContagionVerdict]) -> dict:
    return {
        "state": summary.diagram.state,
        "labels": [lab.as_dict() for lab in summary.labels],
        "diagram": summary.diagram.as_dict(),
        "contagion": [
            {"level": v.level.name, "trait_class": v.trait_class, "verdict": v.verdict, "failing": v.failing}
            for v in verdicts
        ],
        "labeled_transitions": summary.labeled_transitions,
    }


def matrix_rows(summaries: Iterable[StateSummary]) -> list[tuple]:
    """One row per (state, ego level); cells hold A, C or A/C."""
    rows = []
    for s in summaries:
        for x in LEVELS:
            cells = []
            for z in LEVELS:
                for tc in TRAIT_CLASSES:
                    codes = s.matrix[(x, z, tc)]
                    cells.append("/".join(sorted({c[0] for c in codes})))
            rows.append((s.diagram.state, x.name, *cells))
    return rows


MATRIX_HEADER = ("state", "ego_level") + tuple(f"{z.name}_{tc}" for z in LEVELS for tc in TRAIT_CLASSES)


def coverage_line(k: int, total: int) -> str:
    return f"{k} out of {total} transition types show at least one effect"


# ------------------------------------------------------ intermediate tables


def levels_rows(levels) -> list[tuple]:
    return [
        (a.participant_id, a.day, a.period.value, a.state, a.score, a.level.name)
        for a in sorted(levels.assignments, key=lambda a: (a.participant_id, a.day, a.period.index, a.state))
    ]


LEVELS_HEADER = ("participant_id", "day", "period", "state", "score", "level")


def trait_profile_rows(profiles) -> list[tuple]:
    return [(p.participant_id, p.trait, p.z, p.trait_class) for p in sorted(profiles, key=lambda p: (p.participant_id, p.trait))]


TRAIT_PROFILE_HEADER = ("participant_id", "trait", "z", "class")


def windows_header(states: Sequence[str]) -> tuple[str, ...]:
    return ("ego_id", "day", "slot", "alter_id", "hits") + tuple(f"alter_level_{s}" for s in states)


def windows_rows(windows, states: Sequence[str]) -> list[tuple]:
    """One row per (window, alter); windows without contacts get a blank alter."""
    rows = []
    for w in windows:
        if not w.contacts:
            rows.append((w.ego_id, w.day, w.slot.value, "", 0) + ("",) * len(states))
            continue
        for alter in sorted(w.contacts):
            lv = [w.alter_levels.get(s, {}).get(alter) for s in states]
            rows.append((w.ego_id, w.day, w.slot.value, alter, w.contacts[alter]) + tuple("" if v is None else v.name for v in lv))
    return rows


def intensity_rows(windows, states: Sequence[str]) -> list[tuple]:
    """Level intensities of every window retained for each state."""
    rows = []
    for w in windows:
        for s in states:
            if w.retained(s):
                t = intensity(w, s)
                rows.append((w.ego_id, w.day, w.slot.value, s, t.L, t.N, t.H))
    return rows


INTENSITY_HEADER = ("ego_id", "day", "slot", "state", "L", "N", "H")


def transitions_rows(records) -> list[tuple]:
    return [
        (r.ego_id, r.day, r.slot.value, r.state, r.from_level.name, r.to_level.name,
         *r.intensities.as_tuple(), r.trait_z, r.period_dummy)
        for r in records
    ]


TRANSITIONS_HEADER = ("ego_id", "day", "slot", "state", "from", "to", "L", "N", "H", "T", "P")


def design_rows(design) -> tuple[tuple[str, ...], list[tuple]]:
    """Header and rows of one binary design (intercept column omitted)."""
    names = [t for t in design.terms if t != "Intercept"]
    cols = [design.terms.index(t) for t in names]
    header = ("cluster_id", "day", "slot", "response", *names)
    rows = [
        (design.cluster[i], int(design.day[i]), int(design.slot[i]), int(design.endog[i]), *design.exog[i, cols])
        for i in range(design.n_rows)
    ]
    return header, rows
