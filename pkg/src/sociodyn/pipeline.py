"""End-to-end analysis: corpus files to selected models and effect labels."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence


from .config import LEVELS, Level, StudyConfig
from .data_model import (
    CorpusStats,
    IrLog,
    RejectReport,
    SurveyResponse,
    TraitSurvey,
    corpus_stats,
    parse_ir_log,
    parse_surveys,
    parse_traits,
)
from .gee import FitError, ModelFit, SelectionTrace, backward_eliminate
from .influence import StateSummary, build_diagram, sisa_contagion_test
from .network import EgoWindow, WindowReport, build_windows
from .scoring import LevelTable, StateScore, normalize_traits, quantize, score_surveys, trait_lookup
from .transitions import ExtractionReport, InsufficientData, TransitionRecord, build_design, extract_transitions

log = logging.getLogger(__name__)

CORPUS_FILES = {"ir_log": "ir_log", "surveys": "surveys", "traits": "traits"}


@dataclass
class Corpus:
    events: IrLog
    surveys: list[SurveyResponse]
    traits: list[TraitSurvey]
    rejects: dict[str, RejectReport] = field(default_factory=dict)


def find_input(directory, stem: str) -> Path:
    """``<stem>.csv`` or ``<stem>.jsonl`` inside ``directory``."""
    directory = Path(directory)
    for ext in (".csv", ".jsonl"):
        p = directory / f"{stem}{ext}"
        if p.exists():
            return p
    raise FileNotFoundError(f"missing input artifact: {directory / (stem + '.csv')}")


def load_corpus(directory, config: StudyConfig) -> Corpus:
    """Parse ``ir_log``, ``surveys`` and ``traits`` from a corpus directory."""
    events, r1 = parse_ir_log(find_input(directory, "ir_log"), config)
    surveys, r2 = parse_surveys(find_input(directory, "surveys"), config)
    traits, r3 = parse_traits(find_input(directory, "traits"), config)
    return Corpus(events, surveys, traits, {"ir_log": r1, "surveys": r2, "traits": r3})


@dataclass
class StateAnalysis:
    state: str
    records: list[TransitionRecord]
    extraction: ExtractionReport
    fits: dict[tuple[Level, Level], ModelFit | None] = field(default_factory=dict)
    traces: dict[tuple[Level, Level], SelectionTrace] = field(default_factory=dict)
    errors: dict[tuple[Level, Level], str] = field(default_factory=dict)
    summary: StateSummary | None = None


@dataclass
class Analysis:
    config: StudyConfig
    scores: list[StateScore]
    levels: LevelTable
    windows: list[EgoWindow]
    window_report: WindowReport
    traits: dict[tuple[str, str], float]
    states: dict[str, StateAnalysis]
    stats: CorpusStats | None = None

    @property
    def n_failures(self) -> int:
        return sum(len(s.errors) for s in self.states.values())


def _fit_one(args):
    records, x, y, min_rows, corr, index, alpha = args
    try:
        design = build_design(records, x, y, min_rows)
    except InsufficientData as exc:
        return None, None, f"insufficient data: {exc}"
    try:
        fit, trace = backward_eliminate(design, corr=corr, alpha=alpha, index=index)
    except FitError as exc:
        return None, None, f"{type(exc).__name__}: {exc}"
    note = "; ".join(trace.notes)
    return fit, trace, note or None


def fit_state(
    records: Sequence[TransitionRecord],
    state: str,
    config: StudyConfig,
    corr: str = "unstructured",
    index: str = "slot",
    workers: int = 1,
    transitions: Iterable[tuple[Level, Level]] | None = None,
    extraction: ExtractionReport | None = None,
) -> StateAnalysis:
    """Select and fit the binary model of each ``X -> Y`` transition.

    Transitions with too few rows or failing fits get no model (``None``)
    and an entry in ``errors``; a full-model failure that falls back to
    the null model is recorded there too.
    """
    pairs = list(transitions) if transitions is not None else [(x, y) for x in LEVELS for y in LEVELS]
    jobs = [(records, x, y, config.min_rows, corr, index, config.alpha) for x, y in pairs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_fit_one, jobs))
    else:
        results = [_fit_one(j) for j in jobs]
    out = StateAnalysis(state, list(records), extraction or ExtractionReport(state, n_records=len(records)))
    for (x, y), (fit, trace, err) in zip(pairs, results):
        out.fits[(x, y)] = fit
        if trace is not None:
            out.traces[(x, y)] = trace
        if err:
            out.errors[(x, y)] = err
    return out


def prepare(corpus: Corpus, config: StudyConfig):
    """Scores, levels, trait z-scores and ego windows of a parsed corpus."""
    scores = score_surveys(corpus.surveys, config)
    levels = quantize(scores, config)
    profiles = normalize_traits(corpus.traits, "Begin", config.trait_names, config.population_sd)
    traits = trait_lookup(profiles)
    report = WindowReport()
    participants = config.participants
    if participants is None:
        participants = {s.participant_id for s in corpus.surveys} | {t.participant_id for t in corpus.traits}
    windows = build_windows(corpus.events, corpus.surveys, levels, config, participants, report)
    return scores, levels, traits, windows, report


def analyze(
    corpus: Corpus,
    config: StudyConfig,
    corr: str = "unstructured",
    index: str = "slot",
    workers: int = 1,
    states: Sequence[str] | None = None,
    fit: bool = True,
) -> Analysis:
    """Run the whole pipeline on a parsed corpus.

    States discarded by the skewness screen, or without a matching trait,
    are skipped. With ``fit=False`` only transitions are extracted.
    """
    scores, levels, traits, windows, report = prepare(corpus, config)
    kept = [s for s in levels.kept_states if s in config.trait_names]
    if states is not None:
        kept = [s for s in kept if s in set(states)]
    result = Analysis(config, scores, levels, windows, report, traits, {})
    for state in kept:
        ext = ExtractionReport(state)
        records = extract_transitions(levels, windows, traits, state, ext)
        if fit:
            sa = fit_state(records, state, config, corr, index, workers, extraction=ext)
            sa.summary = build_diagram(sa.fits, state, config.relevance_threshold)
        else:
            sa = StateAnalysis(state, records, ext)
        result.states[state] = sa
    result.stats = corpus_stats(corpus.events, corpus.surveys, windows, config.n_days)
    return result


def contagion_verdicts(fits: Mapping[tuple[Level, Level], ModelFit | None], state: str, threshold: float):
    return [sisa_contagion_test(fits, v, state, None, threshold) for v in (Level.L, Level.H)]
