"""Command-line interface: ``sociodyn {ingest,simulate,fit,classify,report}``.

Commands hand off through files in ``--out`` directories::

    sociodyn simulate scenario.yaml --seed 7 --out corpus/
    sociodyn ingest corpus/ --out clean/
    sociodyn fit clean/ --out fits/
    sociodyn classify fits/ --out effects/
    sociodyn report fits/ effects/ --out report/

Exit codes: 0 ok, 2 input error, 3 fit or selection failures (reports are
still written). ``SOCIODYN_LOG`` sets the log level (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Sequence


from . import __version__
from .config import LEVELS, Level, StudyConfig, study_config_from_dict, study_config_to_dict
from .data_model import InputError, _open_dest, corpus_stats, write_ir_log, write_surveys, write_traits
from .diagnostics import diurnal_diagnostics
from .gee import KINDS, fit_from_dict
from .influence import build_diagram, coverage, label_tallies
from .network import homophily_similarity
from .pipeline import analyze, contagion_verdicts, find_input, load_corpus, prepare
from .reporting import (
    ANOVA_HEADER,
    COUNTS_HEADER,
    INTENSITY_HEADER,
    LEVELS_HEADER,
    FITS_HEADER,
    HOMOPHILY_HEADER,
    MATRIX_HEADER,
    PERCENT_HEADER,
    QICC_HEADER,
    SUMMARY_HEADER,
    TRAIT_PROFILE_HEADER,
    TRANSITIONS_HEADER,
    TUKEY_HEADER,
    RunManifest,
    anova_rows,
    canonical_json,
    counts_rows,
    design_rows,
    coverage_line,
    effects_document,
    fit_record,
    fits_rows,
    fmt,
    homophily_rows,
    intensity_rows,
    levels_rows,
    matrix_rows,
    percentage_rows,
    qicc_rows,
    read_counts,
    read_csv,
    sha256_bytes,
    sha256_file,
    summary_rows,
    trait_profile_rows,
    transitions_rows,
    tukey_rows,
    windows_header,
    windows_rows,
    write_csv,
    write_json,
)
from .simulator import ScenarioConfig, load_scenario, run_scenario
from .scoring import normalize_traits
from .transitions import InsufficientData, build_design, count_transitions, transition_count_table

log = logging.getLogger("sociodyn")

EXIT_OK, EXIT_INPUT, EXIT_FIT = 0, 2, 3


class MissingArtifact(InputError):
    pass


# ------------------------------------------------------------------ setup


def _load_tree(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"missing input artifact: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        return yaml.safe_load(text) or {}
    return json.loads(text)


def study_config(args) -> StudyConfig:
    """Study settings from ``--config`` (key ``study`` or top level) plus flags."""
    data = {}
    if getattr(args, "config", None):
        tree = _load_tree(args.config)
        data = tree.get("study", tree) if isinstance(tree, dict) else {}
        data = {k: v for k, v in data.items() if k not in ("correlation", "workers", "seed", "index")}
    cfg = study_config_from_dict(data)
    if args.alpha is not None:
        cfg = cfg.with_(alpha=args.alpha)
    if args.relevance_threshold is not None and args.relevance_threshold > 0:
        cfg = cfg.with_(relevance_threshold=args.relevance_threshold)
    return cfg


def _settings(args, cfg: StudyConfig, **extra) -> tuple[dict, str]:
    settings = {"study": study_config_to_dict(cfg), **extra}
    return settings, sha256_bytes(canonical_json(settings).encode())


def _finish(manifest: RunManifest, out: Path, t0: float, written: list[Path]) -> None:
    manifest.outputs = [p.name for p in written]
    manifest.duration_s = time.perf_counter() - t0
    write_json(out / f"manifest_{manifest.command}.json", manifest.as_dict())


def _input_digests(paths: dict[str, Path]) -> dict[str, str]:
    return {name: sha256_file(p) for name, p in sorted(paths.items())}


def _corpus_paths(directory) -> dict[str, Path]:
    return {stem: find_input(directory, stem) for stem in ("ir_log", "surveys", "traits")}


def _missing(exc: FileNotFoundError) -> MissingArtifact:
    msg = str(exc)
    return MissingArtifact(msg if msg.startswith("missing input artifact") else f"missing input artifact: {msg}")


# --------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    cfg = study_config(args)
    scenario = load_scenario(args.scenario, cfg) if args.scenario else ScenarioConfig(study=cfg)
    if args.seed is not None:
        scenario = scenario.with_(seed=args.seed)
    out = Path(args.out)
    corpus = run_scenario(scenario)
    paths = corpus.write(out)
    inputs = {"scenario": sha256_file(args.scenario)} if args.scenario else {}
    _, cdig = _settings(args, scenario.study, scenario=scenario.to_dict())
    manifest = RunManifest("simulate", cdig, inputs, scenario.seed)
    _finish(manifest, out, t0, list(paths.values()))
    print(f"simulated {scenario.n_agents} agents x {scenario.n_days} days: "
          f"{len(corpus.surveys)} surveys, {len(corpus.events)} hits -> {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    t0 = time.perf_counter()
    cfg = study_config(args)
    try:
        paths = _corpus_paths(args.corpus)
    except FileNotFoundError as exc:
        raise _missing(exc) from exc
    corpus = load_corpus(args.corpus, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, cdig = _settings(args, cfg)
    manifest = RunManifest("ingest", cdig, _input_digests(paths), args.seed)
    d = manifest.digest
    written = [out / "ir_log.csv", out / "surveys.csv", out / "traits.csv"]
    write_ir_log(corpus.events, written[0])
    write_surveys(corpus.surveys, written[1])
    write_traits(corpus.traits, written[2])
    for name, rep in corpus.rejects.items():
        p = out / f"rejects_{name}.csv"
        rep.write_csv(p)
        written.append(p)
    _, levels, _, windows, wrep = prepare(corpus, cfg)
    profiles = normalize_traits(corpus.traits, "Begin", cfg.trait_names, cfg.population_sd)
    states = levels.kept_states
    written.append(write_csv(out / "levels.csv", LEVELS_HEADER, levels_rows(levels), d))
    written.append(write_csv(out / "trait_profiles.csv", TRAIT_PROFILE_HEADER, trait_profile_rows(profiles), d))
    written.append(write_csv(out / "windows.csv", windows_header(states), windows_rows(windows, states), d))
    written.append(write_csv(out / "intensity.csv", INTENSITY_HEADER, intensity_rows(windows, states), d))
    stats = corpus_stats(corpus.events, corpus.surveys, windows, cfg.n_days)
    doc = {
        "stats": stats.__dict__,
        "rejects": {k: {"n_rows": r.n_rows, "rejected": len(r), "reasons": r.reasons()} for k, r in corpus.rejects.items()},
        "windows": {
            "n_windows": wrep.n_windows,
            "hits_assigned": wrep.n_assigned,
            "hits_outside_windows": wrep.n_unassigned,
            "hits_unknown_alters": wrep.n_unknown_alter_hits,
            "windows_missing_survey": wrep.n_missing_survey,
        },
        "screens": {s: {"keep": r.keep, "reason": r.reason, "shares": list(r.shares)} for s, r in levels.screens.items()},
    }
    written.append(write_json(out / "corpus_stats.json", doc, d))
    _finish(manifest, out, t0, written)
    print(f"ingested {stats.n_surveys} surveys, {stats.n_ir_hits} hits, {stats.n_participants} participants -> {out}")
    return EXIT_OK


def _is_hard_failure(err: str) -> bool:
    return not err.startswith("insufficient data")


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    cfg = study_config(args)
    try:
        paths = _corpus_paths(args.corpus)
    except FileNotFoundError as exc:
        raise _missing(exc) from exc
    corpus = load_corpus(args.corpus, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, cdig = _settings(args, cfg, correlation=args.correlation, index=args.index)
    manifest = RunManifest("fit", cdig, _input_digests(paths), args.seed)
    d = manifest.digest

    result = analyze(corpus, cfg, args.correlation, args.index, max(1, args.workers))
    written = []
    fit_rows, q_rows, h_rows, t_rows, counts = [], [], [], [], {}
    failures = 0
    for state, sa in result.states.items():
        counts[state] = count_transitions(sa.records)
        t_rows += transitions_rows(sa.records)
        for x in LEVELS:
            for y in LEVELS:
                try:
                    header, rows = design_rows(build_design(sa.records, x, y, cfg.min_rows))
                    written.append(write_csv(out / f"design_{state}_{x.name}_{y.name}.csv", header, rows, d))
                except InsufficientData:
                    pass
                rec = fit_record(state, x, y, sa.fits.get((x, y)), sa.traces.get((x, y)), sa.errors.get((x, y)))
                written.append(write_json(out / f"fit_{state}_{x.name}_{y.name}.json", rec, d))
        failures += sum(_is_hard_failure(e) for e in sa.errors.values())
        fit_rows += fits_rows(state, sa.fits, sa.errors)
        q_rows += qicc_rows(state, sa.traces)
        h_rows += homophily_rows(state, homophily_similarity(result.windows, result.levels, state))
    written.append(write_csv(out / "transitions.csv", TRANSITIONS_HEADER, t_rows, d))
    written.append(write_csv(out / "fits.csv", FITS_HEADER, fit_rows, d))
    written.append(write_csv(out / "qicc.csv", QICC_HEADER, q_rows, d))
    written.append(write_csv(out / "transition_counts.csv", COUNTS_HEADER, counts_rows(counts), d))
    written.append(write_csv(out / "homophily.csv", HOMOPHILY_HEADER, h_rows, d))
    anovas, tukeys = diurnal_diagnostics(result.scores, cfg)
    written.append(write_csv(out / "diurnal.csv", ANOVA_HEADER, anova_rows(anovas), d))
    written.append(write_csv(out / "tukey.csv", TUKEY_HEADER, tukey_rows(tukeys), d))
    _finish(manifest, out, t0, written)
    n_fit = sum(f is not None for sa in result.states.values() for f in sa.fits.values())
    print(f"fitted {n_fit} transition models over {len(result.states)} states -> {out}")
    if failures:
        log.warning("%d fits failed or fell back to the null model", failures)
        return EXIT_FIT
    return EXIT_OK


def _load_fits(directory: Path):
    files = sorted(directory.glob("fit_*.json"))
    if not files:
        raise MissingArtifact(f"missing input artifact: {directory / 'fit_<state>_<X>_<Y>.json'}")
    states: dict[str, dict] = {}
    errors: dict[str, dict] = {}
    for f in files:
        doc = json.loads(f.read_text(encoding="utf-8"))
        state = doc["state"]
        x, _, y = doc["transition"].partition("->")
        key = (Level.parse(x), Level.parse(y))
        states.setdefault(state, {})[key] = fit_from_dict(doc["fit"]) if doc.get("fit") else None
        if doc.get("error"):
            errors.setdefault(state, {})[key] = doc["error"]
    return states, errors, files


def cmd_classify(args) -> int:
    t0 = time.perf_counter()
    cfg = study_config(args)
    thr_off = args.relevance_threshold is not None and args.relevance_threshold <= 0
    src = Path(args.fits)
    states, errors, files = _load_fits(src)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, cdig = _settings(args, cfg, mode=args.mode, threshold_disabled=thr_off)
    manifest = RunManifest("classify", cdig, {f.name: sha256_file(f) for f in files}, args.seed)
    d = manifest.digest
    thr = None if thr_off else cfg.relevance_threshold
    written, summaries = [], []
    for state in sorted(states):
        summary = build_diagram(states[state], state, thr, args.mode)
        verdicts = contagion_verdicts(states[state], state, thr)
        summaries.append(summary)
        written.append(write_json(out / f"effects_{state}.json", effects_document(summary, verdicts), d))
    written.append(write_csv(out / "summary_matrix.csv", MATRIX_HEADER, matrix_rows(summaries), d))
    k, total = coverage(summaries, n_states=max(len(cfg.trait_names), len(summaries)))
    tallies = label_tallies(summaries)
    lines = [f"# manifest: {d}", coverage_line(k, total)]
    lines += [f"{name}: {tallies.get(name, 0)}" for name in ("Attraction", "Repulsion", "Inertia", "Push")]
    p = out / "coverage.txt"
    with _open_dest(p) as fh:
        fh.write("\n".join(lines) + "\n")
    written.append(p)
    _finish(manifest, out, t0, written)
    print(coverage_line(k, total))
    hard = sum(_is_hard_failure(e) for errs in errors.values() for e in errs.values())
    return EXIT_FIT if hard else EXIT_OK


def _find(dirs: Sequence[Path], name: str) -> Path | None:
    for d in dirs:
        p = d / name
        if p.exists():
            return p
    return None


def _md_table(header: Sequence[str], rows: Sequence[Sequence]) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out += ["| " + " | ".join(fmt(v) if not isinstance(v, str) else v for v in r) + " |" for r in rows]
    return out


def cmd_report(args) -> int:
    t0 = time.perf_counter()
    cfg = study_config(args)
    dirs = [Path(p) for p in args.inputs]
    counts_path = _find(dirs, "transition_counts.csv")
    if counts_path is None:
        raise MissingArtifact("missing input artifact: transition_counts.csv")
    optional = {n: _find(dirs, n) for n in ("fits.csv", "qicc.csv", "homophily.csv", "diurnal.csv", "tukey.csv",
                                             "summary_matrix.csv", "coverage.txt")}
    inputs = {"transition_counts.csv": counts_path, **{k: v for k, v in optional.items() if v is not None}}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, cdig = _settings(args, cfg)
    manifest = RunManifest("report", cdig, _input_digests(inputs), args.seed)
    d = manifest.digest

    summary = transition_count_table(read_counts(counts_path))
    written = [
        write_csv(out / "transition_summary.csv", SUMMARY_HEADER, summary_rows(summary), d),
        write_csv(out / "to_level_percentages.csv", PERCENT_HEADER, percentage_rows(summary), d),
    ]
    md = [f"<!-- manifest: {d} -->", "# Transition report", "", "## Transitions per state", ""]
    md += _md_table(SUMMARY_HEADER, [(r[0], *r[1:]) for r in summary_rows(summary)])
    md += ["", "## Percentage of transitions to each level", ""]
    states = list(summary.counts)
    md += _md_table(
        ("target", *states),
        [(lv.name, *[f"{summary.to_level_pct[s][i]:.3f}" for s in states]) for i, lv in enumerate(LEVELS)],
    )
    sections = [
        ("qicc.csv", "QICC of selected and null models"),
        ("fits.csv", "Selected models"),
        ("homophily.csv", "Homophily"),
        ("diurnal.csv", "Diurnal ANOVA"),
        ("tukey.csv", "Tukey comparisons"),
        ("summary_matrix.csv", "Adaptation and complementarity"),
    ]
    for name, title in sections:
        p = optional[name]
        if p is None:
            continue
        rows = read_csv(p)
        if not rows:
            continue
        header = list(rows[0].keys())
        md += ["", f"## {title}", ""]
        md += _md_table(header, [[r[h] for h in header] for r in rows])
    if optional["coverage.txt"] is not None:
        lines = [ln for ln in optional["coverage.txt"].read_text().splitlines() if not ln.startswith("#")]
        md += ["", "## Coverage", ""] + lines
    p = out / "report.md"
    with _open_dest(p) as fh:
        fh.write("\n".join(md) + "\n")
    written.append(p)
    _finish(manifest, out, t0, written)
    ll = summary.summary[(Level.L, Level.L)]
    print(f"L->L max {ll['max']:g} min {ll['min']:g} median {ll['median']:g} mean {ll['mean']:.2f} -> {out}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="study settings file (JSON or YAML)")
    common.add_argument("--seed", type=int, default=None, help="random seed (simulate)")
    common.add_argument("--alpha", type=float, default=None, help="significance level for elimination")
    common.add_argument("--relevance-threshold", type=float, default=None,
                        help="minimum |coefficient| for an effect (<= 0 disables)")
    common.add_argument("--correlation", choices=KINDS, default="unstructured")
    common.add_argument("--index", choices=("slot", "day_slot"), default="slot",
                        help="position index of the unstructured working correlation")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", required=True, help="output directory")

    parser = argparse.ArgumentParser(prog="sociodyn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="validate and normalize a corpus")
    p.add_argument("corpus", help="directory with ir_log, surveys and traits files")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic corpus")
    p.add_argument("scenario", nargs="?", help="scenario file (JSON or YAML)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit and select every transition model")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("classify", parents=[common], help="label influence effects of fitted models")
    p.add_argument("fits", help="directory with fit_*.json files")
    p.add_argument("--mode", choices=("auto", "pooled", "trait"), default="auto")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("report", parents=[common], help="consolidate tables")
    p.add_argument("inputs", nargs="+", help="directories holding upstream outputs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("SOCIODYN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
