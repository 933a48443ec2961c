"""Synthetic corpora generated from a known influence model.

Each morning an agent's level of every simulated state is drawn from the
initial distribution. Within each of the two daily windows the agent
contacts a Poisson number of distinct alters, and at the end of the
window moves from level ``X`` to ``Y`` with probability
``softmax(eta_L, eta_N, eta_H)[Y]`` where ``eta_Y`` is the linear
predictor of the transition model for ``X -> Y`` evaluated at the
window's contact intensities, the agent's trait z-score and the period
dummy.

Scenario files (JSON or YAML) look like::

    n_agents: 52
    n_days: 30
    seed: 7
    nonresponse: 0.05
    contacts: {mean_contacts: 0.55, mean_hits: 70, dispersion: 0.5, homophily: 0}
    coefficients:
      conscientiousness:
        N->L: {L: 0.02, T*L: -0.01}

Unlisted coefficients are 0.
"""
from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .config import DEFAULT_STATES, LEVELS, PERIODS, SLOTS, Level, StudyConfig
from .data_model import IrLog, SurveyResponse, TraitSurvey, _open_dest, write_ir_log, write_surveys, write_traits
from .network import EgoWindow
from .scoring import LevelAssignment, LevelTable, QuantileCuts, ScreenResult
from .transitions import ALL_TERMS

UTC = dt.timezone.utc
N_COEF = len(ALL_TERMS)


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    trait_z: Mapping[str, float]
    baseline: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ContactModel:
    """Contacts per window and hits per contact.

    ``mean_contacts`` is the Poisson mean of distinct alters per ego and
    window. Hits per contact are ``1 + NegBin`` with mean ``mean_hits`` and
    shape ``dispersion``, capped at one hit per second of the window.
    With ``homophily = w`` an alter at the ego's level of
    ``homophily_state`` is ``1 + w`` times as likely to be chosen.
    """

    mean_contacts: float = 0.55
    mean_hits: float = 70.0
    dispersion: float = 0.5
    homophily: float = 0.0
    homophily_state: str | None = None

    def __post_init__(self):
        if self.mean_contacts < 0 or self.mean_hits < 1 or self.dispersion <= 0 or self.homophily < 0:
            raise ValueError("invalid contact model")


@dataclass(frozen=True)
class ScenarioConfig:
    n_agents: int = 52
    n_days: int = 30
    seed: int = 0
    states: tuple[str, ...] = tuple(s.name for s in DEFAULT_STATES)
    skewed_states: tuple[str, ...] = ("hna", "lpa")
    contacts: ContactModel = ContactModel()
    coefficients: Mapping[str, Mapping[str, Mapping[str, float]]] = field(default_factory=dict)
    nonresponse: float = 0.0
    nonresponse_mode: str = "mcar"  # or "trait"
    initial: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    baseline_sd: float = 0.0
    period_shift: float = 0.0
    study: StudyConfig = field(default_factory=StudyConfig)

    def __post_init__(self):
        if self.n_agents < 2:
            raise ValueError("n_agents must be >= 2")
        if not 0 <= self.nonresponse <= 1:
            raise ValueError("nonresponse must be in [0, 1]")
        if self.nonresponse_mode not in ("mcar", "trait"):
            raise ValueError("nonresponse_mode must be 'mcar' or 'trait'")
        p = np.asarray(self.initial, dtype=float)
        if p.shape != (3,) or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("initial must be a probability triple")
        known = {s.name for s in self.study.states}
        for s in self.states:
            if s not in known:
                raise ValueError(f"unknown state {s!r}")
        for state, table in self.coefficients.items():
            if state not in self.states:
                raise ValueError(f"coefficients for state {state!r} which is not simulated")
            for key, terms in table.items():
                x, _, y = key.partition("->")
                Level.parse(x), Level.parse(y)
                bad = set(terms) - set(ALL_TERMS)
                if bad:
                    raise ValueError(f"unknown terms {sorted(bad)}")
        if self.study.n_days != self.n_days:
            object.__setattr__(self, "study", self.study.with_(n_days=self.n_days))

    def coef_array(self, state: str) -> np.ndarray:
        """Coefficients as ``(X, Y, term)`` with term order Intercept, L, ..., P*T."""
        out = np.zeros((3, 3, N_COEF))
        for key, terms in self.coefficients.get(state, {}).items():
            x, _, y = key.partition("->")
            for t, v in terms.items():
                out[Level.parse(x), Level.parse(y), ALL_TERMS.index(t)] = float(v)
        return out

    def to_dict(self) -> dict:
        return {
            "n_agents": self.n_agents,
            "n_days": self.n_days,
            "seed": self.seed,
            "states": list(self.states),
            "skewed_states": list(self.skewed_states),
            "contacts": asdict(self.contacts),
            "coefficients": {s: {k: dict(v) for k, v in t.items()} for s, t in self.coefficients.items()},
            "nonresponse": self.nonresponse,
            "nonresponse_mode": self.nonresponse_mode,
            "initial": list(self.initial),
            "baseline_sd": self.baseline_sd,
            "period_shift": self.period_shift,
            "start_date": self.study.start_date.isoformat(),
        }

    @classmethod
    def from_dict(cls, data: Mapping, study: StudyConfig | None = None) -> "ScenarioConfig":
        data = dict(data)
        study = study or StudyConfig()
        if "start_date" in data:
            study = study.with_(start_date=dt.date.fromisoformat(str(data.pop("start_date"))))
        if "contacts" in data:
            data["contacts"] = ContactModel(**data["contacts"])
        for key in ("states", "skewed_states", "initial"):
            if key in data:
                data[key] = tuple(data[key])
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown scenario keys {sorted(unknown)}")
        return cls(study=study, **data)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def load_scenario(path, study: StudyConfig | None = None) -> ScenarioConfig:
    """Read a scenario from a ``.json`` or ``.yaml``/``.yml`` file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    return ScenarioConfig.from_dict(data, study)


# ------------------------------------------------------------- generators


def _rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def gen_population(config: ScenarioConfig, seed: int | None = None) -> list[AgentSpec]:
    """Agents with standard-normal trait z-scores and baseline propensities."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    traits = config.study.trait_names
    z = rng.standard_normal((config.n_agents, len(traits)))
    base = rng.standard_normal((config.n_agents, len(config.states))) * config.baseline_sd
    width = max(3, len(str(config.n_agents - 1)))
    return [
        AgentSpec(
            f"p{i:0{width}d}",
            {t: float(z[i, j]) for j, t in enumerate(traits)},
            {s: float(base[i, j]) for j, s in enumerate(config.states)},
        )
        for i in range(config.n_agents)
    ]


def gen_contacts(
    levels: np.ndarray | None,
    model: ContactModel,
    rng: np.random.Generator,
    window_seconds: int,
    n_agents: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Directed contacts for one window.

    Parameters
    ----------
    levels : array of int, optional
        Start levels of the homophily state, one per agent; ignored when
        ``model.homophily == 0``.

    Returns
    -------
    ego, alter, hits : arrays of int
    """
    n = len(levels) if levels is not None else n_agents
    k = np.minimum(rng.poisson(model.mean_contacts, n), n - 1)
    if not k.any():
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, empty
    # weighted sampling without replacement via Gumbel top-k
    logw = np.zeros((n, n))
    if model.homophily > 0 and levels is not None:
        logw = np.where(levels[:, None] == levels[None, :], math.log1p(model.homophily), 0.0)
    keys = logw + rng.gumbel(size=(n, n))
    np.fill_diagonal(keys, -np.inf)
    kmax = int(k.max())
    top = np.argpartition(-keys, kmax - 1, axis=1)[:, :kmax] if kmax < n else np.argsort(-keys, axis=1)
    top = np.take_along_axis(top, np.argsort(-np.take_along_axis(keys, top, axis=1), axis=1), axis=1)
    take = np.arange(top.shape[1])[None, :] < k[:, None]
    ego = np.repeat(np.arange(n), k)
    alter = top[take]
    m, r = model.mean_hits - 1, model.dispersion
    extra = rng.negative_binomial(r, r / (r + m), ego.size) if m > 0 else np.zeros(ego.size, dtype=np.int64)
    hits = np.minimum(1 + extra, window_seconds)
    return ego.astype(np.int64), alter.astype(np.int64), hits.astype(np.int64)


def window_intensities(
    n_agents: int, ego: np.ndarray, alter: np.ndarray, hits: np.ndarray, alter_levels: np.ndarray
) -> np.ndarray:
    """``(n_agents, 3)`` hits per unique alter at each level."""
    lv = alter_levels[alter]
    idx = ego * 3 + lv
    tot = np.bincount(idx, weights=hits, minlength=3 * n_agents).reshape(n_agents, 3)
    cnt = np.bincount(idx, minlength=3 * n_agents).reshape(n_agents, 3)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(cnt > 0, tot / np.maximum(cnt, 1), 0.0)


def linear_predictors(
    coefs: np.ndarray, levels: np.ndarray, intensities: np.ndarray, traits: np.ndarray, period: int
) -> np.ndarray:
    """``eta[i, Y]`` for every agent, shape ``(n, 3)``."""
    L, N, H = intensities[:, 0], intensities[:, 1], intensities[:, 2]
    T = np.asarray(traits, dtype=float)
    P = np.full_like(T, float(period))
    cov = np.column_stack([np.ones_like(T), L, N, H, T, T * L, T * N, T * H, P, P * T])
    return np.einsum("nyk,nk->ny", coefs[levels], cov)


def softmax(eta: np.ndarray) -> np.ndarray:
    e = np.exp(eta - eta.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def step_states(
    levels: np.ndarray,
    intensities: np.ndarray,
    traits: np.ndarray,
    period: int,
    coefs: np.ndarray,
    rng: np.random.Generator,
    offset: np.ndarray | None = None,
) -> np.ndarray:
    """Sample next levels from the softmax of the transition predictors.

    ``offset`` (shape ``(n, 3)``) is added to the predictors, e.g. for
    per-agent baselines.
    """
    eta = linear_predictors(coefs, np.asarray(levels), intensities, traits, period)
    if offset is not None:
        eta = eta + offset
    p = softmax(eta)
    u = rng.random(len(levels))
    return np.minimum((u[:, None] > np.cumsum(p, axis=1)).sum(axis=1), 2).astype(np.int64)


def oracle_transition_probs(
    config: ScenarioConfig | np.ndarray,
    state: str | None,
    from_level: Level,
    intensities: Sequence[float],
    trait_z: float,
    period: int,
) -> np.ndarray:
    """Exact ``(P(L), P(N), P(H))`` for one situation."""
    coefs = config if isinstance(config, np.ndarray) else config.coef_array(state)
    eta = linear_predictors(
        coefs,
        np.array([int(Level.parse(from_level))]),
        np.asarray(intensities, dtype=float)[None, :],
        np.array([trait_z]),
        period,
    )
    return softmax(eta)[0]


# ---------------------------------------------------------------- corpus

def _sum_bands(k: int, lo: int, hi: int) -> list[tuple[int, int]]:
    """Split the attainable item sums of ``k`` items into three ordered bands."""
    edges = np.linspace(k * lo, k * hi + 1, 4)
    cuts = np.round(edges).astype(int)
    return [(int(cuts[i]), int(cuts[i + 1]) - 1) for i in range(3)]


def _items_for(state_def, level: np.ndarray, rng: np.random.Generator, skewed: bool) -> dict[str, np.ndarray]:
    """Item answers whose (reverse-keyed) mean lies in the band of ``level``.

    The attainable item-sum range is split into three non-overlapping bands,
    one per latent level, and a sum is drawn uniformly within the band.
    Several distinct means per level keep quantile cuts from collapsing a
    whole level onto a tie.
    """
    n = len(level)
    lo, hi = int(state_def.scale_min), int(state_def.scale_max)
    codes = list(state_def.all_items)
    if skewed:
        out = {}
        for code in codes:
            v = rng.integers(lo, hi + 1, n)
            out[code] = np.where(rng.random(n) < 0.8, lo, v)
        return out
    k = len(codes)
    bands = np.array(_sum_bands(k, lo, hi))
    a, b = bands[level, 0], bands[level, 1]
    extra = a + np.floor(rng.random(n) * (b - a + 1)).astype(np.int64) - k * lo
    vals = np.full((n, k), lo, dtype=np.int64)
    for _ in range(k * (hi - lo)):
        room = vals < hi
        go = (extra > 0) & room.any(axis=1)
        if not go.any():
            break
        # pick a random item with spare room for each row that still has units
        score = np.where(room, rng.random((n, k)), -1.0)
        j = score.argmax(axis=1)
        rows = np.flatnonzero(go)
        vals[rows, j[rows]] += 1
        extra[rows] -= 1
    out = {}
    for i, code in enumerate(codes):
        v = vals[:, i]
        out[code] = hi + lo - v if code in state_def.reverse_items else v
    return out


@dataclass
class SyntheticCorpus:
    """Generated corpus plus the latent truth behind it.

    ``levels[state]`` has shape ``(n_agents, n_days, 3)`` (periods);
    ``contacts`` has one row per directed contact with columns day
    (1-based), slot, ego, alter, hits (agent indices); ``responded`` is a
    boolean ``(n_agents, n_days, 3)`` array.
    """

    config: ScenarioConfig
    agents: list[AgentSpec]
    levels: dict[str, np.ndarray]
    contacts: pd.DataFrame
    responded: np.ndarray
    traits: list[TraitSurvey]
    items: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    submitted: np.ndarray | None = None
    _events: IrLog | None = None
    _surveys: list[SurveyResponse] | None = None

    @property
    def truth(self) -> ScenarioConfig:
        return self.config

    @property
    def ids(self) -> list[str]:
        return [a.agent_id for a in self.agents]

    @property
    def surveys(self) -> list[SurveyResponse]:
        """Answered surveys, ordered by participant, day and period."""
        if self._surveys is None:
            self._surveys = _materialize_surveys(self)
        return self._surveys

    @property
    def events(self) -> IrLog:
        """Per-second IR hits (materialized on first access)."""
        if self._events is None:
            self._events = _materialize_events(self)
        return self._events

    def latent_windows(self, states: Sequence[str] | None = None) -> list[EgoWindow]:
        """Ego windows built straight from the latent truth.

        Only windows whose bounding surveys were both answered are kept,
        and an alter's level is known only if the alter answered the
        window's start survey, as in the observed pipeline.
        """
        states = list(self.config.states if states is None else states)
        ids = self.ids
        resp = self.responded
        out = []
        index = {}
        for i, ego in enumerate(ids):
            for d in range(self.config.n_days):
                for slot in SLOTS:
                    k = slot.index
                    if resp[i, d, k] and resp[i, d, k + 1]:
                        w = EgoWindow(ego, d + 1, slot, {}, {s: {} for s in states})
                        out.append(w)
                        index[(i, d + 1, k)] = w
        c = self.contacts
        day, slot, e, a, h = (c[col].to_numpy() for col in ("day", "slot", "ego", "alter", "hits"))
        known = resp[a, day - 1, slot]
        lv = {s: self.levels[s][a, day - 1, slot] for s in states}
        for r, key in enumerate(zip(e.tolist(), day.tolist(), slot.tolist())):
            w = index.get(key)
            if w is None:
                continue
            alter = ids[a[r]]
            w.contacts[alter] = int(h[r])
            if known[r]:
                for s in states:
                    w.alter_levels[s][alter] = LEVELS[lv[s][r]]
        return out

    def latent_level_table(self, states: Sequence[str] | None = None) -> LevelTable:
        """Latent levels of answered surveys as a :class:`LevelTable`."""
        states = list(self.config.states if states is None else states)
        ids = self.ids
        rows = []
        ii, dd, pp = np.nonzero(self.responded)
        for state in states:
            lv = self.levels[state][ii, dd, pp]
            for i, d, p, v in zip(ii.tolist(), dd.tolist(), pp.tolist(), lv.tolist()):
                rows.append(LevelAssignment(ids[i], d + 1, PERIODS[p], state, float(v), LEVELS[v]))
        screens = {s: ScreenResult(s, True) for s in states}
        cuts = {s: QuantileCuts(s, 0.5, 1.5) for s in states}
        return LevelTable(rows, cuts, screens)

    def trait_z(self, standardized: bool = True) -> dict[tuple[str, str], float]:
        """Trait z-scores as used by the generator."""
        return _trait_matrix(self.agents, self.config.study.trait_names, standardized)[1]

    def write(self, outdir) -> dict[str, Path]:
        """Write ``ir_log.csv``, ``surveys.csv``, ``traits.csv`` and ``truth.json``."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "ir_log": outdir / "ir_log.csv",
            "surveys": outdir / "surveys.csv",
            "traits": outdir / "traits.csv",
            "truth": outdir / "truth.json",
        }
        write_ir_log(self.events, paths["ir_log"])
        write_surveys(self.surveys, paths["surveys"])
        write_traits(self.traits, paths["traits"])
        with _open_dest(paths["truth"]) as fh:
            json.dump(self.config.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths


def _trait_matrix(agents, names, standardized=True):
    z = np.array([[a.trait_z[t] for t in names] for a in agents], dtype=float)
    if standardized and len(agents) > 1:
        sd = z.std(axis=0)
        z = (z - z.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    lookup = {(a.agent_id, t): float(z[i, j]) for i, a in enumerate(agents) for j, t in enumerate(names)}
    return z, lookup


def _materialize_events(corpus: SyntheticCorpus) -> IrLog:
    cfg = corpus.config
    table = cfg.study.trigger_table
    rng = _rngs(cfg.seed, 5)[4]
    ids = np.array(corpus.ids)
    c = corpus.contacts
    ego, alter, ts = [], [], []
    for day, slot, e, a, h in zip(
        c["day"].tolist(), c["slot"].tolist(), c["ego"].tolist(), c["alter"].tolist(), c["hits"].tolist()
    ):
        start, end = table[day - 1, slot], table[day - 1, slot + 1]
        secs = start + rng.choice(end - start, size=h, replace=False)
        ts.append(secs)
        ego.append(np.full(h, e))
        alter.append(np.full(h, a))
    if not ts:
        return IrLog([], [], [])
    return IrLog(ids[np.concatenate(ego)], ids[np.concatenate(alter)], np.concatenate(ts))


def _materialize_surveys(corpus: SyntheticCorpus) -> list[SurveyResponse]:
    ids = corpus.ids
    ii, dd, pp = np.nonzero(corpus.responded)
    columns = [(code, v.tolist()) for s in corpus.config.states for code, v in corpus.items[s].items()]
    stamps = corpus.submitted[ii, dd, pp].tolist()
    out = []
    for r, (i, d, p) in enumerate(zip(ii.tolist(), dd.tolist(), pp.tolist())):
        items = {code: float(v[r]) for code, v in columns}
        out.append(SurveyResponse(ids[i], d + 1, PERIODS[p], items, dt.datetime.fromtimestamp(stamps[r], UTC)))
    return out


def run_scenario(config: ScenarioConfig) -> SyntheticCorpus:
    """Simulate a full study; deterministic in ``config`` (seed included)."""
    rng_pop, rng_contact, rng_state, rng_survey, _ = _rngs(config.seed, 5)
    agents = gen_population(config, int(rng_pop.integers(2**63)))
    n, days = config.n_agents, config.n_days
    study = config.study
    trait_names = study.trait_names
    zmat, _ = _trait_matrix(agents, trait_names)
    state_defs = study.state_map
    states = list(config.states)
    coefs = {s: config.coef_array(s) for s in states}
    tz = {s: zmat[:, trait_names.index(s)] if s in trait_names else np.zeros(n) for s in states}
    base = {
        s: np.array([a.baseline.get(s, 0.0) for a in agents])[:, None] * np.array([-1.0, 0.0, 1.0])[None, :]
        for s in states
    }
    hstate = config.contacts.homophily_state or states[0]
    table = study.trigger_table

    levels = {s: np.zeros((n, days, 3), dtype=np.int64) for s in states}
    rows = []
    for d in range(days):
        for s in states:
            levels[s][:, d, 0] = rng_state.choice(3, n, p=config.initial)
        for slot in SLOTS:
            k = slot.index
            seconds = int(table[d, k + 1] - table[d, k])
            e, a, h = gen_contacts(levels[hstate][:, d, k], config.contacts, rng_contact, seconds)
            if e.size:
                rows.append(np.column_stack([np.full(e.size, d + 1), np.full(e.size, k), e, a, h]))
            for s in states:
                cur = levels[s][:, d, k]
                inten = window_intensities(n, e, a, h, cur)
                levels[s][:, d, k + 1] = step_states(cur, inten, tz[s], slot.period_dummy, coefs[s], rng_state, base[s])
    data = np.concatenate(rows) if rows else np.empty((0, 5), dtype=np.int64)
    contacts = pd.DataFrame(data, columns=["day", "slot", "ego", "alter", "hits"]).astype(np.int64)

    # nonresponse
    if config.nonresponse_mode == "trait" and config.nonresponse > 0:
        # more conscientious agents answer more reliably
        zc = zmat[:, 0]
        logit = math.log(config.nonresponse / (1 - config.nonresponse)) if config.nonresponse < 1 else 50.0
        p_miss = 1 / (1 + np.exp(-(logit - 0.75 * zc)))
        miss = rng_survey.random((n, days, 3)) < p_miss[:, None, None]
    else:
        miss = rng_survey.random((n, days, 3)) < config.nonresponse
    responded = ~miss

    # survey items
    window = int(study.response_window.total_seconds())
    delay = rng_survey.integers(0, window + 1, (n, days, 3))
    ii, dd, pp = np.nonzero(responded)
    items_by_state = {}
    for s in states:
        sd = state_defs[s]
        lv = levels[s][ii, dd, pp]
        if config.period_shift and s not in config.skewed_states:
            # planted diurnal shift: raise afternoon levels by one step w.p. period_shift
            bump = (pp == 2) & (rng_survey.random(lv.size) < config.period_shift)
            lv = np.minimum(lv + bump, 2)
        items_by_state[s] = _items_for(sd, lv, rng_survey, s in config.skewed_states)
    submitted = np.where(responded, table[None, :, :] + delay, -1)
    traits = [TraitSurvey(a.agent_id, {t: round(4.0 + a.trait_z[t], 6) for t in trait_names}, "Begin") for a in agents]
    return SyntheticCorpus(config, agents, levels, contacts, responded, traits, items_by_state, submitted)
