# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # From sensor hits to influence labels
#
# A walk through the pipeline on a small synthetic cohort: generate a corpus,
# parse it back, quantize states into L/N/H levels, build ego windows and
# contact intensities, then fit and label one transition.

# %%
import tempfile
from pathlib import Path

import numpy as np

from sociodyn.config import Level
from sociodyn.gee import backward_eliminate
from sociodyn.influence import classify_fit
from sociodyn.network import intensity
from sociodyn.pipeline import load_corpus, prepare
from sociodyn.simulator import ContactModel, ScenarioConfig, run_scenario
from sociodyn.transitions import build_design, count_transitions, extract_transitions

# %% [markdown]
# ## A synthetic corpus
#
# 60 agents over 20 weekdays. Contact with low-extraversion alters pulls
# neutral egos down (an attraction effect on N -> L).

# %%
scenario = ScenarioConfig(
    n_agents=60,
    n_days=20,
    seed=3,
    states=("extraversion", "hpa"),
    contacts=ContactModel(3.0, 70, 0.5),
    coefficients={"extraversion": {"N->L": {"L": 0.02}}},
)
corpus = run_scenario(scenario)
workdir = Path(tempfile.mkdtemp())
paths = corpus.write(workdir)
print({k: p.name for k, p in paths.items()})
print(len(corpus.surveys), "surveys,", len(corpus.events), "IR hits")

# %% [markdown]
# ## Parse, score and window

# %%
study = scenario.study.with_(participants=tuple(corpus.ids))
parsed = load_corpus(workdir, study)
print({name: len(r) for name, r in parsed.rejects.items()})

scores, levels, traits, windows, report = prepare(parsed, study)
print("kept states:", levels.kept_states)
print("cuts:", {s: (round(c.q33, 3), round(c.q66, 3)) for s, c in levels.cuts.items() if s in levels.kept_states})
print(report)

# %%
w = next(w for w in windows if len(w.contacts) >= 3 and w.retained("extraversion"))
print(w.ego_id, w.day, w.slot, w.contacts)
print("intensity:", intensity(w, "extraversion"))

# %% [markdown]
# ## Transitions

# %%
records = extract_transitions(levels, windows, traits, "extraversion")
counts = count_transitions(records)
print(counts)
print("row shares:\n", np.round(counts / counts.sum(axis=1, keepdims=True), 3))

# %% [markdown]
# ## Fit N -> L and label the contact effects
#
# Backward elimination starts from the full model (intensities, trait,
# their interactions and the period dummy) and keeps a drop only when
# QICC improves.

# %%
design = build_design(records, Level.N, Level.L)
fit, trace = backward_eliminate(design)
print("selected:", fit.terms)
print("chosen:", trace.chosen, "QICC", round(trace.submodel_qicc, 2), "null", round(trace.null_qicc, 2))
for lab in classify_fit(fit, "extraversion", Level.N, Level.L):
    print(lab.alter_level.name, lab.trait_class, lab.slope_sign, lab.effect)
