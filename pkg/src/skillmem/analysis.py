"""Post-fit interpretation: forgetting-curve slopes and recall queries.

Both functions are read-only over fitted models. Slopes are closed-form
readouts of linear (dim=0) das3h weights: the probability drop when a single
past win ages out of one time window, everything else held at a documented
reference operating point.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import Interaction
from .encoder import SparseVector, _Counter, encode_row
from .errors import ConfigError
from .fm import FMFit, fm_score, probit
from .glm import LinearParams, sigmoid

LOG2 = math.log(2.0)


@dataclass
class SlopeEntry:
    skill: str
    mean_drop_pct: float
    std_pct: float
    n_folds: int
    n_pairs: int
    unseen: bool = False


@dataclass
class SlopeReport:
    entries: list[SlopeEntry] = field(default_factory=list)
    pair_mode: str = "adjacent"

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["skill_id", "mean_drop_pct", "std", "n_folds",
                        "n_pairs", "unseen"])
            for e in self.entries:
                w.writerow([e.skill, e.mean_drop_pct, e.std_pct, e.n_folds,
                            e.n_pairs, int(e.unseen)])

    def to_json(self):
        return json.dumps({
            "pair_mode": self.pair_mode,
            "entries": [e.__dict__ for e in self.entries],
        }, indent=2)


def _window_weight_pairs(params, layout, skill_idx, W):
    """(win_weight + attempt_weight) per window for one skill, dim=0 das3h."""
    w_off = layout.offset("wins")
    a_off = layout.offset("attempts")
    base = skill_idx * W
    return [params.weights[w_off + base + w] + params.weights[a_off + base + w]
            for w in range(W)]


def forgetting_slope(models, layouts, skill, pair_mode="adjacent"):
    """Mean correctness-probability drop (percentage points) when one win
    leaves a single time window, for one skill, averaged over window
    transitions and over the per-fold models.

    Reference operating point: one win / one attempt present in every window,
    user and item biases at their fitted means, the skill's own easiness bias
    active. `pair_mode` is "adjacent" (a win ages from window w into w+1) or
    "all" (every ordered window pair, the win leaving all windows between).
    """
    if pair_mode not in ("adjacent", "all"):
        raise ConfigError(f"unknown pair_mode {pair_mode!r}")
    per_fold = []
    n_pairs = 0
    seen = False
    for params, layout in zip(models, layouts):
        if not isinstance(params, LinearParams):
            raise ConfigError("forgetting_slope needs dim=0 (linear) models")
        if skill not in layout.skills:
            continue
        seen = True
        k = layout.skills.index(skill)
        W = layout.size("wins") // len(layout.skills)
        pair_w = _window_weight_pairs(params, layout, k, W)
        user_mean = float(np.mean(params.weights[
            layout.offset("users"):layout.offset("users") + layout.size("users")]))
        item_mean = float(np.mean(params.weights[
            layout.offset("items"):layout.offset("items") + layout.size("items")]))
        beta = params.weights[layout.offset("skills") + k]
        z = (params.intercept + user_mean + item_mean + beta
             + LOG2 * sum(pair_w))
        drops = []
        if pair_mode == "adjacent":
            transitions = [(w, w + 1) for w in range(W - 1)]
        else:
            transitions = [(w1, w2) for w1 in range(W) for w2 in range(w1 + 1, W)]
        for w1, w2 in transitions:
            delta = LOG2 * sum(pair_w[w1:w2])
            drops.append(sigmoid(z) - sigmoid(z - delta))
        n_pairs = len(drops)
        per_fold.append(100.0 * float(np.mean(drops)))
    if not seen:
        warnings.warn(f"skill {skill!r} unseen in training; slope undefined")
        return SlopeEntry(skill, float("nan"), float("nan"), 0, 0, unseen=True)
    return SlopeEntry(
        skill=skill,
        mean_drop_pct=float(np.mean(per_fold)),
        std_pct=float(np.std(per_fold)),
        n_folds=len(per_fold),
        n_pairs=n_pairs,
    )


def slope_report(models, layouts, pair_mode="adjacent"):
    skills = sorted({k for lay in layouts for k in lay.skills})
    return SlopeReport(
        entries=[forgetting_slope(models, layouts, k, pair_mode) for k in skills],
        pair_mode=pair_mode,
    )


def recall_probability(model, history, skills, query_time, item=None,
                       qmatrix=None):
    """Probability of answering correctly a virtual item over `skills` at
    `query_time`, given the student's prior history.

    History events strictly after `query_time` are ignored. When `item` is
    None, the item bias is proxied by the mean fitted bias over the items
    tagged with the queried skills (all items if no q-matrix is supplied).
    """
    skills = sorted(set(skills))
    if not skills:
        raise ConfigError("empty skill set")
    layout, spec, params = model.layout, model.spec, model.params
    unknown = [k for k in skills if k not in layout.skills]
    if unknown:
        raise ConfigError(f"skills not in model: {unknown}")

    prior = sorted((r for r in history if r.timestamp <= query_time),
                   key=lambda r: r.timestamp)
    student = prior[0].student if prior else None
    counters = {}
    for r in prior:
        if spec.family == "dash_items":
            keys = [("item", r.student, r.item)]
        else:
            keys = [("skill", r.student, k) for k in (r.skills or ())]
        for key in keys:
            counters.setdefault(key, _Counter()).push(r.timestamp, r.correct)

    user_idx = (layout.students.index(student)
                if student is not None and student in layout.students else None)
    if item is not None:
        if item not in layout.items:
            raise ConfigError(f"item {item!r} not in model")
        item_idx = layout.items.index(item)
        proxy = 0.0
    else:
        item_idx = None
        off, size = layout.blocks["items"]
        if qmatrix is not None:
            pool = [i for i, it in enumerate(layout.items)
                    if qmatrix.skills_of(it) & set(skills)]
        else:
            pool = list(range(size))
        if isinstance(params, LinearParams):
            proxy = float(np.mean(params.weights[off + np.asarray(pool)])) if pool else 0.0
        else:
            fp = params.posterior_mean if isinstance(params, FMFit) else params
            proxy = float(np.mean(fp.linear_weights[off + np.asarray(pool)])) if pool else 0.0

    skill_idx = {k: i for i, k in enumerate(layout.skills)}
    virtual = Interaction(student or "?", item or "?", query_time, 0,
                          tuple(skills))
    idx, val = encode_row(virtual, skills, layout, spec, counters,
                          user_idx, item_idx, skill_idx)
    row = SparseVector(indices=idx, values=val)
    if isinstance(params, LinearParams):
        z = float(params.weights[idx] @ val) + params.intercept + proxy
        return float(sigmoid(z))
    fp = params.posterior_mean if isinstance(params, FMFit) else params
    return float(probit(fm_score(fp, row) + proxy))
