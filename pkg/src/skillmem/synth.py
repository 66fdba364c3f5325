"""Synthetic interaction generator with known ground-truth parameters.

The generator draws labels from a linear (dim=0) das3h scorer with genuine
forgetting: win weights are largest for the shortest windows, so recent
practice helps more than old practice. It is used for the bundled fixture,
recovery tests and scheduler simulations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Dataset, Interaction, QMatrix
from .encoder import (DEFAULT_WINDOWS, ModelSpec, WindowSet, build_layout,
                      window_counts)
from .glm import LinearParams, sigmoid
from .modelio import ModelFile


@dataclass
class SynthConfig:
    n_students: int = 20
    n_items: int = 12
    n_skills: int = 3
    interactions_per_student: int = 12
    horizon_days: float = 60.0
    multi_skill_fraction: float = 0.25
    windows: WindowSet = field(default_factory=WindowSet)
    user_sd: float = 0.3
    item_sd: float = 0.3
    skill_mean: float = 0.2
    skill_sd: float = 0.2
    # per-window win weights, shortest window first; jittered per skill
    win_weights: tuple = (1.2, 0.9, 0.6, 0.3, 0.1)
    win_jitter: float = 0.3
    attempt_weights: tuple = (-0.1, -0.1, -0.1, -0.1, -0.1)
    # optional non-uniform primary-skill assignment probabilities for items
    item_skill_probs: tuple | None = None
    seed: int = 0


@dataclass
class SyntheticModel:
    """Ground-truth linear das3h parameters in weight space."""

    user_w: dict
    item_w: dict
    skill_w: dict
    win_w: dict      # skill -> per-window weight list
    att_w: dict
    windows: WindowSet
    qmatrix: QMatrix

    def logit(self, student, item, history_by_skill, t, skills=None):
        """True score; `history_by_skill` maps skill -> [(time, correct)]."""
        skills = sorted(skills if skills is not None
                        else self.qmatrix.skills_of(item))
        z = self.user_w.get(student, 0.0) + self.item_w.get(item, 0.0)
        for k in skills:
            z += self.skill_w[k]
            a, c = window_counts(history_by_skill.get(k, []), t, self.windows)
            for w in range(len(self.windows)):
                z += self.win_w[k][w] * math.log1p(c[w])
                z += self.att_w[k][w] * math.log1p(a[w])
        return z

    def prob(self, student, item, history_by_skill, t, skills=None):
        return float(sigmoid(self.logit(student, item, history_by_skill, t,
                                        skills)))

    def to_model_file(self, dataset):
        """Pack the true parameters as a fitted-model container."""
        spec = ModelSpec("das3h", 0, self.windows)
        layout = build_layout(spec, dataset)
        W = len(self.windows)
        weights = np.zeros(layout.n_features)
        for i, s in enumerate(layout.students):
            weights[layout.offset("users") + i] = self.user_w.get(s, 0.0)
        for i, j in enumerate(layout.items):
            weights[layout.offset("items") + i] = self.item_w.get(j, 0.0)
        for i, k in enumerate(layout.skills):
            weights[layout.offset("skills") + i] = self.skill_w[k]
            for w in range(W):
                weights[layout.offset("wins") + i * W + w] = self.win_w[k][w]
                weights[layout.offset("attempts") + i * W + w] = self.att_w[k][w]
        params = LinearParams(weights=weights, intercept=0.0, l2_strength=0.0)
        return ModelFile(spec=spec, layout=layout, params=params,
                         training_config={"generator": "synthetic-truth"})


def _draw_session_times(rng, n, horizon):
    """Practice times mixing within-session minutes and multi-day gaps."""
    gaps = np.where(
        rng.uniform(size=n) < 0.6,
        rng.exponential(0.02, size=n),   # ~30 min within a session
        rng.exponential(3.0, size=n),    # days between sessions
    )
    t = np.concatenate([[0.0], np.cumsum(gaps)[:-1]])
    scale = horizon / max(t[-1], 1e-9) if t[-1] > horizon else 1.0
    return t * scale


def make_synthetic(config=None):
    """Generate (Dataset, SyntheticModel) from known parameters."""
    config = config or SynthConfig()
    rng = np.random.default_rng(config.seed)
    W = len(config.windows)
    students = [f"s{i:03d}" for i in range(config.n_students)]
    items = [f"i{j:03d}" for j in range(config.n_items)]
    skills = [f"k{k}" for k in range(config.n_skills)]

    entries = set()
    for j, item in enumerate(items):
        if config.item_skill_probs is not None and j >= config.n_skills:
            primary = skills[int(rng.choice(config.n_skills,
                                            p=config.item_skill_probs))]
        else:
            primary = skills[j % config.n_skills]  # every skill covered once
        entries.add((item, primary))
        if rng.uniform() < config.multi_skill_fraction and config.n_skills > 1:
            other = skills[int(rng.integers(config.n_skills))]
            entries.add((item, other))
    qm = QMatrix(entries)

    win_base = np.asarray(config.win_weights[:W], dtype=float)
    att_base = np.asarray(config.attempt_weights[:W], dtype=float)
    truth = SyntheticModel(
        user_w={s: float(rng.normal(0, config.user_sd)) for s in students},
        item_w={j: float(rng.normal(0, config.item_sd)) for j in items},
        skill_w={k: float(rng.normal(config.skill_mean, config.skill_sd))
                 for k in skills},
        win_w={k: (win_base * np.exp(rng.normal(0, config.win_jitter, W))).tolist()
               for k in skills},
        att_w={k: att_base.tolist() for k in skills},
        windows=config.windows,
        qmatrix=qm,
    )

    interactions = {}
    for s in students:
        times = _draw_session_times(rng, config.interactions_per_student,
                                    config.horizon_days)
        hist = {}
        rows = []
        for t in times:
            item = items[int(rng.integers(config.n_items))]
            p = truth.prob(s, item, hist, float(t))
            correct = int(rng.uniform() < p)
            row_skills = tuple(sorted(qm.skills_of(item)))
            rows.append(Interaction(s, item, float(t), correct, row_skills))
            for k in row_skills:
                hist.setdefault(k, []).append((float(t), correct))
        interactions[s] = rows
    return Dataset(interactions, qm, preprocessed=True), truth
