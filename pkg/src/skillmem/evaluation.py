"""Metrics and the k-fold student-level evaluation protocol.

Cross-validation splits at the student level: all rows of a student land in
one fold, so test students are never seen at training time. History counters
are per-student, so encoding the full dataset once yields exactly the rows
each fold needs.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import fm as fm_mod
from . import glm
from .corpus import student_kfold
from .encoder import ModelSpec, encode_dataset
from .errors import MetricError

EPS = 1e-12


def auc(scores, labels):
    """P(random positive ranked above random negative); ties count 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined: only one class present")
    ranks = rankdata(scores)  # average ranks handle ties as 1/2
    return float((np.sum(ranks[labels == 1]) - n_pos * (n_pos + 1) / 2)
                 / (n_pos * n_neg))


def nll(probs, labels):
    """Mean negative log-likelihood; probabilities clipped to [eps, 1-eps]."""
    p = np.clip(np.asarray(probs, dtype=float), EPS, 1 - EPS)
    y = np.asarray(labels, dtype=float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def accuracy(probs, labels, threshold=0.5):
    """Thresholded agreement rate; ties at the threshold predict positive."""
    pred = np.asarray(probs, dtype=float) >= threshold
    return float(np.mean(pred == (np.asarray(labels) == 1)))


@dataclass
class FoldResult:
    fold: int
    auc: float | None
    nll: float
    acc: float
    n_test: int


@dataclass
class MetricsTable:
    """Per-(family, dim) fold metrics plus mean/std aggregates."""

    results: dict[str, list[FoldResult]] = field(default_factory=dict)
    k: int = 5
    seed: int = 0

    def add(self, label, fold_result):
        self.results.setdefault(label, []).append(fold_result)

    def aggregate(self):
        out = {}
        for label, folds in self.results.items():
            aucs = [f.auc for f in folds if f.auc is not None]
            nlls = [f.nll for f in folds]
            accs = [f.acc for f in folds]
            out[label] = {
                "auc_mean": float(np.mean(aucs)) if aucs else None,
                "auc_std": float(np.std(aucs)) if aucs else None,
                "nll_mean": float(np.mean(nlls)),
                "nll_std": float(np.std(nlls)),
                "acc_mean": float(np.mean(accs)),
                "acc_std": float(np.std(accs)),
                "folds_with_auc": len(aucs),
            }
        return out

    def to_json(self):
        return json.dumps({
            "k": self.k, "seed": self.seed,
            "aggregate": self.aggregate(),
            "folds": {label: [f.__dict__ for f in folds]
                      for label, folds in self.results.items()},
        }, indent=2)

    def format_table(self):
        agg = self.aggregate()
        lines = [f"{'model':<24} {'AUC':>16} {'NLL':>16} {'ACC':>16}"]
        order = sorted(agg, key=lambda l: -(agg[l]["auc_mean"] or 0.0))
        for label in order:
            a = agg[label]
            auc_s = ("--" if a["auc_mean"] is None
                     else f"{a['auc_mean']:.3f} +/- {a['auc_std']:.3f}")
            lines.append(
                f"{label:<24} {auc_s:>16} "
                f"{a['nll_mean']:.3f} +/- {a['nll_std']:.3f} "
                f"{a['acc_mean']:.3f} +/- {a['acc_std']:.3f}")
        return "\n".join(lines)


def _fit_and_score(dm, train_mask, test_mask, glm_config, gibbs_config):
    """Fit one model on the train rows, return test probabilities."""
    X_train = dm.X[train_mask]
    y_train = dm.y[train_mask]
    X_test = dm.X[test_mask]
    if dm.spec.dim == 0:
        params = glm.fit_logistic(X_train, y_train, glm_config)
        return glm.predict_proba(params, X_test), params
    cfg = gibbs_config or fm_mod.GibbsConfig()
    fit = fm_mod.fit_fm_gibbs(
        X_train, y_train, dm.spec.dim, cfg,
        groups=dm.layout.group_of_feature(), eval_X=X_test)
    return fit.eval_probs, fit


def cross_validate(dataset, specs, k=5, seed=0, glm_config=None,
                   gibbs_config=None, model_sink=None):
    """Student-level k-fold CV over a list of ModelSpec; returns MetricsTable.

    `model_sink(label, fold, fitted, dm)` receives every fitted model when
    given, along with the design matrix it was trained on.
    """
    folds = student_kfold(dataset, k, seed)
    table = MetricsTable(k=k, seed=seed)
    for spec in specs:
        dm = encode_dataset(dataset, spec)
        fold_of_row = np.array([folds.fold_of_student[s] for s in dm.students])
        for fold in range(k):
            test_mask = fold_of_row == fold
            train_mask = ~test_mask
            probs, fitted = _fit_and_score(dm, train_mask, test_mask,
                                           glm_config, gibbs_config)
            y_test = dm.y[test_mask]
            try:
                fold_auc = auc(probs, y_test)
            except MetricError:
                warnings.warn(
                    f"{spec.label} fold {fold}: single-class test labels, "
                    "AUC undefined; excluded from the mean")
                fold_auc = None
            table.add(spec.label, FoldResult(
                fold=fold, auc=fold_auc, nll=nll(probs, y_test),
                acc=accuracy(probs, y_test), n_test=int(test_mask.sum())))
            if model_sink is not None:
                model_sink(spec.label, fold, fitted, dm)
    return table


@dataclass
class AblationReport:
    """Three paired comparisons with per-fold AUC deltas."""

    pairs: list  # (name, label_a, label_b)
    table: MetricsTable

    def deltas(self):
        out = {}
        for name, a, b in self.pairs:
            folds_a = {f.fold: f.auc for f in self.table.results[a]}
            folds_b = {f.fold: f.auc for f in self.table.results[b]}
            ds = [folds_a[i] - folds_b[i] for i in sorted(folds_a)
                  if folds_a[i] is not None and folds_b.get(i) is not None]
            out[name] = {
                "per_fold": ds,
                "mean": float(np.mean(ds)) if ds else None,
                "std": float(np.std(ds)) if ds else None,
            }
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "fold", "auc"])
            for label, folds in self.table.results.items():
                for f in folds:
                    w.writerow([label, f.fold, "" if f.auc is None else f.auc])


def ablation_suite(dataset, seed=0, k=5, dim=0, glm_config=None,
                   gibbs_config=None):
    """The three paired comparisons: windowed-vs-plain counts, per-skill vs
    shared window weights, item-keyed vs skill-keyed history."""
    specs = [
        ModelSpec("das3h", dim),
        ModelSpec("das3h_plaincounts", dim),
        ModelSpec("das3h_1p", dim),
        ModelSpec("dash_items", dim),
        ModelSpec("dash_kc", dim),
    ]
    table = cross_validate(dataset, specs, k=k, seed=seed,
                           glm_config=glm_config, gibbs_config=gibbs_config)
    d = f"(d={dim})"
    pairs = [
        ("windowed_vs_plain", f"das3h{d}", f"das3h_plaincounts{d}"),
        ("per_skill_vs_shared", f"das3h{d}", f"das3h_1p{d}"),
        ("items_vs_kc", f"dash_items{d}", f"dash_kc{d}"),
    ]
    return AblationReport(pairs=pairs, table=table)
