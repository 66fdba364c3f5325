"""Command-line entry point wiring all modules together.

Every subcommand that writes outputs also writes a run manifest (flags,
input hashes, seed, version, wall time) next to them, and all files go
through atomic temp-then-rename writes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import sys
import time

import click
import numpy as np

from . import __version__
from . import analysis as analysis_mod
from . import evaluation, glm, scheduler, synth
from . import fm as fm_mod
from .corpus import (dataset_stats, load_interactions, load_prepared,
                     load_qmatrix_triplets, preprocess, save_dataset)
from .encoder import (ModelSpec, WindowSet, encode_dataset, load_design,
                      save_design)
from .errors import SkillmemError
from .modelio import ModelFile, atomic_write_text, load_model, save_model

log = logging.getLogger("skillmem")

_FAMILY_ALIASES = {
    "irt": "irt", "mirtb": "mirtb", "afm": "afm", "pfa": "pfa",
    "dash-items": "dash_items", "dash_items": "dash_items",
    "dash-kc": "dash_kc", "dash_kc": "dash_kc",
    "das3h": "das3h", "das3h-1p": "das3h_1p", "das3h_1p": "das3h_1p",
    "das3h-plaincounts": "das3h_plaincounts",
    "das3h_plaincounts": "das3h_plaincounts",
}


def _family(name):
    key = name.strip().lower()
    if key not in _FAMILY_ALIASES:
        raise click.UsageError(f"unknown model family {name!r}")
    return _FAMILY_ALIASES[key]


def _windows(text):
    widths = tuple(math.inf if w.strip().lower() in ("inf", "+inf") else float(w)
                   for w in text.split(","))
    return WindowSet(widths)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command, params, inputs, seed, started):
    manifest = {
        "command": command,
        "flags": {k: v for k, v in params.items() if v is not None},
        "input_hashes": {p: _sha256(p) for p in inputs if os.path.exists(p)},
        "seed": seed,
        "version": __version__,
        "wall_time_s": round(time.time() - started, 3),
    }
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "manifest.json"),
                      json.dumps(manifest, indent=2))


def _out_dir_of(path):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    return d


@click.group()
@click.option("--log-level", default="warning",
              type=click.Choice(["debug", "info", "warning", "error"]))
@click.version_option(__version__)
def main(log_level):
    logging.basicConfig(level=log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="generic",
              type=click.Choice(["generic", "assist12", "kddcup"]))
@click.option("--min-interactions", default=10, show_default=True)
@click.option("--qmatrix", "qmatrix_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def prepare(in_path, fmt, min_interactions, qmatrix_path, out_path):
    """Load, clean and rebase a raw interaction log."""
    started = time.time()
    ds = load_interactions(in_path, fmt)
    if qmatrix_path:
        from .corpus import QMatrix
        qm = load_qmatrix_triplets(qmatrix_path)
        ds.qmatrix = QMatrix(ds.qmatrix.entries() | qm.entries())
    ds = preprocess(ds, min_interactions)
    save_dataset(ds, out_path)
    report = dataset_stats(ds)
    atomic_write_text(out_path + ".stats.json", report.to_json())
    write_manifest(_out_dir_of(out_path), "prepare",
                   {"in": in_path, "format": fmt,
                    "min_interactions": min_interactions, "out": out_path},
                   [in_path], seed=None, started=started)
    click.echo(report.to_json())


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
def stats(in_path):
    """Dataset statistics for a prepared dataset."""
    ds = load_prepared(in_path)
    click.echo(dataset_stats(ds).to_json())


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--model", "family", default="das3h", show_default=True)
@click.option("--dim", default=0, show_default=True)
@click.option("--windows", default="0.0417,1,7,30,inf", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def encode(in_path, family, dim, windows, out_path):
    """Encode a prepared dataset into a sparse design matrix."""
    started = time.time()
    spec = ModelSpec(_family(family), dim, _windows(windows))
    ds = load_prepared(in_path)
    dm = encode_dataset(ds, spec)
    save_design(dm, out_path)
    write_manifest(_out_dir_of(out_path), "encode",
                   {"in": in_path, "model": family, "dim": dim,
                    "windows": windows, "out": out_path},
                   [in_path], seed=None, started=started)
    click.echo(f"encoded {dm.n_rows} rows x {dm.layout.n_features} features")


@main.command()
@click.option("--encoded", required=True, type=click.Path(exists=True))
@click.option("--l2", default=1.0, show_default=True)
@click.option("--dim", default=None, type=int,
              help="override the spec's embedding dimension")
@click.option("--iters", default=300, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def train(encoded, l2, dim, iters, seed, out_path):
    """Fit a model on an encoded design matrix."""
    started = time.time()
    dm = load_design(encoded)
    d = dm.spec.dim if dim is None else dim
    if d == 0:
        cfg = glm.FitConfig(l2_strength=l2, seed=seed)
        params = glm.fit_logistic(dm.X, dm.y, cfg)
        training_config = {"l2": l2, "seed": seed,
                           "converged": params.converged}
    else:
        cfg = fm_mod.GibbsConfig(iterations=iters, seed=seed)
        params = fm_mod.fit_fm_gibbs(dm.X, dm.y, d, cfg,
                                     groups=dm.layout.group_of_feature())
        training_config = {"iterations": iters, "seed": seed}
    save_model(ModelFile(spec=dm.spec, layout=dm.layout, params=params,
                         training_config=training_config), out_path)
    write_manifest(_out_dir_of(out_path), "train",
                   {"encoded": encoded, "l2": l2, "dim": d, "iters": iters,
                    "out": out_path},
                   [encoded], seed=seed, started=started)
    click.echo(f"model written to {out_path}")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--models", default="irt,pfa,das3h", show_default=True)
@click.option("--dims", default="0", show_default=True)
@click.option("--folds", default=5, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--l2", default=1.0, show_default=True)
@click.option("--iters", default=300, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def cv(in_path, models, dims, folds, seed, l2, iters, out_dir):
    """Student-level k-fold cross-validation over model families."""
    started = time.time()
    ds = load_prepared(in_path)
    specs = []
    for fam in models.split(","):
        for d in dims.split(","):
            d = int(d)
            family = _family(fam)
            if family == "irt" and d > 0:
                family = "mirtb"
            if family == "mirtb" and d == 0:
                family = "irt"
            specs.append(ModelSpec(family, d))
    os.makedirs(os.path.join(out_dir, "models"), exist_ok=True)

    def sink(label, fold, fitted, dm):
        name = label.replace("(", "_").replace(")", "").replace("=", "")
        save_model(ModelFile(spec=dm.spec, layout=dm.layout, params=fitted,
                             training_config={"fold": fold}),
                   os.path.join(out_dir, "models", f"{name}_fold{fold}.json"))

    table = evaluation.cross_validate(
        ds, specs, k=folds, seed=seed,
        glm_config=glm.FitConfig(l2_strength=l2, seed=seed),
        gibbs_config=fm_mod.GibbsConfig(iterations=iters, seed=seed),
        model_sink=sink)
    atomic_write_text(os.path.join(out_dir, "metrics.json"), table.to_json())
    atomic_write_text(os.path.join(out_dir, "metrics.txt"),
                      table.format_table() + "\n")
    write_manifest(out_dir, "cv",
                   {"in": in_path, "models": models, "dims": dims,
                    "folds": folds, "l2": l2, "iters": iters, "out": out_dir},
                   [in_path], seed=seed, started=started)
    click.echo(table.format_table())


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--seed", default=42, show_default=True)
@click.option("--folds", default=5, show_default=True)
@click.option("--l2", default=1.0, show_default=True)
@click.option("--out", "out_dir", default="ablation_out", show_default=True)
def ablate(in_path, seed, folds, l2, out_dir):
    """Paired ablation comparisons on per-fold AUC."""
    started = time.time()
    ds = load_prepared(in_path)
    report = evaluation.ablation_suite(
        ds, seed=seed, k=folds,
        glm_config=glm.FitConfig(l2_strength=l2, seed=seed))
    os.makedirs(out_dir, exist_ok=True)
    report.write_csv(os.path.join(out_dir, "ablation_folds.csv"))
    atomic_write_text(os.path.join(out_dir, "ablation_deltas.json"),
                      json.dumps(report.deltas(), indent=2))
    write_manifest(out_dir, "ablate",
                   {"in": in_path, "folds": folds, "l2": l2, "out": out_dir},
                   [in_path], seed=seed, started=started)
    click.echo(json.dumps(report.deltas(), indent=2))


@main.group()
def analyze():
    """Post-fit model interpretation."""


@analyze.command()
@click.option("--model-dir", required=True, type=click.Path(exists=True))
@click.option("--pairs", default="adjacent",
              type=click.Choice(["adjacent", "all"]), show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def slopes(model_dir, pairs, out_path):
    """Forgetting-curve slopes from per-fold dim=0 das3h models."""
    started = time.time()
    models, layouts = [], []
    for name in sorted(os.listdir(model_dir)):
        if not name.endswith(".json") or name == "manifest.json":
            continue
        mf = load_model(os.path.join(model_dir, name))
        if mf.kind == "linear" and mf.spec.family == "das3h":
            models.append(mf.params)
            layouts.append(mf.layout)
    if not models:
        raise click.UsageError("no linear das3h models found in --model-dir")
    report = analysis_mod.slope_report(models, layouts, pair_mode=pairs)
    report.write_csv(out_path)
    atomic_write_text(out_path + ".json", report.to_json())
    write_manifest(_out_dir_of(out_path), "analyze slopes",
                   {"model_dir": model_dir, "pairs": pairs, "out": out_path},
                   [], seed=None, started=started)
    click.echo(f"slopes for {len(report.entries)} skills -> {out_path}")


@analyze.command()
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True))
@click.option("--history", "history_path", required=True,
              type=click.Path(exists=True))
@click.option("--skills", required=True, help="comma-separated skill ids")
@click.option("--item", default=None)
@click.option("--at-day", "at_day", required=True, type=float)
def recall(model_path, history_path, skills, item, at_day):
    """Recall probability for a skill set at a future day."""
    mf = load_model(model_path)
    hist_ds = load_interactions(history_path, fmt="generic")
    history = [r for rows in hist_ds.interactions.values() for r in rows]
    p = analysis_mod.recall_probability(
        mf, history, skills.split(","), at_day, item=item,
        qmatrix=hist_ds.qmatrix)
    click.echo(json.dumps({"skills": skills.split(","), "at_day": at_day,
                           "recall_probability": p}))


@main.command("schedule-sim")
@click.option("--model", "model_path", type=click.Path(exists=True),
              help="fitted model for the threshold policy; defaults to the "
                   "synthetic ground truth")
@click.option("--policy", default="threshold,random", show_default=True)
@click.option("--threshold", default=0.7, show_default=True)
@click.option("--horizon", default=60.0, show_default=True)
@click.option("--sessions", default=30, show_default=True)
@click.option("--seeds", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def schedule_sim(model_path, policy, threshold, horizon, sessions, seeds,
                 seed, out_path):
    """Compare scheduling policies on a synthetic forgetful student."""
    started = time.time()
    ds, truth = synth.make_synthetic(synth.SynthConfig(seed=seed))
    mf = load_model(model_path) if model_path else truth.to_model_file(ds)
    config = scheduler.SchedulerConfig(
        threshold=threshold, skills=truth.qmatrix.skills,
        qmatrix=truth.qmatrix)
    policies = {}
    for name in policy.split(","):
        name = name.strip()
        if name == "threshold":
            policies[name] = scheduler.threshold_policy(mf, config)
        elif name == "random":
            policies[name] = scheduler.random_policy(truth.qmatrix.items)
        else:
            raise click.UsageError(f"unknown policy {name!r}")
    session_times = np.linspace(0, horizon * 0.8, sessions).tolist()
    result = scheduler.simulate_policy(
        truth, policies, session_times, horizon, seeds=range(seeds))
    result.write_csv(out_path)
    write_manifest(_out_dir_of(out_path), "schedule-sim",
                   {"policy": policy, "threshold": threshold,
                    "horizon": horizon, "seeds": seeds, "out": out_path},
                   [model_path] if model_path else [], seed=seed,
                   started=started)
    for name in policies:
        click.echo(f"{name}: mean end-horizon recall "
                   f"{result.mean_recall(name):.4f}")


def run(argv=None):
    """Programmatic entry point returning an exit code."""
    try:
        return main.main(args=argv, standalone_mode=False) or 0
    except click.UsageError as exc:
        click.echo(f"usage-error: {exc.format_message()}", err=True)
        return 2
    except SkillmemError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(run())
