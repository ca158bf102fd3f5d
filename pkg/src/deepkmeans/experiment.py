"""Seeded experiment runs on disk: datasets from config, run directories, evaluation and line search."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .clustering import save_representatives
from .config import ExperimentConfig, dump_config
from .data import (
    LabeledDataset,
    export_embeddings,
    load_dense_csv,
    load_idx_images,
    load_term_counts,
    make_blobs,
    read_labels,
    subsample,
    tfidf_select,
    validation_split,
    write_labels,
)
from .errors import FormatError
from .evaluation import (
    MetricSample,
    accuracy_hungarian,
    aggregate,
    clustering_scores,
    contingency,
    write_report_json,
    write_runs_csv,
)
from .nn import encode, save_checkpoint
from .training import RunRecord, TrainPlan, pretrained_network, run_variant

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def load_dataset(cfg: ExperimentConfig) -> LabeledDataset:
    if cfg.kind == "blobs":
        ds = make_blobs(cfg.blob_n_per_cluster, cfg.n_clusters, cfg.blob_dim, cfg.blob_spread,
                        cfg.blob_sigma, cfg.blob_seed)
    elif cfg.kind == "csv":
        ds = load_dense_csv(cfg.path, has_labels=cfg.has_labels)
        if cfg.labels_path:
            ds = LabeledDataset(ds.samples, read_labels(cfg.labels_path), ds.name, ds.provenance)
    elif cfg.kind == "idx":
        ds = load_idx_images(cfg.path, cfg.labels_path or None, cfg.normalization)
    else:
        labels = read_labels(cfg.labels_path) if cfg.labels_path else None
        ds = tfidf_select(load_term_counts(cfg.path, n_docs=None if labels is None else len(labels)),
                          cfg.top_k, labels, Path(cfg.path).name)
    if cfg.subsample:
        ds = subsample(ds, cfg.subsample, cfg.split_seed)
    return ds


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_trace(path: Path, record: RunRecord) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "alpha", "total", "reconstruction", "clustering"])
        for s in record.trace:
            w.writerow([s.epoch, repr(s.alpha), repr(s.total), repr(s.reconstruction), repr(s.clustering)])


def _write_pretrain_trace(path: Path, trace: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "reconstruction"])
        for e, v in enumerate(trace):
            w.writerow([e, repr(float(v))])


def _manifest(cfg: ExperimentConfig, ds: LabeledDataset, plan: TrainPlan, kind: str) -> dict:
    return {
        "kind": kind,
        "variant": plan.variant,
        "seed": plan.seed,
        "lambda": plan.lam,
        "n_samples": len(ds),
        "split_seed": cfg.split_seed,
        "dataset": {"name": ds.name, "fingerprint": ds.fingerprint(), "provenance": ds.provenance},
        "plan": {
            "batch_size": plan.batch_size, "learning_rate": plan.learning_rate,
            "pretrain_epochs": plan.pretrain_epochs, "weight_decay": plan.weight_decay,
            "alpha_terms": plan.schedule.terms, "epochs_per_alpha": plan.schedule.epochs_per_term,
        },
        "architecture": {"hidden": list(cfg.hidden), "embedding_dim": cfg.embedding_dim or cfg.n_clusters,
                         "distance": cfg.distance, "membership": cfg.membership},
        "config": dump_config(cfg),
    }


def run_dir_name(variant: str, seed: int) -> str:
    return f"{variant}_seed{seed}"


def fit(cfg: ExperimentConfig, ds: LabeledDataset, seed: int, lam: float | None = None,
        pretrained=None) -> RunRecord:
    plan = cfg.plan(seed, lam)
    return run_variant(ds.samples, cfg.n_clusters, plan, cfg.hidden, cfg.embedding_dim,
                       cfg.distance, cfg.membership, pretrained)


def train_runs(cfg: ExperimentConfig, ds: LabeledDataset | None = None) -> list[Path]:
    """Train one run per configured seed and write each into its own directory."""
    ds = load_dataset(cfg) if ds is None else ds
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg))
    dirs = []
    for seed in cfg.seeds:
        plan = cfg.plan(seed)
        record = fit(cfg, ds, seed)
        log.info("%s seed %d finished in %.1fs", plan.variant, seed, record.duration)
        d = out / run_dir_name(plan.variant, seed)
        d.mkdir(exist_ok=True)
        _write_json(d / MANIFEST, _manifest(cfg, ds, plan, "train"))
        _write_trace(d / "trace.csv", record)
        if record.pretrain_trace:
            _write_pretrain_trace(d / "pretrain_trace.csv", record.pretrain_trace)
        write_labels(d / "assignments.txt", record.assignment)
        save_representatives(d / "representatives.csv", record.representatives)
        export_embeddings(d / "embeddings.csv", record.embeddings, record.assignment)
        if record.net is not None:
            save_checkpoint(d / "checkpoint.bin", record.net, representatives=record.representatives)
        dirs.append(d)
    return dirs


def pretrain_runs(cfg: ExperimentConfig, ds: LabeledDataset | None = None) -> list[Path]:
    ds = load_dataset(cfg) if ds is None else ds
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    epochs = cfg.resolved_pretrain_epochs() or 50
    dirs = []
    for seed in cfg.seeds:
        plan = cfg.plan(seed)
        plan.pretrain_epochs = epochs
        net, trace = pretrained_network(ds.samples, cfg.embedding_dim or cfg.n_clusters, plan, cfg.hidden)
        d = out / f"pretrain_seed{seed}"
        d.mkdir(exist_ok=True)
        _write_json(d / MANIFEST, _manifest(cfg, ds, plan, "pretrain"))
        _write_pretrain_trace(d / "pretrain_trace.csv", trace)
        save_checkpoint(d / "checkpoint.bin", net)
        export_embeddings(d / "embeddings.csv", encode(net, ds.samples), labels=ds.labels)
        dirs.append(d)
    return dirs


def evaluate_runs(run_dirs: Sequence[str | Path], labels, split: str = "test_only",
                  out_dir: str | Path | None = None):
    """Score every run against ``labels`` and write ``runs.csv`` / ``report.json``."""
    if split not in ("test_only", "full"):
        raise ValueError("split must be 'test_only' or 'full'")
    labels = read_labels(labels) if isinstance(labels, (str, Path)) else np.asarray(labels)
    grouped: dict[str, list[MetricSample]] = {}
    rows = []
    for d in map(Path, run_dirs):
        manifest_path = d / MANIFEST
        assign_path = d / "assignments.txt"
        for p in (manifest_path, assign_path):
            if not p.exists():
                raise FileNotFoundError(f"{d}: missing run artifact {p.name}")
        manifest = json.loads(manifest_path.read_text())
        pred = read_labels(assign_path)
        if len(pred) != len(labels):
            raise FormatError(f"{d}: {len(pred)} assignments but {len(labels)} labels")
        idx = np.arange(len(pred))
        if split == "test_only":
            idx = validation_split(manifest["n_samples"], manifest["split_seed"]).test
        scores = clustering_scores(pred[idx], labels[idx])
        sample = MetricSample(scores["acc"], scores["nmi"], scores["ari"], manifest["seed"])
        grouped.setdefault(manifest["variant"], []).append(sample)
        rows.append((manifest["variant"], sample))
    report = aggregate(grouped)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_runs_csv(out / "runs.csv", rows)
        write_report_json(out / "report.json", report)
    return rows, report


def select_lambda(grid: Sequence[float], score: Callable[[float], float]) -> tuple[float, dict[float, float]]:
    """Best-scoring value of the grid; ties go to the smaller value."""
    if not grid:
        raise ValueError("empty lambda grid")
    curve = {float(lam): float(score(lam)) for lam in sorted(grid)}
    best = max(curve, key=lambda lam: (curve[lam], -lam))
    return best, curve


def line_search(cfg: ExperimentConfig, ds: LabeledDataset | None = None,
                grid: Sequence[float] | None = None) -> tuple[float, dict[float, float]]:
    """Validation-accuracy line search over lambda.

    Models train on all samples (no labels involved); only the validation
    slice of the labels ever reaches the scorer.
    """
    ds = load_dataset(cfg) if ds is None else ds
    if ds.labels is None:
        raise ValueError("line search needs labels")
    grid = cfg.grid if grid is None else grid
    split = validation_split(len(ds), cfg.split_seed)
    val_idx = split.validation
    val_labels = ds.labels[val_idx].copy()
    unlabeled = LabeledDataset(ds.samples, None, ds.name, ds.provenance)

    # pretraining ignores lambda, so do it once per seed
    cache = {}
    for seed in cfg.seeds:
        plan = cfg.plan(seed)
        if plan.pretrain_epochs:
            cache[seed] = pretrained_network(ds.samples, cfg.embedding_dim or cfg.n_clusters, plan, cfg.hidden)

    def score(lam: float) -> float:
        accs = []
        for seed in cfg.seeds:
            rec = fit(cfg, unlabeled, seed, lam, cache.get(seed))
            accs.append(accuracy_hungarian(contingency(rec.assignment[val_idx], val_labels)))
        return float(np.mean(accs))

    best, curve = select_lambda(grid, score)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "linesearch.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "validation_acc"])
        for lam, acc in curve.items():
            w.writerow([repr(lam), repr(acc)])
    _write_json(out / "linesearch.json", {
        "best_lambda": best, "variant": cfg.variant, "seeds": list(cfg.seeds),
        "split_seed": cfg.split_seed, "curve": [{"lambda": k, "validation_acc": v} for k, v in curve.items()],
    })
    return best, curve
