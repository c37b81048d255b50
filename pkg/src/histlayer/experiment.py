"""Multi-seed synthetic experiments and their on-disk reports."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from histlayer.histogram import Binning
from histlayer.metrics import confusion, fdr_per_class, row_normalize
from histlayer.model import ModelSpec, Variant, build_model, default_hist_config, features
from histlayer.synthtex import LABEL_TARGETS, load_dataset, to_arrays
from histlayer.train import (TrainConfig, evaluate, load_checkpoint, save_checkpoint, train,
                             write_history)

REGIME_SIZES = {"global": 3, "local": 7}
SEED_FIELDS = ("seed", "test_acc", "val_acc", "best_epoch", "runtime_s")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    dataset_dir: Optional[str] = None
    regime: str = "local"
    label: str = "both"
    variant: str = "combination"
    binning: str = "rbf"
    normalize_count: bool = False
    sum_to_one: bool = False
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.regime not in REGIME_SIZES:
            raise ValueError(f"regime must be one of {sorted(REGIME_SIZES)}, got {self.regime!r}")
        if self.label not in LABEL_TARGETS:
            raise ValueError(f"label must be one of {LABEL_TARGETS}, got {self.label!r}")
        Variant(self.variant)
        Binning(self.binning)
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)

    @property
    def num_classes(self):
        return 9 if self.label == "both" else 3

    def model_spec(self):
        return ModelSpec(variant=self.variant, num_classes=self.num_classes,
                         hist=default_hist_config(Binning(self.binning), self.normalize_count,
                                                  self.sum_to_one))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_file(cls, path):
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ValueError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValueError(f"config {path} must be a JSON object")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ValueError(f"bad config {path}: {exc}") from exc


@dataclass
class MetricsReport:
    experiment: str
    seeds: list
    per_seed_acc: list
    mean_acc: float
    std_acc: float
    confusion: dict
    log_fdr: dict
    runtime_s: float
    best_epochs: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _load_samples(cfg: ExperimentConfig, samples):
    if samples is None:
        if cfg.dataset_dir is None:
            raise ValueError("no dataset: set dataset_dir or pass samples")
        if not Path(cfg.dataset_dir).is_dir():
            raise FileNotFoundError(f"dataset directory {cfg.dataset_dir} does not exist")
        samples, _ = load_dataset(cfg.dataset_dir)
    size = samples[0].pixels.shape[0]
    if size != REGIME_SIZES[cfg.regime]:
        raise ValueError(f"{cfg.regime} regime needs {REGIME_SIZES[cfg.regime]}x"
                         f"{REGIME_SIZES[cfg.regime]} images, dataset has {size}x{size}")
    return samples


def split_arrays(cfg: ExperimentConfig, samples=None):
    samples = _load_samples(cfg, samples)
    data = {s: to_arrays(samples, s, cfg.label) for s in ("train", "val", "test")}
    present = np.unique(np.concatenate([y for _, y in data.values()]))
    if present.max() >= cfg.num_classes:
        raise ValueError(f"labels reach {present.max()} but config has {cfg.num_classes} classes")
    return data


def extract_features(model, x):
    """Pre-FC feature matrix (n, d) for a stack of images."""
    return features(model, x)[0]


def _summarize(cfg, seeds, accs, cms, fdrs, runtime, best_epochs):
    classes = sorted(fdrs[0])
    return MetricsReport(
        experiment=cfg.name, seeds=list(seeds), per_seed_acc=accs,
        mean_acc=float(np.mean(accs)), std_acc=float(np.std(accs)),
        confusion={"counts": [cm.tolist() for cm in cms],
                   "row_normalized": np.mean([row_normalize(cm) for cm in cms],
                                             axis=0).tolist()},
        log_fdr={"per_seed": [{str(c): f[c] for c in classes} for f in fdrs],
                 "mean": {str(c): float(np.mean([f[c] for f in fdrs])) for c in classes}},
        runtime_s=runtime, best_epochs=best_epochs)


def run_experiment(cfg: ExperimentConfig, samples=None, out_dir=None) -> MetricsReport:
    """Train and test one model variant for every seed, then aggregate."""
    data = split_arrays(cfg, samples)
    spec = cfg.model_spec()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    accs, cms, fdrs, rows, best_epochs = [], [], [], [], []
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        model, history = train(build_model(spec, seed), data,
                               TrainConfig(**{**asdict(cfg.train), "seed": seed}))
        _, test_acc, preds = evaluate(model, *data["test"])
        x_test, y_test = data["test"]
        accs.append(test_acc)
        cms.append(confusion(preds, y_test, cfg.num_classes))
        fdrs.append(fdr_per_class(extract_features(model, x_test), y_test))
        best = history["best_epoch"]
        best_epochs.append(best)
        rows.append({"seed": seed, "test_acc": test_acc,
                     "val_acc": history["epochs"][best - 1]["val_acc"], "best_epoch": best,
                     "runtime_s": time.perf_counter() - t0})
        if out is not None:
            save_checkpoint(model, out / f"{cfg.name}_seed{seed}.json", epoch=best,
                            extra={"experiment": cfg.to_dict()})
            write_history(history, out / f"{cfg.name}_seed{seed}_history.csv")
    report = _summarize(cfg, cfg.seeds, accs, cms, fdrs, time.perf_counter() - start,
                        best_epochs)
    if out is not None:
        write_seed_csv(rows, out / f"{cfg.name}_seeds.csv")
        (out / f"{cfg.name}_summary.json").write_text(json.dumps(report.to_dict(), indent=2))
    return report


def evaluate_checkpoints(cfg: ExperimentConfig, out_dir, samples=None):
    """Re-test saved per-seed checkpoints without retraining."""
    data = split_arrays(cfg, samples)
    x_test, y_test = data["test"]
    accs, cms, fdrs = [], [], []
    start = time.perf_counter()
    for seed in cfg.seeds:
        model, _ = load_checkpoint(Path(out_dir) / f"{cfg.name}_seed{seed}.json")
        _, acc, preds = evaluate(model, x_test, y_test)
        accs.append(acc)
        cms.append(confusion(preds, y_test, cfg.num_classes))
        fdrs.append(fdr_per_class(extract_features(model, x_test), y_test))
    return _summarize(cfg, cfg.seeds, accs, cms, fdrs, time.perf_counter() - start, [])


def write_seed_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SEED_FIELDS)
        w.writeheader()
        w.writerows(rows)


def merge_reports(out_dir):
    """Aggregate every ``*_seeds.csv`` under ``out_dir`` into one summary dict."""
    out_dir = Path(out_dir)
    files = sorted(out_dir.glob("*_seeds.csv"))
    if not files:
        raise FileNotFoundError(f"no per-seed CSV files in {out_dir}")
    experiments = {}
    for path in files:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(SEED_FIELDS) - set(rows[0]):
            raise ValueError(f"{path} is missing columns {SEED_FIELDS}")
        accs = [float(r["test_acc"]) for r in rows]
        experiments[path.name[:-len("_seeds.csv")]] = {
            "seeds": [int(r["seed"]) for r in rows], "per_seed_acc": accs,
            "mean_acc": float(np.mean(accs)), "std_acc": float(np.std(accs)),
            "runtime_s": float(sum(float(r["runtime_s"]) for r in rows))}
    return {"experiments": experiments}
