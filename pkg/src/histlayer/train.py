"""Mini-batch training with early stopping, plus checkpoint/history I/O."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from histlayer import tensor as T
from histlayer.model import Model, ModelSpec, forward, loss_and_grads
from histlayer.optim import Adam, SGDMomentum

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "train_acc", "val_acc")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    patience: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0 < self.patience < self.epochs:
            raise ValueError(f"patience {self.patience} must lie in (0, epochs={self.epochs})")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def make_optimizer(self):
        if self.optimizer == "adam":
            return Adam(lr=self.lr)
        return SGDMomentum(lr=self.lr, momentum=self.momentum)


class EarlyStopping:
    """Tracks the best validation loss; ``update`` says when to stop."""

    def __init__(self, patience):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = None
        self.bad_epochs = 0

    def update(self, epoch, val_loss):
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def evaluate(model: Model, x, y, batch_size=512):
    """Mean loss, accuracy (%) and predictions over a whole split."""
    total, preds = 0.0, []
    for i in range(0, len(y), batch_size):
        logits, _ = forward(model, x[i:i + batch_size])
        loss, _ = T.softmax_cross_entropy(logits, y[i:i + batch_size])
        total += loss * len(logits)
        preds.append(logits.argmax(axis=1))
    preds = np.concatenate(preds)
    return total / len(y), 100.0 * float(np.mean(preds == y)), preds


def train(model: Model, data, tcfg: TrainConfig):
    """Train in place on ``data["train"]``, early-stopping on ``data["val"]``.

    ``data`` maps split name to ``(images, labels)``. The model ends up holding
    the parameters of its best-validation-loss epoch.
    """
    x_tr, y_tr = data["train"]
    x_val, y_val = data["val"]
    if len(y_tr) == 0 or len(y_val) == 0:
        raise ValueError("train and val splits must be non-empty")
    rng = np.random.default_rng(tcfg.seed)
    opt = tcfg.make_optimizer()
    stopper = EarlyStopping(tcfg.patience)
    best_params = model.params
    history = []
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(len(y_tr))
        loss_sum, correct = 0.0, 0
        for i in range(0, len(order), tcfg.batch_size):
            idx = order[i:i + tcfg.batch_size]
            loss, grads, logits = loss_and_grads(model, x_tr[idx], y_tr[idx])
            model.params = opt.step(model.params, grads)
            loss_sum += loss * len(idx)
            correct += int(np.sum(logits.argmax(axis=1) == y_tr[idx]))
        val_loss, val_acc, _ = evaluate(model, x_val, y_val)
        history.append({"epoch": epoch, "train_loss": loss_sum / len(y_tr), "val_loss": val_loss,
                        "train_acc": 100.0 * correct / len(y_tr), "val_acc": val_acc})
        stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best_params = model.params
        if stop:
            log.info("early stop at epoch %d (best %d)", epoch, stopper.best_epoch)
            break
    model.params = best_params
    return model, {"epochs": history, "best_epoch": stopper.best_epoch}


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        w.writeheader()
        for row in history["epochs"]:
            w.writerow({k: row[k] for k in HISTORY_FIELDS})


def save_checkpoint(model: Model, path, epoch=None, extra=None):
    manifest = {"spec": model.spec.to_dict(), "seed": model.seed, "epoch": epoch,
                "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                           for k, v in model.params.items()}}
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest))


def load_checkpoint(path):
    try:
        manifest = json.loads(Path(path).read_text())
        spec = ModelSpec.from_dict(manifest["spec"])
        params = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"])
                  for k, v in manifest["params"].items()}
    except (OSError, KeyError, ValueError) as exc:
        raise ValueError(f"cannot read checkpoint {path}: {exc}") from exc
    return Model(spec, params, manifest.get("seed")), manifest


def config_dict(tcfg: TrainConfig):
    return asdict(tcfg)
