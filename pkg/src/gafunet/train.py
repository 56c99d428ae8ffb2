"""Training loop, majority voting and OA/AA/kappa evaluation."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .gaf import encode_pixel
from .hsi import iterate_pixels
from .model import build_model, load_checkpoint, save_checkpoint
from .tensor import Tensor


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 64
    lr0: float = 1e-3
    lr_decay: float = math.exp(-0.01)   # multiplicative factor per epoch
    seed: int = 0
    optimizer_id: str = "adam"          # "adam" or "sgd"
    train_fraction: float = 0.10

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr0 <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("need lr0 > 0 and 0 < lr_decay <= 1")


def lr_at_epoch(config, epoch):
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return config.lr0 * config.lr_decay ** epoch


class AdamOptimizer:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            self.m[i] = b1 * self.m[i] + (1 - b1) * p.grad
            self.v[i] = b2 * self.v[i] + (1 - b2) * p.grad * p.grad
            mhat = self.m[i] / (1 - b1 ** self.t)
            vhat = self.v[i] / (1 - b2 ** self.t)
            p.data -= lr * mhat / (np.sqrt(vhat) + self.eps)


class SgdOptimizer:
    def __init__(self, params):
        self.params = list(params)

    def step(self, lr):
        for p in self.params:
            if p.grad is not None:
                p.data -= lr * p.grad


def make_optimizer(config, params):
    if config.optimizer_id == "adam":
        return AdamOptimizer(params)
    if config.optimizer_id == "sgd":
        return SgdOptimizer(params)
    raise ValueError(f"unknown optimizer: {config.optimizer_id}")


# ---------------------------------------------------------------------------
# sample preparation

def encode_partition(cube, split, which, side):
    """Encode one partition into (samples [n,2,S,S], labels [n], coords)."""
    lo, hi = cube.value_range
    samples, labels, coords = [], [], []
    for spectrum, label, rc in iterate_pixels(cube, split, which):
        s = encode_pixel(spectrum, label, lo, hi, side)
        samples.append(s.channels())
        labels.append(label)
        coords.append(rc)
    if not samples:
        return np.zeros((0, 2, side, side)), np.zeros(0, dtype=int), []
    return np.stack(samples), np.asarray(labels, dtype=int), coords


def majority_vote(logit_map):
    """Per-position argmax then modal class over all positions.

    ``logit_map`` is [C,S,S]; returns a 0-based class index. Ties break
    toward the lowest class index at both stages.
    """
    per_position = logit_map.argmax(axis=0)
    counts = np.bincount(per_position.reshape(-1), minlength=logit_map.shape[0])
    return int(counts.argmax())


def _predict_batches(model, samples, batch_size=64):
    preds = np.empty(samples.shape[0], dtype=int)
    for start in range(0, samples.shape[0], batch_size):
        logits = model.forward(Tensor(samples[start:start + batch_size])).data
        for i in range(logits.shape[0]):
            preds[start + i] = majority_vote(logits[i])
    return preds


# ---------------------------------------------------------------------------
# metrics

def metrics_from_confusion(confusion):
    """OA, AA, Cohen's kappa and per-class recall from a C x C count matrix."""
    cm = np.asarray(confusion, dtype=np.float64)
    total = cm.sum()
    oa = np.trace(cm) / total
    row = cm.sum(axis=1)
    col = cm.sum(axis=0)
    present = row > 0
    recalls = np.full(cm.shape[0], np.nan)
    recalls[present] = np.diag(cm)[present] / row[present]
    if not present.all():
        absent = [int(c) for c in np.flatnonzero(~present)]
        warnings.warn(f"classes {absent} absent from partition; excluded from AA")
    aa = float(np.nanmean(recalls))
    pe = float((row * col).sum() / (total * total))
    kappa = (oa - pe) / (1.0 - pe) if pe < 1.0 else 1.0
    return {
        "OA": float(oa), "AA": aa, "kappa": float(kappa),
        "per_class_recall": [None if np.isnan(r) else float(r) for r in recalls],
        "confusion": cm.astype(int).tolist(),
    }


def evaluate(model, cube, split, which="test", batch_size=64):
    """Confusion matrix and metrics for one partition of the cube."""
    side = model.config.gaf_side
    samples, labels, _ = encode_partition(cube, split, which, side)
    if samples.shape[0] == 0:
        raise ValueError(f"partition '{which}' is empty")
    preds = _predict_batches(model, samples, batch_size)
    c = cube.num_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (labels - 1, preds), 1)
    return metrics_from_confusion(confusion)


def predict_map(model, cube, batch_size=64):
    """Classify every pixel of the cube; returns an H x W map of labels in [1, C]."""
    side = model.config.gaf_side
    lo, hi = cube.value_range
    h, w = cube.height, cube.width
    flat = cube.reflectance.reshape(h * w, cube.bands).astype(np.float64)
    out = np.empty(h * w, dtype=np.int64)
    for start in range(0, h * w, batch_size):
        chunk = flat[start:start + batch_size]
        batch = np.stack([encode_pixel(s, 0, lo, hi, side).channels() for s in chunk])
        logits = model.forward(Tensor(batch)).data
        for i in range(logits.shape[0]):
            out[start + i] = majority_vote(logits[i]) + 1
    return out.reshape(h, w)


# ---------------------------------------------------------------------------
# training

def train(model, cube, split, config, log_hook=None):
    """Train on the train partition, tracking validation OA per epoch.

    Returns (model with best-validation parameters restored, log), where
    the log is a list of {epoch, lr, train_loss, val_OA} dicts.
    """
    side = model.config.gaf_side
    samples, labels, _ = encode_partition(cube, split, "train", side)
    n = samples.shape[0]
    if n == 0:
        raise ValueError("training partition is empty")
    val_samples, val_labels, _ = encode_partition(cube, split, "validation", side)

    rng = np.random.default_rng(config.seed)
    opt = make_optimizer(config, model.parameters())
    log = []
    best = {"oa": -1.0, "params": None}

    for epoch in range(config.epochs):
        lr = lr_at_epoch(config, epoch)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = Tensor(samples[idx])
            targets = np.broadcast_to((labels[idx] - 1)[:, None, None],
                                      (idx.size, side, side))
            model.zero_grad()
            loss = T.softmax_crossentropy(model.forward(batch), targets)
            loss.backward()
            opt.step(lr)
            losses.append(float(loss.data))

        val_oa = float("nan")
        if val_samples.shape[0] > 0:
            preds = _predict_batches(model, val_samples, config.batch_size)
            val_oa = float((preds + 1 == val_labels).mean())
            if val_oa > best["oa"]:
                best = {"oa": val_oa,
                        "params": {k: p.data.copy() for k, p in model.params.items()}}

        entry = {"epoch": epoch, "lr": lr,
                 "train_loss": float(np.mean(losses)), "val_OA": val_oa}
        log.append(entry)
        if log_hook is not None:
            log_hook(entry)

    if best["params"] is not None:
        for k, p in model.params.items():
            p.data = best["params"][k]
    return model, log
