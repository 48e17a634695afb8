"""SGD training loop with momentum and weight decay, plus evaluation."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data_io import IGNORE_LABEL, LabeledSample
from .metrics import ConfusionMatrix, class_scores
from .model import LKASegModel
from .nn import ParamStore, load_checkpoint, save_checkpoint
from .tensor import Tensor, TensorError, backward, softmax_cross_entropy


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer recipe; defaults are the full-scale training settings."""

    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 10
    epochs: int = 50
    seed: int = 0
    eval_every_epoch: bool = True

    def __post_init__(self):
        if self.lr <= 0 and self.lr != 0.0:
            raise TensorError("lr must be non-negative")
        if self.batch_size < 1:
            raise TensorError("batch_size must be >= 1")


class SGD:
    """v <- momentum*v + g + wd*p; p <- p - lr*v (decay skipped for no_decay)."""

    def __init__(self, store: ParamStore, lr: float, momentum: float = 0.0,
                 weight_decay: float = 0.0, no_decay: frozenset = frozenset()):
        self.store = store
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.no_decay = set(no_decay)
        self.velocities = {name: np.zeros_like(t.data)
                           for name, t in store.trainable_items()}

    def step(self) -> None:
        for name, t in self.store.trainable_items():
            if t.grad is None:
                continue
            g = t.grad
            if g.shape != t.data.shape:
                raise TensorError(f"gradient shape mismatch for {name!r}")
            if self.weight_decay and name not in self.no_decay:
                g = g + self.weight_decay * t.data
            v = self.velocities[name]
            v *= self.momentum
            v += g
            t.data -= (self.lr * v).astype(t.dtype)


def _batches(indices: np.ndarray, batch_size: int):
    for i in range(0, len(indices), batch_size):
        yield indices[i: i + batch_size]


def _stack(samples: Sequence[LabeledSample], idx) -> tuple[Tensor, np.ndarray]:
    images = np.concatenate([samples[i].image.data for i in idx], axis=0)
    labels = np.stack([samples[i].labels for i in idx], axis=0)
    return Tensor(images), labels


def predict_labels(model: LKASegModel, sample_images: Tensor) -> np.ndarray:
    logits = model.forward(sample_images, mode="eval")
    return logits.data.argmax(axis=1)


def eval_loop(model: LKASegModel, samples: Sequence[LabeledSample],
              ignore_label: int = IGNORE_LABEL, batch_size: int = 10,
              class_names: Optional[Sequence[str]] = None,
              eval_classes: Optional[Sequence[int]] = None) -> dict:
    """Confusion-matrix evaluation over a corpus in eval mode."""
    if not samples:
        raise TensorError("empty evaluation corpus")
    cm = ConfusionMatrix(model.cfg.num_classes, ignore_label=ignore_label)
    for idx in _batches(np.arange(len(samples)), batch_size):
        images, labels = _stack(samples, idx)
        cm.accumulate(predict_labels(model, images), labels)
    return class_scores(cm, class_names=class_names, eval_classes=eval_classes)


def save_training_checkpoint(model: LKASegModel, optimizer: Optional[SGD], path) -> None:
    """Model tensors plus (optionally) momentum buffers under 'optim.'."""
    full = ParamStore()
    for name, p in model.store.items():
        full.add(name, p.tensor.data, trainable=p.trainable)
    if optimizer is not None:
        for name, v in optimizer.velocities.items():
            full.add(f"optim.{name}", v, trainable=False)
    save_checkpoint(full, path)


def load_training_checkpoint(path, model: LKASegModel,
                             optimizer: Optional[SGD] = None) -> None:
    loaded = load_checkpoint(path)
    model.store.copy_from(loaded)
    if optimizer is not None:
        for name in optimizer.velocities:
            key = f"optim.{name}"
            if key in loaded:
                optimizer.velocities[name][...] = loaded[key].data


def train_loop(model: LKASegModel, samples: Sequence[LabeledSample],
               cfg: TrainConfig, out_dir=None,
               ignore_label: int = IGNORE_LABEL,
               class_names: Optional[Sequence[str]] = None,
               eval_classes: Optional[Sequence[int]] = None,
               log_stream=None) -> list:
    """Seeded epoch loop; returns the per-epoch history.

    When ``out_dir`` is given, writes log.jsonl, best.lkc (highest mIoU so
    far), and last.lkc, each including momentum buffers.
    """
    if not samples:
        raise TensorError("empty training corpus")
    for s in samples:
        if s.labels[s.labels != ignore_label].size and \
           s.labels[s.labels != ignore_label].max() >= model.cfg.num_classes:
            raise TensorError("corpus labels exceed the model's class count")

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    opt = SGD(model.store, cfg.lr, cfg.momentum, cfg.weight_decay,
              no_decay=frozenset(model.no_decay_names()))
    history = []
    best_miou = -1.0
    log_lines = []

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1, epoch)))
        perm = rng.permutation(len(samples))
        losses = []
        for idx in _batches(perm, cfg.batch_size):
            images, labels = _stack(samples, idx)
            model.store.zero_grads()
            logits = model.forward(images, mode="train")
            loss = softmax_cross_entropy(logits, labels, ignore_label)
            backward(loss)
            opt.step()
            losses.append(loss.item())
        entry = {"epoch": epoch, "loss": float(np.mean(losses))}
        if cfg.eval_every_epoch:
            scores = eval_loop(model, samples, ignore_label=ignore_label,
                               batch_size=cfg.batch_size, class_names=class_names,
                               eval_classes=eval_classes)
            entry["mF1"] = scores["mF1"]
            entry["mIoU"] = scores["mIoU"]
            if out is not None and scores["mIoU"] > best_miou:
                best_miou = scores["mIoU"]
                save_training_checkpoint(model, opt, out / "best.lkc")
        entry["seconds"] = time.perf_counter() - t0
        history.append(entry)
        line = json.dumps(entry)
        log_lines.append(line)
        if log_stream is not None:
            print(line, file=log_stream, flush=True)

    if out is not None:
        (out / "log.jsonl").write_text("\n".join(log_lines) + "\n")
        save_training_checkpoint(model, opt, out / "last.lkc")
        if best_miou < 0:  # no eval ran; still provide best.lkc
            save_training_checkpoint(model, opt, out / "best.lkc")
    return history
