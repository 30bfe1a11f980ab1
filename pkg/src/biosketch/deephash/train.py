"""Two-step training with the tanh continuation schedule."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .network import ENCODERS, LossWeights, ToyNetwork

HISTORY_FIELDS = ("step", "epoch", "beta_bw", "E1", "E2", "E3", "total", "mean_abs_activation", "balance")


class TrainingDivergence(RuntimeError):
    def __init__(self, step: int, beta_bw: float, epoch: int):
        self.step, self.beta_bw, self.epoch = step, beta_bw, epoch
        super().__init__(f"non-finite loss in step {step}, stage beta_bw={beta_bw}, epoch {epoch}")


@dataclass(frozen=True)
class ContinuationSchedule:
    bandwidths: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    tol: float = 1e-4
    patience: int = 5
    max_epochs: int = 60

    def __post_init__(self):
        bw = tuple(float(b) for b in self.bandwidths)
        if not bw or bw[0] != 1.0:
            raise ValueError("schedule must start at beta_bw = 1")
        if any(b <= a for a, b in zip(bw, bw[1:])):
            raise ValueError("bandwidths must be strictly increasing")
        object.__setattr__(self, "bandwidths", bw)


@dataclass
class ToyDataset:
    x_face: np.ndarray
    x_iris: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.size)

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.x_face[idx], self.x_iris[idx], self.labels[idx]


def make_toy_dataset(
    n_classes: int = 4,
    per_class: int = 50,
    d_face_in: int = 16,
    d_iris_in: int = 16,
    spread: float = 0.3,
    seed: int = 0,
) -> ToyDataset:
    """Gaussian clusters per class in each modality; unit-norm class centres."""
    rng = np.random.default_rng(seed)

    def centres(d):
        c = rng.normal(size=(n_classes, d))
        return c / np.linalg.norm(c, axis=1, keepdims=True)

    cf, ci = centres(d_face_in), centres(d_iris_in)
    labels = np.repeat(np.arange(n_classes), per_class)
    x_face = cf[labels] + spread * rng.normal(size=(labels.size, d_face_in)) / np.sqrt(d_face_in)
    x_iris = ci[labels] + spread * rng.normal(size=(labels.size, d_iris_in)) / np.sqrt(d_iris_in)
    return ToyDataset(x_face, x_iris, labels)


@dataclass
class TrainResult:
    network: ToyNetwork
    history: list[dict] = field(default_factory=list)

    def write_history(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS, lineterminator="\n")
            w.writeheader()
            for row in self.history:
                w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})


def activation_stats(act: np.ndarray) -> tuple[float, float]:
    """Mean |activation| and mean per-vector |mean activation|."""
    return float(np.abs(act).mean()), float(np.abs(act.mean(axis=1)).mean())


def _run_step(
    data: ToyDataset,
    net: ToyNetwork,
    weights: LossWeights,
    schedule: ContinuationSchedule,
    step: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
    history: list[dict],
    momentum: float = 0.9,
    lr_decay: float = 0.9,
) -> None:
    trainable = [k for k in net.params if step == 2 or k not in ENCODERS]
    velocity = {k: np.zeros_like(net.params[k]) for k in trainable}
    n = len(data)
    epoch = 0
    for stage, bw in enumerate(schedule.bandwidths):
        net.beta_bw = bw
        stage_lr = lr * lr_decay**stage
        best = np.inf
        stale = 0
        for _ in range(schedule.max_epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                lv = net.loss(*data.batch(order[start : start + batch_size]), weights)
                if not np.isfinite(lv.total):
                    raise TrainingDivergence(step, bw, epoch)
                for k in trainable:
                    velocity[k] = momentum * velocity[k] - stage_lr * lv.grads[k]
                    net.params[k] += velocity[k]
            full = net.loss(data.x_face, data.x_iris, data.labels, weights, grad=False)
            if not np.isfinite(full.total):
                raise TrainingDivergence(step, bw, epoch)
            mean_abs, balance = activation_stats(net.forward(data.x_face, data.x_iris).activations)
            history.append(
                {
                    "step": step,
                    "epoch": epoch,
                    "beta_bw": bw,
                    "E1": full.e1,
                    "E2": full.e2,
                    "E3": full.e3,
                    "total": full.total,
                    "mean_abs_activation": mean_abs,
                    "balance": balance,
                }
            )
            epoch += 1
            # per-sample loss so the tolerance does not scale with dataset size
            per_sample = full.total / n
            if per_sample < best - schedule.tol:
                best = per_sample
                stale = 0
            else:
                stale += 1
                if stale >= schedule.patience:
                    break


def train_two_step(
    data: ToyDataset,
    network: ToyNetwork,
    weights: LossWeights = LossWeights(),
    schedule: ContinuationSchedule = ContinuationSchedule(),
    lr: float = 0.01,
    finetune_lr_scale: float = 0.1,
    batch_size: int = 32,
    seed: int = 0,
) -> TrainResult:
    """Step 1 trains fusion, hashing and classifier with encoders frozen; step 2
    fine-tunes everything at a smaller learning rate. Each step walks the
    bandwidth schedule, retraining to the stage tolerance before each increase.
    """
    net = network.copy()
    rng = np.random.default_rng(seed)
    history: list[dict] = []
    _run_step(data, net, weights, schedule, 1, lr, batch_size, rng, history)
    _run_step(data, net, weights, schedule, 2, lr * finetune_lr_scale, batch_size, rng, history)
    return TrainResult(net, history)


def train_step_one(
    data: ToyDataset,
    network: ToyNetwork,
    weights: LossWeights = LossWeights(),
    schedule: ContinuationSchedule = ContinuationSchedule(),
    lr: float = 0.01,
    batch_size: int = 32,
    seed: int = 0,
) -> TrainResult:
    """Only the frozen-encoder step; used to check that encoders stay untouched."""
    net = network.copy()
    history: list[dict] = []
    _run_step(data, net, weights, schedule, 1, lr, batch_size, np.random.default_rng(seed), history)
    return TrainResult(net, history)


def export_codes(network: ToyNetwork, data: ToyDataset, path: str | Path, label_names: Sequence[str] | None = None):
    """Write codes in the feature JSONL format (one subject per class)."""
    from ..features import FeatureVector, from_signed, write_features

    codes = network.codes(data.x_face, data.x_iris)
    counters: dict[int, int] = {}
    vectors = []
    for code, lab in zip(codes, data.labels.tolist()):
        j = counters.get(lab, 0)
        counters[lab] = j + 1
        name = label_names[lab] if label_names else f"class{lab:03d}"
        vectors.append(FeatureVector(from_signed(code), name, str(j)))
    write_features(path, vectors, "jsonl")
    return vectors
