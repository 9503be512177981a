"""Losses, the optimization loop, and evaluation over the validation split.

Five loss kinds are supported. ``xent_bernoulli`` treats each amplitude as
a Bernoulli parameter after shifting [-1,1] to [0,1]. ``xent_paper_literal``
keeps the raw output amplitude as the P factor, so it can go negative; it
exists to mirror the sign convention of published validation numbers.
``xent_categorical`` applies only to the quantized 256-bin transformer head.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import engine
from .avio import Dataset, sample_window
from .engine import Tensor, backward
from .errors import ContractError, ParameterError, ShapeError, TrainingDivergedError
from .models import Model, quantize, save_checkpoint

LOSS_KINDS = ("mse", "mae", "xent_bernoulli", "xent_paper_literal",
              "xent_categorical")
_EPS = 1e-7


def loss(kind: str, output: Tensor, target: np.ndarray) -> Tensor:
    """Scalar loss between a model output tensor and a numpy target."""
    if kind not in LOSS_KINDS:
        raise ParameterError(f"unknown loss kind {kind!r}")
    target = np.asarray(target, dtype=np.float64)
    if kind == "xent_categorical":
        if output.data.ndim != 2 or output.shape[1] != 256:
            raise ContractError(
                "xent_categorical needs (channels, 256) logits; got "
                f"{output.shape} — use a quantized model"
            )
        if target.shape != (output.shape[0],):
            raise ShapeError(
                f"categorical target {target.shape} vs logits {output.shape}"
            )
        bins = quantize(target)
        lse = output.logsumexp_lastdim()            # (channels,)
        picked = output[np.arange(output.shape[0]), bins]
        return (lse - picked).mean()
    if output.shape != target.shape:
        raise ShapeError(
            f"loss: output {output.shape} vs target {target.shape}"
        )
    t = Tensor(target)
    if kind == "mse":
        return ((output - t) ** 2).mean()
    if kind == "mae":
        return (output - t).abs().mean()
    if kind == "xent_bernoulli":
        p = (target + 1.0) / 2.0
        q = ((output + 1.0) * 0.5).clamp(_EPS, 1.0 - _EPS)
        pt = Tensor(p)
        one_minus_pt = Tensor(1.0 - p)
        term = pt * q.log() + one_minus_pt * (1.0 - q).log()
        return -term.mean()
    # xent_paper_literal: P is the raw output, Q is the shifted target
    q = np.clip((target + 1.0) / 2.0, _EPS, 1.0)
    return -(output * Tensor(np.log(q))).mean()


# -- optimizer ----------------------------------------------------------------


class Adam:
    """Adaptive-moment estimation with optional global-norm gradient clip."""

    def __init__(self, params: dict, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 clip_norm: float | None = 1.0):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = np.zeros_like(p.data)

    def step(self):
        self.t += 1
        if self.clip_norm is not None:
            total = np.sqrt(sum(float((p.grad ** 2).sum())
                                for p in self.params.values()))
            if total > self.clip_norm:
                scale = self.clip_norm / total
                for p in self.params.values():
                    p.grad = p.grad * scale
        b1, b2 = self.beta1, self.beta2
        for k, p in self.params.items():
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)


# -- training loop ------------------------------------------------------------


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    steps: int = 100
    batch_size: int = 1
    seed: int = 0
    loss_kind: str = "xent_bernoulli"
    clip_norm: float = 1.0
    checkpoint_interval: int = 50

    def __post_init__(self):
        # learning rate 0 is allowed: it makes "no update" testable
        if self.learning_rate < 0 or self.steps <= 0 or self.batch_size <= 0:
            raise ParameterError("learning rate must be >= 0; "
                                 "steps and batch size must be > 0")
        if self.checkpoint_interval <= 0:
            raise ParameterError("checkpoint_interval must be > 0")
        if self.loss_kind not in LOSS_KINDS:
            raise ParameterError(f"unknown loss kind {self.loss_kind!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @staticmethod
    def from_json(text: str) -> "TrainConfig":
        return TrainConfig(**json.loads(text))


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)          # per-step train loss
    val_points: list = field(default_factory=list)      # (step, val_loss)


def _window_for(model: Model, ds: Dataset, frame_index: int,
                sample_offset: int):
    cfg = model.config
    kind = "frame_sequence" if model.mode == "sequence" else "sample"
    return sample_window(ds.av, frame_index, cfg.audio_ctx_len,
                         cfg.video_ctx_len, target_kind=kind,
                         sample_offset=sample_offset)


def _target_for(model: Model, window):
    # model outputs are (2, spf) in sequence mode, (2,) or (2, 256) in sample
    if model.mode == "sequence":
        return window.target.T                         # (spf, 2) -> (2, spf)
    return window.target                               # (2,)


def train(model: Model, dataset: Dataset, cfg: TrainConfig,
          checkpoint_path=None, loss_csv_path=None) -> TrainReport:
    """Seeded SGD over uniformly sampled context windows from the train split.

    Deterministic under a fixed seed: the window sequence, updates, and loss
    curve depend only on (model state, dataset, cfg).
    """
    train_frames = list(dataset.train_frames())
    if not train_frames:
        raise ContractError("train split is empty; lower train_fraction?")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, lr=cfg.learning_rate, clip_norm=cfg.clip_norm)
    report = TrainReport()
    spf = dataset.av.spf
    for step in range(cfg.steps):
        opt.zero_grad()
        # one graph per step: backward overwrites grads, so batch items are
        # summed into a single scalar before the backward call
        total = None
        for _ in range(cfg.batch_size):
            fi = int(rng.integers(0, len(train_frames)))
            frame_index = train_frames[fi]
            offset = int(rng.integers(0, spf)) if model.mode == "sample" else 0
            window = _window_for(model, dataset, frame_index, offset)
            out = model.forward_window(window)
            l = loss(cfg.loss_kind, out, _target_for(model, window))
            total = l if total is None else total + l
        if cfg.batch_size > 1:
            total = total * (1.0 / cfg.batch_size)
        backward(total)
        step_loss = float(total.data)
        if not np.isfinite(step_loss):
            raise TrainingDivergedError(
                f"loss became {step_loss} at step {step}; try a lower "
                "learning rate or a tighter gradient clip"
            )
        opt.step()
        report.losses.append(step_loss)
        if (step + 1) % cfg.checkpoint_interval == 0 or step + 1 == cfg.steps:
            if checkpoint_path is not None:
                save_checkpoint(model, checkpoint_path)
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
    if loss_csv_path is not None:
        write_loss_csv(report, loss_csv_path)
    return report


def write_loss_csv(report: TrainReport, path) -> None:
    """Loss curve as CSV: step, train_loss, val_loss (blank when unmeasured)."""
    vals = dict(report.val_points)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "train_loss", "val_loss"])
        for i, tl in enumerate(report.losses):
            w.writerow([i, repr(tl), repr(vals[i]) if i in vals else ""])


def evaluate(model: Model, dataset: Dataset, kind: str,
             max_windows: int | None = None) -> float:
    """Mean loss over the validation windows; no parameter updates.

    Sample-mode models have one window per (frame, offset) pair;
    ``max_windows`` caps the count by striding deterministically.
    """
    val_frames = list(dataset.val_frames())
    if not val_frames:
        raise ContractError("validation split is empty")
    spf = dataset.av.spf
    if model.mode == "sequence":
        pairs = [(f, 0) for f in val_frames]
    else:
        pairs = [(f, off) for f in val_frames for off in range(spf)]
    if max_windows is not None and len(pairs) > max_windows:
        stride = max(1, len(pairs) // max_windows)
        pairs = pairs[::stride][:max_windows]
    total = 0.0
    for frame_index, offset in pairs:
        window = _window_for(model, dataset, frame_index, offset)
        out = model.forward_window(window)
        total += float(loss(kind, out, _target_for(model, window)).data)
    return total / len(pairs)
