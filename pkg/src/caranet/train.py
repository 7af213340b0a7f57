"""Multi-scale deep-supervision training."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import resize_image, resize_mask
from .losses import total_loss
from .metrics import dice
from .model import CaraNet
from .optim import Adam
from .tensor import Tensor

log = logging.getLogger(__name__)

Pair = tuple[str, np.ndarray, np.ndarray]


@dataclass
class TrainConfig:
    scales: tuple[float, ...] = (0.75, 1.0, 1.25)
    epochs: int = 20
    batch_size: int = 4
    input_size: int = 352
    lr: float = 1e-4
    seed: int = 0
    scale_order: str = "cyclic"
    clip: float | None = None

    def __post_init__(self):
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError(f"scales must be positive: {self.scales}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch size must be positive and epochs non-negative")
        if self.scale_order not in ("cyclic", "random"):
            raise ValueError(f"unknown scale order {self.scale_order!r}")


def snap_size(scale: float, size: int, multiple: int = 32) -> int:
    """``round(scale * size)`` snapped down to a multiple of ``multiple`` (at least one multiple)."""
    target = int(np.floor(scale * size + 0.5))
    return max(multiple, target // multiple * multiple)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    mean_dice: float
    step_losses: list[float] = field(default_factory=list)
    sizes: list[int] = field(default_factory=list)


class Trainer:
    """Holds the model, optimizer and step counter across epochs."""

    def __init__(self, model: CaraNet, config: TrainConfig):
        self.model = model
        self.config = config
        self.params = model.parameters()
        self.optimizer = Adam(self.params, lr=config.lr)
        self.global_step = 0
        self.last_size = 0
        self._rng = np.random.default_rng(config.seed)

    def _next_scale(self) -> float:
        scales = self.config.scales
        if self.config.scale_order == "random":
            return float(self._rng.choice(scales))
        return scales[self.global_step % len(scales)]

    def step(self, images: np.ndarray, masks: np.ndarray) -> tuple[float, list[float]]:
        """One optimizer step on a batch already at the base input size."""
        size = snap_size(self._next_scale(), self.config.input_size, self.model.config.backbone.max_stride)
        if images.shape[-1] != size or images.shape[-2] != size:
            images = np.stack([resize_image(im, size) for im in images])
            masks = np.stack([resize_mask(m, size) for m in masks])
        self.last_size = size
        out = self.model(Tensor(images))
        g = masks.astype(np.float64)[:, None]
        breakdown = total_loss(g, out.side_maps())
        self.optimizer.zero_grad()
        breakdown.total.backward()
        if self.config.clip is not None:
            c = self.config.clip
            for p in self.params:
                np.clip(p.grad, -c, c, out=p.grad)
        self.optimizer.step()
        self.global_step += 1
        pred = out.prediction.data[:, 0]
        dices = [dice(p >= 0.5, m) for p, m in zip(pred, masks)]
        return breakdown.total.item(), dices

    def train_epoch(self, dataset: Sequence[Pair], epoch: int = 0) -> EpochStats:
        if not dataset:
            raise ValueError("empty training set")
        losses, dices, sizes = [], [], []
        bs = self.config.batch_size
        for start in range(0, len(dataset), bs):
            batch = dataset[start:start + bs]
            for key, img, mask in batch:
                if img.shape[1:] != mask.shape:
                    raise ValueError(f"{key}: image {img.shape[1:]} and mask {mask.shape} differ in size")
            images = np.stack([_fit(img, self.config.input_size) for _, img, _ in batch])
            masks = np.stack([_fit_mask(m, self.config.input_size) for _, _, m in batch])
            loss, batch_dice = self.step(images, masks)
            losses.append(loss)
            dices.extend(batch_dice)
            sizes.append(self.last_size)
        stats = EpochStats(epoch, float(np.mean(losses)), float(np.mean(dices)), losses, sizes)
        log.info("epoch %d loss %.5f dice %.4f", epoch, stats.mean_loss, stats.mean_dice)
        return stats

    def fit(self, dataset: Sequence[Pair], epochs: int | None = None) -> Iterable[EpochStats]:
        for epoch in range(1, (self.config.epochs if epochs is None else epochs) + 1):
            yield self.train_epoch(dataset, epoch)


def train_epoch(model: CaraNet, dataset: Sequence[Pair], config: TrainConfig,
                trainer: Trainer | None = None) -> EpochStats:
    trainer = trainer or Trainer(model, config)
    return trainer.train_epoch(dataset)


def _fit(img: np.ndarray, size: int) -> np.ndarray:
    return img if img.shape[1:] == (size, size) else resize_image(img, size)


def _fit_mask(mask: np.ndarray, size: int) -> np.ndarray:
    return mask if mask.shape == (size, size) else resize_mask(mask, size)


def evaluate_dice(model: CaraNet, dataset: Sequence[Pair], batch_size: int = 8) -> float:
    scores = []
    for start in range(0, len(dataset), batch_size):
        batch = dataset[start:start + batch_size]
        prob = model.predict(np.stack([img for _, img, _ in batch]))
        scores.extend(dice(p >= 0.5, m) for p, (_, _, m) in zip(prob, batch))
    return float(np.mean(scores))


def train_until(trainer: Trainer, dataset: Sequence[Pair], target_dice: float, max_steps: int = 500,
                check_every: int = 10) -> tuple[list[float], float]:
    """Full-batch steps until evaluated Dice reaches ``target_dice`` or ``max_steps`` run out.

    Dice is measured after the update, every ``check_every`` steps. Returns the
    per-step losses and the last measured Dice.
    """
    losses: list[float] = []
    score = evaluate_dice(trainer.model, dataset)
    for step in range(1, max_steps + 1):
        losses.append(trainer.train_epoch(dataset, step).mean_loss)
        if step % check_every == 0 or step == max_steps:
            score = evaluate_dice(trainer.model, dataset)
            if score >= target_dice:
                break
    return losses, score
