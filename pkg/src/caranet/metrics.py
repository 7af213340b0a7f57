"""Segmentation quality measures: Dice, IoU, weighted F, S-measure, max E-measure, MAE."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.ndimage import correlate

from .size_analysis import size_ratio

THRESHOLD = 0.5
COLUMNS = ("id", "dice", "iou", "fbw", "salpha", "ephimax", "mae", "size_ratio")


def _check(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if gt.dtype != bool:
        gt = gt > 0.5
    return pred, gt


def binarize(pred: np.ndarray, threshold: float = THRESHOLD) -> np.ndarray:
    pred = np.asarray(pred)
    return pred if pred.dtype == bool else pred >= threshold


def dice(pred_bin: np.ndarray, gt: np.ndarray) -> float:
    p, g = _check(binarize(pred_bin), gt)
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / denom


def iou(pred_bin: np.ndarray, gt: np.ndarray) -> float:
    p, g = _check(binarize(pred_bin), gt)
    union = int((p | g).sum())
    if union == 0:
        return 1.0
    return int((p & g).sum()) / union


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    p, g = _check(pred, gt)
    return float(np.abs(np.clip(p.astype(np.float64), 0, 1) - g).mean())


# ---------------------------------------------------------------------------
# weighted F-measure
# ---------------------------------------------------------------------------

def nearest_foreground(gt: np.ndarray, max_block: int = 1 << 22) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact Euclidean distance to the nearest foreground pixel and its (row, col).

    Ties go to the smallest column, then the smallest row. Foreground pixels
    map to themselves. ``gt`` must contain at least one foreground pixel.
    """
    gt = np.asarray(gt, dtype=bool)
    h, w = gt.shape
    rows = np.arange(h)[:, None]
    # nearest foreground row within each column (ties to the upper row)
    above = np.where(gt, rows, -1)
    above = np.maximum.accumulate(above, axis=0)
    below = np.where(gt, rows, h + w + h)
    below = np.minimum.accumulate(below[::-1], axis=0)[::-1]
    d_above = np.where(above >= 0, rows - above, np.inf)
    d_below = below - rows
    use_above = d_above <= d_below
    vert = np.where(use_above, d_above, d_below)
    vrow = np.where(use_above, above, below)
    empty_col = ~gt.any(axis=0)
    vert[:, empty_col] = np.inf

    dist2 = np.empty((h, w))
    ncol = np.empty((h, w), dtype=np.intp)
    cols = np.arange(w)
    dx2 = (cols[:, None] - cols[None, :]).astype(np.float64) ** 2  # (j, c)
    chunk = max(1, max_block // (w * w))
    for r0 in range(0, h, chunk):
        v2 = vert[r0:r0 + chunk] ** 2  # (r, c)
        cand = dx2[None, :, :] + v2[:, None, :]  # (r, j, c)
        best = cand.argmin(axis=2)
        ncol[r0:r0 + chunk] = best
        dist2[r0:r0 + chunk] = np.take_along_axis(cand, best[..., None], axis=2)[..., 0]
    nrow = vrow[np.arange(h)[:, None], ncol]
    return np.sqrt(dist2), nrow, ncol


def gaussian_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    r = (size - 1) / 2
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    k = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    return k / k.sum()


def f_beta_w(pred: np.ndarray, gt: np.ndarray, beta2: float = 1.0) -> float:
    pred, gt = _check(pred, gt)
    pred = np.clip(pred.astype(np.float64), 0.0, 1.0)
    if not gt.any():
        return 0.0 if binarize(pred).any() else 1.0
    err = np.abs(pred - gt)
    dist, nrow, ncol = nearest_foreground(gt)
    # background errors are replaced by the error at the nearest foreground pixel
    et = err[nrow, ncol]
    ea = correlate(et, gaussian_kernel(), mode="constant", cval=0.0)
    min_e = np.where(gt & (ea < err), ea, err)
    importance = np.where(gt, 1.0, 2.0 - np.exp(math.log(0.5) / 5.0 * dist))
    ew = min_e * importance
    tp = gt.sum() - ew[gt].sum()
    fp = ew[~gt].sum()
    recall = 1.0 - ew[gt].mean()
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    denom = beta2 * precision + recall
    if denom <= 0:
        return 0.0
    return float((1 + beta2) * precision * recall / denom)


# ---------------------------------------------------------------------------
# structure measure
# ---------------------------------------------------------------------------

def _object_score(values: np.ndarray) -> float:
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma)


def _s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    u = gt.mean()
    fg = _object_score(pred[gt])
    bg = _object_score(1.0 - pred[~gt])
    return u * fg + (1 - u) * bg


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def centroid(gt: np.ndarray) -> tuple[int, int]:
    """1-based rounded centroid (x, y); image centre when the mask is empty."""
    h, w = gt.shape
    total = gt.sum()
    if total == 0:
        return _round_half_up(w / 2), _round_half_up(h / 2)
    x = (gt.sum(axis=0) * np.arange(1, w + 1)).sum() / total
    y = (gt.sum(axis=1) * np.arange(1, h + 1)).sum() / total
    return _round_half_up(x), _round_half_up(y)


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    x, y = pred.mean(), gt.mean()
    dof = max(n - 1, 1)
    sx = ((pred - x) ** 2).sum() / dof
    sy = ((gt - y) ** 2).sum() / dof
    sxy = ((pred - x) * (gt - y)).sum() / dof
    a = 4 * x * y * sxy
    b = (x * x + y * y) * (sx + sy)
    if a != 0:
        return a / b
    return 1.0 if b == 0 else 0.0


def _s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    x, y = centroid(gt)
    g = gt.astype(np.float64)
    area = h * w
    weights = [x * y / area, (w - x) * y / area, x * (h - y) / area]
    weights.append(1.0 - sum(weights))
    quads = [(slice(0, y), slice(0, x)), (slice(0, y), slice(x, w)),
             (slice(y, h), slice(0, x)), (slice(y, h), slice(x, w))]
    score = 0.0
    for wt, (rs, cs) in zip(weights, quads):
        p = pred[rs, cs]
        if p.size:
            score += wt * _ssim(p, g[rs, cs])
    return score


def s_alpha(pred: np.ndarray, gt: np.ndarray, alpha: float = 0.5) -> float:
    pred, gt = _check(pred, gt)
    pred = np.clip(pred.astype(np.float64), 0.0, 1.0)
    y = gt.mean()
    if y == 0:
        return float(1.0 - pred.mean())
    if y == 1:
        return float(pred.mean())
    q = alpha * _s_object(pred, gt) + (1 - alpha) * _s_region(pred, gt)
    return float(min(max(q, 0.0), 1.0))


# ---------------------------------------------------------------------------
# enhanced alignment
# ---------------------------------------------------------------------------

def thresholds(n: int = 256) -> np.ndarray:
    return np.arange(n) / (n - 1)


def e_phi_curve(pred: np.ndarray, gt: np.ndarray, n_thresholds: int = 256) -> np.ndarray:
    """Enhanced-alignment score of ``pred >= t`` for every threshold t."""
    pred, gt = _check(pred, gt)
    pred = np.clip(pred.astype(np.float64), 0.0, 1.0)
    ts = thresholds(n_thresholds)
    n = gt.size
    n_fg = int(gt.sum())
    fg_sorted = np.sort(pred[gt])
    bg_sorted = np.sort(pred[~gt])
    tp = fg_sorted.size - np.searchsorted(fg_sorted, ts, side="left")
    fp = bg_sorted.size - np.searchsorted(bg_sorted, ts, side="left")
    k = tp + fp
    if n_fg == 0:
        return (n - k) / n
    if n_fg == n:
        return k / n
    mu_f = k / n
    mu_g = n_fg / n
    total = np.zeros(len(ts))
    # a binary map against a binary mask yields four distinct alignment values
    for f_val, g_val, count in ((1.0, 1.0, tp), (1.0, 0.0, fp),
                                (0.0, 1.0, n_fg - tp), (0.0, 0.0, n - n_fg - fp)):
        af = f_val - mu_f
        ag = g_val - mu_g
        align = 2.0 * af * ag / (af * af + ag * ag)
        total += count * (align + 1.0) ** 2 / 4.0
    return total / n


def e_phi_max(pred: np.ndarray, gt: np.ndarray, n_thresholds: int = 256) -> float:
    return float(e_phi_curve(pred, gt, n_thresholds).max())


# ---------------------------------------------------------------------------
# dataset evaluation
# ---------------------------------------------------------------------------

@dataclass
class MetricRow:
    id: str
    dice: float
    iou: float
    fbw: float
    salpha: float
    ephimax: float
    mae: float
    size_ratio: float

    def values(self) -> tuple[float, ...]:
        return (self.dice, self.iou, self.fbw, self.salpha, self.ephimax, self.mae, self.size_ratio)


@dataclass
class MetricReport:
    rows: list[MetricRow] = field(default_factory=list)

    @property
    def means(self) -> dict[str, float]:
        # accumulate in row order so rounding is reproducible
        n = len(self.rows)
        sums = [0.0] * 7
        for row in self.rows:
            for i, v in enumerate(row.values()):
                sums[i] += v
        return {name: s / n for name, s in zip(COLUMNS[1:], sums)}

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(COLUMNS)
            for row in self.rows:
                writer.writerow([row.id, *(repr(float(v)) for v in row.values())])
            writer.writerow(["MEAN", *(repr(float(v)) for v in self.means.values())])

    @classmethod
    def from_csv(cls, path: str | Path) -> "MetricReport":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [MetricRow(r[0], *map(float, r[1:])) for r in reader if r and r[0] != "MEAN"]
        return cls(rows)


def evaluate_pair(key: str, pred: np.ndarray, gt: np.ndarray) -> MetricRow:
    try:
        pred, gt = _check(pred, gt)
    except ValueError as exc:
        raise ValueError(f"{key}: {exc}") from None
    pred = np.clip(np.asarray(pred, dtype=np.float64), 0.0, 1.0)
    hard = binarize(pred)
    return MetricRow(key, dice(hard, gt), iou(hard, gt), f_beta_w(pred, gt), s_alpha(pred, gt),
                     e_phi_max(pred, gt), mae(pred, gt), size_ratio(gt))


def evaluate_dataset(pairs: Iterable[tuple[str, np.ndarray, np.ndarray]]) -> MetricReport:
    rows = [evaluate_pair(key, pred, gt) for key, pred, gt in pairs]
    if not rows:
        raise ValueError("no prediction/ground-truth pairs to evaluate")
    return MetricReport(rows)
