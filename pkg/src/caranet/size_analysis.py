"""Dice as a function of object size: size ratios, interval-averaged curves, differences."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

SMALL_THRESHOLD = 0.05
INTERVAL_WIDTH = 0.005


@dataclass(frozen=True)
class SizeSample:
    id: str
    size_ratio: float
    dice: float

    def __post_init__(self):
        if not 0.0 <= self.size_ratio <= 1.0:
            raise ValueError(f"{self.id}: size ratio {self.size_ratio} outside [0, 1]")


@dataclass(frozen=True)
class Bin:
    start: float
    end: float
    mean_dice: float | None
    count: int


@dataclass(frozen=True)
class SizeCurve:
    width: float
    bins: tuple[Bin, ...]

    def occupied(self) -> list[Bin]:
        return [b for b in self.bins if b.count]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["bin_start", "bin_end", "mean_dice", "count"])
            for b in self.bins:
                writer.writerow([repr(b.start), repr(b.end), "" if b.mean_dice is None else repr(b.mean_dice), b.count])


@dataclass(frozen=True)
class DifferenceCurve:
    width: float
    starts: tuple[float, ...]
    diffs: tuple[float | None, ...]
    positive_sum: float
    negative_sum: float

    def to_csv(self, path: str | Path, curve_a: SizeCurve) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["bin_start", "bin_end", "mean_dice", "count", "diff"])
            bins_a = list(curve_a.bins) + [None] * (len(self.starts) - len(curve_a.bins))
            for i, (start, d) in enumerate(zip(self.starts, self.diffs)):
                b = bins_a[i]
                mean = "" if b is None or b.mean_dice is None else repr(b.mean_dice)
                count = 0 if b is None else b.count
                writer.writerow([repr(start), repr(_edge(i + 1, self.width)), mean, count,
                                 "" if d is None else repr(d)])
            writer.writerow(["POS_SUM", "NEG_SUM"])
            writer.writerow([repr(self.positive_sum), repr(self.negative_sum)])


def size_ratio(mask: np.ndarray) -> float:
    """Foreground pixel count over total pixel count."""
    m = np.asarray(mask)
    return float(np.count_nonzero(m) / m.size)


def _edge(k: int, width: float) -> float:
    return k * width


def bin_index(ratio: float, width: float) -> int:
    """Index k with ``k*width <= ratio < (k+1)*width`` using the same edge arithmetic as the bins."""
    k = int(math.floor(ratio / width))
    while k > 0 and ratio < _edge(k, width):
        k -= 1
    while ratio >= _edge(k + 1, width):
        k += 1
    return k


def build_curve(samples: Sequence[SizeSample], width: float = INTERVAL_WIDTH) -> SizeCurve:
    if width <= 0:
        raise ValueError("interval width must be positive")
    if not samples:
        raise ValueError("no samples to bin")
    ordered = sorted(samples, key=lambda s: (s.size_ratio, s.id))
    members: dict[int, list[float]] = {}
    for s in ordered:
        members.setdefault(bin_index(s.size_ratio, width), []).append(s.dice)
    bins = []
    for k in range(max(members) + 1):
        vals = members.get(k, [])
        mean = math.fsum(vals) / len(vals) if vals else None
        bins.append(Bin(_edge(k, width), _edge(k + 1, width), mean, len(vals)))
    return SizeCurve(width, tuple(bins))


def filter_small(samples: Sequence[SizeSample], threshold: float = SMALL_THRESHOLD) -> list[SizeSample]:
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    if threshold == 1.0:
        return list(samples)
    return [s for s in samples if s.size_ratio < threshold]


def difference_curve(curve_a: SizeCurve, curve_b: SizeCurve) -> DifferenceCurve:
    """Per-bin ``mean_a - mean_b`` where both bins are occupied, plus signed sums."""
    if curve_a.width != curve_b.width:
        raise ValueError(f"bin widths differ: {curve_a.width} vs {curve_b.width}")
    n = max(len(curve_a.bins), len(curve_b.bins))
    diffs: list[float | None] = []
    for k in range(n):
        a = curve_a.bins[k] if k < len(curve_a.bins) else None
        b = curve_b.bins[k] if k < len(curve_b.bins) else None
        if a is None or b is None or not a.count or not b.count:
            diffs.append(None)
        else:
            diffs.append(a.mean_dice - b.mean_dice)
    present = [d for d in diffs if d is not None]
    pos = math.fsum(max(d, 0.0) for d in present)
    neg = math.fsum(-min(d, 0.0) for d in present)
    return DifferenceCurve(curve_a.width, tuple(_edge(k, curve_a.width) for k in range(n)),
                           tuple(diffs), pos, neg)


def plot_svg(path: str | Path, curve: SizeCurve, other: SizeCurve | None = None,
             labels: tuple[str, str] = ("model", "baseline")) -> None:
    """Line plot of interval-averaged Dice, or a red/blue difference plot when ``other`` is given."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    if other is None:
        occ = curve.occupied()
        x = [100 * (b.start + b.end) / 2 for b in occ]
        ax.plot(x, [b.mean_dice for b in occ], marker="o", label=labels[0])
        ax.set_ylabel("mean Dice")
    else:
        diff = difference_curve(curve, other)
        xs = [100 * (s + diff.width / 2) for s, d in zip(diff.starts, diff.diffs) if d is not None]
        ds = np.array([d for d in diff.diffs if d is not None])
        ax.bar(xs, np.maximum(ds, 0), width=100 * diff.width, color="tab:red")
        ax.bar(xs, np.minimum(ds, 0), width=100 * diff.width, color="tab:blue")
        ax.axhline(0, color="black", linewidth=0.8)
        ax.set_ylabel(f"{labels[0]} - {labels[1]} mean Dice")
        ax.set_title(f"positive {diff.positive_sum:.3f}, negative {diff.negative_sum:.3f}")
    ax.set_xlabel("size ratio (%)")
    fig.tight_layout()
    # fixed salt keeps clip-path ids, and so the file bytes, stable between runs
    with matplotlib.rc_context({"svg.hashsalt": "caranet"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
