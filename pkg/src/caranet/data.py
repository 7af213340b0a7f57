"""Image/mask ingestion, seeded splits and a synthetic blob generator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = (".png", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    id: str
    image_path: Path
    mask_path: Path


@dataclass
class DatasetManifest:
    root: Path
    train: list[Sample] = field(default_factory=list)
    test: list[Sample] = field(default_factory=list)
    input_size: int = 352

    def split(self, name: str) -> list[Sample]:
        if name == "train":
            return self.train
        if name == "test":
            return self.test
        if name == "all":
            return sorted(self.train + self.test, key=lambda s: s.id)
        raise ValueError(f"unknown split {name!r}")

    def __len__(self) -> int:
        return len(self.train) + len(self.test)


def read_image(path: Path) -> np.ndarray:
    """(3, H, W) float array in [0, 1]; grayscale is replicated to three channels."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read image {path}: {exc}") from exc
    return arr.transpose(2, 0, 1)


def read_mask(path: Path) -> np.ndarray:
    """(H, W) boolean mask, foreground where the 8-bit value exceeds 127."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read mask {path}: {exc}") from exc
    return arr > 127


def write_gray(path: Path, values: np.ndarray) -> None:
    """Write a [0, 1] map as an 8-bit grayscale PNG (value * 255, rounded)."""
    arr = np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def write_rgb(path: Path, image: np.ndarray) -> None:
    arr = np.clip(np.rint(np.asarray(image).transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def _list_rasters(directory: Path) -> dict[str, Path]:
    out = {}
    for p in sorted(directory.iterdir()):
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES:
            if p.stem in out:
                raise DatasetError(f"duplicate id {p.stem!r} in {directory}")
            out[p.stem] = p
    return out


def split_ids(ids: list[str], train_ratio: float, seed: int) -> tuple[list[str], list[str]]:
    """Seeded shuffle, then the first ``round(ratio * n)`` ids go to training."""
    if not 0.0 <= train_ratio <= 1.0:
        raise ValueError("train ratio must lie in [0, 1]")
    ids = sorted(ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(math.floor(train_ratio * len(ids) + 0.5))
    train = sorted(ids[i] for i in order[:n_train])
    test = sorted(ids[i] for i in order[n_train:])
    return train, test


def load_dataset(root: str | Path, train_ratio: float = 0.8, seed: int = 0,
                 input_size: int = 352, check_dims: bool = True) -> DatasetManifest:
    root = Path(root)
    img_dir, mask_dir = root / "images", root / "masks"
    for d in (img_dir, mask_dir):
        if not d.is_dir():
            raise DatasetError(f"missing directory {d}")
    images = _list_rasters(img_dir)
    masks = _list_rasters(mask_dir)
    orphan_images = sorted(images.keys() - masks.keys())
    orphan_masks = sorted(masks.keys() - images.keys())
    if orphan_images:
        raise DatasetError(f"no mask for image {images[orphan_images[0]]}")
    if orphan_masks:
        raise DatasetError(f"no image for mask {masks[orphan_masks[0]]}")
    if check_dims:
        for key in sorted(images):
            with Image.open(images[key]) as a, Image.open(masks[key]) as b:
                if a.size != b.size:
                    raise DatasetError(f"{key}: image is {a.size[1]}x{a.size[0]}, mask is {b.size[1]}x{b.size[0]}")
    train_ids, test_ids = split_ids(list(images), train_ratio, seed)
    make = lambda k: Sample(k, images[k], masks[k])  # noqa: E731
    return DatasetManifest(root, [make(k) for k in train_ids], [make(k) for k in test_ids], input_size)


def resize_image(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear (half-pixel) resize of a (C, H, W) array to size x size."""
    from .tensor import interpolation_matrix

    h, w = image.shape[1:]
    if (h, w) == (size, size):
        return image.copy()
    ah, aw = interpolation_matrix(h, size), interpolation_matrix(w, size)
    return np.einsum("ih,chw,jw->cij", ah, image, aw)


def resize_mask(mask: np.ndarray, size: int) -> np.ndarray:
    return resize_image(np.asarray(mask, dtype=np.float64)[None], size)[0] >= 0.5


def load_pairs(samples: list[Sample], size: int | None) -> list[tuple[str, np.ndarray, np.ndarray]]:
    out = []
    for s in samples:
        img, mask = read_image(s.image_path), read_mask(s.mask_path)
        if img.shape[1:] != mask.shape:
            raise DatasetError(f"{s.id}: image and mask sizes differ")
        if size is not None:
            img, mask = resize_image(img, size), resize_mask(mask, size)
        out.append((s.id, img, mask))
    return out


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def _smooth_noise(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    from .tensor import interpolation_matrix

    coarse = rng.random((cells, cells))
    a = interpolation_matrix(cells, size)
    return a @ coarse @ a.T


def blob(size: int, rng: np.random.Generator, radius: tuple[float, float] = (13.0, 20.0)) -> tuple[np.ndarray, np.ndarray]:
    """One textured RGB image with a single elliptical foreground blob."""
    ry, rx = rng.uniform(*radius, size=2)
    theta = rng.uniform(0, math.pi)
    margin = max(ry, rx) + 2
    cy, cx = rng.uniform(margin, size - margin, size=2)
    yy, xx = np.mgrid[:size, :size] + 0.5
    dy, dx = yy - cy, xx - cx
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    mask = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0

    background = 0.25 + 0.25 * _smooth_noise(rng, size, 5)
    texture = 0.1 * _smooth_noise(rng, size, 9)
    image = np.stack([background + texture, background * 0.8, background * 0.7 + texture])
    tint = np.array([0.45, 0.15, 0.05])[:, None, None]
    image = np.where(mask[None], image + tint, image)
    image = image + rng.normal(0, 0.02, size=image.shape)
    return np.clip(image, 0.0, 1.0), mask


def make_blob_dataset(n: int, size: int = 64, seed: int = 0,
                      radius: tuple[float, float] = (13.0, 20.0)) -> list[tuple[str, np.ndarray, np.ndarray]]:
    rng = np.random.default_rng(seed)
    return [(f"blob_{i:03d}", *blob(size, rng, radius)) for i in range(n)]


def write_dataset(root: str | Path, samples: list[tuple[str, np.ndarray, np.ndarray]]) -> Path:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    for key, img, mask in samples:
        write_rgb(root / "images" / f"{key}.png", img)
        write_gray(root / "masks" / f"{key}.png", mask.astype(np.float64))
    return root
