"""Dataset loading, grayscale conversion, resampling and normalization.

Images are carried around as 2D ``float64`` numpy arrays. A *gray* image
holds intensities in ``[0, 1]``; a *normalized* image holds
``(gray - 0.5) / 0.5`` and so lives in ``[-1, 1]`` until noise is added.

All randomness goes through :func:`make_rng`, which pins the generator to
numpy's PCG64 (seeded through ``SeedSequence``) so that splits and shuffles
are reproducible across machines.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

IMAGE_SUFFIXES = (".png", ".bmp", ".tif", ".tiff", ".pgm", ".jpg", ".jpeg")

# stream tags for make_rng(seed, tag, ...); distinct tags give independent streams
SPLIT_STREAM = 11

NORM_MEAN = 0.5
NORM_STD = 0.5


class ConfigurationError(Exception):
    """Raised when a dataset root or configuration path is unusable."""


class EmptyDatasetError(Exception):
    """Raised when a dataset root holds no class folders."""


class ImageDecodeError(Exception):
    """Raised when an image file cannot be decoded."""

    def __init__(self, path, reason=""):
        self.path = str(path)
        super().__init__(f"cannot decode image {self.path}: {reason}".rstrip(": "))


def make_rng(*seed_words: int) -> np.random.Generator:
    """PCG64 generator keyed on one or more non-negative integers.

    ``make_rng(seed)`` and ``make_rng(seed, stream)`` give independent,
    reproducible streams; every stochastic step of the package derives its
    generator this way.
    """
    words = [int(w) for w in seed_words] or [0]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


@dataclass(frozen=True)
class LabeledSample:
    image_path: str
    class_index: int
    class_name: str


@dataclass
class DatasetSplit:
    train: list[LabeledSample]
    validation: list[LabeledSample]
    seed: int
    validation_fraction: float = 0.2

    def to_manifest(self) -> dict:
        return {
            "seed": self.seed,
            "validation_fraction": self.validation_fraction,
            "train": [s.image_path for s in self.train],
            "validation": [s.image_path for s in self.validation],
        }

    def write_manifest(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_manifest(), indent=2) + "\n")


def list_classes(root) -> list[str]:
    root = Path(root)
    if not root.is_dir():
        raise ConfigurationError(f"dataset root {root} is missing or not a directory")
    try:
        names = sorted(p.name for p in root.iterdir() if p.is_dir())
    except OSError as exc:
        raise ConfigurationError(f"dataset root {root} is unreadable: {exc}") from exc
    if not names:
        raise EmptyDatasetError(f"no class folders found under {root}")
    return names


def load_dataset(root) -> list[LabeledSample]:
    """Collect ``<root>/<class_name>/<image>`` files as labeled samples.

    Class indices follow the lexicographic order of the folder names and
    files within a class are sorted by name, so the result never depends on
    directory listing order.
    """
    root = Path(root)
    samples = []
    for index, name in enumerate(list_classes(root)):
        files = sorted(
            f.name for f in (root / name).iterdir()
            if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES
        )
        samples.extend(LabeledSample(str(root / name / f), index, name) for f in files)
    return samples


def load_gray(path) -> np.ndarray:
    """Decode an image file into a gray array in [0, 1].

    Multi-channel images are averaged over their color channels (alpha is
    dropped) before the /255 mapping.
    """
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("I;16", "I;16B", "I;16L", "I", "F"):
                raise ImageDecodeError(path, f"unsupported pixel mode {img.mode}")
            if img.mode in ("L", "P", "1", "LA", "RGB", "RGBA"):
                if img.mode == "P":
                    img = img.convert("RGB")
                elif img.mode == "1":
                    img = img.convert("L")
            else:
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.float64)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise ImageDecodeError(path, str(exc)) from exc
    if arr.ndim == 3:
        channels = arr.shape[2]
        if channels in (2, 4):  # drop alpha
            arr = arr[:, :, : channels - 1]
        arr = arr.mean(axis=2)
    return arr / 255.0


def save_gray(image: np.ndarray, path) -> None:
    """Write a gray [0, 1] array as an 8-bit PNG (round to nearest)."""
    data = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centers; out-of-range source coordinates clamp to the border
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling of any real-valued 2D array, half-pixel centers."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    if (h, w) == (out_h, out_w):
        return image.copy()
    r0, r1, fr = _axis_weights(h, out_h)
    c0, c1, fc = _axis_weights(w, out_w)
    rows = image[r0, :] * (1.0 - fr)[:, None] + image[r1, :] * fr[:, None]
    return rows[:, c0] * (1.0 - fc)[None, :] + rows[:, c1] * fc[None, :]


def resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a gray image; output clamped to [0, 1]."""
    return np.clip(bilinear(image, out_h, out_w), 0.0, 1.0)


def normalize(image: np.ndarray) -> np.ndarray:
    return (np.asarray(image, dtype=np.float64) - NORM_MEAN) / NORM_STD


def denormalize_to_gray(image: np.ndarray) -> np.ndarray:
    # clamping only bites after noise injection
    return np.clip(np.asarray(image, dtype=np.float64) * NORM_STD + NORM_MEAN, 0.0, 1.0)


def load_normalized(path, size: int | None = None) -> np.ndarray:
    """Load, optionally resize to ``size`` x ``size``, and normalize."""
    gray = load_gray(path)
    if size is not None:
        gray = resize(gray, size, size)
    return normalize(gray)


def split_dataset(samples: Sequence[LabeledSample], validation_fraction: float,
                  seed: int) -> DatasetSplit:
    """Stratified, seeded train/validation split.

    Each class is shuffled with ``make_rng(seed, SPLIT_STREAM, class_index)`` and the last
    ``ceil(n_c * fraction)`` samples go to validation. A class with a single
    sample keeps it in train.
    """
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError(f"validation_fraction must be in (0, 1), got {validation_fraction}")
    by_class: dict[int, list[LabeledSample]] = {}
    for s in samples:
        by_class.setdefault(s.class_index, []).append(s)
    train, validation = [], []
    for cls in sorted(by_class):
        members = by_class[cls]
        order = make_rng(seed, SPLIT_STREAM, cls).permutation(len(members))
        shuffled = [members[i] for i in order]
        n_val = math.ceil(round(len(members) * validation_fraction, 9))
        if len(members) == 1:
            n_val = 0
        cut = len(members) - n_val
        train.extend(shuffled[:cut])
        validation.extend(shuffled[cut:])
    return DatasetSplit(train, validation, seed, validation_fraction)


def read_manifest(path, samples: Sequence[LabeledSample]) -> DatasetSplit:
    """Rebuild a :class:`DatasetSplit` from a manifest written by :meth:`DatasetSplit.write_manifest`."""
    data = json.loads(Path(path).read_text())
    lookup = {os.path.normpath(s.image_path): s for s in samples}
    try:
        train = [lookup[os.path.normpath(p)] for p in data["train"]]
        validation = [lookup[os.path.normpath(p)] for p in data["validation"]]
    except KeyError as exc:
        raise ConfigurationError(f"manifest {path} references unknown image {exc}") from exc
    return DatasetSplit(train, validation, data["seed"], data["validation_fraction"])
