"""Inference-time degradation sweeps: resolution round-trip and additive
Gaussian noise on the normalized scale."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ingest import denormalize_to_gray, make_rng, normalize, resize
from .metrics import class_report, confusion

RESOLUTION = "resolution"
GAUSSIAN_NOISE = "gaussian_noise"
NOISE_STREAM = 17
DEFAULT_RESOLUTIONS = (224, 160, 112, 80)
DEFAULT_SIGMAS = (0.0, 0.01, 0.03, 0.05, 0.1)


@dataclass
class DegradeSpec:
    kind: str
    levels: tuple
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (RESOLUTION, GAUSSIAN_NOISE):
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        self.levels = tuple(self.levels)
        if self.kind == RESOLUTION and any(int(r) < 8 for r in self.levels):
            raise ValueError("resolutions must be at least 8 pixels")
        if self.kind == GAUSSIAN_NOISE and any(s < 0 for s in self.levels):
            raise ValueError("noise sigma must be non-negative")


@dataclass
class SweepRow:
    kind: str
    level: float
    n: int
    accuracy: float
    macro_f1: float
    errors: int = 0


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["kind", "level", "n", "accuracy", "macro_f1"])
        for r in self.rows:
            writer.writerow([r.kind, _level_str(r), r.n, repr(r.accuracy), repr(r.macro_f1)])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [{"kind": r.kind, "level": r.level, "n": r.n, "accuracy": r.accuracy,
                 "macro_f1": r.macro_f1, "errors": r.errors} for r in self.rows]
        return json.dumps({"rows": rows}, indent=2) + "\n"

    def __add__(self, other: "SweepResult") -> "SweepResult":
        return SweepResult(self.rows + other.rows)


def _level_str(row: SweepRow) -> str:
    return str(int(row.level)) if row.kind == RESOLUTION else repr(float(row.level))


def degrade_resolution(image: np.ndarray, r: int) -> np.ndarray:
    """Down to r x r and back up to the native size, both bilinear."""
    if r < 8:
        raise ValueError("resolution must be at least 8")
    gray = denormalize_to_gray(image)
    h, w = gray.shape
    return normalize(resize(resize(gray, r, r), h, w))


def add_gaussian_noise(image: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add N(0, sigma^2) per pixel; the result is not clamped."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    image = np.asarray(image, dtype=np.float64)
    if sigma == 0:
        return image.copy()
    return image + rng.normal(0.0, sigma, size=image.shape)


def degrade(image, spec: DegradeSpec, level_index: int, sample_index: int) -> np.ndarray:
    level = spec.levels[level_index]
    if spec.kind == RESOLUTION:
        return degrade_resolution(image, int(level))
    rng = make_rng(spec.seed, NOISE_STREAM, level_index, sample_index)
    return add_gaussian_noise(image, float(level), rng)


def run_sweep(predictor: Callable, images, labels, spec: DegradeSpec, n_classes: int = 4,
              batch_size: int = 64) -> SweepResult:
    """Accuracy and macro-F1 of ``predictor`` at each degradation level.

    ``predictor`` maps a batch ``(N, H, W)`` of normalized images to class
    indices. Samples whose prediction raises are counted in ``errors`` and
    excluded from the scores of that level.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    if len(labels) == 0 or not spec.levels:
        raise ValueError("need samples and at least one level")
    result = SweepResult()
    for li, level in enumerate(spec.levels):
        degraded = np.stack([degrade(img, spec, li, si) for si, img in enumerate(images)])
        preds, keep = [], []
        for start in range(0, len(labels), batch_size):
            chunk = degraded[start:start + batch_size]
            try:
                out = np.asarray(predictor(chunk)).ravel()
                preds.extend(out.tolist())
                keep.extend(range(start, start + len(chunk)))
            except Exception:
                for j, img in enumerate(chunk):
                    try:
                        preds.append(int(np.asarray(predictor(img[None])).ravel()[0]))
                        keep.append(start + j)
                    except Exception:
                        pass
        errors = len(labels) - len(keep)
        if keep:
            rep = class_report(confusion(labels[keep], preds, n_classes))
            acc, mf1 = rep.accuracy, rep.macro_f1
        else:
            acc, mf1 = 0.0, 0.0
        result.rows.append(SweepRow(spec.kind, level, len(keep), acc, mf1, errors))
    return result
