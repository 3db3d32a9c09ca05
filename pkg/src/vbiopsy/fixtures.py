"""Synthetic four-class dataset for desk-scale runs.

Classes (folder names sort in this order): a bright ellipse, a dark
ellipse, an empty field, and a striped texture, each on a noisy mid-gray
background. Images are written as 8-bit PNG.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .ingest import make_rng, save_gray

CLASS_NAMES = ("bright_ellipse", "dark_ellipse", "empty", "texture_stripe")
FIXTURE_STREAM = 101


def _background(rng, size):
    level = rng.uniform(0.38, 0.55)
    return level + rng.normal(0.0, 0.03, (size, size))


def _ellipse_mask(rng, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = rng.uniform(0.3, 0.7, 2) * size
    a, b = rng.uniform(0.16, 0.28, 2) * size
    theta = rng.uniform(0.0, np.pi)
    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def make_image(class_name: str, rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """One gray image in [0, 1] of the given synthetic class."""
    img = _background(rng, size)
    if class_name in ("bright_ellipse", "dark_ellipse"):
        sign = 1.0 if class_name == "bright_ellipse" else -1.0
        img[_ellipse_mask(rng, size)] += sign * rng.uniform(0.3, 0.42)
    elif class_name == "texture_stripe":
        yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
        theta = rng.uniform(0.0, np.pi)
        period = rng.uniform(4.0, 8.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        t = xx * np.cos(theta) + yy * np.sin(theta)
        img += rng.uniform(0.15, 0.22) * np.sign(np.sin(2 * np.pi * t / period + phase))
    elif class_name != "empty":
        raise ValueError(f"unknown fixture class {class_name!r}")
    return np.clip(img, 0.0, 1.0)


def make_fixtures(root, per_class: int = 60, size: int = 64, seed: int = 0) -> list[Path]:
    """Write ``<root>/<class>/<class>_NNN.png`` for every synthetic class."""
    root = Path(root)
    written = []
    for ci, name in enumerate(CLASS_NAMES):
        folder = root / name
        folder.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            rng = make_rng(seed, FIXTURE_STREAM, ci, i)
            path = folder / f"{name}_{i:03d}.png"
            save_gray(make_image(name, rng, size), path)
            written.append(path)
    return written
