"""Heuristic lesion mask: Otsu threshold, 8-connected largest component,
and moment/hull based shape properties."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .ingest import save_gray

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class RegionMask:
    foreground: np.ndarray  # bool, (H, W)
    largest_region: np.ndarray | None = None  # bool, (H, W); None until labeled

    @property
    def height(self) -> int:
        return self.foreground.shape[0]

    @property
    def width(self) -> int:
        return self.foreground.shape[1]

    @property
    def region_found(self) -> bool:
        return self.largest_region is not None and bool(self.largest_region.any())

    @property
    def largest_region_pixels(self) -> list[tuple[int, int]]:
        if self.largest_region is None:
            return []
        return [tuple(rc) for rc in np.argwhere(self.largest_region).tolist()]


@dataclass(frozen=True)
class RegionProps:
    area: int
    eccentricity: float
    solidity: float


def gray_bins(image: np.ndarray) -> np.ndarray:
    """256-level bins used by thresholding: ``floor(v * 255)`` clipped to [0, 255]."""
    return np.clip(np.floor(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.intp)


def otsu_threshold(image: np.ndarray) -> int:
    """Smallest gray level ``t`` maximizing the between-class variance.

    Classes are ``{bin <= t}`` and ``{bin > t}``. For a constant image every
    split has an empty class and the function returns that image's bin, so
    :func:`binarize` yields no foreground.
    """
    bins = gray_bins(image).ravel()
    hist = np.bincount(bins, minlength=256).tolist()
    total = sum(hist)
    weighted_total = sum(i * h for i, h in enumerate(hist))
    # N^2 * between-class variance = (s0*w1 - s1*w0)^2 / (w0*w1); kept as an
    # exact integer fraction so ties resolve to the smallest t
    best_t, best_num, best_den = None, 0, 1
    w0 = s0 = 0
    for t in range(255):
        w0 += hist[t]
        s0 += t * hist[t]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        num = (s0 * w1 - (weighted_total - s0) * w0) ** 2
        den = w0 * w1
        if best_t is None or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    if best_t is None:
        return int(bins[0])
    return best_t


def binarize(image: np.ndarray, threshold: int) -> RegionMask:
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold must be in [0, 255], got {threshold}")
    return RegionMask(foreground=gray_bins(image) > threshold)


def largest_component(mask: RegionMask) -> RegionMask:
    """Keep the largest 8-connected foreground component.

    Ties go to the component whose first pixel comes earliest in raster
    order; scipy numbers components in exactly that order.
    """
    labels, n = ndimage.label(mask.foreground, structure=EIGHT_CONNECTED)
    if n == 0:
        return RegionMask(mask.foreground, np.zeros_like(mask.foreground))
    counts = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    best = int(np.argmax(counts)) + 1
    return RegionMask(mask.foreground, labels == best)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices counter-clockwise.

    Collinear points are dropped, so a degenerate input returns its two
    extreme points (or the single point).
    """
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) <= 2:
        return np.array(pts, dtype=np.float64).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def hull_pixel_count(pixels: np.ndarray) -> int:
    """Number of pixel centers inside or on the convex hull of ``pixels``."""
    hull = convex_hull(pixels)
    if len(hull) == 1:
        return 1
    r_lo, c_lo = pixels.min(axis=0)
    r_hi, c_hi = pixels.max(axis=0)
    rr, cc = np.mgrid[r_lo:r_hi + 1, c_lo:c_hi + 1]
    rr = rr.ravel().astype(np.float64)
    cc = cc.ravel().astype(np.float64)
    if len(hull) == 2:
        (r0, c0), (r1, c1) = hull
        on_line = (r1 - r0) * (cc - c0) - (c1 - c0) * (rr - r0) == 0
        return int(on_line.sum())
    inside = np.ones(rr.shape, dtype=bool)
    for (r0, c0), (r1, c1) in zip(hull, np.roll(hull, -1, axis=0)):
        # counter-clockwise hull: interior is on the non-negative side
        inside &= (r1 - r0) * (cc - c0) - (c1 - c0) * (rr - r0) >= -1e-9
    return int(inside.sum())


def region_props(mask: RegionMask) -> RegionProps:
    if not mask.region_found:
        raise ValueError("region_props needs a non-empty region")
    pixels = np.argwhere(mask.largest_region)
    area = len(pixels)
    coords = pixels.astype(np.float64)
    centered = coords - coords.mean(axis=0)
    cov = centered.T @ centered / area + np.eye(2) / 12.0
    lam_small, lam_big = np.linalg.eigvalsh(cov)
    ecc = float(np.sqrt(max(0.0, 1.0 - lam_small / lam_big))) if lam_big > 0 else 0.0
    solidity = area / hull_pixel_count(pixels)
    return RegionProps(area=area, eccentricity=min(ecc, 1.0), solidity=float(solidity))


def segment(gray: np.ndarray) -> RegionMask:
    """Otsu -> binarize -> largest component."""
    return largest_component(binarize(gray, otsu_threshold(gray)))


def save_mask(mask: RegionMask, path) -> None:
    """Export the selected region as an 8-bit 0/255 raster."""
    region = mask.largest_region if mask.largest_region is not None else mask.foreground
    save_gray(region.astype(np.float64), path)
