"""Eight handcrafted descriptors per image: shape, intensity and GLCM texture."""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields

import numpy as np

from .ingest import denormalize_to_gray
from .segmentation import RegionMask, region_props, segment

FEATURE_NAMES = (
    "area",
    "eccentricity",
    "solidity",
    "mean_intensity",
    "std_intensity",
    "glcm_contrast",
    "glcm_homogeneity",
    "glcm_entropy",
)
CSV_HEADER = ("path", "label") + FEATURE_NAMES


class DegenerateImageError(ValueError):
    """Raised when an image is too narrow to form a horizontal pixel pair."""


@dataclass(frozen=True)
class RadiomicsVector:
    area: float
    eccentricity: float
    solidity: float
    mean_intensity: float
    std_intensity: float
    glcm_contrast: float
    glcm_homogeneity: float
    glcm_entropy: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "RadiomicsVector":
        values = [float(v) for v in values]
        if len(values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} values, got {len(values)}")
        return cls(*values)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def glcm(image: np.ndarray, levels: int = 256) -> np.ndarray:
    """Symmetric, normalized co-occurrence matrix for the (0, +1) offset.

    Pixels are quantized with ``min(floor(v * levels), levels - 1)``.
    """
    image = np.asarray(image, dtype=np.float64)
    if levels < 2:
        raise ValueError("levels must be at least 2")
    if image.ndim != 2 or image.shape[1] < 2:
        raise DegenerateImageError("GLCM needs an image at least 2 pixels wide")
    q = np.minimum(np.floor(image * levels), levels - 1).clip(0).astype(np.intp)
    left = q[:, :-1].ravel()
    right = q[:, 1:].ravel()
    counts = np.bincount(left * levels + right, minlength=levels * levels)
    counts = counts.reshape(levels, levels).astype(np.float64)
    counts += counts.T
    return counts / counts.sum()


def glcm_features(P: np.ndarray) -> tuple[float, float, float]:
    """(contrast, homogeneity, entropy in bits) of a normalized GLCM."""
    n = P.shape[0]
    i, j = np.indices((n, n))
    diff = np.abs(i - j).astype(np.float64)
    contrast = float(np.sum(P * diff * diff))
    homogeneity = float(np.sum(P / (1.0 + diff)))
    nz = P[P > 0]
    entropy = float(-np.sum(nz * np.log2(nz))) + 0.0
    return contrast, homogeneity, entropy


def intensity_stats(image: np.ndarray, mask: RegionMask) -> tuple[float, float]:
    """Mean and population std inside the region, or over the whole image
    when no region was found."""
    image = np.asarray(image, dtype=np.float64)
    values = image[mask.largest_region] if mask.region_found else image.ravel()
    return float(values.mean()), float(values.std())


def radiomics_from_gray(gray: np.ndarray, levels: int = 256) -> tuple[RadiomicsVector, RegionMask]:
    """Feature vector plus the mask it was measured on."""
    mask = segment(gray)
    if mask.region_found:
        props = region_props(mask)
        shape = (float(props.area), props.eccentricity, props.solidity)
    else:
        shape = (0.0, 0.0, 0.0)
    mean, std = intensity_stats(gray, mask)
    try:
        texture = glcm_features(glcm(gray, levels))
    except DegenerateImageError:
        texture = (0.0, 1.0, 0.0)
    return RadiomicsVector(*shape, mean, std, *texture), mask


def extract_radiomics(image: np.ndarray, levels: int = 256) -> RadiomicsVector:
    """Radiomics vector of a normalized image (denormalized and clamped first)."""
    vec, _ = radiomics_from_gray(denormalize_to_gray(image), levels)
    return vec


def format_float(value: float) -> str:
    return repr(float(value))


def write_feature_rows(handle, rows) -> None:
    """Write ``(path, label, RadiomicsVector)`` rows to an open CSV handle."""
    writer = csv.writer(handle, lineterminator="\n")
    for path, label, vec in rows:
        writer.writerow([path, label] + [format_float(v) for v in astuple(vec)])


def read_feature_table(path) -> dict[str, tuple[str, RadiomicsVector]]:
    """Map image path -> (label, vector) from a feature CSV."""
    table = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"{path} does not carry the feature table header")
        for row in reader:
            table[row[0]] = (row[1], RadiomicsVector.from_array(row[2:]))
    return table
