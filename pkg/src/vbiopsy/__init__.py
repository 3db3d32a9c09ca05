"""Virtual-biopsy toolkit: radiomics, a small numpy CNN with Grad-CAM,
random-forest fusion, evaluation metrics and robustness sweeps."""

from .forest import ForestConfig, ForestModel, fit_forest, fit_tree, fuse
from .ingest import (denormalize_to_gray, load_dataset, load_gray, make_rng, normalize, resize,
                     split_dataset)
from .metrics import class_report, confusion, evaluate, roc_ovr
from .microcnn import MicroCnn, TrainConfig, extract_embedding, grad_cam, train
from .radiomics import FEATURE_NAMES, RadiomicsVector, extract_radiomics, glcm, glcm_features
from .robustness import DegradeSpec, add_gaussian_noise, degrade_resolution, run_sweep
from .segmentation import largest_component, otsu_threshold, region_props

__version__ = "0.1.0"

__all__ = [
    "ForestConfig", "ForestModel", "fit_forest", "fit_tree", "fuse",
    "denormalize_to_gray", "load_dataset", "load_gray", "make_rng", "normalize", "resize",
    "split_dataset",
    "class_report", "confusion", "evaluate", "roc_ovr",
    "MicroCnn", "TrainConfig", "extract_embedding", "grad_cam", "train",
    "FEATURE_NAMES", "RadiomicsVector", "extract_radiomics", "glcm", "glcm_features",
    "DegradeSpec", "add_gaussian_noise", "degrade_resolution", "run_sweep",
    "largest_component", "otsu_threshold", "region_props",
]
