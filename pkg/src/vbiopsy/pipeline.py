"""End-to-end workflow: run configuration and the steps behind each CLI command.

Every artifact lands in ``RunConfig.output_dir`` under a fixed name (see
``ARTIFACTS``) and is written atomically. All randomness comes from
``RunConfig.seed``; the split, CNN, forest and sweep each use their own
stream tag on top of it.
"""
from __future__ import annotations

import io
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import forest as forest_mod
from .fixtures import make_fixtures
from .ingest import (ConfigurationError, DatasetSplit, ImageDecodeError, LabeledSample,
                     denormalize_to_gray, list_classes, load_dataset, load_gray, normalize,
                     resize, save_gray, split_dataset)
from .metrics import evaluate
from .microcnn import (MicroCnn, TrainConfig, extract_embedding, grad_cam, load_model,
                       model_bytes, softmax, train)
from .radiomics import (CSV_HEADER, FEATURE_NAMES, read_feature_table, radiomics_from_gray,
                        write_feature_rows)
from .robustness import GAUSSIAN_NOISE, RESOLUTION, DegradeSpec, run_sweep
from .segmentation import save_mask

log = logging.getLogger(__name__)

ARTIFACTS = {
    "features": "features.csv",
    "split": "split.json",
    "cnn_model": "cnn.model",
    "cnn_log": "cnn_log.json",
    "sweep_csv": "sweep_{model}.csv",
    "sweep_json": "sweep_{model}.json",
}
MODES = ("radiomics", "fusion")
MODEL_IDS = ("cnn",) + MODES
OVERLAY_ALPHA = 0.4


class MissingArtifactError(FileNotFoundError):
    pass


@dataclass
class CnnSection:
    learning_rate: float = 1e-2  # desk-scale default; TrainConfig keeps 1e-4
    epochs: int = 3
    batch_size: int = 16
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    widths: list = field(default_factory=lambda: [8, 16, 32])


@dataclass
class ForestSection:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    max_features: int | None = None
    bootstrap: bool = True


@dataclass
class RadiomicsSection:
    glcm_levels: int = 256


@dataclass
class SweepSection:
    resolutions: list = field(default_factory=lambda: [64, 48, 32, 16])
    sigmas: list = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.25, 0.5])


@dataclass
class RunConfig:
    dataset_root: str = ""
    test_root: str | None = None
    output_dir: str = "out"
    seed: int = 0
    image_size: int = 64
    validation_fraction: float = 0.2
    cnn: CnnSection = field(default_factory=CnnSection)
    forest: ForestSection = field(default_factory=ForestSection)
    radiomics: RadiomicsSection = field(default_factory=RadiomicsSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    _sections = {"cnn": CnnSection, "forest": ForestSection,
                 "radiomics": RadiomicsSection, "sweep": SweepSection}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            section = cls._sections.get(key)
            if section is not None:
                allowed = {f.name for f in fields(section)}
                bad = set(value) - allowed
                if bad:
                    raise ConfigurationError(f"unknown keys in [{key}]: {sorted(bad)}")
                value = section(**value)
            kwargs[key] = value
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc

    def save(self, path) -> None:
        write_text_atomic(path, json.dumps(self.to_dict(), indent=2) + "\n")

    def validate(self) -> None:
        if not self.dataset_root:
            raise ConfigurationError("dataset_root is not set")
        list_classes(self.dataset_root)
        if self.test_root:
            list_classes(self.test_root)
        if self.image_size % (2 ** len(self.cnn.widths)):
            raise ConfigurationError(
                f"image_size {self.image_size} must be divisible by {2 ** len(self.cnn.widths)}")
        Path(self.output_dir).mkdir(parents=True, exist_ok=True)

    def path(self, key: str, **fmt) -> Path:
        return Path(self.output_dir) / ARTIFACTS[key].format(**fmt)

    def train_config(self) -> TrainConfig:
        c = self.cnn
        return TrainConfig(c.learning_rate, c.epochs, c.batch_size, c.adam_beta1,
                           c.adam_beta2, c.adam_epsilon, self.seed)

    def forest_config(self) -> forest_mod.ForestConfig:
        return forest_mod.ForestConfig(seed=self.seed, **asdict(self.forest))


# --- io helpers -----------------------------------------------------------

def _atomic(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text: str) -> None:
    _atomic(path, text.encode())


def write_json(path, obj) -> None:
    write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"required artifact is missing: {path}")
    return path


# --- data -----------------------------------------------------------------

def class_names(config: RunConfig) -> list[str]:
    return list_classes(config.dataset_root)


def dataset_split(config: RunConfig) -> DatasetSplit:
    return split_dataset(load_dataset(config.dataset_root), config.validation_fraction,
                         config.seed)


def splits(config: RunConfig) -> dict[str, list[LabeledSample]]:
    split = dataset_split(config)
    out = {"train": split.train, "validation": split.validation}
    if config.test_root:
        out["test"] = load_dataset(config.test_root)
    return out


def load_gray_sized(path, size: int) -> np.ndarray:
    return resize(load_gray(path), size, size)


def load_images(samples, size: int):
    """Normalized image stack and labels; undecodable files are skipped and counted."""
    images, labels, kept, errors = [], [], [], 0
    for s in samples:
        try:
            images.append(normalize(load_gray_sized(s.image_path, size)))
        except ImageDecodeError as exc:
            log.warning("%s", exc)
            errors += 1
            continue
        labels.append(s.class_index)
        kept.append(s)
    stack = np.stack(images) if images else np.zeros((0, size, size))
    return stack, np.array(labels, dtype=np.intp), kept, errors


# --- commands -------------------------------------------------------------

def cmd_make_fixtures(out_dir, seed: int = 0, per_class: int = 60, test_per_class: int = 20,
                      size: int = 64) -> RunConfig:
    """Write the synthetic train/test sets plus a ready-to-use config file."""
    out_dir = Path(out_dir)
    make_fixtures(out_dir / "train", per_class, size, seed)
    make_fixtures(out_dir / "test", test_per_class, size, seed + 1)
    config = RunConfig(dataset_root=str(out_dir / "train"), test_root=str(out_dir / "test"),
                       output_dir=str(out_dir / "run"), seed=seed, image_size=size)
    config.save(out_dir / "config.json")
    return config


def cmd_extract(config: RunConfig, resume: bool = False) -> int:
    """Radiomics rows for every image in the dataset (and test) roots.

    Returns the number of images that failed to load.
    """
    path = config.path("features")
    done, existing = set(), ""
    if resume and path.exists():
        existing = path.read_text()
        done = set(read_feature_table(path))
    samples = load_dataset(config.dataset_root)
    if config.test_root:
        samples += load_dataset(config.test_root)
    rows, errors = [], 0
    for s in samples:
        if s.image_path in done:
            continue
        try:
            gray = load_gray_sized(s.image_path, config.image_size)
        except ImageDecodeError as exc:
            log.warning("%s", exc)
            errors += 1
            continue
        vec, _ = radiomics_from_gray(gray, config.radiomics.glcm_levels)
        rows.append((s.image_path, s.class_name, vec))
    buf = io.StringIO()
    if existing:
        buf.write(existing)
    else:
        buf.write(",".join(CSV_HEADER) + "\n")
    write_feature_rows(buf, rows)
    write_text_atomic(path, buf.getvalue())
    log.info("extract: %d new rows, %d errors", len(rows), errors)
    return errors


def cmd_train_cnn(config: RunConfig):
    split = dataset_split(config)
    x_tr, y_tr, _, e1 = load_images(split.train, config.image_size)
    x_va, y_va, _, e2 = load_images(split.validation, config.image_size)
    model = MicroCnn.init(config.seed, config.cnn.widths, len(class_names(config)))
    tlog = train(model, x_tr, y_tr, config.train_config(), x_va, y_va)
    _atomic(config.path("cnn_model"), model_bytes(model))
    write_json(config.path("split"), split.to_manifest())
    write_json(config.path("cnn_log"), tlog.to_dict())
    return model, tlog, e1 + e2


def _features_for(config: RunConfig, samples, table=None):
    """Radiomics vectors for ``samples``, from the feature CSV when present."""
    if table is None and config.path("features").exists():
        table = read_feature_table(config.path("features"))
    out = []
    for s in samples:
        if table is not None and s.image_path in table:
            out.append(table[s.image_path][1])
        else:
            gray = load_gray_sized(s.image_path, config.image_size)
            out.append(radiomics_from_gray(gray, config.radiomics.glcm_levels)[0])
    return out


def design_matrix(config: RunConfig, mode: str, samples, model: MicroCnn | None = None,
                  table=None) -> np.ndarray:
    feats = _features_for(config, samples, table)
    if mode == "radiomics":
        return np.array([f.as_array() for f in feats])
    emb = [extract_embedding(model, normalize(load_gray_sized(s.image_path, config.image_size)))
           for s in samples]
    return np.array([forest_mod.fuse(h, r) for h, r in zip(emb, feats)])


def cmd_train_forest(config: RunConfig, mode: str):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    table = read_feature_table(require(config.path("features")))
    model = load_model(require(config.path("cnn_model"))) if mode == "fusion" else None
    train_samples = splits(config)["train"]
    X = design_matrix(config, mode, train_samples, model, table)
    y = np.array([s.class_index for s in train_samples])
    names = (forest_mod.fused_feature_names(model.embedding_dim) if mode == "fusion"
             else list(FEATURE_NAMES))
    fm = forest_mod.fit_forest(X, y, config.forest_config(), len(class_names(config)), names)
    out = Path(config.output_dir)
    write_text_atomic(out / f"forest_{mode}.json", forest_mod.forest_json(fm))
    write_text_atomic(out / f"importances_{mode}.csv", forest_mod.importances_csv(fm))
    return fm


def load_predictor(config: RunConfig, model_id: str):
    """(predict(images) -> classes, scores(images) -> per-class scores) for a model id."""
    cnn = None
    if model_id in ("cnn", "fusion"):
        cnn = load_model(require(config.path("cnn_model")))
    if model_id == "cnn":
        return cnn.predict, cnn.predict_proba
    if model_id not in MODES:
        raise ValueError(f"unknown model {model_id!r}; expected one of {MODEL_IDS}")
    fm = forest_mod.load_forest(require(Path(config.output_dir) / f"forest_{model_id}.json"))
    levels = config.radiomics.glcm_levels

    def features(images):
        rows = []
        for img in np.asarray(images):
            r = radiomics_from_gray(denormalize_to_gray(img), levels)[0]
            rows.append(forest_mod.fuse(extract_embedding(cnn, img), r) if cnn else r.as_array())
        return np.array(rows)

    return (lambda images: fm.predict(features(images)),
            lambda images: fm.predict_proba(features(images)))


def cmd_eval(config: RunConfig, model_id: str, split: str) -> dict:
    parts = splits(config)
    if split not in parts:
        raise ConfigurationError(f"split {split!r} is not available (is test_root set?)")
    samples = parts[split]
    if not samples:
        raise ValueError(f"split {split!r} is empty")
    images, labels, _, errors = load_images(samples, config.image_size)
    predict, scores = load_predictor(config, model_id)
    report = evaluate(labels, predict(images), len(class_names(config)), scores(images),
                      class_names(config), model_id=model_id, split=split, errors=errors)
    report["score_source"] = "softmax" if model_id == "cnn" else "vote_fraction"
    write_json(Path(config.output_dir) / f"report_{model_id}_{split}.json", report)
    return report


def cmd_gradcam(config: RunConfig, image_path, target="predicted", out_dir=None) -> dict:
    """Case-study bundle: heatmap, overlay, mask rasters and a radiomics profile."""
    model = load_model(require(config.path("cnn_model")))
    gray = load_gray_sized(image_path, config.image_size)
    image = normalize(gray)
    logits = model.forward(image).logits[0]
    target_class = int(np.argmax(logits)) if target == "predicted" else int(target)
    cam = grad_cam(model, image, target_class)
    vec, mask = radiomics_from_gray(gray, config.radiomics.glcm_levels)
    out_dir = Path(out_dir or Path(config.output_dir) / "gradcam")
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(image_path).stem
    overlay = (1.0 - OVERLAY_ALPHA) * gray + OVERLAY_ALPHA * cam.upsampled
    save_gray(cam.upsampled, out_dir / f"{stem}_heatmap.png")
    save_gray(overlay, out_dir / f"{stem}_overlay.png")
    save_mask(mask, out_dir / f"{stem}_mask.png")
    names = class_names(config)
    profile = {
        "image": str(image_path),
        "target_class": target_class,
        "target_name": names[target_class] if target_class < len(names) else str(target_class),
        "probabilities": softmax(logits).tolist(),
        "radiomics": vec.as_dict(),
        "region_found": mask.region_found,
    }
    write_json(out_dir / f"{stem}_radiomics.json", profile)
    return profile


def cmd_sweep(config: RunConfig, model_id: str = "cnn", split: str = "validation"):
    parts = splits(config)
    images, labels, _, errors = load_images(parts[split], config.image_size)
    predict, _ = load_predictor(config, model_id)
    n_classes = len(class_names(config))
    resolutions = [r for r in config.sweep.resolutions if r <= config.image_size]
    res = run_sweep(predict, images, labels,
                    DegradeSpec(RESOLUTION, resolutions, config.seed), n_classes)
    res += run_sweep(predict, images, labels,
                     DegradeSpec(GAUSSIAN_NOISE, config.sweep.sigmas, config.seed), n_classes)
    write_text_atomic(config.path("sweep_csv", model=model_id), res.to_csv())
    write_text_atomic(config.path("sweep_json", model=model_id), res.to_json())
    return res, errors + sum(r.errors for r in res.rows)
