"""Confusion matrices, per-class/macro scores and one-vs-rest ROC."""
from __future__ import annotations

import json
from fractions import Fraction
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class UndefinedAucError(ValueError):
    """ROC needs at least one positive and one negative sample."""


@dataclass
class ClassReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float
    macro_f1: float


@dataclass
class RocCurve:
    class_index: int
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def confusion(y_true, y_pred, n_classes: int) -> np.ndarray:
    """``counts[t, p]`` = samples of true class t predicted as p."""
    y_true = np.asarray(y_true, dtype=np.int64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.size} truths vs {y_pred.size} predictions")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"labels must lie in [0, {n_classes})")
    return np.bincount(y_true * n_classes + y_pred,
                       minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den != 0)


def class_report(cm) -> ClassReport:
    """Per-class precision/recall/F1 with 0/0 -> 0; macro over every class."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    precision = _safe_div(tp, cm.sum(axis=0))
    recall = _safe_div(tp, cm.sum(axis=1))
    # 2TP / (2TP + FP + FN) equals 2PR / (P + R) but rounds only once
    f1 = _safe_div(2 * tp, cm.sum(axis=0) + cm.sum(axis=1))
    total = cm.sum()
    accuracy = float(tp.sum() / total) if total else 0.0
    # macro mean in exact rationals so e.g. (2/3 + 2/3 + 1 + 0) / 4 is 7/12 to the ulp
    num = 2 * tp
    den = cm.sum(axis=0) + cm.sum(axis=1)
    exact = sum((Fraction(int(a), int(b)) for a, b in zip(num, den) if b), Fraction(0))
    macro = float(exact / len(f1)) if len(f1) else 0.0
    return ClassReport(precision, recall, f1, accuracy, macro)


def roc_ovr(y_true, scores, class_index: int) -> RocCurve:
    """One-vs-rest ROC of column ``class_index`` of ``scores``.

    Thresholds sweep the distinct scores from high to low, so tied scores
    move the curve diagonally and the trapezoidal area counts ties as 1/2.
    """
    y_true = np.asarray(y_true).ravel()
    s = np.asarray(scores, dtype=np.float64)
    s = s[:, class_index] if s.ndim == 2 else s
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    pos = y_true == class_index
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError(f"class {class_index} needs positives and negatives")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    pos_sorted = pos[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), len(s_sorted) - 1]
    tp = np.cumsum(pos_sorted)[last_of_run]
    fp = (last_of_run + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s_sorted[last_of_run]]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(class_index, fpr, tpr, thresholds, auc)


def evaluate(y_true, y_pred, n_classes: int, scores=None, class_names=None,
             model_id: str = "", split: str = "", errors: int = 0) -> dict:
    """Full JSON-ready report from labels, predictions and optional scores."""
    cm = confusion(y_true, y_pred, n_classes)
    rep = class_report(cm)
    names = list(class_names) if class_names is not None else [str(i) for i in range(n_classes)]
    per_class = []
    aucs = []
    for c in range(n_classes):
        row = {"name": names[c], "precision": float(rep.precision[c]),
               "recall": float(rep.recall[c]), "f1": float(rep.f1[c])}
        if scores is not None:
            try:
                roc = roc_ovr(y_true, scores, c)
            except UndefinedAucError:
                row["auc"] = None
            else:
                row["auc"] = roc.auc
                row["roc"] = {"fpr": roc.fpr.tolist(), "tpr": roc.tpr.tolist()}
                aucs.append(roc.auc)
        per_class.append(row)
    report = {
        "model_id": model_id,
        "split": split,
        "n": int(cm.sum()),
        "accuracy": rep.accuracy,
        "macro_f1": rep.macro_f1,
        "per_class": per_class,
        "confusion": cm.tolist(),
    }
    if scores is not None:
        report["macro_auc"] = float(np.mean(aucs)) if aucs else None
    if errors:
        report["errors"] = int(errors)
    return report


def evaluate_model(predictor: Callable, samples: Sequence, n_classes: int,
                   scorer: Callable | None = None, **kwargs) -> dict:
    """Run ``predictor(x) -> class`` over ``(x, label)`` pairs.

    A sample whose predictor call raises is tallied under ``errors`` and
    left out of the scores. ``scorer(x)`` optionally yields the per-class
    scores used for ROC.
    """
    if len(samples) == 0:
        raise ValueError("cannot evaluate on an empty sample list")
    truths, preds, scores = [], [], []
    errors = 0
    for x, label in samples:
        try:
            p = int(predictor(x))
            s = scorer(x) if scorer is not None else None
        except Exception:
            errors += 1
            continue
        truths.append(label)
        preds.append(p)
        scores.append(s)
    score_arr = np.array(scores, dtype=np.float64) if scorer is not None and scores else None
    return evaluate(truths, preds, n_classes, score_arr, errors=errors, **kwargs)


REPORT_SCHEMA = {
    "type": "object",
    "required": ["model_id", "split", "n", "accuracy", "macro_f1", "per_class", "confusion"],
    "properties": {
        "model_id": {"type": "string"},
        "split": {"type": "string"},
        "n": {"type": "integer", "minimum": 0},
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "macro_f1": {"type": "number", "minimum": 0, "maximum": 1},
        "macro_auc": {"type": ["number", "null"]},
        "errors": {"type": "integer"},
        "per_class": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "precision", "recall", "f1"],
                "properties": {
                    "name": {"type": "string"},
                    "precision": {"type": "number"},
                    "recall": {"type": "number"},
                    "f1": {"type": "number"},
                    "auc": {"type": ["number", "null"]},
                },
            },
        },
        "confusion": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
    },
}


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
