"""Acceptance criteria, one test each.

Every test records a single ``PASS``/``FAIL`` line (shown in the pytest
terminal summary) and then asserts the same condition.
"""
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import (auc_pairs, best_split_bruteforce, finite_difference_check,
                     otsu_bruteforce, relative_error)
from vbiopsy import cli
from vbiopsy.forest import best_split
from vbiopsy.ingest import make_rng, normalize
from vbiopsy.metrics import class_report, confusion, roc_ovr
from vbiopsy.microcnn import MicroCnn, forward, grad_cam, loss_and_backward
from vbiopsy.radiomics import extract_radiomics, glcm, glcm_features, radiomics_from_gray
from vbiopsy.segmentation import gray_bins, otsu_threshold


def record(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{number}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
    return ok


def test_1_kernel_oracles():
    start = time.perf_counter()
    otsu_ok = 0
    for i in range(200):
        rng = make_rng(1000, i)
        img = rng.random((16, 16)) ** rng.uniform(0.3, 3.0)
        otsu_ok += otsu_threshold(img) == otsu_bruteforce(gray_bins(img))

    split_ok, worst_split = 0, 0.0
    for i in range(100):
        rng = make_rng(2000, i)
        n, d = int(rng.integers(2, 51)), int(rng.integers(1, 11))
        X = rng.normal(size=(n, d)) if i % 2 else rng.integers(0, 5, (n, d)).astype(float)
        y = rng.integers(0, int(rng.integers(2, 5)), n)
        got = best_split(X, y, int(y.max()) + 1, range(d))
        want = best_split_bruteforce(X, y)
        if got is None or want is None:
            split_ok += got is None and want is None
            continue
        gap = abs(got[0] - want[0])
        worst_split = max(worst_split, gap)
        split_ok += gap <= 1e-12

    auc_ok, worst_auc = 0, 0.0
    for i in range(100):
        rng = make_rng(3000, i)
        n = int(rng.integers(2, 60))
        labels = np.r_[0, 1, rng.integers(0, 2, n - 2)]
        scores = rng.integers(0, 10, n) / 10 if i % 2 else rng.random(n)
        pos, neg = scores[labels == 1].tolist(), scores[labels == 0].tolist()
        gap = abs(roc_ovr(labels, scores, 1).auc - auc_pairs(pos, neg))
        worst_auc = max(worst_auc, gap)
        auc_ok += gap < 1e-12
    elapsed = time.perf_counter() - start

    ok = otsu_ok == 200 and split_ok == 100 and auc_ok == 100 and elapsed < 10
    record(1, "numerical-kernel oracles", ok,
           f"otsu {otsu_ok}/200, root split {split_ok}/100 (max gap {worst_split:.1e}), "
           f"auc {auc_ok}/100 (max gap {worst_auc:.1e}), {elapsed:.1f}s")
    assert ok


def test_2_gradient_check():
    start = time.perf_counter()
    worst, coverage = 0.0, 1.0
    for seed in range(5):
        model = MicroCnn.init(seed)
        images = make_rng(seed, 99).normal(0, 0.5, (2, 8, 8))
        labels = [seed % 4, (seed + 2) % 4]
        _, grads = loss_and_backward(model, images, labels)
        for name, (num, checked) in finite_difference_check(model, forward, images,
                                                           labels).items():
            coverage = min(coverage, float(checked.mean()))
            worst = max(worst, relative_error(grads[name][checked], num[checked]))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and coverage > 0.9 and elapsed < 60
    record(2, "gradient correctness", ok,
           f"max relative error {worst:.1e} over 8 tensors x 5 seeds, "
           f"min kink-free coverage {coverage:.2f}, {elapsed:.1f}s")
    assert ok


def test_3_gradcam_contract():
    negatives = 0
    for i in range(50):
        model = MicroCnn.init(100 + i)
        img = make_rng(4000, i).normal(0, 0.5, (16, 16))
        negatives += int((grad_cam(model, img, i % 4).raw < 0).any())

    model = MicroCnn.init(7)
    img = make_rng(4100).normal(0, 0.5, (16, 16))
    model.params["head.weight"][1] = 0.0
    zero_cam = grad_cam(model, img, 1)
    zero_ok = not zero_cam.raw.any() and not zero_cam.upsampled.any()

    model = MicroCnn.init(8)
    cam = grad_cam(model, img, 3)
    acts = forward(model, img).activations[0]
    z = acts.shape[1] * acts.shape[2]
    w, b = model.params["head.weight"][3], model.params["head.bias"][3]
    eps = 1e-4
    numeric = []
    for k in range(len(acts)):
        up, down = acts.copy(), acts.copy()
        up[k] += eps
        down[k] -= eps
        diff = (up.mean(axis=(1, 2)) @ w + b) - (down.mean(axis=(1, 2)) @ w + b)
        numeric.append(diff / (2 * eps) / z)
    alpha_err = relative_error(cam.weights, numeric)

    ok = negatives == 0 and zero_ok and alpha_err < 1e-4
    record(3, "grad-cam contract", ok,
           f"{50 - negatives}/50 nonnegative maps, zero head row -> zero map: {zero_ok}, "
           f"alpha relative error {alpha_err:.1e}")
    assert ok


def test_4_closed_form_radiomics():
    constant = glcm_features(glcm(np.full((8, 8), 0.42)))
    stripe = glcm_features(glcm(np.array([[0.0, 1.0, 0.0, 1.0]])))
    want = (65025.0, 1 / 256, 1.0)
    gray = np.full((16, 16), 0.1)
    gray[4:9, 5:10] = 0.9
    square, _ = radiomics_from_gray(gray)
    shape = (square.area, square.eccentricity, square.solidity)

    ok = (constant == (0.0, 1.0, 0.0)
          and all(abs(a - b) <= 1e-9 for a, b in zip(stripe, want))
          and all(abs(a - b) <= 1e-9 for a, b in zip(shape, (25.0, 0.0, 1.0))))
    record(4, "closed-form radiomics", ok,
           f"constant {constant}, stripe {tuple(round(v, 9) for v in stripe)}, "
           f"square {tuple(round(v, 9) for v in shape)}")
    assert ok


def test_5_metric_arithmetic():
    rep = class_report(confusion([0, 0, 1, 2], [0, 1, 1, 2], 4))
    ok = rep.accuracy == 0.75 and rep.macro_f1 == 7 / 12
    record(5, "metric arithmetic", ok, f"accuracy {rep.accuracy!r}, macro-F1 {rep.macro_f1!r}")
    assert ok


STEPS = [["extract"], ["train-cnn"], ["train-forest", "--mode", "radiomics"],
         ["train-forest", "--mode", "fusion"],
         ["eval", "--model", "cnn"], ["eval", "--model", "radiomics"],
         ["eval", "--model", "fusion"], ["sweep", "--model", "cnn"]]


def full_run(base: Path, seed: int = 0):
    """make-fixtures plus every pipeline step, with paths relative to ``base``."""
    old = os.getcwd()
    os.chdir(base)
    try:
        start = time.perf_counter()
        codes = [cli.main(["--out", "fx", "--seed", str(seed), "make-fixtures"])]
        for step in STEPS:
            codes.append(cli.main(["--config", "fx/config.json", *step]))
        return codes, time.perf_counter() - start
    finally:
        os.chdir(old)


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    a, b = tmp_path_factory.mktemp("run_a"), tmp_path_factory.mktemp("run_b")
    return (a, *full_run(a)), (b, *full_run(b))


def test_6_end_to_end_trends(two_runs):
    base, codes, elapsed = two_runs[0]
    out = base / "fx" / "run"
    reports = {m: json.loads((out / f"report_{m}_validation.json").read_text())
               for m in ("cnn", "radiomics", "fusion")}
    tlog = json.loads((out / "cnn_log.json").read_text())
    cnn_acc = tlog["validation_accuracy"][-1]
    f1 = {m: r["macro_f1"] for m, r in reports.items()}
    lines = (out / "sweep_cnn.csv").read_text().splitlines()[1:]
    res = [float(l.split(",")[3]) for l in lines if l.startswith("resolution")]
    noise = {float(l.split(",")[1]): float(l.split(",")[3])
             for l in lines if l.startswith("gaussian_noise")}

    checks = {
        "cnn>=0.90": cnn_acc >= 0.90,
        "fusion": f1["fusion"] >= max(f1["cnn"], f1["radiomics"]) - 0.02,
        "resolution": len(res) == 4 and all(b <= a + 0.05 for a, b in zip(res, res[1:])),
        "noise": noise[0.5] <= noise[0.0] - 0.15,
        "runtime": elapsed < 300 and all(c == 0 for c in codes),
    }
    ok = all(checks.values())
    record(6, "end-to-end trends", ok,
           f"cnn val acc {cnn_acc:.3f}; macro-F1 cnn {f1['cnn']:.3f} radiomics "
           f"{f1['radiomics']:.3f} fusion {f1['fusion']:.3f}; resolution 64/48/32/16 "
           f"{'/'.join(f'{v:.3f}' for v in res)}; noise 0 -> 0.5 "
           f"{noise[0.0]:.3f} -> {noise[0.5]:.3f}; {elapsed:.0f}s"
           + ("" if ok else f"; failed {[k for k, v in checks.items() if not v]}"))
    assert ok


def test_7_determinism(two_runs):
    (a, _, _), (b, _, _) = two_runs
    files = sorted(p.relative_to(a) for p in (a / "fx" / "run").rglob("*") if p.is_file())
    same = [f for f in files if (b / f).exists() and (a / f).read_bytes() == (b / f).read_bytes()]
    expected = {"features.csv", "cnn.model", "sweep_cnn.csv", "report_fusion_validation.json",
                "forest_fusion.json"}
    covered = expected <= {f.name for f in files}
    ok = covered and len(same) == len(files)
    record(7, "determinism", ok, f"{len(same)}/{len(files)} artifacts byte-identical")
    assert ok


def fuzz_corpus(n=1000):
    rng = make_rng(5000)
    for i in range(n):
        h, w = int(rng.integers(1, 40)), int(rng.integers(1, 40))
        kind = i % 5
        if kind == 0:
            gray = rng.random((h, w))
        elif kind == 1:
            gray = np.full((h, w), rng.choice([0.0, 1.0, rng.random()]))
        elif kind == 2:
            gray = np.zeros((h, w))
            gray[rng.integers(h), rng.integers(w)] = 1.0
        elif kind == 3:
            gray = (np.indices((h, w)).sum(axis=0) % 2).astype(float)
        else:
            gray = rng.normal(0.5, 2.0, (h, w))  # far outside [0, 1] after normalizing
        yield normalize(gray)


def test_8_fuzz_extraction():
    crashes, bad = 0, 0
    for img in fuzz_corpus():
        try:
            vec = extract_radiomics(img).as_array()
        except Exception:
            crashes += 1
            continue
        bad += int(not np.isfinite(vec).all())
    ok = crashes == 0 and bad == 0
    record(8, "fuzz robustness", ok, f"1000 images, {crashes} crashes, {bad} non-finite vectors")
    assert ok
