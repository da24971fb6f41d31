"""Acceptance criteria 1 to 10. Each test prints one ``ACCEPTANCE n PASS|FAIL|SKIP`` line.

Criteria 6 and 8 train desk-scale models and are marked ``slow``; criterion 9
needs real Herlev data and a pretrained conv1 archive (``CYTOSCREEN_HERLEV``
and ``CYTOSCREEN_CONV1_WEIGHTS``) and is skipped without them.
"""

import json
import os
import time

import numpy as np
import pytest

from cytoscreen import classification as clf
from cytoscreen import imgproc, metrics, texture
from cytoscreen.cli import EXIT_OK, main
from cytoscreen.dataset import CLASSES, SplitSpec, load_herlev, stratified_splits
from cytoscreen.nnet import TrainConfig, check_gradients, train
from cytoscreen.segmentation import SelectiveSegmenter
from cytoscreen.synth import synth_cells, synth_slides

from gradnets import CASES
from oracles import flood_fill_oracle, fscore_oracle, glcm_oracle, median_oracle, otsu_oracle, zsi_oracle

SEEDS = range(5)


# -- 1 ------------------------------------------------------------------------------------

def test_criterion_01_metric_oracles(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    mismatches, worst_identity = 0, 0.0
    for _ in range(1000):
        density = rng.uniform(0.05, 0.95, 2)
        pred, gt = rng.random((16, 16)) < density[0], rng.random((16, 16)) < density[1]
        s = metrics.pixel_fscore(pred, gt)
        z = metrics.zsi(pred, gt)
        mismatches += (s.f != fscore_oracle(pred, gt)) + (z != zsi_oracle(pred, gt))
        worst_identity = max(worst_identity, abs(s.f - z))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and worst_identity <= 1e-12 and elapsed < 5
    verdict(1, "metric oracles on 1000 mask pairs", ok,
            f"mismatches={mismatches} |F-ZSI|max={worst_identity:.1e} t={elapsed:.2f}s")
    assert ok


# -- 2 ------------------------------------------------------------------------------------

def test_criterion_02_classical_op_oracles(verdict):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    bad = {"median": 0, "otsu": 0, "components": 0, "glcm": 0}
    cfg = texture.GlcmConfig()
    for _ in range(100):
        h, w = (int(v) for v in rng.integers(3, 17, 2))
        img = rng.integers(0, 256, (h, w), dtype=np.uint8)
        win = int(rng.choice([3, 5]))
        bad["median"] += not np.array_equal(imgproc.median_filter(img, win), median_oracle(img, win))
        bad["otsu"] += imgproc.otsu_threshold(img) != otsu_oracle(img)
        mask = rng.random((h, w)) < rng.uniform(0.2, 0.7)
        lbl = imgproc.connected_components(mask)
        ref, count = flood_fill_oracle(mask)
        bad["components"] += lbl.component_count != count or not np.array_equal(lbl.labels, ref)
        g = texture.glcm(img, cfg)
        bad["glcm"] += not np.allclose(g, glcm_oracle(img, cfg.levels, cfg.offsets), rtol=0, atol=1e-9)
    elapsed = time.perf_counter() - t0
    ok = not any(bad.values()) and elapsed < 30
    verdict(2, "median/Otsu/components/GLCM oracles on 100 images", ok,
            " ".join(f"{k}={v}" for k, v in bad.items()) + f" t={elapsed:.1f}s")
    assert ok


# -- 3 ------------------------------------------------------------------------------------

def test_criterion_03_gradient_checks(verdict):
    t0 = time.perf_counter()
    worst = {}
    for kind, make in sorted(CASES.items()):
        for seed in range(20):
            (net, x, target), loss = make(seed)
            worst[kind] = max(worst.get(kind, 0.0), max(check_gradients(net, x, target, loss).values()))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 120
    verdict(3, "finite-difference gradient checks, 20 instances per layer kind", ok,
            " ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f" t={elapsed:.1f}s")
    assert ok


# -- 4 ------------------------------------------------------------------------------------

def test_criterion_04_freeze_contract(verdict):
    cells = synth_cells(14, seed=11, size=48)
    X, y = [c.image for c in cells], [c.label for c in cells]
    fast = dict(epochs=3, hidden=16, batch_size=8)
    changed = []
    for depth in ("conv1", "conv3", "conv5"):
        m = clf.TransferClassifier(depth=depth, **fast)
        before = m.build(2).param_digest(trainable=False)
        m.fit(X, y)
        changed += [depth] if m.net_.param_digest(trainable=False) != before else []
    crops, labels, _ = clf.multicell_training_set(synth_slides(2, seed=4))
    mc = clf.MultiCellClassifier(epochs=2, hidden=8, conv_filters=4, batch_size=8)
    before = mc.build(2).param_digest(trainable=False)
    mc.fit(crops, labels)
    changed += ["multicell"] if mc.net_.param_digest(trainable=False) != before else []
    # raw train() on images, with the frozen bank inside the forward pass
    net = clf.build_convnt("conv1", 2, hidden=8)
    before = net.param_digest(trainable=False)
    train(net, clf.prepare_input(X[:6]), np.arange(6) % 2, TrainConfig(epochs=2, batch_size=3))
    changed += ["train()"] if net.param_digest(trainable=False) != before else []
    ok = not changed
    verdict(4, "frozen parameters bit-identical after training", ok,
            f"checked conv1/conv3/conv5/multicell/train(); changed={changed}")
    assert ok


# -- 5 ------------------------------------------------------------------------------------

def _overfit_run(X, y):
    d = TrainConfig()
    model = clf.TransferClassifier(depth="conv1", epochs=500, batch_size=d.batch_size, lr=d.lr,
                                   momentum=d.momentum, lr_decay=d.lr_decay,
                                   lr_decay_epoch=d.lr_decay_epoch, loss=d.loss, seed=d.seed)
    net = model.build(2)
    F = clf.extract_features(net, X)
    # validating on the training set gives end-of-epoch training accuracy
    model._fit_features(F, y, F, y)
    first = next((e + 1 for e, a in enumerate(model.history_.val_acc) if a == 1.0), None)
    return model, first, float(np.mean(model.predict_features(F) == np.asarray(y, dtype=object)))


def test_criterion_05_overfit_sanity(verdict):
    cells = synth_cells(20, seed=0)
    X, y = [c.image for c in cells], [c.label for c in cells]
    t0 = time.perf_counter()
    a, first, final_acc = _overfit_run(X, y)
    b, first_b, _ = _overfit_run(X, y)
    elapsed = time.perf_counter() - t0
    same = a.net_.param_digest() == b.net_.param_digest() and first == first_b
    ok = first is not None and first <= 500 and final_acc == 1.0 and same
    verdict(5, "conv1T head reaches 100% training accuracy on 20 samples", ok,
            f"first 100% epoch={first} final acc={final_acc:.2f} deterministic={same} t={elapsed:.0f}s")
    assert ok


# -- 6 ------------------------------------------------------------------------------------

def _mean_f(model, test):
    preds = model.predict([c.image for c in test])
    return float(np.mean([metrics.pixel_fscore(p, c.gt_mask).f for p, c in zip(preds, test)]))


@pytest.mark.slow
def test_criterion_06_segmentation_desk_scale(verdict):
    t0 = time.perf_counter()
    three, two = [], []
    for s in SEEDS:
        train_set, test = synth_cells(200, seed=s), synth_cells(50, seed=1000 + s)
        imgs, masks = [c.image for c in train_set], [c.gt_mask for c in train_set]
        for n, out in ((3, three), (2, two)):
            seg = SelectiveSegmenter(homogeneity_threshold=0.90, epochs=5, per_class=8, n_classes=n, seed=s)
            out.append(_mean_f(seg.fit(imgs, masks), test))
    elapsed = time.perf_counter() - t0
    lower = sum(b < a for a, b in zip(three, two))
    ok = np.mean(three) >= 0.90 and lower >= 4 and elapsed < 20 * 60
    verdict(6, "selective segmentation mean F >= 0.90, 2-class lower in >= 4/5 seeds", ok,
            "3-class " + "/".join(f"{v:.3f}" for v in three) + f" mean={np.mean(three):.3f}; 2-class "
            + "/".join(f"{v:.3f}" for v in two) + f" lower={lower}/5 t={elapsed / 60:.1f}min")
    assert ok


# -- 7 ------------------------------------------------------------------------------------

class _OracleStage:
    """Stage model that answers from the true label carried in the feature row."""

    def __init__(self, classes, decide):
        self.classes_ = np.array(classes, dtype=object)
        self._decide = decide

    def predict_proba_features(self, F):
        out = np.zeros((len(F), len(self.classes_)))
        for n, row in enumerate(F):
            out[n, list(self.classes_).index(self._decide(CLASSES[int(row[0])]))] = 1.0
        return out


def test_criterion_07_cascade_structure(verdict):
    spec = clf.HERLEV_CASCADE
    expected = [({"nsup", "nint", "ncol"}, {"ldys", "mdys", "sdys", "cis"}), ({"cis"}, {"ldys", "mdys", "sdys"}),
                ({"ldys"}, {"mdys", "sdys"}), ({"mdys"}, {"sdys"})]
    stages_ok = [(set(s.left), set(s.right)) for s in spec.stages] == expected
    leaves = spec.leaves
    flat = [c for leaf in leaves for c in leaf]
    partition_ok = sorted(flat) == sorted(CLASSES) and len(flat) == len(set(flat))

    model = clf.CascadeClassifier()
    model.stage_models_ = [_OracleStage(["L", "R"], lambda c, st=st: "L" if c in st.left else "R")
                           for st in spec.stages]
    # leaf models also see rows routed elsewhere; those answers are never read
    model.leaf_models_ = {leaf: _OracleStage(sorted(leaf), lambda c, lf=leaf: c if c in lf else min(lf))
                          for leaf in leaves if len(leaf) > 1}
    rng = np.random.default_rng(0)
    accs = []
    for n in (7, 50, 300):
        y = [CLASSES[i] for i in rng.integers(0, len(CLASSES), n)]
        F = np.array([[CLASSES.index(c)] for c in y], dtype=float)
        preds = model.predict_features(F)
        accs.append(float(np.mean([p.label == t for p, t in zip(preds, y)])))
    ok = stages_ok and partition_ok and all(a == 1.0 for a in accs)
    verdict(7, "Herlev cascade stages, leaf partition, oracle-stage accuracy 1.0", ok,
            f"stages={stages_ok} partition={partition_ok} accuracies={accs}")
    assert ok


# -- 8 ------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_08_ablation_ordering(verdict):
    t0 = time.perf_counter()
    rows = []
    for s in SEEDS:
        train_set, test = synth_cells(140, seed=s), synth_cells(70, seed=1000 + s)
        res = clf.ablate_segmentation(train_set, test, clf.TransferClassifier(epochs=40, seed=s))
        acc = res.accuracies()
        rows.append((acc["raw"], acc["gt_masked"]))
    elapsed = time.perf_counter() - t0
    ok = all(raw >= gt - 0.02 for raw, gt in rows)
    verdict(8, "raw-image conv1T accuracy >= gt-masked - 0.02 on 5 seeds", ok,
            " ".join(f"{raw:.3f}/{gt:.3f}" for raw, gt in rows) + f" (raw/gt_masked) t={elapsed / 60:.1f}min")
    assert ok


# -- 9 ------------------------------------------------------------------------------------

@pytest.mark.extended
def test_criterion_09_herlev_extended(verdict):
    root, weights = os.environ.get("CYTOSCREEN_HERLEV"), os.environ.get("CYTOSCREEN_CONV1_WEIGHTS")
    if not (root and weights):
        verdict(9, "Herlev conv1T accuracy (extended)", None,
                "SKIPPED: set CYTOSCREEN_HERLEV and CYTOSCREEN_CONV1_WEIGHTS")
        pytest.skip("needs CYTOSCREEN_HERLEV and CYTOSCREEN_CONV1_WEIGHTS")
    recs, _ = load_herlev(root)
    splits = stratified_splits(recs, SplitSpec(trials=5, seed=0))
    acc2, acc7 = [], []
    for k, sp in enumerate(splits):
        base = dict(depth="conv1", weights=weights, preprocessing="caffe", seed=k)
        X, Xt = [r.image for r in sp.train], [r.image for r in sp.test]
        y, yt = [r.label for r in sp.train], [r.label for r in sp.test]
        m7 = clf.TransferClassifier(**base).fit(X, y)
        acc7.append(float(np.mean(m7.predict(Xt) == np.asarray(yt, dtype=object))))
        m2 = clf.TransferClassifier(**base).fit(X, clf.to_binary(y))
        acc2.append(float(np.mean(m2.predict(Xt) == np.asarray(clf.to_binary(yt), dtype=object))))
    ok = np.mean(acc2) >= 0.96 and np.mean(acc7) >= 0.88
    verdict(9, "Herlev conv1T accuracy (extended)", ok,
            f"2-class mean={np.mean(acc2):.4f} 7-class mean={np.mean(acc7):.4f}")
    assert ok


# -- 10 -----------------------------------------------------------------------------------

PIPELINE = ("synth", "split", "train-seg", "segment", "train-clf", "classify", "evaluate")
TINY = {"config_version": 1, "seed": 3, "synth": {"cells": 70, "slides": 10}, "split": {"trials": 2},
        "segmentation": {"homogeneity_threshold": 0.9, "epochs": 1, "per_class": 4},
        "classifier": {"epochs": 3}, "multicell": {"epochs": 2}}


def _pipeline(root):
    cfg = root / "config.json"
    cfg.parent.mkdir(parents=True, exist_ok=True)
    cfg.write_text(json.dumps(TINY))
    out = root / "out"
    for cmd in PIPELINE:
        trials = range(TINY["split"]["trials"]) if cmd in ("train-seg", "segment", "train-clf", "classify") else [None]
        for k in trials:
            argv = [cmd, "--config", str(cfg), "--out", str(out)] + (["--trial", str(k)] if k is not None else [])
            assert main(argv) == EXIT_OK, argv
    return out / "reports"


def test_criterion_10_end_to_end_reproducibility(tmp_path, verdict):
    t0 = time.perf_counter()
    a, b = _pipeline(tmp_path / "a"), _pipeline(tmp_path / "b")
    elapsed = time.perf_counter() - t0
    names = ("metrics.json", "summary.csv", "table3_fscore.csv")
    same = {n: (a / n).read_bytes() == (b / n).read_bytes() for n in names}
    summary = json.loads((a / "metrics.json").read_text())["summary"]
    ok = all(same.values()) and len(summary) > 0
    verdict(10, "two synthetic pipeline runs give byte-identical metric reports", ok,
            f"{same} metrics={len(summary)} t={elapsed:.0f}s")
    assert ok
