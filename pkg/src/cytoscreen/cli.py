"""Command-line interface: ``cytoscreen <command> [options]``.

Every command writes under ``--out DIR`` with a fixed layout and leaves a run
manifest in ``DIR/manifests``. Exit codes: 0 success, 1 usage or
configuration error, 2 data error, 3 model/state error.
"""

import argparse
import csv
import json
import logging
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from threadpoolctl import threadpool_limits

from . import __version__, io, metrics
from .classification import (BINARY_LABELS, CascadeClassifier, MultiCellClassifier, Prediction,
                             TransferClassifier, classify_multicell, extract_features,
                             multicell_training_set, to_binary)
from .config import config_hash, load_config
from .dataset import (CLASSES, SplitSpec, apply_manifest, augment, load_herlev, load_multicell,
                      read_annotation, save_herlev, save_multicell, split_manifest, stratified_splits,
                      trial_seeds)
from .detection import UNMATCHED, DetectorConfig, detect_nuclei, label_detections
from .exceptions import (ConfigurationError, CytoscreenError, DataError, StateError, TrainingError,
                         WeightLoadError)
from .persist import (load_cascade, load_classifier, load_segmenter, save_cascade, save_classifier,
                      save_segmenter)
from .segmentation import SelectiveSegmenter, mask_background
from .synth import synth_cells, synth_slides

log = logging.getLogger("cytoscreen")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 1, 2, 3
COLORS = {"normal": (0, 200, 0), "abnormal": (230, 0, 0), UNMATCHED: (0, 90, 255)}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- shared helpers ------------------------------------------------------------------

def git_describe():
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, cwd=Path(__file__).resolve().parent, timeout=10)
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _safe(rec_id):
    return rec_id.replace("/", "__").replace("#", "_")


class Run:
    """Per-command context: config, output layout, timings and the manifest."""

    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.timings = {}
        self.outputs = []
        self._t0 = time.perf_counter()

    @property
    def seed(self):
        return self.cfg["seed"]

    @property
    def trial(self):
        return getattr(self.args, "trial", 0)

    def trial_seed(self):
        return trial_seeds(self.seed, self.trial + 1)[self.trial] % (2 ** 31)

    def trial_dir(self, *parts):
        return self.out.joinpath(f"trial{self.trial}", *parts)

    def timed(self, name):
        run = self

        class _T:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = round(time.perf_counter() - self.t, 3)
        return _T()

    def record(self, path):
        self.outputs.append(str(Path(path).relative_to(self.out)))
        return path

    def write_manifest(self, command, argv):
        self.timings["total"] = round(time.perf_counter() - self._t0, 3)
        suffix = f"_trial{self.trial}" if hasattr(self.args, "trial") else ""
        path = self.out / "manifests" / f"{command}{suffix}.json"
        manifest = {
            "command": command, "argv": argv, "config": self.cfg, "config_hash": config_hash(self.cfg),
            "seed": self.seed, "git_describe": git_describe(), "version": __version__,
            "timings": self.timings, "outputs": sorted(self.outputs),
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path

    # data resolution
    def herlev_root(self):
        root = self.cfg["data"]["herlev"] or self.out / "data" / "herlev"
        if not Path(root).is_dir():
            raise DataError(f"no single-cell data at {root}; set data.herlev or run `cytoscreen synth` first")
        return Path(root)

    def records(self):
        recs, report = load_herlev(self.herlev_root())
        for e in report.errors:
            log.warning("skipped %s", e)
        if not recs:
            raise DataError(f"no usable records under {self.herlev_root()}")
        return recs

    def split(self):
        path = self.out / "splits.json"
        if not path.exists():
            raise DataError(f"{path} not found; run `cytoscreen split` first")
        manifest = json.loads(path.read_text())
        if self.trial >= len(manifest["trials"]):
            raise ConfigurationError(f"trial {self.trial} not in split file ({len(manifest['trials'])} trials)")
        return apply_manifest(self.records(), manifest, self.trial)

    def slides(self):
        root = self.cfg["data"]["multicell"] or self.out / "data" / "multicell"
        if not Path(root).is_dir():
            return []
        recs, report = load_multicell(root)
        for e in report.errors:
            log.warning("skipped %s", e)
        return recs

    def detector(self):
        d = dict(self.cfg["detector"])
        d["clahe_tiles"] = tuple(d["clahe_tiles"])
        return DetectorConfig(**d)


def _slide_split(slides, seed, trial):
    """Deterministic 70/15/15 split of slides by id."""
    slides = sorted(slides, key=lambda s: s.id)
    rng = np.random.default_rng(trial_seeds(seed, trial + 1)[trial])
    perm = rng.permutation(len(slides))
    n_tr = int(np.floor(0.70 * len(slides) + 0.5))
    n_va = int(np.floor(0.15 * len(slides) + 0.5))
    pick = lambda idx: [slides[i] for i in idx]
    return pick(perm[:n_tr]), pick(perm[n_tr:n_tr + n_va]), pick(perm[n_tr + n_va:])


def _classifier(cfg, depth, seed, **extra):
    c = cfg["classifier"]
    return TransferClassifier(depth=depth, hidden=c["hidden"], weights=c["weights"],
                              preprocessing=c["preprocessing"], epochs=c["epochs"],
                              batch_size=c["batch_size"], lr=c["lr"], momentum=c["momentum"],
                              lr_decay=c["lr_decay"], lr_decay_epoch=c["lr_decay_epoch"], loss=c["loss"],
                              seed=seed, **extra)


def _segmenter(cfg, seed):
    s = dict(cfg["segmentation"])
    s["clahe_tiles"] = tuple(s["clahe_tiles"])
    return SelectiveSegmenter(glcm_levels=cfg["texture"]["levels"], seed=seed, **s)


def _write_predictions(path, preds):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "true", "predicted", "path", "scores"])
        for p in preds:
            w.writerow([p.id, p.true if p.true is not None else "", p.label, " ".join(p.path),
                        json.dumps({k: float(v) for k, v in p.scores.items()}, sort_keys=True)])
    return path


def _read_predictions(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _augmented(cfg, records, target_key, seed):
    target = cfg["classifier"].get(target_key)
    if not target or target <= len(records):
        return records
    return augment(records, target, seed=seed)


# -- commands ------------------------------------------------------------------------

def cmd_synth(run):
    s = run.cfg["synth"]
    with run.timed("cells"):
        cells, cell_masks = synth_cells(s["cells"], run.seed, s["size"], return_cell_masks=True)
        save_herlev(cells, run.out / "data" / "herlev", cell_masks)
    with run.timed("slides"):
        slides = synth_slides(s["slides"], run.seed, s["slide_size"], s["cells_per_slide"])
        save_multicell(slides, run.out / "data" / "multicell")
    run.record(run.out / "data" / "herlev")
    run.record(run.out / "data" / "multicell")
    print(f"wrote {len(cells)} cells and {len(slides)} slides under {run.out / 'data'}")


def cmd_split(run):
    sp = run.cfg["split"]
    spec = SplitSpec(sp["train"], sp["val"], sp["test"], sp["trials"], run.seed)
    with run.timed("split"):
        splits = stratified_splits(run.records(), spec)
    path = metrics.write_json(run.out / "splits.json", split_manifest(splits, spec))
    run.record(path)
    print(f"wrote {len(splits)} trial split(s) to {path}")


def _draw_overlay(img, detections):
    im = Image.fromarray(img if img.ndim == 3 else np.repeat(img[:, :, None], 3, axis=2))
    draw = ImageDraw.Draw(im)
    for d in detections:
        b = d.bbox
        draw.rectangle([b.x0, b.y0, b.x1, b.y1], outline=COLORS.get(d.label, COLORS[UNMATCHED]), width=2)
    return np.asarray(im)


def cmd_detect(run):
    det_cfg = run.detector()
    files = []
    for item in run.args.inputs:
        p = Path(item)
        files += io.list_images(p) if p.is_dir() else [p]
    out = run.out / "detect"
    errors = []
    for f in files:
        try:
            img = io.read_image(f)
        except DataError as exc:
            errors.append(str(exc))
            continue
        res = detect_nuclei(img, det_cfg)
        sidecar = f.with_suffix(".json")
        annotated = False
        if sidecar.exists():
            anns, _ = read_annotation(sidecar)
            label_detections(res.detections, anns)
            annotated = bool(anns)
        stem = f.stem
        io.write_mask(run.record(out / f"{stem}_mask.png"), res.mask)
        metrics.write_json(run.record(out / f"{stem}_boxes.json"),
                           {"image": f.name, "annotated": annotated, "warnings": res.warnings,
                            "boxes": [d.to_dict() for d in res.detections]})
        io.write_image(run.record(out / f"{stem}_overlay.png"), _draw_overlay(img, res.detections))
    print(f"processed {len(files) - len(errors)} of {len(files)} image(s) into {out}")
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_train_seg(run):
    split = run.split()
    model = _segmenter(run.cfg, run.trial_seed())
    with run.timed("fit"):
        model.fit([r.image for r in split.train], [r.gt_mask for r in split.train])
    d = run.trial_dir("models", "seg")
    save_segmenter(model, d)
    run.record(d)
    print(f"segmenter saved to {d} (threshold={model.threshold_}, routes={model.route_counts_})")


def cmd_segment(run):
    model = load_segmenter(run.trial_dir("models", "seg"))
    split = run.split()
    out = run.trial_dir("segment")
    rows = []
    with run.timed("segment"):
        for r in split.test:
            tri, mask = model.segment(r.image)
            route = model.route_of(r.image)
            io.write_label_png(run.record(out / "classes" / f"{_safe(r.id)}.png"), tri.classes)
            io.write_mask(run.record(out / "masks" / f"{_safe(r.id)}.png"), mask)
            s = metrics.pixel_fscore(mask, r.gt_mask)
            rows.append({"id": r.id, "label": r.label, "route": route.value, "precision": s.precision,
                         "recall": s.recall, "f": s.f, "zsi": s.zsi})
    metrics.write_csv(run.record(out / "seg_metrics.csv"), rows,
                      ["id", "label", "route", "precision", "recall", "f", "zsi"])
    print(f"segmented {len(rows)} test image(s); mean F = {np.mean([r['f'] for r in rows]):.4f}")


def cmd_train_clf(run):
    cfg = run.cfg
    split = run.split()
    seed = run.trial_seed()
    models = run.trial_dir("models", "clf")
    train_recs = _augmented(cfg, split.train, "augment_train", seed)
    X = [r.image for r in train_recs]
    y = [r.label for r in train_recs]
    val_recs = _augmented(cfg, split.val, "augment_val", seed + 1)
    Xv, yv = [r.image for r in val_recs], [r.label for r in val_recs]
    depths = list(cfg["classifier"]["depths"])
    if cfg["classifier"]["ablation"] and "conv1" not in depths:
        depths.append("conv1")  # the raw-image ablation condition reuses flat conv1T
    for depth in depths:
        with run.timed(f"flat_{depth}"):
            clf = _classifier(cfg, depth, seed).fit(X, y, Xv, yv)
        save_classifier(clf, models, f"flat_{depth}")
        clf.history_.to_csv(run.record(models / f"flat_{depth}_history.csv"))
        if cfg["classifier"]["binary"]:
            with run.timed(f"binary_{depth}"):
                clf = _classifier(cfg, depth, seed).fit(X, to_binary(y), Xv, to_binary(yv))
            save_classifier(clf, models, f"binary_{depth}")
    if cfg["classifier"]["cascade"]:
        with run.timed("cascade"):
            casc = CascadeClassifier(base=_classifier(cfg, "conv1", seed)).fit(X, y)
        save_cascade(casc, models / "cascade")
    if cfg["classifier"]["ablation"]:
        with run.timed("ablation_gt_masked"):
            Xm = [mask_background(r.image, r.gt_mask) for r in train_recs]
            clf = _classifier(cfg, "conv1", seed).fit(Xm, y)
        save_classifier(clf, models, "ablation_gt_masked")
        seg_dir = run.trial_dir("models", "seg")
        if (seg_dir / "segmenter.json").exists():
            seg = load_segmenter(seg_dir)
            with run.timed("ablation_predicted_masked"):
                Xp = [mask_background(r.image, m) for r, m in zip(train_recs, seg.predict(X))]
                clf = _classifier(cfg, "conv1", seed).fit(Xp, y)
            save_classifier(clf, models, "ablation_predicted_masked")
        else:
            log.warning("no segmenter for trial %d; skipping the predicted-mask condition", run.trial)
    slides = run.slides()
    if slides:
        tr, va, _ = _slide_split(slides, run.seed, run.trial)
        Xs, ys, _ = multicell_training_set(tr, run.detector())
        Xsv, ysv, _ = multicell_training_set(va, run.detector())
        if len(set(ys)) < 2:
            raise DataError("multi-cell training detections do not cover both normal and abnormal")
        m = cfg["multicell"]
        with run.timed("multicell"):
            clf = MultiCellClassifier(epochs=m["epochs"], batch_size=m["batch_size"], lr=m["lr"],
                                      momentum=m["momentum"], conv_filters=m["conv_filters"],
                                      n_convs=m["n_convs"], dropout_p=m["dropout_p"], loss=m["loss"],
                                      weights=cfg["classifier"]["weights"], seed=seed,
                                      preprocessing=cfg["classifier"]["preprocessing"])
            clf.fit(Xs, ys, Xsv or None, ysv or None)
        save_classifier(clf, models, "multicell")
        clf.history_.to_csv(run.record(models / "multicell_history.csv"))
    run.record(models)
    print(f"classifiers saved to {models}")


def cmd_classify(run):
    cfg = run.cfg
    split = run.split()
    models = run.trial_dir("models", "clf")
    out = run.trial_dir("classify")
    test = split.test
    X = [r.image for r in test]
    ids = [r.id for r in test]
    truth = [r.label for r in test]

    def flat(clf, images, true_labels):
        probs = clf.predict_proba(images)
        return [Prediction(i, str(clf.classes_[int(np.argmax(p))]),
                           dict(zip(map(str, clf.classes_), map(float, p))), (), t)
                for i, p, t in zip(ids, probs, true_labels)]

    with run.timed("classify"):
        for depth in cfg["classifier"]["depths"]:
            clf = load_classifier(models, f"flat_{depth}")
            _write_predictions(run.record(out / f"flat_{depth}.csv"), flat(clf, X, truth))
            if cfg["classifier"]["binary"]:
                clf = load_classifier(models, f"binary_{depth}")
                _write_predictions(run.record(out / f"binary_{depth}.csv"), flat(clf, X, to_binary(truth)))
        if cfg["classifier"]["cascade"]:
            casc = load_cascade(models / "cascade")
            F = extract_features(casc.stage_models_[0].net_, X, casc._base().preprocessing)
            preds = casc.predict_features(F, ids)
            for p, t in zip(preds, truth):
                p.true = t
            _write_predictions(run.record(out / "cascade.csv"), preds)
        if cfg["classifier"]["ablation"]:
            _write_predictions(run.record(out / "ablation_raw.csv"),
                               flat(load_classifier(models, "flat_conv1"), X, truth))
            clf = load_classifier(models, "ablation_gt_masked")
            Xm = [mask_background(r.image, r.gt_mask) for r in test]
            _write_predictions(run.record(out / "ablation_gt_masked.csv"), flat(clf, Xm, truth))
            if (models / "ablation_predicted_masked.json").exists():
                seg = load_segmenter(run.trial_dir("models", "seg"))
                clf = load_classifier(models, "ablation_predicted_masked")
                Xp = [mask_background(r.image, m) for r, m in zip(test, seg.predict(X))]
                _write_predictions(run.record(out / "ablation_predicted_masked.csv"), flat(clf, Xp, truth))
        if (models / "multicell.json").exists():
            clf = load_classifier(models, "multicell")
            _, va, te = _slide_split(run.slides(), run.seed, run.trial)
            for name, part in (("multicell_val", va), ("multicell_test", te)):
                preds, warns = [], []
                for s in part:
                    p, w = classify_multicell(s, clf, run.detector())
                    preds += p
                    warns += [f"{s.id}: {x}" for x in w]
                for w in warns:
                    log.warning(w)
                _write_predictions(run.record(out / f"{name}.csv"), preds)
    print(f"predictions written to {out}")


def _accuracy(rows, labels, binary=False):
    rows = [r for r in rows if r["true"] and r["true"] != UNMATCHED]
    if not rows:
        return None
    t = [r["true"] for r in rows]
    p = [r["predicted"] for r in rows]
    if binary:
        t = [x if x in BINARY_LABELS else to_binary([x])[0] for x in t]
        p = [x if x in BINARY_LABELS else to_binary([x])[0] for x in p]
    return metrics.EvalReport.from_labels("", t, p, labels)


def cmd_evaluate(run):
    trials = sorted(int(p.name[5:]) for p in run.out.glob("trial*") if p.name[5:].isdigit())
    if not trials:
        raise StateError(f"no trial outputs under {run.out}; run `cytoscreen classify` or `segment` first")
    per_trial, table3_rows, scalars = {}, [], []
    for k in trials:
        tdir = run.out / f"trial{k}"
        entry, sc = {}, {}
        seg_csv = tdir / "segment" / "seg_metrics.csv"
        if seg_csv.exists():
            rows = _read_predictions(seg_csv)
            row = metrics.class_fscore_table([r["label"] for r in rows], [float(r["f"]) for r in rows])
            entry["table3_fscore"] = row
            entry["zsi_mean"] = float(np.mean([float(r["zsi"]) for r in rows]))
            table3_rows.append({"trial": k, **row})
            sc["seg_f_average"] = row["Average"]
            sc["seg_zsi_mean"] = entry["zsi_mean"]
        cdir = tdir / "classify"
        for f in sorted(cdir.glob("*.csv")) if cdir.exists() else []:
            rows = _read_predictions(f)
            name = f.stem
            if name.startswith("binary_") or name.startswith("multicell"):
                rep = _accuracy(rows, BINARY_LABELS, binary=True)
            else:
                rep = _accuracy(rows, CLASSES)
                binrep = _accuracy(rows, BINARY_LABELS, binary=True)
                if binrep is not None:
                    entry[f"{name}_as_binary"] = {"accuracy": binrep.accuracy,
                                                  "confusion": binrep.confusion.to_dict()}
                    sc[f"{name}_as_binary_accuracy"] = binrep.accuracy
            if rep is None:
                continue
            entry[name] = {"accuracy": rep.accuracy, "per_class": rep.per_class,
                           "confusion": rep.confusion.to_dict()}
            sc[f"{name}_accuracy"] = rep.accuracy
        per_trial[f"trial{k}"] = entry
        scalars.append(sc)
    summary = metrics.aggregate_trials(scalars) if any(scalars) else {}
    rep_dir = run.out / "reports"
    metrics.write_json(run.record(rep_dir / "metrics.json"), {"trials": per_trial, "summary": summary})
    if table3_rows:
        metrics.write_csv(run.record(rep_dir / "table3_fscore.csv"), table3_rows,
                          ["trial"] + list(metrics.TABLE3_COLUMNS))
    summary_rows = [{"metric": k, "mean": v["mean"], "std": v["std"], "n": v["n"]} for k, v in summary.items()]
    metrics.write_csv(run.record(rep_dir / "summary.csv"), summary_rows, ["metric", "mean", "std", "n"])
    for k, v in summary.items():
        print(f"{k:40s} {v['mean']:.4f} +/- {v['std']:.4f} (n={v['n']})")


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic single-cell and multi-cell corpus"),
    "split": (cmd_split, "write stratified train/val/test splits for every trial"),
    "detect": (cmd_detect, "detect nuclei in multi-cell images"),
    "train-seg": (cmd_train_seg, "train the selective-preprocessing segmenter"),
    "segment": (cmd_segment, "segment the test cells of a trial"),
    "train-clf": (cmd_train_clf, "train the flat, binary, cascade, ablation and multi-cell classifiers"),
    "classify": (cmd_classify, "write test-set predictions of every trained classifier"),
    "evaluate": (cmd_evaluate, "aggregate stored predictions into report tables"),
}
TRIAL_COMMANDS = ("train-seg", "segment", "train-clf", "classify")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (must carry config_version)")
    common.add_argument("--out", default="runs/default", help="output directory (default: %(default)s)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, help="cap numeric worker threads (env CYTOSCREEN_THREADS)")
    common.add_argument("--log-level", default="WARNING", help="logging level (default: %(default)s)")
    parser = _Parser(prog="cytoscreen", description="Cervical cell screening pipeline.")
    parser.add_argument("--version", action="version", version=f"cytoscreen {__version__}")
    parser.add_argument("--from-manifest", help="re-run the command recorded in a run manifest")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name in TRIAL_COMMANDS:
            p.add_argument("--trial", type=int, default=0, help="split trial index (default: %(default)s)")
        if name == "detect":
            p.add_argument("inputs", nargs="+", help="image files or directories")
    return parser


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("CYTOSCREEN_THREADS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigurationError(f"CYTOSCREEN_THREADS must be an integer, got {env!r}") from exc
    return None


def _argv_from_manifest(path):
    try:
        manifest = json.loads(Path(path).read_text())
        return list(manifest["argv"]), manifest["config"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigurationError(f"cannot use manifest {path}: {exc}") from exc


def _execute(argv, parser, cfg_override=None):
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if cfg_override is not None:
        cfg = load_config(None, cfg_override)
    else:
        overrides = {"seed": args.seed} if args.seed is not None else None
        cfg = load_config(args.config, overrides)
    run = Run(args, cfg)
    if args.command in TRIAL_COMMANDS and args.trial < 0:
        raise ConfigurationError("--trial must be non-negative")
    fn = COMMANDS[args.command][0]
    with threadpool_limits(limits=_threads(args)):
        code = fn(run) or EXIT_OK
    run.write_manifest(args.command, argv)
    return code


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if argv and argv[0].startswith("--from-manifest"):
            pre = _Parser(prog="cytoscreen", add_help=False)
            pre.add_argument("--from-manifest", required=True)
            ns, rest = pre.parse_known_args(argv)
            old_argv, cfg = _argv_from_manifest(ns.from_manifest)
            # flags given after the manifest (e.g. --out) override the recorded ones
            return _execute(old_argv + rest, parser, cfg)
        return _execute(argv, parser)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StateError, WeightLoadError, TrainingError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (DataError, CytoscreenError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
