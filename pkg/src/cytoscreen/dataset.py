"""Single-cell and multi-cell datasets: loading, stratified splits, augmentation."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import io
from .exceptions import DataError, InvalidInputError, InvalidParameterError, StratificationError
from .imgproc import resize_bilinear, resize_nearest

CLASSES = ("nsup", "nint", "ncol", "ldys", "mdys", "sdys", "cis")
NORMAL_CLASSES = frozenset(CLASSES[:3])
ABNORMAL_CLASSES = frozenset(CLASSES[3:])
BINARY_CLASSES = ("normal", "abnormal")
SLIDE_GRADES = ("Normal", "LSIL", "HSIL", "SCC")

HERLEV_DIRS = {
    "nsup": ("normal_superficiel", "normal_superficial", "superficial", "nsup"),
    "nint": ("normal_intermediate", "intermediate", "nint"),
    "ncol": ("normal_columnar", "columnar", "ncol"),
    "ldys": ("light_dysplastic", "mild_dysplastic", "light_dysplasia", "ldys"),
    "mdys": ("moderate_dysplastic", "moderate_dysplasia", "mdys"),
    "sdys": ("severe_dysplastic", "severe_dysplasia", "sdys"),
    "cis": ("carcinoma_in_situ", "cis"),
}
_DIR_TO_CLASS = {alias: cls for cls, aliases in HERLEV_DIRS.items() for alias in aliases}

# Region colours of the "-d" ground-truth maps; every pixel takes the nearest entry.
DEFAULT_GT_PALETTE = {
    "nucleus": [(0, 0, 128), (0, 0, 255)],
    "cytoplasm": [(0, 128, 255), (0, 255, 255), (128, 128, 255)],
    "background": [(255, 0, 0), (0, 0, 0), (255, 255, 255), (128, 0, 0)],
}
ANNOTATION_VERSION = 1


def binary_label(label):
    """0 for the normal classes, 1 for the abnormal ones."""
    if label not in CLASSES:
        raise InvalidInputError(f"unknown class label {label!r}")
    return int(label in ABNORMAL_CLASSES)


@dataclass
class CellRecord:
    image: np.ndarray
    gt_mask: np.ndarray
    label: str
    id: str

    def __post_init__(self):
        if self.gt_mask.shape != self.image.shape[:2]:
            raise InvalidInputError(
                f"{self.id}: mask shape {self.gt_mask.shape} != image shape {self.image.shape[:2]}")
        if self.label not in CLASSES:
            raise InvalidInputError(f"{self.id}: unknown class label {self.label!r}")

    @property
    def binary(self):
        return binary_label(self.label)


@dataclass
class NucleusAnnotation:
    x: float
    y: float
    label: str  # "normal" | "abnormal"


@dataclass
class MultiCellRecord:
    image: np.ndarray
    annotations: list
    slide_grade: str
    id: str
    truth_masks: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        h, w = self.image.shape[:2]
        for a in self.annotations:
            if not (0 <= a.x < w and 0 <= a.y < h):
                raise InvalidInputError(f"{self.id}: centroid ({a.x}, {a.y}) outside {w}x{h} image")
            if a.label not in BINARY_CLASSES:
                raise InvalidInputError(f"{self.id}: annotation label must be normal|abnormal, got {a.label!r}")
        if self.slide_grade not in SLIDE_GRADES:
            raise InvalidInputError(f"{self.id}: unknown slide grade {self.slide_grade!r}")


@dataclass
class LoadReport:
    classes: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    skipped_dirs: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors


def decode_gt(gt_rgb, palette=None, region="nucleus"):
    """Binary mask of ``region`` from a colour-coded region map (nearest palette colour)."""
    palette = palette or DEFAULT_GT_PALETTE
    names, colours = [], []
    for name, cols in palette.items():
        for c in cols:
            names.append(name)
            colours.append(c)
    colours = np.asarray(colours, dtype=np.int32)
    px = gt_rgb.reshape(-1, 3).astype(np.int32)
    d = ((px[:, None, :] - colours[None, :, :]) ** 2).sum(axis=2)
    nearest = np.asarray(names)[d.argmin(axis=1)]
    return (nearest == region).reshape(gt_rgb.shape[:2])


def encode_gt(mask, cell_mask=None):
    """Inverse of :func:`decode_gt` for the default palette (used to write synthetic trees)."""
    out = np.empty(mask.shape + (3,), dtype=np.uint8)
    out[:] = DEFAULT_GT_PALETTE["background"][0]
    if cell_mask is not None:
        out[cell_mask] = DEFAULT_GT_PALETTE["cytoplasm"][0]
    out[mask] = DEFAULT_GT_PALETTE["nucleus"][0]
    return out


def _gt_path(img_path):
    for p in img_path.parent.iterdir():
        if p.stem.lower() == img_path.stem.lower() + "-d" and p.suffix.lower() in io.IMAGE_SUFFIXES:
            return p
    return None


def load_herlev(root, palette=None):
    """Load a Herlev-style tree: one folder per class, ``<id>.<ext>`` + ``<id>-d.<ext>``.

    Returns ``(records, report)``; records are sorted by (class order, id).
    Samples with a missing or unreadable file are skipped and listed in
    ``report.errors``.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root} is not a directory")
    report = LoadReport()
    records = []
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        cls = _DIR_TO_CLASS.get(d.name.lower())
        if cls is None:
            report.skipped_dirs.append(d.name)
            continue
        count = 0
        for img_path in io.list_images(d):
            if img_path.stem.lower().endswith("-d"):
                continue
            rec_id = f"{cls}/{img_path.stem}"
            gt_path = _gt_path(img_path)
            if gt_path is None:
                report.errors.append(f"{rec_id}: missing ground-truth file")
                continue
            try:
                image = io.read_image(img_path)
                gt = io.read_image(gt_path)
                if gt.shape != image.shape:
                    raise DataError(f"ground truth shape {gt.shape} != image shape {image.shape}")
                records.append(CellRecord(image, decode_gt(gt, palette), cls, rec_id))
                count += 1
            except (DataError, InvalidInputError) as exc:
                report.errors.append(f"{rec_id}: {exc}")
        report.classes[cls] = report.classes.get(cls, 0) + count
    records.sort(key=lambda r: (CLASSES.index(r.label), r.id))
    return records, report


def save_herlev(records, root, cell_masks=None):
    """Write records as a Herlev-style tree of PNG pairs (inverse of :func:`load_herlev`)."""
    root = Path(root)
    for i, r in enumerate(records):
        stem = r.id.split("/")[-1]
        cell = None if cell_masks is None else cell_masks[i]
        io.write_image(root / r.label / f"{stem}.png", r.image)
        io.write_image(root / r.label / f"{stem}-d.png", encode_gt(r.gt_mask, cell))


def read_annotation(path):
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or "nuclei" not in data or "grade" not in data:
        raise DataError(f"{path}: annotation needs 'nuclei' and 'grade' fields")
    version = data.get("format_version", ANNOTATION_VERSION)
    if version != ANNOTATION_VERSION:
        raise DataError(f"{path}: unsupported annotation version {version}")
    anns = []
    for n in data["nuclei"]:
        try:
            anns.append(NucleusAnnotation(float(n["x"]), float(n["y"]), str(n["label"]).lower()))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: malformed nucleus entry {n!r}") from exc
    return anns, data["grade"]


def write_annotation(path, record):
    data = {
        "format_version": ANNOTATION_VERSION,
        "nuclei": [{"x": a.x, "y": a.y, "label": a.label} for a in record.annotations],
        "grade": record.slide_grade,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def load_multicell(root):
    """Images in ``root`` paired with same-stem ``.json`` annotation sidecars.

    Images without a sidecar load with no annotations and grade "Normal".
    """
    root = Path(root)
    records, report = [], LoadReport()
    for img_path in io.list_images(root):
        sidecar = img_path.with_suffix(".json")
        try:
            image = io.read_image(img_path)
            anns, grade = read_annotation(sidecar) if sidecar.exists() else ([], "Normal")
            records.append(MultiCellRecord(image, anns, grade, img_path.stem))
        except (DataError, InvalidInputError) as exc:
            report.errors.append(f"{img_path.name}: {exc}")
    return records, report


def save_multicell(records, root):
    root = Path(root)
    for r in records:
        io.write_image(root / f"{r.id}.png", r.image)
        write_annotation(root / f"{r.id}.json", r)


# --- splits -----------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15
    trials: int = 5
    seed: int = 0

    def __post_init__(self):
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise InvalidParameterError("split fractions must sum to 1")
        if self.trials < 1:
            raise InvalidParameterError("trials must be >= 1")


@dataclass
class Split:
    train: list
    val: list
    test: list

    def ids(self):
        return {k: [r.id for r in getattr(self, k)] for k in ("train", "val", "test")}


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def split_sizes(n, spec):
    n_train = _round_half_up(spec.train * n)
    n_val = _round_half_up(spec.val * n)
    return n_train, n_val, n - n_train - n_val


def trial_seeds(seed, trials):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(trials)]


def stratified_splits(records, spec=None, label=lambda r: r.label):
    """Per-class 70/15/15 partitions for each trial (round train, round val, rest to test)."""
    spec = spec or SplitSpec()
    by_class = {}
    for r in records:
        by_class.setdefault(label(r), []).append(r)
    for cls, recs in by_class.items():
        if len(recs) < 3:
            raise StratificationError(f"class {cls!r} has {len(recs)} record(s); need at least 3")
    order = sorted(by_class, key=lambda c: (CLASSES.index(c) if c in CLASSES else len(CLASSES), str(c)))
    splits = []
    for tseed in trial_seeds(spec.seed, spec.trials):
        rng = np.random.default_rng(tseed)
        tr, va, te = [], [], []
        for cls in order:
            recs = sorted(by_class[cls], key=lambda r: r.id)
            perm = rng.permutation(len(recs))
            n_tr, n_va, _ = split_sizes(len(recs), spec)
            tr += [recs[i] for i in perm[:n_tr]]
            va += [recs[i] for i in perm[n_tr:n_tr + n_va]]
            te += [recs[i] for i in perm[n_tr + n_va:]]
        splits.append(Split(tr, va, te))
    return splits


def split_manifest(splits, spec):
    return {
        "seed": spec.seed,
        "fractions": {"train": spec.train, "val": spec.val, "test": spec.test},
        "trials": [s.ids() for s in splits],
    }


def apply_manifest(records, manifest, trial=0):
    by_id = {r.id: r for r in records}
    t = manifest["trials"][trial]
    missing = [i for part in t.values() for i in part if i not in by_id]
    if missing:
        raise DataError(f"split manifest references {len(missing)} unknown record(s), e.g. {missing[0]!r}")
    return Split(*[[by_id[i] for i in t[k]] for k in ("train", "val", "test")])


# --- augmentation -----------------------------------------------------------

AUGMENT_OPS = ("hflip", "vflip", "rot90", "rot180", "rot270", "rotate15", "crop")


@dataclass(frozen=True)
class AugmentationSpec:
    target_train: int = 12000
    target_val: int = 3000
    ops: tuple = AUGMENT_OPS
    max_chain: int = 2

    def __post_init__(self):
        bad = set(self.ops) - set(AUGMENT_OPS)
        if bad or not self.ops:
            raise InvalidParameterError(f"unknown augmentation ops {sorted(bad)}")


def apply_op(op, image, mask, rng):
    if op == "hflip":
        return image[:, ::-1], mask[:, ::-1]
    if op == "vflip":
        return image[::-1], mask[::-1]
    if op in ("rot90", "rot180", "rot270"):
        k = {"rot90": 1, "rot180": 2, "rot270": 3}[op]
        return np.rot90(image, k), np.rot90(mask, k)
    if op == "rotate15":
        angle = float(rng.uniform(-15, 15))
        img = ndimage.rotate(image.astype(np.float64), angle, axes=(1, 0), reshape=False,
                             order=1, mode="nearest")
        m = ndimage.rotate(mask.astype(np.uint8), angle, axes=(1, 0), reshape=False, order=0, mode="nearest")
        return np.clip(np.rint(img), 0, 255).astype(np.uint8), m.astype(bool)
    if op == "crop":
        h, w = mask.shape
        ch, cw = max(1, int(round(0.9 * h))), max(1, int(round(0.9 * w)))
        y0 = int(rng.integers(0, h - ch + 1))
        x0 = int(rng.integers(0, w - cw + 1))
        img = resize_bilinear(image[y0:y0 + ch, x0:x0 + cw], (h, w))
        m = resize_nearest(mask[y0:y0 + ch, x0:x0 + cw], (h, w))
        return img, m
    raise InvalidParameterError(f"unknown augmentation op {op!r}")


def augment(records, target, seed=0, ops=AUGMENT_OPS, max_chain=2):
    """Grow ``records`` to ``target`` with label-preserving geometric variants.

    Originals come first, untouched. Extra record ``k`` derives from source
    ``perm[k % n]`` of a seeded permutation, so every source is used equally
    often when ``target`` is a multiple of ``len(records)``.
    """
    records = list(records)
    if not records:
        raise InvalidInputError("cannot augment an empty record list")
    if target < len(records):
        raise InvalidParameterError(f"target {target} is below the input count {len(records)}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(records))
    out = list(records)
    for k in range(target - len(records)):
        src = records[perm[k % len(records)]]
        chain = rng.choice(ops, size=int(rng.integers(1, max_chain + 1)))
        img, mask = src.image, src.gt_mask
        for op in chain:
            img, mask = apply_op(str(op), img, mask, rng)
        out.append(CellRecord(np.ascontiguousarray(img), np.ascontiguousarray(mask), src.label,
                              f"{src.id}#aug{k}"))
    return out
