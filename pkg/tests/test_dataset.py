from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cytoscreen import dataset, io
from cytoscreen.dataset import CLASSES, CellRecord, SplitSpec
from cytoscreen.exceptions import DataError, InvalidInputError, InvalidParameterError, StratificationError


def rec(label, i, size=8):
    rng = np.random.default_rng(i)
    img = rng.integers(0, 256, (size, size, 3), dtype=np.uint8)
    mask = np.zeros((size, size), bool)
    mask[2:5, 3:6] = True
    return CellRecord(img, mask, label, f"{label}-{i:04d}")


# -- labels / records ----------------------------------------------------------------------

def test_binary_label_is_function_of_class():
    assert [dataset.binary_label(c) for c in CLASSES] == [0, 0, 0, 1, 1, 1, 1]
    with pytest.raises(InvalidInputError):
        dataset.binary_label("koilocyte")


def test_record_validation():
    with pytest.raises(InvalidInputError):
        CellRecord(np.zeros((4, 4, 3), np.uint8), np.zeros((4, 5), bool), "nsup", "x")
    with pytest.raises(InvalidInputError):
        CellRecord(np.zeros((4, 4, 3), np.uint8), np.zeros((4, 4), bool), "bogus", "x")


def test_multicell_record_rejects_out_of_bounds_centroid():
    with pytest.raises(InvalidInputError):
        dataset.MultiCellRecord(np.zeros((10, 10, 3), np.uint8),
                                [dataset.NucleusAnnotation(10.0, 2.0, "normal")], "Normal", "s")


# -- GT decoding / loading ---------------------------------------------------------------------

def test_gt_encode_decode_round_trip():
    mask = np.zeros((6, 6), bool)
    mask[1:4, 2:5] = True
    cell = np.zeros_like(mask)
    cell[0:6, 1:6] = True
    assert np.array_equal(dataset.decode_gt(dataset.encode_gt(mask, cell)), mask)


def test_decode_gt_nearest_colour():
    gt = np.array([[[10, 5, 240], [250, 10, 10]]], np.uint8)
    np.testing.assert_array_equal(dataset.decode_gt(gt), [[True, False]])


def test_load_herlev_empty_directory(tmp_path):
    records, report = dataset.load_herlev(tmp_path)
    assert records == [] and report.classes == {} and report.ok


def test_load_herlev_one_class(tmp_path):
    recs = [rec("ldys", i) for i in range(3)]
    dataset.save_herlev(recs, tmp_path)
    records, report = dataset.load_herlev(tmp_path)
    assert len(records) == 3 and {r.label for r in records} == {"ldys"}
    assert report.classes == {"ldys": 3}
    for a, b in zip(records, recs):
        assert np.array_equal(a.image, b.image) and np.array_equal(a.gt_mask, b.gt_mask)


def test_load_herlev_sorted_and_reports_missing_gt(tmp_path):
    dataset.save_herlev([rec("cis", 1), rec("nsup", 2), rec("nsup", 0)], tmp_path)
    io.write_image(tmp_path / "nsup" / "orphan.png", np.zeros((8, 8, 3), np.uint8))
    (tmp_path / "notes").mkdir()
    records, report = dataset.load_herlev(tmp_path)
    assert [r.id for r in records] == ["nsup/nsup-0000", "nsup/nsup-0002", "cis/cis-0001"]
    assert len(report.errors) == 1 and "orphan" in report.errors[0]
    assert report.skipped_dirs == ["notes"]


def test_load_herlev_unreadable_file(tmp_path):
    dataset.save_herlev([rec("nint", 0)], tmp_path)
    (tmp_path / "nint" / "bad.png").write_bytes(b"not an image")
    io.write_image(tmp_path / "nint" / "bad-d.png", np.zeros((8, 8, 3), np.uint8))
    records, report = dataset.load_herlev(tmp_path)
    assert len(records) == 1 and len(report.errors) == 1


def test_load_herlev_not_a_directory(tmp_path):
    with pytest.raises(DataError):
        dataset.load_herlev(tmp_path / "missing")


def test_multicell_round_trip(tmp_path):
    img = np.zeros((20, 20, 3), np.uint8)
    r = dataset.MultiCellRecord(img, [dataset.NucleusAnnotation(3.5, 4.0, "abnormal")], "HSIL", "s1")
    dataset.save_multicell([r], tmp_path)
    io.write_image(tmp_path / "bare.png", img)
    records, report = dataset.load_multicell(tmp_path)
    assert report.ok and [x.id for x in records] == ["bare", "s1"]
    assert records[0].annotations == [] and records[0].slide_grade == "Normal"
    assert records[1].annotations == r.annotations and records[1].slide_grade == "HSIL"


def test_multicell_bad_annotation_reported(tmp_path):
    io.write_image(tmp_path / "a.png", np.zeros((5, 5, 3), np.uint8))
    (tmp_path / "a.json").write_text('{"nuclei": [{"x": 1}], "grade": "Normal"}')
    records, report = dataset.load_multicell(tmp_path)
    assert records == [] and len(report.errors) == 1


# -- splits -------------------------------------------------------------------------------------

def test_split_size_examples():
    assert dataset.split_sizes(20, SplitSpec()) == (14, 3, 3)
    assert dataset.split_sizes(182, SplitSpec()) == (127, 27, 28)


@pytest.mark.parametrize("n, expected", [(74, (52, 11, 11)), (70, (49, 11, 10)), (98, (69, 15, 14)),
                                         (146, (102, 22, 22)), (197, (138, 30, 29)), (150, (105, 23, 22))])
def test_split_sizes_by_hand(n, expected):
    tr = int(np.floor(0.7 * n + 0.5))
    va = int(np.floor(0.15 * n + 0.5))
    assert (tr, va, n - tr - va) == expected == dataset.split_sizes(n, SplitSpec())


def test_stratified_splits_partition_and_determinism():
    records = [rec(c, i) for c in CLASSES for i in range(20)]
    a = dataset.stratified_splits(records, SplitSpec(seed=3))
    b = dataset.stratified_splits(records, SplitSpec(seed=3))
    c = dataset.stratified_splits(records, SplitSpec(seed=4))
    assert len(a) == 5
    assert [s.ids() for s in a] == [s.ids() for s in b]
    assert [s.ids() for s in a] != [s.ids() for s in c]
    assert len({tuple(s.ids()["test"]) for s in a}) > 1
    for s in a:
        ids = s.ids()
        all_ids = ids["train"] + ids["val"] + ids["test"]
        assert sorted(all_ids) == sorted(r.id for r in records)
        for part, want in (("train", 14), ("val", 3), ("test", 3)):
            counts = Counter(r.label for r in getattr(s, part))
            assert set(counts.values()) == {want}


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(3, 40), min_size=1, max_size=7), st.integers(0, 2 ** 31))
def test_split_fractions_within_one_record(sizes, seed):
    records = [rec(CLASSES[k], i) for k, n in enumerate(sizes) for i in range(n)]
    spec = SplitSpec(trials=2, seed=seed)
    for s in dataset.stratified_splits(records, spec):
        for k, n in enumerate(sizes):
            counts = {p: sum(r.label == CLASSES[k] for r in getattr(s, p)) for p in ("train", "val", "test")}
            assert sum(counts.values()) == n
            assert abs(counts["train"] - 0.7 * n) <= 1 and abs(counts["val"] - 0.15 * n) <= 1
            assert abs(counts["test"] - 0.15 * n) <= 1


def test_stratification_error_names_class():
    records = [rec("nsup", i) for i in range(5)] + [rec("cis", i) for i in range(2)]
    with pytest.raises(StratificationError, match="cis"):
        dataset.stratified_splits(records)


def test_split_spec_validation():
    with pytest.raises(InvalidParameterError):
        SplitSpec(train=0.8, val=0.15, test=0.15)


def test_manifest_round_trip():
    records = [rec(c, i) for c in CLASSES[:2] for i in range(6)]
    spec = SplitSpec(trials=2, seed=9)
    splits = dataset.stratified_splits(records, spec)
    manifest = dataset.split_manifest(splits, spec)
    again = dataset.apply_manifest(records, manifest, trial=1)
    assert again.ids() == splits[1].ids()
    with pytest.raises(DataError):
        dataset.apply_manifest(records[:3], manifest)


# -- augmentation ------------------------------------------------------------------------------------

def test_augment_noop_when_target_equals_count():
    records = [rec(CLASSES[i % 7], i) for i in range(100)]
    out = dataset.augment(records, 100)
    assert len(out) == 100 and all(a is b for a, b in zip(out, records))


def test_augment_doubles_each_label():
    records = [rec(c, i) for i, c in enumerate(["nsup", "nsup", "cis", "ldys", "ldys", "ldys"])]
    out = dataset.augment(records, 12, seed=1)
    assert len(out) == 12
    before, after = Counter(r.label for r in records), Counter(r.label for r in out)
    assert after == Counter({k: 2 * v for k, v in before.items()})
    for r in out:
        assert r.image.shape == (8, 8, 3) and r.gt_mask.shape == (8, 8)


def test_augment_deterministic():
    records = [rec("mdys", i, 16) for i in range(4)]
    a = dataset.augment(records, 20, seed=5)
    b = dataset.augment(records, 20, seed=5)
    for x, y in zip(a, b):
        assert x.id == y.id and np.array_equal(x.image, y.image) and np.array_equal(x.gt_mask, y.gt_mask)


def test_augment_errors():
    with pytest.raises(InvalidInputError):
        dataset.augment([], 5)
    with pytest.raises(InvalidParameterError):
        dataset.augment([rec("nsup", 0)] * 3, 2)
    with pytest.raises(InvalidParameterError):
        dataset.AugmentationSpec(ops=("shear",))


def test_hflip_twice_is_identity():
    r = rec("sdys", 3, 12)
    rng = np.random.default_rng(0)
    img, mask = dataset.apply_op("hflip", r.image, r.gt_mask, rng)
    img, mask = dataset.apply_op("hflip", img, mask, rng)
    assert np.array_equal(img, r.image) and np.array_equal(mask, r.gt_mask)


@pytest.mark.parametrize("op", dataset.AUGMENT_OPS)
def test_every_op_keeps_shape(op):
    r = rec("ncol", 1, 16)
    img, mask = dataset.apply_op(op, r.image, r.gt_mask, np.random.default_rng(0))
    assert img.shape == r.image.shape and mask.shape == r.gt_mask.shape
    assert img.dtype == np.uint8 and mask.dtype == bool
