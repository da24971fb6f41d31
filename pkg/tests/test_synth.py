import numpy as np

from cytoscreen import synth
from cytoscreen.dataset import CLASSES, binary_label


def ellipse_oracle(shape, cx, cy, a, b, theta):
    out = np.zeros(shape, bool)
    c, s = np.cos(theta), np.sin(theta)
    for y in range(shape[0]):
        for x in range(shape[1]):
            u = (x - cx) * c + (y - cy) * s
            v = -(x - cx) * s + (y - cy) * c
            out[y, x] = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    return out


def test_single_cell_bit_identical_reruns():
    a, b = synth.synth_cells(1, seed=0), synth.synth_cells(1, seed=0)
    assert np.array_equal(a[0].image, b[0].image) and np.array_equal(a[0].gt_mask, b[0].gt_mask)
    assert a[0].id == b[0].id


def test_record_depends_only_on_seed_and_index():
    short = synth.synth_cells(3, seed=4)
    long = synth.synth_cells(9, seed=4)
    for x, y in zip(short, long):
        assert np.array_equal(x.image, y.image)


def test_labels_cycle_through_classes():
    assert [r.label for r in synth.synth_cells(9, seed=1)] == list(CLASSES) + list(CLASSES[:2])


def test_gt_mask_is_the_generating_ellipse():
    # replay the generator's random stream to recover the ellipse parameters
    for index, label in enumerate(CLASSES):
        size = 48
        rec = synth.synth_cell(label, 11, index, size)
        rng = np.random.default_rng([11, index, CLASSES.index(label)])
        rng.normal(0, 3, 3)
        c = (size - 1) / 2.0 + rng.uniform(-3, 3, 2)
        st = synth.STYLES[label]
        ca = min(rng.uniform(*st.cyto_radius), size / 2.0 - 3)
        cb = ca * rng.uniform(*st.cyto_aspect)
        ctheta = rng.uniform(0, np.pi)
        na = rng.uniform(*st.nucleus_radius)
        nb = na * rng.uniform(*st.aspect)
        na = min(na, cb - 3.0)
        nb = min(nb, na)
        off = rng.uniform(-1, 1, 2) * min(max(cb - na - 3.0, 0.0), 3.0)
        ntheta = ctheta + rng.uniform(-0.3, 0.3)
        expected = ellipse_oracle((size, size), c[0] + off[0], c[1] + off[1], na, nb, ntheta)
        assert np.array_equal(rec.gt_mask, expected)


def test_abnormal_nuclei_are_larger():
    cells = synth.synth_cells(100, seed=2)
    normal = [r.gt_mask.sum() for r in cells if not binary_label(r.label)]
    abnormal = [r.gt_mask.sum() for r in cells if binary_label(r.label)]
    assert np.mean(abnormal) > np.mean(normal)


def test_nucleus_darker_than_surroundings():
    for r in synth.synth_cells(14, seed=3):
        v = r.image.max(axis=2)
        assert v[r.gt_mask].mean() < v[~r.gt_mask].mean()


def test_slide_annotations_are_nucleus_centroids():
    s = synth.synth_slide(5, 0)
    assert len(s.annotations) == 5 == len(s.truth_masks)
    for a, m in zip(s.annotations, s.truth_masks):
        ys, xs = np.nonzero(m)
        assert (a.x, a.y) == (xs.mean(), ys.mean())
        assert m[int(round(a.y)), int(round(a.x))]
    for i in range(5):
        for j in range(i + 1, 5):
            assert not (s.truth_masks[i] & s.truth_masks[j]).any()


def test_slide_deterministic_and_graded():
    a, b = synth.synth_slides(3, seed=8), synth.synth_slides(3, seed=8)
    for x, y in zip(a, b):
        assert np.array_equal(x.image, y.image) and x.slide_grade == y.slide_grade
    assert synth._grade(["nsup", "nint"]) == "Normal"
    assert synth._grade(["nsup", "ldys"]) == "LSIL"
    assert synth._grade(["mdys", "cis"]) == "SCC"
