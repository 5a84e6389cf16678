import numpy as np
import pytest

from adbn.dbn import AdaptiveDbn
from adbn.detection import (BoundingBox, DetectConfig, bilinear_resize, detect,
                            evaluate_detection, iou, merge_same_class,
                            region_crop, voronoi_partition)
from adbn.numerics import Rng
from adbn.rbm import RbmLayer


def brute_force_assignment(width, height, seeds):
    out = np.zeros((height, width), dtype=int)
    for y in range(height):
        for x in range(width):
            best, best_d = 0, float("inf")
            for idx, (sx, sy) in enumerate(seeds):
                d = (x - sx) ** 2 + (y - sy) ** 2
                if d < best_d:
                    best, best_d = idx, d
            out[y, x] = best
    return out


def iou_pixel_oracle(a, b):
    cells_a = {(x, y) for x in range(a.x, a.x + a.w) for y in range(a.y, a.y + a.h)}
    cells_b = {(x, y) for x in range(b.x, b.x + b.w) for y in range(b.y, b.y + b.h)}
    inter = len(cells_a & cells_b)
    union = len(cells_a | cells_b)
    return inter / union


def test_voronoi_single_seed():
    part = voronoi_partition(5, 4, [(2, 2)])
    assert np.array_equal(part.assignment, np.zeros((4, 5), dtype=int))


def test_voronoi_tie_breaks_to_lowest_index():
    part = voronoi_partition(2, 2, [(0, 0), (1, 1)])
    # pixel (1, 0) is distance 1 from both seeds
    assert part.assignment[0, 1] == 0
    assert part.assignment[1, 0] == 0


def test_voronoi_counts_sum_to_area():
    rng = Rng(10)
    for _ in range(10):
        w = rng.integers(3, 20)
        h = rng.integers(3, 20)
        seeds = [(rng.integers(0, w), rng.integers(0, h)) for _ in range(5)]
        part = voronoi_partition(w, h, seeds)
        counts = np.bincount(part.assignment.ravel(), minlength=5)
        assert counts.sum() == w * h


def test_voronoi_matches_brute_force_10_configs():
    rng = Rng(123)
    for _ in range(10):
        w = rng.integers(4, 16)
        h = rng.integers(4, 16)
        n = rng.integers(1, 8)
        seeds = [(rng.integers(0, w), rng.integers(0, h)) for _ in range(n)]
        part = voronoi_partition(w, h, seeds)
        assert np.array_equal(part.assignment, brute_force_assignment(w, h, seeds))


def test_voronoi_rejects_bad_seeds():
    with pytest.raises(ValueError):
        voronoi_partition(4, 4, [])
    with pytest.raises(ValueError):
        voronoi_partition(4, 4, [(5, 0)])


def test_crop_identity_at_native_shape():
    rng = Rng(2)
    img = rng.uniform((6, 5))
    out = region_crop(img, (0, 0, 5, 6), (5, 6))
    assert np.allclose(out, img, atol=1e-12)


def test_crop_constant_stays_constant():
    img = np.full((8, 8), 0.37)
    out = region_crop(img, (2, 2, 4, 4), (6, 6))
    assert np.allclose(out, 0.37, atol=1e-12)


def test_crop_zero_pads_outside():
    img = np.ones((4, 4))
    out = region_crop(img, (-2, -2, 4, 4), (4, 4))
    expected = np.zeros((4, 4))
    expected[2:, 2:] = 1.0
    assert np.allclose(out, expected, atol=1e-12)
    with pytest.raises(ValueError):
        region_crop(img, (-4, -4, 4, 4), (4, 4))  # no overlap at all


def test_crop_rejects_degenerate():
    img = np.ones((4, 4))
    with pytest.raises(ValueError):
        region_crop(img, (0, 0, 0, 3), (4, 4))
    with pytest.raises(ValueError):
        region_crop(img, (10, 0, 2, 2), (4, 4))


def test_bilinear_checkerboard_hand_values():
    src = np.array([[1.0, 0.0], [0.0, 1.0]])
    # sample centers fall at source coordinates {0, 0.25, 0.75, 1.0}
    expected = np.array([
        [1.0, 0.75, 0.25, 0.0],
        [0.75, 0.625, 0.375, 0.25],
        [0.25, 0.375, 0.625, 0.75],
        [0.0, 0.25, 0.75, 1.0],
    ])
    assert np.allclose(bilinear_resize(src, 4, 4), expected, atol=1e-12)


def test_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, BoundingBox(0, 0, 10, 10)) == 1.0
    assert iou(a, BoundingBox(20, 20, 5, 5)) == 0.0
    third = iou(a, BoundingBox(5, 0, 10, 10))
    assert abs(third - 1.0 / 3.0) < 1e-12


def test_iou_matches_pixel_oracle_1000_cases():
    rng = Rng(55)
    for _ in range(1000):
        a = BoundingBox(rng.integers(0, 12), rng.integers(0, 12),
                        rng.integers(1, 10), rng.integers(1, 10))
        b = BoundingBox(rng.integers(0, 12), rng.integers(0, 12),
                        rng.integers(1, 10), rng.integers(1, 10))
        assert abs(iou(a, b) - iou_pixel_oracle(a, b)) < 1e-9


def test_iou_symmetry():
    a = BoundingBox(1, 2, 5, 4)
    b = BoundingBox(3, 3, 6, 6)
    assert iou(a, b) == iou(b, a)


def test_box_rejects_empty():
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 5)


def _intensity_model(n_classes=2):
    """1-hidden-unit model: bright crops -> class 1, dark -> class 0."""
    I = 16
    W = np.full((I, 1), 4.0)
    layer = RbmLayer(W, np.zeros(I), np.array([-32.0]))  # on when mean > 0.5
    out_W = np.zeros((1, n_classes))
    out_W[0, 0] = -8.0
    out_W[0, 1] = 8.0
    out_b = np.zeros(n_classes)
    out_b[0] = 4.0
    out_b[1] = -4.0
    return AdaptiveDbn([layer], out_W, out_b, (4, 4))


def test_detect_background_only_gives_empty():
    model = _intensity_model()
    cfg = DetectConfig(n_regions=4, t1=0.5, t2=0.7)
    boxes = detect(model, np.zeros((8, 8)), cfg, Rng(42))
    assert boxes == []


def test_detect_t1_above_achievable_gives_empty():
    model = _intensity_model()
    # the model's best class-1 probability is sigmoid(8) ~ 0.99966
    cfg = DetectConfig(n_regions=4, t1=0.9997, t2=0.9998)
    boxes = detect(model, np.ones((8, 8)), cfg, Rng(42))
    assert boxes == []


def test_detect_finds_bright_image_and_is_deterministic():
    model = _intensity_model()
    cfg = DetectConfig(n_regions=4, t1=0.5, t2=0.7)
    img = np.ones((8, 8))
    boxes1 = detect(model, img, cfg, Rng(42))
    boxes2 = detect(model, img, cfg, Rng(42))
    assert len(boxes1) >= 1
    assert all(b.class_id == 1 for b in boxes1)
    assert boxes1 == boxes2
    # canonical ordering
    keys = [(b.class_id, -b.score, b.x, b.y) for b in boxes1]
    assert keys == sorted(keys)


def test_detect_t2_monotonicity():
    model = _intensity_model()
    img = np.ones((8, 8)) * 0.75
    img[0:4, 0:4] = 1.0
    counts = []
    for t2 in (0.7, 0.9):
        cfg = DetectConfig(n_regions=4, t1=0.5, t2=t2)
        counts.append(len(detect(model, img, cfg, Rng(7))))
    assert counts[1] <= counts[0]


def test_merge_same_class_keeps_best():
    boxes = [BoundingBox(0, 0, 10, 10, 1, 0.9),
             BoundingBox(1, 1, 10, 10, 1, 0.8),
             BoundingBox(40, 40, 10, 10, 1, 0.7)]
    kept = merge_same_class(boxes)
    assert len(kept) == 2
    assert kept[0].score == 0.9 and kept[1].score == 0.7


def test_detect_config_validation():
    with pytest.raises(ValueError):
        DetectConfig(t1=0.9, t2=0.5)
    with pytest.raises(ValueError):
        DetectConfig(t1=0.0, t2=0.5)


class _Gt:
    def __init__(self, image, class_id, x, y, w, h):
        self.image, self.class_id = image, class_id
        self.x, self.y, self.w, self.h = x, y, w, h


def test_evaluate_perfect_predictions():
    gts = [_Gt("a.pgm", 1, 0, 0, 10, 10), _Gt("b.pgm", 2, 5, 5, 4, 4)]
    preds = {"a.pgm": [BoundingBox(0, 0, 10, 10, 1, 1.0)],
             "b.pgm": [BoundingBox(5, 5, 4, 4, 2, 1.0)]}
    result = evaluate_detection(preds, gts, 0.75)
    assert result.accuracy(1) == 1.0
    assert result.accuracy(2) == 1.0
    assert result.total_accuracy == 1.0


def test_evaluate_no_predictions():
    gts = [_Gt("a.pgm", 1, 0, 0, 10, 10)]
    result = evaluate_detection({}, gts, 0.75)
    assert result.accuracy(1) == 0.0
    assert result.total_accuracy == 0.0


def test_evaluate_requires_class_match():
    gts = [_Gt("a.pgm", 1, 0, 0, 10, 10)]
    preds = {"a.pgm": [BoundingBox(0, 0, 10, 10, 2, 1.0)]}
    assert evaluate_detection(preds, gts, 0.5).total_accuracy == 0.0


def test_evaluate_threshold_is_strict():
    gts = [_Gt("a.pgm", 1, 0, 0, 10, 10)]
    preds = {"a.pgm": [BoundingBox(0, 0, 10, 10, 1, 1.0)]}
    # IoU is exactly 1.0, threshold 1.0 is strict: not a hit
    assert evaluate_detection(preds, gts, 1.0).total_accuracy == 0.0
    assert evaluate_detection(preds, gts, 0.75).total_accuracy == 1.0
