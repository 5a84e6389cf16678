"""Region-proposal object detection on a trained network, plus IoU scoring.

The image is split into Voronoi cells around random seed points. Each cell's
crop is scored by the classifier; cells whose best non-background probability
clears T1 become anchors, a grid of differently sized boxes around each anchor
is scored again, and boxes clearing the stricter T2 are emitted.
"""

from dataclasses import dataclass, field

import numpy as np

from . import dbn


@dataclass
class BoundingBox:
    """Axis-aligned pixel rectangle with a class label and score."""

    x: int
    y: int
    w: int
    h: int
    class_id: int = 0
    score: float = 0.0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("box needs positive width and height")


@dataclass
class VoronoiPartition:
    """Per-pixel nearest-seed assignment; region ids index into seeds."""

    seeds: list
    assignment: np.ndarray
    n_regions: int


@dataclass
class DetectConfig:
    """Knobs for the detection pass."""

    n_regions: int = 16
    t1: float = 0.5
    t2: float = 0.9
    size_factors: tuple = (0.75, 1.0, 1.25, 1.5)
    background_class: int = 0
    merge_overlaps: bool = False

    def __post_init__(self):
        if not (0.0 < self.t1 < self.t2 < 1.0):
            raise ValueError("need 0 < t1 < t2 < 1")
        if self.n_regions < 1 or not self.size_factors:
            raise ValueError("need at least one region and one size factor")


def voronoi_partition(width, height, seeds):
    """Assign every pixel to its nearest seed (squared Euclidean distance).

    Ties go to the lowest seed index. Seeds are (x, y) pixel coordinates and
    must lie inside the image.
    """
    seeds = [(int(x), int(y)) for x, y in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    for sx, sy in seeds:
        if not (0 <= sx < width and 0 <= sy < height):
            raise ValueError(f"seed ({sx}, {sy}) outside {width}x{height} image")
    xs = np.arange(width, dtype=np.int64)
    ys = np.arange(height, dtype=np.int64)
    # (N, h, w) stack of exact integer squared distances; argmin picks the
    # lowest region index on ties
    d2 = np.stack([(ys[:, None] - sy) ** 2 + (xs[None, :] - sx) ** 2
                   for sx, sy in seeds])
    assignment = np.argmin(d2, axis=0).astype(np.int64)
    return VoronoiPartition(seeds, assignment, len(seeds))


def bilinear_resize(src, out_h, out_w):
    """Bilinear resampling with half-pixel centers and edge clamping."""
    src = np.asarray(src, dtype=np.float64)
    in_h, in_w = src.shape
    sy = np.clip((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0.0, in_h - 1.0)
    sx = np.clip((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def region_crop(image, box, out_shape):
    """Crop a box from the image (zero-padded outside) and resize.

    Args:
        image: (h, w) grayscale array.
        box: BoundingBox or (x, y, w, h) in pixels; may extend past the image.
        out_shape: (width, height) of the resized result.

    Returns:
        (out_height, out_width) array.
    """
    image = np.asarray(image, dtype=np.float64)
    ih, iw = image.shape
    if isinstance(box, BoundingBox):
        x, y, w, h = box.x, box.y, box.w, box.h
    else:
        x, y, w, h = box
    x, y, w, h = int(x), int(y), int(w), int(h)
    if w <= 0 or h <= 0:
        raise ValueError("zero-area box")
    if x + w <= 0 or y + h <= 0 or x >= iw or y >= ih:
        raise ValueError("box does not overlap the image")
    patch = np.zeros((h, w))
    sy0, sy1 = max(y, 0), min(y + h, ih)
    sx0, sx1 = max(x, 0), min(x + w, iw)
    patch[sy0 - y:sy1 - y, sx0 - x:sx1 - x] = image[sy0:sy1, sx0:sx1]
    out_w, out_h = out_shape
    return bilinear_resize(patch, out_h, out_w)


def iou(a, b):
    """Intersection over union of two (x, y, w, h) pixel boxes."""
    ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def _score_regions(model, image, boxes, cfg):
    """Best non-background class and probability for each box crop."""
    crops = [region_crop(image, box, model.input_shape).ravel() for box in boxes]
    probs = dbn.predict_proba_batch(model, np.stack(crops))
    fg = probs.copy()
    fg[:, cfg.background_class] = -1.0
    best = np.argmax(fg, axis=1)
    return best, fg[np.arange(len(boxes)), best]


def _region_anchors(partition):
    """Bounding box and rounded pixel centroid for each non-empty region."""
    anchors = []
    for r in range(partition.n_regions):
        ys, xs = np.nonzero(partition.assignment == r)
        if xs.size == 0:
            continue
        x0, x1 = int(xs.min()), int(xs.max())
        y0, y1 = int(ys.min()), int(ys.max())
        cx = int(np.floor(np.mean(xs) + 0.5))
        cy = int(np.floor(np.mean(ys) + 0.5))
        anchors.append((x0, y0, x1 - x0 + 1, y1 - y0 + 1, cx, cy))
    return anchors


def detect(model, image, cfg, rng):
    """Run the full two-threshold detection pass over one image.

    Returns the emitted boxes in canonical order (class, score descending,
    then x, y); an empty list is a valid outcome.
    """
    image = np.asarray(image, dtype=np.float64)
    ih, iw = image.shape
    seeds = [(rng.integers(0, iw), rng.integers(0, ih)) for _ in range(cfg.n_regions)]
    partition = voronoi_partition(iw, ih, seeds)
    anchors = _region_anchors(partition)
    region_boxes = [BoundingBox(x, y, w, h) for x, y, w, h, _, _ in anchors]
    _, region_scores = _score_regions(model, image, region_boxes, cfg)

    candidates = []
    for (x, y, w, h, cx, cy), score in zip(anchors, region_scores):
        if score <= cfg.t1:
            continue
        for nf in cfg.size_factors:
            for mf in cfg.size_factors:
                bw = max(1, int(np.floor(w * nf + 0.5)))
                bh = max(1, int(np.floor(h * mf + 0.5)))
                bx = cx - bw // 2
                by = cy - bh // 2
                if bx + bw <= 0 or by + bh <= 0 or bx >= iw or by >= ih:
                    continue
                candidates.append(BoundingBox(bx, by, bw, bh))

    emitted = {}
    if candidates:
        classes, scores = _score_regions(model, image, candidates, cfg)
        for box, k, s in zip(candidates, classes, scores):
            if s <= cfg.t2:
                continue
            key = (int(k), box.x, box.y, box.w, box.h)
            if key not in emitted or emitted[key].score < s:
                emitted[key] = BoundingBox(box.x, box.y, box.w, box.h,
                                           int(k), float(s))
    boxes = list(emitted.values())
    if cfg.merge_overlaps:
        boxes = merge_same_class(boxes)
    boxes.sort(key=lambda b: (b.class_id, -b.score, b.x, b.y))
    return boxes


def crop_training_views(images, gt_boxes, out_shape, rng, views_per_box=2,
                        background_views=1):
    """Build crop/resize training views so a classifier scores crops reliably.

    The detection pass queries the model with resized sub-windows, a view the
    whole-image training distribution does not cover. For each ground-truth
    box this samples jittered crops (scaled 0.8x to 1.8x, shifted up to a
    quarter of the box) labeled with the box class, plus off-lesion and
    noise-image crops labeled background.

    Args:
        images: list with .name, .pixels, .class_id attributes.
        gt_boxes: ground-truth boxes with .image, .class_id, .x, .y, .w, .h.
        out_shape: (width, height) the views are resized to.
        rng: Rng driving all sampling.
        views_per_box: jittered positive crops per ground-truth box.
        background_views: background crops drawn per image.

    Returns:
        (X, y): flattened views and their class labels.
    """
    by_image = {}
    for box in gt_boxes:
        by_image.setdefault(box.image, []).append(box)
    X, y = [], []

    def add(image, box, label):
        X.append(region_crop(image, box, out_shape).ravel())
        y.append(label)

    for img in images:
        ih, iw = img.pixels.shape
        boxes = by_image.get(img.name, [])
        for gt in boxes:
            for _ in range(views_per_box):
                s = 0.8 + 1.0 * rng.uniform()
                bw = max(2, int(np.floor(gt.w * s + 0.5)))
                bh = max(2, int(np.floor(gt.h * s + 0.5)))
                bx = gt.x + gt.w // 2 - bw // 2 + int(
                    np.floor((rng.uniform() - 0.5) * 0.5 * gt.w + 0.5))
                by = gt.y + gt.h // 2 - bh // 2 + int(
                    np.floor((rng.uniform() - 0.5) * 0.5 * gt.h + 0.5))
                add(img.pixels, (bx, by, bw, bh), gt.class_id)
        for _ in range(background_views):
            bw = max(4, int((0.25 + 0.5 * rng.uniform()) * iw))
            bh = max(4, int((0.25 + 0.5 * rng.uniform()) * ih))
            for _ in range(4):
                bx = rng.integers(0, max(1, iw - bw + 1))
                by = rng.integers(0, max(1, ih - bh + 1))
                probe = BoundingBox(bx, by, bw, bh)
                if all(iou(probe, g) < 0.05 for g in boxes):
                    add(img.pixels, (bx, by, bw, bh), 0)
                    break
    return np.stack(X), np.array(y, dtype=np.int64)


def merge_same_class(boxes, overlap=0.5):
    """Keep only the best-scoring box among same-class boxes with IoU > overlap."""
    kept = []
    for box in sorted(boxes, key=lambda b: -b.score):
        if all(b.class_id != box.class_id or iou(b, box) <= overlap for b in kept):
            kept.append(box)
    return kept


@dataclass
class DetectionEval:
    """Per-class hit counts from matching predictions against ground truth."""

    per_class: dict = field(default_factory=dict)  # class_id -> [correct, total]

    def record(self, class_id, correct):
        entry = self.per_class.setdefault(class_id, [0, 0])
        entry[0] += 1 if correct else 0
        entry[1] += 1

    def accuracy(self, class_id):
        correct, total = self.per_class.get(class_id, (0, 0))
        return correct / total if total else None

    @property
    def total_accuracy(self):
        correct = sum(v[0] for v in self.per_class.values())
        total = sum(v[1] for v in self.per_class.values())
        return correct / total if total else None


def evaluate_detection(pred_by_image, gt_boxes, iou_threshold):
    """Score predictions: a ground-truth box counts as detected when some
    predicted box of the same class overlaps it with IoU above the threshold.

    Args:
        pred_by_image: dict image name -> list of BoundingBox.
        gt_boxes: iterable with .image, .class_id, .x, .y, .w, .h attributes.
        iou_threshold: overlap required for a hit, in (0, 1].
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise ValueError("iou_threshold must be in (0, 1]")
    result = DetectionEval()
    for gt in gt_boxes:
        preds = pred_by_image.get(gt.image, [])
        hit = any(p.class_id == gt.class_id and iou(p, gt) > iou_threshold
                  for p in preds)
        result.record(gt.class_id, hit)
    return result
