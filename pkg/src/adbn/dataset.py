"""Dataset ingestion and synthesis.

Loads label and bounding-box CSVs in the chest X-ray benchmark layout
(Image Index / Finding Labels columns, pipe-separated multi-labels) together
with 8-bit PGM images, and generates deterministic synthetic blob datasets at
desk scale: background noise images plus one parametric bright shape per
diseased image, with exact ground-truth boxes.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from . import pnm

# category table: background first, then the eight findings
CXR8_CATEGORIES = [
    "No Finding", "Mass", "Nodule", "Atelectasis", "Cardiomegaly",
    "Effusion", "Infiltration", "Pneumonia", "Pneumothorax",
]


class DatasetError(Exception):
    pass


@dataclass
class LabeledImage:
    name: str
    pixels: np.ndarray  # (height, width) float64 in [0, 1]
    class_id: int


@dataclass
class GroundTruthBox:
    image: str
    class_id: int
    x: int
    y: int
    w: int
    h: int


def _class_index(classes):
    return {name: i for i, name in enumerate(classes)}


def load_labels_csv(path, classes):
    """Read (image name, class id) pairs from a label CSV.

    Multi-label cells like "Effusion|Infiltration" resolve to the first
    listed label. Unknown labels raise DatasetError naming the row.
    """
    index = _class_index(classes)
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or \
                "Image Index" not in reader.fieldnames or \
                "Finding Labels" not in reader.fieldnames:
            raise DatasetError(f"{path}: need 'Image Index' and 'Finding Labels' columns")
        for lineno, row in enumerate(reader, start=2):
            name = (row["Image Index"] or "").strip()
            labels = (row["Finding Labels"] or "").strip()
            if not name or not labels:
                raise DatasetError(f"{path}:{lineno}: empty image name or label")
            first = labels.split("|")[0].strip()
            if first not in index:
                raise DatasetError(f"{path}:{lineno}: unknown label '{first}'")
            out.append((name, index[first]))
    return out


def load_bbox_csv(path, classes):
    """Read ground-truth boxes; coordinates are floored to whole pixels."""
    index = _class_index(classes)
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        needed = {"Image Index", "Finding Label", "x", "y", "w", "h"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise DatasetError(f"{path}: need columns {sorted(needed)}")
        for lineno, row in enumerate(reader, start=2):
            name = (row["Image Index"] or "").strip()
            label = (row["Finding Label"] or "").strip()
            if label not in index:
                raise DatasetError(f"{path}:{lineno}: unknown label '{label}'")
            try:
                x, y, w, h = (float(row[k]) for k in ("x", "y", "w", "h"))
            except (TypeError, ValueError):
                raise DatasetError(f"{path}:{lineno}: malformed coordinates") from None
            if w <= 0 or h <= 0:
                raise DatasetError(f"{path}:{lineno}: non-positive box size")
            out.append(GroundTruthBox(name, index[label], int(np.floor(x)),
                                      int(np.floor(y)), max(1, int(np.floor(w))),
                                      max(1, int(np.floor(h)))))
    return out


def load_image(path):
    """Read an 8-bit PGM as a (height, width) float array scaled to [0, 1]."""
    return pnm.read_pgm(path).astype(np.float64) / 255.0


# shape table for the synthetic diseases: (intensity level, fill pattern).
# every cue survives cropping a sub-window and resizing it to a square, which
# is how the detector looks at these images
_SHAPES = [
    (0.95, "solid"),
    (0.95, "ring"),
    (0.95, "hstripe"),
    (0.95, "vstripe"),
    (0.55, "solid"),
    (0.55, "ring"),
    (0.55, "hstripe"),
    (0.55, "vstripe"),
]

_NOISE_AMPLITUDE = 0.15
_STRIPE_DROP = 0.45  # dark stripe level as a fraction of the plateau


def synth_generate(count, size, n_classes, rng):
    """Generate a deterministic synthetic dataset of size x size images.

    Class 0 images are low-amplitude noise only. Each class k >= 1 image adds
    one bright elliptic lesion over the noise: the class fixes its intensity
    plateau and fill pattern (solid, hollow ring, or stripes), while radius,
    mild eccentricity and position are randomized per image. Every image comes
    with the exact bounding box of the rendered shape.

    Returns (list of LabeledImage, list of GroundTruthBox).
    """
    if n_classes < 2 or n_classes > len(_SHAPES) + 1:
        raise ValueError(f"n_classes must be in [2, {len(_SHAPES) + 1}]")
    if size < 16:
        raise ValueError("size must be >= 16")
    images = []
    boxes = []
    for i in range(count):
        class_id = i % n_classes
        name = f"synth_{i:05d}.pgm"
        pixels = rng.uniform((size, size)) * _NOISE_AMPLITUDE
        if class_id > 0:
            level, pattern = _SHAPES[class_id - 1]
            # wide radius range: small lesions in a noise field up to lesions
            # nearly filling the canvas, so crops at any zoom look familiar
            radius = (0.16 + 0.30 * rng.uniform()) * size
            aspect = 0.93 + 0.22 * rng.uniform()  # nuisance eccentricity
            a = max(2.0, min(radius * np.sqrt(aspect), size / 2 - 2))
            b = max(2.0, min(radius / np.sqrt(aspect), size / 2 - 2))
            margin_x = int(np.ceil(a)) + 1
            margin_y = int(np.ceil(b)) + 1
            cx = margin_x + rng.uniform() * (size - 2 * margin_x)
            cy = margin_y + rng.uniform() * (size - 2 * margin_y)
            level = level + (rng.uniform() - 0.5) * 0.05
            yy, xx = np.mgrid[0:size, 0:size]
            d = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2
            mask = d <= 1.0
            fill = np.full((size, size), level)
            if pattern == "ring":
                fill = np.where(d < 0.30, pixels, fill)
            elif pattern in ("hstripe", "vstripe"):
                period = max(3, int(np.floor(2.0 * b / 5.0 + 0.5)))
                coord = yy if pattern == "hstripe" else xx
                dark = (coord // period) % 2 == 1
                fill = np.where(dark, level * _STRIPE_DROP, fill)
            speckle = (rng.uniform((size, size)) - 0.5) * 0.05
            pixels = np.where(mask, np.clip(fill + speckle, 0.0, 1.0), pixels)
            ys, xs = np.nonzero(mask)
            x0, y0 = int(xs.min()), int(ys.min())
            boxes.append(GroundTruthBox(name, class_id, x0, y0,
                                        int(xs.max()) - x0 + 1,
                                        int(ys.max()) - y0 + 1))
        # quantize to the byte grid so a PGM round trip is exact
        pixels = np.floor(pixels * 255.0 + 0.5) / 255.0
        images.append(LabeledImage(name, pixels, class_id))
    return images, boxes


def split(items, fraction, rng):
    """Seed-deterministic shuffle split into (train, test) lists."""
    if not (0.0 < fraction < 1.0):
        raise DatasetError("fraction must be in (0, 1)")
    n = len(items)
    n_train = int(np.floor(n * fraction + 0.5))
    if n_train < 1 or n_train >= n:
        raise DatasetError(f"degenerate split: {n_train}/{n - n_train} items")
    order = rng.permutation(n)
    train = [items[i] for i in order[:n_train]]
    test = [items[i] for i in order[n_train:]]
    return train, test


def write_dataset(directory, images, boxes, classes):
    """Write images/ PGMs plus labels.csv and boxes.csv under directory."""
    img_dir = os.path.join(directory, "images")
    os.makedirs(img_dir, exist_ok=True)
    with open(os.path.join(directory, "labels.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["Image Index", "Finding Labels"])
        for img in images:
            writer.writerow([img.name, classes[img.class_id]])
            bytes_px = np.floor(img.pixels * 255.0 + 0.5).astype(np.uint8)
            pnm.write_pgm(os.path.join(img_dir, img.name), bytes_px)
    with open(os.path.join(directory, "boxes.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["Image Index", "Finding Label", "x", "y", "w", "h"])
        for box in boxes:
            writer.writerow([box.image, classes[box.class_id],
                             box.x, box.y, box.w, box.h])


def load_dataset_dir(directory, classes):
    """Load a directory written by write_dataset (boxes.csv optional)."""
    labels = load_labels_csv(os.path.join(directory, "labels.csv"), classes)
    img_dir = os.path.join(directory, "images")
    images = []
    for name, class_id in labels:
        path = os.path.join(img_dir, name)
        if not os.path.exists(path):
            raise DatasetError(f"missing image file {path}")
        images.append(LabeledImage(name, load_image(path), class_id))
    boxes_path = os.path.join(directory, "boxes.csv")
    boxes = load_bbox_csv(boxes_path, classes) if os.path.exists(boxes_path) else []
    return images, boxes
