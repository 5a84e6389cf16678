"""Command-line entry point: synth, train, eval, detect, heatmap.

Configuration is a flat key=value file with # comments; unknown keys are hard
errors so a misspelled threshold cannot silently fall back to a default.
Every command is deterministic given its config and seed.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import adaptive, dataset, dbn, detection, heatmap, metrics, pnm
from .numerics import Rng

# key -> (type, default); bool values accept true/false/1/0
CONFIG_SCHEMA = {
    "seed": (int, 42),
    "data_dir": (str, ""),
    "model_path": (str, "model.adbn"),
    "out_dir": (str, "."),
    "learning_rate": (float, 0.005),
    "finetune_learning_rate": (float, 0.0),  # 0 = reuse learning_rate
    "batch_size": (int, 100),
    "epochs_per_layer": (int, 50),
    "finetune_epochs": (int, 50),
    "initial_hidden": (int, 400),
    "theta_g": (float, 0.001),
    "theta_a": (float, 0.100),
    "theta_l1": (float, 0.05),
    "theta_l2": (float, 0.05),
    "max_hidden": (int, 2000),
    "max_layers": (int, 8),
    "window": (int, 5),
    "regions": (int, 16),
    "t1": (float, 0.5),
    "t2": (float, 0.9),
    "size_factors": (str, "0.75,1.0,1.25,1.5"),
    "background_class": (int, 0),
    "merge_overlaps": (bool, False),
    "threads": (int, 1),
}


class CliError(Exception):
    pass


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text}")


def parse_config(path):
    """Read a key=value config file; unknown keys raise with file and line."""
    values = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value")
            key, _, text = line.partition("=")
            key = key.strip()
            if key not in CONFIG_SCHEMA:
                raise CliError(f"{path}:{lineno}: unknown key '{key}'")
            typ, _ = CONFIG_SCHEMA[key]
            try:
                values[key] = _parse_bool(text) if typ is bool else typ(text.strip())
            except ValueError:
                raise CliError(f"{path}:{lineno}: bad value for '{key}'") from None
    return values


def _train_config(values):
    acfg = adaptive.AdaptiveConfig(
        theta_g=values["theta_g"], theta_a=values["theta_a"],
        theta_l1=values["theta_l1"], theta_l2=values["theta_l2"],
        max_hidden=values["max_hidden"], max_layers=values["max_layers"],
        window=values["window"])
    return dbn.TrainConfig(
        learning_rate=values["learning_rate"], batch_size=values["batch_size"],
        epochs_per_layer=values["epochs_per_layer"],
        finetune_epochs=values["finetune_epochs"],
        initial_hidden=values["initial_hidden"], adaptive=acfg,
        seed=values["seed"],
        finetune_learning_rate=values["finetune_learning_rate"])


def _detect_config(values):
    factors = tuple(float(t) for t in values["size_factors"].split(",") if t.strip())
    return detection.DetectConfig(
        n_regions=values["regions"], t1=values["t1"], t2=values["t2"],
        size_factors=factors, background_class=values["background_class"],
        merge_overlaps=values["merge_overlaps"])


def _load_matrix(images):
    """Stack images into a (n, pixels) matrix; all dims must agree."""
    if not images:
        raise CliError("dataset is empty")
    h, w = images[0].pixels.shape
    X = np.empty((len(images), h * w))
    y = np.empty(len(images), dtype=np.int64)
    for i, img in enumerate(images):
        if img.pixels.shape != (h, w):
            raise CliError(f"{img.name}: image size differs from {w}x{h}")
        X[i] = img.pixels.ravel()
        y[i] = img.class_id
    return X, y, (w, h)


def cmd_synth(args):
    rng = Rng(args.seed)
    images, boxes = dataset.synth_generate(args.count, args.size, args.classes, rng)
    classes = dataset.CXR8_CATEGORIES
    if args.split is not None:
        train, test = dataset.split(images, args.split, rng)
        for subdir, subset in (("train", train), ("test", test)):
            names = {img.name for img in subset}
            sub_boxes = [b for b in boxes if b.image in names]
            dataset.write_dataset(os.path.join(args.out, subdir), subset,
                                  sub_boxes, classes)
        print(f"wrote {len(train)} train / {len(test)} test images under {args.out}")
    else:
        dataset.write_dataset(args.out, images, boxes, classes)
        print(f"wrote {len(images)} images and {len(boxes)} boxes under {args.out}")
    return 0


def cmd_train(args):
    values = parse_config(args.config) if args.config else \
        {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    if args.data:
        values["data_dir"] = args.data
    if args.model:
        values["model_path"] = args.model
    if args.out:
        values["out_dir"] = args.out
    if not values["data_dir"]:
        raise CliError("no data_dir configured (use --data or the config file)")

    classes = dataset.CXR8_CATEGORIES
    images, _ = dataset.load_dataset_dir(values["data_dir"], classes)
    X, y, input_shape = _load_matrix(images)
    cfg = _train_config(values)
    rng = Rng(cfg.seed)
    trace = adaptive.GrowthTrace()
    model = dbn.pretrain(X, input_shape, len(classes), cfg, rng, trace)
    dbn.finetune(model, X, y, cfg, rng)

    os.makedirs(values["out_dir"], exist_ok=True)
    dbn.save(model, values["model_path"])
    trace.write_csv(os.path.join(values["out_dir"], "growth_trace.csv"))

    preds = np.argmax(dbn.predict_proba_batch(model, X), axis=1)
    _, overall = metrics.per_class_accuracy(preds, y, len(classes))
    summary = (f"layers: {len(model.layers)}\n"
               f"hidden sizes: {model.hidden_sizes}\n"
               f"train accuracy: {100.0 * overall:.1f}%")
    with open(os.path.join(values["out_dir"], "run_summary.txt"), "w") as f:
        f.write(summary + "\n")
    print(summary)
    return 0


def cmd_eval(args):
    classes = dataset.CXR8_CATEGORIES
    model = dbn.load(args.model)
    images, _ = dataset.load_dataset_dir(args.data, classes)
    X, y, _ = _load_matrix(images)
    probs = dbn.predict_proba_batch(model, X)
    preds = np.argmax(probs, axis=1)
    per_class, overall = metrics.per_class_accuracy(preds, y, len(classes))
    print(metrics.format_accuracy_table(per_class, overall, classes))

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "accuracy.csv"), "w") as f:
        f.write("class,accuracy\n")
        for name, acc in zip(classes, per_class):
            f.write(f"{name},{'' if acc is None else acc}\n")
        f.write(f"Overall,{overall}\n")

    auc_lines = ["class,auc"]
    with open(os.path.join(args.out, "roc.csv"), "w") as f:
        f.write("class,threshold,fpr,tpr\n")
        for k, name in enumerate(classes):
            binary = (y == k).astype(np.int64)
            if binary.min() == binary.max():
                continue  # class absent (or universal): no curve
            points = metrics.roc_curve(probs[:, k], binary)
            for p in points:
                f.write(f"{name},{p.threshold},{p.fpr},{p.tpr}\n")
            auc_lines.append(f"{name},{metrics.auc(points)}")
    with open(os.path.join(args.out, "auc.csv"), "w") as f:
        f.write("\n".join(auc_lines) + "\n")
    print("\n".join(auc_lines))
    return 0


def _iter_detect_images(args):
    classes = dataset.CXR8_CATEGORIES
    if args.image:
        yield os.path.basename(args.image), dataset.load_image(args.image)
    else:
        images, _ = dataset.load_dataset_dir(args.data, classes)
        for img in images:
            yield img.name, img.pixels


def cmd_detect(args):
    model = dbn.load(args.model)
    if not args.image and not args.data:
        raise CliError("need --image or --data")
    cfg = detection.DetectConfig(
        n_regions=args.regions, t1=args.t1, t2=args.t2,
        merge_overlaps=args.merge)
    print(f"detect: t1={cfg.t1} t2={cfg.t2} regions={cfg.n_regions} "
          f"seed={args.seed}", file=sys.stderr)
    rng = Rng(args.seed)
    classes = dataset.CXR8_CATEGORIES
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for name, pixels in _iter_detect_images(args):
            for box in detection.detect(model, pixels, cfg, rng):
                record = {"image": name, "class": classes[box.class_id],
                          "x": box.x, "y": box.y, "w": box.w, "h": box.h,
                          "score": box.score}
                out.write(json.dumps(record) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_heatmap(args):
    classes = dataset.CXR8_CATEGORIES
    if args.label not in classes:
        raise CliError(f"unknown class '{args.label}'; valid: {', '.join(classes)}")
    model = dbn.load(args.model)
    pixels = dataset.load_image(args.image)
    hm = heatmap.compute_heatmap(model, pixels, classes.index(args.label),
                                 discrete=not args.continuous)
    os.makedirs(args.out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.image))[0]
    pgm_path = os.path.join(args.out_dir, f"{stem}_heat.pgm")
    ppm_path = os.path.join(args.out_dir, f"{stem}_heat.ppm")
    pnm.write_pgm(pgm_path, hm.values)
    pnm.write_ppm(ppm_path, heatmap.render_jet(hm))
    print(f"wrote {pgm_path} and {ppm_path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="adbn",
        description="Self-structuring deep belief networks: train, evaluate, "
                    "detect objects, and render relevance heatmaps.")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap; 1 is the bit-exact canonical path")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--classes", type=int, default=9)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--split", type=float, default=None,
                   help="write train/ and test/ subsets at this fraction")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="pre-train and fine-tune a model")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--data", help="dataset directory (labels.csv + images/)")
    p.add_argument("--model", help="output model path")
    p.add_argument("--out", help="output directory for trace and summary")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy table, ROC curves and AUC")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("detect", help="emit bounding boxes as JSON lines")
    p.add_argument("--model", required=True)
    p.add_argument("--image")
    p.add_argument("--data")
    p.add_argument("--t1", type=float, default=0.5)
    p.add_argument("--t2", type=float, default=0.9)
    p.add_argument("--regions", type=int, default=16)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--merge", action="store_true",
                   help="keep only the best box among overlapping same-class boxes")
    p.add_argument("--out", help="output JSON-lines path (default stdout)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("heatmap", help="write PGM/PPM relevance heatmaps")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--label", required=True, help="class name to explain")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--continuous", action="store_true",
                   help="use raw activations instead of binarized ones")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, dataset.DatasetError, dbn.ModelFormatError,
            pnm.PnmError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
