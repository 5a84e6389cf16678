"""Stacked-RBM network: adaptive pre-training, softmax head, fine-tuning, IO.

A network is an ordered stack of RBM layers plus a linear softmax output head.
Pre-training grows the stack bottom-up, letting each layer adapt its hidden
unit count before deciding (from its walking distance and reconstruction
error) whether another layer is needed. Fine-tuning treats the stack as a
plain feed-forward sigmoid network and minimizes cross-entropy with minibatch
SGD; the structure is frozen at that point.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import rbm
from .adaptive import (AdaptiveConfig, GrowthTrace, StructureMonitor,
                       annihilate_neurons, generate_neuron,
                       layer_generation_check, neuron_annihilation_check,
                       neuron_generation_check)
from .numerics import Rng, softmax

MAGIC = b"ADBN1"


class ModelFormatError(Exception):
    """Base class for model file problems."""


class BadMagicError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


class DimensionMismatchError(ModelFormatError):
    pass


@dataclass
class TrainConfig:
    """Hyperparameters for pre-training and fine-tuning.

    finetune_learning_rate = 0 means "reuse learning_rate"; the contrastive
    phase usually wants a smaller step than the supervised one.
    """

    learning_rate: float = 0.005
    batch_size: int = 100
    epochs_per_layer: int = 50
    finetune_epochs: int = 50
    initial_hidden: int = 400
    adaptive: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    seed: int = 42
    finetune_learning_rate: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0 or self.finetune_learning_rate < 0:
            raise ValueError("learning rates must be >= 0")
        if min(self.batch_size, self.epochs_per_layer, self.finetune_epochs,
               self.initial_hidden) < 1:
            raise ValueError("counts must be positive")

    @property
    def effective_finetune_lr(self):
        return self.finetune_learning_rate or self.learning_rate


class AdaptiveDbn:
    """RBM stack plus softmax head; input_shape is (width, height) in pixels."""

    def __init__(self, layers, out_W, out_b, input_shape):
        self.layers = list(layers)
        self.out_W = np.asarray(out_W, dtype=np.float64)
        self.out_b = np.asarray(out_b, dtype=np.float64)
        self.input_shape = (int(input_shape[0]), int(input_shape[1]))
        validate_chain(self)

    @property
    def n_classes(self):
        return self.out_b.size

    @property
    def hidden_sizes(self):
        return [layer.n_hidden for layer in self.layers]


def validate_chain(model):
    """Walk the stack and raise DimensionMismatchError on any size break."""
    if not model.layers:
        raise DimensionMismatchError("model has no layers")
    w, h = model.input_shape
    if w * h != model.layers[0].n_visible:
        raise DimensionMismatchError(
            f"input {w}x{h} does not match layer 0 visible size {model.layers[0].n_visible}")
    for i in range(len(model.layers) - 1):
        if model.layers[i].n_hidden != model.layers[i + 1].n_visible:
            raise DimensionMismatchError(
                f"layer {i} hidden {model.layers[i].n_hidden} != "
                f"layer {i + 1} visible {model.layers[i + 1].n_visible}")
    if model.out_W.shape != (model.layers[-1].n_hidden, model.out_b.size):
        raise DimensionMismatchError(
            f"output weights {model.out_W.shape} do not match last hidden "
            f"{model.layers[-1].n_hidden} and {model.out_b.size} classes")
    if model.out_b.size < 2:
        raise DimensionMismatchError("need at least 2 classes")


def _flatten_input(model, image):
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        w, h = model.input_shape
        if x.shape != (h, w):
            raise ValueError(f"image shape {x.shape} != expected {(h, w)}")
        x = x.ravel()
    if x.shape[-1] != model.layers[0].n_visible:
        raise ValueError(f"input length {x.shape[-1]} != visible size "
                         f"{model.layers[0].n_visible}")
    return x


def _train_layer(layer, mon, data, cfg, rng, trace, layer_idx):
    """Adaptive CD training of one layer over its epoch budget."""
    acfg = cfg.adaptive
    n = data.shape[0]
    # fluctuation during early fitting looks like pattern conflict; only a
    # signal that persists after warm-up should trigger generation
    warmup = max(2 * acfg.window, cfg.epochs_per_layer // 3)
    for epoch in range(1, cfg.epochs_per_layer + 1):
        order = rng.permutation(n)
        sum_dW = np.zeros_like(layer.W)
        sum_db = np.zeros_like(layer.b)
        sum_dc = np.zeros_like(layer.c)
        sum_err = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = data[order[start:start + cfg.batch_size]]
            upd = rbm.cd_step(layer, batch, rng)
            rbm.apply_update(layer, upd, cfg.learning_rate)
            m = batch.shape[0]
            sum_dW += upd.dW * m
            sum_db += upd.db * m
            sum_dc += upd.dc * m
            sum_err += upd.recon_error * m
        epoch_upd = rbm.CdUpdate(sum_dW / n, sum_db / n, sum_dc / n, sum_err / n)
        mon.observe_epoch(epoch_upd, epoch_upd.recon_error)
        if trace is not None:
            trace.add(epoch, layer_idx, layer.n_hidden, mon.wd_hist[-1], mon.e_norm)

        if epoch % acfg.window == 0 and warmup <= epoch < cfg.epochs_per_layer:
            parents = neuron_generation_check(mon, acfg, layer.n_hidden)
            for parent in parents:
                generate_neuron(layer, parent, rng, max_hidden=acfg.max_hidden)
                mon.add_neuron()
                if trace is not None:
                    trace.add(epoch, layer_idx, layer.n_hidden, mon.wd_hist[-1],
                              mon.e_norm, "generate")

    # annihilation runs once, after the layer's generation phases are over
    dead = neuron_annihilation_check(layer, data, acfg.theta_a)
    if len(dead) >= layer.n_hidden:
        # keep the most active unit so the layer survives
        acts = np.mean(rbm.hidden_probs(layer, data), axis=0)
        dead = [j for j in dead if j != int(np.argmax(acts))]
    if dead:
        annihilate_neurons(layer, dead)
        mon.remove_neurons(dead)
        if trace is not None:
            trace.add(cfg.epochs_per_layer, layer_idx, layer.n_hidden,
                      mon.wd_hist[-1], mon.e_norm, "annihilate")
    return mon


def pretrain(X, input_shape, n_classes, cfg, rng=None, trace=None):
    """Greedy adaptive pre-training of the full stack.

    Args:
        X: array (n_samples, width*height) of pixel values in [0, 1].
        input_shape: (width, height) of the source images.
        n_classes: output category count (the head starts at zero).
        cfg: TrainConfig.
        rng: optional Rng; defaults to Rng(cfg.seed).
        trace: optional GrowthTrace receiving per-epoch rows.

    Returns:
        AdaptiveDbn whose depth and hidden sizes were chosen during training.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty (n, pixels) array")
    w, h = input_shape
    if X.shape[1] != w * h:
        raise ValueError(f"X has {X.shape[1]} columns, expected {w * h}")
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if rng is None:
        rng = Rng(cfg.seed)

    layers = []
    data = X
    while True:
        layer = rbm.RbmLayer.initialize(
            data.shape[1], min(cfg.initial_hidden, cfg.adaptive.max_hidden), rng)
        mon = StructureMonitor(layer.n_hidden, cfg.adaptive.window)
        _train_layer(layer, mon, data, cfg, rng, trace, len(layers))
        layers.append(layer)
        if not layer_generation_check(mon, cfg.adaptive, len(layers)):
            break
        data = rbm.hidden_probs(layer, data)
        if trace is not None:
            trace.add(cfg.epochs_per_layer, len(layers) - 1, layer.n_hidden,
                      mon.wd_hist[-1], mon.e_norm, "new_layer")

    out_W = np.zeros((layers[-1].n_hidden, n_classes))
    out_b = np.zeros(n_classes)
    return AdaptiveDbn(layers, out_W, out_b, input_shape)


def forward_hidden(model, image):
    """Per-layer hidden activation vectors for one image (or flat vector)."""
    a = _flatten_input(model, image)
    states = []
    for layer in model.layers:
        a = rbm.hidden_probs(layer, a)
        states.append(a)
    return states


def _forward_batch(model, X):
    """Activations [input, hidden_1, ..., hidden_L] for a (B, I) batch."""
    states = [np.asarray(X, dtype=np.float64)]
    for layer in model.layers:
        states.append(rbm.hidden_probs(layer, states[-1]))
    return states


def predict_proba(model, image):
    """Class probability vector for one image (2-d grid or flat vector)."""
    h_last = forward_hidden(model, image)[-1]
    return softmax(h_last @ model.out_W + model.out_b)


def predict_proba_batch(model, X):
    """Class probabilities, one row per flattened input row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.layers[0].n_visible:
        raise ValueError(f"input length {X.shape[1]} != visible size "
                         f"{model.layers[0].n_visible}")
    h_last = _forward_batch(model, X)[-1]
    return softmax(h_last @ model.out_W + model.out_b)


def classify(model, image):
    """(class index, probability) with ties broken toward the lowest index."""
    p = predict_proba(model, image)
    k = int(np.argmax(p))
    return k, float(p[k])


def cross_entropy_and_grads(model, X, y):
    """Mean cross-entropy over (X, y) and its gradients.

    Returns (loss, grads) with grads keyed 'W{l}', 'c{l}' per layer plus
    'out_W', 'out_b'. The RBM visible biases take no part in the forward pass
    and therefore get no gradient.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    K = model.n_classes
    if y.size and (y.min() < 0 or y.max() >= K):
        raise ValueError("label out of range")
    n = X.shape[0]
    states = _forward_batch(model, X)
    logits = states[-1] @ model.out_W + model.out_b
    probs = softmax(logits)
    eps = 1e-12
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + eps)))

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    grads = {
        "out_W": states[-1].T @ dlogits,
        "out_b": np.sum(dlogits, axis=0),
    }
    delta = dlogits @ model.out_W.T
    for l in range(len(model.layers) - 1, -1, -1):
        a = states[l + 1]
        delta = delta * a * (1.0 - a)
        grads[f"W{l}"] = states[l].T @ delta
        grads[f"c{l}"] = np.sum(delta, axis=0)
        if l > 0:
            delta = delta @ model.layers[l].W.T
    return loss, grads


def finetune(model, X, y, cfg, rng=None):
    """Supervised minibatch SGD on cross-entropy; structure stays fixed."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if y.size and (y.min() < 0 or y.max() >= model.n_classes):
        raise ValueError("label out of range")
    if rng is None:
        rng = Rng(cfg.seed)
    n = X.shape[0]
    lr = cfg.effective_finetune_lr
    for _ in range(cfg.finetune_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, grads = cross_entropy_and_grads(model, X[idx], y[idx])
            model.out_W -= lr * grads["out_W"]
            model.out_b -= lr * grads["out_b"]
            for l, layer in enumerate(model.layers):
                layer.W -= lr * grads[f"W{l}"]
                layer.c -= lr * grads[f"c{l}"]
    return model


def _pack_u32(*values):
    return struct.pack("<" + "I" * len(values), *values)


def save(model, path):
    """Write the model in the self-describing little-endian binary format."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_pack_u32(len(model.layers)))
        for layer in model.layers:
            f.write(_pack_u32(layer.n_visible, layer.n_hidden))
            f.write(layer.b.astype("<f8").tobytes())
            f.write(layer.c.astype("<f8").tobytes())
            f.write(layer.W.astype("<f8").tobytes())
        f.write(_pack_u32(model.n_classes))
        f.write(model.out_b.astype("<f8").tobytes())
        f.write(model.out_W.astype("<f8").tobytes())
        f.write(_pack_u32(model.input_shape[0], model.input_shape[1]))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedModelError(f"file truncated while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def f64(self, count, what):
        raw = self.take(8 * count, what)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def load(path):
    """Read a model written by save(); raises the distinct format errors."""
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise BadMagicError("bad magic header")
    n_layers = r.u32("layer count")
    if n_layers < 1:
        raise DimensionMismatchError("layer count must be >= 1")
    layers = []
    for i in range(n_layers):
        I = r.u32(f"layer {i} visible size")
        J = r.u32(f"layer {i} hidden size")
        if I < 1 or J < 1:
            raise DimensionMismatchError(f"layer {i} has empty dimension")
        b = r.f64(I, f"layer {i} visible bias")
        c = r.f64(J, f"layer {i} hidden bias")
        W = r.f64(I * J, f"layer {i} weights").reshape(I, J)
        layers.append(rbm.RbmLayer(W, b, c))
    K = r.u32("class count")
    if K < 2:
        raise DimensionMismatchError("class count must be >= 2")
    out_b = r.f64(K, "output bias")
    out_W = r.f64(layers[-1].n_hidden * K, "output weights").reshape(
        layers[-1].n_hidden, K)
    width = r.u32("width")
    height = r.u32("height")
    if r.pos != len(data):
        raise TruncatedModelError("trailing bytes after model payload")
    return AdaptiveDbn(layers, out_W, out_b, (width, height))
