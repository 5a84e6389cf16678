"""Pixel-relevance heatmaps by backward projection through the stack.

The relevance of an output class is seeded on the last hidden layer as
activation times output weight, then redistributed layer by layer down to the
pixels: each lower unit receives its activation times the weighted sum of the
relevances above it. The signed pixel map is min-max scaled to bytes and can
be rendered with a fixed piecewise-linear jet colormap.
"""

from dataclasses import dataclass

import numpy as np

from . import dbn


@dataclass
class Heatmap:
    """Byte-valued relevance grid matching the source image size."""

    values: np.ndarray  # (height, width) uint8

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]


def relevance_seed(model, image, class_id, discrete=True):
    """Relevance of each last-layer hidden unit for one class.

    In discrete mode the hidden activations are binarized at 0.5 first, which
    quantizes the map into the states the hidden code can actually take.
    """
    if not 0 <= class_id < model.n_classes:
        raise ValueError(f"class {class_id} out of range (K={model.n_classes})")
    h_last = dbn.forward_hidden(model, image)[-1]
    if discrete:
        h_last = (h_last >= 0.5).astype(np.float64)
    return h_last * model.out_W[:, class_id]


def backproject(model, image, r_seed):
    """Redistribute last-layer relevance down to a (height, width) pixel map."""
    r_seed = np.asarray(r_seed, dtype=np.float64)
    if r_seed.shape != (model.layers[-1].n_hidden,):
        raise ValueError("relevance seed length does not match last hidden layer")
    x = dbn._flatten_input(model, image)
    activations = [x] + dbn.forward_hidden(model, image)
    r = r_seed
    for l in range(len(model.layers) - 1, -1, -1):
        r = activations[l] * (model.layers[l].W @ r)
    w, h = model.input_shape
    return r.reshape(h, w)


def normalize_bytes(relevance):
    """Min-max scale a relevance map to bytes; a flat map becomes all zeros."""
    relevance = np.asarray(relevance, dtype=np.float64)
    if not np.all(np.isfinite(relevance)):
        raise ValueError("relevance map must be finite")
    lo = relevance.min()
    hi = relevance.max()
    if hi == lo:
        return Heatmap(np.zeros(relevance.shape, dtype=np.uint8))
    scaled = (relevance - lo) / (hi - lo) * 255.0
    return Heatmap(np.floor(scaled + 0.5).astype(np.uint8))


def compute_heatmap(model, image, class_id, discrete=True):
    """Seed, backproject and normalize in one call."""
    seed = relevance_seed(model, image, class_id, discrete)
    return normalize_bytes(backproject(model, image, seed))


def render_jet(hm):
    """Render heatmap bytes with the jet colormap as a (h, w, 3) uint8 image.

    Channels follow the piecewise-linear ramps r: 4t-1.5/-4t+4.5,
    g: 4t-0.5/-4t+3.5, b: 4t+0.5/-4t+2.5 (t = value/255, clamped to [0, 1]),
    so byte 0 maps to dark blue (0, 0, 128) and byte 255 to dark red
    (128, 0, 0).
    """
    t = hm.values.astype(np.float64) / 255.0
    def ramp(up, down):
        return np.clip(np.minimum(4.0 * t + up, -4.0 * t + down), 0.0, 1.0)
    r = ramp(-1.5, 4.5)
    g = ramp(-0.5, 3.5)
    b = ramp(0.5, 2.5)
    rgb = np.stack([r, g, b], axis=-1) * 255.0
    return np.floor(rgb + 0.5).astype(np.uint8)
