"""A single restricted Boltzmann machine: energy, conditionals, CD-k updates.

Layers hold float64 parameters W (visible x hidden), b (visible bias) and
c (hidden bias). Visible units accept values in [0, 1]; during contrastive
divergence only the hidden side is sampled to binary states and the final
statistics use hidden probabilities rather than samples.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import bernoulli_sample, sigmoid


class RbmLayer:
    """One RBM with I visible and J hidden units."""

    def __init__(self, W, b, c):
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        c = np.asarray(c, dtype=np.float64)
        if W.ndim != 2 or b.ndim != 1 or c.ndim != 1:
            raise ValueError("W must be 2-d, b and c 1-d")
        if W.shape != (b.size, c.size):
            raise ValueError(f"W shape {W.shape} does not match b={b.size}, c={c.size}")
        if b.size < 1 or c.size < 1:
            raise ValueError("need at least one visible and one hidden unit")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("parameters must be finite")
        self.W = W
        self.b = b
        self.c = c

    @property
    def n_visible(self):
        return self.b.size

    @property
    def n_hidden(self):
        return self.c.size

    @classmethod
    def initialize(cls, n_visible, n_hidden, rng, weight_std=0.01):
        """Fresh layer: Gaussian weights (mean 0, small std), zero biases."""
        W = rng.normal((n_visible, n_hidden), std=weight_std)
        return cls(W, np.zeros(n_visible), np.zeros(n_hidden))

    def copy(self):
        return RbmLayer(self.W.copy(), self.b.copy(), self.c.copy())


@dataclass
class CdUpdate:
    """Gradient estimate from one CD step plus the batch reconstruction error."""

    dW: np.ndarray
    db: np.ndarray
    dc: np.ndarray
    recon_error: float

    def flat(self):
        """All update entries as one vector (dW row-major, then db, dc)."""
        return np.concatenate([self.dW.ravel(), self.db, self.dc])


def _check_visible(layer, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != layer.n_visible:
        raise ValueError(f"visible size {v.shape[-1]} != layer I={layer.n_visible}")
    return v


def _check_hidden(layer, h):
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != layer.n_hidden:
        raise ValueError(f"hidden size {h.shape[-1]} != layer J={layer.n_hidden}")
    return h


def energy(layer, v, h):
    """E(v, h) = -b.v - c.h - v W h for one configuration."""
    v = _check_visible(layer, v)
    h = _check_hidden(layer, h)
    return float(-(layer.b @ v) - (layer.c @ h) - v @ layer.W @ h)


def hidden_probs(layer, v):
    """p(h_j = 1 | v), vectorized over an optional batch dimension."""
    v = _check_visible(layer, v)
    return sigmoid(v @ layer.W + layer.c)


def visible_probs(layer, h):
    """p(v_i = 1 | h), vectorized over an optional batch dimension."""
    h = _check_hidden(layer, h)
    return sigmoid(h @ layer.W.T + layer.b)


def reconstruct(layer, v):
    """Mean-field reconstruction: visible_probs of hidden_probs."""
    return visible_probs(layer, hidden_probs(layer, v))


def cd_step(layer, batch, rng, k=1):
    """One CD-k gradient estimate over a batch of visible vectors.

    Args:
        layer: RbmLayer to evaluate.
        batch: array (B, I) with entries in [0, 1].
        rng: Rng used for the hidden-side binary samples.
        k: number of Gibbs half-step pairs (default CD-1).

    Returns:
        CdUpdate with dW = <v h>_data - <v h>_model averaged over the batch,
        matching db/dc, and the mean per-pixel squared reconstruction error.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    batch = np.atleast_2d(_check_visible(layer, batch))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")

    h_data = hidden_probs(layer, batch)
    h_sample = bernoulli_sample(h_data, rng)
    v_model = batch
    h_model = h_data
    for _ in range(k):
        v_model = visible_probs(layer, h_sample)
        h_model = hidden_probs(layer, v_model)
        h_sample = bernoulli_sample(h_model, rng)

    n = batch.shape[0]
    dW = (batch.T @ h_data - v_model.T @ h_model) / n
    db = np.mean(batch - v_model, axis=0)
    dc = np.mean(h_data - h_model, axis=0)
    recon_error = float(np.mean((batch - v_model) ** 2))
    return CdUpdate(dW, db, dc, recon_error)


def apply_update(layer, upd, learning_rate):
    """In-place SGD step: parameters move by learning_rate * update."""
    if learning_rate < 0:
        raise ValueError("learning_rate must be >= 0")
    if upd.dW.shape != layer.W.shape or upd.db.shape != layer.b.shape or upd.dc.shape != layer.c.shape:
        raise ValueError("update dimensions do not match layer")
    if not (np.all(np.isfinite(upd.dW)) and np.all(np.isfinite(upd.db)) and np.all(np.isfinite(upd.dc))):
        raise ValueError("non-finite update")
    layer.W += learning_rate * upd.dW
    layer.b += learning_rate * upd.db
    layer.c += learning_rate * upd.dc
    return layer
