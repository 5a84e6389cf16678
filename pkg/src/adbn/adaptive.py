"""Structure control: neuron generation/annihilation and layer-growth checks.

The controller watches per-epoch parameter updates. Two signals drive it:

* per-neuron walking statistics: exponentially smoothed fluctuation (mean
  absolute deviation about the smoothed trend) of each hidden unit's bias
  update and of its column's total absolute weight update. A unit whose
  fluctuation product stays above the generation threshold late in training
  is chasing conflicting patterns and gets split in two. Early-training
  transients carry the same signature, so checks only start after a warmup.
* the layer walking distance (WD): the absolute change between successive
  sliding-window variances of the flattened update vector, logged per epoch
  for the growth trace. The layer-generation decision itself sums the
  per-neuron fluctuation products (the layer's total walking statistic) and
  requires the reconstruction error to still be high.
"""

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import rbm

# smoothing for the per-neuron fluctuation trackers
_DECAY = 0.9


@dataclass
class AdaptiveConfig:
    """Thresholds and caps for structural self-adaptation."""

    theta_g: float = 0.001   # neuron generation: var_c * var_w above this
    theta_a: float = 0.100   # neuron annihilation: mean activation below this
    theta_l1: float = 0.05   # layer generation: window WD total above this
    theta_l2: float = 0.05   # layer generation: reconstruction error above this
    max_hidden: int = 2000
    max_layers: int = 8
    window: int = 5          # epochs per WD window

    def __post_init__(self):
        if min(self.theta_g, self.theta_a, self.theta_l1, self.theta_l2) <= 0:
            raise ValueError("thresholds must be positive")
        if self.max_hidden < 1 or self.max_layers < 1 or self.window < 1:
            raise ValueError("caps and window must be positive")


class _EwFlux:
    """Exponentially weighted fluctuation of per-neuron scalar sequences.

    Tracks a smoothed mean and the smoothed absolute deviation from it, so a
    steadily drifting sequence scores low while an oscillating one scores
    high. Sequences that are zero from the start stay exactly zero.
    """

    def __init__(self, n):
        self.mean = np.zeros(n)
        self.flux = np.zeros(n)

    def update(self, x):
        alpha = 1.0 - _DECAY
        deviation = np.abs(x - self.mean)
        self.mean = self.mean + alpha * (x - self.mean)
        self.flux = _DECAY * self.flux + alpha * deviation

    def add(self):
        self.mean = np.append(self.mean, 0.0)
        self.flux = np.append(self.flux, 0.0)

    def remove(self, indices):
        self.mean = np.delete(self.mean, indices)
        self.flux = np.delete(self.flux, indices)


class StructureMonitor:
    """Per-layer training statistics feeding the structural decisions.

    observe_epoch is called once per epoch with that epoch's mean parameter
    update; it maintains the per-neuron variance trackers, appends one walking
    distance value, and records the latest reconstruction error.
    """

    def __init__(self, n_hidden, window=5):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._c_stats = _EwFlux(n_hidden)
        self._w_stats = _EwFlux(n_hidden)
        # per-epoch moment sums (count, sum, sum of squares) of update entries
        self._moments = deque(maxlen=window + 1)
        self.wd_hist = []
        self.e_norm = 0.0
        self.epochs = 0

    @property
    def flux_c(self):
        return self._c_stats.flux

    @property
    def flux_w(self):
        return self._w_stats.flux

    def _window_variance(self, skip_latest):
        """Variance of all update entries across one window of epochs."""
        rows = list(self._moments)
        rows = rows[:-1] if skip_latest else rows[-self.window:]
        rows = rows[-self.window:]
        n = sum(r[0] for r in rows)
        s1 = sum(r[1] for r in rows)
        s2 = sum(r[2] for r in rows)
        if n == 0:
            return 0.0
        m = s1 / n
        return max(s2 / n - m * m, 0.0)

    def observe_epoch(self, upd, recon_error):
        """Fold one epoch's mean CdUpdate into the running statistics."""
        self._c_stats.update(upd.dc)
        self._w_stats.update(np.sum(np.abs(upd.dW), axis=0))
        flat = upd.flat()
        self._moments.append((flat.size, float(np.sum(flat)), float(np.sum(flat * flat))))
        self.epochs += 1
        if self.epochs > self.window:
            wd = abs(self._window_variance(False) - self._window_variance(True))
        else:
            wd = 0.0
        self.wd_hist.append(wd)
        self.e_norm = float(recon_error)

    def total_flux(self):
        """The layer's total walking statistic: summed fluctuation products."""
        return float(np.sum(self._c_stats.flux * self._w_stats.flux))

    def add_neuron(self):
        self._c_stats.add()
        self._w_stats.add()

    def remove_neurons(self, indices):
        self._c_stats.remove(indices)
        self._w_stats.remove(indices)


def neuron_generation_check(mon, cfg, n_hidden):
    """Hidden units whose bias/weight fluctuation product exceeds theta_g.

    Requires at least one full window of observations. The result is capped
    (strongest signals first) so n_hidden plus the new children never exceeds
    cfg.max_hidden.
    """
    if mon.epochs < mon.window:
        return []
    product = mon.flux_c * mon.flux_w
    flagged = np.nonzero(product > cfg.theta_g)[0]
    room = cfg.max_hidden - n_hidden
    if room <= 0:
        return []
    if flagged.size > room:
        order = np.argsort(-product[flagged], kind="stable")
        flagged = flagged[order][:room]
        flagged = np.sort(flagged)
    return [int(j) for j in flagged]


def generate_neuron(layer, parent, rng, eps=0.01, max_hidden=None):
    """Append a child hidden unit inheriting the parent's column and bias.

    Each inherited entry is perturbed by uniform noise in [-eps, +eps] so the
    twins can diverge. Raises ValueError when the hidden cap is reached.
    """
    J = layer.n_hidden
    if not 0 <= parent < J:
        raise ValueError(f"parent index {parent} out of range for J={J}")
    if max_hidden is not None and J + 1 > max_hidden:
        raise ValueError("hidden unit cap reached")
    col = layer.W[:, parent] + (rng.uniform(layer.n_visible) * 2.0 - 1.0) * eps
    bias = layer.c[parent] + (rng.uniform() * 2.0 - 1.0) * eps
    layer.W = np.column_stack([layer.W, col])
    layer.c = np.append(layer.c, bias)
    return layer


def neuron_annihilation_check(layer, batch, theta_a):
    """Hidden units whose mean activation over the batch falls below theta_a."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    mean_act = np.mean(rbm.hidden_probs(layer, batch), axis=0)
    return [int(j) for j in np.nonzero(mean_act < theta_a)[0]]


def annihilate_neurons(layer, indices):
    """Remove the given hidden units; survivors keep their order and values."""
    indices = sorted(set(int(j) for j in indices))
    if not indices:
        return layer
    J = layer.n_hidden
    if any(j < 0 or j >= J for j in indices):
        raise ValueError("annihilation index out of range")
    if len(indices) >= J:
        raise ValueError("cannot annihilate every hidden unit")
    layer.W = np.delete(layer.W, indices, axis=1)
    layer.c = np.delete(layer.c, indices)
    return layer


def layer_generation_check(mon, cfg, n_layers):
    """True when training left both walking statistic and error above threshold.

    A layer that reconstructs its input well (low e_norm) or whose updates
    have settled (low total fluctuation) does not spawn a successor; the
    max_layers cap always wins.
    """
    if n_layers >= cfg.max_layers:
        return False
    return mon.total_flux() > cfg.theta_l1 and mon.e_norm > cfg.theta_l2


@dataclass
class GrowthTrace:
    """Structural event log collected during pre-training."""

    rows: list = field(default_factory=list)

    def add(self, epoch, layer, n_hidden, wd, e_norm, event=""):
        self.rows.append((epoch, layer, n_hidden, wd, e_norm, event))

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "layer", "J", "WD", "E_norm", "event"])
            for row in self.rows:
                writer.writerow(row)
