"""Two-layer deep belief network trained by one-step contrastive divergence.

Each layer is a binary restricted Boltzmann machine with energy
E(v, h) = -b'v - c'h - h'Wv. Training is greedy: the first layer fits the
pixels, the second fits the first layer's hidden probabilities. Checkpoints
are taken at epoch 1 ("young") and at the final epoch ("mature"); both
second-layer fits start from the same initial weights and RNG stream so a
single-epoch run yields identical checkpoints for the two tags.
"""

import copy
from dataclasses import dataclass, field
import json
from pathlib import Path
import struct
import time

import numpy as np
from scipy.special import expit

CHECKPOINT_MAGIC = b"NSLB"
CHECKPOINT_VERSION = 1
WEIGHT_INIT_SD = 0.01


@dataclass
class TrainHyper:
    learning_rate: float = 0.15
    weight_decay: float = 0.0001
    momentum: float = 0.7
    batch_size: int = 100
    epochs: int = 1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class Rbm:
    W: np.ndarray  # hidden x visible
    b: np.ndarray  # visible biases
    c: np.ndarray  # hidden biases

    @property
    def n_visible(self):
        return self.W.shape[1]

    @property
    def n_hidden(self):
        return self.W.shape[0]

    def copy(self):
        return Rbm(self.W.copy(), self.b.copy(), self.c.copy())


@dataclass
class Velocity:
    """Momentum state for one RBM's parameters."""
    W: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros_like(cls, rbm):
        return cls(np.zeros_like(rbm.W), np.zeros_like(rbm.b), np.zeros_like(rbm.c))


@dataclass
class Dbn:
    layers: list
    architecture: str = ""
    epoch: int = 0
    tag: str = ""

    @property
    def n_visible(self):
        return self.layers[0].n_visible

    def copy(self):
        return Dbn([l.copy() for l in self.layers], self.architecture, self.epoch, self.tag)


@dataclass
class DbnConfig:
    hidden_sizes: tuple          # (H1, H2)
    hyper: TrainHyper = field(default_factory=TrainHyper)
    seed: int = 0
    dtype: str = "float64"       # float32 roughly halves CPU training time


def init_rbm(n_visible, n_hidden, rng, dtype=np.float64) -> Rbm:
    """Gaussian weights (sd 0.01), zero biases."""
    w = rng.normal(0.0, WEIGHT_INIT_SD, size=(n_hidden, n_visible)).astype(dtype)
    return Rbm(w, np.zeros(n_visible, dtype=dtype), np.zeros(n_hidden, dtype=dtype))


def energy(rbm, v, h) -> float:
    """E(v, h) = -b'v - c'h - h'Wv for a single configuration."""
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    return float(-rbm.b @ v - rbm.c @ h - h @ (rbm.W @ v))


def hidden_probabilities(rbm, v):
    """P(h=1|v), elementwise sigmoid of c + Wv. Accepts a batch."""
    v = np.asarray(v)
    if v.shape[-1] != rbm.n_visible:
        raise ValueError(f"visible size {v.shape[-1]} != {rbm.n_visible}")
    if v.dtype != rbm.W.dtype:
        v = v.astype(rbm.W.dtype)
    return expit(v @ rbm.W.T + rbm.c)


def visible_probabilities(rbm, h):
    """P(v=1|h), elementwise sigmoid of b + W'h. Accepts a batch."""
    h = np.asarray(h)
    if h.shape[-1] != rbm.n_hidden:
        raise ValueError(f"hidden size {h.shape[-1]} != {rbm.n_hidden}")
    if h.dtype != rbm.W.dtype:
        h = h.astype(rbm.W.dtype)
    return expit(h @ rbm.W + rbm.b)


def _bernoulli(probs, rng):
    return (rng.random(probs.shape) < probs).astype(probs.dtype)


def cd1_update(rbm, batch, hyper, rng, velocity,
               sample_hidden=_bernoulli, sample_visible=_bernoulli):
    """One CD-1 mini-batch update, in place. Returns reconstruction error.

    Positive phase samples h from P(h|data); negative phase samples v'
    from P(v|h) and uses the h' *probabilities* computed from v' (the
    standard variance-reduction choice for the last half-step). Weight
    decay applies to W only; momentum applies to all parameters. The
    reconstruction error is the mean squared gap between the data and the
    P(v|h) probabilities. The sampler arguments exist for tests that need
    to pin the stochastic steps.
    """
    batch = np.asarray(batch)
    if batch.ndim != 2 or batch.shape[1] != rbm.n_visible:
        raise ValueError(f"batch shape {batch.shape} incompatible with "
                         f"{rbm.n_visible} visible units")
    if batch.dtype != rbm.W.dtype:
        batch = batch.astype(rbm.W.dtype)
    n = batch.shape[0]
    lr = hyper.learning_rate

    p_h = hidden_probabilities(rbm, batch)
    h = sample_hidden(p_h, rng)
    p_v = visible_probabilities(rbm, h)
    v_neg = sample_visible(p_v, rng)
    p_h_neg = hidden_probabilities(rbm, v_neg)

    velocity.W = (lr * (h.T @ batch - p_h_neg.T @ v_neg) / n
                  - lr * hyper.weight_decay * rbm.W
                  + hyper.momentum * velocity.W)
    velocity.b = (lr * (batch - v_neg).sum(axis=0) / n
                  + hyper.momentum * velocity.b)
    velocity.c = (lr * (h - p_h_neg).sum(axis=0) / n
                  + hyper.momentum * velocity.c)
    rbm.W += velocity.W
    rbm.b += velocity.b
    rbm.c += velocity.c

    err = float(np.mean((batch - p_v) ** 2))
    if not np.isfinite(err):
        raise RuntimeError("non-finite reconstruction error: training diverged "
                           f"(lr={lr}, batch_size={n})")
    return err


def train_rbm(rbm, data, hyper, rng, epoch_callback=None):
    """Train one RBM for hyper.epochs full passes over `data`.

    Rows of `data` are visible vectors in [0, 1]. Batches follow a fresh
    permutation each epoch. Returns a list of (epoch, recon_error,
    seconds) entries; `epoch_callback(epoch, rbm)` runs after each epoch.
    """
    data = np.asarray(data)
    if data.dtype != rbm.W.dtype:
        data = data.astype(rbm.W.dtype)
    n = data.shape[0]
    velocity = Velocity.zeros_like(rbm)
    history = []
    for epoch in range(1, hyper.epochs + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, hyper.batch_size):
            idx = perm[start:start + hyper.batch_size]
            err = cd1_update(rbm, data[idx], hyper, rng, velocity)
            total += err * len(idx)
            seen += len(idx)
        if not np.all(np.isfinite(rbm.W)):
            raise RuntimeError(f"non-finite weights after epoch {epoch}")
        history.append((epoch, total / seen, time.perf_counter() - t0))
        if epoch_callback is not None:
            epoch_callback(epoch, rbm)
    return history


def train_dbn(images, config: DbnConfig):
    """Greedy layer-wise training with young/mature checkpoints.

    `images` is an (n_images, n_pixels) array of binary values. Returns
    (checkpoints, logs): a dict mapping "young"/"mature" to Dbn instances
    and a dict mapping the tags to training-log rows
    (epoch, layer, recon_error, seconds).
    """
    dtype = np.dtype(config.dtype).type
    images = np.asarray(images, dtype=dtype)
    if images.ndim != 2:
        raise ValueError("images must be a 2-D array, one image per row")
    h1, h2 = config.hidden_sizes
    if h1 < 1 or h2 < 1:
        raise ValueError("hidden sizes must be positive")
    hyper = config.hyper
    arch = f"{h1}-{h2}"

    ss = np.random.SeedSequence(config.seed)
    init1_ss, init2_ss, train1_ss, train2_ss = ss.spawn(4)

    layer1 = init_rbm(images.shape[1], h1, np.random.default_rng(init1_ss), dtype=dtype)
    young1 = {}

    def snapshot(epoch, rbm):
        if epoch == 1:
            young1["rbm"] = rbm.copy()

    log1 = train_rbm(layer1, images, hyper, np.random.default_rng(train1_ss),
                     epoch_callback=snapshot)

    layer2_init = init_rbm(h1, h2, np.random.default_rng(init2_ss), dtype=dtype)

    reps_young = hidden_probabilities(young1["rbm"], images)
    layer2_young = layer2_init.copy()
    hyper_young = TrainHyper(hyper.learning_rate, hyper.weight_decay,
                             hyper.momentum, hyper.batch_size, epochs=1)
    log2_young = train_rbm(layer2_young, reps_young, hyper_young,
                           np.random.default_rng(train2_ss))

    reps_mature = hidden_probabilities(layer1, images)
    layer2_mature = layer2_init.copy()
    log2_mature = train_rbm(layer2_mature, reps_mature, hyper,
                            np.random.default_rng(train2_ss))

    young = Dbn([young1["rbm"], layer2_young], arch, epoch=1, tag="young")
    mature = Dbn([layer1, layer2_mature], arch, epoch=hyper.epochs, tag="mature")
    logs = {
        "young": [(log1[0][0], 1, log1[0][1], log1[0][2])]
                 + [(e, 2, r, s) for e, r, s in log2_young],
        "mature": [(e, 1, r, s) for e, r, s in log1]
                  + [(e, 2, r, s) for e, r, s in log2_mature],
    }
    return {"young": young, "mature": mature}, logs


def represent(dbn, images):
    """Deterministic deepest-layer representation: stacked P(h|.) passes.

    Accepts a single flattened image or a batch; no sampling anywhere, so
    identical inputs always map to identical outputs.
    """
    acts = np.asarray(images, dtype=float)
    for layer in dbn.layers:
        acts = hidden_probabilities(layer, acts)
    return acts


# --- checkpoint container -------------------------------------------------
#
# Layout (little-endian): magic "NSLB", one version byte, u32 layer count,
# then per layer u32 rows, u32 cols, row-major float64 W, then b (cols
# values), then c (rows values). A JSON sidecar at <path>.json carries the
# tag, epoch and configuration.

def write_container(path, layers, meta):
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<B", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(layers)))
        for w, b, c in layers:
            w = np.asarray(w, dtype="<f8")
            b = np.asarray(b, dtype="<f8")
            c = np.asarray(c, dtype="<f8")
            rows, cols = w.shape
            if b.shape != (cols,) or c.shape != (rows,):
                raise ValueError("bias lengths inconsistent with weight shape")
            fh.write(struct.pack("<II", rows, cols))
            fh.write(np.ascontiguousarray(w).tobytes())
            fh.write(b.tobytes())
            fh.write(c.tobytes())
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_container(path):
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<B", fh.read(1))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        (n_layers,) = struct.unpack("<I", fh.read(4))
        layers = []
        for _ in range(n_layers):
            rows, cols = struct.unpack("<II", fh.read(8))
            w = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8").reshape(rows, cols)
            b = np.frombuffer(fh.read(8 * cols), dtype="<f8").copy()
            c = np.frombuffer(fh.read(8 * rows), dtype="<f8").copy()
            layers.append((w.copy(), b, c))
    sidecar = Path(str(path) + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return layers, meta


def save_checkpoint(path, dbn, extra_meta=None):
    meta = {"tag": dbn.tag, "epoch": dbn.epoch, "architecture": dbn.architecture}
    if extra_meta:
        meta.update(extra_meta)
    write_container(path, [(l.W, l.b, l.c) for l in dbn.layers], meta)


def load_checkpoint(path):
    layers, meta = read_container(path)
    dbn = Dbn([Rbm(w, b, c) for w, b, c in layers],
              architecture=meta.get("architecture", ""),
              epoch=meta.get("epoch", 0),
              tag=meta.get("tag", ""))
    return dbn, meta
