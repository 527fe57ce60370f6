"""Deterministic training core: parameter vectors, masked forward/backward,
SGD with momentum and milestone learning-rate decay.

Models are described by a ``ModelSpec`` and their weights live in a flat
``ParameterVector`` with an explicit layer map, so pruning masks can be
aligned index-for-index with the weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad

KSIZE = 3  # convolution kernel size used by the convnet architecture


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class LayerEntry:
    name: str
    offset: int
    length: int
    kind: str  # "weight" or "bias"


@dataclass
class ParameterVector:
    """Flat float64 view of all model parameters plus the layer map."""

    values: np.ndarray
    layer_map: tuple[LayerEntry, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = 0
        for e in self.layer_map:
            if e.offset != expected:
                raise ValueError(f"layer map not contiguous at {e.name}.{e.kind}")
            expected += e.length
        if expected != self.values.size:
            raise ValueError("layer map does not cover the parameter vector")

    def __len__(self):
        return self.values.size

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.values.copy(), self.layer_map)

    def segment(self, name: str, kind: str) -> np.ndarray:
        for e in self.layer_map:
            if e.name == name and e.kind == kind:
                return self.values[e.offset:e.offset + e.length]
        raise KeyError(f"no segment {name}.{kind}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 32
    milestones: tuple[int, ...] = ()
    gamma: float = 1.0
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        ms = tuple(self.milestones)
        if list(ms) != sorted(set(ms)) or any(m >= self.epochs for m in ms):
            raise ValueError("milestones must be strictly increasing and < epochs")


# Appendix-style reference profile for real-data training; desk-scale runs
# use much smaller budgets (see cli defaults).
REFERENCE_REAL_DATA_PROFILE = TrainConfig(
    epochs=90, learning_rate=0.0008, momentum=0.9, weight_decay=0.0008,
    batch_size=512, milestones=(50, 65, 80), gamma=0.15,
)


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; 'mlp' uses hidden widths, 'convnet' channel
    counts (3x3 conv + ReLU + 2x2 average pool per block, then a linear
    classifier)."""

    architecture: str
    input_shape: tuple[int, ...]
    num_classes: int
    hidden: tuple[int, ...] = ()     # mlp widths
    channels: tuple[int, ...] = ()   # convnet channels per block

    def __post_init__(self):
        if self.architecture not in ("mlp", "convnet"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.architecture == "convnet":
            if len(self.input_shape) != 3:
                raise ValueError("convnet input_shape must be (C, H, W)")
            h, w = self.input_shape[1:]
            for _ in self.channels:
                if h % 2 or w % 2:
                    raise ValueError("spatial dims must halve evenly at each pool")
                h, w = h // 2, w // 2

    def layer_shapes(self):
        """Canonical (name, kind, shape) sequence defining the flatten order."""
        out = []
        if self.architecture == "mlp":
            dims = [int(np.prod(self.input_shape))] + list(self.hidden) + [self.num_classes]
            for i in range(len(dims) - 1):
                out.append((f"fc{i + 1}", "weight", (dims[i + 1], dims[i])))
                out.append((f"fc{i + 1}", "bias", (dims[i + 1],)))
        else:
            c, h, w = self.input_shape
            for i, oc in enumerate(self.channels):
                out.append((f"conv{i + 1}", "weight", (oc, c, KSIZE, KSIZE)))
                out.append((f"conv{i + 1}", "bias", (oc,)))
                c, h, w = oc, h // 2, w // 2
            out.append(("fc", "weight", (self.num_classes, c * h * w)))
            out.append(("fc", "bias", (self.num_classes,)))
        return out

    def layer_map(self) -> tuple[LayerEntry, ...]:
        entries, offset = [], 0
        for name, kind, shape in self.layer_shapes():
            length = int(np.prod(shape))
            entries.append(LayerEntry(name, offset, length, kind))
            offset += length
        return tuple(entries)

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for _, _, s in self.layer_shapes())


def init_params(spec: ModelSpec, seed: int) -> ParameterVector:
    """Scaled-uniform fan-in initialization, biases zero; deterministic in seed."""
    rng = np.random.default_rng(seed)
    chunks = []
    for name, kind, shape in spec.layer_shapes():
        n = int(np.prod(shape))
        if kind == "bias":
            chunks.append(np.zeros(n))
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            chunks.append(rng.uniform(-bound, bound, size=n))
    return ParameterVector(np.concatenate(chunks), spec.layer_map())


def _as_batch(spec: ModelSpec, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[1:] != tuple(spec.input_shape):
        raise ValueError(
            f"batch shape {batch.shape[1:]} does not match input shape {spec.input_shape}")
    return batch


def _build_graph(spec: ModelSpec, effective: np.ndarray, layer_map, batch: np.ndarray):
    """Wire up the forward graph; returns (param Vars by segment, logits Var)."""
    segs = {}
    for e in layer_map:
        segs[(e.name, e.kind)] = ad.Var(effective[e.offset:e.offset + e.length])

    def seg(name, kind, shape):
        return ad.reshape(segs[(name, kind)], shape)

    if spec.architecture == "mlp":
        x = ad.Var(batch.reshape(batch.shape[0], -1))
        shapes = spec.layer_shapes()
        n_layers = len(shapes) // 2
        for i in range(n_layers):
            name = f"fc{i + 1}"
            wshape = shapes[2 * i][2]
            w = seg(name, "weight", wshape)
            b = seg(name, "bias", (wshape[0],))
            x = ad.add(ad.matmul(x, _transpose(w)), b)
            if i < n_layers - 1:
                x = ad.relu(x)
        logits = x
    else:
        x = ad.Var(batch)
        c, h, w = spec.input_shape
        for i, oc in enumerate(spec.channels):
            name = f"conv{i + 1}"
            wv = seg(name, "weight", (oc, c, KSIZE, KSIZE))
            bv = seg(name, "bias", (oc,))
            x = ad.avgpool2x2(ad.relu(ad.conv2d(x, wv, bv, KSIZE)))
            c, h, w = oc, h // 2, w // 2
        x = ad.reshape(x, (batch.shape[0], c * h * w))
        wshape = (spec.num_classes, c * h * w)
        logits = ad.add(ad.matmul(x, _transpose(seg("fc", "weight", wshape))), segs[("fc", "bias")])
    return segs, logits


def _transpose(v: ad.Var) -> ad.Var:
    out = ad.Var(v.value.T, (v,), None)

    def bwd(g):
        v.grad += g.T

    out._backward = bwd
    return out


def forward(spec: ModelSpec, params: ParameterVector, mask, batch) -> np.ndarray:
    """Logits for a batch, computed with effective weights (params * mask)."""
    batch = _as_batch(spec, batch)
    effective = params.values * mask.bits
    _, logits = _build_graph(spec, effective, params.layer_map, batch)
    out = logits.value
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite logits in forward pass")
    return out


def backward(spec: ModelSpec, params: ParameterVector, mask, batch, labels) -> ParameterVector:
    """Gradient of mean cross-entropy w.r.t. params; zero at masked positions."""
    grad, _ = _loss_and_grad(spec, params, mask, batch, labels)
    return grad


def _loss_and_grad(spec, params, mask, batch, labels):
    batch = _as_batch(spec, batch)
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= spec.num_classes:
        raise ValueError("labels out of range")
    effective = params.values * mask.bits
    segs, logits = _build_graph(spec, effective, params.layer_map, batch)
    loss = ad.cross_entropy_mean(logits, labels)
    loss.backward()
    flat = np.empty_like(params.values)
    for e in params.layer_map:
        flat[e.offset:e.offset + e.length] = segs[(e.name, e.kind)].grad
    # gradient w.r.t. params equals gradient w.r.t. effective weights times mask
    flat *= mask.bits
    return ParameterVector(flat, params.layer_map), float(loss.value)


def _batches(n, batch_size, perm):
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def train(spec, params, mask, data, cfg: TrainConfig,
          snapshot_epochs=(), _snapshots=None) -> ParameterVector:
    """SGD training of the masked network; deterministic in cfg.shuffle_seed.

    Masked positions stay exactly zero.  If ``snapshot_epochs`` is given,
    copies of the parameters after those epochs are stored into the
    ``_snapshots`` dict (epoch index -> ParameterVector).
    """
    if data.size == 0:
        raise ValueError("empty dataset")
    theta = params.copy()
    theta.values *= mask.bits
    if cfg.epochs == 0:
        return theta
    velocity = np.zeros_like(theta.values)
    decay_sel = mask.bits.astype(bool) & _weight_positions(params.layer_map)
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        if epoch in cfg.milestones:
            lr *= cfg.gamma
        perm = np.random.default_rng([cfg.shuffle_seed, epoch]).permutation(data.size)
        for bi, idx in enumerate(_batches(data.size, cfg.batch_size, perm)):
            grad, loss = _loss_and_grad(spec, theta, mask,
                                        data.examples[idx], data.labels[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, bi, loss)
            g = grad.values
            if cfg.weight_decay:
                g = g + np.where(decay_sel, cfg.weight_decay * theta.values, 0.0)
            velocity = cfg.momentum * velocity + g
            theta.values -= lr * velocity
            theta.values *= mask.bits
        if _snapshots is not None and epoch + 1 in snapshot_epochs:
            _snapshots[epoch + 1] = theta.copy()
    return theta


def train_with_snapshots(spec, params, mask, data, cfg, snapshot_epochs):
    """Like train() but also returns {epoch: params-after-epoch} snapshots.

    Epoch 0 always maps to the (masked) starting parameters.
    """
    snaps = {0: _masked_copy(params, mask)}
    out = train(spec, params, mask, data, cfg,
                snapshot_epochs=tuple(snapshot_epochs), _snapshots=snaps)
    return out, snaps


def _masked_copy(params, mask):
    out = params.copy()
    out.values *= mask.bits
    return out


def _weight_positions(layer_map):
    sel = np.zeros(sum(e.length for e in layer_map), dtype=bool)
    for e in layer_map:
        if e.kind == "weight":
            sel[e.offset:e.offset + e.length] = True
    return sel


def evaluate(spec, params, mask, data):
    """(accuracy, mean loss) on a dataset; pure, argmax ties -> lowest class."""
    if data.size == 0:
        raise ValueError("empty dataset")
    correct, loss_sum = 0, 0.0
    for start in range(0, data.size, 512):
        xb = data.examples[start:start + 512]
        yb = data.labels[start:start + 512]
        logits = forward(spec, params, mask, xb)
        correct += int((logits.argmax(axis=1) == yb).sum())
        zmax = logits.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
        loss_sum += float((lse - logits[np.arange(len(yb)), yb]).sum())
    return correct / data.size, loss_sum / data.size
