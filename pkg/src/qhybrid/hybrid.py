"""End-to-end hybrid models, the shared training loop and run comparison.

Two model families share one loop:

* ``QuanvNet``: a quantum filter slid over the image, the per-cell Z
  readouts flattened into a Dense+ReLU+Dense head.
* ``QnnHead``: reduced features (CAE or PCA) min-max scaled to [0, 2pi],
  a 1:1 angle-encoded QNN, and a Dense layer from the qubit readouts to the
  class logits.

Both train on softmax cross-entropy; quantum and classical parameters are
updated together by one optimizer.  Epoch metrics are full passes over the
train and validation splits after the epoch's updates.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import time
from dataclasses import dataclass

import numpy as np

from .circuits import TWO_PI, EncoderKind, QnnSpec, build_qnn, init_params, scale_features
from .errors import ConfigurationError, FormatError, ShapeError, TrainingDivergedError
from .nn import Dense, OptimizerSpec, ReLU, Sequential, softmax_cross_entropy
from .nn.checkpoint import QUANTUM_VARIANT, Entry, atomic_write_bytes, layer_entries, layers_from_entries, load_checkpoint, save_checkpoint
from .qgrad import count_params_by_rule, forward_and_jacobian, shift_eval_count
from .qsim import batch_z_expectations, simulate
from .quanvolution import (
    QuantumFilter,
    contract_upstream,
    filter_execution_count,
    quanv_forward_batch,
    quanv_forward_jacobian,
)
from .rng import substream

SCALER_VARIANT = 17
METRIC_FIELDS = ("epoch", "train_loss", "val_loss", "train_acc", "val_acc", "circuit_executions")


def auto_layers(dim: int) -> int:
    """Parametric layers for a d-qubit head: 3 for d=10, 6 for d=5, ~60 params otherwise."""
    return {10: 3, 5: 6}.get(dim, max(1, round(30 / dim)))


# models

class QuanvNet:
    def __init__(self, filt: QuantumFilter, image_size=14, hidden=32, classes=3, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.filter = filt
        self.image_size = int(image_size)
        self.classes = int(classes)
        gh, gw = filt.grid_shape(image_size, image_size)
        self.num_features = gh * gw * filt.num_qubits
        self.head = Sequential([Dense(self.num_features, hidden, rng=rng), ReLU(), Dense(hidden, classes, rng=rng)])

    @classmethod
    def build(cls, seed, trainable=True, image_size=14, hidden=32, classes=3, num_layers=3, kernel_size=4, stride=4,
              angle_range=TWO_PI):
        rng = substream(seed, "init")
        filt = QuantumFilter.random(rng, kernel_size=kernel_size, stride=stride, num_layers=num_layers,
                                    trainable=trainable, angle_range=angle_range)
        return cls(filt, image_size, hidden, classes, rng)

    def _check(self, images):
        images = np.asarray(images, dtype=np.float64)
        if images.ndim != 3 or images.shape[1:] != (self.image_size, self.image_size):
            raise ShapeError(f"QuanvNet expects (N, {self.image_size}, {self.image_size}) images, got {images.shape}")
        return images

    def parameters(self):
        params = self.head.parameters()
        return params + [self.filter.theta] if self.filter.trainable else params

    def logits(self, images, threads=1):
        maps = quanv_forward_batch(self.filter, self._check(images))
        return self.head.forward(maps.reshape(len(maps), -1))

    def loss_and_grads(self, images, labels, threads=1):
        images = self._check(images)
        if self.filter.trainable:
            maps, jac = quanv_forward_jacobian(self.filter, images, threads=threads)
        else:
            maps = quanv_forward_batch(self.filter, images)
        logits = self.head.forward(maps.reshape(len(maps), -1))
        loss, g = softmax_cross_entropy(logits, labels)
        dmaps = self.head.backward(g)
        grads = self.head.gradients()
        if self.filter.trainable:
            grads = grads + [contract_upstream(jac, dmaps.reshape(maps.shape))]
        return loss, grads

    def executions_per_epoch(self, num_samples):
        return filter_execution_count(self.filter, self.image_size, self.image_size, batch=num_samples)

    def spec(self):
        f = self.filter
        return {"model": "quanvnet", "image_size": self.image_size, "classes": self.classes,
                "hidden": self.head.layers[0].out_features, "kernel_size": f.kernel_size, "stride": f.stride,
                "num_layers": f.num_layers, "trainable": f.trainable, "angle_range": f.angle_range}

    def entries(self):
        f = self.filter
        q = Entry(QUANTUM_VARIANT, (f.num_qubits, 4, f.num_layers, f.kernel_size, f.stride, int(f.trainable)), f.theta.copy())
        return [q] + layer_entries(self.head)


class QnnHead:
    def __init__(self, qnn: QnnSpec, classes, theta=None, lo=None, hi=None, rng=None, trainable=True):
        rng = rng if rng is not None else np.random.default_rng(0)
        if qnn.encoder is not EncoderKind.ANGLE_ONE_TO_ONE:
            raise ConfigurationError("QnnHead uses 1:1 angle encoding")
        self.qnn = qnn
        self.circuit = build_qnn(qnn)
        self.classes = int(classes)
        self.trainable = bool(trainable)
        self.theta = init_params(qnn.num_params, rng) if theta is None else np.array(theta, dtype=np.float64)
        self.dense = Dense(qnn.num_qubits, classes, rng=rng)
        self.lo = None if lo is None else np.asarray(lo, dtype=np.float64)
        self.hi = None if hi is None else np.asarray(hi, dtype=np.float64)

    @classmethod
    def build(cls, seed, dim, classes, num_layers=None, trainable=True):
        rng = substream(seed, "init")
        qnn = QnnSpec(dim, EncoderKind.ANGLE_ONE_TO_ONE, num_layers or auto_layers(dim))
        return cls(qnn, classes, rng=rng, trainable=trainable)

    def fit_scaler(self, features):
        """Min-max bounds from the training split; constant features get a unit span."""
        features = self._check(features, scaled=False)
        self.lo, self.hi = features.min(axis=0), features.max(axis=0)
        flat = self.hi <= self.lo
        self.hi = np.where(flat, self.lo + 1.0, self.hi)

    def _check(self, features, scaled=True):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.qnn.num_qubits:
            raise ConfigurationError(
                f"{self.qnn.num_qubits}-qubit head got features of shape {features.shape}")
        if scaled:
            if self.lo is None:
                raise ConfigurationError("fit_scaler must run before training or evaluation")
            return scale_features(features, self.lo, self.hi)
        return features

    def parameters(self):
        params = [self.dense.params["weight"], self.dense.params["bias"]]
        return params + [self.theta] if self.trainable else params

    def logits(self, features, threads=1):
        data = self._check(features)
        z = batch_z_expectations(simulate(self.circuit, data, self.theta), self.qnn.num_qubits)
        return self.dense.forward(z)

    def loss_and_grads(self, features, labels, threads=1):
        data = self._check(features)
        if self.trainable:
            z, jac = forward_and_jacobian(self.circuit, data, self.theta, threads=threads)
        else:
            z = batch_z_expectations(simulate(self.circuit, data, self.theta), self.qnn.num_qubits)
        loss, g = softmax_cross_entropy(self.dense.forward(z), labels)
        dz = self.dense.backward(g)
        grads = [self.dense.grads["weight"], self.dense.grads["bias"]]
        if self.trainable:
            grads.append(np.einsum("bq,bqp->p", dz, jac))
        return loss, grads

    def executions_per_epoch(self, num_samples):
        single, crz = count_params_by_rule(self.circuit)
        extra = shift_eval_count(single, crz) if self.trainable else 0
        return num_samples * (1 + extra)

    def spec(self):
        return {"model": "qnn", "num_qubits": self.qnn.num_qubits, "num_layers": self.qnn.num_layers,
                "classes": self.classes, "trainable": self.trainable}

    def entries(self):
        q = Entry(QUANTUM_VARIANT, (self.qnn.num_qubits, 1, self.qnn.num_layers, 0, 0, int(self.trainable)),
                  self.theta.copy())
        scaler = Entry(SCALER_VARIANT, (self.qnn.num_qubits,), np.concatenate([self.lo, self.hi]))
        return [q, scaler] + layer_entries(Sequential([self.dense]))


def save_model(model, path, meta=None):
    info = {"kind": "hybrid", "spec": model.spec()}
    info.update(meta or {})
    save_checkpoint(path, model.entries(), info)


def load_model(path):
    entries, meta = load_checkpoint(path)
    if meta.get("kind") != "hybrid" or not entries or entries[0].variant != QUANTUM_VARIANT:
        raise FormatError(f"{path} is not a hybrid model checkpoint")
    spec = meta["spec"]
    n, encoder, layers, k, s, trainable = entries[0].ints
    theta = entries[0].values.copy()
    if spec["model"] == "quanvnet":
        filt = QuantumFilter(k, s, layers, bool(trainable), theta, spec.get("angle_range", TWO_PI))
        model = QuanvNet(filt, spec["image_size"], spec["hidden"], spec["classes"])
        model.head = layers_from_entries(entries[1:])
    elif spec["model"] == "qnn":
        bounds = entries[1].values
        model = QnnHead(QnnSpec(n, EncoderKind.ANGLE_ONE_TO_ONE, layers), spec["classes"], theta,
                        bounds[:n], bounds[n:], trainable=bool(trainable))
        model.dense = layers_from_entries(entries[2:]).layers[0]
    else:
        raise FormatError(f"{path}: unknown model kind {spec['model']!r}")
    return model, meta


# training

@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    wall_seconds: float
    circuit_executions: int


@dataclass(frozen=True)
class TrainSpec:
    optimizer: OptimizerSpec = OptimizerSpec("adagrad", 0.5)
    epochs: int = 10
    batch: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1:
            raise ConfigurationError("epochs and batch must be positive")


def evaluate(model, inputs, labels, chunk=500):
    """Mean cross-entropy and argmax accuracy over a whole split, no updates."""
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(inputs) != len(labels) or len(labels) == 0:
        raise ShapeError(f"{len(inputs)} inputs for {len(labels)} labels")
    logits = np.concatenate([model.logits(inputs[i:i + chunk]) for i in range(0, len(inputs), chunk)])
    if logits.shape[1] <= labels.max():
        raise ConfigurationError(f"model has {logits.shape[1]} outputs but labels reach {labels.max()}")
    loss, _ = softmax_cross_entropy(logits, labels)
    return loss, float(np.mean(np.argmax(logits, axis=1) == labels))


def train(model, train_x, train_y, val_x, val_y, spec: TrainSpec, threads=1, log=None):
    """Mini-batch training; returns the per-epoch :class:`EpochMetrics` history."""
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    if len(train_x) != len(train_y) or len(train_y) == 0:
        raise ShapeError(f"{len(train_x)} training inputs for {len(train_y)} labels")
    optimizer = spec.optimizer.build()
    rng = substream(spec.seed, "shuffle")
    params = model.parameters()
    history = []
    for epoch in range(1, spec.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(train_y))
        for lo in range(0, len(order), spec.batch):
            idx = order[lo:lo + spec.batch]
            loss, grads = model.loss_and_grads(train_x[idx], train_y[idx], threads=threads)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDivergedError(f"non-finite loss or gradient in epoch {epoch}, batch at {lo}")
            optimizer.step(params, grads)
        tl, ta = evaluate(model, train_x, train_y)
        vl, va = evaluate(model, val_x, val_y)
        if not (np.isfinite(tl) and np.isfinite(vl)):
            raise TrainingDivergedError(f"epoch {epoch} metrics not finite: train {tl}, val {vl}")
        m = EpochMetrics(epoch, tl, vl, ta, va, time.perf_counter() - start, model.executions_per_epoch(len(train_y)))
        history.append(m)
        if log:
            log(f"epoch {epoch}/{spec.epochs} train_loss {tl:.4f} val_loss {vl:.4f} train_acc {ta:.4f} val_acc {va:.4f}")
    return history


def train_quanvnet(train_split, val_split, spec: TrainSpec, trainable=True, hidden=32, threads=1, log=None,
                   angle_range=TWO_PI):
    classes = int(max(train_split.labels.max(), val_split.labels.max())) + 1
    model = QuanvNet.build(spec.seed, trainable, train_split.images.shape[1], hidden, classes,
                           angle_range=angle_range)
    history = train(model, train_split.images, train_split.labels, val_split.images, val_split.labels,
                    spec, threads, log)
    return model, history


def train_qnn_head(train_x, train_y, val_x, val_y, spec: TrainSpec, num_layers=None, trainable=True,
                   threads=1, log=None):
    classes = int(max(np.max(train_y), np.max(val_y))) + 1
    model = QnnHead.build(spec.seed, np.shape(train_x)[1], classes, num_layers, trainable)
    model.fit_scaler(train_x)
    history = train(model, train_x, train_y, val_x, val_y, spec, threads, log)
    return model, history


# metrics files

def metrics_csv(history) -> str:
    """Deterministic CSV: wall-clock time is left out so reruns compare byte for byte."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(METRIC_FIELDS)
    for m in history:
        w.writerow([m.epoch, repr(m.train_loss), repr(m.val_loss), repr(m.train_acc), repr(m.val_acc),
                    m.circuit_executions])
    return out.getvalue()


def timing_csv(history) -> str:
    return "epoch,wall_seconds\n" + "".join(f"{m.epoch},{m.wall_seconds:.6f}\n" for m in history)


def write_metrics(path, history):
    atomic_write_bytes(path, metrics_csv(history).encode())


def read_metrics(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(METRIC_FIELDS) - set(rows[0]):
        raise FormatError(f"{path}: not a metrics CSV")
    return [EpochMetrics(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]), float(r["train_acc"]),
                         float(r["val_acc"]), float(r.get("wall_seconds") or 0.0), int(r["circuit_executions"]))
            for r in rows]


def write_manifest(path, manifest: dict):
    atomic_write_bytes(path, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())


# comparison

@dataclass
class Comparison:
    train_loss_pct: float
    val_loss_pct: float
    train_acc_pts: float
    val_acc_pts: float
    train_loss_wins: int
    runs: int

    def summary(self, label_a="A", label_b="B") -> str:
        def loss(v, what):
            return f"{_num(abs(v))}% {'lower' if v >= 0 else 'higher'} {what}"

        def acc(v, what):
            return f"{_num(abs(v))}% {'higher' if v >= 0 else 'lower'} {what}"

        return (f"{label_a} vs {label_b}: {loss(self.train_loss_pct, 'training loss')}, "
                f"{loss(self.val_loss_pct, 'validation loss')}, {acc(self.train_acc_pts, 'training accuracy')}, "
                f"and {acc(self.val_acc_pts, 'validation accuracy')} "
                f"(lower training loss in {self.train_loss_wins} of {self.runs} runs)")


def _num(v):
    return str(round(float(v), 2))


def compare_runs(runs_a, runs_b) -> Comparison:
    """Final-epoch differences of A relative to B, averaged over paired runs.

    Loss differences are relative, ``(b - a) / b`` in percent, so positive
    means A's loss is lower.  Accuracy differences are in percentage points,
    positive when A is more accurate.  Either argument may be one history or
    a list of histories (one per seed or subset), paired in order.
    """
    if runs_a and isinstance(runs_a[0], EpochMetrics):
        runs_a, runs_b = [runs_a], [runs_b]
    if len(runs_a) != len(runs_b) or not runs_a:
        raise ConfigurationError(f"cannot pair {len(runs_a)} runs with {len(runs_b)}")
    rows = []
    for a, b in zip(runs_a, runs_b):
        if len(a) != len(b) or not a:
            raise ConfigurationError(f"histories differ in length ({len(a)} vs {len(b)} epochs)")
        fa, fb = a[-1], b[-1]
        rows.append((
            _rel(fa.train_loss, fb.train_loss), _rel(fa.val_loss, fb.val_loss),
            100.0 * (fa.train_acc - fb.train_acc), 100.0 * (fa.val_acc - fb.val_acc),
            fa.train_loss <= fb.train_loss,
        ))
    arr = np.array([r[:4] for r in rows])
    means = arr.mean(axis=0)
    return Comparison(*[float(v) for v in means], sum(r[4] for r in rows), len(rows))


def _rel(a, b):
    if b == 0:
        return 0.0 if a == 0 else -np.inf
    return 100.0 * (b - a) / b


def history_from_dicts(rows):
    return [EpochMetrics(**r) for r in rows]


def history_to_dicts(history):
    return [dataclasses.asdict(m) for m in history]
