"""Classical dimension reducers: a convolutional autoencoder and PCA.

Extracted features travel in a small binary file::

    count   u32 LE
    dim     u32 LE
    count x { dim x f64 LE, label u8 }
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigurationError, FormatError, ShapeError, TrainingDivergedError
from .nn import (
    ConvTranspose2d,
    Conv2d,
    Dense,
    Flatten,
    OptimizerSpec,
    ReLU,
    Reshape,
    Sequential,
    Sigmoid,
    mse_loss,
)
from .nn.checkpoint import Entry, atomic_write_bytes, layer_entries, layers_from_entries, load_checkpoint, save_checkpoint
from .rng import substream

IMAGE_SIZE = 28
PCA_VARIANT = 32


# CAE

class CAE:
    """28x28 -> d -> 28x28 autoencoder with a sigmoid output."""

    def __init__(self, latent_dim: int, rng=None, encoder=None, decoder=None):
        if latent_dim < 1:
            raise ConfigurationError("latent_dim must be positive")
        self.latent_dim = int(latent_dim)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.encoder = encoder or Sequential([
            Conv2d(1, 16, 3, stride=2, padding=1, rng=rng), ReLU(),
            Conv2d(16, 4, 3, stride=2, padding=1, rng=rng), ReLU(),
            Flatten(), Dense(196, latent_dim, rng=rng),
        ])
        self.decoder = decoder or Sequential([
            Dense(latent_dim, 196, rng=rng), Reshape(4, 7, 7),
            ConvTranspose2d(4, 16, 3, stride=2, padding=1, output_padding=1, rng=rng), ReLU(),
            ConvTranspose2d(16, 1, 3, stride=2, padding=1, output_padding=1, rng=rng), Sigmoid(),
        ])

    def _as_input(self, images):
        x = np.asarray(images, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[-2:] != (IMAGE_SIZE, IMAGE_SIZE):
            raise ShapeError(f"CAE expects {IMAGE_SIZE}x{IMAGE_SIZE} images, got {x.shape}")
        return x.reshape(-1, 1, IMAGE_SIZE, IMAGE_SIZE)

    def reconstruct(self, images) -> np.ndarray:
        x = self._as_input(images)
        return self.decoder.forward(self.encoder.forward(x))[:, 0]

    def parameters(self):
        return self.encoder.parameters() + self.decoder.parameters()

    def gradients(self):
        return self.encoder.gradients() + self.decoder.gradients()

    def loss_and_grad(self, images):
        x = self._as_input(images)
        recon = self.decoder.forward(self.encoder.forward(x))
        loss, g = mse_loss(recon, x)
        self.encoder.backward(self.decoder.backward(g))
        return loss

    def save(self, path, meta=None):
        info = {"kind": "cae", "latent_dim": self.latent_dim, "encoder_layers": len(self.encoder)}
        info.update(meta or {})
        save_checkpoint(path, layer_entries(self.encoder) + layer_entries(self.decoder), info)

    @classmethod
    def load(cls, path):
        entries, meta = load_checkpoint(path)
        if meta.get("kind") != "cae":
            raise FormatError(f"{path} is not a CAE checkpoint")
        cut = meta["encoder_layers"]
        return cls(meta["latent_dim"], encoder=layers_from_entries(entries[:cut]),
                   decoder=layers_from_entries(entries[cut:])), meta


def encode(cae: CAE, images, chunk: int = 500) -> np.ndarray:
    """Latent codes: one image gives a d-vector, a stack gives an (N, d) matrix."""
    x = cae._as_input(images)
    out = np.concatenate([cae.encoder.forward(x[i:i + chunk]) for i in range(0, len(x), chunk)])
    return out[0] if np.ndim(images) == 2 else out


def train_cae(cae: CAE, images, epochs=30, batch=50, opt=OptimizerSpec("adam", 1e-3, 1e-5), seed=0, log=None):
    """Minimise reconstruction MSE; returns the per-epoch mean training loss."""
    images = np.asarray(images, dtype=np.float64)
    if len(images) == 0:
        raise ConfigurationError("cannot train a CAE on an empty dataset")
    if epochs < 1 or batch < 1:
        raise ConfigurationError("epochs and batch must be positive")
    optimizer = opt.build()
    rng = substream(seed, "shuffle")
    params = cae.parameters()
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(images))
        total = 0.0
        for lo in range(0, len(images), batch):
            idx = order[lo:lo + batch]
            total += cae.loss_and_grad(images[idx]) * len(idx)
            optimizer.step(params, cae.gradients())
        history.append(total / len(images))
        if not np.isfinite(history[-1]):
            raise TrainingDivergedError(f"CAE loss became {history[-1]} in epoch {epoch + 1}")
        if log:
            log(f"cae epoch {epoch + 1}/{epochs} loss {history[-1]:.6f}")
    return history


# PCA

@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, D), orthonormal rows
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def save(self, path, meta=None):
        k, dim = self.components.shape
        values = np.concatenate([self.mean, self.components.ravel(), self.explained_variance])
        save_checkpoint(path, [Entry(PCA_VARIANT, (k, dim), values)], {"kind": "pca", **(meta or {})})

    @classmethod
    def load(cls, path):
        entries, meta = load_checkpoint(path)
        if meta.get("kind") != "pca" or len(entries) != 1 or entries[0].variant != PCA_VARIANT:
            raise FormatError(f"{path} is not a PCA model")
        (k, dim), v = entries[0].ints, entries[0].values
        if v.size != dim + k * dim + k:
            raise FormatError(f"{path}: PCA payload has {v.size} values")
        return cls(v[:dim].copy(), v[dim:dim + k * dim].reshape(k, dim).copy(), v[dim + k * dim:].copy()), meta


def _round_robin(m):
    """Tournament schedule: m-1 rounds of m/2 disjoint pairs covering every pair once."""
    players = list(range(m))
    rounds_p, rounds_q = [], []
    for _ in range(m - 1):
        rounds_p.append(players[: m // 2])
        rounds_q.append(players[m // 2:][::-1])
        players = [players[0], players[-1]] + players[1:-1]
    return np.array(rounds_p, dtype=np.int64), np.array(rounds_q, dtype=np.int64)


def jacobi_eigh(a, tol=1e-15, max_sweeps=60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Planes are visited in round-robin tournament order (each round is a set
    of disjoint pairs).  Sweeps stop once the off-diagonal Frobenius norm
    falls below ``tol`` times the matrix norm.  Returns (eigenvalues,
    eigenvectors as columns), unsorted.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape != (n, n):
        raise ShapeError("jacobi_eigh needs a square matrix")
    if n == 1:
        return a[0].copy(), np.eye(1)
    m = n + (n % 2)
    if m != n:  # pad with an isolated zero row so the schedule is even
        a = np.pad(a, ((0, 1), (0, 1)))
    v = np.eye(m)
    scale = max(np.linalg.norm(a), np.finfo(float).tiny)
    rounds_p, rounds_q = _round_robin(m)
    for _ in range(max_sweeps):
        if np.linalg.norm(a - np.diag(np.diag(a))) <= tol * scale:
            break
        _kernels.jacobi_sweep(a, v, rounds_p, rounds_q)
    return np.diag(a)[:n].copy(), v[:n, :n]


def fit_pca(data, k: int) -> PcaModel:
    """Top-k principal directions of the rows of ``data`` (N x D).

    Constant columns cannot carry variance, so the eigenproblem is solved on
    the varying columns only and zero-variance axes fill in if ``k`` asks
    for more.  Each component is signed so its largest-magnitude entry is
    positive.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        x = x.reshape(len(x), -1)
    n, dim = x.shape
    if not 1 <= k < min(n, dim):
        raise ConfigurationError(f"k={k} must satisfy 1 <= k < min(N, D) = {min(n, dim)}")
    mean = x.mean(axis=0)
    centered = x - mean
    varying = np.flatnonzero(np.ptp(x, axis=0) > 0)
    cov = centered[:, varying].T @ centered[:, varying] / (n - 1)
    evals, evecs = jacobi_eigh(cov)
    order = np.argsort(-evals, kind="stable")
    comps = np.zeros((dim, dim))
    comps[varying[:, None], np.arange(len(varying))] = evecs[:, order]
    variances = np.concatenate([np.clip(evals[order], 0, None), np.zeros(dim - len(varying))])
    fill = np.setdiff1d(np.arange(dim), varying)
    comps[fill, len(varying) + np.arange(len(fill))] = 1.0
    comps = comps[:, :k].T
    lead = np.argmax(np.abs(comps), axis=1)
    comps *= np.sign(comps[np.arange(k), lead])[:, None]
    return PcaModel(mean, comps, variances[:k])


def pca_transform(model: PcaModel, images) -> np.ndarray:
    """``components @ (x - mean)``; accepts one image or a stack."""
    x = np.asarray(images, dtype=np.float64)
    dim = model.mean.size
    if x.size == dim:
        return model.components @ (x.reshape(-1) - model.mean)
    return (x.reshape(len(x), -1) - model.mean) @ model.components.T


# feature files

def dump_features(features, labels) -> bytes:
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 2 or len(features) != len(labels):
        raise ShapeError(f"features {features.shape} do not match {len(labels)} labels")
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ConfigurationError("labels must fit in one byte")
    n, d = features.shape
    rows = np.zeros(n, dtype=[("x", "<f8", (d,)), ("y", "u1")])
    rows["x"], rows["y"] = features, labels
    return struct.pack("<II", n, d) + rows.tobytes()


def write_features(path, features, labels):
    atomic_write_bytes(path, dump_features(features, labels))


def parse_features(buf: bytes):
    if len(buf) < 8:
        raise FormatError("feature file truncated in header", len(buf))
    n, d = struct.unpack_from("<II", buf, 0)
    need = 8 + n * (8 * d + 1)
    if len(buf) != need:
        raise FormatError(f"feature file holds {len(buf)} bytes, header implies {need}", min(len(buf), need))
    rows = np.frombuffer(buf, dtype=[("x", "<f8", (d,)), ("y", "u1")], count=n, offset=8)
    return rows["x"].astype(np.float64).reshape(n, d), rows["y"].astype(np.int64)


def read_features(path):
    with open(path, "rb") as fh:
        return parse_features(fh.read())
