"""Compress 28x28 digits to 10 features with a CAE and with PCA, then
classify the features with a 10-qubit QNN head.

Needs the bundled MNIST sample (data/mnist5k). Kept small: a few hundred
images and a couple of epochs, so the numbers are only indicative.
"""
from pathlib import Path

import numpy as np

from qhybrid.datasets import SubsetSpec, find_idx_pair, load_idx, make_subset
from qhybrid.features import CAE, encode, fit_pca, pca_transform, train_cae
from qhybrid.hybrid import TrainSpec, train_qnn_head
from qhybrid.nn import OptimizerSpec
from qhybrid.rng import substream

root = Path(__file__).resolve().parents[1] / "data" / "mnist5k"
mnist = load_idx(*find_idx_pair(root))
train, val = make_subset(mnist, SubsetSpec("mnist", (0, 1, 2), 100, seed=0))
flat = lambda s: s.images.reshape(len(s.images), -1)  # noqa: E731

cae = CAE(10, substream(0, "init"))
train_cae(cae, mnist.images[:1000], epochs=3, log=print)
pca = fit_pca(flat(mnist)[:1000], 10)
print("pca explained variance:", np.round(pca.explained_variance[:5], 3))

spec = TrainSpec(OptimizerSpec("adagrad", 0.5), epochs=3, batch=50, seed=0)
for name, fx in (("CAE", lambda s: encode(cae, s.images)), ("PCA", lambda s: pca_transform(pca, flat(s)))):
    _, hist = train_qnn_head(fx(train), train.labels, fx(val), val.labels, spec)
    print(f"{name}+QNN: train loss {hist[-1].train_loss:.3f}, val acc {hist[-1].val_acc:.3f}")
