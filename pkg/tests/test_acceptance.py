"""The ten acceptance criteria, each reporting one PASS/FAIL line.

Criteria 7-9 train real models on the vendored 5,000-digit MNIST sample
and take tens of minutes on one core; everything else is quick.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from qhybrid.circuits import EncoderKind, QnnSpec, build_qnn, init_params
from qhybrid.cli import main as cli_main
from qhybrid.datasets import SubsetSpec, downsample_maxpool, find_idx_pair, load_idx, make_subset, synth_dataset
from qhybrid.features import CAE, encode, fit_pca, pca_transform, train_cae
from qhybrid.hybrid import QnnHead, QuanvNet, TrainSpec, compare_runs, train_qnn_head, train_quanvnet
from qhybrid.nn import (
    ConvTranspose2d,
    Conv2d,
    Dense,
    MaxPool2d,
    OptimizerSpec,
    ReLU,
    Sigmoid,
    mse_loss,
    softmax_cross_entropy,
)
from qhybrid.qgrad import ExpectationFn, finite_diff_grad, shift_rule_grad
from qhybrid.qsim import run_circuit
from qhybrid.quanvolution import QuantumFilter, execution_count
from qhybrid.rng import substream

import oracle
from conftest import random_circuit
from gradcheck import check_layer, numeric_grad, rel_err

DATA = Path(__file__).resolve().parents[1] / "data" / "mnist5k"
RESULTS = []


def report(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert passed, line


@pytest.fixture(scope="module")
def mnist():
    return load_idx(*find_idx_pair(DATA))


@pytest.fixture(scope="module")
def caes(mnist):
    """CAEs for d=5 and d=10 trained on every available training image."""
    out = {}
    for d in (5, 10):
        cae = CAE(d, substream(0, "init"))
        train_cae(cae, mnist.images, epochs=30, batch=50, opt=OptimizerSpec("adam", 1e-3, 1e-5), seed=0)
        out[d] = cae
    return out


def test_c1_simulator_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(200):
        n = 1 + i % 3
        circuit = random_circuit(rng, n, int(rng.integers(1, 30)))
        worst = max(worst, np.max(np.abs(run_circuit(circuit).amplitudes - oracle.final_state(circuit))))
    drift = abs(run_circuit(random_circuit(rng, 6, 1000)).norm_squared() - 1.0)
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-10 and drift <= 1e-10 and elapsed < 10,
           f"max amplitude error {worst:.2e}, norm drift {drift:.2e}, {elapsed:.1f}s")


def test_c2_gradient_exactness():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(4, 6))
        encoder = EncoderKind.ANGLE_ONE_TO_ONE if rng.random() < 0.5 else EncoderKind.ANGLE_FOUR_TO_ONE
        spec = QnnSpec(n, encoder, int(rng.integers(1, 4)))
        f = ExpectationFn(build_qnn(spec), rng.uniform(0, 2 * np.pi, spec.num_features))
        theta = init_params(spec.num_params, rng)
        worst = max(worst, np.max(np.abs(shift_rule_grad(f, theta) - finite_diff_grad(f, theta, 1e-4))))
    elapsed = time.perf_counter() - start
    report(2, worst <= 1e-5 and elapsed < 60, f"max |shift - FD| {worst:.2e} over 100 circuits, {elapsed:.1f}s")


def test_c3_circuit_count_arithmetic():
    got = (execution_count(28, 28, 4, 4, 0, trainable=False),
           execution_count(28, 28, 4, 4, 10),
           execution_count(28, 28, 4, 4, 10, batch=50))
    report(3, got == (49, 1029, 51450), f"counts {got} (expected (49, 1029, 51450))")


def test_c4_parameter_count_law():
    got = (QnnSpec(10, num_layers=3).num_params, QnnSpec(5, num_layers=6).num_params,
           QuantumFilter().qnn.num_params, build_qnn(QnnSpec(10)).num_params)
    report(4, got == (60, 60, 24, 60), f"(10q L3, 5q L6, filter, built 10q) = {got}")


def test_c5_classical_gradchecks():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    cases = {
        "Dense": (Dense(6, 4, rng=rng), rng.normal(size=(3, 6))),
        "Conv2d": (Conv2d(2, 3, 3, stride=2, padding=1, rng=rng), rng.normal(size=(2, 2, 6, 6))),
        "ConvTranspose2d": (ConvTranspose2d(3, 2, 3, stride=2, padding=1, output_padding=1, rng=rng),
                            rng.normal(size=(2, 3, 3, 3))),
        "MaxPool2d": (MaxPool2d(2), (rng.permutation(72) * 0.01).reshape(2, 1, 6, 6)),
        "Sigmoid": (Sigmoid(), rng.normal(size=(3, 5))),
        "ReLU": (ReLU(), (rng.permutation(15) - 7.5).reshape(3, 5) * 0.1),
    }
    errs = {}
    for name, (layer, x) in cases.items():
        for p in layer.params.values():
            p += rng.normal(scale=0.2, size=p.shape)
        errs[name] = max(check_layer(layer, x, rng).values())
    logits, labels = rng.normal(size=(4, 3)), rng.integers(3, size=4)
    _, g = softmax_cross_entropy(logits, labels)
    errs["cross-entropy"] = rel_err(g, numeric_grad(lambda: softmax_cross_entropy(logits, labels)[0], logits))
    pred, target = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    _, g = mse_loss(pred, target)
    errs["mse"] = rel_err(g, numeric_grad(lambda: mse_loss(pred, target)[0], pred))
    elapsed = time.perf_counter() - start
    worst = max(errs, key=errs.get)
    report(5, max(errs.values()) <= 1e-4 and elapsed < 30,
           f"worst rel-err {errs[worst]:.2e} ({worst}), {elapsed:.1f}s")


def test_c6_joint_gradient():
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    image = synth_dataset(3, 3, 11)
    model = QuanvNet.build(seed=6)
    x, y = image.images[:1], image.labels[:1]
    loss0, grads = model.loss_and_grads(x, y)
    grads = [g.copy() for g in grads]
    params = model.parameters()
    picks = [(len(params) - 1, int(j)) for j in rng.choice(24, 3, replace=False)]
    picks += [(int(i), int(rng.integers(params[i].size))) for i in rng.choice(len(params) - 1, 3)]
    analytic, numeric = [], []
    for which, j in picks:
        flat = params[which].reshape(-1)
        old = flat[j]
        flat[j] = old + 1e-5
        lp = model.loss_and_grads(x, y)[0]
        flat[j] = old - 1e-5
        lm = model.loss_and_grads(x, y)[0]
        flat[j] = old
        analytic.append(grads[which].reshape(-1)[j])
        numeric.append((lp - lm) / 2e-5)
    err = rel_err(np.array(analytic), np.array(numeric))
    elapsed = time.perf_counter() - start
    report(6, err <= 1e-3 and elapsed < 60, f"rel-err {err:.2e} on 3 quantum + 3 classical params, {elapsed:.1f}s")


def test_c7_trainable_vs_frozen(mnist):
    start = time.perf_counter()
    pooled = downsample_maxpool(mnist)
    train, val = make_subset(pooled, SubsetSpec("mnist", (2, 4, 6), 400, seed=0))
    runs_t, runs_f = [], []
    for seed in range(5):
        spec = TrainSpec(OptimizerSpec("adagrad", 0.5), epochs=10, batch=50, seed=seed)
        runs_t.append(train_quanvnet(train, val, spec, trainable=True)[1])
        runs_f.append(train_quanvnet(train, val, spec, trainable=False)[1])
    rep = compare_runs(runs_t, runs_f)
    elapsed = time.perf_counter() - start
    finals = ", ".join(f"{a[-1].train_loss:.3f}/{b[-1].train_loss:.3f}" for a, b in zip(runs_t, runs_f))
    report(7, rep.train_loss_wins >= 3 and rep.train_loss_pct > 0,
           f"trainable wins {rep.train_loss_wins}/5, mean relative loss improvement {rep.train_loss_pct:+.2f}% "
           f"(trainable/frozen: {finals}), {elapsed / 60:.1f} min")


def test_c8_latent_dimension(mnist, caes):
    start = time.perf_counter()
    spec = TrainSpec(OptimizerSpec("sgd", 0.5), epochs=20, batch=50, seed=0)
    wins, details, d10, d5 = 0, [], [], []
    for classes in ((1, 7, 9), (2, 4, 6), (3, 5, 8)):
        train, val = make_subset(mnist, SubsetSpec("mnist", classes, 400, seed=0))
        finals = {}
        for d in (10, 5):
            cae = caes[d]
            _, hist = train_qnn_head(encode(cae, train.images), train.labels, encode(cae, val.images), val.labels, spec)
            finals[d] = hist
        d10.append(finals[10])
        d5.append(finals[5])
        wins += finals[10][-1].train_loss < finals[5][-1].train_loss
        details.append(f"{''.join(map(str, classes))}: {finals[10][-1].train_loss:.3f} vs {finals[5][-1].train_loss:.3f}")
    rep = compare_runs(d10, d5)
    elapsed = time.perf_counter() - start
    report(8, wins >= 2, f"d=10 lower loss on {wins}/3 subsets ({'; '.join(details)}), "
                         f"mean {rep.train_loss_pct:+.2f}%, {elapsed / 60:.1f} min")


def test_c9_cae_vs_pca(mnist, caes):
    start = time.perf_counter()
    pca = fit_pca(mnist.images.reshape(len(mnist), -1), 10)
    classes = tuple(range(10))
    train, val = make_subset(mnist, SubsetSpec("mnist", classes, 400, seed=0))
    spec = TrainSpec(OptimizerSpec("adagrad", 0.5), epochs=20, batch=50, seed=0)
    cae = caes[10]
    _, h_cae = train_qnn_head(encode(cae, train.images), train.labels, encode(cae, val.images), val.labels, spec)
    flat = lambda s: s.images.reshape(len(s), -1)  # noqa: E731
    _, h_pca = train_qnn_head(pca_transform(pca, flat(train)), train.labels, pca_transform(pca, flat(val)),
                              val.labels, spec)
    rep = compare_runs(h_cae, h_pca)
    elapsed = time.perf_counter() - start
    report(9, rep.val_acc_pts >= 10,
           f"CAE val acc {h_cae[-1].val_acc:.3f} vs PCA {h_pca[-1].val_acc:.3f} "
           f"({rep.val_acc_pts:+.1f} points); {rep.summary('CAE+QNN', 'PCA+QNN')}; {elapsed / 60:.1f} min")


def test_c10_reproducibility(tmp_path, capsys):
    sub = tmp_path / "subset"
    assert cli_main(["prepare", "--dataset", "synth", "--classes", "0,1,2", "--per-class", "30",
                     "--seed", "9", "--out", str(sub)]) == 0
    feats = tmp_path / "feats"
    rng = np.random.default_rng(0)
    from qhybrid.features import write_features

    feats.mkdir()
    for name in ("train", "val"):
        write_features(feats / f"{name}.feat", rng.normal(size=(30, 5)), rng.integers(3, size=30))
    outputs = []
    for attempt in range(2):
        q = tmp_path / f"quanv{attempt}"
        h = tmp_path / f"qnn{attempt}"
        assert cli_main(["train-quanv", "--subset", str(sub), "--epochs", "2", "--seed", "5", "--threads", "1",
                         "--batch", "10", "--out", str(q)]) == 0
        assert cli_main(["train-qnn", "--features", str(feats), "--epochs", "2", "--seed", "5", "--threads", "1",
                         "--batch", "10", "--out", str(h)]) == 0
        outputs.append(((q / "metrics.csv").read_bytes(), (h / "metrics.csv").read_bytes()))
    capsys.readouterr()
    report(10, outputs[0] == outputs[1], "train-quanv and train-qnn metrics CSVs byte-identical across reruns")
