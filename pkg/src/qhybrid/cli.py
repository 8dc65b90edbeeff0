"""``qhybrid`` command line: data preparation, training, feature extraction, accounting.

Every command accepts ``--config FILE`` (a JSON object keyed by option name,
dashes or underscores) and explicit flags override values from the file.
Unknown config keys are rejected.  Exit codes: 0 success, 1 internal
error, 2 bad input or configuration.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .circuits import TWO_PI
from .datasets import (
    SubsetSpec,
    downsample_maxpool,
    find_idx_pair,
    load_idx,
    make_subset,
    save_split,
    synth_dataset,
)
from .errors import QHybridError, TrainingDivergedError
from .features import CAE, PcaModel, encode, fit_pca, pca_transform, read_features, train_cae, write_features
from .hybrid import (
    TrainSpec,
    compare_runs,
    evaluate,
    load_model,
    read_metrics,
    save_model,
    timing_csv,
    train_qnn_head,
    train_quanvnet,
    write_manifest,
    write_metrics,
)
from .nn import OptimizerSpec
from .nn.checkpoint import atomic_write_bytes, load_checkpoint
from .quanvolution import execution_count

EXIT_OK, EXIT_INTERNAL, EXIT_BAD_INPUT = 0, 1, 2


class BadInput(Exception):
    pass


def _bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _classes(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(c) for c in text)
    try:
        return tuple(int(c) for c in str(text).replace(" ", "").split(",") if c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"classes must be comma-separated integers, got {text!r}") from None


def _image_size(text):
    try:
        h, w = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"image size must look like 28x28, got {text!r}") from None
    return h, w


def _layers(text):
    return "auto" if str(text) == "auto" else int(text)


# option tables: name -> (default, type, help)
COMMON = {
    "seed": (0, int, "root seed for every random sub-stream"),
    "threads": (None, int, "worker threads (default: CPU count; 1 gives bit-exact reruns)"),
}

COMMANDS = {
    "prepare": ("build a train/validation class subset from IDX files", {
        "data_dir": (None, str, "directory holding IDX files (fallback: $QUANV_DATA_DIR)"),
        "dataset": ("mnist", str, "mnist, fashion or synth"),
        "classes": ((1, 7, 9), _classes, "comma-separated original class ids"),
        "per_class": (400, int, "samples drawn per class before the 50/50 split"),
        "downsample": (2, int, "max-pool factor (1 keeps 28x28)"),
        "out": (None, str, "output directory"),
    }),
    "train-quanv": ("train the quanvolution + MLP network", {
        "subset": (None, str, "directory written by prepare"),
        "trainable": (True, _bool, "train the filter parameters (true|false)"),
        "epochs": (10, int, "training epochs"),
        "lr": (0.5, float, "learning rate"),
        "optimizer": ("adagrad", str, "sgd, adagrad or adam"),
        "batch": (50, int, "mini-batch size"),
        "hidden": (32, int, "hidden width of the MLP"),
        "angle_range": (TWO_PI, float, "pixels in [0, 1] map to rotation angles in [0, angle_range]"),
        "out": (None, str, "output directory"),
    }),
    "train-cae": ("train the convolutional autoencoder on 28x28 images", {
        "data_dir": (None, str, "directory holding IDX files (fallback: $QUANV_DATA_DIR)"),
        "dataset": ("mnist", str, "mnist or fashion"),
        "latent_dim": (10, int, "bottleneck width d"),
        "epochs": (30, int, "training epochs"),
        "batch": (50, int, "mini-batch size"),
        "lr": (0.001, float, "Adam learning rate"),
        "weight_decay": (1e-5, float, "Adam weight decay"),
        "limit": (0, int, "train on the first N images only (0 = all)"),
        "out": (None, str, "output checkpoint path"),
    }),
    "fit-pca": ("fit PCA on 28x28 images", {
        "data_dir": (None, str, "directory holding IDX files (fallback: $QUANV_DATA_DIR)"),
        "dataset": ("mnist", str, "mnist or fashion"),
        "components": (10, int, "number of principal components k"),
        "limit": (0, int, "fit on the first N images only (0 = all)"),
        "out": (None, str, "output model path"),
    }),
    "extract": ("write feature files for a prepared subset using a CAE or PCA model", {
        "model": (None, str, "checkpoint from train-cae or fit-pca"),
        "subset": (None, str, "directory written by prepare with --downsample 1"),
        "out": (None, str, "output directory (train.feat, val.feat)"),
    }),
    "train-qnn": ("train the QNN head on extracted features", {
        "features": (None, str, "directory written by extract"),
        "layers": ("auto", _layers, "parametric layers, or auto (3 for d=10, 6 for d=5)"),
        "epochs": (20, int, "training epochs"),
        "lr": (0.5, float, "learning rate"),
        "optimizer": ("sgd", str, "sgd, adagrad or adam"),
        "batch": (50, int, "mini-batch size"),
        "trainable": (True, _bool, "train the circuit parameters (false trains the dense layer only)"),
        "out": (None, str, "output directory"),
    }),
    "evaluate": ("mean loss and accuracy of a trained model on one split", {
        "checkpoint": (None, str, "model.ckpt from train-quanv or train-qnn"),
        "split": ("validation", str, "train or validation"),
        "subset": (None, str, "prepared subset directory (quanvolution models)"),
        "features": (None, str, "feature directory (QNN models)"),
    }),
    "count": ("quantum circuit executions for one training batch", {
        "image": ((28, 28), _image_size, "image size HxW"),
        "kernel": (4, int, "kernel size"),
        "stride": (4, int, "stride"),
        "params": (10, int, "trainable parameters under the two-term shift rule"),
        "crz_params": (0, int, "trainable CRZ parameters (four-term rule)"),
        "trainable": (True, _bool, "count gradient executions"),
        "batch": (50, int, "images per batch"),
    }),
    "compare": ("percentage report of run A against run B", {
        "json": (False, _bool, "print the report as JSON"),
    }),
}

REQUIRED = {
    "prepare": ["out"], "train-quanv": ["subset", "out"], "train-cae": ["out"], "fit-pca": ["out"],
    "extract": ["model", "subset", "out"], "train-qnn": ["features", "out"], "evaluate": ["checkpoint"],
}


def build_parser():
    parser = argparse.ArgumentParser(prog="qhybrid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qhybrid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, options) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file of option values; flags take precedence")
        for key, (default, typ, h) in {**options, **COMMON}.items():
            flag = "--" + key.replace("_", "-")
            if typ is _bool and key != "json":
                p.add_argument(flag, type=_bool, nargs="?", const=True, help=f"{h} [default: {default}]")
                p.add_argument("--no-" + key.replace("_", "-"), dest=key, action="store_const", const=False)
            elif key == "json":
                p.add_argument(flag, action="store_const", const=True, help=h)
            else:
                p.add_argument(flag, type=typ, help=f"{h} [default: {default}]")
        if name == "compare":
            p.add_argument("run_a", help="run directory or metrics CSV (comma-separate several to pair seeds)")
            p.add_argument("run_b", help="run directory or metrics CSV for the baseline")
    return parser


def resolve_config(command, args) -> dict:
    """Defaults, then the JSON config file, then explicit flags."""
    options = {**COMMANDS[command][1], **COMMON}
    resolved = {k: v[0] for k, v in options.items()}
    given = vars(args)
    if given.get("config"):
        try:
            with open(given["config"]) as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise BadInput(f"cannot read config {given['config']}: {exc.strerror}") from None
        except ValueError as exc:
            raise BadInput(f"config {given['config']} is not valid JSON: {exc}") from None
        if not isinstance(file_values, dict):
            raise BadInput("config file must hold a JSON object")
        for key, value in file_values.items():
            norm = key.replace("-", "_")
            if norm not in options:
                raise BadInput(f"unknown config key {key!r} for {command}")
            typ = options[norm][1]
            try:
                resolved[norm] = typ(value) if value is not None else None
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise BadInput(f"config key {key!r}: {exc}") from None
    for key, value in given.items():
        if key in options:
            resolved[key] = value
    if "data_dir" in resolved and not resolved["data_dir"]:
        resolved["data_dir"] = os.environ.get("QUANV_DATA_DIR")
    if "threads" in resolved and not resolved["threads"]:
        resolved["threads"] = os.cpu_count() or 1
    for key in REQUIRED.get(command, []):
        if resolved.get(key) in (None, ""):
            raise BadInput(f"{command} needs --{key.replace('_', '-')}")
    return resolved


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def _manifest(command, cfg, **extra):
    out = {"command": command, "version": __version__, "config": {k: _jsonable(v) for k, v in cfg.items()}}
    out.update(extra)
    return out


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


# data helpers

def _load_source(cfg):
    if not cfg.get("data_dir"):
        raise BadInput("no data directory: pass --data-dir or set QUANV_DATA_DIR")
    try:
        paths = find_idx_pair(cfg["data_dir"], cfg["dataset"])
    except FileNotFoundError as exc:
        raise BadInput(str(exc)) from None
    split = load_idx(*paths)
    if cfg.get("limit"):
        split = type(split)(split.images[:cfg["limit"]], split.labels[:cfg["limit"]])
    return split, paths


def _load_subset(directory):
    d = Path(directory)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
        train = load_idx(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte", "train")
        val = load_idx(d / "val-images-idx3-ubyte", d / "val-labels-idx1-ubyte", "validation")
    except FileNotFoundError as exc:
        raise BadInput(f"{directory} is not a prepared subset: missing {exc.filename}") from None
    except ValueError as exc:
        raise BadInput(f"{directory}: {exc}") from None
    return train, val, manifest


def _load_features(directory):
    d = Path(directory)
    try:
        return read_features(d / "train.feat"), read_features(d / "val.feat")
    except FileNotFoundError as exc:
        raise BadInput(f"{directory} holds no feature files: missing {exc.filename}") from None


def _optimizer(cfg):
    return OptimizerSpec(cfg["optimizer"], cfg["lr"])


def _finish_training(cfg, command, model, history, fingerprint, extra=None):
    out = Path(cfg["out"])
    write_metrics(out / "metrics.csv", history)
    atomic_write_bytes(out / "timing.csv", timing_csv(history).encode())
    final = history[-1]
    save_model(model, out / "model.ckpt", {"seed": cfg["seed"], "dataset_fingerprint": fingerprint})
    write_manifest(out / "manifest.json", _manifest(
        command, cfg, spec=model.spec(), seed=cfg["seed"], dataset_fingerprint=fingerprint,
        final={"train_loss": final.train_loss, "val_loss": final.val_loss,
               "train_acc": final.train_acc, "val_acc": final.val_acc},
        circuit_executions_per_epoch=final.circuit_executions, **(extra or {})))
    print(f"train_loss {final.train_loss:.6f}")
    print(f"val_loss {final.val_loss:.6f}")
    print(f"train_acc {final.train_acc:.6f}")
    print(f"val_acc {final.val_acc:.6f}")


# commands

def cmd_prepare(cfg):
    spec = SubsetSpec(cfg["dataset"], cfg["classes"], cfg["per_class"], cfg["seed"])
    if cfg["dataset"] == "synth":
        source = synth_dataset(max(spec.classes) + 1, (max(spec.classes) + 1) * spec.per_class, cfg["seed"],
                               size=14 * max(cfg["downsample"], 1))
        files = []
    else:
        source, files = _load_source(cfg)
    if cfg["downsample"] > 1:
        source = downsample_maxpool(source, cfg["downsample"])
    train, val = make_subset(source, spec)
    out = Path(cfg["out"])
    save_split(train, out, "train")
    save_split(val, out, "val")
    write_manifest(out / "manifest.json", _manifest(
        "prepare", cfg, name=spec.name, classes=list(train.classes), image_shape=list(train.images.shape[1:]),
        train_size=len(train), val_size=len(val), source_files=[os.path.basename(f) for f in files],
        train_fingerprint=train.fingerprint(), val_fingerprint=val.fingerprint(),
        train_source_index=train.source_index.tolist(), val_source_index=val.source_index.tolist()))
    print(f"{spec.name}: {len(train)} train / {len(val)} validation, {train.images.shape[1]}x{train.images.shape[2]}")


def cmd_train_quanv(cfg):
    train, val, _ = _load_subset(cfg["subset"])
    spec = TrainSpec(_optimizer(cfg), cfg["epochs"], cfg["batch"], cfg["seed"])
    model, history = train_quanvnet(train, val, spec, cfg["trainable"], cfg["hidden"], cfg["threads"], _log,
                                    angle_range=cfg["angle_range"])
    _finish_training(cfg, "train-quanv", model, history, train.fingerprint())


def cmd_train_cae(cfg):
    source, _ = _load_source(cfg)
    if source.images.shape[1:] != (28, 28):
        raise BadInput(f"CAE expects 28x28 images, found {source.images.shape[1:]}")
    from .rng import substream

    cae = CAE(cfg["latent_dim"], substream(cfg["seed"], "init"))
    history = train_cae(cae, source.images, cfg["epochs"], cfg["batch"],
                        OptimizerSpec("adam", cfg["lr"], cfg["weight_decay"]), cfg["seed"], _log)
    cae.save(cfg["out"], {"loss_history": history, "dataset_fingerprint": source.fingerprint()})
    write_manifest(cfg["out"] + ".json", _manifest("train-cae", cfg, loss_history=history,
                                                   dataset_fingerprint=source.fingerprint()))
    print(f"cae d={cfg['latent_dim']} final loss {history[-1]:.6f}")


def cmd_fit_pca(cfg):
    source, _ = _load_source(cfg)
    model = fit_pca(source.images.reshape(len(source), -1), cfg["components"])
    model.save(cfg["out"], {"dataset_fingerprint": source.fingerprint()})
    write_manifest(cfg["out"] + ".json", _manifest("fit-pca", cfg, explained_variance=model.explained_variance.tolist(),
                                                   dataset_fingerprint=source.fingerprint()))
    print(f"pca k={model.k} explained variance {np.round(model.explained_variance, 4).tolist()}")


def _load_reducer(path):
    try:
        _, meta = load_checkpoint(path)
    except FileNotFoundError:
        raise BadInput(f"no such model file: {path}") from None
    if meta.get("kind") == "cae":
        cae, _ = CAE.load(path)
        return "cae", lambda images: encode(cae, images)
    if meta.get("kind") == "pca":
        pca, _ = PcaModel.load(path)
        return "pca", lambda images: pca_transform(pca, images.reshape(len(images), -1))
    raise BadInput(f"{path} is neither a CAE nor a PCA model")


def cmd_extract(cfg):
    kind, transform = _load_reducer(cfg["model"])
    train, val, subset_manifest = _load_subset(cfg["subset"])
    out = Path(cfg["out"])
    shapes = {}
    for name, split in (("train", train), ("val", val)):
        feats = transform(split.images)
        write_features(out / f"{name}.feat", feats, split.labels)
        shapes[name] = list(feats.shape)
    write_manifest(out / "manifest.json", _manifest("extract", cfg, reducer=kind, shapes=shapes,
                                                    subset=subset_manifest.get("name")))
    print(f"{kind} features: train {shapes['train']}, val {shapes['val']}")


def cmd_train_qnn(cfg):
    (tx, ty), (vx, vy) = _load_features(cfg["features"])
    spec = TrainSpec(_optimizer(cfg), cfg["epochs"], cfg["batch"], cfg["seed"])
    layers = None if cfg["layers"] == "auto" else cfg["layers"]
    model, history = train_qnn_head(tx, ty, vx, vy, spec, layers, cfg["trainable"], cfg["threads"], _log)
    fingerprint = _feature_fingerprint(tx, ty)
    _finish_training(cfg, "train-qnn", model, history, fingerprint)


def _feature_fingerprint(x, y):
    import hashlib

    h = hashlib.sha256(np.ascontiguousarray(x, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(y, dtype="<i8").tobytes())
    return h.hexdigest()[:16]


def cmd_evaluate(cfg):
    try:
        model, meta = load_model(cfg["checkpoint"])
    except FileNotFoundError:
        raise BadInput(f"no such checkpoint: {cfg['checkpoint']}") from None
    if cfg["split"] not in ("train", "validation"):
        raise BadInput("--split must be train or validation")
    if meta["spec"]["model"] == "quanvnet":
        if not cfg["subset"]:
            raise BadInput("quanvolution models need --subset")
        train, val, _ = _load_subset(cfg["subset"])
        split = train if cfg["split"] == "train" else val
        x, y = split.images, split.labels
    else:
        if not cfg["features"]:
            raise BadInput("QNN models need --features")
        (tx, ty), (vx, vy) = _load_features(cfg["features"])
        x, y = (tx, ty) if cfg["split"] == "train" else (vx, vy)
    loss, acc = evaluate(model, x, y)
    print(f"loss {loss:.6f}")
    print(f"accuracy {acc:.6f}")


def cmd_count(cfg):
    h, w = cfg["image"]
    n = execution_count(h, w, cfg["kernel"], cfg["stride"], cfg["params"], cfg["crz_params"],
                        cfg["trainable"], cfg["batch"])
    print(n)


def _metrics_paths(spec):
    paths = []
    for part in spec.split(","):
        p = Path(part)
        paths.append(p / "metrics.csv" if p.is_dir() else p)
    return paths


def cmd_compare(cfg, run_a, run_b):
    try:
        a = [read_metrics(p) for p in _metrics_paths(run_a)]
        b = [read_metrics(p) for p in _metrics_paths(run_b)]
    except FileNotFoundError as exc:
        raise BadInput(f"no metrics file: {exc.filename}") from None
    report = compare_runs(a, b)
    if cfg["json"]:
        print(json.dumps(report.__dict__, sort_keys=True))
    else:
        print(report.summary("A", "B"))


HANDLERS = {
    "prepare": cmd_prepare, "train-quanv": cmd_train_quanv, "train-cae": cmd_train_cae, "fit-pca": cmd_fit_pca,
    "extract": cmd_extract, "train-qnn": cmd_train_qnn, "evaluate": cmd_evaluate, "count": cmd_count,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_BAD_INPUT
    try:
        cfg = resolve_config(args.command, args)
        start = time.perf_counter()
        if args.command == "compare":
            cmd_compare(cfg, args.run_a, args.run_b)
        else:
            HANDLERS[args.command](cfg)
        if args.command not in ("count", "compare"):
            _log(f"done in {time.perf_counter() - start:.1f}s")
        return EXIT_OK
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (BadInput, QHybridError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Exception as exc:  # noqa: BLE001 - report, then signal an internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
