"""Convert mlxtend's bundled 5,000-digit MNIST sample into IDX files.

The sample holds 500 training digits per class as CSV rows (784 pixels in
0..255, label last).  Usage::

    python tools/make_mnist5k_idx.py path/to/mlxtend-*.whl data/mnist5k

The first argument may also be the extracted ``mnist_5k.csv.gz``.  Output
gzip streams carry mtime 0 so reruns are byte-identical.
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_rows(src: Path) -> np.ndarray:
    if src.suffix == ".whl":
        raw = zipfile.ZipFile(src).read(MEMBER)
    else:
        raw = src.read_bytes()
    return np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",", dtype=np.int64)


def write_gz(path: Path, payload: bytes):
    with open(path, "wb") as fh, gzip.GzipFile(fileobj=fh, mode="wb", mtime=0, filename="") as gz:
        gz.write(payload)


def main(src, out_dir):
    rows = read_rows(Path(src))
    pixels, labels = rows[:, :-1].astype(np.uint8), rows[:, -1].astype(np.uint8)
    n = len(rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_gz(out / "train-images-idx3-ubyte.gz", struct.pack(">IIII", 0x803, n, 28, 28) + pixels.tobytes())
    write_gz(out / "train-labels-idx1-ubyte.gz", struct.pack(">II", 0x801, n) + labels.tobytes())
    print(f"wrote {n} digits, per-class counts {np.bincount(labels).tolist()}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
