#!/usr/bin/env python3
"""Build the bundled 1000/1000 MNIST subset in IDX format.

Source: the 5000-digit MNIST sample shipped inside the `mlxtend` wheel
(mlxtend/data/data/mnist_5k.csv.gz, 500 digits per class, rows of 784
pixels followed by the label).

    python3 scripts/make_mnist_subset.py path/to/mnist_5k.csv.gz data/mnist-subset
"""
import struct
import sys
from pathlib import Path

import numpy as np


def write_idx_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    src, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    table = np.genfromtxt(src, delimiter=",")
    x = table[:, :-1].reshape(-1, 28, 28)
    y = table[:, -1].astype(int)
    rng = np.random.default_rng(20190906)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = rng.permutation(np.flatnonzero(y == c))
        train_idx.extend(idx[:100])
        test_idx.extend(idx[100:200])
    train_idx = rng.permutation(train_idx)
    test_idx = rng.permutation(test_idx)
    write_idx_images(out / "train-images-idx3-ubyte", x[train_idx])
    write_idx_labels(out / "train-labels-idx1-ubyte", y[train_idx])
    write_idx_images(out / "t10k-images-idx3-ubyte", x[test_idx])
    write_idx_labels(out / "t10k-labels-idx1-ubyte", y[test_idx])


if __name__ == "__main__":
    main()
