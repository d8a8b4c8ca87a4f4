"""Write the 5,000-image MNIST sample bundled with mlxtend as IDX files.

Usage: python3 scripts/mnist_subset_to_idx.py <mlxtend mnist_5k.csv.gz> <out_dir>

The output directory receives `train-images` and `train-labels` in the
standard big-endian IDX layout (magic 0x00000803 / 0x00000801).
"""
import gzip
import struct
import sys

import numpy as np


def main(src, out_dir):
    with gzip.open(src, "rt") as fh:
        table = np.loadtxt(fh, delimiter=",")
    images = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)
    n = images.shape[0]
    with open(f"{out_dir}/train-images", "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        fh.write(images.tobytes())
    with open(f"{out_dir}/train-labels", "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, n))
        fh.write(labels.tobytes())


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
