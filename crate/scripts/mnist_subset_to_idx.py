"""Convert the 5,000-digit MNIST sample bundled with mlxtend into gzipped IDX files.

Usage: python scripts/mnist_subset_to_idx.py <mnist_5k.csv.gz> <out_dir>

The CSV holds one digit per row: 784 pixel values (0-255) followed by the label.
"""
import gzip
import struct
import sys

import numpy as np


def main(src, out_dir):
    table = np.loadtxt(src, delimiter=",")
    images = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)
    n = images.shape[0]
    with gzip.GzipFile(f"{out_dir}/images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(f"{out_dir}/labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())
    print(f"wrote {n} digits; per-class counts {np.bincount(labels).tolist()}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
