#!/usr/bin/env python3
"""Convert the 5000-image MNIST subset shipped with mlxtend to IDX files.

The CSV has one image per row: 784 pixel values (0-255) then the label.

    pip download mlxtend --no-deps -d /tmp/mlx && unzip /tmp/mlx/*.whl -d /tmp/mlx
    python3 tools/mnist5k_to_idx.py /tmp/mlx/mlxtend/data/data/mnist_5k.csv.gz data/mnist-5k
"""

import argparse
import gzip
import pathlib
import struct

import numpy as np


def write_idx(path: pathlib.Path, array: np.ndarray) -> None:
    type_code = 0x08  # unsigned byte
    header = struct.pack(">BBBB", 0, 0, type_code, array.ndim)
    header += b"".join(struct.pack(">I", d) for d in array.shape)
    path.write_bytes(header + array.astype(np.uint8).tobytes())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv", type=pathlib.Path)
    parser.add_argument("out_dir", type=pathlib.Path)
    args = parser.parse_args()

    with gzip.open(args.csv, "rt") as f:
        rows = np.loadtxt(f, delimiter=",", dtype=np.int64)
    if rows.shape[1] != 785:
        raise SystemExit(f"expected 785 columns, got {rows.shape[1]}")
    pixels, labels = rows[:, :784], rows[:, 784]
    if pixels.min() < 0 or pixels.max() > 255 or labels.min() < 0 or labels.max() > 9:
        raise SystemExit("values out of range")

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir / "train-images-idx3-ubyte", pixels.reshape(-1, 28, 28))
    write_idx(args.out_dir / "train-labels-idx1-ubyte", labels)
    counts = np.bincount(labels, minlength=10)
    print(f"wrote {len(labels)} images, per class {counts.tolist()}")


if __name__ == "__main__":
    main()
