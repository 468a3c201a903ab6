#!/usr/bin/env python3
"""Write the 5000-digit MNIST subset bundled with the mlxtend wheel as IDX files.

The subset holds 500 digits per class, sorted by label. The first 400 of each
class go to the train split and the last 100 to the test split. Both splits
are interleaved round-robin over classes so any prefix is class balanced.

Usage:
    pip download mlxtend --no-deps -d /tmp/whl
    python3 tools/extract_mnist_subset.py /tmp/whl/mlxtend-*.whl data/
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path


def write_idx(path, images, labels):
    with gzip.GzipFile(path.with_name(path.name + "-images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with gzip.GzipFile(path.with_name(path.name + "-labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    wheel, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    raw = gzip.decompress(zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz"))
    by_class = {c: [] for c in range(10)}
    for line in raw.decode().strip().split("\n"):
        row = list(map(int, line.split(",")))
        by_class[row[-1]].append(row[:-1])

    for name, lo, hi in (("mnist5k-train", 0, 400), ("mnist5k-test", 400, 500)):
        images, labels = [], []
        for i in range(lo, hi):
            for c in range(10):
                images.append(by_class[c][i])
                labels.append(c)
        write_idx(out / name, images, labels)
        print(f"{name}: {len(images)} images")


if __name__ == "__main__":
    main()
