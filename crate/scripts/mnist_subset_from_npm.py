#!/usr/bin/env python3
"""Build a small IDX-format MNIST subset from the `mnist` npm package.

The npm package (https://www.npmjs.com/package/mnist, MIT) ships roughly
1000 MNIST digits per class as JSON arrays of intensities in [0, 1]. This
script writes the first TRAIN_PER_CLASS digits of every class to the train
files and the next TEST_PER_CLASS to the test files, interleaving classes
so that every prefix of the files is close to balanced.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_from_npm.py package/src/digits data/mnist-subset
"""
import json
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 500
TEST_PER_CLASS = 200
SIDE = 28


def load_class(path):
    flat = json.loads(Path(path).read_text())["data"]
    n = len(flat) // (SIDE * SIDE)
    return [flat[i * SIDE * SIDE:(i + 1) * SIDE * SIDE] for i in range(n)]


def to_bytes(img):
    return bytes(max(0, min(255, round(v * 255))) for v in img)


def write_idx(out, stem, images, labels):
    with open(out / f"{stem}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), SIDE, SIDE))
        for img in images:
            f.write(to_bytes(img))
    with open(out / f"{stem}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    classes = [load_class(src / f"{d}.json") for d in range(10)]
    for d, c in enumerate(classes):
        assert len(c) >= TRAIN_PER_CLASS + TEST_PER_CLASS, (d, len(c))
    splits = {
        "train": (0, TRAIN_PER_CLASS),
        "test": (TRAIN_PER_CLASS, TRAIN_PER_CLASS + TEST_PER_CLASS),
    }
    for stem, (lo, hi) in splits.items():
        images, labels = [], []
        for i in range(lo, hi):
            for d in range(10):
                images.append(classes[d][i])
                labels.append(d)
        write_idx(out, stem, images, labels)
        print(f"{stem}: {len(images)} images")


if __name__ == "__main__":
    main()
