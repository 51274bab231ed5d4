#!/usr/bin/env python3
"""Build a 10k-digit MNIST subset in IDX format from the npm `mnist` package.

The npm package (https://www.npmjs.com/package/mnist) ships 10,000 MNIST
digits as JSON with pixels scaled to [0,1] and rounded to 3 decimals. This
script restores 8-bit pixels, shuffles with a fixed seed and writes an
8000/2000 train/test split under the standard MNIST file names.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist10k
"""
import json
import random
import struct
import sys
from pathlib import Path

SIDE = 28
TRAIN = 8000


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(bytes(labels))


def main(digits_dir, out_dir, seed=20210101):
    samples = []
    for label in range(10):
        data = json.loads(Path(digits_dir, f"{label}.json").read_text())["data"]
        px = SIDE * SIDE
        for k in range(len(data) // px):
            img = [min(255, max(0, round(v * 255))) for v in data[k * px:(k + 1) * px]]
            samples.append((img, label))
    random.Random(seed).shuffle(samples)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = samples[:TRAIN], samples[TRAIN:]
    write_images(out / "train-images-idx3-ubyte", [s[0] for s in train])
    write_labels(out / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_images(out / "t10k-images-idx3-ubyte", [s[0] for s in test])
    write_labels(out / "t10k-labels-idx1-ubyte", [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test digits to {out}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
