#!/usr/bin/env python3
"""Convert the 10k-digit MNIST sample shipped in the npm `mnist` package
into IDX files with the canonical MNIST file names.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_to_idx.py package/src/digits data/mnist-subset

The package stores intensities as x/255 rounded to three decimals; they are
mapped back to bytes with round(v * 255). Each digit's samples are split
80/20 into train/test and the result is shuffled with a fixed seed.
"""

import argparse
import json
import random
import struct
from pathlib import Path

SIDE = 28


def write_idx(out: Path, prefix: str, samples):
    images = bytearray(struct.pack(">IIII", 0x803, len(samples), SIDE, SIDE))
    labels = bytearray(struct.pack(">II", 0x801, len(samples)))
    for pixels, label in samples:
        images.extend(pixels)
        labels.append(label)
    (out / f"{prefix}-images-idx3-ubyte").write_bytes(bytes(images))
    (out / f"{prefix}-labels-idx1-ubyte").write_bytes(bytes(labels))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("digits_dir", type=Path)
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--train-fraction", type=float, default=0.8)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    train, test = [], []
    for digit in range(10):
        flat = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        n = len(flat) // (SIDE * SIDE)
        images = [
            bytes(min(255, max(0, round(v * 255))) for v in flat[i * SIDE * SIDE:(i + 1) * SIDE * SIDE])
            for i in range(n)
        ]
        cut = int(n * args.train_fraction)
        train.extend((img, digit) for img in images[:cut])
        test.extend((img, digit) for img in images[cut:])

    rng = random.Random(args.seed)
    rng.shuffle(train)
    rng.shuffle(test)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir, "train", train)
    write_idx(args.out_dir, "t10k", test)
    print(f"wrote {len(train)} train / {len(test)} test images to {args.out_dir}")


if __name__ == "__main__":
    main()
