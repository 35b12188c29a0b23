#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into IDX files.

Usage: npm pack mnist && tar xzf mnist-*.tgz && python3 mnist_from_npm.py package/src/digits data/mnist

The package ships 10000 MNIST digits as JSON floats rounded to three decimals
(k/255 is recovered exactly by round(v * 255)). Digits are interleaved with a
fixed permutation, then split 8000 train / 2000 test.
"""
import json
import random
import struct
import sys
from pathlib import Path

src, dst = Path(sys.argv[1]), Path(sys.argv[2])
dst.mkdir(parents=True, exist_ok=True)

samples = []
for digit in range(10):
    flat = json.loads((src / f"{digit}.json").read_text())["data"]
    assert len(flat) % 784 == 0
    for i in range(len(flat) // 784):
        px = bytes(int(round(v * 255)) for v in flat[i * 784:(i + 1) * 784])
        samples.append((px, digit))

random.Random(20200714).shuffle(samples)
n_train = 8000


def write(prefix, part):
    with open(dst / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(part), 28, 28))
        for px, _ in part:
            f.write(px)
    with open(dst / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(part)))
        f.write(bytes(label for _, label in part))


write("train", samples[:n_train])
write("t10k", samples[n_train:])
print(f"{len(samples)} digits -> {n_train} train / {len(samples) - n_train} test")
