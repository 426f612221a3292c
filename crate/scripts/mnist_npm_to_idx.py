#!/usr/bin/env python3
"""Convert the digits bundled with the `mnist` npm package into gzipped IDX files.

The package ships 10,000 MNIST digits as JSON arrays of intensities in [0, 1]
rounded to three decimals; rounding back to bytes recovers the original
8-bit pixels exactly.

usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/mnist_npm_to_idx.py package/src/digits data/mnist
"""
import gzip
import json
import struct
import sys
from pathlib import Path


def main() -> None:
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    pixels = bytearray()
    labels = bytearray()
    for digit in range(10):
        values = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(values) % 784 == 0
        pixels.extend(min(255, max(0, round(v * 255))) for v in values)
        labels.extend([digit] * (len(values) // 784))
    n = len(labels)
    with gzip.GzipFile(dst / "mnist10k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(bytes(pixels))
    with gzip.GzipFile(dst / "mnist10k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(labels))
    print(f"wrote {n} images to {dst}")


if __name__ == "__main__":
    main()
