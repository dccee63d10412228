#!/usr/bin/env python3
"""Write the 5,000-image MNIST subset shipped inside the mlxtend wheel as IDX files.

Usage: make_mnist_subset.py WHEEL OUT_DIR

The wheel can be fetched with `pip download --no-deps mlxtend==0.24.0`.
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    wheel, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as z:
        text = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    rows = [list(map(int, line.split(","))) for line in text.splitlines() if line]
    images = bytearray()
    labels = bytearray()
    for row in rows:
        assert len(row) == 785
        images.extend(row[:784])
        labels.append(row[784])
    n = len(rows)
    (out_dir / "mnist5k-images-idx3-ubyte").write_bytes(
        struct.pack(">IIII", 2051, n, 28, 28) + bytes(images))
    (out_dir / "mnist5k-labels-idx1-ubyte").write_bytes(
        struct.pack(">II", 2049, n) + bytes(labels))
    print(f"wrote {n} images to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
