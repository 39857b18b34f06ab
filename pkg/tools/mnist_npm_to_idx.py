"""Convert the digits bundled in the npm ``mnist`` package into IDX files.

The npm package (MIT, github.com/cazala/mnist) ships 10,000 MNIST digits as
JSON arrays of pixel intensities rounded to three decimals. Rounding back to
bytes recovers the original pixels exactly.

Usage::

    npm pack mnist && tar xzf mnist-*.tgz
    python tools/mnist_npm_to_idx.py package/src/digits data/mnist-npm
"""

import argparse
import gzip
import json
import struct
from pathlib import Path

import numpy as np


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=20230601)
    args = ap.parse_args()

    images, labels = [], []
    for digit in range(10):
        raw = np.asarray(json.loads((args.digits_dir / f"{digit}.json").read_text())["data"])
        pixels = np.rint(raw * 255.0).astype(np.uint8).reshape(-1, 28, 28)
        images.append(pixels)
        labels.append(np.full(len(pixels), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(args.seed).permutation(len(labels))
    images, labels = images[order], labels[order]

    args.out_dir.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(args.out_dir / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, *images.shape))
        f.write(images.tobytes())
    with gzip.GzipFile(args.out_dir / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.tobytes())
    print(f"wrote {len(labels)} images to {args.out_dir}")


if __name__ == "__main__":
    main()
