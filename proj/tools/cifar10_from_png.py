#!/usr/bin/env python3
"""Rebuild the CIFAR-10 binary batches from the PNG sprite sheets in the
`tfjs-cifar10` npm package.

Each sheet is 1024 x 10000 RGB: one image per row, pixels in row-major
order. Output records follow the standard binary layout (1 label byte,
then the R, G and B planes of 1024 bytes each).

    npm pack tfjs-cifar10 && tar xzf tfjs-cifar10-*.tgz
    python3 tools/cifar10_from_png.py package/ /path/to/cifar-10-batches-bin
"""
import argparse
import json
import pathlib

import numpy as np
from PIL import Image


def convert(sheet, labels, out_path):
    pixels = np.asarray(Image.open(sheet).convert("RGB"), dtype=np.uint8)
    count = pixels.shape[0]
    if len(labels) != count:
        raise SystemExit(f"{sheet}: {count} rows but {len(labels)} labels")
    planes = pixels.reshape(count, 1024, 3).transpose(0, 2, 1).reshape(count, 3072)
    records = np.empty((count, 3073), dtype=np.uint8)
    records[:, 0] = np.asarray(labels, dtype=np.uint8)
    records[:, 1:] = planes
    out_path.write_bytes(records.tobytes())


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("package_dir", type=pathlib.Path)
    parser.add_argument("out_dir", type=pathlib.Path)
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    train_labels = json.loads((args.package_dir / "train_lables.json").read_text())
    test_labels = json.loads((args.package_dir / "test_lables.json").read_text())
    for i in range(5):
        convert(args.package_dir / f"data_batch_{i + 1}.png",
                train_labels[i * 10000:(i + 1) * 10000],
                args.out_dir / f"data_batch_{i + 1}.bin")
    convert(args.package_dir / "test_batch.png", test_labels,
            args.out_dir / "test_batch.bin")
    (args.out_dir / "batches.meta.txt").write_text(
        "airplane\nautomobile\nbird\ncat\ndeer\ndog\nfrog\nhorse\nship\ntruck\n")


if __name__ == "__main__":
    main()
