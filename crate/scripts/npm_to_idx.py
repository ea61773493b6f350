#!/usr/bin/env python3
"""Convert the per-class JSON digit/clothing dumps shipped in the `mnist` and
`fashion-mnist` npm packages into gzipped IDX files.

    npm pack fashion-mnist && tar xzf fashion-mnist-*.tgz
    python3 scripts/npm_to_idx.py package/src/clothes ~/data/fashion --train 6000 --test 1000

Each class file holds either a flat `data` array of 784*n floats in [0, 1]
(`mnist`) or a `data` list of 784-byte rows (`fashion-mnist`). The first
`--train` images of every class go to the train split and the next `--test`
images go to the test split; images are interleaved by class in round-robin
order so that any prefix of a split stays roughly balanced.
"""
import argparse
import gzip
import json
import os
import struct


def load_class(path):
    with open(path) as fh:
        data = json.load(fh)["data"]
    if data and isinstance(data[0], list):
        return [bytes(row) for row in data]
    n = len(data) // 784
    rows = []
    for i in range(n):
        chunk = data[i * 784:(i + 1) * 784]
        rows.append(bytes(min(255, max(0, round(v * 255))) for v in chunk))
    return rows


def write_gz(path, payload):
    # mtime=0 keeps the archives byte-identical across conversions
    with open(path, "wb") as fh:
        fh.write(gzip.compress(payload, mtime=0))


def write_idx(out_dir, prefix, images, labels):
    header = struct.pack(">IIII", 0x803, len(images), 28, 28)
    write_gz(os.path.join(out_dir, f"{prefix}-images-idx3-ubyte.gz"), header + b"".join(images))
    header = struct.pack(">II", 0x801, len(labels))
    write_gz(os.path.join(out_dir, f"{prefix}-labels-idx1-ubyte.gz"), header + bytes(labels))


def interleave(per_class, lo, hi):
    images, labels = [], []
    for i in range(lo, hi):
        for c, rows in enumerate(per_class):
            if i < len(rows):
                images.append(rows[i])
                labels.append(c)
    return images, labels


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src")
    ap.add_argument("out")
    ap.add_argument("--train", type=int, required=True, help="train images per class")
    ap.add_argument("--test", type=int, required=True, help="test images per class")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    per_class = [load_class(os.path.join(args.src, f"{c}.json")) for c in range(10)]
    write_idx(args.out, "train", *interleave(per_class, 0, args.train))
    write_idx(args.out, "t10k", *interleave(per_class, args.train, args.train + args.test))


if __name__ == "__main__":
    main()
