#!/usr/bin/env python3
"""Copy the first N training and M test images of every class from an IDX
dataset directory into a smaller gzipped IDX dataset, preserving file order."""

import argparse
import gzip
import struct
from pathlib import Path

STEMS = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def read(path: Path) -> bytes:
    for candidate in (path, path.with_name(path.name + ".gz")):
        if candidate.exists():
            raw = candidate.read_bytes()
            return gzip.decompress(raw) if raw[:2] == b"\x1f\x8b" else raw
    raise FileNotFoundError(path)


def write_gz(path: Path, payload: bytes) -> None:
    path.write_bytes(gzip.compress(payload, mtime=0))


def subset(src: Path, out: Path, split: str, per_class: int) -> int:
    img_stem, lbl_stem = STEMS[split]
    images = read(src / img_stem)
    labels = read(src / lbl_stem)
    magic, count, rows, cols = struct.unpack(">IIII", images[:16])
    assert magic == 0x803 and struct.unpack(">I", labels[:4])[0] == 0x801
    size = rows * cols
    taken = {c: 0 for c in range(10)}
    keep = []
    for i in range(count):
        c = labels[8 + i]
        if taken[c] < per_class:
            taken[c] += 1
            keep.append(i)
    pixels = b"".join(images[16 + i * size : 16 + (i + 1) * size] for i in keep)
    write_gz(out / f"{img_stem}.gz", struct.pack(">IIII", 0x803, len(keep), rows, cols) + pixels)
    write_gz(out / f"{lbl_stem}.gz", struct.pack(">II", 0x801, len(keep)) + bytes(labels[8 + i] for i in keep))
    return len(keep)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("src", type=Path)
    p.add_argument("out", type=Path)
    p.add_argument("--train", type=int, default=1000, help="training images per class")
    p.add_argument("--test", type=int, default=250, help="test images per class")
    a = p.parse_args()
    a.out.mkdir(parents=True, exist_ok=True)
    n_train = subset(a.src, a.out, "train", a.train)
    n_test = subset(a.src, a.out, "test", a.test)
    print(f"{a.out}: {n_train} train, {n_test} test")


if __name__ == "__main__":
    main()
