#!/usr/bin/env python3
"""Build a small MNIST pair of IDX files from the 10,000 digits shipped in the
`mnist` npm package.

Usage: scripts/fetch_mnist.py [OUT_DIR] [--train N]

Writes train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte
and t10k-labels-idx1-ubyte. Examples are shuffled with a fixed seed and split
into N training examples (default 5000) and the rest for testing.
"""

import argparse
import json
import random
import struct
import subprocess
import tarfile
import tempfile
from pathlib import Path

PACKAGE = "mnist@1.1.0"


def fetch(tmp: Path) -> Path:
    subprocess.run(["npm", "pack", PACKAGE, "--silent"], cwd=tmp, check=True, stdout=subprocess.DEVNULL)
    tarball = next(tmp.glob("mnist-*.tgz"))
    with tarfile.open(tarball) as tf:
        tf.extractall(tmp, filter="data")
    return tmp / "package" / "src" / "digits"


def load(digits: Path):
    examples = []
    for label in range(10):
        data = json.loads((digits / f"{label}.json").read_text())["data"]
        assert len(data) % 784 == 0, f"digit {label}: {len(data)} values"
        for i in range(0, len(data), 784):
            pixels = bytes(min(255, max(0, round(v * 255))) for v in data[i : i + 784])
            examples.append((pixels, label))
    return examples


def write_idx(out: Path, prefix: str, examples) -> None:
    with open(out / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(examples), 28, 28))
        for pixels, _ in examples:
            f.write(pixels)
    with open(out / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(examples)))
        f.write(bytes(label for _, label in examples))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out", nargs="?", default="data/mnist")
    ap.add_argument("--train", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        examples = load(fetch(Path(tmp)))
    random.Random(args.seed).shuffle(examples)
    if not 0 < args.train < len(examples):
        raise SystemExit(f"--train must be in (0, {len(examples)})")
    write_idx(out, "train", examples[: args.train])
    write_idx(out, "t10k", examples[args.train :])
    print(f"wrote {args.train} train / {len(examples) - args.train} test examples to {out}")


if __name__ == "__main__":
    main()
