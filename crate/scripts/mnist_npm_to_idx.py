#!/usr/bin/env python3
"""Convert the digit JSON files shipped with the `mnist` npm package into IDX files.

Only the requested digits are kept. The first `--train-per-class` images of each
digit go to the train pair, the remainder to the test pair.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_npm_to_idx.py package/src/digits data/mnist35 --digits 3 5
"""
import argparse
import json
import struct
from pathlib import Path


def write_idx(prefix: Path, images, labels):
    with open(f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src")
    ap.add_argument("dst")
    ap.add_argument("--digits", type=int, nargs="+", default=[3, 5])
    ap.add_argument("--train-per-class", type=int, default=600)
    args = ap.parse_args()

    train, test = ([], []), ([], [])
    for d in args.digits:
        flat = json.load(open(Path(args.src) / f"{d}.json"))["data"]
        assert len(flat) % 784 == 0
        for i in range(len(flat) // 784):
            px = [int(round(v * 255)) for v in flat[i * 784:(i + 1) * 784]]
            bucket = train if i < args.train_per_class else test
            bucket[0].append(px)
            bucket[1].append(d)

    out = Path(args.dst)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "train", *train)
    write_idx(out / "t10k", *test)
    print(f"train={len(train[1])} test={len(test[1])}")


if __name__ == "__main__":
    main()
