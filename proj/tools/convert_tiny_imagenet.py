#!/usr/bin/env python3
"""Convert a Tiny-ImageNet-200 directory tree into the binary record format
this toolkit ingests: one record per image, laid out as

    1 byte  coarse label (always 0; kept for layout parity with CIFAR files)
    1 byte  fine label (0..199, wnid order of wnids.txt)
    12288 bytes  64x64 RGB pixels, planar channel-major (R plane, G plane, B plane)

Usage:
    convert_tiny_imagenet.py TINY_ROOT train.bin val.bin

TINY_ROOT is the unpacked tiny-imagenet-200 directory (containing wnids.txt,
train/, val/). Requires Pillow.
"""

import os
import sys

from PIL import Image


def load_wnid_index(root):
    with open(os.path.join(root, "wnids.txt")) as fh:
        wnids = [line.strip() for line in fh if line.strip()]
    if len(wnids) != 200:
        raise SystemExit(f"expected 200 wnids, found {len(wnids)}")
    return {w: i for i, w in enumerate(wnids)}


def encode(path, label, out):
    img = Image.open(path).convert("RGB").resize((64, 64))
    pixels = img.tobytes()  # interleaved RGBRGB...
    planes = bytearray(3 * 64 * 64)
    for i in range(64 * 64):
        planes[i] = pixels[3 * i]
        planes[4096 + i] = pixels[3 * i + 1]
        planes[8192 + i] = pixels[3 * i + 2]
    out.write(bytes([0, label]))
    out.write(planes)


def convert_train(root, index, out_path):
    count = 0
    with open(out_path, "wb") as out:
        for wnid in sorted(index, key=index.get):
            img_dir = os.path.join(root, "train", wnid, "images")
            for name in sorted(os.listdir(img_dir)):
                encode(os.path.join(img_dir, name), index[wnid], out)
                count += 1
    return count


def convert_val(root, index, out_path):
    anno = os.path.join(root, "val", "val_annotations.txt")
    count = 0
    with open(anno) as fh, open(out_path, "wb") as out:
        for line in fh:
            parts = line.split("\t")
            if len(parts) < 2:
                continue
            encode(os.path.join(root, "val", "images", parts[0]), index[parts[1]], out)
            count += 1
    return count


def main():
    if len(sys.argv) != 4:
        raise SystemExit(__doc__)
    root, train_out, val_out = sys.argv[1], sys.argv[2], sys.argv[3]
    index = load_wnid_index(root)
    n_train = convert_train(root, index, train_out)
    n_val = convert_val(root, index, val_out)
    print(f"wrote {n_train} train records to {train_out}")
    print(f"wrote {n_val} val records to {val_out}")


if __name__ == "__main__":
    main()
