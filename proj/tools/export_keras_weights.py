#!/usr/bin/env python3
"""Convert Keras application backbones into hybridct HCTW weight files.

Run once on a machine that can download the Keras ImageNet checkpoints:

    python3 tools/export_keras_weights.py --out ~/.cache/hybridct/weights

The C++ loader expects `<backbone>_imagenet.hctw` in $HYBRIDCT_WEIGHTS_DIR
(default ~/.cache/hybridct/weights).

With --weights none the script exports Keras' own random initialization and,
with --reference, also writes a fixed input image and the Keras pooled
features for it, so the C++ forward pass can be checked against Keras.
"""

import argparse
import os
import struct
import sys

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK = 0xFFFFFFFFFFFFFFFF

BACKBONES = {
    "vgg16": "VGG16",
    "densenet121": "DenseNet121",
    "mobilenetv2": "MobileNetV2",
}


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & MASK
    return h


def build(name, weights):
    import keras

    ctor = getattr(keras.applications, BACKBONES[name])
    kwargs = dict(include_top=False, weights=weights, input_shape=(224, 224, 3))
    if name == "mobilenetv2":
        kwargs["alpha"] = 1.0
    return ctor(**kwargs)


def export(model, path):
    records = []
    for layer in model.layers:
        for w in layer.weights:
            leaf = w.name.split("/")[-1].split(":")[0]
            records.append((f"{layer.name}/{leaf}", np.asarray(w.numpy(), dtype="<f4")))
    out = bytearray(b"HCTW1")
    out += struct.pack("<I", len(records))
    for name, arr in records:
        encoded = name.encode("utf-8")
        out += struct.pack("<I", len(encoded)) + encoded
        out += struct.pack("<I", arr.ndim)
        for d in arr.shape:
            out += struct.pack("<I", d)
        out += arr.tobytes(order="C")
    out += struct.pack("<Q", fnv1a64(bytes(out)))
    with open(path, "wb") as f:
        f.write(out)
    print(f"wrote {path} ({len(records)} tensors, {model.count_params()} parameters)")


def write_reference(model, path, seed):
    rng = np.random.default_rng(seed)
    image = rng.uniform(0.0, 1.0, size=(1, 224, 224, 3)).astype("<f4")
    feature_map = model.predict(image, verbose=0)
    pooled = feature_map.mean(axis=(1, 2)).astype("<f4")
    with open(path, "wb") as f:
        f.write(struct.pack("<II", 224 * 224 * 3, pooled.shape[1]))
        f.write(image.tobytes(order="C"))
        f.write(pooled.tobytes(order="C"))
    print(f"wrote {path}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True)
    parser.add_argument("--backbones", nargs="*", default=list(BACKBONES))
    parser.add_argument("--weights", choices=["imagenet", "none"], default="imagenet")
    parser.add_argument("--reference", action="store_true",
                        help="also write <backbone>_reference.bin for forward-pass checks")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)
    for name in args.backbones:
        if name not in BACKBONES:
            sys.exit(f"unknown backbone {name}")
        model = build(name, None if args.weights == "none" else "imagenet")
        suffix = "imagenet" if args.weights == "imagenet" else "keras_init"
        export(model, os.path.join(args.out, f"{name}_{suffix}.hctw"))
        if args.reference:
            write_reference(model, os.path.join(args.out, f"{name}_reference.bin"), args.seed)


if __name__ == "__main__":
    main()
