"""Export torchvision VGG-19 convolution weights to a tensor archive for the C++ backbone."""

import argparse
import json
import struct
from pathlib import Path

import torch
import torchvision

BLOCKS = [2, 2, 4, 4, 4]
DTYPES = {torch.float32: "f32", torch.float64: "f64", torch.int64: "i64", torch.uint8: "u8"}


def named_convs(features):
    convs = [m for m in features if isinstance(m, torch.nn.Conv2d)]
    names = [f"conv{b + 1}_{i + 1}" for b, n in enumerate(BLOCKS) for i in range(n)]
    assert len(convs) == len(names)
    for name, conv in zip(names, convs):
        yield f"{name}.weight", conv.weight.detach()
        yield f"{name}.bias", conv.bias.detach()


def write_archive(path, tensors, meta):
    index, payload, offset = [], [], 0
    for name, t in tensors:
        data = t.contiguous().cpu().numpy().tobytes()
        index.append({"name": name, "dtype": DTYPES[t.dtype], "shape": list(t.shape),
                      "offset": offset, "nbytes": len(data)})
        payload.append(data)
        offset += len(data)
    header = json.dumps({"meta": meta, "tensors": index}, sort_keys=True,
                        separators=(",", ":")).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(b"RFACEARC")
        f.write(struct.pack("<IQ", 1, len(header)))
        f.write(header)
        for chunk in payload:
            f.write(chunk)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("weights/vgg19.rfa"))
    parser.add_argument("--random-init", action="store_true",
                        help="skip the ImageNet download (format checks only)")
    args = parser.parse_args()
    weights = None if args.random_init else torchvision.models.VGG19_Weights.IMAGENET1K_V1
    model = torchvision.models.vgg19(weights=weights)
    source = "random" if args.random_init else "torchvision IMAGENET1K_V1"
    write_archive(args.out, list(named_convs(model.features)), {"model": "vgg19", "source": source})
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
