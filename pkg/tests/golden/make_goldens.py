"""Regenerate the golden OODB files from hand-packed bytes.

Deliberately independent of the package: everything is assembled with
struct/array so the goldens pin the byte format, not the writer. Run from
this directory: python make_goldens.py
"""

import struct
from pathlib import Path

HERE = Path(__file__).parent


def header(n, d, K, flags):
    return struct.pack("<4sIIIIB7x", b"OODB", 1, n, d, K, flags)


def f32(values):
    return struct.pack(f"<{len(values)}f", *values)


def i32(values):
    return struct.pack(f"<{len(values)}i", *values)


def minimal():
    # n=1, d=2, K=2, features only: 28-byte header + 8-byte payload
    return header(1, 2, 2, 0) + f32([1.0, 0.0])


def logits_only():
    # n=3, d=2, K=4, features + logits
    feats = [0.5, -1.25, 2.0, 0.25, -3.5, 4.0]
    logits = [1.0, 0.0, -1.0, 0.5,
              2.5, -0.5, 0.75, 0.0,
              -2.0, 3.0, 1.5, -0.25]
    return header(3, 2, 4, 1) + f32(feats) + f32(logits)


def full():
    # n=2, d=3, K=2, all sections
    feats = [1.0, 2.0, -0.5, 0.25, -1.75, 3.0]
    logits = [0.5, -0.5, 1.25, 0.0]
    labels = [0, 1]
    W = [0.5, 1.0, -1.5, 2.0, -0.25, 0.75]
    b = [0.125, -0.375]
    return (
        header(2, 3, 2, 1 | 2 | 4)
        + f32(feats)
        + f32(logits)
        + i32(labels)
        + f32(W)
        + f32(b)
    )


if __name__ == "__main__":
    (HERE / "minimal.oodb").write_bytes(minimal())
    (HERE / "logits_only.oodb").write_bytes(logits_only())
    (HERE / "full.oodb").write_bytes(full())
    for name in ("minimal", "logits_only", "full"):
        print(name, (HERE / f"{name}.oodb").stat().st_size, "bytes")
