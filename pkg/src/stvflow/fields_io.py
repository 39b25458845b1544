"""Field serialization: node CSV and binary PGM (P5) with range sidecars.

CSV rows carry node indices and coordinates (header ``i,xi1,value`` in 1D,
``i,j,xi1,xi2,value`` in 2D).  PGM output maps field values affinely onto the
integer pixel range; the mapping (vmin, vmax, maxval) is recorded in a
sidecar text file next to the image so the transform can be inverted.
Floats are written with repr, which round-trips exactly, so identical fields
produce identical bytes.
"""

from __future__ import annotations

import os

import numpy as np

from .grid import Grid, ScalarField

__all__ = [
    "field_to_csv",
    "write_pgm",
    "read_pgm",
    "trajectory_to_csv",
]


def _fmt(v: float) -> str:
    return repr(float(v))


def field_to_csv(field: ScalarField, stream) -> None:
    grid = field.grid
    axes = grid.axes()
    if grid.dim == 1:
        stream.write("i,xi1,value\n")
        for i, (xi, v) in enumerate(zip(axes[0], field.values)):
            stream.write(f"{i},{_fmt(xi)},{_fmt(v)}\n")
    else:
        stream.write("i,j,xi1,xi2,value\n")
        for i in range(grid.counts[0]):
            for j in range(grid.counts[1]):
                stream.write(
                    f"{i},{j},{_fmt(axes[0][i])},{_fmt(axes[1][j])},{_fmt(field.values[i, j])}\n"
                )


def trajectory_to_csv(traj, stream) -> None:
    """Per-step norm records of a solved trajectory."""
    stream.write("t,l2,lN,tv,phi_lambda\n")
    for t, a, b, c, d in zip(traj.times, traj.l2, traj.lN, traj.tv, traj.phi_lambda):
        stream.write(f"{_fmt(t)},{_fmt(a)},{_fmt(b)},{_fmt(c)},{_fmt(d)}\n")


def write_pgm(field: ScalarField, path: str, bits: int = 8) -> None:
    """Binary PGM after affine range mapping; sidecar '<path>.range.txt'.

    Pixels are round((v - vmin)/(vmax - vmin) * maxval); constant fields map
    to 0.  16-bit output is big-endian per the format.
    """
    if field.grid.dim != 2:
        raise ValueError("PGM output needs a 2D field")
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    maxval = (1 << bits) - 1
    vals = field.values
    vmin = float(vals.min())
    vmax = float(vals.max())
    span = vmax - vmin
    if span > 0:
        pix = np.round((vals - vmin) / span * maxval)
    else:
        pix = np.zeros_like(vals)
    pix = pix.astype(">u2" if bits == 16 else "u1")
    h, w = vals.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        f.write(pix.tobytes())
    with open(path + ".range.txt", "w", encoding="ascii") as f:
        f.write(f"vmin={_fmt(vmin)}\nvmax={_fmt(vmax)}\nmaxval={maxval}\n")


def read_pgm(path: str) -> np.ndarray:
    """Read a binary (P5) grayscale image as floats in [0, 1]."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{os.path.basename(path)}: not a binary PGM (P5) image")
    # header: magic, width, height, maxval; '#' comments allowed
    tokens = []
    i = 2
    while len(tokens) < 3:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:i])
    i += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval <= 0 or maxval > 65535:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=i)
    if raw.size != count:
        raise ValueError("truncated PGM pixel data")
    return raw.reshape(height, width).astype(float) / maxval
