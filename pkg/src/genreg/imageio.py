"""Grayscale PNG/PGM input and output, plus display helpers for montages."""

import os

import numpy as np
from PIL import Image

SUPPORTED = (".png", ".pgm")


class ImageFormatError(OSError):
    """Unreadable or unsupported image file."""


def _check_ext(path):
    ext = os.path.splitext(str(path))[1].lower()
    if ext not in SUPPORTED:
        raise ImageFormatError(f"{path}: unsupported extension {ext!r} (use .png or .pgm)")
    return ext


def load_image(path):
    """Read an 8- or 16-bit grayscale image as floats in [0, 1]."""
    _check_ext(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.array(im)
    except (OSError, ValueError) as exc:
        raise ImageFormatError(f"{path}: cannot read image ({exc})") from exc
    if mode == "L":
        return arr.astype(np.float64) / 255.0
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        if arr.min() < 0 or arr.max() > 65535:
            raise ImageFormatError(f"{path}: samples outside the 16-bit range")
        return arr.astype(np.float64) / 65535.0
    raise ImageFormatError(f"{path}: mode {mode!r} is not 8/16-bit grayscale")


def save_image(grid, path, bits=8):
    """Clamp to [0, 1], quantize to `bits` (8 or 16) and write PNG/PGM."""
    _check_ext(path)
    g = np.clip(np.asarray(grid, dtype=np.float64), 0.0, 1.0)
    if bits == 8:
        im = Image.fromarray(np.round(g * 255.0).astype(np.uint8), mode="L")
    elif bits == 16:
        im = Image.fromarray(np.round(g * 65535.0).astype(np.uint16))
    else:
        raise ValueError("bits must be 8 or 16")
    try:
        im.save(path)
    except OSError as exc:
        raise ImageFormatError(f"{path}: cannot write image ({exc})") from exc


def rescale(a):
    """Affine map of ``[min, max]`` onto ``[0, 1]``; returns ``(scaled, (min, max))``."""
    a = np.asarray(a, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        return (a - lo) / (hi - lo), (lo, hi)
    return np.zeros_like(a), (lo, hi)


def montage(stack, cols=None, pad=1, fill=1.0):
    """Tile a ``(N, h, w)`` stack into one image, row-major."""
    stack = np.asarray(stack, dtype=np.float64)
    n, h, w = stack.shape
    cols = cols or int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    out = np.full((rows * (h + pad) + pad, cols * (w + pad) + pad), fill)
    for k in range(n):
        i, j = divmod(k, cols)
        y0, x0 = pad + i * (h + pad), pad + j * (w + pad)
        out[y0 : y0 + h, x0 : x0 + w] = stack[k]
    return out
