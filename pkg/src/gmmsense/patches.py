"""Grayscale image ingestion: binary PGM files, patch extraction, PSNR."""

from __future__ import annotations

import numpy as np

from .model import SignalBatch

__all__ = ["read_pgm", "write_pgm", "patch_extract", "psnr"]

I_MAX_8BIT = 255.0


def _read_pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Parse `count` ASCII integer tokens, skipping whitespace and comments."""
    tokens: list[int] = []
    pos = 0
    current = b""
    while len(tokens) < count:
        if pos >= len(data):
            raise ValueError("truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            if current:
                tokens.append(int(current))
                current = b""
            pos += 1
        else:
            current += ch
            pos += 1
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary PGM (P5) image as a float array in [0, 255]."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    tokens, pos = _read_pgm_tokens(data[2:], 3)
    width, height, maxval = tokens
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    payload = data[2 + pos : 2 + pos + width * height]
    if len(payload) != width * height:
        raise ValueError(f"{path}: truncated pixel data")
    img = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return img.astype(float)


def write_pgm(path, image: np.ndarray) -> None:
    """Write a 2-D array as 8-bit binary PGM, clipping to [0, 255]."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(pixels.tobytes())


def patch_extract(image: np.ndarray, patch: int, overlap: bool = False) -> SignalBatch:
    """Extract square patches as row signals with per-patch DC removed.

    Row-major scan; non-overlapping extraction uses stride = patch and
    drops trailing partial patches, overlap=True uses stride 1. Each patch
    is flattened row-major; its mean goes to dc_offsets and is carried as
    side information (not a measurement).
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    if patch < 1 or patch > min(img.shape):
        raise ValueError(
            f"patch size {patch} does not fit image of shape {img.shape}"
        )
    stride = 1 if overlap else patch
    windows = np.lib.stride_tricks.sliding_window_view(img, (patch, patch))
    windows = windows[::stride, ::stride]
    grid = windows.shape[:2]
    flat = windows.reshape(-1, patch * patch)
    dc = flat.mean(axis=1)
    return SignalBatch(
        signals=flat - dc[:, None],
        provenance={
            "kind": "patches",
            "image_shape": tuple(img.shape),
            "patch": patch,
            "overlap": bool(overlap),
            "grid": grid,
            "i_max": I_MAX_8BIT,
        },
        dc_offsets=dc,
    )


def psnr(original: np.ndarray, reconstructed: np.ndarray, i_max: float) -> float:
    """10 log10(i_max^2 / MSE); +inf when the inputs are identical."""
    a = np.asarray(original, dtype=float)
    b = np.asarray(reconstructed, dtype=float)
    if a.shape != b.shape:
        raise ValueError("shapes must match")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(i_max**2 / mse))
