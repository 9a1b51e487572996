"""Image file output: PPM (P6) for RGB, PFM for float maps, PGM (P5) for masks."""

from __future__ import annotations

import numpy as np


def write_ppm(path, rgb: np.ndarray) -> None:
    """8-bit binary PPM from an (H, W, 3) float image in [0, 1]."""
    data = np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)
    H, W = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{W} {H}\n255\n".encode())
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"P6":
            raise ValueError("not a binary PPM")
        dims = fh.readline().split()
        W, H = int(dims[0]), int(dims[1])
        fh.readline()  # maxval
        data = np.frombuffer(fh.read(W * H * 3), dtype=np.uint8)
    return data.reshape(H, W, 3).astype(np.float64) / 255.0


def write_pfm(path, img: np.ndarray) -> None:
    """Little-endian single-channel PFM (rows stored bottom-up per the format)."""
    data = np.asarray(img, dtype="<f4")
    H, W = data.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{W} {H}\n-1.0\n".encode())
        fh.write(data[::-1].tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise ValueError("not a grayscale PFM")
        dims = fh.readline().split()
        W, H = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        dt = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(W * H * 4), dtype=dt)
    return data.reshape(H, W)[::-1].astype(np.float64)


def write_pgm(path, mask: np.ndarray) -> None:
    """8-bit binary PGM of integer class indices (argmax masks)."""
    data = np.asarray(mask)
    if data.max(initial=0) > 255 or data.min(initial=0) < 0:
        raise ValueError("class indices must fit in a byte")
    data = data.astype(np.uint8)
    H, W = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n255\n".encode())
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"P5":
            raise ValueError("not a binary PGM")
        dims = fh.readline().split()
        W, H = int(dims[0]), int(dims[1])
        fh.readline()
        data = np.frombuffer(fh.read(W * H), dtype=np.uint8)
    return data.reshape(H, W).astype(np.int64)
