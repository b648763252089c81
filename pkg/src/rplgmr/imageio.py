"""Binary PGM/PPM reading and writing, depth sidecars and label rendering."""

from __future__ import annotations

import colorsys
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import UnreadableInput
from .geometry import DepthImage


def _tokens(data: bytes, count: int):
    """First ``count`` whitespace-separated header tokens and the offset after them."""
    out, i, n = [], 0, len(data)
    while len(out) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise UnreadableInput("truncated PNM header")
        out.append(data[i:j])
        i = j
    # exactly one whitespace byte separates the header from the raster
    return out, i + 1


def read_pnm(path) -> np.ndarray:
    """Read a binary P5 (grey) or P6 (RGB) image, 8- or 16-bit big-endian."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableInput(f"{path}: {exc}") from exc
    try:
        (magic, w, h, maxval), off = _tokens(data, 4)
        width, height, maxval = int(w), int(h), int(maxval)
    except (ValueError, UnreadableInput) as exc:
        raise UnreadableInput(f"{path}: bad PNM header") from exc
    if magic not in (b"P5", b"P6"):
        raise UnreadableInput(f"{path}: unsupported format {magic!r}")
    if not 0 < maxval < 65536 or width <= 0 or height <= 0:
        raise UnreadableInput(f"{path}: bad dimensions or maxval")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    raster = data[off:off + count * dtype.itemsize]
    if len(raster) < count * dtype.itemsize:
        raise UnreadableInput(f"{path}: raster is truncated")
    arr = np.frombuffer(raster, dtype=dtype).astype(np.int64)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return arr.reshape(shape)


def pgm_bytes(values, maxval: int = 65535) -> bytes:
    a = np.asarray(values)
    if a.ndim != 2:
        raise ValueError("PGM data must be 2-D")
    if a.min(initial=0) < 0 or a.max(initial=0) > maxval:
        raise ValueError(f"PGM values must lie in [0, {maxval}]")
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n{maxval}\n".encode("ascii")
    return header + a.astype(dtype).tobytes()


def ppm_bytes(rgb) -> bytes:
    a = np.asarray(rgb, dtype=np.uint8)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError("PPM data must be (H, W, 3)")
    header = f"P6\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii")
    return header + a.tobytes()


def atomic_write(path, data) -> None:
    """Write bytes or text via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sidecar_path(pgm_path) -> Path:
    return Path(pgm_path).with_suffix(".txt")


def read_sidecar(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UnreadableInput(f"{path}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def write_sidecar_text(units: float, s: float | None = None) -> str:
    lines = [f"depth_units_per_count={units!r}"]
    if s is not None:
        lines.append(f"s={s!r}")
    return "\n".join(lines) + "\n"


def load_depth(path):
    """Load a 16-bit depth PGM plus its sidecar.

    Returns ``(DepthImage, s_override)``; zero counts are invalid pixels
    and ``s_override`` is ``None`` unless the sidecar fixes it.
    """
    counts = read_pnm(path)
    if counts.ndim != 2:
        raise UnreadableInput(f"{path}: depth image must be greyscale")
    units, s = 1.0, None
    side = sidecar_path(path)
    if side.exists():
        meta = read_sidecar(side)
        try:
            units = float(meta.get("depth_units_per_count", 1.0))
            if "s" in meta:
                s = float(meta["s"])
        except ValueError as exc:
            raise UnreadableInput(f"{side}: {exc}") from exc
    return DepthImage.from_array(counts.astype(np.float64) * units), s


def depth_to_counts(depth: DepthImage, units: float) -> np.ndarray:
    counts = np.where(depth.valid, np.rint(depth.depth / units), 0)
    if counts.max(initial=0) > 65535:
        raise ValueError("depth exceeds the 16-bit range at this unit size")
    return counts.astype(np.int64)


def _make_palette(n=32) -> np.ndarray:
    cols = []
    for i in range(n):
        h = (i * 0.618033988749895) % 1.0
        v = 1.0 if i % 2 == 0 else 0.75
        s = 0.85 if i % 4 < 2 else 0.55
        cols.append([round(255 * c) for c in colorsys.hsv_to_rgb(h, s, v)])
    return np.array(cols, dtype=np.uint8)


PALETTE = _make_palette()


def render_labels(labels) -> np.ndarray:
    """RGB image with label 0 black and labels cycling through PALETTE."""
    lab = np.asarray(labels, dtype=np.int64)
    rgb = np.zeros(lab.shape + (3,), dtype=np.uint8)
    m = lab > 0
    rgb[m] = PALETTE[(lab[m] - 1) % len(PALETTE)]
    return rgb
