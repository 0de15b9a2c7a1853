"""Bit-specified file formats: binary PPM/PGM images and the FST tensor
container.

FST record layout (little-endian): magic "FST1", one version byte (1), ndim
as u32, each extent as u32, then the payload as row-major IEEE-754 float32.
Several records may be concatenated in one file; a velocity-net checkpoint is
such a sequence (a sizes header followed by per-layer weight/bias tensors).
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .velocity_net import VelocityNet

__all__ = [
    "write_fst",
    "read_fst",
    "write_fst_records",
    "read_fst_records",
    "write_ppm",
    "read_ppm",
    "save_checkpoint",
    "load_checkpoint",
]

_MAGIC = b"FST1"
_VERSION = 1


def _write_fst_stream(stream, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    stream.write(_MAGIC)
    stream.write(bytes([_VERSION]))
    stream.write(np.uint32(arr.ndim).tobytes())
    for extent in arr.shape:
        stream.write(np.uint32(extent).tobytes())
    stream.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_fst_stream(stream, base_offset: int = 0) -> np.ndarray:
    magic = stream.read(4)
    if magic != _MAGIC:
        raise FormatError(f"bad FST magic {magic!r}", offset=base_offset)
    version = stream.read(1)
    if version != bytes([_VERSION]):
        raise FormatError(f"unsupported FST version {version!r}", offset=base_offset + 4)
    raw = stream.read(4)
    if len(raw) != 4:
        raise FormatError("truncated FST ndim field", offset=base_offset + 5)
    ndim = int(np.frombuffer(raw, dtype="<u4")[0])
    shape = []
    for k in range(ndim):
        raw = stream.read(4)
        if len(raw) != 4:
            raise FormatError("truncated FST extent", offset=base_offset + 9 + 4 * k)
        shape.append(int(np.frombuffer(raw, dtype="<u4")[0]))
    count = int(np.prod(shape)) if shape else 1
    payload = stream.read(4 * count)
    if len(payload) != 4 * count:
        raise FormatError(
            "truncated FST payload", offset=base_offset + 9 + 4 * ndim + len(payload)
        )
    return np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float64)


def write_fst(path: str | Path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        _write_fst_stream(f, arr)


def read_fst(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        return _read_fst_stream(f)


def write_fst_records(path: str | Path, arrays) -> None:
    with open(path, "wb") as f:
        for arr in arrays:
            _write_fst_stream(f, arr)


def read_fst_records(path: str | Path) -> list[np.ndarray]:
    records = []
    with open(path, "rb") as f:
        data = f.read()
    stream = io.BytesIO(data)
    while stream.tell() < len(data):
        records.append(_read_fst_stream(stream, base_offset=stream.tell()))
    return records


def _quantize(img: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] then round half away from zero onto 0..255."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_ppm(path: str | Path, img: np.ndarray) -> None:
    """Binary P6 (3 channels) or P5 (1 channel), maxval 255."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ParameterError(f"image must be (1|3, H, W), got {img.shape}")
    channels, h, w = img.shape
    magic = b"P6" if channels == 3 else b"P5"
    data = _quantize(img)
    interleaved = np.moveaxis(data, 0, -1) if channels == 3 else data[0]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(interleaved.tobytes())


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data):
        if data[pos : pos + 1].isspace():
            pos += 1
        elif data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("missing header token", offset=start)
    return data[start:pos], pos


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a binary P5/P6 file into floats in [0, 1], shape (C, H, W)."""
    with open(path, "rb") as f:
        data = f.read()
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {magic!r}", offset=0)
    channels = 3 if magic == b"P6" else 1
    fields = []
    for _ in range(3):
        token, pos = _read_token(data, pos)
        if not token.isdigit():
            raise FormatError(f"non-numeric header field {token!r}", offset=pos - len(token))
        fields.append(int(token))
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}", offset=pos)
    pos += 1  # single whitespace byte after maxval
    expected = w * h * channels
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise FormatError("truncated raster", offset=pos + len(raster))
    pixels = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 3:
        return np.moveaxis(pixels.reshape(h, w, 3), -1, 0)
    return pixels.reshape(1, h, w)


def save_checkpoint(path: str | Path, net: VelocityNet) -> None:
    """Checkpoint = FST record sequence: a header of [layer sizes...,
    time-feature count, time floor], then each layer's weights and biases."""
    header = np.array(
        net.layer_sizes + [net.time_features, net.time_floor], dtype=np.float64
    )
    records = [header]
    for w, b in zip(net.weights, net.biases):
        records.extend([w, b])
    write_fst_records(path, records)


def load_checkpoint(path: str | Path) -> VelocityNet:
    records = read_fst_records(path)
    if not records:
        raise FormatError("empty checkpoint", offset=0)
    header = records[0]
    sizes = [int(v) for v in header[:-2]]
    time_features = int(header[-2])
    time_floor = float(header[-1])
    expected = 1 + 2 * (len(sizes) - 1)
    if len(records) != expected:
        raise FormatError(
            f"checkpoint holds {len(records)} records, expected {expected}", offset=0
        )
    weights = records[1::2]
    biases = records[2::2]
    for k, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (sizes[k], sizes[k + 1]) or b.shape != (sizes[k + 1],):
            raise FormatError(f"layer {k} shape mismatch in checkpoint", offset=0)
    data_dim = sizes[-1]
    return VelocityNet(data_dim, time_features, list(weights), list(biases), time_floor)
