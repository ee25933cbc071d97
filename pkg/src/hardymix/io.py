"""Diff-stable report serialization and field exports."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Optional, Tuple

import numpy as np

SIG_DIGITS = 12


def canonical(obj: Any) -> Any:
    """Plain JSON types with floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return canonical(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{SIG_DIGITS}g}")
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return canonical(obj.to_dict())
    return str(obj)


def dumps(obj: Any) -> str:
    return json.dumps(canonical(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(obj: Any, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def _slice(values: np.ndarray, axis: int, index: Optional[int]) -> np.ndarray:
    if values.ndim == 1:
        return values[None, :]
    if values.ndim == 2:
        return values
    if index is None:
        index = values.shape[axis] // 2
    return np.take(values, index, axis=axis)


def write_pgm(values: np.ndarray, path, axis: int = 2, index: Optional[int] = None) -> Path:
    """Binary greyscale image of a 2D slice, linearly mapped to 0..255."""
    img = np.asarray(_slice(np.asarray(values, dtype=float), axis, index), dtype=float)
    img = np.where(np.isfinite(img), img, 0.0)
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros(img.shape) if hi == lo else (img - lo) / (hi - lo)
    data = np.round(scaled * 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    # magic, width, height, maxval, each followed by exactly one whitespace byte
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end + 1
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(raw[pos: pos + w * h], dtype=np.uint8).reshape(h, w)


def write_field(values: np.ndarray, h: float, origin, path) -> Tuple[Path, Path]:
    """Little-endian float64 array in C order, plus a JSON header with dims, h and origin."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(values, dtype="<f8")
    bin_path = path.with_suffix(".bin")
    bin_path.write_bytes(arr.tobytes())
    header = {"dims": list(arr.shape), "h": h, "origin": [float(o) for o in origin], "dtype": "<f8", "order": "C"}
    hdr_path = write_json(header, path.with_suffix(".json"))
    return bin_path, hdr_path


def read_field(path) -> Tuple[np.ndarray, dict]:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    data = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype=header["dtype"])
    return data.reshape(header["dims"]).copy(), header
