from __future__ import annotations

import csv
import json
import os
from typing import Any, Iterable, Sequence

import numpy as np


def ensure_directory(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fp:
        json.dump(_jsonable(payload), fp, indent=2, sort_keys=True)


def write_complex_dump(path: str, header: Sequence[float], values: np.ndarray) -> None:
    """
    Little-endian f64 dump: the header values, then interleaved (Re, Im) pairs in row-major order
    """
    values = np.ascontiguousarray(values, dtype=np.complex128)
    with open(path, "wb") as fp:
        fp.write(np.asarray(header, dtype="<f8").tobytes())
        fp.write(values.view(np.float64).astype("<f8").tobytes())


def read_complex_dump(path: str, header_length: int) -> tuple[np.ndarray, np.ndarray]:
    raw = np.fromfile(path, dtype="<f8")
    header = raw[:header_length]
    body = raw[header_length:]
    return header, body[0::2] + 1j * body[1::2]
