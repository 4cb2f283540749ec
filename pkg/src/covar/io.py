"""File formats: probability matrices, label vectors, and run reports.

Matrix files come in two flavors:

* CSV with header ``c0,...,c{K-1}``, one sample per line, floats written
  with 17 significant digits (lossless for float64).
* A binary container: magic ``COVR``, version byte 0x01, two u32 fields
  N and K, then N*K float64 values row-major; everything little-endian.

Reports are JSON documents emitted by a dedicated writer that formats
every float with 17 significant digits, so serialize -> parse is
value-lossless and parse -> serialize is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ParseError, ValidationError
from .stats import ProbabilityBatch

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "format_float",
    "load_matrix",
    "save_matrix",
    "load_labels",
    "matrix_digest",
    "serialize_report",
    "parse_report",
]

MAGIC = b"COVR"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBII")


def format_float(x: float) -> str:
    """17-significant-digit decimal form; round-trips any finite float64."""
    s = format(float(x), ".17g")
    if "." not in s and "e" not in s and "n" not in s and "i" not in s:
        s += ".0"
    return s


# ---------------------------------------------------------------------------
# probability matrices


def _load_csv(path: Path) -> ProbabilityBatch:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header:
            raise ParseError(f"{path}: empty file")
        cols = header.split(",")
        expected = [f"c{i}" for i in range(len(cols))]
        if cols != expected:
            raise ParseError(
                f"{path}: header {header!r} does not match c0,...,c{len(cols) - 1}"
            )
        k = len(cols)
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != k:
                raise ParseError(f"{path}:{lineno}: expected {k} fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return ProbabilityBatch.from_array(np.array(rows, dtype=np.float64))


def _load_binary(path: Path) -> ProbabilityBatch:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ParseError(f"{path}: truncated header (offset 0)")
    magic, version, n, k = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * n * k
    if len(blob) != expected:
        raise ParseError(
            f"{path}: file is {len(blob)} bytes, expected {expected} for N={n}, K={k}"
        )
    values = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(n, k)
    return ProbabilityBatch.from_array(values.astype(np.float64))


def load_matrix(path: str | Path, fmt: str | None = None) -> ProbabilityBatch:
    """Read a probability matrix; format inferred from the extension
    (.csv -> csv, else binary) unless given explicitly."""
    p = Path(path)
    if fmt is None:
        fmt = "csv" if p.suffix.lower() == ".csv" else "binary"
    if fmt == "csv":
        return _load_csv(p)
    if fmt == "binary":
        return _load_binary(p)
    raise ParseError(f"unknown matrix format {fmt!r}")


def save_matrix(batch: ProbabilityBatch, path: str | Path, fmt: str | None = None) -> None:
    p = Path(path)
    if fmt is None:
        fmt = "csv" if p.suffix.lower() == ".csv" else "binary"
    vals = batch.values
    if fmt == "csv":
        lines = [",".join(f"c{i}" for i in range(batch.n_classes))]
        for row in vals:
            lines.append(",".join(format_float(x) for x in row))
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif fmt == "binary":
        header = _HEADER.pack(MAGIC, FORMAT_VERSION, batch.n_samples, batch.n_classes)
        p.write_bytes(header + np.ascontiguousarray(vals, dtype="<f8").tobytes())
    else:
        raise ParseError(f"unknown matrix format {fmt!r}")


def matrix_digest(batch: ProbabilityBatch) -> str:
    """sha256 over the canonical binary encoding of the batch."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, batch.n_samples, batch.n_classes)
    h = hashlib.sha256(header)
    h.update(np.ascontiguousarray(batch.values, dtype="<f8").tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# labels


def load_labels(path: str | Path) -> np.ndarray:
    """One integer label per line; an optional leading 'label' header."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if lineno == 1 and text.lower() == "label":
                continue
            try:
                out.append(int(text))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: not an integer label: {text!r}") from exc
    if not out:
        raise ParseError(f"{path}: no labels")
    return np.array(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# reports


def _emit(obj: Any, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, val) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise ValidationError(f"report keys must be strings, got {key!r}")
            out.append(f'{pad}  {json.dumps(key)}: ')
            _emit(val, indent + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        out.append("[\n")
        for i, val in enumerate(seq):
            out.append(pad + "  ")
            _emit(val, indent + 1, out)
            out.append(",\n" if i < len(seq) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if x != x or x in (float("inf"), float("-inf")):
            raise ValidationError(f"non-finite float {x!r} cannot enter a report")
        out.append(format_float(x))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif obj is None:
        out.append("null")
    else:
        raise ValidationError(f"unsupported report value of type {type(obj).__name__}")


def serialize_report(doc: dict) -> str:
    """Deterministic JSON text: insertion-ordered keys, floats at 17 digits."""
    out: list[str] = []
    _emit(doc, 0, out)
    out.append("\n")
    return "".join(out)


def parse_report(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid report: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("report root must be an object")
    return doc
