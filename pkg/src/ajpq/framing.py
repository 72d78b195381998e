"""Header + binary blob container shared by model, dataset and checkpoint files.

Layout::

    AJPQ <kind> <version> <header-bytes>\\n
    <JSON header, header-bytes long>\\n
    <raw little-endian blob>

The header is indented JSON so it can be read with ``head``.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

MAGIC = "AJPQ"
VERSION = 1


class FormatError(ValueError):
    """Raised for malformed or inconsistent artifact files."""


def write_framed(path: str | Path, kind: str, header: dict[str, Any], blob: bytes) -> None:
    text = json.dumps(header, indent=1, sort_keys=True).encode("utf-8")
    first = f"{MAGIC} {kind} {VERSION} {len(text)}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(first)
        fh.write(text)
        fh.write(b"\n")
        fh.write(blob)


def read_framed(path: str | Path, kind: str) -> tuple[dict[str, Any], bytes]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing header line")
    try:
        magic, got_kind, version, size = raw[:nl].decode("ascii").split()
        size = int(size)
        version = int(version)
    except (UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed header line") from exc
    if magic != MAGIC or got_kind != kind:
        raise FormatError(f"{path}: expected {MAGIC} {kind} file, got {magic} {got_kind}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    start = nl + 1
    end = start + size
    if end + 1 > len(raw) or raw[end:end + 1] != b"\n":
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: header is not valid JSON") from exc
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header must be a JSON object")
    return header, raw[end + 1:]
