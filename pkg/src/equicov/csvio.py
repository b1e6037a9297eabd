"""CSV dialect used by every output file.

Comma separated, ``.`` decimal, LF newlines, ``#key=value`` metadata lines
before a single header row.  Floats are written with ``repr`` so output bytes
depend only on the values.
"""

from __future__ import annotations

import io
from pathlib import Path


def fmt(value) -> str:
    if hasattr(value, "item"):  # numpy scalar
        value = value.item()
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def dumps(header, rows, meta=None) -> str:
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"#{key}={fmt(value)}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write(path, header, rows, meta=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(dumps(header, rows, meta))
    return path


def loads(text: str):
    """Parse text produced by :func:`dumps`; returns (meta, header, rows of str)."""
    meta = {}
    header = None
    rows = []
    for line in text.splitlines():
        if not line:
            continue
        if header is None and line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif header is None:
            header = line.split(",")
        else:
            rows.append(line.split(","))
    if header is None:
        raise ValueError("CSV has no header row")
    return meta, header, rows


def read(path):
    return loads(Path(path).read_text(encoding="utf-8"))
