"""Structured-text model persistence shared by every model family.

Layout: `key = value` header lines, then one `[name]` section per parameter
array.  Each section row is the integer indices of an entry followed by its
value (re and im columns for complex arrays).  Floats are written with 17
significant decimal digits after the leading digit, so a round trip is
value-exact for float64.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .exceptions import FormatError

MODEL_FORMAT = "DPDMODEL1"
SCHEMA_VERSION = 1


def _fmt(value: float) -> str:
    return f"{float(value):.17e}"


def write_model(path, kind: str, scalars: dict, arrays: dict,
                index_offsets: dict | None = None) -> None:
    """Write a model file.

    `scalars` become header lines; `arrays` maps section name to ndarray.
    `index_offsets` optionally shifts the written indices per array (used to
    record tap delays rather than raw column positions).
    """
    index_offsets = index_offsets or {}
    lines = [f"format = {MODEL_FORMAT}", f"version = {SCHEMA_VERSION}", f"kind = {kind}"]
    for key, value in scalars.items():
        if isinstance(value, float):
            lines.append(f"{key} = {_fmt(value)}")
        else:
            lines.append(f"{key} = {value}")
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        offsets = index_offsets.get(name, (0,) * arr.ndim)
        lines.append("")
        lines.append(f"[{name}]")
        for idx in np.ndindex(arr.shape):
            shifted = " ".join(str(i + o) for i, o in zip(idx, offsets))
            if np.iscomplexobj(arr):
                z = arr[idx]
                lines.append(f"{shifted} {_fmt(z.real)} {_fmt(z.imag)}")
            else:
                lines.append(f"{shifted} {_fmt(arr[idx])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_model(path):
    """Parse a model file into (kind, header dict, section rows).

    Header values stay strings; section rows are token lists.  Raises
    FormatError on a bad magic line or malformed structure.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise FormatError(f"{path}: not a text model file") from None
    scalars: dict[str, str] = {}
    sections: dict[str, list[list[str]]] = {}
    current = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise FormatError(f"{path}:{line_no}: empty section name")
            sections[current] = []
            continue
        if current is None:
            if "=" not in line:
                raise FormatError(f"{path}:{line_no}: expected 'key = value' before sections")
            key, _, value = line.partition("=")
            scalars[key.strip()] = value.strip()
        else:
            sections[current].append(line.split())
    if scalars.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: not a {MODEL_FORMAT} file")
    kind = scalars.get("kind")
    if not kind:
        raise FormatError(f"{path}: missing model kind")
    return kind, scalars, sections


def header_int(scalars: dict, key: str, path="model") -> int:
    try:
        return int(scalars[key])
    except KeyError:
        raise FormatError(f"{path}: missing header field {key!r}") from None
    except ValueError:
        raise FormatError(f"{path}: header field {key!r} is not an integer") from None


def header_float(scalars: dict, key: str, path="model") -> float:
    try:
        return float(scalars[key])
    except KeyError:
        raise FormatError(f"{path}: missing header field {key!r}") from None
    except ValueError:
        raise FormatError(f"{path}: header field {key!r} is not a number") from None


def _fill(rows, shape, n_values, index_offset, name, path):
    arr = np.zeros(shape + (n_values,), dtype=np.float64)
    seen = np.zeros(shape, dtype=bool)
    n_idx = len(shape)
    offsets = index_offset or (0,) * n_idx
    for row in rows:
        if len(row) != n_idx + n_values:
            raise FormatError(f"{path}: section [{name}] row has {len(row)} fields, expected {n_idx + n_values}")
        try:
            idx = tuple(int(t) - o for t, o in zip(row[:n_idx], offsets))
            values = [float(t) for t in row[n_idx:]]
        except ValueError:
            raise FormatError(f"{path}: section [{name}] has a malformed row") from None
        if any(i < 0 or i >= s for i, s in zip(idx, shape)):
            raise FormatError(f"{path}: section [{name}] index {row[:n_idx]} out of range")
        arr[idx] = values
        seen[idx] = True
    if not seen.all():
        raise FormatError(f"{path}: section [{name}] is missing entries")
    return arr


def section_complex(sections: dict, name: str, shape: tuple, index_offset=None, path="model") -> np.ndarray:
    if name not in sections:
        raise FormatError(f"{path}: missing section [{name}]")
    pairs = _fill(sections[name], shape, 2, index_offset, name, path)
    return pairs[..., 0] + 1j * pairs[..., 1]


def section_real(sections: dict, name: str, shape: tuple, index_offset=None, path="model") -> np.ndarray:
    if name not in sections:
        raise FormatError(f"{path}: missing section [{name}]")
    return _fill(sections[name], shape, 1, index_offset, name, path)[..., 0]
