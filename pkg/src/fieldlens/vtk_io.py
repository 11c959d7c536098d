"""File interop: legacy-ASCII structured-grid files, PNG images, CSV tables.

The legacy grammar accepted here is the structured subset: STRUCTURED_POINTS
and RECTILINEAR_GRID datasets with point-associated SCALARS/VECTORS sections.
Only ASCII files with header versions 2.0 through 4.2 are read; BINARY is
rejected explicitly.  Reals are written with 17 significant digits so a
write/parse round trip is value-exact.

PNG pixels map to grid points with y increasing upward: the top image row is
the highest-y row of the dataset, and both directions of the conversion apply
the same flip, so read/write round trips are lossless.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core_data import DataArray, GridDataset, ImageDataset, RectilinearDataset, TableDataset

__all__ = [
    "VtkParseError",
    "ParsedFile",
    "parse_legacy",
    "write_legacy",
    "read_png",
    "write_png",
    "write_csv",
]

_VERSION_RE = re.compile(r"^#\s+vtk\s+DataFile\s+Version\s+(\d+)\.(\d+)\s*$")
_NUMERIC_TYPES = frozenset({"bit", "char", "short", "int", "float", "double"})
_MAX_TITLE = 256
_LABEL_RE = re.compile(r"^[A-Za-z0-9_ -]*$")


class VtkParseError(ValueError):
    """Legacy-file parse failure; the message names the offending line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ParsedFile:
    dataset: GridDataset
    title: str


class _TokenStream:
    """Whitespace/newline-insensitive token reader that tracks line numbers."""

    def __init__(self, lines: list[str], start_line: int):
        self._tokens = []
        for offset, line in enumerate(lines):
            n = start_line + offset
            for tok in line.split():
                self._tokens.append((tok, n))
        self._pos = 0
        self._last_line = start_line + len(lines)

    @property
    def line(self) -> int:
        """Line of the most recently consumed (or next) token."""
        if self._pos < len(self._tokens):
            return self._tokens[self._pos][1]
        return self._last_line

    def at_end(self) -> bool:
        return self._pos >= len(self._tokens)

    def peek(self) -> str | None:
        if self.at_end():
            return None
        return self._tokens[self._pos][0]

    def next(self, what: str) -> str:
        if self.at_end():
            raise VtkParseError(self._last_line, f"unexpected end of file, expected {what}")
        tok, _ = self._tokens[self._pos]
        self._pos += 1
        return tok

    def expect(self, literal: str):
        tok = self.next(f"{literal!r}")
        if tok != literal:
            raise VtkParseError(self.line, f"expected {literal!r}, got {tok!r}")

    def next_int(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise VtkParseError(self.line, f"expected integer {what}, got {tok!r}") from None

    def next_float(self, what: str) -> float:
        tok = self.next(what)
        try:
            return float(tok)
        except ValueError:
            raise VtkParseError(self.line, f"expected number for {what}, got {tok!r}") from None

    def read_values(self, count: int, what: str) -> np.ndarray:
        out = np.empty(count, dtype=np.float64)
        for i in range(count):
            out[i] = self.next_float(f"{what} (value {i + 1} of {count})")
        return out


def _check_type(ts: _TokenStream, type_name: str):
    if type_name not in _NUMERIC_TYPES:
        raise VtkParseError(
            ts.line,
            f"unsupported data type {type_name!r}; accepted: "
            + "/".join(sorted(_NUMERIC_TYPES)),
        )


def parse_legacy(data: bytes | str) -> ParsedFile:
    """Parse a legacy-ASCII structured file into a dataset plus its title."""
    if isinstance(data, bytes):
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError as e:
            raise VtkParseError(1, f"file is not ASCII: {e}") from None
    else:
        text = data
    lines = text.splitlines()
    if len(lines) < 4:
        raise VtkParseError(max(len(lines), 1), "truncated file: header needs 4 lines")

    m = _VERSION_RE.match(lines[0])
    if not m:
        raise VtkParseError(1, f"malformed version header: {lines[0]!r}")
    version = float(f"{m.group(1)}.{m.group(2)}")
    if not 2.0 <= version <= 4.2:
        raise VtkParseError(1, f"unsupported file version {m.group(1)}.{m.group(2)}; accepted 2.0-4.2")

    title = lines[1]
    if len(title) > _MAX_TITLE:
        raise VtkParseError(2, f"title longer than {_MAX_TITLE} characters")

    fmt = lines[2].strip()
    if fmt == "BINARY":
        raise VtkParseError(3, "BINARY files are unsupported; only ASCII is accepted")
    if fmt != "ASCII":
        raise VtkParseError(3, f"expected ASCII or BINARY, got {fmt!r}")

    ts = _TokenStream(lines[3:], start_line=4)
    ts.expect("DATASET")
    kind = ts.next("dataset kind")

    if kind == "STRUCTURED_POINTS":
        dataset = _parse_structured_points(ts)
    elif kind == "RECTILINEAR_GRID":
        dataset = _parse_rectilinear(ts)
    else:
        raise VtkParseError(ts.line, f"unsupported dataset kind {kind!r}")

    arrays = _parse_point_data(ts, dataset.n_points)
    if not ts.at_end():
        raise VtkParseError(ts.line, f"unexpected trailing content: {ts.peek()!r}")
    return ParsedFile(dataset.with_arrays(arrays), title)


def _parse_structured_points(ts: _TokenStream) -> ImageDataset:
    dims = origin = spacing = None
    while ts.peek() != "POINT_DATA":
        line = ts.line
        key = ts.next("DIMENSIONS/ORIGIN/SPACING or POINT_DATA")
        if key == "DIMENSIONS":
            if dims is not None:
                raise VtkParseError(line, "duplicate DIMENSIONS")
            dims = tuple(ts.next_int(f"dimension {ax}") for ax in "xyz")
        elif key == "ORIGIN":
            if origin is not None:
                raise VtkParseError(line, "duplicate ORIGIN")
            origin = tuple(ts.next_float(f"origin {ax}") for ax in "xyz")
        elif key == "SPACING":
            if spacing is not None:
                raise VtkParseError(line, "duplicate SPACING")
            spacing = tuple(ts.next_float(f"spacing {ax}") for ax in "xyz")
        else:
            raise VtkParseError(line, f"unsupported section {key!r}")
    for name, val in (("DIMENSIONS", dims), ("ORIGIN", origin), ("SPACING", spacing)):
        if val is None:
            raise VtkParseError(ts.line, f"missing {name} before POINT_DATA")
    try:
        return ImageDataset(dims, origin, spacing)
    except ValueError as e:
        raise VtkParseError(ts.line, str(e)) from None


def _parse_rectilinear(ts: _TokenStream) -> RectilinearDataset:
    line = ts.line
    ts.expect("DIMENSIONS")
    dims = tuple(ts.next_int(f"dimension {ax}") for ax in "xyz")
    if any(d < 1 for d in dims):
        raise VtkParseError(line, f"dims must be three positive integers, got {dims}")
    coords: dict[str, np.ndarray] = {}
    while ts.peek() != "POINT_DATA":
        # The three coordinate sections may appear in any order.
        if ts.peek() in ("X_COORDINATES", "Y_COORDINATES", "Z_COORDINATES"):
            _read_coord_section(ts, dims, coords)
        else:
            raise VtkParseError(
                ts.line, f"unsupported section {ts.next('coordinate section')!r}"
            )
    for axis in "xyz":
        if axis not in coords:
            raise VtkParseError(ts.line, f"missing {axis.upper()}_COORDINATES")
    try:
        return RectilinearDataset(coords["x"], coords["y"], coords["z"])
    except ValueError as e:
        raise VtkParseError(ts.line, str(e)) from None


def _read_coord_section(ts: _TokenStream, dims: tuple, coords: dict):
    line = ts.line
    key = ts.next("coordinate section")
    axis = key[0].lower()
    idx = "xyz".index(axis)
    if axis in coords:
        raise VtkParseError(line, f"duplicate {key}")
    declared = ts.next_int(f"{key} count")
    if declared != dims[idx]:
        raise VtkParseError(
            line,
            f"{key} declares {declared} values but DIMENSIONS gives {dims[idx]}",
        )
    type_name = ts.next(f"{key} type")
    _check_type(ts, type_name)
    coords[axis] = ts.read_values(declared, key)


def _parse_point_data(ts: _TokenStream, n_points: int) -> tuple[DataArray, ...]:
    line = ts.line
    ts.expect("POINT_DATA")
    declared = ts.next_int("POINT_DATA count")
    if declared != n_points:
        raise VtkParseError(
            line, f"POINT_DATA declares {declared} points but the grid has {n_points}"
        )
    arrays = []
    while not ts.at_end():
        line = ts.line
        section = ts.next("SCALARS or VECTORS")
        if section == "SCALARS":
            name = ts.next("SCALARS name")
            type_name = ts.next("SCALARS type")
            _check_type(ts, type_name)
            if ts.peek() != "LOOKUP_TABLE":
                ncomp = ts.next_int("SCALARS component count")
                if ncomp != 1:
                    raise VtkParseError(ts.line, f"SCALARS component count must be 1, got {ncomp}")
            ts.expect("LOOKUP_TABLE")
            table = ts.next("lookup table name")
            if table != "default":
                raise VtkParseError(ts.line, f"only LOOKUP_TABLE default is supported, got {table!r}")
            values = ts.read_values(n_points, f"SCALARS {name}")
            arrays.append(DataArray(name, 1, values))
        elif section == "VECTORS":
            name = ts.next("VECTORS name")
            type_name = ts.next("VECTORS type")
            _check_type(ts, type_name)
            values = ts.read_values(3 * n_points, f"VECTORS {name}")
            arrays.append(DataArray(name, 3, values))
        else:
            raise VtkParseError(line, f"unsupported section {section!r}")
    return tuple(arrays)


def _fmt(x: float) -> str:
    """17 significant digits: enough for an exact float64 round trip."""
    return f"{x:.17g}"


def _wrap(values: np.ndarray, per_line: int) -> list[str]:
    out = []
    for i in range(0, values.size, per_line):
        out.append(" ".join(_fmt(v) for v in values[i : i + per_line]))
    return out


def write_legacy(d: GridDataset, title: str = "fieldlens dataset") -> bytes:
    """Serialize a dataset to the legacy-ASCII grammar parse_legacy accepts."""
    if len(title) > _MAX_TITLE:
        raise ValueError(f"title longer than {_MAX_TITLE} characters")
    if "\n" in title or "\r" in title:
        raise ValueError("title must be a single line")
    lines = ["# vtk DataFile Version 4.2", title, "ASCII"]
    if isinstance(d, ImageDataset):
        lines.append("DATASET STRUCTURED_POINTS")
        lines.append("DIMENSIONS {} {} {}".format(*d.dims))
        lines.append("ORIGIN {} {} {}".format(*(_fmt(v) for v in d.origin)))
        lines.append("SPACING {} {} {}".format(*(_fmt(v) for v in d.spacing)))
    elif isinstance(d, RectilinearDataset):
        lines.append("DATASET RECTILINEAR_GRID")
        lines.append("DIMENSIONS {} {} {}".format(*d.dims))
        for axis, coords in (("X", d.x_coords), ("Y", d.y_coords), ("Z", d.z_coords)):
            lines.append(f"{axis}_COORDINATES {coords.size} double")
            lines.extend(_wrap(coords, 9))
    else:
        raise TypeError(f"cannot serialize {type(d).__name__}")
    lines.append(f"POINT_DATA {d.n_points}")
    for arr in d.point_arrays:
        if arr.components == 1:
            lines.append(f"SCALARS {arr.name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_wrap(arr.values, 9))
        elif arr.components == 3:
            lines.append(f"VECTORS {arr.name} double")
            lines.extend(_wrap(arr.values, 3))
        else:
            raise ValueError(
                f"array {arr.name!r} has {arr.components} components; the legacy "
                "grammar stores only scalars (1) and vectors (3)"
            )
    return ("\n".join(lines) + "\n").encode("ascii")


def read_png(data: bytes) -> ImageDataset:
    """Decode an 8-bit PNG into an image dataset (k=1/3/4, values 0-255)."""
    try:
        im = Image.open(io.BytesIO(data))
        im.load()
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise ValueError(f"corrupt or unreadable PNG stream: {e}") from None
    if im.mode == "P":
        im = im.convert("RGBA" if "transparency" in im.info else "RGB")
    k = {"L": 1, "RGB": 3, "RGBA": 4}.get(im.mode)
    if k is None:
        raise ValueError(
            f"unsupported image mode {im.mode!r}; only 8-bit greyscale/RGB/RGBA is accepted"
        )
    px = np.asarray(im, dtype=np.float64)
    if px.ndim == 2:
        px = px[:, :, None]
    px = px[::-1]  # top image row becomes the highest-y grid row
    w, h = im.size
    return ImageDataset(
        (w, h, 1), point_arrays=(DataArray("image", k, px.reshape(-1)),)
    )


def write_png(img: ImageDataset, array_name: str | None = None) -> bytes:
    """Encode an image dataset (nz=1, k in {1,3,4}, values 0-255) as PNG."""
    nx, ny, nz = img.dims
    if nz != 1:
        raise ValueError(f"PNG output needs a flat dataset (nz=1), got nz={nz}")
    arr = img.array(array_name)
    if arr.components not in (1, 3, 4):
        raise ValueError(f"PNG needs 1, 3, or 4 components, got {arr.components}")
    values = arr.values
    if values.size and (values.min() < 0.0 or values.max() > 255.0):
        raise ValueError("pixel values must lie in [0, 255]")
    px = values.reshape(ny, nx, arr.components)[::-1]
    px = np.floor(px + 0.5).astype(np.uint8)  # round half up
    if arr.components == 1:
        im = Image.fromarray(px[:, :, 0], mode="L")
    else:
        im = Image.fromarray(px)
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def _fmt_cell(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


def write_csv(t: TableDataset) -> bytes:
    """Comma-separated text: header of column names, then one row per tuple.

    No quoting is applied, so names and labels are restricted to
    [A-Za-z0-9_ -]; the decimal separator is '.', line endings LF.
    """
    for name, col in t.columns:
        if not _LABEL_RE.match(name):
            raise ValueError(f"column name {name!r} contains characters outside [A-Za-z0-9_ -]")
        if not isinstance(col, DataArray):
            for label in col:
                if not _LABEL_RE.match(label):
                    raise ValueError(
                        f"label {label!r} contains characters outside [A-Za-z0-9_ -]"
                    )
    lines = [",".join(name for name, _ in t.columns)]
    for r in range(t.n_rows):
        cells = []
        for _, col in t.columns:
            if isinstance(col, DataArray):
                cells.append(_fmt_cell(float(col.values[r])))
            else:
                cells.append(col[r])
        lines.append(",".join(cells))
    return ("\n".join(lines) + "\n").encode("ascii")
