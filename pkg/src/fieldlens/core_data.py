"""Grid data models, data arrays, and typed conversions to flat tensors.

The engine's in-memory data model mirrors the structured subset of the
common visualization toolkit types: image data (uniform grids),
rectilinear grids (per-axis coordinate arrays), tables, plus a flat
n-dimensional tensor used as the exchange format with the neural-network
engine.  All values are 64-bit reals; all containers are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "ConversionError",
    "DataArray",
    "ImageDataset",
    "RectilinearDataset",
    "TableDataset",
    "TensorND",
    "GridDataset",
    "array_to_tensor",
    "tensor_to_array",
    "image_to_rectilinear",
    "rectilinear_to_image",
    "greyscale_to_rgb",
]


class ConversionError(ValueError):
    """A dataset/tensor conversion violated its contract."""


def _frozen_f64(values, what: str) -> np.ndarray:
    # Always copy: callers keep mutable references to their own buffers.
    arr = np.array(values, dtype=np.float64, order="C", copy=True)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DataArray:
    """Named point attribute: n tuples of k components, stored row-major.

    Scalars have ``components == 1``; vectors use ``components == 3``.
    """

    name: str
    components: int
    values: np.ndarray

    def __post_init__(self):
        if self.components < 1:
            raise ValueError(f"components must be >= 1, got {self.components}")
        values = _frozen_f64(np.asarray(self.values).reshape(-1), f"array {self.name!r}")
        if values.size % self.components != 0:
            raise ValueError(
                f"array {self.name!r}: {values.size} values not divisible by "
                f"{self.components} components"
            )
        object.__setattr__(self, "values", values)

    @property
    def n_tuples(self) -> int:
        return self.values.size // self.components

    def tuples(self) -> np.ndarray:
        """Values as an (n, k) read-only view."""
        return self.values.reshape(self.n_tuples, self.components)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DataArray)
            and self.name == other.name
            and self.components == other.components
            and np.array_equal(self.values, other.values)
        )


def _check_point_arrays(arrays: Sequence[DataArray], n_points: int, kind: str):
    for a in arrays:
        if a.n_tuples != n_points:
            raise ValueError(
                f"{kind}: point array {a.name!r} has {a.n_tuples} tuples, "
                f"expected {n_points}"
            )


def _find_array(arrays: Sequence[DataArray], name: str | None) -> DataArray:
    if not arrays:
        raise KeyError("dataset has no point arrays")
    if name is None:
        return arrays[0]
    for a in arrays:
        if a.name == name:
            return a
    raise KeyError(f"no point array named {name!r}")


@dataclass(frozen=True)
class ImageDataset:
    """Uniform grid: dims/origin/spacing plus point-associated arrays."""

    dims: tuple[int, int, int]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    point_arrays: tuple[DataArray, ...] = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        spacing = tuple(float(s) for s in self.spacing)
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be strictly positive, got {self.spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "point_arrays", tuple(self.point_arrays))
        _check_point_arrays(self.point_arrays, self.n_points, "image data")

    @property
    def n_points(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def array(self, name: str | None = None) -> DataArray:
        return _find_array(self.point_arrays, name)

    def with_arrays(self, arrays: Sequence[DataArray]) -> "ImageDataset":
        """Same geometry, different point arrays."""
        return ImageDataset(self.dims, self.origin, self.spacing, tuple(arrays))


@dataclass(frozen=True)
class RectilinearDataset:
    """Grid with explicit, strictly increasing per-axis coordinates."""

    x_coords: np.ndarray
    y_coords: np.ndarray
    z_coords: np.ndarray
    point_arrays: tuple[DataArray, ...] = ()

    def __post_init__(self):
        for attr in ("x_coords", "y_coords", "z_coords"):
            coords = _frozen_f64(getattr(self, attr), attr)
            if coords.ndim != 1 or coords.size < 1:
                raise ValueError(f"{attr} must be a non-empty 1-D sequence")
            if np.any(np.diff(coords) <= 0):
                raise ValueError(f"{attr} must be strictly increasing")
            object.__setattr__(self, attr, coords)
        object.__setattr__(self, "point_arrays", tuple(self.point_arrays))
        _check_point_arrays(self.point_arrays, self.n_points, "rectilinear grid")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.x_coords.size, self.y_coords.size, self.z_coords.size)

    @property
    def n_points(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def array(self, name: str | None = None) -> DataArray:
        return _find_array(self.point_arrays, name)

    def with_arrays(self, arrays: Sequence[DataArray]) -> "RectilinearDataset":
        return RectilinearDataset(self.x_coords, self.y_coords, self.z_coords, tuple(arrays))


GridDataset = Union[ImageDataset, RectilinearDataset]

#: A table column: numeric (scalar DataArray) or text (tuple of labels).
TableColumn = Union[DataArray, tuple]


@dataclass(frozen=True)
class TableDataset:
    """Ordered named columns of equal length; numeric or text."""

    columns: tuple[tuple[str, TableColumn], ...]

    def __post_init__(self):
        cols = []
        n_rows = None
        for name, values in self.columns:
            if isinstance(values, DataArray):
                if values.components != 1:
                    raise ValueError(f"table column {name!r} must have 1 component")
                count = values.n_tuples
            else:
                values = tuple(str(v) for v in values)
                count = len(values)
            if n_rows is None:
                n_rows = count
            elif count != n_rows:
                raise ValueError(
                    f"table column {name!r} has {count} entries, expected {n_rows}"
                )
            cols.append((str(name), values))
        object.__setattr__(self, "columns", tuple(cols))

    @property
    def n_rows(self) -> int:
        if not self.columns:
            return 0
        values = self.columns[0][1]
        return values.n_tuples if isinstance(values, DataArray) else len(values)

    def column(self, name: str) -> TableColumn:
        for cname, values in self.columns:
            if cname == name:
                return values
        raise KeyError(f"no column named {name!r}")


@dataclass(frozen=True)
class TensorND:
    """Flat row-major 64-bit real tensor with an explicit shape."""

    shape: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if any(s < 1 for s in shape):
            raise ValueError(f"shape entries must be >= 1, got {self.shape}")
        values = _frozen_f64(np.asarray(self.values).reshape(-1), "tensor")
        expected = int(np.prod(shape)) if shape else 1
        if values.size != expected:
            raise ValueError(
                f"tensor has {values.size} values, shape {shape} needs {expected}"
            )
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_numpy(cls, arr: np.ndarray) -> "TensorND":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape, arr.reshape(-1))

    def as_array(self) -> np.ndarray:
        """Shaped read-only view of the values."""
        return self.values.reshape(self.shape)


def array_to_tensor(array: DataArray, target_shape: Sequence[int]) -> TensorND:
    """Reinterpret a data array as a tensor, preserving tuple-major order.

    Raises ConversionError when the element counts disagree; this check
    runs before any model sees the data.
    """
    shape = tuple(int(s) for s in target_shape)
    expected = int(np.prod(shape)) if shape else 1
    if array.values.size != expected:
        raise ConversionError(
            f"cannot reshape array {array.name!r}: element count "
            f"{array.values.size} ≠ {expected}"
        )
    return TensorND(shape, array.values)


def tensor_to_array(t: TensorND, name: str, components: int) -> DataArray:
    """Inverse of :func:`array_to_tensor` for matching shapes."""
    if components < 1:
        raise ConversionError(f"components must be >= 1, got {components}")
    if t.values.size % components != 0:
        raise ConversionError(
            f"tensor with {t.values.size} elements is not divisible into "
            f"{components}-component tuples"
        )
    return DataArray(name, components, t.values)


def image_to_rectilinear(img: ImageDataset) -> RectilinearDataset:
    """Expand implicit uniform spacing into explicit coordinate arrays."""
    coords = []
    for axis in range(3):
        n = img.dims[axis]
        o = img.origin[axis]
        d = img.spacing[axis]
        coords.append(o + d * np.arange(n, dtype=np.float64))
    return RectilinearDataset(coords[0], coords[1], coords[2], img.point_arrays)


def rectilinear_to_image(rect: RectilinearDataset, rel_tol: float = 1e-9) -> ImageDataset:
    """Collapse a uniformly spaced rectilinear grid back to image data.

    Image data cannot represent varying spacing, so each axis must be
    uniform within ``rel_tol`` (relative to the axis spacing); otherwise a
    ConversionError is raised.
    """
    origin = []
    spacing = []
    for name, coords in (
        ("x", rect.x_coords),
        ("y", rect.y_coords),
        ("z", rect.z_coords),
    ):
        origin.append(float(coords[0]))
        if coords.size == 1:
            spacing.append(1.0)
            continue
        deltas = np.diff(coords)
        d = float(deltas[0])
        if np.max(np.abs(deltas - d)) > rel_tol * abs(d):
            raise ConversionError(
                f"{name}-coordinates are not uniformly spaced; cannot convert "
                "to image data"
            )
        spacing.append(d)
    return ImageDataset(rect.dims, tuple(origin), tuple(spacing), rect.point_arrays)


def greyscale_to_rgb(array: DataArray) -> DataArray:
    """Replicate a single intensity channel to all three color channels."""
    if array.components != 1:
        raise ConversionError(
            f"greyscale_to_rgb expects a 1-component array, got k={array.components}"
        )
    rgb = np.repeat(array.values, 3)
    return DataArray(array.name, 3, rgb)
