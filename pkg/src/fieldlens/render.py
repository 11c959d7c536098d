"""Scalar mapping and rasterization of flat grids to PNG images.

A transfer function turns normalized scalar values into colors; the
renderer samples a grid's points onto an output raster with
nearest-point lookups in coordinate space, so non-uniform rectilinear
spacing lands where it should.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_data import DataArray, ImageDataset, RectilinearDataset
from .vtk_io import write_png

__all__ = [
    "TransferFunction",
    "TRANSFER_FUNCTIONS",
    "greyscale",
    "coolwarm",
    "color_map",
    "render_grid",
]


@dataclass(frozen=True)
class TransferFunction:
    """Piecewise-linear map from positions in [0,1] to RGB colors.

    Control points are (position, (r, g, b)) pairs with strictly
    increasing positions; the first must sit at 0 and the last at 1 so
    every normalized value has a color.
    """

    name: str
    points: tuple

    def __post_init__(self):
        pts = tuple((float(p), tuple(float(c) for c in rgb)) for p, rgb in self.points)
        if len(pts) < 2:
            raise ValueError("transfer function needs at least 2 control points")
        positions = [p for p, _ in pts]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError(f"control point positions must increase, got {positions}")
        if positions[0] != 0.0 or positions[-1] != 1.0:
            raise ValueError(
                f"control points must span [0, 1], got [{positions[0]}, {positions[-1]}]"
            )
        for _, rgb in pts:
            if len(rgb) != 3:
                raise ValueError(f"colors must be RGB triples, got {rgb}")
            if any(c < 0 or c > 255 for c in rgb):
                raise ValueError(f"color channels must lie in [0, 255], got {rgb}")
        object.__setattr__(self, "points", pts)

    def sample(self, t: np.ndarray) -> np.ndarray:
        """Colors (n, 3) for normalized positions t (already in [0, 1])."""
        t = np.asarray(t, dtype=np.float64)
        positions = np.array([p for p, _ in self.points])
        channels = np.array([rgb for _, rgb in self.points])
        out = np.empty(t.shape + (3,), dtype=np.float64)
        for c in range(3):
            out[..., c] = np.interp(t, positions, channels[:, c])
        return out


def greyscale() -> TransferFunction:
    return TransferFunction("greyscale", ((0.0, (0, 0, 0)), (1.0, (255, 255, 255))))


def coolwarm() -> TransferFunction:
    return TransferFunction(
        "coolwarm",
        ((0.0, (59, 76, 192)), (0.5, (221, 221, 221)), (1.0, (180, 4, 38))),
    )


TRANSFER_FUNCTIONS = {tf.name: tf for tf in (greyscale(), coolwarm())}


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def color_map(values: DataArray, tf: TransferFunction, value_range=None) -> DataArray:
    """Map a scalar array to integer RGB colors through a transfer function.

    Values are clamped to the range (default: the data's own min/max),
    normalized to [0, 1], linearly interpolated between control points,
    and rounded half-up to whole channels.  A constant field under the
    default range maps everything to the low end of the function.
    """
    if values.components != 1:
        raise ValueError(f"color mapping takes scalar arrays, got k={values.components}")
    v = values.tuples()[:, 0]
    if value_range is None:
        lo, hi = (float(v.min()), float(v.max())) if v.size else (0.0, 1.0)
        if lo == hi:
            hi = lo + 1.0
    else:
        lo, hi = float(value_range[0]), float(value_range[1])
        if not (lo < hi) or not np.isfinite(lo) or not np.isfinite(hi):
            raise ValueError(f"invalid range ({lo}, {hi}): need finite lo < hi")
    t = np.clip((v - lo) / (hi - lo), 0.0, 1.0)
    return DataArray("color", 3, _round_half_up(tf.sample(t)))


def _magnitude(values: np.ndarray) -> np.ndarray:
    return np.sqrt((values**2).sum(axis=1))


def _axis_coords(d, nx: int, ny: int):
    if isinstance(d, RectilinearDataset):
        return np.asarray(d.x_coords, dtype=np.float64), np.asarray(d.y_coords, dtype=np.float64)
    ox, oy = d.origin[0], d.origin[1]
    sx, sy = d.spacing[0], d.spacing[1]
    return ox + sx * np.arange(nx), oy + sy * np.arange(ny)


def _nearest_indices(coords: np.ndarray, n_out: int) -> np.ndarray:
    """Nearest grid point for each output pixel center, in coordinate space."""
    if len(coords) == 1:
        return np.zeros(n_out, dtype=np.intp)
    lo, hi = coords[0], coords[-1]
    centers = lo + (np.arange(n_out) + 0.5) / n_out * (hi - lo)
    mids = (coords[:-1] + coords[1:]) / 2.0
    return np.searchsorted(mids, centers, side="left")


def render_grid(d, array_name, tf, out_size=None, direct_color=False, value_range=None) -> bytes:
    """Rasterize one array of a flat grid to PNG bytes.

    Scalars are color-mapped through tf; 3-component arrays render their
    Euclidean magnitude unless direct_color marks them as ready-made
    RGB (segmentation colors).  out_size is (width, height); omitted, the
    grid's own dimensions are used.  value_range overrides the default
    data-extent mapping range.  Output is deterministic.
    """
    if isinstance(d, RectilinearDataset):
        nx, ny, nz = len(d.x_coords), len(d.y_coords), len(d.z_coords)
    elif isinstance(d, ImageDataset):
        nx, ny, nz = d.dims
    else:
        raise ValueError(f"cannot render {type(d).__name__}")
    if nz != 1:
        raise ValueError(f"rendering needs a flat dataset (nz=1), got nz={nz}")
    arr = d.array(array_name)

    if direct_color:
        if arr.components != 3:
            raise ValueError(
                f"direct color rendering needs a 3-component array, got k={arr.components}"
            )
        colors = arr.tuples()
    elif arr.components == 1:
        colors = color_map(arr, tf, value_range).tuples()
    elif arr.components == 3:
        mag = DataArray("magnitude", 1, _magnitude(arr.tuples()))
        colors = color_map(mag, tf, value_range).tuples()
    else:
        raise ValueError(f"cannot render a {arr.components}-component array")

    if out_size is None:
        w, h = nx, ny
    else:
        w, h = int(out_size[0]), int(out_size[1])
        if w < 1 or h < 1:
            raise ValueError(f"output size must be positive, got {out_size}")

    grid = colors.reshape(ny, nx, 3)
    xs, ys = _axis_coords(d, nx, ny)
    ix = _nearest_indices(xs, w)
    iy = _nearest_indices(ys, h)
    raster = grid[np.ix_(iy, ix)]

    out = ImageDataset(
        (w, h, 1), point_arrays=(DataArray("color", 3, raster.reshape(-1, 3)),)
    )
    return write_png(out)
