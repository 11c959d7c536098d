"""Lazy visualization pipeline with model-driven filters.

A pipeline is an acyclic graph of source nodes (holding datasets) and
filter nodes (running algorithms).  Each node carries modification and
execution counters; update() re-runs a node's algorithm only when the
node itself or something upstream changed since the last execution,
otherwise the cached output is returned.

The central filter feeds grid or image data through a model file:
extract the configured point array, preprocess it to the model's input
tensor, run the forward pass, and map the output back onto the data,
either as per-point class/color arrays or as a classification table.
"""

from __future__ import annotations

import colorsys
import os
from dataclasses import dataclass, field

import numpy as np

from .core_data import (
    DataArray,
    ImageDataset,
    RectilinearDataset,
    TableDataset,
    TensorND,
)
from .nn_engine import InputSpec, ModelSpec, OutputSpec, forward, load_model, softmax

__all__ = [
    "PipelineError",
    "ParamSpec",
    "FilterTypeSpec",
    "FILTER_TYPES",
    "PipelineGraph",
    "preprocess_image",
    "data_driven_transform",
    "map_segmentation_output",
    "map_classification_output",
    "threshold_ground_truth",
    "agreement",
    "default_palette",
    "load_model_cached",
]


class PipelineError(ValueError):
    """Graph construction or execution failure."""


# ---------------------------------------------------------------------------
# Filter algorithms


def default_palette(n: int) -> tuple:
    """Class 0 is black; remaining classes get evenly spaced hues."""
    colors = [(0, 0, 0)]
    for i in range(1, n):
        h = (i - 1) / max(n - 1, 1)
        r, g, b = colorsys.hsv_to_rgb(h, 1.0, 1.0)
        colors.append((round(255 * r), round(255 * g), round(255 * b)))
    return tuple(colors[:n])


def _bilinear_resize(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (h, w, c) data with bilinear sampling at half-pixel centers."""
    h, w = data.shape[:2]
    if (h, w) == (out_h, out_w):
        return data.copy()

    def axis_coords(n_src, n_dst):
        x = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
        x = np.clip(x, 0.0, n_src - 1.0)
        lo = np.floor(x).astype(int)
        lo = np.minimum(lo, n_src - 2) if n_src > 1 else np.zeros_like(lo)
        frac = x - lo
        return lo, frac

    ri, rf = axis_coords(h, out_h)
    ci, cf = axis_coords(w, out_w)
    rows = data[ri] * (1.0 - rf)[:, None, None] + data[ri + 1 if h > 1 else ri] * rf[:, None, None]
    out = rows[:, ci] * (1.0 - cf)[None, :, None] + rows[:, ci + 1 if w > 1 else ci] * cf[None, :, None]
    return out


def _nearest_resize_indices(n_src: int, n_dst: int) -> np.ndarray:
    x = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    return np.clip(np.round(x).astype(int), 0, n_src - 1)


def preprocess_image(img: ImageDataset, spec: InputSpec) -> TensorND:
    """Image points to a model-ready channels-by-height-by-width tensor.

    Steps: replicate greyscale to RGB when the spec asks for it, resize
    to the spec's spatial shape, scale by value_scale, then per-channel
    (x - mean) / std.  Tensor rows run top-first (visual order), while
    grid rows run bottom-first, so the row order is flipped here and
    flipped back when mapping per-point outputs onto the grid.
    """
    if len(spec.shape) != 3:
        raise PipelineError(f"input spec shape {list(spec.shape)} is not an image shape")
    nx, ny, nz = img.dims
    if nz != 1:
        raise PipelineError(f"expected a flat image, got nz={nz}")
    arr = img.array()
    k = arr.components
    if k not in (1, 3):
        raise PipelineError(f"unsupported channel count {k}")
    data = arr.values.reshape(ny, nx, k)
    if k == 1 and spec.channel_policy == "grey_to_rgb":
        data = np.repeat(data, 3, axis=2)
        k = 3
    c, out_h, out_w = spec.shape
    if k != c:
        raise PipelineError(f"model expects {c} channels, image has {k}")
    data = data[::-1]  # grid rows are bottom-first; tensors run top-first
    data = _bilinear_resize(data, out_h, out_w)
    data = data * spec.value_scale
    mean = np.asarray(spec.normalize_mean, dtype=np.float64)
    std = np.asarray(spec.normalize_std, dtype=np.float64)
    data = (data - mean) / std
    return TensorND((c, out_h, out_w), np.ascontiguousarray(data.transpose(2, 0, 1)).reshape(-1))


def map_segmentation_output(logits: TensorND, output_spec: OutputSpec):
    """Per-row argmax classes plus their palette colors.

    Ties resolve to the lowest class index.  Returns (class, color)
    arrays of one tuple per logit row.
    """
    n, c = logits.shape
    if c != len(output_spec.labels):
        raise PipelineError(
            f"model emits {c} classes but lists {len(output_spec.labels)} labels"
        )
    rows = logits.as_array()
    classes = np.argmax(rows, axis=1)
    colors = output_spec.colors or default_palette(c)
    rgb = np.asarray(colors, dtype=np.float64)[classes]
    return (
        DataArray("class", 1, classes.astype(np.float64)),
        DataArray("color", 3, rgb.reshape(-1)),
    )


def map_classification_output(
    logits: TensorND, output_spec: OutputSpec, top_k: int = 10
) -> TableDataset:
    """Ranked confidence table: softmax percent, descending, top_k rows."""
    if top_k < 1:
        raise PipelineError(f"top_k must be >= 1, got {top_k}")
    (c,) = logits.shape
    if c != len(output_spec.labels):
        raise PipelineError(
            f"model emits {c} classes but lists {len(output_spec.labels)} labels"
        )
    conf = softmax(logits.as_array()) * 100.0
    # Stable sort on negated confidence: ties keep ascending class index.
    order = np.argsort(-conf, kind="stable")[: min(top_k, c)]
    ranks = np.arange(1, order.size + 1, dtype=np.float64)
    labels = tuple(output_spec.labels[i] for i in order)
    return TableDataset(
        (
            ("rank", DataArray("rank", 1, ranks)),
            ("label", labels),
            ("confidence_percent", DataArray("confidence_percent", 1, conf[order])),
        )
    )


def threshold_ground_truth(grid, array_name: str, threshold: float):
    """Label each point 1 where the field strictly exceeds the threshold.

    Vector arrays compare their Euclidean magnitude; scalar arrays
    compare the raw field value.  Adds a "class" scalar array.
    """
    arr = grid.array(array_name)
    tup = arr.tuples()
    if arr.components == 1:
        value = tup[:, 0]
    else:
        value = np.sqrt((tup**2).sum(axis=1))
    classes = (value > threshold).astype(np.float64)
    return _with_replaced(grid, (DataArray("class", 1, classes),))


def agreement(a, b, array_name: str) -> float:
    """Fraction of points whose named tuples match exactly in a and b."""
    arr_a = a.array(array_name)
    arr_b = b.array(array_name)
    if arr_a.n_tuples != arr_b.n_tuples or arr_a.components != arr_b.components:
        raise PipelineError(
            f"array {array_name!r} shapes differ: "
            f"{arr_a.n_tuples}x{arr_a.components} vs {arr_b.n_tuples}x{arr_b.components}"
        )
    same = np.all(arr_a.tuples() == arr_b.tuples(), axis=1)
    return float(same.mean())


def _with_replaced(ds, new_arrays):
    """Dataset with new point arrays appended, replacing same-named ones."""
    taken = {a.name for a in new_arrays}
    kept = tuple(a for a in ds.point_arrays if a.name not in taken)
    return ds.with_arrays(kept + tuple(new_arrays))


_MODEL_CACHE: dict = {}


def load_model_cached(path: str) -> ModelSpec:
    """Load a model file, sharing immutable specs across calls."""
    full = os.path.abspath(path)
    try:
        st = os.stat(full)
    except FileNotFoundError:
        raise PipelineError(f"model file not found: {path}") from None
    key = (full, st.st_mtime_ns, st.st_size)
    if key not in _MODEL_CACHE:
        with open(full, "rb") as f:
            _MODEL_CACHE[key] = load_model(f.read())
    return _MODEL_CACHE[key]


def _scale_normalize(x: np.ndarray, spec: InputSpec) -> np.ndarray:
    """value_scale then (x - mean)/std broadcast over the last axis."""
    mean = np.asarray(spec.normalize_mean, dtype=np.float64)
    std = np.asarray(spec.normalize_std, dtype=np.float64)
    return (x * spec.value_scale - mean) / std


def data_driven_transform(data, model_path: str, array_name: str | None = None, top_k: int = 10):
    """Run a stored model over a dataset and attach its interpretation.

    Dispatch follows the model's specs: image-shaped inputs are
    preprocessed from the dataset's image array; flat inputs are pulled
    from the named point array (default: the first one).  Models with
    per-point output add "class"/"color" arrays on the input geometry;
    whole-input models produce a ranked classification table.
    """
    if not isinstance(data, (ImageDataset, RectilinearDataset)):
        raise PipelineError(f"unsupported input type {type(data).__name__}")
    model = load_model_cached(model_path)
    ispec = model.input_spec
    ospec = model.output_spec

    if len(ispec.shape) == 3:
        if not isinstance(data, ImageDataset):
            raise PipelineError("model expects image input")
        x = preprocess_image(data, ispec)
        logits = forward(model, x)
        if ospec.kind == "per_point_classes":
            c_cls = model.n_classes
            ch, h, w = logits.shape
            grid_classes = _class_map_to_grid(
                logits.as_array().reshape(ch, h, w), data.dims
            )
            colors = ospec.colors or default_palette(c_cls)
            rgb = np.asarray(colors, dtype=np.float64)[grid_classes]
            return _with_replaced(
                data,
                (
                    DataArray("class", 1, grid_classes.astype(np.float64)),
                    DataArray("color", 3, rgb.reshape(-1)),
                ),
            )
        return map_classification_output(logits, ospec, top_k)

    # Flat input shape [d]: feed point tuples (per point) or the whole array.
    (d,) = ispec.shape
    arr = data.array(array_name)
    if ospec.kind == "per_point_classes":
        if arr.components != d:
            raise PipelineError(
                f"model expects {d} components per point, array "
                f"{arr.name!r} has {arr.components}"
            )
        x = _scale_normalize(arr.tuples(), ispec)
        logits = forward(model, TensorND.from_numpy(x))
        cls_arr, col_arr = map_segmentation_output(logits, ospec)
        return _with_replaced(data, (cls_arr, col_arr))
    if arr.components != 1 or arr.n_tuples != d:
        raise PipelineError(
            f"model expects a flat array of {d} scalars, array {arr.name!r} "
            f"has {arr.n_tuples} tuples of {arr.components}"
        )
    x = _scale_normalize(arr.values, ispec)
    logits = forward(model, TensorND.from_numpy(x))
    return map_classification_output(logits, ospec, top_k)


def _class_map_to_grid(logit_planes: np.ndarray, dims) -> np.ndarray:
    """Argmax a (c, h, w) logit stack onto grid point order.

    The class map is nearest-neighbor resampled to the grid size and the
    row order flipped back from visual (top-first) to grid (bottom-first).
    """
    nx, ny, _ = dims
    class_map = np.argmax(logit_planes, axis=0)
    h, w = class_map.shape
    class_map = class_map[_nearest_resize_indices(h, ny)][:, _nearest_resize_indices(w, nx)]
    return class_map[::-1].reshape(-1)


# ---------------------------------------------------------------------------
# Filter registry


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str  # "string" | "real" | "int"
    default: object = None
    required: bool = False

    def check(self, value):
        ok = {
            "string": lambda v: isinstance(v, str),
            "real": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
            "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
        }[self.type]
        if not ok(value):
            raise PipelineError(
                f"parameter {self.name!r} expects {self.type}, got {value!r}"
            )


@dataclass(frozen=True)
class FilterTypeSpec:
    name: str
    params: tuple
    input_types: tuple
    output_types: tuple
    run: object = field(compare=False)

    def param(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise PipelineError(f"filter {self.name!r} has no parameter {name!r}")


def _run_threshold(data, params):
    return threshold_ground_truth(data, params["array"], params["threshold"])


def _run_transform(data, params):
    return data_driven_transform(
        data, params["model_path"], params.get("array"), params.get("top_k", 10)
    )


FILTER_TYPES = {
    "threshold_ground_truth": FilterTypeSpec(
        name="threshold_ground_truth",
        params=(
            ParamSpec("array", "string", required=True),
            ParamSpec("threshold", "real", required=True),
        ),
        input_types=(ImageDataset, RectilinearDataset),
        output_types=(ImageDataset, RectilinearDataset),
        run=_run_threshold,
    ),
    "data_driven_transform": FilterTypeSpec(
        name="data_driven_transform",
        params=(
            ParamSpec("model_path", "string", required=True),
            ParamSpec("array", "string", required=False),
            ParamSpec("top_k", "int", default=10, required=False),
        ),
        input_types=(ImageDataset, RectilinearDataset),
        output_types=(ImageDataset, RectilinearDataset, TableDataset),
        run=_run_transform,
    ),
}


# ---------------------------------------------------------------------------
# Graph and executive


@dataclass
class PipelineNode:
    node_id: str
    kind: str  # "source" | "filter"
    filter_type: str | None = None
    params: dict = field(default_factory=dict)
    dataset: object = None
    modified_time: int = 0
    executed_time: int = 0
    execution_count: int = 0
    cached: object = None


class PipelineGraph:
    """Single-writer node graph with lazy, counter-driven execution."""

    def __init__(self):
        self.nodes: dict[str, PipelineNode] = {}
        self._upstream: dict[str, str] = {}  # downstream id -> upstream id
        self._clock = 0

    # -- construction

    def _tick(self, node: PipelineNode):
        self._clock += 1
        node.modified_time = self._clock

    def _require(self, node_id: str) -> PipelineNode:
        if node_id not in self.nodes:
            raise PipelineError(f"no node {node_id!r}")
        return self.nodes[node_id]

    def add_source(self, node_id: str, dataset) -> PipelineNode:
        if node_id in self.nodes:
            raise PipelineError(f"duplicate node id {node_id!r}")
        node = PipelineNode(node_id, "source", dataset=dataset)
        self.nodes[node_id] = node
        self._tick(node)
        return node

    def add_filter(self, node_id: str, filter_type: str, params: dict | None = None) -> PipelineNode:
        if node_id in self.nodes:
            raise PipelineError(f"duplicate node id {node_id!r}")
        if filter_type not in FILTER_TYPES:
            raise PipelineError(f"unknown filter type {filter_type!r}")
        spec = FILTER_TYPES[filter_type]
        merged = {p.name: p.default for p in spec.params if p.default is not None}
        for name, value in (params or {}).items():
            spec.param(name).check(value)
            merged[name] = value
        node = PipelineNode(node_id, "filter", filter_type=filter_type, params=merged)
        self.nodes[node_id] = node
        self._tick(node)
        return node

    def connect(self, upstream_id: str, downstream_id: str):
        up = self._require(upstream_id)
        down = self._require(downstream_id)
        if down.kind != "filter":
            raise PipelineError(f"node {downstream_id!r} accepts no input")
        if downstream_id in self._upstream:
            raise PipelineError(f"input port of {downstream_id!r} is already connected")
        if upstream_id == downstream_id:
            raise PipelineError("a node cannot feed itself")
        # Climbing the (single-input) chain from the upstream node must
        # not reach the downstream node, or the edge closes a cycle.
        seen = upstream_id
        while seen in self._upstream:
            seen = self._upstream[seen]
            if seen == downstream_id:
                raise PipelineError(
                    f"edge {upstream_id!r} -> {downstream_id!r} closes a cycle"
                )
        if not self._compatible(up, down):
            raise PipelineError(
                f"output of {upstream_id!r} is not compatible with {downstream_id!r}"
            )
        self._upstream[downstream_id] = upstream_id
        self._tick(down)

    def disconnect(self, downstream_id: str):
        down = self._require(downstream_id)
        if downstream_id in self._upstream:
            del self._upstream[downstream_id]
            self._tick(down)

    def _compatible(self, up: PipelineNode, down: PipelineNode) -> bool:
        accepted = FILTER_TYPES[down.filter_type].input_types
        if up.kind == "source":
            return up.dataset is None or isinstance(up.dataset, accepted)
        produced = FILTER_TYPES[up.filter_type].output_types
        return any(issubclass(t, accepted) for t in produced)

    # -- mutation

    def set_param(self, node_id: str, name: str, value):
        node = self._require(node_id)
        if node.kind != "filter":
            raise PipelineError(f"node {node_id!r} has no parameters")
        FILTER_TYPES[node.filter_type].param(name).check(value)
        node.params[name] = value
        self._tick(node)

    def set_source_data(self, node_id: str, dataset):
        node = self._require(node_id)
        if node.kind != "source":
            raise PipelineError(f"node {node_id!r} is not a source")
        node.dataset = dataset
        self._tick(node)

    # -- execution

    def upstream_of(self, node_id: str) -> str | None:
        return self._upstream.get(node_id)

    def _pipeline_mtime(self, node_id: str) -> int:
        m = self.nodes[node_id].modified_time
        up = self._upstream.get(node_id)
        if up is not None:
            m = max(m, self._pipeline_mtime(up))
        return m

    def update(self, node_id: str):
        """Output of the node, re-executing only what is out of date."""
        node = self._require(node_id)
        if node.kind == "source":
            if node.dataset is None:
                raise PipelineError(f"node {node_id!r}: source has no data")
            input_data = None
        else:
            up = self._upstream.get(node_id)
            if up is None:
                raise PipelineError(f"node {node_id!r}: input port is not connected")
            input_data = self.update(up)
        mtime = self._pipeline_mtime(node_id)
        if node.executed_time >= mtime:
            return node.cached
        if node.kind == "source":
            node.cached = node.dataset
        else:
            spec = FILTER_TYPES[node.filter_type]
            for p in spec.params:
                if p.required and p.name not in node.params:
                    raise PipelineError(
                        f"node {node_id!r}: required parameter {p.name!r} is not set"
                    )
            if not isinstance(input_data, spec.input_types):
                raise PipelineError(
                    f"node {node_id!r}: cannot consume {type(input_data).__name__}"
                )
            try:
                node.cached = spec.run(input_data, node.params)
            except PipelineError as exc:
                raise PipelineError(f"node {node_id!r}: {exc}") from exc
            except (ValueError, KeyError) as exc:
                raise PipelineError(f"node {node_id!r}: {exc}") from exc
        node.executed_time = mtime
        node.execution_count += 1
        return node.cached
