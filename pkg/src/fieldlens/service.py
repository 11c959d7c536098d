"""HTTP service around the engine: datasets, jobs, pipelines, rendering.

Everything persistent lives under one data directory (flag or the
FIELDLENS_DATA_DIR variable): datasets/ holds uploaded and simulated
files, models/ holds trained model files plus their history and
provenance sidecars, pipelines/ holds pipeline documents as JSON.

Long-running simulate/train requests return jobs polled at
/api/jobs/{id}; pipeline mutations are serialized per pipeline, and a
render after a parameter change re-executes exactly the stale nodes.
"""

from __future__ import annotations

import json
import os
import re as _re
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response

from . import nn_engine as nn
from . import trainer
from .cavity_sim import SimConfig, run, snapshot_times, write_snapshot
from .core_data import ImageDataset, RectilinearDataset, TableDataset
from .pipeline_engine import FILTER_TYPES, PipelineError, PipelineGraph
from .render import TRANSFER_FUNCTIONS, render_grid
from .vtk_io import parse_legacy, read_png

__all__ = ["JobRecord", "create_app", "serve"]

_NAME_RE = _re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


def _bad(detail: str) -> HTTPException:
    return HTTPException(status_code=422, detail=detail)


def _missing(detail: str) -> HTTPException:
    return HTTPException(status_code=404, detail=detail)


@dataclass
class JobRecord:
    """One asynchronous simulate/train job; transitions are monotone."""

    id: str
    kind: str
    status: str = "queued"
    progress: float = 0.0
    result: dict | None = None
    error: str | None = None

    _ORDER = ("queued", "running", "done", "failed")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "status": self.status,
            "progress": self.progress,
            "result": self.result,
            "error": self.error,
        }


class JobStore:
    def __init__(self, workers: int):
        self._lock = threading.Lock()
        self._jobs: dict[str, JobRecord] = {}
        self._counter = 0
        self.executor = ThreadPoolExecutor(max_workers=workers)

    def submit(self, kind: str, fn) -> JobRecord:
        with self._lock:
            self._counter += 1
            job = JobRecord(id=f"job-{self._counter}", kind=kind)
            self._jobs[job.id] = job
        self.executor.submit(self._run, job, fn)
        return job

    def _transition(self, job: JobRecord, status: str):
        with self._lock:
            if JobRecord._ORDER.index(status) < JobRecord._ORDER.index(job.status):
                return
            if job.status in ("done", "failed"):
                return
            job.status = status

    def _run(self, job: JobRecord, fn):
        self._transition(job, "running")
        if job.status != "running":
            return

        def progress(frac: float):
            with self._lock:
                job.progress = max(job.progress, min(float(frac), 1.0))

        try:
            result = fn(progress)
        except Exception as exc:
            with self._lock:
                if job.status == "running":
                    job.status = "failed"
                    job.error = f"{type(exc).__name__}: {exc}"
            return
        with self._lock:
            if job.status == "running":
                job.status = "done"
                job.progress = 1.0
                job.result = result

    def get(self, job_id: str) -> JobRecord | None:
        with self._lock:
            return self._jobs.get(job_id)

    def list(self) -> list[JobRecord]:
        with self._lock:
            return list(self._jobs.values())

    def shutdown(self):
        with self._lock:
            for job in self._jobs.values():
                if job.status in ("queued", "running"):
                    job.status = "failed"
                    job.error = "service shut down"
        self.executor.shutdown(wait=False, cancel_futures=True)


@dataclass
class PipelineEntry:
    graph: PipelineGraph
    doc: dict
    lock: threading.Lock = field(default_factory=threading.Lock)


class AppState:
    def __init__(self, data_dir: Path, job_workers: int):
        self.data_dir = data_dir
        self.datasets_dir = data_dir / "datasets"
        self.models_dir = data_dir / "models"
        self.pipelines_dir = data_dir / "pipelines"
        for d in (self.datasets_dir, self.models_dir, self.pipelines_dir):
            d.mkdir(parents=True, exist_ok=True)
        self.jobs = JobStore(job_workers)
        self.pipelines: dict[str, PipelineEntry] = {}
        self._pipelines_lock = threading.Lock()
        self._pipeline_counter = 0
        self._load_pipelines()

    # -- datasets -------------------------------------------------------------

    def dataset_path(self, dataset_id: str) -> Path:
        for ext in (".vtk", ".png"):
            p = self.datasets_dir / (dataset_id + ext)
            if p.is_file():
                return p
        raise _missing(f"no dataset {dataset_id!r}")

    def load_dataset(self, dataset_id: str):
        p = self.dataset_path(dataset_id)
        raw = p.read_bytes()
        if p.suffix == ".vtk":
            return parse_legacy(raw).dataset
        return read_png(raw)

    def dataset_meta(self, dataset_id: str) -> dict:
        p = self.dataset_path(dataset_id)
        meta = {"id": dataset_id, "format": p.suffix[1:], "bytes": p.stat().st_size}
        raw = p.read_bytes()
        if p.suffix == ".vtk":
            parsed = parse_legacy(raw)
            ds = parsed.dataset
            meta["title"] = parsed.title
        else:
            ds = read_png(raw)
        if isinstance(ds, RectilinearDataset):
            meta["type"] = "rectilinear"
            meta["dims"] = [len(ds.x_coords), len(ds.y_coords), len(ds.z_coords)]
        elif isinstance(ds, ImageDataset):
            meta["type"] = "image"
            meta["dims"] = list(ds.dims)
        meta["arrays"] = [
            {"name": a.name, "components": a.components, "tuples": a.tuples().shape[0]}
            for a in ds.point_arrays
        ]
        return meta

    def list_datasets(self) -> list[dict]:
        out = []
        for p in sorted(self.datasets_dir.iterdir()):
            if p.suffix in (".vtk", ".png") and p.is_file():
                out.append({"id": p.stem, "format": p.suffix[1:], "bytes": p.stat().st_size})
        return out

    # -- models ---------------------------------------------------------------

    def model_path(self, model_id: str) -> Path:
        p = self.models_dir / (model_id + ".model")
        if not p.is_file():
            raise _missing(f"no model {model_id!r}")
        return p

    def resolve_model_param(self, value):
        """Expand a model id into its file path; real paths pass through."""
        if not isinstance(value, str) or os.path.isabs(value) or os.path.exists(value):
            return value
        candidate = self.models_dir / (value + ".model")
        if candidate.is_file():
            return str(candidate)
        candidate = self.models_dir / value
        if candidate.is_file():
            return str(candidate)
        return value

    def model_meta(self, model_id: str, full: bool = False) -> dict:
        from .pipeline_engine import load_model_cached

        p = self.model_path(model_id)
        model = load_model_cached(str(p))
        widths = [l.out_width for l in model.layers if isinstance(l, nn.Linear)]
        meta = {
            "id": model_id,
            "kind": model.output_spec.kind,
            "input_shape": list(model.input_spec.shape),
            "linear_widths": widths,
            "parameters": nn.parameter_count(model),
            "n_labels": len(model.output_spec.labels),
            "bytes": p.stat().st_size,
        }
        if len(model.output_spec.labels) <= 64:
            meta["labels"] = list(model.output_spec.labels)
        if full:
            prov = p.with_suffix(".provenance.txt")
            if prov.is_file():
                meta["provenance"] = prov.read_text()
            hist = p.with_suffix(".history.csv")
            meta["history"] = hist.is_file()
        return meta

    def list_models(self) -> list[dict]:
        return [self.model_meta(p.stem) for p in sorted(self.models_dir.glob("*.model"))]

    def unique_model_name(self, base: str) -> str:
        name, n = base, 1
        while (self.models_dir / (name + ".model")).exists():
            n += 1
            name = f"{base}-{n}"
        return name

    # -- pipelines ------------------------------------------------------------

    def _build_graph(self, doc: dict) -> PipelineGraph:
        graph = PipelineGraph()
        for node in doc["nodes"]:
            if node["kind"] == "source":
                dataset = None
                if node.get("dataset"):
                    try:
                        dataset = self.load_dataset(node["dataset"])
                    except HTTPException:
                        raise PipelineError(
                            f"node {node['id']!r}: unknown dataset {node['dataset']!r}"
                        )
                graph.add_source(node["id"], dataset)
            else:
                params = dict(node.get("params") or {})
                if "model_path" in params:
                    params["model_path"] = self.resolve_model_param(params["model_path"])
                graph.add_filter(node["id"], node["filter_type"], params)
        for up, down in doc["edges"]:
            graph.connect(up, down)
        return graph

    def create_pipeline(self, doc: dict) -> str:
        graph = self._build_graph(doc)
        with self._pipelines_lock:
            self._pipeline_counter += 1
            pid = f"p-{self._pipeline_counter}"
            self.pipelines[pid] = PipelineEntry(graph, doc)
        self._persist_pipeline(pid)
        return pid

    def _persist_pipeline(self, pid: str):
        entry = self.pipelines[pid]
        path = self.pipelines_dir / (pid + ".json")
        path.write_text(json.dumps(entry.doc, indent=2, sort_keys=True) + "\n")

    def _load_pipelines(self):
        highest = 0
        for p in sorted(self.pipelines_dir.glob("*.json")):
            try:
                doc = json.loads(p.read_text())
                graph = self._build_graph(doc)
            except (ValueError, KeyError, TypeError, PipelineError, HTTPException):
                continue
            pid = p.stem
            self.pipelines[pid] = PipelineEntry(graph, doc)
            m = _re.fullmatch(r"p-(\d+)", pid)
            if m:
                highest = max(highest, int(m.group(1)))
        self._pipeline_counter = highest

    def pipeline(self, pid: str) -> PipelineEntry:
        entry = self.pipelines.get(pid)
        if entry is None:
            raise _missing(f"no pipeline {pid!r}")
        return entry


def _validate_name(name: str, suffixes: tuple[str, ...]) -> str:
    base = os.path.basename(name or "")
    if not _NAME_RE.fullmatch(base):
        raise _bad(f"invalid name {name!r}")
    if not base.endswith(suffixes):
        raise _bad(f"name must end with one of {', '.join(suffixes)}")
    return base


def _sim_config_from(body: dict) -> SimConfig:
    from .cavity_sim import suggested_sor_omega

    nx = int(body.get("nx", 50))
    ny = int(body.get("ny", 50))
    try:
        return SimConfig(
            nx=nx,
            ny=ny,
            re=float(body.get("re", 10.0)),
            lid_velocity=float(body.get("lid", 2.0)),
            t_end=float(body.get("t_end", 20.0)),
            snapshot_interval=float(body.get("interval", 1.0)),
            sor_omega=suggested_sor_omega(nx, ny),
            sor_max_iters=20000,
        )
    except (ValueError, TypeError) as exc:
        raise _bad(f"bad simulation config: {exc}")


def _round_for_display(name: str, values: list):
    if name == "confidence_percent":
        return [round(float(v), 4) for v in values]
    return values


def create_app(data_dir=None, job_workers: int | None = None, static_dir=None) -> FastAPI:
    """Build the application; state lives under data_dir."""
    root = Path(
        data_dir
        or os.environ.get("FIELDLENS_DATA_DIR")
        or Path.cwd() / "fieldlens-data"
    )
    workers = job_workers or os.cpu_count() or 1
    state = AppState(root, workers)

    @asynccontextmanager
    async def lifespan(_app):
        yield
        state.jobs.shutdown()

    app = FastAPI(title="fieldlens", lifespan=lifespan)
    app.state.engine = state

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    # -- datasets -------------------------------------------------------------

    @app.post("/api/datasets", status_code=201)
    async def upload_dataset(request: Request, name: str):
        base = _validate_name(name, (".vtk", ".png"))
        body = await request.body()
        if not body:
            raise _bad("empty upload")
        try:
            if base.endswith(".vtk"):
                parse_legacy(body)
            else:
                read_png(body)
        except ValueError as exc:
            raise _bad(f"unreadable {base.rsplit('.', 1)[1]} upload: {exc}")
        target = state.datasets_dir / base
        if target.exists():
            raise HTTPException(status_code=409, detail=f"dataset {target.stem!r} exists")
        target.write_bytes(body)
        return {"id": target.stem}

    @app.get("/api/datasets")
    def list_datasets():
        return state.list_datasets()

    @app.get("/api/datasets/{dataset_id}")
    def dataset_meta(dataset_id: str):
        return state.dataset_meta(dataset_id)

    @app.get("/api/datasets/{dataset_id}/raw")
    def dataset_raw(dataset_id: str):
        p = state.dataset_path(dataset_id)
        media = "image/png" if p.suffix == ".png" else "text/plain"
        return Response(p.read_bytes(), media_type=media)

    # -- jobs -----------------------------------------------------------------

    @app.post("/api/simulate", status_code=202)
    async def simulate(request: Request):
        body = await request.json() if await request.body() else {}
        cfg = _sim_config_from(body or {})
        tag = str(body.get("tag") or f"re{cfg.re:g}_lid{cfg.lid_velocity:g}")
        if not _NAME_RE.fullmatch(tag):
            raise _bad(f"invalid tag {tag!r}")

        def job(progress):
            snaps = run(cfg, progress=progress)
            ids = []
            for snap, t in zip(snaps, snapshot_times(cfg)):
                path = write_snapshot(snap, cfg, t, state.datasets_dir, tag)
                ids.append(Path(path).stem)
            return {"datasets": ids}

        record = state.jobs.submit("simulate", job)
        return record.to_dict()

    @app.post("/api/train", status_code=202)
    async def train_model(request: Request):
        body = await request.json() if await request.body() else {}
        kind = body.get("model")
        if kind not in ("velocity", "pressure"):
            raise _bad("body needs model: velocity or pressure")
        seed = int(body.get("seed", trainer.DEFAULT_SEED))
        name = state.unique_model_name(
            _validate_name(body.get("name") or f"{kind}-{seed}", (".model",)).removesuffix(
                ".model"
            )
            if body.get("name")
            else f"{kind}-{seed}"
        )

        if kind == "velocity":
            scene = body.get("scene")
            configs = [_sim_config_from(scene) if scene else trainer.velocity_scene_config()]
            threshold = trainer.VELOCITY_THRESHOLD
            build = trainer.build_velocity_dataset
            fit = trainer.train_velocity_model
        else:
            overrides = body.get("configs")
            if overrides:
                configs = [_sim_config_from(c) for c in overrides]
            else:
                configs = trainer.pressure_corpus_configs()
            threshold = trainer.PRESSURE_THRESHOLD
            build = trainer.build_pressure_dataset
            fit = trainer.train_pressure_model

        def job(progress):
            snaps, ids = trainer.run_corpus(
                configs, progress=lambda f: progress(0.5 * f)
            )
            data = build(snaps, threshold, ids=ids)
            model, history = fit(
                data, seed=seed, progress=lambda f: progress(0.5 + 0.5 * f)
            )
            path = state.models_dir / (name + ".model")
            path.write_bytes(nn.save_model(model))
            trainer.write_history_csv(history, path.with_suffix(".history.csv"))
            n0, n1 = data.label_counts()
            path.with_suffix(".provenance.txt").write_text(
                f"seed: {seed}\nlabel counts: {n0} / {n1}\n{data.provenance}\n"
            )
            tr, va = trainer.holdout_indices(data.y.size, seed=seed)
            logits = nn.forward(model, data.X.as_array()[va]).as_array()
            accuracy = float((logits.argmax(axis=1) == data.y[va]).mean())
            return {
                "model": name,
                "label_counts": [n0, n1],
                "held_out_accuracy": accuracy,
                "final_val_loss": history[-1]["val_loss"],
            }

        record = state.jobs.submit("train", job)
        return record.to_dict()

    @app.get("/api/jobs")
    def list_jobs():
        return [j.to_dict() for j in state.jobs.list()]

    @app.get("/api/jobs/{job_id}")
    def job_detail(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise _missing(f"no job {job_id!r}")
        return job.to_dict()

    # -- models ---------------------------------------------------------------

    @app.get("/api/models")
    def list_models():
        return state.list_models()

    @app.get("/api/models/{model_id}")
    def model_detail(model_id: str):
        return state.model_meta(model_id, full=True)

    @app.get("/api/models/{model_id}/history")
    def model_history(model_id: str):
        p = state.model_path(model_id).with_suffix(".history.csv")
        if not p.is_file():
            raise _missing(f"model {model_id!r} has no history")
        return Response(p.read_bytes(), media_type="text/csv")

    # -- filters and transfer functions ---------------------------------------

    @app.get("/api/filters")
    def list_filters():
        out = []
        for spec in FILTER_TYPES.values():
            out.append(
                {
                    "name": spec.name,
                    "params": [
                        {
                            "name": p.name,
                            "type": p.type,
                            "required": p.required,
                            "default": p.default,
                        }
                        for p in spec.params
                    ],
                    "input_types": [t.__name__ for t in spec.input_types],
                    "output_types": [t.__name__ for t in spec.output_types],
                }
            )
        return out

    @app.get("/api/transfer-functions")
    def list_transfer_functions():
        return [
            {"name": tf.name, "points": [[p, list(rgb)] for p, rgb in tf.points]}
            for tf in TRANSFER_FUNCTIONS.values()
        ]

    # -- pipelines --------------------------------------------------------------

    def _doc_from(body) -> dict:
        if not isinstance(body, dict):
            raise _bad("pipeline body must be an object")
        nodes = body.get("nodes")
        edges = body.get("edges", [])
        if not isinstance(nodes, list) or not nodes:
            raise _bad("pipeline needs a non-empty node list")
        doc = {"nodes": [], "edges": []}
        for n in nodes:
            if not isinstance(n, dict) or not n.get("id"):
                raise _bad("every node needs an id")
            kind = n.get("kind")
            if kind not in ("source", "filter"):
                raise _bad(f"node {n['id']!r}: kind must be source or filter")
            entry = {"id": str(n["id"]), "kind": kind}
            if kind == "source":
                if n.get("dataset"):
                    entry["dataset"] = str(n["dataset"])
            else:
                if not n.get("filter_type"):
                    raise _bad(f"node {n['id']!r}: filter nodes need filter_type")
                entry["filter_type"] = str(n["filter_type"])
                entry["params"] = dict(n.get("params") or {})
            doc["nodes"].append(entry)
        for e in edges:
            if not isinstance(e, (list, tuple)) or len(e) != 2:
                raise _bad("edges must be [upstream, downstream] pairs")
            doc["edges"].append([str(e[0]), str(e[1])])
        return doc

    @app.post("/api/pipelines", status_code=201)
    async def create_pipeline(request: Request):
        doc = _doc_from(await request.json())
        try:
            pid = state.create_pipeline(doc)
        except PipelineError as exc:
            raise _bad(str(exc))
        return {"id": pid}

    @app.get("/api/pipelines")
    def list_pipelines():
        return [{"id": pid, **entry.doc} for pid, entry in sorted(state.pipelines.items())]

    @app.get("/api/pipelines/{pid}")
    def pipeline_detail(pid: str):
        entry = state.pipeline(pid)
        with entry.lock:
            return {"id": pid, **entry.doc}

    def _doc_node(entry: PipelineEntry, nid: str) -> dict:
        for n in entry.doc["nodes"]:
            if n["id"] == nid:
                return n
        raise _missing(f"no node {nid!r}")

    @app.patch("/api/pipelines/{pid}/nodes/{nid}/params")
    async def patch_params(pid: str, nid: str, request: Request):
        body = await request.json()
        if not isinstance(body, dict) or not body:
            raise _bad("body must be a non-empty object of parameter values")
        entry = state.pipeline(pid)
        with entry.lock:
            node = _doc_node(entry, nid)
            if node["kind"] != "filter":
                raise _bad(f"node {nid!r} is a source; only filters take params")
            try:
                for name, value in body.items():
                    stored = value
                    if name == "model_path":
                        stored = state.resolve_model_param(value)
                    entry.graph.set_param(nid, name, stored)
                    node.setdefault("params", {})[name] = value
            except PipelineError as exc:
                raise _bad(str(exc))
            state._persist_pipeline(pid)
            return {"id": nid, "params": node["params"]}

    @app.patch("/api/pipelines/{pid}/nodes/{nid}/source")
    async def patch_source(pid: str, nid: str, request: Request):
        body = await request.json()
        dataset_id = (body or {}).get("dataset")
        if not dataset_id:
            raise _bad("body needs a dataset id")
        entry = state.pipeline(pid)
        with entry.lock:
            node = _doc_node(entry, nid)
            if node["kind"] != "source":
                raise _bad(f"node {nid!r} is not a source")
            try:
                data = state.load_dataset(str(dataset_id))
            except HTTPException:
                raise _bad(f"unknown dataset {dataset_id!r}")
            try:
                entry.graph.set_source_data(nid, data)
            except PipelineError as exc:
                raise _bad(str(exc))
            node["dataset"] = str(dataset_id)
            state._persist_pipeline(pid)
            return {"id": nid, "dataset": dataset_id}

    def _execute(pid: str, nid: str):
        entry = state.pipeline(pid)
        with entry.lock:
            if nid not in entry.graph.nodes:
                raise _missing(f"no node {nid!r}")
            try:
                return entry.graph.update(nid)
            except PipelineError as exc:
                raise _bad(str(exc))

    @app.get("/api/pipelines/{pid}/nodes/{nid}/render")
    def render_node(
        pid: str,
        nid: str,
        tf: str = "greyscale",
        array: str | None = None,
        range: str | None = None,
        w: int | None = None,
        h: int | None = None,
    ):
        output = _execute(pid, nid)
        if isinstance(output, TableDataset):
            raise _bad(f"node {nid!r} produces a table; fetch it from the table endpoint")
        transfer = TRANSFER_FUNCTIONS.get(tf)
        if transfer is None:
            raise _bad(f"unknown transfer function {tf!r}")
        value_range = None
        if range is not None:
            try:
                lo, hi = (float(x) for x in range.split(","))
            except ValueError:
                raise _bad(f"range must be 'lo,hi', got {range!r}")
            value_range = (lo, hi)
        try:
            arr = output.array(array)
        except KeyError as exc:
            raise _bad(str(exc))
        direct = arr.components == 3 and arr.name == "color"
        out_size = None
        if w is not None or h is not None:
            if w is None or h is None:
                raise _bad("provide both w and h, or neither")
            out_size = (w, h)
        try:
            png = render_grid(
                output,
                arr.name,
                transfer,
                out_size,
                direct_color=direct,
                value_range=value_range,
            )
        except ValueError as exc:
            raise _bad(str(exc))
        return Response(png, media_type="image/png")

    @app.get("/api/pipelines/{pid}/nodes/{nid}/table")
    def table_node(pid: str, nid: str):
        output = _execute(pid, nid)
        if not isinstance(output, TableDataset):
            raise _bad(f"node {nid!r} does not produce a table")
        columns = []
        for name, col in output.columns:
            if hasattr(col, "tuples"):
                values = [float(v) for v in col.tuples()[:, 0]]
            else:
                values = list(col)
            columns.append({"name": name, "values": _round_for_display(name, values)})
        return {"columns": columns}

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(port: int = 8000, host: str = "127.0.0.1", data_dir=None, static_dir=None):
    """Run the service until interrupted; raises on bind failure."""
    import uvicorn

    app = create_app(data_dir=data_dir, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
