"""Command-line driver: simulate, train, apply, render, serve.

Exit codes: 0 on success, 1 on usage errors (bad flags, bad values),
2 on runtime failures (missing files, solver trouble, bad data).
"""

import argparse
import os
import sys

from . import nn_engine as nn
from . import service, trainer
from .cavity_sim import (
    SimConfig,
    run,
    snapshot_times,
    suggested_sor_omega,
    write_snapshot,
)
from .pipeline_engine import data_driven_transform
from .render import TRANSFER_FUNCTIONS, render_grid
from .core_data import TableDataset
from .vtk_io import parse_legacy, read_png, write_csv, write_legacy


class UsageError(ValueError):
    """Bad argument combination detected after parsing."""


def _range_pair(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected lo,hi - got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo,hi - got {text!r}")
    return (lo, hi)


def _stage_printer(label: str):
    """Progress callback printing each crossed 10% mark to stderr."""
    last = [-1]

    def cb(frac):
        mark = int(frac * 10)
        if mark > last[0]:
            last[0] = mark
            print(f"{label}: {mark * 10}%", file=sys.stderr)

    return cb


def _load_dataset_file(path: str):
    with open(path, "rb") as f:
        raw = f.read()
    if path.lower().endswith(".png"):
        return read_png(raw)
    return parse_legacy(raw).dataset


def cmd_simulate(args) -> int:
    cfg = SimConfig(
        nx=args.nx,
        ny=args.ny,
        re=args.re,
        lid_velocity=args.lid,
        t_end=args.t_end,
        snapshot_interval=args.interval,
        sor_omega=suggested_sor_omega(args.nx, args.ny),
        sor_max_iters=20000,
    )
    os.makedirs(args.out, exist_ok=True)
    tag = args.tag if args.tag is not None else f"re{args.re:g}"
    snaps = run(cfg, progress=_stage_printer("simulate"))
    for snap, t in zip(snaps, snapshot_times(cfg)):
        path = write_snapshot(snap, cfg, t, args.out, tag)
        print(path)
    return 0


def _train(args, configs, build, fit, threshold) -> int:
    snaps, ids = trainer.run_corpus(configs, progress=_stage_printer("simulate"))
    data = build(snaps, threshold, ids=ids)
    n0, n1 = data.label_counts()
    print(f"samples: {len(data.y)} ({n0} class 0, {n1} class 1)", file=sys.stderr)
    model, history = fit(data, seed=args.seed, progress=_stage_printer("train"))
    with open(args.out, "wb") as f:
        f.write(nn.save_model(model))
    print(args.out)
    print(
        f"final loss: train {history[-1]['train_loss']:.6g}, "
        f"val {history[-1]['val_loss']:.6g}",
        file=sys.stderr,
    )
    if args.history:
        trainer.write_history_csv(history, args.history)
        print(args.history)
    return 0


def cmd_train_velocity(args) -> int:
    return _train(
        args,
        [trainer.velocity_scene_config()],
        trainer.build_velocity_dataset,
        trainer.train_velocity_model,
        trainer.VELOCITY_THRESHOLD,
    )


def cmd_train_pressure(args) -> int:
    return _train(
        args,
        trainer.pressure_corpus_configs(),
        trainer.build_pressure_dataset,
        trainer.train_pressure_model,
        trainer.PRESSURE_THRESHOLD,
    )


def cmd_apply(args) -> int:
    data = _load_dataset_file(args.input)
    result = data_driven_transform(
        data, args.model, array_name=args.array, top_k=args.top_k
    )
    if isinstance(result, TableDataset):
        payload = write_csv(result)
    else:
        payload = write_legacy(
            result, title=f"transform of {os.path.basename(args.input)}"
        )
    with open(args.out, "wb") as f:
        f.write(payload)
    print(args.out)
    return 0


def cmd_render(args) -> int:
    if (args.w is None) != (args.h is None):
        raise UsageError("--w and --h must be given together")
    data = _load_dataset_file(args.input)
    tf = TRANSFER_FUNCTIONS.get(args.tf)
    if tf is None:
        known = ", ".join(sorted(TRANSFER_FUNCTIONS))
        raise UsageError(f"unknown transfer function {args.tf!r} (known: {known})")
    out_size = (args.w, args.h) if args.w is not None else None
    png = render_grid(
        data, args.array, tf, out_size=out_size, value_range=args.range
    )
    with open(args.out, "wb") as f:
        f.write(png)
    print(args.out)
    return 0


def cmd_serve(args) -> int:
    service.serve(
        port=args.port,
        host=args.host,
        data_dir=args.data_dir,
        static_dir=args.static_dir,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fieldlens",
        description="Cavity-flow simulation, model training, and pipeline service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a lid-driven cavity scene to files")
    p.add_argument("--re", type=float, default=10.0, help="Reynolds number")
    p.add_argument("--lid", type=float, default=2.0, help="lid velocity")
    p.add_argument("--nx", type=int, default=50)
    p.add_argument("--ny", type=int, default=50)
    p.add_argument("--t-end", type=float, default=20.0, dest="t_end")
    p.add_argument("--interval", type=float, default=1.0, help="snapshot spacing")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tag", default=None, help="snapshot name tag (default: re<Re>)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser(
        "train-velocity", help="train the per-point speed classifier"
    )
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--seed", type=int, default=trainer.DEFAULT_SEED)
    p.add_argument("--history", default=None, help="optional loss-history CSV")
    p.set_defaults(func=cmd_train_velocity)

    p = sub.add_parser(
        "train-pressure", help="train the whole-field pressure classifier"
    )
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--seed", type=int, default=trainer.DEFAULT_SEED)
    p.add_argument("--history", default=None, help="optional loss-history CSV")
    p.set_defaults(func=cmd_train_pressure)

    p = sub.add_parser("apply", help="run a stored model over a dataset file")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--input", required=True, help=".vtk or .png dataset")
    p.add_argument("--out", required=True, help="output file (.vtk grid or .csv table)")
    p.add_argument("--array", default=None, help="point array to feed the model")
    p.add_argument("--top-k", type=int, default=10, dest="top_k")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("render", help="color-map an array to a PNG")
    p.add_argument("--input", required=True, help=".vtk or .png dataset")
    p.add_argument("--array", required=True, help="point array to render")
    p.add_argument("--out", required=True, help="PNG file to write")
    p.add_argument("--tf", default="greyscale", help="transfer function name")
    p.add_argument("--w", type=int, default=None, help="output width")
    p.add_argument("--h", type=int, default=None, help="output height")
    p.add_argument("--range", type=_range_pair, default=None, help="value range lo,hi")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", default=None, dest="data_dir")
    p.add_argument("--static-dir", default=None, dest="static_dir")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
