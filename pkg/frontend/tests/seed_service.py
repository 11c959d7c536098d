"""Seed a service data directory for the UI end-to-end test.

Writes a three-snapshot dataset series plus one per-point and one
whole-input classifier sized for the tiny grid, so the web client can be
driven against a live server without running a simulation first.

Usage: python3 seed_service.py DATA_DIR
"""

import sys
from pathlib import Path

import numpy as np

from fieldlens import nn_engine as nn
from fieldlens.core_data import DataArray, RectilinearDataset
from fieldlens.vtk_io import write_legacy

N = 6  # grid edge; 36 points total


def snapshot(t: int) -> bytes:
    xs = np.linspace(0.0, 1.0, N)
    ramp = np.linspace(0.0, 1.0, N * N)
    vel = np.zeros((N * N, 3))
    # rotate the ramp per snapshot so renders differ in pattern, not scale
    vel[:, 0] = np.roll(ramp, 12 * t)
    pressure = np.roll(ramp, 7 * t).reshape(-1, 1) * 2.0
    grid = RectilinearDataset(
        xs, xs, np.array([0.0]),
        (DataArray("velocity", 3, vel), DataArray("pressure", 1, pressure)),
    )
    return write_legacy(grid, title=f"demo frame t={t}")


def point_model() -> bytes:
    W = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    model = nn.ModelSpec(
        nn.InputSpec(shape=(3,)),
        (nn.Linear(3, 2, W, np.zeros(2)),),
        nn.OutputSpec("per_point_classes", ("below", "above"), ((40, 40, 200), (200, 40, 40))),
    )
    return nn.save_model(model)


def whole_model() -> bytes:
    # logit 0 follows the sum of the selected scalar array, logit 1 is fixed,
    # so the ranked rows flip order as a threshold sweep changes the counts
    d = N * N
    W = np.zeros((2, d))
    W[0, :] = 0.1
    b = np.array([0.0, 1.0])
    model = nn.ModelSpec(
        nn.InputSpec(shape=(d,)),
        (nn.Linear(d, 2, W, b),),
        nn.OutputSpec("whole_input_classes", ("Low", "High"), ()),
    )
    return nn.save_model(model)


def main() -> int:
    data_dir = Path(sys.argv[1])
    datasets = data_dir / "datasets"
    models = data_dir / "models"
    datasets.mkdir(parents=True, exist_ok=True)
    models.mkdir(parents=True, exist_ok=True)
    for t in range(3):
        (datasets / f"demo_t{t}.vtk").write_bytes(snapshot(t))
    (models / "point.model").write_bytes(point_model())
    (models / "whole.model").write_bytes(whole_model())
    print(f"seeded {data_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
