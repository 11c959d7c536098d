"""Tests for the training-set builders and the two classifier trainers."""

import numpy as np
import pytest

from fieldlens import nn_engine as nn
from fieldlens import trainer
from fieldlens.cavity_sim import SimConfig, snapshot_times, snapshot_title, suggested_sor_omega
from fieldlens.core_data import DataArray, RectilinearDataset, TensorND


def grid_snapshot(nx, ny, arrays):
    xs = np.linspace(0.0, 1.0, nx)
    ys = np.linspace(0.0, 1.0, ny)
    return RectilinearDataset(xs, ys, np.array([0.0]), arrays)


def velocity_snapshot(nx, ny, vel):
    return grid_snapshot(nx, ny, (DataArray("velocity", 3, vel),))


def pressure_snapshot(values):
    vals = np.asarray(values, dtype=np.float64).reshape(-1, 1)
    n = int(round(np.sqrt(vals.shape[0])))
    return grid_snapshot(n, n, (DataArray("pressure", 1, vals),))


class TestLabeledSet:
    def test_holds_rows_and_labels(self):
        X = TensorND((3, 2), np.arange(6.0).reshape(3, 2))
        s = trainer.LabeledSet(X, [0, 1, 1], "three rows")
        assert s.y.dtype == np.int64
        assert s.label_counts() == (1, 2)
        assert not s.y.flags.writeable

    def test_length_mismatch_rejected(self):
        X = TensorND((3, 2), np.zeros((3, 2)))
        with pytest.raises(ValueError, match="labels for"):
            trainer.LabeledSet(X, [0, 1], "bad")

    def test_non_binary_labels_rejected(self):
        X = TensorND((2, 2), np.zeros((2, 2)))
        with pytest.raises(ValueError, match="0 or 1"):
            trainer.LabeledSet(X, [0, 2], "bad")

    def test_non_matrix_rows_rejected(self):
        X = TensorND((4,), np.zeros(4))
        with pytest.raises(ValueError, match="rows, features"):
            trainer.LabeledSet(X, [0, 0, 0, 0], "bad")


class TestVelocityDataset:
    def test_one_sample_per_point_per_snapshot(self):
        rng = np.random.default_rng(3)
        snaps = [velocity_snapshot(4, 3, rng.normal(size=(12, 3))) for _ in range(2)]
        ds = trainer.build_velocity_dataset(snaps, 0.5)
        assert ds.X.shape == (24, 3)
        assert ds.y.shape == (24,)

    def test_fifty_by_fifty_gives_2500_rows(self):
        vel = np.random.default_rng(0).normal(size=(2500, 3))
        ds = trainer.build_velocity_dataset([velocity_snapshot(50, 50, vel)], 0.01)
        assert ds.X.shape == (2500, 3)

    def test_all_zero_snapshot_labels_zero(self):
        ds = trainer.build_velocity_dataset([velocity_snapshot(5, 5, np.zeros((25, 3)))], 0.01)
        assert ds.label_counts() == (25, 0)

    def test_labels_match_brute_force_recount(self):
        rng = np.random.default_rng(11)
        vel = rng.normal(scale=0.02, size=(60, 3))
        ds = trainer.build_velocity_dataset([velocity_snapshot(6, 10, vel)], 0.02)
        expected = []
        for row in vel:
            mag = (row[0] ** 2 + row[1] ** 2 + row[2] ** 2) ** 0.5
            expected.append(1 if mag > 0.02 else 0)
        assert ds.y.tolist() == expected

    def test_magnitude_at_threshold_labels_zero(self):
        vel = np.array([[0.006, 0.008, 0.0], [0.006, 0.009, 0.0]] * 2)
        ds = trainer.build_velocity_dataset([velocity_snapshot(2, 2, vel)], 0.01)
        assert ds.y.tolist() == [0, 1, 0, 1]

    def test_rows_pool_in_snapshot_order(self):
        a = np.tile([1.0, 0.0, 0.0], (4, 1))
        b = np.tile([0.0, 2.0, 0.0], (4, 1))
        ds = trainer.build_velocity_dataset(
            [velocity_snapshot(2, 2, a), velocity_snapshot(2, 2, b)], 0.5
        )
        assert np.array_equal(ds.X.as_array()[:4], a)
        assert np.array_equal(ds.X.as_array()[4:], b)

    def test_missing_array_raises(self):
        snap = grid_snapshot(2, 2, (DataArray("pressure", 1, np.zeros((4, 1))),))
        with pytest.raises(KeyError):
            trainer.build_velocity_dataset([snap], 0.01)

    def test_wrong_component_count_rejected(self):
        snap = grid_snapshot(2, 2, (DataArray("velocity", 1, np.zeros((4, 1))),))
        with pytest.raises(ValueError, match="3-component"):
            trainer.build_velocity_dataset([snap], 0.01)

    def test_no_snapshots_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            trainer.build_velocity_dataset([], 0.01)

    def test_provenance_records_rule_and_ids(self):
        vel = np.zeros((4, 3))
        ds = trainer.build_velocity_dataset(
            [velocity_snapshot(2, 2, vel)], 0.01, ids=["run A t=3"]
        )
        assert "0.01" in ds.provenance
        assert "run A t=3" in ds.provenance
        assert "strict" in ds.provenance

    def test_id_count_mismatch_rejected(self):
        snap = velocity_snapshot(2, 2, np.zeros((4, 3)))
        with pytest.raises(ValueError, match="ids for"):
            trainer.build_velocity_dataset([snap], 0.01, ids=["a", "b"])


class TestPressureDataset:
    def test_one_sample_per_snapshot(self):
        rng = np.random.default_rng(5)
        snaps = [pressure_snapshot(rng.uniform(size=2500)) for _ in range(4)]
        ds = trainer.build_pressure_dataset(snaps, 5.0)
        assert ds.X.shape == (4, 2500)
        assert ds.y.shape == (4,)

    def test_max_just_below_threshold_is_low(self):
        vals = np.zeros(2500)
        vals[123] = 4.9
        ds = trainer.build_pressure_dataset([pressure_snapshot(vals)], 5.0)
        assert ds.y.tolist() == [0]

    def test_max_above_threshold_is_high(self):
        vals = np.zeros(2500)
        vals[7] = 5.1
        ds = trainer.build_pressure_dataset([pressure_snapshot(vals)], 5.0)
        assert ds.y.tolist() == [1]

    def test_max_exactly_threshold_is_low(self):
        vals = np.zeros(2500)
        vals[0] = 5.0
        ds = trainer.build_pressure_dataset([pressure_snapshot(vals)], 5.0)
        assert ds.y.tolist() == [0]

    def test_rows_are_flattened_fields(self):
        vals = np.arange(2500.0)
        ds = trainer.build_pressure_dataset([pressure_snapshot(vals)], 5.0)
        assert np.array_equal(ds.X.as_array()[0], vals)

    def test_wrong_point_count_rejected(self):
        snap = pressure_snapshot(np.zeros(9))
        with pytest.raises(ValueError, match="2500-point grids, got 9"):
            trainer.build_pressure_dataset([snap], 5.0)

    def test_vector_pressure_rejected(self):
        snap = grid_snapshot(50, 50, (DataArray("pressure", 3, np.zeros((2500, 3))),))
        with pytest.raises(ValueError, match="scalar"):
            trainer.build_pressure_dataset([snap], 5.0)

    def test_missing_array_raises(self):
        snap = grid_snapshot(50, 50, (DataArray("speed", 1, np.zeros((2500, 1))),))
        with pytest.raises(KeyError):
            trainer.build_pressure_dataset([snap], 5.0)

    def test_rebuild_is_identical(self):
        rng = np.random.default_rng(9)
        snaps = [pressure_snapshot(rng.uniform(0, 9, size=2500)) for _ in range(3)]
        a = trainer.build_pressure_dataset(snaps, 5.0)
        b = trainer.build_pressure_dataset(snaps, 5.0)
        assert np.array_equal(a.X.as_array(), b.X.as_array())
        assert np.array_equal(a.y, b.y)
        assert a.provenance == b.provenance


class TestHoldoutIndices:
    @pytest.mark.parametrize("n", [2, 5, 10, 96, 101])
    def test_disjoint_and_exhaustive(self, n):
        tr, va = trainer.holdout_indices(n, 0.8, seed=7)
        both = np.concatenate([tr, va])
        assert len(set(both.tolist())) == n
        assert sorted(both.tolist()) == list(range(n))

    @pytest.mark.parametrize("n", [5, 10, 96])
    def test_fraction_honored_within_one_sample(self, n):
        tr, _ = trainer.holdout_indices(n, 0.8, seed=0)
        assert abs(len(tr) - 0.8 * n) < 1

    def test_matches_training_split(self):
        # Same rule the trainer applies: one seeded shuffle, head is train.
        n, seed = 40, 42
        tr, va = trainer.holdout_indices(n, 0.8, seed=seed)
        perm = np.random.default_rng(seed).permutation(n)
        assert np.array_equal(tr, perm[:32])
        assert np.array_equal(va, perm[32:])


def separable_velocity_set(n_each=24, seed=2):
    rng = np.random.default_rng(seed)
    slow = rng.normal(scale=0.002, size=(n_each, 3))
    fast = rng.normal(size=(n_each, 3))
    fast *= (1.0 + rng.uniform(0.2, 2.0, size=(n_each, 1))) / np.linalg.norm(
        fast, axis=1, keepdims=True
    )
    X = np.concatenate([slow, fast])
    return trainer.build_velocity_dataset(
        [velocity_snapshot(len(X), 1, X)], 0.01
    )


class TestVelocityTraining:
    def test_architecture_and_parameter_count(self):
        data = separable_velocity_set()
        model, history = trainer.train_velocity_model(data, seed=1)
        assert nn.parameter_count(model) == 3992
        widths = [l.out_width for l in model.layers if isinstance(l, nn.Linear)]
        assert widths == [80, 40, 10, 2]
        assert sum(isinstance(l, nn.Tanh) for l in model.layers) == 3
        assert model.output_spec.kind == "per_point_classes"
        assert model.output_spec.labels == ("below", "above")

    def test_history_covers_every_epoch(self):
        data = separable_velocity_set()
        _, history = trainer.train_velocity_model(data, seed=1)
        assert len(history) == trainer.VELOCITY_EPOCHS
        assert all(np.isfinite(h["train_loss"]) and np.isfinite(h["val_loss"]) for h in history)

    def test_learns_separable_speeds(self):
        data = separable_velocity_set()
        model, _ = trainer.train_velocity_model(data, seed=1)
        logits = nn.forward(model, data.X).as_array()
        assert float((logits.argmax(axis=1) == data.y).mean()) >= 0.95

    def test_deterministic_for_fixed_seed(self):
        data = separable_velocity_set(n_each=8)
        a, ha = trainer.train_velocity_model(data, seed=5)
        b, hb = trainer.train_velocity_model(data, seed=5)
        assert a == b
        assert ha == hb

    def test_seed_changes_the_model(self):
        data = separable_velocity_set(n_each=8)
        a, _ = trainer.train_velocity_model(data, seed=5)
        b, _ = trainer.train_velocity_model(data, seed=6)
        assert a != b

    def test_wrong_width_rejected(self):
        X = TensorND((4, 2), np.zeros((4, 2)))
        data = trainer.LabeledSet(X, [0, 1, 0, 1], "bad width")
        with pytest.raises(nn.ModelError, match="3-feature"):
            trainer.train_velocity_model(data)


class TestPressureTraining:
    @staticmethod
    def synthetic_fields(n=10, seed=0):
        rng = np.random.default_rng(seed)
        snaps = []
        for i in range(n):
            vals = rng.uniform(0.0, 1.0, size=2500)
            if i % 2:
                vals[rng.integers(0, 2500)] = 9.0
            snaps.append(pressure_snapshot(vals))
        return trainer.build_pressure_dataset(snaps, 5.0)

    def test_architecture_and_parameter_count(self):
        data = self.synthetic_fields()
        model, history = trainer.train_pressure_model(data, seed=1)
        assert nn.parameter_count(model) == 126112
        widths = [l.out_width for l in model.layers if isinstance(l, nn.Linear)]
        assert widths == [50, 20, 2]
        assert model.output_spec.kind == "whole_input_classes"
        assert model.output_spec.labels == ("Low", "High")
        assert len(history) == trainer.PRESSURE_EPOCHS

    def test_learns_separable_fields(self):
        data = self.synthetic_fields()
        model, _ = trainer.train_pressure_model(data, seed=1)
        logits = nn.forward(model, data.X).as_array()
        assert float((logits.argmax(axis=1) == data.y).mean()) == 1.0

    def test_deterministic_for_fixed_seed(self):
        data = self.synthetic_fields(n=5)
        a, _ = trainer.train_pressure_model(data, seed=3)
        b, _ = trainer.train_pressure_model(data, seed=3)
        assert a == b

    def test_wrong_width_rejected(self):
        X = TensorND((4, 9), np.zeros((4, 9)))
        data = trainer.LabeledSet(X, [0, 1, 0, 1], "bad width")
        with pytest.raises(nn.ModelError, match="2500-feature"):
            trainer.train_pressure_model(data)


class TestHistoryCsv:
    def test_writes_epoch_and_losses(self, tmp_path):
        hist = [
            {"train_loss": 0.5, "val_loss": 0.625},
            {"train_loss": 0.25, "val_loss": 0.375},
            {"train_loss": 0.125, "val_loss": 0.1875},
        ]
        path = tmp_path / "history.csv"
        trainer.write_history_csv(hist, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss"
        assert len(lines) == 4
        assert lines[1].split(",") == ["1", "0.5", "0.625"]
        assert lines[3].split(",")[0] == "3"


class TestSceneConfigs:
    def test_velocity_scene(self):
        cfg = trainer.velocity_scene_config()
        assert (cfg.nx, cfg.ny) == (50, 50)
        assert cfg.re == 10.0
        assert cfg.lid_velocity == 2.0
        assert cfg.t_end == 20.0
        assert cfg.snapshot_interval == 1.0
        assert cfg.sor_omega == suggested_sor_omega(50, 50)
        assert cfg.sor_max_iters == 20000

    def test_pressure_scene_defaults(self):
        cfg = trainer.pressure_scene_config()
        assert cfg.re == 1000.0
        assert cfg.lid_velocity == -1.0
        assert cfg.t_end == 5.0

    def test_corpus_covers_grid_and_extension(self):
        cfgs = trainer.pressure_corpus_configs()
        assert len(cfgs) == 16
        combos = [(c.re, c.lid_velocity) for c in cfgs]
        for re in (100.0, 500.0, 1000.0):
            for lid in (-0.5, -1.0, -1.5, -2.0):
                assert (re, lid) in combos
        extension = combos[12:]
        assert extension == [(100.0, -2.25), (100.0, -2.5), (100.0, -2.75), (100.0, -3.0)]
        assert all(c.t_end == 5.0 for c in cfgs)
        assert (1000.0, -1.0) in combos

    def test_run_corpus_pools_snapshots_with_titles(self):
        cfgs = [
            SimConfig(nx=6, ny=6, re=20.0, lid_velocity=1.0, t_end=2.0, snapshot_interval=1.0),
            SimConfig(nx=6, ny=6, re=20.0, lid_velocity=-1.0, t_end=1.0, snapshot_interval=1.0),
        ]
        seen = []
        snaps, ids = trainer.run_corpus(cfgs, progress=seen.append)
        assert len(snaps) == 5
        assert len(ids) == 5
        assert ids[0] == snapshot_title(cfgs[0], 0.0)
        assert ids[3] == snapshot_title(cfgs[1], 0.0)
        assert seen == sorted(seen)
        assert seen[-1] == pytest.approx(1.0)
        times = snapshot_times(cfgs[0])
        assert len(times) == 3
