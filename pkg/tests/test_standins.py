"""Tests for the stand-in image models."""

import numpy as np

from fieldlens import nn_engine as nn
from fieldlens import standins
from fieldlens.pipeline_engine import default_palette, map_classification_output


class TestSegmentationStandin:
    def test_input_contract(self):
        spec = standins.segmentation_standin().input_spec
        assert spec.shape == (3, 256, 256)
        assert spec.value_scale == 1.0 / 255.0
        assert spec.normalize_mean == standins.IMAGENET_MEAN
        assert spec.normalize_std == standins.IMAGENET_STD
        assert spec.channel_policy == "grey_to_rgb"

    def test_output_has_21_classes_with_palette(self):
        model = standins.segmentation_standin()
        assert model.output_spec.kind == "per_point_classes"
        assert len(model.output_spec.labels) == 21
        assert model.output_spec.colors == default_palette(21)

    def test_forward_yields_class_planes(self):
        model = standins.segmentation_standin()
        x = np.random.default_rng(1).uniform(-1, 1, size=(3, 256, 256))
        out = nn.forward(model, x).as_array()
        assert out.shape[0] == 21
        assert out.ndim == 3
        classes = out.argmax(axis=0)
        assert classes.min() >= 0 and classes.max() < 21

    def test_save_load_round_trip(self):
        model = standins.segmentation_standin(seed=4)
        assert nn.load_model(nn.save_model(model)) == model

    def test_deterministic_per_seed(self):
        assert standins.segmentation_standin(seed=2) == standins.segmentation_standin(seed=2)
        assert standins.segmentation_standin(seed=2) != standins.segmentation_standin(seed=3)


class TestClassifierStandin:
    def test_scores_all_categories(self):
        model = standins.classifier_standin()
        assert model.output_spec.kind == "whole_input_classes"
        assert len(model.output_spec.labels) == 1000
        x = np.random.default_rng(0).uniform(-1, 1, size=(3, 256, 256))
        out = nn.forward(model, x).as_array()
        assert out.shape == (1000,)

    def test_top_ten_table(self):
        model = standins.classifier_standin()
        x = np.random.default_rng(0).uniform(-1, 1, size=(3, 256, 256))
        logits = nn.forward(model, x)
        table = map_classification_output(logits, model.output_spec, top_k=10)
        assert len(table.columns[0][1].tuples()) == 10

    def test_save_load_round_trip(self):
        model = standins.classifier_standin(seed=1)
        assert nn.load_model(nn.save_model(model)) == model
