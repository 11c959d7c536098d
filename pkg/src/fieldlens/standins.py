"""Small stand-in image models in the native model file format.

Real pretrained segmentation/classification networks are out of scope;
these builders produce randomly initialized models with the same input
contract (256x256 RGB, 1/255 scaling, the usual channel statistics,
grey replication) and output shapes (21 segmentation channels, 1000
classification scores), enough to drive the image filters end to end.
"""

from __future__ import annotations

import numpy as np

from .nn_engine import (
    Conv2D,
    Flatten,
    InputSpec,
    Linear,
    MaxPool2D,
    ModelSpec,
    OutputSpec,
    uniform_init,
)
from .pipeline_engine import default_palette

__all__ = [
    "IMAGENET_MEAN",
    "IMAGENET_STD",
    "image_input_spec",
    "segmentation_standin",
    "classifier_standin",
]

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def image_input_spec() -> InputSpec:
    """256x256 RGB input, 8-bit values rescaled and normalized per channel."""
    return InputSpec(
        shape=(3, 256, 256),
        value_scale=1.0 / 255.0,
        normalize_mean=IMAGENET_MEAN,
        normalize_std=IMAGENET_STD,
        channel_policy="grey_to_rgb",
    )


def _conv(rng: np.random.Generator, in_ch: int, out_ch: int, kernel: int, stride: int, padding: int) -> Conv2D:
    bound = float(np.sqrt(1.0 / (in_ch * kernel * kernel)))
    W = rng.uniform(-bound, bound, size=(out_ch, in_ch, kernel, kernel))
    b = rng.uniform(-bound, bound, size=out_ch)
    return Conv2D(in_ch, out_ch, kernel, stride, padding, W, b)


def segmentation_standin(seed: int = 0) -> ModelSpec:
    """21-channel per-pixel labeler: two convolutions around a pooling step."""
    rng = np.random.default_rng(seed)
    labels = ("background",) + tuple(f"region {i:02d}" for i in range(1, 21))
    return ModelSpec(
        image_input_spec(),
        (
            _conv(rng, 3, 8, kernel=3, stride=2, padding=1),
            MaxPool2D(kernel=2, stride=2),
            _conv(rng, 8, 21, kernel=1, stride=1, padding=0),
        ),
        OutputSpec("per_point_classes", labels, default_palette(21)),
    )


def classifier_standin(seed: int = 0) -> ModelSpec:
    """1000-way whole-image scorer: pooling down to 8x8, then one dense layer."""
    rng = np.random.default_rng(seed)
    W, b = uniform_init(rng, 192, 1000)
    labels = tuple(f"category {i:03d}" for i in range(1000))
    return ModelSpec(
        image_input_spec(),
        (
            MaxPool2D(kernel=8, stride=8),
            MaxPool2D(kernel=4, stride=4),
            Flatten(),
            Linear(192, 1000, W, b),
        ),
        OutputSpec("whole_input_classes", labels, ()),
    )
