import numpy as np
import pytest

from fieldlens.core_data import (
    ConversionError,
    DataArray,
    ImageDataset,
    RectilinearDataset,
    TableDataset,
    TensorND,
    array_to_tensor,
    greyscale_to_rgb,
    image_to_rectilinear,
    rectilinear_to_image,
    tensor_to_array,
)


def test_data_array_tuples_and_components():
    a = DataArray("v", 3, np.arange(12.0))
    assert a.n_tuples == 4
    assert a.tuples().shape == (4, 3)
    assert a.tuples()[1].tolist() == [3.0, 4.0, 5.0]


def test_data_array_rejects_miscounted_values():
    with pytest.raises(ValueError, match="not divisible"):
        DataArray("v", 3, np.arange(10.0))


def test_data_array_rejects_nan():
    with pytest.raises(ValueError, match="non-finite"):
        DataArray("s", 1, [1.0, np.nan])


def test_data_array_values_read_only():
    a = DataArray("s", 1, [1.0, 2.0])
    with pytest.raises(ValueError):
        a.values[0] = 5.0


def test_image_dataset_validates_array_length():
    ok = DataArray("s", 1, np.zeros(6))
    ImageDataset((3, 2, 1), point_arrays=(ok,))
    bad = DataArray("s", 1, np.zeros(5))
    with pytest.raises(ValueError, match="expected 6"):
        ImageDataset((3, 2, 1), point_arrays=(bad,))


def test_image_dataset_rejects_nonpositive_spacing():
    with pytest.raises(ValueError, match="spacing"):
        ImageDataset((2, 2, 1), spacing=(1.0, 0.0, 1.0))


def test_rectilinear_requires_increasing_coords():
    with pytest.raises(ValueError, match="strictly increasing"):
        RectilinearDataset([0.0, 1.0, 1.0], [0.0], [0.0])


def test_table_mixed_columns_and_row_count():
    t = TableDataset(
        (
            ("rank", DataArray("rank", 1, [1.0, 2.0])),
            ("label", ("cat", "dog")),
        )
    )
    assert t.n_rows == 2
    assert t.column("label") == ("cat", "dog")
    with pytest.raises(ValueError, match="expected 2"):
        TableDataset((("a", DataArray("a", 1, [1.0, 2.0])), ("b", ("x",))))


def test_tensor_shape_count_must_match():
    with pytest.raises(ValueError, match="needs 6"):
        TensorND((2, 3), np.zeros(5))


def test_array_tensor_round_trip_is_bitwise():
    rng = np.random.default_rng(7)
    vals = rng.standard_normal(24)
    a = DataArray("v", 3, vals)
    t = array_to_tensor(a, (2, 4, 3))
    back = tensor_to_array(t, "v", 3)
    assert back == a
    assert back.values.tobytes() == a.values.tobytes()


def test_array_to_tensor_count_mismatch_message():
    a = DataArray("s", 1, np.zeros(10))
    with pytest.raises(ConversionError, match=r"element count 10 ≠ 12"):
        array_to_tensor(a, (3, 4))


def test_tensor_to_array_component_mismatch():
    t = TensorND((5,), np.zeros(5))
    with pytest.raises(ConversionError, match="not divisible"):
        tensor_to_array(t, "v", 3)


def test_image_rectilinear_round_trip_preserves_geometry():
    arr = DataArray("s", 1, np.arange(12.0))
    img = ImageDataset((3, 2, 2), origin=(1.0, -2.0, 0.5), spacing=(0.25, 0.5, 2.0), point_arrays=(arr,))
    rect = image_to_rectilinear(img)
    assert rect.dims == img.dims
    assert rect.x_coords.tolist() == [1.0, 1.25, 1.5]
    back = rectilinear_to_image(rect)
    assert back.dims == img.dims
    assert back.origin == img.origin
    assert back.spacing == img.spacing
    assert back.point_arrays[0] == arr


def test_rectilinear_to_image_rejects_nonuniform():
    rect = RectilinearDataset([0.0, 1.0, 2.5], [0.0], [0.0])
    with pytest.raises(ConversionError, match="not uniformly spaced"):
        rectilinear_to_image(rect)


def test_rectilinear_to_image_tolerates_tiny_jitter():
    x = np.array([0.0, 1.0, 2.0 + 1e-12])
    rect = RectilinearDataset(x, [0.0], [0.0])
    img = rectilinear_to_image(rect)
    assert img.spacing[0] == 1.0


def test_greyscale_to_rgb_replicates_channel():
    g = DataArray("img", 1, [5.0, 7.0])
    rgb = greyscale_to_rgb(g)
    assert rgb.components == 3
    assert rgb.tuples().tolist() == [[5.0, 5.0, 5.0], [7.0, 7.0, 7.0]]
    with pytest.raises(ConversionError):
        greyscale_to_rgb(rgb)
