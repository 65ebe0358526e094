import numpy as np
import pytest

from chromaforge import classifier, datagen
from chromaforge.datagen import SyntheticSpec

SMALL = SyntheticSpec(samples_per_class=10, image_size=(8, 8), seed=4)


def test_same_seed_same_dataset():
    a_train, a_hold = datagen.generate_synthetic(SMALL)
    b_train, b_hold = datagen.generate_synthetic(SMALL)
    for a, b in zip(a_train + a_hold, b_train + b_hold):
        assert a.label == b.label and np.array_equal(a.image, b.image)
    c_train, _ = datagen.generate_synthetic(SyntheticSpec(samples_per_class=10, image_size=(8, 8), seed=5))
    assert not np.array_equal(a_train[10].image, c_train[10].image)


def test_zero_noise_gives_base_colors():
    spec = SyntheticSpec(samples_per_class=1, texture_noise=0.0, image_size=(4, 4))
    train, holdout = datagen.generate_synthetic(spec)
    for item in train + holdout:
        assert np.array_equal(item.image, np.broadcast_to(datagen.class_base_color(spec, item.label), (4, 4, 3)))
    assert sorted(it.label for it in train + holdout) == list(range(6))


def test_split_is_disjoint_exhaustive_and_valid():
    train, holdout = datagen.generate_synthetic(SMALL)
    assert len(train) + len(holdout) == 60 and len(holdout) == 12
    assert not {id(it) for it in train} & {id(it) for it in holdout}
    for item in train + holdout:
        assert item.image.shape == (8, 8, 3)
        assert item.image.min() >= 0.0 and item.image.max() <= 1.0
    assert {it.label for it in holdout} == set(range(6))


def test_hue_ranges_must_be_separated():
    with pytest.raises(ValueError):
        SyntheticSpec(num_classes=2, palette=[(0.1, 0.3), (0.32, 0.5)])
    with pytest.raises(ValueError):
        SyntheticSpec(num_classes=2, palette=[(0.97, 1.0), (0.0, 0.02)])  # close across the wrap
    with pytest.raises(ValueError):
        SyntheticSpec(num_classes=3, palette=[(0.0, 0.1), (0.5, 0.6)])
    with pytest.raises(ValueError):
        SyntheticSpec(num_classes=1)
    SyntheticSpec(num_classes=2, palette=[(0.1, 0.3), (0.35, 0.5)])


def test_classes_are_separated_by_hue():
    import colorsys

    spec = SyntheticSpec(samples_per_class=5, texture_noise=0.0, image_size=(2, 2))
    train, _ = datagen.generate_synthetic(spec)
    for item in train:
        hue = colorsys.rgb_to_hsv(*item.image[0, 0])[0]
        lo, hi = spec.hues[item.label]
        assert lo - 1e-9 <= hue <= hi + 1e-9


def record(label, r, g, b):
    """One 3073-byte record with constant channel values."""
    return bytes([label]) + bytes([r]) * 1024 + bytes([g]) * 1024 + bytes([b]) * 1024


def test_binary_fixture_decodes(tmp_path):
    first = bytearray(record(3, 255, 0, 51))
    first[1 + 5 * 32 + 7] = 0  # red at row 5, column 7
    (tmp_path / "data_batch_1.bin").write_bytes(bytes(first) + record(9, 10, 20, 30))
    items = datagen.load_binary_batches(tmp_path / "data_batch_1.bin")
    assert [it.label for it in items] == [3, 9]
    assert items[0].image[0, 0].tolist() == [1.0, 0.0, 0.2]
    assert items[0].image[5, 7, 0] == 0.0 and items[0].image[5, 8, 0] == 1.0
    assert np.all(items[1].image == np.array([10, 20, 30]) / 255.0)
    assert len(datagen.load_binary_batches(tmp_path)) == 2


def test_binary_size_and_label_errors(tmp_path):
    bad = tmp_path / "short.bin"
    bad.write_bytes(record(0, 0, 0, 0)[:-1])
    with pytest.raises(ValueError):
        datagen.load_binary_batches(bad)
    ten = tmp_path / "ten.bin"
    ten.write_bytes(record(10, 0, 0, 0))
    with pytest.raises(ValueError):
        datagen.load_binary_batches(ten)
    nine = tmp_path / "nine.bin"
    nine.write_bytes(record(9, 0, 0, 0))
    assert datagen.load_binary_batches(nine)[0].label == 9
    with pytest.raises(FileNotFoundError):
        datagen.load_binary_batches(tmp_path / "empty_dir_missing")


def test_export_round_trip(tmp_path):
    train, _ = datagen.generate_synthetic(SMALL)
    datagen.export_dataset(train[:7], tmp_path)
    back = datagen.load_labeled_dir(tmp_path)
    assert [it.label for it in back] == [it.label for it in train[:7]]
    for a, b in zip(train[:7], back):
        assert np.max(np.abs(a.image - b.image)) <= 1 / 510 + 1e-15


def test_default_spec_is_learnable(desk_models, synthetic):
    assert classifier.accuracy(desk_models["cnn"], synthetic[1]) >= 0.95
