import gzip
import os

import numpy as np
import pytest

from fedchain.data import (
    IdxFormatError, IdxLengthError, class_balanced_split, gen_synthetic, load_mnist_subset, mnist_files, parse_idx,
    read_idx, write_idx,
)

# 2 images of 2x3 pixels, written out byte by byte
HAND_IMAGES = bytes([0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3]) + bytes(range(12))
HAND_LABELS = bytes([0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9])


def test_read_hand_built_images():
    header, arr = read_idx(HAND_IMAGES)
    assert header.magic == 0x803 and header.dims == (2, 2, 3) and header.size == 12
    assert arr.dtype == np.uint8
    assert arr[1, 1, 2] == 11


def test_parse_scales_images_and_keeps_labels():
    assert parse_idx(HAND_IMAGES)[0, 0, 1] == pytest.approx(1 / 255)
    labels = parse_idx(HAND_LABELS)
    assert labels.dtype == np.int64 and labels.tolist() == [7, 0, 9]


def test_write_matches_hand_bytes():
    assert write_idx(np.arange(12, dtype=np.uint8).reshape(2, 2, 3)) == HAND_IMAGES
    assert write_idx(np.array([7, 0, 9])) == HAND_LABELS


def test_gzip_and_path_sources(tmp_path):
    p = tmp_path / "labels.gz"
    p.write_bytes(gzip.compress(HAND_LABELS))
    assert parse_idx(p).tolist() == [7, 0, 9]


@pytest.mark.parametrize("data,err", [
    (HAND_IMAGES[:-1], IdxLengthError),
    (HAND_IMAGES[:10], IdxLengthError),
    (b"\x00\x00", IdxLengthError),
    (HAND_LABELS + b"\x00", IdxFormatError),
    (b"\x00\x00\x08\x02" + HAND_LABELS[4:], IdxFormatError),
])
def test_malformed_streams(data, err):
    with pytest.raises(err):
        read_idx(data)


def test_write_rejects_bad_arrays():
    with pytest.raises(IdxFormatError):
        write_idx(np.zeros((2, 2)))
    with pytest.raises(IdxFormatError):
        write_idx(np.array([256]))


def test_class_balanced_split_is_disjoint():
    labels = np.repeat(np.arange(3), 20)
    a, b = class_balanced_split(labels, [5, 4], 3, seed=0)
    assert not set(a) & set(b)
    assert np.bincount(labels[a]).tolist() == [5, 5, 5]
    assert np.bincount(labels[b]).tolist() == [4, 4, 4]
    with pytest.raises(ValueError):
        class_balanced_split(labels, [15, 6], 3, seed=0)


def test_pool_directory_split(tmp_path):
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(10), 12)
    images = rng.integers(0, 256, size=(labels.size, 28, 28), dtype=np.uint8)
    (tmp_path / "images-idx3-ubyte").write_bytes(write_idx(images))
    (tmp_path / "labels-idx1-ubyte").write_bytes(write_idx(labels))
    train, test = load_mnist_subset(tmp_path, train_size=50, test_size=20, seed=1)
    assert train.features.shape == (50, 784) and len(test) == 20
    assert np.bincount(train.labels).tolist() == [5] * 10
    # no image lands in both subsets
    rows = {r.tobytes() for r in train.features}
    assert not rows & {r.tobytes() for r in test.features}


def test_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        mnist_files(tmp_path)


def test_synthetic_is_seeded_and_balanced():
    a, at = gen_synthetic(classes=5, samples=100, feature_dim=4, seed=2)
    b, _ = gen_synthetic(classes=5, samples=100, feature_dim=4, seed=2)
    assert np.array_equal(a.features, b.features)
    assert np.bincount(a.labels).tolist() == [20] * 5
    assert len(at) == 20 and a.features.shape == (100, 4)
    with pytest.raises(ValueError):
        gen_synthetic(classes=0)


def test_bundled_subset(mnist_subset):
    train, test = mnist_subset
    assert train.features.shape == (5000, 784) and len(test) == 1000
    assert np.bincount(train.labels, minlength=10).tolist() == [500] * 10
    assert 0.0 <= train.features.min() and train.features.max() <= 1.0


@pytest.mark.skipif(not os.environ.get("FEDCHAIN_MNIST_DIR"), reason="set FEDCHAIN_MNIST_DIR to the official files")
def test_official_training_file_size():
    files = mnist_files(os.environ["FEDCHAIN_MNIST_DIR"])
    header, _ = read_idx(files["train_images"])
    assert header.dims == (60000, 28, 28)
