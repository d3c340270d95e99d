"""Ingestion, preprocessing, synthesis, and the dataset archive."""

import numpy as np
import pytest

import gdnn.data as data
from gdnn.data import (DataBundle, Dataset, RECORD_BYTES, build_bundle,
                       channel_mean_of, load_archive, load_cifar_dir,
                       make_synthetic_raw, parse_cifar_batch, save_archive,
                       serialize_cifar_batch, to_images)
from gdnn.errors import (BadMagicError, BadVersionError, ConfigError,
                         FormatError, IngestError, InputError)

F32 = np.float32


def fake_batch(rng, n, start_label=0):
    labels = ((np.arange(n) + start_label) % 10).astype(np.uint8)
    pixels = rng.integers(0, 256, (n, 3072), dtype=np.uint8)
    return labels, pixels


# -------------------------------------------------------------- ingestion


def test_parse_round_trip(rng):
    labels, pixels = fake_batch(rng, 7)
    blob = serialize_cifar_batch(labels, pixels)
    assert len(blob) == 7 * RECORD_BYTES
    got_labels, got_pixels = parse_cifar_batch(blob)
    np.testing.assert_array_equal(got_labels, labels)
    np.testing.assert_array_equal(got_pixels, pixels)
    assert serialize_cifar_batch(got_labels, got_pixels) == blob


def test_partial_record_reports_offset(rng):
    labels, pixels = fake_batch(rng, 3)
    blob = serialize_cifar_batch(labels, pixels)
    with pytest.raises(IngestError) as exc:
        parse_cifar_batch(blob[:-1])
    assert exc.value.offset == 2 * RECORD_BYTES
    assert str(2 * RECORD_BYTES) in str(exc.value)


def test_out_of_range_label_reports_offset(rng):
    labels, pixels = fake_batch(rng, 4)
    labels = labels.copy()
    labels[2] = 11
    with pytest.raises(IngestError) as exc:
        parse_cifar_batch(serialize_cifar_batch(labels, pixels))
    assert exc.value.offset == 2 * RECORD_BYTES


def test_empty_batch_is_an_error():
    with pytest.raises(IngestError):
        parse_cifar_batch(b"")


def test_load_cifar_dir(tmp_path, rng):
    for i in range(1, 6):
        labels, pixels = fake_batch(rng, 20, start_label=i)
        (tmp_path / f"data_batch_{i}.bin").write_bytes(
            serialize_cifar_batch(labels, pixels))
    labels, pixels = fake_batch(rng, 10)
    (tmp_path / "test_batch.bin").write_bytes(serialize_cifar_batch(labels, pixels))
    (train_labels, train_pixels), (test_labels, test_pixels) = load_cifar_dir(tmp_path)
    assert train_labels.shape == (100,)
    assert train_pixels.shape == (100, 3072)
    assert test_labels.shape == (10,)
    # batches concatenate in file order
    assert train_labels[0] == 1 and train_labels[20] == 2


def test_load_cifar_dir_missing_file(tmp_path):
    with pytest.raises(IngestError):
        load_cifar_dir(tmp_path)


# -------------------------------------------------------------- synthetic


def test_synthetic_is_deterministic():
    a = make_synthetic_raw(30, 10, seed=7)
    b = make_synthetic_raw(30, 10, seed=7)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    c = make_synthetic_raw(30, 10, seed=8)
    assert not np.array_equal(a[1], c[1])


def test_synthetic_prefix_stability():
    # a longer request extends the sequence without changing earlier images
    short = make_synthetic_raw(10, 4, seed=3)
    long = make_synthetic_raw(25, 4, seed=3)
    np.testing.assert_array_equal(long[0][:10], short[0])
    np.testing.assert_array_equal(long[1][:10], short[1])


def test_synthetic_labels_cycle():
    labels, pixels = make_synthetic_raw(23, 5, seed=0)
    np.testing.assert_array_equal(labels, np.arange(23) % 5)
    assert pixels.dtype == np.uint8
    assert pixels.shape == (23, 3072)


def test_synthetic_validation():
    with pytest.raises(InputError):
        make_synthetic_raw(0, 10)
    with pytest.raises(ConfigError):
        make_synthetic_raw(5, 1)
    with pytest.raises(ConfigError):
        make_synthetic_raw(5, 300)


def test_synthetic_classes_are_separated():
    # same-class images must correlate more with their template than others
    labels, pixels = make_synthetic_raw(40, 4, seed=1)
    imgs = pixels.astype(np.float64) - 128.0
    means = np.stack([imgs[labels == c].mean(axis=0) for c in range(4)])
    for c in range(4):
        sims = means @ means[c]
        assert np.argmax(sims) == c


# ---------------------------------------------------------- preprocessing


def test_to_images_scales_and_shapes(rng):
    pixels = rng.integers(0, 256, (5, 3072), dtype=np.uint8)
    imgs = to_images(pixels)
    assert imgs.shape == (5, 3, 32, 32)
    assert imgs.dtype == np.float32
    assert float(imgs.max()) <= 1.0 and float(imgs.min()) >= 0.0
    # red plane comes first in the record layout
    assert imgs[0, 0, 0, 0] == F32(pixels[0, 0] / np.float32(255.0))


def test_build_bundle_splits_and_mean(rng):
    labels, pixels = fake_batch(rng, 50)
    test_raw = fake_batch(rng, 12)
    bundle = build_bundle((labels, pixels), test_raw, val_count=10)
    assert len(bundle.train) == 40
    assert len(bundle.val) == 10
    assert len(bundle.test) == 12
    # validation is the LAST slice of the training pool
    np.testing.assert_array_equal(bundle.val.labels, labels[40:].astype(np.int64))
    # the mean comes from the first 40 records only, so the train split is
    # exactly zero-mean per channel
    np.testing.assert_allclose(bundle.train.images.mean(axis=(0, 2, 3)),
                               np.zeros(3), atol=1e-6)
    raw_val = to_images(pixels)[40:]
    np.testing.assert_array_equal(
        bundle.val.images, raw_val - bundle.channel_mean[None, :, None, None])


def test_build_bundle_rejects_bad_val_count(rng):
    raw = fake_batch(rng, 10)
    with pytest.raises(ConfigError):
        build_bundle(raw, raw, val_count=10)
    with pytest.raises(ConfigError):
        build_bundle(raw, raw, val_count=0)


def test_dataset_validation(rng):
    with pytest.raises(InputError):
        Dataset(np.zeros((2, 3, 32, 31), F32), np.zeros(2, np.int64), 10)
    with pytest.raises(InputError):
        Dataset(np.zeros((2, 3, 32, 32), F32), np.zeros(3, np.int64), 10)
    with pytest.raises(InputError):
        Dataset(np.zeros((2, 3, 32, 32), F32), np.array([0, 10]), 10)


# ------------------------------------------------------------------ archive


@pytest.fixture
def bundle(rng):
    labels, pixels = fake_batch(rng, 30)
    return build_bundle((labels, pixels), fake_batch(rng, 8), val_count=6)


def test_archive_round_trip_bit_exact(bundle, tmp_path):
    path = tmp_path / "d.gdnd"
    save_archive(bundle, path)
    loaded = load_archive(path)
    for split in ("train", "val", "test"):
        a, b = getattr(bundle, split), getattr(loaded, split)
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(bundle.channel_mean, loaded.channel_mean)
    assert loaded.num_classes == bundle.num_classes
    # resaving reproduces the file byte for byte
    path2 = tmp_path / "d2.gdnd"
    save_archive(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_archive_bad_magic(bundle, tmp_path):
    path = tmp_path / "d.gdnd"
    save_archive(bundle, path)
    blob = path.read_bytes()
    path.write_bytes(b"NOPE" + blob[4:])
    with pytest.raises(BadMagicError):
        load_archive(path)


def test_archive_bad_version(bundle, tmp_path):
    path = tmp_path / "d.gdnd"
    save_archive(bundle, path)
    blob = bytearray(path.read_bytes())
    blob[4] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(BadVersionError):
        load_archive(path)


def test_archive_trailing_garbage(bundle, tmp_path):
    path = tmp_path / "d.gdnd"
    save_archive(bundle, path)
    path.write_bytes(path.read_bytes() + b"\x05\x00\x00\x00extra" +
                     b"\x01\x00\x00\x00\x01\x00\x00\x00" + b"\0" * 4)
    with pytest.raises(FormatError):
        load_archive(path)


def test_archive_missing_record(bundle, tmp_path):
    path = tmp_path / "d.gdnd"
    save_archive(bundle, path)
    blob = path.read_bytes()
    # drop everything from the channel_mean record onward
    idx = blob.index(b"channel_mean") - 4
    path.write_bytes(blob[:idx])
    with pytest.raises(FormatError):
        load_archive(path)


def test_channel_mean_of_matches_manual(rng):
    imgs = rng.random((4, 3, 32, 32)).astype(F32)
    np.testing.assert_allclose(channel_mean_of(imgs),
                               imgs.astype(np.float64).mean(axis=(0, 2, 3)),
                               rtol=1e-6)
