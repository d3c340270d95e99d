"""Dataset ingestion, preprocessing, synthesis, and the archive container.

Raw sources are either CIFAR-10 binary batches (3073-byte records: one
label byte then 3072 pixel bytes, 1024 per RGB plane, row-major 32x32) or
a deterministic synthetic generator. Preprocessing is pixel/255 followed
by subtracting the per-channel mean of the training split; the mean is
stored so downstream consumers never re-derive it.

The archive ("GDND") stores the preprocessed images once plus per-split
index records and the channel mean, using the same named-tensor records as
the checkpoint container.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (BadMagicError, BadVersionError, ConfigError, FormatError,
                     IngestError, InputError)
from .records import read_exact, read_u32, read_record, write_record, write_u32

IMAGE_SHAPE = (3, 32, 32)
PIXELS = 3072
RECORD_BYTES = PIXELS + 1
CIFAR_CLASSES = 10
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"

DATA_MAGIC = b"GDND"
DATA_VERSION = 1

# synthetic difficulty: each class is a small bank of windowed blob
# patterns drawn at a jittered canvas position. Pattern variety rewards
# filter diversity and the position jitter defeats fixed-pixel template
# matching, so accuracy tracks model capacity instead of saturating.
SYN_AMPLITUDE = 80.0        # pattern contrast above the 128 base level
SYN_NOISE = 40.0            # additive per-pixel Gaussian noise
_SYN_TEMPLATE_STREAM = 7001
_SYN_NOISE_STREAM = 7002    # per-image RNG substream
_SYN_VARIANTS = 4           # blob patterns per class
_SYN_PATCH = 16             # pattern side length in pixels
_SYN_JITTER = 2.0           # stddev of the per-image pattern offset
_SYN_WINDOW_SIGMA = 5.0     # Gaussian window that softens the pattern edge


# ------------------------------------------------------------- ingestion


def parse_cifar_batch(data: bytes, source: str = "<memory>"):
    """Split one CIFAR-10 binary batch into label and pixel arrays.
    Errors carry the byte offset of the offending record."""
    n, rem = divmod(len(data), RECORD_BYTES)
    if rem != 0:
        raise IngestError(f"{source}: trailing partial record of {rem} bytes",
                          offset=n * RECORD_BYTES)
    if n == 0:
        raise IngestError(f"{source}: no records", offset=0)
    rec = np.frombuffer(data, dtype=np.uint8).reshape(n, RECORD_BYTES)
    labels = rec[:, 0]
    bad = np.nonzero(labels >= CIFAR_CLASSES)[0]
    if bad.size:
        idx = int(bad[0])
        raise IngestError(f"{source}: label {labels[idx]} out of range at record {idx}",
                          offset=idx * RECORD_BYTES)
    return labels.copy(), rec[:, 1:].copy()


def serialize_cifar_batch(labels: np.ndarray, pixels: np.ndarray) -> bytes:
    if labels.shape[0] != pixels.shape[0] or pixels.shape[1] != PIXELS:
        raise InputError(f"labels {labels.shape} and pixels {pixels.shape} do not pair up")
    rec = np.empty((labels.shape[0], RECORD_BYTES), np.uint8)
    rec[:, 0] = labels
    rec[:, 1:] = pixels
    return rec.tobytes()


def load_cifar_dir(dirpath):
    """Read the six canonical batch files. Returns ((train labels, train
    pixels), (test labels, test pixels)) with the five training batches
    concatenated in file order."""
    dirpath = Path(dirpath)
    parts = []
    for fname in CIFAR_TRAIN_FILES:
        p = dirpath / fname
        if not p.is_file():
            raise IngestError(f"missing CIFAR-10 batch file {p}")
        parts.append(parse_cifar_batch(p.read_bytes(), source=fname))
    test_path = dirpath / CIFAR_TEST_FILE
    if not test_path.is_file():
        raise IngestError(f"missing CIFAR-10 batch file {test_path}")
    test = parse_cifar_batch(test_path.read_bytes(), source=CIFAR_TEST_FILE)
    labels = np.concatenate([lab for lab, _ in parts])
    pixels = np.concatenate([pix for _, pix in parts])
    return (labels, pixels), test


# ------------------------------------------------------------- synthetic


def _synthetic_patterns(num_classes: int, seed: int) -> np.ndarray:
    """Blob pattern bank, shape [C, V, 3, P, P], zero-mean float."""
    side = _SYN_PATCH
    coarse = side // 4
    rng = np.random.default_rng([seed, _SYN_TEMPLATE_STREAM])
    raw = rng.uniform(-1.0, 1.0,
                      size=(num_classes, _SYN_VARIANTS, 3, coarse, coarse))
    # upsample 4x so the patterns are smooth low-frequency blotches
    pats = np.kron(raw, np.ones((4, 4)))
    half = (side - 1) / 2.0
    yy, xx = np.mgrid[0:side, 0:side]
    window = np.exp(-((yy - half) ** 2 + (xx - half) ** 2)
                    / (2.0 * _SYN_WINDOW_SIGMA ** 2))
    return pats * window


def make_synthetic_raw(count: int, num_classes: int = 10, seed: int = 0):
    """Deterministic Gaussian-blob classes in CIFAR byte layout. Each class
    owns a small bank of smooth blob patterns; every image stamps one of
    them at a randomly offset canvas position and adds pixel noise. The
    offsets rule out classifying by fixed pixel templates, so accuracy
    reflects how well a model covers the pattern bank across positions.
    Labels cycle 0..num_classes-1 so every slice is nearly balanced."""
    if count < 1:
        raise InputError(f"synthetic count must be >= 1, got {count}")
    if not 2 <= num_classes <= 256:
        raise ConfigError(f"num_classes must be in 2..256, got {num_classes}")
    pats = _synthetic_patterns(num_classes, seed)
    side = _SYN_PATCH
    span = IMAGE_SHAPE[1] - side
    labels = (np.arange(count) % num_classes).astype(np.uint8)
    pixels = np.empty((count, PIXELS), np.uint8)
    for i in range(count):
        rng = np.random.default_rng([seed, _SYN_NOISE_STREAM, i])
        variant = int(rng.integers(_SYN_VARIANTS))
        dy, dx = rng.standard_normal(2) * _SYN_JITTER
        y0 = int(np.clip(round(span / 2.0 + dy), 0, span))
        x0 = int(np.clip(round(span / 2.0 + dx), 0, span))
        img = rng.standard_normal((3,) + IMAGE_SHAPE[1:]) * SYN_NOISE + 128.0
        img[:, y0:y0 + side, x0:x0 + side] += (
            SYN_AMPLITUDE * pats[labels[i], variant])
        pixels[i] = np.clip(img, 0.0, 255.0).astype(np.uint8).reshape(PIXELS)
    return labels, pixels


# ---------------------------------------------------------- preprocessing


@dataclass
class Dataset:
    images: np.ndarray   # float32 [N, 3, 32, 32], preprocessed
    labels: np.ndarray   # int64 [N]
    num_classes: int

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[1:] != IMAGE_SHAPE:
            raise InputError(f"images shape {self.images.shape}, expected (N,) + {IMAGE_SHAPE}")
        if self.labels.shape != (self.images.shape[0],):
            raise InputError(f"{self.labels.shape[0]} labels for {self.images.shape[0]} images")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InputError(f"labels outside [0, {self.num_classes})")

    def __len__(self):
        return self.images.shape[0]


@dataclass
class DataBundle:
    train: Dataset
    val: Dataset
    test: Dataset
    channel_mean: np.ndarray  # float32 [3]
    num_classes: int


def to_images(pixels: np.ndarray) -> np.ndarray:
    if pixels.ndim != 2 or pixels.shape[1] != PIXELS:
        raise InputError(f"pixel array shape {pixels.shape}, expected (N, {PIXELS})")
    return (pixels.astype(np.float32) / np.float32(255.0)).reshape(-1, *IMAGE_SHAPE)


def channel_mean_of(images: np.ndarray) -> np.ndarray:
    return images.mean(axis=(0, 2, 3), dtype=np.float64).astype(np.float32)


def build_bundle(train_raw, test_raw, val_count: int, num_classes: int = 10) -> DataBundle:
    """Preprocess raw (labels, pixels) pairs into train/val/test datasets.
    The validation split is the last val_count training records; the
    channel mean comes from the remaining training records only."""
    train_labels, train_pixels = train_raw
    test_labels, test_pixels = test_raw
    n = train_labels.shape[0]
    if not 1 <= val_count < n:
        raise ConfigError(f"val_count {val_count} must be in 1..{n - 1}")
    images = to_images(train_pixels)
    cut = n - val_count
    mean = channel_mean_of(images[:cut])
    images -= mean[None, :, None, None]
    test_images = to_images(test_pixels) - mean[None, :, None, None]
    lab = train_labels.astype(np.int64)
    return DataBundle(
        train=Dataset(np.ascontiguousarray(images[:cut]), lab[:cut], num_classes),
        val=Dataset(np.ascontiguousarray(images[cut:]), lab[cut:], num_classes),
        test=Dataset(test_images, test_labels.astype(np.int64), num_classes),
        channel_mean=mean, num_classes=num_classes)


# --------------------------------------------------------------- archive


def save_archive(bundle: DataBundle, path):
    """Write the bundle as one container: images stored once, splits as
    index records, mean alongside. Indices are exact in float32 up to
    2^24 records."""
    datasets = (bundle.train, bundle.val, bundle.test)
    images = np.concatenate([d.images for d in datasets])
    labels = np.concatenate([d.labels for d in datasets])
    offsets = np.cumsum([0] + [len(d) for d in datasets])
    if images.shape[0] >= (1 << 24):
        raise ConfigError("archive index exceeds exact float32 range")
    with open(path, "wb") as f:
        f.write(DATA_MAGIC)
        write_u32(f, DATA_VERSION)
        write_u32(f, bundle.num_classes)
        write_record(f, "images", images)
        write_record(f, "labels", labels.astype(np.float32))
        for name, (a, b) in zip(("train.idx", "val.idx", "test.idx"),
                                zip(offsets[:-1], offsets[1:])):
            write_record(f, name, np.arange(a, b, dtype=np.float32))
        write_record(f, "channel_mean", bundle.channel_mean)
    return Path(path)


def load_archive(path) -> DataBundle:
    with open(path, "rb") as f:
        magic = read_exact(f, 4, "the magic bytes")
        if magic != DATA_MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {DATA_MAGIC!r}")
        version = read_u32(f, "the version field")
        if version != DATA_VERSION:
            raise BadVersionError(f"unsupported version {version}, expected {DATA_VERSION}")
        num_classes = read_u32(f, "the class count")
        recs = {}
        for expected in ("images", "labels", "train.idx", "val.idx", "test.idx",
                         "channel_mean"):
            rec = read_record(f)
            if rec is None:
                raise FormatError(f"missing record {expected!r}")
            name, arr = rec
            if name != expected:
                raise FormatError(f"expected record {expected!r}, found {name!r}")
            recs[name] = arr
        if read_record(f) is not None:
            raise FormatError("trailing data after the final record")
    images = recs["images"]
    if images.ndim != 4 or images.shape[1:] != IMAGE_SHAPE:
        raise FormatError(f"images record has shape {images.shape}")
    labels_f = recs["labels"]
    if labels_f.shape != (images.shape[0],):
        raise FormatError(f"labels record has shape {labels_f.shape} for {images.shape[0]} images")
    if not np.all(labels_f == np.floor(labels_f)):
        raise FormatError("labels record holds non-integral values")
    labels = labels_f.astype(np.int64)
    if recs["channel_mean"].shape != (IMAGE_SHAPE[0],):
        raise FormatError(f"channel_mean record has shape {recs['channel_mean'].shape}")

    def split(name):
        idx_f = recs[name]
        if idx_f.ndim != 1 or not np.all(idx_f == np.floor(idx_f)):
            raise FormatError(f"{name} record is not an index vector")
        idx = idx_f.astype(np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= images.shape[0]):
            raise FormatError(f"{name} record indexes outside the image table")
        return Dataset(np.ascontiguousarray(images[idx]),
                       labels[idx], num_classes)

    return DataBundle(split("train.idx"), split("val.idx"), split("test.idx"),
                      recs["channel_mean"], num_classes)
