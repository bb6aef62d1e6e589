"""MNIST IDX loading, pixel binarization and seeded dataset splits."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
SIDE = 28
N_PIXELS = SIDE * SIDE


class IdxError(ValueError):
    """Base class for malformed IDX input."""


class BadMagicError(IdxError):
    pass


class TruncatedPayloadError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


class InsufficientItemsError(ValueError):
    pass


@dataclass(frozen=True)
class ImageSet:
    images: np.ndarray  # (n, 28, 28) uint8
    labels: np.ndarray  # (n,) uint8
    source: str = "train"

    def __post_init__(self):
        if self.images.ndim != 3 or self.images.shape[1:] != (SIDE, SIDE):
            raise ValueError(f"images must be (n, 28, 28), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if len(self.labels) and int(self.labels.max()) > 9:
            raise ValueError("labels must be in 0..9")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "ImageSet":
        idx = np.asarray(indices, dtype=np.int64)
        return ImageSet(self.images[idx], self.labels[idx], self.source)

    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), N_PIXELS)


def _read_header(buf: bytes, magic: int, ndims: int, path) -> tuple[int, ...]:
    need = 4 * (1 + ndims)
    if len(buf) < need:
        raise TruncatedPayloadError(f"{path}: header shorter than {need} bytes")
    got = struct.unpack(">I", buf[:4])[0]
    if got != magic:
        raise BadMagicError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    return struct.unpack(f">{ndims}I", buf[4:need])


def read_idx_images(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    count, rows, cols = _read_header(buf, IMAGE_MAGIC, 3, path)
    size = count * rows * cols
    payload = buf[16:]
    if len(payload) < size:
        raise TruncatedPayloadError(f"{path}: expected {size} pixel bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8, count=size).reshape(count, rows, cols).copy()


def read_idx_labels(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    (count,) = _read_header(buf, LABEL_MAGIC, 1, path)
    payload = buf[8:]
    if len(payload) < count:
        raise TruncatedPayloadError(f"{path}: expected {count} label bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8, count=count).copy()


def load_idx(images_path, labels_path, source: str = "train") -> ImageSet:
    """Load an IDX image/label pair; header counts are honored exactly."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise CountMismatchError(
            f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels"
        )
    if images.shape[1:] != (SIDE, SIDE):
        raise IdxError(f"{images_path}: images are {images.shape[1:]}, expected 28x28")
    return ImageSet(images, labels, source)


def idx_bytes(images: np.ndarray, labels: np.ndarray) -> tuple[bytes, bytes]:
    n, rows, cols = images.shape
    img = struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + np.ascontiguousarray(images, np.uint8).tobytes()
    lab = struct.pack(">II", LABEL_MAGIC, len(labels)) + np.ascontiguousarray(labels, np.uint8).tobytes()
    return img, lab


def write_idx(image_set: ImageSet, images_path, labels_path) -> None:
    img, lab = idx_bytes(image_set.images, image_set.labels)
    Path(images_path).write_bytes(img)
    Path(labels_path).write_bytes(lab)


def mnist_paths(data_dir, source: str = "train") -> tuple[Path, Path]:
    prefix = "train" if source == "train" else "t10k"
    d = Path(data_dir)
    return d / f"{prefix}-images-idx3-ubyte", d / f"{prefix}-labels-idx1-ubyte"


def load_mnist(data_dir, source: str = "train") -> ImageSet:
    return load_idx(*mnist_paths(data_dir, source), source=source)


def binarize(image: np.ndarray) -> np.ndarray:
    """Return the sorted row-major indices (row*28 + col) of nonzero pixels."""
    return np.flatnonzero(np.asarray(image).reshape(-1) > 0).astype(np.int64)


def active_image(indices: np.ndarray) -> np.ndarray:
    """Inverse of `binarize` onto a 0/1 image."""
    out = np.zeros(N_PIXELS, dtype=np.uint8)
    out[np.asarray(indices, dtype=np.int64)] = 1
    return out.reshape(SIDE, SIDE)


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    embedding_count: int = 9000
    query_count: int = 1000
    repeats: int = 10

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.embedding_count < 1 or self.query_count < 1:
            raise ValueError("embedding_count and query_count must be >= 1")

    def check(self, n_items: int) -> None:
        if self.embedding_count + self.query_count > n_items:
            raise InsufficientItemsError(
                f"plan needs {self.embedding_count + self.query_count} items, only {n_items} available"
            )


def split_indices(n_items: int, plan: SplitPlan, repeat_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded Fisher-Yates permutation of ``range(n_items)``, one stream per repeat."""
    if not 0 <= repeat_index < plan.repeats:
        raise ValueError(f"repeat_index {repeat_index} outside [0, {plan.repeats})")
    plan.check(n_items)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(plan.seed, spawn_key=(repeat_index,))))
    perm = np.arange(n_items)
    # explicit Fisher-Yates so the permutation does not depend on numpy's shuffle internals
    draws = rng.random(n_items)
    for i in range(n_items - 1, 0, -1):
        j = int(draws[i] * (i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    emb = perm[: plan.embedding_count]
    qry = perm[plan.embedding_count : plan.embedding_count + plan.query_count]
    return emb, qry


def split(image_set: ImageSet, plan: SplitPlan, repeat_index: int) -> tuple[ImageSet, ImageSet]:
    emb, qry = split_indices(len(image_set), plan, repeat_index)
    return image_set.subset(emb), image_set.subset(qry)


def balanced_subset(labels: np.ndarray, per_class: int, seed: int, classes=range(10)) -> np.ndarray:
    """First ``per_class`` items of each class after a seeded shuffle, returned in ascending index order."""
    rng = np.random.default_rng(seed)
    picked = []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if len(idx) < per_class:
            raise InsufficientItemsError(f"class {c} has {len(idx)} items, need {per_class}")
        picked.append(rng.permutation(idx)[:per_class])
    return np.sort(np.concatenate(picked))
