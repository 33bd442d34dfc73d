"""MNIST IDX ingestion and seeded shuffling."""

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_ROOT_ENV = "ELEPHANT_DATA_ROOT"

# (images, labels) file names; both the dotted and dashed spellings are in circulation
MNIST_FILES = {
    "train": [("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
              ("train-images.idx3-ubyte", "train-labels.idx1-ubyte")],
    "test": [("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
             ("t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte")],
}


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    input_shape: tuple = (28, 28)

    def __post_init__(self):
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise IdxFormatError(
                f"{self.inputs.shape[0]} images but {self.labels.shape[0]} labels"
            )

    def __len__(self):
        return self.labels.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, LabeledDataset)
            and self.input_shape == other.input_shape
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.labels, other.labels)
        )

    def subset(self, mask):
        return LabeledDataset(self.inputs[mask], self.labels[mask], self.input_shape)


def _read_idx(path, magic, kind):
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IdxFormatError(f"{path}: file too short for an IDX header")
    (seen,) = struct.unpack(">I", raw[:4])
    if seen != magic:
        raise IdxFormatError(f"{path}: bad {kind} magic 0x{seen:08x}, expected 0x{magic:08x}")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims))
    payload = len(raw) - header
    if payload != expected:
        raise IdxFormatError(
            f"{path}: payload has {payload} bytes, header dimensions {dims} need {expected}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path):
    """Parse an IDX image/label pair; pixels come back as float64 in [0, 1]."""
    images = _read_idx(images_path, IMAGE_MAGIC, "image")
    labels = _read_idx(labels_path, LABEL_MAGIC, "label")
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"{images.shape[0]} images in {images_path} but {labels.shape[0]} labels in {labels_path}"
        )
    if labels.size and labels.max() >= 10:
        raise IdxFormatError(f"{labels_path}: label {labels.max()} outside [0, 10)")
    shape = tuple(images.shape[1:])
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LabeledDataset(inputs=inputs, labels=labels.astype(np.int64), input_shape=shape)


def resolve_data_root(root=None):
    """Explicit argument, then ``$ELEPHANT_DATA_ROOT``, then ``~/data/mnist``."""
    if root:
        return Path(root)
    if os.environ.get(DATA_ROOT_ENV):
        return Path(os.environ[DATA_ROOT_ENV])
    return Path.home() / "data" / "mnist"


def find_mnist(root=None, split="train"):
    root = resolve_data_root(root)
    for images, labels in MNIST_FILES[split]:
        if (root / images).exists() and (root / labels).exists():
            return root / images, root / labels
    raise FileNotFoundError(f"no MNIST {split} files under {root} (set {DATA_ROOT_ENV})")


def load_mnist(root=None, split="train"):
    return load_idx(*find_mnist(root, split))


def make_rng(seed):
    """The package-wide PRNG: numpy's PCG64 bit generator, stable across platforms."""
    return np.random.Generator(np.random.PCG64(seed))


def seeded_shuffle(items, seed):
    """Return a uniformly random permutation of ``items`` drawn from PCG64(seed)."""
    items = list(items)
    order = make_rng(seed).permutation(len(items))
    return [items[i] for i in order]
