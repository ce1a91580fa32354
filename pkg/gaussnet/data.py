"""Labelled datasets: IDX files, synthetic Gaussian blobs, splitting.

Features are stored as an ``n x m`` matrix whose columns are data points.
"""
import gzip
import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Dict, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike

from gaussnet.base import (
    BadMagicError,
    CountMismatchError,
    DegenerateSplitError,
    DenseMatrix,
    DimensionMismatchError,
    PartitionMatrix,
    TruncatedFileError,
    as_matrix,
)

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
UBYTE = 0x08
PIXEL_SCALE = 255.0

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

PathLike = Union[str, Path]


@dataclass(frozen=True)
class ImageGeometry:
    height: int
    width: int
    channels: int = 1

    @property
    def size(self) -> int:
        return self.height * self.width * self.channels


@dataclass(frozen=True)
class Normalization:
    """Affine map ``x -> (x - offset) / scale`` applied to raw features"""

    offset: float = 0.0
    scale: float = 1.0

    def normalize(self, x: ArrayLike) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.offset) / self.scale

    def denormalize(self, x: ArrayLike) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.scale + self.offset


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: DenseMatrix
    labels: PartitionMatrix
    name: str = ""
    normalization: Normalization = field(default_factory=Normalization)
    geometry: Optional[ImageGeometry] = None

    def __post_init__(self) -> None:
        features = as_matrix(self.features, "features")
        if features.shape[1] != len(self.labels):
            raise DimensionMismatchError(
                features.shape, (len(self.labels),), "features and labels"
            )
        if self.geometry is not None and self.geometry.size != features.shape[0]:
            raise DimensionMismatchError(
                (self.geometry.size,), features.shape, "image geometry and features"
            )
        object.__setattr__(self, "features", features)

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    @property
    def size(self) -> int:
        return self.features.shape[1]

    @property
    def classes(self) -> int:
        return self.labels.classes

    def take(self, indices: ArrayLike) -> "LabeledDataset":
        index = np.asarray(indices, dtype=np.int64)
        return replace(
            self, features=self.features[:, index], labels=self.labels.take(index)
        )

    def sample(self, count: int, seed: int) -> "LabeledDataset":
        """First ``count`` points of a seeded permutation, in permutation order"""
        order = np.random.default_rng(seed).permutation(self.size)
        return self.take(order[: min(count, self.size)])

    def __len__(self) -> int:
        return self.size


def _open(path: Path) -> IO[bytes]:
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path: PathLike, expected_magic: Optional[int] = None) -> np.ndarray:
    """Unsigned-byte IDX array with its declared shape"""
    path = Path(path)
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise TruncatedFileError(4, len(raw), str(path))
    (magic,) = struct.unpack(">I", raw[:4])
    if expected_magic is not None and magic != expected_magic:
        raise BadMagicError(
            f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    if magic >> 16 != 0 or (magic >> 8) & 0xFF != UBYTE:
        raise BadMagicError(
            f"{path}: magic 0x{magic:08x} is not an unsigned-byte IDX file"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(header, len(raw), str(path))
    shape = struct.unpack(f">{ndim}I", raw[4:header])
    expected = header + int(np.prod(shape, dtype=np.int64))
    if len(raw) < expected:
        raise TruncatedFileError(expected, len(raw), str(path))
    pixels = np.frombuffer(raw, dtype=np.uint8, count=expected - header, offset=header)
    return pixels.reshape(shape)


def write_idx(path: PathLike, array: ArrayLike) -> None:
    data = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">I", (UBYTE << 8) | data.ndim) + struct.pack(
        f">{data.ndim}I", *data.shape
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def load_idx(
    images_path: PathLike, labels_path: PathLike, classes: Optional[int] = None
) -> LabeledDataset:
    """Images scaled to [0, 1] by 1/255, one column per image (row-major pixels)"""
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images.shape[0]} images in {images_path} "
            f"but {labels.shape[0]} labels in {labels_path}"
        )
    count, height, width = images.shape
    normalization = Normalization(0.0, PIXEL_SCALE)
    features = normalization.normalize(images.reshape(count, height * width).T)
    logger.info("Loaded %d images of %dx%d from %s", count, height, width, images_path)
    return LabeledDataset(
        features=features,
        labels=PartitionMatrix.from_labels(labels, classes),
        name=Path(images_path).name,
        normalization=normalization,
        geometry=ImageGeometry(height, width, 1),
    )


def save_idx(
    dataset: LabeledDataset, images_path: PathLike, labels_path: PathLike
) -> None:
    if dataset.geometry is None or dataset.geometry.channels != 1:
        raise ValueError("only single-channel image datasets can be written as IDX")
    raw = np.rint(dataset.normalization.denormalize(dataset.features))
    geometry = dataset.geometry
    images = raw.T.reshape(dataset.size, geometry.height, geometry.width)
    write_idx(images_path, images)
    write_idx(labels_path, dataset.labels.assignments)


def _locate(directory: Path, name: str) -> Path:
    for candidate in (directory / name, directory / f"{name}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{name} not found in {directory}")


def load_mnist(directory: PathLike) -> Tuple[LabeledDataset, LabeledDataset]:
    directory = Path(directory)
    train, test = (
        load_idx(_locate(directory, images), _locate(directory, labels), classes=10)
        for images, labels in (MNIST_FILES["train"], MNIST_FILES["test"])
    )
    return train, test


def _blob_mean(k: int, dim: int, separation: float) -> np.ndarray:
    # e_0, ..., e_{dim-1}, then -e_0, ..., then 2 e_0, ...
    mean = np.zeros(dim)
    axis, turn = k % dim, k // dim
    mean[axis] = separation * (turn // 2 + 1) * (-1.0 if turn % 2 else 1.0)
    return mean


def synth_blobs(
    classes: int, per_class: int, dim: int, separation: float, seed: int
) -> LabeledDataset:
    """Isotropic unit-variance Gaussian clusters, one per class.

    Class ``k`` is centred at ``separation * e_k``; when there are more
    classes than dimensions the axes are reused with flipped sign, then with
    growing multiples.
    """
    if classes < 1 or per_class < 1 or dim < 1 or separation < 0:
        raise ValueError("blob parameters must be positive")
    rng = np.random.default_rng(seed)
    features = np.empty((dim, classes * per_class), order="F")
    for k in range(classes):
        block = slice(k * per_class, (k + 1) * per_class)
        noise = rng.standard_normal((dim, per_class))
        features[:, block] = _blob_mean(k, dim, separation)[:, None] + noise
    labels = np.repeat(np.arange(classes), per_class)
    return LabeledDataset(features, PartitionMatrix(labels, classes), name="blobs")


def split(
    dataset: LabeledDataset, fraction: float, seed: int
) -> Tuple[LabeledDataset, LabeledDataset]:
    if not 0.0 < fraction < 1.0:
        raise DegenerateSplitError(f"fraction {fraction} outside (0, 1)")
    count = int(round(fraction * dataset.size))
    if count == 0 or count == dataset.size:
        raise DegenerateSplitError(
            f"fraction {fraction} of {dataset.size} points leaves one side empty"
        )
    order = np.random.default_rng(seed).permutation(dataset.size)
    return dataset.take(np.sort(order[:count])), dataset.take(np.sort(order[count:]))


def _parse_blob_spec(spec: str) -> Dict[str, float]:
    params: Dict[str, float] = {
        "classes": 3,
        "per_class": 200,
        "dim": 2,
        "separation": 10.0,
        "seed": 0,
    }
    _, _, body = spec.partition(":")
    for item in filter(None, (part.strip() for part in body.split(","))):
        key, sep, value = item.partition("=")
        if not sep or key not in params:
            raise ValueError(f"bad blob parameter '{item}'")
        params[key] = float(value)
    return params


def resolve_dataset(
    source: PathLike, seed: int = 0, fraction: float = 0.8
) -> Tuple[LabeledDataset, LabeledDataset]:
    """Train and test sets for a ``--data`` value.

    ``blobs[:classes=3,per_class=200,dim=2,separation=10,seed=0]`` generates
    blobs and splits them with ``seed``; anything else is a directory with
    the four MNIST IDX files (optionally gzipped).
    """
    text = str(source)
    if text == "blobs" or text.startswith("blobs:"):
        params = _parse_blob_spec(text)
        blobs = synth_blobs(
            int(params["classes"]),
            int(params["per_class"]),
            int(params["dim"]),
            params["separation"],
            int(params["seed"]),
        )
        return split(blobs, fraction, seed)
    return load_mnist(source)
