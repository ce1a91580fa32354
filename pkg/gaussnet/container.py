"""Versioned little-endian binary containers.

Model file::

    b"CNWM" | version u32 | layer count u32
    per layer: rows u32 | cols u32 | tag u8 | rows*cols f64, column-major

The layer tag holds the activation in its low nibble and ``0x10`` for an
affine (bias-lifted) layer. Centroid systems (``b"CNWC"``) and Gauss heads
(``b"CNWG"``) use the same header and matrix block, the matrix tag being
unused; a centroid system appends its provenance tag u8 and shift vector
(dim u32 then f64 values, dim 0 when absent), a Gauss head appends its
outlier threshold f64. The residual of a shifted system is recomputed on
load.
"""
import io
import struct
from pathlib import Path
from typing import BinaryIO, Tuple, Union

import numpy as np

from gaussnet.base import BadMagicError, TruncatedFileError, UnsupportedVersionError
from gaussnet.geometry import CentroidSystem, Provenance, shift_system
from gaussnet.network import Activation, Layer, NetworkModel
from gaussnet.numerics import euclidean_norm
from gaussnet.tailoring import GaussHead

MODEL_MAGIC = b"CNWM"
CENTROIDS_MAGIC = b"CNWC"
HEAD_MAGIC = b"CNWG"
VERSION = 1
AFFINE_FLAG = 0x10

PathLike = Union[str, Path]


class _Reader:
    def __init__(self, payload: bytes) -> None:
        self.payload = payload
        self.offset = 0

    def take(self, count: int) -> bytes:
        end = self.offset + count
        if end > len(self.payload):
            raise TruncatedFileError(end, len(self.payload))
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def header(self, magic: bytes) -> int:
        found = self.take(4)
        if found != magic:
            raise BadMagicError(f"magic {found!r}, expected {magic!r}")
        version, count = self.unpack("<II")
        if version != VERSION:
            raise UnsupportedVersionError(
                f"container version {version}, supported {VERSION}"
            )
        return count

    def matrix(self) -> Tuple[np.ndarray, int]:
        rows, cols, tag = self.unpack("<IIB")
        data = np.frombuffer(self.take(8 * rows * cols), dtype="<f8")
        return data.reshape((rows, cols), order="F").astype(np.float64), tag

    def vector(self) -> np.ndarray:
        (dim,) = self.unpack("<I")
        return np.frombuffer(self.take(8 * dim), dtype="<f8").astype(np.float64)


def _header(out: BinaryIO, magic: bytes, count: int) -> None:
    out.write(magic)
    out.write(struct.pack("<II", VERSION, count))


def _matrix(out: BinaryIO, matrix: np.ndarray, tag: int = 0) -> None:
    rows, cols = matrix.shape
    out.write(struct.pack("<IIB", rows, cols, tag))
    out.write(np.asarray(matrix, dtype="<f8").tobytes(order="F"))


def _vector(out: BinaryIO, vector: np.ndarray) -> None:
    out.write(struct.pack("<I", vector.shape[0]))
    out.write(np.asarray(vector, dtype="<f8").tobytes())


def dump_model(model: NetworkModel) -> bytes:
    out = io.BytesIO()
    _header(out, MODEL_MAGIC, len(model.layers))
    for layer in model.layers:
        tag = layer.activation.value | (AFFINE_FLAG if layer.affine else 0)
        _matrix(out, layer.weight, tag)
    return out.getvalue()


def load_model(payload: bytes) -> NetworkModel:
    reader = _Reader(payload)
    layers = []
    for _ in range(reader.header(MODEL_MAGIC)):
        weight, tag = reader.matrix()
        try:
            activation = Activation(tag & 0x0F)
        except ValueError:
            raise BadMagicError(f"unknown activation tag {tag & 0x0F}") from None
        layers.append(Layer(weight, activation, bool(tag & AFFINE_FLAG)))
    return NetworkModel(tuple(layers))


def _centroid_block(out: BinaryIO, system: CentroidSystem) -> None:
    _matrix(out, system.centroids)
    out.write(struct.pack("<B", system.provenance.value))
    _vector(out, system.shift if system.shift is not None else np.zeros(0))


def _read_centroid_block(reader: _Reader) -> CentroidSystem:
    centroids, _ = reader.matrix()
    (provenance,) = reader.unpack("<B")
    shift = reader.vector()
    if not shift.size:
        return CentroidSystem(centroids, Provenance(provenance))
    a, b = shift_system(centroids - shift[:, None])
    return CentroidSystem(
        centroids=centroids,
        provenance=Provenance(provenance),
        shift=shift,
        residual=euclidean_norm(a @ shift - b),
    )


def dump_centroids(system: CentroidSystem) -> bytes:
    out = io.BytesIO()
    _header(out, CENTROIDS_MAGIC, 1)
    _centroid_block(out, system)
    return out.getvalue()


def load_centroids(payload: bytes) -> CentroidSystem:
    reader = _Reader(payload)
    reader.header(CENTROIDS_MAGIC)
    return _read_centroid_block(reader)


def dump_head(head: GaussHead) -> bytes:
    out = io.BytesIO()
    _header(out, HEAD_MAGIC, 1)
    _centroid_block(out, head.centroids)
    out.write(struct.pack("<d", head.outlier_threshold))
    return out.getvalue()


def load_head(payload: bytes) -> GaussHead:
    reader = _Reader(payload)
    reader.header(HEAD_MAGIC)
    centroids = _read_centroid_block(reader)
    (threshold,) = reader.unpack("<d")
    return GaussHead(centroids, threshold)


def save_model(path: PathLike, model: NetworkModel) -> None:
    Path(path).write_bytes(dump_model(model))


def read_model(path: PathLike) -> NetworkModel:
    return load_model(Path(path).read_bytes())


def save_head(path: PathLike, head: GaussHead) -> None:
    Path(path).write_bytes(dump_head(head))


def read_head(path: PathLike) -> GaussHead:
    return load_head(Path(path).read_bytes())
