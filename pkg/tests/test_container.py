import struct

import numpy as np
import pytest

from gaussnet.base import BadMagicError, TruncatedFileError, UnsupportedVersionError
from gaussnet.container import (
    MODEL_MAGIC,
    dump_centroids,
    dump_head,
    dump_model,
    load_centroids,
    load_head,
    load_model,
    read_head,
    read_model,
    save_head,
    save_model,
)
from gaussnet.geometry import CentroidSystem, Provenance, equidistant_centroids
from gaussnet.network import Activation, Layer, NetworkModel
from gaussnet.tailoring import GaussHead
from gaussnet.training import init_model


@pytest.fixture
def model():
    return init_model([5, 4, 3], seed=0)


def test_model_header(model):
    payload = dump_model(model)
    assert payload[:4] == MODEL_MAGIC
    assert struct.unpack("<II", payload[4:12]) == (1, 2)
    rows, cols, tag = struct.unpack("<IIB", payload[12:21])
    assert (rows, cols) == (6, 4)
    assert tag == Activation.RELU.value | 0x10


def test_model_weights_column_major(model):
    payload = dump_model(model)
    first = np.frombuffer(payload[21 : 21 + 8 * 6], dtype="<f8")
    np.testing.assert_array_equal(first, model.layers[0].weight[:, 0])


def test_model_round_trip_exact(model):
    loaded = load_model(dump_model(model))
    for a, b in zip(model.layers, loaded.layers):
        assert a.weight.tobytes() == b.weight.tobytes()
        assert (a.activation, a.affine) == (b.activation, b.affine)
    assert dump_model(loaded) == dump_model(model)


def test_model_without_bias_round_trip():
    model = NetworkModel((Layer(np.eye(3)),))
    loaded = load_model(dump_model(model))
    assert not loaded.layers[0].affine
    np.testing.assert_array_equal(loaded.head_weight, np.eye(3))


def test_model_files(model, tmp_path):
    save_model(tmp_path / "model.bin", model)
    assert read_model(tmp_path / "model.bin").penultimate_dim == 5


def test_bad_magic(model):
    with pytest.raises(BadMagicError):
        load_model(b"XXXX" + dump_model(model)[4:])


def test_wrong_container_kind(model):
    system = equidistant_centroids(model.head_weight)
    with pytest.raises(BadMagicError):
        load_model(dump_centroids(system))


def test_unknown_version(model):
    payload = bytearray(dump_model(model))
    payload[4:8] = struct.pack("<I", 9)
    with pytest.raises(UnsupportedVersionError):
        load_model(bytes(payload))


def test_truncated_model(model):
    with pytest.raises(TruncatedFileError):
        load_model(dump_model(model)[:-1])


def test_unknown_activation_tag(model):
    payload = bytearray(dump_model(model))
    payload[20] = 0x0F
    with pytest.raises(BadMagicError):
        load_model(bytes(payload))


def test_centroids_round_trip(model):
    system = equidistant_centroids(model.head_weight)
    loaded = load_centroids(dump_centroids(system))
    assert loaded.provenance is Provenance.FROM_WEIGHTS
    assert loaded.centroids.tobytes() == system.centroids.tobytes()
    np.testing.assert_array_equal(loaded.shift, system.shift)
    assert loaded.residual <= 1e-9


def test_centroid_block_layout():
    system = equidistant_centroids(np.array([[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]]))
    payload = dump_centroids(system)
    matrix_end = 12 + 9 + 8 * 6
    assert len(payload) == matrix_end + 1 + 4 + 8 * 3
    assert payload[matrix_end] == Provenance.FROM_WEIGHTS.value
    assert struct.unpack_from("<I", payload, matrix_end + 1) == (3,)
    shift = np.frombuffer(payload[matrix_end + 5 :], dtype="<f8")
    np.testing.assert_array_equal(shift, system.shift)


def test_centroids_without_shift():
    system = CentroidSystem(np.eye(2), Provenance.KMEANS_OPTIMAL)
    loaded = load_centroids(dump_centroids(system))
    assert loaded.shift is None
    assert loaded.provenance is Provenance.KMEANS_OPTIMAL


def test_head_round_trip(tmp_path):
    system = CentroidSystem(np.arange(6.0).reshape(3, 2), Provenance.KMEANS_OPTIMAL)
    head = GaussHead(system)
    save_head(tmp_path / "model.head", head)
    loaded = read_head(tmp_path / "model.head")
    assert loaded.outlier_threshold == 0.5
    np.testing.assert_array_equal(loaded.centroids.centroids, head.centroids.centroids)
    assert dump_head(loaded) == dump_head(head)


def test_head_custom_threshold():
    head = GaussHead(CentroidSystem(np.eye(3), Provenance.KMEANS_OPTIMAL), 0.25)
    assert load_head(dump_head(head)).outlier_threshold == 0.25
