import struct

import numpy as np
import pytest

from ganinv import modelio
from ganinv.errors import ShapeError, SpecError
from ganinv.nn import LayerSpec, Model, ModelSpec, build, infer


def classifier_spec(sizes=(784, 256, 6)):
    return ModelSpec.dense(list(sizes))


def test_build_is_seed_deterministic():
    a, b = build(classifier_spec(), 7), build(classifier_spec(), 7)
    for x, y in zip(a.parameters(), b.parameters()):
        assert x.tobytes() == y.tobytes()
    c = build(classifier_spec(), 8)
    assert a.parameters()[0].tobytes() != c.parameters()[0].tobytes()


def test_glorot_bounds_and_zero_bias():
    m = build(classifier_spec((30, 20, 4)), 0)
    (w0, b0), (w1, _) = m.weights
    assert np.abs(w0).max() <= np.sqrt(6 / 50)
    assert np.abs(w1).max() <= np.sqrt(6 / 24)
    assert not b0.any()


def test_zero_layer_spec_rejected():
    with pytest.raises(SpecError):
        ModelSpec((), "classifier")


def test_mismatched_chain_rejected():
    layers = (LayerSpec(784, 256, "relu"), LayerSpec(128, 10, "softmax"))
    with pytest.raises(SpecError):
        ModelSpec(layers, "classifier")


@pytest.mark.parametrize(
    "role, out",
    [("classifier", "sigmoid"), ("discriminator", "softmax"), ("generator", "tanh")],
)
def test_output_layer_must_suit_role(role, out):
    with pytest.raises(SpecError):
        ModelSpec.dense([4, 3, 1 if role == "discriminator" else 2], role=role, output=out)


def test_softmax_rows_sum_to_one():
    m = build(classifier_spec((20, 16, 6)), 1)
    x = np.random.default_rng(0).normal(scale=5, size=(50, 20))
    probs = infer(m, x)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_generator_output_in_unit_range():
    g = build(ModelSpec.dense([8, 32, 16], role="generator"), 2)
    out = infer(g, np.random.default_rng(1).normal(scale=3, size=(1000, 8)))
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_discriminator_scalar_in_open_interval():
    d = build(ModelSpec.dense([16, 8, 1], role="discriminator"), 2)
    out = infer(d, np.random.default_rng(1).uniform(size=(10, 16)))
    assert out.shape == (10, 1) and (out > 0).all() and (out < 1).all()


def test_zero_weights_give_uniform_probabilities():
    m = build(classifier_spec((10, 5, 6)), 0)
    zeroed = Model(m.spec, [(np.zeros_like(w), np.zeros_like(b)) for w, b in m.weights])
    np.testing.assert_allclose(infer(zeroed, np.ones((3, 10))), 1 / 6)


def test_infer_rejects_wrong_width():
    m = build(classifier_spec((10, 5, 6)), 0)
    with pytest.raises(ShapeError):
        infer(m, np.ones((2, 9)))


def test_infer_is_pure():
    m = build(classifier_spec((10, 5, 6)), 0)
    x = np.random.default_rng(0).uniform(size=(4, 10))
    before = [p.copy() for p in m.parameters()]
    a, b = infer(m, x), infer(m, x)
    assert a.tobytes() == b.tobytes()
    for p, q in zip(before, m.parameters()):
        assert p.tobytes() == q.tobytes()


def test_model_shape_mismatch_rejected():
    spec = classifier_spec((4, 3, 2))
    with pytest.raises(SpecError):
        Model(spec, [(np.zeros((4, 3)), np.zeros(3)), (np.zeros((3, 3)), np.zeros(2))])


# ----------------------------------------------------------- weight files


@pytest.fixture
def trained_like():
    m = build(ModelSpec.dense([12, 9, 7, 12], role="generator", hidden="tanh"), 3)
    rng = np.random.default_rng(5)
    weights = [(w + rng.normal(size=w.shape), b + rng.normal(size=b.shape)) for w, b in m.weights]
    return Model(m.spec, weights, {"prior": "uniform", "train_seed": 3, "dataset": ["a", "b"]})


def test_round_trip_bit_exact(tmp_path, trained_like):
    path = tmp_path / "g.model"
    modelio.save(trained_like, path)
    back = modelio.load(path)
    assert back.spec == trained_like.spec
    assert back.provenance == trained_like.provenance
    for a, b in zip(back.parameters(), trained_like.parameters()):
        assert a.tobytes() == b.tobytes()
    assert modelio.to_bytes(back) == path.read_bytes()


def test_layout_offsets(trained_like):
    raw = modelio.to_bytes(trained_like)
    assert raw[:8] == b"GINVMDL\x00"
    version, hlen = struct.unpack_from("<II", raw, 8)
    assert version == 1
    header = raw[16 : 16 + hlen].decode()
    assert header.startswith("role = generator\n")
    (plen,) = struct.unpack_from("<Q", raw, 16 + hlen)
    first = np.frombuffer(raw, "<f8", count=1, offset=24 + hlen)[0]
    assert first == trained_like.weights[0][0][0, 0]
    assert len(raw) == 24 + hlen + plen + 4


def test_corrupted_magic(trained_like):
    raw = bytearray(modelio.to_bytes(trained_like))
    raw[0] ^= 0xFF
    with pytest.raises(modelio.ModelFormatError):
        modelio.from_bytes(bytes(raw))


def test_newer_version(trained_like):
    raw = bytearray(modelio.to_bytes(trained_like))
    struct.pack_into("<I", raw, 8, modelio.VERSION + 1)
    with pytest.raises(modelio.ModelVersionError):
        modelio.from_bytes(bytes(raw))


def test_checksum_failure(trained_like):
    raw = bytearray(modelio.to_bytes(trained_like))
    raw[-20] ^= 0x01
    with pytest.raises(modelio.ModelChecksumError):
        modelio.from_bytes(bytes(raw))


@pytest.mark.parametrize("cut", [0, 5, 15, 40, -3])
def test_truncation(trained_like, cut):
    raw = modelio.to_bytes(trained_like)
    with pytest.raises(modelio.ModelTruncatedError):
        modelio.from_bytes(raw[:cut])


def test_error_kinds_are_distinct():
    kinds = {
        modelio.ModelFormatError,
        modelio.ModelVersionError,
        modelio.ModelChecksumError,
        modelio.ModelTruncatedError,
    }
    for k in kinds:
        assert all(not issubclass(k, other) for other in kinds - {k})
