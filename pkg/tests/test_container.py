import json
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from deepcabac.binarizer import decode_levels, encode_levels
from deepcabac.container import (HEADER_SIZE, KIND_CODEBOOK, KIND_RAW, TensorRecord,
                                 load_importance, load_npy, manifest_parse, read_stream,
                                 write_stream)
from deepcabac.errors import (BadMagicError, ChecksumError, DeepCabacError, FormatError,
                              IngestionError, TruncatedStreamError, TruncationError,
                              UnsupportedVersionError)
from deepcabac.quantizers import QuantGrid, WeightTensor, dequantize


def _record(rng, name, shape, n_flags=10):
    levels = rng.integers(-50, 51, int(np.prod(shape)))
    return TensorRecord(name, shape, 0.0125, n_flags, encode_levels(levels)), levels


def test_empty_stream_is_ten_bytes():
    data = write_stream([])
    assert data == b"DCBC\x01\x00\x00\x00\x00\x00" and len(data) == HEADER_SIZE
    assert read_stream(data) == []


def test_header_layout_is_little_endian(rng):
    rec, _ = _record(rng, "w", (2, 3))
    data = write_stream([rec])
    assert struct.unpack_from("<4sHI", data) == (b"DCBC", 1, 1)
    assert data[10] == 0 and struct.unpack_from("<H", data, 11)[0] == 1


def test_roundtrip_preserves_order_and_levels(rng):
    recs = [_record(rng, n, s) for n, s in [("b", (3,)), ("a", (2, 2)), ("c", (1, 1, 5))]]
    back = read_stream(write_stream([r for r, _ in recs]))
    assert [r.name for r in back] == ["b", "a", "c"]
    for (orig, levels), got in zip(recs, back):
        assert got.shape == orig.shape and got.delta == orig.delta
        assert got.payload == orig.payload
        dec = decode_levels(got.payload, got.count)
        assert np.array_equal(dec, levels)
        recon = dequantize(QuantGrid(got.delta, dec))
        assert np.array_equal(recon, np.float32(levels) * np.float32(0.0125))


names = st.text(min_size=1, max_size=12)
shapes = st.lists(st.integers(0, 6), min_size=0, max_size=3).map(tuple)


@given(st.lists(st.tuples(names, shapes, st.floats(1e-6, 10.0), st.integers(1, 255),
                          st.binary(max_size=40)), max_size=5))
def test_roundtrip_random_record_sets(items):
    recs = [TensorRecord(n, s, d, f, p) for n, s, d, f, p in items]
    data = write_stream(recs)
    back = read_stream(data)
    assert [(r.name, r.shape, r.delta, r.n_flags, r.payload) for r in back] == \
        [(r.name, r.shape, r.delta, r.n_flags, r.payload) for r in recs]
    assert write_stream(back) == data


def test_raw_and_codebook_records_roundtrip():
    raw = TensorRecord("bias", (3,), 0.0, 0, np.array([1, 2, 3], "<f4").tobytes(), KIND_RAW)
    cb = TensorRecord("fc", (2,), 1.0, 10, encode_levels(np.array([-1, 1])), KIND_CODEBOOK,
                      np.array([-0.5, 0.0, 0.7]), 1)
    back = read_stream(write_stream([raw, cb]))
    assert back[0].kind == KIND_RAW and back[0].payload == raw.payload
    assert back[1].codebook.tolist() == pytest.approx([-0.5, 0.0, 0.7])
    assert back[1].zero_index == 1


def test_bad_magic(rng):
    data = bytearray(write_stream([]))
    data[0] = ord("X")
    with pytest.raises(BadMagicError):
        read_stream(bytes(data))


def test_bad_version():
    with pytest.raises(UnsupportedVersionError):
        read_stream(b"DCBC\x02\x00\x00\x00\x00\x00")


def test_truncation_names_the_tensor(rng):
    rec, _ = _record(rng, "conv1", (40,))
    data = write_stream([rec])
    with pytest.raises(TruncationError, match="conv1") as info:
        read_stream(data[:-10])
    assert info.value.tensor == "conv1"
    assert isinstance(info.value, TruncatedStreamError)


def test_short_header():
    with pytest.raises(TruncationError):
        read_stream(b"DCB")


def test_trailing_bytes_rejected():
    with pytest.raises(FormatError):
        read_stream(write_stream([]) + b"\x00")


def test_checksum_catches_payload_flip(rng):
    rec, _ = _record(rng, "fc", (30,))
    data = bytearray(write_stream([rec]))
    data[-6] ^= 0x10
    with pytest.raises(ChecksumError, match="fc"):
        read_stream(bytes(data))


def test_every_single_byte_corruption_is_detected(rng):
    rec, _ = _record(rng, "layer", (4, 5))
    data = write_stream([rec, _record(rng, "b", (3,))[0]])
    for i in range(len(data)):
        bad = bytearray(data)
        bad[i] ^= 0x5A
        with pytest.raises(DeepCabacError):
            read_stream(bytes(bad))


def test_invalid_delta_rejected():
    with pytest.raises(FormatError):
        write_stream([TensorRecord("x", (1,), 0.0, 10, b"\x00")])


# -- NPY ingestion --------------------------------------------------------------

def test_load_npy_2x3(tmp_path):
    a = np.arange(6, dtype="<f4").reshape(2, 3)
    np.save(tmp_path / "w.npy", a)
    t = load_npy(tmp_path / "w.npy")
    assert t.name == "w" and t.shape == (2, 3)
    assert t.values.tolist() == [0, 1, 2, 3, 4, 5]


def test_load_npy_v2_header(tmp_path):
    a = np.ones((2, 2), dtype="<f4")
    with open(tmp_path / "v2.npy", "wb") as f:
        np.lib.format.write_array(f, a, version=(2, 0))
    assert load_npy(tmp_path / "v2.npy").shape == (2, 2)


@pytest.mark.parametrize("array,reason", [
    (np.ones(3, dtype=">f4"), "float32"),
    (np.ones(3, dtype="<f8"), "float32"),
    (np.asfortranarray(np.ones((2, 3), dtype="<f4")), "Fortran"),
])
def test_load_npy_rejects(tmp_path, array, reason):
    np.save(tmp_path / "x.npy", array)
    with pytest.raises(IngestionError, match=reason):
        load_npy(tmp_path / "x.npy")


def test_load_npy_rejects_non_npy_and_short_files(tmp_path):
    (tmp_path / "x.npy").write_bytes(b"hello world")
    with pytest.raises(IngestionError):
        load_npy(tmp_path / "x.npy")
    np.save(tmp_path / "y.npy", np.ones(100, dtype="<f4"))
    raw = (tmp_path / "y.npy").read_bytes()
    (tmp_path / "y.npy").write_bytes(raw[:-8])
    with pytest.raises(IngestionError):
        load_npy(tmp_path / "y.npy")
    with pytest.raises(IngestionError):
        load_npy(tmp_path / "missing.npy")


# -- importance -------------------------------------------------------------------

def test_importance_uniform_without_file():
    t = WeightTensor("w", (4,), np.zeros(4))
    assert load_importance(None, t, "fisher").values.tolist() == [1, 1, 1, 1]
    assert load_importance("nope.npy", t, "uniform").values.tolist() == [1, 1, 1, 1]


def test_importance_sigma_mode(tmp_path):
    np.save(tmp_path / "s.npy", np.full(3, 0.1, dtype="<f4"))
    F = load_importance(tmp_path / "s.npy", WeightTensor("w", (3,), np.zeros(3)), "sigma")
    assert F.values == pytest.approx([100.0] * 3, rel=1e-6)


def test_importance_fisher_float64_accepted(tmp_path):
    np.save(tmp_path / "f.npy", np.array([1.0, 2.0]))
    F = load_importance(tmp_path / "f.npy", WeightTensor("w", (2,), np.zeros(2)))
    assert F.values.tolist() == [1.0, 2.0]


@pytest.mark.parametrize("values", [np.ones(5), np.array([1.0, -1.0, 1.0])])
def test_importance_rejects_mismatch_and_negative(tmp_path, values):
    np.save(tmp_path / "f.npy", values)
    with pytest.raises(IngestionError):
        load_importance(tmp_path / "f.npy", WeightTensor("w", (3,), np.zeros(3)))


# -- manifest --------------------------------------------------------------------

def _write_manifest(path, tensors):
    path.write_text(json.dumps({"tensors": tensors}))
    return path


def test_manifest_empty(tmp_path):
    assert manifest_parse(_write_manifest(tmp_path / "m.json", [])) == []


def test_manifest_relative_paths_and_order(tmp_path):
    (tmp_path / "d").mkdir()
    for n in ("b", "a"):
        np.save(tmp_path / "d" / f"{n}.npy", np.zeros(2, dtype="<f4"))
    m = _write_manifest(tmp_path / "m.json", [
        {"weights": "d/b.npy", "importance": None, "name": "second"},
        {"weights": "d/a.npy", "raw": True}])
    entries = manifest_parse(m)
    assert [e.name for e in entries] == ["second", "a"]
    assert entries[0].importance is None and entries[1].raw
    assert entries[0].weights == tmp_path / "d" / "b.npy"


@pytest.mark.parametrize("doc", [
    "not json", json.dumps([1]), json.dumps({"tensors": [{"importance": None}]}),
    json.dumps({"tensors": [{"weights": "w.npy", "name": "x"}, {"weights": "w.npy", "name": "x"}]}),
    json.dumps({"tensors": [{"weights": "missing.npy"}]}),
])
def test_manifest_errors(tmp_path, doc):
    np.save(tmp_path / "w.npy", np.zeros(2, dtype="<f4"))
    (tmp_path / "m.json").write_text(doc)
    with pytest.raises(IngestionError):
        manifest_parse(tmp_path / "m.json")
