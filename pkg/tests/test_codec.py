import struct

import numpy as np
import pytest

from krigrid.raster_io import ScalarField
from krigrid.representations import KINDS, CodecError, build, deserialize_repr, render_repr, serialize_repr
from krigrid.representations.codec import HEADER, MAGIC
from krigrid.synthetic import blob_field

FAST = {"bsp-lse": {"angle_step": 15}, "wedgelet": {"line_thresh": 5e-3}}


@pytest.fixture(scope="module")
def reps():
    f = blob_field(45, 33, seed=4)
    return f, {k: build(k, f, **FAST.get(k, {})) for k in KINDS}


@pytest.mark.parametrize("kind", KINDS)
def test_serialise_is_deterministic(reps, kind):
    _, r = reps
    assert serialize_repr(r[kind]) == serialize_repr(r[kind])


@pytest.mark.parametrize("kind", KINDS)
def test_rebuild_gives_same_bytes(reps, kind):
    f, r = reps
    again = build(kind, f, **FAST.get(kind, {}))
    assert serialize_repr(again) == serialize_repr(r[kind])


@pytest.mark.parametrize("kind", KINDS)
def test_round_trip(reps, kind):
    f, r = reps
    data = serialize_repr(r[kind])
    back = deserialize_repr(data)
    assert back.kind == kind and (back.width, back.height) == (f.width, f.height)
    assert back.leaf_count == r[kind].leaf_count
    assert serialize_repr(back) == data
    # values are stored as f32
    np.testing.assert_allclose(render_repr(back, f.width, f.height).values,
                               render_repr(r[kind], f.width, f.height).values, atol=1e-7)


def test_header_layout(reps):
    _, r = reps
    data = serialize_repr(r["hexmap"])
    assert data[:4] == b"GPDR"
    magic, version, tag, w, h = HEADER.unpack_from(data)
    assert (version, tag, w, h) == (1, 5, 45, 33)


def test_single_leaf_quadtree_is_small():
    rep = build("quadtree", ScalarField(np.full((64, 64), 0.25)))
    data = serialize_repr(rep)
    assert len(data) == HEADER.size + 1 + 4
    assert len(data) < 64


@pytest.mark.parametrize("kind", KINDS)
def test_truncation_detected(reps, kind):
    _, r = reps
    data = serialize_repr(r[kind])
    for cut in (len(data) - 1, len(data) // 2, HEADER.size, 3):
        with pytest.raises(CodecError):
            deserialize_repr(data[:cut])


def test_trailing_bytes_rejected(reps):
    _, r = reps
    with pytest.raises(CodecError):
        deserialize_repr(serialize_repr(r["quadtree"]) + b"\0")


@pytest.mark.parametrize("header", [
    struct.pack("<4sBBII", b"JUNK", 1, 1, 4, 4),
    struct.pack("<4sBBII", MAGIC, 9, 1, 4, 4),
    struct.pack("<4sBBII", MAGIC, 1, 42, 4, 4),
])
def test_bad_header(header):
    with pytest.raises(CodecError):
        deserialize_repr(header + b"\1\0\0\0\0")


@pytest.mark.parametrize("kind", KINDS)
def test_smooth_field_compresses(kind):
    f = blob_field(128, 128, seed=2)
    rep = build(kind, f, **FAST.get(kind, {}))
    assert len(serialize_repr(rep)) < f.values.size * 8
