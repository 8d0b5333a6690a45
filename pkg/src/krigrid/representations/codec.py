"""Compact little-endian binary encoding of representations.

Layout::

    b"GPDR" | version u8 | kind u8 | width u32 | height u32 | payload

Payloads:

* quadtree / wedgelet: preorder stream over non-empty lattice nodes.  Each
  node starts with a flag byte (0 internal, 1 leaf, 2 wedge leaf).  A leaf
  adds its value as f32.  A wedge adds x1, y1, x2, y2 as u16 followed by
  value_a and value_b as f32.
* bsp-lse: preorder stream; flag byte (0 internal, 1 leaf).  Internal nodes
  add angle in centidegrees (u16) and offset (i32); leaves add value f32.
* bsp-region: leaf count u32, then per leaf value f32, run count u32 and
  runs (row u32, start u32, length u32).
* hexmap: base edge f64, cell count u32, then per cell level u8, q i32,
  r i32, value f32.
"""
from __future__ import annotations

import struct

import numpy as np

from .base import DiscreteRepresentation, RepresentationError
from .bsp_lse import BspNode, BspPayload, clip_polygon
from .bsp_region import BspRegionPayload
from .hexmap import HexCell, HexMapPayload
from .quadtree import QuadLeaf, QuadtreePayload, Wedge

MAGIC = b"GPDR"
VERSION = 1
KIND_TAGS = {"quadtree": 1, "wedgelet": 2, "bsp-lse": 3, "bsp-region": 4, "hexmap": 5}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}
HEADER = struct.Struct("<4sBBII")

_F32 = struct.Struct("<f")
_WEDGE = struct.Struct("<HHHHff")
_SPLIT = struct.Struct("<Hi")
_HEX = np.dtype([("level", "<u1"), ("q", "<i4"), ("r", "<i4"), ("value", "<f4")])
_RUN = np.dtype([("row", "<u4"), ("start", "<u4"), ("len", "<u4")])


class CodecError(RepresentationError):
    pass


def serialize_repr(rep: DiscreteRepresentation) -> bytes:
    out = bytearray(HEADER.pack(MAGIC, VERSION, KIND_TAGS[rep.kind], rep.width, rep.height))
    p = rep.payload
    if rep.kind in ("quadtree", "wedgelet"):
        for _, _, _, leaf in p.preorder():
            if leaf is None:
                out.append(0)
            elif leaf.wedge is None:
                out.append(1)
                out += _F32.pack(leaf.value)
            else:
                wd = leaf.wedge
                out.append(2)
                out += _WEDGE.pack(wd.x1, wd.y1, wd.x2, wd.y2, wd.value_a, wd.value_b)
    elif rep.kind == "bsp-lse":
        for node in p.preorder():
            if node.is_leaf:
                out.append(1)
                out += _F32.pack(node.value)
            else:
                out.append(0)
                out += _SPLIT.pack(*node.split)
    elif rep.kind == "bsp-region":
        runs = p.runs()
        out += struct.pack("<I", len(p.values))
        for value, leaf_runs in zip(p.values.tolist(), runs):
            out += struct.pack("<fI", value, len(leaf_runs))
            out += np.array(leaf_runs, dtype=_RUN).tobytes()
    else:  # hexmap
        out += struct.pack("<dI", p.base_edge, len(p.cells))
        cells = np.array([(c.level, c.q, c.r, c.value) for c in p.cells], dtype=_HEX)
        out += cells.tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes, pos: int):
        self.data = data
        self.pos = pos

    def take(self, fmt: struct.Struct):
        if self.pos + fmt.size > len(self.data):
            raise CodecError("truncated representation stream")
        vals = fmt.unpack_from(self.data, self.pos)
        self.pos += fmt.size
        return vals

    def byte(self) -> int:
        if self.pos >= len(self.data):
            raise CodecError("truncated representation stream")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def array(self, dtype: np.dtype, count: int) -> np.ndarray:
        nbytes = dtype.itemsize * count
        if self.pos + nbytes > len(self.data):
            raise CodecError("truncated representation stream")
        arr = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.pos)
        self.pos += nbytes
        return arr


def _decode_quadtree(rd: _Reader, w: int, h: int) -> QuadtreePayload:
    shell = QuadtreePayload(w, h, {})
    leaves = {}
    stack = [(0, 0, 0)]
    while stack:
        d, ix, iy = stack.pop()
        flag = rd.byte()
        if flag == 0:
            kids = [(d + 1, 2 * ix + cx, 2 * iy + cy) for cy in (0, 1) for cx in (0, 1)]
            stack.extend(k for k in reversed(kids) if not shell.is_empty(*k))
        elif flag == 1:
            (value,) = rd.take(_F32)
            leaves[(d, ix, iy)] = QuadLeaf(d, ix, iy, value)
        elif flag == 2:
            x1, y1, x2, y2, va, vb = rd.take(_WEDGE)
            leaves[(d, ix, iy)] = QuadLeaf(d, ix, iy, 0.5 * (va + vb), Wedge(x1, y1, x2, y2, va, vb))
        else:
            raise CodecError(f"bad quadtree node flag {flag}")
    return QuadtreePayload(w, h, leaves)


def _decode_bsp(rd: _Reader, w: int, h: int) -> BspPayload:
    rect = [(0.0, 0.0), (float(w), 0.0), (float(w), float(h)), (0.0, float(h))]
    root = BspNode(0, rect, 0.0)
    stack = [root]
    while stack:
        node = stack.pop()
        flag = rd.byte()
        if flag == 1:
            (node.value,) = rd.take(_F32)
        elif flag == 0:
            node.split = rd.take(_SPLIT)
            node.children = [
                BspNode(node.depth + 1, clip_polygon(node.polygon, *node.split, keep_low=True), 0.0),
                BspNode(node.depth + 1, clip_polygon(node.polygon, *node.split, keep_low=False), 0.0),
            ]
            stack.extend(reversed(node.children))
        else:
            raise CodecError(f"bad bsp node flag {flag}")
    return BspPayload(w, h, root)


def _decode_region(rd: _Reader, w: int, h: int) -> BspRegionPayload:
    (n_leaves,) = rd.take(struct.Struct("<I"))
    labels = np.full((h, w), -1, dtype=np.int64)
    values = np.empty(n_leaves)
    head = struct.Struct("<fI")
    for k in range(n_leaves):
        values[k], n_runs = rd.take(head)
        for row, start, length in rd.array(_RUN, n_runs).tolist():
            labels[row, start:start + length] = k
    if (labels < 0).any():
        raise CodecError("bsp-region runs do not cover the field")
    return BspRegionPayload(w, h, labels, values)


def _decode_hexmap(rd: _Reader, w: int, h: int) -> HexMapPayload:
    base_edge, n_cells = rd.take(struct.Struct("<dI"))
    cells = [HexCell(int(l), int(q), int(r), float(v), float("nan"), 0) for l, q, r, v in rd.array(_HEX, n_cells).tolist()]
    return HexMapPayload(w, h, base_edge, cells)


def deserialize_repr(data: bytes) -> DiscreteRepresentation:
    if len(data) < HEADER.size:
        raise CodecError("data too short for a representation header")
    magic, version, tag, w, h = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CodecError("not a GPDR stream")
    if version != VERSION:
        raise CodecError(f"unsupported GPDR version {version}")
    if tag not in TAG_KINDS:
        raise CodecError(f"unknown representation tag {tag}")
    kind = TAG_KINDS[tag]
    rd = _Reader(data, HEADER.size)
    decoder = {
        "quadtree": _decode_quadtree,
        "wedgelet": _decode_quadtree,
        "bsp-lse": _decode_bsp,
        "bsp-region": _decode_region,
        "hexmap": _decode_hexmap,
    }[kind]
    payload = decoder(rd, w, h)
    if rd.pos != len(data):
        raise CodecError("trailing bytes after representation payload")
    return DiscreteRepresentation(kind, payload, w, h, 0.0)
