"""Minimal PLY subset: ASCII 1.0 and binary_little_endian 1.0, vertex element only.

Coordinates are stored as 32-bit floats, colors as 8-bit channels and the
optional body-part code as a signed 32-bit ``part_label`` property.
"""
from __future__ import annotations

import numpy as np

from .core import PersonFrame
from .errors import MalformedBody, MalformedHeader, TruncatedBody, UnsupportedProperty

_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_FORMATS = ("ascii", "binary_little_endian")


def _parse_header(data: bytes):
    if not data.startswith(b"ply"):
        raise MalformedHeader("missing 'ply' magic")
    end = data.find(b"end_header")
    if end < 0:
        raise MalformedHeader("missing 'end_header'")
    nl = data.find(b"\n", end)
    body_start = len(data) if nl < 0 else nl + 1
    try:
        text = data[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedHeader("header is not ASCII") from exc
    lines = [ln.strip() for ln in text.splitlines()]
    if lines[0] != "ply":
        raise MalformedHeader("first header line must be exactly 'ply'")

    fmt = None
    elements = []  # [name, count, [(prop, dtype)]]
    for ln in lines[1:]:
        if not ln or ln.startswith(("comment", "obj_info")):
            continue
        tok = ln.split()
        if tok[0] == "format":
            if len(tok) != 3 or tok[1] not in _FORMATS or tok[2] != "1.0":
                raise MalformedHeader(f"unsupported format line: {ln!r}")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3:
                raise MalformedHeader(f"bad element line: {ln!r}")
            try:
                count = int(tok[2])
            except ValueError:
                raise MalformedHeader(f"bad element count: {ln!r}") from None
            if count < 0:
                raise MalformedHeader(f"negative element count: {ln!r}")
            elements.append([tok[1], count, []])
        elif tok[0] == "property":
            if not elements:
                raise MalformedHeader("property declared before any element")
            if len(tok) >= 2 and tok[1] == "list":
                raise UnsupportedProperty(f"list properties are not supported: {ln!r}")
            if len(tok) != 3:
                raise MalformedHeader(f"bad property line: {ln!r}")
            if tok[1] not in _SCALAR_TYPES:
                raise UnsupportedProperty(f"unknown property type {tok[1]!r}")
            elements[-1][2].append((tok[2], _SCALAR_TYPES[tok[1]]))
        else:
            raise MalformedHeader(f"unrecognized header line: {ln!r}")

    if fmt is None:
        raise MalformedHeader("missing format line")
    if not elements or elements[0][0] != "vertex":
        raise MalformedHeader("first element must be 'vertex'")
    name, count, props = elements[0]
    names = [p for p, _ in props]
    if len(set(names)) != len(names):
        raise MalformedHeader("duplicate vertex property")
    for axis in "xyz":
        if axis not in names:
            raise MalformedHeader(f"vertex element lacks property {axis!r}")
    types = dict(props)
    for axis in "xyz":
        if types[axis] not in ("f4", "f8"):
            raise UnsupportedProperty(f"coordinate {axis!r} must be a real type")
    rgb = [c in names for c in ("red", "green", "blue")]
    if any(rgb) and not all(rgb):
        raise MalformedHeader("partial red/green/blue properties")
    for c in ("red", "green", "blue"):
        if c in types and types[c] != "u1":
            raise UnsupportedProperty(f"color channel {c!r} must be 8-bit unsigned")
    if "part_label" in types and types["part_label"][0] not in "iu":
        raise UnsupportedProperty("part_label must be an integer type")
    return fmt, count, props, body_start


def parse_ply(data: bytes) -> PersonFrame:
    data = bytes(data)
    fmt, count, props, start = _parse_header(data)
    if count == 0:
        raise TruncatedBody("vertex element is empty")
    names = [p for p, _ in props]

    if fmt == "binary_little_endian":
        dtype = np.dtype([(n, "<" + t) for n, t in props])
        need = dtype.itemsize * count
        if len(data) - start < need:
            raise TruncatedBody(f"need {need} body bytes, found {len(data) - start}")
        rec = np.frombuffer(data, dtype=dtype, count=count, offset=start)
        cols = {n: rec[n] for n in names}
    else:
        lines = data[start:].decode("ascii", errors="replace").splitlines()
        rows = [ln.split() for ln in lines if ln.strip()]
        if len(rows) < count:
            raise TruncatedBody(f"header declares {count} vertices, body has {len(rows)} lines")
        rows = rows[:count]
        if any(len(r) != len(props) for r in rows):
            raise MalformedBody("vertex line has the wrong number of values")
        cols = {}
        for j, (n, t) in enumerate(props):
            vals = [r[j] for r in rows]
            try:
                if t[0] == "f":
                    cols[n] = np.array(vals, dtype=np.float64).astype(t)
                else:
                    cols[n] = np.array([int(v) for v in vals], dtype=np.int64)
            except ValueError as exc:
                raise MalformedBody(f"bad value for {n!r}: {exc}") from None
            if t[0] in "iu":
                info = np.iinfo(t)
                if cols[n].min() < info.min or cols[n].max() > info.max:
                    raise MalformedBody(f"value of {n!r} out of range for its type")

    pts = np.column_stack([cols[a].astype(np.float64) for a in "xyz"])
    colors = None
    if "red" in cols:
        colors = np.column_stack([cols[c].astype(np.float64) / 255.0
                                  for c in ("red", "green", "blue")])
    labels = cols["part_label"].astype(np.int64) if "part_label" in cols else None
    return PersonFrame(points=pts, colors=colors, part_labels=labels, timestamp_s=0.0)


def _quantize_colors(colors):
    return np.clip(np.rint(np.asarray(colors) * 255.0), 0, 255).astype(np.uint8)


def write_ply(frame: PersonFrame, form: str = "binary_le") -> bytes:
    """Serialize a frame. Points are written as float32, colors as uint8."""
    if form not in ("ascii", "binary_le"):
        raise ValueError(f"form must be 'ascii' or 'binary_le', got {form!r}")
    props = [("x", "float", "<f4"), ("y", "float", "<f4"), ("z", "float", "<f4")]
    if frame.colors is not None:
        props += [(c, "uchar", "u1") for c in ("red", "green", "blue")]
    if frame.part_labels is not None:
        props.append(("part_label", "int", "<i4"))
    fmt = "ascii" if form == "ascii" else "binary_little_endian"
    header = ["ply", f"format {fmt} 1.0", f"element vertex {len(frame)}"]
    header += [f"property {t} {n}" for n, t, _ in props]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    pts = frame.points.astype(np.float32)
    if form == "binary_le":
        rec = np.empty(len(frame), dtype=[(n, d) for n, _, d in props])
        for j, a in enumerate("xyz"):
            rec[a] = pts[:, j]
        if frame.colors is not None:
            q = _quantize_colors(frame.colors)
            for j, c in enumerate(("red", "green", "blue")):
                rec[c] = q[:, j]
        if frame.part_labels is not None:
            rec["part_label"] = frame.part_labels
        return head + rec.tobytes()

    cols = [["%.9g" % v for v in pts[:, j].tolist()] for j in range(3)]
    if frame.colors is not None:
        q = _quantize_colors(frame.colors)
        cols += [[str(int(v)) for v in q[:, j]] for j in range(3)]
    if frame.part_labels is not None:
        cols.append([str(int(v)) for v in frame.part_labels])
    body = "\n".join(" ".join(row) for row in zip(*cols)) + "\n"
    return head + body.encode("ascii")
