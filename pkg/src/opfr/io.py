"""Point cloud readers/writers (XYZ, PLY, OFF), CSV feature tables and the
binary parameter format."""

from __future__ import annotations

import json
import os
import struct
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import GeometryError, ParseError
from .geom import PointCloud
from .model import MlpParams, MlpSpec

FORMATS = ("xyz", "ply", "off")

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def infer_format(path) -> str:
    ext = os.path.splitext(str(path))[1].lower().lstrip(".")
    if ext in FORMATS:
        return ext
    if ext in ("txt", "pts", "asc"):
        return "xyz"
    raise ParseError(f"cannot infer point cloud format from extension {ext!r}")


def _finish(points: np.ndarray, normals: Optional[np.ndarray]) -> PointCloud:
    if points.shape[0] == 0:
        raise ParseError("file contains no points")
    bad = ~np.isfinite(points).all(axis=1)
    if bad.any():
        raise ParseError(f"non-finite coordinate in point {int(np.argmax(bad))}")
    if normals is not None:
        if not np.isfinite(normals).all():
            raise ParseError("non-finite normal component")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms == 0):
            raise ParseError(f"zero-length normal at point {int(np.argmax(norms == 0))}")
        normals = normals / norms[:, None]
    try:
        return PointCloud(points, normals)
    except GeometryError as exc:
        raise ParseError(str(exc)) from exc


def _decode(data: bytes) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"file is not valid UTF-8 text ({exc.reason} at byte {exc.start})") from exc


def _floats(tokens: Sequence[str], line_no: int) -> List[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"expected numbers, got {' '.join(tokens)!r}", line_no) from None


def parse_xyz(text: str) -> PointCloud:
    rows, width = [], None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.replace(",", " ").split()
        if len(tokens) not in (3, 6):
            raise ParseError(f"expected 3 or 6 values, got {len(tokens)}", line_no)
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise ParseError(f"row has {len(tokens)} values but earlier rows have {width}", line_no)
        vals = _floats(tokens, line_no)
        if not all(np.isfinite(vals[:3])):
            raise ParseError("non-finite coordinate", line_no)
        rows.append(vals)
    if not rows:
        raise ParseError("file contains no points")
    arr = np.array(rows, dtype=np.float64)
    return _finish(arr[:, :3], arr[:, 3:6] if width == 6 else None)


def parse_off(text: str) -> PointCloud:
    lines = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((line_no, line))
    if not lines:
        raise ParseError("empty OFF file", 1)
    line_no, head = lines[0]
    if not head.startswith("OFF"):
        raise ParseError("missing 'OFF' header", line_no)
    rest = head[3:].split()
    pos = 1
    if rest:
        counts, count_line = rest, line_no
    else:
        if len(lines) < 2:
            raise ParseError("missing vertex/face count line", line_no)
        count_line, c = lines[1]
        counts = c.split()
        pos = 2
    if len(counts) < 2:
        raise ParseError("count line needs at least vertex and face counts", count_line)
    try:
        nv = int(counts[0])
        int(counts[1])
    except ValueError:
        raise ParseError("vertex/face counts must be integers", count_line) from None
    if nv < 1:
        raise ParseError(f"vertex count must be positive, got {nv}", count_line)
    if len(lines) < pos + nv:
        raise ParseError(f"expected {nv} vertices, file ends after {len(lines) - pos}",
                         lines[-1][0])
    pts = np.empty((nv, 3))
    for r in range(nv):
        ln, line = lines[pos + r]
        tokens = line.split()
        if len(tokens) < 3:
            raise ParseError("vertex needs 3 coordinates", ln)
        vals = _floats(tokens[:3], ln)
        if not all(np.isfinite(vals)):
            raise ParseError("non-finite coordinate", ln)
        pts[r] = vals
    return _finish(pts, None)


def _parse_ply_header(data: bytes):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("missing 'ply' magic or 'end_header'", 1)
    nl = data.find(b"\n", end)
    body_start = len(data) if nl < 0 else nl + 1
    header = _decode(data[:end])
    fmt, elements = None, []
    for line_no, raw in enumerate(header.splitlines(), start=1):
        tok = raw.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(f"unsupported PLY format {' '.join(tok[1:])!r}", line_no)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3:
                raise ParseError("element line needs a name and a count", line_no)
            try:
                count = int(tok[2])
            except ValueError:
                raise ParseError("element count must be an integer", line_no) from None
            if count < 0:
                raise ParseError("element count must be non-negative", line_no)
            elements.append({"name": tok[1], "count": count, "props": [], "line": line_no})
        elif tok[0] == "property":
            if not elements:
                raise ParseError("property before any element", line_no)
            if len(tok) >= 2 and tok[1] == "list":
                if len(tok) != 5 or tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise ParseError("malformed list property", line_no)
                elements[-1]["props"].append((tok[4], "list", tok[2], tok[3]))
            else:
                if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                    raise ParseError(f"unknown property type in {raw.strip()!r}", line_no)
                elements[-1]["props"].append((tok[2], _PLY_TYPES[tok[1]]))
        else:
            raise ParseError(f"unexpected header keyword {tok[0]!r}", line_no)
    if fmt is None:
        raise ParseError("PLY header has no format line", 1)
    n_header_lines = header.count("\n") + 1
    return fmt, elements, body_start, n_header_lines


def _vertex_arrays(names, columns):
    if not all(k in names for k in ("x", "y", "z")):
        raise ParseError("vertex element lacks x/y/z properties")
    pts = np.column_stack([columns[names.index(k)] for k in ("x", "y", "z")]).astype(np.float64)
    normals = None
    if all(k in names for k in ("nx", "ny", "nz")):
        normals = np.column_stack([columns[names.index(k)] for k in ("nx", "ny", "nz")]).astype(np.float64)
    return _finish(pts, normals)


def parse_ply(data: bytes) -> PointCloud:
    fmt, elements, body_start, n_header = _parse_ply_header(data)
    if not any(e["name"] == "vertex" for e in elements):
        raise ParseError("PLY file has no vertex element")
    if fmt == "ascii":
        lines = _decode(data[body_start:]).splitlines()
        pos = 0
        for el in elements:
            if el["name"] != "vertex":
                pos += el["count"]
                continue
            if any(p[1] == "list" for p in el["props"]):
                raise ParseError("list properties on vertices are not supported", el["line"])
            names = [p[0] for p in el["props"]]
            if pos + el["count"] > len(lines):
                raise ParseError(f"expected {el['count']} vertex rows", n_header + len(lines) + 1)
            rows = []
            for r in range(el["count"]):
                line_no = n_header + 1 + pos + r
                tokens = lines[pos + r].split()
                if len(tokens) != len(names):
                    raise ParseError(f"expected {len(names)} values, got {len(tokens)}", line_no)
                vals = _floats(tokens, line_no)
                rows.append(vals)
            cols = np.array(rows, dtype=np.float64).reshape(el["count"], len(names)).T
            return _vertex_arrays(names, list(cols))
    offset = body_start
    for el in elements:
        if any(p[1] == "list" for p in el["props"]):
            if el["name"] == "vertex":
                raise ParseError("list properties on vertices are not supported", el["line"])
            raise ParseError("binary elements with list properties must follow the vertices",
                             el["line"])
        dtype = np.dtype([(f"p{i}", "<" + p[1]) for i, p in enumerate(el["props"])])
        size = dtype.itemsize * el["count"]
        if el["name"] == "vertex":
            if offset + size > len(data):
                raise ParseError(f"binary body too short for {el['count']} vertices", el["line"])
            rec = np.frombuffer(data, dtype=dtype, count=el["count"], offset=offset)
            names = [p[0] for p in el["props"]]
            return _vertex_arrays(names, [rec[f"p{i}"] for i in range(len(names))])
        offset += size
    raise ParseError("PLY file has no vertex element")


def read_cloud(path, fmt: Optional[str] = None) -> PointCloud:
    fmt = fmt or infer_format(path)
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_cloud(data, fmt)


def parse_cloud(data: bytes, fmt: str) -> PointCloud:
    if fmt == "xyz":
        return parse_xyz(_decode(data))
    if fmt == "off":
        return parse_off(_decode(data))
    if fmt == "ply":
        return parse_ply(data)
    raise ParseError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def _fmt_row(vals) -> str:
    return " ".join(repr(float(v)) for v in vals)


def write_cloud(path, cloud: PointCloud, fmt: Optional[str] = None, binary: bool = False) -> None:
    fmt = fmt or infer_format(path)
    pts, nrm = cloud.points, cloud.normals
    data = pts if nrm is None else np.hstack([pts, nrm])
    if fmt == "xyz":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# x y z" + (" nx ny nz" if nrm is not None else "") + "\n")
            for row in data:
                fh.write(_fmt_row(row) + "\n")
    elif fmt == "off":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"OFF\n{len(pts)} 0 0\n")
            for row in pts:
                fh.write(_fmt_row(row) + "\n")
    elif fmt == "ply":
        names = ["x", "y", "z"] + (["nx", "ny", "nz"] if nrm is not None else [])
        head = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
                f"element vertex {len(pts)}"]
        head += [f"property double {n}" for n in names]
        head.append("end_header")
        with open(path, "wb") as fh:
            fh.write(("\n".join(head) + "\n").encode("ascii"))
            if binary:
                fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
            else:
                fh.write("".join(_fmt_row(r) + "\n" for r in data).encode("ascii"))
    else:
        raise ParseError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def write_table(path, points: np.ndarray, matrix: np.ndarray, columns: Sequence[str]) -> None:
    """CSV with header ``index,x,y,z,<columns>``; floats written round-trip exact."""
    matrix = np.asarray(matrix, dtype=np.float64).reshape(len(points), -1)
    if matrix.shape[1] != len(columns):
        raise ValueError(f"{matrix.shape[1]} feature columns but {len(columns)} names")
    header = ",".join(["index", "x", "y", "z", *columns])
    body = np.hstack([points, matrix])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for i, row in enumerate(body):
            fh.write(str(i) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def read_table(path) -> Tuple[List[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


# --- parameter files -------------------------------------------------------

MAGIC = b"OPFR"
FORMAT_VERSION = 1


def save_params(path, params: MlpParams, head: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> None:
    """Magic, uint32 version, uint32 JSON length, JSON spec, then little-endian f8 arrays."""
    spec = params.spec
    meta = {
        "widths": list(spec.widths),
        "batch_norm": list(spec.batch_norm),
        "pooling": spec.pooling,
        "use_bias": spec.use_bias,
        "head": None if head is None else list(head[0].shape),
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    arrays = _param_arrays(params)
    if head is not None:
        arrays += [head[0], head[1]]
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", FORMAT_VERSION, len(blob)) + blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _param_arrays(params: MlpParams) -> List[np.ndarray]:
    out = []
    for l in range(params.spec.n_layers):
        out.append(params.weights[l])
        if params.biases[l] is not None:
            out.append(params.biases[l])
        if params.gammas[l] is not None:
            out += [params.gammas[l], params.betas[l], params.running_mean[l], params.running_var[l]]
    return out


def load_params(path) -> Tuple[MlpParams, Optional[Tuple[np.ndarray, np.ndarray]]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != MAGIC:
        raise ParseError("not an OPFR parameter file (bad magic)")
    version, n = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported parameter format version {version}")
    try:
        meta = json.loads(data[12:12 + n].decode("utf-8"))
        spec = MlpSpec(tuple(meta["widths"]), tuple(meta["batch_norm"]), meta["pooling"],
                       bool(meta["use_bias"]))
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise ParseError(f"corrupt parameter header: {exc}") from exc
    if len(data) < 12 + n or (len(data) - 12 - n) % 8:
        raise ParseError("parameter file is truncated")
    buf = np.frombuffer(data, dtype="<f8", offset=12 + n) if len(data) > 12 + n else np.empty(0)
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        if pos + size > buf.size:
            raise ParseError("parameter file is truncated")
        a = buf[pos:pos + size].astype(np.float64).reshape(shape)
        pos += size
        return a

    W, b, g, be, rm, rv = [], [], [], [], [], []
    for l in range(spec.n_layers):
        fi, fo = spec.widths[l], spec.widths[l + 1]
        W.append(take((fi, fo)))
        b.append(take((fo,)) if spec.use_bias else None)
        if spec.batch_norm[l]:
            g.append(take((fo,))); be.append(take((fo,))); rm.append(take((fo,))); rv.append(take((fo,)))
        else:
            g.append(None); be.append(None); rm.append(None); rv.append(None)
    head = None
    if meta.get("head") is not None:
        shape = meta["head"]
        if (not isinstance(shape, list) or len(shape) != 2
                or not all(isinstance(d, int) and d > 0 for d in shape)):
            raise ParseError("corrupt parameter header: bad head shape")
        shape = tuple(shape)
        head = (take(shape), take((shape[1],)))
    if pos != buf.size:
        raise ParseError("trailing bytes after parameters")
    params = MlpParams(spec, W, b, g, be, rm, rv)
    if not all(np.all(np.isfinite(a)) for a in _param_arrays(params)):
        raise ParseError("parameters contain non-finite values")
    return params, head
