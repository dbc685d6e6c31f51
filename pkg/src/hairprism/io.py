"""File formats and run configuration.

Hair files use a little-endian binary layout (``int32`` strand count, then per
strand an ``int32`` vertex count and that many ``float32`` xyz triples) or a
JSON document. Meshes are read and written as ASCII OBJ or binary
little-endian PLY. Run configuration is a strict JSON document.

Every writer goes through :func:`atomic_write`, so a failed write never leaves
a partial file behind.
"""
from __future__ import annotations

import contextlib
import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .losses import C_TARGETS, GeometrySources, LossConfig
from .mesh import TriMesh, icosphere
from .optimize import OptimSchedule
from .prism import FRAMES, PrismParams, default_radius
from .sdf import BoxSdf, HalfSpaceSdf, MeshSdf
from .strands import DEFAULT_NEIGHBORS, Hairstyle, resample_strand

DEFAULT_N_POINTS = 100
DEFAULT_N_STRANDS = 3000
HAIR_JSON_FORMAT = "hairprism-hair"


class FormatError(ValueError):
    """Malformed input file. ``offset`` is a byte offset, ``line`` a 1-based line."""

    def __init__(self, path, message: str, offset: int | None = None, line: int | None = None):
        where = ""
        if offset is not None:
            where = f" at byte offset {offset}"
        elif line is not None:
            where = f" at line {line}"
        super().__init__(f"{path}: {message}{where}")
        self.path = str(path)
        self.offset = offset
        self.line = line


class ConfigError(ValueError):
    """Invalid run configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@contextlib.contextmanager
def atomic_write(path, mode: str = "wb"):
    """Write to a temporary sibling file and rename it into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


# -- hair files ----------------------------------------------------------------

def read_hair_binary(path, n_points: int = DEFAULT_N_POINTS, k: int | None = DEFAULT_NEIGHBORS) -> Hairstyle:
    """Read a binary hair file.

    When strands disagree on vertex count, every strand is resampled by arc
    length to ``n_points`` and ``meta["resampled"]`` is set.
    """
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError(path, "truncated header", offset=0)
    (n_strands,) = struct.unpack_from("<i", data, 0)
    if n_strands < 0:
        raise FormatError(path, f"negative strand count {n_strands}", offset=0)
    pos = 4
    strands = []
    for i in range(n_strands):
        if pos + 4 > len(data):
            raise FormatError(path, f"truncated vertex count for strand {i} of {n_strands}", offset=pos)
        (n,) = struct.unpack_from("<i", data, pos)
        if n < 0:
            raise FormatError(path, f"negative vertex count {n} for strand {i}", offset=pos)
        if n < 2:
            raise FormatError(path, f"strand {i} has {n} vertices, need at least 2", offset=pos)
        pos += 4
        nbytes = 12 * n
        if pos + nbytes > len(data):
            raise FormatError(path, f"truncated vertex data for strand {i}: need {nbytes} bytes, "
                                    f"have {len(data) - pos}", offset=pos)
        strands.append(np.frombuffer(data, dtype="<f4", count=3 * n, offset=pos).reshape(n, 3))
        pos += nbytes
    if pos != len(data):
        raise FormatError(path, f"{len(data) - pos} trailing bytes after {n_strands} strands", offset=pos)

    counts = sorted({s.shape[0] for s in strands})
    meta: dict = {"source": str(path), "resampled": False}
    if len(counts) > 1:
        arrays = [resample_strand(s.astype(np.float64), n_points).points for s in strands]
        meta.update(resampled=True, source_point_counts=[counts[0], counts[-1]])
    else:
        arrays = [s.astype(np.float64) for s in strands]
    return Hairstyle.from_strands(arrays, k=k, meta=meta)


def encode_hair_binary(hair: Hairstyle) -> bytes:
    parts = [struct.pack("<i", hair.n_strands)]
    head = struct.pack("<i", hair.n_points)
    for s in np.asarray(hair.points, dtype="<f4"):
        parts.append(head)
        parts.append(s.tobytes())
    return b"".join(parts)


def write_hair_binary(hair: Hairstyle, path) -> None:
    """Write ``hair`` at float32 precision."""
    blob = encode_hair_binary(hair)
    with atomic_write(path) as fh:
        fh.write(blob)


def read_hair_json(path, k: int | None = DEFAULT_NEIGHBORS) -> Hairstyle:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict) or doc.get("format") != HAIR_JSON_FORMAT:
        raise FormatError(path, f"not a {HAIR_JSON_FORMAT} document")
    strands = doc.get("strands")
    if not isinstance(strands, list):
        raise FormatError(path, "'strands' must be a list")
    arrays = []
    for i, s in enumerate(strands):
        try:
            a = np.asarray(s, dtype=np.float64)
        except (TypeError, ValueError):
            raise FormatError(path, f"strand {i} is not a numeric array") from None
        if a.ndim != 2 or a.shape[1] != 3 or a.shape[0] < 2:
            raise FormatError(path, f"strand {i} must be a list of >= 2 xyz triples, got shape {a.shape}")
        arrays.append(a)
    counts = {a.shape[0] for a in arrays}
    if len(counts) > 1:
        raise FormatError(path, f"strands have differing point counts {sorted(counts)}")
    meta = doc.get("meta") or {}
    return Hairstyle.from_strands(arrays, k=k, meta={**meta, "source": str(path)})


def write_hair_json(hair: Hairstyle, path) -> None:
    meta = {k: v for k, v in hair.meta.items() if k != "source"}
    doc = {"format": HAIR_JSON_FORMAT, "version": 1, "meta": meta, "strands": hair.points.tolist()}
    text = json.dumps(doc)
    with atomic_write(path, "w") as fh:
        fh.write(text)


def read_hair(path, n_points: int = DEFAULT_N_POINTS, k: int | None = DEFAULT_NEIGHBORS) -> Hairstyle:
    """Dispatch on extension: ``.json`` is JSON, anything else binary."""
    if Path(path).suffix.lower() == ".json":
        return read_hair_json(path, k=k)
    return read_hair_binary(path, n_points=n_points, k=k)


def write_hair(hair: Hairstyle, path) -> None:
    if Path(path).suffix.lower() == ".json":
        write_hair_json(hair, path)
    else:
        write_hair_binary(hair, path)


# -- meshes ---------------------------------------------------------------------

_OBJ_IGNORED = {"vn", "vt", "vp", "o", "g", "s", "usemtl", "mtllib", "l"}


def _obj_index(token: str, n_vertices: int, path, line: int) -> int:
    ref = token.split("/", 1)[0]
    try:
        i = int(ref)
    except ValueError:
        raise FormatError(path, f"bad face index {token!r}", line=line) from None
    if i > 0:
        i -= 1
    elif i < 0:
        i += n_vertices
    else:
        raise FormatError(path, "face index 0 is invalid (indices are 1-based)", line=line)
    if not 0 <= i < n_vertices:
        raise FormatError(path, f"face index {token!r} out of range for {n_vertices} vertices", line=line)
    return i


def read_obj(path) -> TriMesh:
    """Read v/f records; polygons are fan-triangulated."""
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError:
        raise FormatError(path, "not a text OBJ file") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        kind = tokens[0]
        if kind == "v":
            if len(tokens) not in (4, 5, 7):
                raise FormatError(path, f"vertex record needs 3 coordinates, got {len(tokens) - 1}", line=lineno)
            try:
                verts.append((float(tokens[1]), float(tokens[2]), float(tokens[3])))
            except ValueError:
                raise FormatError(path, "non-numeric vertex coordinate", line=lineno) from None
        elif kind == "f":
            if len(tokens) < 4:
                raise FormatError(path, "face record needs at least 3 indices", line=lineno)
            idx = [_obj_index(t, len(verts), path, lineno) for t in tokens[1:]]
            faces.extend((idx[0], idx[j], idx[j + 1]) for j in range(1, len(idx) - 1))
        elif kind not in _OBJ_IGNORED:
            raise FormatError(path, f"unknown record type {kind!r}", line=lineno)
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                   np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_obj(mesh: TriMesh, path) -> None:
    """Coordinates are written at float32 precision with enough digits to round-trip."""
    v = np.asarray(mesh.vertices, dtype=np.float32)
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in v.astype(np.float64).tolist()]
    lines += [f"f {a} {b} {c}" for a, b, c in (np.asarray(mesh.triangles) + 1).tolist()]
    with atomic_write(path, "w") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _ply_header(data: bytes, path):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise FormatError(path, "missing PLY magic or end_header", offset=0)
    nl = data.find(b"\n", end)
    if nl < 0:
        raise FormatError(path, "truncated header", offset=end)
    body_start = nl + 1
    elements: list[dict] = []
    fmt = None
    pos = 0
    for raw in data[:end].split(b"\n"):
        line = raw.decode("ascii", "replace").strip()
        tokens = line.split()
        here = pos
        pos += len(raw) + 1
        if not tokens or tokens[0] in ("ply", "comment", "obj_info"):
            continue
        if tokens[0] == "format":
            fmt = tokens[1] if len(tokens) > 1 else None
        elif tokens[0] == "element" and len(tokens) == 3:
            try:
                count = int(tokens[2])
            except ValueError:
                raise FormatError(path, f"bad element count {tokens[2]!r}", offset=here) from None
            if count < 0:
                raise FormatError(path, f"negative element count {count}", offset=here)
            elements.append({"name": tokens[1], "count": count, "props": []})
        elif tokens[0] == "property" and elements:
            if len(tokens) == 5 and tokens[1] == "list":
                if tokens[2] not in _PLY_TYPES or tokens[3] not in _PLY_TYPES:
                    raise FormatError(path, f"unknown list types in {line!r}", offset=here)
                elements[-1]["props"].append((tokens[4], _PLY_TYPES[tokens[2]], _PLY_TYPES[tokens[3]]))
            elif len(tokens) == 3 and tokens[1] in _PLY_TYPES:
                elements[-1]["props"].append((tokens[2], _PLY_TYPES[tokens[1]], None))
            else:
                raise FormatError(path, f"malformed property {line!r}", offset=here)
        else:
            raise FormatError(path, f"unexpected header line {line!r}", offset=here)
    if fmt != "binary_little_endian":
        raise FormatError(path, f"unsupported PLY format {fmt!r}; only binary_little_endian", offset=0)
    return elements, body_start


def read_ply(path) -> TriMesh:
    data = Path(path).read_bytes()
    elements, pos = _ply_header(data, path)
    verts = np.zeros((0, 3))
    faces = np.zeros((0, 3), dtype=np.int64)
    for el in elements:
        props = el["props"]
        if all(lt is None for _, _, lt in props):
            dtype = np.dtype([(name, "<" + t) for name, t, _ in props])
            nbytes = dtype.itemsize * el["count"]
            if pos + nbytes > len(data):
                raise FormatError(path, f"truncated {el['name']} data: need {nbytes} bytes, "
                                        f"have {len(data) - pos}", offset=pos)
            rec = np.frombuffer(data, dtype=dtype, count=el["count"], offset=pos)
            if el["name"] == "vertex":
                if not {"x", "y", "z"} <= set(dtype.names):
                    raise FormatError(path, "vertex element lacks x/y/z", offset=pos)
                verts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
            pos += nbytes
        elif el["name"] == "face" and len(props) == 1:
            _, count_t, item_t = props[0]
            ct, it = np.dtype("<" + count_t), np.dtype("<" + item_t)
            tris = []
            for f in range(el["count"]):
                if pos + ct.itemsize > len(data):
                    raise FormatError(path, f"truncated face {f}", offset=pos)
                n = int(np.frombuffer(data, dtype=ct, count=1, offset=pos)[0])
                if n < 3:
                    raise FormatError(path, f"face {f} has {n} vertices", offset=pos)
                pos += ct.itemsize
                if pos + n * it.itemsize > len(data):
                    raise FormatError(path, f"truncated face {f}", offset=pos)
                idx = np.frombuffer(data, dtype=it, count=n, offset=pos).astype(np.int64)
                if np.any(idx < 0) or np.any(idx >= verts.shape[0]):
                    raise FormatError(path, f"face {f} index out of range", offset=pos)
                tris.extend((idx[0], idx[j], idx[j + 1]) for j in range(1, n - 1))
                pos += n * it.itemsize
            faces = np.array(tris, dtype=np.int64).reshape(-1, 3)
        else:
            raise FormatError(path, f"unsupported element layout {el['name']!r}", offset=pos)
    if pos != len(data):
        raise FormatError(path, f"{len(data) - pos} trailing bytes", offset=pos)
    return TriMesh(verts, faces)


def encode_ply(mesh: TriMesh) -> bytes:
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property float x\nproperty float y\nproperty float z\n"
        f"element face {mesh.n_triangles}\n"
        "property list uchar int vertex_indices\nend_header\n"
    ).encode("ascii")
    verts = np.asarray(mesh.vertices, dtype="<f4").tobytes()
    face_dtype = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
    faces = np.empty(mesh.n_triangles, dtype=face_dtype)
    faces["n"] = 3
    faces["idx"] = mesh.triangles
    return header + verts + faces.tobytes()


def write_ply(mesh: TriMesh, path) -> None:
    blob = encode_ply(mesh)
    with atomic_write(path) as fh:
        fh.write(blob)


def read_mesh(path) -> TriMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    if suffix == ".ply":
        return read_ply(path)
    raise FormatError(path, f"unknown mesh extension {suffix!r} (expected .obj or .ply)")


def write_mesh(mesh: TriMesh, path) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        write_obj(mesh, path)
    elif suffix == ".ply":
        write_ply(mesh, path)
    else:
        raise ValueError(f"unknown mesh extension {suffix!r} (expected .obj or .ply)")


# -- run configuration ------------------------------------------------------------

@dataclass(frozen=True)
class PrismConfig:
    k_edges: int = 4
    radius: float | str = 0.01
    scalp_area: float | None = None
    reference_point: tuple[float, float, float] = (0.0, 0.0, 0.0)
    frame: str = "cross"

    def params(self, n_strands: int) -> PrismParams:
        """Resolve ``radius="auto"`` against the hairstyle's strand count."""
        radius = self.radius
        if radius == "auto":
            radius = default_radius(self.scalp_area, max(n_strands, 1))
        return PrismParams(self.k_edges, float(radius), self.reference_point, self.frame)


@dataclass(frozen=True)
class HairConfig:
    n_strands: int = DEFAULT_N_STRANDS
    n_points: int = DEFAULT_N_POINTS
    neighbors_k: int = DEFAULT_NEIGHBORS


@dataclass(frozen=True)
class RunConfig:
    loss: LossConfig = LossConfig()
    prism: PrismConfig = PrismConfig()
    schedule: OptimSchedule = OptimSchedule()
    hair: HairConfig = HairConfig()
    sources: dict = field(default_factory=dict)
    seed: int = 0
    paths: dict = field(default_factory=dict)

    def geometry_sources(self, base_dir=None) -> GeometrySources:
        """Instantiate SDF sources; relative head mesh paths resolve against ``base_dir``."""
        built = {}
        if "bbox" in self.sources:
            b = self.sources["bbox"]
            built["bbox"] = BoxSdf(b["center"], b["half_extents"])
        if "face" in self.sources:
            f = self.sources["face"]
            built["face"] = HalfSpaceSdf(f["point"], f["normal"])
        if "head" in self.sources:
            h = self.sources["head"]
            if "mesh" in h:
                p = Path(h["mesh"])
                if base_dir is not None and not p.is_absolute():
                    p = Path(base_dir) / p
                built["head"] = MeshSdf(read_mesh(p))
            else:
                s = h["icosphere"]
                built["head"] = MeshSdf(icosphere(s.get("subdivisions", 3), s.get("radius", 1.0),
                                                  s.get("center", (0.0, 0.0, 0.0))))
        return GeometrySources(**built)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _number(key, v) -> float:
    if not _is_number(v):
        raise ConfigError(key, f"expected a number, got {type(v).__name__}")
    return float(v)


def _integer(key, v, minimum=None) -> int:
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigError(key, f"expected an integer, got {type(v).__name__}")
    if minimum is not None and v < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {v}")
    return v


def _vec3(key, v) -> tuple[float, float, float]:
    if not isinstance(v, list) or len(v) != 3:
        raise ConfigError(key, "expected a list of 3 numbers")
    return tuple(_number(f"{key}[{i}]", x) for i, x in enumerate(v))


def _section(key, v, allowed) -> dict:
    if not isinstance(v, dict):
        raise ConfigError(key, f"expected a table, got {type(v).__name__}")
    for k in v:
        if k not in allowed:
            raise ConfigError(f"{key}.{k}" if key else k, f"unknown key (allowed: {', '.join(sorted(allowed))})")
    return v


def _c_target(key, v) -> float:
    if isinstance(v, str):
        if v not in C_TARGETS:
            raise ConfigError(key, f"unknown curliness class {v!r} (known: {', '.join(C_TARGETS)})")
        return C_TARGETS[v]
    return _number(key, v)


def _parse_loss(raw) -> LossConfig:
    names = {f.name for f in fields(LossConfig)}
    sec = _section("loss", raw, names)
    kw = {}
    for k, v in sec.items():
        kw[k] = _c_target(f"loss.{k}", v) if k == "c_target" else _number(f"loss.{k}", v)
        if kw[k] < 0:
            raise ConfigError(f"loss.{k}", f"must be non-negative, got {v}")
    try:
        return LossConfig(**kw)
    except ValueError as exc:
        raise ConfigError("loss", str(exc)) from None


def _parse_prism(raw) -> PrismConfig:
    sec = _section("prism", raw, {f.name for f in fields(PrismConfig)})
    kw = {}
    if "k_edges" in sec:
        kw["k_edges"] = _integer("prism.k_edges", sec["k_edges"], 3)
    if "radius" in sec:
        r = sec["radius"]
        if r != "auto":
            r = _number("prism.radius", r)
            if r <= 0:
                raise ConfigError("prism.radius", f"must be positive or \"auto\", got {r}")
        kw["radius"] = r
    if "scalp_area" in sec:
        a = _number("prism.scalp_area", sec["scalp_area"])
        if a <= 0:
            raise ConfigError("prism.scalp_area", f"must be positive, got {a}")
        kw["scalp_area"] = a
    if kw.get("radius") == "auto" and "scalp_area" not in kw:
        raise ConfigError("prism.radius", "\"auto\" requires prism.scalp_area")
    if "reference_point" in sec:
        kw["reference_point"] = _vec3("prism.reference_point", sec["reference_point"])
    if "frame" in sec:
        if sec["frame"] not in FRAMES:
            raise ConfigError("prism.frame", f"must be one of {FRAMES}, got {sec['frame']!r}")
        kw["frame"] = sec["frame"]
    return PrismConfig(**kw)


def _parse_schedule(raw) -> OptimSchedule:
    sec = _section("schedule", raw, {f.name for f in fields(OptimSchedule)})
    kw = {}
    for k, v in sec.items():
        key = f"schedule.{k}"
        if k in ("step_count", "log_every"):
            kw[k] = _integer(key, v, 0)
        elif k == "adam_betas":
            if not isinstance(v, list) or len(v) != 2:
                raise ConfigError(key, "expected a list of 2 numbers")
            kw[k] = tuple(_number(f"{key}[{i}]", x) for i, x in enumerate(v))
        else:
            kw[k] = _number(key, v)
    try:
        return OptimSchedule(**kw)
    except ValueError as exc:
        raise ConfigError("schedule", str(exc)) from None


def _parse_hair(raw) -> HairConfig:
    sec = _section("hair", raw, {f.name for f in fields(HairConfig)})
    mins = {"n_strands": 0, "n_points": 2, "neighbors_k": 1}
    return HairConfig(**{k: _integer(f"hair.{k}", v, mins[k]) for k, v in sec.items()})


def _parse_sources(raw) -> dict:
    sec = _section("sources", raw, {"bbox", "face", "head"})
    out = {}
    if "bbox" in sec:
        b = _section("sources.bbox", sec["bbox"], {"center", "half_extents"})
        for k in ("center", "half_extents"):
            if k not in b:
                raise ConfigError(f"sources.bbox.{k}", "missing")
        half = _vec3("sources.bbox.half_extents", b["half_extents"])
        if min(half) <= 0:
            raise ConfigError("sources.bbox.half_extents", "must be positive")
        out["bbox"] = {"center": _vec3("sources.bbox.center", b["center"]), "half_extents": half}
    if "face" in sec:
        f = _section("sources.face", sec["face"], {"point", "normal"})
        for k in ("point", "normal"):
            if k not in f:
                raise ConfigError(f"sources.face.{k}", "missing")
        n = np.array(_vec3("sources.face.normal", f["normal"]))
        if np.linalg.norm(n) == 0:
            raise ConfigError("sources.face.normal", "must be non-zero")
        out["face"] = {"point": _vec3("sources.face.point", f["point"]),
                       "normal": tuple((n / np.linalg.norm(n)).tolist())}
    if "head" in sec:
        h = _section("sources.head", sec["head"], {"mesh", "icosphere"})
        if len(h) != 1:
            raise ConfigError("sources.head", "give exactly one of 'mesh' or 'icosphere'")
        if "mesh" in h:
            if not isinstance(h["mesh"], str):
                raise ConfigError("sources.head.mesh", "expected a path string")
            out["head"] = {"mesh": h["mesh"]}
        else:
            s = _section("sources.head.icosphere", h["icosphere"], {"subdivisions", "radius", "center"})
            spec = {}
            if "subdivisions" in s:
                spec["subdivisions"] = _integer("sources.head.icosphere.subdivisions", s["subdivisions"], 0)
            if "radius" in s:
                spec["radius"] = _number("sources.head.icosphere.radius", s["radius"])
                if spec["radius"] <= 0:
                    raise ConfigError("sources.head.icosphere.radius", "must be positive")
            if "center" in s:
                spec["center"] = _vec3("sources.head.icosphere.center", s["center"])
            out["head"] = {"icosphere": spec}
    return out


_TOP_KEYS = {"loss", "prism", "schedule", "hair", "sources", "seed", "paths", "c_target"}


def parse_config(doc: dict) -> RunConfig:
    """Validate a decoded config document. A top-level ``c_target`` is shorthand for ``loss.c_target``."""
    doc = _section("", doc, _TOP_KEYS)
    loss_raw = dict(doc.get("loss", {})) if isinstance(doc.get("loss", {}), dict) else doc["loss"]
    if "c_target" in doc:
        if isinstance(loss_raw, dict) and "c_target" in loss_raw:
            raise ConfigError("c_target", "given both at top level and in [loss]")
        loss_raw = {**loss_raw, "c_target": _c_target("c_target", doc["c_target"])}
    kw = {"loss": _parse_loss(loss_raw)}
    if "prism" in doc:
        kw["prism"] = _parse_prism(doc["prism"])
    if "schedule" in doc:
        kw["schedule"] = _parse_schedule(doc["schedule"])
    if "hair" in doc:
        kw["hair"] = _parse_hair(doc["hair"])
    if "sources" in doc:
        kw["sources"] = _parse_sources(doc["sources"])
    if "seed" in doc:
        kw["seed"] = _integer("seed", doc["seed"], 0)
    if "paths" in doc:
        paths = _section("paths", doc["paths"], {"init", "target", "out", "trace", "head"})
        for k, v in paths.items():
            if not isinstance(v, str):
                raise ConfigError(f"paths.{k}", "expected a path string")
        kw["paths"] = dict(paths)
    return RunConfig(**kw)


def load_config(path=None) -> RunConfig:
    """Load a JSON run config; ``None`` or an empty document gives the defaults."""
    if path is None:
        return RunConfig()
    text = Path(path).read_text()
    if not text.strip():
        return RunConfig()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return parse_config(doc)


def config_to_dict(cfg: RunConfig) -> dict:
    """Inverse of :func:`parse_config` (tuples become lists)."""
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        return v

    prism = {k: v for k, v in asdict(cfg.prism).items() if v is not None}
    return plain({"loss": asdict(cfg.loss), "prism": prism, "schedule": asdict(cfg.schedule),
                  "hair": asdict(cfg.hair), "sources": cfg.sources, "seed": cfg.seed, "paths": cfg.paths})
