"""Indexed triangle meshes, ASCII OFF/OBJ I/O and derived geometry."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np


class MeshError(Exception):
    """Base class for mesh related errors."""


class ParseError(MeshError):
    pass


class IndexOutOfRange(MeshError):
    pass


class DegenerateGeometry(MeshError):
    pass


class ZeroNormVertex(MeshError):
    pass


@dataclass(frozen=True)
class Mesh:
    """Immutable triangle mesh: ``vertices`` (n, 3) float64, ``faces`` (f, 3) int64."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f):
            if f.min() < 0 or f.max() >= len(v):
                raise IndexOutOfRange(
                    f"face index out of range [0, {len(v)}): min={f.min()} max={f.max()}"
                )
            bad = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if bad.any():
                raise ParseError(f"degenerate face (repeated index) at {int(np.argmax(bad))}")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices) -> "Mesh":
        return Mesh(vertices, self.faces)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (e, 2) index pairs."""
        return unique_edges(self.faces)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices) and np.array_equal(
            self.faces, other.faces
        )

    __hash__ = None


def unique_edges(faces: np.ndarray) -> np.ndarray:
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


# ---------------------------------------------------------------- I/O


def _tokens(path: Path, comment: str):
    with open(path, "r") as fh:
        for line in fh:
            line = line.split(comment, 1)[0].strip()
            if line:
                yield line


def _load_off(path: Path) -> Mesh:
    lines = _tokens(path, "#")
    try:
        header = next(lines)
    except StopIteration:
        raise ParseError(f"{path}: empty file") from None
    rest = header[3:].split() if header.startswith("OFF") else None
    if rest is None:
        raise ParseError(f"{path}: missing OFF header")
    if not rest:
        try:
            rest = next(lines).split()
        except StopIteration:
            raise ParseError(f"{path}: missing counts line") from None
    try:
        nv, nf = int(rest[0]), int(rest[1])
    except (IndexError, ValueError):
        raise ParseError(f"{path}: malformed counts line {rest!r}") from None
    if nv < 0 or nf < 0:
        raise ParseError(f"{path}: negative counts")

    verts = np.empty((nv, 3))
    for i in range(nv):
        try:
            verts[i] = [float(x) for x in next(lines).split()[:3]]
        except StopIteration:
            raise ParseError(f"{path}: expected {nv} vertices, found {i}") from None
        except ValueError:
            raise ParseError(f"{path}: malformed vertex line {i}") from None

    faces = []
    for i in range(nf):
        try:
            parts = next(lines).split()
        except StopIteration:
            raise ParseError(f"{path}: expected {nf} faces, found {i}") from None
        try:
            k = int(parts[0])
            idx = [int(x) for x in parts[1 : 1 + k]]
        except (IndexError, ValueError):
            raise ParseError(f"{path}: malformed face line {i}") from None
        if k < 3 or len(idx) != k:
            raise ParseError(f"{path}: face {i} has bad arity")
        faces.extend(_fan(idx))
    if next(lines, None) is not None:
        raise ParseError(f"{path}: trailing data after {nf} faces")
    return Mesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))


def _fan(idx):
    return [(idx[0], idx[j], idx[j + 1]) for j in range(1, len(idx) - 1)]


def _load_obj(path: Path) -> Mesh:
    verts, faces = [], []
    for lineno, line in enumerate(_tokens(path, "#"), 1):
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "v":
                verts.append([float(x) for x in parts[1:4]])
                if len(verts[-1]) != 3:
                    raise ValueError
            elif tag == "f":
                idx = []
                for p in parts[1:]:
                    i = int(p.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise ValueError
                faces.extend(_fan(idx))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: malformed {tag!r} record") from None
    return Mesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def _resolve_format(path: Path, format: str | None) -> str:
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt not in ("off", "obj"):
        raise ValueError(f"unsupported mesh format {fmt!r} (expected off or obj)")
    return fmt


def load_mesh(path, format: str | None = None) -> Mesh:
    """Read an ASCII OFF or OBJ file; polygons are fan-triangulated."""
    path = Path(path)
    fmt = _resolve_format(path, format)
    return _load_off(path) if fmt == "off" else _load_obj(path)


def format_mesh(mesh: Mesh, format: str = "off") -> str:
    fmt = format.lower()
    out = []
    if fmt == "off":
        out.append("OFF")
        out.append(f"{mesh.n_vertices} {mesh.n_faces} 0")
        out.extend(f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices)
        out.extend(f"3 {a} {b} {c}" for a, b, c in mesh.faces)
    elif fmt == "obj":
        out.extend(f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices)
        out.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces)
    else:
        raise ValueError(f"unsupported mesh format {format!r}")
    return "\n".join(out) + "\n"


def save_mesh(mesh: Mesh, path, format: str | None = None) -> None:
    """Write ``mesh`` with 17 significant digits (exact float64 round-trip).

    Raises ``OSError`` if the path is not writable.
    """
    path = Path(path)
    text = format_mesh(mesh, _resolve_format(path, format))
    with open(path, "w") as fh:
        fh.write(text)


# ---------------------------------------------------------------- geometry


@dataclass(frozen=True)
class MeshGeometry:
    center: np.ndarray
    bbox_diag: float
    face_normals: np.ndarray  # unit
    face_areas: np.ndarray
    vertex_normals: np.ndarray  # area weighted, not normalized
    radial_norms: np.ndarray

    @property
    def normal_norms(self) -> np.ndarray:
        return np.linalg.norm(self.vertex_normals, axis=1)


def face_cross(mesh: Mesh) -> np.ndarray:
    v, f = mesh.vertices, mesh.faces
    return np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])


def vertex_normal_sums(mesh: Mesh) -> np.ndarray:
    """Sum over incident faces of unit normal times area (half the face cross product)."""
    cr = 0.5 * face_cross(mesh)
    out = np.zeros((mesh.n_vertices, 3))
    for k in range(3):
        np.add.at(out, mesh.faces[:, k], cr)
    return out


def compute_geometry(mesh: Mesh, strict: bool = False) -> MeshGeometry:
    """Derived quantities used by the saliency and watermark code.

    Zero-area faces contribute nothing to the vertex normals. With
    ``strict=True`` a vertex whose normal sum vanishes although it has incident
    faces raises :class:`DegenerateGeometry`.
    """
    v = mesh.vertices
    center = v.mean(axis=0) if len(v) else np.zeros(3)
    bbox = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0))) if len(v) else 0.0
    cr = face_cross(mesh)
    dbl = np.linalg.norm(cr, axis=1)
    unit = np.divide(cr, dbl[:, None], out=np.zeros_like(cr), where=dbl[:, None] > 0)
    vn = vertex_normal_sums(mesh)
    if strict and len(mesh.faces):
        has_face = np.zeros(len(v), bool)
        has_face[mesh.faces.ravel()] = True
        zero = has_face & ~np.any(vn != 0.0, axis=1)
        if zero.any():
            raise DegenerateGeometry(
                f"{int(zero.sum())} vertices have a zero normal (first: {int(np.argmax(zero))})"
            )
    radial = np.linalg.norm(v - center, axis=1)
    return MeshGeometry(center, bbox, unit, 0.5 * dbl, vn, radial)


def reconstruct_from_norms(
    mesh: Mesh, geometry: MeshGeometry, new_norms: Mapping[int, float] | tuple
) -> Mesh:
    """Move each mapped vertex radially (about ``geometry.center``) to its new norm.

    ``new_norms`` is a ``{index: norm}`` mapping or an ``(indices, norms)``
    pair of arrays. Vertices sitting on the center cannot be moved and raise
    :class:`ZeroNormVertex`.
    """
    if isinstance(new_norms, Mapping):
        idx = np.fromiter(new_norms.keys(), dtype=np.int64, count=len(new_norms))
        val = np.fromiter(new_norms.values(), dtype=np.float64, count=len(new_norms))
    else:
        idx, val = (np.asarray(a) for a in new_norms)
        idx = idx.astype(np.int64)
        val = val.astype(np.float64)
    old = geometry.radial_norms[idx]
    if np.any(old <= 0):
        bad = idx[old <= 0]
        raise ZeroNormVertex(f"vertices at the center cannot be moved radially: {bad.tolist()}")
    v = mesh.vertices.copy()
    # identical norms must reproduce the input bit for bit
    changed = val != old
    i = idx[changed]
    d = v[i] - geometry.center
    v[i] = geometry.center + d * (val[changed] / old[changed])[:, None]
    return mesh.with_vertices(v)


def vertex_adjacency(mesh: Mesh):
    """CSR neighbour lists ``(indptr, indices)`` of the edge graph."""
    from scipy import sparse

    e = mesh.edges()
    n = mesh.n_vertices
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    a = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    a.sort_indices()
    return a.indptr, a.indices
