"""Mesh attacks used to benchmark watermark robustness.

Every randomized attack takes an explicit integer seed and is bit
reproducible.  Attacks return new meshes; inputs are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial.transform import Rotation

from .mesh import Mesh, MeshError, vertex_adjacency


class AttackError(MeshError):
    pass


class InvalidRotation(AttackError):
    pass


class NonManifoldEdge(AttackError):
    pass


class EmptyResult(AttackError):
    pass


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def add_noise(mesh: Mesh, amplitude: float, seed: int) -> Mesh:
    """Binary noise: every coordinate moves by +-A, A = amplitude * mean radial norm."""
    if amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    if amplitude == 0:
        return mesh
    v = mesh.vertices
    a = amplitude * np.linalg.norm(v - v.mean(axis=0), axis=1).mean()
    sign = _rng(seed).integers(0, 2, size=v.shape) * 2.0 - 1.0
    return mesh.with_vertices(v + a * sign)


def umbrella_operator(mesh: Mesh) -> sparse.csr_matrix:
    """Row-stochastic uniform 1-ring averaging matrix (isolated vertices map to themselves)."""
    indptr, indices = vertex_adjacency(mesh)
    n = mesh.n_vertices
    deg = np.diff(indptr)
    rows = np.repeat(np.arange(n), deg)
    w = 1.0 / np.repeat(np.maximum(deg, 1), deg)
    W = sparse.csr_matrix((w, (rows, indices)), shape=(n, n))
    lone = np.flatnonzero(deg == 0)
    if len(lone):
        W = W + sparse.csr_matrix((np.ones(len(lone)), (lone, lone)), shape=(n, n))
    return W


def smooth_laplacian(mesh: Mesh, iterations: int, factor: float = 0.1) -> Mesh:
    """``iterations`` steps of ``v += factor * (mean of 1-ring - v)``."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if not 0 < factor < 1:
        raise ValueError("factor must be in (0, 1)")
    if iterations == 0:
        return mesh
    W = umbrella_operator(mesh)
    v = mesh.vertices.copy()
    for _ in range(iterations):
        v = v + factor * (W @ v - v)
    return mesh.with_vertices(v)


def quantize_coords(mesh: Mesh, bits: int) -> Mesh:
    """Snap every coordinate to a ``2**bits``-level grid spanning its axis range."""
    if not 1 <= bits <= 24:
        raise ValueError("bits must be in [1, 24]")
    v = mesh.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    rng = hi - lo
    levels = 2**bits - 1
    out = v.copy()
    for k in range(3):
        if rng[k] == 0:
            continue  # degenerate axis stays as is
        g = np.round((v[:, k] - lo[k]) / rng[k] * levels)
        out[:, k] = np.clip(lo[k] + g / levels * rng[k], lo[k], hi[k])
    return mesh.with_vertices(out)


def similarity_transform(mesh: Mesh, rotation, scale: float, translation) -> Mesh:
    R = np.asarray(rotation, dtype=np.float64)
    if R.shape != (3, 3) or np.linalg.norm(R.T @ R - np.eye(3)) >= 1e-9:
        raise InvalidRotation("rotation must be an orthonormal 3x3 matrix")
    if not scale > 0:
        raise ValueError("scale must be positive")
    return mesh.with_vertices(scale * mesh.vertices @ R.T + np.asarray(translation, float))


def random_similarity(seed: int, scale_range=(0.5, 2.0), translation_scale: float = 1.0):
    """Rotation matrix, scale and translation drawn from ``seed``."""
    rng = _rng(seed)
    R = Rotation.random(random_state=rng).as_matrix()
    s = float(rng.uniform(*scale_range))
    t = rng.normal(scale=translation_scale, size=3)
    return R, s, t


def reorder_elements(mesh: Mesh, seed: int) -> Mesh:
    """Shuffle vertex and face storage order and rotate each face's index triple."""
    rng = _rng(seed)
    n = mesh.n_vertices
    perm = rng.permutation(n)  # new slot i holds old vertex perm[i]
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    f = inv[mesh.faces][rng.permutation(mesh.n_faces)]
    shift = rng.integers(0, 3, size=len(f))
    cols = (np.arange(3)[None, :] + shift[:, None]) % 3
    f = np.take_along_axis(f, cols, axis=1)
    return Mesh(mesh.vertices[perm], f)


# ---------------------------------------------------------------- subdivision


@dataclass
class _Topology:
    edges: np.ndarray  # (e, 2) sorted
    face_edges: np.ndarray  # (f, 3): edge id of (v0v1, v1v2, v2v0)
    boundary: np.ndarray  # per edge


def _topology(mesh: Mesh) -> _Topology:
    f = mesh.faces
    he = np.stack([f, np.roll(f, -1, axis=1)], axis=2).reshape(-1, 2)
    key = np.sort(he, axis=1)
    edges, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts > 2):
        raise NonManifoldEdge(f"{int((counts > 2).sum())} edges have more than two faces")
    return _Topology(edges, inv.reshape(-1, 3), counts == 1)


def _midpoint(mesh: Mesh) -> Mesh:
    topo = _topology(mesh)
    v, f = mesh.vertices, mesh.faces
    n = len(v)
    mids = 0.5 * (v[topo.edges[:, 0]] + v[topo.edges[:, 1]])
    return Mesh(np.vstack([v, mids]), _split4(f, topo.face_edges + n))


def _split4(f, m):
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    ab, bc, ca = m[:, 0], m[:, 1], m[:, 2]
    return np.concatenate([
        np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
        np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1),
    ])


def _neighbor_sum(v, indptr, nbr):
    rows = np.repeat(np.arange(len(v)), np.diff(indptr))
    out = np.zeros_like(v)
    np.add.at(out, rows, v[nbr])
    return out


def _loop(mesh: Mesh) -> Mesh:
    topo = _topology(mesh)
    v, f = mesh.vertices, mesh.faces
    n = len(v)
    E = topo.edges
    # opposite vertex of each (face, local edge)
    opp = f[:, [2, 0, 1]]
    opp_sum = np.zeros((len(E), 3))
    np.add.at(opp_sum, topo.face_edges.ravel(), v[opp.ravel()])
    ends = v[E[:, 0]] + v[E[:, 1]]
    mids = np.where(topo.boundary[:, None], 0.5 * ends, 0.375 * ends + 0.125 * opp_sum)

    indptr, nbr = vertex_adjacency(mesh)
    deg = np.diff(indptr)
    nsum = _neighbor_sum(v, indptr, nbr)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.maximum(deg, 1)
        beta = (5 / 8 - (3 / 8 + np.cos(2 * np.pi / k) / 4) ** 2) / k
    new_v = (1 - deg * beta)[:, None] * v + beta[:, None] * nsum

    # boundary vertices: 3/4 self + 1/8 each boundary neighbour
    bE = E[topo.boundary]
    if len(bE):
        bsum = np.zeros_like(v)
        bcnt = np.zeros(n)
        np.add.at(bsum, bE[:, 0], v[bE[:, 1]])
        np.add.at(bsum, bE[:, 1], v[bE[:, 0]])
        np.add.at(bcnt, bE.ravel(), 1)
        on = bcnt == 2
        new_v[on] = 0.75 * v[on] + 0.125 * bsum[on]
        new_v[bcnt > 2] = v[bcnt > 2]
    new_v[deg == 0] = v[deg == 0]
    return Mesh(np.vstack([new_v, mids]), _split4(f, topo.face_edges + n))


def _sqrt3(mesh: Mesh) -> Mesh:
    topo = _topology(mesh)
    v, f = mesh.vertices, mesh.faces
    n, nf = len(v), len(f)
    cent = v[f].mean(axis=1)
    indptr, nbr = vertex_adjacency(mesh)
    deg = np.diff(indptr)
    nsum = _neighbor_sum(v, indptr, nbr)
    k = np.maximum(deg, 1)
    alpha = (4 - 2 * np.cos(2 * np.pi / k)) / 9
    new_v = (1 - alpha)[:, None] * v + (alpha / k)[:, None] * nsum
    bverts = np.unique(topo.edges[topo.boundary].ravel())
    new_v[bverts] = v[bverts]
    new_v[deg == 0] = v[deg == 0]

    # each directed edge (a -> b) of face i yields triangle (a, b, c_i) before flipping
    a = f.ravel()
    b = np.roll(f, -1, axis=1).ravel()
    fid = np.repeat(np.arange(nf), 3) + n
    eid = topo.face_edges.ravel()
    order = np.argsort(eid, kind="stable")
    out = []
    interior = ~topo.boundary[eid]
    # interior edge shared by faces i (a->b) and j (b->a): flip to (c_i, a, c_j) and (c_j, b, c_i)
    o = order[interior[order]]
    first, second = o[0::2], o[1::2]
    ci, cj = fid[first], fid[second]
    ai, bi = a[first], b[first]
    out.append(np.stack([ci, ai, cj], 1))
    out.append(np.stack([cj, bi, ci], 1))
    bd = ~interior
    out.append(np.stack([a[bd], b[bd], fid[bd]], 1))
    return Mesh(np.vstack([new_v, cent]), np.concatenate(out))


SUBDIVISION_SCHEMES = {"midpoint": _midpoint, "loop": _loop, "sqrt3": _sqrt3}


def subdivide(mesh: Mesh, scheme: str = "midpoint", iterations: int = 1) -> Mesh:
    if scheme not in SUBDIVISION_SCHEMES:
        raise ValueError(f"unknown subdivision scheme {scheme!r}; choose from {sorted(SUBDIVISION_SCHEMES)}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    step = SUBDIVISION_SCHEMES[scheme]
    for _ in range(iterations):
        mesh = step(mesh)
    return mesh


def crop(mesh: Mesh, fraction: float, seed: int) -> Mesh:
    """Cut away the ``round(fraction * n)`` vertices farthest along a random direction.

    The cutting plane passes through the vertex centroid; faces touching a
    removed vertex are dropped and the survivors are re-indexed compactly.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    v = mesh.vertices
    d = _rng(seed).normal(size=3)
    d /= np.linalg.norm(d)
    s = (v - v.mean(axis=0)) @ d
    k = int(np.floor(fraction * len(v) + 0.5))
    if len(v) - k < 4:
        raise EmptyResult(f"cropping {fraction:.0%} leaves {len(v) - k} vertices")
    order = np.lexsort((np.arange(len(v)), -s))
    keep = np.ones(len(v), bool)
    keep[order[:k]] = False
    new_id = np.cumsum(keep) - 1
    faces = mesh.faces[keep[mesh.faces].all(axis=1)]
    return Mesh(v[keep], new_id[faces])
