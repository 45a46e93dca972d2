"""Two-scale mesh saliency built on Taubin curvature estimates.

The saliency of a vertex is the absolute difference of two Gaussian-weighted
averages of the mean curvature around it, at scales sigma and 2*sigma.  Each
average runs over the Euclidean ball of radius twice its scale.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import Mesh, face_cross, vertex_normal_sums


class IsolatedVertexWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SaliencyParams:
    sigma: float
    salient_fraction: float = 0.70
    curvature_method: str = "taubin"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.salient_fraction <= 1:
            raise ValueError(f"salient_fraction must be in (0, 1], got {self.salient_fraction}")
        if self.curvature_method != "taubin":
            raise ValueError(f"unknown curvature method {self.curvature_method!r}")

    @classmethod
    def relative(cls, mesh: Mesh, sigma_rel: float = 0.003, **kw) -> "SaliencyParams":
        """Scale sigma by the axis-aligned bounding-box diagonal of ``mesh``."""
        v = mesh.vertices
        diag = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))
        return cls(sigma=sigma_rel * diag, **kw)


@dataclass(frozen=True)
class SaliencyMap:
    scores: np.ndarray
    salient: np.ndarray  # vertex indices, descending score
    threshold_value: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex_index", "score"])
            for i, s in enumerate(self.scores):
                w.writerow([i, repr(float(s))])


# ---------------------------------------------------------------- curvature


def _edge_face_area(mesh: Mesh):
    """Directed one-ring edges (i, j) with the summed area of faces sharing edge {i, j}."""
    f = mesh.faces
    area = 0.5 * np.linalg.norm(face_cross(mesh), axis=1)
    a = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    b = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    w = np.tile(area, 3)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keys, inv = np.unique(lo * mesh.n_vertices + hi, return_inverse=True)
    wsum = np.bincount(inv, weights=w)
    lo, hi = keys // mesh.n_vertices, keys % mesh.n_vertices
    i = np.concatenate([lo, hi])
    j = np.concatenate([hi, lo])
    return i, j, np.concatenate([wsum, wsum])


def curvature_tensor(mesh: Mesh) -> np.ndarray:
    """Taubin's per-vertex matrix ``M = sum_j w_ij k_ij T_ij T_ij^T``.

    ``k_ij = 2 N_i.(v_i - v_j) / |v_i - v_j|^2`` is positive on convex regions
    with outward normals; ``T_ij`` is the unit projection of the edge onto the
    tangent plane and ``w_ij`` the normalized area of the faces sharing the edge.
    """
    v = mesh.vertices
    n = mesh.n_vertices
    nrm = vertex_normal_sums(mesh)
    ln = np.linalg.norm(nrm, axis=1)
    nrm = np.divide(nrm, ln[:, None], out=np.zeros_like(nrm), where=ln[:, None] > 0)

    i, j, w = _edge_face_area(mesh)
    wtot = np.bincount(i, weights=w, minlength=n)
    w = np.divide(w, wtot[i], out=np.zeros_like(w), where=wtot[i] > 0)

    d = v[i] - v[j]
    N = nrm[i]
    dn = np.einsum("ij,ij->i", d, N)
    dd = np.einsum("ij,ij->i", d, d)
    # coincident endpoints (e.g. after coarse quantization) carry no curvature
    kappa = np.divide(2.0 * dn, dd, out=np.zeros_like(dd), where=dd > 0)
    t = d - dn[:, None] * N
    lt = np.linalg.norm(t, axis=1)
    ok = lt > 1e-300
    t = np.divide(t, lt[:, None], out=np.zeros_like(t), where=ok[:, None])
    contrib = (w * kappa)[:, None, None] * t[:, :, None] * t[:, None, :]
    M = np.zeros((n, 3, 3))
    np.add.at(M, i, contrib)
    return M


def principal_curvatures(mesh: Mesh) -> np.ndarray:
    """(n, 2) principal curvatures from the two tangent eigenvalues of Taubin's matrix."""
    M = curvature_tensor(mesh)
    nrm = vertex_normal_sums(mesh)
    ln = np.linalg.norm(nrm, axis=1)
    nrm = np.divide(nrm, ln[:, None], out=np.zeros_like(nrm), where=ln[:, None] > 0)
    ev, vec = np.linalg.eigh(M)
    # drop the eigenvalue whose eigenvector is closest to the normal
    align = np.abs(np.einsum("nij,ni->nj", vec, nrm))
    drop = np.argmax(align, axis=1)
    keep = np.ones_like(ev, dtype=bool)
    keep[np.arange(len(ev)), drop] = False
    m = ev[keep].reshape(-1, 2)
    return np.stack([3 * m[:, 0] - m[:, 1], 3 * m[:, 1] - m[:, 0]], axis=1)


def mean_curvature(mesh: Mesh) -> np.ndarray:
    """Per-vertex mean curvature, (k1 + k2) / 2 = trace of Taubin's matrix.

    Vertices without an incident face get 0 and trigger an
    :class:`IsolatedVertexWarning`.
    """
    used = np.zeros(mesh.n_vertices, bool)
    used[mesh.faces.ravel()] = True
    if not used.all():
        warnings.warn(
            f"{int((~used).sum())} isolated vertices; curvature set to 0",
            IsolatedVertexWarning,
            stacklevel=2,
        )
    if mesh.n_faces == 0:
        return np.zeros(mesh.n_vertices)
    M = curvature_tensor(mesh)
    return np.trace(M, axis1=1, axis2=2)


# ---------------------------------------------------------------- neighbourhoods


def ball_neighborhood(mesh: Mesh, v: int, radius: float, tree: cKDTree | None = None) -> np.ndarray:
    """Sorted indices of vertices strictly closer than ``radius`` to vertex ``v``."""
    pts = mesh.vertices
    tree = tree if tree is not None else cKDTree(pts)
    cand = np.asarray(tree.query_ball_point(pts[v], radius), dtype=np.int64)
    d = np.linalg.norm(pts[cand] - pts[v], axis=1)
    return np.sort(cand[d < radius])


def _pairs_within(points: np.ndarray, radius: float):
    """All ordered pairs (i, j), i != j, with |p_i - p_j| < radius, and their distances."""
    tree = cKDTree(points)
    pr = tree.query_pairs(radius, output_type="ndarray")
    if len(pr) == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e, np.empty(0)
    d = np.linalg.norm(points[pr[:, 0]] - points[pr[:, 1]], axis=1)
    keep = d < radius
    pr, d = pr[keep], d[keep]
    return (
        np.concatenate([pr[:, 0], pr[:, 1]]),
        np.concatenate([pr[:, 1], pr[:, 0]]),
        np.concatenate([d, d]),
    )


def gaussian_weighted_curvature(
    mesh: Mesh, curv: np.ndarray, v: int, sigma: float, tree: cKDTree | None = None
) -> float:
    nb = ball_neighborhood(mesh, v, 2 * sigma, tree)
    d2 = np.sum((mesh.vertices[nb] - mesh.vertices[v]) ** 2, axis=1)
    w = np.exp(-d2 / (2 * sigma**2))
    return float(np.dot(w, curv[nb]) / w.sum())


def gaussian_weighted_field(points: np.ndarray, curv: np.ndarray, sigma: float, pairs=None):
    """Vectorized Gaussian-weighted curvature average at every vertex."""
    i, j, d = pairs if pairs is not None else _pairs_within(points, 2 * sigma)
    sel = d < 2 * sigma
    i, j, d = i[sel], j[sel], d[sel]
    w = np.exp(-(d * d) / (2 * sigma**2))
    n = len(points)
    num = curv + np.bincount(i, weights=w * curv[j], minlength=n)
    den = 1.0 + np.bincount(i, weights=w, minlength=n)
    return num / den


def select_salient(scores: np.ndarray, fraction: float) -> np.ndarray:
    """Top ``round(fraction * n)`` vertices by score; ties go to the lower index."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    scores = np.asarray(scores, dtype=np.float64)
    n = len(scores)
    k = int(np.floor(fraction * n + 0.5))
    order = np.lexsort((np.arange(n), -scores))
    return order[:k]


def compute_saliency(mesh: Mesh, params: SaliencyParams, curv: np.ndarray | None = None) -> SaliencyMap:
    curv = mean_curvature(mesh) if curv is None else curv
    pts = mesh.vertices
    pairs = _pairs_within(pts, 4 * params.sigma)
    fine = gaussian_weighted_field(pts, curv, params.sigma, pairs)
    coarse = gaussian_weighted_field(pts, curv, 2 * params.sigma, pairs)
    scores = np.abs(fine - coarse)
    salient = select_salient(scores, params.salient_fraction)
    thr = float(scores[salient[-1]]) if len(salient) else float("nan")
    return SaliencyMap(scores, salient, thr)
