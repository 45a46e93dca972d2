"""Distortion and robustness metrics.

Surface distances (RMS, MRMS, Hausdorff) are evaluated on area-stratified
surface samples against an axis-aligned bounding volume hierarchy that
returns exact point-to-triangle distances.  MSDM compares curvature
statistics over corresponding local windows; the correlation is the
Pearson coefficient of two bit sequences.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import Mesh
from .saliency import mean_curvature


class MetricError(ValueError):
    pass


class LengthMismatch(MetricError):
    pass


class CorrespondenceMismatch(MetricError):
    pass


class ConstantSequenceWarning(UserWarning):
    pass


# ---------------------------------------------------------------- point / triangle


def closest_point_sq_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared distance from points ``p`` to triangles ``(a, b, c)``, row by row.

    Voronoi-region walk over vertices, edges and face interior; degenerate
    triangles fall back to their edges.
    """
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    n = len(p)
    s = np.full(n, np.nan)  # barycentric weight of b
    t = np.full(n, np.nan)  # barycentric weight of c
    done = np.zeros(n, bool)

    def put(mask, ss, tt):
        nonlocal done
        m = mask & ~done
        s[m] = ss[m] if np.ndim(ss) else ss
        t[m] = tt[m] if np.ndim(tt) else tt
        done |= m

    with np.errstate(divide="ignore", invalid="ignore"):
        put((d1 <= 0) & (d2 <= 0), 0.0, 0.0)
        put((d3 >= 0) & (d4 <= d3), 1.0, 0.0)
        put((d6 >= 0) & (d5 <= d6), 0.0, 1.0)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), d1 / (d1 - d3), 0.0)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), 0.0, d2 / (d2 - d6))
        put((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
            1.0 - (d4 - d3) / ((d4 - d3) + (d5 - d6)), (d4 - d3) / ((d4 - d3) + (d5 - d6)))
        den = va + vb + vc
        put(np.ones(n, bool), vb / den, vc / den)
    q = a + s[:, None] * ab + t[:, None] * ac
    d = np.einsum("ij,ij->i", p - q, p - q)
    bad = ~np.isfinite(d)
    if bad.any():
        d[bad] = np.minimum.reduce([
            _seg_sq(p[bad], a[bad], b[bad]), _seg_sq(p[bad], b[bad], c[bad]), _seg_sq(p[bad], c[bad], a[bad])
        ])
    return d


def _seg_sq(p, a, b):
    ab = b - a
    L = np.einsum("ij,ij->i", ab, ab)
    t = np.divide(np.einsum("ij,ij->i", p - a, ab), L, out=np.zeros(len(p)), where=L > 0)
    t = np.clip(t, 0.0, 1.0)
    q = a + t[:, None] * ab
    return np.einsum("ij,ij->i", p - q, p - q)


# ---------------------------------------------------------------- BVH


class DistanceIndex:
    """Axis-aligned bounding volume hierarchy over a mesh's triangles.

    ``query`` returns exact nearest distances; the hierarchy only prunes
    triangles whose box lies farther than the best distance found so far.
    Immutable after construction, so concurrent queries are safe.
    """

    def __init__(self, mesh: Mesh, leaf_size: int = 8):
        if mesh.n_faces == 0:
            raise MetricError("cannot index a mesh without faces")
        tri = mesh.vertices[mesh.faces]
        self._a, self._b, self._c = tri[:, 0].copy(), tri[:, 1].copy(), tri[:, 2].copy()
        lo, hi = tri.min(axis=1), tri.max(axis=1)
        cen = tri.mean(axis=1)
        self._centroid_tree = cKDTree(cen)

        order = np.arange(len(tri))
        mins, maxs, left, right, start, count = [], [], [], [], [], []
        stack = [(0, len(tri), -1, False)]
        # iterative median split; children are linked after creation
        while stack:
            s, e, parent, is_right = stack.pop()
            node = len(mins)
            idx = order[s:e]
            mins.append(lo[idx].min(axis=0))
            maxs.append(hi[idx].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(s)
            count.append(e - s)
            if parent >= 0:
                (right if is_right else left)[parent] = node
            if e - s <= leaf_size:
                continue
            c = cen[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            mid = (e - s) // 2
            part = np.argpartition(c[:, axis], mid)
            order[s:e] = idx[part]
            stack.append((s + mid, e, node, True))
            stack.append((s, s + mid, node, False))
        self._order = order
        self._min = np.array(mins)
        self._max = np.array(maxs)
        self._left = np.array(left)
        self._right = np.array(right)
        self._start = np.array(start)
        self._count = np.array(count)
        self.n_nodes = len(mins)

    def _tri_sq(self, p, t):
        return closest_point_sq_distance(p, self._a[t], self._b[t], self._c[t])

    def query(self, points: np.ndarray, chunk: int = 20000, return_index: bool = False):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        dist = np.empty(len(points))
        tri = np.empty(len(points), dtype=np.int64)
        for s in range(0, len(points), chunk):
            d, t = self._query_chunk(points[s : s + chunk])
            dist[s : s + chunk] = d
            tri[s : s + chunk] = t
        dist = np.sqrt(dist)
        return (dist, tri) if return_index else dist

    def _query_chunk(self, P):
        n = len(P)
        _, t0 = self._centroid_tree.query(P)
        best = self._tri_sq(P, t0)
        arg = t0.astype(np.int64)
        pid = np.arange(n)
        nid = np.zeros(n, dtype=np.int64)
        while len(pid):
            q = P[pid]
            gap = np.maximum(self._min[nid] - q, 0) + np.maximum(q - self._max[nid], 0)
            lb = np.einsum("ij,ij->i", gap, gap)
            keep = lb < best[pid]
            pid, nid = pid[keep], nid[keep]
            leaf = self._left[nid] < 0
            if leaf.any():
                lp, ln = pid[leaf], nid[leaf]
                cnt = self._count[ln]
                rp = np.repeat(lp, cnt)
                offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
                rt = self._order[np.repeat(self._start[ln], cnt) + offs]
                d = self._tri_sq(P[rp], rt)
                # per-point minimum over the candidate list
                o = np.lexsort((d, rp))
                rp, rt, d = rp[o], rt[o], d[o]
                first = np.ones(len(rp), bool)
                first[1:] = rp[1:] != rp[:-1]
                rp, rt, d = rp[first], rt[first], d[first]
                better = d < best[rp]
                best[rp[better]] = d[better]
                arg[rp[better]] = rt[better]
            ip, inn = pid[~leaf], nid[~leaf]
            pid = np.concatenate([ip, ip])
            nid = np.concatenate([self._left[inn], self._right[inn]])
        return best, arg


def brute_force_distance(mesh: Mesh, points: np.ndarray) -> np.ndarray:
    """Nearest distance to any triangle by scanning all of them (reference path)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.vertices[mesh.faces]
    out = np.full(len(points), np.inf)
    for k in range(len(tri)):
        a = np.broadcast_to(tri[k, 0], points.shape)
        b = np.broadcast_to(tri[k, 1], points.shape)
        c = np.broadcast_to(tri[k, 2], points.shape)
        out = np.minimum(out, closest_point_sq_distance(points, a, b, c))
    return np.sqrt(out)


# ---------------------------------------------------------------- sampling


def default_sample_count(mesh: Mesh) -> int:
    n = 10 * mesh.n_faces
    return max(n, 50000) if mesh.n_faces >= 5000 else n


_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized; wraps modulo 2**64."""
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _canonical_triangles(mesh: Mesh) -> np.ndarray:
    """Face corners sorted lexicographically, so storage order cannot matter."""
    tri = mesh.vertices[mesh.faces]
    order = np.lexsort((tri[:, :, 2], tri[:, :, 1], tri[:, :, 0]), axis=1)
    return np.take_along_axis(tri, order[:, :, None], axis=1)


def _face_keys(tri: np.ndarray, seed: int) -> np.ndarray:
    bits = np.ascontiguousarray(tri).view(np.uint64).reshape(len(tri), 9)
    h = np.full(len(tri), np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    for k in range(9):
        h = _splitmix(h ^ bits[:, k])
    return h


def _unit(h: np.ndarray) -> np.ndarray:
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _allocate(areas: np.ndarray, total: int, tiebreak: np.ndarray | None = None) -> np.ndarray:
    """Largest-remainder split of ``total`` proportional to ``areas`` with at least one each."""
    nf = len(areas)
    total = max(int(total), nf)
    tiebreak = np.arange(nf) if tiebreak is None else tiebreak
    A = areas.sum()
    share = areas / A * total if A > 0 else np.full(nf, total / nf)
    cnt = np.maximum(np.floor(share).astype(np.int64), 1)
    left = total - cnt.sum()
    if left > 0:
        frac = share - np.floor(share)
        cnt[np.lexsort((tiebreak, -frac))[:left]] += 1
    elif left < 0:
        # the floor of one forced extra samples; take them back from the largest faces
        for i in np.lexsort((tiebreak, -share)):
            if left == 0:
                break
            take = min(cnt[i] - 1, -left)
            cnt[i] -= take
            left += take
    return cnt


def sample_surface(mesh: Mesh, count: int | None = None, seed: int = 0, return_weights: bool = False):
    """Area-proportional barycentric samples, at least one per face.

    Each face draws its points from a counter-based hash of its own corner
    coordinates and ``seed``, so the sample set does not depend on vertex or
    face storage order.  With ``return_weights`` also returns per-sample area
    weights (face area over that face's sample count), so weighted sums
    approximate surface integrals.
    """
    count = default_sample_count(mesh) if count is None else count
    if count <= 0:
        raise ValueError("sample count must be positive")
    tri = _canonical_triangles(mesh)
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    keys = _face_keys(tri, seed)
    cnt = _allocate(areas, count, keys)
    fid = np.repeat(np.arange(mesh.n_faces), cnt)
    j = (np.arange(len(fid)) - np.repeat(np.cumsum(cnt) - cnt, cnt)).astype(np.uint64)
    base = keys[fid] ^ (j * np.uint64(0xD1B54A32D192ED03))
    r1 = np.sqrt(_unit(_splitmix(base)))
    r2 = _unit(_splitmix(base ^ np.uint64(0x8CB92BA72F3D8DD7)))
    t = tri[fid]
    pts = (1 - r1)[:, None] * t[:, 0] + (r1 * (1 - r2))[:, None] * t[:, 1] + (r1 * r2)[:, None] * t[:, 2]
    if return_weights:
        return pts, (areas / cnt)[fid]
    return pts


# ---------------------------------------------------------------- distances


def _one_sided(A: Mesh, B: Mesh, samples, seed, index=None):
    pts, w = sample_surface(A, samples, seed, return_weights=True)
    idx = index if index is not None else DistanceIndex(B)
    return idx.query(pts), w


def rms_distance(A: Mesh, B: Mesh, samples: int | None = None, seed: int = 0) -> float:
    """Area-weighted RMS of the distance from points on ``A`` to surface ``B``."""
    d, w = _one_sided(A, B, samples, seed)
    return float(np.sqrt(np.sum(w * d * d) / np.sum(w)))


def mrms(A: Mesh, B: Mesh, samples: int | None = None, seed: int = 0) -> float:
    return max(rms_distance(A, B, samples, seed), rms_distance(B, A, samples, seed))


def hausdorff(A: Mesh, B: Mesh, samples: int | None = None, seed: int = 0) -> float:
    """Symmetric Hausdorff distance over surface samples plus the vertices (a lower bound)."""
    out = 0.0
    for X, Y in ((A, B), (B, A)):
        pts = np.vstack([sample_surface(X, samples, seed), X.vertices])
        out = max(out, float(DistanceIndex(Y).query(pts).max()))
    return out


@dataclass
class SurfaceDistances:
    rms_ab: float
    rms_ba: float
    hausdorff: float

    @property
    def mrms(self) -> float:
        return max(self.rms_ab, self.rms_ba)


def surface_distances(A: Mesh, B: Mesh, samples: int | None = None, seed: int = 0) -> SurfaceDistances:
    """RMS both ways and Hausdorff from one pass of samples and indices."""
    ia, ib = DistanceIndex(A), DistanceIndex(B)
    res = []
    hd = 0.0
    for X, idx in ((A, ib), (B, ia)):
        pts, w = sample_surface(X, samples, seed, return_weights=True)
        d = idx.query(pts)
        res.append(float(np.sqrt(np.sum(w * d * d) / np.sum(w))))
        hd = max(hd, float(d.max()), float(idx.query(X.vertices).max()))
    return SurfaceDistances(res[0], res[1], hd)


# ---------------------------------------------------------------- MSDM


def mean_edge_length(mesh: Mesh) -> float:
    e = mesh.edges()
    return float(np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1).mean())


def default_msdm_radius(mesh: Mesh) -> float:
    v = mesh.vertices
    diag = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))
    return max(0.005 * diag, 2.0 * mean_edge_length(mesh))


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def local_msdm(ca, cb, i, j, w, n):
    """Per-window MSDM distances for windows given as weighted (center i, member j) lists."""
    W = np.bincount(i, weights=w, minlength=n)
    mua = np.bincount(i, weights=w * ca[j], minlength=n) / W
    mub = np.bincount(i, weights=w * cb[j], minlength=n) / W
    da, db = ca[j] - mua[i], cb[j] - mub[i]
    va = np.maximum(np.bincount(i, weights=w * da * da, minlength=n) / W, 0)
    vb = np.maximum(np.bincount(i, weights=w * db * db, minlength=n) / W, 0)
    sa, sb = np.sqrt(va), np.sqrt(vb)
    sab = np.bincount(i, weights=w * da * db, minlength=n) / W
    sasb = np.sqrt(va * vb)  # exact equality with sab when the windows agree
    curv = _ratio(np.abs(mua - mub), np.maximum(mua, mub))
    cont = _ratio(np.abs(sa - sb), np.maximum(sa, sb))
    surf = _ratio(np.abs(sasb - sab), sasb)
    return np.cbrt(0.4 * curv**3 + 0.4 * cont**3 + 0.2 * surf**3)


def _windows(points, radius):
    tree = cKDTree(points)
    pr = tree.query_pairs(radius, output_type="ndarray")
    n = len(points)
    if len(pr):
        d = np.linalg.norm(points[pr[:, 0]] - points[pr[:, 1]], axis=1)
        keep = d < radius
        pr, d = pr[keep], d[keep]
    else:
        d = np.empty(0)
    i = np.concatenate([np.arange(n), pr[:, 0], pr[:, 1]])
    j = np.concatenate([np.arange(n), pr[:, 1], pr[:, 0]])
    dd = np.concatenate([np.zeros(n), d, d])
    return i, j, dd


def msdm(A: Mesh, B: Mesh, radius: float | None = None) -> float:
    """Symmetric MSDM between two meshes with vertex correspondence.

    Windows are Euclidean balls (weights ``exp(-d^2 / (2 (radius/2)^2))``)
    around every vertex, taken on ``A`` for the A->B pass and on ``B`` for
    the B->A pass; the local distances of both passes are pooled with a
    cubic Minkowski mean.  Curvature is the absolute Taubin mean curvature.
    The default radius is the larger of 0.5% of the bounding-box diagonal and
    two mean edge lengths, taken over both meshes.
    """
    if A.n_vertices != B.n_vertices:
        raise CorrespondenceMismatch(f"vertex counts differ: {A.n_vertices} vs {B.n_vertices}")
    h = max(default_msdm_radius(A), default_msdm_radius(B)) if radius is None else radius
    if not h > 0:
        raise ValueError("radius must be positive")
    ca, cb = np.abs(mean_curvature(A)), np.abs(mean_curvature(B))
    n = A.n_vertices
    s2 = 2 * (h / 2) ** 2
    loc = []
    for X, c1, c2 in ((A, ca, cb), (B, cb, ca)):
        i, j, d = _windows(X.vertices, h)
        loc.append(local_msdm(c1, c2, i, j, np.exp(-(d * d) / s2), n))
    L = np.sort(np.concatenate(loc))  # order-free sum keeps msdm(A, B) == msdm(B, A)
    val = float(np.cbrt(np.mean(L**3)))
    return min(val, float(np.nextafter(1.0, 0.0)))


# ---------------------------------------------------------------- correlation


def correlation(w, w_prime) -> float:
    """Pearson correlation between two equal-length bit sequences.

    A constant sequence has no defined correlation; 0.0 is returned with a
    :class:`ConstantSequenceWarning`.
    """
    a = np.asarray(w, dtype=np.float64)
    b = np.asarray(w_prime, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    if a.size < 2:
        raise LengthMismatch("correlation needs at least two bits")
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    if den == 0:
        warnings.warn("constant bit sequence; correlation defined as 0", ConstantSequenceWarning, stacklevel=2)
        return 0.0
    return float(np.clip(np.sum(a * b) / den, -1.0, 1.0))


@dataclass
class MetricReport:
    mrms: float
    hausdorff: float
    msdm: float
    correlation: float
    sample_count: int

    def to_row(self) -> dict:
        return {
            "mrms": repr(self.mrms),
            "hausdorff": repr(self.hausdorff),
            "msdm": repr(self.msdm),
            "correlation": repr(self.correlation),
        }
