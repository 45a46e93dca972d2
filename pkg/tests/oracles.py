"""Slow, loop-based reference implementations used as test oracles.

They deliberately share no code with the package: every quantity is rebuilt
from vertex and face lists with plain Python loops and textbook formulas.
"""

import math

import numpy as np


def _sub(a, b):
    return [a[0] - b[0], a[1] - b[1], a[2] - b[2]]


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


def taubin_mean_curvature(vertices, faces):
    """Trace of Taubin's matrix, vertex by vertex."""
    V = [list(map(float, v)) for v in vertices]
    F = [tuple(int(i) for i in f) for f in faces]
    n = len(V)
    area = []
    normal_sum = [[0.0, 0.0, 0.0] for _ in range(n)]
    for a, b, c in F:
        cr = _cross(_sub(V[b], V[a]), _sub(V[c], V[a]))
        area.append(0.5 * math.sqrt(_dot(cr, cr)))
        for i in (a, b, c):
            for k in range(3):
                normal_sum[i][k] += 0.5 * cr[k]
    out = []
    for i in range(n):
        ln = math.sqrt(_dot(normal_sum[i], normal_sum[i]))
        N = [x / ln for x in normal_sum[i]] if ln > 0 else [0.0, 0.0, 0.0]
        edge_area = {}
        for fi, f in enumerate(F):
            if i in f:
                for j in f:
                    if j != i:
                        edge_area[j] = edge_area.get(j, 0.0) + area[fi]
        total = sum(edge_area.values())
        trace = 0.0
        for j, w in edge_area.items():
            d = _sub(V[i], V[j])
            dd = _dot(d, d)
            if dd == 0 or total == 0:
                continue
            kappa = 2.0 * _dot(N, d) / dd
            t = [d[k] - _dot(N, d) * N[k] for k in range(3)]
            lt = math.sqrt(_dot(t, t))
            if lt == 0:
                continue
            # trace(T T^T) = |T|^2 = 1 for a unit tangent
            trace += (w / total) * kappa
        out.append(trace)
    return np.array(out)


def ball(points, v, radius):
    P = [list(map(float, p)) for p in points]
    out = []
    for j, p in enumerate(P):
        d = _sub(p, P[v])
        if math.sqrt(_dot(d, d)) < radius:
            out.append(j)
    return out


def gaussian_average(points, curv, v, sigma):
    num = den = 0.0
    for j in ball(points, v, 2 * sigma):
        d = _sub(list(points[j]), list(points[v]))
        w = math.exp(-_dot(d, d) / (2 * sigma * sigma))
        num += w * float(curv[j])
        den += w
    return num / den


def saliency(points, curv, sigma):
    return np.array(
        [abs(gaussian_average(points, curv, v, sigma) - gaussian_average(points, curv, v, 2 * sigma))
         for v in range(len(points))]
    )


def _seg_dist(p, a, b):
    ab = _sub(b, a)
    L = _dot(ab, ab)
    t = 0.0 if L == 0 else max(0.0, min(1.0, _dot(_sub(p, a), ab) / L))
    q = [a[k] + t * ab[k] for k in range(3)]
    d = _sub(p, q)
    return math.sqrt(_dot(d, d))


def point_triangle_distance(p, a, b, c):
    """Plane projection when it falls inside the triangle, else the nearest edge."""
    p, a, b, c = (list(map(float, x)) for x in (p, a, b, c))
    n = _cross(_sub(b, a), _sub(c, a))
    nn = _dot(n, n)
    best = min(_seg_dist(p, a, b), _seg_dist(p, b, c), _seg_dist(p, c, a))
    if nn == 0:
        return best
    h = _dot(_sub(p, a), n) / nn
    q = [p[k] - h * n[k] for k in range(3)]
    # inside test: the three sub-triangles keep the orientation of n
    inside = all(
        _dot(_cross(_sub(y, x), _sub(q, x)), n) >= 0 for x, y in ((a, b), (b, c), (c, a))
    )
    if inside:
        return abs(h) * math.sqrt(nn)
    return best


def point_mesh_distance(p, vertices, faces):
    return min(point_triangle_distance(p, *(vertices[i] for i in f)) for f in faces)


def msdm(va, vb, curv_a, curv_b, radius):
    """Symmetric MSDM with Gaussian windows (sigma = radius / 2) pooled over both passes."""
    def local(P, ca, cb):
        out = []
        for i in range(len(P)):
            idx = ball(P, i, radius)
            w = []
            for j in idx:
                d = _sub(list(P[j]), list(P[i]))
                w.append(math.exp(-_dot(d, d) / (2 * (radius / 2) ** 2)))
            W = sum(w)
            mua = sum(wk * ca[j] for wk, j in zip(w, idx)) / W
            mub = sum(wk * cb[j] for wk, j in zip(w, idx)) / W
            va_ = sum(wk * (ca[j] - mua) ** 2 for wk, j in zip(w, idx)) / W
            vb_ = sum(wk * (cb[j] - mub) ** 2 for wk, j in zip(w, idx)) / W
            cov = sum(wk * (ca[j] - mua) * (cb[j] - mub) for wk, j in zip(w, idx)) / W
            sa, sb = math.sqrt(va_), math.sqrt(vb_)
            curv = abs(mua - mub) / max(mua, mub) if max(mua, mub) > 0 else 0.0
            cont = abs(sa - sb) / max(sa, sb) if max(sa, sb) > 0 else 0.0
            ss = math.sqrt(va_ * vb_)
            surf = abs(ss - cov) / ss if ss > 0 else 0.0
            out.append((0.4 * curv**3 + 0.4 * cont**3 + 0.2 * surf**3) ** (1 / 3))
        return out

    ca, cb = [abs(float(x)) for x in curv_a], [abs(float(x)) for x in curv_b]
    L = local(va, ca, cb) + local(vb, cb, ca)
    return (sum(x**3 for x in L) / len(L)) ** (1 / 3)


def nearest_codeword(value, bit, q, t, span=50):
    """Enumerate lattice points around ``value`` and keep the closest (smaller on ties)."""
    best = None
    z0 = int(math.floor(value / q))
    labels = (0, 1) if bit is None else (bit,)
    for lab in labels:
        for z in range(z0 - span, z0 + span + 1):
            u = z * q + lab * q / 2 + t
            if u < 0:
                continue
            key = (abs(value - u), u)
            if best is None or key < best[0]:
                best = (key, u, lab)
    return best[1], best[2]


def pearson(a, b):
    a = [float(x) for x in a]
    b = [float(x) for x in b]
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    den = math.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))
    return num / den
