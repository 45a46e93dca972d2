"""Procedural meshes used by the tests and the default benchmark corpus."""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull

from .mesh import Mesh


def _orient_outward(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Flip faces of a star-shaped closed surface so normals point away from the centroid."""
    c = vertices.mean(axis=0)
    v = vertices[faces]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    out = np.einsum("ij,ij->i", n, v.mean(axis=1) - c) < 0
    faces = faces.copy()
    faces[out] = faces[out][:, [0, 2, 1]]
    return faces


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> Mesh:
    t = (1 + 5**0.5) / 2
    v = np.array(
        [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
         [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
         [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=float)
    f = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        verts = list(v)
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v, f = np.array(verts), np.array(nf)
    return Mesh(radius * v, f)


def tetrahedron() -> Mesh:
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return Mesh(v, _orient_outward(v, f))


def cube(side: float = 1.0) -> Mesh:
    v = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], float) * side / 2
    f = ConvexHull(v).simplices
    return Mesh(v, _orient_outward(v, f))


def grid_plane(n: int = 10, size: float = 1.0) -> Mesh:
    """Flat (n+1) x (n+1) grid in the z = 0 plane, normals along +z."""
    xs = np.linspace(0, size, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    v = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    f = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return Mesh(v, f)


def fibonacci_sphere(n: int) -> Mesh:
    """Unit sphere triangulated through the convex hull of ``n`` Fibonacci points."""
    k = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * k / n)
    theta = np.pi * (1 + 5**0.5) * k
    v = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], 1)
    f = ConvexHull(v).simplices
    return Mesh(v, _orient_outward(v, f))


def _bumps(u: np.ndarray, rng: np.random.Generator, count: int, amp, sharp) -> np.ndarray:
    d = rng.normal(size=(count, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    a = rng.uniform(*amp, size=count) * rng.choice([-1.0, 1.0], size=count, p=[0.3, 0.7])
    k = rng.uniform(*sharp, size=count)
    return np.exp(k[None, :] * (u @ d.T - 1.0)) @ a


def deformed_sphere(
    n: int,
    seed: int,
    scale=(1.0, 0.8, 0.6),
    bumps: int = 12,
    amp=(0.05, 0.2),
    sharp=(8.0, 40.0),
) -> Mesh:
    """Anisotropic blob with Gaussian bumps on a Fibonacci-sphere tessellation."""
    rng = np.random.default_rng(seed)
    base = fibonacci_sphere(n)
    u = base.vertices
    r = 1.0 + _bumps(u, rng, bumps, amp, sharp)
    v = u * r[:, None] * np.asarray(scale)[None, :]
    return Mesh(v, _orient_outward(v, base.faces))


def torus(nu: int = 80, nv: int = 40, R: float = 1.0, r: float = 0.35, seed: int = 0) -> Mesh:
    """Elliptic torus whose tube radius varies around the ring."""
    rng = np.random.default_rng(seed)
    u = np.linspace(0, 2 * np.pi, nu, endpoint=False)
    w = np.linspace(0, 2 * np.pi, nv, endpoint=False)
    U, W = np.meshgrid(u, w, indexing="ij")
    ph = rng.uniform(0, 2 * np.pi, 3)
    tube = r * (1 + 0.35 * np.cos(U + ph[0]) + 0.15 * np.cos(3 * U + ph[1]))
    x = (R + tube * np.cos(W)) * np.cos(U)
    y = 0.75 * (R + tube * np.cos(W)) * np.sin(U)
    z = tube * np.sin(W) * (1 + 0.2 * np.sin(2 * U + ph[2])) + 0.12 * r * np.cos(W) ** 2
    v = np.stack([x.ravel(), y.ravel(), z.ravel()], 1)
    idx = np.arange(nu * nv).reshape(nu, nv)
    a = idx
    b = np.roll(idx, -1, axis=0)
    c = np.roll(np.roll(idx, -1, axis=0), -1, axis=1)
    d = np.roll(idx, -1, axis=1)
    f = np.concatenate([np.stack([a.ravel(), b.ravel(), c.ravel()], 1),
                        np.stack([a.ravel(), c.ravel(), d.ravel()], 1)])
    return Mesh(v, f)


def vase(nu: int = 64, nh: int = 56, seed: int = 1) -> Mesh:
    """Open-topped surface of revolution with an elliptic, bent cross-section."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, nh)
    prof = 0.35 + 0.3 * np.sin(np.pi * t * 1.3 + 0.3) + 0.08 * np.sin(6 * np.pi * t)
    u = np.linspace(0, 2 * np.pi, nu, endpoint=False)
    T, U = np.meshgrid(t, u, indexing="ij")
    P = prof[:, None] * (1 + 0.1 * np.cos(3 * U + rng.uniform(0, 6.28)))
    x = P * np.cos(U) + 0.25 * T**2
    y = 0.8 * P * np.sin(U)
    z = 2.0 * T - 1.0
    side = np.stack([x.ravel(), y.ravel(), z.ravel()], 1)
    idx = np.arange(nh * nu).reshape(nh, nu)
    a, b = idx[:-1], np.roll(idx[:-1], -1, axis=1)
    c, d = np.roll(idx[1:], -1, axis=1), idx[1:]
    f = np.concatenate([np.stack([a.ravel(), b.ravel(), c.ravel()], 1),
                        np.stack([a.ravel(), c.ravel(), d.ravel()], 1)])
    # closed bottom: fan around a centre vertex
    bottom = len(side)
    ring = idx[0]
    fb = np.stack([np.full(nu, bottom), np.roll(ring, -1), ring], 1)
    v = np.vstack([side, [[x[0].mean(), 0.0, -1.0]]])
    return Mesh(v, np.concatenate([f, fb]))


def desk_meshes() -> dict[str, Mesh]:
    """Five desk meshes of 8k to 9.5k vertices and varied shape complexity."""
    return {
        "blob": deformed_sphere(9000, seed=11),
        "rock": deformed_sphere(9500, seed=12, scale=(1.0, 0.75, 0.55), bumps=40,
                                amp=(0.02, 0.08), sharp=(20.0, 80.0)),
        "pear": deformed_sphere(8000, seed=13, scale=(1.0, 0.7, 0.7), bumps=4,
                                amp=(0.2, 0.5), sharp=(2.0, 6.0)),
        "torus": torus(128, 64, seed=14),
        "vase": vase(96, 96, seed=15),
    }
