"""Scalar Costa scheme (SCS) watermarking of salient vertex norms.

Each carrier vertex's radial norm, expressed in units of the mesh's mean
radial norm, is pulled a fraction ``gamma`` of the way toward the nearest
codeword of the dithered lattice ``z*Q + bit*Q/2 + t``.  Extraction is blind:
the extractor recomputes saliency, the synchronisation and the step, then
decides each carrier's bit from the nearest codeword of either sub-lattice
and takes a majority vote per watermark bit.

Two synchronisation schemes decide which bit and dither a carrier uses:

``normal_order``
    salient vertices sorted by descending vertex-normal norm; the vertex at
    rank ``k`` carries bit ``k mod m`` with dither ``t_k``.
``angular`` (default)
    the carrier's direction from the center, expressed in the mesh's
    principal-axis frame, picks one of ``cells_per_bit * m`` equal-area
    direction cells; a keyed permutation maps cells to bits and every cell
    has its own dither.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from .mesh import Mesh, MeshGeometry, compute_geometry, reconstruct_from_norms
from .saliency import SaliencyMap, SaliencyParams, compute_saliency, mean_curvature


class WatermarkError(Exception):
    pass


class CapacityError(WatermarkError):
    pass


class EmptySalientSet(WatermarkError):
    pass


class ZeroNormals(WatermarkError):
    pass


class KeyFileError(WatermarkError):
    pass


SYNC_MODES = ("angular", "normal_order")
Q_MODES = ("fixed", "adaptive")


@dataclass(frozen=True)
class WatermarkKey:
    key1: int
    q_mode: str = "fixed"
    q_step: float = 0.035  # Q_S in units of the mean radial norm (fixed mode)
    lam: float = 1.0  # adaptive mode: Q_S = N_av / lam
    gamma: float = 0.75
    salient_fraction: float = 0.70
    sigma_rel: float = 0.02
    sync: str = "angular"
    cells_per_bit: int = 16
    guard_band: float = 0.3

    def __post_init__(self):
        if self.q_mode not in Q_MODES:
            raise ValueError(f"q_mode must be one of {Q_MODES}, got {self.q_mode!r}")
        if self.sync not in SYNC_MODES:
            raise ValueError(f"sync must be one of {SYNC_MODES}, got {self.sync!r}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.q_mode == "fixed" and not self.q_step > 0:
            raise ValueError("Q_S must be positive")
        if self.q_mode == "adaptive" and not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not 0 < self.salient_fraction <= 1:
            raise ValueError("salient_fraction must be in (0, 1]")
        if not self.sigma_rel > 0:
            raise ValueError("sigma_rel must be positive")
        if self.cells_per_bit < 1:
            raise ValueError("cells_per_bit must be >= 1")
        if not 0 <= self.guard_band < 1:
            raise ValueError("guard_band must be in [0, 1)")

    # key=value text format
    _FIELDS = {
        "key1": int, "mode": str, "Q_S": float, "lambda": float, "gamma": float,
        "fraction": float, "sigma_rel": float, "sync": str, "cells_per_bit": int,
        "guard_band": float,
    }
    _ATTR = {"mode": "q_mode", "Q_S": "q_step", "lambda": "lam", "fraction": "salient_fraction"}

    def dumps(self) -> str:
        vals = {
            "key1": self.key1, "mode": self.q_mode, "Q_S": self.q_step, "lambda": self.lam,
            "gamma": self.gamma, "fraction": self.salient_fraction, "sigma_rel": self.sigma_rel,
            "sync": self.sync, "cells_per_bit": self.cells_per_bit, "guard_band": self.guard_band,
        }
        return "".join(f"{k}={v!r}\n" if isinstance(v, float) else f"{k}={v}\n" for k, v in vals.items())

    @classmethod
    def loads(cls, text: str) -> "WatermarkKey":
        kw = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise KeyFileError(f"line {n}: expected key=value, got {line!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in cls._FIELDS:
                raise KeyFileError(f"line {n}: unknown key {k!r}")
            try:
                kw[cls._ATTR.get(k, k)] = cls._FIELDS[k](v)
            except ValueError:
                raise KeyFileError(f"line {n}: bad value for {k}: {v!r}") from None
        if "key1" not in kw:
            raise KeyFileError("key file lacks key1")
        try:
            return cls(**kw)
        except ValueError as e:
            raise KeyFileError(str(e)) from None

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "WatermarkKey":
        return cls.loads(Path(path).read_text())


def read_watermark(path) -> np.ndarray:
    text = Path(path).read_text().strip()
    return parse_bits(text)


def parse_bits(text: str) -> np.ndarray:
    text = text.strip()
    if not text or set(text) - {"0", "1"}:
        raise ValueError("watermark must be a non-empty string of '0' and '1' characters")
    return np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")


def format_bits(bits) -> str:
    return "".join("1" if b else "0" for b in bits)


def write_watermark(bits, path) -> None:
    Path(path).write_text(format_bits(bits) + "\n")


def random_watermark(m: int, seed: int) -> np.ndarray:
    return np.random.Generator(np.random.PCG64(seed)).integers(0, 2, size=m).astype(np.uint8)


# ---------------------------------------------------------------- SCS primitives


def derive_dither(key1: int, count: int, q_step: float) -> np.ndarray:
    """``count`` i.i.d. uniform values in ``[0, q_step)`` from PCG64 seeded with ``key1``."""
    if count < 0 or not q_step > 0:
        raise ValueError("count must be >= 0 and q_step > 0")
    u = np.random.Generator(np.random.PCG64(key1)).random(count)
    return q_step * u


def nearest_codeword(value, bit, q_step: float, dither):
    """Nearest codeword ``z*Q + l*Q/2 + t`` (``z`` any integer, codeword >= 0).

    ``bit`` constrains ``l``; pass ``None`` to search both sub-lattices.
    Exact ties go to the smaller codeword.  Works elementwise on arrays.
    Returns ``(codeword, bit)``.
    """
    value = np.asarray(value, dtype=np.float64)
    dither = np.asarray(dither, dtype=np.float64)
    if bit is None:
        u0, _ = nearest_codeword(value, 0, q_step, dither)
        u1, _ = nearest_codeword(value, 1, q_step, dither)
        d0, d1 = np.abs(value - u0), np.abs(value - u1)
        pick1 = (d1 < d0) | ((d1 == d0) & (u1 < u0))
        u = np.where(pick1, u1, u0)
        b = pick1.astype(np.uint8)
        return (float(u), int(b)) if u.ndim == 0 else (u, b)
    bit = np.asarray(bit)
    off = bit * (q_step / 2) + dither
    # ceil(x - 1/2) rounds to nearest with halves going down
    z = np.ceil((value - off) / q_step - 0.5)
    u = z * q_step + off
    u = np.where(u < 0, u + q_step, u)
    b = np.broadcast_to(bit, u.shape).astype(np.uint8)
    return (float(u), int(b)) if u.ndim == 0 else (u, b)


def quantize_value(value, target_codeword, gamma: float):
    """Distortion-compensated move ``value + gamma * (codeword - value)``."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must be in (0, 1]")
    return value + gamma * (np.asarray(target_codeword) - value)


# ---------------------------------------------------------------- synchronisation


# relative eigenvalue gap below which a pair of axes is treated as degenerate
NEAR_DEGENERATE = 0.02


def _third_moment_pair(a, b, cen, weight):
    """Rotate the pair ``a, b`` within its plane to maximize the third moment along ``a``.

    A second moment with two nearly equal eigenvalues leaves the in-plane
    orientation to rounding; the weighted third moment of ``cen`` pins it.
    """
    x, y = cen @ a, cen @ b
    c = np.array([weight @ x**3, 3 * weight @ (x * x * y), 3 * weight @ (x * y * y), weight @ y**3])

    def f(t):
        ct, st = np.cos(t), np.sin(t)
        return -(c[0] * ct**3 + c[1] * ct * ct * st + c[2] * ct * st * st + c[3] * st**3)

    grid = np.linspace(0.0, 2 * np.pi, 360, endpoint=False)
    t0 = grid[np.argmin(f(grid))]
    t = minimize_scalar(f, bounds=(t0 - np.pi / 180, t0 + np.pi / 180), method="bounded",
                        options={"xatol": 1e-12}).x
    ct, st = np.cos(t), np.sin(t)
    return ct * a + st * b, -st * a + ct * b


def principal_frame(mesh: Mesh, center: np.ndarray) -> np.ndarray:
    """Rows are the principal axes of the second moment of the solid.

    The solid is the union of the signed cones from ``center`` to each face,
    which is the enclosed volume for a closed mesh. Unlike surface moments it
    hardly moves when the surface is roughened or resampled. Axes are sorted by
    decreasing moment; a pair whose moments are within ``NEAR_DEGENERATE`` of
    each other is oriented by the third moment instead. Each axis is signed so
    that the third moment along it is positive and the third axis completes a
    right-handed frame.
    """
    v = mesh.vertices - center
    tri = v[mesh.faces]
    vol6 = np.einsum("fi,fi->f", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))
    s = tri.sum(axis=1)
    # exact integral of x x^T over each tetrahedron (center, a, b, c)
    C = (np.einsum("f,fki,fkj->ij", vol6, tri, tri) + np.einsum("f,fi,fj->ij", vol6, s, s)) / 120.0
    w, vec = np.linalg.eigh(C)
    w, axes = w[::-1], vec[:, ::-1].T
    cen = s / 4.0
    for i in (0, 1):
        if w[i] - w[i + 1] < NEAR_DEGENERATE * abs(w[i]):
            axes[i], axes[i + 1] = _third_moment_pair(axes[i], axes[i + 1], cen, vol6)
    m3 = np.einsum("f,fk->k", vol6, (cen @ axes.T) ** 3)
    axes = axes * np.where(m3 < 0, -1.0, 1.0)[:, None]
    # the third moment is unreliable on mirror-symmetric shapes; a right-handed
    # frame at least ties the last axis to the first two
    axes[2] = np.cross(axes[0], axes[1])
    return axes


def frame_diag(mesh: Mesh, center: np.ndarray, axes: np.ndarray) -> float:
    """Bounding-box diagonal measured in the principal frame (rotation invariant)."""
    p = (mesh.vertices - center) @ axes.T
    return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))


def fibonacci_directions(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * k / n)
    theta = np.pi * (1 + 5**0.5) * k
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], 1)


def cell_bit_map(key1: int, n_cells: int, m: int) -> np.ndarray:
    """Keyed balanced assignment of direction cells to watermark bits."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([key1, 1])))
    return (rng.permutation(n_cells) % m).astype(np.int64)


def sync_order(geometry: MeshGeometry, vertices: np.ndarray, salient: np.ndarray) -> np.ndarray:
    """Salient vertices by descending normal norm, then descending radial norm, then position."""
    s = np.asarray(salient)
    p = vertices[s]
    keys = (p[:, 2], p[:, 1], p[:, 0], -geometry.radial_norms[s], -geometry.normal_norms[s])
    return s[np.lexsort(keys)]


def quantization_step(geometry: MeshGeometry, salient, key: WatermarkKey, mean_radius: float | None = None) -> float:
    """Q_S in units of the mean radial norm.

    Adaptive mode uses ``N_av / lambda`` with the salient vertices' normal
    norms divided by the squared mean radial norm, which keeps the step
    scale invariant.
    """
    if key.q_mode == "fixed":
        return float(key.q_step)
    salient = np.asarray(salient)
    if len(salient) == 0:
        raise EmptySalientSet("no salient vertices")
    nn = geometry.normal_norms[salient]
    if not np.any(nn > 0):
        raise ZeroNormals("all salient vertex normals are zero")
    rbar = geometry.radial_norms.mean() if mean_radius is None else mean_radius
    return float(nn.mean() / rbar**2 / key.lam)


# ---------------------------------------------------------------- embed / extract


@dataclass
class Layout:
    """Everything embedder and extractor derive from the mesh and the key."""

    geometry: MeshGeometry
    saliency: SaliencyMap
    mean_radius: float
    q_step: float
    carriers: np.ndarray  # vertex indices
    bit_index: np.ndarray  # per carrier
    dither: np.ndarray  # per carrier


def layout(mesh: Mesh, key: WatermarkKey, m: int, carrier_fraction: float = 1.0) -> Layout:
    if m < 1:
        raise ValueError("watermark length must be >= 1")
    geo = compute_geometry(mesh)
    rbar = float(geo.radial_norms.mean())
    axes = principal_frame(mesh, geo.center)
    sigma = key.sigma_rel * frame_diag(mesh, geo.center, axes)
    sal = compute_saliency(mesh, SaliencyParams(sigma, key.salient_fraction), mean_curvature(mesh))
    salient = sal.salient
    if len(salient) == 0:
        raise EmptySalientSet("no salient vertices selected")
    q = quantization_step(geo, salient, key, rbar)
    keep = int(np.floor(carrier_fraction * len(salient) + 0.5))
    chosen = salient[: max(keep, 1)]

    if key.sync == "normal_order":
        carriers = sync_order(geo, mesh.vertices, chosen)
        ranks = np.arange(len(carriers))
        bit_index = ranks % m
        dither = derive_dither(key.key1, len(carriers), q)
    else:
        n_cells = key.cells_per_bit * m
        dirs = (mesh.vertices[chosen] - geo.center) @ axes.T
        _, cell = cKDTree(fibonacci_directions(n_cells)).query(dirs)
        carriers = chosen
        bit_index = cell_bit_map(key.key1, n_cells, m)[cell]
        dither = derive_dither(key.key1, n_cells, q)[cell]
    return Layout(geo, sal, rbar, q, carriers, bit_index, dither)


@dataclass
class EmbedReport:
    q_step: float
    mean_radius: float
    salient_count: int
    carrier_count: int
    repetitions: np.ndarray  # carriers per watermark bit
    max_displacement: float  # largest radial move, model units
    max_norm_step: float  # largest radial move in units of the mean radius
    salient_overlap: float  # fraction of carriers still salient after embedding
    sync: str = "angular"

    def to_row(self) -> dict:
        return {
            "q_step": repr(self.q_step),
            "mean_radius": repr(self.mean_radius),
            "salient_count": self.salient_count,
            "carrier_count": self.carrier_count,
            "min_repetition": int(self.repetitions.min()),
            "max_repetition": int(self.repetitions.max()),
            "max_displacement": repr(self.max_displacement),
            "salient_overlap": repr(self.salient_overlap),
            "sync": self.sync,
        }


@dataclass
class ExtractReport:
    q_step: float
    salient_count: int
    voter_count: int
    ones: np.ndarray
    zeros: np.ndarray

    @property
    def margins(self) -> np.ndarray:
        """Signed vote margin per bit, in [-1, 1]; positive favours the decided bit."""
        tot = np.maximum(self.ones + self.zeros, 1)
        return np.abs(self.ones - self.zeros) / tot * np.where(self.ones == self.zeros, 0, 1)

    def to_row(self) -> dict:
        return {
            "q_step": repr(self.q_step),
            "salient_count": self.salient_count,
            "voter_count": self.voter_count,
            "min_margin": repr(float(self.margins.min())),
            "mean_margin": repr(float(self.margins.mean())),
            "margins": " ".join(f"{x:.3f}" for x in self.margins),
        }


def embed(mesh: Mesh, key: WatermarkKey, watermark, strict: bool = False) -> tuple[Mesh, EmbedReport]:
    bits = np.asarray(watermark, dtype=np.uint8)
    m = len(bits)
    lay = layout(mesh, key, m)
    if strict and len(lay.carriers) < m:
        raise CapacityError(f"{len(lay.carriers)} salient vertices cannot carry {m} bits")
    rho = lay.geometry.radial_norms[lay.carriers] / lay.mean_radius
    target = bits[lay.bit_index]
    cw, _ = nearest_codeword(rho, target, lay.q_step, lay.dither)
    new_rho = quantize_value(rho, cw, key.gamma)
    new_r = new_rho * lay.mean_radius
    out = reconstruct_from_norms(mesh, lay.geometry, (lay.carriers, new_r))

    step = np.abs(new_rho - rho)
    after = layout(out, key, m)
    overlap = len(np.intersect1d(after.saliency.salient, lay.carriers)) / max(len(lay.carriers), 1)
    report = EmbedReport(
        q_step=lay.q_step,
        mean_radius=lay.mean_radius,
        salient_count=len(lay.saliency.salient),
        carrier_count=len(lay.carriers),
        repetitions=np.bincount(lay.bit_index, minlength=m),
        max_displacement=float(step.max() * lay.mean_radius) if len(step) else 0.0,
        max_norm_step=float(step.max()) if len(step) else 0.0,
        salient_overlap=float(overlap),
        sync=key.sync,
    )
    return out, report


def extract(mesh: Mesh, key: WatermarkKey, m: int) -> tuple[np.ndarray, ExtractReport]:
    if m < 1:
        raise ValueError("watermark length must be >= 1")
    lay = layout(mesh, key, m, carrier_fraction=1.0 - key.guard_band)
    rho = lay.geometry.radial_norms[lay.carriers] / lay.mean_radius
    _, dec = nearest_codeword(rho, None, lay.q_step, lay.dither)
    ones = np.bincount(lay.bit_index, weights=dec, minlength=m).astype(np.int64)
    total = np.bincount(lay.bit_index, minlength=m)
    zeros = total - ones
    bits = (ones > zeros).astype(np.uint8)
    return bits, ExtractReport(lay.q_step, len(lay.saliency.salient), len(lay.carriers), ones, zeros)
