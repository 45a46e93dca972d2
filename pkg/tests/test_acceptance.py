"""Acceptance suite: one verdict line per criterion.

Every test appends ``C<n> PASS|FAIL <summary>`` to the acceptance log (shown
in pytest's terminal summary) and then asserts the criterion.  Thresholds are
the contract's, unchanged.
"""

import warnings

import numpy as np
import pytest

import acceptance_log
import oracles
from scsmark import metrics, shapes
from scsmark.attacks import (
    add_noise, crop, quantize_coords, random_similarity, reorder_elements, similarity_transform,
    smooth_laplacian,
)
from scsmark.bench import BenchPlan, run_bench
from scsmark.mesh import Mesh
from scsmark.saliency import (
    SaliencyParams, ball_neighborhood, compute_saliency, mean_curvature,
)
from scsmark.scs import WatermarkKey, embed, extract, layout, random_watermark

M = 64
REPS = 5  # repetitions for randomized attacks
KEY = WatermarkKey(key1=20240611)
WM = random_watermark(M, 7)


def report(n: int, ok: bool, summary: str) -> None:
    line = f"C{n:<2} {'PASS' if ok else 'FAIL'}  {summary}"
    acceptance_log.LINES.append(line)
    print(line)


def corr(bits) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", metrics.ConstantSequenceWarning)
        return metrics.correlation(WM, bits)


def attacked_corr(marked, attack) -> float:
    return corr(extract(attack(marked), KEY, M)[0])


@pytest.fixture(scope="module")
def marked(desk):
    return {name: embed(mesh, KEY, WM) for name, mesh in desk.items()}


def fmt(d: dict) -> str:
    return " ".join(f"{k}={v:.2f}" for k, v in d.items())


# ---------------------------------------------------------------- 1


def _random_mesh(rng):
    kind = int(rng.integers(3))
    seed = int(rng.integers(1_000_000))
    if kind == 0:
        return shapes.deformed_sphere(int(rng.integers(6000, 9500)), seed=seed,
                                      scale=tuple(rng.uniform(0.55, 1.0, 3)), bumps=int(rng.integers(4, 40)))
    if kind == 1:
        return shapes.torus(int(rng.integers(100, 130)), int(rng.integers(50, 70)), seed=seed)
    return shapes.vase(int(rng.integers(80, 100)), int(rng.integers(80, 100)), seed=seed)


def test_c01_round_trip_exact(desk):
    rng = np.random.default_rng(101)
    meshes = list(desk.values()) + [_random_mesh(rng) for _ in range(15)]
    exact = 0
    worst = 1.0
    for mesh in meshes:
        key = WatermarkKey(int(rng.integers(2**31)))
        w = rng.integers(0, 2, M).astype(np.uint8)
        out, _ = embed(mesh, key, w)
        bits, _ = extract(out, key, M)
        exact += bool(np.array_equal(bits, w))
        worst = min(worst, metrics.correlation(w, bits))
    ok = exact == len(meshes)
    report(1, ok, f"round trip exact on {exact}/{len(meshes)} (mesh, key, 64-bit) triples; min corr {worst:.3f}")
    assert ok


# ---------------------------------------------------------------- 2


def test_c02_reordering(marked):
    res = {}
    same = True
    for name, (m, _) in marked.items():
        ref = extract(m, KEY, M)[0]
        vals = []
        for s in range(REPS):
            bits = extract(reorder_elements(m, s), KEY, M)[0]
            same &= bool(np.array_equal(bits, ref))
            vals.append(corr(bits))
        res[name] = min(vals)
    ok = same and all(v == 1.0 for v in res.values())
    report(2, ok, f"reorder min corr {fmt(res)}; bits identical to unattacked: {same}")
    assert ok


# ---------------------------------------------------------------- 3


def test_c03_similarity(marked):
    res = {}
    for name, (m, _) in marked.items():
        vals = []
        for s in range(REPS):
            R, sc, t = random_similarity(1000 + s)
            vals.append(attacked_corr(m, lambda x: similarity_transform(x, R, sc, t)))
        res[name] = min(vals)
    ok = all(v >= 0.95 for v in res.values())
    report(3, ok, f"similarity min corr over {REPS} draws (>=0.95): {fmt(res)}")
    assert ok


# ---------------------------------------------------------------- 4


def test_c04_noise(marked):
    amps = [0.0005, 0.001, 0.003, 0.005]
    table = {a: {} for a in amps}
    for name, (m, _) in marked.items():
        for a in amps:
            table[a][name] = float(np.mean([attacked_corr(m, lambda x: add_noise(x, a, s)) for s in range(REPS)]))
    means = [float(np.mean(list(table[a].values()))) for a in amps]
    low = all(v >= 0.90 for v in table[0.0005].values())
    high = all(v >= 0.60 for v in table[0.005].values())
    mono = all(means[i + 1] <= means[i] for i in range(len(means) - 1))
    ok = low and high and mono
    report(4, ok, f"noise 0.05% {fmt(table[0.0005])} | 0.50% {fmt(table[0.005])} | "
                  f"means {' '.join(f'{v:.3f}' for v in means)} non-increasing={mono}")
    assert ok


# ---------------------------------------------------------------- 5


def test_c05_smoothing(marked):
    its = [10, 30, 50]
    table = {i: {} for i in its}
    for name, (m, _) in marked.items():
        for i in its:
            table[i][name] = attacked_corr(m, lambda x: smooth_laplacian(x, i, 0.1))
    means = [float(np.mean(list(table[i].values()))) for i in its]
    ten = all(v >= 0.90 for v in table[10].values())
    fifty = all(v >= 0.70 for v in table[50].values())
    mono = all(means[k + 1] <= means[k] for k in range(len(means) - 1))
    ok = ten and fifty and mono
    report(5, ok, f"smoothing 10 it {fmt(table[10])} (>=0.90: {ten}) | 50 it {fmt(table[50])} "
                  f"(>=0.70: {fifty}) | means {' '.join(f'{v:.3f}' for v in means)} non-increasing={mono}")
    assert ok


# ---------------------------------------------------------------- 6


def test_c06_quantization(marked):
    table = {b: {} for b in (11, 9, 7)}
    for name, (m, _) in marked.items():
        for b in table:
            table[b][name] = attacked_corr(m, lambda x: quantize_coords(x, b))
    ok = (all(v == 1.0 for v in table[11].values()) and all(v >= 0.90 for v in table[9].values())
          and all(v >= 0.60 for v in table[7].values()))
    report(6, ok, f"quantization 11b {fmt(table[11])} | 9b {fmt(table[9])} | 7b {fmt(table[7])}")
    assert ok


# ---------------------------------------------------------------- 7


def test_c07_cropping_is_weak(marked):
    res = {}
    for name, (m, _) in marked.items():
        res[name] = float(np.mean([attacked_corr(m, lambda x: crop(x, 0.5, s)) for s in range(REPS)]))
    ok = all(v < 0.5 for v in res.values())
    report(7, ok, f"50% crop mean corr (<0.5 expected): {fmt(res)}")
    assert ok


# ---------------------------------------------------------------- 8


def test_c08_imperceptibility(desk, marked):
    off_key = WatermarkKey(KEY.key1, salient_fraction=1.0)
    better = 0
    worst_ratio = 0.0
    parts = []
    for name, mesh in desk.items():
        on = marked[name][0]
        off, _ = embed(mesh, off_key, WM)
        diag = float(np.linalg.norm(np.ptp(mesh.vertices, axis=0)))
        mr_on, mr_off = metrics.mrms(mesh, on), metrics.mrms(mesh, off)
        ms_on, ms_off = metrics.msdm(mesh, on), metrics.msdm(mesh, off)
        better += (mr_on < mr_off) and (ms_on < ms_off)
        worst_ratio = max(worst_ratio, mr_on / diag)
        parts.append(f"{name} mrms {mr_on / diag * 1e3:.2f}/{mr_off / diag * 1e3:.2f}e-3 msdm {ms_on:.3f}/{ms_off:.3f}")
    ok = better >= 4 and worst_ratio <= 1.5e-3
    report(8, ok, f"saliency ON/OFF lower on {better}/5; max MRMS {worst_ratio:.2e} x diag; " + "; ".join(parts))
    assert ok


# ---------------------------------------------------------------- 9


def test_c09_oracle_equivalence():
    errs = {}
    m = shapes.deformed_sphere(120, seed=77)
    curv = mean_curvature(m)
    errs["curvature"] = float(np.max(np.abs(curv - oracles.taubin_mean_curvature(m.vertices, m.faces))))
    sal = compute_saliency(m, SaliencyParams(0.09), curv)
    errs["saliency"] = float(np.max(np.abs(sal.scores - oracles.saliency(m.vertices, curv, 0.09))))

    b = add_noise(m, 0.02, 3)
    cb = oracles.taubin_mean_curvature(b.vertices, b.faces)
    ca = oracles.taubin_mean_curvature(m.vertices, m.faces)
    errs["msdm"] = abs(metrics.msdm(m, b, 0.4) - oracles.msdm(m.vertices, b.vertices, ca, cb, 0.4))

    rng = np.random.default_rng(9)
    soup = Mesh(rng.normal(size=(600, 3)), np.arange(600).reshape(200, 3))
    pts = rng.normal(scale=1.5, size=(200, 3))
    d = metrics.DistanceIndex(soup).query(pts)
    ref = np.array([oracles.point_mesh_distance(p, soup.vertices, soup.faces) for p in pts])
    errs["point_surface"] = float(np.max(np.abs(d - ref)))

    cloud = Mesh(rng.random((200, 3)), np.zeros((0, 3), int))
    mism = sum(ball_neighborhood(cloud, v, 0.3).tolist() != oracles.ball(cloud.vertices, v, 0.3) for v in range(200))
    errs["ball_mismatches"] = float(mism)
    ok = mism == 0 and all(v <= 1e-12 for k, v in errs.items() if k != "ball_mismatches")
    report(9, ok, "max |diff| vs brute force: " + " ".join(f"{k}={v:.1e}" for k, v in errs.items()))
    assert ok


# ---------------------------------------------------------------- 10


def test_c10_key_security(desk, marked):
    rng = np.random.default_rng(1010)
    names = list(desk)
    wrong = []
    for i in range(100):
        k = int(rng.integers(2**31))
        if k == KEY.key1:
            continue
        m = marked[names[i % len(names)]][0]
        wrong.append(abs(corr(extract(m, WatermarkKey(k), M)[0])))
    clean = []
    for i in range(100):
        key = WatermarkKey(int(rng.integers(2**31)))
        w = rng.integers(0, 2, M).astype(np.uint8)
        bits = extract(desk[names[i % len(names)]], key, M)[0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", metrics.ConstantSequenceWarning)
            clean.append(abs(metrics.correlation(w, bits)))
    mean_wrong = float(np.mean(wrong))
    rate = float(np.mean(np.array(clean) < 0.3))
    ok = mean_wrong < 0.15 and rate >= 0.95
    report(10, ok, f"wrong key mean |corr| {mean_wrong:.3f} (<0.15) over {len(wrong)}; "
                   f"unwatermarked |corr|<0.3 rate {rate:.2f} (>=0.95)")
    assert ok


# ---------------------------------------------------------------- 11


def test_c11_determinism(tmp_path):
    plan_text = """seed = 5
repetitions = 2
watermark_bits = 64
[key]
key1 = 11
[meshes]
blob = builtin:blob
[attacks]
noise:0.001
similarity
reorder
crop:0.3
smooth:10:0.1
subdiv:loop:1
"""
    outs = []
    for run in range(2):
        plan = BenchPlan.parse(plan_text, tmp_path)
        plan.out_dir = tmp_path / f"run{run}"
        run_bench(plan).write(plan.out_dir)
        outs.append((plan.out_dir / "results.csv").read_bytes())
    a, b = embed(shapes.desk_meshes()["pear"], KEY, WM)[0], embed(shapes.desk_meshes()["pear"], KEY, WM)[0]
    ok = outs[0] == outs[1] and a == b
    report(11, ok, f"results.csv byte-identical across reruns: {outs[0] == outs[1]} "
                   f"({len(outs[0])} bytes); embed repeatable: {a == b}")
    assert ok


# ---------------------------------------------------------------- 12


def test_c12_saliency_stability(desk):
    res = {}
    for name, mesh in desk.items():
        a = set(layout(mesh, KEY, M).saliency.salient.tolist())
        b = set(layout(add_noise(mesh, 0.003, 1), KEY, M).saliency.salient.tolist())
        res[name] = len(a & b) / len(a)
    low = {k: v for k, v in res.items() if v < 0.8}
    if low:
        warnings.warn(f"salient-set overlap below 80% after 0.3% noise: {fmt(low)}")
    # measured claim: a shortfall is reported as a warning, not a failure
    report(12, True, f"salient overlap after 0.3% noise {fmt(res)}"
                     + (f" WARNING below 0.80 on {', '.join(low)}" if low else ""))
