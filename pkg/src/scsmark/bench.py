"""Benchmark orchestration: attack specs, plan files and result tables.

A plan names meshes, a key, a watermark and an attack grid.  Every mesh is
watermarked once, then every attack (with several derived seeds when it is
randomized) is applied and the watermark extracted.  Results go to
``results.csv`` plus one pivot table and one plot-ready ``.dat`` file per
attack kind.
"""

from __future__ import annotations

import csv
import io
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attacks, metrics, shapes
from .mesh import Mesh, load_mesh
from .scs import WatermarkKey, embed, extract, random_watermark, read_watermark

log = logging.getLogger("scsmark.bench")


class PlanError(ValueError):
    pass


class AttackSpecError(ValueError):
    pass


# ---------------------------------------------------------------- attack specs

ATTACK_KINDS = {
    "noise": "noise:<amplitude>[:<seed>]   e.g. noise:0.005",
    "smooth": "smooth:<iterations>[:<factor>]   e.g. smooth:30:0.1",
    "quant": "quant:<bits>   e.g. quant:9",
    "similarity": "similarity[:<seed>]",
    "reorder": "reorder[:<seed>]",
    "subdiv": "subdiv:<midpoint|loop|sqrt3>[:<iterations>]   e.g. subdiv:loop:1",
    "crop": "crop:<fraction>[:<seed>]   e.g. crop:0.3:1",
}
RANDOMIZED = {"noise", "similarity", "reorder", "crop"}


def usage_kinds() -> str:
    return "valid attack kinds:\n" + "\n".join(f"  {v}" for v in ATTACK_KINDS.values())


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    params: tuple = ()
    seed: int | None = None
    text: str = ""

    @classmethod
    def parse(cls, text: str) -> "AttackSpec":
        text = text.strip()
        parts = text.split(":")
        kind, args = parts[0].lower(), parts[1:]
        try:
            if kind == "noise" and len(args) in (1, 2):
                amp = float(args[0])
                if amp < 0:
                    raise AttackSpecError("noise amplitude must be >= 0")
                return cls(kind, (amp,), int(args[1]) if len(args) == 2 else None, text)
            if kind == "smooth" and len(args) in (1, 2):
                it = int(args[0])
                fac = float(args[1]) if len(args) == 2 else 0.1
                if it < 0 or not 0 < fac < 1:
                    raise AttackSpecError("smooth needs iterations >= 0 and 0 < factor < 1")
                return cls(kind, (it, fac), None, text)
            if kind in ("quant", "quantize", "quantize_coords") and len(args) == 1:
                b = int(args[0])
                if not 1 <= b <= 24:
                    raise AttackSpecError("quant bits must be in [1, 24]")
                return cls("quant", (b,), None, text)
            if kind in ("similarity", "reorder") and len(args) <= 1:
                return cls(kind, (), int(args[0]) if args else None, text)
            if kind in ("subdiv", "subdivide") and len(args) in (1, 2):
                scheme = args[0].lower()
                if scheme not in attacks.SUBDIVISION_SCHEMES:
                    raise AttackSpecError(f"unknown subdivision scheme {scheme!r}")
                it = int(args[1]) if len(args) == 2 else 1
                if it < 1:
                    raise AttackSpecError("subdivision iterations must be >= 1")
                return cls("subdiv", (scheme, it), None, text)
            if kind == "crop" and len(args) in (1, 2):
                fr = float(args[0])
                if not 0 < fr < 1:
                    raise AttackSpecError("crop fraction must be in (0, 1)")
                return cls(kind, (fr,), int(args[1]) if len(args) == 2 else None, text)
        except ValueError as e:
            if isinstance(e, AttackSpecError):
                raise
            raise AttackSpecError(f"bad attack spec {text!r}: {e}\n{usage_kinds()}") from None
        raise AttackSpecError(f"bad attack spec {text!r}\n{usage_kinds()}")

    @property
    def randomized(self) -> bool:
        return self.kind in RANDOMIZED

    @property
    def group(self) -> str:
        """Pivot-table group: the kind, split per scheme for subdivision."""
        return f"subdiv-{self.params[0]}" if self.kind == "subdiv" else self.kind

    @property
    def level(self) -> float:
        """Numeric strength used as the x axis of the correlation curves."""
        if self.kind == "noise":
            return 100.0 * self.params[0]  # percent of the mean radial norm
        if self.kind == "smooth":
            return float(self.params[0])
        if self.kind == "quant":
            return float(self.params[0])
        if self.kind == "subdiv":
            return float(self.params[1])
        if self.kind == "crop":
            return 100.0 * self.params[0]
        return 0.0

    def apply(self, mesh: Mesh, seed: int = 0) -> Mesh:
        """Run the attack; ``seed`` is used when the attack text names none."""
        s = self.seed if self.seed is not None else seed
        if self.kind == "noise":
            return attacks.add_noise(mesh, self.params[0], s)
        if self.kind == "smooth":
            return attacks.smooth_laplacian(mesh, *self.params)
        if self.kind == "quant":
            return attacks.quantize_coords(mesh, self.params[0])
        if self.kind == "similarity":
            R, sc, t = attacks.random_similarity(s)
            return attacks.similarity_transform(mesh, R, sc, t)
        if self.kind == "reorder":
            return attacks.reorder_elements(mesh, s)
        if self.kind == "subdiv":
            return attacks.subdivide(mesh, *self.params)
        if self.kind == "crop":
            return attacks.crop(mesh, self.params[0], s)
        raise AttackSpecError(f"unknown attack kind {self.kind!r}")


def derive_seed(base: int, text: str, repetition: int) -> int:
    """Stable per-(attack, repetition) seed; independent of Python's hash salt."""
    ss = np.random.SeedSequence([base & 0xFFFFFFFF, zlib.crc32(text.encode()), repetition])
    return int(ss.generate_state(1)[0])


# ---------------------------------------------------------------- plan


DEFAULT_ATTACKS = [
    "noise:0.0005", "noise:0.001", "noise:0.003", "noise:0.005",
    "smooth:10:0.1", "smooth:30:0.1", "smooth:50:0.1",
    "quant:11", "quant:10", "quant:9", "quant:8", "quant:7",
    "similarity", "reorder",
    "subdiv:midpoint:1", "subdiv:loop:1", "subdiv:sqrt3:1",
    "crop:0.1", "crop:0.3", "crop:0.5",
]


@dataclass
class BenchPlan:
    meshes: dict  # name -> path or "builtin:<name>"
    key: WatermarkKey
    watermark: np.ndarray
    attacks: list = field(default_factory=list)
    out_dir: Path = Path("bench_out")
    repetitions: int = 5
    seed: int = 0
    attack_metrics: bool = False
    base_dir: Path = Path(".")

    def __post_init__(self):
        if not self.meshes:
            raise PlanError("plan lists no meshes")
        if len(self.watermark) < 16:
            raise PlanError(f"watermark of {len(self.watermark)} bits; need at least 16")
        if self.repetitions < 1:
            raise PlanError("repetitions must be >= 1")

    @classmethod
    def parse(cls, text: str, base_dir: Path = Path(".")) -> "BenchPlan":
        """Plain ``key = value`` lines plus ``[meshes]``, ``[attacks]`` and ``[key]`` sections."""
        top: dict[str, str] = {}
        meshes: dict[str, str] = {}
        atk: list[str] = []
        keytext: list[str] = []
        section = None
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip().lower()
                if section not in ("meshes", "attacks", "key"):
                    raise PlanError(f"line {n}: unknown section [{section}]")
                continue
            if section == "attacks":
                atk.append(line)
            elif section == "key":
                keytext.append(line)
            elif "=" not in line:
                raise PlanError(f"line {n}: expected key = value, got {line!r}")
            else:
                k, v = (s.strip() for s in line.split("=", 1))
                if section == "meshes":
                    meshes[k] = v
                else:
                    top[k] = v

        known = {"seed", "out_dir", "key_file", "watermark", "watermark_bits", "watermark_seed",
                 "repetitions", "attack_metrics"}
        bad = set(top) - known
        if bad:
            raise PlanError(f"unknown plan settings: {', '.join(sorted(bad))}")
        if "key_file" in top:
            key = WatermarkKey.load(base_dir / top["key_file"])
        elif keytext:
            key = WatermarkKey.loads("\n".join(keytext))
        else:
            raise PlanError("plan needs key_file = <path> or a [key] section")
        seed = int(top.get("seed", 0))
        if "watermark" in top:
            wm = read_watermark(base_dir / top["watermark"])
        else:
            wm = random_watermark(int(top.get("watermark_bits", 64)), int(top.get("watermark_seed", seed)))
        try:
            specs = [AttackSpec.parse(a) for a in (atk or DEFAULT_ATTACKS)]
        except AttackSpecError as e:
            raise PlanError(str(e)) from None
        return cls(
            meshes=meshes,
            key=key,
            watermark=wm,
            attacks=specs,
            out_dir=base_dir / top.get("out_dir", "bench_out"),
            repetitions=int(top.get("repetitions", 5)),
            seed=seed,
            attack_metrics=top.get("attack_metrics", "false").lower() in ("1", "true", "yes"),
            base_dir=base_dir,
        )

    @classmethod
    def load(cls, path) -> "BenchPlan":
        path = Path(path)
        return cls.parse(path.read_text(), path.parent)

    def load_mesh(self, name: str) -> Mesh:
        src = self.meshes[name]
        if src.startswith("builtin:"):
            which = src.split(":", 1)[1]
            desk = shapes.desk_meshes()
            if which not in desk:
                raise PlanError(f"unknown builtin mesh {which!r}; choose from {sorted(desk)}")
            return desk[which]
        return load_mesh(self.base_dir / src)


# ---------------------------------------------------------------- running

COLUMNS = [
    "mesh", "attack", "group", "level", "repetition", "seed", "status", "correlation", "bit_errors",
    "q_step", "salient_count", "carrier_count", "min_repetition", "salient_overlap",
    "embed_mrms", "embed_hausdorff", "embed_msdm", "attack_mrms", "min_margin", "mean_margin",
    "vertices", "error",
]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


@dataclass
class BenchResult:
    rows: list

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: (r["mesh"], r["group"], float(r["level"]), r["attack"], r["repetition"]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.sorted_rows():
            w.writerow({k: _fmt(r.get(k)) for k in COLUMNS})
        return buf.getvalue()

    @property
    def failed(self) -> int:
        return sum(r["status"] != "ok" for r in self.rows)

    def pivot(self, group: str, stat: str = "mean") -> tuple[list, list, dict]:
        """(levels, meshes, {(level, mesh): value}) over repetitions of one group."""
        cells: dict = {}
        for r in self.rows:
            if r["group"] != group or r["status"] != "ok":
                continue
            cells.setdefault((float(r["level"]), r["mesh"]), []).append(r["correlation"])
        fn = np.mean if stat == "mean" else np.min
        vals = {k: float(fn(v)) for k, v in cells.items()}
        levels = sorted({k[0] for k in cells})
        meshes = sorted({r["mesh"] for r in self.rows})
        return levels, meshes, vals

    def groups(self) -> list:
        return sorted({r["group"] for r in self.rows if r["group"] != "none"})

    def pivot_csv(self, group: str) -> str:
        levels, meshes, mean = self.pivot(group, "mean")
        _, _, lo = self.pivot(group, "min")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level"] + [f"{m}_mean" for m in meshes] + [f"{m}_min" for m in meshes])
        for lv in levels:
            w.writerow([repr(lv)] + [_cell(mean, lv, m) for m in meshes] + [_cell(lo, lv, m) for m in meshes])
        return buf.getvalue()

    def dat(self, group: str) -> str:
        levels, meshes, mean = self.pivot(group, "mean")
        out = [f"# mean correlation vs {group} level", "# level " + " ".join(meshes)]
        for lv in levels:
            out.append(" ".join([repr(lv)] + [_cell(mean, lv, m) or "nan" for m in meshes]))
        return "\n".join(out) + "\n"

    def write(self, out_dir: Path) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = [out_dir / "results.csv"]
        files[0].write_text(self.to_csv())
        for g in self.groups():
            p = out_dir / f"pivot_{g}.csv"
            p.write_text(self.pivot_csv(g))
            d = out_dir / f"corr_{g}.dat"
            d.write_text(self.dat(g))
            files += [p, d]
        return files


def _cell(vals, lv, m):
    v = vals.get((lv, m))
    return "" if v is None else f"{v:.4f}"


def _correlation(a, b) -> float:
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", metrics.ConstantSequenceWarning)
        return metrics.correlation(a, b)


def run_bench(plan: BenchPlan) -> BenchResult:
    """Embed once per mesh, then attack, extract and score every grid cell."""
    rows = []
    wm = plan.watermark
    m = len(wm)
    for name in sorted(plan.meshes):
        base = {"mesh": name}
        try:
            cover = plan.load_mesh(name)
            marked, rep = embed(cover, plan.key, wm)
            dist = metrics.surface_distances(cover, marked, seed=plan.seed)
            emsdm = metrics.msdm(cover, marked)
        except Exception as e:  # record and continue with the next mesh
            log.warning("%s: embedding failed: %s", name, e)
            rows.append({**base, "attack": "none", "group": "none", "level": 0.0, "repetition": 0,
                         "status": "error", "error": f"{type(e).__name__}: {e}"})
            continue
        base.update(
            q_step=rep.q_step, salient_count=rep.salient_count, carrier_count=rep.carrier_count,
            min_repetition=int(rep.repetitions.min()), salient_overlap=rep.salient_overlap,
            embed_mrms=dist.mrms, embed_hausdorff=dist.hausdorff, embed_msdm=emsdm,
        )
        cells = [(AttackSpec("none", text="none"), 0)]
        for spec in plan.attacks:
            reps = plan.repetitions if spec.randomized else 1
            cells += [(spec, r) for r in range(reps)]
        for spec, r in cells:
            seed = derive_seed(spec.seed if spec.seed is not None else plan.seed, spec.text, r)
            row = {**base, "attack": spec.text, "group": spec.group if spec.kind != "none" else "none",
                   "level": spec.level, "repetition": r, "seed": seed if spec.randomized else None}
            try:
                attacked = marked if spec.kind == "none" else _apply(spec, marked, seed)
                bits, xr = extract(attacked, plan.key, m)
                row.update(
                    status="ok", correlation=_correlation(wm, bits), bit_errors=int(np.sum(bits != wm)),
                    min_margin=float(xr.margins.min()), mean_margin=float(xr.margins.mean()),
                    vertices=attacked.n_vertices,
                )
                if plan.attack_metrics and spec.kind != "none":
                    row["attack_mrms"] = metrics.mrms(cover, attacked, seed=plan.seed)
            except Exception as e:
                row.update(status="error", error=f"{type(e).__name__}: {e}")
            log.info("%s %s rep %d: %s", name, spec.text, r,
                     f"corr {row['correlation']:.3f}" if row["status"] == "ok" else row["error"])
            rows.append(row)
    return BenchResult(rows)


def _apply(spec: AttackSpec, mesh: Mesh, seed: int) -> Mesh:
    # derived seed wins so repetitions differ even when the attack text names a seed
    return AttackSpec(spec.kind, spec.params, None, spec.text).apply(mesh, seed)
