"""``scsmark`` command line: embed, extract, attack, evaluate and bench."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import metrics
from .bench import AttackSpec, AttackSpecError, BenchPlan, PlanError, run_bench, usage_kinds
from .mesh import MeshError, load_mesh, save_mesh
from .scs import WatermarkError, WatermarkKey, embed, extract, format_bits, read_watermark

log = logging.getLogger("scsmark")


def _csv_line(row: dict) -> None:
    w = csv.DictWriter(sys.stdout, list(row), lineterminator="\n")
    w.writeheader()
    w.writerow(row)


def _out_path(args, path: str) -> Path:
    p = Path(path)
    if args.out_dir and not p.is_absolute():
        p = Path(args.out_dir) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _read_key(path) -> WatermarkKey:
    if not Path(path).is_file():
        raise FileNotFoundError(f"key file not found: {path}")
    return WatermarkKey.load(path)


def cmd_embed(args) -> int:
    key = _read_key(args.key)
    wm = read_watermark(args.watermark)
    mesh = load_mesh(args.mesh_in)
    out, rep = embed(mesh, key, wm, strict=args.strict)
    save_mesh(out, _out_path(args, args.mesh_out), args.format)
    _csv_line(rep.to_row())
    return 0


def cmd_extract(args) -> int:
    key = _read_key(args.key)
    bits, rep = extract(load_mesh(args.mesh_in), key, args.m)
    print(format_bits(bits))
    row = rep.to_row()
    if args.watermark:
        wm = read_watermark(args.watermark)
        if len(wm) != args.m:
            raise WatermarkError(f"watermark file has {len(wm)} bits but m = {args.m}")
        row["correlation"] = repr(metrics.correlation(wm, bits))
    _csv_line(row)
    return 0


def cmd_attack(args) -> int:
    spec = AttackSpec.parse(args.spec)
    out = spec.apply(load_mesh(args.mesh_in), args.seed)
    save_mesh(out, _out_path(args, args.mesh_out), args.format)
    return 0


def cmd_evaluate(args) -> int:
    a, b = load_mesh(args.mesh_a), load_mesh(args.mesh_b)
    d = metrics.surface_distances(a, b, args.samples, args.seed)
    row = {"mrms": repr(d.mrms), "rms_ab": repr(d.rms_ab), "rms_ba": repr(d.rms_ba), "hausdorff": repr(d.hausdorff)}
    if a.n_vertices == b.n_vertices:
        row["msdm"] = repr(metrics.msdm(a, b, args.radius))
    else:
        row["msdm"] = ""  # no vertex correspondence
    if args.key and args.watermark:
        wm = read_watermark(args.watermark)
        bits, _ = extract(b, _read_key(args.key), len(wm))
        row["correlation"] = repr(metrics.correlation(wm, bits))
    _csv_line(row)
    return 0


def cmd_bench(args) -> int:
    plan = BenchPlan.load(args.plan)
    if args.out_dir:
        plan.out_dir = Path(args.out_dir)
    if args.seed_given:
        plan.seed = args.seed
    res = run_bench(plan)
    files = res.write(plan.out_dir)
    for f in files:
        log.info("wrote %s", f)
    if res.failed:
        print(f"{res.failed} of {len(res.rows)} bench cells failed; see {files[0]}", file=sys.stderr)
        return 1
    return 0


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for randomized steps (default 0)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="directory for written files")
    common.add_argument("--format", choices=("off", "obj"), default=argparse.SUPPRESS,
                        help="output mesh format (default: from the file extension)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only print errors")

    p = argparse.ArgumentParser(prog="scsmark", parents=[common],
                                description="Blind saliency-guided SCS watermarking of triangle meshes.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("embed", parents=[common], help="embed a watermark")
    s.add_argument("mesh_in")
    s.add_argument("key", help="key file (key=value lines)")
    s.add_argument("watermark", help="file holding one line of 0/1 characters")
    s.add_argument("mesh_out")
    s.add_argument("--strict", action="store_true", help="fail if there are fewer carriers than bits")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("extract", parents=[common], help="extract a watermark blindly")
    s.add_argument("mesh_in")
    s.add_argument("key")
    s.add_argument("m", type=_positive_int, help="watermark length in bits")
    s.add_argument("--watermark", help="original watermark, to report the correlation")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("attack", parents=[common], help="apply one attack",
                       epilog=usage_kinds(), formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("mesh_in")
    s.add_argument("spec", help="attack spec, e.g. noise:0.005 or subdiv:loop:1")
    s.add_argument("mesh_out")
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("evaluate", parents=[common], help="distortion metrics between two meshes")
    s.add_argument("mesh_a")
    s.add_argument("mesh_b")
    s.add_argument("--samples", type=_positive_int, help="surface samples per direction")
    s.add_argument("--radius", type=float, help="MSDM window radius (model units)")
    s.add_argument("--key", help="key file; with --watermark also reports the correlation")
    s.add_argument("--watermark")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("bench", parents=[common], help="run a benchmark plan")
    s.add_argument("plan")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = hasattr(args, "seed")
    for name, default in (("seed", 0), ("out_dir", None), ("format", None), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.command == "attack":
        try:
            AttackSpec.parse(args.spec)
        except AttackSpecError as e:
            parser.error(str(e))
    try:
        return args.func(args)
    except (MeshError, WatermarkError, PlanError, AttackSpecError, metrics.MetricError,
            OSError, ValueError) as e:
        print(f"scsmark {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
