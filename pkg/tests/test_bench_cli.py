import pytest

from scsmark import shapes
from scsmark.bench import AttackSpec, AttackSpecError, BenchPlan, PlanError, derive_seed, run_bench
from scsmark.cli import main
from scsmark.mesh import load_mesh, save_mesh
from scsmark.scs import WatermarkKey, random_watermark, write_watermark


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    save_mesh(shapes.deformed_sphere(2500, seed=41), d / "m.off")
    WatermarkKey(5).save(d / "key.txt")
    write_watermark(random_watermark(64, 2), d / "wm.txt")
    return d


# ---------------------------------------------------------------- attack specs


@pytest.mark.parametrize("text,kind,params,seed", [
    ("noise:0.005", "noise", (0.005,), None),
    ("noise:0.005:9", "noise", (0.005,), 9),
    ("smooth:30:0.1", "smooth", (30, 0.1), None),
    ("smooth:10", "smooth", (10, 0.1), None),
    ("quant:9", "quant", (9,), None),
    ("similarity:4", "similarity", (), 4),
    ("reorder:2", "reorder", (), 2),
    ("reorder", "reorder", (), None),
    ("subdiv:loop:1", "subdiv", ("loop", 1), None),
    ("crop:0.3:7", "crop", (0.3,), 7),
])
def test_attack_spec_parse(text, kind, params, seed):
    s = AttackSpec.parse(text)
    assert (s.kind, s.params, s.seed) == (kind, params, seed)


@pytest.mark.parametrize("text", ["blur:3", "noise", "noise:-1", "quant:0", "subdiv:catmull:1", "crop:1.5", "smooth:x"])
def test_attack_spec_rejects(text):
    with pytest.raises(AttackSpecError):
        AttackSpec.parse(text)


def test_attack_levels():
    assert AttackSpec.parse("noise:0.005").level == pytest.approx(0.5)
    assert AttackSpec.parse("crop:0.3").level == pytest.approx(30.0)
    assert AttackSpec.parse("subdiv:sqrt3:2").group == "subdiv-sqrt3"


def test_derive_seed_stable():
    assert derive_seed(1, "noise:0.001", 0) == derive_seed(1, "noise:0.001", 0)
    assert derive_seed(1, "noise:0.001", 0) != derive_seed(1, "noise:0.001", 1)


# ---------------------------------------------------------------- CLI


def test_cli_embed_extract_round_trip(workdir, capsys):
    d = workdir
    assert main(["--quiet", "embed", str(d / "m.off"), str(d / "key.txt"), str(d / "wm.txt"), str(d / "wm.off")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("q_step,") and len(out) == 2
    assert main(["--quiet", "extract", str(d / "wm.off"), str(d / "key.txt"), "64", "--watermark", str(d / "wm.txt")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == (d / "wm.txt").read_text().strip()
    assert out[2].endswith(",1.0")


def test_cli_missing_key_names_path(workdir, capsys):
    rc = main(["embed", str(workdir / "m.off"), str(workdir / "nokey.txt"), str(workdir / "wm.txt"), str(workdir / "x.off")])
    assert rc != 0
    assert "nokey.txt" in capsys.readouterr().err


def test_cli_bad_watermark(workdir, capsys):
    (workdir / "bad.txt").write_text("01x1\n")
    rc = main(["embed", str(workdir / "m.off"), str(workdir / "key.txt"), str(workdir / "bad.txt"), str(workdir / "x.off")])
    assert rc != 0 and "0" in capsys.readouterr().err


def test_cli_extract_zero_bits_is_usage_error(workdir):
    with pytest.raises(SystemExit) as e:
        main(["extract", str(workdir / "m.off"), str(workdir / "key.txt"), "0"])
    assert e.value.code == 2


def test_cli_attack_deterministic(workdir):
    d = workdir
    for name in ("a1.off", "a2.off"):
        assert main(["--quiet", "--seed", "3", "attack", str(d / "m.off"), "noise:0.001", str(d / name)]) == 0
    assert (d / "a1.off").read_bytes() == (d / "a2.off").read_bytes()
    assert (d / "a1.off").read_bytes() != (d / "m.off").read_bytes()


def test_cli_attack_subdivision_quadruples_faces(workdir):
    d = workdir
    assert main(["--quiet", "attack", str(d / "m.off"), "subdiv:midpoint:1", str(d / "s.obj")]) == 0
    assert load_mesh(d / "s.obj").n_faces == 4 * load_mesh(d / "m.off").n_faces


def test_cli_attack_unknown_spec_lists_kinds(workdir, capsys):
    with pytest.raises(SystemExit) as e:
        main(["attack", str(workdir / "m.off"), "melt:3", str(workdir / "x.off")])
    assert e.value.code == 2
    err = capsys.readouterr().err
    assert "noise" in err and "crop" in err


def test_cli_out_dir_and_format(workdir):
    d = workdir
    assert main(["--quiet", "--out-dir", str(d / "outs"), "--format", "obj",
                 "attack", str(d / "m.off"), "reorder:1", "r.mesh"]) == 0
    assert (d / "outs" / "r.mesh").read_text().startswith("v ")


def test_cli_evaluate(workdir, capsys):
    d = workdir
    assert main(["--quiet", "evaluate", str(d / "m.off"), str(d / "m.off"), "--samples", "5000"]) == 0
    head, row = capsys.readouterr().out.splitlines()
    vals = dict(zip(head.split(","), row.split(",")))
    assert float(vals["mrms"]) <= 1e-9 and float(vals["msdm"]) == 0.0


# ---------------------------------------------------------------- bench


PLAN = """# tiny plan
seed = 1
out_dir = out
repetitions = 2
watermark_bits = 32
[key]
key1 = 3
[meshes]
m = m.off
[attacks]
noise:0.0005
noise:0.001
noise:0.003
"""


def test_plan_parse_and_grid(workdir):
    (workdir / "plan.txt").write_text(PLAN)
    plan = BenchPlan.load(workdir / "plan.txt")
    assert plan.repetitions == 2 and len(plan.attacks) == 3 and len(plan.watermark) == 32
    res = run_bench(plan)
    rows = [r for r in res.rows if r["attack"] != "none"]
    assert len(rows) == 6
    assert all(r["status"] == "ok" for r in res.rows)
    levels, meshes, _ = res.pivot("noise")
    assert len(levels) == 3 and meshes == ["m"]


def test_plan_errors(tmp_path):
    with pytest.raises(PlanError):
        BenchPlan.parse("[key]\nkey1=1\n", tmp_path)  # no meshes
    with pytest.raises(PlanError):
        BenchPlan.parse("[meshes]\na = builtin:blob\n", tmp_path)  # no key
    with pytest.raises(PlanError):
        BenchPlan.parse("watermark_bits = 8\n[key]\nkey1=1\n[meshes]\na = x.off\n", tmp_path)
    with pytest.raises(PlanError):
        BenchPlan.parse("colour = 3\n[key]\nkey1=1\n[meshes]\na = x.off\n", tmp_path)
    with pytest.raises(PlanError):
        BenchPlan.parse("[key]\nkey1=1\n[meshes]\na = x.off\n[attacks]\nmelt:1\n", tmp_path)


def test_bench_files_reproducible_and_errors_recorded(workdir):
    d = workdir
    plan = PLAN.replace("m = m.off", "m = m.off\nghost = missing.off")
    (d / "plan2.txt").write_text(plan)
    assert main(["--quiet", "bench", str(d / "plan2.txt")]) == 1  # the missing mesh errors
    first = (d / "out" / "results.csv").read_bytes()
    main(["--quiet", "bench", str(d / "plan2.txt")])
    assert (d / "out" / "results.csv").read_bytes() == first
    text = first.decode()
    assert "ghost,none" in text and "error" in text
    assert (d / "out" / "pivot_noise.csv").exists() and (d / "out" / "corr_noise.dat").exists()
    dat = (d / "out" / "corr_noise.dat").read_text().splitlines()
    assert dat[1] == "# level ghost m" and len(dat) == 5


def test_bench_never_writes_outside_out_dir(workdir, tmp_path):
    (workdir / "plan3.txt").write_text(PLAN.replace("out_dir = out", f"out_dir = {tmp_path / 'o'}"))
    before = set(p.name for p in workdir.iterdir())
    assert main(["--quiet", "bench", str(workdir / "plan3.txt")]) == 0
    assert set(p.name for p in workdir.iterdir()) == before
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["corr_noise.dat", "pivot_noise.csv", "results.csv"]
