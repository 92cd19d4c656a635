import json
import math

import numpy as np
import pytest

from cutnitsche import cli
from cutnitsche.cli import (LevelError, RunConfig, default_offsets, main, run_conditioning_sweep, run_convergence,
                            run_level, sweep_levelset, sweep_to_csv)
from cutnitsche.error_analysis import ConvergenceTable


@pytest.mark.parametrize("kw", [dict(case="ellipse"), dict(variant="symmetric"), dict(k=3), dict(mu1=0.0),
                                dict(mu2=-1.0), dict(gamma_g=-0.1), dict(n0=0), dict(levels=0),
                                dict(solver="cg"), dict(fmt="xml")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        RunConfig(**kw)


def test_make_case_uses_r0():
    cfg = RunConfig(case="radial", r0=0.4, mu2=10.0)
    case = cfg.make_case()
    assert case.levelset.radius == 0.4 and case.data.mu2 == 10.0
    patch = RunConfig(case="linear-patch", r0=0.61).make_case()
    assert patch.levelset.point[0] == pytest.approx(0.61)
    assert RunConfig(variant="penalty-free").uses_ghost
    assert not RunConfig().uses_ghost
    assert RunConfig(ghost_in_penalized=True).uses_ghost


@pytest.mark.parametrize("variant", ["penalized", "penalty-free"])
def test_linear_patch_run(variant):
    t = run_convergence(RunConfig(case="linear-patch", variant=variant, n0=4, levels=2))
    assert len(t.rows) == 2
    for name in ("err_l2", "err_energy", "err_h1_1", "err_h1_2"):
        assert np.all(t.column(name) <= 1e-9)
    assert np.all(np.isnan(t.column("eoc_l2"))) and np.all(np.isnan(t.column("eoc_energy")))
    assert t.rows[1].h == pytest.approx(t.rows[0].h / 2)


def test_short_radial_run_converges():
    t = run_convergence(RunConfig(case="radial", mu2=10.0, n0=4, levels=3, condition=True))
    assert np.all(np.diff(t.column("err_l2")) < 0)
    assert t.rows[-1].eoc_l2 > 1.5
    assert np.all(np.isfinite(t.column("cond")))


def test_main_writes_csv_and_json(tmp_path, capsys):
    args = ["--case", "linear-patch", "--n0", "3", "--levels", "2"]
    csv_path, json_path = tmp_path / "t.csv", tmp_path / "t.json"
    assert main(args + ["--out", str(csv_path)]) == 0
    assert main(args + ["--format", "json", "--out", str(json_path)]) == 0
    doc = json.loads(json_path.read_text())
    lines = csv_path.read_text().splitlines()
    assert lines[0].split(",") == doc["columns"]
    for line, row in zip(lines[1:], doc["rows"]):
        for name, text in zip(doc["columns"], line.split(",")):
            if text == "nan":
                assert row[name] is None
            else:
                assert float(text) == pytest.approx(row[name], rel=1e-12)
    assert main(args) == 0
    assert capsys.readouterr().out.startswith("level,h,ndof")


def test_csv_byte_reproducible(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert main(["--case", "radial", "--mu2", "10", "--n0", "4", "--levels", "2", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    back = ConvergenceTable.from_json(json.dumps({"columns": [], "rows": []}))
    assert back.rows == []


def test_main_rejects_bad_values(capsys):
    assert main(["--mu1", "-1"]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["--variant", "symmetric"])


def test_level_errors_are_annotated(monkeypatch):
    def broken(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli, "solve", broken)
    cfg = RunConfig(case="linear-patch", n0=2, levels=2)
    with pytest.raises(LevelError) as info:
        run_level(cfg, 1)
    assert info.value.level == 1 and "boom" in str(info.value)
    assert main(["--case", "linear-patch", "--n0", "2", "--levels", "1"]) == 1


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("CUTNITSCHE_THREADS", "1")
    assert cli._workers(5) == 1
    monkeypatch.delenv("CUTNITSCHE_THREADS")
    assert 1 <= cli._workers(3) <= 3


def test_sweep_levelset_distance():
    h = 0.25
    for off in (1e-1, 1e-4, 1e-8):
        ls = sweep_levelset(off, h, 0.5)
        assert ls(np.array([cli.SWEEP_VERTEX]))[0] == pytest.approx(-off * h, rel=1e-6, abs=1e-15)


def test_sweep_identical_offsets_give_identical_kappa():
    cfg = RunConfig(variant="penalty-free", n0=4)
    rows = run_conditioning_sweep(cfg, [1e-2] * 3)
    k = [r.kappa for r in rows]
    assert k[0] > 1 and np.allclose(k, k[0], rtol=1e-3)
    text = sweep_to_csv(rows)
    assert text.splitlines()[0] == "offset,kappa,kappa_no_ghost"
    assert text.splitlines()[1].endswith(",nan")


def test_sweep_infinite_kappa_rows():
    rows = [cli.SweepRow(1e-3, 10.0, math.inf)]
    assert sweep_to_csv(rows).splitlines()[1].endswith(",inf")


def test_cli_sweep(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["--cond-sweep", "--variant", "penalty-free", "--n0", "4", "--offsets", "2", "--no-ghost",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert all(math.isfinite(float(v)) or v == "inf" for v in lines[1].split(","))
    js = tmp_path / "sweep.json"
    assert main(["--cond-sweep", "--n0", "4", "--offsets", "2", "--format", "json", "--out", str(js)]) == 0
    assert len(json.loads(js.read_text())) == 2


def test_default_offsets():
    off = default_offsets()
    assert len(off) == 16 and off[0] == pytest.approx(1e-1) and off[-1] == pytest.approx(1e-8)
