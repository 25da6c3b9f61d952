import json

import pytest

from growfrag import cli
from growfrag.eigensolver import ConvergenceError

SMALL = "N=257,L=20,x1=1e-6"


def test_dry_run_plan(capsys):
    assert cli.main(["certify-bounds", "--config", "selfsimilar-gamma1", "--dry-run"]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert [t["task"] for t in plan["tasks"]] == ["validate", "solve", "certify-bounds"]
    assert plan["tasks"][2]["after"] == ["solve"]


def test_dry_run_all_orders_every_task(capsys):
    assert cli.main(["all", "--config", "constant-B", "--dry-run", "--mesh", SMALL]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert [t["task"] for t in plan["tasks"]] == list(cli.TASKS)
    assert plan["mesh"] == {"L": 20.0, "N": 257, "x1": 1e-6}


@pytest.mark.parametrize("args", [["solve", "--config", "no-such-scenario"],
                                  ["solve", "--config", "constant-B", "--mesh", "N=10"],
                                  ["solve", "--config", "constant-B", "--mesh", "Q=3"],
                                  ["solve", "--config", "constant-B", "--mesh", "L=1,x1=5"]])
def test_config_errors_exit_2(args, tmp_path):
    assert cli.main(args + ["--out", str(tmp_path)]) == 2


def test_config_file(tmp_path):
    cfg = tmp_path / "demo.cfg"
    cfg.write_text("name = demo\ngrowth.alpha = 1\nfrag.gamma = 1\nmesh.L = 20\nmesh.N = 257\n")
    assert cli.main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "demo_solve.json").read_text())
    assert abs(d["lambda_L"] - 1) < 5e-3
    assert (tmp_path / "demo_solve.csv").exists()


def test_bad_config_file_exit_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("growth.kind = wobbly\n")
    assert cli.main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_degenerate_stops_at_validation(tmp_path):
    assert cli.main(["solve", "--config", "degenerate", "--out", str(tmp_path)]) == 1
    s = json.loads((tmp_path / "degenerate_summary.json").read_text())
    assert s["tasks"]["validate"]["basic_hypotheses"] == "fails"
    assert "solve" not in s["tasks"]


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise ConvergenceError("forced")
    monkeypatch.setattr(cli, "_solve", boom)
    assert cli.main(["solve", "--config", "constant-B", "--mesh", SMALL, "--out", str(tmp_path)]) == 3
    s = json.loads((tmp_path / "constant-B_summary.json").read_text())
    assert "forced" in s["tasks"]["solve"]["error"]


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        # certificates need L / 4 beyond the reported A, hence L = 80
        assert cli.main(["certify-bounds", "--config", "selfsimilar-gamma1", "--mesh", "N=513,L=80,x1=1e-6",
                         "--out", str(out)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert not [n for n in names if n.endswith(".tmp")]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_laplace_task(tmp_path, capsys):
    assert cli.main(["laplace", "--config", "constant-B", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "laplace_exact: holds" in out
    d = json.loads((tmp_path / "constant-B_laplace.json").read_text())
    assert set(d) == {"exact", "sqrt", "quadratic"}
