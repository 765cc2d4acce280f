import csv

import pytest

from csplab.cli import main
from csplab.core import Instance
from csplab.probe import GRID_HEADER, SUMMARY_HEADER


def data_lines(text):
    return [ln for ln in text.splitlines() if ln and not ln.startswith("#")]


def test_gen_then_solve_and_analyze(tmp_path, capsys):
    inst = tmp_path / "a.cspinst"
    assert main(["gen", "--model", "ed3", "--n", "40", "--c", "1.5", "--seed", "3", "--out", str(inst)]) == 0
    loaded = Instance.load(str(inst))
    assert loaded.n == 40
    assert main(["solve", str(inst)]) == 0
    out = capsys.readouterr().out
    assert "SAT" in out.splitlines() and "assign v0=" in out
    assert main(["solve", "--brute", str(inst)]) == 2  # 3^40 assignments exceed the enumeration limit
    capsys.readouterr()
    dot = tmp_path / "a.dot"
    assert main(["analyze", str(inst), "--dot", str(dot)]) == 0
    assert "size,edges,kind" in capsys.readouterr().out
    assert dot.read_text().startswith("graph")


def test_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a" / "x.cspinst", tmp_path / "b" / "x.cspinst"
    args = ["gen", "--model", "dkt:2,3,1", "--n", "60", "--c", "20", "--seed", "9"]
    main(args + ["--out", str(a)])
    main(args + ["--out", str(b)])
    strip = lambda p: [ln for ln in p.read_text().splitlines() if not ln.startswith("# out=")]
    assert strip(a) == strip(b)


def test_seed_from_environment(tmp_path, monkeypatch):
    args = ["gen", "--model", "ed3", "--n", "50", "--c", "2"]
    monkeypatch.setenv("CSPLAB_SEED", "5")
    main(args + ["--out", str(tmp_path / "env")])
    main(args + ["--seed", "5", "--out", str(tmp_path / "flag")])
    assert Instance.load(str(tmp_path / "env")) == Instance.load(str(tmp_path / "flag"))


def test_unsat_instance(tmp_path, capsys):
    path = tmp_path / "tri.cspinst"
    path.write_text("CSPINST 1\nd=2 k=2 n=3 flavor=plain\nncons=1\ncons 0 arity=2 nres=2 : 1,1;2,2\n"
                    "nedges=3\nedge 0 0 1\nedge 0 1 2\nedge 0 2 0\n")
    assert main(["solve", str(path)]) == 0
    assert "UNSAT" in capsys.readouterr().out


def test_audit_commands(tmp_path, capsys):
    assert main(["audit", "--model", "ed3"]) == 0
    assert "ALL-SATISFIABLE" in capsys.readouterr().out
    w = tmp_path / "w.cspinst"
    assert main(["audit", "--model", "coloring:2", "--witness", str(w)]) == 0
    assert "COUNTEREXAMPLE cycle" in capsys.readouterr().out
    assert Instance.load(str(w)).n % 2 == 1


def test_forcing_command(tmp_path, capsys):
    out = tmp_path / "f.csv"
    assert main(["forcing", "--model", "ed3", "--c", "2.0", "--n", "500", "--trials", "40",
                 "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "perron_root=1.33333333333" in text
    assert "1,1,1.33333,percolates,percolates,percolates," in text
    assert data_lines(out.read_text())[0] == "n,trial,root,delta,gamma,size"


def test_probe_writes_grid_and_summary(tmp_path, capsys):
    out, summ = tmp_path / "g.csv", tmp_path / "s.csv"
    rc = main(["probe", "--model", "dkt:2,3,1", "--n", "20,40", "--c", "3.0:5.0:0.25", "--scale", "ratio",
               "--trials", "20", "--out", str(out), "--summary", str(summ)])
    assert rc == 0
    rows = data_lines(out.read_text())
    assert rows[0] == GRID_HEADER and len(rows) == 1 + 2 * 9
    parsed = list(csv.reader(rows[1:]))
    assert parsed[0][0] == "dkt:2,3,1" and parsed[0][3] == "18"
    assert data_lines(summ.read_text())[0] == SUMMARY_HEADER
    assert "diagnostic:" in capsys.readouterr().out


def test_probe_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "p.ini"
    cfg.write_text("[model]\nmodel = coloring:3\n[grid]\nn = 30\nc = 0,2\ntrials = 5\n[run]\nseed = 4\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["probe", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["probe", "--config", str(cfg), "--trials", "6", "--out", str(b)]) == 0
    ra, rb = data_lines(a.read_text()), data_lines(b.read_text())
    assert ra[1].split(",")[4] == "5" and rb[1].split(",")[4] == "6"
    assert ra[1].split(",")[5] == "5"  # c=0 column is always satisfiable


@pytest.mark.parametrize(
    "text",
    ["[model]\nmodle = ed3\n", "[extra]\nmodel = ed3\n", "[grid]\ntrials = many\n", "not an ini file"],
)
def test_bad_config_exits_1(tmp_path, text, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(text)
    assert main(["probe", "--config", str(cfg), "--model", "ed3", "--n", "10", "--c", "1"]) == 1
    assert "error:" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["gen", "--model", "bogus", "--n", "10", "--c", "1"],
        ["gen", "--model", "ed3", "--n", "10"],
        ["gen", "--model", "ed3", "--n", "10", "--c", "-1"],
        ["solve", "/nonexistent.cspinst"],
        ["probe", "--model", "ed3", "--n", "10", "--c", "2:1:0.1"],
        ["nosuchcommand"],
    ],
)
def test_input_errors_exit_1(argv, capsys):
    assert main(argv) == 1


def test_budget_exit_code(tmp_path, capsys):
    inst = tmp_path / "h.cspinst"
    main(["gen", "--model", "dkt:2,3,1", "--n", "150", "--c", "25.8", "--seed", "3", "--out", str(inst)])
    assert main(["solve", str(inst), "--budget", "3"]) == 2
    assert "BUDGET" in capsys.readouterr().out


def test_repro_quick_is_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["repro", "homcheck-lemma2", "--quick", "--seed", "1", "--out-dir", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "homcheck-lemma2.csv").read_bytes()
    assert a == (tmp_path / "b" / "homcheck-lemma2.csv").read_bytes()
    assert "check zero failures: PASS" in capsys.readouterr().out
