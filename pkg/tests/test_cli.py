import os
from pathlib import Path

import pytest

from twostage import cli
from twostage.design import QuadratureError

BASE = """
[DEFAULT]
x1 = 2
a = 0.25
b = 4
theta = 1
sigma = 0.5
seed = 77

[ll]
model = logistic_location
n = 60, 80
n1 = 20
reps = 300
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_table_outputs(tmp_path):
    cfg = write(tmp_path, BASE)
    out = tmp_path / "out"
    assert run("table", "--config", cfg, "--out", out, "--dump-raw") == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == [
        "ll_n1-20.manifest.txt",
        "ll_n1-20_n-60.csv",
        "ll_n1-20_n-60_raw.csv",
        "ll_n1-20_n-80.csv",
        "ll_n1-20_n-80_raw.csv",
    ]
    lines = (out / "ll_n1-20_n-60.csv").read_text().splitlines()
    assert lines[0].split(",") == cli.TABLE_HEADER
    assert len(lines) == 1 + 4 * 4
    row = lines[1].split(",")
    assert row[0] == "expected_fisher" and row[1] == "0.005" and row[5] == "20" and row[6] == "300"
    assert row[9] == cli.__version__
    assert len((out / "ll_n1-20_n-60_raw.csv").read_text().splitlines()) == 301


def test_thread_count_gives_identical_bytes(tmp_path):
    cfg = write(tmp_path, BASE)
    assert run("table", "--config", cfg, "--out", tmp_path / "t1", "--threads", 1, "--reps", 600) == 0
    assert run("table", "--config", cfg, "--out", tmp_path / "t8", "--threads", 8, "--reps", 600) == 0
    for p in (tmp_path / "t1").iterdir():
        assert p.read_bytes() == (tmp_path / "t8" / p.name).read_bytes()


def test_overrides_change_hash(tmp_path):
    cfg = write(tmp_path, BASE)
    specs = cli.parse_config(BASE, "table")
    assert run("table", "--config", cfg, "--out", tmp_path / "o", "--seed", 5) == 0
    row = (tmp_path / "o" / "ll_n1-20_n-60.csv").read_text().splitlines()[1].split(",")
    assert row[7] == "5" and row[8] != specs[0].spec_hash


def test_figure_and_n1star(tmp_path, capsys):
    text = BASE.replace("n1 = 20", "n1 = optimal\nreplicates = 2")
    cfg = write(tmp_path, text)
    assert run("figure", "--config", cfg, "--out", tmp_path / "f") == 0
    lines = (tmp_path / "f" / "ll_figure.csv").read_text().splitlines()
    assert lines[0].split(",") == cli.figure_header()
    assert [ln.split(",")[0] for ln in lines[1:]] == ["60", "80"]
    capsys.readouterr()
    assert run("n1star", "--config", cfg) == 0
    out = capsys.readouterr().out
    assert "n=60 n1_star=" in out and "\n59," in out


def test_diagnose_flags_small_runs(tmp_path):
    text = BASE.replace("n = 60, 80", "n2 = 50, 500")
    cfg = write(tmp_path, text)
    assert run("diagnose", "--config", cfg, "--out", tmp_path / "d", "--reps", 50) == 0
    report = (tmp_path / "d" / "ll_diagnostics.txt").read_text()
    assert "insufficient replications" in report
    assert "KS J^D/(n U^-2)" in report


@pytest.mark.parametrize(
    "edit, message",
    [
        (("n1 = 20", "n1 = 60"), "n1 must be < n"),
        (("x1 = 2", "x1 = 9"), "x1 must lie in [a, b]"),
        (("model = logistic_location", "model = probit"), "unknown model"),
        (("reps = 300", "reps = 0"), "reps must be >= 1"),
        (("n = 60, 80", "n = sixty"), "n:"),
        (("sigma = 0.5", "sigma = -1"), "sigma"),
    ],
)
def test_config_errors_exit_1(tmp_path, capsys, edit, message):
    cfg = write(tmp_path, BASE.replace(*edit))
    assert run("table", "--config", cfg, "--out", tmp_path / "o") == 1
    assert message in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_file_and_section(tmp_path):
    assert run("table", "--config", tmp_path / "nope.ini") == 1
    cfg = write(tmp_path, BASE)
    assert run("table", "--config", cfg, "--section", "zz") == 1


def test_numerical_failure_exit_2_leaves_no_files(tmp_path, monkeypatch):
    cfg = write(tmp_path, BASE)
    calls = []

    def boom(spec, threads=None, dump_raw=False):
        calls.append(spec.name)
        raise QuadratureError("unresolved")

    monkeypatch.setattr(cli, "run_table", boom)
    assert run("table", "--config", cfg, "--out", tmp_path / "o") == 2
    assert calls == ["ll"]
    assert not (tmp_path / "o").exists() or not any((tmp_path / "o").iterdir())


def test_atomic_write_cleans_up_on_error(tmp_path, monkeypatch):
    real_replace = os.replace

    def failing(src, dst):
        if str(dst).endswith("b.csv"):
            raise OSError("disk full")
        real_replace(src, dst)

    monkeypatch.setattr(cli.os, "replace", failing)
    with pytest.raises(OSError):
        cli.write_outputs(tmp_path, {"a.csv": "x\n", "b.csv": "y\n"})
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".tmp-")]


def test_number_format():
    assert cli.fmt(0.1234567891) == "0.123457"
    assert cli.fmt(12) == "12"
    assert cli.fmt(float("nan")) == "nan"
    assert cli.fmt(1e-9) == "1e-09"
