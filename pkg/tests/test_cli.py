import subprocess
import sys

import pytest

from hardsfm.cli import load_instance, main


@pytest.fixture(scope="module")
def instance(tmp_path_factory):
    out = tmp_path_factory.mktemp("inst") / "instance"
    assert main(["gen", "--n", "60", "--g", "4", "--seed", "7", "--out", str(out)]) == 0
    return out


def test_gen_files(instance):
    names = sorted(p.name for p in instance.iterdir())
    assert names == ["m_even.txt", "m_even_prime.txt", "m_odd.txt", "params.txt", "partition.txt"]
    assert (instance / "params.txt").read_text().startswith("n=60 r=3 g=4 c=1 mode=desk")
    p, P, pair = load_instance(instance)
    assert p.N == 180 and pair.C == 65 and P.seed is not None


def test_gen_deterministic(instance, tmp_path):
    again = tmp_path / "again"
    main(["gen", "--n", "60", "--g", "4", "--seed", "7", "--out", str(again)])
    for f in instance.iterdir():
        assert (again / f.name).read_bytes() == f.read_bytes()


def test_verify_all(instance, tmp_path, capsys):
    out = tmp_path / "v.csv"
    assert main(["verify", str(instance), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "suite,status,sampled,checked,detail"
    assert all(",pass," in row for row in rows[1:])
    assert "failed=0" in capsys.readouterr().out


def test_verify_subset(instance, capsys):
    assert main(["verify", str(instance), "--suite", "ranks,edmonds"]) == 0
    text = capsys.readouterr().out
    assert "edmonds[even_prime],pass" in text and "submodularity" not in text


def test_verify_detects_corruption(instance, tmp_path, capsys):
    broken = tmp_path / "broken"
    broken.mkdir()
    for f in instance.iterdir():
        (broken / f.name).write_bytes(f.read_bytes())
    path = broken / "m_even.txt"
    path.write_text(path.read_text().replace("\n120 55\n", "\n120 54\n"))
    assert main(["verify", str(broken), "--suite", "ranks,edmonds"]) == 1
    assert ",fail," in capsys.readouterr().out


def test_verify_errors(instance, tmp_path):
    assert main(["verify", str(tmp_path / "missing")]) == 3
    assert main(["verify", str(instance), "--suite", "nope"]) == 2


def test_gen_paper_mode_infeasible(tmp_path, capsys):
    assert main(["gen", "--n", "60", "--mode", "paper", "--out", str(tmp_path / "x")]) == 2
    assert "5gr <= n" in capsys.readouterr().err


def test_intersect(tmp_path, capsys):
    out = tmp_path / "i.txt"
    assert main(["intersect", "--illustration", "--out", str(out)]) == 0
    assert "size_even=65 size_even_prime=63 gap=2 C=65" in capsys.readouterr().out
    lines = out.read_text().splitlines()
    assert lines[0] == "even size=65" and len(lines[1].split()) == 65
    assert lines[2] == "even_prime size=63" and len(lines[3].split()) == 63


def test_solve(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["solve", "--trials", "6", "--seed", "2", "--out", str(out)]) == 0
    assert "correct=6/6" in capsys.readouterr().out
    rows = out.read_text().splitlines()
    assert rows[0] == "instance_seed,variant,min_value,rounds,queries,correct"
    assert [r.split(",")[1] for r in rows[1:4]] == ["F", "FHAT", "FHATPRIME"]


def test_game_small(tmp_path, capsys):
    out = tmp_path / "g"
    args = ["game", "--n", "1000000", "--r", "5", "--trials", "3", "--queries-per-round", "50",
            "--out", str(out)]
    assert main(args) == 0
    assert "failure_rate=0.0000" in capsys.readouterr().out
    assert sorted(p.name for p in out.iterdir()) == ["game.csv", "game.json", "summary.txt"]
    assert (out / "game.csv").read_text().splitlines()[0] == \
        "trial,round,query_id,kind,size,answer_f,answer_fhat,balanced"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hardsfm", "intersect", "--illustration"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "gap=2" in res.stdout


def test_no_output_file_without_out(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["intersect", "--illustration"]) == 0
    assert main(["solve", "--trials", "1"]) == 0
    assert list(tmp_path.iterdir()) == []


def test_gen_default_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["gen", "--n", "60", "--g", "4"]) == 0
    assert (tmp_path / "instance" / "params.txt").stat().st_mode & 0o044
