import numpy as np
import pytest

from coarrange.cli import main
from coarrange.data import load_matrix
from coarrange.lsh import load_pool
from coarrange.metrics import Trajectory

SMALL = ["--n", "60", "--blocks", "3", "--interactions", "3000", "--inblock", "0.8",
         "--dim", "8", "--batch", "16", "--neg", "3", "--budget", "2e4",
         "--eval-every", "5000", "--no-precision"]


def run(*argv):
    return main([str(a) for a in argv])


def test_generate_round_trip(tmp_path):
    assert run("generate", "--n", 40, "--blocks", 4, "--interactions", 1000,
               "--out", tmp_path / "m.txt", "--labels", tmp_path / "l.txt") == 0
    kappa = load_matrix(tmp_path / "m.txt")
    assert kappa.shape == (40, 40)
    assert kappa.total == pytest.approx(1000)
    assert len((tmp_path / "l.txt").read_text().split()) == 40


def test_train_writes_one_csv_per_method_and_seed(tmp_path, capsys):
    out = tmp_path / "runs"
    assert run("train", *SMALL, "--method", "ind=ind@0", "--method", "coo=coo@0",
               "--seeds", "0,1", "--out", out) == 0
    files = sorted(p.name for p in out.glob("*.csv"))
    assert files == ["coo_seed0.csv", "coo_seed1.csv", "ind_seed0.csv", "ind_seed1.csv"]
    assert (out / "config.ini").is_file()
    a = Trajectory.read_csv(out / "ind_seed0.csv")
    b = Trajectory.read_csv(out / "ind_seed1.csv")
    assert a.meta["config_hash"] == b.meta["config_hash"]
    assert (out / "ind_seed0.csv").read_text() != (out / "ind_seed1.csv").read_text()
    assert [s.update_count for s in a.samples][-1] >= 20_000


def test_train_is_byte_identical_on_rerun(tmp_path):
    for d in ("a", "b"):
        assert run("train", *SMALL, "--schedule", "coo@0, ind@10000", "--seeds", 3,
                   "--out", tmp_path / d) == 0
    assert ((tmp_path / "a" / "custom_seed3.csv").read_bytes()
            == (tmp_path / "b" / "custom_seed3.csv").read_bytes())


def test_train_from_config_file(tmp_path):
    (tmp_path / "exp.ini").write_text(
        "[data]\nn = 40\nB = 4\nr = 2000\np = 0.8\n"
        "[train]\ndim = 4\nbatch = 8\nneg = 2\nbudget = 5000\neval_every = 2500\n"
        "[eval]\nprecision = false\n[methods]\nmix = coo@0, ind@2500\n"
        f"[output]\ndir = {tmp_path / 'out'}\nseeds = 5\n")
    assert run("train", "--config", tmp_path / "exp.ini") == 0
    assert (tmp_path / "out" / "mix_seed5.csv").is_file()


def test_compare_identical_is_zero(tmp_path, capsys):
    out = tmp_path / "runs"
    run("train", *SMALL, "--method", "ind=ind@0", "--out", out)
    capsys.readouterr()
    assert run("compare", out / "ind_seed0.csv", out / "ind_seed0.csv",
               "--out", tmp_path / "t.csv") == 0
    table = (tmp_path / "t.csv").read_text().splitlines()
    assert table[0] == "method,gain@0.75,gain@0.95,gain@0.99"
    assert table[1].split(",")[1:] == ["0.00", "0.00", "0.00"]


def test_select_writes_both_modes(tmp_path):
    out = tmp_path / "sel"
    assert run("select", *SMALL, "--T", 3, "--out", out, "--save-selection") == 0
    for mode in ("independent", "coordinated"):
        traj = Trajectory.read_csv(out / f"select-{mode}_T3_seed0.csv")
        assert traj.meta["selection_mode"] == mode
        assert (out / f"select-{mode}_T3_seed0.rows.txt").is_file()


def test_lsh_pool_jaccard(tmp_path):
    run("generate", "--n", 30, "--blocks", 3, "--interactions", 600, "--out", tmp_path / "m.txt")
    assert run("lsh-pool", "--kind", "jaccard", "--axis", "focus", "--size", 4,
               "--matrix", tmp_path / "m.txt", "--out", tmp_path / "p.npz") == 0
    pool = load_pool(tmp_path / "p.npz")
    assert len(pool) == 4


def test_verify_single_suite(capsys):
    assert run("verify", "gradients") == 0
    assert "[gradients] PASS" in capsys.readouterr().out


def test_verify_failure_exits_1(monkeypatch, capsys):
    from coarrange import cli
    from coarrange.verify import VerifyReport

    def failing(name, **kw):
        r = VerifyReport(name)
        r.add("x", 0.0, "> 0", False)
        return r
    monkeypatch.setattr(cli, "run_suite", failing)
    assert run("verify", "gradients") == 1


@pytest.mark.parametrize("argv", [
    ["verify", "no-such-suite"],
    ["train", "--matrix", "/nonexistent/m.txt", "--budget", "10"],
    ["compare", "/nonexistent/a.csv", "/nonexistent/b.csv"],
    ["lsh-pool", "--kind", "jaccard", "--axis", "focus", "--out", "/tmp/x.npz"],
])
def test_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "error:" in capsys.readouterr().err


def test_bad_flag_value_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--budget", "1.5"])
    assert exc.value.code == 2
