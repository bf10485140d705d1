import csv
import io
import json
import subprocess
import sys

import pytest

from conftest import fig2
from ppaplan.cli import main
from ppaplan.topology import CORRELATED, INDEPENDENT, load_topology, save_topology, validate


@pytest.fixture
def files(tmp_path):
    corr = tmp_path / "fig2c.json"
    ind = tmp_path / "fig2i.json"
    save_topology(fig2(CORRELATED), corr)
    save_topology(fig2(INDEPENDENT), ind)
    return tmp_path, str(corr), str(ind)


def lines(capsys):
    return dict(line.split(" ", 1) for line in capsys.readouterr().out.strip().splitlines() if " " in line)


def test_gen_is_valid_and_deterministic(tmp_path, capsys):
    args = ["gen", "--ops", "5:10", "--par", "2:6", "--skew", "zipf:0.1", "--join", "0.5", "--kind", "mixed", "--seed", "7"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(args + ["-o", str(a)]) == 0
    assert main(args + ["-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert validate(load_topology(a)) == []
    assert main(["validate", str(a)]) == 0


def test_gen_bad_join(capsys):
    assert main(["gen", "--join", "1.5"]) == 2


def test_bad_flags_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["plan"])
    assert exc.value.code == 2


def test_ppa_seed_overrides(tmp_path, monkeypatch):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    monkeypatch.setenv("PPA_SEED", "3")
    main(["gen", "--seed", "1", "-o", str(a)])
    monkeypatch.delenv("PPA_SEED")
    main(["gen", "--seed", "3", "-o", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_plan_dp_fig2(files, capsys):
    tmp, _, ind = files
    out = tmp / "p.json"
    assert main(["plan", "-a", "dp", "-r", "3", ind, "-o", str(out), "--oracle"]) == 0
    got = lines(capsys)
    assert float(got["objective"]) == pytest.approx(0.625)
    assert float(got["gap"]) == pytest.approx(0.0)
    assert "elapsed_ms" in got
    assert json.loads(out.read_text())["tasks"] == ["O1#1", "O2#0", "O3#0"]


def test_plan_zero_budget(files, capsys):
    _, _, ind = files
    assert main(["plan", "-a", "dp", "-r", "0", ind]) == 0
    assert float(lines(capsys)["objective"]) == 0


def test_plan_ratio_floors(files, capsys):
    _, _, ind = files
    assert main(["plan", "-a", "greedy", "--ratio", "0.5", ind]) == 0
    assert lines(capsys)["budget"] == "2"


def test_plan_cap_exit_3(files):
    _, _, ind = files
    assert main(["plan", "-a", "dp", "-r", "3", "--cap", "1", ind]) == 3


def test_eval_fig2(files, capsys):
    _, corr, _ = files
    assert main(["eval", corr, "--fail", "O2#1"]) == 0
    got = lines(capsys)
    assert float(got["OF"]) == pytest.approx(0.6)
    assert float(got["IC"]) == pytest.approx(0.75)
    assert main(["eval", corr, "--fail", ""]) == 0
    got = lines(capsys)
    assert float(got["OF"]) == 1 and float(got["IC"]) == 1


def test_eval_plan_round_trip(files, capsys):
    tmp, corr, _ = files
    p = tmp / "all.json"
    main(["plan", "-a", "greedy", "-r", "5", corr, "-o", str(p)])
    capsys.readouterr()
    assert main(["eval", corr, "--plan", str(p)]) == 0
    assert float(lines(capsys)["OF"]) == 1
    assert main(["eval", corr, "--plan", str(p), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["of"] == 1


def test_digest_mismatch_exit_4(files):
    tmp, corr, ind = files
    p = tmp / "p.json"
    main(["plan", "-a", "dp", "-r", "3", ind, "-o", str(p)])
    assert main(["eval", corr, "--plan", str(p)]) == 4
    assert main(["simulate", corr, str(p)]) == 4


def test_experiment_rows_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["experiment", "--families", "skew", "--trials", "1", "--seed", "5", "--par", "4:6", "--ops", "3:5"]
    assert main(args + ["-o", str(a)]) == 0
    assert main(args + ["-o", str(b)]) == 0
    assert a.read_text() == b.read_text()
    rows = list(csv.DictReader(io.StringIO(a.read_text())))
    assert len(rows) == 20
    assert list(rows[0]) == ["config", "ratio", "algorithm", "mean_of", "stddev", "trials"]


def test_experiment_marks_dp_skipped(tmp_path):
    out = tmp_path / "x.csv"
    args = ["experiment", "--families", "join", "--ratios", "0.5", "--algorithms", "dp", "--trials", "1"]
    assert main(args + ["--cap", "1", "-o", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert rows and all(r["mean_of"] == "skipped" for r in rows)


def test_experiment_bad_ratio():
    assert main(["experiment", "--ratios", "1.5", "--trials", "1"]) == 2


def test_simulate_outputs(files):
    tmp, corr, _ = files
    p = tmp / "p.json"
    main(["plan", "-a", "sa", "-r", "3", corr, "-o", str(p)])
    trace, comp, summ = tmp / "t.csv", tmp / "c.csv", tmp / "s.json"
    args = ["simulate", corr, str(p), "--fail-time", "10000", "--batch-interval", "100", "--run-length", "40000"]
    assert main(args + ["--trace", str(trace), "--completeness", str(comp), "--summary", str(summ)]) == 0
    assert trace.read_text().startswith("time_ms,event,task,detail\n")
    assert comp.read_text().startswith("batch_id,completeness\n")
    s = json.loads(summ.read_text())
    assert s["steady_completeness"] == pytest.approx(s["predicted_of"], abs=0.03)


def test_simulate_ppa0_vs_ppa1(files):
    tmp, corr, _ = files
    p0, p1 = tmp / "p0.json", tmp / "p1.json"
    main(["plan", "-a", "greedy", "-r", "0", corr, "-o", str(p0)])
    main(["plan", "-a", "greedy", "-r", "5", corr, "-o", str(p1)])
    s0, s1 = tmp / "s0.json", tmp / "s1.json"
    assert main(["simulate", corr, str(p0), "--summary", str(s0)]) == 0
    assert main(["simulate", corr, str(p1), "--summary", str(s1)]) == 0
    passive = json.loads(s0.read_text())["passive_latency"]["mean"]
    active = json.loads(s1.read_text())["active_latency"]["mean"]
    assert passive > active


def test_simulate_run_shorter_than_failure(files):
    _, corr, _ = files
    assert main(["simulate", corr, "--run-length", "1000", "--fail-time", "5000"]) == 2


def test_module_entry_point(files):
    _, corr, _ = files
    out = subprocess.run(
        [sys.executable, "-m", "ppaplan", "eval", corr, "--fail", "O2#1"], capture_output=True, text=True, check=True
    )
    assert out.stdout.splitlines()[0] == "OF 0.6"
