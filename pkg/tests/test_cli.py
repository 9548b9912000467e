import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from dqm.cli import main

SCHEMA = json.loads((Path(__file__).parent / "data" / "report_schema.json").read_text())


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, *argv):
    code, out = run(capsys, *argv)
    return code, json.loads(out)


def assert_schema(rep):
    for key in SCHEMA["required"]:
        assert key in rep, key
    assert rep["schema_version"] == SCHEMA["schema_version"]
    assert rep["checks"] or "error" in rep
    for c in rep["checks"]:
        assert sorted(c) == sorted(SCHEMA["check_fields"])
        assert c["pass"] == (c["residual"] <= c["tolerance"])
        assert isinstance(c["paper_ref"], str) and c["paper_ref"]
    if "error" in rep:
        assert sorted(rep["error"]) == sorted(SCHEMA["error_fields"])
    assert rep["pass"] == ("error" not in rep and all(c["pass"] for c in rep["checks"]))


def test_families_listing(capsys):
    code, out = run(capsys, "families")
    assert code == 0
    ids = [line.split()[0] for line in out.strip().splitlines()]
    assert sorted(ids) == sorted(["H", "L", "J", "MP", "W", "AW", "M", "R", "qR"])


def test_families_json(capsys):
    code, rep = run_json(capsys, "families", "--json")
    assert code == 0
    assert len(rep["families"]) == 9
    assert all(r["constraints"] for r in rep["families"])


def test_verify_all_qracah(capsys):
    code, rep = run_json(capsys, "verify", "--suite", "all", "--family", "qR", "--N", "8", "--seed", "7")
    assert code == 0
    assert_schema(rep)
    assert rep["pass"] and rep["seed"] == 7
    assert len(rep["checks"]) > 15


@pytest.mark.parametrize("suite", ["spectrum", "orthogonality", "duality", "shape", "difference",
                                   "closure", "ladder", "heisenberg", "unified"])
def test_each_suite_schema(capsys, suite):
    code, rep = run_json(capsys, "verify", "--suite", suite, "--family", "R", "--N", "6",
                         "--params", "a=-6,b=10.5,c=1.5,d=3")
    assert code == 0
    assert_schema(rep)
    assert rep["suite"] == suite


def test_verify_continuous_family(capsys):
    code, rep = run_json(capsys, "verify", "--suite", "difference", "--family", "J", "--params", "g=2.2,h=3.6")
    assert code == 0
    assert_schema(rep)


def test_invalid_deletion_exit_one(capsys):
    code, rep = run_json(capsys, "crum", "--family", "R", "--N", "6", "--delete", "2")
    assert code == 1
    assert_schema(rep)
    assert rep["error"]["type"] == "ValidityError"
    assert rep["pass"] is False


def test_valid_deletion(capsys):
    code, rep = run_json(capsys, "crum", "--family", "R", "--N", "6", "--delete", "1,2",
                         "--params", "a=-6,b=10.5,c=1.5,d=3")
    assert code == 0
    assert rep["surviving_levels"] == [0, 3, 4, 5, 6]
    assert len(rep["B_bar"]) == 5


def test_failing_tolerance_exit_one(capsys):
    # a tolerance scale of 0 turns every nonzero residual into a failure
    code, rep = run_json(capsys, "verify", "--suite", "closure", "--family", "R", "--N", "6",
                         "--params", "a=-6,b=10.5,c=1.5,d=3", "--tol-scale", "0")
    assert code == 1
    assert_schema(rep)
    assert not rep["pass"]


def test_tol_scale_multiplies_tolerance(capsys):
    base = ["verify", "--suite", "shape", "--family", "M", "--params", "beta=2,c=0.5"]
    _, a = run_json(capsys, *base)
    _, b = run_json(capsys, *base, "--tol-scale", "10")
    assert [c["tolerance"] * 10 for c in a["checks"]] == pytest.approx([c["tolerance"] for c in b["checks"]])


@pytest.mark.parametrize("argv", [
    ["verify", "--family", "Z"],
    ["verify", "--family", "qR", "--params", "a=1,b=0.5,c=0.8,d=0.3", "--q", "0.9", "--N", "4"],
    ["verify", "--family", "M", "--params", "beta"],
    ["verify", "--family", "M", "--no-such-flag"],
    ["tabulate", "--family", "H"],
    ["crum", "--family", "R", "--N", "6"],
])
def test_usage_errors_exit_two(capsys, argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_deterministic_reports(capsys):
    argv = ["verify", "--suite", "all", "--family", "M", "--seed", "11"]
    _, a = run_json(capsys, *argv)
    _, b = run_json(capsys, *argv)
    a.pop("wall_time"), b.pop("wall_time")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_seeded_draw_changes_with_seed(capsys):
    _, a = run_json(capsys, "spectrum", "--family", "R", "--seed", "1")
    _, b = run_json(capsys, "spectrum", "--family", "R", "--seed", "2")
    assert a["subject"] != b["subject"]


def test_out_file_written_atomically(tmp_path, capsys):
    target = tmp_path / "report.json"
    code, out = run(capsys, "spectrum", "--family", "R", "--N", "5", "--out", str(target))
    assert code == 0
    assert out == ""
    rep = json.loads(target.read_text())
    assert_schema(rep)
    assert [p.name for p in tmp_path.iterdir()] == ["report.json"]


def test_tabulate_csv(capsys):
    code, out = run(capsys, "tabulate", "--family", "M", "--params", "beta=2,c=0.5", "--n-top", "3")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "x,eta,P_0,P_1,P_2,P_3"
    row = lines[3].split(",")
    assert float(row[3]) == pytest.approx(1 - 2 / 2)
    # 17 significant digits round-trip doubles exactly
    assert float(lines[2].split(",")[4]) == float(format(float(lines[2].split(",")[4]), ".17g"))


def test_tabulate_off_lattice(capsys):
    code, out = run(capsys, "tabulate", "--family", "H", "--x", "0.7", "--n-top", "5")
    assert code == 0
    assert float(out.strip().splitlines()[1].split(",")[-1]) == pytest.approx(34.49824, rel=1e-12)


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "fam.cfg"
    cfg.write_text("# meixner\nfamily = M\nparam.beta = 2\nparam.c = 0.5\n")
    code, rep = run_json(capsys, "spectrum", "--config", str(cfg))
    assert code == 0
    assert rep["subject"]["family"] == "M"
    assert rep["subject"]["params"] == {"beta": 2.0, "c": 0.5}


def test_heisenberg_command(capsys):
    code, rep = run_json(capsys, "heisenberg", "--family", "qR", "--N", "6", "--t", "0.1,0.5,1.0")
    assert code == 0
    assert_schema(rep)


def test_exceptional_command(capsys):
    code, rep = run_json(capsys, "exceptional", "--kind", "XqR", "--ell", "1", "--N", "10", "--q", "0.9",
                         "--params", "b=0.02,c=0.8,d=0.3")
    assert code == 0
    assert_schema(rep)
    ids = {c["check_id"] for c in rep["checks"]}
    assert {"deformed.spectrum", "exceptional.orthogonality", "exceptional.degree"} <= ids
    assert rep["recurrence_witness"] > 1e-4


def test_exceptional_table(capsys):
    code, out = run(capsys, "exceptional", "--kind", "XL1", "--ell", "1", "--params", "g=1",
                    "--verify", "none", "--emit-table", "--x", "0.5,1.0", "--n-top", "2")
    assert code == 0
    table, zeros = out.split("# zeros")
    lines = table.strip().splitlines()
    assert lines[0] == "x,eta,P_1_0,P_1_1,P_1_2"
    # XL1 at g=1, l=1: P_{1,0} = 2 + eta
    assert [float(l.split(",")[2]) for l in lines[1:]] == pytest.approx([2.75, 3.5])
    # P_{1,n} has n zeros
    assert [len(l.split(",")) - 1 for l in zeros.strip().splitlines()] == [0, 1, 2]


def test_unified_spec_file(tmp_path, capsys):
    spec = tmp_path / "qes.spec"
    spec.write_text("# cubic potential\ncoord = iv'\nq = 0.7\nL = 3\nv.3.0 = 0.2\nv.2.1 = 0.5\nv.0.0 = 1.0\n")
    code, rep = run_json(capsys, "unified", "--spec", str(spec), "--M", "5")
    assert code == 0
    assert_schema(rep)
    assert "e0" in rep
    assert rep["subject"]["coord"] == "iv'"
    quoted = tmp_path / "quoted.spec"
    quoted.write_text(spec.read_text().replace("coord = iv'", 'coord = "iv\'"'))
    _, again = run_json(capsys, "unified", "--spec", str(quoted), "--M", "5")
    assert again["e0"] == rep["e0"]


def test_unified_empty_spec_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["unified", "--coord", "i'", "--L", "4", "--M", "2", "--spec", "/dev/null"])
    assert info.value.code == 2


def test_unified_l4(tmp_path, capsys):
    spec = tmp_path / "l4.spec"
    spec.write_text("coord = i'\nL = 4\nv.4.0 = 0.5\nv.3.1 = 0.9\nv.2.0 = 1.0\nv.0.0 = 0.3\n")
    code, rep = run_json(capsys, "unified", "--spec", str(spec), "--M", "2")
    assert code == 1
    assert rep["error"]["type"] == "ConstraintError"
    code, rep = run_json(capsys, "unified", "--spec", str(spec), "--M", "2", "--constrain")
    assert code == 0


def test_unified_family(capsys):
    code, rep = run_json(capsys, "unified", "--family", "R", "--N", "8", "--seed", "3")
    assert code == 0
    assert_schema(rep)


def test_module_entry_point(tmp_path):
    env = dict(os.environ)
    proc = subprocess.run([sys.executable, "-m", "dqm.cli", "crum", "--family", "R", "--N", "6",
                           "--delete", "2"], capture_output=True, text=True, env=env)
    assert proc.returncode == 1
    assert json.loads(proc.stdout)["error"]["type"] == "ValidityError"
