import argparse
import math
import os

import pytest

from app.main import EXIT_EXTERNAL, EXIT_FAILURE, EXIT_NOT_FOUND, EXIT_OK, EXIT_USAGE, main, parse_grid, table_arg
from app.utils import load_json, read_jsonl, save_json

pytestmark = pytest.mark.usefixtures("results_dir")

ALT_ATTACK = ["attack-alt", "--params", "toy31", "--k1", "10", "--k2", "20", "--seed", "9"]


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_no_command_prints_help(capsys):
    assert main([]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().out


def test_unknown_flag():
    assert main(["attack", "--bogus"]) == EXIT_USAGE


def test_parse_grid():
    assert parse_grid("1-4") == [1, 2, 3, 4]
    assert parse_grid("2,5") == [2, 5]


def test_key_round_trip(tmp_path, capsys):
    keys, ct = str(tmp_path / "keys.json"), str(tmp_path / "ct.json")
    assert main(["keygen", "--params", "toy31", "--seed", "1", "--out", keys]) == EXIT_OK
    assert load_json(keys)["keys"]["h"]
    assert main(["encrypt", "--params", "toy31", "--keys", keys, "--seed", "2", "--out", ct]) == EXIT_OK
    assert main(["decrypt", "--params", "toy31", "--keys", keys, "--ciphertext", ct]) == EXIT_OK
    assert "matches" in capsys.readouterr().out


def test_missing_key_file(tmp_path):
    assert main(["encrypt", "--params", "toy31", "--keys", str(tmp_path / "none.json")]) == EXIT_USAGE


def test_attack_recovers(tmp_path):
    out = str(tmp_path / "attack.json")
    assert main(ALT_ATTACK + ["--trace", "--out", out]) == EXIT_OK
    record = load_json(out)
    assert record["success"]
    assert record["outcome"]["status"] == "recovered"
    assert record["config"]["k2"] == 20


def test_attack_from_instance_file(tmp_path):
    out = str(tmp_path / "attack.json")
    assert main(ALT_ATTACK + ["--out", out]) == EXIT_OK
    instance = str(tmp_path / "instance.json")
    save_json(load_json(out)["instance"], instance)
    assert main(["attack-alt", "--instance", instance]) == EXIT_OK


def test_attack_not_found():
    assert main(ALT_ATTACK + ["--app-value", "1"]) == EXIT_NOT_FOUND


def test_attack_needs_k1():
    assert main(["attack", "--params", "toy31"]) == EXIT_USAGE


def test_external_reducer_failure():
    assert main(ALT_ATTACK + ["--reducer", "external:no-such-reducer-binary {input}"]) == EXIT_EXTERNAL


def test_unknown_reducer():
    assert main(ALT_ATTACK + ["--reducer", "bkz"]) == EXIT_USAGE


def test_config_file_supplies_defaults(tmp_path):
    cfg = write(tmp_path / "toolkit.env", "PARAMS=toy31\nSEED=4\n")
    out = str(tmp_path / "keys.json")
    assert main(["keygen", "--config", cfg, "--out", out]) == EXIT_OK
    data = load_json(out)
    assert data["params"]["name"] == "toy31" and data["seed"] == 4
    assert main(["keygen", "--config", cfg, "--seed", "5", "--out", out]) == EXIT_OK
    assert load_json(out)["seed"] == 5


def test_missing_config_file(tmp_path):
    assert main(["keygen", "--config", str(tmp_path / "none.env")]) == EXIT_USAGE


def test_snf_command(tmp_path, capsys):
    matrix = write(tmp_path / "a.txt", "[[2 0]\n[0 3]]\n")
    out = str(tmp_path / "snf.json")
    assert main(["snf", "--input", matrix, "--kernel", "--out", out]) == EXIT_OK
    data = load_json(out)
    assert data["divisors"] == [1, 6]
    assert data["kernel"] == []
    assert "trivial" in capsys.readouterr().out


def test_reduce_command(tmp_path):
    matrix = write(tmp_path / "b.txt", "[[1 1]\n[1 0]]\n")
    out = tmp_path / "reduced.txt"
    assert main(["reduce", "--input", matrix, "--profile", "--out", str(out)]) == EXIT_OK
    assert out.read_text(encoding="utf-8") == "[[1 0]\n[0 1]]\n"


def test_reduce_profile_reports_the_drop_change(tmp_path, capsys):
    matrix = write(tmp_path / "b.txt", "[[1 1]\n[1 0]]\n")
    assert main(["reduce", "--input", matrix, "--profile"]) == EXIT_OK
    assert "drop change: -0.6931" in capsys.readouterr().out


def test_reduce_shortest_vector(tmp_path, capsys):
    matrix = write(tmp_path / "c.txt", "[[3 1]\n[1 3]]\n")
    assert main(["reduce", "--input", matrix, "--svp"]) == EXIT_OK
    assert "norm^2 8" in capsys.readouterr().out


def test_reduce_missing_input(tmp_path):
    assert main(["reduce", "--input", str(tmp_path / "none.txt")]) == EXIT_USAGE


def test_experiment_command(results_dir):
    argv = ["experiment", "--params", "toy31", "--k1", "10", "--k2", "20", "--trials", "1", "--seed", "2"]
    assert main(argv) == EXIT_OK
    path = os.path.join(str(results_dir), "toy31-k10-20-s2.jsonl")
    assert [r["type"] for r in read_jsonl(path)] == ["header", "trial", "summary"]


def test_experiment_table_needs_row():
    assert main(["experiment", "--table", "message"]) == EXIT_USAGE


def test_table_numbers_are_accepted():
    assert table_arg("1") == "message"
    assert table_arg("combined") == "combined"
    with pytest.raises(argparse.ArgumentTypeError):
        table_arg("3")


def test_experiment_numbered_table_reaches_the_row_lookup(capsys):
    assert main(["experiment", "--table", "1", "--row", "9"]) == EXIT_USAGE
    assert "no row 9 in table message" in capsys.readouterr().out


def test_reduce_with_braces_in_the_reducer_command(tmp_path):
    matrix = write(tmp_path / "d.txt", "[[1 1]\n[1 0]]\n")
    out = tmp_path / "same.txt"
    argv = ["reduce", "--input", matrix, "--reducer", "external:awk '{print}' {input}", "--out", str(out)]
    assert main(argv) == EXIT_OK
    assert out.read_text(encoding="utf-8") == "[[1 1]\n[1 0]]\n"


def test_malformed_delta_and_matrix_are_usage_errors(tmp_path):
    matrix = write(tmp_path / "e.txt", "[[1 0]\n[0 1]]\n")
    assert main(["reduce", "--input", matrix, "--reducer", "internal:abc"]) == EXIT_USAGE
    bad = write(tmp_path / "f.txt", "[[1 x]\n[0 1]]\n")
    assert main(["reduce", "--input", bad]) == EXIT_USAGE


THEOREM_MATRIX = "[[1 0 3 5 7]\n[0 1 4 6 2]]\n"


def test_snf_theorem_check(tmp_path, capsys):
    matrix = write(tmp_path / "a.txt", THEOREM_MATRIX)
    out = str(tmp_path / "theorem.json")
    assert main(["snf", "--input", matrix, "--theorem", "--q", "97", "--solution", "1,0,-1,1,0",
                 "--out", out]) == EXIT_OK
    theorem = load_json(out)["theorem"]
    c, N2_min = int(theorem["c_bound"]), int(theorem["N2_min"])
    assert c >= 2 ** 7 * 97 ** 2
    assert N2_min == math.isqrt(c) + 1
    assert theorem["admissible"] and theorem["zero_block_ok"]
    assert math.isclose(theorem["gap_bits"], math.log2(N2_min) - math.log2(97 ** 2), abs_tol=1e-3)
    printed = capsys.readouterr().out
    assert "precondition: holds" in printed
    assert "zero block: yes" in printed


def test_snf_theorem_bound_only(tmp_path, capsys):
    matrix = write(tmp_path / "a.txt", THEOREM_MATRIX)
    out = str(tmp_path / "bound.json")
    assert main(["snf", "--input", matrix, "--theorem", "--bound-only", "--q", "97",
                 "--solution", "1,0,-1,1,0", "--x", "3", "--out", out]) == EXIT_OK
    theorem = load_json(out)["theorem"]
    assert theorem["zero_block_ok"] is None
    assert theorem["gap_bits"] < 0
    assert "zero block" not in capsys.readouterr().out


@pytest.mark.parametrize("extra", [
    [],
    ["--q", "97"],
    ["--q", "97", "--solution", "2,0,0,0,0"],
    ["--q", "97", "--solution", "1,0"],
    ["--q", "97", "--solution", "a,b"],
])
def test_snf_theorem_usage_errors(tmp_path, extra):
    matrix = write(tmp_path / "a.txt", THEOREM_MATRIX)
    assert main(["snf", "--input", matrix, "--theorem"] + extra) == EXIT_USAGE


def test_reducer_output_on_another_lattice_exits_with_failure(tmp_path):
    matrix = write(tmp_path / "b.txt", "[[2 0]\n[0 1]]\n")
    reducer = 'external:printf "[[1 0]\\n[0 1]]\\n"'
    assert main(["reduce", "--input", matrix, "--reducer", reducer, "--timeout", "30"]) == EXIT_FAILURE
