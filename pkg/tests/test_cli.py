"""End-to-end checks of the command-line frontend."""

import json
from importlib.resources import files

import jsonschema

from daefix import corpus
from daefix.cli import main
from daefix.dsl import parse_dae


def corpus_file(tmp_path, name):
    p = tmp_path / (name + ".dae")
    p.write_text(corpus.source(name))
    return str(p)


def write_dae(tmp_path, text, name="case.dae"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def schema(name):
    return json.loads(files("daefix.schemas").joinpath(name).read_text())


# ---------------------------------------------------------------------------
# analyze

def test_analyze_pendulum(tmp_path, capsys):
    rc = main(["analyze", corpus_file(tmp_path, "pendulum")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "structural index 3" in out
    assert "degrees of freedom 2" in out
    assert "classification: GenericallyNonsingular" in out
    # transversal positions carry a mark, the c/d margins are present
    assert "2•" in out
    assert "c_i" in out and "d_j" in out


def test_analyze_singular_system(tmp_path, capsys):
    rc = main(["analyze", corpus_file(tmp_path, "brenan")])
    out = capsys.readouterr().out
    assert rc == 2
    assert "classification: IdenticallySingular" in out
    assert "det(J) = 0" in out


def test_analyze_brackets_nontight_entries(tmp_path, capsys):
    main(["analyze", corpus_file(tmp_path, "lc_example")])
    out = capsys.readouterr().out
    assert "[0]" in out


def test_analyze_ill_posed(tmp_path, capsys):
    path = write_dae(tmp_path, "dae sip\n"
                               "vars x1, x2\n"
                               "eq f1: x1' + x1 = 0\n"
                               "eq f2: x1 - 1 = 0\n")
    rc = main(["analyze", path])
    assert rc == 3
    assert "ill posed" in capsys.readouterr().out


def test_analyze_json_document(tmp_path, capsys):
    out_path = tmp_path / "report.json"
    rc = main(["analyze", corpus_file(tmp_path, "pendulum"),
               "--json", str(out_path)])
    assert rc == 0
    doc = json.loads(out_path.read_text())
    jsonschema.validate(doc, schema("analysis.schema.json"))
    assert doc["structural_index"] == 3
    assert doc["dof"] == 2
    assert doc["offsets"] == {"c": [0, 0, 2], "d": [2, 2, 0]}
    assert len(doc["input_sha256"]) == 64
    # absent entries are null, transversal indices are 1-based
    sigma = doc["sigma_true"]
    assert sigma["entries"][0][1] is None
    assert sorted(sigma["hvt"]) == [[1, 1], [2, 3], [3, 2]]


def test_analyze_json_for_ill_posed_input(tmp_path, capsys):
    path = write_dae(tmp_path, "dae sip\n"
                               "vars x1, x2\n"
                               "eq f1: x1' + x1 = 0\n"
                               "eq f2: x1 - 1 = 0\n")
    out_path = tmp_path / "report.json"
    rc = main(["analyze", path, "--json", str(out_path)])
    assert rc == 3
    doc = json.loads(out_path.read_text())
    jsonschema.validate(doc, schema("analysis.schema.json"))
    assert doc["classification"] == "StructurallyIllPosed"
    assert doc["value"] is None
    assert doc["sigma_true"]["hvt"] is None


def test_parse_errors_exit_one(tmp_path, capsys):
    assert main(["analyze", str(tmp_path / "missing.dae")]) == 1
    bad = write_dae(tmp_path, "dae bad\nvars x\n")  # no equations
    assert main(["analyze", bad]) == 1
    capsys.readouterr()


def test_usage_error_exit_one(capsys):
    assert main([]) == 1
    assert main(["trace", "whatever.dae", "--method", "lc"]) == 1
    capsys.readouterr()


def test_help_documents_exit_codes(capsys):
    rc = main(["--help"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "exit codes" in out
    assert "structurally ill posed" in out


# ---------------------------------------------------------------------------
# fix

def test_fix_two_step_repair(tmp_path, capsys):
    rc = main(["fix", corpus_file(tmp_path, "scholz")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "step 1: lc, pivot f3" in out
    assert "step 2: lc, pivot f1" in out
    assert "fixed in 2 steps, value 2 -> 0" in out
    assert "det(J) = 1" in out


def test_fix_nothing_to_do(tmp_path, capsys):
    rc = main(["fix", corpus_file(tmp_path, "pendulum")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "nothing to do" in out


def test_fix_uncertain_exit(tmp_path, capsys):
    rc = main(["fix", corpus_file(tmp_path, "es_example")])
    out = capsys.readouterr().out
    assert rc == 4
    assert "unverified" in out


def test_fix_no_method_names_stuck_step(tmp_path, capsys):
    path = write_dae(tmp_path, "dae stuck\n"
                               "vars x1, x2\n"
                               "eq f1: x1'*(exp(x1)*exp(x2)"
                               " - exp(x1 + x2)) + x2' = 0\n"
                               "eq f2: x2' + x1 = 0\n")
    rc = main(["fix", path])
    out = capsys.readouterr().out
    assert rc == 2
    assert "no method applies at step 1" in out


def test_fix_reports_exposed_ill_posedness(tmp_path, capsys):
    path = write_dae(tmp_path, "dae hidden\n"
                               "vars x1, x2\n"
                               "input b1\n"
                               "eq f1: x1' + x2 = 0\n"
                               "eq f2: x1' + x2 + b1(t) = 0\n")
    rc = main(["fix", path])
    out = capsys.readouterr().out
    assert rc == 3
    assert "ill posed" in out


def test_fix_step_budget(tmp_path, capsys):
    rc = main(["fix", corpus_file(tmp_path, "scholz"), "--max-steps", "1"])
    out = capsys.readouterr().out
    assert rc == 2
    assert "step budget exhausted after 1 step" in out


def test_fix_json_document(tmp_path, capsys):
    out_path = tmp_path / "fix.json"
    rc = main(["fix", corpus_file(tmp_path, "scholz"),
               "--json", str(out_path)])
    assert rc == 0
    doc = json.loads(out_path.read_text())
    jsonschema.validate(doc, schema("conversion.schema.json"))
    assert doc["status"] == "success"
    assert (doc["initial_value"], doc["final_value"]) == (2, 0)
    assert [st["pivot_name"] for st in doc["steps"]] == ["f3", "f1"]
    assert [st["pivot"] for st in doc["steps"]] == [3, 1]
    assert doc["steps"][0]["replaced"] == "f3"
    assert doc["final"]["classification"] == "GenericallyNonsingular"
    origins = [eq["origin"] for eq in doc["system"]["equations"]]
    assert origins.count("lc_replaced") == 2
    capsys.readouterr()


def test_fix_emits_loadable_system(tmp_path, capsys):
    fixed = tmp_path / "fixed.dae"
    rc = main(["fix", corpus_file(tmp_path, "scholz"), "--emit", str(fixed)])
    assert rc == 0
    system = parse_dae(fixed.read_text())
    assert system.n == 4
    capsys.readouterr()
    # a fixed system needs no further work
    assert main(["analyze", str(fixed)]) == 0
    assert main(["fix", str(fixed)]) == 0
    out = capsys.readouterr().out
    assert "nothing to do" in out


# ---------------------------------------------------------------------------
# trace

def test_trace_forced_combination(tmp_path, capsys):
    rc = main(["trace", corpus_file(tmp_path, "lc_example"),
               "--method", "lc", "--vector", "[x2, x1, 1, -1]",
               "--pivot", "4"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "step 1: lc, pivot f4" in out
    assert "det(J) = x1 - x2" in out


def test_trace_forced_substitution(tmp_path, capsys):
    rc = main(["trace", corpus_file(tmp_path, "pendulum_mod"),
               "--method", "es", "--vector", "[1, -1, 1]", "--pivot", "1"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "step 1: es, pivot x1" in out
    assert "x4 (y2) stands for x1 + x2" in out
    assert "x5 (y3) stands for -x1 + x3" in out
    assert "value 4 -> 2" in out


def test_trace_emit_and_json(tmp_path, capsys):
    fixed = tmp_path / "fixed.dae"
    out_path = tmp_path / "trace.json"
    rc = main(["trace", corpus_file(tmp_path, "brenan"),
               "--method", "es", "--vector", "[t, -1]", "--pivot", "2",
               "--emit", str(fixed), "--json", str(out_path)])
    assert rc == 0
    doc = json.loads(out_path.read_text())
    jsonschema.validate(doc, schema("conversion.schema.json"))
    step = doc["steps"][0]
    assert step["added"] == [{"variable": "x3", "equation": "f3",
                              "alias": "y1", "definition": "t*y + x"}]
    assert step["rewritten"] == ["f1", "f2"]
    system = parse_dae(fixed.read_text())
    assert system.var_names == ("x", "y", "x3")
    capsys.readouterr()
    assert main(["analyze", str(fixed)]) == 0
    capsys.readouterr()


def test_trace_wrong_vector_shows_residual(tmp_path, capsys):
    rc = main(["trace", corpus_file(tmp_path, "brenan"),
               "--method", "lc", "--vector", "[1, 0]"])
    err = capsys.readouterr().err
    assert rc == 1
    assert "vector rejected" in err
    assert "residual[1] = 1" in err
    assert "residual[2] = t" in err


def test_trace_vector_parse_error(tmp_path, capsys):
    rc = main(["trace", corpus_file(tmp_path, "brenan"),
               "--method", "lc", "--vector", "[1, +]"])
    assert rc == 1
    capsys.readouterr()


def test_trace_condition_rejection(tmp_path, capsys):
    rc = main(["trace", corpus_file(tmp_path, "es_example"),
               "--method", "lc",
               "--vector", "[exp(x1' + x2*x2''), 1]"])
    err = capsys.readouterr().err
    assert rc == 2
    assert "order condition" in err


def test_trace_pivot_rejection(tmp_path, capsys):
    rc = main(["trace", corpus_file(tmp_path, "lc_example"),
               "--method", "lc", "--vector", "[x2, x1, 1, -1]",
               "--pivot", "3"])
    assert rc == 2
    capsys.readouterr()


def test_trace_on_nonsingular_system(tmp_path, capsys):
    rc = main(["trace", corpus_file(tmp_path, "pendulum"),
               "--method", "lc", "--vector", "[1, 1, 1]"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "nothing to do" in out
