import json
import shutil
from pathlib import Path

import pytest

from lapcap.cli import bundled_corpus, main
from lapcap.errors import SchemaError
from lapcap.report import canonical_json, run
from lapcap.scenario import load, validate_scenario

DATA = Path(__file__).parent / "data"
CORPUS = bundled_corpus()
BUNDLED = sorted(CORPUS.glob("*.json"))


def test_corpus_size():
    assert len(BUNDLED) >= 12


@pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
def test_bundled_scenarios_validate(path):
    assert validate_scenario(path).ok


def test_validate_grandparent(capsys):
    assert main(["validate", str(CORPUS / "cap-grandparent.json")]) == 0
    assert "valid" in capsys.readouterr().out


def test_validate_unknown_primitive_names_field(capsys):
    res = validate_scenario(DATA / "unknown_primitive.json")
    assert not res.ok
    assert any(e.startswith("payload.model.mechanisms[1].primitive:") and "sigmoid_spline" in e for e in res.errors)
    assert main(["validate", str(DATA / "unknown_primitive.json")]) == 2
    assert "primitive" in capsys.readouterr().out


def test_validate_kind_mismatch():
    res = validate_scenario(DATA / "kind_mismatch.json")
    assert not res.ok
    assert any("does not match kind 'forgetting'" in e for e in res.errors)


def test_parse_error_has_line_and_column():
    with pytest.raises(SchemaError) as info:
        load(DATA / "malformed.json")
    assert (info.value.line, info.value.column) == (5, 3)


def test_run_pass_writes_do_answers(tmp_path):
    assert main(["run", str(CORPUS / "obs-equivalence.json"), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "obs-equivalence.report.json").read_text())
    do = [doc["metrics"][f"do.{m}"] for m in ("causal", "anticausal", "confounded")]
    assert do == pytest.approx([0.9, 0.5, 0.5], abs=1e-12)
    assert doc["verdict"] == "pass"
    assert all(c["anchor"] for c in doc["checks"])
    assert (tmp_path / "obs-equivalence.timing.json").exists()


def test_fee_scenario_fails_at_half(tmp_path, capsys):
    assert main(["run", str(DATA / "fee_strict.json"), "--out", str(tmp_path)]) == 1
    doc = json.loads((tmp_path / "cap-currency-fee-strict.report.json").read_text())
    assert doc["checks"][0]["measured"] >= 1.0
    assert "analogy-tolerance" in capsys.readouterr().out


def test_run_invalid_and_missing_exit_2(tmp_path, capsys):
    assert main(["run", str(DATA / "unknown_primitive.json"), "--out", str(tmp_path)]) == 2
    assert main(["run", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    assert "lapcap:" in capsys.readouterr().err


def test_repeat_runs_byte_identical(tmp_path):
    path = str(CORPUS / "forgetting-entangled.json")
    assert main(["run", path, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", path, "--out", str(tmp_path / "b")]) == 0
    name = "forgetting-entangled.report.json"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_recorded(tmp_path):
    assert main(["run", str(CORPUS / "bayes-surgery.json"), "--seed", "11", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "bayes-surgery.report.json").read_text())["seed"] == 11


def _failing_threshold(check):
    m, cmp = check["measured"], check["comparator"]
    step = max(1.0, abs(m))
    return m - step if cmp in ("<=", "<") else m + step


@pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
def test_tolerance_mutation_flips_exit(path, tmp_path):
    sc = load(path)
    base = run(sc)
    assert base.passed
    for chk in base.document["checks"]:
        out = tmp_path / chk["name"]
        argv = ["run", str(path), "--out", str(out), "--tolerance", f"{chk['name']}={_failing_threshold(chk)!r}"]
        assert main(argv) == 1, chk["name"]


def test_tolerance_argument_errors():
    with pytest.raises(SystemExit) as info:
        main(["run", str(CORPUS / "obs-equivalence.json"), "--tolerance", "joint-tv"])
    assert info.value.code == 2


def test_suite_one_injected_failure(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for name in ("obs-equivalence.json", "cap-grandparent.json", "epistemics-metrics.json"):
        shutil.copy(CORPUS / name, corpus / name)
    shutil.copy(DATA / "fee_strict.json", corpus / "fee_strict.json")
    assert main(["suite", str(corpus), "--out", str(tmp_path / "out")]) == 1
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert (summary["passed"], summary["failed"], summary["errors"], summary["total"]) == (3, 1, 0, 4)
    [bad] = [r for r in summary["scenarios"] if r["verdict"] == "fail"]
    assert bad["file"] == "fee_strict.json"


def test_suite_missing_or_empty_exit_2(tmp_path):
    assert main(["suite", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2
    (tmp_path / "empty").mkdir()
    assert main(["suite", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 2


def test_suite_error_counted(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    shutil.copy(CORPUS / "obs-equivalence.json", corpus / "a.json")
    shutil.copy(DATA / "unknown_primitive.json", corpus / "b.json")
    assert main(["suite", str(corpus), "--out", str(tmp_path / "out")]) == 2
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert (summary["passed"], summary["errors"]) == (1, 1)


def test_out_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("LAPCAP_OUT", str(tmp_path / "env-out"))
    assert main(["run", str(CORPUS / "epistemics-metrics.json")]) == 0
    assert (tmp_path / "env-out" / "epistemics-metrics.report.json").exists()


def test_csv_format(tmp_path):
    assert main(["run", str(CORPUS / "forgetting-shared-scalar.json"), "--format", "csv", "--out", str(tmp_path)]) == 0
    header = (tmp_path / "forgetting-shared-scalar.checks.csv").read_text().splitlines()[0].split(",")
    assert {"name", "anchor", "measured", "threshold", "verdict"} <= set(header)
    assert (tmp_path / "forgetting-shared-scalar.trajectory.csv").exists()


def test_semi_markovian_flag(tmp_path):
    doc = run(load(CORPUS / "scm-shared-latent.json")).document
    assert any(f.startswith("semi-markovian") for f in doc["flags"])


def test_canonical_json_round_trip():
    obj = {"b": [0.1, 1e-300, 2.0, float("nan")], "a": {"z": True, "y": None, "x": 3}}
    text = canonical_json(obj)
    back = json.loads(text)
    assert list(back) == ["a", "b"]
    assert back["b"][:3] == [0.1, 1e-300, 2.0] and back["b"][3] == "NaN"
    assert canonical_json(back) == text
