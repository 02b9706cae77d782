import json

import pytest

from abductor.engine import RunConfig, run_episode
from abductor.errors import ParseError, ValidationError
from abductor.generator import corpus, generate
from abductor.scenario import bundled_names, load, load_bundled, load_many, loads, normalize_label


def xfs_doc():
    return json.loads(load_bundled("xfs_readonly").dumps())


def test_bundled_scenarios_load():
    assert "xfs_readonly.json" in bundled_names()
    sc = load_bundled("xfs_readonly")
    assert sc.truth_leaf.label == "XFS metadata corruption"
    assert [t.label for t in sc.level_one()] == ["Filesystem Read-Only", "Disk Failure", "Memory Pressure"]


def test_round_trip():
    sc = load_bundled("xfs_readonly")
    assert loads(sc.dumps()) == sc


def test_load_falls_back_to_bundled(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert load("xfs_readonly.json").id == "xfs_readonly"
    with pytest.raises(FileNotFoundError):
        load(tmp_path / "sub" / "xfs_readonly.json")


def test_template_lookup_is_label_normalized():
    sc = load_bundled("xfs_readonly")
    assert sc.template_by_label("  xfs   METADATA corruption ").id == sc.truth_leaf.id
    assert normalize_label("A\tB") == "a b"
    assert sc.lookup("no such action") is None


def test_invalid_json():
    with pytest.raises(ParseError):
        loads("{")


def test_all_problems_reported():
    doc = xfs_doc()
    doc["truth_path"] = ["nope"]
    doc["relevance"]["ghost"] = ["missing action"]
    doc["surface_symptoms"] = []
    with pytest.raises(ValidationError) as err:
        loads(json.dumps(doc))
    text = "\n".join(err.value.problems)
    assert len(err.value.problems) >= 3
    assert "truth_path" in text and "ghost" in text and "surface_symptoms" in text


def test_truth_path_must_end_at_leaf():
    doc = xfs_doc()
    doc["truth_path"] = doc["truth_path"][:1]
    with pytest.raises(ValidationError):
        loads(json.dumps(doc))


def test_load_many_directory(tmp_path):
    for seed in (3, 1, 2):
        sc = generate(seed, 2, 2)
        (tmp_path / f"{sc.id}.json").write_text(sc.dumps())
    got = load_many([tmp_path])
    assert [s.id for s in got] == sorted(s.id for s in got) and len(got) == 3


def test_generator_is_deterministic():
    assert generate(5, 3, 3).dumps() == generate(5, 3, 3).dumps()
    assert generate(5, 3, 3, True).dumps() == generate(5, 3, 3, True).dumps()
    assert generate(5, 3, 3).dumps() != generate(6, 3, 3).dumps()


@pytest.mark.parametrize("bad", [(1, 1, 2), (1, 6, 2), (1, 3, 1), (1, 3, 5)])
def test_generator_rejects_bad_shape(bad):
    with pytest.raises(ValueError):
        generate(*bad)


def test_generated_shape():
    sc = generate(9, depth=4, branching=3)
    assert sc.truth_leaf.level == 4
    assert len(sc.level_one()) == 3
    assert sc.metadata["generator"]["depth"] == 4


@pytest.mark.parametrize("misleading", [False, True])
def test_solvability_metadata_fuzz(misleading):
    # 200 seeds per mode: the recorded budget is exactly what the oracle needs.
    for sc in corpus(range(1000, 1200), misleading, max_depth=4, max_branching=4):
        need = sc.metadata["required_iterations"]
        assert sc.metadata["recommended_max_iterations"] >= need
        budget = sc.budgets.get("max_iterations", 3)
        assert budget >= need
        result = run_episode(sc, RunConfig())
        assert result.terminated and result.report.prediction == sc.truth_leaf.label, sc.id
        assert result.state.iteration == need
        assert len(result.trace.of_type("Backtracked")) == (1 if misleading else 0)
