import json

import pytest

from indukt import corpus as corpus_mod
from indukt.corpus import (
    EXAMPLES_PER_TASK,
    CorpusError,
    CorpusParseError,
    CorpusValidationError,
    Example,
    load_corpus,
    oracle_outputs,
    save_corpus,
    trial,
    trials,
)


def make_task_dict(task_id="t1", program="reverse", n=EXAMPLES_PER_TASK):
    examples = []
    for i in range(n):
        inp = list(range(i + 1))
        examples.append({"input": inp, "output": inp[::-1]})
    return {
        "id": task_id,
        "description": "reverse the list",
        "examples": examples,
        "reference_program": program,
    }


def write_corpus(tmp_path, tasks):
    path = tmp_path / "corpus.json"
    path.write_text(json.dumps({"tasks": tasks}), encoding="utf-8")
    return path


class TestLoading:
    def test_valid_corpus_loads(self, tmp_path):
        path = write_corpus(tmp_path, [make_task_dict()])
        loaded = load_corpus(path)
        assert len(loaded) == 1
        task = loaded.get("t1")
        assert task.description == "reverse the list"
        assert len(task.examples) == EXAMPLES_PER_TASK
        assert isinstance(task.examples[0], Example)

    def test_not_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{nope", encoding="utf-8")
        with pytest.raises(CorpusParseError):
            load_corpus(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CorpusParseError):
            load_corpus(tmp_path / "absent.json")

    def test_top_level_shape(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"tasks": [], "extra": 1}), encoding="utf-8")
        with pytest.raises(CorpusParseError):
            load_corpus(path)

    def test_wrong_example_count(self, tmp_path):
        path = write_corpus(tmp_path, [make_task_dict(n=10)])
        with pytest.raises(CorpusValidationError, match="expected 11 examples"):
            load_corpus(path)

    def test_duplicate_task_ids(self, tmp_path):
        path = write_corpus(tmp_path, [make_task_dict("dup"), make_task_dict("dup")])
        with pytest.raises(CorpusValidationError, match="duplicate"):
            load_corpus(path)

    def test_unknown_field_rejected(self, tmp_path):
        bad = make_task_dict()
        bad["difficulty"] = "hard"
        path = write_corpus(tmp_path, [bad])
        with pytest.raises(CorpusValidationError, match="unknown fields"):
            load_corpus(path)

    def test_bool_is_not_an_int(self, tmp_path):
        bad = make_task_dict()
        bad["examples"][0]["input"] = [True, 2]
        path = write_corpus(tmp_path, [bad])
        with pytest.raises(CorpusValidationError, match="list of integers"):
            load_corpus(path)

    def test_value_range_enforced(self, tmp_path):
        bad = make_task_dict()
        bad["examples"][0] = {"input": [5000], "output": [5000]}
        path = write_corpus(tmp_path, [bad])
        with pytest.raises(CorpusValidationError, match="outside"):
            load_corpus(path)
        # a wider range admits the same file
        assert load_corpus(path, value_range=(-10_000, 10_000))

    def test_reference_program_must_parse(self, tmp_path):
        path = write_corpus(tmp_path, [make_task_dict(program="reverze")])
        with pytest.raises(CorpusValidationError, match="does not parse"):
            load_corpus(path)

    def test_reference_program_verified_against_examples(self, tmp_path):
        path = write_corpus(tmp_path, [make_task_dict(program="sort")])
        with pytest.raises(CorpusValidationError, match="mismatch"):
            load_corpus(path)

    def test_reference_program_optional(self, tmp_path):
        entry = make_task_dict(program=None)
        entry.pop("reference_program")
        path = write_corpus(tmp_path, [entry])
        task = load_corpus(path).get("t1")
        assert task.reference_program is None
        with pytest.raises(CorpusError, match="no reference program"):
            oracle_outputs(task, [[1, 2]])

    def test_save_load_round_trip(self, tmp_path):
        path = write_corpus(tmp_path, [make_task_dict("a"), make_task_dict("b")])
        loaded = load_corpus(path)
        out = tmp_path / "copy.json"
        save_corpus(loaded, out)
        assert load_corpus(out) == loaded


class TestTrialProtocol:
    def test_trial_split(self, mini_corpus):
        task = mini_corpus.tasks[0]
        t1 = trial(task, 1)
        assert t1.training == ()
        assert t1.test == task.examples[0]
        t11 = trial(task, 11)
        assert t11.training == task.examples[:10]
        assert t11.test == task.examples[10]

    def test_trial_bounds(self, mini_corpus):
        task = mini_corpus.tasks[0]
        for bad in (0, 12, -1):
            with pytest.raises(ValueError):
                trial(task, bad)

    def test_trials_cover_all_examples(self, mini_corpus):
        task = mini_corpus.tasks[0]
        specs = list(trials(task))
        assert [s.trial_index for s in specs] == list(range(1, 12))
        assert [s.test for s in specs] == list(task.examples)
        for spec in specs:
            assert spec.task_id == task.id
            assert len(spec.training) == spec.trial_index - 1

    def test_oracle_outputs_match_examples(self, mini_corpus):
        for task in mini_corpus:
            outs = oracle_outputs(task, [ex.input for ex in task.examples])
            assert outs == [list(ex.output) for ex in task.examples]


def test_bundled_mini_corpus_shape(mini_corpus):
    assert len(mini_corpus) == 10
    ids = [t.id for t in mini_corpus]
    assert len(set(ids)) == 10
    for task in mini_corpus:
        assert task.reference_program is not None
        assert len(task.examples) == EXAMPLES_PER_TASK


def test_get_unknown_task(mini_corpus):
    with pytest.raises(KeyError):
        mini_corpus.get("no-such-task")


def test_default_limits_exported():
    assert corpus_mod.DEFAULT_VALUE_RANGE == (-1000, 1000)
    assert corpus_mod.DEFAULT_MAX_LIST_LEN == 64
