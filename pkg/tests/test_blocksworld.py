import json

import numpy as np
import pytest

from protorules.blocksworld import (
    FAMILIES,
    GROUND_PICKUP,
    GenParams,
    SLIPPERY_BASE,
    TaskFamily,
    TaskSpec,
    gen_dataset,
    gen_initial_state,
    gen_task,
    load_dataset,
    make_vocabulary,
    save_dataset,
    size_values,
)
from protorules.core import FALSE, TRUE, Term, Var
from protorules.rules import RelationalError

X = Var("X")


def t(symbol, *args):
    return Term(symbol, tuple(args))


class TestVocabularies:
    def test_family_functions(self):
        v = make_vocabulary("gripper-size", GenParams())
        names = {f.name for f in v.functions}
        assert {"on", "clear", "inhand", "inhand-nil", "block", "table",
                "size", "color", "texture"} <= names
        assert "wet" not in names
        v2 = make_vocabulary("slippery-gripper", GenParams())
        assert any(f.name == "wet" for f in v2.functions)
        assert not any(f.name == "size" for f in v2.functions)
        v3 = make_vocabulary("slippery-size", GenParams())
        names3 = {f.name for f in v3.functions}
        assert {"wet", "size"} <= names3

    def test_size_range(self):
        v = make_vocabulary("gripper-size", GenParams(n_sizes=4))
        assert v.function("size").values == size_values(4)
        assert len(size_values(4)) == 4


class TestTaskGeneration:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_truth_rulesets_valid(self, family):
        rng = np.random.default_rng(10)
        for seed in range(3):
            task = gen_task(TaskFamily(family), rng, seed=seed)
            task.truth.validate()
            assert task.family == family

    def test_slippery_base_probs_without_jitter(self):
        params = GenParams(jitter_concentration=None)
        rng = np.random.default_rng(0)
        task = gen_task(TaskFamily("slippery-gripper", params), rng)
        probs = {tuple(r.probs) for r in task.truth.rules}
        assert set(map(tuple, SLIPPERY_BASE.values())) == probs

    def test_gripper_size_has_one_rule_with_size_literal(self):
        rng = np.random.default_rng(1)
        task = gen_task(TaskFamily("gripper-size"), rng)
        assert len(task.truth.rules) == 1
        rule = task.truth.rules[0]
        assert t("size", X) in rule.context.mapping()
        assert rule.context.value(t("inhand-nil")) == TRUE

    def test_task_spec_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        task = gen_task(TaskFamily("slippery-size"), rng)
        path = tmp_path / "task.json"
        task.save(path)
        loaded = TaskSpec.load(path)
        assert loaded.vocab == task.vocab
        assert loaded.truth == task.truth


class TestSampling:
    def test_initial_state_biases(self):
        vocab = make_vocabulary("gripper-size", GenParams())
        rng = np.random.default_rng(3)
        empties = 0
        n = 500
        for _ in range(n):
            s = gen_initial_state(vocab, rng)
            assert s.value(t("block", "A")) == TRUE
            assert s.value(t("table", "A")) == FALSE
            if s.value(t("inhand-nil")) == TRUE:
                empties += 1
        assert abs(empties / n - 0.9) < 0.05

    def test_examples_use_ground_pickup(self):
        rng = np.random.default_rng(4)
        task = gen_task(TaskFamily("gripper-size"), rng)
        data = gen_dataset(task, 20, rng)
        assert all(ex.action == GROUND_PICKUP for ex in data)
        assert all(set(ex.state.terms()) == set(ex.next_state.terms())
                   for ex in data)

    def test_determinism(self):
        params = GenParams()
        task1 = gen_task(TaskFamily("slippery-gripper"),
                         np.random.default_rng(5))
        task2 = gen_task(TaskFamily("slippery-gripper"),
                         np.random.default_rng(5))
        assert task1.truth == task2.truth
        d1 = gen_dataset(task1, 10, np.random.default_rng(6))
        d2 = gen_dataset(task2, 10, np.random.default_rng(6))
        assert d1 == d2


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        task = gen_task(TaskFamily("gripper-size"), rng)
        data = gen_dataset(task, 15, rng)
        path = tmp_path / "data.jsonl"
        save_dataset(data, path)
        assert len(path.read_text().strip().splitlines()) == 15
        assert load_dataset(path) == data

    def test_malformed_line_reports_number(self, tmp_path):
        rng = np.random.default_rng(8)
        task = gen_task(TaskFamily("gripper-size"), rng)
        data = gen_dataset(task, 3, rng)
        path = tmp_path / "data.jsonl"
        save_dataset(data, path)
        lines = path.read_text().splitlines()
        lines[1] = "{not json"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(Exception) as err:
            load_dataset(path)
        assert "2" in str(err.value)
