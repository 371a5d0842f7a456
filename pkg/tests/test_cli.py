import json

import pytest
from click.testing import CliRunner

from protorules.cli import main
from protorules.evaluate import read_csv
from protorules.priors import RuleSetProto
from protorules.rules import RuleSet


@pytest.fixture()
def runner():
    return CliRunner()


def run(runner, args):
    return runner.invoke(main, args, catch_exceptions=False)


class TestGen:
    def test_counts(self, runner, tmp_path):
        out = tmp_path / "src"
        res = run(runner, ["gen", "--family", "gripper-size", "--k", "3",
                           "--n-source", "7", "--seed", "1",
                           "--out", str(out)])
        assert res.exit_code == 0
        assert len(list(out.glob("task_*.json"))) == 3
        for i in range(3):
            lines = (out / f"dataset_{i}.jsonl").read_text().splitlines()
            assert len(lines) == 7

    def test_same_seed_identical_bytes(self, runner, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            run(runner, ["gen", "--family", "slippery-gripper", "--k", "2",
                         "--n-source", "5", "--seed", "9", "--out", str(out)])
        for name in ("task_0.json", "dataset_1.jsonl"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_invalid_family_is_usage_error(self, runner, tmp_path):
        res = runner.invoke(main, ["gen", "--family", "bogus",
                                   "--out", str(tmp_path)])
        assert res.exit_code == 2


@pytest.fixture(scope="module")
def source_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "src"
    CliRunner().invoke(main, ["gen", "--family", "gripper-size", "--k", "2",
                              "--n-source", "60", "--seed", "3",
                              "--out", str(out)], catch_exceptions=False)
    return out


class TestLearnTransferEval:
    def test_pipeline(self, runner, source_dir, tmp_path):
        proto = tmp_path / "proto.json"
        trace = tmp_path / "trace.jsonl"
        res = run(runner, ["learn", str(source_dir / "dataset_0.jsonl"),
                           str(source_dir / "dataset_1.jsonl"),
                           "--vocab", str(source_dir / "task_0.json"),
                           "--out", str(proto), "--trace", str(trace)])
        assert res.exit_code == 0
        g = RuleSetProto.load(proto)
        assert all(p.action.symbol == "pickup" for p in g.protos)

        # trace scores never decrease within a search run
        records = [json.loads(ln) for ln in trace.read_text().splitlines()]
        for rec in records:
            assert {"search", "step", "score"} <= set(rec)

        tgt = tmp_path / "tgt"
        run(runner, ["gen", "--family", "gripper-size", "--k", "1",
                     "--n-source", "15", "--seed", "44", "--out", str(tgt)])
        learned = tmp_path / "learned.json"
        res = run(runner, ["transfer", "--proto", str(proto),
                           "--dataset", str(tgt / "dataset_0.jsonl"),
                           "--vocab", str(tgt / "task_0.json"),
                           "--out", str(learned)])
        assert res.exit_code == 0
        RuleSet.load(learned)

        res = run(runner, ["eval", "--truth", str(tgt / "task_0.json"),
                           "--ruleset", str(learned),
                           "--test-size", "100", "--seed", "5"])
        assert res.exit_code == 0
        float(res.output.strip())

    def test_learn_empty_dataset_gives_empty_prototype(self, runner,
                                                       source_dir, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        proto = tmp_path / "proto.json"
        res = run(runner, ["learn", str(empty),
                           "--vocab", str(source_dir / "task_0.json"),
                           "--out", str(proto)])
        assert res.exit_code == 0
        assert len(RuleSetProto.load(proto)) == 0

    def test_eval_truth_against_itself(self, runner, source_dir, tmp_path):
        truth_path = source_dir / "task_0.json"
        rs_path = tmp_path / "truth_rules.json"
        from protorules.blocksworld import TaskSpec
        TaskSpec.load(truth_path).truth.save(rs_path)
        res = run(runner, ["eval", "--truth", str(truth_path),
                           "--ruleset", str(rs_path), "--test-size", "50"])
        assert res.exit_code == 0
        assert float(res.output.strip()) == 1.0


class TestExperimentCommand:
    def test_smoke_writes_valid_csvs(self, runner, tmp_path):
        out = tmp_path / "results"
        res = run(runner, ["experiment", "--family", "gripper-size",
                           "--k", "2", "--n-source", "30",
                           "--n-target", "2", "--n-target", "5",
                           "--reps", "2", "--test-size", "30",
                           "--seed", "2", "--out", str(out)])
        assert res.exit_code == 0
        raw = read_csv(out / "gripper-size_raw.csv")
        agg = read_csv(out / "gripper-size_aggregate.csv")
        assert len(raw) == 8
        assert len(agg) == 4
        assert {r["condition"] for r in agg} == {"transfer", "no-transfer"}

    def test_transfer_only_condition(self, runner, tmp_path):
        out = tmp_path / "results"
        res = run(runner, ["experiment", "--family", "gripper-size",
                           "--k", "2", "--n-source", "20", "--n-target", "2",
                           "--reps", "2", "--test-size", "20", "--seed", "1",
                           "--no-no-transfer-baseline", "--out", str(out)])
        assert res.exit_code == 0
        agg = read_csv(out / "gripper-size_aggregate.csv")
        assert {r["condition"] for r in agg} == {"transfer"}

    def test_config_file_and_unknown_key(self, runner, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("experiment:\n  family: gripper-size\n  reps: 2\n")
        res = runner.invoke(main, ["experiment", "--config", str(cfg),
                                   "--out", str(tmp_path / "r")])
        assert res.exit_code == 2  # reps is not a config key

    def test_bad_hyperparam_rejected(self, runner, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("hyperparams:\n  alpha: 2.0\n")
        res = runner.invoke(main, ["experiment", "--config", str(cfg),
                                   "--out", str(tmp_path / "r")])
        assert res.exit_code == 2


class TestEntryExitCodes:
    def test_runtime_failure_is_one(self, tmp_path, monkeypatch):
        from protorules.cli import entry
        bad = tmp_path / "missing_dir" / "nested"
        monkeypatch.setattr("sys.argv", [
            "protorules", "eval", "--truth", "/nonexistent.json",
            "--ruleset", "/nonexistent.json"])
        assert entry() == 2  # click validates missing paths as usage errors

    def test_malformed_json_is_runtime_failure(self, tmp_path, monkeypatch):
        from protorules.cli import entry
        p = tmp_path / "bad.json"
        p.write_text("{broken")
        monkeypatch.setattr("sys.argv", [
            "protorules", "eval", "--truth", str(p), "--ruleset", str(p)])
        assert entry() == 1
