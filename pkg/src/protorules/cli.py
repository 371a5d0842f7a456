"""Command-line interface: dataset generation, prototype learning,
transfer, evaluation, and the full experiment harness.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from .blocksworld import (
    FAMILIES,
    GROUND_PICKUP,
    TaskFamily,
    TaskSpec,
    gen_dataset,
    gen_initial_state,
    gen_task,
    load_dataset,
    save_dataset,
)
from .evaluate import (
    ExperimentConfig,
    accuracy,
    run_experiment,
    write_aggregate_csv,
    write_raw_csv,
)
from .priors import Hyperparams, RuleSetProto
from .rules import RuleSet
from .search import coordinate_ascent, transfer_learn, write_trace

CONFIG_KEYS = {"hyperparams", "experiment", "seed", "jobs"}
EXPERIMENT_KEYS = {"family", "k", "n_source", "n_targets", "repetitions",
                   "test_size", "conditions"}


def load_config(path):
    """YAML config with two optional sections: ``hyperparams`` and
    ``experiment``, plus top-level ``seed`` and ``jobs``.  Unknown keys
    are rejected."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise click.UsageError(f"config {path} must be a mapping")
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
    exp = raw.get("experiment", {})
    bad = set(exp) - EXPERIMENT_KEYS
    if bad:
        raise click.UsageError(f"unknown experiment keys: {sorted(bad)}")
    try:
        hyper = Hyperparams.from_dict(raw.get("hyperparams", {}))
    except ValueError as exc:
        raise click.UsageError(str(exc))
    return {"hyper": hyper, "experiment": exp,
            "seed": raw.get("seed"), "jobs": raw.get("jobs")}


def _hyper(config) -> Hyperparams:
    return load_config(config)["hyper"] if config else Hyperparams()


@click.group()
def main():
    """Learn probabilistic relational planning rules across tasks."""


@main.command()
@click.option("--family", type=click.Choice(FAMILIES), required=True)
@click.option("--k", type=int, default=1, show_default=True,
              help="Number of tasks to sample.")
@click.option("--n-source", "n", type=int, default=100, show_default=True,
              help="Examples per task.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def gen(family, k, n, seed, out):
    """Sample K tasks and write spec + dataset files under OUT."""
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    fam = TaskFamily(family)
    for i in range(k):
        task = gen_task(fam, rng, seed=i)
        data = gen_dataset(task, n, rng)
        task.save(outdir / f"task_{i}.json")
        save_dataset(data, outdir / f"dataset_{i}.jsonl")
    click.echo(f"wrote {k} task specs and datasets to {outdir}")


@main.command()
@click.argument("datasets", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Task spec or vocabulary JSON.")
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False),
              help="Search trace JSONL output.")
def learn(datasets, vocab_path, config, out, trace_path):
    """Coordinate-ascent learn a rule-set prototype from source DATASETS."""
    vocab = _load_vocab(vocab_path)
    data = [load_dataset(p) for p in datasets]
    trace = [] if trace_path else None
    g, _, _ = coordinate_ascent(data, vocab, _hyper(config), trace=trace)
    g.save(out)
    if trace_path:
        write_trace(trace_path, trace)
    click.echo(f"learned prototype set with {len(g)} prototypes -> {out}")


@main.command()
@click.option("--proto", "proto_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False))
def transfer(proto_path, dataset, vocab_path, config, out, trace_path):
    """Learn a target task's rule set under a transferred prototype set."""
    g = RuleSetProto.load(proto_path)
    vocab = _load_vocab(vocab_path)
    data = load_dataset(dataset)
    trace = [] if trace_path else None
    rs = transfer_learn(g, data, vocab, _hyper(config), trace=trace)
    rs.save(out)
    if trace_path:
        write_trace(trace_path, trace)
    click.echo(f"learned rule set with {len(rs.rules)} rules -> {out}")


@main.command("eval")
@click.option("--truth", "truth_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Task spec JSON with ground truth.")
@click.option("--ruleset", "ruleset_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--test-size", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def eval_cmd(truth_path, ruleset_path, test_size, seed):
    """Print accuracy of a learned rule set against a task's ground truth."""
    task = TaskSpec.load(truth_path)
    learned = RuleSet.load(ruleset_path)
    rng = np.random.default_rng(seed)
    states = [gen_initial_state(task.vocab, rng, objects=task.objects)
              for _ in range(test_size)]
    acc = accuracy(task.truth, learned, states, GROUND_PICKUP)
    click.echo(f"{acc:.6f}")


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.option("--family", type=click.Choice(FAMILIES))
@click.option("--k", type=int)
@click.option("--n-source", type=int)
@click.option("--n-target", "n_targets", type=int, multiple=True)
@click.option("--reps", type=int)
@click.option("--seed", type=int)
@click.option("--jobs", type=int)
@click.option("--test-size", type=int)
@click.option("--no-transfer-baseline/--no-no-transfer-baseline",
              default=True, show_default=True,
              help="Include the empty-prototype baseline condition.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
def experiment(config, family, k, n_source, n_targets, reps, seed, jobs,
               test_size, no_transfer_baseline, out):
    """Run the transfer experiment and write raw + aggregate CSVs to OUT."""
    loaded = load_config(config) if config else {
        "hyper": Hyperparams(), "experiment": {}, "seed": None, "jobs": None}
    exp = dict(loaded["experiment"])
    override = {"family": family, "k": k, "n_source": n_source,
                "repetitions": reps, "test_size": test_size}
    for key, val in override.items():
        if val is not None:
            exp[key] = val
    if n_targets:
        exp["n_targets"] = tuple(n_targets)
    if "n_targets" in exp:
        exp["n_targets"] = tuple(exp["n_targets"])
    if "conditions" in exp:
        exp["conditions"] = tuple(exp["conditions"])
    if not no_transfer_baseline:
        exp["conditions"] = ("transfer",)
    eff_seed = seed if seed is not None else (loaded["seed"] or 0)
    eff_jobs = jobs if jobs is not None else (loaded["jobs"] or 1)
    try:
        cfg = ExperimentConfig(seed=eff_seed, jobs=eff_jobs,
                               hyper=loaded["hyper"], **exp)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(str(exc))
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    def progress(rep):
        click.echo(f"repetition {rep + 1}/{cfg.repetitions} done", err=True)

    result = run_experiment(cfg, progress=progress)
    raw = outdir / f"{cfg.family}_raw.csv"
    agg = outdir / f"{cfg.family}_aggregate.csv"
    write_raw_csv(result, raw)
    write_aggregate_csv(result, agg)
    click.echo(f"wrote {raw} and {agg}")
    for cond, n, mean, ci in result.summary():
        click.echo(f"  {cond:12s} N={n:4d} accuracy {mean:+.4f} +/- {ci:.4f}")


def _load_vocab(path):
    with open(path) as fh:
        obj = json.load(fh)
    if "vocab" in obj:
        return TaskSpec.from_json(obj).vocab
    from .core import Vocabulary
    return Vocabulary.from_json(obj)


def entry() -> int:
    try:
        main.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 2
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        return 2
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(entry())
