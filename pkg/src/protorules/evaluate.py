"""Accuracy evaluation by variational distance and the multi-task
transfer experiment harness.

The distance between two models' next-state distributions is the plain L1
sum (no 1/2 factor), so accuracy = 1 - mean distance can be negative.  The
default "bucketed" mode sums over the union of both models' explicit
successors and treats the diffuse noise mass as one shared bucket; the
"enumerated" mode sums over every state of a small world and serves as the
exact oracle.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import hashlib
import io
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .blocksworld import (
    FAMILIES,
    GROUND_PICKUP,
    GenParams,
    TaskFamily,
    gen_dataset,
    gen_initial_state,
    gen_task,
)
from .core import ActionTerm, State, Vocabulary, enumerate_states
from .priors import Hyperparams, RuleSetProto
from .rules import RuleSet
from .search import coordinate_ascent, transfer_learn

TRANSFER = "transfer"
NO_TRANSFER = "no-transfer"

CSV_COLUMNS = ("family", "condition", "K", "N_source", "N_target",
               "repetition", "accuracy", "wall_time_seconds")
AGG_COLUMNS = ("family", "condition", "K", "N_source", "N_target",
               "mean", "ci95")


def variational_distance(rs_true: RuleSet, rs_learned: RuleSet, s: State,
                         a: ActionTerm, mode: str = "bucketed",
                         vocab: Optional[Vocabulary] = None,
                         objects: Optional[Sequence[str]] = None) -> float:
    """L1 distance between the two models' next-state distributions at
    (s, a)."""
    if mode == "bucketed":
        succ1, noise1 = rs_true.explicit_successors(s, a)
        succ2, noise2 = rs_learned.explicit_successors(s, a)
        p1 = {st: p for st, p in succ1}
        p2 = {st: p for st, p in succ2}
        total = 0.0
        for st in set(p1) | set(p2):
            q1 = p1.get(st, noise1 * rs_true.p_min)
            q2 = p2.get(st, noise2 * rs_learned.p_min)
            total += abs(q1 - q2)
        return total + abs(noise1 - noise2)
    if mode == "enumerated":
        if vocab is None or objects is None:
            raise ValueError("enumerated mode needs a vocabulary and objects")
        total = 0.0
        for st in enumerate_states(vocab, objects):
            total += abs(rs_true.transition_prob(s, a, st)
                         - rs_learned.transition_prob(s, a, st))
        return total
    raise ValueError(f"unknown mode {mode!r}")


def accuracy(rs_true: RuleSet, rs_learned: RuleSet,
             test_states: Sequence[State], a: ActionTerm) -> float:
    """1 minus the mean variational distance over the test states."""
    if not test_states:
        raise ValueError("empty test set")
    d = sum(variational_distance(rs_true, rs_learned, s, a)
            for s in test_states)
    return 1.0 - d / len(test_states)


@dataclass(frozen=True)
class ExperimentConfig:
    family: str = "gripper-size"
    k: int = 5
    n_source: int = 200
    n_targets: tuple = (2, 5, 10, 20, 50, 100)
    repetitions: int = 20
    test_size: int = 1000
    seed: int = 0
    hyper: Hyperparams = field(default_factory=Hyperparams)
    conditions: tuple = (TRANSFER, NO_TRANSFER)
    jobs: int = 1
    gen_params: GenParams = field(default_factory=GenParams)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if min(self.k, self.n_source, self.test_size, *self.n_targets) <= 0:
            raise ValueError("all counts must be positive")
        if self.repetitions < 2:
            raise ValueError("need at least 2 repetitions for CIs")
        bad = set(self.conditions) - {TRANSFER, NO_TRANSFER}
        if bad:
            raise ValueError(f"unknown conditions: {sorted(bad)}")

    def to_dict(self) -> dict:
        d = {
            "family": self.family, "k": self.k, "n_source": self.n_source,
            "n_targets": list(self.n_targets),
            "repetitions": self.repetitions, "test_size": self.test_size,
            "seed": self.seed, "hyper": self.hyper.to_dict(),
            "conditions": list(self.conditions),
            "gen_params": dataclasses.asdict(self.gen_params),
        }
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class RunRecord:
    condition: str
    n_target: int
    repetition: int
    accuracy: float
    wall_time_seconds: float


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    records: tuple  # of RunRecord
    failures: tuple = ()  # of (condition, n_target, repetition, message)

    def samples(self, condition: str, n_target: int) -> list:
        return [r.accuracy for r in self.records
                if r.condition == condition and r.n_target == n_target]

    def summary(self) -> list:
        """Rows of (condition, n_target, mean, ci95 half-width)."""
        rows = []
        for cond in self.config.conditions:
            for n in self.config.n_targets:
                xs = self.samples(cond, n)
                if not xs:
                    continue
                mean = float(np.mean(xs))
                if len(xs) >= 2:
                    sem = float(np.std(xs, ddof=1)) / math.sqrt(len(xs))
                    ci = float(stats.t.ppf(0.975, len(xs) - 1)) * sem
                else:
                    ci = float("nan")
                rows.append((cond, n, mean, ci))
        return rows


def _one_repetition(cfg: ExperimentConfig, rep: int, child_seed) -> tuple:
    """Steps 1-7 for one repetition; returns (RunRecords, failures).

    A failed run (one condition x dataset-size cell, e.g. the learned
    rules overlap on an unseen test state) is recorded and skipped
    without poisoning the rest of the repetition.
    """
    rng = np.random.default_rng(child_seed)
    family = TaskFamily(cfg.family, cfg.gen_params)
    hyper = cfg.hyper

    sources = [gen_task(family, rng, seed=rep) for _ in range(cfg.k)]
    vocab = sources[0].vocab
    datasets = [gen_dataset(t, cfg.n_source, rng, cfg.gen_params)
                for t in sources]
    g_star = RuleSetProto()
    if TRANSFER in cfg.conditions:
        g_star, _, _ = coordinate_ascent(datasets, vocab, hyper)

    target = gen_task(family, rng, seed=rep)
    pool = gen_dataset(target, max(cfg.n_targets), rng, cfg.gen_params)
    test_states = [gen_initial_state(vocab, rng, cfg.gen_params,
                                     target.objects)
                   for _ in range(cfg.test_size)]

    records = []
    failures = []
    for n in cfg.n_targets:
        data = pool[:n]
        for cond in cfg.conditions:
            g = g_star if cond == TRANSFER else RuleSetProto()
            t0 = time.perf_counter()
            try:
                learned = transfer_learn(g, data, vocab, hyper)
                acc = accuracy(target.truth, learned, test_states,
                               GROUND_PICKUP)
            except Exception as exc:  # noqa: BLE001 - recorded upstream
                failures.append((cond, n, rep,
                                 f"{type(exc).__name__}: {exc}"))
                continue
            records.append(RunRecord(cond, n, rep, acc,
                                     time.perf_counter() - t0))
    return records, failures


def run_experiment(cfg: ExperimentConfig, progress=None) -> ExperimentResult:
    """The full protocol: per repetition, sample source tasks and data,
    learn the prototype set, then learn the target task under each
    condition and dataset size and score accuracy on a fresh test set.

    Repetitions run in parallel (``cfg.jobs`` processes) with seeds spawned
    deterministically from the master seed.  Failed runs (one condition x
    dataset-size cell of one repetition) are dropped with a warning when
    fewer than 10% of all runs fail, otherwise the whole experiment
    aborts.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.repetitions)
    records = []
    failures = []

    if cfg.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(cfg.jobs) as pool:
            futs = {pool.submit(_one_repetition, cfg, rep, seeds[rep]): rep
                    for rep in range(cfg.repetitions)}
            for fut in concurrent.futures.as_completed(futs):
                rep = futs[fut]
                recs, fails = fut.result()
                records.extend(recs)
                failures.extend(fails)
                if progress is not None:
                    progress(rep)
    else:
        for rep in range(cfg.repetitions):
            recs, fails = _one_repetition(cfg, rep, seeds[rep])
            records.extend(recs)
            failures.extend(fails)
            if progress is not None:
                progress(rep)

    if failures:
        n_runs = (cfg.repetitions * len(cfg.conditions)
                  * len(cfg.n_targets))
        if len(failures) >= 0.1 * n_runs:
            raise RuntimeError(
                f"{len(failures)}/{n_runs} runs failed: {failures}")
        warnings.warn(f"dropped {len(failures)} failed runs: {failures}")
    records.sort(key=lambda r: (r.condition, r.n_target, r.repetition))
    failures.sort()
    return ExperimentResult(cfg, tuple(records), tuple(failures))


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def write_raw_csv(result: ExperimentResult, path) -> None:
    cfg = result.config
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg.config_hash()}\n")
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in result.records:
            w.writerow([cfg.family, r.condition, cfg.k, cfg.n_source,
                        r.n_target, r.repetition, _fmt(r.accuracy),
                        _fmt(r.wall_time_seconds)])


def write_aggregate_csv(result: ExperimentResult, path) -> None:
    cfg = result.config
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg.config_hash()}\n")
        w = csv.writer(fh)
        w.writerow(AGG_COLUMNS)
        for cond, n, mean, ci in result.summary():
            w.writerow([cfg.family, cond, cfg.k, cfg.n_source, n,
                        _fmt(mean), _fmt(ci)])


def read_csv(path) -> list:
    """Rows of a harness CSV as dicts, skipping comment lines."""
    with open(path) as fh:
        body = "".join(ln for ln in fh if not ln.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))
