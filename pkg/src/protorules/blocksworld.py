"""Synthetic blocks-world task families and the example-sampling protocol.

Four families of related tasks are supported:

* ``gripper-size``: one rule gated on a task-specific block size, with
  distracter ``color``/``texture`` predicates in the vocabulary.
* ``slippery-gripper``: four rules crossing wet/dry with picking up from a
  block or from the table (from-block rules carry an extra fall-to-table
  outcome), with per-task jitter on the outcome probabilities.
* ``slippery-size``: the four slippery rules, each additionally gated on
  a task-specific size.
* ``random-unrelated``: 1-4 rules with random contexts and outcomes,
  rejection-sampled to validity.

Training examples are i.i.d. transitions of ``pickup(A, B)`` from initial
states with uniformly random ground-term values, biased so that A is
always a block and the gripper is usually empty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import (
    FALSE,
    TRUE,
    ActionTerm,
    Formula,
    FunctionSymbol,
    RelationalError,
    State,
    Term,
    Var,
    Vocabulary,
    canonical_schema,
)
from .rules import Example, Rule, RuleSet

FAMILIES = ("gripper-size", "slippery-gripper", "slippery-size",
            "random-unrelated")

OBJECTS = ("A", "B", "TABLE")

X, Y = Var("X"), Var("Y")

PICKUP = canonical_schema("pickup", 2)

REJECTION_CAP = 10 ** 4


@dataclass(frozen=True)
class GenParams:
    """Family parameters; defaults follow the experimental setup."""

    n_sizes: int = 7
    n_colors: int = 3
    n_textures: int = 3
    success_low: float = 0.6
    success_high: float = 0.95
    gripper_noise: float = 0.02
    # Dirichlet concentration for per-task jitter of slippery outcome
    # probabilities; None disables the perturbation.
    jitter_concentration: Optional[float] = 50.0
    gripper_empty_prob: float = 0.9
    p_min: float = 1e-6

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(d) -> "GenParams":
        return GenParams(**d)


@dataclass(frozen=True)
class TaskFamily:
    name: str
    params: GenParams = field(default_factory=GenParams)

    def __post_init__(self):
        if self.name not in FAMILIES:
            raise ValueError(f"unknown task family {self.name!r}")
        p = self.params
        if p.n_sizes < 2 or p.n_colors < 1 or p.n_textures < 1:
            raise ValueError("family parameters out of range")
        if not (0.0 < p.success_low <= p.success_high < 1.0):
            raise ValueError("success interval out of range")


@dataclass(frozen=True)
class TaskSpec:
    """A sampled task: its family, vocabulary and ground-truth rule set."""

    family: str
    vocab: Vocabulary
    truth: RuleSet
    seed: int
    objects: tuple = OBJECTS

    def to_json(self) -> dict:
        return {"family": self.family, "vocab": self.vocab.to_json(),
                "truth": self.truth.to_json(), "seed": self.seed,
                "objects": list(self.objects)}

    @staticmethod
    def from_json(obj: dict) -> "TaskSpec":
        return TaskSpec(obj["family"], Vocabulary.from_json(obj["vocab"]),
                        RuleSet.from_json(obj["truth"]), obj["seed"],
                        tuple(obj["objects"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @staticmethod
    def load(path) -> "TaskSpec":
        with open(path) as fh:
            return TaskSpec.from_json(json.load(fh))


def _base_functions() -> list:
    return [
        FunctionSymbol("on", 2, (TRUE, FALSE)),
        FunctionSymbol("clear", 1, (TRUE, FALSE)),
        FunctionSymbol("inhand", 1, (TRUE, FALSE)),
        FunctionSymbol("inhand-nil", 0, (TRUE, FALSE)),
        FunctionSymbol("block", 1, (TRUE, FALSE)),
        FunctionSymbol("table", 1, (TRUE, FALSE)),
    ]


def size_values(n: int) -> tuple:
    return tuple(f"s{i + 1}" for i in range(n))


def make_vocabulary(family: str, params: GenParams = GenParams()) -> Vocabulary:
    funcs = _base_functions()
    extra_constants: list = []
    if family in ("slippery-gripper", "slippery-size", "random-unrelated"):
        funcs.append(FunctionSymbol("wet", 0, (TRUE, FALSE)))
    if family in ("gripper-size", "slippery-size"):
        sizes = size_values(params.n_sizes)
        funcs.append(FunctionSymbol("size", 1, sizes))
        extra_constants += list(sizes)
    if family == "gripper-size":
        colors = tuple(f"c{i + 1}" for i in range(params.n_colors))
        textures = tuple(f"t{i + 1}" for i in range(params.n_textures))
        funcs.append(FunctionSymbol("color", 1, colors))
        funcs.append(FunctionSymbol("texture", 1, textures))
        extra_constants += list(colors) + list(textures)
    return Vocabulary(
        functions=tuple(funcs),
        actions=(("pickup", 2),),
        constants=(TRUE, FALSE) + OBJECTS + tuple(extra_constants),
        object_types={"A": "block", "B": "block", "TABLE": "table"},
    )


def _t(sym: str, *args) -> Term:
    return Term(sym, args)


SUCCESS_OUTCOME = Formula({
    _t("inhand", X): TRUE,
    _t("clear", X): FALSE,
    _t("inhand-nil"): FALSE,
    _t("on", X, Y): FALSE,
    _t("clear", Y): TRUE,
})

FALL_TO_TABLE_OUTCOME = Formula({
    _t("on", X, "TABLE"): TRUE,
    _t("on", X, Y): FALSE,
})

NO_CHANGE = Formula()

# Base outcome probability vectors for the slippery family; the from-block
# vectors are the canonical wet/dry pickup distributions, the from-table
# vectors drop the fall outcome.
SLIPPERY_BASE = {
    ("dry", "from-block"): (0.7, 0.2, 0.05, 0.05),
    ("wet", "from-block"): (0.2, 0.2, 0.3, 0.3),
    ("dry", "from-table"): (0.8, 0.15, 0.05),
    ("wet", "from-table"): (0.3, 0.4, 0.3),
}


def _jitter(base: Sequence[float], rng: np.random.Generator,
            concentration: Optional[float]) -> tuple:
    if concentration is None:
        return tuple(base)
    p = rng.dirichlet(np.asarray(base) * concentration)
    p = np.maximum(p, 1e-4)
    return tuple(float(x) for x in p / p.sum())


def _gripper_size_rules(rng, params: GenParams) -> tuple:
    sizes = size_values(params.n_sizes)
    s = sizes[int(rng.integers(len(sizes)))]
    p_succ = float(rng.uniform(params.success_low, params.success_high))
    noise = params.gripper_noise
    context = Formula({_t("size", X): s, _t("inhand-nil"): TRUE})
    rule = Rule(PICKUP, context, (SUCCESS_OUTCOME, NO_CHANGE),
                (p_succ, 1.0 - p_succ - noise, noise))
    return (rule,)


def _slippery_rules(rng, params: GenParams, with_size: bool) -> tuple:
    common = {_t("on", X, Y): TRUE, _t("clear", X): TRUE,
              _t("inhand-nil"): TRUE}
    if with_size:
        sizes = size_values(params.n_sizes)
        common[_t("size", X)] = sizes[int(rng.integers(len(sizes)))]
    rules = []
    for wet in ("dry", "wet"):
        for src in ("from-block", "from-table"):
            ctx = dict(common)
            ctx[_t("wet")] = TRUE if wet == "wet" else FALSE
            if src == "from-block":
                ctx[_t("block", Y)] = TRUE
                ctx[_t("table", Y)] = FALSE
                outcomes = (SUCCESS_OUTCOME, FALL_TO_TABLE_OUTCOME, NO_CHANGE)
            else:
                ctx[_t("table", Y)] = TRUE
                ctx[_t("block", Y)] = FALSE
                outcomes = (SUCCESS_OUTCOME, NO_CHANGE)
            probs = _jitter(SLIPPERY_BASE[(wet, src)], rng,
                            params.jitter_concentration)
            rules.append(Rule(PICKUP, Formula(ctx), outcomes, probs))
    return tuple(rules)


def _random_rules(rng, params: GenParams, vocab: Vocabulary) -> tuple:
    """Random rule sets of 1-4 rules, rejection-sampled to validity.

    Rule contexts share discriminator literals with distinct value
    combinations so no two rules can apply to the same state; contexts and
    outcomes otherwise contain random literals of random length.
    """
    terms = _variable_terms(vocab)
    bool_terms = [t for t in terms if vocab.function(t.symbol).values == (TRUE, FALSE)]

    for _ in range(REJECTION_CAP):
        m = int(rng.integers(1, 5))
        n_disc = 0 if m == 1 else (1 if m == 2 else 2)
        disc = [bool_terms[i] for i in
                rng.choice(len(bool_terms), size=n_disc, replace=False)]
        combos = [tuple((rng.integers(2) == 0) for _ in range(n_disc))
                  for _ in range(m)]
        if len(set(combos)) != m:
            continue
        rules = []
        ok = True
        for combo in combos:
            ctx = {t: (TRUE if bit else FALSE) for t, bit in zip(disc, combo)}
            for _ in range(int(rng.integers(1, 4))):
                t = terms[int(rng.integers(len(terms)))]
                if t not in ctx:
                    vals = vocab.function(t.symbol).values
                    ctx[t] = vals[int(rng.integers(len(vals)))]
            context = Formula(ctx)
            n_out = int(rng.integers(1, 4))
            outcomes = []
            for _ in range(n_out):
                lits = {}
                for _ in range(int(rng.integers(1, 4))):
                    t = terms[int(rng.integers(len(terms)))]
                    vals = vocab.function(t.symbol).values
                    lits[t] = vals[int(rng.integers(len(vals)))]
                outcomes.append(Formula(lits))
            probs = rng.dirichlet(np.ones(n_out + 1))
            probs = np.maximum(probs, 1e-4)
            probs = tuple(float(x) for x in probs / probs.sum())
            try:
                r = Rule(PICKUP, context, tuple(outcomes), probs)
                r.validate_outcomes()
            except RelationalError:
                ok = False
                break
            rules.append(r)
        if not ok:
            continue
        try:
            rs = RuleSet(tuple(rules), default_probs=(1.0, 0.0),
                         p_min=params.p_min)
            rs.validate()
        except RelationalError:
            continue
        return tuple(rules)
    raise RelationalError("rejection cap exceeded for random rule sets")


def _variable_terms(vocab: Vocabulary) -> list:
    """All terms over the pickup schema variables (no object constants)."""
    out = []
    for f in sorted(vocab.functions, key=lambda f: f.name):
        if f.arity == 0:
            out.append(Term(f.name))
        elif f.arity == 1:
            out += [Term(f.name, (X,)), Term(f.name, (Y,))]
        elif f.arity == 2:
            out += [Term(f.name, (a, b)) for a in (X, Y) for b in (X, Y)]
    return out


def gen_task(family: TaskFamily, rng: np.random.Generator,
             seed: int = 0) -> TaskSpec:
    """Sample a ground-truth task from its family distribution."""
    params = family.params
    vocab = make_vocabulary(family.name, params)
    if family.name == "gripper-size":
        rules = _gripper_size_rules(rng, params)
    elif family.name == "slippery-gripper":
        rules = _slippery_rules(rng, params, with_size=False)
    elif family.name == "slippery-size":
        rules = _slippery_rules(rng, params, with_size=True)
    else:
        rules = _random_rules(rng, params, vocab)
    truth = RuleSet(rules, default_probs=(1.0, 0.0), p_min=params.p_min)
    truth.validate()
    return TaskSpec(family.name, vocab, truth, seed)


def gen_initial_state(vocab: Vocabulary, rng: np.random.Generator,
                      params: GenParams = GenParams(),
                      objects: Sequence[str] = OBJECTS) -> State:
    """Uniform random values over all ground terms, then the biases: A is
    always a block, and the gripper is usually empty."""
    terms = vocab.ground_terms(objects)
    m = {}
    for t in terms:
        vals = vocab.function(t.symbol).values
        m[t] = vals[int(rng.integers(len(vals)))]
    m[Term("block", ("A",))] = TRUE
    m[Term("table", ("A",))] = FALSE
    m[Term("inhand-nil")] = (TRUE if rng.random() < params.gripper_empty_prob
                             else FALSE)
    return State(m)


GROUND_PICKUP = ActionTerm("pickup", ("A", "B"))


def gen_example(spec: TaskSpec, rng: np.random.Generator,
                params: GenParams = GenParams()) -> Example:
    s = gen_initial_state(spec.vocab, rng, params, spec.objects)
    s_next, _ = spec.truth.sample_next(s, GROUND_PICKUP, rng, spec.vocab)
    return Example(s, GROUND_PICKUP, s_next)


def gen_dataset(spec: TaskSpec, n: int, rng: np.random.Generator,
                params: GenParams = GenParams()) -> list:
    return [gen_example(spec, rng, params) for _ in range(n)]


def save_dataset(examples: Sequence[Example], path) -> None:
    with open(path, "w") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), sort_keys=True) + "\n")


def load_dataset(path) -> list:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(Example.from_json(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise RelationalError(
                    f"{path}:{lineno}: malformed example ({exc})") from exc
    return out
