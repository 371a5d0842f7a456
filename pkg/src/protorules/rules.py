"""Probabilistic planning rules, rule sets, and the noisy transition model.

A rule pairs an action schema and a context with a list of explicit change
formulas (outcomes) and a probability vector whose last entry is the noise
probability.  The transition distribution is the standard noisy-rule
approximation: an explicit outcome's probability if it explains the
observed successor, otherwise ``p_noise * p_min``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import (
    EMPTY_FORMULA,
    ActionTerm,
    Formula,
    RelationalError,
    State,
    Term,
    Var,
    Vocabulary,
    apply_outcome,
    bind_action,
    formula_holds,
)

DEFAULT_P_MIN = 1e-6

PROB_TOL = 1e-9


class OverlappingRulesError(RelationalError):
    """Two or more non-default rules apply to the same (state, action)."""


class OverlappingOutcomesError(RelationalError):
    """Two outcomes of one rule produced the same successor state."""


def outcomes_overlap(o1: Formula, o2: Formula, context: Formula) -> bool:
    """Conservative syntactic overlap test.

    Returns False (provably disjoint) iff some term is forced to different
    values by the two outcomes in every applicable state: either the term
    is assigned conflicting values by the outcomes themselves, or one
    outcome assigns it a value conflicting with what the context pins for
    any state the rule applies to.  Returns True otherwise (possible
    overlap).
    """
    if o1 == o2:
        return True

    def determined(o: Formula, t: Term):
        v = o.get(t)
        if v is not None:
            return v
        return context.get(t)

    for t in set(o1.terms) | set(o2.terms):
        v1 = determined(o1, t)
        v2 = determined(o2, t)
        if v1 is not None and v2 is not None and v1 != v2:
            return False
    return True


@dataclass(frozen=True)
class Rule:
    """An action schema, a context, non-overlapping explicit outcomes, and
    a probability vector of length ``len(outcomes) + 1`` (noise last)."""

    action: ActionTerm
    context: Formula
    outcomes: tuple  # of Formula
    probs: tuple  # floats, noise entry last

    def __post_init__(self):
        if len(self.probs) != len(self.outcomes) + 1:
            raise RelationalError(
                "probability vector must have one entry per outcome plus noise")
        if any(p < -PROB_TOL for p in self.probs):
            raise RelationalError("negative outcome probability")
        if abs(sum(self.probs) - 1.0) > PROB_TOL:
            raise RelationalError("outcome probabilities must sum to 1")

    def validate_outcomes(self) -> None:
        for i in range(len(self.outcomes)):
            for j in range(i + 1, len(self.outcomes)):
                if self.outcomes[i] == self.outcomes[j]:
                    raise OverlappingOutcomesError(
                        f"duplicate outcome {self.outcomes[i]}")
                if outcomes_overlap(self.outcomes[i], self.outcomes[j],
                                    self.context):
                    raise OverlappingOutcomesError(
                        f"possibly-overlapping outcomes "
                        f"{self.outcomes[i]} / {self.outcomes[j]}")

    @property
    def p_noise(self) -> float:
        return self.probs[-1]

    def variables(self) -> tuple:
        return self.action.variables()

    def to_json(self) -> dict:
        return {
            "action": self.action.to_json(),
            "context": self.context.to_json(),
            "outcomes": [o.to_json() for o in self.outcomes],
            "probs": list(self.probs),
        }

    @staticmethod
    def from_json(obj: dict) -> "Rule":
        return Rule(
            action=ActionTerm.from_json(obj["action"]),
            context=Formula.from_json(obj["context"]),
            outcomes=tuple(Formula.from_json(o) for o in obj["outcomes"]),
            probs=tuple(obj["probs"]),
        )


@dataclass(frozen=True)
class RuleSketch:
    """A rule structure with the probability vector integrated out: the
    shape the structure search manipulates and the scoring function sees."""

    action: ActionTerm
    context: Formula
    outcomes: tuple  # of Formula

    def key(self) -> tuple:
        return (self.action, self.context, self.outcomes)

    @staticmethod
    def from_rule(r: Rule) -> "RuleSketch":
        return RuleSketch(r.action, r.context, r.outcomes)

    def with_probs(self, probs: Sequence[float]) -> Rule:
        return Rule(self.action, self.context, self.outcomes, tuple(probs))


@dataclass(frozen=True)
class RuleSet:
    """A set of rules plus the implicit default rule (empty context,
    outcomes {no-change, noise})."""

    rules: tuple  # of Rule
    default_probs: tuple = (0.5, 0.5)  # (no-change, noise)
    p_min: float = DEFAULT_P_MIN

    def __post_init__(self):
        if abs(sum(self.default_probs) - 1.0) > PROB_TOL:
            raise RelationalError("default probabilities must sum to 1")
        if not (0.0 < self.p_min <= 1e-3):
            raise RelationalError("p_min must lie in (0, 1e-3]")

    def default_rule(self) -> Rule:
        return Rule(action=ActionTerm("*default*"), context=EMPTY_FORMULA,
                    outcomes=(EMPTY_FORMULA,), probs=self.default_probs)

    def applicable_rule(self, s: State, a: ActionTerm):
        """The unique applicable rule with its binding, or the default
        rule with an empty binding."""
        hits = []
        for r in self.rules:
            theta = bind_action(r.action, a)
            if theta is None:
                continue
            if formula_holds(r.context, theta, s):
                hits.append((r, theta))
        if len(hits) > 1:
            raise OverlappingRulesError(
                f"{len(hits)} rules apply to {a} in {s!r}")
        if hits:
            return hits[0]
        return self.default_rule(), {}

    def explicit_successors(self, s: State, a: ActionTerm):
        r, theta = self.applicable_rule(s, a)
        return explicit_successors(r, s, theta), r.p_noise

    def transition_prob(self, s: State, a: ActionTerm, s_next: State) -> float:
        r, theta = self.applicable_rule(s, a)
        idx = attribute_outcome(r, theta, s, s_next)
        if idx is None:
            return r.p_noise * self.p_min
        return r.probs[idx]

    def sample_next(self, s: State, a: ActionTerm, rng: np.random.Generator,
                    vocab: Optional[Vocabulary] = None):
        """Sample a successor; returns (state, tag) where tag is the
        outcome index or "noise"."""
        r, theta = self.applicable_rule(s, a)
        idx = int(rng.choice(len(r.probs), p=np.asarray(r.probs) / sum(r.probs)))
        if idx < len(r.outcomes):
            return apply_outcome(s, r.outcomes[idx], theta), idx
        if vocab is None:
            raise RelationalError("sampling the noise outcome needs a vocabulary")
        return perturb_state(s, vocab, rng), "noise"

    def validate(self, examples: Iterable = ()) -> None:
        """Check outcome non-overlap for every rule, and per-example
        applicability uniqueness on a reference example set."""
        for r in self.rules:
            r.validate_outcomes()
        for ex in examples:
            self.applicable_rule(ex.state, ex.action)  # raises on overlap

    def to_json(self) -> dict:
        return {
            "rules": [r.to_json() for r in self.rules],
            "default_probs": list(self.default_probs),
            "p_min": self.p_min,
        }

    @staticmethod
    def from_json(obj: dict) -> "RuleSet":
        return RuleSet(
            rules=tuple(Rule.from_json(r) for r in obj["rules"]),
            default_probs=tuple(obj["default_probs"]),
            p_min=obj["p_min"],
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @staticmethod
    def load(path) -> "RuleSet":
        with open(path) as fh:
            return RuleSet.from_json(json.load(fh))


@dataclass(frozen=True)
class Example:
    """One observed transition: prior state, ground action, next state.
    Examples are i.i.d. draws, not trajectory steps."""

    state: State
    action: ActionTerm
    next_state: State

    def to_json(self) -> dict:
        return {"state": self.state.to_json(),
                "action": self.action.to_json(),
                "next_state": self.next_state.to_json()}

    @staticmethod
    def from_json(obj: dict) -> "Example":
        return Example(State.from_json(obj["state"]),
                       ActionTerm.from_json(obj["action"]),
                       State.from_json(obj["next_state"]))


def explicit_successors(r: Rule, s: State, theta: Mapping[Var, str]):
    """One (successor, probability) pair per explicit outcome.  Raises if
    two outcomes coincide on this state (overlap violation)."""
    out = []
    seen = {}
    for i, o in enumerate(r.outcomes):
        nxt = apply_outcome(s, o, theta)
        if nxt in seen:
            raise OverlappingOutcomesError(
                f"outcomes {seen[nxt]} and {i} coincide on {s!r}")
        seen[nxt] = i
        out.append((nxt, r.probs[i]))
    return out


def attribute_outcome(r: Rule, theta: Mapping[Var, str], s: State,
                      s_next: State) -> Optional[int]:
    """Index of the unique explicit outcome with f_o(s) = s_next, or None
    for the noise outcome."""
    match = None
    for i, o in enumerate(r.outcomes):
        if _outcome_explains(o, theta, s, s_next):
            if match is not None:
                raise OverlappingOutcomesError(
                    f"outcomes {match} and {i} both explain the transition")
            match = i
    return match


def _outcome_explains(o: Formula, theta: Mapping[Var, str], s: State,
                      s_next: State) -> bool:
    # f_o(s) == s_next without materializing the successor: every literal
    # of the ground outcome must hold in s_next, and every other term must
    # be unchanged.
    ground = {}
    for t, v in o.items():
        gt = t.substitute(theta) if not t.is_ground() else t
        gv = theta[v] if isinstance(v, Var) else v
        if s_next.get(gt) != gv:
            return False
        ground[gt] = gv
    for t, v in s_next.mapping().items():
        if v != s.get(t) and t not in ground:
            return False
    return True


def perturb_state(s: State, vocab: Vocabulary, rng: np.random.Generator) -> State:
    """Noise-state generator for synthetic data: flip 1-3 uniformly chosen
    ground literals to uniformly chosen *other* values in range."""
    terms = sorted(s.terms(), key=Term.key)
    k = int(rng.integers(1, 4))
    idx = rng.choice(len(terms), size=min(k, len(terms)), replace=False)
    changes = {}
    for i in idx:
        t = terms[int(i)]
        values = [v for v in vocab.function(t.symbol).values if v != s.value(t)]
        if values:
            changes[t] = values[int(rng.integers(len(values)))]
    return s.updated(changes)
