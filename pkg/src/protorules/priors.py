"""Rule-set prototypes and the generative measures over structures.

All measures are computed in log space.  Structurally impossible events
return ``LOG_ZERO`` (``-inf``) explicitly rather than underflowing.
Because the generative process discards invalid runs (duplicate terms,
duplicate rules), these are measures, not normalized distributions; only
ratios are ever used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from scipy.special import gammaln

from .core import (
    EMPTY_FORMULA,
    ActionTerm,
    Formula,
    RelationalError,
    Var,
    Vocabulary,
)

LOG_ZERO = float("-inf")

SEED = -1  # outcome-assignment marker: generated from the seed outcome


@dataclass(frozen=True)
class Hyperparams:
    """Free parameters of the generative model and scoring function.

    ``alpha``/``beta`` govern both rule and outcome counts; outcome-count
    overrides are available via ``alpha_outcome``/``beta_outcome``.
    Defaults are weakly regularizing choices, configurable from file.
    """

    alpha: float = 0.1
    beta: float = 0.9
    gamma_rule: float = 0.2
    gamma_out: float = 0.2
    beta_term: float = 0.8
    alpha_term: float = 0.3
    rho: float = 0.9
    alpha_proto: float = 0.5
    lambda_phi: float = 0.1
    p_min: float = 1e-6
    formula_score_exponent: float = 0.5
    alpha_outcome: Optional[float] = None
    beta_outcome: Optional[float] = None

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma_rule", "gamma_out", "beta_term",
                     "alpha_term", "rho", "alpha_proto"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must lie in (0,1), got {v}")
        if self.lambda_phi <= 0:
            raise ValueError("lambda_phi must be positive")
        if not (0.0 < self.formula_score_exponent <= 1.0):
            raise ValueError("formula_score_exponent must lie in (0,1]")
        if not (0.0 < self.p_min <= 1e-3):
            raise ValueError("p_min must lie in (0, 1e-3]")

    @property
    def alpha_out(self) -> float:
        return self.alpha if self.alpha_outcome is None else self.alpha_outcome

    @property
    def beta_out(self) -> float:
        return self.beta if self.beta_outcome is None else self.beta_outcome

    def to_dict(self) -> dict:
        d = {
            "alpha": self.alpha, "beta": self.beta,
            "gamma_rule": self.gamma_rule, "gamma_out": self.gamma_out,
            "beta_term": self.beta_term, "alpha_term": self.alpha_term,
            "rho": self.rho, "alpha_proto": self.alpha_proto,
            "lambda_phi": self.lambda_phi, "p_min": self.p_min,
            "formula_score_exponent": self.formula_score_exponent,
        }
        if self.alpha_outcome is not None:
            d["alpha_outcome"] = self.alpha_outcome
        if self.beta_outcome is not None:
            d["beta_outcome"] = self.beta_outcome
        return d

    @staticmethod
    def from_dict(d: Mapping) -> "Hyperparams":
        known = {f for f in Hyperparams.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
        return Hyperparams(**d)


@dataclass(frozen=True)
class RuleProto:
    """A prototype rule: like a rule, but carrying Dirichlet weights
    (one per explicit outcome, then the seed weight, then the noise
    weight) instead of outcome probabilities."""

    action: ActionTerm
    context: Formula
    outcomes: tuple  # of Formula, length n*
    phi: tuple  # positive floats, length n* + 2

    def __post_init__(self):
        if len(self.phi) != len(self.outcomes) + 2:
            raise RelationalError("phi must have length n* + 2")
        if any(w <= 0 for w in self.phi):
            raise RelationalError("Dirichlet weights must be strictly positive")

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)

    def structure_key(self) -> tuple:
        return (self.action, self.context, frozenset(self.outcomes))

    def to_json(self) -> dict:
        return {
            "action": self.action.to_json(),
            "context": self.context.to_json(),
            "outcomes": [o.to_json() for o in self.outcomes],
            "phi": list(self.phi),
        }

    @staticmethod
    def from_json(obj: dict) -> "RuleProto":
        return RuleProto(
            action=ActionTerm.from_json(obj["action"]),
            context=Formula.from_json(obj["context"]),
            outcomes=tuple(Formula.from_json(o) for o in obj["outcomes"]),
            phi=tuple(obj["phi"]),
        )


@dataclass(frozen=True)
class RuleSetProto:
    """A set of rule prototypes; overlapping contexts/outcomes allowed,
    exact duplicates are not."""

    protos: tuple = ()

    def __post_init__(self):
        keys = [p.structure_key() for p in self.protos]
        if len(keys) != len(set(keys)):
            raise RelationalError("duplicate rule prototypes")

    def __len__(self) -> int:
        return len(self.protos)

    def to_json(self) -> dict:
        return {"protos": [p.to_json() for p in self.protos]}

    @staticmethod
    def from_json(obj: dict) -> "RuleSetProto":
        return RuleSetProto(tuple(RuleProto.from_json(p) for p in obj["protos"]))

    def save(self, path) -> None:
        import json
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @staticmethod
    def load(path) -> "RuleSetProto":
        import json
        with open(path) as fh:
            return RuleSetProto.from_json(json.load(fh))


EMPTY_PROTO = RuleSetProto()


def log_geom(d: int, a: float) -> float:
    """Geom[a](d) = (1-a) a^d on d >= 0."""
    if d < 0:
        return LOG_ZERO
    return math.log1p(-a) + d * math.log(a)


def log_binom_pmf(k: int, n: int, p: float) -> float:
    if k < 0 or k > n:
        return LOG_ZERO
    return (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
            + k * math.log(p) + (n - k) * math.log1p(-p))


def log_p_num(m: int, m_star: int, alpha: float, beta: float) -> float:
    """Size distribution for a set derived from a prototype of size m*."""
    if m < 0:
        return LOG_ZERO
    if m > m_star:
        return log_geom(m - m_star, alpha)
    return math.log1p(-alpha) + log_binom_pmf(m, m_star, beta)


def _term_space_size(vocab: Vocabulary, n_vars: int) -> float:
    c = len(vocab.constants) + n_vars
    return sum(c ** f.arity for f in vocab.functions)


def log_p_term(term, vocab: Vocabulary, n_vars: int) -> float:
    """Uniform symbol choice, then each argument uniform over constants
    plus the eligible variables."""
    n_funcs = len(vocab.functions)
    c = len(vocab.constants) + n_vars
    return -math.log(n_funcs) - len(term.args) * math.log(c)


def log_p_value(vocab: Vocabulary, n_vars: int) -> float:
    return -math.log(len(vocab.constants) + n_vars)


def log_p_for(phi: Formula, phi_star: Formula, vbar: frozenset,
              vocab: Vocabulary, hyper: Hyperparams) -> float:
    """Formula-modification measure: keep prototype terms independently,
    add a geometric number of new terms, then choose values (sticky to the
    prototype's values for kept terms)."""
    # structural validity
    for t, v in phi.items():
        if not vocab.has_function(t.symbol):
            return LOG_ZERO
        if vocab.function(t.symbol).arity != len(t.args):
            return LOG_ZERO
        for a in t.args:
            if isinstance(a, Var) and a not in vbar:
                return LOG_ZERO
        if isinstance(v, Var) and v not in vbar:
            return LOG_ZERO

    nv = len(vbar)
    lp_value = log_p_value(vocab, nv)
    total = 0.0

    # keep / drop each prototype term
    for t in phi_star.terms:
        total += math.log(hyper.beta_term) if t in phi \
            else math.log1p(-hyper.beta_term)

    new_terms = [t for t in phi.terms if t not in phi_star]
    k_new = len(new_terms)
    total += log_geom(k_new, hyper.alpha_term) + math.lgamma(k_new + 1)
    for t in new_terms:
        total += log_p_term(t, vocab, nv)

    # values
    for t, v in phi.items():
        if t in phi_star:
            q = (1.0 - hyper.rho) * math.exp(lp_value)
            if v == phi_star.value(t):
                q += hyper.rho
            total += math.log(q)
        else:
            total += lp_value
    return total


def log_p_act(z: ActionTerm, z_star: Optional[ActionTerm],
              vocab: Vocabulary) -> float:
    """Action-schema measure: deterministic copy from a prototype, uniform
    over canonical schemas from scratch."""
    if z_star is not None:
        return 0.0 if z == z_star else LOG_ZERO
    return -math.log(len(vocab.actions))


def log_p_A(is_nil: bool, m_star: int, gamma_rule: float) -> float:
    if m_star == 0:
        return 0.0 if is_nil else LOG_ZERO
    if is_nil:
        return math.log(gamma_rule)
    return math.log1p(-gamma_rule) - math.log(m_star)


def log_p_B(is_seed: bool, n_star: int, gamma_out: float) -> float:
    if n_star == 0:
        return 0.0 if is_seed else LOG_ZERO
    if is_seed:
        return math.log(gamma_out)
    return math.log1p(-gamma_out) - math.log(n_star)


def log_p_phi(phi: Sequence[float], n_star: int, lambda_phi: float) -> float:
    """Hyperprior density over Dirichlet weights: the sum is exponential
    with rate lambda_phi and the direction is uniform on the simplex."""
    if len(phi) != n_star + 2 or any(w <= 0 for w in phi):
        return LOG_ZERO
    s = float(sum(phi))
    return (math.log(lambda_phi) - lambda_phi * s
            + math.lgamma(n_star + 2) - (n_star + 1) * math.log(s))


def log_p_proto(proto: RuleProto, vocab: Vocabulary, hyper: Hyperparams,
                exponent: float = 1.0) -> float:
    vbar = frozenset(proto.action.variables())
    total = log_p_act(proto.action, None, vocab)
    total += exponent * log_p_for(proto.context, EMPTY_FORMULA, vbar, vocab, hyper)
    total += log_geom(proto.n_outcomes, hyper.alpha_out)
    total += log_p_phi(proto.phi, proto.n_outcomes, hyper.lambda_phi)
    for o in proto.outcomes:
        total += exponent * log_p_for(o, EMPTY_FORMULA, vbar, vocab, hyper)
    return total


def log_p_G(G: RuleSetProto, vocab: Vocabulary, hyper: Hyperparams,
            exponent: float = 1.0) -> float:
    m_star = len(G)
    total = log_geom(m_star, hyper.alpha_proto) + math.lgamma(m_star + 1)
    for p in G.protos:
        total += log_p_proto(p, vocab, hyper, exponent)
    return total


def log_p_mod_structural(sketches: Sequence, G: RuleSetProto,
                         corr, vocab: Vocabulary,
                         hyper: Hyperparams) -> float:
    """Structural part of the rule-set modification measure under a fixed
    correspondence.  Excludes the Dirichlet density over the outcome
    probabilities (that lives in the Polya marginal).  Every formula
    factor is raised to ``formula_score_exponent``."""
    w = hyper.formula_score_exponent
    m = len(sketches)
    m_star = len(G)
    total = log_p_num(m, m_star, hyper.alpha, hyper.beta) + math.lgamma(m + 1)
    for i, sk in enumerate(sketches):
        a_i = corr.rule_assign[i]
        vbar = frozenset(sk.action.variables())
        if a_i is None:
            proto = None
            total += log_p_A(True, m_star, hyper.gamma_rule)
            total += log_p_act(sk.action, None, vocab)
            psi_star, o_star, n_star = EMPTY_FORMULA, (), 0
        else:
            proto = G.protos[a_i]
            if proto.action.symbol != sk.action.symbol:
                return LOG_ZERO
            total += log_p_A(False, m_star, hyper.gamma_rule)
            total += log_p_act(sk.action, proto.action, vocab)
            psi_star, o_star, n_star = proto.context, proto.outcomes, proto.n_outcomes
        total += w * log_p_for(sk.context, psi_star, vbar, vocab, hyper)
        n = len(sk.outcomes)
        total += log_p_num(n, n_star, hyper.alpha_out, hyper.beta_out)
        total += math.lgamma(n + 1)
        for j, o in enumerate(sk.outcomes):
            b = corr.outcome_assign[i][j]
            if b == SEED:
                total += log_p_B(True, n_star, hyper.gamma_out)
                src = EMPTY_FORMULA
            else:
                total += log_p_B(False, n_star, hyper.gamma_out)
                src = o_star[b]
            total += w * log_p_for(o, src, vbar, vocab, hyper)
    return total
