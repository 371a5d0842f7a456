"""Marginal data likelihood and correspondence machinery.

The outcome probabilities of every rule are integrated out against the
Dirichlet prior induced by the rule's prototype (or the flat (1, 1)
seed/noise prior for from-scratch rules), yielding a closed-form Polya
(Dirichlet-multinomial) marginal per rule.  Local rules are matched to
prototypes by a greedy correspondence instead of summing over all
assignments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, psi

from .core import EMPTY_FORMULA, RelationalError, Vocabulary, bind_action, formula_holds
from .priors import (
    LOG_ZERO,
    SEED,
    Hyperparams,
    RuleProto,
    RuleSetProto,
    log_p_A,
    log_p_B,
    log_p_act,
    log_p_for,
    log_p_G,
    log_p_mod_structural,
    log_p_num,
    log_p_phi,
)
from .rules import OverlappingRulesError, RuleSketch, _outcome_explains

FROM_SCRATCH_PHI = (1.0, 1.0)  # seed weight, noise weight

COUNT_CAP = 10 ** 7


@dataclass(frozen=True)
class Correspondence:
    """Greedy assignment of local rules to prototypes and local outcomes
    to prototype outcomes (SEED marks a from-scratch outcome)."""

    rule_assign: tuple  # Optional[int] per rule, index into G.protos
    outcome_assign: tuple  # tuple per rule of int (proto outcome index) or SEED


@dataclass
class ScoreBreakdown:
    """Additive decomposition of the transfer score."""

    log_p_g: float
    structural: list  # per task
    data: list  # per task: rule Polya marginals + noise floor + default rule

    @property
    def total(self) -> float:
        return self.log_p_g + sum(self.structural) + sum(self.data)

    def table(self) -> str:
        lines = [f"{'log P(G)':<24}{self.log_p_g: .4f}"]
        for k, (s, d) in enumerate(zip(self.structural, self.data)):
            lines.append(f"task {k}: structural      {s: .4f}")
            lines.append(f"task {k}: data (Polya)    {d: .4f}")
        lines.append(f"{'total':<24}{self.total: .4f}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"log_p_g": self.log_p_g, "structural": self.structural,
                "data": self.data, "total": self.total}


def collect_counts(sketch: RuleSketch, covered: Sequence) -> np.ndarray:
    """Outcome occurrence counts for a rule over the examples it covers.

    ``covered`` holds (example, binding) pairs; transitions not explained
    by any explicit outcome increment the final (noise) slot.
    """
    counts = np.zeros(len(sketch.outcomes) + 1, dtype=np.int64)
    for ex, theta in covered:
        idx = _attribute(sketch, theta, ex)
        counts[idx if idx is not None else -1] += 1
    return counts


def _attribute(sketch: RuleSketch, theta, ex) -> Optional[int]:
    match = None
    for i, o in enumerate(sketch.outcomes):
        if _outcome_explains(o, theta, ex.state, ex.next_state):
            if match is not None:
                from .rules import OverlappingOutcomesError
                raise OverlappingOutcomesError(
                    f"outcomes {match} and {i} both explain an example")
            match = i
    return match


def project_dirichlet(phi: Sequence[float], b_hat: Sequence[int]) -> np.ndarray:
    """Split prototype Dirichlet weights over the local outcomes derived
    from each slot; the noise weight carries over unchanged."""
    phi = np.asarray(phi, dtype=float)
    n_star = len(phi) - 2
    n = len(b_hat)
    shares = {}
    for b in b_hat:
        src = n_star if b == SEED else b
        shares[src] = shares.get(src, 0) + 1
    out = np.empty(n + 1)
    for j, b in enumerate(b_hat):
        src = n_star if b == SEED else b
        out[j] = phi[src] / shares[src]
    out[n] = phi[n_star + 1]
    return out


def polya_log_marginal(phi_proj: Sequence[float], counts: Sequence[int]) -> float:
    """Closed-form Dirichlet-multinomial marginal likelihood of the
    counts under Dirichlet(phi_proj)."""
    phi_proj = np.asarray(phi_proj, dtype=float)
    counts = np.asarray(counts)
    if len(phi_proj) != len(counts):
        raise ValueError("weights and counts must have equal length")
    if np.any(phi_proj <= 0):
        raise ValueError("Dirichlet weights must be strictly positive")
    if np.any(counts < 0) or counts.sum() > COUNT_CAP:
        raise ValueError("counts must be non-negative and below the cap")
    a = phi_proj.sum()
    n = counts.sum()
    return float(gammaln(a) - gammaln(a + n)
                 + np.sum(gammaln(phi_proj + counts) - gammaln(phi_proj)))


def posterior_mean_params(phi_proj: Sequence[float],
                          counts: Sequence[int]) -> np.ndarray:
    """Point estimate of the outcome distribution for prediction."""
    phi_proj = np.asarray(phi_proj, dtype=float)
    counts = np.asarray(counts, dtype=float)
    return (phi_proj + counts) / (phi_proj.sum() + counts.sum())


def rule_data_term(phi_proj, counts, p_min: float) -> float:
    """Polya marginal plus the per-noise-example floor factor."""
    return polya_log_marginal(phi_proj, counts) + int(counts[-1]) * math.log(p_min)


def best_outcome_assignment(sketch: RuleSketch, proto: Optional[RuleProto],
                            vocab: Vocabulary, hyper: Hyperparams):
    """Per-outcome greedy source choice; returns (b_hat, structural log)."""
    w = hyper.formula_score_exponent
    vbar = frozenset(sketch.action.variables())
    n_star = proto.n_outcomes if proto is not None else 0
    b_hat = []
    total = 0.0
    for o in sketch.outcomes:
        best_b, best_lp = SEED, (log_p_B(True, n_star, hyper.gamma_out)
                                 + w * log_p_for(o, EMPTY_FORMULA, vbar, vocab, hyper))
        if proto is not None:
            for b, src in enumerate(proto.outcomes):
                lp = (log_p_B(False, n_star, hyper.gamma_out)
                      + w * log_p_for(o, src, vbar, vocab, hyper))
                if lp > best_lp:
                    best_b, best_lp = b, lp
        b_hat.append(best_b)
        total += best_lp
    return tuple(b_hat), total


def rule_contribution(sketch: RuleSketch, a_idx: Optional[int],
                      G: RuleSetProto, vocab: Vocabulary, hyper: Hyperparams,
                      counts: Optional[np.ndarray] = None):
    """Full per-rule score contribution under a fixed prototype choice:
    structural factors plus (when counts are given) the Polya marginal and
    noise-floor term.  Returns (log contribution, b_hat)."""
    w = hyper.formula_score_exponent
    m_star = len(G)
    vbar = frozenset(sketch.action.variables())
    if a_idx is None:
        proto = None
        psi_star, n_star = EMPTY_FORMULA, 0
        phi = FROM_SCRATCH_PHI
        total = log_p_A(True, m_star, hyper.gamma_rule)
        total += log_p_act(sketch.action, None, vocab)
    else:
        proto = G.protos[a_idx]
        if proto.action.symbol != sketch.action.symbol:
            return LOG_ZERO, tuple(SEED for _ in sketch.outcomes)
        psi_star, n_star = proto.context, proto.n_outcomes
        phi = proto.phi
        total = log_p_A(False, m_star, hyper.gamma_rule)
        total += log_p_act(sketch.action, proto.action, vocab)
    total += w * log_p_for(sketch.context, psi_star, vbar, vocab, hyper)
    n = len(sketch.outcomes)
    total += log_p_num(n, n_star, hyper.alpha_out, hyper.beta_out)
    total += math.lgamma(n + 1)
    b_hat, out_lp = best_outcome_assignment(sketch, proto, vocab, hyper)
    total += out_lp
    if counts is not None:
        total += rule_data_term(project_dirichlet(phi, b_hat), counts, hyper.p_min)
    return total, b_hat


def context_argmax_assignment(sk: RuleSketch, G: RuleSetProto,
                              vocab: Vocabulary, hyper: Hyperparams) -> Optional[int]:
    """Stage-one greedy rule-to-prototype choice, on contexts alone."""
    w = hyper.formula_score_exponent
    m_star = len(G)
    vbar = frozenset(sk.action.variables())
    best_a = None
    best_lp = (log_p_A(True, m_star, hyper.gamma_rule)
               + w * log_p_for(sk.context, EMPTY_FORMULA, vbar, vocab, hyper))
    for a, proto in enumerate(G.protos):
        if proto.action.symbol != sk.action.symbol:
            continue
        lp = (log_p_A(False, m_star, hyper.gamma_rule)
              + w * log_p_for(sk.context, proto.context, vbar, vocab, hyper))
        if lp > best_lp:
            best_a, best_lp = a, lp
    return best_a


def greedy_rule_assignment(sk: RuleSketch, G: RuleSetProto, vocab: Vocabulary,
                           hyper: Hyperparams,
                           counts: Optional[np.ndarray] = None):
    """Greedy assignment for one rule, with the final from-scratch
    comparison.  Returns (a_idx, b_hat, full contribution)."""
    best_a = context_argmax_assignment(sk, G, vocab, hyper)
    lp_nil, b_nil = rule_contribution(sk, None, G, vocab, hyper, counts)
    if best_a is None:
        return None, b_nil, lp_nil
    lp_proto, b_proto = rule_contribution(sk, best_a, G, vocab, hyper, counts)
    if lp_nil > lp_proto:
        return None, b_nil, lp_nil
    return best_a, b_proto, lp_proto


def greedy_correspondence(sketches: Sequence[RuleSketch], G: RuleSetProto,
                          vocab: Vocabulary, hyper: Hyperparams,
                          counts_list: Optional[Sequence] = None) -> Correspondence:
    """Greedy rule-to-prototype and outcome-to-prototype-outcome matching.

    Rules are matched on contexts alone, outcomes decompose per outcome,
    then a final pass compares each rule's full contribution against the
    from-scratch alternative and falls back to NIL when that wins.  When
    per-rule counts are supplied, the final comparison includes the Polya
    marginal.
    """
    rule_assign = []
    outcome_assign = []
    for i, sk in enumerate(sketches):
        counts = counts_list[i] if counts_list is not None else None
        a_idx, b_hat, _ = greedy_rule_assignment(sk, G, vocab, hyper, counts)
        rule_assign.append(a_idx)
        outcome_assign.append(b_hat)
    return Correspondence(tuple(rule_assign), tuple(outcome_assign))


def partition_examples(sketches: Sequence[RuleSketch], examples: Sequence):
    """Assign each example to the unique applicable rule (or the default).

    Returns (covered, default_examples) where covered[i] is a list of
    (example, binding) pairs.  Raises OverlappingRulesError when two rules
    apply to one example.
    """
    covered = [[] for _ in sketches]
    default = []
    for ex in examples:
        hit = None
        for i, sk in enumerate(sketches):
            theta = bind_action(sk.action, ex.action)
            if theta is None:
                continue
            if formula_holds(sk.context, theta, ex.state):
                if hit is not None:
                    raise OverlappingRulesError(
                        f"rules {hit} and {i} both apply to an example")
                hit = i
        if hit is None:
            default.append(ex)
        else:
            covered[hit].append((ex, bind_action(sketches[hit].action, ex.action)))
    return covered, default


def default_rule_counts(default_examples: Sequence) -> np.ndarray:
    counts = np.zeros(2, dtype=np.int64)
    for ex in default_examples:
        if ex.next_state == ex.state:
            counts[0] += 1
        else:
            counts[1] += 1
    return counts


DEFAULT_RULE_PRIOR = (1.0, 1.0)  # symmetric Dirichlet over (no-change, noise)


def score(G: RuleSetProto, structures: Sequence[Sequence[RuleSketch]],
          datasets: Sequence[Sequence], hyper: Hyperparams,
          vocab: Vocabulary) -> ScoreBreakdown:
    """The transfer objective: log P(G) plus, per task, the structural
    modification measure under the greedy correspondence and the
    integrated-out data likelihood."""
    if len(structures) != len(datasets):
        raise ValueError("one dataset per structure required")
    lg = log_p_G(G, vocab, hyper, exponent=hyper.formula_score_exponent)
    structural = []
    data = []
    for sketches, examples in zip(structures, datasets):
        covered, default_ex = partition_examples(sketches, examples)
        counts_list = [collect_counts(sk, cov)
                       for sk, cov in zip(sketches, covered)]
        corr = greedy_correspondence(sketches, G, vocab, hyper, counts_list)
        structural.append(
            log_p_mod_structural(sketches, G, corr, vocab, hyper))
        d = 0.0
        for i, sk in enumerate(sketches):
            a_idx = corr.rule_assign[i]
            phi = G.protos[a_idx].phi if a_idx is not None else FROM_SCRATCH_PHI
            d += rule_data_term(
                project_dirichlet(phi, corr.outcome_assign[i]),
                counts_list[i], hyper.p_min)
        dcounts = default_rule_counts(default_ex)
        d += rule_data_term(np.asarray(DEFAULT_RULE_PRIOR), dcounts, hyper.p_min)
        data.append(d)
    return ScoreBreakdown(lg, structural, data)


PHI_FLOOR = 1e-3
FIT_TOL = 1e-6
FIT_MAX_ITER = 500


def _fit_objective(phi: np.ndarray, grouped, n_star: int,
                   hyper: Hyperparams) -> float:
    total = log_p_phi(phi, n_star, hyper.lambda_phi)
    for slots, counts in grouped:
        w = np.append(phi[list(slots)], phi[-1])
        total += polya_log_marginal(w, counts)
    return total


def fit_proto_dirichlet(grouped_counts: Sequence, n_star: int,
                        hyper: Hyperparams) -> tuple:
    """MAP estimate of a prototype's Dirichlet weights.

    ``grouped_counts`` holds one entry per assigned local rule: a pair
    (slots, counts) where ``slots`` are the distinct prototype-weight
    indices used by that rule (explicit outcome indices, or ``n_star`` for
    the seed slot) with counts already merged per slot, and ``counts`` is
    the aligned vector with the noise count last.

    Fixed-point iteration in the style of the standard Polya ML update,
    with the exponential-sum hyperprior folded into the denominator and a
    backtracking step to keep the objective non-decreasing.
    """
    dim = n_star + 2
    uniform = np.full(dim, 1.0 / (hyper.lambda_phi * dim))
    grouped = [(tuple(s), np.asarray(c, dtype=np.int64))
               for s, c in grouped_counts]
    grouped = [(s, c) for s, c in grouped if c.sum() > 0]
    if not grouped:
        return tuple(uniform)  # prior direction, S at the mean 1/lambda

    phi = np.maximum(uniform, PHI_FLOOR)
    obj = _fit_objective(phi, grouped, n_star, hyper)
    for _ in range(FIT_MAX_ITER):
        s = phi.sum()
        num = np.zeros(dim)
        den_common = hyper.lambda_phi + (n_star + 1) / s
        den = np.full(dim, den_common)
        for slots, counts in grouped:
            idx = list(slots) + [dim - 1]
            a = phi[idx].sum()
            n = counts.sum()
            tail = psi(a + n) - psi(a)
            for j, i in enumerate(idx):
                num[i] += psi(phi[i] + counts[j]) - psi(phi[i])
                den[i] += tail
        new = np.where(num > 0, phi * num / den, PHI_FLOOR)
        new = np.maximum(new, PHI_FLOOR)
        # backtrack toward the current iterate if the proposal overshoots
        cand = new
        new_obj = _fit_objective(cand, grouped, n_star, hyper)
        tries = 0
        while new_obj < obj - 1e-12 and tries < 40:
            cand = np.sqrt(cand * phi)
            new_obj = _fit_objective(cand, grouped, n_star, hyper)
            tries += 1
        if new_obj < obj - 1e-12:
            break
        delta = np.max(np.abs(cand - phi))
        phi, obj = cand, new_obj
        if delta < FIT_TOL:
            break
    return tuple(phi)
