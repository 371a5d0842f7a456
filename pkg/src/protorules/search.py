"""Greedy structure search: outcome search, local rule-set search,
prototype search, coordinate ascent, and the two-stage transfer procedure.

Every search is plain greedy ascent on the transfer score: candidates are
generated deterministically, the best strictly-improving one is accepted,
and ties are broken toward the structurally smaller candidate.  Accepted
scores are therefore strictly increasing and every search terminates.
"""

from __future__ import annotations

import json
import math
from typing import Iterable, List, Optional, Sequence

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
    bind_action,
    canonical_schema,
    formula_holds,
)
from .likelihood import (
    DEFAULT_RULE_PRIOR,
    FROM_SCRATCH_PHI,
    best_outcome_assignment,
    context_argmax_assignment,
    fit_proto_dirichlet,
    greedy_rule_assignment,
    posterior_mean_params,
    project_dirichlet,
    rule_contribution,
    rule_data_term,
)
from .priors import (
    LOG_ZERO,
    SEED,
    Hyperparams,
    RuleProto,
    RuleSetProto,
    log_p_G,
    log_p_num,
)
from .rules import Example, RuleSet, RuleSketch, outcomes_overlap

CANDIDATE_CAP = 200
EXPLAIN_CAP = 30
SCORE_EPS = 1e-9
MAX_ALTERNATIONS = 20


# ---------------------------------------------------------------------------
# binding inversion and lifting

def invert_binding(theta: dict) -> dict:
    """Object->variable map; when several variables share an object, the
    canonically first variable wins."""
    inv = {}
    for v in sorted(theta, key=lambda v: v.name):
        obj = theta[v]
        if obj not in inv:
            inv[obj] = v
    return inv


def lift_formula(literals: dict, inv: dict) -> Formula:
    out = {}
    for t, v in literals.items():
        lt = Term(t.symbol, tuple(inv.get(a, a) for a in t.args))
        out[lt] = inv.get(v, v)
    return Formula(out)


def ground_literals(o: Formula, theta: dict) -> Optional[dict]:
    """Ground an outcome/context under a binding; None when the binding
    maps two literals onto the same term with conflicting values."""
    out = {}
    for t, v in o.items():
        gt = t.substitute(theta) if not t.is_ground() else t
        gv = theta[v] if isinstance(v, Var) else v
        if gt in out and out[gt] != gv:
            return None
        out[gt] = gv
    return out


# ---------------------------------------------------------------------------
# task data and incremental scoring

class _Ex:
    """Preprocessed example: next-state diff computed once."""

    __slots__ = ("ex", "state", "next_state", "action", "diff", "changed")

    def __init__(self, ex: Example):
        self.ex = ex
        self.state = ex.state
        self.next_state = ex.next_state
        self.action = ex.action
        self.diff = ex.state.diff(ex.next_state)
        self.changed = bool(self.diff)


def _explains(ground: dict, exw: _Ex) -> bool:
    # f_o(s) == s' : outcome literals hold in s', all other changes absent
    for gt, gv in ground.items():
        if exw.next_state.get(gt) != gv:
            return False
    for t in exw.diff:
        if t not in ground:
            return False
    return True


def _count_outcomes(outcomes: Sequence[Formula], covered: Sequence) -> Optional[np.ndarray]:
    """Outcome counts over covered (example, theta) pairs; None when two
    outcomes explain the same example (overlap)."""
    counts = np.zeros(len(outcomes) + 1, dtype=np.int64)
    grounds_cache = {}
    for exw, theta in covered:
        tkey = tuple(sorted((v.name, c) for v, c in theta.items()))
        grounds = grounds_cache.get(tkey)
        if grounds is None:
            grounds = [ground_literals(o, theta) for o in outcomes]
            grounds_cache[tkey] = grounds
        hit = None
        for i, g in enumerate(grounds):
            if g is not None and _explains(g, exw):
                if hit is not None:
                    return None
                hit = i
        counts[hit if hit is not None else -1] += 1
    return counts


class TaskScorer:
    """Incremental scorer for one task's dataset under a fixed prototype
    set.  Covers and per-rule contributions are cached by structure key,
    so the greedy searches only pay for novel candidates."""

    def __init__(self, examples: Sequence[Example], G: RuleSetProto,
                 vocab: Vocabulary, hyper: Hyperparams):
        self.examples = [_Ex(e) for e in examples]
        self.G = G
        self.vocab = vocab
        self.hyper = hyper
        self._cover_cache = {}
        self._contrib_cache = {}
        self._log_p_g = log_p_G(G, vocab, hyper,
                                exponent=hyper.formula_score_exponent)

    def cover(self, action: ActionTerm, context: Formula):
        """Indices and bindings of examples this (action, context) applies
        to."""
        key = (action, context)
        hit = self._cover_cache.get(key)
        if hit is not None:
            return hit
        idx, thetas = [], []
        for i, exw in enumerate(self.examples):
            theta = bind_action(action, exw.action)
            if theta is None:
                continue
            if formula_holds(context, theta, exw.state):
                idx.append(i)
                thetas.append(theta)
        result = (tuple(idx), tuple(thetas))
        self._cover_cache[key] = result
        return result

    def covered_pairs(self, action, context):
        idx, thetas = self.cover(action, context)
        return [(self.examples[i], th) for i, th in zip(idx, thetas)]

    def rule_contribution(self, sk: RuleSketch):
        """(contribution, counts, a_idx, b_hat, cover indices); the
        contribution is LOG_ZERO for rules whose outcomes overlap on the
        data."""
        key = sk.key()
        hit = self._contrib_cache.get(key)
        if hit is not None:
            return hit
        idx, thetas = self.cover(sk.action, sk.context)
        covered = [(self.examples[i], th) for i, th in zip(idx, thetas)]
        counts = _count_outcomes(sk.outcomes, covered)
        if counts is None:
            result = (LOG_ZERO, None, None, None, idx)
        else:
            a_idx, b_hat, lp = greedy_rule_assignment(
                sk, self.G, self.vocab, self.hyper, counts)
            result = (lp, counts, a_idx, b_hat, idx)
        self._contrib_cache[key] = result
        return result

    def default_term(self, covered_union: set) -> float:
        counts = np.zeros(2, dtype=np.int64)
        for i, exw in enumerate(self.examples):
            if i in covered_union:
                continue
            counts[0 if not exw.changed else 1] += 1
        return rule_data_term(np.asarray(DEFAULT_RULE_PRIOR), counts,
                              self.hyper.p_min)

    def structure_score(self, sketches: Sequence[RuleSketch]) -> float:
        """Task component of the transfer score plus log P(G): the value
        the local rule-set search maximizes."""
        m = len(sketches)
        total = (self._log_p_g
                 + log_p_num(m, len(self.G), self.hyper.alpha, self.hyper.beta)
                 + math.lgamma(m + 1))
        covered_union: set = set()
        for sk in sketches:
            lp, _, _, _, idx = self.rule_contribution(sk)
            if lp == LOG_ZERO:
                return LOG_ZERO
            for i in idx:
                if i in covered_union:
                    return LOG_ZERO  # overlapping applicability
                covered_union.add(i)
            total += lp
        total += self.default_term(covered_union)
        return total


# ---------------------------------------------------------------------------
# outcome search

def _observed_changes(covered: Sequence) -> list:
    """Distinct lifted change formulas seen in the covered examples, in
    frequency-then-canonical order."""
    seen = {}
    for exw, theta in covered:
        if not exw.diff:
            continue
        inv = invert_binding(theta)
        f = lift_formula(exw.diff, inv)
        seen[f] = seen.get(f, 0) + 1
    return [f for f, _ in sorted(seen.items(),
                                 key=lambda kv: (-kv[1], _formula_key(kv[0])))]


def _formula_key(f: Formula) -> tuple:
    return tuple((t.key(), str(v)) for t, v in f.items())


def _observed_literals(changes: Iterable[Formula]) -> list:
    lits = {(t, v) for f in changes for t, v in f.items()}
    return sorted(lits, key=lambda tv: (tv[0].key(), str(tv[1])))


def _repair_overlaps(outcomes: tuple, context: Formula,
                     literals: list) -> Optional[tuple]:
    """Greedily add observed-change literals (smallest-first) to
    overlapping outcomes until every pair is provably disjoint."""
    outs = list(outcomes)
    if len(set(outs)) != len(outs):
        return None
    for _ in range(32):
        bad = None
        for i in range(len(outs)):
            for j in range(i + 1, len(outs)):
                if outcomes_overlap(outs[i], outs[j], context):
                    bad = (i, j)
                    break
            if bad:
                break
        if bad is None:
            return tuple(outs)
        i, j = bad
        fixed = False
        for t, v in literals:
            for a, b in ((i, j), (j, i)):
                if t in outs[a].mapping():
                    continue
                other = outs[b].get(t, context.get(t))
                if other is not None and other != v:
                    outs[a] = Formula({**dict(outs[a].mapping()), t: v})
                    fixed = True
                    break
            if fixed:
                break
        if not fixed:
            return None
    return None


def learn_outcomes(action: ActionTerm, context: Formula, covered: Sequence,
                   a_idx: Optional[int], G: RuleSetProto, vocab: Vocabulary,
                   hyper: Hyperparams) -> tuple:
    """Greedy search for a rule's explicit outcome set, starting from the
    noise-only set.  ``covered`` holds (example, theta) pairs; ``a_idx``
    fixes the prototype the rule is scored against (None = from scratch)."""
    proto = G.protos[a_idx] if a_idx is not None else None
    changes = _observed_changes(covered)
    literals = _observed_literals(changes)
    pool = list(changes)
    if any(not exw.changed for exw, _ in covered) and EMPTY_FORMULA not in pool:
        pool.append(EMPTY_FORMULA)
    if proto is not None:
        for o in proto.outcomes:
            if o not in pool:
                pool.append(o)
    change_terms = sorted({t for f in changes for t in f.terms}, key=Term.key)

    def contribution(outs: tuple) -> float:
        counts = _count_outcomes(outs, covered)
        if counts is None:
            return LOG_ZERO
        try:
            sk = RuleSketch(action, context, outs)
            lp, _ = rule_contribution(sk, a_idx, G, vocab, hyper, counts)
        except RelationalError:
            return LOG_ZERO
        return lp

    def size_key(outs: tuple) -> tuple:
        return (len(outs), sum(len(o) for o in outs),
                tuple(_formula_key(o) for o in outs))

    current: tuple = ()
    best = contribution(current)
    while True:
        candidates = []
        cur_set = set(current)
        # Add Outcome
        for o in pool:
            if o not in cur_set:
                candidates.append(current + (o,))
        # Remove Outcome
        for k in range(len(current)):
            candidates.append(current[:k] + current[k + 1:])
        # Add / Remove Literal inside an outcome
        for k, o in enumerate(current):
            m = dict(o.mapping())
            for t, v in literals:
                if t not in m:
                    candidates.append(
                        current[:k] + (Formula({**m, t: v}),) + current[k + 1:])
            for t in list(m):
                m2 = dict(m)
                del m2[t]
                candidates.append(
                    current[:k] + (Formula(m2),) + current[k + 1:])
        # Split on Literal
        for k, o in enumerate(current):
            for t in change_terms:
                if t in o.mapping():
                    continue
                vals = vocab.function(t.symbol).values
                parts = tuple(Formula({**dict(o.mapping()), t: v})
                              for v in vals)
                candidates.append(current[:k] + parts + current[k + 1:])
        # Merge Outcomes
        for k, o in enumerate(current):
            for c in pool:
                if c == o:
                    continue
                merged = dict(o.mapping())
                conflict = False
                for t, v in c.items():
                    if merged.get(t, v) != v:
                        conflict = True
                        break
                    merged[t] = v
                if not conflict:
                    candidates.append(
                        current[:k] + (Formula(merged),) + current[k + 1:])

        improved = False
        best_cand = None
        seen = set()
        for cand in candidates[:CANDIDATE_CAP]:
            repaired = _repair_overlaps(cand, context, literals)
            if repaired is None:
                continue
            key = frozenset(repaired)
            if key in seen:
                continue
            seen.add(key)
            lp = contribution(repaired)
            if lp > best + SCORE_EPS or (
                    best_cand is not None and abs(lp - best) <= SCORE_EPS
                    and size_key(repaired) < size_key(best_cand)):
                best, best_cand, improved = lp, repaired, True
        if not improved:
            return current
        current = best_cand


# ---------------------------------------------------------------------------
# rule-set search

def explain_examples(examples: Sequence[Example], sketches: Sequence[RuleSketch],
                     G: RuleSetProto, vocab: Vocabulary, hyper: Hyperparams,
                     scorer: Optional[TaskScorer] = None) -> list:
    """Data-driven candidate (action, context) pairs for examples that are
    currently explained only by the default rule or as noise.

    Three context shapes per seed example: the full restriction of the
    prior state to terms over the action's arguments, the prior values of
    the terms that changed, and (per same-action prototype) the prior
    state projected onto the prototype's context terms.
    """
    scorer = scorer or TaskScorer(examples, G, vocab, hyper)
    covered_union = set()
    noisy = set()
    for sk in sketches:
        lp, counts, _, _, idx = scorer.rule_contribution(sk)
        covered = scorer.covered_pairs(sk.action, sk.context)
        for (exw, theta), i in zip(covered, idx):
            covered_union.add(i)
            hit = None
            for o in sk.outcomes:
                g = ground_literals(o, theta)
                if g is not None and _explains(g, exw):
                    hit = o
                    break
            if hit is None:
                noisy.add(i)

    out = []
    seen = set()
    existing = {(sk.action, sk.context) for sk in sketches}
    for i, exw in enumerate(scorer.examples):
        if i in covered_union and i not in noisy:
            continue
        if not exw.changed and i not in noisy:
            continue
        schema = canonical_schema(exw.action.symbol, len(exw.action.args))
        theta = bind_action(schema, exw.action)
        inv = invert_binding(theta)
        args = set(theta.values())

        contexts = []
        maximal = {t: v for t, v in exw.state.mapping().items()
                   if not t.args or all(a in args for a in t.args)}
        contexts.append(lift_formula(maximal, inv))
        if exw.diff:
            pre = {t: exw.state.value(t) for t in exw.diff}
            contexts.append(lift_formula(pre, inv))
        for proto in G.protos:
            if proto.action.symbol != schema.symbol:
                continue
            proj = {}
            ok = True
            for t in proto.context.terms:
                try:
                    gt = t.substitute(theta) if not t.is_ground() else t
                except RelationalError:
                    ok = False
                    break
                if gt not in exw.state:
                    ok = False
                    break
                proj[t] = inv.get(exw.state.value(gt), exw.state.value(gt))
            if ok and proj:
                contexts.append(Formula(proj))

        for ctx in contexts:
            key = (schema, ctx)
            if key in seen or key in existing:
                continue
            seen.add(key)
            out.append(key)
            if len(out) >= EXPLAIN_CAP:
                return out
    return out


def _context_literal_pool(vocab: Vocabulary, vbar: Sequence[Var],
                          G: RuleSetProto, action: ActionTerm,
                          covered_states: Sequence[State],
                          thetas: Sequence[dict]) -> list:
    """(term, value) candidates for context refinement: terms over the
    schema variables (plus zero-arity terms), with values that actually
    occur in the covered prior states, plus same-action prototype context
    literals."""
    terms = []
    vs = tuple(vbar)
    for f in sorted(vocab.functions, key=lambda f: f.name):
        if f.arity == 0:
            terms.append(Term(f.name))
        elif f.arity == 1:
            terms += [Term(f.name, (v,)) for v in vs]
        elif f.arity == 2:
            terms += [Term(f.name, (a, b)) for a in vs for b in vs]
    observed = set()
    for s, theta in zip(covered_states, thetas):
        for t in terms:
            gt = t.substitute(theta) if not t.is_ground() else t
            v = s.get(gt)
            if v is not None:
                observed.add((t, v))
    for proto in G.protos:
        if proto.action.symbol == action.symbol:
            observed.update(proto.context.items())
    return sorted(observed, key=lambda tv: (tv[0].key(), str(tv[1])))


def _sketch_size(sketches: Sequence[RuleSketch]) -> tuple:
    return (len(sketches),
            sum(len(sk.context) + sum(len(o) for o in sk.outcomes)
                for sk in sketches),
            tuple(sorted((str(sk.action), _formula_key(sk.context))
                         for sk in sketches)))


def _search_ruleset(examples: Sequence[Example], G: RuleSetProto,
                    vocab: Vocabulary, hyper: Hyperparams,
                    init: Sequence[RuleSketch] = (),
                    trace: Optional[list] = None):
    """Greedy local rule-set search; returns (sketches, scorer, score)."""
    scorer = TaskScorer(examples, G, vocab, hyper)
    outcome_cache = {}

    def rule_for(action: ActionTerm, context: Formula,
                 a_hint: Optional[int]) -> Optional[RuleSketch]:
        key = (action, context, a_hint)
        if key in outcome_cache:
            return outcome_cache[key]
        covered = scorer.covered_pairs(action, context)
        if not covered:
            outcome_cache[key] = None
            return None
        outs = learn_outcomes(action, context, covered, a_hint, G, vocab, hyper)
        sk = RuleSketch(action, context, outs)
        outcome_cache[key] = sk
        return sk

    def a_hint_for(action, context) -> Optional[int]:
        return context_argmax_assignment(
            RuleSketch(action, context, ()), G, vocab, hyper)

    def with_added(current, new_sk):
        """Add a rule, dropping pre-existing rules with overlapping
        applicability on the training examples."""
        new_idx = set(scorer.cover(new_sk.action, new_sk.context)[0])
        kept = [sk for sk in current
                if not (set(scorer.cover(sk.action, sk.context)[0]) & new_idx)]
        return tuple(kept) + (new_sk,)

    current = tuple(init)
    score = scorer.structure_score(current)
    if score == LOG_ZERO:
        current, score = (), scorer.structure_score(())
    step = 0
    while True:
        candidates = []  # (op name, structure)

        for action, ctx in explain_examples(examples, current, G, vocab,
                                            hyper, scorer):
            sk = rule_for(action, ctx, a_hint_for(action, ctx))
            if sk is not None:
                candidates.append(("add-rule", with_added(current, sk)))

        for a, proto in enumerate(G.protos):
            sk = rule_for(proto.action, proto.context, a)
            if sk is not None and sk not in current:
                candidates.append(("add-proto-copy", with_added(current, sk)))

        for k in range(len(current)):
            candidates.append(("remove-rule", current[:k] + current[k + 1:]))

        for k, sk in enumerate(current):
            idx, thetas = scorer.cover(sk.action, sk.context)
            states = [scorer.examples[i].state for i in idx]
            pool = _context_literal_pool(vocab, sk.action.variables(), G,
                                         sk.action, states, thetas)
            ctx_map = dict(sk.context.mapping())
            # Remove Literal
            for t in list(ctx_map):
                m2 = dict(ctx_map)
                del m2[t]
                nsk = rule_for(sk.action, Formula(m2), a_hint_for(sk.action, Formula(m2)))
                if nsk is not None:
                    candidates.append(
                        ("remove-literal", with_added(current[:k] + current[k + 1:], nsk)))
            # Add Literal
            for t, v in pool:
                if t in ctx_map:
                    continue
                ctx2 = Formula({**ctx_map, t: v})
                nsk = rule_for(sk.action, ctx2, a_hint_for(sk.action, ctx2))
                if nsk is not None:
                    candidates.append(
                        ("add-literal", current[:k] + (nsk,) + current[k + 1:]))
            # Split on Literal
            split_terms = sorted({t for t, _ in pool if t not in ctx_map},
                                 key=Term.key)
            for t in split_terms:
                parts = []
                for v in vocab.function(t.symbol).values:
                    ctx2 = Formula({**ctx_map, t: v})
                    nsk = rule_for(sk.action, ctx2, a_hint_for(sk.action, ctx2))
                    if nsk is not None:
                        parts.append(nsk)
                if parts:
                    candidates.append(
                        ("split-literal", current[:k] + tuple(parts) + current[k + 1:]))

        best_cand, best_score, best_op = None, score, None
        seen = set()
        for op, cand in candidates[:CANDIDATE_CAP]:
            key = frozenset(sk.key() for sk in cand)
            if key in seen:
                continue
            seen.add(key)
            s = scorer.structure_score(cand)
            if s > best_score + SCORE_EPS or (
                    best_cand is not None and abs(s - best_score) <= SCORE_EPS
                    and _sketch_size(cand) < _sketch_size(best_cand)):
                best_cand, best_score, best_op = cand, s, op
        if best_cand is None:
            return current, scorer, score
        current, score = best_cand, best_score
        step += 1
        if trace is not None:
            trace.append({"search": "ruleset", "step": step,
                          "operator": best_op, "score": score})


def finalize_ruleset(sketches: Sequence[RuleSketch], examples: Sequence[Example],
                     G: RuleSetProto, vocab: Vocabulary,
                     hyper: Hyperparams) -> RuleSet:
    """Attach posterior-mean outcome probabilities to a learned structure."""
    scorer = TaskScorer(examples, G, vocab, hyper)
    rules = []
    covered_union: set = set()
    for sk in sketches:
        lp, counts, a_idx, b_hat, idx = scorer.rule_contribution(sk)
        covered_union.update(idx)
        phi = G.protos[a_idx].phi if a_idx is not None else FROM_SCRATCH_PHI
        probs = posterior_mean_params(project_dirichlet(phi, b_hat), counts)
        rules.append(sk.with_probs(tuple(float(p) for p in probs)))
    dcounts = np.zeros(2, dtype=np.int64)
    for i, exw in enumerate(scorer.examples):
        if i not in covered_union:
            dcounts[0 if not exw.changed else 1] += 1
    dprobs = posterior_mean_params(np.asarray(DEFAULT_RULE_PRIOR), dcounts)
    return RuleSet(tuple(rules), default_probs=tuple(float(p) for p in dprobs),
                   p_min=hyper.p_min)


def learn_ruleset(examples: Sequence[Example], G: RuleSetProto,
                  vocab: Vocabulary, hyper: Hyperparams,
                  init: Sequence[RuleSketch] = (),
                  trace: Optional[list] = None) -> RuleSet:
    sketches, _, _ = _search_ruleset(examples, G, vocab, hyper, init, trace)
    return finalize_ruleset(sketches, examples, G, vocab, hyper)


def transfer_learn(G_star: RuleSetProto, target_examples: Sequence[Example],
                   vocab: Vocabulary, hyper: Hyperparams,
                   trace: Optional[list] = None) -> RuleSet:
    """Stage two: learn the target task's rule set under the fixed,
    transferred prototype set."""
    return learn_ruleset(target_examples, G_star, vocab, hyper, trace=trace)


# ---------------------------------------------------------------------------
# prototype search

def _proto_from_sketch(sk: RuleSketch, phi: Sequence[float]) -> RuleProto:
    return RuleProto(sk.action, sk.context, sk.outcomes, tuple(phi))


def _fit_all_phis(protos: list, structures: Sequence, counts: Sequence,
                  vocab: Vocabulary, hyper: Hyperparams) -> list:
    """Refit every prototype's Dirichlet weights from the local rules that
    the stage-one correspondence assigns to it, with counts merged per
    prototype outcome slot."""
    G_tmp = RuleSetProto(tuple(protos))
    grouped = [[] for _ in protos]
    for sketches, task_counts in zip(structures, counts):
        for sk, c in zip(sketches, task_counts):
            a_idx = context_argmax_assignment(sk, G_tmp, vocab, hyper)
            if a_idx is None:
                continue
            proto = protos[a_idx]
            b_hat, _ = best_outcome_assignment(sk, proto, vocab, hyper)
            n_star = proto.n_outcomes
            merged: dict = {}
            for j, b in enumerate(b_hat):
                slot = n_star if b == SEED else b
                merged[slot] = merged.get(slot, 0) + int(c[j])
            slots = sorted(merged)
            vec = [merged[s] for s in slots] + [int(c[-1])]
            grouped[a_idx].append((tuple(slots), np.asarray(vec)))
    fitted = []
    for p, g in zip(protos, grouped):
        phi = fit_proto_dirichlet(g, p.n_outcomes, hyper)
        fitted.append(RuleProto(p.action, p.context, p.outcomes, phi))
    return fitted


def _prototype_objective(G: RuleSetProto, structures, counts,
                         vocab: Vocabulary, hyper: Hyperparams) -> float:
    total = log_p_G(G, vocab, hyper, exponent=hyper.formula_score_exponent)
    for sketches, task_counts in zip(structures, counts):
        m = len(sketches)
        total += log_p_num(m, len(G), hyper.alpha, hyper.beta) + math.lgamma(m + 1)
        for sk, c in zip(sketches, task_counts):
            _, _, lp = greedy_rule_assignment(sk, G, vocab, hyper, c)
            total += lp
    return total


def learn_prototype(structures: Sequence[Sequence[RuleSketch]],
                    counts: Sequence[Sequence[np.ndarray]],
                    vocab: Vocabulary, hyper: Hyperparams,
                    init: RuleSetProto = RuleSetProto(),
                    trace: Optional[list] = None) -> RuleSetProto:
    """Greedy search over rule-set prototypes given fixed local structures
    (their outcome counts stand in for the training sets).  Overlapping
    prototype contexts/outcomes are allowed; exact duplicates are not."""

    def build(protos: list) -> Optional[RuleSetProto]:
        keys = [p.structure_key() for p in protos]
        if len(keys) != len(set(keys)):
            return None
        fitted = _fit_all_phis(protos, structures, counts, vocab, hyper)
        return RuleSetProto(tuple(fitted))

    def objective(G: Optional[RuleSetProto]) -> float:
        if G is None:
            return LOG_ZERO
        return _prototype_objective(G, structures, counts, vocab, hyper)

    # candidate source material: distinct local rules and their literals
    local = []
    seen = set()
    for sketches in structures:
        for sk in sketches:
            if sk.key() not in seen:
                seen.add(sk.key())
                local.append(sk)

    current = init
    score = objective(current)
    refit = build(list(current.protos))
    if refit is not None and objective(refit) > score + SCORE_EPS:
        current, score = refit, objective(refit)
    step = 0
    while True:
        candidates = []
        protos = list(current.protos)
        existing = {p.structure_key() for p in protos}
        # AddRule: copy a local rule as a prototype
        for sk in local:
            if (sk.action, sk.context, frozenset(sk.outcomes)) in existing:
                continue
            seed_phi = tuple([1.0] * (len(sk.outcomes) + 2))
            candidates.append(("add-proto",
                               protos + [_proto_from_sketch(sk, seed_phi)]))
        # RemoveRule
        for k in range(len(protos)):
            candidates.append(("remove-proto", protos[:k] + protos[k + 1:]))
        # Add/Remove Literal on a prototype context
        lit_pool = sorted({(t, v) for sk in local for t, v in sk.context.items()},
                          key=lambda tv: (tv[0].key(), str(tv[1])))
        for k, p in enumerate(protos):
            m = dict(p.context.mapping())
            for t in list(m):
                m2 = dict(m)
                del m2[t]
                q = RuleProto(p.action, Formula(m2), p.outcomes, p.phi)
                candidates.append(("remove-proto-literal",
                                   protos[:k] + [q] + protos[k + 1:]))
            for t, v in lit_pool:
                if t in m:
                    continue
                q = RuleProto(p.action, Formula({**m, t: v}), p.outcomes, p.phi)
                candidates.append(("add-proto-literal",
                                   protos[:k] + [q] + protos[k + 1:]))
        # Add/Remove Outcome on a prototype
        out_pool = sorted({o for sk in local for o in sk.outcomes},
                          key=_formula_key)
        for k, p in enumerate(protos):
            for o in out_pool:
                if o in p.outcomes:
                    continue
                q = RuleProto(p.action, p.context, p.outcomes + (o,),
                              p.phi[:-2] + (1.0,) + p.phi[-2:])
                candidates.append(("add-proto-outcome",
                                   protos[:k] + [q] + protos[k + 1:]))
            for j in range(len(p.outcomes)):
                q = RuleProto(p.action, p.context,
                              p.outcomes[:j] + p.outcomes[j + 1:],
                              p.phi[:j] + p.phi[j + 1:])
                candidates.append(("remove-proto-outcome",
                                   protos[:k] + [q] + protos[k + 1:]))

        best_G, best_score, best_op = None, score, None
        for op, plist in candidates[:CANDIDATE_CAP]:
            G2 = build(plist)
            if G2 is None:
                continue
            s = objective(G2)
            if s > best_score + SCORE_EPS:
                best_G, best_score, best_op = G2, s, op
        if best_G is None:
            return current
        current, score = best_G, best_score
        step += 1
        if trace is not None:
            trace.append({"search": "prototype", "step": step,
                          "operator": best_op, "score": score})


# ---------------------------------------------------------------------------
# coordinate ascent

def coordinate_ascent(datasets: Sequence[Sequence[Example]],
                      vocab: Vocabulary, hyper: Hyperparams,
                      max_alternations: int = MAX_ALTERNATIONS,
                      trace: Optional[list] = None):
    """Alternate local rule-set searches (per task, given the prototype
    set) with prototype search (given the structures) until a full
    alternation changes nothing.

    Returns (G, structures, rulesets): the prototype set, the per-task
    sketch lists, and the finalized per-task rule sets.
    """
    if not datasets:
        raise ValueError("at least one dataset required")
    G = RuleSetProto()
    structures: List[tuple] = [() for _ in datasets]
    for alternation in range(max_alternations):
        changed = False
        scorers = []
        for k, examples in enumerate(datasets):
            sketches, scorer, _ = _search_ruleset(
                examples, G, vocab, hyper, init=structures[k], trace=trace)
            if sketches != structures[k]:
                changed = True
            structures[k] = sketches
            scorers.append(scorer)
        counts = []
        for sketches, scorer in zip(structures, scorers):
            counts.append([scorer.rule_contribution(sk)[1] for sk in sketches])
        G_new = learn_prototype(structures, counts, vocab, hyper, init=G,
                                trace=trace)
        if [p.to_json() for p in G_new.protos] != [p.to_json() for p in G.protos]:
            changed = True
        G = G_new
        if not changed:
            break
    else:
        import warnings
        warnings.warn("coordinate ascent hit the alternation cap; "
                      "returning best-so-far")
    rulesets = [finalize_ruleset(sketches, examples, G, vocab, hyper)
                for sketches, examples in zip(structures, datasets)]
    return G, structures, rulesets


def write_trace(path, records: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
