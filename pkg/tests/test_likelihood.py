import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gammaln

from protorules.core import (
    FALSE,
    TRUE,
    Formula,
    Term,
    Var,
    canonical_schema,
)
from protorules.likelihood import (
    Correspondence,
    best_outcome_assignment,
    collect_counts,
    context_argmax_assignment,
    fit_proto_dirichlet,
    greedy_correspondence,
    greedy_rule_assignment,
    polya_log_marginal,
    posterior_mean_params,
    project_dirichlet,
    rule_data_term,
    _fit_objective,
)
from protorules.priors import SEED, Hyperparams, RuleProto, RuleSetProto

X = Var("X")
Y = Var("Y")
HYPER = Hyperparams()


def t(symbol, *args):
    return Term(symbol, tuple(args))


def dirichlet_multinomial_quadrature(phi, counts):
    """Adaptive numerical integration of the marginal likelihood of one
    specific count sequence: int Dir(p; phi) prod p_j^{c_j} dp.

    The simplex integral is factorized by the stick-breaking representation
    of the Dirichlet into independent 1-D Beta-weighted integrals, each
    evaluated by adaptive quadrature.
    """
    phi = np.asarray(phi, dtype=float)
    counts = np.asarray(counts, dtype=float)
    total = 1.0
    for j in range(len(phi) - 1):
        a, b = phi[j], phi[j + 1:].sum()
        c, rest = counts[j], counts[j + 1:].sum()
        log_norm = gammaln(a + b) - gammaln(a) - gammaln(b)

        def integrand(v, a=a, b=b, c=c, rest=rest, log_norm=log_norm):
            if v <= 0.0 or v >= 1.0:
                return 0.0
            return math.exp(log_norm + (a + c - 1) * math.log(v)
                            + (b + rest - 1) * math.log1p(-v))

        val, err = integrate.quad(integrand, 0.0, 1.0,
                                  epsabs=1e-13, epsrel=1e-10, limit=200)
        total *= val
    return total


class TestPolyaMarginal:
    def test_matches_quadrature_on_randomized_cases(self):
        rng = np.random.default_rng(2024)
        for _ in range(10):
            d = int(rng.integers(2, 5))  # up to 3 outcomes plus noise
            phi = rng.uniform(0.2, 5.0, size=d)
            n = int(rng.integers(0, 11))
            counts = rng.multinomial(n, np.ones(d) / d)
            ours = math.exp(polya_log_marginal(phi, counts))
            oracle = dirichlet_multinomial_quadrature(phi, counts)
            assert ours == pytest.approx(oracle, rel=1e-6)

    def test_zero_counts_gives_unity(self):
        assert polya_log_marginal((1.0, 2.0), (0, 0)) == pytest.approx(0.0)

    def test_rejects_nonpositive_weights(self):
        with pytest.raises(Exception):
            polya_log_marginal((1.0, 0.0), (1, 1))

    def test_data_term_adds_noise_floor(self):
        phi = (1.0, 1.0)
        counts = np.array([3, 2])
        expected = polya_log_marginal(phi, counts) + 2 * math.log(HYPER.p_min)
        assert rule_data_term(phi, counts, HYPER.p_min) == pytest.approx(expected)


class TestWeightProjection:
    def test_reference_example(self):
        # three local outcomes: two derived from slot 0, one from slot 1
        phi = (2.0, 4.0, 1.0, 0.5)  # two outcome slots, seed, noise
        got = project_dirichlet(phi, (0, 0, 1))
        assert np.allclose(got, (1.0, 1.0, 4.0, 0.5))

    def test_seed_outcomes_share_seed_weight(self):
        phi = (2.0, 1.0, 0.5)  # one outcome slot, seed, noise
        got = project_dirichlet(phi, (SEED, SEED))
        assert np.allclose(got, (0.5, 0.5, 0.5))

    def test_conservation_on_random_pairs(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n_star = int(rng.integers(0, 4))
            phi = rng.uniform(0.1, 5.0, size=n_star + 2)
            n = int(rng.integers(0, 5))
            b_hat = tuple(int(b) for b in rng.integers(-1, n_star, size=n))
            proj = project_dirichlet(phi, b_hat)
            used = {b if b != SEED else n_star for b in b_hat}
            assert abs(proj[:-1].sum() - sum(phi[j] for j in used)) <= 1e-12
            assert proj[-1] == phi[-1]

    def test_posterior_mean_normalizes(self):
        p = posterior_mean_params((1.0, 2.0, 0.5), (3, 0, 1))
        assert p.sum() == pytest.approx(1.0)
        assert np.all(p > 0)


def make_proto():
    ctx = Formula({t("on", X, Y): TRUE, t("clear", X): TRUE})
    out = Formula({t("on", X, Y): FALSE, t("inhand", X): TRUE})
    return RuleProto(canonical_schema("pickup", 2), ctx, (out,),
                     (3.0, 0.5, 0.2))


class TestCorrespondence:
    def test_identical_rule_maps_to_proto(self):
        from protorules.rules import RuleSketch
        from protorules.core import FunctionSymbol, Vocabulary
        vocab = Vocabulary(
            functions=(FunctionSymbol("on", 2, (TRUE, FALSE)),
                       FunctionSymbol("clear", 1, (TRUE, FALSE)),
                       FunctionSymbol("inhand", 1, (TRUE, FALSE))),
            actions=(("pickup", 2),),
            constants=(TRUE, FALSE, "a", "b"),
        )
        proto = make_proto()
        g = RuleSetProto((proto,))
        sk = RuleSketch(proto.action, proto.context, proto.outcomes)
        assert context_argmax_assignment(sk, g, vocab, HYPER) == 0
        a_idx, b_hat, lp = greedy_rule_assignment(sk, g, vocab, HYPER)
        assert a_idx == 0
        assert b_hat == (0,)
        corr = greedy_correspondence((sk,), g, vocab, HYPER)
        assert corr == Correspondence((0,), ((0,),))

    def test_unrelated_rule_falls_back_to_nil(self):
        from protorules.rules import RuleSketch
        from protorules.core import FunctionSymbol, Vocabulary
        vocab = Vocabulary(
            functions=(FunctionSymbol("on", 2, (TRUE, FALSE)),
                       FunctionSymbol("clear", 1, (TRUE, FALSE)),
                       FunctionSymbol("inhand", 1, (TRUE, FALSE))),
            actions=(("pickup", 2), ("drop", 1)),
            constants=(TRUE, FALSE, "a", "b"),
        )
        g = RuleSetProto((make_proto(),))
        sk = RuleSketch(canonical_schema("drop", 1), Formula(), ())
        a_idx, b_hat, lp = greedy_rule_assignment(sk, g, vocab, HYPER)
        assert a_idx is None
        assert b_hat == ()


class TestDirichletFit:
    def test_zero_data_fallback(self):
        phi = fit_proto_dirichlet([], 1, HYPER)
        assert len(phi) == 3
        assert len(set(phi)) == 1  # uniform
        assert sum(phi) == pytest.approx(1.0 / HYPER.lambda_phi)

    def test_fit_beats_random_candidates(self):
        rng = np.random.default_rng(5)
        grouped = [((0, 1), np.array([8, 2, 1])),
                   ((0, 1), np.array([7, 3, 0])),
                   ((0,), np.array([5, 2]))]
        n_star = 1
        fitted = np.asarray(fit_proto_dirichlet(grouped, n_star, HYPER))
        best = _fit_objective(fitted, grouped, n_star, HYPER)
        for _ in range(50):
            cand = rng.uniform(0.05, 10.0, size=n_star + 2)
            assert _fit_objective(cand, grouped, n_star, HYPER) <= best + 1e-6

    def test_fit_concentrates_on_consistent_data(self):
        consistent = [((0,), np.array([9, 1])) for _ in range(5)]
        spread = [((0,), np.array([k, 10 - k])) for k in (1, 5, 9, 3, 7)]
        phi_c = fit_proto_dirichlet(consistent, 0, HYPER)
        phi_s = fit_proto_dirichlet(spread, 0, HYPER)
        assert sum(phi_c) > sum(phi_s)


class TestCollectCounts:
    def test_counts_with_noise(self, slippery_ruleset, stacked_state,
                               slippery_vocab):
        from protorules.rules import Example, RuleSketch
        from protorules.core import ActionTerm, apply_outcome
        from tests.conftest import SUCCESS
        rule = slippery_ruleset.rules[0]
        sk = RuleSketch(rule.action, rule.context, rule.outcomes)
        act = ActionTerm("pickup", ("B-A", "B-B"))
        theta = {X: "B-A", Y: "B-B"}
        succ = apply_outcome(stacked_state, SUCCESS, theta)
        noise = stacked_state.updated({t("wet"): TRUE})
        covered = [(Example(stacked_state, act, succ), theta),
                   (Example(stacked_state, act, stacked_state), theta),
                   (Example(stacked_state, act, noise), theta)]
        counts = collect_counts(sk, covered)
        assert list(counts) == [1, 0, 1, 1]
