import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcorrcomm import states
from qcorrcomm.psd_rank import (
    FitOptions,
    PsdFactorization,
    approx_psd_rank_upper,
    evaluate,
    fit,
    flattening_ranks,
    psd_rank_lower,
    psd_rank_search,
    psd_rank_upper,
    residual,
    trivial_factorization,
)
from qcorrcomm.tensor_core import ClassicalDistribution, InvariantError, classical_fidelity

FAST = FitOptions(restarts=4, max_iters=200)


def brute_evaluate(factors):
    """Entry-by-entry Hadamard sum, written out with loops."""
    dims = [len(s) for s in factors]
    r = factors[0].shape[1]
    out = np.zeros(dims, dtype=complex)
    for x in itertools.product(*[range(d) for d in dims]):
        total = 0
        for i in range(r):
            for j in range(r):
                term = 1
                for t, xt in enumerate(x):
                    term *= factors[t][xt][i, j]
                total += term
        out[x] = total
    return out.real


def random_factorization(dims, r, rng):
    stacks = []
    for d in dims:
        G = rng.normal(size=(d, r, r)) + 1j * rng.normal(size=(d, r, r))
        stacks.append(G @ G.conj().transpose(0, 2, 1))
    return PsdFactorization(stacks)


def best_rank_one_fidelity(p, grid=201):
    """Max of sum sqrt(P Q) over product distributions Q on two bits."""
    a = np.linspace(0, 1, grid)
    q = np.stack([np.outer([u, 1 - u], [v, 1 - v]) for u in a for v in a])
    return float(np.max(np.sum(np.sqrt(q * p.probs), axis=(1, 2))))


class TestFactorization:
    def test_rejects_non_psd(self):
        with pytest.raises(InvariantError, match="PSD"):
            PsdFactorization([np.array([[[1.0, 0], [0, -1.0]]])])

    def test_rejects_non_hermitian(self):
        with pytest.raises(InvariantError, match="Hermitian"):
            PsdFactorization([np.array([[[1.0, 1.0], [0, 1.0]]])])

    def test_mismatched_sizes(self):
        with pytest.raises(InvariantError):
            PsdFactorization([np.ones((2, 1, 1)), np.ones((2, 2, 2))])


class TestEvaluate:
    def test_scalar_factors(self):
        p, q = np.array([0.3, 0.7]), np.array([0.4, 0.6])
        f = PsdFactorization([p.reshape(2, 1, 1), q.reshape(2, 1, 1)])
        np.testing.assert_allclose(evaluate(f), np.outer(p, q))

    def test_correlated_bits(self):
        c = np.array([np.diag([2 ** -0.5, 0]), np.diag([0, 2 ** -0.5])])
        np.testing.assert_allclose(evaluate(PsdFactorization([c, c])), np.diag([0.5, 0.5]), atol=1e-15)

    def test_zero_party(self):
        f = PsdFactorization([np.zeros((2, 2, 2)), np.ones((3, 2, 2))])
        assert np.all(evaluate(f) == 0)

    def test_matches_loops(self, rng):
        f = random_factorization([2, 3, 2], 2, rng)
        np.testing.assert_allclose(evaluate(f), brute_evaluate(f.factors), rtol=1e-12)

    def test_nonnegative(self, rng):
        for _ in range(30):
            f = random_factorization([2, 2, 2], 3, rng)
            assert evaluate(f).min() >= -1e-10


class TestResidual:
    def test_exact(self):
        p = states.correlated_bits()
        assert residual(trivial_factorization(p), p) <= 1e-12

    def test_zero(self):
        p = states.correlated_bits()
        f = PsdFactorization([np.zeros((2, 1, 1)), np.zeros((2, 1, 1))])
        assert np.isclose(residual(f, p), np.linalg.norm(p.probs))

    def test_perturbed(self):
        c = np.array([np.diag([2 ** -0.5, 0]), np.diag([0, 2 ** -0.5])])
        d = c.copy()
        d[0] = np.diag([2 ** -0.5 + 0.1, 0])
        f = PsdFactorization([c, d])
        # only P(0,0) moves: (1/sqrt2)(1/sqrt2 + 0.1) - 1/2 = 0.1/sqrt2
        assert np.isclose(residual(f, states.correlated_bits()), 0.1 / math.sqrt(2), atol=1e-14)


class TestFit:
    def test_product_rank_one(self):
        p = states.product_distribution([0.25, 0.75], [0.6, 0.4])
        _, res = fit(p, 1, FAST)
        assert res < 1e-8

    def test_correlated_bits(self):
        p = states.correlated_bits()
        _, r2 = fit(p, 2, FAST)
        _, r1 = fit(p, 1, FAST)
        assert r2 < 1e-6
        assert r1 > 0.1

    def test_reported_residual_is_exact(self, rng):
        t = rng.random((2, 3))
        p = ClassicalDistribution([2, 3], t / t.sum())
        f, res = fit(p, 2, FAST)
        assert abs(residual(f, p) - res) <= 1e-12

    def test_deterministic(self, rng):
        t = rng.random((3, 3))
        p = ClassicalDistribution([3, 3], t / t.sum())
        f1, r1 = fit(p, 2, FAST)
        f2, r2 = fit(p, 2, FAST)
        assert r1 == r2
        for a, b in zip(f1.factors, f2.factors):
            np.testing.assert_array_equal(a, b)


class TestRankBounds:
    @pytest.mark.parametrize("p,lower", [
        (states.product_distribution([0.5, 0.5], [0.5, 0.5]), 1),
        (states.correlated_bits(), 2),
        (ClassicalDistribution([4, 4], np.eye(4) / 4), 2),
        (states.correlated_bits(3), 2),
    ])
    def test_lower(self, p, lower):
        assert psd_rank_lower(p) == lower

    def test_flattening_keys(self):
        ranks = flattening_ranks(states.correlated_bits(3))
        assert set(ranks) == {(0,), (0, 1), (0, 2)}
        assert all(v == 2 for v in ranks.values())

    @pytest.mark.parametrize("p,expected", [
        (states.product_distribution([0.5, 0.5], [0.5, 0.5]), 1),
        (states.correlated_bits(), 2),
        (ClassicalDistribution([2, 2], [[0, 0.5], [0.5, 0]]), 2),
    ])
    def test_upper(self, p, expected):
        assert psd_rank_upper(p, FAST) == expected

    def test_trivial_size(self):
        p = ClassicalDistribution([2, 3, 2], np.full((2, 3, 2), 1 / 12))
        assert trivial_factorization(p).r == 4      # min(3*2, 2*2, 2*3)
        assert residual(trivial_factorization(p), p) <= 1e-12

    def test_lower_le_upper(self, rng):
        for dims in ([2, 2], [2, 3], [3, 3], [2, 2, 2]):
            t = rng.random(dims)
            p = ClassicalDistribution(dims, t / t.sum())
            s = psd_rank_search(p, FAST)
            assert psd_rank_lower(p) <= s.rank
            assert residual(s.factorization, p) <= max(FAST.residual_target, 1e-12)

    def test_ghz_distribution_fits_at_two(self):
        s = psd_rank_search(states.correlated_bits(3), FAST)
        assert s.rank == 2 and not s.trivial


class TestApproxRank:
    def test_skewed_pair(self):
        p = ClassicalDistribution([2, 2], np.diag([0.9, 0.1]))
        res = approx_psd_rank_upper(p, 0.06, FAST)
        assert res.rank == 1
        assert res.fidelity >= 0.94
        assert np.isclose(res.fidelity, math.sqrt(0.9), atol=1e-6)

    def test_balanced_pair(self):
        p = states.correlated_bits()
        assert best_rank_one_fidelity(p) < 0.99      # grid oracle: the best is 1/sqrt2
        res = approx_psd_rank_upper(p, 0.01, FAST)
        assert res.rank == 2
        assert classical_fidelity(p, res.witness) >= 0.99

    def test_small_eps_gives_exact_rank(self):
        p = states.correlated_bits()
        assert approx_psd_rank_upper(p, 1e-6, FAST).rank == psd_rank_upper(p, FAST)

    def test_eps_range(self):
        with pytest.raises(InvariantError):
            approx_psd_rank_upper(states.correlated_bits(), 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10_000))
def test_evaluate_is_nonnegative(r, seed):
    f = random_factorization([2, 3], r, np.random.default_rng(seed))
    out = evaluate(f)
    assert out.min() >= -1e-10 * max(1.0, out.max())
