import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import haar_state
from qcorrcomm import states
from qcorrcomm.complexity import marginal_complexity
from qcorrcomm.psd_rank import PsdFactorization, evaluate
from qcorrcomm.spectral import marginal_ranks, support_decomposition
from qcorrcomm.synthesis import (
    DiscardStep,
    GenerationProtocol,
    IsometryStep,
    LocalIsometry,
    ProtocolError,
    SendStep,
    canonical_seed,
    ceil_log2,
    psd_purification_parties,
    purification_from_psd,
    qcomm_upper_protocol,
    simulate_protocol,
    standard_purification,
    subset_truncate,
    truncate_pure,
)
from qcorrcomm.tensor_core import (
    DensityOperator,
    InvariantError,
    PureState,
    embed_classical,
    is_purification,
    purifies_with_ancillas,
)


def low_rank_state(dims, terms, rng):
    """Sum of ``terms`` random product states, so marginal ranks stay below ``terms``."""
    t = np.zeros(dims, dtype=complex)
    for _ in range(terms):
        prod = np.array(1.0 + 0j)
        for d in dims:
            prod = np.multiply.outer(prod, rng.normal(size=d) + 1j * rng.normal(size=d))
        t += prod
    return PureState(dims, t / np.linalg.norm(t))


def state_suite(rng, n):
    shapes = [(2, 2), (3, 3), (3, 5), (2, 2, 2), (3, 2, 2), (4, 4, 4), (2, 3, 4)]
    for i in range(n):
        dims = list(shapes[i % len(shapes)])
        if i % 3 == 2:
            yield low_rank_state(dims, 1 + i % 3, rng)
        else:
            yield haar_state(dims, rng)


def random_factorization(dims, r, rng):
    stacks = []
    for d in dims:
        G = rng.normal(size=(d, r, r)) + 1j * rng.normal(size=(d, r, r))
        stacks.append(G @ G.conj().transpose(0, 2, 1))
    f = PsdFactorization(stacks)
    scale = evaluate(f).sum() ** (1 / len(dims))
    return PsdFactorization([s / scale for s in f.factors])


def trivial_protocol(psi):
    return GenerationProtocol(psi.k, psi, list(range(psi.k)), [], psi)


class TestCeilLog2:
    @pytest.mark.parametrize("n,expected", [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (1024, 10)])
    def test_values(self, n, expected):
        assert ceil_log2(n) == expected

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            ceil_log2(0)


class TestLocalIsometry:
    def test_accepts_isometry(self):
        LocalIsometry(0, np.eye(4)[:, :2])

    def test_rejects_non_isometry(self):
        with pytest.raises(ProtocolError, match="isometry"):
            LocalIsometry(0, np.ones((2, 2)))

    def test_rejects_wide(self):
        with pytest.raises(ProtocolError, match="tall"):
            LocalIsometry(0, np.ones((1, 2)))


class TestSimulator:
    def test_empty_protocol(self):
        sim = simulate_protocol(trivial_protocol(states.ghz()))
        assert np.isclose(sim.fidelity, 1) and sim.communication == 0 and sim.size == 3

    def test_send_moves_ownership_only(self):
        p = GenerationProtocol(2, states.epr(), [0, 0], [SendStep(0, 1, 1, 1)], states.epr())
        sim = simulate_protocol(p)
        assert sim.communication == 1 and sim.ledger == {(0, 1): 1}
        assert np.isclose(sim.fidelity, 1)

    def test_unowned_register(self):
        p = GenerationProtocol(2, states.epr(), [0, 1], [SendStep(0, 1, 1, 1)], states.epr())
        with pytest.raises(ProtocolError, match="does not own"):
            simulate_protocol(p)

    def test_isometry_on_unowned_register(self):
        step = IsometryStep(0, np.eye(2), inputs=(1,))
        p = GenerationProtocol(2, states.epr(), [0, 1], [step], states.epr())
        with pytest.raises(ProtocolError, match="does not own"):
            simulate_protocol(p)

    def test_wrong_qubit_count(self):
        p = GenerationProtocol(2, states.epr(), [0, 0], [SendStep(0, 1, 2, 1)], states.epr())
        with pytest.raises(ProtocolError):
            simulate_protocol(p)

    def test_final_dims_must_match(self):
        p = GenerationProtocol(2, states.epr(), [0, 0], [], states.epr())
        with pytest.raises(ProtocolError, match="final party dims"):
            simulate_protocol(p)

    def test_discard_leaves_mixed_state(self):
        target = DensityOperator([2], np.eye(2) / 2)
        p = GenerationProtocol(2, states.epr(), [0, 1], [DiscardStep(1, 1)], target)
        with pytest.raises(ProtocolError):
            simulate_protocol(p)      # party 1 ends with nothing, target has one party
        p = GenerationProtocol(1, states.epr(), [0, 0], [DiscardStep(0, 1)], target)
        sim = simulate_protocol(p)
        assert isinstance(sim.final, DensityOperator)
        assert np.isclose(sim.fidelity, 1)

    def test_local_unitary(self):
        X = np.array([[0, 1], [1, 0]])
        target = PureState([2, 2], np.array([[0, 1], [1, 0]]) / math.sqrt(2))
        p = GenerationProtocol(2, states.epr(), [0, 1], [IsometryStep(1, X)], target)
        assert np.isclose(simulate_protocol(p).fidelity, 1)

    def test_seed_must_be_qubits(self):
        with pytest.raises(ProtocolError, match="qubit"):
            trivial_protocol(PureState([3], [1, 0, 0]))


class TestCanonicalSeed:
    def test_product(self):
        p = canonical_seed(states.product([2, 3, 2], [1, 2, 0]))
        assert p.size == 0
        sim = simulate_protocol(p)
        assert sim.fidelity >= 1 - 1e-8

    def test_ghz(self):
        p = canonical_seed(states.ghz())
        assert p.qubits_per_party == [1, 1, 1]
        sim = simulate_protocol(p)
        assert sim.fidelity >= 1 - 1e-8 and sim.size == 3 and sim.communication == 0
        a = p.seed.amplitudes
        assert np.count_nonzero(np.abs(a) > 1e-12) == 2

    def test_bipartite_three_by_three(self, rng):
        psi = haar_state([3, 3], rng)
        p = canonical_seed(psi)
        assert p.qubits_per_party == [2, 2]
        assert simulate_protocol(p).fidelity >= 1 - 1e-8

    def test_roundtrip_suite(self, rng):
        for psi in state_suite(rng, 200):
            p = canonical_seed(psi)
            sim = simulate_protocol(p)
            assert sim.fidelity >= 1 - 1e-8
            assert sim.size == marginal_complexity(psi)
            assert sim.communication == 0
            assert isinstance(sim.final, PureState)


class TestQcommProtocol:
    def test_ghz(self):
        sim = simulate_protocol(qcomm_upper_protocol(states.ghz()))
        assert sim.communication == 2 and sim.fidelity >= 1 - 1e-8

    def test_epr(self):
        sim = simulate_protocol(qcomm_upper_protocol(states.epr()))
        assert sim.communication == 1 and sim.fidelity >= 1 - 1e-8

    def test_product(self):
        sim = simulate_protocol(qcomm_upper_protocol(states.product([2, 2, 2])))
        assert sim.communication == 0

    def test_preparer_tie_goes_to_lowest_index(self):
        p = qcomm_upper_protocol(states.ghz())
        assert set(p.owners) == {0}

    def test_largest_share_prepares(self):
        p = qcomm_upper_protocol(states.psi0())
        assert p.owners == [2, 2, 2]

    def test_bound_suite(self, rng):
        for psi in state_suite(rng, 100):
            sim = simulate_protocol(qcomm_upper_protocol(psi))
            m = marginal_complexity(psi)
            n = [ceil_log2(r) for r in marginal_ranks(psi)]
            assert sim.communication == m - max(n)
            assert sim.communication <= Fraction((psi.k - 1) * m, psi.k)
            assert sim.fidelity >= 1 - 1e-8


class TestPurificationFromPsd:
    def test_product(self):
        f = PsdFactorization([np.array([0.3, 0.7]).reshape(2, 1, 1), np.array([0.4, 0.6]).reshape(2, 1, 1)])
        psi = purification_from_psd(f)
        assert psi.dims == (2, 2, 1, 2, 2, 1)
        assert marginal_complexity(psi) == 0 or all(r == 1 for r in marginal_ranks(psi)[2::3])

    def test_correlated_bits(self):
        c = np.array([np.diag([2 ** -0.5, 0]), np.diag([0, 2 ** -0.5])])
        psi = purification_from_psd(PsdFactorization([c, c]))
        ok, res = is_purification(psi, DensityOperator([2, 2], np.diag([0.5, 0, 0, 0.5])), [0, 3])
        assert ok and res <= 1e-12

    def test_random_roundtrip(self, rng):
        for _ in range(50):
            f = random_factorization([2, 2, 2], 2, rng)
            psi = purification_from_psd(f)
            target = embed_classical_from(evaluate(f))
            ok, res = is_purification(psi, target, [0, 3, 6])
            assert ok and res <= 1e-8

    def test_renormalized_flag(self, rng):
        f = random_factorization([2, 2], 2, rng)
        double = PsdFactorization([2 * f.factors[0], f.factors[1]])
        assert purification_from_psd(double).renormalized
        assert not purification_from_psd(f).renormalized

    def test_party_groups(self):
        c = np.array([np.diag([2 ** -0.5, 0]), np.diag([0, 2 ** -0.5])])
        f = PsdFactorization([c, c])
        assert psd_purification_parties(f) == [[0, 1, 2], [3, 4, 5]]


def embed_classical_from(t):
    from qcorrcomm.tensor_core import ClassicalDistribution
    t = np.clip(t, 0, None)
    return embed_classical(ClassicalDistribution(t.shape, t / t.sum()))


class TestTruncation:
    def test_small_eps_is_identity(self, rng):
        psi = haar_state([2, 3], rng)
        tr = truncate_pure(psi, 1e-9)
        assert np.isclose(tr.fidelity, 1, atol=1e-12)

    def test_skewed_pair(self):
        psi = PureState([2, 2], np.diag([math.sqrt(0.9), math.sqrt(0.1)]))
        tr = truncate_pure(psi, 0.12)
        assert tr.kept == [1, 1]
        assert np.isclose(tr.fidelity, math.sqrt(0.9), atol=1e-12)
        assert np.isclose(abs(tr.state.amplitudes[0, 0]), 1)

    def test_ghz_unchanged(self):
        tr = truncate_pure(states.ghz(), 0.05)
        assert tr.kept == [2, 2, 2] and np.isclose(tr.fidelity, 1)

    def test_fidelity_is_root_mass(self, rng):
        for psi in state_suite(rng, 40):
            tr = truncate_pure(psi, 0.2)
            assert abs(tr.fidelity - math.sqrt(tr.retained_mass)) <= 1e-10

    def test_proven_bound(self, rng):
        # union bound over parties: discarded mass <= k (1 - (1 - eps/k)^2)
        for eps in (0.05, 0.1, 0.3):
            for psi in state_suite(rng, 60):
                k = psi.k
                tr = truncate_pure(psi, eps)
                floor = 1 - k * (1 - (1 - eps / k) ** 2)
                assert tr.retained_mass >= floor - 1e-12
                assert marginal_complexity(tr.state) <= sum(ceil_log2(r) for r in tr.kept)

    def test_eps_range(self):
        with pytest.raises(InvariantError):
            truncate_pure(states.ghz(), 1.5)


class TestSubsetTruncate:
    def test_full_sets(self, rng):
        psi = haar_state([2, 2, 2], rng)
        out, mass = subset_truncate(psi, [[0, 1]] * 3)
        assert np.isclose(mass, 1) and np.isclose(abs(np.vdot(out.vector, psi.vector)), 1)

    def test_ghz_single_branch(self):
        out, mass = subset_truncate(states.ghz(), [[0], [0], [0]])
        assert np.isclose(mass, 0.5)
        assert marginal_ranks(out) == [1, 1, 1]

    def test_epr(self):
        out, mass = subset_truncate(states.epr(), [[0], [0]])
        assert np.isclose(mass, 0.5) and marginal_ranks(out) == [1, 1]

    def test_empty_subset(self):
        with pytest.raises(InvariantError, match="empty"):
            subset_truncate(states.epr(), [[], [0]])

    def test_out_of_range(self):
        with pytest.raises(InvariantError):
            subset_truncate(states.epr(), [[0, 2], [0]])


class TestStandardPurification:
    @pytest.mark.parametrize("party", [0, 1, 2])
    def test_rho0(self, party):
        psi = standard_purification(states.rho0(), party)
        assert purifies_with_ancillas(psi, states.rho0())[0]
        assert psi.dims[party] == 4

    def test_pure_input_needs_no_ancilla(self):
        psi = standard_purification(states.ghz().density(), 0)
        assert psi.dims == (2, 2, 2)

    def test_support_of_seed_matches_decomposition(self, rng):
        psi = haar_state([2, 3, 2], rng)
        p = canonical_seed(psi)
        dec = support_decomposition(psi)
        seed = p.seed.amplitudes[tuple(slice(0, r) for r in dec.ranks)]
        np.testing.assert_allclose(seed, dec.coefficients, atol=1e-14)
