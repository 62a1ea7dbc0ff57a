import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qreadout.errors import ParameterError, PostSelectionError
from qreadout.matrix import basis_from_indices, build_qram, generate_low_rank
from qreadout.oracles import classical_gram_schmidt, exact_adaptive_distribution
from qreadout.simulator import (HADAMARD, ShotLedger, StateVector, apply_controlled_reflection,
                                apply_unitary, householder, lcu_prepare_t, marginal,
                                noisy_reflection, post_select, prepare_pair_superposition,
                                qgsp_circuit_state, reflection_operator, sample_counts,
                                sample_register)

from conftest import TRI, overlap_pair


def col_anc_state(vec, anc=0):
    tensor = np.zeros((len(vec), 2), dtype=complex)
    tensor[:, anc] = vec
    return StateVector(tensor, ("col", "anc"))


class TestStateVector:
    def test_layout(self):
        s = StateVector.zero(row=3, col=5, anc=2)
        assert s.register_dims == [3, 5, 2]
        assert s.amplitudes.size == 30
        assert s.norm_sq == 1.0

    def test_tensor_product_and_reorder(self):
        a = StateVector.from_vector([0.6, 0.8], "x")
        b = StateVector.from_vector([0.0, 1.0, 0.0], "y")
        s = a.tensor_product(b).reorder(("y", "x"))
        assert s.registers == ("y", "x")
        np.testing.assert_allclose(s.tensor[1], [0.6, 0.8])

    def test_unknown_register(self):
        with pytest.raises(ParameterError):
            StateVector.zero(a=2).axis("b")

    def test_json(self):
        assert '"registers"' in StateVector.zero(a=2).to_json()


class TestReflection:
    def test_own_axis_flips(self):
        t = np.array([0.6, 0.8, 0.0])
        out = apply_controlled_reflection(col_anc_state(t), t, 0)
        np.testing.assert_allclose(out.tensor[:, 0], -t)

    def test_control_not_satisfied(self):
        t = np.array([0.6, 0.8, 0.0])
        s = col_anc_state(t, anc=1)
        out = apply_controlled_reflection(s, t, 0)
        np.testing.assert_array_equal(out.tensor, s.tensor)

    def test_orthogonal_unchanged_and_dense_oracle(self):
        t = np.array([0.6, 0.8, 0.0])
        s = np.array([0.8, -0.6, 0.0])
        out = apply_controlled_reflection(col_anc_state(s), t, 0)
        np.testing.assert_allclose(out.tensor[:, 0], s, atol=1e-15)
        dense = (np.eye(3) - 2 * np.outer(t, t)) @ s
        np.testing.assert_allclose(out.tensor[:, 0], dense, atol=1e-15)

    def test_non_unit_axis(self):
        with pytest.raises(ParameterError):
            apply_controlled_reflection(col_anc_state([1.0, 0.0]), np.array([1.0, 1.0]))


class TestNoisyReflection:
    t = np.array([0.6, 0.0, 0.8, 0.0])

    def test_zero_eps_is_exact(self):
        assert np.array_equal(noisy_reflection(self.t, 0.0, 5), reflection_operator(self.t))

    @pytest.mark.parametrize("eps", [1e-1, 1e-3, 1e-5])
    def test_unitary_and_calibrated(self, eps):
        r = noisy_reflection(self.t, eps, seed=3)
        assert np.linalg.norm(r.conj().T @ r - np.eye(4), 2) <= 1e-12
        d = np.linalg.norm(r - reflection_operator(self.t), 2)
        assert 0.9 * eps <= d <= eps

    def test_seeded(self):
        assert np.array_equal(noisy_reflection(self.t, 1e-3, 1), noisy_reflection(self.t, 1e-3, 1))

    def test_rejects_large_eps(self):
        with pytest.raises(ParameterError):
            noisy_reflection(self.t, 1.5, 0)


class TestMeasurement:
    def test_post_select_plus(self):
        s = apply_unitary(StateVector.zero(q=2), HADAMARD, "q")
        out, p = post_select(s, "q", 0)
        assert np.isclose(p, 0.5)
        np.testing.assert_allclose(out.tensor, [1.0, 0.0])

    def test_zero_amplitude_outcome(self):
        with pytest.raises(PostSelectionError):
            post_select(StateVector.zero(q=2), "q", 1)

    def test_complementary_outcomes(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal(6)
        s = StateVector(v.reshape(3, 2) / np.linalg.norm(v), ("x", "y"))
        _, p0 = post_select(s, "y", 0)
        _, p1 = post_select(s, "y", 1)
        assert abs(p0 + p1 - 1) < 1e-12

    def test_sampling_round_probability(self):
        tree = build_qram(TRI)
        basis = basis_from_indices(TRI, [2])
        state = qgsp_circuit_state(tree, [reflection_operator(t) for t in basis.ortho_basis])
        selected, p = post_select(state, "anc", 0)
        assert np.isclose(p, 0.25)
        np.testing.assert_allclose(marginal(selected, "row"), [0.5, 0.5, 0.0], atol=1e-15)

    def test_basis_state_sample(self):
        vec = np.zeros(8)
        vec[5] = 1.0
        out, collapsed = sample_register(StateVector.from_vector(vec, "row"), "row",
                                         np.random.default_rng(0))
        assert out == 5 and np.isclose(collapsed.norm_sq, 1.0)

    def test_uniform_frequencies(self):
        s = StateVector.from_vector(np.full(4, 0.5), "row")
        counts = sample_counts(s, "row", np.random.default_rng(1), 100_000)
        assert np.all(np.abs(counts / 1e5 - 0.25) <= 0.01)

    def test_row_norm_sampling_at_start(self):
        state = qgsp_circuit_state(build_qram(TRI), [])
        np.testing.assert_allclose(marginal(state, "row"), [0.25, 0.25, 0.5])
        _, p = post_select(state, "anc", 0)
        assert np.isclose(p, 1.0)


class TestUnitarity:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 7), st.integers(0, 2**31 - 1))
    def test_householder(self, n, seed):
        t = np.random.default_rng(seed).standard_normal(n)
        t /= np.linalg.norm(t)
        h = householder(t)
        np.testing.assert_allclose(h @ h.T, np.eye(n), atol=1e-12)
        np.testing.assert_allclose(h[:, 0], t, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**31 - 1))
    def test_circuit_preserves_norm(self, m, n, seed):
        a = np.random.default_rng(seed).standard_normal((m, n))
        tree = build_qram(a)
        basis = basis_from_indices(a, [0])
        state = qgsp_circuit_state(tree, [noisy_reflection(basis.ortho_basis[0], 1e-2, seed)])
        assert abs(state.norm_sq - 1.0) < 1e-12


class TestLcu:
    def test_single_term(self):
        a = generate_low_rank(5, 4, 2, 2.0, seed=1)
        tree = build_qram(a)
        basis = basis_from_indices(a, [3])
        prepared = lcu_prepare_t(tree, basis, 1)
        assert np.isclose(prepared.probability, 1.0)
        np.testing.assert_allclose(prepared.state.vector(), tree.unit_rows()[3], atol=1e-12)

    def test_orthonormal_pair(self):
        a = np.eye(3)
        basis = basis_from_indices(a, [0, 1])
        prepared = lcu_prepare_t(build_qram(a), basis, 2)
        assert np.isclose(prepared.probability, 0.25)
        np.testing.assert_allclose(prepared.state.vector(), [0, 1, 0], atol=1e-12)

    def test_overlap_pair(self, pair_basis):
        rows, tree, basis = pair_basis
        ledger = ShotLedger()
        prepared = lcu_prepare_t(tree, basis, 2, ledger)
        assert abs(prepared.probability - 0.16) < 1e-12
        t, _ = classical_gram_schmidt(rows, [0, 1])
        assert abs(np.vdot(t[1], prepared.state.vector())) ** 2 >= 1 - 1e-10
        assert ledger.expected_repetitions == 3  # ceil(1 / sqrt(0.16)) = ceil(2.5)

    def test_out_of_range(self, pair_basis):
        _, tree, basis = pair_basis
        with pytest.raises(ParameterError):
            lcu_prepare_t(tree, basis, 3)


class TestPairSuperposition:
    def expected(self, t_lo, t_hi):
        return np.stack([t_lo, t_hi]) / np.sqrt(2)

    def test_equal_indices(self, pair_basis):
        _, tree, basis = pair_basis
        out = prepare_pair_superposition(tree, basis, 2, 2).state.tensor
        t2 = basis.ortho_basis[1]
        np.testing.assert_allclose(out, self.expected(t2, t2), atol=1e-12)

    def test_orthonormal_probability(self):
        a = np.eye(3)
        prepared = prepare_pair_superposition(build_qram(a), basis_from_indices(a, [0, 1]), 1, 2)
        assert np.isclose(prepared.probability, 0.25)

    def test_overlap_pair(self, pair_basis):
        _, tree, basis = pair_basis
        prepared = prepare_pair_superposition(tree, basis, 1, 2)
        assert abs(prepared.probability - 1 / (4 * 1.25**2)) < 1e-12
        t = basis.ortho_basis
        np.testing.assert_allclose(prepared.state.tensor, self.expected(t[0], t[1]), atol=1e-10)

    def test_reversed_order(self, pair_basis):
        _, tree, basis = pair_basis
        t = basis.ortho_basis
        out = prepare_pair_superposition(tree, basis, 2, 1).state.tensor
        np.testing.assert_allclose(out, self.expected(t[1], t[0]), atol=1e-10)

    def test_ledger(self, pair_basis):
        _, tree, basis = pair_basis
        ledger = ShotLedger()
        prepare_pair_superposition(tree, basis, 1, 2, ledger)
        assert ledger.ua_queries == 3 and ledger.expected_repetitions == 3


class TestLedger:
    def test_negative_charge(self):
        with pytest.raises(ParameterError):
            ShotLedger().charge(ua=-1)

    def test_merge(self):
        a, b = ShotLedger(), ShotLedger()
        a.charge(ua=2, copies=5)
        b.charge(va=1, repetitions=1.5)
        a.merge(b)
        assert a.as_dict() == {"ua_queries": 2, "va_queries": 1, "reflection_applications": 0,
                               "copies_of_v": 5, "expected_repetitions": 1.5}


def test_marginal_matches_oracle_on_random_instance():
    a = generate_low_rank(7, 6, 3, 2.0, seed=12)
    tree = build_qram(a)
    basis = basis_from_indices(a, [1, 4])
    state = qgsp_circuit_state(tree, [reflection_operator(t) for t in basis.ortho_basis])
    selected, _ = post_select(state, "anc", 0)
    np.testing.assert_allclose(marginal(selected, "row"), exact_adaptive_distribution(a, [1, 4]),
                               atol=1e-10)
