import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qreadout.errors import InconsistentEstimatesError, ParameterError, PreconditionError
from qreadout.matrix import basis_from_indices, build_qram, generate_low_rank
from qreadout.oracles import classical_gram_schmidt
from qreadout.qgsp import QgspConfig, run_qgsp
from qreadout.readout import (ReadoutConfig, overlap_outcome_probabilities, readout_coordinates,
                              readout_median, reconstruct, signed_overlap,
                              swap_accept_probability, swap_test)
from qreadout.simulator import ShotLedger

from conftest import overlap_pair


def unit(x):
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x)


@pytest.fixture(scope="module")
def setup16():
    a = generate_low_rank(16, 16, 3, 4.0, seed=7)
    tree = build_qram(a)
    basis, _ = run_qgsp(a, tree, QgspConfig(seed=1), ShotLedger())
    return a, tree, basis


class TestSwapTest:
    def test_identical(self):
        v = unit([1, 2, 3])
        assert swap_test(v, v, 0) == pytest.approx(1.0)
        assert swap_accept_probability(v, v) == pytest.approx(1.0)
        assert swap_test(v, v, 100, np.random.default_rng(0)) == 1.0

    def test_orthogonal(self):
        assert swap_test([1.0, 0.0], [0.0, 1.0], 0) == pytest.approx(0.0)
        assert swap_accept_probability([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.5)

    def test_overlap_point_six(self):
        v, t = [1.0, 0.0], [0.6, 0.8]
        assert swap_test(v, t, 0) == pytest.approx(0.36)
        assert swap_accept_probability(v, t) == pytest.approx(0.68)

    def test_non_unit(self):
        with pytest.raises(ParameterError):
            swap_test([1.0, 1.0], [1.0, 0.0], 0)

    def test_shot_std_scaling(self):
        v, t = [1.0, 0.0], [0.6, 0.8]
        stds = []
        for shots in (100, 1000, 10000):
            est = [swap_test(v, t, shots, np.random.default_rng([shots, j])) for j in range(400)]
            stds.append(np.std(est) * np.sqrt(shots))
        assert max(stds) / min(stds) < 1.5


class TestSignedOverlap:
    def test_diagonal_nonnegative(self, pair_basis):
        _, tree, basis = pair_basis
        v = unit([0.3, -0.5, 0.2])
        p = overlap_outcome_probabilities(v, basis, tree, 2, 2)
        assert p[0, 0] + p[1, 1] >= 0.5 - 1e-12
        t2 = basis.ortho_basis[1]
        assert signed_overlap(v, 2, 2, basis, tree, 0) == pytest.approx((v @ t2) ** 2)

    def test_orthogonal_to_ti(self, pair_basis):
        _, tree, basis = pair_basis
        t = basis.ortho_basis
        v = unit(np.cross(t[0], t[1]) + t[0])  # orthogonal to t_2
        assert abs(v @ t[1]) < 1e-12
        p = overlap_outcome_probabilities(v, basis, tree, 1, 2)
        assert p[0, 0] + p[1, 1] == pytest.approx(0.5)

    def test_difference_state(self, pair_basis):
        _, tree, basis = pair_basis
        t = basis.ortho_basis
        v = (t[0] - t[1]) / np.sqrt(2)
        assert signed_overlap(v, 1, 2, basis, tree, 0) == pytest.approx(-0.5)
        p = overlap_outcome_probabilities(v, basis, tree, 1, 2)
        assert p[0, 0] + p[1, 1] == pytest.approx(0.25)

    def test_probabilities_sum_to_one(self, setup16):
        a, tree, basis = setup16
        v = a.right_vectors @ unit([1.0, -2.0, 0.5])
        for k in (1, 2, 3):
            for i in (1, 2, 3):
                assert abs(overlap_outcome_probabilities(v, basis, tree, k, i).sum() - 1) < 1e-12

    def test_exact_identity(self, setup16):
        a, tree, basis = setup16
        v = a.right_vectors @ unit([0.2, 0.7, -0.4])
        t = basis.ortho_basis
        for k in (1, 2, 3):
            for i in (1, 2, 3):
                est = signed_overlap(v, k, i, basis, tree, 0)
                assert abs(est - (t[k - 1] @ v) * (v @ t[i - 1])) < 1e-12


class TestReconstruct:
    def test_first_row(self):
        a = np.array([[3.0, 4.0], [1.0, 0.0]])
        np.testing.assert_allclose(reconstruct(a, [0, 1], [1.0, 0.0]), [0.6, 0.8])

    def test_zero(self):
        np.testing.assert_array_equal(reconstruct(np.eye(2), [0, 1], [0.0, 0.0]), [0.0, 0.0])

    def test_overlap_example(self):
        rows = overlap_pair()
        t, z = classical_gram_schmidt(rows, [0, 1])
        x = z @ np.array([0.0, 1.0])
        np.testing.assert_allclose(reconstruct(rows, [0, 1], x), t[1], atol=1e-8)

    def test_length_mismatch(self):
        with pytest.raises(ParameterError):
            reconstruct(np.eye(2), [0, 1], [1.0])


class TestReadoutCoordinates:
    def test_first_basis_vector(self, setup16):
        a, tree, basis = setup16
        t1 = basis.ortho_basis[0]
        res = readout_coordinates(a, tree, basis, t1, 0.1)
        np.testing.assert_allclose(np.abs(res.a), [1.0, 0.0, 0.0], atol=1e-10)
        np.testing.assert_allclose(np.abs(res.x), np.abs(basis.coeffs[:, 0]), atol=1e-10)
        assert res.l2_error <= 1e-10 and res.k_star == 1

    @pytest.mark.parametrize("seed", range(10))
    def test_exact_mode(self, setup16, seed):
        a, tree, basis = setup16
        v = a.right_vectors @ np.random.default_rng(seed).standard_normal(3)
        res = readout_coordinates(a, tree, basis, v, 0.1)
        assert res.l2_error <= 1e-10
        assert abs(np.linalg.norm(res.a) - 1) < 1e-10
        np.testing.assert_allclose(res.x, basis.coeffs @ res.a)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(
        lambda w: np.linalg.norm(w) > 1e-3))
    def test_global_sign_invariance(self, setup16, w):
        a, tree, basis = setup16
        v = a.right_vectors @ np.array(w)
        r1 = readout_coordinates(a, tree, basis, v, 0.1)
        r2 = readout_coordinates(a, tree, basis, -v, 0.1)
        assert r1.l2_error == pytest.approx(r2.l2_error, abs=1e-12)
        assert min(np.linalg.norm(r1.v_reconstructed - r2.v_reconstructed),
                   np.linalg.norm(r1.v_reconstructed + r2.v_reconstructed)) < 1e-10

    def test_sampled_mode(self, setup16):
        a, tree, basis = setup16
        hits = 0
        for seed in range(12):
            v = a.right_vectors @ np.random.default_rng(100 + seed).standard_normal(3)
            try:
                res = readout_coordinates(a, tree, basis, v, 0.1, ReadoutConfig(None, seed))
            except InconsistentEstimatesError:
                continue
            hits += res.l2_error <= 0.1
            assert res.shots == 32400
        assert hits >= 8

    def test_ledger_grows_with_shots(self, setup16):
        a, tree, basis = setup16
        v = a.right_vectors[:, 0]
        copies = [readout_coordinates(a, tree, basis, v, 0.1, ReadoutConfig(s, 0)).ledger.copies_of_v
                  for s in (100, 1000)]
        assert copies[0] < copies[1]

    def test_outside_rowspace(self, setup16):
        a, tree, basis = setup16
        v = np.ones(16) - a.right_vectors @ (a.right_vectors.T @ np.ones(16))
        with pytest.raises(PreconditionError):
            readout_coordinates(a, tree, basis, v, 0.1)

    def test_bad_eps(self, setup16):
        a, tree, basis = setup16
        with pytest.raises(ParameterError):
            readout_coordinates(a, tree, basis, a.right_vectors[:, 0], 1.5)

    def test_median(self, setup16):
        a, tree, basis = setup16
        v = a.right_vectors[:, 1]
        res = readout_median(a, tree, basis, v, 0.1, ReadoutConfig(2000, 3), repeats=5)
        assert res.l2_error < 0.2
        assert '"l2_error"' in res.to_json()
