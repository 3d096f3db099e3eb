"""
对称矩阵、Loewner 序与 jet 运算
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.exceptions import DimensionMismatchError, UsageError
from src.core.linalg import (
    FullJet,
    Jet2,
    SymMatrix,
    batch_loewner_leq,
    jet_add,
    jet_negate,
    loewner_leq,
    random_jet_batch,
    random_psd,
)
from src.models.verdict import WitnessJet
from tests.conftest import matrix_pairs, sym_matrices


class TestSymMatrix:
    def test_symmetrized_on_construction(self):
        m = SymMatrix([[1.0, 2.0], [0.0, 3.0]])
        assert np.array_equal(m.array, m.array.T)
        assert m.array[0, 1] == 1.0

    def test_immutable(self):
        m = SymMatrix.identity(2)
        with pytest.raises(ValueError):
            m.array[0, 0] = 5.0

    def test_rejects_non_square(self):
        with pytest.raises(UsageError):
            SymMatrix([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])

    def test_eigen_helpers(self):
        m = SymMatrix.diag([3.0, -1.0])
        assert m.lambda_min == pytest.approx(-1.0)
        assert m.lambda_max == pytest.approx(3.0)
        assert m.trace == pytest.approx(2.0)
        assert m.packed().tolist() == [3.0, 0.0, -1.0]

    @given(sym_matrices())
    def test_trace_is_eigenvalue_sum(self, A):
        assert A.trace == pytest.approx(float(np.sum(A.eigenvalues())), abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            SymMatrix.identity(2) + SymMatrix.identity(3)


class TestLoewner:
    def test_zero_below_identity(self):
        assert loewner_leq(SymMatrix.zeros(2), SymMatrix.identity(2))

    def test_identity_not_below_zero(self):
        assert not loewner_leq(SymMatrix.identity(2), SymMatrix.zeros(2))

    def test_indefinite_pair(self):
        assert loewner_leq(SymMatrix.diag([1.0, -1.0]), SymMatrix.diag([2.0, 0.0]))

    def test_negative_tol_rejected(self):
        with pytest.raises(UsageError):
            loewner_leq(SymMatrix.zeros(1), SymMatrix.zeros(1), tol=-1.0)

    def test_batch_matches_scalar(self, rng):
        A = rng.standard_normal((50, 3, 3))
        A = 0.5 * (A + np.swapaxes(A, 1, 2))
        B = rng.standard_normal((50, 3, 3))
        B = 0.5 * (B + np.swapaxes(B, 1, 2)) + 2.0 * np.eye(3)
        got = batch_loewner_leq(A, B, 1e-9)
        want = [loewner_leq(SymMatrix(a), SymMatrix(b), tol=1e-9) for a, b in zip(A, B)]
        assert got.tolist() == want

    @given(sym_matrices())
    def test_reflexive(self, A):
        assert loewner_leq(A, A)

    @given(sym_matrices(), st.integers(min_value=0, max_value=2**31 - 1))
    def test_adding_psd_moves_up(self, A, seed):
        P = random_psd(A.dim, 1.0, seed)
        assert loewner_leq(A, A + P)

    @settings(max_examples=200)
    @given(matrix_pairs())
    def test_antisymmetric_up_to_tol(self, pair):
        A, B = pair
        if loewner_leq(A, B) and loewner_leq(B, A):
            assert np.allclose(A.array, B.array, atol=1e-6)


class TestJets:
    def test_add(self):
        e1 = np.array([1.0, 0.0])
        a = Jet2(1.0, e1, SymMatrix.identity(2))
        b = Jet2(2.0, -e1, -SymMatrix.identity(2))
        assert jet_add(a, b) == Jet2(3.0, [0.0, 0.0], SymMatrix.zeros(2))

    def test_negate_is_involution(self, rng):
        j = Jet2(rng.normal(), rng.normal(size=3), SymMatrix(rng.standard_normal((3, 3))))
        assert jet_negate(jet_negate(j)) == j
        assert -(-j) == j

    def test_add_commutes(self, rng):
        a = Jet2(rng.normal(), rng.normal(size=2), SymMatrix(rng.standard_normal((2, 2))))
        b = Jet2(rng.normal(), rng.normal(size=2), SymMatrix(rng.standard_normal((2, 2))))
        assert a + b == b + a

    @given(st.integers(min_value=1, max_value=4), st.integers(min_value=0, max_value=2**31 - 1))
    def test_add_associates(self, n, seed):
        g = np.random.default_rng(seed)
        a, b, c = (Jet2(g.normal(), g.normal(size=n), SymMatrix(g.standard_normal((n, n)))) for _ in range(3))
        assert jet_add(jet_add(a, b), c).allclose(jet_add(a, jet_add(b, c)), atol=1e-12)

    def test_dimension_checks(self):
        with pytest.raises(DimensionMismatchError):
            Jet2(0.0, [0.0, 0.0], SymMatrix.zeros(3))
        with pytest.raises(DimensionMismatchError):
            FullJet([0.0], Jet2.zeros(2))
        with pytest.raises(DimensionMismatchError):
            jet_add(Jet2.zeros(1), Jet2.zeros(2))

    def test_full_jet_dict(self):
        j = FullJet([0.5], Jet2(1.0, [2.0], [[3.0]]))
        assert j.to_dict() == {"x": [0.5], "r": 1.0, "p": [2.0], "A": [[3.0]]}


def test_random_psd_is_psd_and_deterministic():
    a = random_psd(4, 2.0, seed=7)
    b = random_psd(4, 2.0, seed=7)
    assert a == b
    assert a.lambda_min >= -1e-12
    with pytest.raises(UsageError):
        random_psd(0, 1.0, seed=0)
    with pytest.raises(UsageError):
        random_psd(2, 0.0, seed=0)


def test_sampled_jet_serializes():
    x, r, p, A = random_jet_batch(3, np.random.default_rng(5), 4, scale=0.5)
    jet = FullJet(x[2], Jet2(r[2], p[2], A[2]))
    w = WitnessJet.from_full_jet(jet)
    assert w.x == jet.x.tolist()
    assert w.r == jet.jet.r
    assert w.p == jet.jet.p.tolist()
    assert w.A == jet.jet.A.to_list()
    assert np.array_equal(np.asarray(w.A), np.asarray(w.A).T)
