"""
二次最大值函数、和、上卷积、拟凸性审计与差分 jet
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.exceptions import DimensionMismatchError, UsageError
from src.core.linalg import SymMatrix
from src.core.quasiconvex import (
    FIRST_ORDER_KINK,
    SECOND_ORDER_KINK,
    SMOOTH,
    MaxQuadFunction,
    Quadratic,
    SampledFunction,
    audit_quasiconvexity,
    finite_difference_jet,
    function_sum,
    quasiconvexity_constant,
    sup_convolution,
)
from tests.conftest import abs_function, half_norm_sq, random_convex_max_quad, random_max_quad


def _hinge() -> MaxQuadFunction:
    """max(0, 2x − 1)"""
    return MaxQuadFunction([Quadratic(0.0, [0.0], [[0.0]]), Quadratic(-1.0, [2.0], [[0.0]])])


class TestEvaluate:
    def test_examples(self):
        assert abs_function().eval([0.0]) == 0.0
        assert half_norm_sq(2).eval([1.0, 1.0]) == pytest.approx(1.0)
        assert _hinge().eval([0.75]) == pytest.approx(0.5)

    def test_batch_matches_pointwise(self, rng):
        w = random_max_quad(rng, 3, 4)
        X = rng.uniform(-1, 1, (20, 3))
        np.testing.assert_allclose(w.evaluate(X), [w.eval(x) for x in X])

    def test_dimension_checked(self):
        with pytest.raises(DimensionMismatchError):
            half_norm_sq(2).evaluate(np.zeros((3, 3)))

    def test_needs_a_piece(self):
        with pytest.raises(UsageError):
            MaxQuadFunction([])

    def test_centered_quadratic(self):
        q = Quadratic.centered([1.0, -1.0], 2.0, [0.5, 0.0], np.eye(2))
        assert float(q.value(np.array([1.0, -1.0]))) == pytest.approx(2.0)
        np.testing.assert_allclose(q.gradient([1.0, -1.0]), [0.5, 0.0])


class TestActiveSet:
    def test_kink_and_smooth(self):
        w = abs_function()
        assert w.active_set([0.0]) == [0, 1]
        assert w.active_set([1.0]) == [0]

    def test_negative_tie_tol(self):
        with pytest.raises(UsageError):
            abs_function().active_set([0.0], tie_tol=-1.0)

    def test_relative_tie_tolerance(self):
        w = abs_function()
        assert w.active_set([1e-12]) == [0, 1]
        assert w.active_set([1e-12], tie_tol=0.0) == [0]


class TestJets:
    def test_half_norm_squared(self):
        x = np.array([0.3, -0.4])
        jet = half_norm_sq(2).jet_at(x)
        assert jet.r == pytest.approx(0.125)
        np.testing.assert_allclose(jet.p, x)
        assert jet.A == SymMatrix.identity(2)

    def test_hinge_flat_side(self):
        jet = _hinge().jet_at([0.3])
        assert jet.r == 0.0 and jet.p.tolist() == [0.0] and jet.A.to_list() == [[0.0]]

    def test_first_order_kink_has_no_jet(self):
        w = abs_function()
        assert w.jet_at([0.0]) is None
        assert w.gradient_at([0.0]) is None
        assert w.jets(np.array([[0.0]])).kind[0] == FIRST_ORDER_KINK

    def test_second_order_kink(self):
        # max(½x², −½x²) 在 0 处梯度一致、Hessian 不一致
        w = MaxQuadFunction([Quadratic(0.0, [0.0], [[1.0]]), Quadratic(0.0, [0.0], [[-1.0]])])
        batch = w.jets(np.array([[0.0], [0.5]]))
        assert batch.kind.tolist() == [SECOND_ORDER_KINK, SMOOTH]
        assert w.jet_at([0.0]) is None
        assert w.gradient_at([0.0]).tolist() == [0.0]
        assert [w.pieces[i].A.to_list() for i in w.active_set([0.0])] == [[[1.0]], [[-1.0]]]

    def test_duplicate_pieces_are_smooth(self):
        q = Quadratic(1.0, [1.0, 0.0], np.eye(2))
        w = MaxQuadFunction([q, q])
        assert w.jet_at([0.2, 0.2]) is not None

    def test_convex_pieces_give_psd_jets(self, rng):
        for n in (1, 2, 3):
            w = random_convex_max_quad(rng, n, 4)
            X = rng.uniform(-2.0, 2.0, (2_000, n))
            found = 0
            for x in X:
                jet = w.jet_at(x)
                if jet is None:
                    continue
                found += 1
                assert jet.A.lambda_min >= -1e-10
            # 折点集测度为零
            assert found >= 0.99 * len(X)

    def test_closed_form_matches_finite_differences(self, rng):
        for n in (1, 2, 3):
            w = random_max_quad(rng, n, 3)
            checked = 0
            for x in rng.uniform(-1, 1, (20, n)):
                jet = w.jet_at(x)
                # 离折线太近时差分跨过折线
                values = w.piece_values(x[None, :])[0]
                gap = np.sort(values)[-1] - np.sort(values)[-2]
                if jet is None or gap < 5e-2:
                    continue
                fd = finite_difference_jet(w, x, h=1e-3)
                scale = 1.0 + np.max(np.abs(jet.A.array))
                np.testing.assert_allclose(fd.p, jet.p, atol=1e-4 * scale)
                np.testing.assert_allclose(fd.A.array, jet.A.array, atol=1e-4 * scale)
                checked += 1
            assert checked > 0


class TestQuasiConvexity:
    def test_constants(self):
        assert quasiconvexity_constant(abs_function()) == 0.0
        assert half_norm_sq(2, sign=-2.0).lambda_qc == pytest.approx(2.0)
        w = MaxQuadFunction([Quadratic(0.0, [0.0, 0.0], np.eye(2)),
                             Quadratic(0.0, [0.0, 0.0], -3.0 * np.eye(2))])
        assert w.lambda_qc == pytest.approx(3.0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=1, max_value=3), st.integers(min_value=1, max_value=5),
           st.integers(min_value=0, max_value=2**31 - 1))
    def test_random_max_quad_passes_audit(self, n, m, seed):
        w = random_max_quad(np.random.default_rng(seed), n, m)
        assert audit_quasiconvexity(w, n_triples=2_000, seed=seed, tol=1e-8).passed

    def test_audit_detects_too_small_constant(self):
        w = half_norm_sq(1, sign=-1.0)
        report = audit_quasiconvexity(w, n_triples=1_000, seed=0, lam=0.5)
        assert not report.passed
        assert report.violations[0].drop > 0

    def test_audit_independent_of_threads(self, rng):
        w = random_max_quad(rng, 2, 3)
        dumps = {t: audit_quasiconvexity(w, n_triples=10_000, seed=5, threads=t).model_dump_json() for t in (1, 2, 8)}
        assert dumps[1] == dumps[2] == dumps[8]


class TestTransformations:
    def test_add_quadratic(self, rng):
        w = random_max_quad(rng, 2, 3)
        psi = Quadratic(0.5, [1.0, -1.0], np.diag([2.0, 0.0]))
        shifted = w.add_quadratic(psi)
        X = rng.uniform(-1, 1, (30, 2))
        np.testing.assert_allclose(shifted.evaluate(X), w.evaluate(X) + psi.value(X))

    def test_translate(self, rng):
        w = random_max_quad(rng, 2, 3)
        s = np.array([0.3, -0.2])
        moved = w.translate(s)
        X = rng.uniform(-1, 1, (30, 2))
        np.testing.assert_allclose(moved.evaluate(X), w.evaluate(X - s), atol=1e-12)

    def test_dict_round_trip(self, rng):
        w = random_max_quad(rng, 2, 2)
        again = MaxQuadFunction.from_dicts(w.to_dicts())
        X = rng.uniform(-1, 1, (10, 2))
        np.testing.assert_array_equal(again.evaluate(X), w.evaluate(X))


class TestSum:
    def test_abs_plus_half_square(self):
        s = function_sum(abs_function(), half_norm_sq(1))
        assert s.eval([2.0]) == pytest.approx(4.0)
        jet = s.jet_at([1.0])
        assert jet.r == pytest.approx(1.5)
        assert jet.p.tolist() == pytest.approx([2.0])
        assert jet.A.to_list() == [[1.0]]
        assert s.jet_at([0.0]) is None
        assert s.gradient_at([0.0]) is None

    def test_constant_adds(self, rng):
        u = random_convex_max_quad(rng, 2, 2)
        v = half_norm_sq(2, sign=-1.0)
        s = function_sum(u, v)
        assert s.lambda_qc == pytest.approx(u.lambda_qc + 1.0)

    def test_expand_agrees(self, rng):
        u = random_max_quad(rng, 2, 3)
        v = random_max_quad(rng, 2, 2)
        s = function_sum(u, v)
        X = rng.uniform(-1, 1, (50, 2))
        np.testing.assert_allclose(s.expand().evaluate(X), s.evaluate(X), atol=1e-12)
        assert s.expand().n_pieces == 6
        assert s.expand() is s.expand()

    def test_kind_combination(self):
        kinked = MaxQuadFunction([Quadratic(0.0, [0.0], [[1.0]]), Quadratic(0.0, [0.0], [[-1.0]])])
        s = function_sum(abs_function(), kinked)
        kinds = s.jets(np.array([[0.0], [0.5]])).kind
        assert kinds.tolist() == [FIRST_ORDER_KINK, SMOOTH]

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            function_sum(abs_function(), half_norm_sq(2))


class TestSupConvolution:
    def test_two_sites(self):
        w = sup_convolution(SampledFunction([[1.0], [-1.0]], [0.0, 0.0]), eps=1.0)
        assert w.eval([0.0]) == pytest.approx(-0.5)
        assert w.eval([1.0]) == pytest.approx(0.0)
        assert w.lambda_qc == pytest.approx(1.0)

    def test_eps_must_be_positive(self):
        with pytest.raises(UsageError):
            sup_convolution(SampledFunction([[0.0]], [0.0]), eps=0.0)

    def test_sites_validated(self):
        with pytest.raises(UsageError):
            SampledFunction([[0.0], [0.0]], [1.0, 2.0])
        with pytest.raises(UsageError):
            SampledFunction([[0.0], [1.0]], [1.0])

    def test_dominates_samples(self, rng):
        sites = rng.uniform(-1, 1, (40, 2))
        values = np.sin(3 * sites[:, 0]) + sites[:, 1] ** 2
        w = sup_convolution(SampledFunction(sites, values), eps=0.1)
        assert np.all(w.evaluate(sites) >= values - 1e-12)

    @pytest.mark.parametrize("eps", [0.05, 0.5])
    def test_quasiconvex_by_midpoints(self, rng, eps):
        sites = rng.uniform(-1, 1, (25, 2))
        w = sup_convolution(SampledFunction(sites, rng.normal(size=25)), eps=eps)
        assert audit_quasiconvexity(w, n_triples=10_000, seed=2, lam=1.0 / eps, tol=1e-8).passed

    def test_csv_round_trip(self, tmp_path, rng):
        s = SampledFunction(rng.uniform(-1, 1, (5, 2)), rng.normal(size=5))
        path = tmp_path / "samples.csv"
        s.to_csv(str(path))
        again = SampledFunction.from_csv(str(path))
        np.testing.assert_allclose(again.sites, s.sites)
        np.testing.assert_allclose(again.values, s.values)

    def test_csv_without_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,value\n0.0,abc\n", encoding="utf-8")
        with pytest.raises(UsageError):
            SampledFunction.from_csv(str(path))
