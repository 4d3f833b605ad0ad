"""Basis construction and evaluation against independent oracles."""

import numpy as np
import pytest

from shapevar.errors import InvalidSpec, OutOfRange
from shapevar.splines import (
    Family,
    basis_derivative,
    eval_basis,
    eval_cspline,
    eval_ispline,
    eval_mspline,
    make_even_spec,
)

from oracles import central_difference, mspline_recursive, simpson, simpson_piecewise


def matched_spec(spec, family):
    return make_even_spec(family, spec.degree, spec.df, spec.lower, spec.upper)


class TestMakeEvenSpec:
    def test_no_internal_knots(self):
        spec = make_even_spec("I", 1, 1, 0.0, 1.0)
        assert spec.internal_knots == ()
        np.testing.assert_allclose(spec.knots, [0.0, 1.0])

    def test_even_spacing(self):
        spec = make_even_spec("I", 2, 4, 0.0, 10.0)
        np.testing.assert_allclose(spec.internal_knots, [10.0 / 3.0, 20.0 / 3.0])

    def test_unit_spacing(self):
        spec = make_even_spec("M", 1, 3, 0.0, 3.0)
        np.testing.assert_allclose(spec.internal_knots, [1.0, 2.0])
        np.testing.assert_allclose(spec.knots, [0.0, 1.0, 2.0, 3.0])

    def test_clamped_repetition(self):
        spec = make_even_spec("M", 3, 5, 0.0, 1.0)
        k = spec.knots
        np.testing.assert_allclose(k[:3], 0.0)
        np.testing.assert_allclose(k[-3:], 1.0)
        assert len(k) == spec.n_internal + 2 * spec.degree

    @pytest.mark.parametrize(
        "family,degree,df,lo,hi",
        [
            ("I", 2, 1, 0.0, 1.0),  # df < degree
            ("I", 0, 3, 0.0, 1.0),  # degree 0 for I
            ("C", 0, 3, 0.0, 1.0),  # degree 0 for C
            ("M", 1, 2, 1.0, 1.0),  # empty interval
            ("M", 1, 2, 2.0, 1.0),  # reversed interval
        ],
    )
    def test_invalid_specs(self, family, degree, df, lo, hi):
        with pytest.raises(InvalidSpec):
            make_even_spec(family, degree, df, lo, hi)


class TestMSpline:
    def test_degree_one_constant(self):
        spec = make_even_spec("M", 1, 1, 0.0, 1.0)
        np.testing.assert_allclose(eval_mspline(spec, [0.3]).values, [[1.0]])

    def test_left_boundary_degree_two(self):
        spec = make_even_spec("M", 2, 2, 0.0, 1.0)
        np.testing.assert_allclose(eval_mspline(spec, [0.0]).values, [[2.0, 0.0]])
        np.testing.assert_allclose(eval_mspline(spec, [1.0]).values, [[0.0, 2.0]])

    @pytest.mark.parametrize("degree,df", [(1, 3), (2, 2), (2, 5), (3, 6), (4, 7)])
    def test_matches_naive_recursion(self, degree, df):
        spec = make_even_spec("M", degree, df, 0.0, 3.0)
        rng = np.random.default_rng(42)
        # stay away from knots where the degree-1 pieces are double-defined
        x = rng.uniform(0.01, 2.99, size=40)
        x = x[np.min(np.abs(x[:, None] - spec.breaks[None, :]), axis=1) > 1e-3]
        got = eval_mspline(spec, x).values
        knots = spec.knots
        expected = np.array(
            [[mspline_recursive(knots, degree, i, xi) for i in range(df)] for xi in x]
        )
        np.testing.assert_allclose(got, expected, atol=1e-12)

    @pytest.mark.parametrize("degree,df", [(1, 2), (2, 4), (3, 5)])
    def test_columns_integrate_to_one(self, degree, df):
        spec = make_even_spec("M", degree, df, 0.0, 10.0)
        for col in range(df):
            total = simpson_piecewise(
                lambda x: eval_mspline(spec, x).values[:, col], spec.breaks, panels=10_000
            )
            assert abs(total - 1.0) < 1e-6

    def test_nonnegative(self):
        spec = make_even_spec("M", 3, 6, -2.0, 5.0)
        x = np.linspace(-2.0, 5.0, 700)
        assert np.all(eval_mspline(spec, x).values >= -1e-14)

    def test_out_of_range(self):
        spec = make_even_spec("M", 2, 3, 0.0, 1.0)
        with pytest.raises(OutOfRange):
            eval_mspline(spec, [1.5])

    def test_boundary_drift_clamped(self):
        spec = make_even_spec("M", 2, 3, 0.0, 1.0)
        vals = eval_mspline(spec, [1.0 + 5e-14, -5e-14]).values
        exact = eval_mspline(spec, [1.0, 0.0]).values
        np.testing.assert_allclose(vals, exact)

    def test_family_guard(self):
        spec = make_even_spec("I", 2, 3, 0.0, 1.0)
        with pytest.raises(InvalidSpec):
            eval_mspline(spec, [0.5])


class TestISpline:
    def test_linear_ramp(self):
        spec = make_even_spec("I", 1, 1, 0.0, 1.0)
        np.testing.assert_allclose(eval_ispline(spec, [0.5]).values, [[0.5]])

    def test_all_one_at_upper(self):
        spec = make_even_spec("I", 2, 4, 0.0, 10.0)
        np.testing.assert_allclose(
            eval_ispline(spec, [10.0]).values, [[1.0, 1.0, 1.0, 1.0]], atol=1e-12
        )

    def test_matches_quadrature(self):
        spec = make_even_spec("I", 2, 4, 0.0, 10.0)
        mspec = matched_spec(spec, "M")
        got = eval_ispline(spec, [2.5]).values[0]
        expected = np.array(
            [
                simpson(lambda x: eval_mspline(mspec, x).values[:, col], 0.0, 2.5, 20_000)
                for col in range(4)
            ]
        )
        # frozen from the Simpson oracle at 2e4 panels
        np.testing.assert_allclose(expected, [0.9375, 0.28125, 0.0, 0.0], atol=1e-9)
        np.testing.assert_allclose(got, expected, atol=1e-8)

    @pytest.mark.parametrize("degree,df", [(1, 2), (2, 3), (3, 5)])
    def test_columns_monotone_in_unit_interval(self, degree, df):
        spec = make_even_spec("I", degree, df, -1.0, 4.0)
        x = np.linspace(-1.0, 4.0, 513)
        vals = eval_ispline(spec, x).values
        assert np.all(vals >= -1e-10) and np.all(vals <= 1.0 + 1e-10)
        assert np.all(np.diff(vals, axis=0) >= -1e-10)
        np.testing.assert_allclose(vals[0], 0.0, atol=1e-10)
        np.testing.assert_allclose(vals[-1], 1.0, atol=1e-10)

    def test_nonnegative_combination_is_nondecreasing(self):
        spec = make_even_spec("I", 3, 5, 0.0, 2.0)
        rng = np.random.default_rng(7)
        x = np.linspace(0.0, 2.0, 301)
        vals = eval_ispline(spec, x).values
        for _ in range(20):
            coef = rng.uniform(0.0, 3.0, size=5)
            curve = vals @ coef
            assert np.all(np.diff(curve) >= -1e-10)


class TestCSpline:
    def test_quadratic_ramp(self):
        spec = make_even_spec("C", 1, 1, 0.0, 1.0)
        np.testing.assert_allclose(eval_cspline(spec, [1.0]).values, [[0.5]])
        np.testing.assert_allclose(eval_cspline(spec, [0.0]).values, [[0.0]])

    def test_matches_quadrature(self):
        spec = make_even_spec("C", 2, 3, 0.0, 5.0)
        ispec = matched_spec(spec, "I")
        got = eval_cspline(spec, [3.7]).values[0]
        expected = np.array(
            [
                simpson(lambda x: eval_ispline(ispec, x).values[:, col], 0.0, 3.7, 20_000)
                for col in range(3)
            ]
        )
        # frozen from the Simpson oracle at 2e4 panels
        np.testing.assert_allclose(
            expected, [2.8666666666667076, 1.2585866666666259, 0.09216000000004104], atol=1e-9
        )
        np.testing.assert_allclose(got, expected, atol=1e-8)

    @pytest.mark.parametrize("degree,df", [(1, 2), (2, 4), (3, 5)])
    def test_columns_convex(self, degree, df):
        spec = make_even_spec("C", degree, df, 0.0, 3.0)
        x = np.linspace(0.0, 3.0, 257)
        vals = eval_cspline(spec, x).values
        assert np.all(vals >= -1e-12)
        second = np.diff(vals, n=2, axis=0)
        assert np.all(second >= -1e-8)


class TestDerivative:
    def test_linear_i_derivative(self):
        spec = make_even_spec("I", 1, 1, 0.0, 1.0)
        np.testing.assert_allclose(basis_derivative(spec, [0.5]).values, [[1.0]])

    def test_linear_c_derivative(self):
        spec = make_even_spec("C", 1, 1, 0.0, 1.0)
        np.testing.assert_allclose(basis_derivative(spec, [0.5]).values, [[0.5]])

    @pytest.mark.parametrize("degree,df", [(2, 3), (3, 5)])
    def test_i_derivative_equals_m_values(self, degree, df):
        spec = make_even_spec("I", degree, df, 0.0, 2.0)
        mspec = matched_spec(spec, "M")
        x = np.linspace(0.01, 1.99, 97)
        np.testing.assert_allclose(
            basis_derivative(spec, x).values, eval_mspline(mspec, x).values, atol=1e-10
        )

    @pytest.mark.parametrize("degree,df", [(2, 3), (3, 4)])
    def test_c_derivative_equals_i_values(self, degree, df):
        spec = make_even_spec("C", degree, df, 0.0, 2.0)
        ispec = matched_spec(spec, "I")
        x = np.linspace(0.01, 1.99, 97)
        np.testing.assert_allclose(
            basis_derivative(spec, x).values, eval_ispline(ispec, x).values, atol=1e-10
        )

    def test_i_derivative_matches_central_difference(self):
        spec = make_even_spec("I", 2, 4, 0.0, 10.0)
        x = np.linspace(0.05, 9.95, 61)
        got = basis_derivative(spec, x).values
        for col in range(4):
            fd = central_difference(lambda z: eval_ispline(spec, z).values[:, col], x)
            np.testing.assert_allclose(got[:, col], fd, atol=1e-5)


class TestEvalBasisLayers:
    def test_c_spec_exposes_lower_layers(self):
        spec = make_even_spec("C", 2, 3, 0.0, 1.0)
        x = np.linspace(0.0, 1.0, 11)
        ivals = eval_basis(spec, x, "I").values
        ref = eval_ispline(matched_spec(spec, "I"), x).values
        np.testing.assert_allclose(ivals, ref, atol=1e-12)

    def test_m_spec_cannot_integrate_up(self):
        spec = make_even_spec("M", 2, 3, 0.0, 1.0)
        with pytest.raises(InvalidSpec):
            eval_basis(spec, [0.5], "I")

    def test_family_enum_values(self):
        assert Family("M") is Family.M
        assert Family("I") is Family.I
