import numpy as np
import pytest
from numpy.testing import assert_allclose

from series_inference.basis import BasisSpec
from series_inference.basis import Family
from series_inference.basis import Functional
from series_inference.basis import KnotRule
from series_inference.basis import build_basis
from series_inference.basis import build_derivative_basis
from series_inference.basis import functional_basis
from series_inference.basis import make_knots
from series_inference.exceptions import InvalidBasisSpecError
from series_inference.exceptions import OutOfSupportError


def test_polynomial_row():
    spec = BasisSpec(Family.POLYNOMIAL, 2, (-1.0, 1.0))
    assert_allclose(build_basis(spec, [0.5]).values, [[1.0, 0.5, 0.25]])


def test_polynomial_derivative_row():
    spec = BasisSpec(Family.POLYNOMIAL, 2, (-1.0, 1.0))
    assert_allclose(build_derivative_basis(spec, [0.5]).values, [[0.0, 1.0, 1.0]])


def test_polynomial_rescaled_to_support():
    spec = BasisSpec(Family.POLYNOMIAL, 2, (0.0, 2.0))
    assert_allclose(build_basis(spec, [0.0, 2.0]).values, [[1, -1, 1], [1, 1, 1]])


@pytest.mark.parametrize("order", [1, 2, 3, 4])
@pytest.mark.parametrize("k", [0, 1, 5])
def test_spline_partition_of_unity(order, k):
    spec = BasisSpec(Family.SPLINE, k, (0.0, 1.0), spline_order=order)
    points = np.linspace(0.0, 1.0, 57)
    values = build_basis(spec, points).values
    assert values.shape == (57, k + order)
    assert_allclose(values.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(values >= -1e-14)


def test_spline_evaluated_at_right_endpoint():
    spec = BasisSpec(Family.SPLINE, 4, (0.0, 1.0), spline_order=3)
    row = build_basis(spec, [1.0]).values[0]
    assert_allclose(row[-1], 1.0)
    assert_allclose(row[:-1], 0.0, atol=1e-14)


def test_evenly_spaced_knots():
    spec = BasisSpec(Family.SPLINE, 4, (0.0, 2.0))
    assert_allclose(make_knots(spec), [0.4, 0.8, 1.2, 1.6])


def test_quantile_knots_follow_sample():
    x = np.random.default_rng(0).beta(2.0, 5.0, 500)
    spec = BasisSpec(Family.SPLINE, 3, (0.0, 1.0), knot_rule=KnotRule.QUANTILE)
    assert_allclose(make_knots(spec, x), np.quantile(x, [0.25, 0.5, 0.75]))
    resolved = spec.resolve(x)
    assert resolved.knots is not None
    assert build_basis(resolved, x).values.shape == (500, 6)


def test_quantile_knots_require_sample():
    spec = BasisSpec(Family.SPLINE, 3, (0.0, 1.0), knot_rule=KnotRule.QUANTILE)
    with pytest.raises(InvalidBasisSpecError):
        make_knots(spec)
    with pytest.raises(InvalidBasisSpecError):
        build_basis(spec, [0.5])


def test_quantile_knots_with_ties_rejected():
    spec = BasisSpec(Family.SPLINE, 3, (0.0, 1.0), knot_rule=KnotRule.QUANTILE)
    with pytest.raises(InvalidBasisSpecError):
        make_knots(spec, np.array([0.5] * 20 + [0.1, 0.9]))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"family": Family.SPLINE, "k": -1, "support": (0.0, 1.0)},
        {"family": Family.SPLINE, "k": 2, "support": (1.0, 1.0)},
        {"family": Family.SPLINE, "k": 2, "support": (0.0, 1.0), "spline_order": 0},
        {"family": "fourier", "k": 2, "support": (0.0, 1.0)},
    ],
)
def test_invalid_specs(kwargs):
    with pytest.raises(InvalidBasisSpecError):
        BasisSpec(**kwargs)


def test_points_outside_support():
    spec = BasisSpec(Family.SPLINE, 2, (0.0, 1.0))
    with pytest.raises(OutOfSupportError):
        build_basis(spec, [0.5, 1.01])
    with pytest.raises(OutOfSupportError):
        build_basis(spec, [np.nan])


def test_boundary_tolerance_clips():
    spec = BasisSpec(Family.SPLINE, 2, (0.0, 1.0))
    matrix = build_basis(spec, [1.0 + 1e-14, -1e-14])
    assert_allclose(matrix.points, [1.0, 0.0])


def test_piecewise_constant_has_no_derivative():
    spec = BasisSpec(Family.SPLINE, 2, (0.0, 1.0), spline_order=1)
    with pytest.raises(InvalidBasisSpecError):
        build_derivative_basis(spec, [0.5])


@pytest.mark.parametrize(
    "spec",
    [
        BasisSpec(Family.SPLINE, 5, (0.0, 1.0), spline_order=3),
        BasisSpec(Family.SPLINE, 3, (-2.0, 3.0), spline_order=4),
        BasisSpec(Family.POLYNOMIAL, 6, (0.0, 1.0)),
    ],
)
def test_derivative_matches_central_differences(spec):
    a, b = spec.support
    # stay away from knots where quadratic splines have kinks in the derivative
    points = a + (b - a) * np.array([0.13, 0.37, 0.61, 0.89])
    step = 1e-6 * (b - a)
    numeric = (
        build_basis(spec, points + step).values
        - build_basis(spec, points - step).values
    ) / (2 * step)
    assert_allclose(build_derivative_basis(spec, points).values, numeric, atol=1e-5)


def test_functional_basis_dispatch():
    spec = BasisSpec(Family.POLYNOMIAL, 2, (-1.0, 1.0))
    values = functional_basis(spec, [0.5], Functional.VALUE).values
    assert_allclose(values, [[1, 0.5, 0.25]])
    assert_allclose(functional_basis(spec, [0.5], "derivative").values, [[0, 1, 1]])
