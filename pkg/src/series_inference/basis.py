"""Evaluation matrices of polynomial and B-spline series bases, see :ref:`Bases`.

A basis is described by an immutable :class:`BasisSpec`, ``k`` is the tuning parameter:
the polynomial degree or the number of interior spline knots. Splines are represented
in the B-spline basis of :class:`scipy.interpolate.BSpline`, polynomials as monomials of
the support rescaled to ``[-1, 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from dataclasses import replace
from enum import Enum
from typing import Optional
from typing import Tuple

import numpy as np
from scipy.interpolate import BSpline

from .exceptions import InvalidBasisSpecError
from .exceptions import OutOfSupportError
from .settings import config


class Family(str, Enum):
    POLYNOMIAL = "polynomial"
    SPLINE = "spline"


class KnotRule(str, Enum):
    EVENLY_SPACED = "evenly_spaced"
    QUANTILE = "quantile"


class Functional(str, Enum):
    """Linear functional of the regression function a basis row is built for."""

    VALUE = "value"
    DERIVATIVE = "derivative"


@dataclass(frozen=True)
class BasisSpec:
    """Describes a series basis.

    :param family: Polynomial or spline
    :param k: Polynomial degree or number of interior knots
    :param support: Closed interval ``(a, b)``
    :param spline_order: B-spline order, ``3`` is a quadratic spline
    :param knot_rule: Placement of the interior knots
    :param knots: Interior knots, resolved by :meth:`resolve` for the quantile rule
    """

    family: Family
    k: int
    support: Tuple[float, float]
    spline_order: int = 3
    knot_rule: KnotRule = KnotRule.EVENLY_SPACED
    knots: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "family", Family(self.family))
            object.__setattr__(self, "knot_rule", KnotRule(self.knot_rule))
        except ValueError as e:
            raise InvalidBasisSpecError(str(e)) from e
        object.__setattr__(self, "support", tuple(map(float, self.support)))
        if self.k < 0:
            raise InvalidBasisSpecError(f"K must not be negative, got {self.k}")
        a, b = self.support
        if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
            raise InvalidBasisSpecError(f"Degenerate support [{a}, {b}]")
        if self.family is Family.SPLINE and self.spline_order < 1:
            raise InvalidBasisSpecError(
                f"Spline order must be at least 1, got {self.spline_order}"
            )

    @property
    def degree(self) -> int:
        return self.k if self.family is Family.POLYNOMIAL else self.spline_order - 1

    @property
    def dimension(self) -> int:
        """Number of basis functions.

        >>> BasisSpec(Family.SPLINE, 6, (0.0, 1.0)).dimension
        9
        >>> BasisSpec(Family.POLYNOMIAL, 3, (0.0, 1.0)).dimension
        4
        """
        if self.family is Family.POLYNOMIAL:
            return self.k + 1
        return self.k + self.spline_order

    def with_k(self, k: int) -> BasisSpec:
        """Same basis with another number of series terms, resolved knots are dropped."""
        return replace(self, k=k, knots=None)

    def resolve(self, x_sample: Optional[np.ndarray] = None) -> BasisSpec:
        """Fixes the interior knots, required before quantile knots can be evaluated."""
        if self.family is Family.POLYNOMIAL or self.knots is not None:
            return self
        return replace(self, knots=tuple(float(t) for t in make_knots(self, x_sample)))


@dataclass(frozen=True, eq=False)
class BasisMatrix:
    """Basis functions (columns) evaluated at ``points`` (rows)."""

    values: np.ndarray
    points: np.ndarray
    spec: BasisSpec

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape  # type: ignore


def make_knots(spec: BasisSpec, x_sample: Optional[np.ndarray] = None) -> np.ndarray:
    """Interior knots of a spline basis.

    >>> make_knots(BasisSpec(Family.SPLINE, 3, (0.0, 1.0))).tolist()
    [0.25, 0.5, 0.75]

    :param spec: Basis description, already resolved knots are returned unchanged
    :param x_sample: Sample the quantile rule is applied to
    :return: ``k`` strictly increasing knots inside the support
    :raises InvalidBasisSpecError: If the quantile rule lacks (enough distinct) data.
    """
    if spec.knots is not None:
        return np.asarray(spec.knots, dtype=float)
    a, b = spec.support
    if spec.knot_rule is KnotRule.EVENLY_SPACED:
        return a + np.arange(1, spec.k + 1) * (b - a) / (spec.k + 1)
    if x_sample is None:
        raise InvalidBasisSpecError("Quantile knots require a sample of x values")
    x_sample = np.asarray(x_sample, dtype=float)
    if np.unique(x_sample).size < spec.k:
        raise InvalidBasisSpecError(
            f"Quantile rule needs at least {spec.k} distinct sample values, got "
            f"{np.unique(x_sample).size}"
        )
    knots = np.quantile(x_sample, np.arange(1, spec.k + 1) / (spec.k + 1))
    if spec.k and (
        np.any(np.diff(knots) <= 0) or knots[0] <= a or knots[-1] >= b
    ):
        raise InvalidBasisSpecError(
            f"Quantile knots {knots.tolist()} are not strictly increasing inside "
            f"[{a}, {b}], too few distinct sample values"
        )
    return knots


def _checked_points(spec: BasisSpec, points: np.ndarray) -> np.ndarray:
    points = np.atleast_1d(np.asarray(points, dtype=float))
    a, b = spec.support
    tolerance = config["BOUNDARY_TOLERANCE"] * max(1.0, abs(a), abs(b))
    outside = (points < a - tolerance) | (points > b + tolerance) | ~np.isfinite(points)
    if np.any(outside):
        raise OutOfSupportError(
            f"Point {points[outside][0]} lies outside of the support [{a}, {b}]"
        )
    return np.clip(points, a, b)


def _knot_vector(spec: BasisSpec) -> np.ndarray:
    if spec.knot_rule is KnotRule.QUANTILE and spec.knots is None:
        raise InvalidBasisSpecError(
            "Quantile knots have to be resolved with BasisSpec.resolve before evaluation"
        )
    a, b = spec.support
    order = spec.spline_order
    return np.concatenate([np.full(order, a), make_knots(spec), np.full(order, b)])


def _spline_matrix(spec: BasisSpec, points: np.ndarray, nu: int) -> np.ndarray:
    identity = np.eye(spec.dimension)
    spline = BSpline(_knot_vector(spec), identity, spec.spline_order - 1)
    if nu:
        spline = spline.derivative(nu)
    return spline(points)


def _polynomial_matrix(spec: BasisSpec, points: np.ndarray, nu: int) -> np.ndarray:
    a, b = spec.support
    u = 2.0 * (points - a) / (b - a) - 1.0
    powers = np.arange(spec.k + 1)
    if not nu:
        return u[:, None] ** powers
    values = np.zeros((points.size, spec.k + 1))
    values[:, 1:] = powers[1:] * u[:, None] ** (powers[1:] - 1)
    # chain rule of the rescaling
    return values * 2.0 / (b - a)


def build_basis(spec: BasisSpec, points: np.ndarray) -> BasisMatrix:
    """Evaluates all basis functions at ``points``.

    >>> build_basis(BasisSpec(Family.POLYNOMIAL, 2, (-1.0, 1.0)), [0.5]).values.tolist()
    [[1.0, 0.5, 0.25]]

    :raises OutOfSupportError: If a point lies outside the support.
    """
    checked = _checked_points(spec, points)
    if spec.family is Family.POLYNOMIAL:
        values = _polynomial_matrix(spec, checked, 0)
    else:
        values = _spline_matrix(spec, checked, 0)
    return BasisMatrix(values=values, points=checked, spec=spec)


def build_derivative_basis(spec: BasisSpec, points: np.ndarray) -> BasisMatrix:
    """First derivatives of all basis functions at ``points``.

    :raises InvalidBasisSpecError: For piecewise constant splines.
    """
    if spec.family is Family.SPLINE and spec.spline_order < 2:
        raise InvalidBasisSpecError("Piecewise constant splines have no derivative")
    checked = _checked_points(spec, points)
    if spec.family is Family.POLYNOMIAL:
        values = _polynomial_matrix(spec, checked, 1)
    else:
        values = _spline_matrix(spec, checked, 1)
    return BasisMatrix(values=values, points=checked, spec=spec)


def functional_basis(
    spec: BasisSpec, points: np.ndarray, functional: Functional = Functional.VALUE
) -> BasisMatrix:
    """Rows ``a_K(x)`` of the linear functional, the basis itself or its derivative."""
    if Functional(functional) is Functional.DERIVATIVE:
        return build_derivative_basis(spec, points)
    return build_basis(spec, points)
