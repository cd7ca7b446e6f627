"""Least squares series regression, its heteroskedasticity robust (sandwich) variance,
leave-one-out cross-validation and the correlation of the estimates across different
numbers of series terms, see :ref:`Series Fits`.

Least squares problems are solved through a thin singular value decomposition of the
design. The Gram matrix ``Q = P'P/n`` and the meat ``Omega = sum P_i P_i' e_i^2 / n``
are still stored since they define the variance.
"""
from __future__ import annotations

from dataclasses import dataclass
from dataclasses import field
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
import scipy.linalg

from .basis import BasisSpec
from .basis import Functional
from .basis import build_basis
from .basis import functional_basis
from .exceptions import DataFormatError
from .exceptions import DegenerateVarianceError
from .exceptions import InputError
from .exceptions import InvalidCorrelationError
from .exceptions import SaturatedPointError
from .exceptions import SingularDesignError
from .log import fit_logger
from .settings import config


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed sample ``(y, x)``, or ``(y, w, x)`` for the partially linear model."""

    y: np.ndarray
    x: np.ndarray
    w: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        for name in ("y", "x", "w"):
            values = getattr(self, name)
            if values is None:
                continue
            values = np.asarray(values, dtype=float)
            if values.ndim != 1:
                raise DataFormatError(f"Column {name} must be one dimensional")
            if not np.all(np.isfinite(values)):
                row = int(np.flatnonzero(~np.isfinite(values))[0])
                raise DataFormatError(f"Non-finite value in column {name}", row=row)
            object.__setattr__(self, name, values)
        lengths = {len(self.y), len(self.x)}
        if self.w is not None:
            lengths.add(len(self.w))
        if len(lengths) != 1:
            raise DataFormatError("Columns y, x and w must have the same length")
        if self.n < 2:
            raise DataFormatError(f"At least two observations required, got {self.n}")

    @property
    def n(self) -> int:
        return len(self.y)

    def scaled(self, c: float) -> Dataset:
        """Dataset with the outcome multiplied by ``c``."""
        return Dataset(y=self.y * c, x=self.x, w=self.w)


@dataclass(frozen=True, eq=False)
class FitResult:
    """State of one least squares fit with ``k`` series terms.

    ``gram``, ``meat`` and ``hat_diag`` refer to the weighted problem if ``weights`` is
    set, ``residuals`` are always ``y - P beta``.
    """

    k: int
    beta_hat: np.ndarray
    residuals: np.ndarray
    gram: np.ndarray
    gram_inv: np.ndarray
    meat: np.ndarray
    hat_diag: np.ndarray
    basis_spec: BasisSpec
    n: int
    design: np.ndarray = field(repr=False)
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return self.basis_spec.dimension

    @property
    def fitted(self) -> np.ndarray:
        return self.design @ self.beta_hat


@dataclass(frozen=True, eq=False)
class CrossKCorrelation:
    """Estimated correlation of the t-statistics across the candidate specifications.

    :param sigma_hat: ``p x p`` correlation matrix
    :param k_values: Specifications in the order of the rows
    :param point_variances: Variance of each specification's estimate
    :param evaluation: Describes the point or functional the estimates refer to
    """

    sigma_hat: np.ndarray
    k_values: Tuple[int, ...]
    point_variances: np.ndarray
    evaluation: str = ""

    @property
    def p(self) -> int:
        return len(self.k_values)

    def validate(self, tolerance: Optional[float] = None) -> None:
        """Checks symmetry, unit diagonal, bounds and positive semi-definiteness.

        :raises InvalidCorrelationError: If any check fails beyond ``tolerance``.
        """
        tolerance = config["PSD_TOLERANCE"] if tolerance is None else tolerance
        sigma = self.sigma_hat
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise InvalidCorrelationError(f"Correlation matrix of shape {sigma.shape}")
        if sigma.shape[0] != self.p:
            raise InvalidCorrelationError("Correlation matrix does not match k_values")
        if not np.all(np.isfinite(sigma)):
            raise InvalidCorrelationError("Correlation matrix has non-finite entries")
        if np.max(np.abs(sigma - sigma.T)) > tolerance:
            raise InvalidCorrelationError("Correlation matrix is not symmetric")
        if np.max(np.abs(np.diag(sigma) - 1.0)) > tolerance:
            raise InvalidCorrelationError("Correlation matrix has no unit diagonal")
        if np.max(np.abs(sigma)) > 1.0 + tolerance:
            raise InvalidCorrelationError("Correlation outside of [-1, 1]")
        min_eigenvalue = float(np.min(np.linalg.eigvalsh(sigma)))
        if min_eigenvalue < -tolerance:
            raise InvalidCorrelationError(
                f"Correlation matrix is not positive semi-definite, smallest "
                f"eigenvalue {min_eigenvalue:.3g}"
            )

    def to_dict(self) -> dict:
        return {
            "evaluation": self.evaluation,
            "k_values": list(self.k_values),
            "point_variances": self.point_variances.tolist(),
            "sigma_hat": self.sigma_hat.tolist(),
        }


def _solve_least_squares(
    design: np.ndarray, y: np.ndarray, k: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    n, dimension = design.shape
    if n <= dimension:
        raise SingularDesignError(
            f"Need more observations ({n}) than basis functions ({dimension})", k
        )
    u, s, vt = scipy.linalg.svd(design, full_matrices=False)
    if s[-1] <= config["RANK_TOLERANCE"] * s[0]:
        fit_logger.error(
            "Design with %d columns is rank deficient, singular value ratio %.3g",
            dimension,
            s[-1] / s[0],
        )
        raise SingularDesignError("Design matrix is numerically rank deficient", k)
    beta = vt.T @ ((u.T @ y) / s)
    return beta, u, s, vt


def fit(
    data: Dataset, spec: BasisSpec, weights: Optional[np.ndarray] = None
) -> FitResult:
    """Least squares regression of ``y`` on the basis evaluated at ``x``.

    :param data: Sample, every ``x`` has to lie in the support of ``spec``
    :param spec: Basis, quantile knots are resolved from ``data.x``
    :param weights: Optional positive observation weights, see
        :func:`~series_inference.suptstat.weighted_fit`
    :raises SingularDesignError: If the design is rank deficient.
    """
    spec = spec.resolve(data.x)
    design = build_basis(spec, data.x).values
    n = data.n
    if weights is None:
        root_weights = np.ones(n)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n,) or np.any(weights <= 0):
            raise InputError("Weights must be positive and one per observation")
        root_weights = np.sqrt(weights)
    weighted_design = design * root_weights[:, None]
    beta, u, s, vt = _solve_least_squares(
        weighted_design, data.y * root_weights, spec.k
    )
    residuals = data.y - design @ beta
    scores = weighted_design * (root_weights * residuals)[:, None]
    fit_logger.debug("Fitted K=%d with %d basis functions", spec.k, spec.dimension)
    return FitResult(
        k=spec.k,
        beta_hat=beta,
        residuals=residuals,
        gram=weighted_design.T @ weighted_design / n,
        gram_inv=n * (vt.T / s**2) @ vt,
        meat=scores.T @ scores / n,
        hat_diag=np.sum(u**2, axis=1),
        basis_spec=spec,
        n=n,
        design=design,
        weights=weights,
    )


def predict(fit: FitResult, points: np.ndarray) -> np.ndarray:
    """Estimated regression function at ``points``."""
    return build_basis(fit.basis_spec, points).values @ fit.beta_hat


def influence(fit: FitResult, basis_row: np.ndarray) -> np.ndarray:
    """Per observation contributions ``a' Q^-1 P_i e_i`` whose mean square is the
    sandwich variance of ``a' beta``."""
    basis_row = np.asarray(basis_row, dtype=float)
    if basis_row.shape != (fit.dimension,):
        raise InputError(
            f"Basis row of length {basis_row.size} for {fit.dimension} basis functions"
        )
    root_weights = 1.0 if fit.weights is None else np.sqrt(fit.weights)
    scores = (fit.design @ (fit.gram_inv @ basis_row)) * fit.residuals
    return scores * root_weights**2


def pointwise_variance(fit: FitResult, basis_row: np.ndarray) -> float:
    """Sandwich variance ``V = a' Q^-1 Omega Q^-1 a``, the standard error of
    ``a' beta`` is ``sqrt(V / n)``.

    :raises DegenerateVarianceError: If the result is not finite.
    """
    variance = float(np.mean(influence(fit, basis_row) ** 2))
    if not np.isfinite(variance):
        raise DegenerateVarianceError("Non-finite pointwise variance", fit.k)
    return variance


def evaluate(
    fit: FitResult, points: np.ndarray, functional: Functional = Functional.VALUE
) -> Tuple[np.ndarray, np.ndarray]:
    """Estimates of the functional at ``points`` and their standard errors."""
    rows = functional_basis(fit.basis_spec, points, functional).values
    estimates = rows @ fit.beta_hat
    variances = np.array([pointwise_variance(fit, row) for row in rows])
    return estimates, np.sqrt(variances / fit.n)


def loo_cv(fit: FitResult) -> float:
    """Leave-one-out cross-validation criterion through the hat matrix shortcut
    ``mean((e_i / (1 - h_ii))^2)``.

    :raises SaturatedPointError: If a leverage is (numerically) one.
    """
    saturated = fit.hat_diag >= 1.0 - 1e-10
    if np.any(saturated):
        raise SaturatedPointError(
            "Leave-one-out residual undefined for leverage one",
            fit.k,
            int(np.flatnonzero(saturated)[0]),
        )
    return float(np.mean((fit.residuals / (1.0 - fit.hat_diag)) ** 2))


def cross_k_correlation(
    fits: Sequence[FitResult],
    basis_rows: Sequence[np.ndarray],
    evaluation: str = "",
) -> CrossKCorrelation:
    """Correlation of the estimates ``a_K' beta_K`` across specifications.

    The covariance of two specifications is built from the cross meat
    ``Omega_{Kj,Kl} = sum P_{Kj,i} P_{Kl,i}' e_{Kj,i} e_{Kl,i} / n``, i.e. the mean of
    the product of their :func:`influence` vectors.

    :param fits: One fit per specification, all on the same sample
    :param basis_rows: Functional row of each specification at the target
    :param evaluation: Description stored with the result
    :raises DegenerateVarianceError: If a specification's variance is not positive.
    """
    if not fits or len(fits) != len(basis_rows):
        raise InputError("Need one basis row per fit and at least one fit")
    if len({f.n for f in fits}) != 1:
        raise InputError("All fits must be computed on the same sample")
    scores: List[np.ndarray] = []
    for fit_k, row in zip(fits, basis_rows):
        values = influence(fit_k, row)
        if not np.mean(values**2) > 0:
            raise DegenerateVarianceError("Pointwise variance is not positive", fit_k.k)
        scores.append(values)
    stacked = np.column_stack(scores)
    covariance = stacked.T @ stacked / fits[0].n
    deviations = np.sqrt(np.diag(covariance))
    sigma = covariance / np.outer(deviations, deviations)
    np.fill_diagonal(sigma, 1.0)
    return CrossKCorrelation(
        sigma_hat=sigma,
        k_values=tuple(f.k for f in fits),
        point_variances=np.diag(covariance).copy(),
        evaluation=evaluation,
    )
