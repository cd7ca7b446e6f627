"""Critical values that stay valid under a search over the number of series terms and
the confidence intervals and bands built from them, see :ref:`Critical Values`.

Three ways of obtaining a critical value are provided:

- :func:`pointwise_critical_value`: quantile of ``max_j |Z_j|`` with
  ``Z ~ N(0, Sigma)`` for an estimated cross-K correlation ``Sigma`` at one point
- :func:`nested_homoskedastic_corr`: ``Sigma`` built from standard errors of nested
  homoskedastic specifications only, fed into the former
- :func:`uniform_band_critical_value`: weighted bootstrap of the supremum of the
  studentized process over all candidate K and a grid of points
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import ceil
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Union

import numpy as np
import pandas as pd
from scipy.stats import gaussian_kde
from scipy.stats import norm

from .basis import BasisSpec
from .basis import Functional
from .basis import functional_basis
from .exceptions import BootstrapReplicationError
from .exceptions import DegenerateVarianceError
from .exceptions import InputError
from .exceptions import NumericalError
from .log import inference_logger
from .series_fit import CrossKCorrelation
from .series_fit import Dataset
from .series_fit import FitResult
from .series_fit import _solve_least_squares
from .series_fit import cross_k_correlation
from .series_fit import evaluate
from .series_fit import fit
from .series_fit import influence
from .settings import config
from .worker_helper import index_rng
from .worker_helper import run_indexed

FitCollection = Union[Sequence[FitResult], Mapping[int, FitResult]]

CLIP_TOLERANCE = 1e-12
"""Negative eigenvalue mass of the correlation below which clipping is not reported."""


class CriticalValueMethod(str, Enum):
    GAUSSIAN_SIM = "gaussian_sim"
    NESTED_SE_RATIO = "nested_se_ratio"
    WEIGHTED_BOOTSTRAP = "weighted_bootstrap"


@dataclass(frozen=True)
class CriticalValueResult:
    c_hat: float
    alpha: float
    draws: int
    mc_se: float
    seed: int
    method: CriticalValueMethod

    def to_dict(self) -> dict:
        return {
            "c_hat": self.c_hat,
            "alpha": self.alpha,
            "draws": self.draws,
            "mc_se": self.mc_se,
            "seed": self.seed,
            "method": CriticalValueMethod(self.method).value,
        }


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def covers(self, other: Interval) -> bool:
        return self.lower <= other.lower and other.upper <= self.upper

    def to_list(self) -> list:
        return [self.lower, self.upper]


@dataclass(frozen=True, eq=False)
class Band:
    """Confidence band ``center +- half_width`` on ``grid``."""

    grid: np.ndarray
    center: np.ndarray
    half_width: np.ndarray
    k_used: int
    c_used: float
    functional: Functional = Functional.VALUE

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.half_width

    @property
    def average_width(self) -> float:
        return float(np.mean(2.0 * self.half_width))

    def contains(self, values: np.ndarray) -> bool:
        """Whether the curve ``values`` (one per grid point) lies inside the band."""
        values = np.asarray(values, dtype=float)
        return bool(np.all((self.lower <= values) & (values <= self.upper)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "x": self.grid,
                "center": self.center,
                "lower": self.lower,
                "upper": self.upper,
            }
        )

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "center": self.center.tolist(),
            "half_width": self.half_width.tolist(),
            "k_used": self.k_used,
            "c_used": self.c_used,
            "functional": Functional(self.functional).value,
        }


@dataclass(frozen=True, eq=False)
class BootstrapWeights:
    """Standard exponential weights of one bootstrap replication."""

    e: np.ndarray
    seed: int
    index: int

    @classmethod
    def draw(cls, seed: int, index: int, n: int) -> BootstrapWeights:
        e = index_rng(seed, index).standard_exponential(n)
        return cls(e=e, seed=seed, index=index)


def normal_critical_value(alpha: float) -> float:
    """Two sided normal critical value ``z_{1-alpha/2}``.

    >>> round(normal_critical_value(0.05), 3)
    1.96
    """
    _check_alpha(alpha)
    return float(norm.ppf(1.0 - alpha / 2.0))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InputError(f"Level alpha must lie in (0, 1), got {alpha}")


def _check_draws(alpha: float, draws: int, minimum: int) -> None:
    _check_alpha(alpha)
    if draws < minimum:
        raise InputError(f"At least {minimum} draws required, got {draws}")
    if alpha * draws < 1:
        raise InputError(f"alpha * B must be at least 1, got {alpha} * {draws}")


def _order_statistic_quantile(statistics: np.ndarray, level: float) -> float:
    """Inverse CDF quantile, the order statistic at index ``ceil(level * B)``.

    >>> _order_statistic_quantile(np.arange(1.0, 101.0), 0.95)
    95.0
    """
    index = ceil(round(level * statistics.size, 9))
    return float(np.sort(statistics)[max(index, 1) - 1])


def _quantile_mc_se(statistics: np.ndarray, quantile: float, alpha: float) -> float:
    """Monte Carlo standard error of the sample quantile,
    ``sqrt(alpha (1 - alpha) / B) / f(quantile)`` with a kernel density estimate ``f``.
    Falls back to the spread of the binomial confidence interval of the order statistic
    if the density cannot be estimated."""
    draws = statistics.size
    try:
        density = float(gaussian_kde(statistics)(quantile)[0])
    except (np.linalg.LinAlgError, ValueError):
        density = 0.0
    if density > 0 and np.isfinite(density):
        return float(np.sqrt(alpha * (1.0 - alpha) / draws) / density)
    spread = 1.96 * np.sqrt(alpha * (1.0 - alpha) / draws)
    lower = _order_statistic_quantile(
        statistics, max(1.0 - alpha - spread, 1.0 / draws)
    )
    upper = _order_statistic_quantile(statistics, min(1.0 - alpha + spread, 1.0))
    return max((upper - lower) / (2.0 * 1.96), np.finfo(float).eps)


def _correlation_root(sigma: CrossKCorrelation) -> np.ndarray:
    sigma.validate()
    eigenvalues, eigenvectors = np.linalg.eigh(sigma.sigma_hat)
    negative = eigenvalues < 0
    mass = float(-eigenvalues[negative].sum())
    # eigh roundoff is of order p * eps * ||Sigma|| and ||Sigma|| <= p for a correlation
    if mass > max(CLIP_TOLERANCE, sigma.p**2 * np.finfo(float).eps):
        inference_logger.warning(
            "Clipped %d negative eigenvalue(s) of mass %.3g to zero",
            int(negative.sum()),
            mass,
        )
    eigenvalues = np.where(negative, 0.0, eigenvalues)
    root = eigenvectors * np.sqrt(eigenvalues)
    if not np.all(np.isfinite(root)):
        raise NumericalError("Factorization of the correlation matrix failed")
    return root


def pointwise_critical_value(
    sigma: CrossKCorrelation,
    alpha: float = 0.05,
    draws: Optional[int] = None,
    seed: int = 0,
    threads: Optional[int] = 1,
    method: CriticalValueMethod = CriticalValueMethod.GAUSSIAN_SIM,
) -> CriticalValueResult:
    """Simulated ``(1 - alpha)`` quantile of ``max_j |Z_j|``, ``Z ~ N(0, Sigma)``.

    The draws are generated in blocks of ``DRAW_BLOCK_SIZE``, block ``j`` from the
    random stream ``(seed, j)``, so the result does not depend on ``threads``.

    :param sigma: Cross-K correlation, slightly negative eigenvalues are clipped
    :param alpha: Level
    :param draws: Number of draws ``B``, defaults to the ``POINTWISE_DRAWS`` setting
    :param seed: Seed of the random streams
    :param threads: Number of worker threads
    :param method: Recorded in the result
    :raises InvalidCorrelationError: If ``sigma`` violates its invariants.
    """
    draws = config["POINTWISE_DRAWS"] if draws is None else draws
    _check_draws(alpha, draws, 100)
    root = _correlation_root(sigma)
    block_size = config["DRAW_BLOCK_SIZE"]

    def block(index: int) -> np.ndarray:
        size = min(block_size, draws - index * block_size)
        z = index_rng(seed, index).standard_normal((size, sigma.p)) @ root.T
        return np.max(np.abs(z), axis=1)

    statistics = np.concatenate(run_indexed(block, ceil(draws / block_size), threads))
    c_hat = _order_statistic_quantile(statistics, 1.0 - alpha)
    result = CriticalValueResult(
        c_hat=c_hat,
        alpha=alpha,
        draws=draws,
        mc_se=_quantile_mc_se(statistics, c_hat, alpha),
        seed=seed,
        method=method,
    )
    inference_logger.debug("Simulated critical value %s", result)
    return result


def nested_homoskedastic_corr(ses: Sequence[float]) -> CrossKCorrelation:
    """Correlation of nested least squares specifications under homoskedasticity, the
    ratio of the smaller to the larger standard error.

    >>> nested_homoskedastic_corr([1.0, 2.0]).sigma_hat.tolist()
    [[1.0, 0.5], [0.5, 1.0]]

    :param ses: Standard errors ordered by model size
    :raises InputError: If a standard error is not positive.
    """
    ses = np.asarray(ses, dtype=float)
    if ses.ndim != 1 or ses.size == 0:
        raise InputError("Expected a non-empty list of standard errors")
    if not np.all(np.isfinite(ses)) or np.any(ses <= 0):
        raise InputError(f"Standard errors must be positive, got {ses.tolist()}")
    sigma = np.minimum.outer(ses, ses) / np.maximum.outer(ses, ses)
    return CrossKCorrelation(
        sigma_hat=sigma,
        k_values=tuple(range(1, ses.size + 1)),
        point_variances=ses**2,
        evaluation="nested_se_ratio",
    )


def robust_ci(estimate: float, se: float, c: float) -> Interval:
    """``[estimate - c se, estimate + c se]``.

    >>> interval = robust_ci(0.0543, 0.0151, 2.503)
    >>> round(interval.lower, 4), round(interval.upper, 4)
    (0.0165, 0.0921)
    """
    if se < 0:
        raise InputError(f"Standard error must not be negative, got {se}")
    if c <= 0:
        raise InputError(f"Critical value must be positive, got {c}")
    return Interval(lower=estimate - c * se, upper=estimate + c * se)


def standard_ci(estimate: float, se: float, alpha: float = 0.05) -> Interval:
    return robust_ci(estimate, se, normal_critical_value(alpha))


def correlation_at(
    fits: FitCollection,
    point: float,
    functional: Functional = Functional.VALUE,
) -> CrossKCorrelation:
    """Cross-K correlation of the functional's estimates at ``point``."""
    fit_list = _as_list(fits)
    rows = [
        functional_basis(f.basis_spec, [point], functional).values[0] for f in fit_list
    ]
    return cross_k_correlation(
        fit_list, rows, evaluation=f"{Functional(functional).value} at x={point}"
    )


def weighted_fit(
    data: Dataset, spec: BasisSpec, weights: BootstrapWeights
) -> FitResult:
    """Least squares fit minimizing ``sum e_i (y_i - P_i' beta)^2``."""
    return fit(data, spec, weights=weights.e)


def _as_list(fits: FitCollection) -> list:
    if isinstance(fits, Mapping):
        return [fits[k] for k in sorted(fits)]
    return list(fits)


def uniform_band_critical_value(
    data: Dataset,
    fits: FitCollection,
    grid: np.ndarray,
    alpha: float = 0.05,
    draws: Optional[int] = None,
    seed: int = 0,
    threads: Optional[int] = 1,
    functional: Functional = Functional.VALUE,
) -> CriticalValueResult:
    """Weighted bootstrap critical value of the supremum over all specifications and
    grid points of ``sqrt(n) |g_e(K, x) - g(K, x)| / V(K, x)^(1/2)``.

    Replication ``b`` draws its exponential weights from the stream ``(seed, b)``, so
    different candidate sets or grids evaluated with the same seed share their weights.
    The variance in the denominator is the one of the original fit.

    :param data: Sample the ``fits`` were computed on
    :param fits: One fit per candidate K
    :param grid: Evaluation points
    :raises BootstrapReplicationError: Naming the replication and K of a failed refit.
    """
    draws = config["BOOTSTRAP_DRAWS"] if draws is None else draws
    _check_draws(alpha, draws, 1)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise InputError("Grid of a uniform band must not be empty")
    fit_list = _as_list(fits)
    if not fit_list:
        raise InputError("At least one fit required")
    n = data.n
    prepared = []
    for fit_k in fit_list:
        rows = functional_basis(fit_k.basis_spec, grid, functional).values
        deviations = np.sqrt([np.mean(influence(fit_k, row) ** 2) for row in rows])
        if not np.all(deviations > 0):
            raise DegenerateVarianceError(
                "Pointwise variance on the grid is zero", fit_k.k
            )
        prepared.append((fit_k, rows, rows @ fit_k.beta_hat, deviations))

    def replication(index: int) -> float:
        root_weights = np.sqrt(BootstrapWeights.draw(seed, index, n).e)
        supremum = 0.0
        for fit_k, rows, center, deviations in prepared:
            try:
                beta, *_ = _solve_least_squares(
                    fit_k.design * root_weights[:, None], data.y * root_weights, fit_k.k
                )
            except NumericalError as e:
                raise BootstrapReplicationError(e.message, fit_k.k, index) from e
            t = np.sqrt(n) * (rows @ beta - center) / deviations
            supremum = max(supremum, float(np.max(np.abs(t))))
        return supremum

    statistics = np.asarray(run_indexed(replication, draws, threads))
    c_hat = _order_statistic_quantile(statistics, 1.0 - alpha)
    inference_logger.info(
        "Bootstrap critical value %.4f over %d specifications and %d grid points",
        c_hat,
        len(fit_list),
        grid.size,
    )
    return CriticalValueResult(
        c_hat=c_hat,
        alpha=alpha,
        draws=draws,
        mc_se=_quantile_mc_se(statistics, c_hat, alpha),
        seed=seed,
        method=CriticalValueMethod.WEIGHTED_BOOTSTRAP,
    )


def default_grid(support: Sequence[float], size: Optional[int] = None) -> np.ndarray:
    """Evenly spaced band grid, ``BAND_GRID_SIZE`` points by default.

    >>> default_grid((0.05, 0.95))[:3].round(2).tolist()
    [0.05, 0.06, 0.07]
    """
    size = config["BAND_GRID_SIZE"] if size is None else size
    if size < 1:
        raise InputError(f"Band grid needs at least one point, got {size}")
    return np.linspace(support[0], support[1], size)


def make_band(
    fit: FitResult,
    grid: np.ndarray,
    c: float,
    functional: Functional = Functional.VALUE,
) -> Band:
    """Band ``g(K, x) +- c sqrt(V(K, x) / n)`` on ``grid``.

    :raises InputError: If ``c`` is not positive or the grid not strictly increasing.
    """
    if c <= 0:
        raise InputError(f"Critical value must be positive, got {c}")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(np.diff(grid) <= 0):
        raise InputError("Band grid must be strictly increasing")
    center, se = evaluate(fit, grid, functional)
    return Band(
        grid=grid,
        center=center,
        half_width=c * se,
        k_used=fit.k,
        c_used=float(c),
        functional=Functional(functional),
    )
