"""Partially linear model ``y = theta w + g(x) + e``: partialling out estimates of
``theta`` for several numbers of series controls, their variances under many
regressors, the cross-K correlation and confidence intervals uniform in K, see
:ref:`Partially Linear Model`.

The annihilator ``M = I - P (P'P)^-1 P'`` of the controls is never stored, its rows are
materialized in chunks from an orthonormal basis of the controls.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict
from typing import Iterator
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

import numpy as np
import scipy.linalg

from .basis import BasisMatrix
from .exceptions import AnnihilatorFloorError
from .exceptions import DataFormatError
from .exceptions import DegenerateVarianceError
from .exceptions import InputError
from .exceptions import SingularDesignError
from .log import inference_logger
from .series_fit import CrossKCorrelation
from .series_fit import Dataset
from .settings import config
from .suptstat import CriticalValueResult
from .suptstat import Interval
from .suptstat import pointwise_critical_value
from .suptstat import robust_ci
from .suptstat import standard_ci

ROW_CHUNK = 256


class KappaMode(str, Enum):
    """Weighting ``kappa_ij`` of the products ``v_i^2 e_j^2`` in the variance."""

    HC0 = "hc0"
    HC1 = "hc1"
    CROSS_TERM_FULL = "cross_term_full"


@dataclass(frozen=True, eq=False)
class PlmFit:
    theta_hat: float
    k: int
    m_diag: np.ndarray
    v_hat: np.ndarray
    eps_hat: np.ndarray
    gamma_hat: float
    rank: int
    controls: np.ndarray
    orthonormal: np.ndarray

    @property
    def n(self) -> int:
        return self.m_diag.size

    def annihilator_rows(
        self, chunk: int = ROW_CHUNK
    ) -> Iterator[Tuple[slice, np.ndarray]]:
        """Yields consecutive row blocks ``M[rows, :]`` of the annihilator."""
        for start in range(0, self.n, chunk):
            rows = slice(start, min(start + chunk, self.n))
            block = -self.orthonormal[rows] @ self.orthonormal.T
            block[np.arange(block.shape[0]), np.arange(rows.start, rows.stop)] += 1.0
            yield rows, block


@dataclass(frozen=True)
class PlmVariance:
    v_hat_n: float
    omega_hat: float
    gamma_hat: float
    kappa_mode: KappaMode
    n: int

    @property
    def se(self) -> float:
        return float(np.sqrt(self.v_hat_n / self.n))


def plm_fit(
    data: Dataset,
    controls: Union[BasisMatrix, np.ndarray],
    k: Optional[int] = None,
) -> PlmFit:
    """Partialling out estimate ``(W'MW)^-1 W'MY``.

    :param data: Sample including ``w``
    :param controls: Control basis evaluated at the observations
    :param k: Label of the specification, taken from the basis if not given
    :raises SingularDesignError: If the controls are rank deficient.
    :raises AnnihilatorFloorError: If a diagonal entry of ``M`` is below the
        ``ANNIHILATOR_FLOOR`` setting.
    """
    if data.w is None:
        raise DataFormatError("Partially linear model requires the column w")
    if isinstance(controls, BasisMatrix):
        k = controls.spec.k if k is None else k
        controls = controls.values
    controls = np.asarray(controls, dtype=float)
    k = controls.shape[1] if k is None else k
    n, dimension = controls.shape
    if n != data.n:
        raise InputError(f"Controls have {n} rows for {data.n} observations")
    if n <= dimension + 1:
        raise SingularDesignError(
            f"Need more than {dimension + 1} observations, got {n}", k
        )
    u, s, _ = scipy.linalg.svd(controls, full_matrices=False)
    if s[-1] <= config["RANK_TOLERANCE"] * s[0]:
        raise SingularDesignError("Controls are numerically rank deficient", k)

    def annihilate(values: np.ndarray) -> np.ndarray:
        return values - u @ (u.T @ values)

    m_diag = 1.0 - np.sum(u**2, axis=1)
    below = m_diag < config["ANNIHILATOR_FLOOR"]
    if np.any(below):
        raise AnnihilatorFloorError(
            f"Annihilator diagonal below {config['ANNIHILATOR_FLOOR']}",
            k,
            int(np.flatnonzero(below)[0]),
        )
    v_hat = annihilate(data.w)
    gamma_hat = float(v_hat @ v_hat / n)
    if not gamma_hat > config["RANK_TOLERANCE"] * float(data.w @ data.w / n):
        raise DegenerateVarianceError("w is explained by the controls", k)
    theta_hat = float(v_hat @ data.y / (v_hat @ v_hat))
    eps_hat = annihilate(data.y) - theta_hat * v_hat
    return PlmFit(
        theta_hat=theta_hat,
        k=k,
        m_diag=m_diag,
        v_hat=v_hat,
        eps_hat=eps_hat,
        gamma_hat=gamma_hat,
        rank=dimension,
        controls=controls,
        orthonormal=u,
    )


def _cross_omega(first: PlmFit, second: PlmFit) -> float:
    """``sum_i sum_j M1_ij M2_ij (v1_i v2_i) (e1_j e2_j) / n``."""
    outcome = first.eps_hat * second.eps_hat
    treatment = first.v_hat * second.v_hat
    total = 0.0
    for (rows, block_first), (_, block_second) in zip(
        first.annihilator_rows(), second.annihilator_rows()
    ):
        total += float(treatment[rows] @ ((block_first * block_second) @ outcome))
    return total / first.n


def _hc0_omega(first: PlmFit, second: PlmFit) -> float:
    return float(np.mean(first.v_hat * first.eps_hat * second.v_hat * second.eps_hat))


def plm_variance(fit: PlmFit, mode: KappaMode = KappaMode.HC0) -> PlmVariance:
    """Variance ``Gamma^-1 Omega Gamma^-1`` of ``theta_hat(K)``.

    - ``hc0``: ``Omega = sum v_i^2 e_i^2 / n``
    - ``hc1``: ``hc0`` scaled by ``n / (n - rank - 1)``
    - ``cross_term_full``: ``Omega = sum_i sum_j M_ij^2 v_i^2 e_j^2 / n``
    """
    mode = KappaMode(mode)
    if not fit.gamma_hat > 0:
        raise DegenerateVarianceError("Gamma is not positive", fit.k)
    if mode is KappaMode.CROSS_TERM_FULL:
        omega = _cross_omega(fit, fit)
    else:
        omega = _hc0_omega(fit, fit)
        if mode is KappaMode.HC1:
            omega *= fit.n / (fit.n - fit.rank - 1)
    return PlmVariance(
        v_hat_n=omega / fit.gamma_hat**2,
        omega_hat=omega,
        gamma_hat=fit.gamma_hat,
        kappa_mode=mode,
        n=fit.n,
    )


def plm_cross_corr(
    fits: Sequence[PlmFit], mode: KappaMode = KappaMode.CROSS_TERM_FULL
) -> CrossKCorrelation:
    """Correlation of ``theta_hat(K)`` across specifications.

    ``cross_term_full`` uses the products of both annihilators with the plug-in
    ``(v_l,i v_l',i)(e_l,j e_l',j)`` for the conditional moments, ``hc0`` only the
    diagonal terms.

    :raises DegenerateVarianceError: If a specification's variance is not positive.
    """
    mode = KappaMode(mode)
    if not fits:
        raise InputError("At least one fit required")
    if len({f.n for f in fits}) != 1:
        raise InputError("All fits must be computed on the same sample")
    omega_of = _cross_omega if mode is KappaMode.CROSS_TERM_FULL else _hc0_omega
    p = len(fits)
    covariance = np.empty((p, p))
    for row in range(p):
        for col in range(row, p):
            first, second = fits[row], fits[col]
            value = omega_of(first, second) / (first.gamma_hat * second.gamma_hat)
            covariance[row, col] = covariance[col, row] = value
    variances = np.diag(covariance).copy()
    for fit, variance in zip(fits, variances):
        if not variance > 0:
            raise DegenerateVarianceError("Variance of theta is not positive", fit.k)
    sigma = covariance / np.sqrt(np.outer(variances, variances))
    np.fill_diagonal(sigma, 1.0)
    return CrossKCorrelation(
        sigma_hat=sigma,
        k_values=tuple(f.k for f in fits),
        point_variances=variances,
        evaluation=f"theta ({mode.value})",
    )


@dataclass(frozen=True, eq=False)
class PlmInference:
    """Result of :func:`plm_robust_ci`."""

    fits: List[PlmFit]
    critical_value: CriticalValueResult
    sigma: CrossKCorrelation
    se_mode: KappaMode
    standard: Dict[int, Interval]
    robust: Dict[int, Interval]
    ses: Dict[int, Dict[str, float]]

    def to_dict(self) -> dict:
        return {
            "specifications": [
                {
                    "K": fit.k,
                    "theta_hat": fit.theta_hat,
                    "se_hc0": self.ses[fit.k][KappaMode.HC0.value],
                    "se_cross_term": self.ses[fit.k][KappaMode.CROSS_TERM_FULL.value],
                    "se_used": self.ses[fit.k][self.se_mode.value],
                    "ci_standard": self.standard[fit.k].to_list(),
                    "ci_robust": self.robust[fit.k].to_list(),
                }
                for fit in self.fits
            ],
            "se_mode": self.se_mode.value,
            **self.critical_value.to_dict(),
            "sigma_hat": self.sigma.sigma_hat.tolist(),
        }


def plm_robust_ci(
    fits: Sequence[PlmFit],
    alpha: float = 0.05,
    draws: Optional[int] = None,
    seed: int = 0,
    se_mode: KappaMode = KappaMode.HC0,
    corr_mode: KappaMode = KappaMode.CROSS_TERM_FULL,
    threads: Optional[int] = 1,
) -> PlmInference:
    """Intervals ``theta_hat(K) +- c sqrt(V(K) / n)`` with ``c`` simulated from the
    cross-K correlation, together with the standard normal intervals."""
    se_mode = KappaMode(se_mode)
    sigma = plm_cross_corr(fits, corr_mode)
    critical_value = pointwise_critical_value(sigma, alpha, draws, seed, threads)
    ses: Dict[int, Dict[str, float]] = {}
    standard: Dict[int, Interval] = {}
    robust: Dict[int, Interval] = {}
    for fit in fits:
        ses[fit.k] = {mode.value: plm_variance(fit, mode).se for mode in KappaMode}
        se = ses[fit.k][se_mode.value]
        standard[fit.k] = standard_ci(fit.theta_hat, se, alpha)
        robust[fit.k] = robust_ci(fit.theta_hat, se, critical_value.c_hat)
    inference_logger.info(
        "Robust critical value %.4f for %d specifications of the partially linear model",
        critical_value.c_hat,
        len(fits),
    )
    return PlmInference(
        fits=list(fits),
        critical_value=critical_value,
        sigma=sigma,
        se_mode=se_mode,
        standard=standard,
        robust=robust,
        ses=ses,
    )
