"""Monte Carlo coverage study of standard and specification-search robust confidence
intervals and bands, see :ref:`Simulation Study`.

Every replication draws its data and critical values from random streams derived from
``(master_seed, replication index)``, the report therefore does not depend on the number
of worker threads.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from enum import Enum
from time import perf_counter
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
from typing import Tuple
from typing import Union

import numpy as np
import pandas as pd
from scipy.stats import norm

from .basis import BasisSpec
from .basis import Family
from .candidate_set import CandidateRule
from .candidate_set import CandidateSet
from .candidate_set import build_candidate_set
from .candidate_set import fit_candidates
from .candidate_set import fit_selected
from .candidate_set import select_cv
from .exceptions import InputError
from .exceptions import SeriesInferenceError
from .log import REPLICATION_ID
from .log import simulation_logger
from .series_fit import Dataset
from .series_fit import evaluate
from .suptstat import correlation_at
from .suptstat import default_grid
from .suptstat import make_band
from .suptstat import normal_critical_value
from .suptstat import pointwise_critical_value
from .suptstat import robust_ci
from .suptstat import uniform_band_critical_value
from .worker_helper import derive_seed
from .worker_helper import index_rng
from .worker_helper import run_indexed

RegressionFunction = Callable[[np.ndarray], np.ndarray]


class Method(str, Enum):
    STANDARD = "standard"
    ROBUST_CV = "robust_cv"
    ROBUST_CV_PLUS = "robust_cv_plus"


UNIFORM = "uniform"


def g1(x: np.ndarray) -> np.ndarray:
    """``ln(|6x - 3| + 1) sgn(x - 1/2)``

    >>> float(g1(np.array(0.5)))
    0.0
    """
    return np.log(np.abs(6.0 * x - 3.0) + 1.0) * np.sign(x - 0.5)


def g2(x: np.ndarray) -> np.ndarray:
    """``sin(7 pi x / 2) / (1 + 2 x^2 (sgn(x) + 1))``

    >>> round(float(g2(np.array(1.0))), 12)
    -0.2
    """
    return np.sin(3.5 * np.pi * x) / (1.0 + 2.0 * x**2 * (np.sign(x) + 1.0))


def g3(x: np.ndarray) -> np.ndarray:
    """``x - 1/2 + 5 phi(10 (x - 1/2))``

    >>> round(float(g3(np.array(0.5))), 4)
    1.9947
    """
    return x - 0.5 + 5.0 * norm.pdf(10.0 * (x - 0.5))


REGRESSION_FUNCTIONS: Dict[int, RegressionFunction] = {1: g1, 2: g2, 3: g3}


def dgp_sample(
    model_id: int,
    n: int,
    heteroskedastic: bool = True,
    seed: Union[int, np.random.Generator] = 0,
    scale: float = 1.0,
) -> Tuple[Dataset, RegressionFunction]:
    """Draws ``x = Phi(x*)``, ``x* ~ N(0, 1)`` and ``y = g(x) + e`` with
    ``e ~ N(0, ((1 + 2 x*) / 2)^2)`` or standard normal errors if homoskedastic.

    :param model_id: Selects the regression function, see :data:`REGRESSION_FUNCTIONS`
    :param scale: Multiplies both the regression function and the error
    :return: The sample and the (scaled) true regression function
    """
    try:
        g = REGRESSION_FUNCTIONS[model_id]
    except KeyError:
        raise InputError(f"Unknown model {model_id}, expected one of 1, 2, 3")
    if n < 2:
        raise InputError(f"Sample size must be at least 2, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    latent = rng.standard_normal(n)
    x = norm.cdf(latent)
    sigma = np.abs(1.0 + 2.0 * latent) / 2.0 if heteroskedastic else np.ones(n)
    y = scale * (g(x) + sigma * rng.standard_normal(n))

    def truth(points: np.ndarray) -> np.ndarray:
        return scale * g(np.asarray(points, dtype=float))

    return Dataset(y=y, x=x), truth


@dataclass(frozen=True)
class SimConfig:
    model_id: int
    n: int = 200
    n_reps: int = 2000
    b_critical: int = 1000
    b_bootstrap: int = 1000
    alpha: float = 0.05
    candidate_rule: CandidateRule = CandidateRule.SIMULATION_RULE
    k_values: Optional[Tuple[int, ...]] = None
    family: Family = Family.SPLINE
    spline_order: int = 3
    eval_points: Tuple[float, ...] = (0.2, 0.5, 0.8, 0.9)
    band_support: Tuple[float, float] = (0.05, 0.95)
    band_grid_size: int = 91
    heteroskedastic: bool = True
    master_seed: int = 0
    scale: float = 1.0
    threads: int = 1
    tolerate_failures: bool = False
    count_boundary_knots: bool = True

    @property
    def knot_offset(self) -> int:
        """Difference between a candidate K and the number of interior knots fitted.

        With ``count_boundary_knots`` a spline with K knots has K - 2 interior ones,
        the two endpoints of the support being knots as well.

        >>> SimConfig(model_id=1).knot_offset
        2
        >>> SimConfig(model_id=1, family=Family.POLYNOMIAL).knot_offset
        0
        """
        if self.count_boundary_knots and Family(self.family) is Family.SPLINE:
            return 2
        return 0

    def validate(self) -> None:
        if self.model_id not in REGRESSION_FUNCTIONS:
            raise InputError(f"Unknown model {self.model_id}, expected one of 1, 2, 3")
        if self.n_reps < 1:
            raise InputError(f"At least one replication required, got {self.n_reps}")
        if self.n < 2:
            raise InputError(f"Sample size must be at least 2, got {self.n}")
        if not 0.0 < self.alpha < 1.0:
            raise InputError(f"Level alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 <= self.band_support[0] < self.band_support[1] <= 1.0:
            raise InputError(f"Band support {self.band_support} not inside [0, 1]")
        if not all(0.0 < x < 1.0 for x in self.eval_points):
            raise InputError(f"Evaluation points {self.eval_points} not inside (0, 1)")
        if self.scale <= 0:
            raise InputError(f"Scale must be positive, got {self.scale}")
        if CandidateRule(self.candidate_rule) is CandidateRule.CV_ANCHORED:
            raise InputError(
                "Coverage study supports explicit and simulation rules only"
            )
        if self.k_values and min(self.k_values) < self.knot_offset:
            raise InputError(
                f"Spline candidates count both boundary knots, K must be at least "
                f"{self.knot_offset}, got {min(self.k_values)}"
            )

    @property
    def targets(self) -> List[str]:
        return [f"x={x:g}" for x in self.eval_points] + [UNIFORM]


@dataclass(frozen=True)
class ReplicationOutcome:
    """Containment indicators and lengths of one replication, keyed by method and
    target."""

    index: int
    k_cv: int
    k_cv_plus: int
    cv_plus_clipped: bool
    covered: Dict[str, Dict[str, bool]]
    length: Dict[str, Dict[str, float]]


@dataclass(frozen=True)
class ReplicationFailure:
    index: int
    seed: int
    message: str


@dataclass
class SimReport:
    config: SimConfig
    coverage: Dict[str, Dict[str, float]] = field(default_factory=dict)
    average_length: Dict[str, Dict[str, float]] = field(default_factory=dict)
    k_cv_histogram: Dict[int, int] = field(default_factory=dict)
    cv_plus_clipped: int = 0
    completed: int = 0
    failures: List[ReplicationFailure] = field(default_factory=list)
    seconds: float = 0.0

    def to_frame(self) -> pd.DataFrame:
        """Flat table in the layout ``model,method,target,coverage,avg_length``."""
        rows = [
            {
                "model": self.config.model_id,
                "method": method,
                "target": target,
                "coverage": self.coverage[method][target],
                "avg_length": self.average_length[method][target],
            }
            for method in self.coverage
            for target in self.config.targets
        ]
        return pd.DataFrame(
            rows, columns=["model", "method", "target", "coverage", "avg_length"]
        )

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "coverage": self.coverage,
            "average_length": self.average_length,
            "k_cv_histogram": {
                str(k): v for k, v in sorted(self.k_cv_histogram.items())
            },
            "cv_plus_clipped": self.cv_plus_clipped,
            "completed": self.completed,
            "failures": [asdict(failure) for failure in self.failures],
            "seconds": self.seconds,
        }


def _replication_seed(config: SimConfig, index: int) -> int:
    return derive_seed(config.master_seed, index)


def run_replication(config: SimConfig, index: int) -> ReplicationOutcome:
    """One replication: draw data, fit all candidates, select K by cross-validation and
    check standard and robust intervals at the evaluation points and bands on the
    grid."""
    token = REPLICATION_ID.set(str(index))
    try:
        return _replicate(config, index)
    finally:
        REPLICATION_ID.reset(token)


def _replicate(config: SimConfig, index: int) -> ReplicationOutcome:
    seed = _replication_seed(config, index)
    data, truth = dgp_sample(
        config.model_id,
        config.n,
        config.heteroskedastic,
        index_rng(seed, 0),
        config.scale,
    )
    template = BasisSpec(
        family=config.family, k=0, support=(0.0, 1.0), spline_order=config.spline_order
    )
    offset = config.knot_offset
    candidates = build_candidate_set(config.candidate_rule, config.n, config.k_values)
    # fits and selections below count interior knots only
    interior = CandidateSet(
        tuple(k - offset for k in candidates.k_values), candidates.rule
    )
    fits = fit_candidates(data, interior, template)
    selection = select_cv(data, interior, template, fits=fits)
    k_cv, k_plus = selection.k_cv, selection.bumped["cv+"]
    selected = {k_cv: fits[k_cv], k_plus: fit_selected(data, fits, template, k_plus)}
    z = normal_critical_value(config.alpha)
    covered: Dict[str, Dict[str, bool]] = {method.value: {} for method in Method}
    length: Dict[str, Dict[str, float]] = {method.value: {} for method in Method}

    for position, (x, target) in enumerate(zip(config.eval_points, config.targets)):
        c_hat = pointwise_critical_value(
            correlation_at(fits, x),
            config.alpha,
            config.b_critical,
            derive_seed(seed, 1, position),
        ).c_hat
        value = float(truth(np.array([x]))[0])
        for method, k, c in (
            (Method.STANDARD, k_cv, z),
            (Method.ROBUST_CV, k_cv, c_hat),
            (Method.ROBUST_CV_PLUS, k_plus, c_hat),
        ):
            estimate, se = evaluate(selected[k], [x])
            interval = robust_ci(float(estimate[0]), float(se[0]), c)
            covered[method.value][target] = interval.contains(value)
            length[method.value][target] = interval.length

    grid = default_grid(config.band_support, config.band_grid_size)
    c_band = uniform_band_critical_value(
        data, fits, grid, config.alpha, config.b_bootstrap, derive_seed(seed, 2)
    ).c_hat
    curve = truth(grid)
    for method, k, c in (
        (Method.STANDARD, k_cv, z),
        (Method.ROBUST_CV, k_cv, c_band),
        (Method.ROBUST_CV_PLUS, k_plus, c_band),
    ):
        band = make_band(selected[k], grid, c)
        covered[method.value][UNIFORM] = band.contains(curve)
        length[method.value][UNIFORM] = band.average_width
    simulation_logger.debug("Finished replication with K_cv=%d", k_cv + offset)
    return ReplicationOutcome(
        index=index,
        k_cv=k_cv + offset,
        k_cv_plus=k_plus + offset,
        cv_plus_clipped="cv+" in selection.clipped,
        covered=covered,
        length=length,
    )


def run_coverage_study(config: SimConfig) -> SimReport:
    """Runs ``config.n_reps`` replications and aggregates coverage rates and average
    lengths per method and target.

    :raises SeriesInferenceError: Of the first failing replication unless
        ``tolerate_failures`` is set, in which case failures are recorded and skipped.
    """
    config.validate()
    started = perf_counter()
    simulation_logger.info(
        "Starting %d replications of model %d with n=%d",
        config.n_reps,
        config.model_id,
        config.n,
    )

    def guarded(index: int) -> Union[ReplicationOutcome, ReplicationFailure]:
        try:
            return run_replication(config, index)
        except SeriesInferenceError as e:
            if not config.tolerate_failures:
                simulation_logger.error("Replication %d failed: %s", index, e)
                raise
            simulation_logger.warning("Skipping failed replication %d: %s", index, e)
            return ReplicationFailure(index, _replication_seed(config, index), str(e))

    results = run_indexed(guarded, config.n_reps, config.threads)
    outcomes = [r for r in results if isinstance(r, ReplicationOutcome)]
    report = SimReport(
        config=config,
        failures=[r for r in results if isinstance(r, ReplicationFailure)],
        completed=len(outcomes),
    )
    if not outcomes:
        raise InputError("No replication of the coverage study succeeded")
    for method in Method:
        report.coverage[method.value] = {
            target: float(np.mean([o.covered[method.value][target] for o in outcomes]))
            for target in config.targets
        }
        report.average_length[method.value] = {
            target: float(np.mean([o.length[method.value][target] for o in outcomes]))
            for target in config.targets
        }
    report.k_cv_histogram = dict(Counter(o.k_cv for o in outcomes))
    report.cv_plus_clipped = sum(o.cv_plus_clipped for o in outcomes)
    report.seconds = perf_counter() - started
    simulation_logger.info(
        "Finished %d replications (%d failed) in %.1f seconds",
        report.completed,
        len(report.failures),
        report.seconds,
    )
    return report
