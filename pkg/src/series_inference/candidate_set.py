"""Candidate sets of series term counts and their cross-validated selection."""
from __future__ import annotations

from dataclasses import dataclass
from dataclasses import field
from enum import Enum
from math import ceil
from typing import Dict
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Tuple

from .basis import BasisSpec
from .exceptions import InvalidCandidateSetError
from .exceptions import SeriesInferenceError
from .log import fit_logger
from .series_fit import Dataset
from .series_fit import FitResult
from .series_fit import fit
from .series_fit import loo_cv
from .worker_helper import run_indexed

BUMPS = {"cv+": 2, "cv++": 4}
"""Undersmoothing bumps added to the cross-validated choice."""


class CandidateRule(str, Enum):
    EXPLICIT = "explicit"
    SIMULATION_RULE = "simulation_rule"
    CV_ANCHORED = "cv_anchored"


@dataclass(frozen=True)
class CandidateSet:
    k_values: Tuple[int, ...]
    rule: CandidateRule = CandidateRule.EXPLICIT

    def __post_init__(self) -> None:
        k_values = tuple(int(k) for k in self.k_values)
        if not k_values:
            raise InvalidCandidateSetError("Candidate set is empty")
        if k_values[0] < 0:
            raise InvalidCandidateSetError(f"Negative K in candidate set {k_values}")
        if any(b <= a for a, b in zip(k_values, k_values[1:])):
            raise InvalidCandidateSetError(
                f"Candidate set must be strictly increasing, got {list(k_values)}"
            )
        object.__setattr__(self, "k_values", k_values)

    @property
    def p(self) -> int:
        return len(self.k_values)

    @property
    def k_min(self) -> int:
        return self.k_values[0]

    @property
    def k_max(self) -> int:
        return self.k_values[-1]


@dataclass(frozen=True)
class Selection:
    """Outcome of :func:`select_cv`.

    ``bumped`` holds the bumped choices clipped to the largest candidate,
    ``bumped_unclipped`` the raw ones and ``clipped`` the labels that had to be clipped.
    """

    k_cv: int
    cv_scores: Dict[int, float]
    bumped: Dict[str, int] = field(default_factory=dict)
    bumped_unclipped: Dict[str, int] = field(default_factory=dict)
    clipped: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "k_cv": self.k_cv,
            "cv_scores": {str(k): v for k, v in self.cv_scores.items()},
            "bumped": dict(self.bumped),
            "bumped_unclipped": dict(self.bumped_unclipped),
            "clipped": list(self.clipped),
        }


def _ceil(value: float) -> int:
    # guards against 2 * 1000 ** (1/3) = 19.999999999999996
    return ceil(round(value, 9))


def build_candidate_set(
    rule: CandidateRule,
    n: int,
    k_values: Optional[Sequence[int]] = None,
    k_cv: Optional[int] = None,
    c1: float = 2.0,
    lower: Tuple[float, float] = (2.0, 1 / 5),
    upper: Tuple[float, float] = (2.0, 1 / 3),
) -> CandidateSet:
    """Builds the candidate set for a sample of size ``n``.

    - ``simulation_rule``: all integers between ``ceil(2 n^(1/5))`` and
      ``ceil(2 n^(1/3))``, the constants can be changed via ``lower`` and ``upper``
    - ``cv_anchored``: all integers between ``k_cv`` and ``ceil(c1 * k_cv)``
    - ``explicit``: ``k_values`` after validation

    >>> build_candidate_set(CandidateRule.SIMULATION_RULE, 200).k_values
    (6, 7, 8, 9, 10, 11, 12)
    >>> build_candidate_set(CandidateRule.CV_ANCHORED, 200, k_cv=5, c1=2).k_values
    (5, 6, 7, 8, 9, 10)
    """
    rule = CandidateRule(rule)
    if n < 2:
        raise InvalidCandidateSetError(f"Sample size must be at least 2, got {n}")
    if rule is CandidateRule.EXPLICIT:
        if k_values is None:
            raise InvalidCandidateSetError("Explicit rule requires a list of K values")
        return CandidateSet(tuple(k_values), rule)
    if rule is CandidateRule.SIMULATION_RULE:
        k_low = _ceil(lower[0] * n ** lower[1])
        k_high = _ceil(upper[0] * n ** upper[1])
        return CandidateSet(tuple(range(k_low, k_high + 1)), rule)
    if k_cv is None or k_cv < 0:
        raise InvalidCandidateSetError("CV anchored rule requires a non-negative K_cv")
    if c1 <= 1:
        raise InvalidCandidateSetError(f"Multiplier c1 must exceed 1, got {c1}")
    return CandidateSet(tuple(range(k_cv, _ceil(c1 * k_cv) + 1)), rule)


def fit_candidates(
    data: Dataset,
    candidates: CandidateSet,
    spec_template: BasisSpec,
    threads: Optional[int] = 1,
) -> Dict[int, FitResult]:
    """Fits every specification of the candidate set, keyed by K."""
    fits = run_indexed(
        lambda index: fit(data, spec_template.with_k(candidates.k_values[index])),
        candidates.p,
        threads,
    )
    return dict(zip(candidates.k_values, fits))


def fit_selected(
    data: Dataset,
    fits: Mapping[int, FitResult],
    spec_template: BasisSpec,
    k: int,
) -> FitResult:
    """Fit of a selected K. A bumped choice can fall between the values of a sparse
    candidate set, it is fitted on demand then.
    """
    if k in fits:
        return fits[k]
    fit_logger.warning(
        "K=%d lies between the candidates %s, the critical value does not cover it",
        k,
        sorted(fits),
    )
    return fit(data, spec_template.with_k(k))


def select_from_scores(
    cv_scores: Mapping[int, float], k_max: Optional[int] = None
) -> Selection:
    """Picks the minimizer of the cross-validation scores, ties go to the smaller K.

    >>> select_from_scores({6: 1.2, 7: 1.1, 8: 1.15}).k_cv
    7
    >>> select_from_scores({6: 1.0, 7: 1.0}).k_cv
    6
    """
    k_sorted = sorted(cv_scores)
    k_cv = k_sorted[0]
    for k in k_sorted[1:]:
        if cv_scores[k] < cv_scores[k_cv]:
            k_cv = k
    k_max = k_sorted[-1] if k_max is None else k_max
    unclipped = {label: k_cv + step for label, step in BUMPS.items()}
    bumped = {label: min(k, k_max) for label, k in unclipped.items()}
    clipped = tuple(label for label in BUMPS if bumped[label] != unclipped[label])
    if clipped:
        fit_logger.warning(
            "Bumped choices %s exceed the largest candidate %d and were clipped",
            ", ".join(clipped),
            k_max,
        )
    return Selection(
        k_cv=k_cv,
        cv_scores={k: float(cv_scores[k]) for k in k_sorted},
        bumped=bumped,
        bumped_unclipped=unclipped,
        clipped=clipped,
    )


def select_cv(
    data: Dataset,
    candidates: CandidateSet,
    spec_template: BasisSpec,
    fits: Optional[Mapping[int, FitResult]] = None,
    threads: Optional[int] = 1,
) -> Selection:
    """Selects K by leave-one-out cross-validation over the candidate set.

    :param fits: Already computed fits per K, computed if not given
    :raises NumericalError: Of the first failing K, which is named in the message.
    """
    if fits is None:
        fits = fit_candidates(data, candidates, spec_template, threads)
    scores: Dict[int, float] = {}
    for k in candidates.k_values:
        try:
            scores[k] = loo_cv(fits[k])
        except SeriesInferenceError:
            fit_logger.error("Cross-validation failed for K=%d", k)
            raise
    selection = select_from_scores(scores, candidates.k_max)
    fit_logger.info("Cross-validation selected K=%d", selection.k_cv)
    return selection
