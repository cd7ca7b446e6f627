import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import norm

from series_inference import suptstat
from series_inference.basis import Functional
from series_inference.candidate_set import CandidateSet
from series_inference.candidate_set import fit_candidates
from series_inference.exceptions import BootstrapReplicationError
from series_inference.exceptions import InputError
from series_inference.exceptions import InvalidCorrelationError
from series_inference.exceptions import SingularDesignError
from series_inference.series_fit import CrossKCorrelation
from series_inference.series_fit import evaluate
from series_inference.series_fit import fit
from series_inference.sim_harness import dgp_sample
from series_inference.suptstat import BootstrapWeights
from series_inference.suptstat import CriticalValueMethod
from series_inference.suptstat import correlation_at
from series_inference.suptstat import default_grid
from series_inference.suptstat import make_band
from series_inference.suptstat import nested_homoskedastic_corr
from series_inference.suptstat import normal_critical_value
from series_inference.suptstat import pointwise_critical_value
from series_inference.suptstat import robust_ci
from series_inference.suptstat import standard_ci
from series_inference.suptstat import uniform_band_critical_value
from series_inference.suptstat import weighted_fit

PUBLISHED_SES = [
    0.0104,
    0.0128,
    0.0127,
    0.0129,
    0.0151,
    0.0197,
    0.0223,
    0.0223,
    0.0275,
    0.0286,
    0.0289,
]


def _correlation(matrix: np.ndarray) -> CrossKCorrelation:
    return CrossKCorrelation(
        sigma_hat=matrix,
        k_values=tuple(range(1, matrix.shape[0] + 1)),
        point_variances=np.ones(matrix.shape[0]),
    )


@pytest.mark.parametrize(
    "estimate, se, c, expected",
    [
        (0.0543, 0.0151, 2.503, (0.0165, 0.0921)),
        (0.0372, 0.0104, 1.96, (0.0168, 0.0576)),
        (0.0659, 0.0197, 2.503, (0.0166, 0.1152)),
        (0.0628, 0.0223, 2.503, (0.0070, 0.1186)),
    ],
)
def test_published_interval_arithmetic(estimate, se, c, expected):
    interval = robust_ci(estimate, se, c)
    assert (round(interval.lower, 4), round(interval.upper, 4)) == expected


def test_critical_value_from_published_standard_errors():
    sigma = nested_homoskedastic_corr(PUBLISHED_SES)
    result = pointwise_critical_value(
        sigma, 0.05, draws=100_000, seed=0, method=CriticalValueMethod.NESTED_SE_RATIO
    )
    assert 2.48 <= result.c_hat <= 2.53
    assert result.method is CriticalValueMethod.NESTED_SE_RATIO
    assert result.to_dict()["method"] == "nested_se_ratio"


def test_nested_ratio_is_valid_for_non_monotone_ses():
    sigma = nested_homoskedastic_corr(PUBLISHED_SES)
    sigma.validate()
    assert_allclose(sigma.sigma_hat[0, 1], 0.0104 / 0.0128)
    assert_allclose(sigma.sigma_hat[1, 2], 0.0127 / 0.0128)


def test_nested_ratio_rejects_non_positive_ses():
    with pytest.raises(InputError):
        nested_homoskedastic_corr([0.1, 0.0])
    with pytest.raises(InputError):
        nested_homoskedastic_corr([])


@pytest.mark.parametrize("p", [2, 5, 10])
@pytest.mark.parametrize("alpha", [0.10, 0.05])
def test_independent_max_closed_form(p, alpha):
    result = pointwise_critical_value(_correlation(np.eye(p)), alpha, 50_000, seed=p)
    expected = norm.ppf((1 + (1 - alpha) ** (1 / p)) / 2)
    assert abs(result.c_hat - expected) <= 3 * result.mc_se


def test_single_specification_gives_normal_quantile():
    result = pointwise_critical_value(_correlation(np.eye(1)), 0.05, 50_000, seed=1)
    assert abs(result.c_hat - 1.959964) <= 3 * result.mc_se
    assert_allclose(normal_critical_value(0.05), 1.959964, atol=1e-6)


def test_perfect_correlation_collapses_to_normal():
    result = pointwise_critical_value(_correlation(np.ones((4, 4))), 0.05, 50_000)
    assert abs(result.c_hat - 1.959964) <= 3 * result.mc_se


@pytest.mark.parametrize("seed", range(5))
def test_critical_value_at_least_normal(seed):
    rng = np.random.default_rng(seed)
    factor = rng.standard_normal((6, 3))
    covariance = factor @ factor.T + 0.1 * np.eye(6)
    scale = np.sqrt(np.diag(covariance))
    result = pointwise_critical_value(
        _correlation(covariance / np.outer(scale, scale)), 0.05, 20_000, seed=seed
    )
    assert result.c_hat >= 1.959964 - 3 * result.mc_se


def test_critical_value_independent_of_threads():
    sigma = nested_homoskedastic_corr(PUBLISHED_SES)
    serial = pointwise_critical_value(sigma, 0.05, 20_000, seed=9, threads=1)
    parallel = pointwise_critical_value(sigma, 0.05, 20_000, seed=9, threads=4)
    assert serial == parallel
    other = pointwise_critical_value(sigma, 0.05, 20_000, seed=10)
    assert other.c_hat != serial.c_hat


def test_tiny_negative_eigenvalues_are_clipped(caplog):
    eigenvectors = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 3)))[0]
    matrix = eigenvectors @ np.diag([1.5, 1.5, -1e-10]) @ eigenvectors.T
    scale = np.sqrt(np.diag(matrix))
    matrix = matrix / np.outer(scale, scale)
    np.fill_diagonal(matrix, 1.0)
    matrix = (matrix + matrix.T) / 2
    if np.linalg.eigvalsh(matrix).min() >= 0:
        pytest.skip("rounding produced a positive semi-definite matrix")
    result = pointwise_critical_value(_correlation(matrix), 0.05, 5_000)
    assert np.isfinite(result.c_hat)
    assert "Clipped" in caplog.text


def test_roundoff_is_not_reported(caplog):
    matrix = np.ones((4, 4))
    result = pointwise_critical_value(_correlation(matrix), 0.05, 5_000)
    assert np.isfinite(result.c_hat)
    assert "Clipped" not in caplog.text


def test_indefinite_correlation_rejected():
    matrix = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    with pytest.raises(InvalidCorrelationError):
        pointwise_critical_value(_correlation(matrix), 0.05, 5_000)


@pytest.mark.parametrize(
    "alpha, draws", [(0.0, 1000), (1.0, 1000), (0.05, 10), (0.001, 500)]
)
def test_invalid_levels_and_draws(alpha, draws):
    with pytest.raises(InputError):
        pointwise_critical_value(_correlation(np.eye(2)), alpha, draws)


def test_standard_ci_uses_normal_quantile():
    interval = standard_ci(1.0, 0.5, 0.05)
    assert_allclose([interval.lower, interval.upper], [1 - 0.98, 1 + 0.98], atol=1e-3)
    assert robust_ci(1.0, 0.5, 2.5).covers(interval)
    with pytest.raises(InputError):
        robust_ci(1.0, -0.1, 2.0)


def test_bootstrap_weights_are_keyed_by_replication():
    first = BootstrapWeights.draw(3, 7, 1000)
    assert_allclose(first.e, BootstrapWeights.draw(3, 7, 1000).e)
    assert not np.allclose(first.e, BootstrapWeights.draw(3, 8, 1000).e)
    assert np.all(first.e > 0)
    assert abs(first.e.mean() - 1.0) < 0.15


@pytest.fixture
def candidate_fits(model_one_data, spline_template):
    return fit_candidates(model_one_data, CandidateSet((6, 8, 10)), spline_template)


def test_bootstrap_independent_of_threads(model_one_data, candidate_fits):
    grid = default_grid((0.05, 0.95), 19)
    serial = uniform_band_critical_value(
        model_one_data, candidate_fits, grid, 0.1, 50, seed=4, threads=1
    )
    parallel = uniform_band_critical_value(
        model_one_data, candidate_fits, grid, 0.1, 50, seed=4, threads=4
    )
    assert serial.c_hat == parallel.c_hat
    assert serial.method is CriticalValueMethod.WEIGHTED_BOOTSTRAP


def test_bootstrap_supremum_grows_with_candidates(model_one_data, candidate_fits):
    """Replications share their weights, so the supremum over more specifications and
    more grid points can only be larger."""
    grid = default_grid((0.05, 0.95), 19)
    subset = {6: candidate_fits[6]}
    small = uniform_band_critical_value(model_one_data, subset, grid[::2], 0.1, 60, 2)
    large = uniform_band_critical_value(
        model_one_data, candidate_fits, grid, 0.1, 60, 2
    )
    assert large.c_hat >= small.c_hat
    pointwise = pointwise_critical_value(
        correlation_at(candidate_fits, 0.5), 0.1, 5_000
    )
    assert large.c_hat > normal_critical_value(0.1)
    assert pointwise.c_hat > normal_critical_value(0.1)


def test_band_geometry(candidate_fits):
    grid = default_grid((0.05, 0.95), 91)
    assert_allclose(np.diff(grid), 0.01)
    band = make_band(candidate_fits[8], grid, 2.5)
    estimates, ses = evaluate(candidate_fits[8], grid)
    assert_allclose(band.center, estimates)
    assert_allclose(band.upper - band.lower, 5.0 * ses)
    assert_allclose(band.average_width, np.mean(5.0 * ses))
    assert band.contains(estimates)
    assert not band.contains(band.upper + 1e-6)
    frame = band.to_frame()
    assert list(frame.columns) == ["x", "center", "lower", "upper"]
    assert len(frame) == 91


def test_band_at_single_point_is_interval(candidate_fits):
    z = normal_critical_value(0.05)
    band = make_band(candidate_fits[6], [0.5], z)
    estimate, se = evaluate(candidate_fits[6], [0.5])
    interval = standard_ci(estimate[0], se[0], 0.05)
    assert_allclose([band.lower[0], band.upper[0]], [interval.lower, interval.upper])


def test_derivative_band(model_one_data, candidate_fits):
    grid = default_grid((0.1, 0.9), 9)
    result = uniform_band_critical_value(
        model_one_data, candidate_fits, grid, 0.1, 30, functional=Functional.DERIVATIVE
    )
    band = make_band(candidate_fits[6], grid, result.c_hat, Functional.DERIVATIVE)
    assert band.functional is Functional.DERIVATIVE
    assert np.all(band.half_width > 0)


def test_band_rejects_unsorted_grid(candidate_fits):
    with pytest.raises(InputError):
        make_band(candidate_fits[6], [0.5, 0.4], 2.0)
    with pytest.raises(InputError):
        make_band(candidate_fits[6], [0.5], 0.0)


def test_weighted_fit_uses_exponential_weights(model_one_data, spline_template):
    weights = BootstrapWeights.draw(5, 0, model_one_data.n)
    spec = spline_template.with_k(6)
    weighted = weighted_fit(model_one_data, spec, weights)
    sqrt_e = np.sqrt(weights.e)
    design = weighted.design * sqrt_e[:, None]
    expected, *_ = np.linalg.lstsq(design, model_one_data.y * sqrt_e, rcond=None)
    assert_allclose(weighted.beta_hat, expected, rtol=1e-8)
    assert_allclose(weighted.residuals, model_one_data.y - weighted.fitted)
    assert not np.allclose(weighted.beta_hat, fit(model_one_data, spec).beta_hat)


def test_failed_bootstrap_refit_names_k_once(
    model_one_data, candidate_fits, monkeypatch
):
    def singular(design, y, k):
        raise SingularDesignError("Design matrix is singular", k)

    monkeypatch.setattr(suptstat, "_solve_least_squares", singular)
    with pytest.raises(BootstrapReplicationError) as error:
        uniform_band_critical_value(model_one_data, candidate_fits, [0.5], 0.1, 20, 1)
    message = str(error.value)
    assert message.count("(K=") == 1
    assert "bootstrap replication 0" in message
    assert error.value.k == 6


def test_bootstrap_matches_normal_quantile_for_one_specification(spline_template):
    data, _ = dgp_sample(1, 500, seed=21)
    fit_k = fit(data, spline_template.with_k(6))
    result = uniform_band_critical_value(data, {6: fit_k}, [0.5], 0.05, 2000, seed=8)
    assert 1.85 <= result.c_hat <= 2.10
