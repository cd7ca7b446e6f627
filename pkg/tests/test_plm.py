import numpy as np
import pytest
from numpy.testing import assert_allclose

from series_inference.basis import BasisSpec
from series_inference.basis import Family
from series_inference.basis import KnotRule
from series_inference.basis import build_basis
from series_inference.exceptions import AnnihilatorFloorError
from series_inference.exceptions import DataFormatError
from series_inference.exceptions import DegenerateVarianceError
from series_inference.exceptions import NumericalError
from series_inference.exceptions import SingularDesignError
from series_inference.plm import KappaMode
from series_inference.plm import plm_cross_corr
from series_inference.plm import plm_fit
from series_inference.plm import plm_robust_ci
from series_inference.plm import plm_variance
from series_inference.series_fit import Dataset


def _controls(data: Dataset, k: int):
    spec = BasisSpec(Family.SPLINE, k, (0.0, 1.0), spline_order=3)
    return build_basis(spec, data.x)


def _annihilator(controls: np.ndarray) -> np.ndarray:
    return np.eye(controls.shape[0]) - controls @ np.linalg.pinv(controls)


@pytest.mark.parametrize("k", [2, 5, 12])
def test_partialling_out_equals_joint_regression(plm_data, k):
    controls = _controls(plm_data, k)
    fit = plm_fit(plm_data, controls)
    joint = np.column_stack([plm_data.w, controls.values])
    coefficients, *_ = np.linalg.lstsq(joint, plm_data.y, rcond=None)
    assert_allclose(fit.theta_hat, coefficients[0], rtol=1e-8, atol=1e-10)
    assert fit.k == k
    assert_allclose(fit.eps_hat, plm_data.y - joint @ coefficients, atol=1e-8)


def test_annihilator_rows_match_dense_matrix(plm_data):
    fit = plm_fit(plm_data, _controls(plm_data, 4))
    dense = _annihilator(fit.controls)
    blocks = [block for _, block in fit.annihilator_rows(chunk=70)]
    assert_allclose(np.vstack(blocks), dense, atol=1e-10)
    assert_allclose(fit.m_diag, np.diag(dense), atol=1e-12)


def test_variance_modes_against_dense_oracle(plm_data):
    fit = plm_fit(plm_data, _controls(plm_data, 6))
    n = plm_data.n
    dense = _annihilator(fit.controls)
    gamma = fit.v_hat @ fit.v_hat / n
    hc0 = np.mean(fit.v_hat**2 * fit.eps_hat**2) / gamma**2
    cross = (fit.v_hat**2) @ (dense**2) @ (fit.eps_hat**2) / n / gamma**2
    assert_allclose(plm_variance(fit, KappaMode.HC0).v_hat_n, hc0, rtol=1e-10)
    assert_allclose(
        plm_variance(fit, KappaMode.CROSS_TERM_FULL).v_hat_n, cross, rtol=1e-10
    )
    assert_allclose(
        plm_variance(fit, KappaMode.HC1).v_hat_n, hc0 * n / (n - fit.rank - 1)
    )
    assert_allclose(plm_variance(fit).se, np.sqrt(hc0 / n))


def test_cross_term_on_three_observations():
    # one constant control: M = I - 1/3, so M_ii^2 = 4/9 and M_ij^2 = 1/9
    w = np.array([1.0, -2.0, 1.0])
    e = np.array([0.5, 0.0, -0.5])
    data = Dataset(y=2.0 * w + e, x=np.array([0.1, 0.5, 0.9]), w=w)
    fit = plm_fit(data, np.ones((3, 1)), k=0)
    assert_allclose(fit.theta_hat, 2.0)
    assert_allclose(fit.eps_hat, e, atol=1e-12)
    # (4/9 * 0.5 + 1/9 * 2.5) / 3 and mean(v^2 e^2), both over Gamma^2 = 4
    cross = plm_variance(fit, KappaMode.CROSS_TERM_FULL)
    assert_allclose(cross.omega_hat, 1 / 6)
    assert_allclose(cross.v_hat_n, 1 / 24)
    assert_allclose(plm_variance(fit, KappaMode.HC0).omega_hat, 1 / 6)
    assert cross.omega_hat >= 0


def test_cross_corr_has_unit_diagonal(plm_data):
    fits = [plm_fit(plm_data, _controls(plm_data, k)) for k in (2, 4, 8, 16)]
    for mode in (KappaMode.CROSS_TERM_FULL, KappaMode.HC0):
        sigma = plm_cross_corr(fits, mode)
        sigma.validate()
        assert sigma.k_values == (2, 4, 8, 16)
        assert_allclose(np.diag(sigma.sigma_hat), 1.0)
    variances = plm_cross_corr(fits).point_variances
    expected = [plm_variance(f, KappaMode.CROSS_TERM_FULL).v_hat_n for f in fits]
    assert_allclose(variances, expected, rtol=1e-10)


def test_robust_intervals_nest_standard_ones(plm_data):
    fits = [plm_fit(plm_data, _controls(plm_data, k)) for k in (3, 6, 12)]
    inference = plm_robust_ci(fits, 0.05, draws=5_000, seed=1)
    assert inference.critical_value.c_hat >= 1.96 - 3 * inference.critical_value.mc_se
    for fit in fits:
        assert inference.robust[fit.k].covers(inference.standard[fit.k])
    report = inference.to_dict()
    assert [row["K"] for row in report["specifications"]] == [3, 6, 12]
    assert report["se_mode"] == "hc0"
    assert report["c_hat"] == inference.critical_value.c_hat


@pytest.mark.parametrize("c", [2.5, -0.4])
def test_scale_equivariance(plm_data, c):
    k_values = (3, 6, 12)
    base = [plm_fit(plm_data, _controls(plm_data, k)) for k in k_values]
    scaled_w = Dataset(y=plm_data.y, x=plm_data.x, w=c * plm_data.w)
    scaled_y = Dataset(y=c * plm_data.y, x=plm_data.x, w=plm_data.w)
    for k, fit in zip(k_values, base):
        by_w = plm_fit(scaled_w, _controls(scaled_w, k))
        by_y = plm_fit(scaled_y, _controls(scaled_y, k))
        assert_allclose(by_w.theta_hat, fit.theta_hat / c, rtol=1e-8)
        assert_allclose(by_y.theta_hat, fit.theta_hat * c, rtol=1e-8)
        for mode in KappaMode:
            se = plm_variance(fit, mode).se
            assert_allclose(plm_variance(by_w, mode).se, se / abs(c), rtol=1e-8)
            assert_allclose(plm_variance(by_y, mode).se, se * abs(c), rtol=1e-8)
    fits_y = [plm_fit(scaled_y, _controls(scaled_y, k)) for k in k_values]
    for mode in (KappaMode.CROSS_TERM_FULL, KappaMode.HC0):
        assert_allclose(
            plm_cross_corr(fits_y, mode).sigma_hat,
            plm_cross_corr(base, mode).sigma_hat,
            atol=1e-10,
        )


def test_missing_w(plm_data):
    data = Dataset(y=plm_data.y, x=plm_data.x)
    with pytest.raises(DataFormatError):
        plm_fit(data, _controls(data, 3))


def test_singular_controls(plm_data):
    controls = _controls(plm_data, 3).values
    with pytest.raises(SingularDesignError):
        plm_fit(plm_data, np.column_stack([controls, controls[:, 0]]), k=3)


def test_annihilator_floor(plm_data):
    # an indicator of a single observation drives its diagonal entry of M to zero
    controls = np.column_stack([np.ones(plm_data.n), np.eye(plm_data.n)[:, 7]])
    with pytest.raises(AnnihilatorFloorError) as error:
        plm_fit(plm_data, controls, k=1)
    assert error.value.index == 7
    assert error.value.k == 1


def test_w_explained_by_controls(plm_data):
    data = Dataset(y=plm_data.y, x=plm_data.x, w=2.0 * plm_data.x)
    spec = BasisSpec(Family.POLYNOMIAL, 2, (0.0, 1.0))
    with pytest.raises(DegenerateVarianceError):
        plm_fit(data, build_basis(spec, data.x))


def _quantile_controls(data: Dataset, k: int):
    spec = BasisSpec(Family.SPLINE, k, (0.0, 1.0), knot_rule=KnotRule.QUANTILE)
    return build_basis(spec.resolve(data.x), data.x)


def _coverage(n_reps, n, k_values, mode, linear_truth=False, seed=0):
    hits = {k: 0 for k in k_values}
    standard_hits = {k: 0 for k in k_values}
    joint = 0
    completed = 0
    for rep in range(n_reps):
        rng = np.random.default_rng([seed, rep])
        x = rng.uniform(0.0, 1.0, n)
        w = np.sin(2 * np.pi * x) + rng.standard_normal(n)
        if linear_truth:
            y = 1.0 * w + x + rng.standard_normal(n)
            controls = _quantile_controls
        else:
            y = 1.0 * w + np.cos(2 * np.pi * x) + (0.5 + x) * rng.standard_normal(n)
            controls = _controls
        data = Dataset(y=y, x=x, w=w)
        try:
            fits = [plm_fit(data, controls(data, k)) for k in k_values]
        except NumericalError:
            # empty or nearly empty intervals between knots
            continue
        completed += 1
        inference = plm_robust_ci(fits, 0.05, draws=2_000, seed=rep, se_mode=mode)
        covered = [inference.robust[k].contains(1.0) for k in k_values]
        for k, hit in zip(k_values, covered):
            hits[k] += hit
            standard_hits[k] += inference.standard[k].contains(1.0)
        joint += all(covered)
    assert completed >= 0.9 * n_reps
    return (
        {k: v / completed for k, v in hits.items()},
        {k: v / completed for k, v in standard_hits.items()},
        joint / completed,
    )


@pytest.mark.slow
def test_robust_coverage_small_k():
    per_k, _, joint = _coverage(300, 300, (2, 4, 8), KappaMode.HC0)
    assert all(rate >= 0.92 for rate in per_k.values())
    assert joint >= 0.92


@pytest.fixture(scope="module")
def many_controls_study():
    return _coverage(500, 300, (10, 30, 60), KappaMode.HC0, linear_truth=True)


@pytest.mark.slow
def test_joint_robust_coverage_many_controls(many_controls_study):
    _, _, joint = many_controls_study
    assert joint >= 0.93


@pytest.mark.slow
@pytest.mark.parametrize(
    "k",
    [
        10,
        30,
        pytest.param(
            60,
            marks=pytest.mark.xfail(
                reason="HC0 standard coverage measured 0.91 with 60 controls at n=300",
                strict=False,
            ),
        ),
    ],
)
def test_standard_coverage_many_controls(many_controls_study, k):
    _, standard, _ = many_controls_study
    assert standard[k] >= 0.93
