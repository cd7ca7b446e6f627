from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from series_inference.basis import BasisSpec
from series_inference.basis import Family
from series_inference.series_fit import Dataset
from series_inference.sim_harness import dgp_sample


@pytest.fixture
def spline_template() -> BasisSpec:
    return BasisSpec(Family.SPLINE, 0, (0.0, 1.0), spline_order=3)


@pytest.fixture
def model_one_data() -> Dataset:
    data, _ = dgp_sample(1, 200, seed=3)
    return data


@pytest.fixture
def small_data() -> Dataset:
    rng = np.random.default_rng(11)
    x = np.sort(rng.uniform(0.0, 1.0, 30))
    y = np.sin(3 * x) + 0.3 * rng.standard_normal(30)
    return Dataset(y=y, x=x)


@pytest.fixture
def plm_data() -> Dataset:
    """``y = 0.5 w + cos(2 pi x) + e`` with ``w`` correlated with ``x``."""
    rng = np.random.default_rng(5)
    n = 300
    x = rng.uniform(0.0, 1.0, n)
    w = np.sin(2 * np.pi * x) + rng.standard_normal(n)
    y = 0.5 * w + np.cos(2 * np.pi * x) + 0.5 * rng.standard_normal(n)
    return Dataset(y=y, x=x, w=w)


@pytest.fixture
def sample_csv(tmp_path: Path, model_one_data: Dataset) -> Path:
    path = tmp_path / "data.csv"
    pd.DataFrame({"y": model_one_data.y, "x": model_one_data.x}).to_csv(
        path, index=False
    )
    return path


@pytest.fixture
def plm_csv(tmp_path: Path) -> Path:
    rng = np.random.default_rng(17)
    n = 1000
    x = rng.uniform(0.0, 1.0, n)
    w = x + rng.standard_normal(n)
    y = 2.0 * w + np.sin(4 * x) + 0.01 * rng.standard_normal(n)
    path = tmp_path / "plm.csv"
    pd.DataFrame({"y": y, "x": x, "w": w}).to_csv(path, index=False)
    return path
