import json

import numpy as np
import pytest

from cgad.series import MultivariateSeries


@pytest.fixture
def copy_pair():
    """x1[t] = 0.9 * x0[t-1] + small noise, x0 i.i.d. Gaussian."""
    rng = np.random.default_rng(7)
    t = 3000
    x0 = rng.normal(size=t)
    x1 = np.zeros(t)
    x1[1:] = 0.9 * x0[:-1] + 0.1 * rng.normal(size=t - 1)
    return MultivariateSeries(np.vstack([x0, x1]), ("x0", "x1"))


@pytest.fixture
def write_config(tmp_path):
    """Write a pipeline config JSON into tmp_path and return its path."""
    def _write(raw: dict, name: str = "config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(raw), encoding="utf-8")
        return path
    return _write
