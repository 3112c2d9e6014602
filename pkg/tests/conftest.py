"""Shared fixtures: built-in specs and the linear reference interconnection."""

import numpy as np
import pytest

from regiongain.specio import builtin_spec, parse_spec


LINEAR_DOC = {
    "dimensions": {"n": 1, "m": 1},
    "fields": {"f": ["-x1 + 0.4*z1"], "g": ["-z1 + 0.4*x1"]},
    "storage": {
        "V": "abs(x1)",
        "W": "abs(z1)",
        "lambda_x": "0.2*abs(x1)",
        "lambda_z": "0.2*abs(z1)",
    },
    "gains": {"gamma": {"expr": "0.5*s"}, "delta": {"expr": "0.5*s"}},
    "thresholds": {
        "local": {"M_hi": 4.0, "N_hi": 4.0},
        "global": {"M_lo": 0.5, "N_lo": 0.5},
    },
    "sampling": {"seed": 7, "n_samples": 500,
                 "box": [[-10.0, 10.0], [-10.0, 10.0]]},
    "simulation": {"T": 30.0, "dt": 1e-3, "method": "rk45"},
}


@pytest.fixture(scope="session")
def planar_spec():
    return parse_spec(builtin_spec("planar-example"))


@pytest.fixture(scope="session")
def paper_spec():
    return parse_spec(builtin_spec("planar-example-paper"))


@pytest.fixture(scope="session")
def bilimit_spec():
    return parse_spec(builtin_spec("bilimit-class"))


@pytest.fixture(scope="session")
def linear_spec():
    import copy
    return parse_spec(copy.deepcopy(LINEAR_DOC))


class NormU:
    """Euclidean norm as a merged-function stand-in for region tests."""

    def eval_many(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return np.linalg.norm(Y, axis=1)

    def on_state(self, y):
        return float(np.linalg.norm(np.asarray(y, dtype=float)))


@pytest.fixture
def norm_u():
    return NormU()
