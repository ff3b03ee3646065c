from __future__ import annotations

import numpy as np
import pytest

import nhslab as nl
from nhslab import lab, spaces


@pytest.fixture(scope="session")
def two_point():
    """Canonical two-atom fixture with its dominating function 2*max(r, 1)."""
    return lab.two_point_space(), lab.two_point_lambda()


@pytest.fixture(scope="session")
def small_space():
    """Irregular 8-point cloud with non-uniform weights and a fitted power
    dominating function."""
    rng = np.random.default_rng(3)
    space = nl.build_space(points=rng.uniform(0.0, 1.0, (8, 1)),
                           weights=rng.uniform(0.5, 2.0, 8))
    lam = nl.fit_power_lambda(space)
    return space, lam


@pytest.fixture(scope="session")
def grid16():
    space = lab.generate_space({"kind": "grid", "d": 1, "n": 16})
    lam = nl.fit_power_lambda(space)
    return space, lam


@pytest.fixture(scope="session")
def grid64():
    space = lab.generate_space({"kind": "grid", "d": 1, "n": 64})
    lam = nl.fit_power_lambda(space)
    return space, lam


@pytest.fixture(scope="session")
def psi_const():
    return spaces.constant_psi()
