"""Shared pipelines for the test suite.

Session-scoped fixtures hold the solved auxiliary functions and linear
solves at the standard desk-scale points so individual tests stay cheap:

* ``fl``     -- finite length, N=4, gamma=0.6, kappa=0.1, alpha=0.1
* ``tmode``  -- temperature, staggered N=8, T=2J, h=0.3J, same alpha
* ``fast``   -- a low-resolution finite-length pipeline for API tests
"""

import sys
from types import SimpleNamespace

import numpy as np
import pytest

sys.path.insert(0, "src")

from xxzcorr import oracle, special
from xxzcorr.contour import build_contour
from xxzcorr.params import MODE_FINITE, MODE_TEMPERATURE, ModelParams

GAMMA = 0.6
KAPPA = 0.1
ALPHA = 0.1
NU1 = 0.05 + 0.03j
NU2 = -0.12 - 0.02j


@pytest.fixture(scope="session")
def fl():
    params = ModelParams(gamma=GAMMA, J=1.0, mode=MODE_FINITE, N=4,
                         kappa=KAPPA, alpha=ALPHA, nu=[NU1, NU2])
    grid = build_contour(GAMMA)
    rf = special.build_rho_field(params, grid)
    return SimpleNamespace(params=params, grid=grid, rf=rf)


@pytest.fixture(scope="session")
def fl_gts(fl):
    return {repr(complex(nu)): special.solve_G(fl.params, fl.rf, fl.grid, nu)
            for nu in fl.params.nu}


@pytest.fixture(scope="session")
def fl_oracle(fl):
    return oracle.OracleState(fl.params)


@pytest.fixture(scope="session")
def tmode():
    params = ModelParams(gamma=GAMMA, J=1.0, mode=MODE_TEMPERATURE, N=8,
                         T=2.0, h=0.3, alpha=ALPHA, nu=[NU1, NU2])
    grid = build_contour(GAMMA)
    rf = special.build_rho_field(params, grid)
    return SimpleNamespace(params=params, grid=grid, rf=rf)


@pytest.fixture(scope="session")
def tmode_oracle(tmode):
    return oracle.OracleState(tmode.params)


@pytest.fixture(scope="session")
def fast():
    params = ModelParams(gamma=GAMMA, J=1.0, mode=MODE_FINITE, N=4,
                         kappa=KAPPA, alpha=ALPHA, nu=[NU1, NU2])
    grid = build_contour(GAMMA, points_per_side=384)
    rf = special.build_rho_field(params, grid)
    return SimpleNamespace(params=params, grid=grid, rf=rf)
