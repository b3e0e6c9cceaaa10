"""Quadrature contour: residue tests, symmetry, classification."""

import numpy as np
import pytest

from xxzcorr.contour import (REGION_ABOVE, REGION_BELOW, REGION_EDGE,
                             REGION_INSIDE, build_contour, classify, integrate)
from xxzcorr.errors import ConfigurationError, UsageError

GAMMA = 0.6
ETA = 1j * GAMMA


@pytest.fixture(scope="module")
def grid():
    return build_contour(GAMMA, points_per_side=384)


def test_constant_integrates_to_zero(grid):
    assert abs(integrate(grid, np.ones(grid.size))) < 1e-13


def test_simple_pole_residue(grid):
    val = integrate(grid, 1.0 / np.tanh(grid.nodes))
    assert abs(val - 1.0) < grid.advertised_tol


def test_pole_outside_strip_gives_zero(grid):
    g = build_contour(GAMMA, half_width=0.25 * GAMMA, points_per_side=384)
    val = integrate(g, 1.0 / np.tanh(g.nodes - ETA))
    assert abs(val) < 1e-12


def test_kernel_both_poles_outside(grid):
    k = 1.0 / np.tanh(grid.nodes - ETA) - 1.0 / np.tanh(grid.nodes + ETA)
    assert abs(integrate(grid, k)) < 1e-13


def test_residue_matches_classification(grid):
    for point in [0.1, 1.3 - 0.3j * grid.half_width, 0.45j * grid.half_width,
                  0.3 + 1j * GAMMA / 2.2, -1.0 + 0.75j * GAMMA]:
        val = integrate(grid, 1.0 / np.tanh(grid.nodes - point))
        inside = classify(grid, point) == REGION_INSIDE
        assert abs(val - (1.0 if inside else 0.0)) < 50 * grid.advertised_tol


def test_doubling_refines(grid):
    fine = build_contour(GAMMA, points_per_side=768)
    assert fine.advertised_tol < grid.advertised_tol
    x0 = 0.96 + 0.5j * grid.half_width
    coarse_err = abs(integrate(grid, 1.0 / np.tanh(grid.nodes - x0)) - 1.0)
    fine_err = abs(integrate(fine, 1.0 / np.tanh(fine.nodes - x0)) - 1.0)
    assert fine_err < coarse_err
    assert fine_err < 10 * fine.advertised_tol


def test_conjugation_symmetry(grid):
    mi = grid.mirror_index()
    assert np.allclose(np.conj(grid.nodes), grid.nodes[mi], atol=1e-12)
    assert np.allclose(-np.conj(grid.weights), grid.weights[mi], atol=1e-12)


def test_classify_regions(grid):
    assert classify(grid, 0.0) == REGION_INSIDE
    assert classify(grid, 0.5j * GAMMA) == REGION_ABOVE
    assert classify(grid, -0.5j * GAMMA) == REGION_BELOW
    assert classify(grid, grid.nodes[7]) == REGION_EDGE
    assert classify(grid, grid.cutoff + 1.0) in (REGION_ABOVE, REGION_BELOW)


def test_parameter_domain_errors():
    with pytest.raises(ConfigurationError, match="gamma"):
        build_contour(4.0)
    with pytest.raises(ConfigurationError, match="half_width"):
        build_contour(GAMMA, half_width=0.6 * GAMMA)
    with pytest.raises(ConfigurationError, match="cutoff"):
        build_contour(GAMMA, cutoff=3.0)
    with pytest.raises(ConfigurationError, match="points_per_side"):
        build_contour(GAMMA, points_per_side=8)


def test_integrate_length_mismatch(grid):
    with pytest.raises(UsageError):
        integrate(grid, np.ones(grid.size - 1))
