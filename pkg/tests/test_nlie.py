"""Auxiliary-function solver: driving terms, fixed points, evaluation."""

import cmath

import numpy as np
import pytest

from xxzcorr import nlie, oracle, special
from xxzcorr.contour import TWO_PI_I, build_contour
from xxzcorr.errors import (ConfigurationError, NonConvergenceError,
                            SingularityError, UsageError)
from xxzcorr.params import MODE_FINITE, MODE_TEMPERATURE, ModelParams

GAMMA = 0.6
ETA = 1j * GAMMA


def test_driving_trotter_vanishes_at_infinity():
    par = ModelParams(gamma=GAMMA, mode=MODE_TEMPERATURE, T=2.0, h=0.3,
                      trotter_limit=True)
    for x in (18.0, -18.0):
        lam = x + 0.1j
        val = nlie.driving_term(par, par.kappa, lam)
        assert abs(val - (-2.0 * par.kappa * ETA)) < 1e-14


def test_driving_homogeneous_matches_inhomogeneous():
    par_h = ModelParams(gamma=GAMMA, mode=MODE_FINITE, N=4, kappa=0.0)
    par_i = par_h.with_(beta_inhom=[ETA / 2.0] * 4)
    lam = 0.25j * GAMMA
    a = nlie.driving_term(par_h, 0.0, lam)
    b = nlie.driving_term(par_i, 0.0, lam)
    assert abs(a - b) < 1e-13
    # closed form: (N - 2k) eta + N log[sh(l - eta/2)/sh(l + eta/2)]
    closed = 4 * ETA + 4 * (np.log(np.sinh(lam - ETA / 2))
                            - np.log(np.sinh(lam + ETA / 2)))
    assert abs(a - closed) < 1e-13


def test_driving_trotter_is_staggered_limit():
    """Finite-N staggered driving approaches the limit like 1/N^2."""
    base = ModelParams(gamma=GAMMA, mode=MODE_TEMPERATURE, T=2.0, h=0.3)
    lam = 0.4 - 0.2j * GAMMA
    lim = nlie.driving_term(base.with_(trotter_limit=True), base.kappa, lam)
    d64 = abs(nlie.driving_term(base.with_(N=64), base.kappa, lam) - lim)
    d128 = abs(nlie.driving_term(base.with_(N=128), base.kappa, lam) - lim)
    assert 3.5 < d64 / d128 < 4.5


def test_driving_branch_point_error():
    par = ModelParams(gamma=GAMMA, mode=MODE_FINITE, N=4, kappa=0.1)
    with pytest.raises(SingularityError):
        nlie.driving_term(par, 0.1, ETA / 2.0)


def test_infinite_temperature_constant_solution():
    """At J/T -> 0 the kernel term vanishes and log a = -2 kappa eta."""
    par = ModelParams(gamma=GAMMA, J=1.0, mode=MODE_TEMPERATURE, T=1e9,
                      h=0.4, trotter_limit=True)
    grid = build_contour(GAMMA, points_per_side=384)
    sol = nlie.solve_aux(par, par.kappa, grid)
    target = -2.0 * par.kappa * ETA
    assert np.max(np.abs(sol.log_a_values - target)) < 1e-8
    assert abs(complex(nlie.eval_aux(sol, par, 0.123 + 0.05j)) - target) < 1e-8


def test_untwisted_solution_conjugation_symmetry():
    """kappa = 0: a at mirrored nodes is the complex conjugate."""
    par = ModelParams(gamma=GAMMA, mode=MODE_FINITE, N=4, kappa=0.0)
    grid = build_contour(GAMMA, points_per_side=384)
    sol = nlie.solve_aux(par, 0.0, grid)
    mi = grid.mirror_index()
    a_vals = np.exp(sol.log_a_values)
    assert np.max(np.abs(a_vals[mi] - np.conj(a_vals))
                  / (1.0 + np.abs(a_vals))) < 1e-9


def test_grid_doubling_stability(fast, fl):
    """Shared nodes of the two resolutions carry the same solution values."""
    coarse = fast.rf.aux_base
    fine = fl.rf.aux_base
    probes = np.array([0.3 + 0.05j, -1.2 - 0.08j, 2.4 + 0.02j])
    a_c = np.exp(nlie.eval_aux(coarse, fast.params, probes))
    a_f = np.exp(nlie.eval_aux(fine, fl.params, probes))
    assert np.max(np.abs(a_c - a_f)) < 1e-7


def test_resubstitution_residual_invariant(fl):
    sol = fl.rf.aux_base
    assert sol.residual < 1e-11
    rhs = nlie.eval_aux(sol, fl.params, sol.grid.nodes[100:110])
    assert np.max(np.abs(rhs - sol.log_a_values[100:110])) < 10 * sol.residual


def test_asymptotic_plateau(fl):
    """|log a + 2 kappa eta| decays (mod 2 pi i) toward the truncation."""
    sol = fl.rf.aux_base
    target = -2.0 * fl.params.kappa * ETA
    nodes = sol.grid.nodes
    vals = sol.log_a_values - target
    vals = vals - TWO_PI_I * np.round(vals.imag / (2 * np.pi))
    sel = (nodes.real > 10.0) & (np.abs(nodes.imag + sol.grid.half_width) < 1e-9)
    xs = nodes.real[sel]
    mags = np.abs(vals[sel])
    order = np.argsort(xs)
    assert mags[order][-1] < 1e-8
    assert np.all(np.diff(np.log(mags[order] + 1e-300)) < 0.2)


def test_solver_errors(fast):
    par = fast.params
    with pytest.raises(ConfigurationError):
        nlie.solve_aux(par, par.kappa, fast.grid, tol=-1.0)
    with pytest.raises(ConfigurationError):
        nlie.solve_aux(par, par.kappa, fast.grid, damping=1.5)
    with pytest.raises(NonConvergenceError) as err:
        nlie.solve_aux(par, par.kappa, fast.grid, max_iter=2)
    assert len(err.value.history) == 2


def test_eval_aux_outside_strip_rejected(fast):
    with pytest.raises(UsageError):
        nlie.eval_aux(fast.rf.aux_base, fast.params, 1j * (GAMMA - 0.01))


def test_bethe_roots_satisfy_root_condition(fl):
    roots = nlie.find_bethe_roots(fl.rf.aux_base)
    assert len(roots) == fl.params.N // 2
    for r in roots:
        a_val = cmath.exp(complex(nlie.eval_aux(fl.rf.aux_base, fl.params, r)))
        assert abs(a_val + 1.0) < 1e-9
    assert all(abs(r.imag) < 1e-6 for r in roots)


def test_aux_band_values_match_eigenvalue_ratio(fl, fl_oracle):
    """Continued a-values feed rho correctly in the outer bands."""
    for lam in (0.07 + 0.5j * GAMMA, -0.2 - 0.55j * GAMMA, 0.1 + 1.02j * GAMMA):
        r_num = fl.rf.rho_lambda(lam)
        r_or = fl_oracle.rho(cmath.exp(lam))
        assert abs(r_num - r_or) / abs(r_or) < 1e-8


def test_serialization_round_trip(fast):
    rec = fast.rf.aux_base.to_record()
    assert rec["schema"] == "aux-solution/1"
    assert len(rec["log_a"]) == fast.grid.size
    vals = np.array([complex(re, im) for re, im in rec["log_a"]])
    assert np.allclose(vals, fast.rf.aux_base.log_a_values)


def test_trotter_bracketing(tmode):
    """Finite-N solutions approach the Trotter limit at second order."""
    base = tmode.params
    grid = tmode.grid
    sol_inf = nlie.solve_aux(base.with_(trotter_limit=True),
                             base.kappa, grid)
    errs = {}
    for n in (8, 16, 32):
        sol_n = nlie.solve_aux(base.with_(N=n), base.kappa, grid)
        d = sol_n.log_a_values - sol_inf.log_a_values
        d = d - TWO_PI_I * np.round(d.imag / (2.0 * np.pi))
        errs[n] = np.max(np.abs(d))
    assert 3.3 < errs[8] / errs[16] < 4.7
    assert 3.3 < errs[16] / errs[32] < 4.7
