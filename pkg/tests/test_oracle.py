"""Dense transfer-matrix oracle: R-matrix identities, monodromy, thermal ED."""

import cmath

import numpy as np
import pytest

from xxzcorr import oracle
from xxzcorr.errors import CapabilityError
from xxzcorr.oracle import (ID2, SIGMA_M, SIGMA_P, SIGMA_X, SIGMA_Y, SIGMA_Z,
                            build_R, kron_sites)
from xxzcorr.params import MODE_FINITE, MODE_TEMPERATURE, ModelParams

GAMMA = 0.6
ETA = 1j * GAMMA


def test_r_at_zero_is_permutation():
    R = build_R(0.0, GAMMA)
    P = np.zeros((4, 4))
    for a in range(2):
        for b in range(2):
            P[b * 2 + a, a * 2 + b] = 1.0
    assert np.allclose(R, P)


def test_r_spin_reversal_invariance():
    R = build_R(0.37 + 0.11j, GAMMA)
    xx = np.kron(SIGMA_X, SIGMA_X)
    assert np.allclose(xx @ R @ xx, R)


def test_r_crossing_symmetry():
    # sigma^y_2 R_{a2}(l - eta) sigma^y_2 = b(l - eta) R^{t1}_{2a}(-l)
    lam = 0.23 - 0.05j
    y2 = np.kron(ID2, SIGMA_Y)
    lhs = y2 @ build_R(lam - ETA, GAMMA) @ y2
    # R_{2a}(-l): swap the tensor factors, then transpose in the first (=2) space
    swap = np.zeros((4, 4))
    for a in range(2):
        for b in range(2):
            swap[b * 2 + a, a * 2 + b] = 1.0
    R2a = swap @ build_R(-lam, GAMMA) @ swap
    R2a_t1 = R2a.reshape(2, 2, 2, 2).transpose(2, 1, 0, 3).reshape(4, 4)
    rhs = oracle.bfunc(lam - ETA, GAMMA) * R2a_t1
    assert np.allclose(lhs, rhs, atol=1e-13)


@pytest.fixture(scope="module")
def params4():
    return ModelParams(gamma=GAMMA, J=1.0, mode=MODE_FINITE, N=4,
                       kappa=0.1, alpha=0.1, nu=[0.05 + 0.03j, -0.12 - 0.02j])


def test_transfer_conserves_total_spin(params4):
    par2 = params4.with_(N=2)
    t = oracle.transfer_matrix(par2, cmath.exp(ETA / 2), 0.1)
    sz_tot = kron_sites([SIGMA_Z, ID2]) + kron_sites([ID2, SIGMA_Z])
    assert np.max(np.abs(t @ sz_tot - sz_tot @ t)) < 1e-13


def test_transfer_matrices_commute(params4):
    t1 = oracle.transfer_matrix(params4, cmath.exp(0.3 + ETA / 2), 0.1)
    t2 = oracle.transfer_matrix(params4, cmath.exp(-0.45 + ETA / 2), 0.1)
    assert np.max(np.abs(t1 @ t2 - t2 @ t1)) < 1e-10


def test_qtm_equivalence():
    """Staggered transfer matrix vs direct alternating-transposed product."""
    par = ModelParams(gamma=GAMMA, J=1.0, mode=MODE_TEMPERATURE, N=4,
                      T=2.0, h=0.3, alpha=0.1)
    zeta = cmath.exp(0.21 - 0.04j)
    lam = cmath.log(zeta)
    direct = oracle.build_qtm_monodromy(par, zeta, par.kappa)
    plain = oracle.build_monodromy(par, zeta, par.kappa)
    betas = par.betas()
    pref = 1.0
    for j in range(par.N // 2):
        pref = pref / oracle.bfunc(lam - betas[2 * j], GAMMA)
    y_ops = [SIGMA_Y if j % 2 == 1 else ID2 for j in range(1, par.N + 1)]
    Y = kron_sites(y_ops)
    for key in direct.blocks:
        lhs = direct.blocks[key]
        rhs = Y @ plain.blocks[key] @ Y * pref
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_hamiltonian_log_derivative(params4):
    H_explicit = oracle.build_hamiltonian(params4)
    H_transfer = oracle.hamiltonian_from_transfer(params4, step=1e-5)
    assert np.max(np.abs(H_explicit - H_transfer)) < 1e-6


def test_eigenvalue_twist_symmetry(params4):
    st_p = oracle.OracleState(params4)
    st_m = oracle.OracleState(params4.with_(kappa=-0.1, alpha=-0.1))
    for lam in (0.0, 0.4 - 0.05j):
        z = cmath.exp(lam + ETA / 2)
        a = st_p.eigenvalue(z)
        b = st_m.eigenvalue(z)
        assert abs(a - b) / abs(a) < 1e-10


def test_spin_reversal_maps_states(params4):
    st_p = oracle.OracleState(params4)
    st_m = oracle.OracleState(params4.with_(kappa=-0.1, alpha=-0.1))
    J_op = kron_sites([SIGMA_X] * params4.N)
    v = J_op @ st_p.pair_base.right
    w = st_m.pair_base.right
    overlap = abs(np.vdot(v, w)) / (np.linalg.norm(v) * np.linalg.norm(w))
    assert abs(overlap - 1.0) < 1e-10


def test_density_reduction_and_transposition(params4, ):
    st = oracle.OracleState(params4)
    nus = params4.nu
    D2 = st.density_matrix()
    # plain reduction over the last site
    D1 = st.density_matrix(nu=nus[:1])
    red = D2.reshape(2, 2, 2, 2)
    red = np.einsum("ajak->jk", red.reshape(2, 2, 2, 2))
    assert np.max(np.abs(red - D1)) < 1e-12
    # weighted reduction over site 1 produces rho(xi_1)
    qa = params4.q ** params4.alpha
    w = np.array([qa, 1.0 / qa])
    e = D2.reshape(2, 2, 2, 2)
    red1 = np.einsum("asbs,s->ab", e, w)
    D1b = st.density_matrix(nu=nus[1:])
    rho1 = st.rho(cmath.exp(nus[0]))
    assert np.max(np.abs(red1 - rho1 * D1b)) < 1e-12


def test_density_spin_reversal_covariance(params4):
    st_p = oracle.OracleState(params4)
    st_m = oracle.OracleState(params4.with_(kappa=-0.1, alpha=-0.1))
    D_p = st_p.density_matrix()
    D_m = st_m.density_matrix()
    flip = kron_sites([SIGMA_X, SIGMA_X])
    assert np.max(np.abs(D_m - flip @ D_p @ flip)) < 1e-10


def test_sector_structure(params4):
    st = oracle.OracleState(params4)
    D = st.density_matrix()
    for row in range(4):
        for col in range(4):
            if bin(row).count("1") != bin(col).count("1"):
                assert D[row, col] == 0.0


def test_thermal_ed_infinite_temperature_limit():
    out = oracle.thermal_ed(8, 1e6, 0.5, GAMMA, 1.0)
    # pure paramagnet: m = (1/2) tanh(h / (2T)), neighbours decorrelate
    m_exact = 0.5 * np.tanh(0.5 / 2e6)
    assert abs(out["m"] - m_exact) < 1e-9
    # connected part decays like J/T
    assert abs(out["szsz"] - (2 * out["m"]) ** 2) < 5.0 / 1e6


def test_thermal_ed_zero_field_symmetry():
    out = oracle.thermal_ed(8, 2.5, 0.0, GAMMA, 1.0)
    assert abs(out["m"]) < 1e-12


def test_thermal_ed_finite_size_control():
    a = oracle.thermal_ed(10, 5.0, 0.0, GAMMA, 1.0)
    b = oracle.thermal_ed(12, 5.0, 0.0, GAMMA, 1.0)
    assert abs(a["szsz"] - b["szsz"]) < 1e-4


def test_size_limits():
    par = ModelParams(gamma=GAMMA, mode=MODE_FINITE, N=12, kappa=0.0, alpha=0.1)
    with pytest.raises(CapabilityError):
        oracle.build_monodromy(par, 1.0, 0.0)
    with pytest.raises(CapabilityError):
        oracle.thermal_ed(14, 1.0, 0.0, GAMMA)
