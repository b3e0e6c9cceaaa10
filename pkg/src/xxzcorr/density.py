"""Twisted density matrices: nested quadrature, factorized forms, limits.

Three evaluation routes live here:

* multint_density -- the m-fold contour quadrature with the two weighted
  measures dm and a(mu) dm, the sign-pattern sinh products, the
  determinant of -G(lambda_j, nu_k) and the sinh denominator;
* factorized_I / density_m2 -- closed two-site forms built from Psi, rho
  and elementary q-difference data;
* physical_limit -- Richardson extrapolation alpha -> 0 (the vertical
  parameters are driven to their physical point by the caller).

Index convention (bit-exact contract with the oracle): a sign pattern
(eps_1, ..., eps_m) maps to the integer sum_j bit_j 2^(j-1) with bit_j = 0
for '+' and 1 for '-'; rows carry the outgoing pattern, columns the
incoming one.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .errors import (CapabilityError, ConfigurationError, SingularityError,
                     UsageError)
from .oracle import ID2, SIGMA_M, SIGMA_P, SIGMA_Z, kron_sites
from .params import ModelParams
from .special import RhoField, continue_Psi, solve_G

PROVENANCE_MULTINT = "multint"
PROVENANCE_FACTORIZED = "factorized"
PROVENANCE_ORACLE = "oracle"
PROVENANCE_EXTRAPOLATED = "extrapolated"


def pattern_index(eps) -> int:
    """Little-endian index of a sign pattern; site 1 is the lowest bit."""
    idx = 0
    for j, e in enumerate(eps):
        if e not in (1, -1):
            raise UsageError(f"sign patterns use +1/-1, got {e}")
        if e == -1:
            idx |= 1 << j
    return idx


def index_pattern(idx: int, m: int):
    return [1 - 2 * ((idx >> j) & 1) for j in range(m)]


@dataclass
class DensityMatrix:
    """2^m x 2^m complex matrix with its evaluation metadata."""

    m: int
    entries: np.ndarray
    nu: list
    kappa: complex
    alpha: complex
    provenance: str
    extrapolation_spread: float = 0.0

    @property
    def xi(self) -> list:
        return [cmath.exp(complex(v)) for v in self.nu]

    def element(self, eps_out, eps_in) -> complex:
        return self.entries[pattern_index(eps_out), pattern_index(eps_in)]

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def expectation(self, operator: np.ndarray) -> complex:
        return complex(np.trace(self.entries @ operator))

    def reduce_last(self) -> "DensityMatrix":
        """Plain partial trace over the last site."""
        d = 1 << (self.m - 1)
        e = self.entries.reshape(2, d, 2, d)
        return DensityMatrix(m=self.m - 1, entries=np.einsum("ajak->jk", e),
                             nu=self.nu[:-1], kappa=self.kappa,
                             alpha=self.alpha, provenance=self.provenance)

    def reduce_first_weighted(self, gamma: float) -> "DensityMatrix":
        """tr_1 { D q^(alpha sigma^z_1) }; equals rho(xi_1) x reduced matrix."""
        d = 1 << (self.m - 1)
        qa = cmath.exp(complex(self.alpha) * 1j * gamma)
        e = self.entries.reshape(d, 2, d, 2)  # (rest, site1) x (rest, site1)
        w = np.array([qa, 1.0 / qa], dtype=complex)
        red = np.einsum("asbs,s->ab", e, w)
        return DensityMatrix(m=self.m - 1, entries=red, nu=self.nu[1:],
                             kappa=self.kappa, alpha=self.alpha,
                             provenance=self.provenance)

    def to_record(self) -> dict:
        return {
            "schema": "density-matrix/1",
            "m": self.m,
            "nu": [[complex(v).real, complex(v).imag] for v in self.nu],
            "xi": [[x.real, x.imag] for x in self.xi],
            "kappa": [complex(self.kappa).real, complex(self.kappa).imag],
            "alpha": [complex(self.alpha).real, complex(self.alpha).imag],
            "provenance": self.provenance,
            "index_convention":
                "little-endian; site 1 = bit 0; '+' = 0, '-' = 1; row = out",
            "entries": [[z.real, z.imag] for z in self.entries.reshape(-1)],
        }


# -- closed single-site form ---------------------------------------------------


def density_m1(params: ModelParams, rho_field: RhoField, nu: complex) -> DensityMatrix:
    """diag( (rho - q^-a)/(q^a - q^-a), (q^a - rho)/(q^a - q^-a) )."""
    p = params
    qa = cmath.exp(p.alpha * p.eta)
    if abs(qa - 1.0 / qa) < 1e-14:
        raise SingularityError("alpha = 0 requires the extrapolation path")
    rho = rho_field.rho_lambda(nu)
    dpp = (rho - 1.0 / qa) / (qa - 1.0 / qa)
    dmm = (qa - rho) / (qa - 1.0 / qa)
    return DensityMatrix(m=1, entries=np.diag([dpp, dmm]).astype(complex),
                         nu=[complex(nu)], kappa=p.kappa, alpha=p.alpha,
                         provenance=PROVENANCE_FACTORIZED)


# -- multiple-integral route -----------------------------------------------------


def _f_product(params: ModelParams, lam: np.ndarray, ell: int, nus,
               upper: bool) -> np.ndarray:
    """prod_{k<ell} sh(l - nu_k) prod_{k>ell} sh(l - nu_k -+ eta)."""
    eta = params.eta
    out = np.ones_like(lam)
    for k, nu in enumerate(nus, start=1):
        if k < ell:
            out = out * np.sinh(lam - nu)
        elif k > ell:
            out = out * np.sinh(lam - nu - eta if upper else lam - nu + eta)
    return out


def multint_density(params: ModelParams, rho_field: RhoField,
                    eps_out, eps_in, nu=None,
                    g_tables: dict | None = None) -> complex:
    """One element of the density matrix by nested contour quadrature.

    Sector-violating patterns return exactly zero.  Cost scales with
    (grid size)^m; implemented for m <= 3.
    """
    m = len(eps_out)
    if len(eps_in) != m:
        raise UsageError("eps_out and eps_in must have equal length")
    if m > 3:
        raise CapabilityError("multiple-integral route implemented for m <= 3")
    nus = [complex(v) for v in (nu if nu is not None else params.nu)]
    if len(nus) != m:
        raise UsageError(f"need {m} vertical parameters, got {len(nus)}")
    if sum(eps_out) != sum(eps_in):
        return 0.0 + 0.0j

    p = len([e for e in eps_in if e == 1])
    plus_in = [j + 1 for j, e in enumerate(eps_in) if e == 1]
    minus_out = [j + 1 for j, e in enumerate(eps_out) if e == -1]
    ells = [plus_in[j] for j in range(p)] \
        + [minus_out[m - j - 1] for j in range(p, m)]

    g = rho_field.grid
    if g_tables is None:
        g_tables = {}
    gvals = []
    for nu_k in nus:
        key = repr(nu_k)
        if key not in g_tables:
            g_tables[key] = solve_G(params, rho_field, g, nu_k)
        gvals.append(g_tables[key].values)

    mw = rho_field.measure_weights()
    mwb = rho_field.measure_weights_bar()
    nodes = g.nodes
    eta = params.eta

    var_w = []
    for j in range(m):
        upper = j < p
        w = (mw if upper else mwb) * _f_product(params, nodes, ells[j], nus, upper)
        var_w.append(w)

    den_nu = 1.0 + 0.0j
    for j in range(m):
        for k in range(j + 1, m):
            den_nu = den_nu * cmath.sinh(nus[k] - nus[j])

    if m == 1:
        return complex(np.sum(var_w[0] * (-gvals[0]))) / den_nu

    if m == 2:
        det = (gvals[0][:, None] * gvals[1][None, :]
               - gvals[1][:, None] * gvals[0][None, :])
        den = np.sinh(nodes[:, None] - nodes[None, :] - eta)
        total = var_w[0][:, None] * var_w[1][None, :] * det / den
        return complex(total.sum()) / den_nu

    # m == 3: loop the outer variable, vectorize the inner two
    total = 0.0 + 0.0j
    G = np.stack(gvals)  # (3, M): G[k] = G(., nu_{k+1})
    for i1 in range(g.size):
        if abs(var_w[0][i1]) < 1e-300:
            continue
        det = np.zeros((g.size, g.size), dtype=complex)
        for (a, b, c, sign) in [(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0),
                                (0, 2, 1, -1.0), (2, 1, 0, -1.0), (1, 0, 2, -1.0)]:
            det += sign * G[a][i1] * G[b][:, None] * G[c][None, :]
        den = (np.sinh(nodes[i1] - nodes[:, None] - eta)
               * np.sinh(nodes[i1] - nodes[None, :] - eta)
               * np.sinh(nodes[:, None] - nodes[None, :] - eta))
        total += var_w[0][i1] * np.sum(
            var_w[1][:, None] * var_w[2][None, :] * (-det) / den)
    return complex(total) / den_nu


def multint_matrix(params: ModelParams, rho_field: RhoField,
                   nu=None) -> DensityMatrix:
    """Full matrix via the quadrature route (m <= 3)."""
    nus = [complex(v) for v in (nu if nu is not None else params.nu)]
    m = len(nus)
    dim = 1 << m
    out = np.zeros((dim, dim), dtype=complex)
    g_tables = {}
    for row in range(dim):
        for col in range(dim):
            eps_out = index_pattern(row, m)
            eps_in = index_pattern(col, m)
            if sum(eps_out) != sum(eps_in):
                continue
            out[row, col] = multint_density(params, rho_field, eps_out, eps_in,
                                            nu=nus, g_tables=g_tables)
    return DensityMatrix(m=m, entries=out, nu=nus, kappa=params.kappa,
                         alpha=params.alpha, provenance=PROVENANCE_MULTINT)


# -- factorized two-site route ----------------------------------------------------


def table_coefficients(eps_out, eps_in, params: ModelParams, nu1: complex,
                       nu2: complex):
    """Polynomial rows (c0, c1, c2, c3) of the four p = 1 two-site integrands."""
    q = params.q
    q2 = q * q
    x1 = cmath.exp(2.0 * nu1)
    x2 = cmath.exp(2.0 * nu2)
    xi1 = cmath.exp(nu1)
    xi2 = cmath.exp(nu2)
    key = (tuple(eps_out), tuple(eps_in))
    if key == ((1, -1), (1, -1)):
        return (1.0 + 0.0j, -x1, -q2 * x2, q2 * x1 * x2)
    if key == ((-1, 1), (-1, 1)):
        return (q2, -x2, -q2 * x1, x1 * x2)
    if key == ((1, -1), (-1, 1)):
        return (q * xi2 / xi1, -q * xi1 * xi2, -q * xi1 * xi2, q * xi1 ** 3 * xi2)
    if key == ((-1, 1), (1, -1)):
        return (q * xi1 / xi2, -xi1 * xi2 / q, -q ** 3 * xi1 * xi2,
                q * xi1 * xi2 ** 3)
    raise UsageError(f"not a p=1 element: {key}")


def _guard_factorized_alpha(params: ModelParams):
    qa = cmath.exp(params.alpha * params.eta)
    q = params.q
    for bad, name in [(abs(qa - 1.0 / qa), "alpha = 0"),
                      (abs(qa - q), "y^2 = q^2 (alpha = 1)"),
                      (abs(qa * q - 1.0), "y^2 = q^-2 (alpha = -1)")]:
        if bad < 1e-12:
            raise ConfigurationError(
                f"factorized two-site form excluded at {name}")
    return qa


def factorized_I(eps_out, eps_in, params: ModelParams, rho_field: RhoField,
                 nu1: complex, nu2: complex,
                 psi12: complex | None = None, psi21: complex | None = None,
                 g_tables: dict | None = None) -> complex:
    """Closed form of one p = 1 two-site element.

    Assembles the q-difference solution g(w) = g_+ w + g_0 + g_-/w, its
    antisymmetric companion f, the two Psi values and the two rho values.
    """
    p = params
    y = _guard_factorized_alpha(p)
    q2 = p.q * p.q
    x1 = cmath.exp(2.0 * nu1)
    x2 = cmath.exp(2.0 * nu2)
    if abs(x1 - x2) < 1e-12:
        raise SingularityError("coincident xi^2; perturb and extrapolate")
    c0, c1, c2, c3 = table_coefficients(eps_out, eps_in, p, nu1, nu2)

    g_plus = c0 * y / (2.0 * (q2 - y * y))
    g_minus = c3 * y / (2.0 * (1.0 - q2 * y * y))
    g_zero = (c1 + c2 / q2) * y / (2.0 * (1.0 - y * y))

    def g_of(w):
        return g_plus * w + g_zero + g_minus / w

    def f_of(w):
        return (y - 1.0 / y) * (g_plus * w - g_minus / w)

    if psi12 is None or psi21 is None:
        if g_tables is None:
            g_tables = {}
        for nu_k in (nu1, nu2):
            key = repr(complex(nu_k))
            if key not in g_tables:
                g_tables[key] = solve_G(p, rho_field, rho_field.grid, nu_k)
        psi12 = continue_Psi(p, rho_field, g_tables[repr(complex(nu2))], nu1)
        psi21 = continue_Psi(p, rho_field, g_tables[repr(complex(nu1))], nu2)

    rho1 = rho_field.rho_lambda(nu1)
    rho2 = rho_field.rho_lambda(nu2)
    dx = x2 - x1
    yy = y - 1.0 / y
    term1 = (g_of(x2) * psi21 - g_of(x1) * psi12) / dx
    term2 = (c1 - c2 / q2) * (rho1 - rho2) / (2.0 * dx * yy)
    term3 = ((1.0 / y - rho1) * (y - rho2) * f_of(x2)
             - (1.0 / y - rho2) * (y - rho1) * f_of(x1)) / (dx * yy * yy)
    return term1 + term2 + term3


def p0_p2_from_reduction(params: ModelParams, rho_field: RhoField,
                         d_pm_pm: complex, d_mp_mp: complex,
                         nu1: complex) -> tuple:
    """The (++,++) and (--,--) elements via the reduction relations."""
    qa = cmath.exp(params.alpha * params.eta)
    rho1 = rho_field.rho_lambda(nu1)
    dpp = (rho1 - 1.0 / qa) / (qa - 1.0 / qa) - d_pm_pm
    dmm = (qa - rho1) / (qa - 1.0 / qa) - d_mp_mp
    return dpp, dmm


def factorized_matrix(params: ModelParams, rho_field: RhoField,
                      nu=None) -> DensityMatrix:
    """Full 4x4 matrix from the four p = 1 closed forms plus reductions."""
    nus = [complex(v) for v in (nu if nu is not None else params.nu)]
    if len(nus) != 2:
        raise UsageError("factorized_matrix is a two-site construction")
    nu1, nu2 = nus
    g_tables = {}
    elems = {}
    for eps_out, eps_in in [((1, -1), (1, -1)), ((-1, 1), (-1, 1)),
                            ((1, -1), (-1, 1)), ((-1, 1), (1, -1))]:
        elems[(tuple(eps_out), tuple(eps_in))] = factorized_I(
            eps_out, eps_in, params, rho_field, nu1, nu2, g_tables=g_tables)
    dpp, dmm = p0_p2_from_reduction(
        params, rho_field, elems[((1, -1), (1, -1))],
        elems[((-1, 1), (-1, 1))], nu1)
    out = np.zeros((4, 4), dtype=complex)
    out[pattern_index((1, 1)), pattern_index((1, 1))] = dpp
    out[pattern_index((-1, -1)), pattern_index((-1, -1))] = dmm
    for (eo, ei), val in elems.items():
        out[pattern_index(eo), pattern_index(ei)] = val
    return DensityMatrix(m=2, entries=out, nu=nus, kappa=params.kappa,
                         alpha=params.alpha, provenance=PROVENANCE_FACTORIZED)


def density_m2(params: ModelParams, rho_field: RhoField, omega12: complex,
               omega21: complex, phi1: complex, phi2: complex,
               nu: list | None = None) -> DensityMatrix:
    """Full 4x4 matrix from the two-point function and one-point data."""
    p = params
    nus = [complex(v) for v in (nu if nu is not None else params.nu)]
    if len(nus) != 2:
        raise UsageError("density_m2 needs exactly two vertical parameters")
    q = p.q
    qa = _guard_factorized_alpha(p)
    l = nus[0] - nus[1]
    xi = cmath.exp(l)
    if abs(xi - 1.0 / xi) < 1e-12:
        raise SingularityError("xi_1 = +-xi_2 excluded; perturb and extrapolate")

    t_iz = kron_sites([ID2, SIGMA_Z])
    t_zi = kron_sites([SIGMA_Z, ID2])
    t_zz = kron_sites([SIGMA_Z, SIGMA_Z])
    t_pm = kron_sites([SIGMA_P, SIGMA_M])
    t_mp = kron_sites([SIGMA_M, SIGMA_P])
    eye4 = np.eye(4, dtype=complex)

    dxi = xi - 1.0 / xi
    qd = q - 1.0 / q
    qs = q + 1.0 / q
    phi_cross = phi1 * phi2 * (qa - 1.0 / qa) / 2.0
    xi_a = cmath.exp(p.alpha * l)

    out = 0.25 * eye4

    blk_a_scalar = ((xi / xi_a * omega12 - xi_a / xi * omega21) / dxi
                    + phi_cross)
    blk_a_op = (qd / 2.0 * t_iz - qs / 2.0 * t_zz
                + (1.0 / xi) * t_pm + xi * t_mp)
    out = out - blk_a_scalar * blk_a_op / (4.0 * (qa / q - q / qa))

    blk_b_scalar = ((1.0 / (xi_a * xi) * omega12 - xi_a * xi * omega21) / dxi
                    + phi_cross)
    blk_b_op = (-qd / 2.0 * t_iz - qs / 2.0 * t_zz
                + xi * t_pm + (1.0 / xi) * t_mp)
    out = out - blk_b_scalar * blk_b_op / (4.0 * (qa * q - 1.0 / (qa * q)))

    blk_c_scalar = (omega12 / xi_a - xi_a * omega21) \
        / (4.0 * dxi * (qa - 1.0 / qa))
    blk_c_op = (xi + 1.0 / xi) * t_zz - qs * (t_pm + t_mp)
    out = out - blk_c_scalar * blk_c_op

    out = out - 0.25 * (phi1 * t_zi + phi2 * t_iz)
    out = out - qd / (4.0 * dxi) * (phi1 - phi2) * (t_pm - t_mp)

    return DensityMatrix(m=2, entries=out, nu=nus, kappa=p.kappa, alpha=p.alpha,
                         provenance=PROVENANCE_FACTORIZED)


# -- physical limit ----------------------------------------------------------------


def physical_limit(params: ModelParams, family: dict,
                   tol: float | None = None) -> DensityMatrix:
    """Even/odd Richardson extrapolation of {alpha: DensityMatrix} to alpha = 0.

    Expects the four alphas +-eps and +-2 eps; the odd part cancels in the
    +- averages and the remaining even error drops from O(eps^2) to
    O(eps^4).  The spread between the refined and unrefined averages is
    recorded (and checked against tol when given).
    """
    from .errors import ExtrapolationError

    alphas = list(family)
    if len(alphas) != 4:
        raise UsageError("physical_limit expects alphas {+-eps, +-2eps}")
    eps = min(abs(complex(a)) for a in alphas)
    if eps > 1e-3 + 1e-15:
        raise UsageError(f"alpha grid too coarse: eps = {eps}")
    pairs = {}
    for a in alphas:
        ca = complex(a)
        pairs.setdefault(int(round(abs(ca) / eps)), {})[
            int(np.sign(ca.real))] = family[a]
    if sorted(pairs) != [1, 2] or any(sorted(p) != [-1, 1] for p in pairs.values()):
        raise UsageError("alpha family must be {+-eps, +-2eps}")
    even1 = 0.5 * (pairs[1][1].entries + pairs[1][-1].entries)
    even2 = 0.5 * (pairs[2][1].entries + pairs[2][-1].entries)
    extrap = (4.0 * even1 - even2) / 3.0
    spread = float(np.max(np.abs(extrap - even1)))
    if tol is not None and spread > tol:
        raise ExtrapolationError(
            f"alpha extrapolation spread {spread:.3e} exceeds {tol:.3e}; "
            "use a smaller eps or a finer grid")
    base = pairs[1][1]
    return DensityMatrix(m=base.m, entries=extrap, nu=base.nu,
                         kappa=base.kappa, alpha=0.0,
                         provenance=PROVENANCE_EXTRAPOLATED,
                         extrapolation_spread=spread)
