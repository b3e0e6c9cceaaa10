"""Transcendental building blocks of the factorized correlation functions.

Everything here reduces to quadratures over the canonical contour and to
dense Nystrom solves built on the solved auxiliary function:

* rho   -- the dominant-eigenvalue ratio between twists kappa+alpha and
           kappa, as a contour integral over log[(1+a_twisted)/(1+a_base)].
* G     -- solution of the deformed linear integral equation with the
           weighted measure dm(mu) = dmu / (2 pi i rho(e^mu) (1 + a(mu))).
* Psi   -- the one-fold integral transform of G, with its analytic
           continuation in the first argument across the contour.
* omega -- the two-point function assembled from Psi, rho and the
           elementary function psi(xi) = xi^alpha (xi^2+1)/(2(xi^2-1)).
* omega_prime -- the alpha-derivative of xi^(-alpha) omega at alpha = 0,
           via dedicated linear solves (primary) and finite differences
           (cross-check).

All xi^alpha powers are taken as exp(alpha * nu) with the additive
variable nu = log xi carried explicitly, so no hidden branch choices
enter the two-point functions.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field

import numpy as np

from .contour import TWO_PI_I, ContourGrid, build_contour, classify
from .errors import (ConsistencyError, DomainError, EdgeError,
                     LinearSolveError, SingularityError, UsageError)
from .nlie import (AuxSolution, aux_ratio, aux_value, bare_energy, eval_aux,
                   kernel, kernel_deformed, kernel_plus, solve_aux,
                   unwrap_along)
from .params import ModelParams

COND_LIMIT = 1e12


def _coth(z):
    return 1.0 / np.tanh(z)


# -- elementary closed forms ------------------------------------------------


def psi_log(log_xi: complex, alpha: complex) -> complex:
    """psi(xi) = xi^alpha (xi^2 + 1) / (2 (xi^2 - 1)) with xi = exp(log_xi)."""
    x2 = cmath.exp(2.0 * log_xi)
    den = 2.0 * (x2 - 1.0)
    if abs(den) < 1e-12:
        raise SingularityError(f"psi pole: xi^2 = 1 at log_xi = {log_xi}")
    return cmath.exp(alpha * log_xi) * (x2 + 1.0) / den


def psi(xi: complex, alpha: complex) -> complex:
    """psi on the principal branch of log(xi)."""
    return psi_log(cmath.log(xi), alpha)


def delta_psi_log(log_xi: complex, alpha: complex, gamma: float) -> complex:
    """psi(q xi) - psi(xi / q), the q-difference entering omega."""
    eta = 1j * gamma
    return psi_log(log_xi + eta, alpha) - psi_log(log_xi - eta, alpha)


def omega0_log(log_xi: complex, alpha: complex, gamma: float) -> complex:
    """Rational two-point term -((1-q^a)/(1+q^a))^2 (psi(q xi) - psi(xi/q))."""
    qa = cmath.exp(alpha * 1j * gamma)
    pref = ((1.0 - qa) / (1.0 + qa)) ** 2
    return -pref * delta_psi_log(log_xi, alpha, gamma)


def omega0(xi: complex, alpha: complex, gamma: float) -> complex:
    return omega0_log(cmath.log(xi), alpha, gamma)


def psi0(log_xi: complex) -> complex:
    """psi at alpha = 0: (xi^2 + 1)/(2 (xi^2 - 1))."""
    x2 = cmath.exp(2.0 * log_xi)
    return (x2 + 1.0) / (2.0 * (x2 - 1.0))


def inv_delta_psi_log(log_xi: complex, alpha: complex, gamma: float,
                      n_terms: int = 24) -> complex:
    """Small-argument primitive F with F(q xi) - F(xi/q) = psi(xi).

    Power series in xi^(alpha + 2k), valid for |xi| well below 1; the
    Delta-periodic ambiguity of the primitive cancels in the combinations
    where this helper is used.
    """
    if abs(cmath.exp(log_xi)) > 0.3:
        raise DomainError("inv_delta_psi_log needs |xi| < 0.3")
    eta = 1j * gamma
    total = 0.0 + 0.0j
    for k in range(n_terms):
        p = alpha + 2.0 * k
        den = cmath.exp(p * eta) - cmath.exp(-p * eta)
        coeff = -0.5 if k == 0 else -1.0
        term = coeff * cmath.exp(p * log_xi) / den
        total += term
        if abs(term) < 1e-18 * max(1.0, abs(total)):
            break
    return total


# -- the rho field -----------------------------------------------------------


class RhoField:
    """Dominant-eigenvalue ratio rho and its derived one-point data.

    Holds the two auxiliary solutions (twists kappa and kappa + alpha) on a
    shared grid and evaluates rho(zeta) anywhere in |Im log zeta| up to
    gamma + half_width by integrating over a wider companion contour (for
    points near the grid) or over the grid itself plus explicit crossing
    factors (for points beyond it).
    """

    def __init__(self, params: ModelParams, grid: ContourGrid,
                 aux_base: AuxSolution, aux_twisted: AuxSolution):
        self.params = params
        self.grid = grid
        self.aux_base = aux_base
        self.aux_twisted = aux_twisted
        self.alpha = params.alpha
        self._wide = None
        self._wide_lnratio = None
        self._rho_nodes = None
        self._lu_cache = {}

    # ---- log[(1+a_twisted)/(1+a_base)] on a set of points ----------------

    def _lnratio_on(self, pts: np.ndarray) -> np.ndarray:
        zb = np.atleast_1d(eval_aux(self.aux_base, self.params, pts))
        zt = np.atleast_1d(eval_aux(self.aux_twisted, self.params, pts))
        # stable log of (1 + e^zt)/(1 + e^zb), then continuity along path
        out = np.empty_like(zb)
        big = zb.real > 0
        out[big] = (zt[big] - zb[big]) + np.log1p(np.exp(-zt[big])) \
            - np.log1p(np.exp(-zb[big]))
        out[~big] = np.log1p(np.exp(zt[~big])) - np.log1p(np.exp(zb[~big]))
        out -= TWO_PI_I * np.round(out.imag / (2.0 * np.pi))
        return unwrap_along(out)

    def _wide_contour(self):
        if self._wide is None:
            g = self.grid
            self._wide = build_contour(
                g.gamma, half_width=0.42 * g.gamma, cutoff=g.cutoff + 2.0,
                points_per_side=g.points_per_side, foci=g.foci,
                pole_dist=min(0.17 * g.gamma, 0.6 * 0.42 * g.gamma))
            self._wide_lnratio = self._lnratio_on(self._wide.nodes)
        return self._wide, self._wide_lnratio

    def _grid_lnratio(self) -> np.ndarray:
        return unwrap_along(self.aux_twisted.w_values - self.aux_base.w_values)

    # ---- rho itself -------------------------------------------------------

    def rho_lambda(self, lam: complex) -> complex:
        """rho at zeta = exp(lam); lam may sit on or beyond the grid lines."""
        if self.alpha == 0:
            return 1.0 + 0.0j
        p = self.params
        g = self.grid
        qa = cmath.exp(self.alpha * p.eta)
        y = abs(float(np.imag(lam)))
        if y <= 0.32 * p.gamma or abs(np.real(lam)) > g.cutoff:
            wide, lnr = self._wide_contour()
            if abs(np.real(lam)) > wide.cutoff - 2.0 \
                    or (abs(np.real(lam)) > 2.5
                        and min(abs(np.real(lam) - f) for f in wide.foci) > 1.5):
                wide = build_contour(
                    g.gamma, half_width=0.42 * g.gamma,
                    cutoff=max(g.cutoff + 2.0, abs(np.real(lam)) + 4.0),
                    points_per_side=g.points_per_side,
                    foci=(0.0, float(np.real(lam))),
                    pole_dist=min(0.17 * g.gamma, 0.25 * g.gamma))
                lnr = self._lnratio_on(wide.nodes)
            e = bare_energy(wide.nodes - lam, p.gamma)
            val = np.sum(wide.weights * e * lnr) / TWO_PI_I
            return qa * cmath.exp(val)
        if y >= p.gamma + g.half_width - 0.02 * p.gamma:
            raise DomainError(
                f"rho evaluation limited to |Im lam| < gamma + half_width, "
                f"got {np.imag(lam):.6g}")
        # integrate over the grid itself; the pole at mu = lam has crossed
        e = bare_energy(g.nodes - lam, p.gamma)
        val = np.sum(g.weights * e * self._grid_lnratio()) / TWO_PI_I
        out = qa * cmath.exp(val) * self._crossing_factor(lam)
        if y > p.gamma - g.half_width + 0.02 * p.gamma:
            shift = -p.eta if np.imag(lam) > 0 else p.eta
            out = out * self._crossing_factor(lam + shift)
        return out

    def _crossing_factor(self, lam: complex) -> complex:
        a_b = aux_value(self.aux_base, lam)
        a_t = aux_value(self.aux_twisted, lam)
        if np.isinf(abs(a_b)) or np.isinf(abs(a_t)):
            return aux_ratio(self.aux_twisted, self.aux_base, lam)
        return (1.0 + a_t) / (1.0 + a_b)

    def rho(self, zeta: complex) -> complex:
        """rho(zeta) via the principal logarithm (rho depends on zeta^2 only)."""
        lam = cmath.log(zeta)
        if abs(lam.imag) > np.pi / 2.0:
            lam -= 1j * np.pi * np.sign(lam.imag)
        return self.rho_lambda(lam)

    def rho_plateau(self) -> complex:
        """Limit of rho as Re(lambda) -> +-infinity (a -> q^(-2 kappa))."""
        p = self.params
        qk = cmath.exp(p.kappa * p.eta)
        qka = cmath.exp((p.kappa + p.alpha) * p.eta)
        return (qka + 1.0 / qka) / (qk + 1.0 / qk)

    def rho_at_nodes(self) -> np.ndarray:
        if self._rho_nodes is None:
            if self.alpha == 0:
                self._rho_nodes = np.ones(self.grid.size, dtype=complex)
            else:
                p = self.params
                qa = cmath.exp(self.alpha * p.eta)
                wide, lnr = self._wide_contour()
                e = bare_energy(wide.nodes[None, :] - self.grid.nodes[:, None],
                                p.gamma)
                vals = (e * (wide.weights * lnr)[None, :]).sum(axis=1) / TWO_PI_I
                out = qa * np.exp(vals)
                # beyond the decay of all structure the exact limit is cheaper
                # and more accurate than resolving the quadrature pole far out
                far = np.abs(self.grid.nodes.real) > self.grid.cutoff - 4.0
                out[far] = self.rho_plateau()
                self._rho_nodes = out
        return self._rho_nodes

    def phi_lambda(self, lam: complex) -> complex:
        """phi = (cosh(alpha eta) - rho(zeta)) / sinh(alpha eta)."""
        a_eta = self.alpha * self.params.eta
        if abs(cmath.sinh(a_eta)) < 1e-14:
            raise SingularityError("phi undefined at alpha = 0; extrapolate")
        return (cmath.cosh(a_eta) - self.rho_lambda(lam)) / cmath.sinh(a_eta)

    # ---- weighted contour measures ----------------------------------------

    def one_plus_a_at_nodes(self) -> np.ndarray:
        z = self.aux_base.log_a_values
        with np.errstate(over="ignore"):
            return np.where(z.real > 690.0, np.inf, 1.0 + np.exp(z))

    def measure_weights(self) -> np.ndarray:
        """Quadrature weights of dm(mu) at the grid nodes."""
        opa = self.one_plus_a_at_nodes()
        with np.errstate(invalid="ignore"):
            w = self.grid.weights / (TWO_PI_I * self.rho_at_nodes() * opa)
        return np.where(np.isfinite(w), w, 0.0)

    def measure_weights_bar(self) -> np.ndarray:
        """Quadrature weights of a(mu) dm(mu) at the grid nodes."""
        z = self.aux_base.log_a_values
        with np.errstate(over="ignore"):
            a_over = np.where(z.real > 690.0, 1.0,
                              np.exp(z) / (1.0 + np.exp(z)))
        return self.grid.weights * a_over / (TWO_PI_I * self.rho_at_nodes())


def build_rho_field(params: ModelParams, grid: ContourGrid,
                    tol: float = 1e-12, max_iter: int = 800,
                    damping: float = 0.5,
                    aux_base: AuxSolution | None = None) -> RhoField:
    """Solve both twists on the grid and wrap them in a RhoField.

    A pre-solved base-twist solution can be shared across fields that
    differ only in alpha (the base equation does not involve alpha).
    """
    if aux_base is None:
        aux_base = solve_aux(params, params.kappa, grid, tol=tol,
                             max_iter=max_iter, damping=damping)
    aux_twisted = solve_aux(params, params.kappa + params.alpha, grid, tol=tol,
                            max_iter=max_iter, damping=damping,
                            init=aux_base.log_a_values)
    return RhoField(params, grid, aux_base, aux_twisted)


def compute_rho(rho_field: RhoField, zeta: complex) -> complex:
    return rho_field.rho(zeta)


def compute_phi(rho_field: RhoField, zeta: complex) -> complex:
    lam = cmath.log(zeta)
    if abs(lam.imag) > np.pi / 2.0:
        lam -= 1j * np.pi * np.sign(lam.imag)
    return rho_field.phi_lambda(lam)


# -- the linear integral equation for G --------------------------------------


@dataclass
class GTable:
    """G(., nu) on the grid nodes for one fixed nu, plus evaluation data."""

    nu: complex
    values: np.ndarray
    rho_at_nu: complex
    kernel_matrix_hash: str
    rho_field: RhoField = field(repr=False)
    resub_residual: float = 0.0

    @property
    def grid(self) -> ContourGrid:
        return self.rho_field.grid


def _nystrom_lu(rho_field: RhoField):
    """LU factorization of (I - K_alpha dm), shared across all nu."""
    from scipy.linalg import lapack, lu_factor

    key = "nystrom"
    cached = rho_field._lu_cache.get(key)
    if cached is not None:
        return cached
    p = rho_field.params
    g = rho_field.grid
    mw = rho_field.measure_weights()
    kmat = kernel_deformed(g.nodes[:, None] - g.nodes[None, :], p.alpha, p.gamma)
    A = np.eye(g.size, dtype=complex) - kmat * mw[None, :]
    anorm = float(np.linalg.norm(A, 1))
    lu = lu_factor(A)
    rcond, info = lapack.zgecon(lu[0], anorm, norm="1")
    if info != 0 or not np.isfinite(rcond) or rcond < 1.0 / COND_LIMIT:
        raise LinearSolveError(
            f"Nystrom matrix badly conditioned: rcond = {rcond:.3e}")
    rho_field._lu_cache[key] = (lu, f"nystrom-{g.size}-{id(rho_field):x}")
    return rho_field._lu_cache[key]


def solve_G(params: ModelParams, rho_field: RhoField, grid: ContourGrid,
            nu: complex) -> GTable:
    """Dense Nystrom solve of the deformed linear equation at fixed nu."""
    if grid is not rho_field.grid:
        raise UsageError("grid must be the rho_field grid")
    region = classify(grid, nu)
    if region == "on_contour_tolerance":
        raise EdgeError(f"nu = {nu} too close to the contour")
    if region != "inside":
        raise DomainError(f"nu = {nu} must lie inside the contour, got {region}")
    if np.min(np.abs(grid.nodes - nu)) < 2.0 * grid.edge_tol:
        raise EdgeError("nu closer than 2*edge_tol to a quadrature node")
    from scipy.linalg import lu_solve

    lu, hsh = _nystrom_lu(rho_field)
    qa = cmath.exp(params.alpha * params.eta)
    rho_nu = rho_field.rho_lambda(nu)
    rhs = _coth(grid.nodes - nu - params.eta) / qa - rho_nu * _coth(grid.nodes - nu)
    vals = lu_solve(lu, rhs)
    # re-substitution residual
    mw = rho_field.measure_weights()
    kmat = kernel_deformed(grid.nodes[:, None] - grid.nodes[None, :],
                           params.alpha, params.gamma)
    resid = float(np.max(np.abs(vals - rhs - kmat @ (mw * vals))))
    return GTable(nu=complex(nu), values=vals, rho_at_nu=rho_nu,
                  kernel_matrix_hash=hsh, rho_field=rho_field,
                  resub_residual=resid)


def eval_G(gtable: GTable, lam: complex) -> complex:
    """G(lam, nu) off the grid; crossing terms appear beyond |Im| = gamma - hw.

    The pole of G at lam = nu (residue -rho(xi)) is reproduced by the
    driving term; band crossings add one explicit kernel-residue term.
    """
    rf = gtable.rho_field
    p = rf.params
    g = rf.grid
    y = float(np.imag(lam))
    band = p.gamma - g.half_width
    qa = cmath.exp(p.alpha * p.eta)
    base = _g_formula(gtable, lam)
    if abs(y) < band - 1e-12:
        return base
    if abs(y) > p.gamma + g.half_width - 1e-12:
        raise DomainError("eval_G limited to |Im lam| < gamma + half_width")
    if y > 0:
        inner = eval_G(gtable, lam - p.eta)
        corr = aux_value(rf.aux_base, lam - p.eta)
        rho_in = rf.rho_lambda(lam - p.eta)
        return base + inner / (qa * rho_in * (1.0 + corr))
    inner = eval_G(gtable, lam + p.eta)
    corr = aux_value(rf.aux_base, lam + p.eta)
    rho_in = rf.rho_lambda(lam + p.eta)
    return base - qa * inner / (rho_in * (1.0 + corr))


def _g_formula(gtable: GTable, lam: complex) -> complex:
    rf = gtable.rho_field
    p = rf.params
    g = rf.grid
    qa = cmath.exp(p.alpha * p.eta)
    mw = rf.measure_weights()
    drive = _coth(lam - gtable.nu - p.eta) / qa \
        - gtable.rho_at_nu * _coth(lam - gtable.nu)
    km = kernel_deformed(lam - g.nodes, p.alpha, p.gamma)
    return drive + np.sum(km * mw * gtable.values)


def g_moment(gtable: GTable) -> complex:
    """Closed-contour integral of G against the weighted measure dm."""
    return complex(np.sum(gtable.rho_field.measure_weights() * gtable.values))


def rho_identity_residual(gtable: GTable) -> float:
    """| q^(-a) - (q^a - q^(-a)) int dm G - rho(xi) |, an exact identity."""
    p = gtable.rho_field.params
    qa = cmath.exp(p.alpha * p.eta)
    lhs = 1.0 / qa - (qa - 1.0 / qa) * g_moment(gtable)
    return abs(lhs - gtable.rho_at_nu)


# -- Psi and its analytic continuation ---------------------------------------


def compute_Psi(params: ModelParams, rho_field: RhoField, g_table: GTable,
                nu1: complex) -> complex:
    """One-fold transform of G for nu1 strictly inside the contour."""
    g = rho_field.grid
    region = classify(g, nu1)
    if region == "on_contour_tolerance":
        raise EdgeError(f"nu1 = {nu1} too close to the contour")
    if region != "inside":
        raise DomainError("compute_Psi needs nu1 inside; use continue_Psi")
    return _psi_bare(params, rho_field, g_table, nu1)


def _measure_density(rho_field: RhoField, lam: complex) -> complex:
    """Integrand density 1/(2 pi i rho(e^l)(1 + a(l))) off the nodes."""
    a_val = aux_value(rho_field.aux_base, lam)
    if np.isinf(abs(a_val)):
        return 0.0 + 0.0j
    return 1.0 / (TWO_PI_I * rho_field.rho_lambda(lam) * (1.0 + a_val))


def _psi_bare(params: ModelParams, rho_field: RhoField, g_table: GTable,
              nu1: complex) -> complex:
    """Quadrature of the Psi integrand with its nu1-pole subtracted.

    The simple pole of coth(mu - nu1) is removed by subtracting its
    analytic-cofactor multiple and adding the exact closed-contour value
    (2 pi i when nu1 lies inside, zero outside), which keeps the rule
    accurate arbitrarily close to the path and makes the crossing jump
    explicit.  The second pole at mu = nu1 + eta gets the same treatment
    when it approaches the contour band.
    """
    g = rho_field.grid
    p = params
    qa = cmath.exp(p.alpha * p.eta)
    rho1 = rho_field.rho_lambda(nu1)
    fac = qa * _coth(g.nodes - nu1 - p.eta) - rho1 * _coth(g.nodes - nu1)
    total = complex(np.sum(rho_field.measure_weights() * g_table.values * fac))
    # pole at mu = nu1
    if abs(np.imag(nu1)) < p.gamma - g.half_width - 1e-12:
        c0 = eval_G(g_table, nu1) * _measure_density(rho_field, nu1)
        quad_s = complex(np.sum(g.weights * _coth(g.nodes - nu1)))
        inside = 1.0 if classify(g, nu1) == "inside" else 0.0
        total += rho1 * c0 * quad_s - rho1 * c0 * TWO_PI_I * inside
    # pole at mu = nu1 + eta (relevant in the lower continuation band)
    up = nu1 + p.eta
    if abs(np.imag(up)) < g.half_width + 0.45 * (p.gamma - 2.0 * g.half_width):
        c1 = eval_G(g_table, up) * _measure_density(rho_field, up)
        quad_s = complex(np.sum(g.weights * _coth(g.nodes - up)))
        inside = 1.0 if classify(g, up) == "inside" else 0.0
        total += -qa * c1 * quad_s + qa * c1 * TWO_PI_I * inside
    return total


def continue_Psi(params: ModelParams, rho_field: RhoField, g_table: GTable,
                 nu1: complex) -> complex:
    """Psi continued in nu1 across the contour.

    Crossing the contour moves the pole of the coth factor at mu = nu1
    (and, one band further down, the pole at mu = nu1 + eta) across the
    integration path; each crossing contributes an explicit residue term.
    """
    g = rho_field.grid
    gamma = params.gamma
    d = g.half_width
    y = float(np.imag(nu1))
    if min(abs(abs(y) - d), abs(abs(y + gamma) - d)) < 10.0 * g.edge_tol \
            and abs(np.real(nu1)) < g.cutoff:
        raise EdgeError(f"nu1 = {nu1} within tolerance of a region boundary")
    if abs(y) < d and abs(np.real(nu1)) < g.cutoff:
        return _psi_bare(params, rho_field, g_table, nu1)          # inside
    bare = _psi_bare(params, rho_field, g_table, nu1)
    a_nu1 = aux_value(rho_field.aux_base, nu1)
    if np.isinf(abs(a_nu1)):
        jump = 0.0
    else:
        jump = eval_G(g_table, nu1) / (1.0 + a_nu1)
    if y > d:                                                     # above
        return bare - jump
    if abs(y + gamma) >= d:                                       # shallow below
        return bare - jump
    # deep below: the pole at mu = nu1 + eta has entered the contour
    qa = cmath.exp(params.alpha * params.eta)
    a_up = aux_value(rho_field.aux_base, nu1 + params.eta)
    rho_up = rho_field.rho_lambda(nu1 + params.eta)
    second = qa * eval_G(g_table, nu1 + params.eta) / ((1.0 + a_up) * rho_up)
    return bare - jump - second


# -- omega -------------------------------------------------------------------


def omega_from_psi(params: ModelParams, rho_field: RhoField, psi_value: complex,
                   nu1: complex, nu2: complex) -> complex:
    """omega = 2 xi^alpha Psi - Delta psi(xi) + 2 (rho_1 - rho_2) psi(xi)."""
    log_xi = nu1 - nu2
    xi_a = cmath.exp(params.alpha * log_xi)
    rho1 = rho_field.rho_lambda(nu1)
    rho2 = rho_field.rho_lambda(nu2)
    return (2.0 * xi_a * psi_value
            - delta_psi_log(log_xi, params.alpha, params.gamma)
            + 2.0 * (rho1 - rho2) * psi_log(log_xi, params.alpha))


def compute_omega(params: ModelParams, rho_field: RhoField, nu1: complex,
                  nu2: complex, g_table: GTable | None = None) -> complex:
    """Two-point function omega(xi_1, xi_2 | kappa, alpha).

    nu1 may lie in any continuation region; nu2 must be inside the contour
    (it fixes the linear solve).  A pre-solved GTable at nu2 can be passed
    to share the dense solve across calls.
    """
    if g_table is None:
        g_table = solve_G(params, rho_field, rho_field.grid, nu2)
    elif abs(g_table.nu - nu2) > 1e-14:
        raise UsageError("g_table was solved at a different nu2")
    psi_val = continue_Psi(params, rho_field, g_table, nu1)
    return omega_from_psi(params, rho_field, psi_val, nu1, nu2)


def omega_pair(params: ModelParams, rho_field: RhoField, nu1: complex,
               nu2: complex):
    """(omega_12, omega_21, phi_1, phi_2) for the two-site density matrix."""
    g2 = solve_G(params, rho_field, rho_field.grid, nu2)
    g1 = solve_G(params, rho_field, rho_field.grid, nu1)
    om12 = omega_from_psi(params, rho_field,
                          continue_Psi(params, rho_field, g2, nu1), nu1, nu2)
    om21 = omega_from_psi(params, rho_field,
                          continue_Psi(params, rho_field, g1, nu2), nu2, nu1)
    return om12, om21, rho_field.phi_lambda(nu1), rho_field.phi_lambda(nu2)


# -- residues of Psi at the kinematic poles ----------------------------------


def psi_residue_upper(params: ModelParams, rho_field: RhoField,
                      nu2: complex) -> complex:
    """Residue of Psi(xi_1, xi_2) in xi_1^2 at xi_1^2 = q^2 xi_2^2.

    Expressed through the auxiliary function at nu2 + eta and nu2:
    -2 xi_2^2 q^(2-alpha) / ((1 + a(nu2+eta)) (1 + 1/a(nu2))).
    """
    p = params
    xi2sq = cmath.exp(2.0 * nu2)
    q = p.q
    qa = cmath.exp(p.alpha * p.eta)
    a_up = aux_value(rho_field.aux_base, nu2 + p.eta)
    a_at = aux_value(rho_field.aux_base, nu2)
    return -2.0 * xi2sq * q * q / (qa * (1.0 + a_up) * (1.0 + 1.0 / a_at))


def psi_residue_lower(params: ModelParams, rho_field: RhoField,
                      nu2: complex) -> complex:
    """Residue of Psi(xi_1, xi_2) in xi_1^2 at xi_1^2 = q^(-2) xi_2^2."""
    p = params
    xi2sq = cmath.exp(2.0 * nu2)
    q = p.q
    qa = cmath.exp(p.alpha * p.eta)
    a_at = aux_value(rho_field.aux_base, nu2)
    a_dn = aux_value(rho_field.aux_base, nu2 - p.eta)
    return 2.0 * xi2sq * qa / (q * q * (1.0 + a_at) * (1.0 + 1.0 / a_dn))


def extract_residue_sq(func, center_nu: complex, radius: float = 5e-3,
                        n_points: int = 12) -> complex:
    """Numeric residue of func(nu) in the variable u = exp(2 nu).

    Small-circle contour integral in nu around center_nu:
    res = (1/2 pi i) closed-int f du with du = 2 exp(2 nu) dnu.
    """
    total = 0.0 + 0.0j
    for k in range(n_points):
        th = 2.0 * np.pi * (k + 0.5) / n_points
        nu = center_nu + radius * cmath.exp(1j * th)
        total += func(nu) * 2.0 * cmath.exp(2.0 * nu) * radius * cmath.exp(1j * th)
    return total / n_points


def omega_residue_prediction(params: ModelParams, rho_field: RhoField,
                             nu2: complex, sign: int) -> complex:
    """Residue of omega in xi_1^2 at the kinematic pole xi_1^2 = q^(2 sign) xi_2^2.

    Two sources: the Psi residue (weighted 2 q^(sign alpha)) and the
    xi^2 = q^(2 sign) pole of the q-shifted psi term of omega; the plain
    psi term and the rho prefactors are regular there.
    """
    p = params
    qa = cmath.exp(p.alpha * p.eta)
    q2 = cmath.exp(2.0 * p.eta)
    xi2sq = cmath.exp(2.0 * nu2)
    if sign > 0:
        psi_res = psi_residue_upper(p, rho_field, nu2)
        return 2.0 * qa * psi_res + q2 * xi2sq
    psi_res = psi_residue_lower(p, rho_field, nu2)
    return 2.0 / qa * psi_res - xi2sq / q2


# -- recursion / normalization checks at the inhomogeneity points ------------


def psi_recursion_residual(params: ModelParams, rho_field: RhoField,
                           g_table: GTable, beta_j: complex) -> float:
    """Two-term recursion of Psi at xi_1 = tau_j.

    Psi(tau, xi2) + rho(tau) q^(-alpha) Psi(tau/q, xi2) must reproduce the
    (sign-flipped) driving term rho(xi2) coth(beta - nu2)
    - q^(-alpha) coth(beta - nu2 - eta).
    """
    p = params
    qa = cmath.exp(p.alpha * p.eta)
    nu2 = g_table.nu
    psi_up = continue_Psi(p, rho_field, g_table, beta_j)
    psi_dn = continue_Psi(p, rho_field, g_table, beta_j - p.eta)
    rho_tau = rho_field.rho_lambda(beta_j)
    lhs = psi_up + rho_tau / qa * psi_dn
    rho2 = rho_field.rho_lambda(nu2)
    rhs = rho2 / cmath.tanh(beta_j - nu2) - (1.0 / qa) / cmath.tanh(beta_j - nu2 - p.eta)
    return abs(lhs - rhs)


def normalization_residual(params: ModelParams, rho_field: RhoField,
                           g_table: GTable, beta_j: complex) -> float:
    """Residue-form normalization condition of omega at one tau_j.

    omega(tau, xi2) + rho(tau) omega(tau/q, xi2) must equal the explicit
    combination of q-shifted psi values in which the Delta-inverse
    primitive has telescoped away.
    """
    p = params
    nu2 = g_table.nu
    om_up = compute_omega(p, rho_field, beta_j, nu2, g_table=g_table)
    om_dn = compute_omega(p, rho_field, beta_j - p.eta, nu2, g_table=g_table)
    rho_tau = rho_field.rho_lambda(beta_j)
    rho2 = rho_field.rho_lambda(nu2)
    lhs = om_up + rho_tau * om_dn
    l = beta_j - nu2
    rhs = (-delta_psi_log(l, p.alpha, p.gamma)
           - rho_tau * delta_psi_log(l - p.eta, p.alpha, p.gamma)
           + 2.0 * (rho_tau + rho2) * psi_log(l, p.alpha)
           - 2.0 * (1.0 + rho_tau * rho2) * psi_log(l - p.eta, p.alpha))
    return abs(lhs - rhs)


def gamma0_limit_value(params: ModelParams, rho_field: RhoField,
                       g_table: GTable, nu1: complex) -> complex:
    """xi^(-alpha) (omega + Dbar Dbar inv-Delta psi) at small xi_1.

    Vanishes as xi_1 -> 0; evaluated at finite small xi_1 = exp(nu1) with
    the inverse q-difference primitive summed as a power series.
    """
    p = params
    nu2 = g_table.nu
    eta = p.eta
    om = compute_omega(p, rho_field, nu1, nu2, g_table=g_table)

    def rho_of(nu):
        return rho_field.rho_lambda(nu)

    shifts = [(eta, 1.0), (-eta, 1.0), (0.0, None)]
    total = 0.0 + 0.0j
    for s1, c1 in shifts:
        coef1 = -2.0 * rho_of(nu1 + s1) if c1 is None else c1
        for s2, c2 in shifts:
            coef2 = -2.0 * rho_of(nu2 + s2) if c2 is None else c2
            arg = (nu1 + s1) - (nu2 + s2)
            total += coef1 * coef2 * inv_delta_psi_log(arg, p.alpha, p.gamma)
    return cmath.exp(-p.alpha * (nu1 - nu2)) * (om + total)


# -- alpha-derivative at zero: dedicated linear solves ------------------------


class AlphaZeroContext:
    """Shared data for the alpha -> 0 derivative of xi^(-alpha) omega.

    Carries the base (alpha = 0) auxiliary solution, the undeformed
    Nystrom factorization, the finite-difference rho-derivative fields,
    and the three linear solves feeding the direct derivative route.
    """

    def __init__(self, params: ModelParams, grid: ContourGrid,
                 eps_alpha: float = 1e-4, tol: float = 1e-12):
        from scipy.linalg import lu_factor
        self.params0 = params.with_(alpha=0.0)
        self.grid = grid
        self.eps_alpha = eps_alpha
        self.aux = solve_aux(self.params0, self.params0.kappa, grid, tol=tol)
        z = self.aux.log_a_values
        with np.errstate(over="ignore"):
            opa = np.where(z.real > 690.0, np.inf, 1.0 + np.exp(z))
        with np.errstate(invalid="ignore"):
            mw0 = grid.weights / (TWO_PI_I * opa)
        self.mw0 = np.where(np.isfinite(mw0), mw0, 0.0)
        nodes = grid.nodes
        self.kmat = kernel(nodes[:, None] - nodes[None, :], params.gamma)
        self.kmat_plus = kernel_plus(nodes[:, None] - nodes[None, :], params.gamma)
        A = np.eye(grid.size, dtype=complex) - self.kmat * self.mw0[None, :]
        self._lu = lu_factor(A)
        self._fields = {}
        self._g0 = {}
        self._rho_prime_nodes = None

    # rho at alpha = +-eps and +-eps/2, sharing the base solution
    def _field(self, alpha: float) -> RhoField:
        key = round(alpha / self.eps_alpha * 4.0)
        if key not in self._fields:
            par = self.params0.with_(alpha=alpha)
            aux_t = solve_aux(par, par.kappa + alpha, self.grid,
                              init=self.aux.log_a_values)
            self._fields[key] = RhoField(par, self.grid, self.aux, aux_t)
        return self._fields[key]

    def rho_prime(self, lam: complex) -> complex:
        e = self.eps_alpha
        d1 = (self._field(e).rho_lambda(lam)
              - self._field(-e).rho_lambda(lam)) / (2.0 * e)
        d2 = (self._field(e / 2).rho_lambda(lam)
              - self._field(-e / 2).rho_lambda(lam)) / e
        return (4.0 * d2 - d1) / 3.0

    def rho_prime_at_nodes(self) -> np.ndarray:
        if self._rho_prime_nodes is None:
            e = self.eps_alpha
            d1 = (self._field(e).rho_at_nodes()
                  - self._field(-e).rho_at_nodes()) / (2.0 * e)
            d2 = (self._field(e / 2).rho_at_nodes()
                  - self._field(-e / 2).rho_at_nodes()) / e
            self._rho_prime_nodes = (4.0 * d2 - d1) / 3.0
        return self._rho_prime_nodes

    def solve_G0(self, nu: complex) -> np.ndarray:
        """Undeformed linear equation: driving e(nu - lambda), kernel K."""
        from scipy.linalg import lu_solve
        key = repr(complex(nu))
        if key not in self._g0:
            p = self.params0
            rhs = bare_energy(nu - self.grid.nodes, p.gamma)
            self._g0[key] = lu_solve(self._lu, rhs)
        return self._g0[key]

    def solve_gdot_deformed(self, nu2: complex) -> np.ndarray:
        """alpha-derivative of G from the deformed equation (measure included)."""
        from scipy.linalg import lu_solve
        p = self.params0
        eta = p.eta
        g0 = self.solve_G0(nu2)
        rp = self.rho_prime_at_nodes()
        nodes = self.grid.nodes
        rhs = (-eta * _coth(nodes - nu2 - eta)
               - self.rho_prime(nu2) * _coth(nodes - nu2)
               - self.kmat @ (self.mw0 * rp * g0)
               - eta * (self.kmat_plus @ (self.mw0 * g0)))
        return lu_solve(self._lu, rhs)

    def solve_gdot_companion(self, nu2: complex) -> np.ndarray:
        """alpha-derivative of the fixed-measure companion equation."""
        from scipy.linalg import lu_solve
        p = self.params0
        eta = p.eta
        g0 = self.solve_G0(nu2)
        nodes = self.grid.nodes
        rhs = (eta * _coth(nodes - nu2 - eta)
               + eta * (self.kmat_plus @ (self.mw0 * g0)))
        return lu_solve(self._lu, rhs)

    # ---- assembled quantities ------------------------------------------

    def psi_dot(self, nu1: complex, nu2: complex) -> complex:
        p = self.params0
        eta = p.eta
        nodes = self.grid.nodes
        g0 = self.solve_G0(nu2)
        gdot = self.solve_gdot_deformed(nu2)
        rp = self.rho_prime_at_nodes()
        e1 = bare_energy(nu1 - nodes, p.gamma)
        extra = eta * _coth(nodes - nu1 - eta) \
            - self.rho_prime(nu1) * _coth(nodes - nu1)
        return complex(np.sum(self.mw0 * (-rp * g0 * e1 + gdot * e1 + g0 * extra)))

    def omega_prime_direct(self, nu1: complex, nu2: complex) -> complex:
        p = self.params0
        eta = p.eta
        l = nu1 - nu2
        return (2.0 * self.psi_dot(nu1, nu2)
                - eta * (psi0(l + eta) + psi0(l - eta))
                + 2.0 * (self.rho_prime(nu1) - self.rho_prime(nu2)) * psi0(l))

    def omega_prime_old(self, nu1: complex, nu2: complex) -> complex:
        """Antisymmetric legacy combination, from the companion solve."""
        p = self.params0
        eta = p.eta
        nodes = self.grid.nodes
        g0 = self.solve_G0(nu2)
        gdot2 = self.solve_gdot_companion(nu2)
        e1 = bare_energy(nu1 - nodes, p.gamma)
        psi_dot_old = 2.0 * complex(np.sum(self.mw0 * (
            -gdot2 * e1 + g0 * eta * _coth(nodes - nu1 - eta))))
        return -psi_dot_old + eta * (psi0(nu1 - nu2 + eta) + psi0(nu1 - nu2 - eta))

    def symmetric_combination_direct(self, nu1: complex, nu2: complex) -> complex:
        """(1/2)(omega'_old + omega') from the derivative solves."""
        p = self.params0
        nodes = self.grid.nodes
        g0_2 = self.solve_G0(nu2)
        gprime = self.solve_gdot_deformed(nu2) + self.solve_gdot_companion(nu2)
        rp = self.rho_prime_at_nodes()
        e1 = bare_energy(nu1 - nodes, p.gamma)
        return ((self.rho_prime(nu1) - self.rho_prime(nu2)) * psi0(nu1 - nu2)
                - self.rho_prime(nu1) * complex(np.sum(
                    self.mw0 * g0_2 * _coth(nodes - nu1)))
                - complex(np.sum(self.mw0 * rp * g0_2 * e1))
                + complex(np.sum(self.mw0 * gprime * e1)))

    def symmetric_combination_dressed(self, nu1: complex, nu2: complex) -> complex:
        """Same combination after eliminating the derivative solve."""
        nodes = self.grid.nodes
        g0_2 = self.solve_G0(nu2)
        g0_1 = self.solve_G0(nu1)
        rp = self.rho_prime_at_nodes()
        return ((self.rho_prime(nu1) - self.rho_prime(nu2)) * psi0(nu1 - nu2)
                - self.rho_prime(nu1) * complex(np.sum(
                    self.mw0 * g0_2 * _coth(nodes - nu1)))
                - self.rho_prime(nu2) * complex(np.sum(
                    self.mw0 * g0_1 * _coth(nodes - nu2)))
                - complex(np.sum(self.mw0 * rp * g0_1 * g0_2)))


def omega_prime(params: ModelParams, nu1: complex, nu2: complex,
                grid: ContourGrid | None = None,
                context: AlphaZeroContext | None = None,
                eps_alpha: float = 1e-4, cross_tol: float = 1e-6) -> complex:
    """d/dalpha of xi^(-alpha) omega at alpha = 0, with a dual-route check.

    Primary route: dedicated linear solves for the alpha-derivatives.
    Check route: Richardson-refined central differences of the full
    two-point function at alpha = +-eps and +-eps/2.
    """
    if context is None:
        if grid is None:
            grid = build_contour(params.gamma)
        context = AlphaZeroContext(params, grid, eps_alpha=eps_alpha)
    direct = context.omega_prime_direct(nu1, nu2)

    l = nu1 - nu2

    def fd(eps):
        om_p = _omega_at_alpha(context, eps, nu1, nu2)
        om_m = _omega_at_alpha(context, -eps, nu1, nu2)
        return (cmath.exp(-eps * l) * om_p - cmath.exp(eps * l) * om_m) / (2.0 * eps)

    d1 = fd(eps_alpha)
    d2 = fd(eps_alpha / 2.0)
    check = (4.0 * d2 - d1) / 3.0
    if abs(direct - check) > cross_tol * max(1.0, abs(direct)):
        raise ConsistencyError(
            f"omega' routes disagree: direct={direct:.10g} fd={check:.10g}")
    return direct


def _omega_at_alpha(context: AlphaZeroContext, alpha: float, nu1: complex,
                    nu2: complex) -> complex:
    rf = context._field(alpha)
    par = rf.params
    gt = solve_G(par, rf, rf.grid, nu2)
    return compute_omega(par, rf, nu1, nu2, g_table=gt)
