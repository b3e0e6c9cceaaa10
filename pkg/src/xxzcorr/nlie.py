"""Nonlinear integral equation for the auxiliary function a(lambda, kappa).

The dominant transfer-matrix state is encoded by log a satisfying

    log a(l) = d(l) - closed-contour-int K(l - m) log(1 + a(m)) dm/(2 pi i),

with kernel K(l) = coth(l - eta) - coth(l + eta) and a driving term d
that depends on the lattice realization:

* finite length, inhomogeneous:  (N - 2 kappa) eta
      + sum_j log[ sinh(l - beta_j) / sinh(l - beta_j + eta) ]
* finite length, homogeneous: the same with all beta_j = eta/2
* temperature, staggered finite Trotter number:  -2 kappa eta
      + pairwise log combination of the alternating inhomogeneities
* temperature, Trotter limit:  -2 kappa eta - 2 J sinh(eta) e(l) / T,
      e(l) = coth(l) - coth(l + eta)

Branch handling.  Every logarithm above is evaluated factor by factor;
each sinh argument stays in a fixed half plane along the contour, so the
principal value is automatically the continuous branch.  log(1 + a) is
computed from log a by the stable split log a + log1p(1/a) wherever
|a| > 1, which lets the imaginary part inherit the (possibly winding)
branch of log a instead of being clipped to the principal sheet.  The
solved function is a itself; any overall 2 pi i ambiguity of log a
cancels in all downstream integrals.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field

import numpy as np

from .contour import TWO_PI_I, ContourGrid
from .errors import (BranchCutError, ConfigurationError, NonConvergenceError,
                     SingularityError, UsageError)
from .params import MODE_FINITE, MODE_TEMPERATURE, ModelParams

BRANCH_EPS = 1e-10


def kernel(lam, gamma: float):
    """K(l) = coth(l - eta) - coth(l + eta); analytic on the contour strip."""
    eta = 1j * gamma
    return 1.0 / np.tanh(lam - eta) - 1.0 / np.tanh(lam + eta)


def kernel_plus(lam, gamma: float):
    """coth(l - eta) + coth(l + eta) (alpha-derivative of the deformed kernel)."""
    eta = 1j * gamma
    return 1.0 / np.tanh(lam - eta) + 1.0 / np.tanh(lam + eta)


def kernel_deformed(lam, alpha: complex, gamma: float):
    """K_alpha(l) = q^(-alpha) coth(l - eta) - q^alpha coth(l + eta)."""
    eta = 1j * gamma
    qa = cmath.exp(alpha * eta)
    return (1.0 / qa) / np.tanh(lam - eta) - qa / np.tanh(lam + eta)


def bare_energy(lam, gamma: float):
    """e(l) = coth(l) - coth(l + eta)."""
    eta = 1j * gamma
    return 1.0 / np.tanh(lam) - 1.0 / np.tanh(lam + eta)


def log1p_exp(z):
    """Principal log(1 + exp(z)), stable for large |Re z|."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    pos = z.real > 0
    out[pos] = z[pos] + np.log1p(np.exp(-z[pos]))
    out[~pos] = np.log1p(np.exp(z[~pos]))
    # fold the imaginary part back to the principal sheet
    out -= TWO_PI_I * np.round(out.imag / (2.0 * np.pi))
    return out


def unwrap_along(vals):
    """Continuous branch along an ordered path: 2 pi i steps removed."""
    vals = np.asarray(vals, dtype=complex)
    jumps = np.diff(vals.imag)
    shifts = -2.0 * np.pi * np.cumsum(np.round(jumps / (2.0 * np.pi)))
    out = vals.copy()
    out[1:] += 1j * shifts
    return out


def contour_log1p_a(z):
    """log(1 + a) on the contour, continuous along the traversal.

    Input is log a at the nodes in traversal order; the principal values
    of log(1 + a) are unwrapped along the path, which accumulates one
    2 pi i per zero of 1 + a enclosed by the contour (the Bethe roots).
    Returns (w, winding): the branch-corrected values and the total
    winding number picked up over the closed traversal.
    """
    w = unwrap_along(log1p_exp(z))
    winding = float(np.round((w[-1] - log1p_exp(z[-1:])[0]).imag / (2.0 * np.pi)))
    return w, winding


def _kernel_primitive(z, gamma: float):
    """P(z) = log sinh(z - eta) - log sinh(z + eta), the primitive of K.

    Anchored on contour-to-contour differences, where sinh(z - eta) lives
    in the lower half plane and sinh(z + eta) in the upper one (principal
    logs are then the continuous branch).  When the evaluation point
    leaves the strip by up to the band width, the factor whose argument
    crossed the negative real axis picks up the explicit 2 pi i of the
    analytic continuation.
    """
    z = np.asarray(z, dtype=complex)
    eta = 1j * gamma
    zm = z - eta
    zp = z + eta
    t1 = np.log(np.sinh(zm))
    t1 = t1 - TWO_PI_I * ((zm.imag > 0) & (np.sinh(zm).real < 0))
    t2 = np.log(np.sinh(zp))
    t2 = t2 + TWO_PI_I * ((zp.imag < 0) & (np.sinh(zp).real < 0))
    return t1 - t2


class KernelOperator:
    """Kernel integral of log(1 + a) with exact tail and winding handling.

    Along the traversal, log(1 + a) approaches a nonzero constant at the
    far ends and climbs by 2 pi i per enclosed zero of 1 + a.  A reference
    profile that is constant on every quadrature panel (the asymptotic
    constant plus panel-wise winding levels, with the level changes placed
    at panel boundaries) is integrated in closed form through the kernel
    primitive; only the panel-smooth, tail-decaying remainder goes through
    the quadrature rule.  Gauss panels never straddle a reference jump, so
    the rule sees smooth data everywhere.
    """

    def __init__(self, grid: ContourGrid, gamma: float, lam=None):
        self.grid = grid
        self.gamma = gamma
        pts = grid.nodes if lam is None else np.atleast_1d(np.asarray(lam, complex))
        self.pts = pts
        self.kmat = kernel(pts[:, None] - grid.nodes[None, :], gamma) \
            * (grid.weights / TWO_PI_I)[None, :]
        self.panel_of = grid.panel_of()
        self.panel_starts = grid.panel_starts
        # the traversal cut coincides with the first panel break (a corner)
        self.mu_cut = grid.panel_breaks[0]
        self._p_cut = _kernel_primitive(pts - self.mu_cut, gamma)

    def apply(self, z):
        """Closed-contour integral K(l - mu) log(1 + a(mu)) dmu/(2 pi i)."""
        w, winding = contour_log1p_a(z)
        shifts = np.round((w - log1p_exp(z)).imag / (2.0 * np.pi))
        # panel-constant winding reference: level = shift at panel entry
        n_ref = shifts[self.panel_starts][self.panel_of]
        w_inf = 0.5 * (w[0] + (w[-1] - TWO_PI_I * winding))
        out = self.kmat @ (w - w_inf - TWO_PI_I * n_ref)
        level = shifts[self.panel_starts]
        jumps = np.diff(level)
        for p in np.nonzero(jumps)[0]:
            pos = self.grid.panel_breaks[p + 1]
            out = out + jumps[p] * _kernel_primitive(self.pts - pos, self.gamma)
        if winding != 0.0:
            out = out - winding * self._p_cut
        return out, winding


def driving_term(params: ModelParams, twist: complex, lam, eps_edge: float = 1e-8):
    """Twist-dependent inhomogeneous term of the integral equation.

    Raises SingularityError when lam sits within eps_edge of a logarithmic
    branch point (a beta_j or beta_j - eta, or the origin in the Trotter
    limit).
    """
    lam = np.asarray(lam, dtype=complex)
    eta = params.eta
    if params.mode == MODE_FINITE:
        betas = params.betas()
        total = (params.N - 2.0 * twist) * eta * np.ones_like(lam)
        for b in betas:
            z1 = lam - b
            z2 = lam - b + eta
            _guard_branch_points(z1, z2, eps_edge, b)
            total = total + np.log(np.sinh(z1)) - np.log(np.sinh(z2))
        return total
    if params.trotter_limit:
        if np.any(np.abs(lam) < eps_edge) or np.any(np.abs(lam + eta) < eps_edge):
            raise SingularityError("lambda at a pole of the bare energy")
        return -2.0 * twist * eta - 2.0 * params.J * cmath.sinh(eta) \
            * bare_energy(lam, params.gamma) / params.T
    betas = params.betas()
    total = -2.0 * twist * eta * np.ones_like(lam)
    for j in range(params.N // 2):
        b_odd = betas[2 * j]       # near eta
        b_even = betas[2 * j + 1]  # near 0
        z1 = lam - b_even
        z2 = lam - b_odd + 2.0 * eta
        z3 = lam - b_even + eta
        z4 = lam - b_odd + eta
        _guard_branch_points(z1, z3, eps_edge, b_even)
        _guard_branch_points(z4, z2, eps_edge, b_odd)
        total = total + (np.log(np.sinh(z1)) + np.log(np.sinh(z2))
                         - np.log(np.sinh(z3)) - np.log(np.sinh(z4)))
    return total


def _guard_branch_points(z1, z2, eps_edge, b):
    if np.any(np.abs(np.sinh(z1)) < eps_edge) or np.any(np.abs(np.sinh(z2)) < eps_edge):
        raise SingularityError(
            f"lambda within {eps_edge} of a branch point tied to beta={b}")


@dataclass
class AuxSolution:
    """Solved log a on the grid plus everything needed to evaluate off-grid."""

    grid: ContourGrid
    params: ModelParams
    twist: complex
    mode: str
    log_a_values: np.ndarray
    residual: float
    n_iter: int
    winding: float = 0.0
    residual_history: list = field(default_factory=list)

    @property
    def w_values(self) -> np.ndarray:
        """log(1 + a) at the nodes, continuous along the traversal."""
        w, _ = contour_log1p_a(self.log_a_values)
        return w

    def kernel_weights(self) -> np.ndarray:
        return self.grid.weights / TWO_PI_I

    def to_record(self) -> dict:
        g = self.grid
        return {
            "schema": "aux-solution/1",
            "gamma": g.gamma,
            "mode": self.mode,
            "twist": [self.twist.real, self.twist.imag],
            "grid": {"half_width": g.half_width, "cutoff": g.cutoff,
                     "points_per_side": g.points_per_side,
                     "foci": list(g.foci), "n_nodes": int(g.size)},
            "log_a": [[v.real, v.imag] for v in self.log_a_values],
            "residual": self.residual,
        }


def solve_aux(params: ModelParams, twist: complex, grid: ContourGrid,
              tol: float = 1e-12, max_iter: int = 500, damping: float = 0.5,
              init: np.ndarray | None = None) -> AuxSolution:
    """Damped Picard iteration for log a on the contour nodes.

    x_{n+1} = (1 - damping) x_n + damping RHS(x_n); returns once the
    sup-node residual of the undamped equation drops below tol.
    """
    if tol <= 0:
        raise ConfigurationError(f"tol must be positive, got {tol}")
    if not 0.0 < damping <= 1.0:
        raise ConfigurationError(f"damping must be in (0, 1], got {damping}")

    nodes = grid.nodes
    drive = driving_term(params, twist, nodes)
    op = KernelOperator(grid, params.gamma)

    z = drive.copy() if init is None else np.asarray(init, dtype=complex).copy()
    history = []
    residual = np.inf
    winding = 0.0
    for it in range(1, max_iter + 1):
        w, _ = contour_log1p_a(z)
        _check_branch(z, w)
        term, winding = op.apply(z)
        rhs = drive - term
        residual = float(np.max(np.abs(rhs - z)))
        history.append(residual)
        if residual < tol:
            z = rhs  # final polish: land exactly on the re-substituted values
            break
        z = (1.0 - damping) * z + damping * rhs
    else:
        raise NonConvergenceError(
            f"Picard iteration did not reach tol={tol} in {max_iter} steps "
            f"(last residual {residual:.3e})", history)

    mode = params.mode + (":trotter" if params.trotter_limit else "")
    return AuxSolution(grid=grid, params=params, twist=complex(twist), mode=mode,
                       log_a_values=z, residual=residual, n_iter=it,
                       winding=winding, residual_history=history)


def _check_branch(z, w):
    # 1 + a can only vanish where |a| is near 1, i.e. Re log a near 0
    risky = np.abs(z.real) < 50.0
    if np.any(np.abs(1.0 + np.exp(z[risky])) < BRANCH_EPS):
        raise BranchCutError(
            "1 + a vanishes at a node; use smaller damping or a different "
            "contour half_width")
    jumps = np.abs(np.diff(w.imag))
    if np.any(jumps > np.pi):
        raise BranchCutError(
            "log(1 + a) jumps by more than pi between adjacent nodes; "
            "use smaller damping or a different contour half_width")


def eval_aux(sol: AuxSolution, params: ModelParams, lam):
    """log a off the grid by re-substituting the solved data into the RHS.

    Valid for lam in the strip |Im lam| < gamma - half_width (kernel poles
    stay off the contour); singularities of the driving term propagate.
    """
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=complex))
    g = sol.grid
    band = params.gamma - g.half_width
    if np.any(np.abs(lam_arr.imag) >= band - 1e-12):
        raise UsageError(
            f"eval_aux needs |Im lam| < gamma - half_width = {band:.6g}; "
            "use aux_value for the outer bands")
    drive = driving_term(params, sol.twist, lam_arr)
    term, _ = KernelOperator(g, params.gamma, lam=lam_arr).apply(sol.log_a_values)
    out = drive - term
    return out if np.ndim(lam) else out[0]


# -- values of a beyond the strip (band-aware analytic continuation) -------


def _branch_point_value(params: ModelParams, lam: complex, eps: float):
    """Exact zero/pole of a at the inhomogeneity-driven branch points."""
    for b in params.betas():
        if abs(cmath.sinh(lam - b)) < eps:
            return 0.0 + 0.0j
        if abs(cmath.sinh(lam - b + params.eta)) < eps:
            return complex(np.inf)
    return None


def aux_value(sol: AuxSolution, lam: complex, eps: float = 1e-9) -> complex:
    """a(lam) anywhere in |Im lam| < gamma + half_width.

    Inside the evaluation strip this is exp(eval_aux); in the outer bands
    the kernel pole that crossed the contour contributes one explicit
    factor of (1 + a) at the shifted point:

        upper band:  a(l) = a_formula(l) / (1 + a(l - eta))
        lower band:  a(l) = a_formula(l) * (1 + a(l + eta))
    """
    p = sol.params
    special = _branch_point_value(p, lam, eps)
    if special is not None:
        return special
    g = sol.grid
    y = float(np.imag(lam))
    band = p.gamma - g.half_width
    if abs(y) < band - 1e-12:
        return cmath.exp(complex(eval_aux(sol, p, lam)))
    if abs(y) > p.gamma + g.half_width - 1e-12:
        raise UsageError(f"aux_value supports |Im lam| < gamma + half_width, "
                         f"got Im lam = {y:.6g}")
    drive = driving_term(p, sol.twist, np.array([lam]))[0]
    term, _ = KernelOperator(g, p.gamma, lam=np.array([lam])).apply(
        sol.log_a_values)
    formula = cmath.exp(drive - term[0])
    if y > 0:
        inner = aux_value(sol, lam - p.eta, eps)
        return formula / (1.0 + inner)
    inner = aux_value(sol, lam + p.eta, eps)
    return formula * (1.0 + inner)


def aux_ratio(sol_twisted: AuxSolution, sol_base: AuxSolution, lam: complex) -> complex:
    """a(lam, twist2) / a(lam, twist1): regular even at the branch points.

    The singular driving logarithms cancel between the two twists, leaving
    exp(-2 (twist2 - twist1) eta) times the kernel-integral difference.
    """
    p = sol_base.params
    g = sol_base.grid
    y = float(np.imag(lam))
    dtw = sol_twisted.twist - sol_base.twist
    op = KernelOperator(g, p.gamma, lam=np.array([lam]))
    term_t, _ = op.apply(sol_twisted.log_a_values)
    term_b, _ = op.apply(sol_base.log_a_values)
    formula = cmath.exp(-2.0 * dtw * p.eta - (term_t[0] - term_b[0]))
    band = p.gamma - g.half_width
    if abs(y) < band - 1e-12:
        return formula
    if abs(y) > p.gamma + g.half_width - 1e-12:
        raise UsageError("aux_ratio supports |Im lam| < gamma + half_width")
    shift = -p.eta if y > 0 else p.eta
    a_base = aux_value(sol_base, lam + shift)
    a_tw = aux_value(sol_twisted, lam + shift)
    corr = (1.0 + a_base) / (1.0 + a_tw)
    return formula * corr if y > 0 else formula / corr


def find_bethe_roots(sol: AuxSolution, n_roots: int | None = None,
                     scan_half_range: float = 4.0, tol: float = 1e-11):
    """Zeros of 1 + a inside the contour by scan plus Newton refinement."""
    p = sol.params
    n_roots = n_roots if n_roots is not None else p.N // 2
    xs = np.linspace(-scan_half_range, scan_half_range, 160)
    vals = np.exp(eval_aux(sol, p, xs + 0.0j)) + 1.0
    idx = [i for i in range(1, len(xs) - 1)
           if abs(vals[i]) < abs(vals[i - 1]) and abs(vals[i]) < abs(vals[i + 1])]
    idx.sort(key=lambda i: abs(vals[i]))
    roots = []
    for i in idx:
        z = complex(xs[i])
        for _ in range(60):
            f = cmath.exp(complex(eval_aux(sol, p, z))) + 1.0
            if abs(f) < tol:
                break
            h = 1e-7
            fp = (complex(eval_aux(sol, p, z + h)) - complex(eval_aux(sol, p, z - h))) \
                / (2.0 * h)
            fp = fp * (f - 1.0)  # d a / dz = a * d log a / dz
            if abs(fp) < 1e-300:
                break
            z = z - f / fp
        else:
            continue
        if abs(cmath.exp(complex(eval_aux(sol, p, z))) + 1.0) < 10 * tol \
                and all(abs(z - r) > 1e-6 for r in roots):
            roots.append(z)
        if len(roots) == n_roots:
            break
    return sorted(roots, key=lambda r: r.real)
