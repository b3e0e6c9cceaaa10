"""Model parameters for the critical XXZ chain in its two lattice realizations.

Two setups share one parameter record:

* ``finite_length`` -- ground state of a length-N chain with twisted
  periodic boundary conditions, anisotropy Delta = cos(gamma), twist
  kappa (physical flux Phi = -kappa*gamma).  Inhomogeneities sit at (or
  near) eta/2 with eta = i*gamma.
* ``temperature`` -- infinite chain at temperature T and field h, treated
  through the staggered (quantum-transfer-matrix) inhomogeneity pattern
  with Trotter number N, or directly in the Trotter limit.  The twist is
  kappa = h/(2*eta*T).

All spectral variables are multiplicative/additive pairs zeta = exp(lambda),
q = exp(eta), xi_j = exp(nu_j), tau_j = exp(beta_j).
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError

MODE_FINITE = "finite_length"
MODE_TEMPERATURE = "temperature"


def _as_complex_list(values):
    return [complex(v) for v in values] if values is not None else None


@dataclass(frozen=True)
class ModelParams:
    """Physical and lattice parameters of one run.

    Fields
    ------
    gamma : anisotropy angle, eta = i*gamma, Delta = cos(gamma), 0 < gamma < pi
    J     : exchange constant, J > 0
    mode  : ``finite_length`` or ``temperature``
    N     : even number of sites (finite length) or Trotter number (temperature)
    T, h  : temperature and longitudinal field (temperature mode; units of J)
    kappa : twist; in temperature mode defaults to h/(2*eta*T)
    alpha : regularizing disorder twist (results at alpha -> 0 are physical)
    beta_inhom    : optional explicit inhomogeneities beta_j (length N)
    trotter_limit : temperature mode only; use the N -> infinity driving term
    nu    : vertical parameters nu_j of the density-matrix columns
    """

    gamma: float
    J: float = 1.0
    mode: str = MODE_TEMPERATURE
    N: int = 16
    T: float = 1.0
    h: float = 0.0
    kappa: complex | None = None
    alpha: complex = 0.0
    beta_inhom: list[complex] | None = None
    trotter_limit: bool = False
    nu: list[complex] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < self.gamma < np.pi:
            raise ConfigurationError(
                f"gamma must satisfy 0 < gamma < pi, got {self.gamma}")
        if self.J <= 0:
            raise ConfigurationError(f"J must be positive, got {self.J}")
        if self.mode not in (MODE_FINITE, MODE_TEMPERATURE):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.N % 2 != 0 or self.N <= 0:
            raise ConfigurationError(f"N must be even and positive, got {self.N}")
        if self.mode == MODE_TEMPERATURE and self.T <= 0:
            raise ConfigurationError(f"T must be positive, got {self.T}")
        if self.trotter_limit and self.mode != MODE_TEMPERATURE:
            raise ConfigurationError("trotter_limit applies to temperature mode only")
        if self.kappa is None:
            object.__setattr__(self, "kappa", self._default_kappa())
        else:
            object.__setattr__(self, "kappa", complex(self.kappa))
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "nu", _as_complex_list(self.nu) or [])
        if self.beta_inhom is not None:
            betas = _as_complex_list(self.beta_inhom)
            if len(betas) != self.N:
                raise ConfigurationError(
                    f"beta_inhom needs N={self.N} entries, got {len(betas)}")
            object.__setattr__(self, "beta_inhom", betas)
            self._check_beta_pattern(betas)

    # -- derived spectral quantities ------------------------------------

    @property
    def eta(self) -> complex:
        return 1j * self.gamma

    @property
    def q(self) -> complex:
        return cmath.exp(1j * self.gamma)

    @property
    def Delta(self) -> float:
        return float(np.cos(self.gamma))

    @property
    def thermal_beta(self) -> complex:
        """beta = 2 J sinh(eta) / T entering the staggered pattern."""
        return 2.0 * self.J * cmath.sinh(self.eta) / self.T

    def _default_kappa(self) -> complex:
        if self.mode == MODE_TEMPERATURE:
            return self.h / (2.0 * self.eta * self.T)
        return 0.0

    def _check_beta_pattern(self, betas):
        if self.mode == MODE_FINITE:
            target = self.eta / 2.0
            radius = 0.25 * self.gamma
            for j, b in enumerate(betas):
                if abs(b - target) > radius:
                    raise ConfigurationError(
                        f"beta_inhom[{j}]={b} is farther than {radius:.3g} "
                        f"from eta/2={target}")
        else:
            u = self.thermal_beta / self.N
            for j, b in enumerate(betas):
                target = u if j % 2 == 1 else self.eta - u
                if abs(b - target) > 0.25 * self.gamma:
                    raise ConfigurationError(
                        f"beta_inhom[{j}]={b} violates the alternating pattern "
                        f"(expected near {target})")

    def betas(self) -> list[complex]:
        """Inhomogeneities actually used; defaults per mode when not given.

        finite_length: beta_j = eta/2.
        temperature:   beta_{2j-1} = eta - beta/N, beta_{2j} = beta/N
                       (1-based pairing), i.e. odd slots near eta, even near 0.
        """
        if self.beta_inhom is not None:
            return list(self.beta_inhom)
        if self.mode == MODE_FINITE:
            return [self.eta / 2.0] * self.N
        u = self.thermal_beta / self.N
        out = []
        for j in range(1, self.N + 1):
            out.append(self.eta - u if j % 2 == 1 else u)
        return out

    @property
    def zeta0(self) -> complex:
        """Spectral point of the dominant eigenvector (q^(1/2) or 1)."""
        if self.mode == MODE_FINITE:
            return cmath.exp(self.eta / 2.0)
        return 1.0 + 0.0j

    @property
    def lambda0(self) -> complex:
        return self.eta / 2.0 if self.mode == MODE_FINITE else 0.0j

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def cache_key(self) -> str:
        betas = self.beta_inhom
        parts = [
            self.mode, f"{self.gamma:.16g}", f"{self.J:.16g}", str(self.N),
            f"{self.T:.16g}", f"{self.h:.16g}",
            repr(complex(self.kappa)), repr(complex(self.alpha)),
            str(self.trotter_limit),
            repr([repr(b) for b in betas]) if betas is not None else "default",
            repr([repr(v) for v in self.nu]),
        ]
        return "|".join(parts)
