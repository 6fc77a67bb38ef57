"""Physical coefficients of the coupled poroelastic / free-flow model.

All parameters are element-wise constant (uniform per region here); the
presets encode the verification cases and the driven-flow demo sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MaterialModel:
    """Coefficient set for both regions and the interface.

    Poroelastic region: densities ``rho_s``/``rho_f``, porosity ``phi``,
    tortuosity ``a``, viscosity-permeability ratio ``eta``/``kappa``,
    Lame moduli ``lam``/``mu``, Biot-Willis ``beta`` and Biot modulus
    ``m``.  Fluid region: ``rho_f`` and viscosity ``mu_f``.  Interface:
    exposure fraction ``alpha``, slip coefficient ``delta``, entry
    resistance ``gamma``.
    """

    rho_s: float = 1.0
    rho_f: float = 1.0
    phi: float = 0.5
    a: float = 1.0
    eta: float = 1.0
    kappa: float = 1.0
    lam: float = 1.0
    mu: float = 1.0
    beta: float = 1.0
    m: float = 1.0
    mu_f: float = 0.5
    alpha: float = 1.0
    delta: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.phi < 1.0:
            raise ValueError(f"porosity phi={self.phi} must lie in (0, 1)")
        if self.a < 1.0:
            raise ValueError(f"tortuosity a={self.a} must be >= 1")
        for name in ("eta", "kappa", "mu", "m", "mu_f", "rho_f", "rho_s",
                     "alpha", "delta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if not self.phi < self.beta <= 1.0:
            raise ValueError(f"need phi < beta <= 1, got phi={self.phi}, "
                             f"beta={self.beta}")

    # -- derived quantities -------------------------------------------

    @property
    def rho(self):
        """Average density phi rho_f + (1 - phi) rho_s."""
        return self.phi * self.rho_f + (1.0 - self.phi) * self.rho_s

    @property
    def rho_w(self):
        """Effective fluid density (a / phi) rho_f."""
        return self.a / self.phi * self.rho_f

    @property
    def eta_over_kappa(self):
        return self.eta / self.kappa

    @property
    def cbar(self):
        """Spectral norm of the stiffness tensor on symmetric matrices."""
        return stiffness_norm(self.lam, self.mu)

    @property
    def mbar(self):
        return self.m

    def density_block(self):
        """The 2x2 mass coupling [[rho, rho_f], [rho_f, rho_w]]."""
        return np.array([[self.rho, self.rho_f], [self.rho_f, self.rho_w]])

    def density_block_pd(self):
        try:
            np.linalg.cholesky(self.density_block())
            return True
        except np.linalg.LinAlgError:
            return False

    # -- constitutive laws --------------------------------------------

    def elastic_stress(self, eps):
        """sigma_e = 2 mu eps + lam tr(eps) I for (..., 2, 2) strains."""
        eps = np.asarray(eps, float)
        out = 2.0 * self.mu * eps.copy()
        tr = eps[..., 0, 0] + eps[..., 1, 1]
        out[..., 0, 0] += self.lam * tr
        out[..., 1, 1] += self.lam * tr
        return out

    def pore_pressure(self, div_u, div_w):
        """p_p = -m (beta div u + div w)."""
        return -self.m * (self.beta * np.asarray(div_u)
                          + np.asarray(div_w))

    def total_stress(self, eps_u, div_u, div_w):
        """sigma_p = sigma_e(u) - beta p_p I."""
        out = self.elastic_stress(eps_u)
        bp = self.beta * self.pore_pressure(div_u, div_w)
        out[..., 0, 0] -= bp
        out[..., 1, 1] -= bp
        return out


def stiffness_norm(lam, mu):
    """|C^{1/2}|_2^2 for the 2D isotropic stiffness tensor.

    C acts on symmetric matrices with eigenvalues 2 mu (deviatoric) and
    2 mu + 2 lam (spherical), hence the norm is 2 mu + 2 lam for lam >= 0.
    """
    return max(2.0 * mu, 2.0 * mu + 2.0 * lam)


PRESETS = {
    # verification cases: unit-square regions, smooth reference fields
    "test1": MaterialModel(lam=1.0, mu=1.0, alpha=1.0, delta=1.0, gamma=0.0),
    "test2": MaterialModel(lam=1.0, mu=0.5, alpha=2.0, delta=1.0, gamma=0.0),
    # surface/subsurface flow demo, moderate and near-incompressible sets
    "test3A": MaterialModel(lam=1.0, mu=1.0, alpha=1.0, delta=1.0, gamma=1.0),
    "test3B": MaterialModel(lam=1e6, mu=1.0, eta=1.0, kappa=1e-4, m=1e4,
                            alpha=1.0, delta=100.0, gamma=1.0),
}


def material_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown material preset {name!r}; "
                       f"available: {sorted(PRESETS)}") from None
