"""Isotropic linear elasticity in Lamé form."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IsotropicMaterial:
    mu: float
    lam: float

    def __post_init__(self):
        if not (self.mu > 0 and self.lam > 0):
            raise ValueError(f"Lamé parameters must be positive, got mu={self.mu}, lambda={self.lam}")

    @classmethod
    def from_young_poisson(cls, E, nu):
        """Build from Young's modulus and Poisson ratio (3D relations)."""
        if not E > 0:
            raise ValueError(f"Young's modulus must be positive, got E={E}")
        if not 0.0 < nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in (0, 0.5), got nu={nu}")
        mu = E / (2.0 * (1.0 + nu))
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return cls(mu, lam)

    @property
    def young(self):
        return self.mu * (3.0 * self.lam + 2.0 * self.mu) / (self.lam + self.mu)

    @property
    def poisson(self):
        return self.lam / (2.0 * (self.lam + self.mu))

    def scaled(self, s):
        return IsotropicMaterial(self.mu * s, self.lam * s)


from_young_poisson = IsotropicMaterial.from_young_poisson


def stress(mat, eps):
    """``sigma = 2 mu eps + lambda tr(eps) I``; works on stacks ``(..., d, d)``."""
    eps = np.asarray(eps, dtype=float)
    d = eps.shape[-1]
    tr = np.trace(eps, axis1=-2, axis2=-1)
    return 2.0 * mat.mu * eps + mat.lam * tr[..., None, None] * np.eye(d)


def energy_density(mat, eps):
    """Quadratic form ``C eps : eps = 2 mu eps:eps + lambda (tr eps)^2``."""
    eps = np.asarray(eps, dtype=float)
    d = eps.shape[-1]
    tr = sum(eps[..., i, i] for i in range(d))
    flat = eps.reshape(eps.shape[:-2] + (d * d,))
    return 2.0 * mat.mu * np.einsum("...k,...k->...", flat, flat) + mat.lam * tr * tr
