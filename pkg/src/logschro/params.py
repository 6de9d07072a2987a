"""Physical constants and model parameters.

The preacceleration time tau and the radiative strength gamma are derived
quantities, so their defining relations hold exactly by construction:

    tau   = (2/3) q^2 / (m0 c^3)
    gamma = 2 tau nu k T

Two unit systems are supported.  The dimensionless mode (hbar = m = k = 1)
is what every experiment runs in; Gaussian CGS exists for the physical
electron check of ``compute_tau``.  Only the combination gamma is physically
distinguishable -- rescaling q^2 by a factor while dividing nu by the same
factor leaves every prediction unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError


def compute_tau(q: float, m0: float, c: float) -> float:
    """Preacceleration time (2/3) q^2/(m0 c^3) in Gaussian units."""
    if q <= 0 or m0 <= 0 or c <= 0:
        raise ParameterError("q, m0 and c must all be positive")
    return (2.0 / 3.0) * q * q / (m0 * c ** 3)


@dataclass(frozen=True)
class PhysicalParams:
    """Immutable parameter set; tau and gamma are derived properties."""

    hbar: float = 1.0
    m: float = 1.0
    m0: float = 1.0
    q: float = 1.0
    c: float = 1.0
    k: float = 1.0
    T: float = 0.0
    nu: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "m", "m0", "c", "k", "nu"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be strictly positive")
        if self.q <= 0:
            raise ParameterError("q must be strictly positive")
        if self.T < 0:
            raise ParameterError("T must be nonnegative")

    @property
    def tau(self) -> float:
        return compute_tau(self.q, self.m0, self.c)

    @property
    def gamma(self) -> float:
        return 2.0 * self.tau * self.nu * self.k * self.T

    @property
    def kT(self) -> float:
        return self.k * self.T

    @classmethod
    def dimensionless(cls, tau: float = 1.0, nu: float = 1.0, kT: float = 0.0,
                      hbar: float = 1.0, m: float = 1.0, m0: float = 1.0) -> "PhysicalParams":
        """hbar = m = k = 1 convention; the charge is back-solved so that the
        requested tau is reproduced by the defining relation."""
        if tau <= 0:
            raise ParameterError("tau must be strictly positive")
        if kT < 0:
            raise ParameterError("kT must be nonnegative")
        q = math.sqrt(1.5 * tau * m0)
        return cls(hbar=hbar, m=m, m0=m0, q=q, c=1.0, k=1.0, T=kT, nu=nu)

    def replace(self, **changes) -> "PhysicalParams":
        from dataclasses import replace as _replace
        return _replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "hbar": self.hbar, "m": self.m, "m0": self.m0, "q": self.q,
            "c": self.c, "k": self.k, "T": self.T, "nu": self.nu,
            "tau": self.tau, "gamma": self.gamma,
        }


def gamma_from_params(p: PhysicalParams) -> float:
    """Radiative strength 2 tau nu k T = (4/3) q^2 nu k T/(m0 c^3)."""
    return p.gamma


def nu_for_quantum_match(p: PhysicalParams) -> float:
    """Diffusion constant making gamma equal hbar^2/2m at the given tau and T.

    Raises at T = 0, where no finite nu can produce a nonzero gamma.
    """
    if p.T <= 0:
        raise ParameterError("quantum matching is impossible at zero temperature")
    return p.hbar ** 2 / (4.0 * p.m * p.tau * p.k * p.T)


# Gaussian-CGS values used by the physical electron check.
ELECTRON_CHARGE_ESU = 4.803e-10
ELECTRON_MASS_G = 9.109e-28
SPEED_OF_LIGHT_CM_S = 2.998e10
