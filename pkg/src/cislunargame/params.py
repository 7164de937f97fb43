"""System-level constants for the circular restricted three-body problem.

All dynamics run in the standard nondimensional rotating frame: the
primary-secondary distance is one length unit and the frame rotation rate
is one inverse time unit, so the secondary completes a revolution in 2*pi
nondimensional time.  Physical conversions (km, seconds, Newtons) only
happen at the edges: scenario configs, thrust inputs, and logs.
"""

from __future__ import annotations

from dataclasses import dataclass

# Earth-Moon values used by every bundled scenario.
EARTH_MOON_MU = 0.0121505856
EARTH_MOON_LU_KM = 384400.0
EARTH_MOON_TU_S = 375190.0

# States closer than this to either primary are treated as singular.
SINGULARITY_GUARD = 1e-6


@dataclass(frozen=True)
class SystemParams:
    """Mass ratio and unit scales for one primary-secondary system.

    Parameters
    ----------
    mu : float
        Mass ratio m2 / (m1 + m2), in (0, 0.5].
    lu_km : float
        Length unit in kilometres (primary-secondary separation).
    tu_s : float
        Time unit in seconds (inverse rotation rate).
    """

    mu: float = EARTH_MOON_MU
    lu_km: float = EARTH_MOON_LU_KM
    tu_s: float = EARTH_MOON_TU_S

    def __post_init__(self):
        if not 0.0 < self.mu <= 0.5:
            raise ValueError(f"mu must lie in (0, 0.5], got {self.mu}")
        if self.lu_km <= 0.0:
            raise ValueError(f"lu_km must be positive, got {self.lu_km}")
        if self.tu_s <= 0.0:
            raise ValueError(f"tu_s must be positive, got {self.tu_s}")

    @property
    def vu_kms(self) -> float:
        """Velocity unit in km/s."""
        return self.lu_km / self.tu_s

    @property
    def period_to_days(self) -> float:
        """Multiply a nondimensional time by this to get days."""
        return self.tu_s / 86400.0

    def thrust_to_accel(self, mass_kg: float) -> float:
        """Scale factor from thrust in Newtons to nondimensional acceleration.

        A force u [N] on a spacecraft of mass m [kg] produces u/m [m/s^2],
        which nondimensionalises by TU^2 / LU with LU in metres.
        """
        if mass_kg <= 0.0:
            raise ValueError(f"mass_kg must be positive, got {mass_kg}")
        return self.tu_s**2 / (mass_kg * self.lu_km * 1000.0)


EARTH_MOON = SystemParams()
