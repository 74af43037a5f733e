"""Closed-form Rydberg-atom relations for AT-splitting electrometry.

Cyclic frequencies (Hz) and angular frequencies (rad/s) are never mixed:
``at_splitting`` returns Hz, the Rabi helpers return rad/s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import DomainError

__all__ = [
    "PhysicalConstants",
    "CONSTANTS",
    "RydbergTransition",
    "CESIUM_34D_35P",
    "dipole_moment_si",
    "at_splitting",
    "min_detectable_at_field",
    "rabi_frequency",
    "generalized_rabi",
]


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.054571817e-34  # J s, CODATA 2018 (exact h / 2pi)
    elementary_charge: float = 1.602176634e-19  # C, exact
    bohr_radius: float = 0.529177e-10  # m, digit string used for the Cs dipole

    @property
    def ea0(self) -> float:
        """Atomic unit of dipole moment e*a0 in C m."""
        return self.elementary_charge * self.bohr_radius


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class RydbergTransition:
    """One two-photon EIT ladder plus the RF transition it senses.

    Parameters
    ----------
    probe_wavelength : float
        Probe laser wavelength in m.
    coupling_wavelength : float
        Coupling laser wavelength in m.
    dipole_radial, dipole_angular : float
        Radial and angular parts of the RF dipole matrix element; their
        product is the dipole in units of e*a0.
    rf_resonance : float
        RF transition frequency in Hz.
    eit_linewidth : float
        EIT linewidth (FWHM) in Hz.
    """

    probe_wavelength: float = 852e-9
    coupling_wavelength: float = 511.148e-9
    dipole_radial: float = 1476.6048
    dipole_angular: float = 0.48989
    rf_resonance: float = 19.626e9
    eit_linewidth: float = 4e6

    def __post_init__(self):
        for name in ("probe_wavelength", "coupling_wavelength", "rf_resonance", "eit_linewidth"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive, got {value!r}")
        if not self.dipole_radial * self.dipole_angular > 0:
            raise DomainError("dipole_radial * dipole_angular must be positive")

    @property
    def dipole_au(self) -> float:
        """Dipole matrix element in units of e*a0."""
        return self.dipole_radial * self.dipole_angular

    @property
    def wavelength_ratio(self) -> float:
        """lambda_c / lambda_p, the Doppler-mismatch factor of the ladder."""
        return self.coupling_wavelength / self.probe_wavelength


# 133Cs 6S1/2 -> 6P3/2 -> 34D5/2, RF on 34D5/2 -> 35P3/2.
CESIUM_34D_35P = RydbergTransition()


def dipole_moment_si(t: RydbergTransition, constants: PhysicalConstants = CONSTANTS) -> float:
    """Return the RF dipole moment in C m."""
    return t.dipole_au * constants.ea0


def _check_field(e_field):
    if e_field < 0 or math.isnan(e_field):
        raise DomainError(f"field amplitude must be non-negative, got {e_field!r}")


def at_splitting(e_field: float, t: RydbergTransition = CESIUM_34D_35P,
                 constants: PhysicalConstants = CONSTANTS) -> float:
    """Autler-Townes peak separation in Hz observed on the probe scan.

    ``(lambda_c / lambda_p) * E * dipole / (2 pi hbar)``; linear in ``e_field`` (V/m).
    """
    _check_field(e_field)
    return t.wavelength_ratio * e_field * dipole_moment_si(t, constants) / (2 * math.pi * constants.hbar)


def min_detectable_at_field(t: RydbergTransition = CESIUM_34D_35P,
                            constants: PhysicalConstants = CONSTANTS) -> float:
    """Smallest field (V/m) whose AT splitting equals the EIT linewidth."""
    return (2 * math.pi * constants.hbar * t.eit_linewidth
            / (t.wavelength_ratio * dipole_moment_si(t, constants)))


def rabi_frequency(e_field: float, t: RydbergTransition = CESIUM_34D_35P,
                   constants: PhysicalConstants = CONSTANTS) -> float:
    """On-resonance RF Rabi frequency dipole*E/hbar, in rad/s."""
    _check_field(e_field)
    return dipole_moment_si(t, constants) * e_field / constants.hbar


def generalized_rabi(omega0: float, detuning: float) -> float:
    """sqrt(omega0**2 + detuning**2); both arguments in the same angular unit."""
    if omega0 < 0:
        raise DomainError(f"omega0 must be non-negative, got {omega0!r}")
    return math.hypot(omega0, detuning)
