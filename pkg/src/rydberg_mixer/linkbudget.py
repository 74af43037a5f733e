"""Horn-to-cell link arithmetic: dBm, attenuator chains, far-field E, cell factor."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError

__all__ = [
    "FAR_FIELD_CONSTANT",
    "AntennaLink",
    "PowerChain",
    "CellFactor",
    "db_to_linear",
    "dbm_to_watts",
    "watts_to_dbm",
    "chain_output_dbm",
    "far_field_distance",
    "e_far_field",
    "e_cell",
    "power_for_e_cell",
]

# sqrt(P G * 59.9585) / R gives V/m; ~ eta0 / (2 pi), kept as printed for bit-compatibility.
FAR_FIELD_CONSTANT = 59.9585


@dataclass(frozen=True)
class AntennaLink:
    gain_db: float = 15.55
    gain_uncertainty_db: float = 0.4
    distance_r: float = 0.385
    aperture_diagonal_a: float = 48.28e-3
    rf_wavelength: float = 15.286e-3

    def __post_init__(self):
        if not self.distance_r > 0:
            raise DomainError("distance_r must be > 0")
        if not self.rf_wavelength > 0:
            raise DomainError("rf_wavelength must be > 0")
        if not self.aperture_diagonal_a > 0:
            raise DomainError("aperture_diagonal_a must be > 0")

    @property
    def gain_linear(self) -> float:
        return db_to_linear(self.gain_db)

    @property
    def gain_rel_uncertainty(self) -> float:
        """Relative field uncertainty from the gain tolerance (E ~ sqrt(G))."""
        return 10.0 ** (self.gain_uncertainty_db / 20.0) - 1.0


@dataclass(frozen=True)
class PowerChain:
    generator_power_dbm: float
    losses_db: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "losses_db", tuple(float(x) for x in self.losses_db))
        if any(loss < 0 for loss in self.losses_db):
            raise DomainError("chain losses must be >= 0 dB")


@dataclass(frozen=True)
class CellFactor:
    value: float = 0.90
    fit_uncertainty: float = 0.0

    def __post_init__(self):
        if not self.value > 0:
            raise DomainError("cell factor must be > 0")


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0) if np.ndim(db) else 10.0 ** (db / 10.0)


def dbm_to_watts(p_dbm):
    p = np.asarray(p_dbm, dtype=float)
    out = 10.0 ** ((p - 30.0) / 10.0)
    return float(out) if out.ndim == 0 else out


def watts_to_dbm(p_watts):
    p = np.asarray(p_watts, dtype=float)
    if np.any(~(p > 0)):
        raise DomainError("power in W must be positive to express in dBm")
    out = 10.0 * np.log10(p) + 30.0
    return float(out) if out.ndim == 0 else out


def chain_output_dbm(c: PowerChain) -> float:
    """Power delivered after every loss in the chain."""
    return c.generator_power_dbm - math.fsum(c.losses_db)


def far_field_distance(link: AntennaLink) -> float:
    """Fraunhofer distance 2 a**2 / lambda in m."""
    return 2.0 * link.aperture_diagonal_a ** 2 / link.rf_wavelength


def e_far_field(p_rf, link: AntennaLink = AntennaLink()):
    """Free-space E (V/m) at the link distance for ``p_rf`` W into the horn."""
    p = np.asarray(p_rf, dtype=float)
    if np.any(p < 0):
        raise DomainError("radiated power must be >= 0")
    if link.distance_r < far_field_distance(link):
        warnings.warn(
            f"distance {link.distance_r:g} m is inside the far-field distance "
            f"{far_field_distance(link):g} m",
            RuntimeWarning,
            stacklevel=2,
        )
    out = np.sqrt(FAR_FIELD_CONSTANT * p * link.gain_linear) / link.distance_r
    return float(out) if out.ndim == 0 else out


def e_cell(p_rf, link: AntennaLink = AntennaLink(), cf: CellFactor = CellFactor()):
    """Field inside the vapor cell: cell factor times the far-field value."""
    return cf.value * e_far_field(p_rf, link)


def power_for_e_cell(e_vpm, link: AntennaLink = AntennaLink(), cf: CellFactor = CellFactor()):
    """Inverse of ``e_cell``: horn power in W that produces ``e_vpm`` in the cell."""
    e = np.asarray(e_vpm, dtype=float) / cf.value
    out = (e * link.distance_r) ** 2 / (FAR_FIELD_CONSTANT * link.gain_linear)
    return float(out) if out.ndim == 0 else out
