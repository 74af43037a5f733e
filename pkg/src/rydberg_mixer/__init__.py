"""Simulation of a Rydberg-atom RF mixer and its lock-in detection chain.

Cesium vapor acts as a heterodyne mixer: a local-oscillator field near the
34D5/2 -> 35P3/2 transition beats with a weak signal field, the EIT probe
transmission follows the beat envelope, and a lock-in amplifier recovers the
intermediate-frequency component.
"""
__version__ = "0.1.0"

from .atoms import (CESIUM_34D_35P, CONSTANTS, PhysicalConstants, RydbergTransition,
                    at_splitting, dipole_moment_si, generalized_rabi,
                    min_detectable_at_field, rabi_frequency)
from .calibration import (CalibrationPoint, CellFactorRegressor, combine_uncertainty,
                          e_from_at_splitting, fit_cell_factor, load_calibration_csv)
from .config import ScenarioConfig, parse_config
from .exceptions import ConfigurationError, DomainError, InsufficientDataError, NumericalError
from .fields import (TimeSeries, ToneField, TonePair, envelope_exact, envelope_weak,
                     if_signal, phasor_envelope, synthesize_envelope_trace)
from .linkbudget import (AntennaLink, CellFactor, PowerChain, chain_output_dbm, dbm_to_watts,
                         e_cell, e_far_field, far_field_distance, power_for_e_cell,
                         watts_to_dbm)
from .lockin import (LockInAmplifier, LockInConfig, LockInOutput, cutoff_frequency, demodulate,
                     noise_floor, rejection_db)
from .transducer import (EitModel, PhotodiodeModel, PhotodiodeTransducer, eit_spectrum, if_gain,
                         photodiode_trace, transmission_at_resonance)

__all__ = [
    "CESIUM_34D_35P", "CONSTANTS", "PhysicalConstants", "RydbergTransition", "at_splitting",
    "dipole_moment_si", "generalized_rabi", "min_detectable_at_field", "rabi_frequency",
    "CalibrationPoint", "CellFactorRegressor", "combine_uncertainty", "e_from_at_splitting",
    "fit_cell_factor", "load_calibration_csv", "ScenarioConfig", "parse_config",
    "ConfigurationError", "DomainError", "InsufficientDataError", "NumericalError",
    "TimeSeries", "ToneField", "TonePair", "envelope_exact", "envelope_weak", "if_signal",
    "phasor_envelope", "synthesize_envelope_trace", "AntennaLink", "CellFactor", "PowerChain",
    "chain_output_dbm", "dbm_to_watts", "e_cell", "e_far_field", "far_field_distance",
    "power_for_e_cell", "watts_to_dbm", "LockInAmplifier", "LockInConfig", "LockInOutput",
    "cutoff_frequency", "demodulate", "noise_floor", "rejection_db", "EitModel",
    "PhotodiodeModel", "PhotodiodeTransducer", "eit_spectrum", "if_gain", "photodiode_trace",
    "transmission_at_resonance",
]
