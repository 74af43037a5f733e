"""Field envelope -> probe transmission -> photodiode voltage.

The EIT line is a phenomenological pair of Lorentzians (FWHM = EIT
linewidth) displaced by +/- half the AT splitting. With the probe locked on
resonance only the zero-detuning value matters, which has the closed form
``background + contrast / (1 + (E / E_AT)**2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .atoms import CESIUM_34D_35P, RydbergTransition, at_splitting, min_detectable_at_field
from .exceptions import DomainError
from .fields import TimeSeries

__all__ = [
    "EitModel",
    "PhotodiodeModel",
    "eit_spectrum",
    "transmission_at_resonance",
    "if_gain",
    "photodiode_voltage",
    "photodiode_trace",
    "PhotodiodeTransducer",
]


@dataclass(frozen=True)
class EitModel:
    transition: RydbergTransition = field(default_factory=lambda: CESIUM_34D_35P)
    contrast: float = 0.5
    background_transmission: float = 0.3

    def __post_init__(self):
        if not 0 < self.contrast <= 1:
            raise DomainError(f"contrast must lie in (0, 1], got {self.contrast!r}")
        if not 0 <= self.background_transmission < 1:
            raise DomainError(f"background must lie in [0, 1), got {self.background_transmission!r}")
        if self.background_transmission + self.contrast > 1 + 1e-12:
            raise DomainError("background_transmission + contrast must not exceed 1")

    @property
    def e_at(self) -> float:
        return min_detectable_at_field(self.transition)


@dataclass(frozen=True)
class PhotodiodeModel:
    responsivity_gain: float = 1.0  # V per unit transmission
    dark_voltage: float = 0.0
    noise_density: float = 0.0  # V/sqrt(Hz)
    rng_seed: int = 0

    def __post_init__(self):
        if not self.responsivity_gain > 0:
            raise DomainError("responsivity_gain must be > 0")
        if not self.noise_density >= 0:
            raise DomainError("noise_density must be >= 0")

    def noise_std(self, sample_rate: float) -> float:
        """Per-sample standard deviation of the white noise at ``sample_rate``."""
        return self.noise_density * math.sqrt(sample_rate / 2.0)


def _lorentzian(x, fwhm):
    u = 2.0 * x / fwhm
    return 1.0 / (1.0 + u * u)


def eit_spectrum(m: EitModel, coupling_detuning, e_field: float):
    """Probe transmission versus coupling-laser detuning (Hz) at field ``e_field``."""
    split = at_splitting(e_field, m.transition)
    gamma = m.transition.eit_linewidth
    d = np.asarray(coupling_detuning, dtype=float)
    peaks = _lorentzian(d - split / 2, gamma) + _lorentzian(d + split / 2, gamma)
    return m.background_transmission + 0.5 * m.contrast * peaks


def transmission_at_resonance(m: EitModel, e_field):
    """On-resonance transmission, vectorized over ``e_field`` (V/m)."""
    e = np.asarray(e_field, dtype=float)
    if np.any(e < 0):
        raise DomainError("field amplitude must be non-negative")
    x = e / m.e_at
    return m.background_transmission + m.contrast / (1.0 + x * x)


def if_gain(m: EitModel, e_lo):
    """|dT/dE| at the LO operating point, in transmission per V/m.

    Small-signal IF modulation depth per unit signal field; peaks at
    E_LO = E_AT / sqrt(3) and falls once AT splitting dominates.
    """
    x = np.asarray(e_lo, dtype=float) / m.e_at
    return 2.0 * m.contrast * x / (m.e_at * (1.0 + x * x) ** 2)


def photodiode_voltage(m: EitModel, pd: PhotodiodeModel, envelope, sample_rate, rng=None):
    """Voltage samples for one block of envelope samples.

    ``rng`` supplies the noise stream; pass the same generator across
    consecutive blocks to stream a long trace.
    """
    v = pd.dark_voltage + pd.responsivity_gain * transmission_at_resonance(m, envelope)
    if pd.noise_density > 0:
        if rng is None:
            rng = np.random.default_rng(pd.rng_seed)
        v = v + rng.normal(0.0, pd.noise_std(sample_rate), size=v.shape)
    return v


def photodiode_trace(m: EitModel, pd: PhotodiodeModel, envelope: TimeSeries) -> TimeSeries:
    """Photodiode output for a whole envelope trace (deterministic per seed)."""
    if not isinstance(envelope, TimeSeries) or envelope.unit_tag != "volts_per_meter":
        raise TypeError("photodiode_trace needs a TimeSeries tagged volts_per_meter")
    rng = np.random.default_rng(pd.rng_seed)
    v = photodiode_voltage(m, pd, envelope.samples, envelope.sample_rate, rng)
    return TimeSeries(envelope.sample_rate, v, start_time=envelope.start_time, unit_tag="volts")


class PhotodiodeTransducer(BaseEstimator, TransformerMixin):
    """Transformer mapping envelope traces (V/m) to photodiode voltage traces.

    Stateless; ``fit`` only validates parameters. Rows of ``X`` are traces.
    Row ``i`` draws noise from ``seed + i`` so batches stay reproducible.

    Parameters
    ----------
    contrast, background_transmission : float
        EIT line parameters.
    responsivity_gain, dark_voltage, noise_density : float
        Photodiode parameters.
    sample_rate : float
        Sampling rate of the input traces, Hz.
    seed : int
        Base noise seed.
    transition : RydbergTransition, optional
    """

    def __init__(self, contrast=0.5, background_transmission=0.3, responsivity_gain=1.0,
                 dark_voltage=0.0, noise_density=0.0, sample_rate=2e6, seed=0,
                 transition=None):
        self.contrast = contrast
        self.background_transmission = background_transmission
        self.responsivity_gain = responsivity_gain
        self.dark_voltage = dark_voltage
        self.noise_density = noise_density
        self.sample_rate = sample_rate
        self.seed = seed
        self.transition = transition

    def fit(self, X=None, y=None):
        self.eit_ = EitModel(self.transition or CESIUM_34D_35P, self.contrast,
                             self.background_transmission)
        self.photodiode_ = PhotodiodeModel(self.responsivity_gain, self.dark_voltage,
                                           self.noise_density, self.seed)
        return self

    def transform(self, X):
        if not hasattr(self, "eit_"):
            self.fit()
        X = check_array(X, ensure_2d=False)
        rows = np.atleast_2d(X)
        out = np.empty_like(rows)
        for i, row in enumerate(rows):
            rng = np.random.default_rng(self.seed + i)
            out[i] = photodiode_voltage(self.eit_, self.photodiode_, row, self.sample_rate, rng)
        return out if X.ndim == 2 else out[0]
