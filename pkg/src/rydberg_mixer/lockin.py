"""Digital dual-phase lock-in amplifier.

The input is mixed with cos/sin at the reference frequency and each
quadrature passes through ``slope / 6`` identical one-pole IIR stages with
coefficient ``a = exp(-1 / (tau * fs))``. Stages are run as separate
first-order ``lfilter`` calls: a combined high-order polynomial with four
poles at 1 - 1e-7 would be numerically useless.

Two cutoff conventions exist. ``inv-2pi-tau`` (1 / (2 pi tau)) is the -3 dB
point of each realized stage. ``inv-tau`` (1 / tau) is the nominal figure
some instruments quote. The convention changes reported cutoffs and
predicted rejection only. The filter itself is always the same.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.signal import lfilter
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigurationError, DomainError
from .fields import TimeSeries

__all__ = [
    "SLOPES",
    "CONVENTIONS",
    "LockInConfig",
    "LockInOutput",
    "pole_count",
    "cutoff_frequency",
    "rejection_db",
    "cascade_gain",
    "step_residual",
    "noise_floor",
    "LockInAmplifier",
    "demodulate",
]

SLOPES = (6, 12, 18, 24)
CONVENTIONS = ("inv-2pi-tau", "inv-tau")


def pole_count(slope_db_per_octave) -> int:
    """Number of cascaded one-pole stages for a roll-off slope in dB/octave."""
    try:
        slope = int(slope_db_per_octave)
    except (TypeError, ValueError):
        slope = None
    if slope not in SLOPES or slope != slope_db_per_octave:
        raise ConfigurationError(
            f"unsupported filter slope {slope_db_per_octave!r} dB/octave; choose one of {SLOPES}"
        )
    return slope // 6


@dataclass(frozen=True)
class LockInConfig:
    f_ref: float
    time_constant: float
    slope_db_per_octave: int = 24
    sample_rate: float = 2e6
    settle_factor: float = 10.0
    cutoff_convention: str = "inv-2pi-tau"

    def __post_init__(self):
        if not self.f_ref > 0:
            raise ConfigurationError(f"f_ref must be > 0, got {self.f_ref!r}")
        if not self.time_constant > 0:
            raise ConfigurationError(f"time_constant must be > 0, got {self.time_constant!r}")
        if not self.sample_rate > 4 * self.f_ref:
            raise ConfigurationError(
                f"sample_rate {self.sample_rate:g} Hz must exceed 4*f_ref = {4 * self.f_ref:g} Hz"
            )
        if not self.settle_factor > 0:
            raise ConfigurationError("settle_factor must be > 0")
        if self.cutoff_convention not in CONVENTIONS:
            raise ConfigurationError(
                f"cutoff_convention must be one of {CONVENTIONS}, got {self.cutoff_convention!r}"
            )
        pole_count(self.slope_db_per_octave)

    @property
    def poles(self) -> int:
        return pole_count(self.slope_db_per_octave)

    @property
    def alpha(self) -> float:
        """Per-stage feedback coefficient a = exp(-1/(tau fs))."""
        return math.exp(-1.0 / (self.time_constant * self.sample_rate))

    @property
    def window_samples(self) -> int:
        return max(1, int(round(self.time_constant * self.sample_rate)))


@dataclass
class LockInOutput:
    """Final reading of a demodulation run.

    ``r`` is the mean of r(t) over the last time-constant window. ``theta``
    is the phase of the window-averaged phasor, signed so that
    ``A cos(2 pi f_ref t + phi)`` reads ``theta = phi``. ``x`` and ``y``
    are ``r`` projected on that phase (``y = -r sin(theta)``, matching the
    in*sin mixing product), so ``r == hypot(x, y)``.
    """

    r: float
    theta: float
    x: float
    y: float
    settled: bool
    warnings: list = field(default_factory=list)
    trace_time: Optional[np.ndarray] = None
    trace_r: Optional[np.ndarray] = None
    trace_theta: Optional[np.ndarray] = None

    def summary(self, cfg: LockInConfig) -> dict:
        return {
            "r": self.r,
            "theta": self.theta,
            "settled": self.settled,
            "f_ref": cfg.f_ref,
            "tau": cfg.time_constant,
            "poles": cfg.poles,
            "cutoff_convention": cfg.cutoff_convention,
        }


def cutoff_frequency(cfg: LockInConfig, convention: Optional[str] = None) -> float:
    """Per-pole cutoff in Hz under ``convention`` (defaults to the config's)."""
    convention = convention or cfg.cutoff_convention
    if convention == "inv-2pi-tau":
        return 1.0 / (2 * math.pi * cfg.time_constant)
    if convention == "inv-tau":
        return 1.0 / cfg.time_constant
    raise ConfigurationError(f"unknown cutoff convention {convention!r}")


def rejection_db(cfg: LockInConfig, detuning, convention: Optional[str] = None):
    """Amplitude response (dB) of the n-pole cascade at ``detuning`` Hz off the reference."""
    d = np.asarray(detuning, dtype=float)
    if np.any(d < 0):
        raise DomainError("detuning must be non-negative")
    fc = cutoff_frequency(cfg, convention)
    out = -10.0 * cfg.poles * np.log10(1.0 + (d / fc) ** 2)
    return float(out) if out.ndim == 0 else out


def cascade_gain(cfg: LockInConfig, detuning):
    """Exact complex response of the discrete cascade at ``detuning`` Hz."""
    a = cfg.alpha
    w = 2 * math.pi * np.asarray(detuning, dtype=float) / cfg.sample_rate
    return ((1 - a) / (1 - a * np.exp(-1j * w))) ** cfg.poles


def step_residual(poles: int, t_over_tau):
    """Unsettled fraction of a unit step after ``t_over_tau`` time constants.

    For n identical stages this is the Poisson tail
    exp(-x) * sum_{k<n} x**k / k!.
    """
    x = np.asarray(t_over_tau, dtype=float)
    total = sum(x ** k / math.factorial(k) for k in range(poles))
    return np.exp(-x) * total


def noise_floor(cfg: LockInConfig, noise_density: float) -> float:
    """Expected settled r for white input noise of one-sided density ``noise_density``.

    The mixed-down noise is circular complex Gaussian, so r is Rayleigh with
    mean sqrt(pi * E|z|**2) / 2. E|z|**2 uses the continuous-time energy of
    the n-stage impulse response, accurate to O(1 / (tau * fs)).
    """
    n = cfg.poles
    energy = math.factorial(2 * n - 2) / (math.factorial(n - 1) ** 2 * 2 ** (2 * n - 1))
    mean_sq = noise_density ** 2 / 2.0 * energy / cfg.time_constant
    return math.sqrt(math.pi * mean_sq) / 2.0


class _Demodulator:
    """Streaming state of one demodulation call."""

    def __init__(self, cfg: LockInConfig, n_total: int, offset: float = 0.0,
                 trace_decimation: Optional[int] = None, start_time: float = 0.0):
        if n_total <= 0:
            raise ConfigurationError("demodulation needs at least one sample")
        self.cfg = cfg
        self.n_total = n_total
        self.offset = offset
        self.start_time = start_time
        a = cfg.alpha
        self.b = np.array([-math.expm1(-1.0 / (cfg.time_constant * cfg.sample_rate))])
        self.a = np.array([1.0, -a])
        self.state = [np.zeros(1, dtype=complex) for _ in range(cfg.poles)]
        self.pos = 0
        self.window_start = max(0, n_total - cfg.window_samples)
        self.sum_abs = 0.0
        self.sum_z = 0j
        self.n_window = 0
        self.decimation = trace_decimation
        self.trace = [] if trace_decimation else None

    def feed(self, chunk):
        chunk = np.asarray(chunk, dtype=float)
        n = chunk.size
        if self.pos + n > self.n_total:
            raise ConfigurationError("stream delivered more samples than declared")
        idx = np.arange(self.pos, self.pos + n)
        cycles = self.cfg.f_ref * (self.start_time + idx / self.cfg.sample_rate)
        phase = 2 * math.pi * np.mod(cycles, 1.0)
        z = (chunk - self.offset) * np.exp(1j * phase)
        for k in range(len(self.state)):
            z, self.state[k] = lfilter(self.b, self.a, z, zi=self.state[k])
        lo = max(self.window_start - self.pos, 0)
        if lo < n:
            tail = z[lo:]
            self.sum_abs += float(np.abs(tail).sum())
            self.sum_z += complex(tail.sum())
            self.n_window += tail.size
        if self.trace is not None:
            keep = idx % self.decimation == 0
            self.trace.append((idx[keep], z[keep]))
        self.pos += n

    def result(self) -> LockInOutput:
        if self.pos != self.n_total:
            raise ConfigurationError(f"stream ended after {self.pos} of {self.n_total} samples")
        cfg = self.cfg
        r = self.sum_abs / self.n_window
        theta = -math.atan2(self.sum_z.imag, self.sum_z.real) if self.sum_z != 0 else 0.0
        duration = self.n_total / cfg.sample_rate
        settled = duration >= cfg.settle_factor * cfg.time_constant * (1 - 1e-12)
        notes = []
        if not settled:
            notes.append(
                f"input lasts {duration:g} s < settle_factor*tau = "
                f"{cfg.settle_factor * cfg.time_constant:g} s; reading not settled"
            )
        out = LockInOutput(r=r, theta=theta, x=r * math.cos(theta), y=-r * math.sin(theta),
                           settled=settled, warnings=notes)
        if self.trace is not None:
            idx = np.concatenate([i for i, _ in self.trace])
            zz = np.concatenate([v for _, v in self.trace])
            out.trace_time = self.start_time + idx / cfg.sample_rate
            out.trace_r = np.abs(zz)
            out.trace_theta = -np.angle(zz)
        return out


class LockInAmplifier(BaseEstimator, TransformerMixin):
    """Dual-phase lock-in amplifier with a cascaded one-pole low-pass filter.

    Parameters
    ----------
    f_ref : float
        Reference frequency in Hz.
    time_constant : float
        Per-stage time constant tau in s.
    slope_db_per_octave : {6, 12, 18, 24}
        Roll-off; ``slope / 6`` stages are cascaded.
    sample_rate : float
        Input sampling rate in Hz; must exceed ``4 * f_ref``.
    settle_factor : float
        Inputs shorter than ``settle_factor * tau`` are reported unsettled.
    cutoff_convention : {'inv-2pi-tau', 'inv-tau'}
        How ``cutoff_hz_`` and ``rejection_db`` are expressed.

    Attributes
    ----------
    config_ : LockInConfig
    n_poles_ : int
    cutoff_hz_ : float

    Examples
    --------
    >>> import numpy as np
    >>> fs = 100e3
    >>> t = np.arange(int(2 * fs)) / fs
    >>> li = LockInAmplifier(f_ref=10e3, time_constant=0.05, sample_rate=fs).fit()
    >>> out = li.demodulate(np.cos(2 * np.pi * 10e3 * t + 0.3))
    >>> round(out.r, 4), round(out.theta, 4)
    (0.5, 0.3)
    """

    def __init__(self, f_ref=90e3, time_constant=3.0, slope_db_per_octave=24, sample_rate=2e6,
                 settle_factor=10.0, cutoff_convention="inv-2pi-tau"):
        self.f_ref = f_ref
        self.time_constant = time_constant
        self.slope_db_per_octave = slope_db_per_octave
        self.sample_rate = sample_rate
        self.settle_factor = settle_factor
        self.cutoff_convention = cutoff_convention

    @classmethod
    def from_config(cls, cfg: LockInConfig) -> "LockInAmplifier":
        return cls(cfg.f_ref, cfg.time_constant, cfg.slope_db_per_octave, cfg.sample_rate,
                   cfg.settle_factor, cfg.cutoff_convention).fit()

    def fit(self, X=None, y=None):
        self.config_ = LockInConfig(self.f_ref, self.time_constant, self.slope_db_per_octave,
                                    self.sample_rate, self.settle_factor, self.cutoff_convention)
        self.n_poles_ = self.config_.poles
        self.cutoff_hz_ = cutoff_frequency(self.config_)
        return self

    def _cfg(self):
        if not hasattr(self, "config_"):
            self.fit()
        return self.config_

    def demodulate(self, signal, offset=0.0, trace_decimation=None) -> LockInOutput:
        """Demodulate a whole trace (``TimeSeries`` in volts or a 1-D array)."""
        cfg = self._cfg()
        start = 0.0
        if isinstance(signal, TimeSeries):
            if signal.unit_tag == "volts_per_meter":
                raise TypeError("lock-in input must be a voltage trace, not a field envelope")
            if not math.isclose(signal.sample_rate, cfg.sample_rate, rel_tol=1e-9):
                raise ConfigurationError(
                    f"trace sampled at {signal.sample_rate:g} Hz, lock-in configured for "
                    f"{cfg.sample_rate:g} Hz"
                )
            start = signal.start_time
            data = signal.samples
        else:
            data = np.asarray(signal, dtype=float)
        if data.ndim != 1 or data.size == 0:
            raise ValueError("lock-in input must be a non-empty 1-D trace")
        demod = _Demodulator(cfg, data.size, offset, trace_decimation, start)
        demod.feed(data)
        return demod.result()

    def demodulate_stream(self, chunks: Iterable[np.ndarray], n_samples: int, offset=0.0,
                          trace_decimation=None, start_time=0.0) -> LockInOutput:
        """Demodulate blocks arriving in order; ``n_samples`` is their total length."""
        demod = _Demodulator(self._cfg(), n_samples, offset, trace_decimation, start_time)
        for chunk in chunks:
            demod.feed(chunk)
        return demod.result()

    def transform(self, X):
        """Demodulate each row of ``X``; returns columns ``[x, y, r, theta]``."""
        check_is_fitted(self, "config_")
        X = np.atleast_2d(check_array(X, ensure_2d=False))
        out = np.empty((X.shape[0], 4))
        for i, row in enumerate(X):
            res = self.demodulate(row)
            out[i] = (res.x, res.y, res.r, res.theta)
        return out

    def rejection_db(self, detuning):
        return rejection_db(self._cfg(), detuning)


def demodulate(signal, cfg: LockInConfig, offset=0.0, trace_decimation=None) -> LockInOutput:
    """Functional wrapper around ``LockInAmplifier.demodulate``."""
    return LockInAmplifier.from_config(cfg).demodulate(signal, offset, trace_decimation)
