"""Two-tone RF superposition at the vapor cell and IF time-series synthesis.

Only the slowly varying envelope |E_atoms(t)| is sampled. The carrier at
~19.6 GHz never needs to be synthesized because the atoms respond to the
envelope, not to the carrier.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .exceptions import ConfigurationError, DomainError

__all__ = [
    "UNIT_TAGS",
    "ToneField",
    "TonePair",
    "TimeSeries",
    "envelope_exact",
    "envelope_weak",
    "if_signal",
    "phasor_envelope",
    "synthesize_envelope_trace",
    "iter_time_chunks",
    "DEFAULT_SAMPLE_RATE",
    "RELATIVE_DETUNING_LIMIT",
]

UNIT_TAGS = ("volts_per_meter", "volts", "dimensionless")
DEFAULT_SAMPLE_RATE = 2e6
RELATIVE_DETUNING_LIMIT = 1e-3
MIN_SAMPLES_PER_IF_CYCLE = 10


def _wrap_phase(phase: float) -> float:
    """Map a phase onto [-pi, pi)."""
    return (phase + math.pi) % (2 * math.pi) - math.pi


@dataclass(frozen=True)
class ToneField:
    """Monochromatic RF field: amplitude in V/m, frequency in Hz, phase in rad."""

    amplitude: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        if not amplitude_ok(self.amplitude):
            raise DomainError(f"tone amplitude must be >= 0, got {self.amplitude!r}")
        if not (math.isfinite(self.frequency) and self.frequency > 0):
            raise DomainError(f"tone frequency must be > 0, got {self.frequency!r}")
        object.__setattr__(self, "phase", _wrap_phase(float(self.phase)))

    @property
    def omega(self) -> float:
        return 2 * math.pi * self.frequency


def amplitude_ok(value) -> bool:
    return math.isfinite(value) and value >= 0


@dataclass(frozen=True)
class TonePair:
    """Local oscillator plus signal tone.

    ``delta_omega`` follows the LO-minus-Sig convention, so a signal above
    the LO gives a negative value; ``f_if`` is always the positive beat.
    """

    lo: ToneField
    sig: ToneField

    def __post_init__(self):
        rel = abs(self.delta_omega) / self.mean_omega
        if rel >= RELATIVE_DETUNING_LIMIT:
            warnings.warn(
                f"relative detuning {rel:.3g} is not small; the envelope "
                "factorization assumes |d_omega|/omega << 1",
                RuntimeWarning,
                stacklevel=3,
            )

    @classmethod
    def from_values(cls, e_lo, e_sig, f_lo=19.626e9, f_sig=19.62609e9, phase_lo=0.0, phase_sig=0.0):
        return cls(ToneField(e_lo, f_lo, phase_lo), ToneField(e_sig, f_sig, phase_sig))

    @property
    def delta_omega(self) -> float:
        return self.lo.omega - self.sig.omega

    @property
    def delta_phi(self) -> float:
        return _wrap_phase(self.lo.phase - self.sig.phase)

    @property
    def mean_omega(self) -> float:
        return 0.5 * (self.lo.omega + self.sig.omega)

    @property
    def f_if(self) -> float:
        """Intermediate (beat) frequency in Hz."""
        return abs(self.lo.frequency - self.sig.frequency)

    def beat_phase(self, t):
        # delta_omega * t computed from the frequency difference directly to
        # avoid cancelling two 1.2e11 rad/s numbers.
        d_omega = 2 * math.pi * (self.lo.frequency - self.sig.frequency)
        return d_omega * np.asarray(t, dtype=float) + self.delta_phi


@dataclass
class TimeSeries:
    """Uniformly sampled real signal."""

    sample_rate: float
    samples: np.ndarray
    start_time: float = 0.0
    unit_tag: str = "dimensionless"

    def __post_init__(self):
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise ConfigurationError(f"sample_rate must be > 0, got {self.sample_rate!r}")
        if self.unit_tag not in UNIT_TAGS:
            raise ValueError(f"unit_tag must be one of {UNIT_TAGS}, got {self.unit_tag!r}")
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    def to_csv(self, path=None, value_header="value", metadata=None) -> str:
        """Write ``time_s,<value_header>`` rows preceded by ``#`` comment lines.

        Returns the CSV text; also writes it to ``path`` when given.
        """
        buf = io.StringIO()
        meta = {"sample_rate": repr(float(self.sample_rate)), "unit_tag": self.unit_tag}
        if metadata:
            meta.update(metadata)
        for key, value in meta.items():
            buf.write(f"# {key} = {value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time_s", value_header])
        for t, v in zip(self.times, self.samples):
            writer.writerow([repr(float(t)), repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        meta = {}
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#"):
                    key, _, value = line[1:].partition("=")
                    meta[key.strip()] = value.strip()
                elif line.strip():
                    rows.append(line)
        reader = csv.reader(rows)
        next(reader)
        data = np.array([[float(a), float(b)] for a, b in reader])
        if data.size == 0:
            raise ValueError(f"{path}: no samples")
        if "sample_rate" in meta:
            fs = float(meta["sample_rate"])
        elif data.shape[0] > 1:
            fs = 1.0 / (data[1, 0] - data[0, 0])
        else:
            raise ValueError(f"{path}: cannot infer sample_rate")
        return cls(fs, data[:, 1], start_time=float(data[0, 0]),
                   unit_tag=meta.get("unit_tag", "dimensionless"))


def envelope_exact(p: TonePair, t):
    """Magnitude of the two-tone field, V/m (scalar or array in ``t``)."""
    e1, e2 = p.lo.amplitude, p.sig.amplitude
    inside = e1 * e1 + e2 * e2 + 2 * e1 * e2 * np.cos(p.beat_phase(t))
    # Rounding can push |E_LO - E_Sig|**2 slightly negative when the amplitudes match.
    return np.sqrt(np.maximum(inside, 0.0))


def envelope_weak(p: TonePair, t):
    """First-order envelope E_LO + E_Sig cos(d_omega t + d_phi), valid for E_Sig < E_LO."""
    if p.sig.amplitude >= p.lo.amplitude:
        raise DomainError(
            f"weak-field envelope needs E_Sig < E_LO (got {p.sig.amplitude} >= {p.lo.amplitude})"
        )
    return p.lo.amplitude + p.sig.amplitude * np.cos(p.beat_phase(t))


def if_signal(p: TonePair, t):
    """Down-converted IF field and its frequency.

    Returns ``(e_if, f_if)``; ``e_if`` is the weak-field envelope.
    """
    return envelope_weak(p, t), p.f_if


def phasor_envelope(e_lo: float, offsets: Sequence[tuple[float, float, float]], t):
    """|E_LO + sum_i E_i exp(j(2 pi df_i t + phi_i))| for tones near the LO.

    ``offsets`` holds ``(amplitude, frequency_offset_hz, phase)`` for every
    non-LO tone, with the offset measured from the LO frequency. For a single
    tone this reproduces ``envelope_exact``.
    """
    t = np.asarray(t, dtype=float)
    total = np.full(t.shape, complex(e_lo))
    for amp, df, phi in offsets:
        if amp:
            total = total + amp * np.exp(1j * (2 * math.pi * df * t + phi))
    return np.abs(total)


def _check_rate(sample_rate, f_if):
    needed = MIN_SAMPLES_PER_IF_CYCLE * f_if
    if sample_rate < needed:
        raise ConfigurationError(
            f"sample_rate {sample_rate:g} Hz undersamples the {f_if:g} Hz IF; "
            f"at least {needed:g} Hz is required"
        )


def synthesize_envelope_trace(p: TonePair, sample_rate: float = DEFAULT_SAMPLE_RATE,
                              duration: float = 1e-3, exact: bool = True,
                              start_time: float = 0.0) -> TimeSeries:
    """Sample the field envelope at the atoms as a ``TimeSeries`` in V/m."""
    _check_rate(sample_rate, p.f_if)
    if not duration > 0:
        raise ConfigurationError(f"duration must be > 0, got {duration!r}")
    n = int(round(duration * sample_rate))
    t = start_time + np.arange(max(n, 1)) / sample_rate
    env = envelope_exact(p, t) if exact else envelope_weak(p, t)
    return TimeSeries(sample_rate, env, start_time=start_time, unit_tag="volts_per_meter")


def iter_time_chunks(n_samples: int, sample_rate: float, chunk_size: int = 1 << 18,
                     start_time: float = 0.0) -> Iterator[np.ndarray]:
    """Yield successive time-stamp blocks covering ``n_samples`` samples.

    Time stamps are built from integer sample indices so chunk boundaries do
    not change any sample value.
    """
    for i0 in range(0, n_samples, chunk_size):
        idx = np.arange(i0, min(i0 + chunk_size, n_samples))
        yield start_time + idx / sample_rate
