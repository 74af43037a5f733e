"""End-to-end streaming simulation: tones -> envelope -> photodiode -> lock-in."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import iter_time_chunks, phasor_envelope
from .lockin import LockInAmplifier, LockInConfig, LockInOutput
from .transducer import EitModel, PhotodiodeModel, photodiode_voltage, transmission_at_resonance

__all__ = ["ChainSetup", "quiescent_voltage", "lockin_reading", "averaged_reading"]


@dataclass(frozen=True)
class ChainSetup:
    """Everything needed for one lock-in reading.

    ``offsets`` lists the non-LO tones as ``(amplitude V/m, offset from
    f_LO in Hz, phase rad)``. With ``ac_couple`` the lock-in input is
    referenced to the quiescent photodiode level, like an AC-coupled front
    end that has been running long before the reading starts.
    """

    e_lo: float
    offsets: tuple
    eit: EitModel
    photodiode: PhotodiodeModel
    lockin: LockInConfig
    duration: float
    chunk_size: int = 1 << 18
    ac_couple: bool = True

    @property
    def n_samples(self) -> int:
        return max(1, int(round(self.duration * self.lockin.sample_rate)))


def quiescent_voltage(eit: EitModel, pd: PhotodiodeModel, e_lo: float) -> float:
    return pd.dark_voltage + pd.responsivity_gain * float(transmission_at_resonance(eit, e_lo))


def lockin_reading(setup: ChainSetup, seed=None, trace_decimation=None) -> LockInOutput:
    """Run one streamed acquisition; ``seed`` feeds the photodiode noise."""
    fs = setup.lockin.sample_rate
    rng = np.random.default_rng(setup.photodiode.rng_seed if seed is None else seed)

    def blocks():
        for t in iter_time_chunks(setup.n_samples, fs, setup.chunk_size):
            env = phasor_envelope(setup.e_lo, setup.offsets, t)
            yield photodiode_voltage(setup.eit, setup.photodiode, env, fs, rng)

    offset = quiescent_voltage(setup.eit, setup.photodiode, setup.e_lo) if setup.ac_couple else 0.0
    li = LockInAmplifier.from_config(setup.lockin)
    return li.demodulate_stream(blocks(), setup.n_samples, offset=offset,
                                trace_decimation=trace_decimation)


def averaged_reading(setup: ChainSetup, seeds) -> float:
    """Mean lock-in magnitude over independent noise realizations.

    Without noise every realization is identical, so one run is enough.
    """
    seeds = list(seeds)
    if setup.photodiode.noise_density == 0:
        seeds = seeds[:1]
    return float(np.mean([lockin_reading(setup, s).r for s in seeds]))
