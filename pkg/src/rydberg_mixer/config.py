"""Flat ``section.key = value`` configuration with layered overrides.

Resolution order: built-in defaults, then the config file, then CLI
overrides. Unknown keys and out-of-range values raise ``ConfigError``
naming the key and, for file input, the line.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Optional

from .atoms import RydbergTransition
from .exceptions import ConfigurationError
from .linkbudget import AntennaLink, CellFactor, PowerChain
from .lockin import CONVENTIONS, SLOPES, LockInConfig
from .transducer import EitModel, PhotodiodeModel

__all__ = ["ConfigError", "Option", "SCHEMA", "ScenarioConfig", "parse_config", "parse_text"]

# From `rydberg-mixer calibrate-noise --set lockin.tau_s=0.01` (3.0098e-6),
# scaled by sqrt(3 s / 10 ms): the floor goes as rho / sqrt(tau) while the
# signal response does not depend on tau. With it the zero-signal floor of
# the default weak-field sweep (tau = 3 s) equals the response at 46 uV/m.
DEFAULT_NOISE_DENSITY = 5.213e-5


class ConfigError(ConfigurationError):
    """Configuration problem; carries the offending key and line when known."""

    def __init__(self, message, key=None, line=None, source=None):
        where = []
        if source is not None:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = ", ".join(where) + ": " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class Option:
    kind: str  # float | int | bool | str | floats
    default: Any
    check: Optional[Callable[[Any], bool]] = None
    requirement: str = ""
    choices: tuple = ()


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _all_nonneg(xs):
    return all(x >= 0 for x in xs)


def _all_pos(xs):
    return all(x > 0 for x in xs)


def _opt(kind, default, check=None, requirement="", choices=()):
    return Option(kind, default, check, requirement, choices)


SCHEMA: dict[str, Option] = {
    # atomic transition
    "transition.probe_wavelength_m": _opt("float", 852e-9, _pos, "> 0"),
    "transition.coupling_wavelength_m": _opt("float", 511.148e-9, _pos, "> 0"),
    "transition.dipole_radial": _opt("float", 1476.6048),
    "transition.dipole_angular": _opt("float", 0.48989),
    "transition.rf_resonance_hz": _opt("float", 19.626e9, _pos, "> 0"),
    "transition.eit_linewidth_hz": _opt("float", 4e6, _pos, "> 0"),
    # RF tones
    "tones.f_lo_hz": _opt("float", 19.626000e9, _pos, "> 0"),
    "tones.f_sig_hz": _opt("float", 19.626090e9, _pos, "> 0"),
    "tones.e_lo_vpm": _opt("float", 0.72, _pos, "> 0"),
    "tones.phase_lo_rad": _opt("float", 0.0),
    "tones.phase_sig_rad": _opt("float", 0.0),
    # antenna link and power chain
    "link.gain_db": _opt("float", 15.55),
    "link.gain_uncertainty_db": _opt("float", 0.4, _nonneg, ">= 0"),
    "link.distance_m": _opt("float", 0.385, _pos, "> 0"),
    "link.aperture_diagonal_m": _opt("float", 48.28e-3, _pos, "> 0"),
    "link.rf_wavelength_m": _opt("float", 15.286e-3, _pos, "> 0"),
    "link.cell_factor": _opt("float", 0.90, _pos, "> 0"),
    "link.field_rel_uncertainty": _opt("float", 0.05, _nonneg, ">= 0"),
    "chain.losses_db": _opt("floats", (), _all_nonneg, "each >= 0"),
    # lock-in
    "lockin.tau_s": _opt("float", 3.0, _pos, "> 0"),
    "lockin.slope_db_per_octave": _opt("int", 24, lambda s: s in SLOPES, f"one of {SLOPES}"),
    "lockin.settle_factor": _opt("float", 10.0, _pos, "> 0"),
    "lockin.fc_convention": _opt("str", "inv-2pi-tau", choices=CONVENTIONS),
    # EIT line and photodiode
    "eit.contrast": _opt("float", 0.5, lambda c: 0 < c <= 1, "in (0, 1]"),
    "eit.background": _opt("float", 0.3, lambda b: 0 <= b < 1, "in [0, 1)"),
    "photodiode.responsivity_gain": _opt("float", 1.0, _pos, "> 0"),
    "photodiode.dark_voltage": _opt("float", 0.0),
    "photodiode.noise_density": _opt("float", DEFAULT_NOISE_DENSITY, _nonneg, ">= 0"),
    # simulation
    "sim.sample_rate_hz": _opt("float", 2e6, _pos, "> 0"),
    "sim.chunk_size": _opt("int", 1 << 18, _pos, "> 0"),
    "sim.duration_tau": _opt("float", 10.0, _pos, "> 0"),
    "sim.jobs": _opt("int", 1, _pos, "> 0"),
    # IF traces
    "trace.e_sig_vpm": _opt("floats", (0.187, 0.0591, 0.0187), _all_nonneg, "each >= 0"),
    "trace.duration_s": _opt("float", 1e-3, _pos, "> 0"),
    "trace.exact": _opt("bool", True),
    "trace.noise": _opt("bool", False),
    # EIT spectra
    "spectrum.e_fields_vpm": _opt("floats", (0.0, 0.36, 0.72, 1.44), _all_nonneg, "each >= 0"),
    "spectrum.span_hz": _opt("float", 30e6, _pos, "> 0"),
    "spectrum.points": _opt("int", 1201, lambda n: n >= 3, ">= 3"),
    # weak-field sweep
    "sweep.variable": _opt("str", "generator_dbm", choices=("generator_dbm", "e_sig_vpm")),
    "sweep.start": _opt("float", -130.0),
    "sweep.stop": _opt("float", -10.0),
    "sweep.points": _opt("int", 49, lambda n: n >= 2, ">= 2"),
    "sweep.scale": _opt("str", "linear", choices=("linear", "log")),
    "sweep.n_averages": _opt("int", 3, _pos, "> 0"),
    "sweep.floor_runs": _opt("int", 16, lambda n: n >= 2, ">= 2"),
    "sweep.noise": _opt("bool", True),
    # isolation study
    "isolation.e_o_vpm": _opt("float", 181e-6, _pos, "> 0"),
    "isolation.generator_dbm": _opt("float", -40.0),
    "isolation.detunings_hz": _opt("floats", (0.1, 1.0, 10.0), _all_pos, "each > 0"),
    "isolation.ratio_start_db": _opt("float", 0.0),
    "isolation.ratio_stop_db": _opt("float", 70.0),
    "isolation.points": _opt("int", 15, lambda n: n >= 2, ">= 2"),
    # linkbudget table
    "linkbudget.start_dbm": _opt("float", -180.0),
    "linkbudget.stop_dbm": _opt("float", 10.0),
    "linkbudget.points": _opt("int", 20, lambda n: n >= 2, ">= 2"),
    # noise calibration
    "calibrate.target_e_vpm": _opt("float", 46e-6, _pos, "> 0"),
    # cell-factor calibration input
    "calibrate.input": _opt("str", ""),
    # run control
    "run.seed": _opt("int", 0, lambda s: 0 <= s < 2 ** 64, "in [0, 2**64)"),
}


def _coerce(key: str, raw, opt: Option, line=None, source=None):
    try:
        if opt.kind == "float":
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError("not finite")
        elif opt.kind == "int":
            text = str(raw).strip()
            value = int(text, 0) if isinstance(raw, str) else int(raw)
            if not isinstance(raw, str) and value != raw:
                raise ValueError("not an integer")
        elif opt.kind == "bool":
            if isinstance(raw, bool):
                value = raw
            else:
                text = str(raw).strip().lower()
                if text in ("true", "yes", "on", "1"):
                    value = True
                elif text in ("false", "no", "off", "0"):
                    value = False
                else:
                    raise ValueError("expected true/false")
        elif opt.kind == "floats":
            if isinstance(raw, str):
                parts = [p.strip() for p in raw.replace(";", ",").split(",")]
                value = tuple(float(p) for p in parts if p)
            else:
                value = tuple(float(x) for x in raw)
        else:
            value = str(raw).strip()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot parse {raw!r} as {opt.kind} ({exc})", key, line, source) from None
    if opt.choices and value not in opt.choices:
        raise ConfigError(f"value {value!r} must be one of {opt.choices}", key, line, source)
    if opt.check is not None and not opt.check(value):
        raise ConfigError(f"value {value!r} out of range (must be {opt.requirement})", key, line, source)
    return value


def parse_text(text: str, source=None) -> dict:
    """Parse config text into ``{key: typed value}``; errors carry line numbers."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'section.key = value', got {stripped!r}", None, lineno, source)
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError("unknown key", key, lineno, source)
        if key in values:
            raise ConfigError("duplicate key", key, lineno, source)
        values[key] = _coerce(key, raw.strip(), SCHEMA[key], lineno, source)
    return values


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


class ScenarioConfig:
    """Resolved configuration: every schema key has a typed value.

    Item access uses the flat key (``cfg["lockin.tau_s"]``); builders
    return the value objects the simulation modules consume.
    """

    def __init__(self, values: Optional[Mapping[str, Any]] = None, sources: Optional[Mapping] = None):
        self._values = {k: opt.default for k, opt in SCHEMA.items()}
        self.sources = {k: "default" for k in SCHEMA}
        if values:
            self.update(values, origin="override")
        if sources:
            self.sources.update(sources)

    def update(self, values: Mapping[str, Any], origin="override"):
        for key, raw in values.items():
            if key not in SCHEMA:
                raise ConfigError("unknown key", key)
            self._values[key] = _coerce(key, raw, SCHEMA[key])
            self.sources[key] = origin
        self._validate()
        return self

    def with_overrides(self, **flat) -> "ScenarioConfig":
        """Copy with overrides; keyword names use ``__`` for the dot."""
        new = ScenarioConfig(self._values, self.sources)
        return new.update({k.replace("__", "."): v for k, v in flat.items()})

    def copy(self, values: Optional[Mapping[str, Any]] = None) -> "ScenarioConfig":
        new = ScenarioConfig(self._values, self.sources)
        if values:
            new.update(values)
        return new

    def __getitem__(self, key):
        return self._values[key]

    def items(self):
        return self._values.items()

    def _validate(self):
        try:
            self.transition()
            self.lockin_config()
        except ConfigurationError as exc:
            raise ConfigError(str(exc)) from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # ---- canonical text / hash -------------------------------------------
    def canonical_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(self._values.items()))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()[:16]

    # ---- builders ---------------------------------------------------------
    def transition(self) -> RydbergTransition:
        v = self._values
        return RydbergTransition(
            probe_wavelength=v["transition.probe_wavelength_m"],
            coupling_wavelength=v["transition.coupling_wavelength_m"],
            dipole_radial=v["transition.dipole_radial"],
            dipole_angular=v["transition.dipole_angular"],
            rf_resonance=v["transition.rf_resonance_hz"],
            eit_linewidth=v["transition.eit_linewidth_hz"],
        )

    def eit_model(self) -> EitModel:
        return EitModel(self.transition(), self["eit.contrast"], self["eit.background"])

    def photodiode(self, noise=True, seed=None) -> PhotodiodeModel:
        return PhotodiodeModel(
            self["photodiode.responsivity_gain"],
            self["photodiode.dark_voltage"],
            self["photodiode.noise_density"] if noise else 0.0,
            self["run.seed"] if seed is None else seed,
        )

    def link(self) -> AntennaLink:
        return AntennaLink(self["link.gain_db"], self["link.gain_uncertainty_db"],
                           self["link.distance_m"], self["link.aperture_diagonal_m"],
                           self["link.rf_wavelength_m"])

    def cell_factor(self) -> CellFactor:
        return CellFactor(self["link.cell_factor"])

    def power_chain(self, generator_dbm: float) -> PowerChain:
        return PowerChain(generator_dbm, self["chain.losses_db"])

    @property
    def f_if(self) -> float:
        return abs(self["tones.f_sig_hz"] - self["tones.f_lo_hz"])

    def lockin_config(self, f_ref: Optional[float] = None) -> LockInConfig:
        return LockInConfig(
            f_ref=self.f_if if f_ref is None else f_ref,
            time_constant=self["lockin.tau_s"],
            slope_db_per_octave=self["lockin.slope_db_per_octave"],
            sample_rate=self["sim.sample_rate_hz"],
            settle_factor=self["lockin.settle_factor"],
            cutoff_convention=self["lockin.fc_convention"],
        )

    @property
    def duration(self) -> float:
        return self["sim.duration_tau"] * self["lockin.tau_s"]


def parse_config(path=None, overrides: Optional[Iterable[str]] = None,
                 extra: Optional[Mapping[str, Any]] = None) -> ScenarioConfig:
    """Build a ``ScenarioConfig`` from defaults, an optional file, and overrides.

    ``overrides`` are ``section.key=value`` strings (CLI ``--set``); ``extra``
    maps keys to values and is applied last.
    """
    cfg = ScenarioConfig()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except FileNotFoundError:
            raise ConfigError("config file not found", source=path) from None
        except UnicodeDecodeError as exc:
            raise ConfigError(f"config file is not UTF-8 ({exc})", source=path) from None
        file_values = parse_text(text, source=path)
        cfg.update(file_values, origin="file")
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError("unknown key", key, source="command line")
        cfg.update({key: _coerce(key, raw.strip(), SCHEMA[key], source="command line")}, origin="cli")
    if extra:
        cfg.update({k: v for k, v in extra.items() if v is not None}, origin="cli")
    return cfg
