import pytest

from rydberg_mixer.config import SCHEMA, ConfigError, ScenarioConfig, parse_config, parse_text
from rydberg_mixer.exceptions import ConfigurationError


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("# nothing here\n\n")
    cfg = parse_config(p)
    assert cfg.config_hash == ScenarioConfig().config_hash
    assert cfg["tones.f_lo_hz"] == 19.626e9 and cfg["tones.f_sig_hz"] == 19.62609e9
    assert cfg["link.distance_m"] == 0.385
    assert cfg["lockin.tau_s"] == 3.0 and cfg["lockin.slope_db_per_octave"] == 24
    assert cfg.f_if == pytest.approx(90e3)


def test_every_key_has_default():
    cfg = ScenarioConfig()
    for key in SCHEMA:
        cfg[key]


def test_layering(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("lockin.tau_s = 1.5  # shorter\nrun.seed = 4\n")
    cfg = parse_config(p, ["lockin.tau_s=0.5"], {"run.seed": 9})
    assert cfg["lockin.tau_s"] == 0.5 and cfg["run.seed"] == 9
    assert cfg.sources["lockin.tau_s"] == "cli"
    assert parse_config(p)["lockin.tau_s"] == 1.5


def test_unknown_key_names_key_and_line(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("run.seed = 1\nlockin.tua_s = 3\n")
    with pytest.raises(ConfigError) as err:
        parse_config(p)
    assert "lockin.tua_s" in str(err.value) and "line 2" in str(err.value)
    assert err.value.key == "lockin.tua_s" and err.value.line == 2


@pytest.mark.parametrize("text", [
    "lockin.tau_s = -1",
    "lockin.slope_db_per_octave = 30",
    "sweep.points = 1",
    "lockin.fc_convention = inv-pi",
    "lockin.tau_s = fast",
    "just words",
    "run.seed = 1\nrun.seed = 2",
])
def test_bad_values(text):
    with pytest.raises(ConfigurationError):
        parse_text(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "nope.cfg")


def test_cross_validation():
    # sample rate must stay above 4 * f_IF
    with pytest.raises(ConfigError):
        ScenarioConfig({"sim.sample_rate_hz": 100e3})


def test_hash_tracks_values():
    a = ScenarioConfig()
    b = a.copy({"lockin.tau_s": 0.3})
    assert a.config_hash != b.config_hash
    assert a.with_overrides(lockin__tau_s=0.3).config_hash == b.config_hash
    assert a["lockin.tau_s"] == 3.0


def test_builders():
    cfg = ScenarioConfig({"lockin.fc_convention": "inv-tau", "chain.losses_db": "10, 5.5"})
    lc = cfg.lockin_config()
    assert lc.cutoff_convention == "inv-tau" and lc.f_ref == pytest.approx(90e3)
    assert cfg.power_chain(-40).losses_db == (10.0, 5.5)
    assert cfg.photodiode(noise=False).noise_density == 0.0
    assert cfg.duration == pytest.approx(30.0)
