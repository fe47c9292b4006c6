import logging

import pytest

from lsnucleate.config import (PRESETS, ConfigError, build_fixture, build_spec, load_config,
                               parse_config, preset_config, serialize_config)


def test_preset_defaults():
    cfg = parse_config('preset = "ex1-tfc"\n')
    h = cfg.grid.h
    assert cfg.coupling.phi_up == pytest.approx(2.5 * h)
    assert cfg.coupling.r_f == pytest.approx(1.6 * h)
    assert cfg.material.rho0 == 0.4 and cfg.material.beta == 2.0
    assert (cfg.schedules.D_st, cfg.schedules.D_c) == (50, 400)
    assert (cfg.grid.nx, cfg.grid.ny, h) == (120, 80, 0.5)


def test_scaling():
    cfg = preset_config("ex1-tfc", scale=4)
    assert (cfg.grid.nx, cfg.grid.ny, cfg.grid.h) == (30, 20, 2.0)
    assert (cfg.schedules.D_st, cfg.schedules.D_c) == (12, 100)
    assert cfg.coupling.phi_up == pytest.approx(5.0)
    with pytest.raises(ConfigError):
        preset_config("ex1-tfc", scale=0)


@pytest.mark.parametrize("text, key", [
    ("[material]\nbeta = 0.5\n", "material"),
    ("[grid]\nnx = 'ten'\n", "grid.nx"),
    ("[grid]\ncolour = 3\n", "colour"),
    ("[solver]\nx = 1\n", "solver"),
    ("mode = 'xfc'\n", "mode"),
    ("preset = 'nope'\n", "preset"),
    ("[constraints]\ngamma_m = 1.5\n", "gamma_m"),
    ("[grid]\nnx = true\n", "grid.nx"),
])
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(text)


def test_malformed_toml():
    with pytest.raises(ConfigError):
        parse_config("[grid\nnx = 3")


def test_threshold_clamp_warns(caplog):
    with caplog.at_level(logging.WARNING):
        cfg = parse_config('mode = "tfc"\n[schedules]\nrho_th0 = 0.5\n[material]\nrho0 = 0.4\n')
    assert cfg.schedules.rho_th0 == pytest.approx(0.99 * 0.4)
    assert "rho_th0" in caplog.text


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_round_trip(name, tmp_path):
    cfg = preset_config(name, scale=2)
    path = tmp_path / "cfg.toml"
    path.write_text(serialize_config(cfg))
    again = load_config(path)
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_build(name):
    cfg = preset_config(name, scale=4)
    fx = build_fixture(cfg)
    spec = build_spec(cfg, sigma_max=1.0 if cfg.constraints.sigma_factor else None)
    assert fx.grid.nx == cfg.grid.nx and spec.mode == cfg.mode
    assert spec.D_max == cfg.schedules.D_max


def test_sfc_bounds_follow_the_map():
    cfg = preset_config("ex1-sfc")
    c = cfg.coupling
    assert c.phi_up == pytest.approx(c.phi_rt * (1 - c.phi_sh))
    assert c.phi_low == pytest.approx(-c.phi_rt * c.phi_sh)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_config("/nonexistent/run.toml")
