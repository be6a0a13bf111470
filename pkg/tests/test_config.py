import json
import logging
import math

import numpy as np
import pytest

from floquet_tunnel.config import DEFAULT_PHASES, ConfigError, load_config, parse_config
from floquet_tunnel.model import UnitSystem, eta_to_field

BUILDER = {"builder": "triple_barrier", "a": 70, "b": 20, "V0": 237, "m_well": 0.0667, "m_barrier": 0.0918}


def _doc(**kw):
    doc = {"device": dict(BUILDER), "scan": {"energy": {"start": 10, "stop": 20, "num": 3}}}
    doc.update(kw)
    return doc


def _pointers(exc):
    return [p for p, _ in exc.value.errors]


def test_minimal_config_defaults():
    cfg = parse_config(_doc())
    assert cfg.energies_mev == (10.0, 15.0, 20.0)
    assert cfg.policy == "adaptive" and cfg.n_start == 4 and cfg.n_cap == 40
    assert cfg.tolerance == 1e-12 and cfg.output_format == "csv"
    assert cfg.static_fields == (0.0,) and cfg.device().waveform.is_off
    np.testing.assert_allclose(cfg.energies, UnitSystem.mev_to_au(np.array([10.0, 15.0, 20.0])))


def test_energy_step_default_and_values():
    cfg = parse_config(_doc(scan={"energy": {"start": 1.0, "stop": 2.0}}))
    assert len(cfg.energies_mev) == 5 and cfg.energies_mev[1] == pytest.approx(1.25)
    cfg = parse_config(_doc(scan={"energy": {"values": [3.0, 7.5]}}))
    assert cfg.energies_mev == (3.0, 7.5)
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(scan={"energy": {"values": [3.0, 1.0]}}))
    assert _pointers(exc) == ["/scan/energy"]


def test_schema_errors_carry_pointers():
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(tolerance=-1))
    assert _pointers(exc) == ["/tolerance"]
    bad = _doc()
    bad["device"]["a"] = "wide"
    with pytest.raises(ConfigError) as exc:
        parse_config(bad)
    assert _pointers(exc) == ["/device/a"]
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(waveform={"kind": "laser"}))
    assert _pointers(exc) == ["/waveform/kind"]
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(colour="red"))
    assert "colour" in str(exc.value)


def test_semantic_errors():
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(waveform={"kind": "monochromatic", "xi": 0.1}))
    assert _pointers(exc) == ["/waveform"]
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(waveform={"kind": "monochromatic", "omega": 70}))
    assert "amplitude" in str(exc.value)
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(truncation={"policy": "fixed"}))
    assert _pointers(exc) == ["/truncation/n_max"]
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(truncation={"start": 16, "cap": 8}))
    assert _pointers(exc) == ["/truncation/start"]
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(static_field={"F": 1e-5}))
    assert _pointers(exc) == ["/n_points"]
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(scan={"energy": {"values": [1.0]}, "xi": [0.1]}))
    assert _pointers(exc) == ["/scan"]


def test_region_list_device():
    regions = [{"mass": 0.0667, "potential": 0}, {"mass": 0.0918, "potential": 237, "width": 30},
               {"mass": 0.0667, "potential": -20, "width": 5}]
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(device={"regions": regions}))
    assert _pointers(exc) == ["/device/regions/2/width"]
    regions[2] = {"mass": 0.0667, "potential": -20}
    cfg = parse_config(_doc(device={"regions": regions}, static_field={"eta": 0.2}, n_points=7))
    dev = cfg.device(cfg.static_fields[0])
    assert len(dev.regions) == 8
    length, height = UnitSystem.angstrom_to_au(30.0), UnitSystem.mev_to_au(237.0)
    assert cfg.static_fields[0] == pytest.approx(eta_to_field(0.2, height, length))
    regions[1]["width"] = None
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(device={"regions": regions}))
    assert _pointers(exc) == ["/device/regions/1/width"]


def test_geometry_error_becomes_config_error():
    with pytest.raises(ConfigError) as exc:
        parse_config(_doc(static_field={"F": 1e-5}, n_points=3))
    assert _pointers(exc) == ["/device"]


def test_waveform_precedence(caplog):
    omega = UnitSystem.mev_to_au(70.0)
    with caplog.at_level(logging.WARNING, logger="floquet_tunnel"):
        cfg = parse_config(_doc(waveform={"kind": "monochromatic", "omega": 70, "xi": 0.3, "amplitude": 1e-4}))
    assert "amplitude" in caplog.text
    assert cfg.waveform().amplitude == pytest.approx(1e-4)
    cfg = parse_config(_doc(waveform={"kind": "monochromatic", "omega": 70, "xi": 0.3,
                                      "ponderomotive_ratio": 1e-4}))
    assert cfg.waveform().xi == 0.3
    cfg = parse_config(_doc(waveform={"kind": "monochromatic", "omega": 70, "ponderomotive_ratio": 1e-4}))
    assert cfg.waveform().ponderomotive_energy(0.0667) == pytest.approx(1e-4 * omega, rel=1e-10)
    cfg = parse_config(_doc(waveform={"kind": "monochromatic", "omega": 70, "ponderomotive_ratio": 1e-4,
                                      "ponderomotive_mass": 0.0918}))
    assert cfg.waveform().ponderomotive_energy(0.0918) == pytest.approx(1e-4 * omega, rel=1e-10)


def test_field_precedence(caplog):
    with caplog.at_level(logging.WARNING, logger="floquet_tunnel"):
        cfg = parse_config(_doc(static_field={"F": 1e-5, "eta": 0.3}, n_points=21))
    assert cfg.static_fields == (1e-5,) and "raw F" in caplog.text
    cfg = parse_config(_doc(n_points=21, scan={"energy": {"values": [5.0]}, "eta": [0.1, -0.1]}))
    f = eta_to_field(0.1, UnitSystem.mev_to_au(237.0), UnitSystem.angstrom_to_au(200.0))
    assert cfg.static_fields == pytest.approx((f, -f))


def test_scan_axes_order():
    cfg = parse_config(_doc(waveform={"kind": "pulse_train", "omega": 70, "xi": 0.1}, n_points=21,
                            scan={"energy": {"values": [1.0, 2.0]}, "static_field": [0.0, 1e-5],
                                  "xi": [0.1, 0.2], "phase": "default"}))
    pts = list(cfg.points())
    assert len(pts) == cfg.n_scan_points == 2 * 2 * 3 * 2
    assert pts[0] == (0.0, 0.1, 0.0, 1.0) and pts[1] == (0.0, 0.1, 0.0, 2.0)
    assert pts[2][2] == DEFAULT_PHASES[1]
    assert pts[-1] == (1e-5, 0.2, math.pi / 2, 2.0)
    assert cfg.waveform(0.2, 1.0).pulse_duration == pytest.approx(13 * 2 * math.pi / UnitSystem.mev_to_au(70.0))


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    p = tmp_path / "bad.json"
    p.write_text("{ not json")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(p)
    p.write_text(json.dumps(_doc()))
    assert load_config(p).energies_mev == (10.0, 15.0, 20.0)


def test_cache_key_and_overrides():
    a = parse_config(_doc())
    b = parse_config(_doc())
    assert a.cache_key == b.cache_key
    assert parse_config(_doc(n_points=21)).cache_key != a.cache_key
    assert a.with_overrides(tolerance=1e-9).tolerance == 1e-9
