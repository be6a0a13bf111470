"""JSON run configurations for the command-line driver.

A configuration is one JSON document in laboratory units: energies and
frequencies in meV, lengths in Angstrom, masses in units of m_e, static and
laser fields in atomic units (or through the dimensionless xi and eta).
:func:`load_config` validates it against :data:`CONFIG_SCHEMA` and converts
it to a :class:`RunConfig` in atomic units.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from .model import (
    Device,
    GeometryError,
    Region,
    UnitSystem,
    Waveform,
    amplitude_to_xi,
    build_triple_barrier,
    discretize_stark,
    eta_to_field,
)

__all__ = ["CONFIG_SCHEMA", "ConfigError", "RunConfig", "load_config", "parse_config", "DEFAULT_PHASES"]

log = logging.getLogger(__name__)

#: Carrier-envelope phases scanned when the phase axis is set to "default".
DEFAULT_PHASES = (0.0, math.pi / 4, math.pi / 2)

#: Energy grid step (meV) used when only start and stop are given.
DEFAULT_ENERGY_STEP = 0.25

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_numlist = {"type": "array", "items": _num, "minItems": 1}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "floquet-tunnel run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["device", "scan"],
    "properties": {
        "device": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["builder", "a", "b", "V0", "m_well", "m_barrier"],
                    "properties": {
                        "builder": {"const": "triple_barrier"},
                        "a": {**_pos, "description": "well width, Angstrom"},
                        "b": {**_pos, "description": "barrier width, Angstrom"},
                        "V0": {**_pos, "description": "barrier height, meV"},
                        "m_well": {**_pos, "description": "well and lead mass, m_e"},
                        "m_barrier": {**_pos, "description": "barrier mass, m_e"},
                        "field_profile": {
                            "oneOf": [
                                {"enum": ["uniform", "confined", "none"]},
                                {"type": "array", "items": _nonneg, "minItems": 7, "maxItems": 7},
                            ]
                        },
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["regions"],
                    "properties": {
                        "regions": {
                            "type": "array",
                            "minItems": 2,
                            "items": {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["mass", "potential"],
                                "properties": {
                                    "mass": _pos,
                                    "potential": {**_num, "description": "meV"},
                                    "width": {"oneOf": [_pos, {"type": "null"}], "description": "Angstrom; null for leads"},
                                    "field_scale": _nonneg,
                                },
                            },
                        },
                    },
                },
            ]
        },
        "waveform": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["off", "monochromatic", "bichromatic", "pulse_train"]},
                "omega": {**_pos, "description": "carrier frequency, meV"},
                "xi": _nonneg,
                "amplitude": {**_nonneg, "description": "peak field E0, atomic units"},
                "ponderomotive_ratio": {**_nonneg, "description": "U_p / omega"},
                "ponderomotive_mass": {**_pos, "description": "mass for U_p, m_e (default: left lead)"},
                "phase": _num,
                "cycles": {**_pos, "description": "pulse duration in carrier periods"},
                "sigma_fraction": {**_pos, "description": "Gaussian width / pulse duration"},
            },
        },
        "static_field": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"F": {**_num, "description": "atomic units"}, "eta": _num},
        },
        "n_points": {"type": "integer", "minimum": 2},
        "incidence": {"enum": ["left", "right"]},
        "scan": {
            "type": "object",
            "additionalProperties": False,
            "required": ["energy"],
            "properties": {
                "energy": {
                    "oneOf": [
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["start", "stop"],
                            "properties": {"start": _num, "stop": _num, "num": {"type": "integer", "minimum": 1},
                                           "step": _pos},
                        },
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["values"],
                            "properties": {"values": _numlist},
                        },
                    ]
                },
                "static_field": _numlist,
                "eta": _numlist,
                "xi": {"type": "array", "items": _nonneg, "minItems": 1},
                "phase": {"oneOf": [_numlist, {"const": "default"}]},
            },
        },
        "truncation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "policy": {"enum": ["fixed", "adaptive"]},
                "n_max": {"type": "integer", "minimum": 0},
                "start": {"type": "integer", "minimum": 1},
                "cap": {"type": "integer", "minimum": 1},
            },
        },
        "tolerance": _pos,
        "time_samples": {"type": "integer", "minimum": 256},
        "report_width": {"type": "integer", "minimum": 0},
        "convergence": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "staircase": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 2},
                "n_max": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2},
                "time_samples": {"type": "array", "items": {"type": "integer", "minimum": 256}, "minItems": 2},
                "threshold": _pos,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"path": {"type": "string"}, "format": {"enum": ["csv", "jsonl"]}},
        },
    },
}

_VALIDATOR = Draft202012Validator(CONFIG_SCHEMA)


class ConfigError(ValueError):
    """Invalid run configuration; ``errors`` lists ``(json_pointer, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p or '/'}: {m}" for p, m in self.errors))


def _deepest(context):
    # the branch that got furthest into the document is the one the user meant
    depth = max(len(e.absolute_path) for e in context)
    return best_match([e for e in context if len(e.absolute_path) == depth])


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration in atomic units.

    The device is rebuilt per scan point by :meth:`device`, since the static
    field and laser parameters can be scan axes.
    """

    device_spec: dict
    waveform_spec: dict
    energies_mev: tuple[float, ...]
    static_fields: tuple[float, ...] = (0.0,)
    xis: tuple[float | None, ...] = (None,)
    phases: tuple[float | None, ...] = (None,)
    n_points: int | None = None
    incidence: str = "left"
    policy: str = "adaptive"
    n_max: int = 4
    n_start: int = 4
    n_cap: int = 40
    tolerance: float = 1e-12
    time_samples: int | None = None
    report_width: int = 3
    convergence: dict = field(default_factory=dict)
    output_path: str | None = None
    output_format: str = "csv"

    @property
    def energies(self) -> np.ndarray:
        return UnitSystem.mev_to_au(np.asarray(self.energies_mev))

    def waveform(self, xi: float | None = None, phase: float | None = None) -> Waveform:
        return _build_waveform(self.waveform_spec, self.device_spec, xi, phase)

    def device(self, static_field: float = 0.0, xi: float | None = None, phase: float | None = None,
               n_points: int | None = None) -> Device:
        """Device for one scan point, staircased when a staircase size is set or the field is on."""
        dev = _build_device(self.device_spec, self.waveform(xi, phase), self.incidence)
        n = n_points if n_points is not None else self.n_points
        if n is None:
            if static_field != 0.0:
                raise ConfigError([("/n_points", "a static field needs a staircase size")])
            return dev
        return discretize_stark(dev, static_field, n)

    def points(self):
        """Scan points ``(F, xi, phase, energy_mev)`` with the energy varying fastest."""
        for f in self.static_fields:
            for xi in self.xis:
                for ph in self.phases:
                    for e in self.energies_mev:
                        yield f, xi, ph, e

    @property
    def cache_key(self) -> str:
        """Canonical text of everything that determines the device at a scan point."""
        return json.dumps([self.device_spec, self.waveform_spec, self.n_points, self.incidence], sort_keys=True)

    @property
    def n_scan_points(self) -> int:
        return len(self.static_fields) * len(self.xis) * len(self.phases) * len(self.energies_mev)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def _device_length_and_height(spec: dict) -> tuple[float, float]:
    """Interior length (a.u.) and largest interior potential (a.u.), for eta conversions."""
    if "builder" in spec:
        length = 3 * spec["b"] + 2 * spec["a"]
        return float(UnitSystem.angstrom_to_au(length)), float(UnitSystem.mev_to_au(spec["V0"]))
    inner = spec["regions"][1:-1]
    if not inner:
        raise ConfigError([("/static_field/eta", "eta needs a device with interior regions")])
    length = sum(r["width"] for r in inner)
    height = max(r["potential"] for r in inner)
    if not height > 0:
        raise ConfigError([("/static_field/eta", "eta needs a positive interior potential")])
    return float(UnitSystem.angstrom_to_au(length)), float(UnitSystem.mev_to_au(height))


def _build_device(spec: dict, waveform: Waveform, incidence: str) -> Device:
    A, M = UnitSystem.angstrom_to_au, UnitSystem.mev_to_au
    if "builder" in spec:
        return build_triple_barrier(
            float(A(spec["a"])), float(A(spec["b"])), float(M(spec["V0"])), spec["m_well"], spec["m_barrier"],
            field_profile=spec.get("field_profile", "uniform"), waveform=waveform, incidence=incidence,
        )
    regions = []
    for r in spec["regions"]:
        w = r.get("width")
        regions.append(Region(r["mass"], float(M(r["potential"])), math.inf if w is None else float(A(w)),
                              r.get("field_scale", 1.0)))
    return Device.from_regions(regions, waveform=waveform, incidence=incidence)


def _lead_mass(spec: dict) -> float:
    return spec["m_well"] if "builder" in spec else spec["regions"][0]["mass"]


def _build_waveform(spec: dict, device_spec: dict, xi: float | None, phase: float | None) -> Waveform:
    kind = spec.get("kind", "off")
    if kind == "off":
        return Waveform()
    omega = float(UnitSystem.mev_to_au(spec["omega"]))
    ph = spec.get("phase", 0.0) if phase is None else phase
    extra = {k: spec[k] for k in ("cycles", "sigma_fraction") if k in spec}
    if kind == "pulse_train":
        make = lambda x: Waveform.pulse_train(omega, x, ph, **extra)
    else:
        make = lambda x: Waveform(kind, omega, x, ph)
    if xi is not None:
        return make(xi)
    if "amplitude" in spec:
        return make(amplitude_to_xi(spec["amplitude"], omega))
    if "xi" in spec:
        return make(spec["xi"])
    mass = spec.get("ponderomotive_mass", _lead_mass(device_spec))
    return Waveform.from_ponderomotive_ratio(kind, omega, spec["ponderomotive_ratio"], mass, ph, **extra)


def _energy_axis(spec: dict) -> tuple[float, ...]:
    if "values" in spec:
        vals = [float(v) for v in spec["values"]]
    else:
        start, stop = float(spec["start"]), float(spec["stop"])
        if "num" in spec:
            vals = np.linspace(start, stop, spec["num"]).tolist()
        else:
            step = float(spec.get("step", DEFAULT_ENERGY_STEP))
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            vals = (start + step * np.arange(max(n, 0))).tolist()
    if not vals:
        raise ConfigError([("/scan/energy", "energy axis is empty")])
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError([("/scan/energy", "energy grid must be strictly increasing")])
    return tuple(vals)


def parse_config(doc: dict) -> RunConfig:
    """Validate a configuration document and convert it to a :class:`RunConfig`."""
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        # for oneOf/anyOf failures point at the most relevant branch error
        errors = [_deepest(e.context) if e.context else e for e in errors]
        raise ConfigError([(_pointer(e.absolute_path), e.message) for e in errors])

    dev, wf, scan = doc["device"], dict(doc.get("waveform", {"kind": "off"})), doc["scan"]
    if wf["kind"] != "off":
        missing = [k for k in ("omega",) if k not in wf]
        if missing:
            raise ConfigError([("/waveform", f"'{k}' is required for a laser waveform") for k in missing])
        given = [k for k in ("amplitude", "xi", "ponderomotive_ratio") if k in wf]
        if not given and "xi" not in scan:
            raise ConfigError([("/waveform", "give one of 'amplitude', 'xi' or 'ponderomotive_ratio'")])
        if "amplitude" in wf and len(given) > 1:
            log.warning("waveform: raw 'amplitude' given together with %s; using the raw value",
                        ", ".join(repr(k) for k in given if k != "amplitude"))
        elif "xi" in wf and "ponderomotive_ratio" in wf:
            log.warning("waveform: both 'xi' and 'ponderomotive_ratio' given; using 'xi'")
    if "regions" in dev:
        regs = dev["regions"]
        errs = []
        for i, r in enumerate(regs):
            lead = i in (0, len(regs) - 1)
            if lead and r.get("width") is not None:
                errs.append((f"/device/regions/{i}/width", "leads have no width; use null or omit it"))
            if not lead and r.get("width") is None:
                errs.append((f"/device/regions/{i}/width", "interior regions need a positive width"))
        if errs:
            raise ConfigError(errs)

    sf = doc.get("static_field", {})
    if "F" in sf:
        field0 = float(sf["F"])
        if "eta" in sf:
            log.warning("static_field: both 'F' and 'eta' given; using the raw F")
    elif "eta" in sf:
        length, height = _device_length_and_height(dev)
        field0 = eta_to_field(float(sf["eta"]), height, length)
    else:
        field0 = 0.0
    if "static_field" in scan:
        fields = tuple(float(f) for f in scan["static_field"])
        if "eta" in scan:
            log.warning("scan: both 'static_field' and 'eta' axes given; using 'static_field'")
    elif "eta" in scan:
        length, height = _device_length_and_height(dev)
        fields = tuple(eta_to_field(float(e), height, length) for e in scan["eta"])
    else:
        fields = (field0,)

    phase_axis = scan.get("phase")
    phases = DEFAULT_PHASES if phase_axis == "default" else tuple(phase_axis) if phase_axis else (None,)
    xis = tuple(float(x) for x in scan["xi"]) if "xi" in scan else (None,)
    if wf["kind"] == "off" and (xis != (None,) or phases != (None,)):
        raise ConfigError([("/scan", "xi and phase axes need a laser waveform")])

    trunc = doc.get("truncation", {})
    policy = trunc.get("policy", "fixed" if "n_max" in trunc else "adaptive")
    n_start, n_cap = trunc.get("start", 4), trunc.get("cap", 40)
    if n_start > n_cap:
        raise ConfigError([("/truncation/start", f"start {n_start} exceeds cap {n_cap}")])
    if policy == "fixed" and "n_max" not in trunc:
        raise ConfigError([("/truncation/n_max", "fixed policy needs n_max")])

    out = doc.get("output", {})
    cfg = RunConfig(
        device_spec=dev,
        waveform_spec=wf,
        energies_mev=_energy_axis(scan["energy"]),
        static_fields=fields,
        xis=xis,
        phases=phases,
        n_points=doc.get("n_points"),
        incidence=doc.get("incidence", "left"),
        policy=policy,
        n_max=trunc.get("n_max", n_start),
        n_start=n_start,
        n_cap=n_cap,
        tolerance=float(doc.get("tolerance", 1e-12)),
        time_samples=doc.get("time_samples"),
        report_width=doc.get("report_width", 3),
        convergence=dict(doc.get("convergence", {})),
        output_path=out.get("path"),
        output_format=out.get("format", "csv"),
    )
    # build one device eagerly so geometry problems surface as configuration errors
    try:
        cfg.device(fields[0], xis[0], phases[0])
    except (GeometryError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError([("/device", str(exc))]) from exc
    return cfg


def load_config(path) -> RunConfig:
    """Read and validate a JSON configuration file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([("", f"cannot read {path}: {exc.strerror}")]) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")]) from exc
    return parse_config(doc)
