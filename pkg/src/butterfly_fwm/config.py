"""Run configuration: a flat ``section.key = value [unit]`` text format.

Example::

    # toy model
    butterfly.omega_d = 0.1 [Gamma]
    grid.radius = 50 [lambda]
    integration.t_end = 10 [1/Gamma]

Blank lines and ``#`` comments are ignored.  Every dimensional key must
carry its unit in brackets; the accepted units are listed in ``_KEYS``.
Butterfly rates are in units of Gamma, silver frequencies in GHz.
Exactly one of the ``butterfly`` and ``silver`` sections may appear.
Unknown keys, duplicate keys and unit mismatches are errors that name
the offending line.
"""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .schemes import DEFAULT_B_LOSS, SILVER_GAMMA_GHZ

__all__ = [
    "ButterflySection",
    "SilverSection",
    "GridSection",
    "IntegrationSection",
    "CorrelationSection",
    "PolarizationSection",
    "OutputSection",
    "SweepSection",
    "RunConfig",
    "parse_config",
    "serialize_config",
    "load_config",
    "load_preset",
    "preset_names",
    "set_parameter",
    "get_parameter",
]

# divisors, so that e.g. 20 um -> 2e-05 m exactly
_LENGTH_PER_M = {"m": 1.0, "mm": 1e3, "um": 1e6, "nm": 1e9}
_FREQ_TO_GHZ = {"GHz": 1.0, "MHz": 1e-3}


@dataclass(frozen=True)
class ButterflySection:
    gamma2: float
    gamma4: float
    omega_d: float
    omega_c: float
    atom_number: float
    dipole2: str = "sigma+"
    dipole4: str = "sigma-"


@dataclass(frozen=True)
class SilverSection:
    drive_rabi: tuple[float, ...]
    drive_detuning: tuple[float, ...]
    coupling_rabi: tuple[float, ...]
    coupling_detuning: tuple[float, ...]
    atom_number: float
    gamma: float = SILVER_GAMMA_GHZ
    b_loss: float = DEFAULT_B_LOSS
    allow_near_resonant: bool = False


@dataclass(frozen=True)
class GridSection:
    rings: int
    radius: float
    wavelength: float
    length_unit: str = "lambda"  # "lambda" (wavelength == 1) or "m"


@dataclass(frozen=True)
class IntegrationSection:
    t_end: float
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float | None = None
    samples: int = 1001
    fit_fraction: float = 0.7
    threads: int = 1


@dataclass(frozen=True)
class CorrelationSection:
    ring: int = 0
    tau_max: float | None = None
    samples: int = 4001


@dataclass(frozen=True)
class PolarizationSection:
    theta_max: float = 0.5
    points: int = 181


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"


@dataclass(frozen=True)
class SweepSection:
    parameter: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection
    integration: IntegrationSection
    butterfly: ButterflySection | None = None
    silver: SilverSection | None = None
    g2: CorrelationSection = CorrelationSection()
    polarization: PolarizationSection = PolarizationSection()
    output: OutputSection = OutputSection()
    sweep: SweepSection | None = None

    @property
    def scheme(self) -> str:
        return "butterfly" if self.butterfly is not None else "silver"

    def radius_wavelength_m(self):
        """Radius and wavelength; in wavelengths when the grid is dimensionless."""
        return self.grid.radius, self.grid.wavelength


# key -> (kind, allowed units, required)
# kinds: float, int, bool, str, floats, optfloat
_KEYS = {
    "butterfly": {
        "gamma2": ("float", ("Gamma",), True),
        "gamma4": ("float", ("Gamma",), True),
        "omega_d": ("float", ("Gamma",), True),
        "omega_c": ("float", ("Gamma",), True),
        "atom_number": ("float", None, True),
        "dipole2": ("str", None, False),
        "dipole4": ("str", None, False),
    },
    "silver": {
        "drive_rabi": ("floats", ("GHz", "MHz"), True),
        "drive_detuning": ("floats", ("GHz", "MHz"), True),
        "coupling_rabi": ("floats", ("GHz", "MHz"), True),
        "coupling_detuning": ("floats", ("GHz", "MHz"), True),
        "atom_number": ("float", None, True),
        "gamma": ("float", ("GHz", "MHz"), False),
        "b_loss": ("float", None, False),
        "allow_near_resonant": ("bool", None, False),
    },
    "grid": {
        "rings": ("int", None, True),
        "radius": ("float", ("lambda",) + tuple(_LENGTH_PER_M), True),
        "wavelength": ("float", ("lambda",) + tuple(_LENGTH_PER_M), True),
    },
    "integration": {
        "t_end": ("float", ("1/Gamma",), True),
        "rtol": ("float", None, False),
        "atol": ("float", None, False),
        "max_step": ("optfloat", ("1/Gamma",), False),
        "samples": ("int", None, False),
        "fit_fraction": ("float", None, False),
        "threads": ("int", None, False),
    },
    "g2": {
        "ring": ("int", None, False),
        "tau_max": ("optfloat", ("1/Gamma",), False),
        "samples": ("int", None, False),
    },
    "polarization": {
        "theta_max": ("float", ("rad",), False),
        "points": ("int", None, False),
    },
    "output": {
        "directory": ("str", None, False),
    },
    "sweep": {
        "parameter": ("str", None, True),
        "values": ("floats", "any", False),
        "start": ("float", "any", False),
        "stop": ("float", "any", False),
        "steps": ("int", None, False),
    },
}

_SECTION_CLASSES = {
    "butterfly": ButterflySection,
    "silver": SilverSection,
    "grid": GridSection,
    "integration": IntegrationSection,
    "g2": CorrelationSection,
    "polarization": PolarizationSection,
    "output": OutputSection,
    "sweep": SweepSection,
}

_LINE = re.compile(r"^(?P<key>[A-Za-z0-9_]+\.[A-Za-z0-9_]+)\s*=\s*(?P<value>[^\[]*?)\s*"
                   r"(?:\[(?P<unit>[^\]]*)\])?\s*$")


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _parse_scalar(kind, text, key, lineno):
    try:
        if kind == "float":
            return float(text)
        if kind == "optfloat":
            return None if text.lower() in ("auto", "none") else float(text)
        if kind == "int":
            f = float(text)
            if f != int(f):
                raise ValueError
            return int(f)
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError
        if kind == "floats":
            parts = [p.strip() for p in text.split(",") if p.strip()]
            if not parts:
                raise ValueError
            return tuple(float(p) for p in parts)
        if kind == "str":
            if not text:
                raise ValueError
            return text
    except ValueError:
        raise ConfigError(f"cannot read {key} = {text!r} as {kind}", lineno) from None
    raise AssertionError(kind)


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text.

    Raises
    ------
    ConfigError
        With the 1-based line number of the offending entry.
    """
    raw: dict[str, dict[str, tuple]] = {}
    first_line: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line)
        if not body:
            continue
        m = _LINE.match(body)
        if not m:
            raise ConfigError(f"expected 'section.key = value [unit]', got {body!r}", lineno)
        section, key = m.group("key").split(".", 1)
        if section not in _KEYS:
            raise ConfigError(f"unknown section {section!r}", lineno)
        if key not in _KEYS[section]:
            raise ConfigError(f"unknown key {section}.{key}", lineno)
        if key in raw.get(section, {}):
            raise ConfigError(f"duplicate key {section}.{key}", lineno)
        raw.setdefault(section, {})[key] = (m.group("value").strip(), m.group("unit"), lineno)
        first_line.setdefault(section, lineno)

    if "butterfly" in raw and "silver" in raw:
        raise ConfigError(
            "conflicting scheme sections: both 'butterfly' and 'silver' are present",
            max(first_line["butterfly"], first_line["silver"]),
        )
    if "butterfly" not in raw and "silver" not in raw:
        raise ConfigError("no scheme section: need 'butterfly' or 'silver'")
    for section in ("grid", "integration"):
        if section not in raw:
            raise ConfigError(f"missing section {section!r}")

    values: dict[str, dict] = {}
    units: dict[str, dict] = {}
    for section, entries in raw.items():
        schema = _KEYS[section]
        for key, (kind, allowed, required) in schema.items():
            if required and key not in entries:
                raise ConfigError(
                    f"missing required key {section}.{key} "
                    f"(section {section!r} starts at line {first_line[section]})",
                    first_line[section],
                )
        vals, unts = {}, {}
        for key, (text_value, unit, lineno) in entries.items():
            kind, allowed, _ = schema[key]
            full = f"{section}.{key}"
            if allowed is None:
                if unit is not None:
                    raise ConfigError(f"{full} is dimensionless but has unit [{unit}]", lineno)
            elif allowed != "any":
                if unit is None:
                    raise ConfigError(f"{full} needs a unit, one of {list(allowed)}", lineno)
                if unit not in allowed:
                    raise ConfigError(
                        f"unit mismatch for {full}: [{unit}] is not one of {list(allowed)}", lineno
                    )
            vals[key] = _parse_scalar(kind, text_value, full, lineno)
            unts[key] = (unit, lineno)
        values[section] = vals
        units[section] = unts

    # silver frequencies -> GHz
    if "silver" in values:
        for key, (unit, _) in units["silver"].items():
            if unit in _FREQ_TO_GHZ:
                f = _FREQ_TO_GHZ[unit]
                v = values["silver"][key]
                values["silver"][key] = tuple(x * f for x in v) if isinstance(v, tuple) else v * f

    values["grid"] = _normalize_lengths(values["grid"], units["grid"])
    if "sweep" in values:
        values["sweep"], units["sweep"] = _sweep_values(values["sweep"], units["sweep"],
                                                        first_line["sweep"])

    try:
        sections = {name: _SECTION_CLASSES[name](**vals) for name, vals in values.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig(**sections)
    _validate(cfg, first_line, units)
    return cfg


def _sweep_values(vals, units, line):
    """Accept either an explicit value list or ``start``/``stop``/``steps``."""
    span = [k for k in ("start", "stop", "steps") if k in vals]
    if "values" in vals:
        if span:
            raise ConfigError("sweep: give either values or start/stop/steps, not both",
                              units[span[0]][1])
        return vals, units
    if len(span) != 3:
        missing = [k for k in ("start", "stop", "steps") if k not in vals]
        raise ConfigError(f"missing required key sweep.{missing[0]} "
                          "(or give sweep.values)", line)
    if vals["steps"] < 1:
        raise ConfigError("sweep.steps must be >= 1", units["steps"][1])
    if units["start"][0] != units["stop"][0]:
        raise ConfigError("sweep.start and sweep.stop use different units", units["stop"][1])
    if vals["steps"] == 1:
        grid = (vals["start"],)
    else:
        grid = tuple(float(v) for v in np.linspace(vals["start"], vals["stop"], vals["steps"]))
    out = {"parameter": vals["parameter"], "values": grid}
    return out, {"parameter": units["parameter"], "values": units["start"]}


def _normalize_lengths(vals, units):
    r_unit, r_line = units["radius"]
    w_unit, w_line = units["wavelength"]
    if r_unit == "lambda" and w_unit == "lambda":
        if vals["wavelength"] != 1.0:
            raise ConfigError("grid.wavelength in [lambda] must be 1", w_line)
        return dict(vals, length_unit="lambda")
    if w_unit == "lambda":
        raise ConfigError("grid.wavelength must be a physical length when the radius is", w_line)
    wl = vals["wavelength"] / _LENGTH_PER_M[w_unit]
    if r_unit == "lambda":
        radius = vals["radius"] * wl
    else:
        radius = vals["radius"] / _LENGTH_PER_M[r_unit]
    return dict(vals, radius=radius, wavelength=wl, length_unit="m")


def _validate(cfg: RunConfig, first_line, units):
    g = cfg.grid
    if g.rings < 2:
        raise ConfigError("grid.rings must be >= 2", units["grid"]["rings"][1])
    if not (g.radius > 0 and g.wavelength > 0):
        raise ConfigError("grid lengths must be positive", units["grid"]["radius"][1])
    if g.radius < g.wavelength:
        raise ConfigError("grid.radius is smaller than the wavelength", units["grid"]["radius"][1])
    integ = cfg.integration
    if not integ.t_end > 0:
        raise ConfigError("integration.t_end must be positive", units["integration"]["t_end"][1])
    if cfg.silver is not None and g.length_unit != "m":
        raise ConfigError("the silver scheme needs physical grid lengths (e.g. [um], [nm])",
                          first_line["grid"])
    if cfg.sweep is not None:
        line = units["sweep"]["parameter"][1]
        try:
            current = get_parameter(cfg, cfg.sweep.parameter)
        except KeyError as exc:
            raise ConfigError(str(exc), line) from None
        if isinstance(current, (tuple, str, bool)) or current is None:
            raise ConfigError(f"sweep.parameter {cfg.sweep.parameter} is not a scalar", line)
        if not cfg.sweep.values:
            raise ConfigError("sweep.values is empty", units["sweep"]["values"][1])
        sweep_unit, vline = units["sweep"]["values"]
        section, key = cfg.sweep.parameter.split(".", 1)
        allowed = _KEYS[section][key][1]
        expected = None if allowed is None else allowed[0]
        if section == "grid" and key in ("radius", "wavelength"):
            expected = "m" if g.length_unit == "m" else "lambda"
        if section == "silver" and allowed is not None:
            expected = "GHz"
        if sweep_unit != expected:
            raise ConfigError(
                f"unit mismatch: sweep.values in [{sweep_unit}] but "
                f"{cfg.sweep.parameter} needs [{expected}]",
                vline,
            )


def get_parameter(cfg: RunConfig, name: str):
    section, _, key = name.partition(".")
    sec = getattr(cfg, section, None) if section in _SECTION_CLASSES else None
    if sec is None or not hasattr(sec, key):
        raise KeyError(f"unknown parameter {name!r}")
    return getattr(sec, key)


def set_parameter(cfg: RunConfig, name: str, value) -> RunConfig:
    section, _, key = name.partition(".")
    get_parameter(cfg, name)
    sec = getattr(cfg, section)
    if isinstance(getattr(sec, key), int) and not isinstance(getattr(sec, key), bool):
        if value != int(value):
            raise ValueError(f"{name} must be an integer")
        value = int(value)
    return dataclasses.replace(cfg, **{section: dataclasses.replace(sec, **{key: value})})


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if v is None:
        return "auto"
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    lines = []
    order = ["butterfly", "silver", "grid", "integration", "g2", "polarization", "output", "sweep"]
    for section in order:
        sec = getattr(cfg, section)
        if sec is None:
            continue
        lines.append(f"# {section}")
        for f in dataclasses.fields(sec):
            if f.name == "length_unit":
                continue
            value = getattr(sec, f.name)
            allowed = _KEYS[section][f.name][1]
            unit = None
            if section == "grid" and f.name != "rings":
                unit = "lambda" if sec.length_unit == "lambda" else "m"
            elif section == "sweep" and f.name == "values":
                unit = _sweep_unit(cfg)
            elif allowed is not None:
                unit = "GHz" if section == "silver" else allowed[0]
            suffix = f" [{unit}]" if unit else ""
            lines.append(f"{section}.{f.name} = {_fmt(value)}{suffix}")
        lines.append("")
    return "\n".join(lines)


def _sweep_unit(cfg: RunConfig):
    section, key = cfg.sweep.parameter.split(".", 1)
    allowed = _KEYS[section][key][1]
    if section == "grid" and key in ("radius", "wavelength"):
        return "m" if cfg.grid.length_unit == "m" else "lambda"
    if allowed is None:
        return None
    return "GHz" if section == "silver" else allowed[0]


def preset_names() -> list[str]:
    root = resources.files("butterfly_fwm") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> RunConfig:
    root = resources.files("butterfly_fwm") / "presets"
    path = root / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}")
    return parse_config(path.read_text(encoding="utf-8"))


def load_config(path_or_preset) -> RunConfig:
    """Read a config file, or a shipped preset when no such file exists."""
    path = Path(path_or_preset)
    if path.is_file():
        try:
            text = path.read_text(encoding="utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"{path} is not UTF-8 text: {exc}") from None
        return parse_config(text)
    if str(path_or_preset) in preset_names():
        return load_preset(str(path_or_preset))
    raise ConfigError(f"no config file or preset named {str(path_or_preset)!r}")
