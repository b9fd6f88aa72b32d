"""Structured-text run configuration.

One INI-style file drives every subcommand; sections mirror the module
layout.  Quantities may carry unit tags ('2831 cm-1', '273 K', '0.5 ev');
bare numbers are atomic units.  Unknown keys are rejected.
"""

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import presets
from .bath import BathSpec, DensitySpec, Mode
from .propagator import PropagationConfig
from .system import ModelBuilder, build_model, load_fcidump, load_native
from .units import beta_from_temperature, parse_quantity


class ConfigError(ValueError):
    pass


_KNOWN_KEYS = {
    "system": {"source", "seed", "n_occ", "n_virt", "scale", "path",
               "n_electrons", "preset", "complex"},
    "bath": {"temperature", "beta", "mode", "density"},
    "propagation": {"mode", "dt", "dt_min", "dt_max", "rk_tolerance", "t_final",
                    "quad_order", "correlation_terms", "adaptive", "output_dt",
                    "subtract_reorganization", "hermitize", "t_c"},
    "observables": {"kick", "window", "normalize", "dressed"},
    "output": {"directory"},
}


@dataclass
class RunConfig:
    system: object
    bath: BathSpec
    propagation: PropagationConfig
    t_c: float
    kick: tuple
    window: float
    normalize: bool
    dressed: bool
    out_dir: Path
    config_hash: str
    raw: dict = field(default_factory=dict)


def _check_keys(parser):
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")


def _build_system(parser):
    if "system" not in parser:
        raise ConfigError("missing [system] section")
    sec = parser["system"]
    source = sec.get("source", "model")
    if source == "model":
        builder = ModelBuilder(
            seed=sec.getint("seed", 1),
            n_occ=sec.getint("n_occ", 2),
            n_virt=sec.getint("n_virt", 2),
            scale=float(sec.get("scale", "0.05")),
            complex_valued=sec.getboolean("complex", False))
        return build_model(builder), None
    if source == "fcidump":
        return load_fcidump(sec["path"], sec.getint("n_electrons")), None
    if source == "native":
        return load_native(sec["path"]), None
    if source == "preset":
        name = sec.get("preset", "transport")
        if name == "transport":
            return presets.transport_model()
        if name == "vibronic":
            return presets.vibronic_model()
        raise ConfigError(f"unknown preset {name!r}")
    raise ConfigError(f"unknown system source {source!r}")


def _build_bath(parser, n_orb, preset_bath):
    if "bath" not in parser:
        return preset_bath if preset_bath is not None else BathSpec(beta=np.inf)
    sec = parser["bath"]
    if "beta" in sec:
        beta = float(sec["beta"])
    elif "temperature" in sec:
        text = sec["temperature"].split()
        kelvin = float(text[0])
        beta = beta_from_temperature(kelvin)
    else:
        beta = np.inf

    modes = list(preset_bath.modes) if preset_bath is not None else []
    for line in sec.get("mode", "").splitlines():
        line = line.strip()
        if not line:
            continue
        freq_txt, coup_txt = line.split("|")
        omega = parse_quantity(freq_txt)
        coup = np.array([float(x) for x in coup_txt.split()])
        if coup.size == 1:
            coup = np.full(n_orb, coup[0])
        if coup.size == n_orb // 2:
            coup = np.repeat(coup, 2)
        if coup.size != n_orb:
            raise ConfigError(f"mode couplings need {n_orb} entries (or half, "
                              f"or one), got {coup.size}")
        modes.append(Mode(omega=omega, coupling=coup * omega))  # entries are mtilde

    densities = list(preset_bath.densities) if preset_bath is not None else []
    for line in sec.get("density", "").splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        shape = parts[0]
        eta = float(parts[1])
        # omega_c may carry a unit tag
        if len(parts) == 5:
            omega_c = parse_quantity(parts[2] + " " + parts[3])
            n_points = int(parts[4])
        elif len(parts) == 4:
            omega_c = parse_quantity(parts[2])
            n_points = int(parts[3])
        else:
            raise ConfigError(f"density line needs 'shape eta omega_c n_points': {line!r}")
        densities.append(DensitySpec(shape=shape, eta=np.full(n_orb, eta),
                                     omega_c=omega_c, n_points=n_points))
    return BathSpec(modes=modes, densities=densities, beta=beta)


def parse_config(path):
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    _check_keys(parser)

    system, preset_bath = _build_system(parser)
    bath = _build_bath(parser, system.n_orb, preset_bath)

    sec = parser["propagation"] if "propagation" in parser else {}
    mode = sec.get("mode", "transformed")
    if mode == "transformed" and not bath.modes and not bath.densities:
        raise ConfigError("transformed mode needs a [bath] section with modes "
                          "or densities (or use mode = adiabatic)")
    prop = PropagationConfig(
        t_final=parse_quantity(sec.get("t_final", "1000")),
        dt_initial=float(sec.get("dt", "0.05")),
        dt_min=float(sec.get("dt_min", "1e-6")),
        dt_max=float(sec.get("dt_max", "1.0")),
        rk_tolerance=float(sec.get("rk_tolerance", "1e-8")),
        quad_order=int(sec.get("quad_order", "3")),
        mode=mode,
        correlation_terms=_get_bool(sec, "correlation_terms", True),
        adaptive=_get_bool(sec, "adaptive", True),
        output_dt=float(sec.get("output_dt", "0.5")),
        subtract_reorganization=_get_bool(sec, "subtract_reorganization", True),
        hermitize=_get_bool(sec, "hermitize", True))
    t_c = parse_quantity(sec.get("t_c", "2000")) if hasattr(sec, "get") else 2000.0

    osec = parser["observables"] if "observables" in parser else {}
    kick = tuple(osec.get("kick", "x").split())
    window = float(osec.get("window", "0"))
    normalize = _get_bool(osec, "normalize", False)
    dressed = _get_bool(osec, "dressed", True)

    out_dir = Path(parser["output"]["directory"]) if "output" in parser else Path("out")

    digest = hashlib.sha256(path.read_bytes()).hexdigest()[:16]
    return RunConfig(system=system, bath=bath, propagation=prop, t_c=t_c,
                     kick=kick, window=window, normalize=normalize,
                     dressed=dressed, out_dir=out_dir, config_hash=digest)


def _get_bool(sec, key, default):
    if not hasattr(sec, "get") or key not in sec:
        return default
    value = sec.get(key)
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")
