"""Config-file loading: model parameter sets and simulation bounds.

Model files are TOML with a [model] section whose keys match the parameter
table names (mu, Ixx, Iyy, Izz, Axx, Ayy, Azz, b, c, d) and an optional
[simulation] section with trial bounds. The two stock quadrotors ship as
package data and can be addressed by name.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dynamics import ModelSpec, NominalParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BUILTIN_MODELS = ("crazyflie", "fusion1")

_MODEL_KEYS = ("mu", "Ixx", "Iyy", "Izz", "Axx", "Ayy", "Azz", "b", "c", "d")


class ConfigError(ValueError):
    """Invalid or missing configuration; message names the offending key/path."""


@dataclass
class SimulationBounds:
    """Per-model uniform sampling bounds for Monte Carlo trials."""

    position_bound: float = 5.0
    velocity_bound: float = 2.5
    angular_velocity_bound: float = 2.5
    noise_bound: float = 2.5
    parameter_bound_factors: tuple = (0.5, 1.5)
    dt: float = 0.02
    t_total: float = 10.0


@dataclass
class ModelConfig:
    spec: ModelSpec
    bounds: SimulationBounds = field(default_factory=SimulationBounds)


def _read_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}")


def _parse_model(doc: dict, source: str) -> ModelConfig:
    if "model" not in doc:
        raise ConfigError(f"{source}: missing [model] section")
    section = doc["model"]
    for key in _MODEL_KEYS:
        if key not in section:
            raise ConfigError(f"{source}: missing model key '{key}'")
    params = NominalParams(
        mass=float(section["mu"]),
        inertia=np.array([section["Ixx"], section["Iyy"], section["Izz"]], dtype=float),
        drag=np.array([section["Axx"], section["Ayy"], section["Azz"]], dtype=float),
        b=np.asarray(section["b"], dtype=float),
        c=np.asarray(section["c"], dtype=float),
        d=np.asarray(section["d"], dtype=float),
    )
    spec = ModelSpec(name=str(section.get("name", Path(source).stem)), params=params)
    if "u_max" in section:
        spec.u_max = float(section["u_max"])
    bounds = SimulationBounds()
    for key, val in doc.get("simulation", {}).items():
        if not hasattr(bounds, key):
            raise ConfigError(f"{source}: unknown simulation key '{key}'")
        if key == "parameter_bound_factors":
            val = tuple(float(v) for v in val)
        setattr(bounds, key, val)
    return ModelConfig(spec=spec, bounds=bounds)


def load_model(name_or_path: str) -> ModelConfig:
    """Load a model by builtin name ('crazyflie', 'fusion1') or TOML path."""
    if name_or_path in BUILTIN_MODELS:
        ref = resources.files("lqmhpe.data") / f"{name_or_path}.toml"
        with resources.as_file(ref) as path:
            doc = _read_toml(path)
        return _parse_model(doc, name_or_path)
    path = Path(name_or_path)
    return _parse_model(_read_toml(path), str(path))
