"""Run configuration read from sectioned ``key = value`` files (``format = 1``)."""

import configparser
import os
from dataclasses import dataclass, fields

import numpy as np

FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Every knob of the pipeline; defaults match the library defaults.

    The reconstruction mesh size is ``mesh_h`` when given, otherwise
    ``2π / (wavelength_fraction · k_max)``.  Synthetic data use a mesh
    refined ``data_refinements`` times and ``extra_modes`` more exterior
    modes than the reconstruction.
    """

    output: str = "out"
    workers: int = 1
    phantom: str = "example2"
    phantom_grid: str = ""
    radius: float = 1.0
    mesh_h: float = 0.0
    wavelength_fraction: float = 20.0
    data_refinements: int = 1
    extra_modes: int = 8
    k_min: float = 1.0
    k_max: float = 12.1
    step: float = 0.5
    sweeps_per_k: int = 3
    beta: float = 0.0
    beta_scale: float = 2.0
    angles: int = 32
    noise_level: float = 0.0
    seed: int = 1
    alpha: float = 0.0
    sigma_min: float = float("-inf")
    sigma_max: float = float("inf")
    grid_n: int = 64
    support_radius: float = 0.95
    snapshots: bool = False
    cross_section_y: float = -0.6

    @property
    def reconstruction_h(self):
        if self.mesh_h > 0:
            return self.mesh_h
        return 2 * np.pi / (self.wavelength_fraction * self.k_max)

    @property
    def incident_angles(self):
        return 2 * np.pi * np.arange(self.angles) / self.angles

    def validate(self):
        positive = ["radius", "wavelength_fraction", "k_min", "k_max", "step", "grid_n",
                    "angles", "sweeps_per_k", "beta_scale", "support_radius", "workers"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive (got {getattr(self, name)})")
        nonneg = ["mesh_h", "beta", "alpha", "noise_level", "data_refinements", "extra_modes"]
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.k_max < self.k_min:
            raise ConfigError("k_max must be at least k_min")
        if self.phantom not in ("example1", "example2", "grid", "zero", "none"):
            raise ConfigError(f"unknown phantom {self.phantom!r}")
        if self.phantom == "grid" and not self.phantom_grid:
            raise ConfigError("phantom = grid needs phantom_grid")
        if self.sigma_min > self.sigma_max:
            raise ConfigError("sigma_min exceeds sigma_max")
        return self


# section -> keys accepted in that section
SECTIONS = {
    "run": ["format", "output", "workers"],
    "phantom": ["kind", "grid", "radius"],
    "mesh": ["h", "wavelength_fraction", "data_refinements"],
    "data": ["angles", "extra_modes", "noise_level", "seed"],
    "schedule": ["k_min", "k_max", "step", "sweeps_per_k", "beta", "beta_scale"],
    "born": ["alpha", "sigma_min", "sigma_max"],
    "reconstruct": ["grid_n", "support_radius", "snapshots"],
    "plot": ["cross_section_y"],
}

# (section, key) -> RunConfig field when the names differ
_RENAMES = {
    ("phantom", "kind"): "phantom",
    ("phantom", "grid"): "phantom_grid",
    ("mesh", "h"): "mesh_h",
}


def _locate(path, section, key=None):
    """``path:line`` of ``[section]`` or of ``key`` inside it (best effort)."""
    current = None
    try:
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                stripped = line.strip()
                if stripped.startswith("[") and stripped.endswith("]"):
                    current = stripped[1:-1].strip()
                    if key is None and current == section:
                        return f"{path}:{lineno}"
                elif key is not None and current == section:
                    name = stripped.split("=", 1)[0].split(":", 1)[0].strip().lower()
                    if name == key:
                        return f"{path}:{lineno}"
    except OSError:
        pass
    return str(path)


def load_config(path):
    """Parse and validate a config file; raises :class:`ConfigError` with location info."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as f:
            parser.read_file(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    if not parser.has_section("run") or parser.get("run", "format", fallback=None) is None:
        raise ConfigError(f"{path}: [run] format = {FORMAT_VERSION} is required")
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{_locate(path, section)}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"{_locate(path, section, key)}: unknown key {key!r} "
                                  f"in [{section}]")
            if key == "format":
                if raw.strip() != str(FORMAT_VERSION):
                    raise ConfigError(f"{_locate(path, section, key)}: unsupported format "
                                      f"{raw!r}")
                continue
            name = _RENAMES.get((section, key), key)
            kind = types[name]
            try:
                if kind in (bool, "bool"):
                    value = parser.getboolean(section, key)
                elif kind in (int, "int"):
                    value = int(raw)
                elif kind in (float, "float"):
                    value = float(raw)
                else:
                    value = raw.strip()
            except ValueError:
                raise ConfigError(f"{_locate(path, section, key)}: [{section}] {key} = {raw!r} "
                                  f"is not a valid "
                                  f"{getattr(kind, '__name__', kind)}") from None
            values[name] = value
    cfg = RunConfig(**values)
    if cfg.phantom_grid and not os.path.isabs(cfg.phantom_grid):
        cfg.phantom_grid = os.path.join(os.path.dirname(os.path.abspath(path)), cfg.phantom_grid)
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
