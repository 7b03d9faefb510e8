"""JSON run configuration: key schema, validation and space construction.

A configuration is one JSON object::

    {
      "name": "perturbed_t2",
      "manifold": {"dim": 2, "periods": [...], "cuplength": 2, "crit": 3},
      "metric": {"kind": "constant", "matrix": [[1, 0], [0, 1]]},
      "magnetic": {"kind": "block", "bases": [2.0], "amplitudes": [1.0], "axes": [0]},
      "grid": {"resolution": 16, "axes": [0, 1]},
      "tolerances": {...},
      "williamson": {...}, "grc": {...}, "converge": {...},
      "census": {...}, "simulate": {...}
    }

``periods`` defaults to ``2 pi`` on every axis (``null`` gives an unwrapped
patch) and ``cuplength``/``crit`` to the flat-torus values.  Metric kinds are ``constant`` (``matrix``),
``conformal`` (``scale``, ``amplitude``, ``axis``) and ``compatible``
(``modes``, ``axes``).  Magnetic kinds are ``constant`` (``matrix``) and
``block`` (``bases``, ``amplitudes``, ``axes``).  Subcommand sections are
documented in the README.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import (
    BaseManifold,
    BlockMagnetic,
    CompatibleMetric,
    ConformalMetric,
    ConstantMagnetic,
    ConstantMetric,
    TWO_PI,
    TwistedPhaseSpace,
)

DEFAULT_TOLERANCES = {
    "residual": 1e-10,
    "oracle_rtol": 1e-10,
    "closed": 1e-6,
    "h_fd": 1e-3,
}


class ConfigError(ValueError):
    """Invalid or missing configuration (CLI exit code 2)."""


@dataclass
class RunConfig:
    name: str
    raw: dict
    source: str
    tolerances: dict = field(default_factory=dict)

    def section(self, key) -> dict:
        sec = self.raw.get(key, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"section {key!r} must be an object")
        return sec

    @property
    def has_space(self) -> bool:
        return "manifold" in self.raw


def fixture_names():
    root = resources.files("magflow") / "fixtures"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("magflow") / "fixtures" / f"{name}.json"))


def load_config(source) -> RunConfig:
    """Load a config from a path, or a shipped fixture by bare name."""
    path = Path(source)
    if not path.exists():
        if str(source) in fixture_names():
            path = fixture_path(str(source))
        else:
            raise ConfigError(f"no config file or fixture named {source!r}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(raw, str(path))


def from_dict(raw: dict, source: str = "<dict>") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(raw.get("tolerances", {}))
    for k, v in tol.items():
        if not isinstance(v, (int, float)) or v <= 0:
            raise ConfigError(f"tolerance {k!r} must be positive, got {v!r}")
    cfg = RunConfig(raw.get("name", Path(source).stem), raw, source, tol)
    if cfg.has_space:
        build_space(cfg)  # fail early on bad geometry
    return cfg


def _matrix(sec, key, dim):
    try:
        m = np.array(sec[key], dtype=float)
    except KeyError:
        raise ConfigError(f"missing key {key!r}") from None
    if m.shape != (dim, dim):
        raise ConfigError(f"{key!r} must be {dim}x{dim}, got shape {m.shape}")
    return m


def build_space(cfg: RunConfig) -> TwistedPhaseSpace:
    raw = cfg.raw
    try:
        man = raw["manifold"]
        dim = int(man["dim"])
        periods = man.get("periods", [man.get("period", TWO_PI)] * dim)
        base = BaseManifold(
            dim,
            None if periods is None else tuple(periods),
            int(man.get("cuplength", dim)),
            int(man.get("crit", dim + 1)),
            man.get("name", f"T{dim}" if periods is not None else f"patch{dim}"),
        )
        met = raw.get("metric", {"kind": "constant", "matrix": np.eye(dim).tolist()})
        kind = met.get("kind")
        if kind == "constant":
            metric = ConstantMetric(_matrix(met, "matrix", dim))
        elif kind == "conformal":
            metric = ConformalMetric(dim, met.get("scale", 1.0), met.get("amplitude", 0.0), met.get("axis", 0))
        elif kind == "compatible":
            metric = CompatibleMetric(dim, tuple(met.get("modes", ())), tuple(met.get("axes", ())))
        else:
            raise ConfigError(f"unknown metric kind {kind!r}")
        mag = raw["magnetic"]
        kind = mag.get("kind")
        if kind == "constant":
            magnetic = ConstantMagnetic(_matrix(mag, "matrix", dim))
        elif kind == "block":
            magnetic = BlockMagnetic(tuple(mag["bases"]), tuple(mag.get("amplitudes", ())), tuple(mag.get("axes", ())))
            if magnetic.dim != dim:
                raise ConfigError(f"magnetic blocks cover {magnetic.dim} axes, manifold has {dim}")
        else:
            raise ConfigError(f"unknown magnetic kind {kind!r}")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{cfg.source}: {exc}") from exc
    return TwistedPhaseSpace(base, metric, magnetic, cfg.name, {"source": cfg.source})


def grid_points(cfg: RunConfig, space: TwistedPhaseSpace):
    sec = cfg.section("grid")
    res = int(sec.get("resolution", 16))
    if res < 1:
        raise ConfigError("grid resolution must be positive")
    return space.base.grid(res, sec.get("axes"), sec.get("fixed"))
