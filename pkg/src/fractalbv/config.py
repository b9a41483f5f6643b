"""Custom-system config files.

A custom nested fractal is described in TOML::

    L = 2.0
    M = 3
    d_w = 2.321928094887362
    diam = 1.0
    essential_vertices = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.8660254037844386]]
    maps = [
        {scale = 0.5, rotation_degrees = 0.0, translation = [0.0, 0.0]},
        {scale = 0.5, rotation_degrees = 0.0, translation = [0.5, 0.0]},
        {scale = 0.5, rotation_degrees = 0.0, translation = [0.25, 0.4330127018922193]},
    ]

Scale must equal 1/L for every map; d_w must be supplied because the
resistance scaling cannot be read off the geometry.  Schema violations
are rejected with the offending key (or TOML line) in the message.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import ConfigError
from .ifs import FractalSystem, Similitude

_REQUIRED = ("L", "M", "d_w", "diam", "essential_vertices", "maps")


def _rotation(degrees: float) -> np.ndarray:
    th = math.radians(degrees)
    return np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])


def _as_point(value, where: str) -> np.ndarray:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(x, (int, float)) for x in value)
    ):
        raise ConfigError(f"{where}: expected a 2-vector [x, y], got {value!r}")
    return np.array(value, dtype=float)


def parse_config(data: dict, source: str = "<config>") -> dict:
    """Validate raw TOML data; returns the cleaned field dict."""
    missing = [k for k in _REQUIRED if k not in data]
    if missing:
        raise ConfigError(f"{source}: missing required keys: {', '.join(missing)}")
    unknown = [k for k in data if k not in _REQUIRED and k != "name"]
    if unknown:
        raise ConfigError(f"{source}: unknown keys: {', '.join(unknown)}")

    L = data["L"]
    if not isinstance(L, (int, float)) or L <= 1:
        raise ConfigError(f"{source}: key 'L' must be a number > 1, got {L!r}")
    M = data["M"]
    if not isinstance(M, int) or M < 2:
        raise ConfigError(f"{source}: key 'M' must be an integer >= 2, got {M!r}")
    d_w = data["d_w"]
    if not isinstance(d_w, (int, float)) or d_w <= 0:
        raise ConfigError(f"{source}: key 'd_w' must be a positive number")
    diam = data["diam"]
    if not isinstance(diam, (int, float)) or diam <= 0:
        raise ConfigError(f"{source}: key 'diam' must be a positive number")

    raw_maps = data["maps"]
    if not isinstance(raw_maps, list) or not raw_maps:
        raise ConfigError(f"{source}: key 'maps' must be a non-empty array of tables")
    if len(raw_maps) != M:
        raise ConfigError(f"{source}: 'maps' lists {len(raw_maps)} entries but M={M}")
    maps = []
    for k, entry in enumerate(raw_maps):
        where = f"{source}: maps[{k}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected a table")
        for key in ("scale", "rotation_degrees", "translation"):
            if key not in entry:
                raise ConfigError(f"{where}: missing key '{key}'")
        extra = set(entry) - {"scale", "rotation_degrees", "translation"}
        if extra:
            raise ConfigError(f"{where}: unknown keys: {', '.join(sorted(extra))}")
        scale = entry["scale"]
        if not isinstance(scale, (int, float)) or not 0 < scale < 1:
            raise ConfigError(f"{where}: 'scale' must lie in (0, 1)")
        if abs(scale - 1.0 / L) > 1e-9:
            raise ConfigError(f"{where}: 'scale' must equal 1/L = {1.0 / L!r}")
        rot = entry["rotation_degrees"]
        if not isinstance(rot, (int, float)):
            raise ConfigError(f"{where}: 'rotation_degrees' must be a number")
        trans = _as_point(entry["translation"], f"{where}: translation")
        maps.append((float(scale), float(rot), trans))

    raw_verts = data["essential_vertices"]
    if not isinstance(raw_verts, list) or len(raw_verts) < 2:
        raise ConfigError(f"{source}: 'essential_vertices' must list at least 2 points")
    verts = np.array(
        [_as_point(v, f"{source}: essential_vertices[{k}]") for k, v in enumerate(raw_verts)]
    )

    return {
        "name": data.get("name", "custom"),
        "L": float(L),
        "M": int(M),
        "d_w": float(d_w),
        "diam": float(diam),
        "maps": maps,
        "essential_vertices": verts,
    }


def system_from_config(data: dict, window_level: int = 1, source: str = "<config>") -> FractalSystem:
    clean = parse_config(data, source=source)
    sims = [
        Similitude(scale, _rotation(rot), trans) for scale, rot, trans in clean["maps"]
    ]
    return FractalSystem(
        name=clean["name"],
        maps=sims,
        essential_vertices=clean["essential_vertices"],
        L=clean["L"],
        M=clean["M"],
        d_w=clean["d_w"],
        diam=clean["diam"],
        window_level=window_level,
    )


def load_config(path, window_level: int = 1) -> FractalSystem:
    """Load and validate a custom system from a TOML file."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{path}: no such preset or config file")
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        # tomllib messages carry "(at line X, column Y)"
        raise ConfigError(f"{path}: invalid TOML: {e}") from None
    return system_from_config(data, window_level=window_level, source=str(path))
