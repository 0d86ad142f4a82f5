"""Run configuration: JSON files, presets and ``--set key=value`` overrides."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass

from .errors import AOSError, ConfigError
from .forest import Density, TreeParams
from .geometry import Rect
from .sampling import SensorConfig
from .sweep import SweepConfig

DEFAULTS = {
    "preset": "paper",
    "seed": 0,
    "out": "aos_out",
    "workers": 1,
    "forest": {
        "density": "sparse",
        "extent_m": 150.0,
        "min_spacing_m": 2.0,
        "params": TreeParams().to_dict(),
    },
    "scene": {"voxel_m": 0.5},
    "sensor": {"fov_deg": 50.0, "resolution_px": 512},
    "flight": {"altitude_m": 30.0, "sample_dist_m": 1.0, "mode": "grid"},
    "grid": {"cell_m": 0.25, "roi_m": 20.0},
    "render": {"x": None, "y": None},
    "ortho": {"resolution_px": 512},
    "sweep": {
        "fovs_deg": [20, 30, 40, 50, 60, 70, 80, 90],
        "altitudes_m": [30, 40, 50],
        "sample_dists_m": [0.5, 1.0, 1.5, 2.0],
        "densities": ["sparse", "medium", "dense"],
        "seeds": [0, 1, 2, 3, 4],
    },
}

PRESETS = {
    "paper": {},
    "desk": {
        "forest": {"extent_m": 100.0},
        "sensor": {"resolution_px": 128},
        "grid": {"roi_m": 10.0},
        "ortho": {"resolution_px": 256},
    },
}

# keys whose value may be null or a number
_NULLABLE = {"render.x", "render.y"}


def _merge(base, over, path=""):
    for k, v in over.items():
        key = f"{path}.{k}" if path else k
        if k not in base:
            raise ConfigError(key, "unknown key")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(key, "expected an object")
            _merge(base[k], v, key)
        else:
            base[k] = v
    return base


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(data: dict, assignment: str):
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like key.path=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    nested = _parse_value(raw)
    for p in reversed(parts):
        nested = {p: nested}
    _merge(data, nested)


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def load(cls, path=None, preset=None, overrides=()) -> "RunConfig":
        data = copy.deepcopy(DEFAULTS)
        file_data = {}
        if path:
            try:
                with open(path, encoding="utf-8") as f:
                    file_data = json.load(f)
            except OSError as e:
                raise ConfigError("config", f"cannot read {path}: {e}") from None
            except json.JSONDecodeError as e:
                raise ConfigError("config", f"{path} is not valid JSON: {e}") from None
        name = preset or file_data.get("preset") or data["preset"]
        if name not in PRESETS:
            raise ConfigError("preset", f"unknown preset {name!r} (choose from {sorted(PRESETS)})")
        _merge(data, copy.deepcopy(PRESETS[name]))
        _merge(data, file_data)
        data["preset"] = name
        for o in overrides:
            apply_override(data, o)
        cfg = cls(data)
        cfg.validate()
        return cfg

    def get(self, path):
        node = self.data
        for p in path.split("."):
            node = node[p]
        return node

    def validate(self):
        def number(path, lo=None, strict=True, integer=False):
            v = self.get(path)
            if v is None and path in _NULLABLE:
                return
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(path, f"expected a number, got {v!r}")
            if integer and int(v) != v:
                raise ConfigError(path, f"expected an integer, got {v!r}")
            if lo is not None and (v <= lo if strict else v < lo):
                raise ConfigError(path, f"must be {'>' if strict else '>='} {lo}, got {v!r}")

        number("seed", 0, strict=False, integer=True)
        number("workers", 1, strict=False, integer=True)
        number("forest.extent_m", 0)
        number("forest.min_spacing_m", 0, strict=False)
        number("scene.voxel_m", 0)
        number("sensor.resolution_px", 2, strict=False, integer=True)
        number("flight.altitude_m", 0)
        number("flight.sample_dist_m", 0)
        number("grid.cell_m", 0)
        number("grid.roi_m", 0)
        number("ortho.resolution_px", 2, strict=False, integer=True)
        number("render.x")
        number("render.y")
        try:
            SensorConfig(float(self.get("sensor.fov_deg")), int(self.get("sensor.resolution_px")))
        except (AOSError, TypeError, ValueError) as e:
            raise ConfigError("sensor.fov_deg", str(e)) from None
        if self.get("flight.mode") not in ("line", "grid"):
            raise ConfigError("flight.mode", "must be 'line' or 'grid'")
        for i, d in enumerate(self.densities()):
            try:
                Density.parse(d)
            except AOSError as e:
                raise ConfigError(f"forest.density[{i}]", str(e)) from None
        try:
            self.tree_params()
        except TypeError as e:
            raise ConfigError("forest.params", str(e)) from None
        except AOSError as e:
            raise ConfigError("forest.params", str(e)) from None
        for key in ("fovs_deg", "altitudes_m", "sample_dists_m", "densities", "seeds"):
            v = self.get(f"sweep.{key}")
            if not isinstance(v, list) or not v:
                raise ConfigError(f"sweep.{key}", "expected a non-empty list")
        try:
            self.sweep_config().validate()
        except (AOSError, ValueError) as e:
            raise ConfigError("sweep", str(e)) from None
        return self

    # -- builders ---------------------------------------------------------
    def densities(self):
        d = self.get("forest.density")
        return list(d) if isinstance(d, list) else [d]

    def tree_params(self) -> TreeParams:
        return TreeParams.from_dict(self.get("forest.params")).validate()

    def extent(self) -> Rect:
        return Rect.from_size(float(self.get("forest.extent_m")))

    def sensor(self) -> SensorConfig:
        return SensorConfig(float(self.get("sensor.fov_deg")), int(self.get("sensor.resolution_px")))

    def sweep_config(self) -> SweepConfig:
        s = self.data["sweep"]
        return SweepConfig(
            fovs_deg=tuple(float(v) for v in s["fovs_deg"]),
            altitudes_m=tuple(float(v) for v in s["altitudes_m"]),
            sample_dists_m=tuple(float(v) for v in s["sample_dists_m"]),
            densities=tuple(s["densities"]),
            seeds=tuple(int(v) for v in s["seeds"]),
            resolution_px=int(self.get("sensor.resolution_px")),
            extent_m=float(self.get("forest.extent_m")),
            mode=self.get("flight.mode"),
            cell_m=float(self.get("grid.cell_m")),
            roi_m=float(self.get("grid.roi_m")),
            voxel_m=float(self.get("scene.voxel_m")),
            min_spacing_m=float(self.get("forest.min_spacing_m")),
            params=self.tree_params(),
            workers=int(self.get("workers")),
        )

    def to_json(self):
        return json.dumps(self.data, sort_keys=True, indent=1)
