"""Run configuration: defaults, key=value config files, CLI overrides.

Config files are plain text, one `key=value` per line, `#` comments allowed.
Every key can be overridden by a CLI flag of the same name (underscores
become dashes); unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .geometry import CameraIntrinsics

EVALUATORS = ("projection", "oracle", "random")
MODES = ("hemisphere", "full_sphere")


@dataclass
class RunConfig:
    mesh: str = ""
    mode: str = "full_sphere"
    resolution: float = 0.03        # voxel edge (m)
    t_max: int = 10                 # BIC search upper bound per voxel class
    beta: int = 4                   # longitude partitions
    alpha: int = 8                  # sampling parallels
    candidates: int = 800           # total candidate views N
    d_c: float = 0.4                # camera working distance (m)
    gamma: float | None = None      # frontier sphere radius; default 2*resolution
    iterations: int = 10
    seed: int = 7
    evaluator: str = "projection"
    out: str = "nbv_out"

    # camera model
    width: int = 640
    height: int = 480
    fx: float = 580.0
    fy: float = 580.0
    max_range: float = 2.5
    noise_sigma: float = 0.0

    # workspace / metric / misc
    workspace_half: float = 0.4     # grid spans a cube of this half-size (m)
    stride: int = 4                 # oracle pixel stride
    coverage_threshold: float = 0.005
    coverage_samples: int = 10000
    initial_radius: float | None = None  # default d_c + 0.15
    initial_polar_deg: float = 60.0
    initial_azimuth_deg: float = 0.0
    mvee_tol: float = 1e-3

    def __post_init__(self):
        if self.evaluator not in EVALUATORS:
            raise ValueError(f"evaluator must be one of {EVALUATORS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        for name in (
            "resolution", "t_max", "beta", "alpha", "candidates", "d_c",
            "iterations", "width", "height", "fx", "fy", "max_range",
            "workspace_half", "stride", "coverage_threshold",
            "coverage_samples", "mvee_tol",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def gamma_value(self) -> float:
        return self.gamma if self.gamma is not None else 2.0 * self.resolution

    @property
    def initial_radius_value(self) -> float:
        return self.initial_radius if self.initial_radius is not None else self.d_c + 0.15

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=self.fx,
            fy=self.fy,
            cx=self.width / 2.0,
            cy=self.height / 2.0,
            width=self.width,
            height=self.height,
            working_distance=self.d_c,
            max_range=self.max_range,
        )


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    if ftype in ("int",):
        return int(raw)
    if ftype in ("float",):
        return float(raw)
    if ftype in ("float | None",):
        return None if raw.lower() in ("none", "") else float(raw)
    return raw


def load_config_file(path: str) -> dict:
    """Parse a key=value config file; unknown keys raise."""
    values = {}
    with open(path, "r") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{line_no}: unknown key {key!r}")
            values[key] = _parse_value(key, val)
    return values


def make_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then config file values, then CLI overrides."""
    merged = {}
    if file_values:
        merged.update(file_values)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(merged) - set(_FIELD_TYPES)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**merged)
