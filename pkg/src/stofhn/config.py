"""Experiment configuration.

One JSON document describes everything needed to reproduce a run: grid, laws,
noise spectrum, time grid, seeds, problem kind and solver/optimizer knobs.
Parsing normalizes the document against the defaults below, so
parse(serialize(c)) == c, and the canonical serialization is hashed into every
output manifest.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .control import ControlProblem, OptimizerParams
from .errors import ConfigurationError
from .grid import ScalarField, SpatialGrid
from .noise import NoiseModel, WienerPath, sample_path, uniform_time_grid
from .nonlinearity import DIFFUSION_VARIANTS, DiffusionLaw, IonicCubic
from .solver import StateProblem, StepperParams, num_steps_for

KINDS = ("forward", "control", "verify")

_FIELD_KINDS = ("zero", "constant", "sine", "gaussian", "sum")

DEFAULTS: dict[str, Any] = {
    "kind": "forward",
    "grid": {"dimension": 1, "extent": [1.0], "interior": [99]},
    "diffusion": {"variant": "cubic_monotone", "c": 1.0, "b": 0.5},
    "ionic": {"a": 0.5, "scale": 1.0},
    "damping": {"kind": "constant", "value": 0.1},
    "forcing": None,
    "initial": {"kind": "sine", "k": 1, "amplitude": 0.5},
    "noise": {"modes": 8, "decay": 1.5, "amplitude": 1.0},
    "time": {"horizon": 1.0, "dt": 0.0025},
    "stepper": {
        "yosida_epsilon": 1e-6,
        "diffusion_regularization": 0.0,
        "newton_tol": 1e-10,
        "newton_max_iters": 50,
    },
    "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
    "control": {
        "alpha": 0.1,
        "bound": 1.0,
        "running_target": {"kind": "sine", "k": 1, "amplitude": 0.08},
        "terminal_target": {"kind": "sine", "k": 1, "amplitude": 0.08},
        "tol": 1e-4,
        "max_iters": 200,
        "frozen_seed": 5,
        "continuation_alphas": [0.1, 0.01, 0.001],
    },
    "verify": {
        "suites": None,
        "equivalence_paths": 200,
        "screen_seeds": 50,
        "residual_seeds": 16,
        "mollify_seeds": 10,
        "gradient_directions": 10,
    },
    "output": {"trajectory_stride": 50, "checkpoint_stride": 50, "histogram_bins": 10},
}


# Sections whose structure depends on their "kind"; they are replaced whole
# rather than key-merged, and validated by _validate_field_spec.
_OPAQUE_PATHS = {
    "initial",
    "damping",
    "forcing",
    "control.running_target",
    "control.terminal_target",
}


def _merge(path: str, default: Any, user: Any) -> Any:
    """Fill a user value against the default tree, rejecting unknown keys."""
    if user is None:
        # None is meaningful for optional sections (noise, forcing, ...).
        return None
    if path in _OPAQUE_PATHS:
        return copy.deepcopy(user)
    if isinstance(default, dict):
        if not isinstance(user, dict):
            raise ConfigurationError(f"{path or 'config'}: expected an object, got {type(user).__name__}")
        out = {}
        for key, dval in default.items():
            out[key] = _merge(f"{path}.{key}" if path else key, dval, user.get(key, copy.deepcopy(dval)))
        unknown = set(user) - set(default)
        if unknown:
            raise ConfigurationError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
        return out
    if isinstance(default, bool):
        if not isinstance(user, bool):
            raise ConfigurationError(f"{path}: expected a boolean")
        return user
    if isinstance(default, (int, float)) and isinstance(user, (int, float)) and not isinstance(user, bool):
        return user if isinstance(default, int) and isinstance(user, int) else float(user)
    if isinstance(default, str):
        if not isinstance(user, str):
            raise ConfigurationError(f"{path}: expected a string")
        return user
    if isinstance(default, list) or default is None:
        return copy.deepcopy(user)
    raise ConfigurationError(f"{path}: unsupported value {user!r}")


_REQUIRED_SECTIONS = ("kind", "grid", "diffusion", "time", "stepper", "seeds", "control", "verify", "output")


def _validate(data: dict) -> None:
    for key in _REQUIRED_SECTIONS:
        if data[key] is None:
            raise ConfigurationError(f"{key}: section cannot be null")
    if data["kind"] not in KINDS:
        raise ConfigurationError(f"kind: must be one of {KINDS}, got {data['kind']!r}")
    dim = data["grid"]["dimension"]
    if dim not in (1, 2):
        raise ConfigurationError(f"grid.dimension: must be 1 or 2, got {dim}")
    if len(data["grid"]["extent"]) != dim or len(data["grid"]["interior"]) != dim:
        raise ConfigurationError("grid: extent/interior length must match the dimension")
    if data["diffusion"]["variant"] not in DIFFUSION_VARIANTS:
        raise ConfigurationError(
            f"diffusion.variant: must be one of {DIFFUSION_VARIANTS}"
        )
    for name in ("damping", "forcing", "initial"):
        spec = data[name]
        if spec is not None:
            _validate_field_spec(name, spec)
    for name in ("running_target", "terminal_target"):
        _validate_field_spec(f"control.{name}", data["control"][name])
    if not isinstance(data["seeds"], list) or not all(isinstance(s, int) for s in data["seeds"]):
        raise ConfigurationError("seeds: must be a list of integers")
    suites = data["verify"]["suites"]
    if suites is not None and (
        not isinstance(suites, list) or not all(isinstance(s, str) for s in suites)
    ):
        raise ConfigurationError("verify.suites: must be null or a list of names")
    if data["time"]["horizon"] <= 0 or data["time"]["dt"] <= 0:
        raise ConfigurationError("time: horizon and dt must be positive")
    num_steps_for(float(data["time"]["horizon"]), float(data["time"]["dt"]))


def _validate_field_spec(path: str, spec: Any) -> None:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigurationError(f"{path}: field spec needs a 'kind'")
    kind = spec["kind"]
    if kind not in _FIELD_KINDS:
        raise ConfigurationError(f"{path}.kind: must be one of {_FIELD_KINDS}, got {kind!r}")
    allowed = {
        "zero": {"kind"},
        "constant": {"kind", "value"},
        "sine": {"kind", "k", "amplitude"},
        "gaussian": {"kind", "center", "width", "amplitude"},
        "sum": {"kind", "terms"},
    }[kind]
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigurationError(f"{path}: unknown keys {sorted(unknown)} for kind {kind!r}")
    if kind == "sum":
        terms = spec.get("terms")
        if not isinstance(terms, list) or not terms:
            raise ConfigurationError(f"{path}.terms: must be a nonempty list")
        for i, term in enumerate(terms):
            _validate_field_spec(f"{path}.terms[{i}]", term)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Normalized configuration document."""

    data: dict

    def __eq__(self, other) -> bool:
        return isinstance(other, ExperimentConfig) and self.data == other.data

    def serialize(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    def content_hash(self) -> str:
        canonical = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def replace(self, **sections) -> "ExperimentConfig":
        """New config with top-level sections shallowly overridden.

        Plain sections are updated key by key; kind-dependent field specs
        (initial, damping, forcing) are replaced wholesale.
        """
        data = copy.deepcopy(self.data)
        for key, value in sections.items():
            if key not in DEFAULTS:
                raise ConfigurationError(f"unknown config section {key!r}")
            if key not in _OPAQUE_PATHS and isinstance(data.get(key), dict) and isinstance(value, dict):
                data[key].update(value)
            else:
                data[key] = value
        return parse_config(data)


def parse_config(raw: dict) -> ExperimentConfig:
    data = _merge("", DEFAULTS, raw)
    _validate(data)
    return ExperimentConfig(data)


def parse_config_text(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigurationError(
            f"config is not valid JSON (line {err.lineno}, column {err.colno}): {err.msg}"
        ) from err
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    return parse_config(raw)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def default_config(kind: str = "forward") -> ExperimentConfig:
    cfg = parse_config({})
    return cfg.replace(kind=kind) if kind != cfg.data["kind"] else cfg


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_grid(cfg: ExperimentConfig) -> SpatialGrid:
    g = cfg.data["grid"]
    return SpatialGrid(
        dimension=g["dimension"],
        extent=tuple(float(e) for e in g["extent"]),
        interior=tuple(int(n) for n in g["interior"]),
    )


def build_field(grid: SpatialGrid, spec: Optional[dict]) -> Optional[ScalarField]:
    if spec is None:
        return None
    return grid.field(_eval_field_spec(grid, spec))


def _eval_field_spec(grid: SpatialGrid, spec: dict) -> np.ndarray:
    kind = spec["kind"]
    coords = grid.coordinates()
    if kind == "zero":
        return np.zeros(grid.shape)
    if kind == "constant":
        return np.full(grid.shape, float(spec.get("value", 0.0)))
    if kind == "sine":
        k = int(spec.get("k", 1))
        amp = float(spec.get("amplitude", 1.0))
        out = np.full(grid.shape, amp)
        for axis, x in enumerate(coords):
            out = out * np.sin(k * math.pi * x / grid.extent[axis])
        return out
    if kind == "gaussian":
        center = float(spec.get("center", 0.5))
        width = float(spec.get("width", 0.1))
        amp = float(spec.get("amplitude", 1.0))
        out = np.full(grid.shape, amp)
        for axis, x in enumerate(coords):
            out = out * np.exp(-((x - center * grid.extent[axis]) ** 2) / (2.0 * width**2))
        return out
    return sum(_eval_field_spec(grid, term) for term in spec["terms"])


def build_diffusion(cfg: ExperimentConfig) -> DiffusionLaw:
    d = cfg.data["diffusion"]
    return DiffusionLaw(variant=d["variant"], c=float(d["c"]), b=float(d["b"]))


def build_ionic(cfg: ExperimentConfig) -> Optional[IonicCubic]:
    spec = cfg.data["ionic"]
    if spec is None:
        return None
    return IonicCubic(a=float(spec["a"]), scale=float(spec["scale"]))


def build_noise(cfg: ExperimentConfig, grid: SpatialGrid) -> Optional[NoiseModel]:
    spec = cfg.data["noise"]
    if spec is None or int(spec["modes"]) == 0:
        return None
    return NoiseModel.default(
        grid,
        mode_count=int(spec["modes"]),
        decay=float(spec["decay"]),
        amplitude=float(spec["amplitude"]),
    )


def build_stepper(cfg: ExperimentConfig) -> StepperParams:
    s = cfg.data["stepper"]
    return StepperParams(
        dt=float(cfg.data["time"]["dt"]),
        yosida_epsilon=float(s["yosida_epsilon"]),
        diffusion_regularization=float(s["diffusion_regularization"]),
        newton_tol=float(s["newton_tol"]),
        newton_max_iters=int(s["newton_max_iters"]),
    )


def build_state_problem(cfg: ExperimentConfig) -> StateProblem:
    grid = build_grid(cfg)
    noise = build_noise(cfg, grid)
    initial = build_field(grid, cfg.data["initial"])
    if initial is None:
        initial = grid.zero_field()
    return StateProblem(
        grid=grid,
        diffusion=build_diffusion(cfg),
        ionic=build_ionic(cfg),
        initial=initial,
        horizon=float(cfg.data["time"]["horizon"]),
        damping=build_field(grid, cfg.data["damping"]),
        forcing=build_field(grid, cfg.data["forcing"]),
        noise=noise,
        noise_enabled=noise is not None,
    )


def frozen_path(cfg: ExperimentConfig) -> Optional[WienerPath]:
    state = build_state_problem(cfg)
    if not state.noise_active:
        return None
    n = num_steps_for(state.horizon, float(cfg.data["time"]["dt"]))
    times = uniform_time_grid(state.horizon, n)
    return sample_path(state.noise, times, int(cfg.data["control"]["frozen_seed"]))


def build_control_problem(cfg: ExperimentConfig, alpha: Optional[float] = None) -> ControlProblem:
    state = build_state_problem(cfg)
    grid = state.grid
    c = cfg.data["control"]
    return ControlProblem(
        state=state,
        running_target=build_field(grid, c["running_target"]),
        terminal_target=build_field(grid, c["terminal_target"]),
        alpha=float(c["alpha"]) if alpha is None else float(alpha),
        bound=float(c["bound"]),
        stepper=build_stepper(cfg),
        path=frozen_path(cfg),
    )


def build_optimizer_params(cfg: ExperimentConfig) -> OptimizerParams:
    c = cfg.data["control"]
    return OptimizerParams(tol=float(c["tol"]), max_iters=int(c["max_iters"]))
