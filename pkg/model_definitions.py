#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Defines the selectable models, probe states and phase generators.

This module provides:
- TypedDict definitions for ModelParameter and ModelDefinition.
- Concrete definitions for the three-site lattice, the pancake trap and the
  ring, linking each to its params dataclass and critical-point formula.
- A MODEL_REGISTRY dictionary used by the command line front end to
  generate its flags and validate configs.
- Registries of probe-state and generator selectors.
- Helper functions to retrieve definitions and resolve raw values (strings
  from the command line or JSON values from a config file) into params.
"""

import math
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple, TypedDict

from errors import ConfigError
from models import (
    PancakeParams, RingParams, ThreeSiteParams, critical_phase_three_site,
    critical_rotation_pancake, critical_rotation_ring, ring_window, tg_interaction,
)


# --- Model Name Constants ---
MODEL_THREE_SITE = "three-site"
MODEL_PANCAKE = "pancake"
MODEL_RING = "ring"

CRITICAL = "critical"


# --- Type Definitions ---

class ModelParameter(TypedDict):
    """Defines a single model parameter; `name` doubles as config key and CLI flag."""
    name: str
    type: Literal["integer", "number", "string"]
    description: str
    default: Any  # None: required, or derived from other parameters
    required: bool


class ModelDefinition(TypedDict):
    """Defines a model family selectable with --model."""
    name: str
    description: str
    control: str  # name of the rotation parameter swept by spectrum/anticrossing
    unit: str
    parameters: List[ModelParameter]
    build: Callable[[Dict[str, Any]], Any]  # resolved values -> params dataclass
    critical: Callable[[Any], float]


# --- Builders ---

def _build_three_site(values: Dict[str, Any]) -> ThreeSiteParams:
    params = ThreeSiteParams(num_particles=values["N"], J=values["J"], U=values["U"], phi=values["phi"])
    params.validate()
    return params


def _build_pancake(values: Dict[str, Any]) -> PancakeParams:
    params = PancakeParams(num_particles=values["N"], g=values["g"], A=values["A"], omega=values["omega"],
                           m_max=values.get("m_max"), L_max=values.get("L_max"))
    params.validate()
    return params


def _build_ring(values: Dict[str, Any]) -> RingParams:
    n = values["N"]
    g = values["g"]
    if isinstance(g, str):
        if g.lower() != "tg":
            raise ConfigError(f"ring: g must be a number or 'tg', got '{g}'")
        g = tg_interaction(n)
    k_min, k_max = values["k_min"], values["k_max"]
    if values.get("modes") is not None:
        k_min, k_max = ring_window(values["modes"])
    params = RingParams(num_particles=n, b=values["b"], g=float(g), omega=values["omega"],
                        k_min=k_min, k_max=k_max, calibration=values["calibration"])
    params.validate()
    return params


# --- Model Definitions ---

N_PARAM = ModelParameter(name="N", type="integer", description="Number of atoms.", default=None, required=True)

THREE_SITE_MODEL = ModelDefinition(
    name=MODEL_THREE_SITE,
    description="Three-site ring lattice with Peierls phase phi; energies in units of J.",
    control="phi",
    unit="J",
    parameters=[
        N_PARAM,
        ModelParameter(name="J", type="number", description="Tunnelling amplitude.", default=1.0, required=False),
        ModelParameter(name="U", type="number", description="On-site interaction.", default=1.0, required=False),
        ModelParameter(name="phi", type="string",
                       description="Peierls phase (a value, a start:stop:count grid, or 'critical').",
                       default=0.0, required=False),
        ModelParameter(name="basis", type="string", description="Fock basis: 'site' or 'flow'.",
                       default="site", required=False),
    ],
    build=_build_three_site,
    critical=lambda p: critical_phase_three_site(),
)

PANCAKE_MODEL = ModelDefinition(
    name=MODEL_PANCAKE,
    description="Lowest-Landau-level pancake trap with quadrupolar asymmetry A; energies in hbar*omega_xy.",
    control="omega",
    unit="hbar*omega_xy",
    parameters=[
        N_PARAM,
        ModelParameter(name="g", type="number", description="Dimensionless 2D interaction.", default=0.5, required=False),
        ModelParameter(name="A", type="number", description="Trap asymmetry.", default=0.0, required=False),
        ModelParameter(name="omega", type="string",
                       description="Rotation rate in omega_xy (a value, a grid, or 'critical').",
                       default=0.0, required=False),
        ModelParameter(name="m_max", type="integer", description="Largest LLL index (default N + 2).",
                       default=None, required=False),
        ModelParameter(name="L_max", type="integer", description="Total angular momentum cap (default N + 2).",
                       default=None, required=False),
    ],
    build=_build_pancake,
    critical=lambda p: critical_rotation_pancake(p.num_particles, p.g),
)

RING_MODEL = ModelDefinition(
    name=MODEL_RING,
    description="One-dimensional ring with a delta barrier; energies in E0.",
    control="omega",
    unit="E0",
    parameters=[
        N_PARAM,
        ModelParameter(name="b", type="number", description="Barrier strength b/L in E0.", default=0.0, required=False),
        ModelParameter(name="g", type="number", description="Interaction g/L in E0, or 'tg' for strong coupling.",
                       default=0.0, required=False),
        ModelParameter(name="omega", type="string",
                       description="Rotation phase (a value, a grid, or 'critical').",
                       default=math.pi, required=False),
        ModelParameter(name="k_min", type="integer", description="Lowest momentum mode.", default=-1, required=False),
        ModelParameter(name="k_max", type="integer", description="Highest momentum mode.", default=2, required=False),
        ModelParameter(name="modes", type="integer",
                       description="Window size centred on k=1/2; overrides k_min/k_max.",
                       default=None, required=False),
        ModelParameter(name="calibration", type="number", description="Interaction calibration factor.",
                       default=1.0, required=False),
    ],
    build=_build_ring,
    critical=lambda p: critical_rotation_ring(),
)


# --- Registries ---

MODEL_REGISTRY: Dict[str, ModelDefinition] = {
    model['name']: model for model in [
        THREE_SITE_MODEL,
        PANCAKE_MODEL,
        RING_MODEL,
    ]
}

STATE_REGISTRY: Dict[str, str] = {
    "noon": "(|N,0> + |0,N>)/sqrt(2)",
    "bat": "Dual Fock state |N/2,N/2> after a 50:50 beam splitter (even atom count)",
    "unentangled": "Every atom in (|a> + |b>)/sqrt(2)",
    "ground": "Ground state of the selected model at its control value",
}

GENERATOR_REGISTRY: Dict[str, str] = {
    "auto": "n_b for two-mode probes, the model's own generator for ground states",
    "n_b": "Number of atoms in the second mode",
    "L": "Total angular momentum, sum of k n_k",
    "quasi-momentum": "Three-site flow quasi-momentum (0, +1, -1)",
}


# --- Helper Functions ---

def get_model(name: str) -> Optional[ModelDefinition]:
    """Retrieves a model definition by name."""
    return MODEL_REGISTRY.get(name)


def get_all_models() -> List[ModelDefinition]:
    """Retrieves a list of all registered model definitions."""
    return list(MODEL_REGISTRY.values())


def all_parameter_names() -> List[str]:
    """Union of parameter names over every model, in registry order."""
    names: List[str] = []
    for model in get_all_models():
        for param in model['parameters']:
            if param['name'] not in names:
                names.append(param['name'])
    return names


def parameter_help(name: str) -> str:
    parts = []
    for model in get_all_models():
        for param in model['parameters']:
            if param['name'] == name:
                parts.append(f"[{model['name']}] {param['description']}")
    return " ".join(parts)


def _coerce(model: ModelDefinition, param: ModelParameter, raw: Any) -> Any:
    if raw is None:
        return None
    try:
        if param['type'] == "integer":
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError
            return int(raw)
        if param['type'] == "number":
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(
            f"{model['name']}: parameter '{param['name']}' expects {param['type']}, got '{raw}'",
            parameter=param['name'])
    return raw


def resolve_model_params(model_name: str, values: Dict[str, Any]) -> Tuple[Any, Dict[str, Any]]:
    """
    Builds the params dataclass for `model_name` from raw values.

    Missing values take registry defaults; values for parameters that only
    other models define are rejected. The control parameter is kept raw in
    the resolved dict (it may be a grid or 'critical'); the returned params
    carry its scalar value when it is one.
    Returns (params, resolved values).
    """
    model = get_model(model_name)
    if model is None:
        raise ConfigError(f"Unknown model '{model_name}'; expected one of {sorted(MODEL_REGISTRY)}")
    own = {param['name'] for param in model['parameters']}
    foreign = sorted(name for name in all_parameter_names() if name not in own and values.get(name) is not None)
    if foreign:
        raise ConfigError(f"Parameters {foreign} do not apply to model '{model_name}'", parameters=foreign)

    resolved: Dict[str, Any] = {}
    for param in model['parameters']:
        raw = values.get(param['name'], param['default'])
        if raw is None and param['required']:
            raise ConfigError(f"{model_name}: parameter '{param['name']}' is required", parameter=param['name'])
        if param['name'] == model['control']:
            resolved[param['name']] = raw
        elif model_name == MODEL_RING and param['name'] == "g" and str(raw).strip().lower() == "tg":
            resolved[param['name']] = "tg"
        else:
            resolved[param['name']] = _coerce(model, param, raw)

    build_values = dict(resolved)
    build_values[model['control']] = 0.0
    params = model['build'](build_values)
    control = control_scalar(model, params, resolved[model['control']])
    if control is not None:
        params = model['build']({**build_values, model['control']: control})
    return params, resolved


def control_scalar(model: ModelDefinition, params: Any, raw: Any) -> Optional[float]:
    """Scalar control value, 'critical' resolved per model; None for a grid spec."""
    if isinstance(raw, (int, float)):
        return float(raw)
    text = str(raw).strip()
    if text == CRITICAL:
        return float(model['critical'](params))
    try:
        return float(text)
    except ValueError:
        return None
