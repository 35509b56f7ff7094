#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Rotometry command line front end.

Usage examples:
  rotometry.py spectrum --model three-site --N 3 --phi 0:6.2832:201 --k 4
  rotometry.py groundstate --model pancake --N 6 --A 0.03 --omega critical
  rotometry.py qfi --state noon --state bat --state unentangled --atoms 10 --loss 0:0.5:50
  rotometry.py protocol --model ring --N 2 --b 0.005 --g 1 --delta 0.3 --hold 0:400:801
  rotometry.py anticrossing --model ring --N 1 --b 0.05
  rotometry.py states --atoms 10
  rotometry.py sagnac --rotation 7.29e-5 --area 1

Key Responsibilities:
- Generate subcommand flags from the model registry (model_definitions.py).
- Resolve the run configuration: registry and command defaults, then the
  JSON file given with --config, then the flags actually passed.
- Run the library operation and write CSV (with `#` metadata lines) or JSON
  to --output or stdout. Every output embeds the tool version, the resolved
  configuration, the energy unit and any warnings raised during the run.
- Map failures to exit codes (2 configuration, 3 numerical, 1 other) and
  write a one-line JSON error description to stderr.
"""

import argparse
import csv
import io
import math
import sys
import traceback
import warnings
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import constants as sc

from config import (
    ADIABATIC_FLOOR, AMPLITUDE_CUTOFF, DEFAULT_GAP_TOL, DEFAULT_LOSS_GRID, DEFAULT_QUENCH,
    DEFAULT_RAMP_DURATION, ERROR_PREFIX, MAX_PHASE_PER_STEP, RB87_D2_ANGULAR_FREQUENCY,
    RB87_D2_WAVELENGTH, RB87_MASS, TOOL_NAME, TOOL_VERSION,
)
from dynamics import ProtocolSettings, fringe_frequency, protocol_scan, RAMP_DOWN_MODES, RAMP_UP_MODES
from errors import ConfigError, error_payload, exit_code_for
from fockspace import expectation
from metrology import (
    PROBE_STATES, PhaseGenerator, SagnacQuery, atom_photon_ratio, ground_state_probe,
    loss_crossover, probe_state, qfi_vs_loss, sagnac_precision,
)
from model_definitions import (
    GENERATOR_REGISTRY, MODEL_REGISTRY, MODEL_THREE_SITE, STATE_REGISTRY, ModelDefinition,
    all_parameter_names, control_scalar, get_model, parameter_help, resolve_model_params,
)
from models import (
    QUASI_MOMENTA, ParametrizedModel, ThreeSiteFamily, family_for, flow_extreme_weights,
    flow_noon_state, momentum_distribution, mode_rotation, sector_weights,
)
from spectral import find_anticrossing, ground_state, natural_orbitals, sweep, two_orbital_distribution
from utils import (
    SweepCache, complex_pair, dumps_json, format_float, log_time, logger, parse_grid,
    read_json_file, set_verbosity,
)

# Keys that steer where and how results are written; they are not part of
# the recorded configuration.
NON_CONFIG_KEYS = ("output", "cache_dir", "verbose", "quiet", "config")
COMMON_KEYS = ("config", "output", "format", "verbose", "quiet")
MODEL_COMMANDS = ("spectrum", "groundstate", "qfi", "protocol", "anticrossing")

COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "spectrum": {"format": "csv", "k": 4, "cache_dir": None},
    "groundstate": {"format": "json"},
    "qfi": {
        "format": "csv",
        "state": ["noon"],
        "atoms": 10,
        "loss": "{}:{}:{}".format(*DEFAULT_LOSS_GRID),
        "generator": "auto",
    },
    "protocol": {
        "format": "csv",
        "delta": DEFAULT_QUENCH,
        "hold": "0:100:201",
        "ramp_up": "ideal",
        "ramp_down": "ideal",
        "ramp_duration": DEFAULT_RAMP_DURATION,
        "max_phase": MAX_PHASE_PER_STEP,
        "floor": ADIABATIC_FLOOR,
    },
    "anticrossing": {"format": "json", "bracket": None, "tol": DEFAULT_GAP_TOL},
    "states": {"format": "csv", "state": list(PROBE_STATES), "atoms": 10},
    "sagnac": {
        "format": "json",
        "wavelength": RB87_D2_WAVELENGTH,
        "speed": sc.c,
        "rotation": 7.2921159e-5,
        "area": 1.0,
        "mass": RB87_MASS,
        "photon_frequency": RB87_D2_ANGULAR_FREQUENCY,
    },
}


# --- Parser ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=TOOL_NAME,
        description="Exact diagonalization and quantum metrology for rotating condensates.",
    )
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {TOOL_VERSION}")

    # every option defaults to SUPPRESS so that only flags actually passed override the config file
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file with option values; flags override it.")
    common.add_argument("--output", help="Write results to this file instead of stdout.")
    common.add_argument("--format", choices=("csv", "json"), help="Output format.")
    common.add_argument("--verbose", action="store_true", help="Enable debug logging.")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors.")

    model_options = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    model_options.add_argument("--model", choices=sorted(MODEL_REGISTRY), help="Model family.")
    for name in all_parameter_names():
        model_options.add_argument(f"--{name}", dest=name, metavar="VALUE", help=parameter_help(name))

    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, with_model: bool) -> argparse.ArgumentParser:
        parents = [common, model_options] if with_model else [common]
        return sub.add_parser(name, parents=parents, help=help_text, argument_default=argparse.SUPPRESS)

    p = add("spectrum", "Lowest k levels over a grid of the rotation control.", True)
    p.add_argument("--k", type=int, help="Number of levels (default 4).")
    p.add_argument("--cache-dir", dest="cache_dir", help="Directory for the per-point result cache.")

    add("groundstate", "Ground-state amplitudes, sector weights and natural orbitals.", True)

    p = add("qfi", "Quantum Fisher information versus loss fraction.", True)
    p.add_argument("--state", action="append", choices=sorted(STATE_REGISTRY),
                   help="Probe state; repeat for several curves.")
    p.add_argument("--atoms", type=int, help="Atom count of the two-mode probes (default 10).")
    p.add_argument("--loss", help="Loss grid start:stop:count (default 0:0.5:50).")
    p.add_argument("--generator", choices=sorted(GENERATOR_REGISTRY), help="Phase generator.")

    p = add("protocol", "Gyroscope protocol outcome probabilities versus hold time.", True)
    p.add_argument("--delta", type=float, help="Sudden shift of the rotation control.")
    p.add_argument("--hold", help="Hold-time grid start:stop:count.")
    p.add_argument("--ramp-up", dest="ramp_up", choices=RAMP_UP_MODES)
    p.add_argument("--ramp-down", dest="ramp_down", choices=RAMP_DOWN_MODES)
    p.add_argument("--ramp-duration", dest="ramp_duration", type=float)
    p.add_argument("--max-phase", dest="max_phase", type=float)
    p.add_argument("--floor", type=float, help="Adiabaticity floor on the ground-state overlap.")

    p = add("anticrossing", "Locate the minimum of E1 - E0.", True)
    p.add_argument("--bracket", help="Search interval lo:hi (default per model).")
    p.add_argument("--tol", type=float, help="Golden-section tolerance.")

    p = add("states", "Coefficients of the two-mode probe states.", False)
    p.add_argument("--state", action="append", choices=sorted(PROBE_STATES))
    p.add_argument("--atoms", type=int)

    p = add("sagnac", "Sagnac phase and the atom/photon sensitivity ratio.", False)
    for name, help_text in (("wavelength", "Wavelength in m."), ("speed", "Speed in m/s."),
                            ("rotation", "Angular velocity in rad/s."), ("area", "Enclosed area in m^2."),
                            ("mass", "Atom mass in kg."),
                            ("photon-frequency", "Photon angular frequency in rad/s.")):
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), type=float, help=help_text)

    return parser


def allowed_keys(command: str) -> set:
    keys = set(COMMON_KEYS) | set(COMMAND_DEFAULTS[command])
    if command in MODEL_COMMANDS:
        keys |= {"model"} | set(all_parameter_names())
    return keys


def resolve_config(cli: Dict[str, Any]) -> Dict[str, Any]:
    """Command defaults < --config file < flags actually passed."""
    command = cli["command"]
    config = dict(COMMAND_DEFAULTS[command])
    if "config" in cli:
        file_values = read_json_file(cli["config"])
        unknown = sorted(set(file_values) - allowed_keys(command))
        if unknown:
            raise ConfigError(f"{command}: unknown config keys {unknown}", keys=unknown)
        config.update(file_values)
    config.update(cli)
    if config.get("format") not in ("csv", "json"):
        raise ConfigError(f"format must be 'csv' or 'json', got '{config.get('format')}'")
    if "state" in config and isinstance(config["state"], str):
        config["state"] = [config["state"]]
    return config


# --- Shared helpers ---

def _metadata(config: Dict[str, Any]) -> Dict[str, Any]:
    return {key: value for key, value in config.items() if key not in NON_CONFIG_KEYS}


def _warning_messages(caught) -> List[str]:
    messages: List[str] = []
    for record in caught:
        text = f"{record.category.__name__}: {record.message}"
        if text not in messages:
            messages.append(text)
            logger.warning(text)
    return messages


def _progress_enabled(config: Dict[str, Any]) -> bool:
    return not config.get("quiet") and sys.stderr.isatty()


def _number(config: Dict[str, Any], key: str) -> float:
    try:
        return float(config[key])
    except (TypeError, ValueError):
        raise ConfigError(f"'{key}' must be a number, got '{config[key]}'", key=key)


def _integer(config: Dict[str, Any], key: str) -> int:
    try:
        value = config[key]
        if isinstance(value, float) and not value.is_integer():
            raise ValueError
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"'{key}' must be an integer, got '{config[key]}'", key=key)


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def _table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> List[str]:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buffer.getvalue().splitlines()


def _csv(config: Dict[str, Any], unit: str, notes: List[str],
         sections: List[Tuple[List[Tuple[str, Any]], Sequence[str], Sequence[Sequence[Any]]]]) -> bytes:
    """Metadata comment lines, then one (comments, header, rows) block per section."""
    lines = [
        f"# tool: {TOOL_NAME} {TOOL_VERSION}",
        f"# config: {dumps_json(_metadata(config), indent=False).decode()}",
        f"# unit: {unit}",
    ]
    lines += [f"# warning: {note}" for note in notes]
    for comments, header, rows in sections:
        lines += [f"# {key}: {_cell(value)}" for key, value in comments]
        lines += _table(header, rows)
    return ("\n".join(lines) + "\n").encode("utf-8")


def _json(config: Dict[str, Any], unit: str, notes: List[str], body: Dict[str, Any]) -> bytes:
    payload = {
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "config": _metadata(config),
        "unit": unit,
        "warnings": notes,
    }
    payload.update(body)
    return dumps_json(payload) + b"\n"


def _finite(value: float) -> Optional[float]:
    return None if not math.isfinite(value) else float(value)


def _resolve_model(config: Dict[str, Any]) -> Tuple[ModelDefinition, Any]:
    name = config.get("model")
    if not name:
        raise ConfigError(f"{config['command']}: --model is required")
    values = {key: config[key] for key in all_parameter_names() if key in config}
    params, resolved = resolve_model_params(name, values)
    config.update(resolved)
    return get_model(name), params


def _family(definition: ModelDefinition, params: Any, config: Dict[str, Any],
            flow: bool = False) -> ParametrizedModel:
    if definition['name'] == MODEL_THREE_SITE:
        if flow:
            config["basis"] = "flow"
        return ThreeSiteFamily(params, config.get("basis") or "site")
    return family_for(params)


def _control_value(definition: ModelDefinition, params: Any, config: Dict[str, Any]) -> float:
    raw = config[definition['control']]
    value = control_scalar(definition, params, raw)
    if value is None:
        raise ConfigError(f"'{definition['control']}' must be a single value or 'critical', got '{raw}'")
    return value


def _control_grid(definition: ModelDefinition, params: Any, config: Dict[str, Any]) -> np.ndarray:
    raw = config[definition['control']]
    if isinstance(raw, (list, tuple)) or (isinstance(raw, str) and ":" in raw):
        return parse_grid(raw, definition['control'])
    return np.asarray([_control_value(definition, params, config)])


# --- Commands ---

def cmd_spectrum(config: Dict[str, Any], caught) -> bytes:
    definition, params = _resolve_model(config)
    family = _family(definition, params, config)
    grid = _control_grid(definition, params, config)
    k = _integer(config, "k")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")

    cache = SweepCache(config["cache_dir"]) if config.get("cache_dir") else None
    try:
        result = sweep(family, grid, k, cache=cache, show_progress=_progress_enabled(config))
    finally:
        if cache is not None:
            cache.close()
    log_time(f"Spectrum finished: {grid.size} points")

    notes = _warning_messages(caught)
    if config["format"] == "json":
        return _json(config, family.unit, notes, {
            "parameter": family.parameter,
            "grid": result.grid.tolist(),
            "levels": result.levels.tolist(),
        })
    header = ["param"] + [f"E{i}" for i in range(k)]
    rows = [[x] + list(levels) for x, levels in zip(result.grid, result.levels)]
    return _csv(config, family.unit, notes, [([("param", family.parameter)], header, rows)])


def cmd_groundstate(config: Dict[str, Any], caught) -> bytes:
    if config["format"] != "json":
        raise ConfigError("groundstate writes JSON only")
    definition, params = _resolve_model(config)
    family = _family(definition, params, config)
    x = _control_value(definition, params, config)
    H = family(x)
    state = ground_state(H)
    occupations, _ = natural_orbitals(state)

    amplitudes = [
        {"occupation": occupation.tolist(), "amplitude": complex_pair(c)}
        for occupation, c in zip(state.basis.states, state.amplitudes)
        if abs(c) > AMPLITUDE_CUTOFF
    ]
    body: Dict[str, Any] = {
        "parameter": family.parameter,
        "value": x,
        "energy": expectation(H, state),
        "modes": list(state.basis.modes.labels),
        "amplitudes": amplitudes,
        "natural_occupations": occupations.tolist(),
    }
    if definition['name'] == MODEL_THREE_SITE:
        flow_state = state if family.basis_kind == "flow" else mode_rotation(state)
        alpha, beta = flow_extreme_weights(flow_state)
        body["flow_extreme_weights"] = {"alpha": alpha, "beta": beta}
        body["noon_overlap"] = float(abs(np.vdot(flow_noon_state(params.num_particles).amplitudes,
                                                 flow_state.amplitudes)) ** 2)
        totals = np.mod(flow_state.basis.weights(QUASI_MOMENTA), 3)
        probs = flow_state.probabilities()
        body["quasi_momentum_weights"] = {str(q): float(probs[totals == q].sum()) for q in range(3)}
    else:
        body["sector_weights"] = {str(L): w for L, w in sector_weights(state).items()}
    if definition['name'] == "ring":
        body["momentum_distribution"] = {str(k): n for k, n in momentum_distribution(state).items()}
    if definition['name'] == "pancake":
        distribution, captured = two_orbital_distribution(state)
        body["two_orbital_distribution"] = {"probabilities": distribution.tolist(), "captured": captured}

    return _json(config, family.unit, _warning_messages(caught), body)


def _generator(name: str, state, default: PhaseGenerator) -> PhaseGenerator:
    if name == "auto":
        return default
    if name == "n_b":
        return PhaseGenerator.two_mode_nb()
    if name == "L":
        return PhaseGenerator.angular_momentum(state.basis.modes)
    return PhaseGenerator.from_weights(dict(zip((0, 1, 2), QUASI_MOMENTA)), "quasi-momentum")


def cmd_qfi(config: Dict[str, Any], caught) -> bytes:
    kinds = list(dict.fromkeys(config["state"]))
    loss = parse_grid(config["loss"], "loss")
    atoms = _integer(config, "atoms")
    unit = "dimensionless"

    curves = []
    for kind in kinds:
        if kind == "ground":
            definition, params = _resolve_model(config)
            family = _family(definition, params, config, flow=True)
            state, default = ground_state_probe(family, _control_value(definition, params, config))
            unit = family.unit
        elif kind in PROBE_STATES:
            state, default = probe_state(kind, atoms), PhaseGenerator.two_mode_nb()
        else:
            raise ConfigError(f"Unknown state '{kind}'; expected one of {sorted(STATE_REGISTRY)}")
        G = _generator(config["generator"], state, default)
        curve = qfi_vs_loss(state, G, loss, state_tag=kind, show_progress=_progress_enabled(config))
        curves.append((curve, state.basis.num_particles))
    log_time(f"QFI curves finished: {', '.join(kinds)}")

    by_tag = {curve.state_tag: curve for curve, _ in curves}
    crossovers = {}
    if "noon" in by_tag and "unentangled" in by_tag:
        crossovers["noon_below_unentangled"] = loss_crossover(by_tag["noon"], by_tag["unentangled"])

    notes = _warning_messages(caught)
    if config["format"] == "json":
        return _json(config, unit, notes, {
            "curves": [
                {
                    "state": curve.state_tag,
                    "generator": curve.generator_tag,
                    "atoms": n,
                    "loss": curve.loss.tolist(),
                    "qfi": curve.qfi.tolist(),
                    "deltaphi_min": [_finite(v) for v in curve.deltaphi_min],
                }
                for curve, n in curves
            ],
            "crossovers": crossovers,
        })
    sections = []
    for curve, n in curves:
        comments = [("state", curve.state_tag), ("generator", curve.generator_tag), ("atoms", n)]
        rows = [[l, F, d] for l, F, d in zip(curve.loss, curve.qfi, curve.deltaphi_min)]
        sections.append((comments, ["loss", "FQ", "deltaphi_min"], rows))
    if crossovers:
        value = crossovers["noon_below_unentangled"]
        sections[-1][0].append(("crossover_noon_unentangled", "none" if value is None else value))
    return _csv(config, unit, notes, sections)


def cmd_protocol(config: Dict[str, Any], caught) -> bytes:
    definition, params = _resolve_model(config)
    family = _family(definition, params, config, flow=True)
    settings = ProtocolSettings(
        delta=_number(config, "delta"),
        ramp_up=config["ramp_up"],
        ramp_down=config["ramp_down"],
        ramp_duration=_number(config, "ramp_duration"),
        max_phase=_number(config, "max_phase"),
        floor=_number(config, "floor"),
    )
    holds = parse_grid(config["hold"], "hold")
    results = protocol_scan(family, holds, settings, show_progress=_progress_enabled(config))
    log_time(f"Protocol finished: {len(results)} hold times")

    reports = [r.adiabaticity for r in results if r.adiabaticity is not None]
    adiabaticity = None
    if reports:
        adiabaticity = {
            "min_overlap": min(r.min_overlap for r in reports),
            "violated": any(r.violated for r in reports),
            "floor": settings.floor,
            "steps": max(r.steps for r in reports),
        }
    try:
        frequency = fringe_frequency(holds, [r.p_rotating for r in results])
    except ConfigError:
        frequency = None

    notes = _warning_messages(caught)
    if config["format"] == "json":
        return _json(config, family.unit, notes, {
            "critical_value": family.critical_value,
            "fringe_frequency": frequency,
            "adiabaticity": adiabaticity,
            "results": [
                {"hold_time": r.hold_time, "p_non_rotating": r.p_non_rotating,
                 "p_rotating": r.p_rotating, "p_other": r.p_other}
                for r in results
            ],
        })
    comments: List[Tuple[str, Any]] = [
        ("critical_value", family.critical_value),
        ("fringe_frequency", "none" if frequency is None else frequency),
    ]
    if adiabaticity is not None:
        comments.append(("adiabaticity", "min_overlap={} violated={} steps={}".format(
            format_float(adiabaticity["min_overlap"]), _cell(adiabaticity["violated"]),
            adiabaticity["steps"])))
    rows = [[r.hold_time, r.p_non_rotating, r.p_rotating, r.p_other] for r in results]
    return _csv(config, family.unit, notes,
                [(comments, ["hold_time", "p_non_rotating", "p_rotating", "p_other"], rows)])


def _bracket(raw: Any) -> Optional[Tuple[float, float]]:
    if raw is None:
        return None
    parts = raw if isinstance(raw, (list, tuple)) else str(raw).split(":")
    try:
        lo, hi = (float(v) for v in parts)
    except (TypeError, ValueError):
        raise ConfigError(f"bracket: expected lo:hi, got '{raw}'", value=str(raw))
    return lo, hi


def cmd_anticrossing(config: Dict[str, Any], caught) -> bytes:
    definition, params = _resolve_model(config)
    family = _family(definition, params, config)
    result = find_anticrossing(family, _bracket(config["bracket"]), tol=_number(config, "tol"))
    body = {
        "parameter": family.parameter,
        "location": result.location,
        "gap": result.gap,
        "bracket": list(result.bracket),
        "converged": result.converged,
        "degenerate": result.degenerate,
        "critical_reference": family.critical_value,
    }
    notes = _warning_messages(caught)
    if config["format"] == "json":
        return _json(config, family.unit, notes, body)
    header = ["location", "gap", "lo", "hi", "converged", "degenerate", "critical_reference"]
    row = [result.location, result.gap, result.bracket[0], result.bracket[1],
           result.converged, result.degenerate, family.critical_value]
    return _csv(config, family.unit, notes, [([("param", family.parameter)], header, [row])])


def cmd_states(config: Dict[str, Any], caught) -> bytes:
    atoms = _integer(config, "atoms")
    blocks = []
    for kind in dict.fromkeys(config["state"]):
        state = probe_state(kind, atoms)
        rows = [
            [i, int(occ[0]), int(occ[1]), float(c.real), float(abs(c) ** 2)]
            for i, (occ, c) in enumerate(zip(state.basis.states, state.amplitudes))
        ]
        blocks.append((kind, rows))

    notes = _warning_messages(caught)
    header = ["index", "n_a", "n_b", "amplitude", "probability"]
    if config["format"] == "json":
        return _json(config, "dimensionless", notes, {
            "states": {kind: [dict(zip(header, row)) for row in rows] for kind, rows in blocks},
        })
    return _csv(config, "dimensionless", notes, [([("state", kind)], header, rows) for kind, rows in blocks])


def cmd_sagnac(config: Dict[str, Any], caught) -> bytes:
    query = SagnacQuery(
        wavelength=_number(config, "wavelength"),
        speed=_number(config, "speed"),
        rotation=_number(config, "rotation"),
        area=_number(config, "area"),
        mass=_number(config, "mass"),
        photon_frequency=_number(config, "photon_frequency"),
    )
    deltaphi = sagnac_precision(query)
    ratio = atom_photon_ratio(query.mass, query.photon_frequency)
    notes = _warning_messages(caught)
    if config["format"] == "json":
        return _json(config, "rad", notes, {"deltaphi": deltaphi, "atom_photon_ratio": ratio})
    return _csv(config, "rad", notes,
                [([], ["quantity", "value"], [["deltaphi", deltaphi], ["atom_photon_ratio", ratio]])])


COMMANDS: Dict[str, Callable[[Dict[str, Any], Any], bytes]] = {
    "spectrum": cmd_spectrum,
    "groundstate": cmd_groundstate,
    "qfi": cmd_qfi,
    "protocol": cmd_protocol,
    "anticrossing": cmd_anticrossing,
    "states": cmd_states,
    "sagnac": cmd_sagnac,
}


# --- Entry point ---

def run_command(config: Dict[str, Any]) -> bytes:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        return COMMANDS[config["command"]](config, caught)


def write_output(config: Dict[str, Any], data: bytes):
    path = config.get("output")
    if path:
        try:
            with open(path, "wb") as f:
                f.write(data)
        except OSError as e:
            raise ConfigError(f"Cannot write output file {path}: {e}", path=path)
        logger.info(f"Results written to: {path}")
    else:
        sys.stdout.write(data.decode("utf-8"))
        sys.stdout.flush()


def _report_error(exc: BaseException) -> int:
    payload = error_payload(exc)
    logger.error(f"{ERROR_PREFIX}{payload['message']}")
    logger.debug(traceback.format_exc())
    try:
        line = dumps_json(payload, indent=False)
    except TypeError:
        line = dumps_json({key: payload[key] for key in ("error", "message", "exit_code")}, indent=False)
    sys.stderr.write(line.decode("utf-8") + "\n")
    sys.stderr.flush()
    return payload["exit_code"]


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on bad flags and 0 on --help / --version
        return e.code if isinstance(e.code, int) else 0
    cli = vars(args)
    set_verbosity(cli.get("verbose", False), cli.get("quiet", False))
    try:
        config = resolve_config(cli)
        write_output(config, run_command(config))
    except Exception as e:
        return _report_error(e)
    return 0


if __name__ == "__main__":
    sys.exit(main())
