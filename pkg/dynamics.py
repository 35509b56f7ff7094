#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Unitary dynamics and the rotation-sensing protocol.

Key Responsibilities:
- `Propagator` / `evolve`: e^{-iHt}|ψ⟩ (ħ = 1) for a frozen Hamiltonian,
  through a cached eigendecomposition up to the dense threshold and
  `expm_multiply` above it.
- `RampSchedule` / `ramp_evolve`: piecewise-linear ramps of the rotation
  control, sub-stepped so that no step advances the phase by more than
  `max_phase`, with the instantaneous ground-state overlap recorded in an
  `AdiabaticityReport`.
- `gyroscope_protocol` / `protocol_scan`: prepare the ground state at the
  critical point, quench the rotation by δ, hold, ramp down and read out the
  non-rotating / rotating populations.
- `fringe_frequency`: dominant angular frequency of a sampled signal.
"""

import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse.linalg as spla
from scipy.optimize import curve_fit

from config import (
    ADIABATIC_FLOOR, DEFAULT_QUENCH, DEFAULT_RAMP_DURATION, DENSE_THRESHOLD, FFT_PAD_FACTOR,
    MAX_PHASE_PER_STEP,
)
from errors import AdiabaticityWarning, ConfigError
from fockspace import ManyBodyOperator, PureState
from models import ParametrizedModel, family_for
from spectral import eigensolve, ground_state
from utils import logger, parallel_map


# --- Propagation ---

class Propagator:
    """Reusable e^{-iHt} for one frozen Hamiltonian."""

    def __init__(self, H: ManyBodyOperator, dense_threshold: int = DENSE_THRESHOLD):
        self.H = H
        self.dense = H.dim <= dense_threshold
        if self.dense:
            self.values, self.vectors = scipy.linalg.eigh(H.toarray())
            self.method = "dense"
        else:
            self.values, self.vectors = None, None
            self.method = "krylov"
            self._csc = H.matrix.tocsc()

    def evolve(self, state: PureState, t: float) -> PureState:
        if state.basis != self.H.basis:
            raise ConfigError(f"State basis {state.basis!r} does not match {self.H.basis!r}")
        if t == 0:
            return state
        psi = np.asarray(state.amplitudes)
        if self.dense:
            coefficients = self.vectors.conj().T @ psi
            amplitudes = self.vectors @ (np.exp(-1j * self.values * t) * coefficients)
        else:
            amplitudes = spla.expm_multiply(-1j * t * self._csc, psi)
        return PureState(state.basis, amplitudes)

    def spread(self) -> float:
        """Width of the spectrum; 2‖H‖₁ bounds it when no eigendecomposition is kept."""
        if self.dense:
            return float(self.values[-1] - self.values[0])
        return 2 * float(spla.norm(self.H.matrix, 1))

    def ground_vector(self) -> np.ndarray:
        if self.dense:
            return self.vectors[:, 0]
        return np.asarray(eigensolve(self.H, 1).states[0].amplitudes)


def evolve(H: ManyBodyOperator, state: PureState, t: float) -> PureState:
    return Propagator(H).evolve(state, t)


# --- Ramps ---

@dataclass(frozen=True)
class RampSchedule:
    """Linear ramps from `start` through each (value, duration) segment in turn."""
    start: float
    segments: Tuple[Tuple[float, float], ...]
    max_phase: float = MAX_PHASE_PER_STEP

    @classmethod
    def linear(cls, start: float, stop: float, duration: float,
               max_phase: float = MAX_PHASE_PER_STEP) -> "RampSchedule":
        return cls(float(start), ((float(stop), float(duration)),), max_phase)

    def validate(self):
        if not self.segments:
            raise ConfigError("A ramp schedule needs at least one segment")
        for value, duration in self.segments:
            if duration < 0:
                raise ConfigError(f"Ramp segment to {value} has negative duration {duration}")
        if self.max_phase <= 0:
            raise ConfigError(f"max_phase must be positive, got {self.max_phase}")


@dataclass(frozen=True)
class AdiabaticityReport:
    min_overlap: float
    overlaps: Tuple[float, ...]
    floor: float
    violated: bool
    steps: int

    @classmethod
    def build(cls, overlaps: Sequence[float], floor: float, steps: int) -> "AdiabaticityReport":
        overlaps = tuple(float(o) for o in overlaps)
        lowest = min(overlaps) if overlaps else 1.0
        return cls(lowest, overlaps, floor, lowest < floor, steps)

    def merged(self, other: "AdiabaticityReport") -> "AdiabaticityReport":
        overlaps = self.overlaps + other.overlaps
        return AdiabaticityReport(min(overlaps), overlaps, self.floor,
                                  self.violated or other.violated, self.steps + other.steps)


def _ground_overlap(propagator: Propagator, state: PureState) -> float:
    return float(abs(np.vdot(propagator.ground_vector(), state.amplitudes)) ** 2)


def ramp_evolve(builder: ParametrizedModel, schedule: RampSchedule, state: PureState,
                floor: float = ADIABATIC_FLOOR) -> Tuple[PureState, AdiabaticityReport]:
    """
    Evolves `state` along the schedule with midpoint Hamiltonians.

    Each segment of duration d is cut into ceil(spread·d / max_phase) steps.
    After every step the overlap with the ground state of the step's
    Hamiltonian is recorded; falling below `floor` raises an
    AdiabaticityWarning but never stops the evolution.
    """
    schedule.validate()
    x = schedule.start
    overlaps = [_ground_overlap(Propagator(builder(x)), state)]
    steps = 0
    for target, duration in schedule.segments:
        if duration == 0:
            x = target
            overlaps.append(_ground_overlap(Propagator(builder(x)), state))
            continue
        spread = max(Propagator(builder(x)).spread(), Propagator(builder(target)).spread())
        n_steps = max(1, math.ceil(spread * duration / schedule.max_phase))
        dt = duration / n_steps
        logger.debug("ramp %.6g -> %.6g over %.6g in %d steps", x, target, duration, n_steps)
        for i in range(n_steps):
            propagator = Propagator(builder(x + (target - x) * (i + 0.5) / n_steps))
            state = propagator.evolve(state, dt)
            overlaps.append(_ground_overlap(propagator, state))
        steps += n_steps
        x = target

    report = AdiabaticityReport.build(overlaps, floor, steps)
    if report.violated:
        warnings.warn(
            f"Ramp left the instantaneous ground state: minimum overlap {report.min_overlap:.6f} "
            f"below the floor {floor}", AdiabaticityWarning)
    return state, report


# --- Gyroscope protocol ---

RAMP_UP_MODES = ("ideal", "simulated")
RAMP_DOWN_MODES = ("sudden", "simulated", "ideal")


@dataclass(frozen=True)
class ProtocolSettings:
    delta: float = DEFAULT_QUENCH
    ramp_up: str = "ideal"
    ramp_down: str = "ideal"
    ramp_duration: float = DEFAULT_RAMP_DURATION
    max_phase: float = MAX_PHASE_PER_STEP
    floor: float = ADIABATIC_FLOOR

    def validate(self):
        if self.ramp_up not in RAMP_UP_MODES:
            raise ConfigError(f"ramp_up must be one of {RAMP_UP_MODES}, got '{self.ramp_up}'")
        if self.ramp_down not in RAMP_DOWN_MODES:
            raise ConfigError(f"ramp_down must be one of {RAMP_DOWN_MODES}, got '{self.ramp_down}'")
        if self.ramp_duration < 0:
            raise ConfigError(f"ramp_duration must be non-negative, got {self.ramp_duration}")
        if not 0 < self.floor <= 1:
            raise ConfigError(f"Adiabaticity floor must lie in (0, 1], got {self.floor}")


@dataclass(frozen=True)
class ProtocolResult:
    p_non_rotating: float
    p_rotating: float
    p_other: float
    adiabaticity: Optional[AdiabaticityReport]
    hold_time: float
    delta: float


@dataclass
class _PreparedProtocol:
    family: ParametrizedModel
    settings: ProtocolSettings
    initial: PureState
    hold: Propagator
    critical_states: Tuple[PureState, PureState]
    readout: Tuple[np.ndarray, np.ndarray]
    report: Optional[AdiabaticityReport] = None


def _as_family(model) -> ParametrizedModel:
    if isinstance(model, ParametrizedModel):
        return model
    return family_for(model, basis_kind="flow")


def _prepare(model, settings: ProtocolSettings) -> _PreparedProtocol:
    settings.validate()
    family = _as_family(model)
    critical = family.critical_value
    if settings.ramp_up == "ideal":
        initial, report = ground_state(family(critical)), None
    else:
        start_state = ground_state(family(family.start_value))
        schedule = RampSchedule.linear(family.start_value, critical, settings.ramp_duration,
                                       settings.max_phase)
        initial, report = ramp_evolve(family, schedule, start_state, settings.floor)

    critical_states: Tuple[PureState, PureState] = (initial, initial)
    if settings.ramp_down == "ideal":
        lowest = eigensolve(family(critical), 2).states
        critical_states = (lowest[0], lowest[1])
    return _PreparedProtocol(
        family=family,
        settings=settings,
        initial=initial,
        hold=Propagator(family(critical + settings.delta)),
        critical_states=critical_states,
        report=report,
        readout=family.readout_indices(),
    )


def _run(prepared: _PreparedProtocol, hold_time: float) -> ProtocolResult:
    settings = prepared.settings
    family = prepared.family
    state = prepared.hold.evolve(prepared.initial, hold_time)
    report = prepared.report

    if settings.ramp_down == "ideal":
        e0, e1 = prepared.critical_states
        p_non = abs(np.vdot(e0.amplitudes, state.amplitudes)) ** 2
        p_rot = abs(np.vdot(e1.amplitudes, state.amplitudes)) ** 2
    else:
        if settings.ramp_down == "simulated":
            schedule = RampSchedule.linear(family.critical_value + settings.delta, family.start_value,
                                           settings.ramp_duration, settings.max_phase)
            # no floor on the way down: the rotating branch is an excited state there
            state, down = ramp_evolve(family, schedule, state, floor=0.0)
            report = down if report is None else report.merged(down)
        probs = state.probabilities()
        non_idx, rot_idx = prepared.readout
        p_non, p_rot = probs[non_idx].sum(), probs[rot_idx].sum()

    p_non, p_rot = float(p_non), float(p_rot)
    return ProtocolResult(
        p_non_rotating=p_non,
        p_rotating=p_rot,
        p_other=max(0.0, 1.0 - p_non - p_rot),
        adiabaticity=report,
        hold_time=float(hold_time),
        delta=float(settings.delta),
    )


def gyroscope_protocol(model, hold_time: float,
                       settings: Optional[ProtocolSettings] = None) -> ProtocolResult:
    """
    One run: ground state at the critical rotation, sudden shift by δ, hold
    for `hold_time`, ramp down and read out. `model` is a params object or a
    parametrized family (three-site params are evaluated in the flow basis).
    """
    return protocol_scan(model, [hold_time], settings)[0]


def protocol_scan(model, hold_times: Sequence[float], settings: Optional[ProtocolSettings] = None,
                  workers: Optional[int] = None, show_progress: bool = False) -> List[ProtocolResult]:
    """ProtocolResult per hold time, sharing the prepared state and hold propagator."""
    settings = settings or ProtocolSettings()
    hold_times = [float(t) for t in hold_times]
    if not hold_times:
        raise ConfigError("Hold-time grid is empty")
    if any(t < 0 for t in hold_times):
        raise ConfigError("Hold times must be non-negative")
    prepared = _prepare(model, settings)
    return parallel_map(lambda t: _run(prepared, t), hold_times, workers=workers,
                        desc="protocol", show_progress=show_progress)


# --- Fringe analysis ---

def _sinusoid(t, amplitude, frequency, phase, offset):
    return amplitude * np.cos(2 * math.pi * frequency * t + phase) + offset


def fringe_frequency(times: Sequence[float], signal: Sequence[float],
                     pad_factor: int = FFT_PAD_FACTOR) -> float:
    """
    Dominant angular frequency of a uniformly sampled signal.

    The zero-padded FFT peak seeds a least-squares sinusoid fit; the fit is
    kept only when it stays within one FFT bin of the peak.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(signal, dtype=float)
    if t.shape != y.shape or t.size < 4:
        raise ConfigError("fringe_frequency needs matching time and signal arrays of length >= 4")
    dt = np.diff(t)
    if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ConfigError("fringe_frequency needs a uniform, increasing time grid")
    step = float(dt[0])
    if np.ptp(y) < 1e-12:
        return 0.0

    centred = y - y.mean()
    n_fft = pad_factor * t.size
    spectrum = scipy.fft.rfft(centred, n_fft)
    freqs = scipy.fft.rfftfreq(n_fft, step)
    peak = int(np.argmax(np.abs(spectrum[1:]))) + 1
    f0 = float(freqs[peak])

    # phase of the bin is referenced to t[0]
    p0 = [2 * np.abs(spectrum[peak]) / t.size, f0,
          float(np.angle(spectrum[peak])) - 2 * math.pi * f0 * t[0], float(y.mean())]
    try:
        params, _ = curve_fit(_sinusoid, t, y, p0=p0, maxfev=10000)
        fitted = abs(float(params[1]))
        if abs(fitted - f0) <= 1 / (step * n_fft):
            f0 = fitted
    except (RuntimeError, ValueError) as e:
        logger.debug("Sinusoid refinement failed, keeping the FFT peak: %s", e)
    return 2 * math.pi * f0
