#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Probe states, particle loss and quantum Fisher information.

Key Responsibilities:
- Two-mode probe states: `noon_state`, `bat_state` (a dual Fock state after
  a 50:50 beam splitter, computed in log space) and the binomial
  `unentangled_state`.
- `PhaseGenerator`: a diagonal generator stored as per-mode weights, so the
  same object acts on every particle-number sector produced by loss.
- `pure_qfi` (variance and finite-difference forms), `sld` and `mixed_qfi`
  in the eigenbasis of the density matrix, evaluated sector by sector.
- `apply_loss`: the uniform beam-splitter loss channel, enumerated over
  per-mode loss patterns, producing a sector-block `DensityMatrix`.
- `qfi_vs_loss` curves with their Cramér-Rao bounds, `loss_crossover`, and
  the Sagnac precision helpers.
"""

import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy import constants as sc
from scipy.special import gammaln

from config import (
    AMPLITUDE_CUTOFF, DEFAULT_LOSS_GRID, FINITE_DIFFERENCE_STEP, HERMITIAN_RTOL,
    RB87_D2_ANGULAR_FREQUENCY, RB87_MASS, SLD_FLOOR_RTOL,
)
from errors import ConfigError
from fockspace import DensityMatrix, FockBasis, ManyBodyOperator, ModeSet, PureState, build_basis
from models import ParametrizedModel
from spectral import ground_state
from utils import logger, parallel_map

TWO_MODES = ModeSet((0, 1))
PROBE_STATES = ("noon", "bat", "unentangled")


# --- Probe states ---

def two_mode_basis(num_particles: int) -> FockBasis:
    """Index i holds (N - i, i)."""
    if num_particles < 0:
        raise ConfigError(f"Particle number must be non-negative, got {num_particles}")
    return build_basis(num_particles, TWO_MODES)


def noon_state(num_particles: int) -> PureState:
    if num_particles < 1:
        raise ConfigError(f"NOON state needs N >= 1, got {num_particles}")
    basis = two_mode_basis(num_particles)
    amplitudes = np.zeros(basis.dim, dtype=complex)
    amplitudes[0] = amplitudes[num_particles] = 1 / math.sqrt(2)
    return PureState(basis, amplitudes)


def bat_state(num_particles: int) -> PureState:
    """
    |N⟩|N⟩ after a 50:50 beam splitter: Σ_m C_m |2m, 2N-2m⟩ over 2N atoms with
    C_m = √((2m)!(2N-2m)!) / (2^N m! (N-m)!).
    """
    if num_particles < 1:
        raise ConfigError(f"Bat state needs N >= 1, got {num_particles}")
    n = num_particles
    basis = two_mode_basis(2 * n)
    m = np.arange(n + 1)
    log_c = (0.5 * (gammaln(2 * m + 1) + gammaln(2 * n - 2 * m + 1))
             - n * math.log(2) - gammaln(m + 1) - gammaln(n - m + 1))
    amplitudes = np.zeros(basis.dim, dtype=complex)
    # |2m, 2N-2m⟩ sits at index 2N - 2m
    amplitudes[2 * n - 2 * m] = np.exp(log_c)
    return PureState.normalized(basis, amplitudes)


def unentangled_state(num_particles: int) -> PureState:
    """Every atom in (|a⟩ + |b⟩)/√2: binomial amplitudes √C(N, i) / 2^(N/2)."""
    if num_particles < 1:
        raise ConfigError(f"Unentangled state needs N >= 1, got {num_particles}")
    n = num_particles
    basis = two_mode_basis(n)
    i = np.arange(n + 1)
    log_amp = 0.5 * (gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1)) - 0.5 * n * math.log(2)
    return PureState.normalized(basis, np.exp(log_amp).astype(complex))


def probe_state(kind: str, atoms: int) -> PureState:
    """Named two-mode probe with `atoms` particles in total."""
    if kind == "noon":
        return noon_state(atoms)
    if kind == "unentangled":
        return unentangled_state(atoms)
    if kind == "bat":
        if atoms % 2:
            raise ConfigError(f"Bat state needs an even atom count, got {atoms}", atoms=atoms)
        return bat_state(atoms // 2)
    raise ConfigError(f"Unknown probe state '{kind}'; expected one of {PROBE_STATES}")


# --- Generators ---

@dataclass(frozen=True)
class PhaseGenerator:
    """G = Σ_m w_m n̂_m, encoding the phase as e^{-iφG}."""
    weights: Tuple[Tuple[int, float], ...]
    description: str

    @classmethod
    def from_weights(cls, weights: Mapping[int, float], description: str) -> "PhaseGenerator":
        return cls(tuple(sorted((int(k), float(v)) for k, v in weights.items())), description)

    @classmethod
    def two_mode_nb(cls) -> "PhaseGenerator":
        return cls.from_weights({0: 0.0, 1: 1.0}, "n_b")

    @classmethod
    def angular_momentum(cls, modes: Union[ModeSet, Sequence[int]]) -> "PhaseGenerator":
        return cls.from_weights({label: label for label in modes}, "L")

    def diagonal(self, basis: FockBasis) -> np.ndarray:
        table = dict(self.weights)
        missing = [label for label in basis.modes.labels if label not in table]
        if missing:
            raise ConfigError(
                f"Generator '{self.description}' has no weight for modes {missing}", modes=missing)
        return basis.weights([table[label] for label in basis.modes.labels]).astype(float)

    def operator(self, basis: FockBasis) -> ManyBodyOperator:
        return ManyBodyOperator(basis, sp.diags(self.diagonal(basis).astype(complex), format="csr"))


def ground_state_probe(family: ParametrizedModel,
                       value: Optional[float] = None) -> Tuple[PureState, PhaseGenerator]:
    """Ground state of a model (at its critical point by default) and its generator."""
    x = family.critical_value if value is None else value
    state = ground_state(family(x))
    description = "L" if family.model in ("pancake", "ring") else "quasi-momentum"
    return state, PhaseGenerator.from_weights(family.generator_weights(), description)


# --- Fisher information ---

def pure_qfi(state: PureState, G: PhaseGenerator, method: str = "variance",
             step: float = FINITE_DIFFERENCE_STEP) -> float:
    """
    F_Q = 4(⟨G²⟩ - ⟨G⟩²). `method="derivative"` instead differentiates
    |ψ(φ)⟩ = e^{-iφG}|ψ⟩ by central differences and uses
    4(⟨ψ'|ψ'⟩ - |⟨ψ|ψ'⟩|²).
    """
    g = G.diagonal(state.basis)
    psi = np.asarray(state.amplitudes)
    if method == "variance":
        probs = np.abs(psi) ** 2
        mean = probs @ g
        return float(max(4 * (probs @ (g - mean) ** 2), 0.0))
    if method == "derivative":
        forward = np.exp(-1j * step * g) * psi
        backward = np.exp(1j * step * g) * psi
        dpsi = (forward - backward) / (2 * step)
        value = 4 * (np.vdot(dpsi, dpsi).real - abs(np.vdot(psi, dpsi)) ** 2)
        return float(max(value, 0.0))
    raise ConfigError(f"Unknown QFI method '{method}'; expected 'variance' or 'derivative'")


def phase_derivative(rho: DensityMatrix, G: PhaseGenerator) -> Dict[int, np.ndarray]:
    """∂ρ/∂φ = -i[G, ρ] per sector."""
    out = {}
    for n, (basis, m) in rho.sectors.items():
        g = G.diagonal(basis)
        out[n] = -1j * (g[:, None] * m - m * g[None, :])
    return out


def _sector_floor(rho: DensityMatrix, floor_rtol: float) -> float:
    return floor_rtol * rho.trace()


def sld(rho: DensityMatrix, drho: Union[np.ndarray, Mapping[int, np.ndarray]],
        floor_rtol: float = SLD_FLOOR_RTOL,
        hermitian_rtol: float = HERMITIAN_RTOL) -> Dict[int, ManyBodyOperator]:
    """
    Symmetric logarithmic derivative, returned as its particle-number blocks
    {n: A_n}. ρ and ∂ρ never mix sectors, so the full operator is the direct
    sum of the A_n and F_Q = Σ_n Tr(ρ_n A_n²).

    In the eigenbasis of ρ_n, A_ij = 2 ρ'_ij / (λ_i + λ_j), and 0 where
    λ_i + λ_j is below the floor. A single matrix is accepted for one-sector
    density matrices.
    """
    if not isinstance(drho, Mapping):
        if len(rho.sectors) != 1:
            raise ConfigError("Pass drho per sector for a density matrix with several sectors")
        drho = {next(iter(rho.sectors)): drho}
    floor = _sector_floor(rho, floor_rtol)
    out: Dict[int, ManyBodyOperator] = {}
    for n, (basis, m) in rho.sectors.items():
        d = np.asarray(drho.get(n, np.zeros_like(m)), dtype=complex)
        if d.shape != m.shape:
            raise ConfigError(f"drho sector {n} has shape {d.shape}, expected {m.shape}")
        scale = float(np.max(np.abs(d), initial=0.0))
        if np.max(np.abs(d - d.conj().T), initial=0.0) > hermitian_rtol * max(scale, 1.0):
            raise ConfigError(f"drho sector {n} is not Hermitian")
        lam, U = scipy.linalg.eigh(m)
        d_eig = U.conj().T @ d @ U
        denom = lam[:, None] + lam[None, :]
        a_eig = np.where(denom > floor, 2 * d_eig / np.where(denom > floor, denom, 1.0), 0.0)
        out[n] = ManyBodyOperator(basis, sp.csr_matrix(U @ a_eig @ U.conj().T))
    return out


def mixed_qfi(rho: DensityMatrix, G: PhaseGenerator, cutoff: float = AMPLITUDE_CUTOFF,
              floor_rtol: float = SLD_FLOOR_RTOL) -> float:
    """
    F_Q = Σ 2(λ_i - λ_j)² |G_ij|² / (λ_i + λ_j) over the eigenbasis of ρ.

    ρ and G are block-diagonal in particle number, so each sector is handled
    on its own after dropping basis states whose population is below `cutoff`.
    """
    floor = _sector_floor(rho, floor_rtol)
    total = 0.0
    for n, (basis, m) in rho.sectors.items():
        keep = np.nonzero(np.real(np.diag(m)) > cutoff)[0]
        if keep.size < 2:
            continue
        block = m[np.ix_(keep, keep)]
        g = G.diagonal(basis)[keep]
        lam, U = scipy.linalg.eigh(block)
        g_eig = U.conj().T @ (g[:, None] * U)
        denom = lam[:, None] + lam[None, :]
        mask = denom > floor
        contrib = 2 * (lam[:, None] - lam[None, :]) ** 2 * np.abs(g_eig) ** 2
        sector_value = float(np.sum(contrib[mask] / denom[mask]))
        logger.debug("mixed_qfi sector n=%d kept=%d F=%.6g", n, keep.size, sector_value)
        total += sector_value
    return max(total, 0.0)


# --- Loss ---

def _loss_patterns(modes: ModeSet, lost: int) -> np.ndarray:
    return build_basis(lost, modes).states


def apply_loss(state: PureState, eta: float) -> DensityMatrix:
    """
    Uniform beam-splitter loss with transmissivity η on every mode.

    For each pattern j of lost atoms the Kraus image has amplitudes
    √(Π_m C(s_m, j_m) (1-η)^{j_m} η^{s_m - j_m}) ψ_s on |s - j⟩; the surviving
    sector with n' atoms is Σ_j V_j V_j†.
    """
    if not 0 < eta <= 1:
        raise ConfigError(f"Transmissivity must lie in (0, 1], got {eta}", eta=eta)
    if eta == 1:
        return DensityMatrix.from_pure(state)
    basis = state.basis
    states = basis.states
    psi = np.asarray(state.amplitudes)
    log_keep, log_lose = math.log(eta), math.log1p(-eta)
    log_fact = gammaln(states + 1)

    sectors = {}
    for lost in range(basis.num_particles + 1):
        target = build_basis(basis.num_particles - lost, basis.modes, max_weight=basis.max_weight)
        columns = []
        for pattern in _loss_patterns(basis.modes, lost):
            src = np.nonzero(np.all(states >= pattern, axis=1))[0]
            if src.size == 0:
                continue
            s = states[src]
            remaining = s - pattern
            log_amp = 0.5 * np.sum(
                log_fact[src] - gammaln(pattern + 1)[None, :] - gammaln(remaining + 1)
                + pattern[None, :] * log_lose + remaining * log_keep,
                axis=1,
            )
            tgt = target.index_of(remaining)
            column = np.zeros(target.dim, dtype=complex)
            ok = tgt >= 0
            np.add.at(column, tgt[ok], np.exp(log_amp[ok]) * psi[src[ok]])
            if np.any(column):
                columns.append(column)
        if not columns:
            continue
        V = np.column_stack(columns)
        sectors[target.num_particles] = (target, V @ V.conj().T)
    logger.debug("apply_loss eta=%.6g sectors=%s", eta, sorted(sectors))
    return DensityMatrix(sectors)


# --- Loss curves ---

def cramer_rao_bound(F: float) -> float:
    """Δφ_min = 1/√F for a single shot; infinite when F = 0."""
    return math.inf if F <= 0 else 1 / math.sqrt(F)


def shot_noise_limit(num_particles: int) -> float:
    if num_particles < 1:
        raise ConfigError(f"Particle number must be >= 1, got {num_particles}")
    return 1 / math.sqrt(num_particles)


def heisenberg_limit(num_particles: int) -> float:
    if num_particles < 1:
        raise ConfigError(f"Particle number must be >= 1, got {num_particles}")
    return 1 / num_particles


@dataclass(frozen=True)
class QfiCurve:
    loss: np.ndarray
    qfi: np.ndarray
    state_tag: str
    generator_tag: str

    @property
    def deltaphi_min(self) -> np.ndarray:
        return np.array([cramer_rao_bound(F) for F in self.qfi])


def default_loss_grid() -> np.ndarray:
    start, stop, count = DEFAULT_LOSS_GRID
    return np.linspace(start, stop, count)


def qfi_vs_loss(state: PureState, G: PhaseGenerator, grid: Optional[Sequence[float]] = None,
                state_tag: str = "", workers: Optional[int] = None,
                show_progress: bool = False) -> QfiCurve:
    """mixed_qfi(apply_loss(state, 1 - l), G) for every loss fraction l."""
    grid = default_loss_grid() if grid is None else np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ConfigError("Loss grid is empty")
    if np.any(grid < 0) or np.any(grid >= 1):
        raise ConfigError("Loss fractions must lie in [0, 1)")

    def point(loss: float) -> float:
        if loss == 0:
            return pure_qfi(state, G)
        return mixed_qfi(apply_loss(state, 1 - loss), G)

    values = parallel_map(point, list(grid), workers=workers, desc=f"qfi {state_tag}",
                          show_progress=show_progress)
    return QfiCurve(grid, np.asarray(values, dtype=float), state_tag, G.description)


def loss_crossover(curve_a: QfiCurve, curve_b: QfiCurve) -> Optional[float]:
    """First loss fraction where curve_a falls below curve_b, linearly interpolated."""
    if curve_a.loss.shape != curve_b.loss.shape or not np.allclose(curve_a.loss, curve_b.loss):
        raise ConfigError("Curves must share the same loss grid")
    diff = curve_a.qfi - curve_b.qfi
    below = np.nonzero(diff < 0)[0]
    if below.size == 0:
        return None
    i = int(below[0])
    if i == 0:
        return float(curve_a.loss[0])
    l0, l1 = curve_a.loss[i - 1], curve_a.loss[i]
    d0, d1 = diff[i - 1], diff[i]
    return float(l0 + (l1 - l0) * d0 / (d0 - d1))


# --- Sagnac ---

@dataclass(frozen=True)
class SagnacQuery:
    """SI units throughout; the atom and photon default to Rb-87 on the D2 line."""
    wavelength: float
    speed: float
    rotation: float
    area: float
    mass: float = RB87_MASS
    photon_frequency: float = RB87_D2_ANGULAR_FREQUENCY

    def validate(self):
        for name in ("wavelength", "speed", "area", "mass", "photon_frequency"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"sagnac: {name} must be positive, got {getattr(self, name)}")
        if self.rotation < 0:
            raise ConfigError(f"sagnac: rotation must be non-negative, got {self.rotation}")


def sagnac_precision(q: SagnacQuery) -> float:
    """Δφ = 4πΩA / (λv)."""
    q.validate()
    return 4 * math.pi * q.rotation * q.area / (q.wavelength * q.speed)


def atom_photon_ratio(mass: float = RB87_MASS,
                      angular_frequency: float = RB87_D2_ANGULAR_FREQUENCY) -> float:
    """Mc² / ħω, the Sagnac sensitivity gain of atoms over photons at equal flux and area."""
    if mass <= 0 or angular_frequency <= 0:
        raise ConfigError("Mass and angular frequency must be positive")
    return mass * sc.c ** 2 / (sc.hbar * angular_frequency)
