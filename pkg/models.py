#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Rotating-condensate Hamiltonians in three trap geometries.

This module turns physical parameters into `ManyBodyOperator`s over the
appropriate Fock bases.

Key Responsibilities:
- Three-site ring lattice with a Peierls phase, in the site basis
  (`three_site_site_basis`) and in the quasi-momentum ("flow") basis
  (`three_site_flow_basis`), plus `mode_rotation` to carry states between
  the two.
- Lowest-Landau-level pancake trap with a quadrupolar asymmetry
  (`pancake_hamiltonian`) and its critical rotation rate.
- One-dimensional ring with a delta barrier in the angular-momentum basis
  (`ring_hamiltonian`), with a truncated momentum window.
- Parametrized families (`ThreeSiteFamily`, `PancakeFamily`, `RingFamily`)
  that freeze every parameter except the rotation and evaluate H(x) as a
  linear combination of fixed sparse components. They are the builders
  passed to sweeps, anti-crossing searches and ramps.
- State diagnostics: angular-momentum sector weights, flow-basis extreme
  weights and momentum distributions.

Units: three-site energies in J, pancake energies in ħω_xy with Ω in units of
ω_xy, ring energies in E₀ with Ω a phase whose degeneracy point is π.
"""

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from config import (
    PANCAKE_EXTRA_MODES, TG_INTERACTION_N5, TG_REFERENCE_ATOMS, UNITARY_TOL, UNIT_TAGS,
)
from errors import ConfigError, CutoffWarning
from fockspace import (
    FockBasis, LadderMonomial, ManyBodyOperator, ModeSet, PureState, assemble,
    build_basis, build_hermitian, embed,
)
from utils import logger

# Flow modes α, β, γ carry quasi-momenta 0, +1, -1 (in units of 2π/3)
QUASI_MOMENTA = (0, 1, -1)
SITE_MODES = ModeSet((0, 1, 2))
FLOW_MODES = ModeSet((0, 1, 2))


# --- Parameters ---

@dataclass(frozen=True)
class ThreeSiteParams:
    num_particles: int
    J: float = 1.0
    U: float = 1.0
    phi: float = 0.0

    def validate(self):
        if self.num_particles < 1:
            raise ConfigError(f"three-site: N must be >= 1, got {self.num_particles}")
        if self.J < 0:
            raise ConfigError(f"three-site: J must be >= 0, got {self.J}")


@dataclass(frozen=True)
class PancakeParams:
    """m_max and L_max default to N + 2; pass a large L_max to lift the cap."""
    num_particles: int
    g: float = 0.5
    A: float = 0.0
    omega: float = 0.0
    m_max: Optional[int] = None
    L_max: Optional[int] = None

    @property
    def mode_cutoff(self) -> int:
        return self.num_particles + PANCAKE_EXTRA_MODES if self.m_max is None else self.m_max

    @property
    def momentum_cap(self) -> int:
        return self.num_particles + PANCAKE_EXTRA_MODES if self.L_max is None else self.L_max

    def validate(self):
        if self.num_particles < 1:
            raise ConfigError(f"pancake: N must be >= 1, got {self.num_particles}")
        if self.A < 0:
            raise ConfigError(f"pancake: A must be >= 0, got {self.A}")
        if self.mode_cutoff < 0:
            raise ConfigError(f"pancake: m_max must be >= 0, got {self.mode_cutoff}")
        if self.momentum_cap < 0:
            raise ConfigError(f"pancake: L_max must be >= 0, got {self.momentum_cap}")
        if self.mode_cutoff < self.num_particles:
            warnings.warn(
                f"pancake: m_max={self.mode_cutoff} is below N={self.num_particles}; "
                "the vortex branch is truncated", CutoffWarning)


@dataclass(frozen=True)
class RingParams:
    """b and g are b/L and g/L in units of E₀."""
    num_particles: int
    b: float = 0.0
    g: float = 0.0
    omega: float = math.pi
    k_min: int = -1
    k_max: int = 2
    calibration: float = 1.0

    def validate(self):
        if self.num_particles < 1:
            raise ConfigError(f"ring: N must be >= 1, got {self.num_particles}")
        if not (self.k_min <= 0 < 1 <= self.k_max):
            raise ConfigError(
                f"ring: momentum window {self.k_min}..{self.k_max} must contain k=0 and k=1")


# --- Three-site lattice ---

def flow_mode_energies(J: float, phi: float) -> np.ndarray:
    """Single-particle energies of the α, β, γ flow modes."""
    return np.array([-2 * J * math.cos(phi / 3 - 2 * math.pi * p / 3) for p in QUASI_MOMENTA])


def _site_hopping(J: float, phi: float) -> List[LadderMonomial]:
    # a†b + b†c + c†a; the conjugate half comes from Hermitization
    peierls = -J * complex(math.cos(phi / 3), math.sin(phi / 3))
    return [LadderMonomial.hop(peierls, j, (j + 1) % 3) for j in range(3)]


def _site_interaction(U: float) -> List[LadderMonomial]:
    return [LadderMonomial(U, (j, j), (j, j)) for j in range(3)]


def _flow_interaction(U: float) -> Tuple[List[LadderMonomial], List[LadderMonomial]]:
    """Returns (diagonal terms, pair-scattering terms in raise-only form)."""
    diagonal = [LadderMonomial(U / 3, (s, s), (s, s)) for s in range(3)]
    for s in range(3):
        for t in range(s + 1, 3):
            diagonal.append(LadderMonomial(4 * U / 3, (s, t), (s, t)))
    scattering = []
    for s in range(3):
        t, u = [m for m in range(3) if m != s]
        scattering.append(LadderMonomial(2 * U / 3, (t, u), (s, s)))
    return diagonal, scattering


def three_site_site_basis(p: ThreeSiteParams) -> ManyBodyOperator:
    """H = -J[e^{iφ/3}(a†b + b†c + c†a) + h.c.] + U Σ a†²a² over the site modes."""
    p.validate()
    basis = build_basis(p.num_particles, SITE_MODES)
    return build_hermitian(basis, terms=_site_interaction(p.U), raise_terms=_site_hopping(p.J, p.phi))


def three_site_flow_basis(p: ThreeSiteParams) -> ManyBodyOperator:
    """The same Hamiltonian written over the quasi-momentum modes α, β, γ."""
    p.validate()
    basis = build_basis(p.num_particles, FLOW_MODES)
    energies = flow_mode_energies(p.J, p.phi)
    diagonal, scattering = _flow_interaction(p.U)
    kinetic = [LadderMonomial.number(energies[s], s) for s in range(3)]
    return build_hermitian(basis, terms=kinetic + diagonal, raise_terms=scattering)


def flow_noon_state(num_particles: int) -> PureState:
    """(|N,0,0⟩ + |0,N,0⟩)/√2 over the flow modes."""
    basis = build_basis(num_particles, FLOW_MODES)
    amplitudes = np.zeros(basis.dim, dtype=complex)
    amplitudes[basis.index((num_particles, 0, 0))] += 1 / math.sqrt(2)
    amplitudes[basis.index((0, num_particles, 0))] += 1 / math.sqrt(2)
    return PureState(basis, amplitudes)


def flow_extreme_weights(state: PureState) -> Tuple[float, float]:
    """Probability of α-majority and β-majority configurations."""
    n_alpha = state.basis.states[:, 0]
    n_beta = state.basis.states[:, 1]
    probs = state.probabilities()
    return float(probs[n_alpha > n_beta].sum()), float(probs[n_beta > n_alpha].sum())


def critical_phase_three_site() -> float:
    return math.pi


# --- Mode rotations ---

def dft_unitary(num_modes: int) -> np.ndarray:
    """u_{js} = exp(2πi j p_s / M)/√M with p_s the signed quasi-momentum of mode s."""
    momenta = [s if s <= num_modes // 2 else s - num_modes for s in range(num_modes)]
    j = np.arange(num_modes)[:, None]
    p = np.asarray(momenta)[None, :]
    return np.exp(2j * math.pi * j * p / num_modes) / math.sqrt(num_modes)


def _unitary_generator(v: np.ndarray) -> np.ndarray:
    """Anti-Hermitian K with expm(K) = v, via the complex Schur form."""
    t, z = scipy.linalg.schur(v, output="complex")
    return z @ np.diag(1j * np.angle(np.diag(t))) @ z.conj().T


def mode_rotation(state: PureState, u: Optional[np.ndarray] = None,
                  tol: float = UNITARY_TOL) -> PureState:
    """
    Re-expresses a state in rotated modes, a†_i → Σ_j u_ji b†_j.

    For one particle the amplitudes transform as u c. The many-body map is
    exp(Σ K_ij a†_i a_j) with expm(K) = u, applied with expm_multiply.
    Capped bases must be embedded into the full basis first.
    """
    basis = state.basis
    n_modes = basis.num_modes
    u = dft_unitary(n_modes) if u is None else np.asarray(u, dtype=complex)
    if u.shape != (n_modes, n_modes):
        raise ConfigError(f"Rotation matrix shape {u.shape} does not match {n_modes} modes")
    defect = float(np.max(np.abs(u @ u.conj().T - np.eye(n_modes))))
    if defect > tol:
        raise ConfigError(f"Rotation matrix is not unitary (defect {defect:.3e})", defect=defect)
    if not basis.is_full:
        raise ConfigError("mode_rotation needs an uncapped basis; embed the state first")
    if np.allclose(u, np.eye(n_modes), rtol=0, atol=tol):
        return state
    generator = _unitary_generator(u)
    labels = basis.modes.labels
    terms = [
        LadderMonomial.hop(generator[i, j], labels[i], labels[j])
        for i in range(n_modes) for j in range(n_modes) if generator[i, j] != 0
    ]
    matrix = assemble(basis, terms)
    amplitudes = expm_multiply(matrix.tocsc(), np.asarray(state.amplitudes))
    return PureState.normalized(basis, amplitudes)


# --- Pancake (lowest Landau level) ---

def critical_rotation_pancake(num_particles: int, g: float) -> float:
    return 1 - g * num_particles / (8 * math.pi)


def _pancake_interaction(g: float, m_max: int) -> List[LadderMonomial]:
    terms = []
    prefactor = g / (4 * math.pi)
    for m1 in range(m_max + 1):
        for m2 in range(m_max + 1):
            total = m1 + m2
            for n1 in range(max(0, total - m_max), min(m_max, total) + 1):
                n2 = total - n1
                # (m1+m2)! / (2^(m1+m2) √(m1! m2! n1! n2!)) in log space
                log_c = (math.lgamma(total + 1) - total * math.log(2)
                         - 0.5 * (math.lgamma(m1 + 1) + math.lgamma(m2 + 1)
                                  + math.lgamma(n1 + 1) + math.lgamma(n2 + 1)))
                terms.append(LadderMonomial(prefactor * math.exp(log_c), (m1, m2), (n1, n2)))
    return terms


def _pancake_asymmetry(A: float, m_max: int) -> List[LadderMonomial]:
    # raise-only half; the conjugate supplies √(m(m-1)) a†_{m-2} a_m
    return [LadderMonomial.hop(A / 2 * math.sqrt((m + 1) * (m + 2)), m + 2, m)
            for m in range(m_max - 1)]


def _pancake_basis(p: PancakeParams) -> FockBasis:
    return build_basis(p.num_particles, ModeSet.span(0, p.mode_cutoff), max_weight=p.momentum_cap)


def pancake_hamiltonian(p: PancakeParams) -> ManyBodyOperator:
    """H = N̂ + (1-Ω)L̂ + asymmetry + contact interaction, in units of ħω_xy."""
    p.validate()
    basis = _pancake_basis(p)
    m_max = p.mode_cutoff
    kinetic = [LadderMonomial.number(1 + (1 - p.omega) * m, m) for m in range(m_max + 1)]
    return build_hermitian(
        basis,
        terms=kinetic + _pancake_interaction(p.g, m_max),
        raise_terms=_pancake_asymmetry(p.A, m_max),
    )


# --- Ring with barrier ---

def tg_interaction(num_particles: int) -> float:
    """Strong-coupling g/L in E₀, scaled linearly in N from the five-atom value."""
    return TG_INTERACTION_N5 * num_particles / TG_REFERENCE_ATOMS


def ring_window(num_modes: int) -> Tuple[int, int]:
    """Momentum window of `num_modes` modes symmetric about k = 1/2."""
    if num_modes < 2:
        raise ConfigError(f"ring: need at least 2 momentum modes, got {num_modes}")
    return 1 - math.ceil(num_modes / 2), num_modes // 2


def critical_rotation_ring() -> float:
    return math.pi


def _ring_barrier(b: float, ks: Sequence[int]) -> List[LadderMonomial]:
    return [LadderMonomial.hop(b, k1, k2) for k1 in ks for k2 in ks]


def _ring_interaction(g: float, k_min: int, k_max: int) -> List[LadderMonomial]:
    terms = []
    coefficient = g / 2
    ks = range(k_min, k_max + 1)
    for k1 in ks:
        for k2 in ks:
            # a_{k1-q} and a_{k2+q} must stay inside the window
            q_lo = max(k1 - k_max, k_min - k2)
            q_hi = min(k1 - k_min, k_max - k2)
            for q in range(q_lo, q_hi + 1):
                terms.append(LadderMonomial(coefficient, (k1, k2), (k1 - q, k2 + q)))
    return terms


def _ring_static_terms(p: RingParams) -> List[LadderMonomial]:
    ks = list(range(p.k_min, p.k_max + 1))
    terms = []
    if p.b != 0:
        terms += _ring_barrier(p.b, ks)
    if p.g != 0:
        terms += _ring_interaction(p.g * p.calibration, p.k_min, p.k_max)
    return terms


def ring_hamiltonian(p: RingParams) -> ManyBodyOperator:
    """H = Σ (k - Ω/2π)² n_k + (b/L) Σ a†a + (g/2L) Σ a†a†aa, in units of E₀."""
    p.validate()
    basis = build_basis(p.num_particles, ModeSet.span(p.k_min, p.k_max))
    shift = p.omega / (2 * math.pi)
    kinetic = [LadderMonomial.number((k - shift) ** 2, k) for k in range(p.k_min, p.k_max + 1)]
    return build_hermitian(basis, terms=kinetic + _ring_static_terms(p))


# --- Diagnostics ---

def sector_weights(state: PureState, mode_weights: Optional[Sequence[float]] = None) -> Dict[int, float]:
    """Probability per total Σ w_m n_m (total angular momentum by default)."""
    totals = np.rint(state.basis.weights(mode_weights)).astype(np.int64)
    probs = state.probabilities()
    sectors: Dict[int, float] = {}
    for total in np.unique(totals):
        sectors[int(total)] = float(probs[totals == total].sum())
    return sectors


def momentum_distribution(state: PureState) -> Dict[int, float]:
    """⟨n_k⟩ per mode label."""
    occupations = state.probabilities() @ state.basis.states
    return {label: float(n) for label, n in zip(state.basis.modes.labels, occupations)}


# --- Parametrized families ---

Component = Tuple[Callable[[float], complex], sp.csr_matrix]


class ParametrizedModel:
    """
    H(x) = Σ_c f_c(x) · M_c for fixed sparse components M_c.

    Built once per static parameter set and evaluated for many values of the
    rotation control x. Every evaluation is checked for Hermiticity.
    Subclasses set `model`, `parameter`, `start_value` and `critical_value`.
    """
    model = ""
    parameter = ""

    def __init__(self, basis: FockBasis, components: List[Component], signature: tuple):
        self.basis = basis
        self._components = components
        self.signature = signature

    def __call__(self, x: float) -> ManyBodyOperator:
        matrix = sp.csr_matrix((self.basis.dim, self.basis.dim), dtype=complex)
        for coefficient, component in self._components:
            matrix = matrix + coefficient(x) * component
        return ManyBodyOperator.hermitian(self.basis, matrix)

    @property
    def unit(self) -> str:
        return UNIT_TAGS[self.model]

    @property
    def start_value(self) -> float:
        return 0.0

    @property
    def critical_value(self) -> float:
        raise NotImplementedError

    def default_bracket(self) -> Tuple[float, float]:
        raise NotImplementedError

    def readout_indices(self) -> Tuple[np.ndarray, np.ndarray]:
        """Basis indices of the 'all non-rotating' and 'all rotating' outcomes."""
        totals = np.rint(self.basis.weights()).astype(np.int64)
        n = self.basis.num_particles
        return np.nonzero(totals == 0)[0], np.nonzero(totals == n)[0]

    def generator_weights(self) -> Dict[int, float]:
        """Mode weights of the phase generator conjugate to the rotation."""
        return {label: float(label) for label in self.basis.modes.labels}

    def cache_key(self, x: float, k: int) -> tuple:
        return (self.model, self.signature, float(x).hex(), int(k))


class ThreeSiteFamily(ParametrizedModel):
    model = "three-site"
    parameter = "phi"

    def __init__(self, p: ThreeSiteParams, basis_kind: str = "site"):
        p.validate()
        if basis_kind not in ("site", "flow"):
            raise ConfigError(f"three-site: basis must be 'site' or 'flow', got '{basis_kind}'")
        self.params = p
        self.basis_kind = basis_kind
        J, U = p.J, p.U
        if basis_kind == "site":
            basis = build_basis(p.num_particles, SITE_MODES)
            hop = assemble(basis, [LadderMonomial.hop(1, j, (j + 1) % 3) for j in range(3)])
            components: List[Component] = [
                (lambda x: -J * complex(math.cos(x / 3), math.sin(x / 3)), hop),
                (lambda x: -J * complex(math.cos(x / 3), -math.sin(x / 3)), sp.csr_matrix(hop.conj().T)),
                (lambda x: 1.0, assemble(basis, _site_interaction(U))),
            ]
        else:
            basis = build_basis(p.num_particles, FLOW_MODES)
            diagonal, scattering = _flow_interaction(U)
            components = [
                (lambda x, s=s: flow_mode_energies(J, x)[s], assemble(basis, [LadderMonomial.number(1, s)]))
                for s in range(3)
            ]
            components.append((lambda x: 1.0, build_hermitian(basis, diagonal, scattering).matrix))
        super().__init__(basis, components, (p.num_particles, J, U, basis_kind))

    @property
    def critical_value(self) -> float:
        return critical_phase_three_site()

    def default_bracket(self) -> Tuple[float, float]:
        return 2.8, 3.5

    def readout_indices(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.basis_kind != "flow":
            raise ConfigError("three-site readout is defined in the flow basis")
        n = self.basis.num_particles
        return (np.array([self.basis.index((n, 0, 0))]), np.array([self.basis.index((0, n, 0))]))

    def generator_weights(self) -> Dict[int, float]:
        if self.basis_kind == "flow":
            return {s: float(p) for s, p in zip(FLOW_MODES.labels, QUASI_MOMENTA)}
        raise ConfigError("three-site generator is defined in the flow basis")


class PancakeFamily(ParametrizedModel):
    model = "pancake"
    parameter = "omega"

    def __init__(self, p: PancakeParams):
        p.validate()
        self.params = p
        basis = _pancake_basis(p)
        m_max = p.mode_cutoff
        static = build_hermitian(
            basis,
            terms=_pancake_interaction(p.g, m_max),
            raise_terms=_pancake_asymmetry(p.A, m_max),
        ).matrix
        components: List[Component] = [
            (lambda x: 1.0, assemble(basis, [LadderMonomial.number(1, m) for m in range(m_max + 1)])),
            (lambda x: 1.0 - x, assemble(basis, [LadderMonomial.number(m, m) for m in range(m_max + 1)])),
            (lambda x: 1.0, static),
        ]
        super().__init__(basis, components, (p.num_particles, p.g, p.A, m_max, p.momentum_cap))

    @property
    def critical_value(self) -> float:
        return critical_rotation_pancake(self.params.num_particles, self.params.g)

    def default_bracket(self) -> Tuple[float, float]:
        centre = self.critical_value
        # past Ω = 1 the yrast line keeps climbing in L and opposite-parity levels cross exactly
        half = 0.05 if centre >= 1 else min(0.05, (1 - centre) / 2)
        return centre - half, centre + half


class RingFamily(ParametrizedModel):
    model = "ring"
    parameter = "omega"

    def __init__(self, p: RingParams):
        p.validate()
        self.params = p
        ks = list(range(p.k_min, p.k_max + 1))
        basis = build_basis(p.num_particles, ModeSet.span(p.k_min, p.k_max))
        components: List[Component] = [
            (lambda x: 1.0, assemble(basis, [LadderMonomial.number(k * k, k) for k in ks])),
            (lambda x: -x / math.pi, assemble(basis, [LadderMonomial.number(k, k) for k in ks])),
            (lambda x: x * x / (4 * math.pi ** 2), assemble(basis, [LadderMonomial.number(1, k) for k in ks])),
        ]
        static_terms = _ring_static_terms(p)
        if static_terms:
            components.append((lambda x: 1.0, build_hermitian(basis, static_terms).matrix))
        super().__init__(basis, components,
                         (p.num_particles, p.b, p.g, p.k_min, p.k_max, p.calibration))

    @property
    def critical_value(self) -> float:
        return critical_rotation_ring()

    def default_bracket(self) -> Tuple[float, float]:
        return math.pi - 0.5, math.pi + 0.5


def family_for(params, basis_kind: str = "site") -> ParametrizedModel:
    if isinstance(params, ThreeSiteParams):
        return ThreeSiteFamily(params, basis_kind)
    if isinstance(params, PancakeParams):
        return PancakeFamily(params)
    if isinstance(params, RingParams):
        return RingFamily(params)
    raise ConfigError(f"No model family for {type(params).__name__}")


def with_control(params, value: float):
    """Returns a copy of the params with the rotation control set to `value`."""
    if isinstance(params, ThreeSiteParams):
        return replace(params, phi=value)
    return replace(params, omega=value)


def embed_full(state: PureState) -> PureState:
    """Embeds a capped-basis state into the uncapped basis over the same modes."""
    if state.basis.is_full:
        return state
    full = build_basis(state.basis.num_particles, state.basis.modes)
    logger.debug("Embedding %r into %r", state.basis, full)
    return embed(state, full)
