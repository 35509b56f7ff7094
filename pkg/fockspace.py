#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Number-conserving bosonic Fock spaces and second-quantized operators.

This module is the foundation every model in Rotometry is built on. It
enumerates occupation-number bases for N bosons in a labeled set of modes and
assembles sparse many-body matrices from normal-ordered ladder monomials.

Key Responsibilities:
- `ModeSet` / `FockBasis`: canonical, immutable, lexicographically descending
  enumeration of occupation vectors with a hash-map rank, a vectorized
  `index_of` for bulk lookups, and stars-and-bars ranking/unranking for
  verification. An optional cap on Σ label·n restricts the basis (used for
  angular-momentum truncation).
- `LadderMonomial` / `apply_monomial`: normal-ordered products of creation and
  annihilation operators and their action on a single occupation vector.
- `assemble` / `build_hermitian`: coordinate-format assembly of monomial sums,
  conversion to CSR and a Hermiticity check that names the offending entry.
- `PureState` / `DensityMatrix`: normalized amplitude vectors and
  particle-number-sector block-diagonal density matrices.
- `one_body_density_matrix`, `expectation`, `overlap`, `embed` and the diagonal
  operator helpers.

All objects are immutable after construction and may be shared freely
between worker threads.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from config import DIMENSION_CAP, HERMITIAN_RTOL, NORM_TOL, PSD_TOL
from errors import AssemblyError, ConfigError, DimensionCapError
from utils import complex_pair, logger

Occupation = Tuple[int, ...]


# --- Modes and Bases ---

@dataclass(frozen=True)
class ModeSet:
    """Ordered, distinct integer mode labels (sites, LLL indices or momenta)."""
    labels: Tuple[int, ...]
    _position: Dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(int(label) for label in self.labels)
        if not labels:
            raise ConfigError("A mode set needs at least one mode")
        if len(set(labels)) != len(labels):
            raise ConfigError(f"Mode labels must be distinct: {labels}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_position", {label: i for i, label in enumerate(labels)})

    @classmethod
    def span(cls, first: int, last: int) -> "ModeSet":
        """Consecutive labels first..last inclusive."""
        return cls(tuple(range(first, last + 1)))

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label):
        return label in self._position

    def position(self, label: int) -> int:
        try:
            return self._position[label]
        except KeyError:
            raise ConfigError(f"Unknown mode label {label}; known labels {self.labels}", label=label)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)


def _count_states(num_particles: int, num_modes: int) -> int:
    """Number of ways to place N bosons in M modes."""
    if num_modes == 0:
        return 1 if num_particles == 0 else 0
    return math.comb(num_particles + num_modes - 1, num_modes - 1)


class FockBasis:
    """
    Occupation vectors of `num_particles` bosons over `modes`.

    States are stored in lexicographically descending order, so for two modes
    index i corresponds to (N - i, i). `rank` maps an occupation tuple to its
    index. When `max_weight` is given only states with Σ label·n ≤ max_weight
    are kept.
    """

    def __init__(self, modes: ModeSet, num_particles: int, max_weight: Optional[int] = None,
                 dimension_cap: int = DIMENSION_CAP):
        if num_particles < 0:
            raise ConfigError(f"Particle number must be non-negative, got {num_particles}")
        self.modes = modes
        self.num_particles = int(num_particles)
        self.max_weight = None if max_weight is None else int(max_weight)

        full = _count_states(self.num_particles, len(modes))
        if self.max_weight is None and full > dimension_cap:
            raise DimensionCapError(
                f"Basis dimension C({num_particles}+{len(modes)}-1, {len(modes)}-1) = {full} "
                f"exceeds the cap {dimension_cap}",
                dimension=full, cap=dimension_cap,
            )

        states = self._enumerate(dimension_cap)
        self.states = np.asarray(states, dtype=np.int64).reshape(len(states), len(modes))
        self.states.setflags(write=False)
        self.rank: Dict[Occupation, int] = {state: i for i, state in enumerate(states)}

        # mixed-radix keys give O(log D) vectorized lookups when they fit in int64
        base = self.num_particles + 1
        if len(modes) * math.log2(base) < 62:
            self._radix = base ** np.arange(len(modes) - 1, -1, -1, dtype=np.int64)
            self._sorted_keys = (self.states @ self._radix)[::-1].copy()
        else:
            self._radix = None
            self._sorted_keys = None
        logger.debug("Built Fock basis N=%d M=%d dim=%d", self.num_particles, len(modes), len(states))

    def _enumerate(self, dimension_cap: int) -> List[Occupation]:
        labels = self.modes.labels
        n_modes = len(labels)
        cap = self.max_weight
        prune = cap is not None and all(label >= 0 for label in labels)
        out: List[Occupation] = []
        current = [0] * n_modes

        def descend(pos: int, remaining: int, weight: int):
            if pos == n_modes - 1:
                current[pos] = remaining
                if cap is None or weight + remaining * labels[pos] <= cap:
                    out.append(tuple(current))
                    if len(out) > dimension_cap:
                        raise DimensionCapError(
                            f"Basis dimension exceeds the cap {dimension_cap}", cap=dimension_cap)
                return
            for value in range(remaining, -1, -1):
                w = weight + value * labels[pos]
                if prune and w > cap:
                    continue
                current[pos] = value
                descend(pos + 1, remaining - value, w)

        descend(0, self.num_particles, 0)
        return out

    # --- Identity ---

    def __len__(self):
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @property
    def num_modes(self) -> int:
        return len(self.modes)

    @property
    def is_full(self) -> bool:
        return self.dim == _count_states(self.num_particles, self.num_modes)

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, FockBasis):
            return NotImplemented
        return (self.modes == other.modes and self.num_particles == other.num_particles
                and self.max_weight == other.max_weight)

    def __hash__(self):
        return hash((self.modes.labels, self.num_particles, self.max_weight))

    def __repr__(self):
        cap = "" if self.max_weight is None else f", max_weight={self.max_weight}"
        return f"FockBasis(N={self.num_particles}, modes={self.modes.labels}{cap}, dim={self.dim})"

    # --- Lookups ---

    def index(self, occupation: Sequence[int]) -> int:
        key = tuple(int(n) for n in occupation)
        try:
            return self.rank[key]
        except KeyError:
            raise ConfigError(f"Occupation {key} is not in {self!r}", occupation=key)

    def index_of(self, occupations: np.ndarray) -> np.ndarray:
        """Vectorized rank lookup; rows not in the basis map to -1."""
        occupations = np.asarray(occupations, dtype=np.int64).reshape(-1, self.num_modes)
        result = np.full(occupations.shape[0], -1, dtype=np.int64)
        if occupations.shape[0] == 0 or self.dim == 0:
            return result
        valid = np.all(occupations >= 0, axis=1) & (occupations.sum(axis=1) == self.num_particles)
        if self._sorted_keys is None:
            for row in np.nonzero(valid)[0]:
                result[row] = self.rank.get(tuple(occupations[row].tolist()), -1)
            return result
        keys = occupations[valid] @ self._radix
        pos = np.searchsorted(self._sorted_keys, keys)
        pos_clipped = np.minimum(pos, self.dim - 1)
        found = self._sorted_keys[pos_clipped] == keys
        idx = np.where(found, self.dim - 1 - pos_clipped, -1)
        result[np.nonzero(valid)[0]] = idx
        return result

    def combinatorial_rank(self, occupation: Sequence[int]) -> int:
        """Stars-and-bars rank in descending lexicographic order (full bases only)."""
        self._require_full()
        occ = [int(n) for n in occupation]
        if len(occ) != self.num_modes or sum(occ) != self.num_particles or min(occ) < 0:
            raise ConfigError(f"Occupation {tuple(occ)} is not in {self!r}")
        index = 0
        remaining = self.num_particles
        for pos in range(self.num_modes - 1):
            tail_modes = self.num_modes - pos - 1
            for larger in range(remaining, occ[pos], -1):
                index += _count_states(remaining - larger, tail_modes)
            remaining -= occ[pos]
        return index

    def unrank(self, index: int) -> Occupation:
        """Inverse of `combinatorial_rank`, computed without the state table."""
        self._require_full()
        if not 0 <= index < self.dim:
            raise ConfigError(f"Index {index} out of range for {self!r}")
        occ = []
        remaining = self.num_particles
        for pos in range(self.num_modes - 1):
            tail_modes = self.num_modes - pos - 1
            value = remaining
            while True:
                block = _count_states(remaining - value, tail_modes)
                if index < block:
                    break
                index -= block
                value -= 1
            occ.append(value)
            remaining -= value
        occ.append(remaining)
        return tuple(occ)

    def _require_full(self):
        if self.max_weight is not None and not self.is_full:
            raise ConfigError("Combinatorial ranking is only defined for uncapped bases")

    # --- Per-state quantities ---

    def column(self, label: int) -> np.ndarray:
        """Occupation of one mode across all states."""
        return self.states[:, self.modes.position(label)]

    def weights(self, labels: Optional[Sequence[float]] = None) -> np.ndarray:
        """Σ w_m n_m per state; default weights are the mode labels (total L)."""
        w = self.modes.as_array() if labels is None else np.asarray(labels)
        return self.states @ w


def build_basis(num_particles: int, modes: ModeSet, max_weight: Optional[int] = None,
                dimension_cap: int = DIMENSION_CAP) -> FockBasis:
    return FockBasis(modes, num_particles, max_weight=max_weight, dimension_cap=dimension_cap)


# --- Ladder Algebra ---

@dataclass(frozen=True)
class LadderMonomial:
    """coefficient · a†_{c1} a†_{c2} … a_{a1} a_{a2} …, normal-ordered."""
    coefficient: complex
    creators: Tuple[int, ...] = ()
    annihilators: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "coefficient", complex(self.coefficient))
        object.__setattr__(self, "creators", tuple(int(c) for c in self.creators))
        object.__setattr__(self, "annihilators", tuple(int(a) for a in self.annihilators))

    @classmethod
    def hop(cls, coefficient: complex, to_mode: int, from_mode: int) -> "LadderMonomial":
        return cls(coefficient, (to_mode,), (from_mode,))

    @classmethod
    def number(cls, coefficient: complex, mode: int) -> "LadderMonomial":
        return cls(coefficient, (mode,), (mode,))

    @property
    def conserving(self) -> bool:
        return len(self.creators) == len(self.annihilators)

    def canonical_key(self) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        # creators commute among themselves, so do annihilators
        return tuple(sorted(self.creators)), tuple(sorted(self.annihilators))

    def dagger(self) -> "LadderMonomial":
        return LadderMonomial(self.coefficient.conjugate(), self.annihilators[::-1], self.creators[::-1])


def apply_monomial(monomial: LadderMonomial, occupation: Sequence[int],
                   modes: ModeSet) -> Optional[Tuple[complex, Occupation]]:
    """Applies the monomial to a single occupation vector.

    Returns (amplitude, new occupation) or None when an annihilator hits an
    empty mode.
    """
    occ = [int(n) for n in occupation]
    amplitude = 1.0
    for label in reversed(monomial.annihilators):
        pos = modes.position(label)
        if occ[pos] == 0:
            return None
        amplitude *= math.sqrt(occ[pos])
        occ[pos] -= 1
    for label in reversed(monomial.creators):
        pos = modes.position(label)
        occ[pos] += 1
        amplitude *= math.sqrt(occ[pos])
    return monomial.coefficient * amplitude, tuple(occ)


def canonicalize(terms: Iterable[LadderMonomial]) -> Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], complex]:
    """Merges monomials that differ only by the order of commuting factors."""
    merged: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], complex] = {}
    for term in terms:
        key = term.canonical_key()
        merged[key] = merged.get(key, 0j) + term.coefficient
    return {key: coef for key, coef in merged.items() if coef != 0}


def assemble(basis: FockBasis, terms: Iterable[LadderMonomial]) -> sp.csr_matrix:
    """Sums the monomials into a CSR matrix without any Hermiticity check.

    Targets that fall outside a capped basis are dropped, which amounts to
    projecting the operator onto the basis.
    """
    dim = basis.dim
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []
    for (creators, annihilators), coefficient in canonicalize(terms).items():
        if len(creators) != len(annihilators):
            raise ConfigError(
                f"Monomial a†{creators} a{annihilators} does not conserve particle number")
        cr = [basis.modes.position(label) for label in creators]
        an = [basis.modes.position(label) for label in annihilators]
        occ = np.array(basis.states, dtype=np.int64)
        amp = np.ones(dim)
        valid = np.ones(dim, dtype=bool)
        for pos in reversed(an):
            valid &= occ[:, pos] > 0
            amp *= np.sqrt(np.clip(occ[:, pos], 0, None))
            occ[:, pos] -= 1
        for pos in reversed(cr):
            occ[:, pos] += 1
            amp *= np.sqrt(np.clip(occ[:, pos], 0, None))
        src = np.nonzero(valid)[0]
        tgt = basis.index_of(occ[src])
        keep = tgt >= 0
        rows.append(tgt[keep])
        cols.append(src[keep])
        vals.append(coefficient * amp[src[keep]])
    if not rows:
        return sp.csr_matrix((dim, dim), dtype=complex)
    coo = sp.coo_matrix(
        (np.concatenate(vals).astype(complex), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    # duplicate coordinates are summed on conversion
    return coo.tocsr()


def hermiticity_defect(matrix: sp.spmatrix) -> Tuple[float, float, Optional[Tuple[int, int, complex]]]:
    """Returns (max |H - H†|, max |H|, worst entry)."""
    matrix = sp.csr_matrix(matrix)
    scale = float(abs(matrix).max()) if matrix.nnz else 0.0
    diff = (matrix - matrix.conj().T).tocoo()
    if diff.nnz == 0:
        return 0.0, scale, None
    magnitudes = np.abs(diff.data)
    worst = int(np.argmax(magnitudes))
    entry = (int(diff.row[worst]), int(diff.col[worst]), complex(matrix[diff.row[worst], diff.col[worst]]))
    return float(magnitudes[worst]), scale, entry


def check_hermitian(matrix: sp.spmatrix, rtol: float = HERMITIAN_RTOL):
    defect, scale, entry = hermiticity_defect(matrix)
    if entry is not None and defect > rtol * scale:
        row, col, value = entry
        raise AssemblyError(
            f"Operator is not Hermitian: |H - H†| = {defect:.3e} at entry ({row}, {col}) "
            f"with H[{row},{col}] = {value}, tolerance {rtol * scale:.3e}",
            row=row, col=col, value=complex_pair(value), defect=defect,
        )


class ManyBodyOperator:
    """Sparse complex matrix over a FockBasis. Treat as immutable."""

    def __init__(self, basis: FockBasis, matrix: sp.spmatrix):
        matrix = sp.csr_matrix(matrix, dtype=complex)
        if matrix.shape != (basis.dim, basis.dim):
            raise ConfigError(f"Matrix shape {matrix.shape} does not match basis dimension {basis.dim}")
        self.basis = basis
        self.matrix = matrix

    @classmethod
    def hermitian(cls, basis: FockBasis, matrix: sp.spmatrix, rtol: float = HERMITIAN_RTOL) -> "ManyBodyOperator":
        check_hermitian(matrix, rtol)
        return cls(basis, matrix)

    @property
    def dim(self) -> int:
        return self.basis.dim

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def norm_max(self) -> float:
        return float(abs(self.matrix).max()) if self.matrix.nnz else 0.0

    def dot(self, vector: np.ndarray) -> np.ndarray:
        return self.matrix @ vector

    def __add__(self, other: "ManyBodyOperator") -> "ManyBodyOperator":
        _require_same_basis(self.basis, other.basis)
        return ManyBodyOperator(self.basis, self.matrix + other.matrix)

    def __mul__(self, scalar: complex) -> "ManyBodyOperator":
        return ManyBodyOperator(self.basis, self.matrix * scalar)

    __rmul__ = __mul__

    def __repr__(self):
        return f"ManyBodyOperator({self.basis!r}, nnz={self.matrix.nnz})"


def build_hermitian(basis: FockBasis, terms: Iterable[LadderMonomial] = (),
                    raise_terms: Iterable[LadderMonomial] = (),
                    rtol: float = HERMITIAN_RTOL) -> ManyBodyOperator:
    """
    H = Σ terms + R + R†, where R is the sum of `raise_terms`.

    `terms` must already form a Hermitian list and is only verified;
    `raise_terms` holds one side of each off-diagonal pair and is Hermitized.
    Raises AssemblyError naming the worst entry when the result is not
    Hermitian within `rtol`.
    """
    terms = list(terms)
    raise_terms = list(raise_terms)
    for term in terms + raise_terms:
        if not term.conserving:
            raise ConfigError(f"Term {term} does not conserve particle number")
    matrix = assemble(basis, terms)
    if raise_terms:
        lifted = assemble(basis, raise_terms)
        matrix = matrix + lifted + lifted.conj().T
    return ManyBodyOperator.hermitian(basis, sp.csr_matrix(matrix), rtol)


def number_operator(basis: FockBasis, label: int) -> ManyBodyOperator:
    return diagonal_operator(basis, basis.column(label))


def diagonal_operator(basis: FockBasis, values: np.ndarray) -> ManyBodyOperator:
    return ManyBodyOperator(basis, sp.diags(np.asarray(values, dtype=complex), format="csr"))


# --- States ---

def _require_same_basis(a: FockBasis, b: FockBasis):
    if a != b:
        raise ConfigError(f"Basis mismatch: {a!r} vs {b!r}")


class PureState:
    """Normalized amplitude vector over a FockBasis."""

    def __init__(self, basis: FockBasis, amplitudes: np.ndarray, tol: float = NORM_TOL):
        amplitudes = np.array(amplitudes, dtype=complex).reshape(-1)
        if amplitudes.shape[0] != basis.dim:
            raise ConfigError(f"State has {amplitudes.shape[0]} amplitudes, basis has {basis.dim}")
        norm = float(np.linalg.norm(amplitudes))
        if abs(norm - 1.0) > tol:
            raise ConfigError(f"State is not normalized: |psi| = {norm:.12g}", norm=norm)
        amplitudes.setflags(write=False)
        self.basis = basis
        self.amplitudes = amplitudes

    @classmethod
    def normalized(cls, basis: FockBasis, amplitudes: np.ndarray) -> "PureState":
        amplitudes = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(amplitudes)
        if norm == 0:
            raise ConfigError("Cannot normalize a zero vector")
        return cls(basis, amplitudes / norm)

    @classmethod
    def fock(cls, basis: FockBasis, occupation: Sequence[int]) -> "PureState":
        amplitudes = np.zeros(basis.dim, dtype=complex)
        amplitudes[basis.index(occupation)] = 1.0
        return cls(basis, amplitudes)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __repr__(self):
        return f"PureState({self.basis!r})"


class DensityMatrix:
    """
    Density matrix stored as blocks per particle-number sector.

    `sectors` maps a particle number n to (basis over n particles, matrix).
    A state that went through a loss channel is block-diagonal in n, so the
    blocks are the whole operator.
    """

    def __init__(self, sectors: Mapping[int, Tuple[FockBasis, np.ndarray]]):
        if not sectors:
            raise ConfigError("A density matrix needs at least one sector")
        checked: Dict[int, Tuple[FockBasis, np.ndarray]] = {}
        for n, (basis, matrix) in sorted(sectors.items()):
            matrix = np.asarray(matrix, dtype=complex)
            if matrix.shape != (basis.dim, basis.dim) or basis.num_particles != n:
                raise ConfigError(f"Sector {n} does not match its basis {basis!r}")
            checked[int(n)] = (basis, matrix)
        self.sectors = checked

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityMatrix":
        psi = state.amplitudes
        return cls({state.basis.num_particles: (state.basis, np.outer(psi, psi.conj()))})

    def trace(self) -> float:
        return float(sum(np.trace(m).real for _, m in self.sectors.values()))

    def sector_traces(self) -> Dict[int, float]:
        return {n: float(np.trace(m).real) for n, (_, m) in self.sectors.items()}

    def to_dense(self) -> np.ndarray:
        return scipy.linalg.block_diag(*(m for _, m in self.sectors.values()))

    def is_valid(self, tol: float = PSD_TOL) -> bool:
        if abs(self.trace() - 1.0) > tol:
            return False
        for _, m in self.sectors.values():
            if np.max(np.abs(m - m.conj().T), initial=0.0) > tol:
                return False
            if m.shape[0] and np.linalg.eigvalsh(m).min() < -tol:
                return False
        return True

    def validate(self, tol: float = PSD_TOL):
        if not self.is_valid(tol):
            raise ConfigError("Density matrix is not Hermitian, unit-trace and positive semidefinite")

    def __repr__(self):
        return f"DensityMatrix(sectors={list(self.sectors)})"


def expectation(op: ManyBodyOperator, state: PureState) -> float:
    _require_same_basis(op.basis, state.basis)
    psi = state.amplitudes
    return float(np.vdot(psi, op.matrix @ psi).real)


def overlap(a: PureState, b: PureState) -> complex:
    _require_same_basis(a.basis, b.basis)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def embed(state: PureState, target: FockBasis) -> PureState:
    """Copies a state into a larger basis over the same modes and particle number."""
    if target.modes != state.basis.modes or target.num_particles != state.basis.num_particles:
        raise ConfigError(f"Cannot embed {state.basis!r} into {target!r}")
    idx = target.index_of(state.basis.states)
    if np.any(idx < 0):
        raise ConfigError(f"{target!r} does not contain every state of {state.basis!r}")
    amplitudes = np.zeros(target.dim, dtype=complex)
    amplitudes[idx] = state.amplitudes
    return PureState(target, amplitudes)


def one_body_density_matrix(state: PureState) -> np.ndarray:
    """ρ¹_ij = ⟨a†_i a_j⟩ over the positions of the basis modes."""
    basis = state.basis
    psi = state.amplitudes
    probs = np.abs(psi) ** 2
    n_modes = basis.num_modes
    rho = np.zeros((n_modes, n_modes), dtype=complex)
    for i in range(n_modes):
        rho[i, i] = probs @ basis.states[:, i]
    for j in range(n_modes):
        src = np.nonzero(basis.states[:, j] > 0)[0]
        if src.size == 0:
            continue
        for i in range(n_modes):
            if i == j:
                continue
            occ = np.array(basis.states[src], dtype=np.int64)
            amp = np.sqrt(occ[:, j])
            occ[:, j] -= 1
            occ[:, i] += 1
            amp = amp * np.sqrt(occ[:, i])
            tgt = basis.index_of(occ)
            keep = tgt >= 0
            rho[i, j] = np.sum(psi[tgt[keep]].conj() * amp[keep] * psi[src[keep]])
    return rho
