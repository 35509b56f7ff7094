#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Diagonalization, rotation sweeps and anti-crossing searches.

Key Responsibilities:
- `eigensolve`: lowest k eigenpairs, dense (scipy.linalg.eigh) up to the
  dense threshold and ARPACK Lanczos (scipy.sparse.linalg.eigsh) above it,
  with a residual check and a deterministic phase convention.
- `sweep`: eigenvalue curves over a grid of the rotation control. Points
  may be evaluated on a thread pool and are always assembled by grid index;
  an optional `SweepCache` skips points computed before.
- `find_anticrossing`: coarse scan plus golden-section minimization of the
  lowest gap E1 - E0.
- `ground_state`, `natural_orbitals` and `two_orbital_distribution` for
  ground-state analysis.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse.linalg as spla

from config import (
    COARSE_SCAN_POINTS, DEFAULT_GAP_TOL, DEGENERACY_TOL, DENSE_THRESHOLD, GOLDEN_MAXITER,
    KRYLOV_MAXITER, KRYLOV_NCV_MIN, PHASE_TIE_RTOL, RESIDUAL_RTOL,
)
from errors import BracketError, ConfigError, DegeneracyWarning, RotometryError, SolverError
from fockspace import ManyBodyOperator, PureState, one_body_density_matrix
from models import embed_full, mode_rotation
from utils import SweepCache, log_time, logger, parallel_map

Builder = Callable[[float], ManyBodyOperator]


# --- Eigensolver ---

@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray
    states: List[PureState]
    degenerate: bool
    residual: float
    method: str

    def __iter__(self):
        # allows `values, states = eigensolve(H, k)`
        return iter((self.values, self.states))


def fix_phase(vector: np.ndarray, tie_rtol: float = PHASE_TIE_RTOL) -> np.ndarray:
    """Makes the first (near-)largest-magnitude amplitude real and positive."""
    magnitudes = np.abs(vector)
    peak = magnitudes.max()
    if peak == 0:
        return vector
    first = int(np.argmax(magnitudes >= peak * (1 - tie_rtol)))
    return vector * (np.conj(vector[first]) / magnitudes[first])


def _residual(H: ManyBodyOperator, values: np.ndarray, vectors: np.ndarray) -> float:
    r = H.matrix @ vectors - vectors * values[None, :]
    return float(np.max(np.linalg.norm(r, axis=0)))


def eigensolve(H: ManyBodyOperator, k: int, dense_threshold: int = DENSE_THRESHOLD,
               maxiter: int = KRYLOV_MAXITER, residual_rtol: float = RESIDUAL_RTOL,
               degeneracy_tol: float = DEGENERACY_TOL) -> EigenResult:
    """k smallest eigenvalues (ascending) and orthonormal eigenvectors."""
    dim = H.dim
    if not 1 <= k <= dim:
        raise ConfigError(f"Requested k={k} eigenpairs from a {dim}-dimensional operator", k=k, dim=dim)

    # ARPACK needs k < dim - 1; tiny problems go dense regardless
    if dim <= dense_threshold or k >= dim - 1:
        values, vectors = scipy.linalg.eigh(H.toarray(), subset_by_index=[0, k - 1])
        method = "dense"
    else:
        v0 = np.linspace(1.0, 2.0, dim).astype(complex)
        ncv = min(dim - 1, max(2 * k + 1, KRYLOV_NCV_MIN))
        try:
            values, vectors = spla.eigsh(H.matrix, k=k, which="SA", maxiter=maxiter, ncv=ncv, v0=v0)
        except spla.ArpackNoConvergence as e:
            best = math.inf
            if e.eigenvectors is not None and len(e.eigenvalues):
                best = _residual(H, np.asarray(e.eigenvalues), np.asarray(e.eigenvectors))
            raise SolverError(f"Lanczos did not converge after {maxiter} iterations",
                              best_residual=best, dim=dim, k=k)
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]
        method = "lanczos"
        scale = float(spla.norm(H.matrix, 1))
        residual = _residual(H, values, vectors)
        if residual > residual_rtol * max(scale, 1.0):
            raise SolverError(f"Lanczos residual {residual:.3e} exceeds {residual_rtol * scale:.3e}",
                              best_residual=residual, dim=dim, k=k)
    residual = _residual(H, values, vectors)
    logger.debug("eigensolve dim=%d k=%d method=%s residual=%.2e", dim, k, method, residual)

    states = [PureState.normalized(H.basis, fix_phase(vectors[:, i])) for i in range(k)]
    degenerate = k >= 2 and float(values[1] - values[0]) < degeneracy_tol
    return EigenResult(np.asarray(values, dtype=float), states, degenerate, residual, method)


def ground_state(H: ManyBodyOperator, degeneracy_tol: float = DEGENERACY_TOL) -> PureState:
    """Lowest eigenvector; a degenerate ground level is reported as a warning."""
    result = eigensolve(H, 2 if H.dim > 1 else 1, degeneracy_tol=degeneracy_tol)
    if result.degenerate:
        warnings.warn(
            f"Ground state is degenerate (E1 - E0 = {result.values[1] - result.values[0]:.3e}); "
            "returning the solver's first eigenvector", DegeneracyWarning)
    return result.states[0]


# --- Sweeps ---

@dataclass(frozen=True)
class SpectrumSweep:
    parameter: str
    grid: np.ndarray
    levels: np.ndarray
    states: Optional[List[PureState]]
    unit: str

    def gaps(self) -> np.ndarray:
        return gap_curve(self)


def gap_curve(result: SpectrumSweep) -> np.ndarray:
    if result.levels.shape[1] < 2:
        raise ConfigError("A gap curve needs at least two levels per point")
    return result.levels[:, 1] - result.levels[:, 0]


def _validate_grid(grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ConfigError("Sweep grid is empty")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ConfigError("Sweep grid must be strictly increasing")
    return grid


def sweep(builder: Builder, grid: Sequence[float], k: int, keep_states: bool = False,
          workers: Optional[int] = None, cache: Optional[SweepCache] = None,
          show_progress: bool = False) -> SpectrumSweep:
    """Diagonalizes builder(x) at every grid point; output order follows the grid."""
    grid = _validate_grid(grid)
    parameter = getattr(builder, "parameter", "x")
    use_cache = cache is not None and not keep_states and hasattr(builder, "cache_key")

    def point(x: float):
        key = builder.cache_key(x, k) if use_cache else None
        if key is not None:
            cached = cache.get(key)
            if cached is not None:
                return np.asarray(cached, dtype=float), None
        try:
            result = eigensolve(builder(x), k)
        except RotometryError as e:
            raise e.with_context(parameter=parameter, value=float(x))
        if key is not None:
            cache.set(key, result.values.tolist())
        return result.values, (result.states[0] if keep_states else None)

    log_time(f"Sweep over {grid.size} values of {parameter}, k={k}")
    rows = parallel_map(point, list(grid), workers=workers, desc=f"sweep {parameter}",
                        show_progress=show_progress)
    levels = np.vstack([values for values, _ in rows])
    states = [state for _, state in rows] if keep_states else None
    return SpectrumSweep(parameter, grid, levels, states, getattr(builder, "unit", ""))


# --- Anti-crossings ---

@dataclass(frozen=True)
class AntiCrossing:
    location: float
    gap: float
    bracket: Tuple[float, float]
    converged: bool
    degenerate: bool


def find_anticrossing(builder: Builder, bracket: Optional[Tuple[float, float]] = None,
                      tol: float = DEFAULT_GAP_TOL, coarse_points: int = COARSE_SCAN_POINTS,
                      maxiter: int = GOLDEN_MAXITER,
                      degeneracy_tol: float = DEGENERACY_TOL) -> AntiCrossing:
    """
    Locates the minimum of E1 - E0 inside `bracket`.

    A coarse scan picks the lowest interior sample, which must lie strictly
    below both endpoints; golden-section search then refines between its
    neighbours. The returned point is the best of every evaluation.
    """
    if bracket is None:
        bracket = builder.default_bracket()
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ConfigError(f"Bracket must satisfy lo < hi, got ({lo}, {hi})")
    if coarse_points < 3:
        raise ConfigError("The coarse scan needs at least 3 points")

    evaluated: Dict[float, float] = {}

    def gap(x: float) -> float:
        if x not in evaluated:
            try:
                values = eigensolve(builder(x), 2).values
            except RotometryError as e:
                raise e.with_context(value=float(x))
            evaluated[x] = float(values[1] - values[0])
        return evaluated[x]

    xs = np.linspace(lo, hi, coarse_points)
    gaps = np.array([gap(float(x)) for x in xs])
    i = int(np.argmin(gaps))
    if i in (0, coarse_points - 1) or not (gaps[i] < gaps[0] and gaps[i] < gaps[-1]):
        raise BracketError(
            f"No interior gap minimum in ({lo}, {hi}): endpoint gaps {gaps[0]:.6g}, {gaps[-1]:.6g}, "
            f"lowest sample {gaps[i]:.6g} at {xs[i]:.6g}",
            bracket=[lo, hi])

    a, x0, b = float(xs[i - 1]), float(xs[i]), float(xs[i + 1])
    if gaps[i] < gaps[i - 1] and gaps[i] < gaps[i + 1]:
        # golden xtol is relative to |x|
        res = scipy.optimize.minimize_scalar(
            gap, bracket=(a, x0, b), method="golden",
            options={"xtol": tol / max(2 * abs(x0), 1.0), "maxiter": maxiter})
    else:
        # flat neighbourhood, no strict triple for golden
        res = scipy.optimize.minimize_scalar(
            gap, bounds=(a, b), method="bounded", options={"xatol": tol, "maxiter": maxiter})
    logger.debug("gap refinement: success=%s nfev=%d x=%.12g", res.success, res.nfev, res.x)

    location, best = min(evaluated.items(), key=lambda item: (item[1], item[0]))
    return AntiCrossing(
        location=float(location),
        gap=float(max(best, 0.0)),
        bracket=(lo, hi),
        converged=bool(res.success),
        degenerate=best < degeneracy_tol,
    )


# --- Ground-state analysis ---

def natural_orbitals(state: PureState) -> Tuple[np.ndarray, np.ndarray]:
    """Occupations (descending) and orbitals (columns) of the one-body density matrix."""
    occupations, orbitals = np.linalg.eigh(one_body_density_matrix(state))
    order = np.argsort(occupations)[::-1]
    return occupations[order], orbitals[:, order]


def two_orbital_distribution(state: PureState,
                             orbitals: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
    """
    Joint number distribution over the two dominant natural orbitals.

    Returns (P, captured) where P[n] is the probability of n atoms in the
    most occupied orbital and N - n in the second, and `captured` = Σ P.
    """
    if orbitals is None:
        _, orbitals = natural_orbitals(state)
    # ρ¹_ij = ⟨a†_i a_j⟩ has eigenvectors conj(φ), so the orbital amplitudes are Wᵀ c
    rotated = mode_rotation(embed_full(state), orbitals.T)
    n_total = rotated.basis.num_particles
    probs = rotated.probabilities()
    states = rotated.basis.states
    distribution = np.zeros(n_total + 1)
    two_mode = states[:, 0] + states[:, 1] == n_total
    for idx in np.nonzero(two_mode)[0]:
        distribution[states[idx, 0]] += probs[idx]
    return distribution, float(distribution.sum())
