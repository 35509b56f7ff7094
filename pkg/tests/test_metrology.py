import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import ConfigError
from fockspace import DensityMatrix, PureState
from metrology import (
    PhaseGenerator, QfiCurve, SagnacQuery, apply_loss, atom_photon_ratio, bat_state,
    cramer_rao_bound, ground_state_probe, heisenberg_limit, loss_crossover, mixed_qfi,
    noon_state, phase_derivative, probe_state, pure_qfi, qfi_vs_loss, sagnac_precision,
    shot_noise_limit, sld, two_mode_basis, unentangled_state,
)
from models import RingFamily, RingParams, ring_window, sector_weights, tg_interaction

NB = PhaseGenerator.two_mode_nb()


def _random_state(rng, n):
    basis = two_mode_basis(n)
    amplitudes = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    return PureState.normalized(basis, amplitudes)


# --- Probe states ---

def test_probe_state_layout():
    noon = noon_state(3)
    assert_allclose(noon.probabilities(), [0.5, 0, 0, 0.5], atol=1e-15)

    bat = bat_state(1)
    assert_allclose(np.abs(bat.amplitudes), [1 / math.sqrt(2), 0, 1 / math.sqrt(2)], atol=1e-12)

    assert probe_state("bat", 10).basis.num_particles == 10
    with pytest.raises(ConfigError):
        probe_state("bat", 9)
    with pytest.raises(ConfigError):
        probe_state("squeezed", 4)


# --- Pure-state QFI ---

@pytest.mark.parametrize("n", range(1, 21))
def test_pure_qfi_closed_forms(n):
    assert pure_qfi(noon_state(n), NB) == pytest.approx(n * n, abs=1e-9)
    assert pure_qfi(unentangled_state(n), NB) == pytest.approx(n, abs=1e-9)


def test_bat_state_qfi():
    assert pure_qfi(bat_state(5), NB) == pytest.approx(60.0, abs=1e-9)


def test_derivative_method_matches_variance(rng):
    for n in (2, 5, 8):
        state = _random_state(rng, n)
        variance = pure_qfi(state, NB)
        derivative = pure_qfi(state, NB, method="derivative")
        assert derivative == pytest.approx(variance, rel=1e-6)
    with pytest.raises(ConfigError):
        pure_qfi(noon_state(2), NB, method="fourier")


def test_qfi_respects_heisenberg_bound(rng):
    for _ in range(10):
        n = int(rng.integers(1, 9))
        assert pure_qfi(_random_state(rng, n), NB) <= n * n + 1e-8


# --- Mixed-state QFI ---

def test_mixed_qfi_reduces_to_pure(rng):
    for _ in range(100):
        state = _random_state(rng, int(rng.integers(1, 9)))
        rho = DensityMatrix.from_pure(state)
        assert mixed_qfi(rho, NB) == pytest.approx(pure_qfi(state, NB), rel=1e-8, abs=1e-8)


def test_sld_equation_holds_per_sector(rng):
    rho = apply_loss(_random_state(rng, 3), 0.7)
    drho = phase_derivative(rho, NB)
    A = sld(rho, drho)
    for n, (_, m) in rho.sectors.items():
        a = A[n].toarray()
        assert_allclose((a @ m + m @ a) / 2, drho[n], atol=1e-8)


def test_sld_blocks_reproduce_mixed_qfi(rng):
    rho = apply_loss(_random_state(rng, 3), 0.7)
    blocks = sld(rho, phase_derivative(rho, NB))
    assert set(blocks) == set(rho.sectors)
    total = 0.0
    for n, (_, m) in rho.sectors.items():
        a = blocks[n].toarray()
        total += np.trace(m @ a @ a).real
    assert total == pytest.approx(mixed_qfi(rho, NB), rel=1e-8)


def test_sld_of_pure_state_gives_variance(rng):
    state = _random_state(rng, 4)
    rho = DensityMatrix.from_pure(state)
    drho = phase_derivative(rho, NB)[4]
    a = sld(rho, drho)[4].toarray()
    m = rho.sectors[4][1]
    assert np.trace(m @ a @ a).real == pytest.approx(pure_qfi(state, NB), rel=1e-8)


def test_sld_edge_cases():
    basis = two_mode_basis(1)
    rho = DensityMatrix({1: (basis, np.eye(2) / 2)})
    a = sld(rho, np.zeros((2, 2)))[1].toarray()
    assert_allclose(a, 0, atol=0)
    with pytest.raises(ConfigError):
        sld(rho, np.array([[0, 1], [0, 0]], dtype=complex))


# --- Loss ---

def test_loss_keeps_trace_and_positivity(rng):
    rho = apply_loss(_random_state(rng, 5), 0.7)
    assert rho.is_valid()
    assert set(rho.sectors) == set(range(6))


def test_loss_on_single_atom():
    rho = apply_loss(noon_state(1), 0.8)
    traces = rho.sector_traces()
    assert traces[1] == pytest.approx(0.8)
    assert traces[0] == pytest.approx(0.2)


def test_loss_on_two_atom_noon_state():
    eta = 0.8
    rho = apply_loss(noon_state(2), eta)
    basis2, m2 = rho.sectors[2]
    noon = noon_state(2).amplitudes
    assert_allclose(m2, eta ** 2 * np.outer(noon, noon.conj()), atol=1e-12)
    assert_allclose(rho.sectors[1][1], np.diag([0.16, 0.16]), atol=1e-12)
    assert_allclose(rho.sectors[0][1], [[0.04]], atol=1e-12)


def test_loss_boundaries():
    state = noon_state(2)
    assert list(apply_loss(state, 1.0).sectors) == [2]
    for eta in (0.0, -0.1, 1.5):
        with pytest.raises(ConfigError):
            apply_loss(state, eta)


def test_loss_commutes_with_phase(rng):
    state = _random_state(rng, 4)
    phi = 0.37
    g = NB.diagonal(state.basis)
    shifted = PureState(state.basis, np.exp(-1j * phi * g) * state.amplitudes)
    a = apply_loss(shifted, 0.6)
    b = apply_loss(state, 0.6)
    for n, (basis, m) in b.sectors.items():
        u = np.exp(-1j * phi * NB.diagonal(basis))
        assert_allclose(a.sectors[n][1], u[:, None] * m * u.conj()[None, :], atol=1e-10)


def test_lossy_noon_and_unentangled_closed_forms():
    grid = np.linspace(0, 0.5, 11)
    noon = qfi_vs_loss(noon_state(2), NB, grid, workers=1)
    assert_allclose(noon.qfi, 4 * (1 - grid) ** 2, atol=1e-8)
    unentangled = qfi_vs_loss(unentangled_state(10), NB, grid, workers=1)
    assert_allclose(unentangled.qfi, 10 * (1 - grid), atol=1e-7)


def test_noon_unentangled_crossover():
    grid = np.linspace(0, 0.5, 51)
    noon = qfi_vs_loss(noon_state(10), NB, grid, state_tag="noon", workers=1)
    unentangled = qfi_vs_loss(unentangled_state(10), NB, grid, state_tag="unentangled", workers=1)
    crossover = loss_crossover(noon, unentangled)
    assert crossover == pytest.approx(1 - 10 ** (-1 / 9), abs=0.01)
    assert loss_crossover(unentangled, unentangled) is None


def test_bat_state_wins_at_moderate_loss():
    grid = [0.0, 0.2]
    bat = qfi_vs_loss(bat_state(5), NB, grid, workers=1).qfi[1]
    noon = qfi_vs_loss(noon_state(10), NB, grid, workers=1).qfi[1]
    unentangled = qfi_vs_loss(unentangled_state(10), NB, grid, workers=1).qfi[1]
    assert bat > noon
    assert bat > unentangled


def test_qfi_grid_validation():
    with pytest.raises(ConfigError):
        qfi_vs_loss(noon_state(2), NB, [0.0, 1.0])
    with pytest.raises(ConfigError):
        qfi_vs_loss(noon_state(2), NB, [])


def test_deltaphi_and_limits():
    curve = QfiCurve(np.array([0.0, 0.5]), np.array([4.0, 0.0]), "noon", "n_b")
    assert_allclose(curve.deltaphi_min, [0.5, math.inf])
    assert cramer_rao_bound(100.0) == pytest.approx(0.1)
    assert shot_noise_limit(4) == pytest.approx(0.5)
    assert heisenberg_limit(4) == pytest.approx(0.25)


# --- Generators ---

def test_generator_needs_every_mode():
    G = PhaseGenerator.from_weights({0: 0.0}, "partial")
    with pytest.raises(ConfigError):
        G.diagonal(two_mode_basis(2))


def test_ring_ground_state_probe_uses_angular_momentum():
    state, G = ground_state_probe(RingFamily(RingParams(2, b=0.05, g=1.0)))
    assert G.description == "L"
    assert pure_qfi(state, G) > 0


def test_strongly_interacting_ring_matches_noon_and_survives_loss():
    k_min, k_max = ring_window(12)
    params = RingParams(3, b=0.008, g=tg_interaction(3), k_min=k_min, k_max=k_max)
    state, G = ground_state_probe(RingFamily(params))
    weights = sector_weights(state)
    assert weights.get(0, 0.0) + weights.get(3, 0.0) >= 0.95
    assert pure_qfi(state, G) == pytest.approx(9.0, rel=0.05)

    grid = [0.0, 0.2]
    ring = qfi_vs_loss(state, G, grid, workers=1).qfi[1]
    noon = qfi_vs_loss(noon_state(3), NB, grid, workers=1).qfi[1]
    unentangled = qfi_vs_loss(unentangled_state(3), NB, grid, workers=1).qfi[1]
    assert ring > noon > unentangled


# --- Sagnac ---

def test_sagnac_precision_scaling():
    base = SagnacQuery(wavelength=1e-9, speed=0.01, rotation=1e-5, area=1e-6)
    doubled = SagnacQuery(wavelength=1e-9, speed=0.01, rotation=1e-5, area=2e-6)
    assert sagnac_precision(doubled) == pytest.approx(2 * sagnac_precision(base))
    still = SagnacQuery(wavelength=1e-9, speed=0.01, rotation=0.0, area=1e-6)
    assert sagnac_precision(still) == 0.0
    with pytest.raises(ConfigError):
        sagnac_precision(SagnacQuery(wavelength=1e-9, speed=0.01, rotation=-1.0, area=1e-6))


def test_atom_photon_ratio():
    ratio = atom_photon_ratio()
    assert 1e10 < ratio < 1e12
    assert ratio == pytest.approx(5.09e10, rel=0.01)
    with pytest.raises(ConfigError):
        atom_photon_ratio(mass=0.0)
