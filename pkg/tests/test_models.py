import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import ConfigError, DimensionCapError
from fockspace import ModeSet, PureState, build_basis
from models import (
    PancakeFamily, PancakeParams, RingFamily, RingParams, ThreeSiteFamily, ThreeSiteParams,
    critical_rotation_pancake, dft_unitary, flow_extreme_weights, flow_mode_energies,
    momentum_distribution, mode_rotation, pancake_hamiltonian, ring_hamiltonian, ring_window,
    sector_weights, tg_interaction, three_site_flow_basis, three_site_site_basis, with_control,
)
from spectral import eigensolve, ground_state


# --- Three-site lattice ---

def test_flow_energies_degenerate_at_pi():
    energies = flow_mode_energies(1.0, math.pi)
    assert_allclose(energies, [-1.0, -1.0, 2.0], atol=1e-12)
    assert_allclose(flow_mode_energies(1.0, 0.0), [-2.0, 1.0, 1.0], atol=1e-12)


def test_site_and_flow_spectra_agree(rng):
    for _ in range(50):
        p = ThreeSiteParams(
            num_particles=int(rng.integers(1, 5)),
            J=float(rng.uniform(0.2, 2.0)),
            U=float(rng.uniform(0.0, 2.0)),
            phi=float(rng.uniform(0, 2 * math.pi)),
        )
        site = np.linalg.eigvalsh(three_site_site_basis(p).toarray())
        flow = np.linalg.eigvalsh(three_site_flow_basis(p).toarray())
        assert_allclose(site, flow, atol=1e-9)


def test_three_site_levels_at_pi():
    # the quasi-momentum-zero block reduces to a symmetric 3x3 problem and an
    # antisymmetric α/β combination pinned at -1
    c = 2 * math.sqrt(6) / 3
    block = np.array([[-1.0, 0.0, math.sqrt(2) * c], [0.0, 8.0, c], [math.sqrt(2) * c, c, 4.0]])
    e0 = np.linalg.eigvalsh(block)[0]
    H = three_site_site_basis(ThreeSiteParams(3, J=1.0, U=1.0, phi=math.pi))
    values = eigensolve(H, 2).values
    assert_allclose(values, [e0, -1.0], atol=1e-9)


def test_flow_ground_state_is_balanced_at_pi():
    family = ThreeSiteFamily(ThreeSiteParams(3, J=1.0, U=1.0), "flow")
    alpha, beta = flow_extreme_weights(ground_state(family(math.pi)))
    assert abs(alpha - beta) < 1e-9
    assert alpha > 0.1


def test_family_matches_direct_builders():
    p = ThreeSiteParams(3, J=1.0, U=0.7)
    for x in (0.3, 2.9, math.pi):
        assert_allclose(ThreeSiteFamily(p)(x).toarray(),
                        three_site_site_basis(with_control(p, x)).toarray(), atol=1e-12)
        assert_allclose(ThreeSiteFamily(p, "flow")(x).toarray(),
                        three_site_flow_basis(with_control(p, x)).toarray(), atol=1e-12)

    r = RingParams(2, b=0.05, g=1.0)
    for x in (0.0, 2.5, math.pi):
        assert_allclose(RingFamily(r)(x).toarray(), ring_hamiltonian(with_control(r, x)).toarray(),
                        atol=1e-12)

    q = PancakeParams(3, g=0.5, A=0.02)
    for x in (0.5, 0.9):
        assert_allclose(PancakeFamily(q)(x).toarray(),
                        pancake_hamiltonian(with_control(q, x)).toarray(), atol=1e-12)


def test_flow_readout_needs_flow_basis():
    family = ThreeSiteFamily(ThreeSiteParams(2))
    with pytest.raises(ConfigError):
        family.readout_indices()
    with pytest.raises(ConfigError):
        ThreeSiteFamily(ThreeSiteParams(2), "momentum")


# --- Mode rotations ---

def test_dft_unitary_is_unitary():
    u = dft_unitary(3)
    assert_allclose(u @ u.conj().T, np.eye(3), atol=1e-12)


def test_single_particle_rotation_spreads_evenly():
    basis = build_basis(1, ModeSet((0, 1, 2)))
    rotated = mode_rotation(PureState.fock(basis, (1, 0, 0)))
    assert_allclose(rotated.probabilities(), np.full(3, 1 / 3), atol=1e-10)


def test_site_ground_state_rotates_into_alpha():
    H = three_site_site_basis(ThreeSiteParams(2, J=1.0, U=0.0, phi=0.0))
    flow = mode_rotation(ground_state(H))
    assert flow.probabilities()[flow.basis.index((2, 0, 0))] == pytest.approx(1.0, abs=1e-10)


def test_single_particle_rotation_applies_u(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    assert np.max(np.abs(q - q.T)) > 0.1
    basis = build_basis(1, ModeSet((0, 1, 2)))
    c = np.array([0.6, 0.48j, 0.64])
    rotated = mode_rotation(PureState(basis, c), q)
    assert_allclose(rotated.amplitudes, q @ c, atol=1e-10)


def test_mode_rotation_rejects_bad_input():
    basis = build_basis(2, ModeSet((0, 1, 2)))
    state = PureState.fock(basis, (2, 0, 0))
    with pytest.raises(ConfigError):
        mode_rotation(state, 2 * np.eye(3))
    with pytest.raises(ConfigError):
        mode_rotation(state, np.eye(2))
    capped = build_basis(2, ModeSet((0, 1, 2)), max_weight=1)
    with pytest.raises(ConfigError):
        mode_rotation(PureState.fock(capped, (2, 0, 0)), dft_unitary(3))


# --- Pancake ---

def test_pancake_critical_rotation():
    assert critical_rotation_pancake(2, 0.5) == pytest.approx(1 - 1 / (8 * math.pi))


@pytest.mark.parametrize("n", [2, 4, 6])
def test_pancake_couples_only_even_momentum_differences(n):
    H = pancake_hamiltonian(PancakeParams(n, g=0.5, A=0.01, omega=0.8))
    totals = H.basis.weights()
    rows, cols = H.matrix.nonzero()
    assert np.all((totals[rows] - totals[cols]) % 2 == 0)
    assert np.all(totals <= n + 2)


def test_pancake_levels_cross_at_critical_rotation():
    g = 0.5
    p = PancakeParams(2, g=g, A=0.0)
    values = eigensolve(pancake_hamiltonian(with_control(p, critical_rotation_pancake(2, g))), 2).values
    assert_allclose(values, [2 + g / (2 * math.pi)] * 2, atol=1e-10)


def test_pancake_rejects_negative_momentum_cap():
    with pytest.raises(ConfigError):
        pancake_hamiltonian(PancakeParams(2, L_max=-1))


def test_pancake_bracket_stays_below_unit_rotation():
    lo, hi = PancakeFamily(PancakeParams(2, g=0.5, A=0.01)).default_bracket()
    assert hi < 1.0
    assert lo < critical_rotation_pancake(2, 0.5) < hi


# --- Ring ---

def test_ring_window_and_tg_scaling():
    assert ring_window(12) == (-5, 6)
    assert ring_window(4) == (-1, 2)
    assert tg_interaction(5) == pytest.approx(1085 / (2 * math.pi))
    assert tg_interaction(10) == pytest.approx(2 * tg_interaction(5))


def test_ring_free_levels_degenerate_at_pi():
    values = eigensolve(ring_hamiltonian(RingParams(1, b=0.0, omega=math.pi)), 2).values
    assert abs(values[1] - values[0]) < 1e-12
    assert values[0] == pytest.approx(0.25)


@pytest.mark.parametrize("b", [0.01, 0.1])
def test_single_atom_ring_gap(b):
    values = eigensolve(ring_hamiltonian(RingParams(1, b=b, omega=math.pi)), 2).values
    # antisymmetric k=0,1 combination ignores the barrier; the symmetric one
    # mixes with the symmetric k=-1,2 pair
    reduced = np.array([[0.25 + 2 * b, 2 * b], [2 * b, 2.25 + 2 * b]])
    expected = np.linalg.eigvalsh(reduced)[0] - 0.25
    assert values[0] == pytest.approx(0.25, abs=1e-12)
    assert values[1] - values[0] == pytest.approx(expected, abs=1e-10)
    if b == 0.01:
        assert abs((values[1] - values[0]) - 2 * b) / (2 * b) < 0.05


def test_ring_ground_state_is_mirror_symmetric():
    state = ground_state(ring_hamiltonian(RingParams(2, b=0.05, g=1.0, omega=math.pi)))
    weights = sector_weights(state)
    assert abs(weights[0] - weights[2]) < 1e-8
    assert weights[0] + weights[2] > 0.9
    occupation = momentum_distribution(state)
    assert occupation[0] == pytest.approx(occupation[1], abs=1e-8)
    assert sum(occupation.values()) == pytest.approx(2.0)


def test_ring_dimension_cap():
    with pytest.raises(DimensionCapError):
        ring_hamiltonian(RingParams(10, k_min=-14, k_max=15))


def test_ring_window_must_contain_both_flows():
    with pytest.raises(ConfigError):
        ring_hamiltonian(RingParams(1, k_min=1, k_max=3))
