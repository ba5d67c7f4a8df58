"""Zeeman evolution and Monte-Carlo dephasing of the spin-1 atom."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from atomlink import dynamics as D
from atomlink import states as S

DOWN_X = S.atom_basis_state("x", "down")
UP_X = S.atom_basis_state("x", "up")

vec3 = st.lists(st.floats(-0.05, 0.05), min_size=3, max_size=3)


def series_propagator(h, t, steps=2000, order=8):
    """exp(-iHt) from many small Taylor steps (independent of eigh)."""
    dt = t / steps
    step = np.eye(3, dtype=complex)
    term = np.eye(3, dtype=complex)
    for k in range(1, order + 1):
        term = term @ (-1j * h * dt) / k
        step = step + term
    return np.linalg.matrix_power(step, steps)


# --- spin matrices and Hamiltonian ------------------------------------------

def test_spin_matrices_algebra():
    fx, fy, fz = D.SPIN_MATRICES
    assert np.allclose(fx @ fy - fy @ fx, 1j * fz, atol=1e-12)
    assert np.allclose(fy @ fz - fz @ fy, 1j * fx, atol=1e-12)
    assert np.allclose(fx @ fx + fy @ fy + fz @ fz, 2 * np.eye(3), atol=1e-12)


def test_zero_field_hamiltonian():
    assert np.array_equal(D.zeeman_hamiltonian([0, 0, 0]), np.zeros((3, 3)))


def test_z_field_hamiltonian_diagonal():
    bz, gf = 3e-3, -0.5
    h = D.zeeman_hamiltonian([0, 0, bz], gf)
    w = gf * 2 * np.pi * 1.399624e6 * bz
    assert np.allclose(h, np.diag([w, -w, 0]), atol=1e-9)


@given(vec3)
def test_hamiltonian_hermitian(b):
    h = D.zeeman_hamiltonian(b)
    assert np.allclose(h, h.conj().T, atol=1e-12)


def test_splitting_at_guiding_field():
    f = D.splitting_frequency(5.5e-3, -0.5)
    assert f == pytest.approx(abs(2 * -0.5 * 1.399624e6 * 5.5e-3), rel=1e-12)
    assert f == pytest.approx(7.7e3, rel=0.01)
    assert 1 / f == pytest.approx(130e-6, rel=0.01)
    # eigenvalue gap of the Hamiltonian agrees
    w = np.linalg.eigvalsh(D.zeeman_hamiltonian([0, 0, 5.5e-3]))
    assert (w.max() - w.min()) / (2 * np.pi) == pytest.approx(f, rel=1e-12)


def test_hamiltonian_broadcasts():
    b = np.random.default_rng(0).normal(size=(5, 3)) * 1e-3
    stacked = D.zeeman_hamiltonian(b)
    for k in range(5):
        assert np.allclose(stacked[k], D.zeeman_hamiltonian(b[k]), atol=1e-12)


# --- evolution -------------------------------------------------------------

@settings(max_examples=30)
@given(vec3, st.floats(0, 1e-3))
def test_propagator_matches_expm(b, t):
    h = D.zeeman_hamiltonian(b)
    assert np.allclose(D.propagator(h, t), expm(-1j * h * t), atol=1e-9)


def test_zero_hamiltonian_is_identity():
    chi = S.normalize([1, 2j, -0.5])
    assert np.allclose(D.evolve_state(chi, np.zeros((3, 3)), 1e-3), chi, atol=1e-12)


def test_eigenstate_is_stationary():
    h = D.zeeman_hamiltonian([0, 0, 5.5e-3])
    up = S.atom_basis_state("z", "up")
    for t in np.linspace(0, 1e-3, 11):
        psi = D.evolve_state(up, h, t)
        assert np.allclose(np.abs(psi) ** 2, [1, 0, 0], atol=1e-10)


def test_half_fringe_flips_x_state():
    bz = 5.5e-3
    h = D.zeeman_hamiltonian([0, 0, bz])
    t_half = 1 / (2 * D.splitting_frequency(bz))
    oracle = series_propagator(h, t_half) @ DOWN_X
    psi = D.evolve_state(DOWN_X, h, t_half)
    assert S.overlap2(psi, oracle) == pytest.approx(1, abs=1e-9)
    assert S.overlap2(psi, UP_X) == pytest.approx(1, abs=1e-9)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        D.evolve_state(DOWN_X, np.zeros((3, 3)), -1e-6)


@settings(max_examples=30)
@given(vec3, st.integers(0, 2**32 - 1))
def test_norm_preserved_over_one_ms(b, seed):
    rng = np.random.default_rng(seed)
    chi = S.normalize(rng.normal(size=3) + 1j * rng.normal(size=3))
    h = D.zeeman_hamiltonian(b)
    for t in np.linspace(0, 1e-3, 21):
        assert abs(np.linalg.norm(D.evolve_state(chi, h, t)) - 1) < 1e-9


@settings(max_examples=30)
@given(st.floats(-0.02, 0.02), st.floats(0, 1e-3), st.integers(0, 2**32 - 1))
def test_pure_z_field_reduces_to_spin_half(bz, t, seed):
    rng = np.random.default_rng(seed)
    q = S.normalize(rng.normal(size=2) + 1j * rng.normal(size=2))
    chi = np.array([q[0], q[1], 0], dtype=complex)
    psi = D.evolve_state(chi, D.zeeman_hamiltonian([0, 0, bz], -0.5), t)
    # spin-1/2 in field 2 gf B: H = (2 gf mu_B B / hbar) * sigma_z / 2
    omega = 2 * -0.5 * D.MU_B_OVER_HBAR * bz
    u2 = np.diag([np.exp(-0.5j * omega * t), np.exp(0.5j * omega * t)])
    q_t = u2 @ q
    assert abs(psi[2]) < 1e-12
    assert abs(abs(np.vdot(q_t, psi[:2])) - 1) < 1e-9


# --- field sampling --------------------------------------------------------

def test_noise_free_field_is_guiding():
    rng = np.random.default_rng(0)
    g = [1e-3, -2e-3, 5.5e-3]
    assert np.array_equal(D.sample_trajectory_field(D.NoiseModel(), g, rng), g)


def test_field_sample_mean():
    sigma = 1e-3
    model = D.NoiseModel(shot_to_shot_sigma=(sigma,) * 3)
    rng = np.random.default_rng(7)
    n = 100_000
    draws = np.array([D.sample_trajectory_field(model, [0, 0, 0], rng) for _ in range(n)])
    assert np.all(np.abs(draws.mean(axis=0)) < 5 * sigma / np.sqrt(n))
    assert draws.std(axis=0) == pytest.approx([sigma] * 3, rel=0.02)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        D.NoiseModel(shot_to_shot_sigma=(-1e-3, 0, 0))
    with pytest.raises(ValueError):
        D.NoiseModel(trap_circular_fraction=1.5)
    with pytest.raises(ValueError):
        D.NoiseModel(static_residual_field=(np.nan, 0, 0))


def test_lightshift_scaling():
    assert D.scaled_lightshift_sigma(0.01, 150) == pytest.approx(D.REPLICATION_LIGHTSHIFT_SIGMA_Z)
    assert D.scaled_lightshift_sigma(0.005, 150) == pytest.approx(
        0.5 * D.REPLICATION_LIGHTSHIFT_SIGMA_Z)


def test_replication_noise_within_stabilisation_bound():
    m = D.replication_noise()
    assert m.trap_circular_fraction <= 0.01
    assert max(m.shot_to_shot_sigma) < 2e-3


# --- ensembles -------------------------------------------------------------

def test_times_validation():
    for bad in ([], [1e-6, 2e-6], [0, 2e-6, 1e-6]):
        with pytest.raises(ValueError):
            D.check_times(bad)


def test_noise_free_ensemble_is_unitary_fringe():
    bz = 5.5e-3
    times = np.linspace(0, 300e-6, 31)
    res = D.ensemble_evolution(DOWN_X, [0, 0, bz], D.NoiseModel(), times, 3, probes=[DOWN_X])
    omega = 2 * np.pi * D.splitting_frequency(bz)
    assert np.allclose(res.means[0], 0.5 * (1 + np.cos(omega * times)), atol=1e-10)


def test_gaussian_dephasing_envelope():
    sigma_b = 1e-3
    model = D.NoiseModel(lightshift_sigma_z=sigma_b)
    times = np.linspace(0, 300e-6, 13)
    res = D.ensemble_evolution(DOWN_X, [0, 0, 0], model, times, 10_000, seed=11,
                               probes=[DOWN_X])
    # splitting 2|gf| mu_B B/hbar is Gaussian with this angular sigma
    sigma_w = 2 * 0.5 * D.MU_B_OVER_HBAR * sigma_b
    oracle = 0.5 * (1 + np.exp(-0.5 * (sigma_w * times) ** 2))
    err = res.sems[0]
    assert np.all(np.abs(res.means[0] - oracle)[1:] <= 3 * err[1:])
    assert res.means[0][0] == pytest.approx(1, abs=1e-12)


def test_ensemble_matrices_are_states():
    model = D.replication_noise()
    times = np.linspace(0, 400e-6, 9)
    rhos = D.ensemble_dephasing(DOWN_X, [0, 0, 5.5e-3], model, times, 500, seed=2)
    for rho in rhos:
        assert abs(np.trace(rho) - 1) < 1e-9
        assert np.linalg.eigvalsh(rho).min() >= -1e-9
        assert np.allclose(rho, rho.conj().T, atol=1e-12)


def test_transverse_field_leaks_to_m0():
    times = np.linspace(0, 100e-6, 5)
    model = D.NoiseModel(static_residual_field=(2e-3, 0, 0))
    rhos = D.ensemble_dephasing(S.atom_basis_state("z", "up"), [0, 0, 0], model, times, 1)
    assert all(rho[2, 2].real > 0 for rho in rhos[1:])


def test_x_field_spares_x_states_but_not_y():
    # |down>_x is the m_x = 0 state of F_x, so an x field leaves it alone
    times = np.linspace(0, 100e-6, 5)
    h = D.zeeman_hamiltonian([4e-3, 0, 0])
    for t in times:
        assert S.overlap2(D.evolve_state(DOWN_X, h, t), DOWN_X) == pytest.approx(1, abs=1e-12)
    down_y = S.atom_basis_state("y", "down")
    assert S.overlap2(D.evolve_state(down_y, h, 50e-6), down_y) < 0.99


def test_ensemble_seed_determinism_across_workers():
    model = D.replication_noise()
    times = np.linspace(0, 200e-6, 5)
    kw = dict(seed=5, probes=[DOWN_X])
    a = D.ensemble_evolution(DOWN_X, [0, 0, 5.5e-3], model, times, 2500, workers=1, **kw)
    b = D.ensemble_evolution(DOWN_X, [0, 0, 5.5e-3], model, times, 2500, workers=2, **kw)
    assert a.rhos.tobytes() == b.rhos.tobytes()
    assert a.means.tobytes() == b.means.tobytes()


def test_density_matrix_initial_state():
    times = np.linspace(0, 1e-4, 3)
    res = D.ensemble_evolution(S.QUBIT_MIXED, [0, 0, 5.5e-3], D.NoiseModel(), times, 2)
    for rho in res.rhos:
        assert np.allclose(rho, S.QUBIT_MIXED, atol=1e-12)
