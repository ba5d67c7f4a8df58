"""Worst-case spin-1 reconstruction and purity-decay analysis."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atomlink import states as S
from atomlink import tomography as T
from atomlink.measurement import ErrorBudget

IDEAL = ErrorBudget.ideal()


def random_density(rng, dim):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def qubit_embedded(rng):
    rho = np.zeros((3, 3), complex)
    rho[:2, :2] = random_density(rng, 2)
    return rho


def purity_oracle(rho):
    return np.sqrt(max(0.5 * (3 * np.sum(np.abs(rho) ** 2) - 1), 0))


# --- populations ------------------------------------------------------------

def test_populations_of_z_eigenstate():
    rng = np.random.default_rng(0)
    up = S.dm(S.atom_basis_state("z", "up"))
    p_up, p_down, counts = T.measure_populations(up, "z", IDEAL, 1000, rng)
    assert (p_up, p_down) == (1.0, 0.0)
    assert counts == (1000, 0, 1000)


def test_populations_of_maximally_mixed():
    for b in T.BASES:
        p_up, p_down = T.readout_probabilities(np.eye(3) / 3, b)
        assert p_up == pytest.approx(1 / 3) and p_down == pytest.approx(1 / 3)
    rho, r = T.reconstruct_density_matrix(T.exact_input(np.eye(3) / 3))
    assert rho[2, 2].real == pytest.approx(1 / 3, abs=1e-12)
    assert np.allclose(rho, np.eye(3) / 3, atol=1e-12)
    assert r == pytest.approx(0, abs=1e-6)


def test_readout_flip_on_deterministic_outcome():
    rng = np.random.default_rng(1)
    rho = S.dm(S.atom_basis_state("x", "down"))
    n = 100_000
    _, p_down, _ = T.measure_populations(rho, "x", ErrorBudget(atomic_readout_flip=0.07), n, rng)
    assert p_down == pytest.approx(0.93, abs=3 * np.sqrt(0.93 * 0.07 / n))


def test_populations_need_shots():
    with pytest.raises(ValueError):
        T.measure_populations(np.eye(3) / 3, "x", IDEAL, 0, np.random.default_rng(0))


# --- reconstruction -----------------------------------------------------------

def test_round_trip_pure_down_x():
    phi = S.atom_basis_state("x", "down")
    data = T.exact_input(S.dm(phi))
    assert data.populations["x"] == pytest.approx((0, 1), abs=1e-12)
    assert data.populations["y"] == pytest.approx((0.5, 0.5), abs=1e-12)
    rho, r = T.reconstruct_density_matrix(data)
    assert np.allclose(rho, S.dm(phi), atol=1e-12)
    assert r == pytest.approx(1, abs=1e-9)


def test_round_trip_100_qubit_states():
    rng = np.random.default_rng(42)
    for _ in range(100):
        rho = qubit_embedded(rng)
        rec, r = T.reconstruct_density_matrix(T.exact_input(rho))
        assert np.linalg.norm(rec - rho) < 1e-9
        assert r == S.purity_parameter(rec)
        assert r == pytest.approx(purity_oracle(rho), abs=1e-9)


def test_lower_bound_100_full_states():
    rng = np.random.default_rng(43)
    for _ in range(100):
        rho = random_density(rng, 3)
        assert T.lower_bound_purity(rho) <= purity_oracle(rho) + 1e-9


def test_m0_coherence_gives_strict_lower_bound():
    chi = S.normalize([1, 0, 1])
    assert T.lower_bound_purity(S.dm(chi)) < S.purity_parameter(S.dm(chi)) - 0.1


def test_positivity_repair_rescales_bloch_vector():
    # slightly over-long Bloch vector from sampling noise
    pops = {"x": (0.001, 0.999), "y": (0.5, 0.5), "z": (0.5, 0.5)}
    shots = {b: (1000, 1000) for b in T.BASES}
    rho, r = T.reconstruct_density_matrix(T.TomographyInput(pops, shots))
    assert np.linalg.eigvalsh(rho).min() >= -1e-12
    assert r <= 1 + 1e-12


def test_inconsistent_missing_population_raises():
    pops = {"x": (0.5, 0.5), "y": (0.3, 0.3), "z": (0.5, 0.5)}
    shots = {b: (5000, 5000) for b in T.BASES}
    with pytest.raises(T.ReconstructionError, match="basis"):
        T.reconstruct_density_matrix(T.TomographyInput(pops, shots))


def test_inconsistent_exact_input_raises():
    pops = {"x": (0.5, 0.5), "y": (0.5, 0.5), "z": (0.45, 0.5)}
    with pytest.raises(T.ReconstructionError):
        T.reconstruct_density_matrix(T.TomographyInput(pops))


def test_missing_basis_rejected():
    with pytest.raises(ValueError):
        T.TomographyInput({"x": (0.5, 0.5)})


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_sampled_reconstruction_is_a_state(seed):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, 3)
    try:
        rec, r = T.reconstruct_density_matrix(T.sampled_input(rho, ErrorBudget(), 2000, rng))
    except T.ReconstructionError:
        return
    S.check_density_matrix(rec, tol=1e-9)
    assert 0 <= r <= 1 + 1e-12


def test_readout_flip_floor_on_eigenstate():
    """r_lower of |1,+1> read out with a symmetric flip f, worked out by hand."""
    f = 0.07
    r = T.lower_bound_purity(S.dm(S.atom_basis_state("z", "up")), ErrorBudget(atomic_readout_flip=f))
    # every basis loses nothing to |1,0>: P_up + P_down = 1; s_z = 1 - 2f, s_x = s_y = 0
    s = 1 - 2 * f
    tr2 = 0.5 * (1 + s**2)
    assert r == pytest.approx(np.sqrt(0.5 * (3 * tr2 - 1)), abs=1e-12)


# --- decay analysis -----------------------------------------------------------

def test_synthetic_gaussian_decay():
    t = np.linspace(0, 250e-6, 6)
    fit = T.purity_decay_analysis(t, np.exp(-(t / 100e-6) ** 2))
    assert fit.kind == "observed"
    assert fit.t_1e == pytest.approx(100e-6, rel=0.02)


def test_decay_with_floor():
    t = np.linspace(0, 300e-6, 8)
    r = 0.4 + 0.55 * np.exp(-(t / 110e-6) ** 2)
    fit = T.purity_decay_analysis(t, r)
    assert fit.kind == "observed"
    assert fit.t_1e == pytest.approx(110e-6, rel=1e-3)
    assert fit.floor == pytest.approx(0.4, abs=1e-3)


def test_slow_decay_is_extrapolated_lower_bound():
    t = np.linspace(0, 300e-6, 8)
    r = 0.95 * np.exp(-(t / 800e-6) ** 2)
    fit = T.purity_decay_analysis(t, r)
    assert fit.kind == "extrapolated"
    assert fit.t_1e == pytest.approx(800e-6, rel=0.01)


def test_flat_data_is_no_decay():
    t = np.linspace(0, 300e-6, 8)
    fit = T.purity_decay_analysis(t, np.full(8, 0.9), sigma=np.full(8, 0.01))
    assert fit.kind == "no-decay" and np.isinf(fit.t_1e)
    assert fit.floor == pytest.approx(0.9)


def test_decay_needs_points():
    with pytest.raises(ValueError):
        T.purity_decay_analysis([0, 1, 2, 3], [1, 0.9, 0.8, 0.7])
