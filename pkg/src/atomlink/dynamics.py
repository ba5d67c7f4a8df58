"""Spin-1 Larmor dynamics of the F=1 ground level under quasi-static noise.

Fields are in gauss, times in seconds, Hamiltonians in rad/s (hbar = 1).
Each Monte-Carlo trajectory sees one static field drawn from the
:class:`NoiseModel`, so the propagator is obtained exactly from a 3x3
eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import seeding
from .states import ATOM_DIM

# Bohr magneton over Planck constant, Hz/G
MU_B_OVER_H = 1.399624e6
MU_B_OVER_HBAR = 2 * np.pi * MU_B_OVER_H
# Lande g-factor of the 87Rb 5S1/2 F=1 level
GF_RB87_F1 = -0.5

_S2 = 1 / np.sqrt(2.0)
# spin-1 matrices in the (|+1>, |-1>, |0>) ordering
FX = np.array([[0, 0, _S2], [0, 0, _S2], [_S2, _S2, 0]], dtype=complex)
FY = np.array([[0, 0, -1j * _S2], [0, 0, 1j * _S2], [1j * _S2, -1j * _S2, 0]], dtype=complex)
FZ = np.diag([1.0, -1.0, 0.0]).astype(complex)
SPIN_MATRICES = np.stack([FX, FY, FZ])


@dataclass(frozen=True)
class NoiseModel:
    """Quasi-static magnetic noise seen by the atom, in gauss.

    ``trap_circular_fraction`` and ``atom_temperature_uK`` document where
    ``lightshift_sigma_z`` comes from; they do not enter the dynamics.
    """

    static_residual_field: tuple[float, float, float] = (0.0, 0.0, 0.0)
    shot_to_shot_sigma: tuple[float, float, float] = (0.0, 0.0, 0.0)
    lightshift_sigma_z: float = 0.0
    trap_circular_fraction: float = 0.0
    atom_temperature_uK: float = 0.0

    def __post_init__(self):
        if len(self.static_residual_field) != 3 or len(self.shot_to_shot_sigma) != 3:
            raise ValueError("fields and sigmas are 3-vectors")
        if min(self.shot_to_shot_sigma) < 0 or self.lightshift_sigma_z < 0:
            raise ValueError("noise standard deviations must be >= 0")
        if not 0 <= self.trap_circular_fraction <= 1:
            raise ValueError("trap_circular_fraction must lie in [0, 1]")
        if not np.all(np.isfinite(self.static_residual_field)):
            raise ValueError("residual field must be finite")


# Calibrated once against the replication scenarios (5.5 mG precession
# envelope, zero-field purity decay of superpositions and of |1,+-1>); see
# README "Calibration". Transverse shot-to-shot noise stays well inside the
# |B| < 2 mG stabilisation bound; the z noise is dominated by the
# differential light shift of a 1 % circular trap component at 150 uK.
REPLICATION_SHOT_TO_SHOT_SIGMA = (0.25e-3, 0.25e-3, 0.25e-3)
REPLICATION_LIGHTSHIFT_SIGMA_Z = 1.1e-3
REFERENCE_CIRCULAR_FRACTION = 0.01
REFERENCE_TEMPERATURE_UK = 150.0


def replication_noise() -> NoiseModel:
    return NoiseModel(
        static_residual_field=(0.0, 0.0, 0.0),
        shot_to_shot_sigma=REPLICATION_SHOT_TO_SHOT_SIGMA,
        lightshift_sigma_z=REPLICATION_LIGHTSHIFT_SIGMA_Z,
        trap_circular_fraction=REFERENCE_CIRCULAR_FRACTION,
        atom_temperature_uK=REFERENCE_TEMPERATURE_UK,
    )


def scaled_lightshift_sigma(circular_fraction: float, temperature_uK: float) -> float:
    """Light-shift noise scaled linearly in circular fraction and temperature.

    The vector light shift is proportional to the circular fraction and its
    spread over the thermal position distribution to kT; the absolute value
    is pinned to the calibrated reference point (1 %, 150 uK).
    """
    return (REPLICATION_LIGHTSHIFT_SIGMA_Z
            * circular_fraction / REFERENCE_CIRCULAR_FRACTION
            * temperature_uK / REFERENCE_TEMPERATURE_UK)


def zeeman_hamiltonian(field, gf: float = GF_RB87_F1) -> np.ndarray:
    """Linear Zeeman Hamiltonian gf mu_B B.F / hbar in rad/s.

    ``field`` may also be an ``(n, 3)`` array, giving ``(n, 3, 3)``.
    """
    b = np.asarray(field, dtype=float)
    return gf * MU_B_OVER_HBAR * np.tensordot(b, SPIN_MATRICES, axes=([-1], [0]))


def splitting_frequency(bz: float, gf: float = GF_RB87_F1) -> float:
    """|1,+1> - |1,-1> splitting in Hz for a field ``bz`` along z."""
    return abs(2 * gf * MU_B_OVER_H * bz)


def propagator(h, t) -> np.ndarray:
    """exp(-i H t) via eigendecomposition; broadcasts over stacked H."""
    w, v = np.linalg.eigh(h)
    phases = np.exp(-1j * w * t)
    return (v * phases[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def evolve_state(state, h, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("evolution time must be >= 0")
    return propagator(np.asarray(h, dtype=complex), t) @ np.asarray(state, dtype=complex)


def evolve_density(rho, h, t: float) -> np.ndarray:
    u = propagator(np.asarray(h, dtype=complex), t)
    return u @ rho @ u.conj().T


def sample_trajectory_field(model: NoiseModel, guiding, rng: np.random.Generator) -> np.ndarray:
    """One static field for a trajectory: guiding + residual + noise."""
    draws = rng.standard_normal(4)
    return _field_from_normals(model, np.asarray(guiding, dtype=float), draws[None, :])[0]


def _field_from_normals(model: NoiseModel, guiding: np.ndarray, normals: np.ndarray) -> np.ndarray:
    b = guiding + np.asarray(model.static_residual_field, dtype=float)
    b = b + normals[:, :3] * np.asarray(model.shot_to_shot_sigma, dtype=float)
    b = b.copy()
    b[:, 2] += normals[:, 3] * model.lightshift_sigma_z
    return b


def _draw_fields(model, guiding, seed, lo, hi) -> np.ndarray:
    normals = np.empty((hi - lo, 4))
    for k, i in enumerate(range(lo, hi)):
        normals[k] = seeding.trial_rng(seed, i, seeding.DOMAIN_TRAJECTORY).standard_normal(4)
    return _field_from_normals(model, np.asarray(guiding, dtype=float), normals)


def check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a non-empty 1-d sequence")
    if times[0] != 0.0:
        raise ValueError("trajectory times must start at 0")
    if np.any(np.diff(times) <= 0):
        raise ValueError("trajectory times must be strictly increasing")
    return times


@dataclass
class EnsembleResult:
    """Ensemble-averaged density matrices plus per-observable statistics.

    ``means[k, j]`` and ``sems[k, j]`` are the mean and standard error of
    ``<phi_k|rho_i(t_j)|phi_k>`` over trajectories ``i``.
    """

    times: np.ndarray
    rhos: np.ndarray
    means: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    sems: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    n_traj: int = 0


def _ensemble_block(lo, hi, *, rho0, guiding, model, times, seed, gf, probes):
    fields = _draw_fields(model, guiding, seed, lo, hi)
    w, v = np.linalg.eigh(zeeman_hamiltonian(fields, gf))
    vd = np.swapaxes(v.conj(), -1, -2)
    # rho in each trajectory's eigenbasis; evolution is then a phase pattern
    rho_eig = vd @ rho0 @ v
    dw = w[:, :, None] - w[:, None, :]
    rho_sum = np.empty((len(times), ATOM_DIM, ATOM_DIM), dtype=complex)
    p_sum = np.empty((len(probes), len(times)))
    p2_sum = np.empty((len(probes), len(times)))
    for j, t in enumerate(times):
        rho_t = v @ (rho_eig * np.exp(-1j * dw * t)) @ vd
        rho_sum[j] = rho_t.sum(axis=0)
        for k, ph in enumerate(probes):
            p = np.einsum("i,nij,j->n", ph.conj(), rho_t, ph).real
            p_sum[k, j] = p.sum()
            p2_sum[k, j] = (p * p).sum()
    return rho_sum, p_sum, p2_sum


def ensemble_evolution(initial, guiding, model: NoiseModel, times, n_traj: int, *,
                       seed: int = 0, gf: float = GF_RB87_F1, probes=(),
                       workers: int = 1) -> EnsembleResult:
    """Average U_i(t) rho0 U_i(t)^dagger over ``n_traj`` sampled static fields.

    ``initial`` is an atomic state vector or a 3x3 density matrix. ``probes``
    are states whose populations get trajectory-level standard errors.
    Results are bit-identical for a given seed whatever ``workers`` is.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    times = check_times(times)
    initial = np.asarray(initial, dtype=complex)
    rho0 = np.outer(initial, initial.conj()) if initial.ndim == 1 else initial
    probes = [np.asarray(p, dtype=complex) for p in probes]
    task = partial(_ensemble_block, rho0=rho0, guiding=np.asarray(guiding, dtype=float),
                   model=model, times=times, seed=seed, gf=gf, probes=probes)
    parts = seeding.map_blocks(task, n_traj, workers)
    rho_sum = seeding.ordered_sum([p[0] for p in parts])
    p_sum = seeding.ordered_sum([p[1] for p in parts])
    p2_sum = seeding.ordered_sum([p[2] for p in parts])
    rhos = rho_sum / n_traj
    rhos = 0.5 * (rhos + np.swapaxes(rhos.conj(), -1, -2))
    means = p_sum / n_traj
    var = np.maximum(p2_sum / n_traj - means**2, 0.0)
    sems = np.sqrt(var / max(n_traj - 1, 1))
    return EnsembleResult(times=times, rhos=rhos, means=means, sems=sems, n_traj=n_traj)


def ensemble_dephasing(initial, guiding, model: NoiseModel, times, n_traj: int, *,
                       seed: int = 0, gf: float = GF_RB87_F1, workers: int = 1) -> list[np.ndarray]:
    """Ensemble-averaged density matrix at each time."""
    res = ensemble_evolution(initial, guiding, model, times, n_traj, seed=seed, gf=gf,
                             workers=workers)
    return list(res.rhos)
