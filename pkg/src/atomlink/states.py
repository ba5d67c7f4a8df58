"""State algebra for the photon (2-level) and atomic F=1 (3-level) systems.

Basis ordering is fixed everywhere in the package:

* photon: ``(|sigma+>, |sigma->)``
* atom:   ``(|1,+1>, |1,-1>, |1,0>)``
* joint:  photon (x) atom, i.e. index ``3 * photon + atom``

States are plain complex numpy arrays; density matrices are 3x3 complex arrays.
"""

from __future__ import annotations

import numpy as np

SQRT2 = np.sqrt(2.0)

# index helpers for the atomic basis
UP, DOWN, ZERO = 0, 1, 2
SIGMA_PLUS, SIGMA_MINUS = 0, 1

PHOTON_DIM = 2
ATOM_DIM = 3

NORM_TOL = 1e-12
DEGENERATE_PROB = 1e-15


class DegenerateProjectionError(ValueError):
    """Raised when a projection has (numerically) zero probability."""


class InvalidDensityMatrixError(ValueError):
    """Raised when a matrix cannot be a density matrix."""


def normalize(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return vec / norm


def ket(*amplitudes) -> np.ndarray:
    return normalize(np.array(amplitudes, dtype=complex))


def dm(state) -> np.ndarray:
    """Projector |psi><psi|."""
    state = np.asarray(state, dtype=complex)
    return np.outer(state, state.conj())


def overlap2(a, b) -> float:
    """Squared overlap |<a|b>|^2, insensitive to global phase."""
    return float(abs(np.vdot(a, b)) ** 2)


def make_entangled_state() -> np.ndarray:
    """1/sqrt2 (|sigma+>|1,-1> + |sigma->|1,+1>) as a 6-vector."""
    psi = np.zeros(PHOTON_DIM * ATOM_DIM, dtype=complex)
    psi[3 * SIGMA_PLUS + DOWN] = 1 / SQRT2
    psi[3 * SIGMA_MINUS + UP] = 1 / SQRT2
    return psi


def product_state(photon, atom) -> np.ndarray:
    return np.kron(np.asarray(photon, dtype=complex), np.asarray(atom, dtype=complex))


def atom_basis_state(basis: str, sign: str) -> np.ndarray:
    """Eigenstate of the Pauli operator ``basis`` inside the {|1,+1>, |1,-1>} qubit.

    ``|up>_z = |1,+1>``, ``|down>_x = (|up>_z - |down>_z)/sqrt2`` and
    ``|down>_y = (|up>_z - i|down>_z)/sqrt2``; the ``up`` partners carry the
    opposite relative sign.
    """
    if sign not in ("up", "down"):
        raise ValueError(f"sign must be 'up' or 'down', got {sign!r}")
    s = 1.0 if sign == "up" else -1.0
    if basis == "z":
        out = np.zeros(ATOM_DIM, dtype=complex)
        out[UP if sign == "up" else DOWN] = 1.0
        return out
    if basis == "x":
        return np.array([1, s, 0], dtype=complex) / SQRT2
    if basis == "y":
        return np.array([1, s * 1j, 0], dtype=complex) / SQRT2
    raise ValueError(f"basis must be one of x, y, z; got {basis!r}")


def photon_analysis_pair(beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Analyzer states 1/sqrt2 (|sigma+> +- exp(2i beta) |sigma->).

    The first element is the ``+`` branch, the second the ``-`` branch. For
    beta = 0 this is (|H>, |V>).
    """
    phase = np.exp(2j * beta)
    plus = np.array([1, phase], dtype=complex) / SQRT2
    minus = np.array([1, -phase], dtype=complex) / SQRT2
    return plus, minus


def _as_joint_matrix(joint) -> np.ndarray:
    joint = np.asarray(joint, dtype=complex)
    if joint.shape != (PHOTON_DIM * ATOM_DIM,):
        raise ValueError(f"joint state must have shape (6,), got {joint.shape}")
    return joint.reshape(PHOTON_DIM, ATOM_DIM)


def project_photon(joint, analyzer) -> tuple[float, np.ndarray]:
    """Project the photon of ``joint`` onto ``analyzer``.

    Returns the outcome probability and the renormalized atomic state left
    behind. Raises :class:`DegenerateProjectionError` if the probability is
    below 1e-15.
    """
    residual = np.asarray(analyzer, dtype=complex).conj() @ _as_joint_matrix(joint)
    prob = float(np.vdot(residual, residual).real)
    if prob < DEGENERATE_PROB:
        raise DegenerateProjectionError(
            f"photon projection has probability {prob:.3g}; collapsed state undefined")
    return prob, residual / np.sqrt(prob)


def reduced_atom(joint) -> np.ndarray:
    """Partial trace over the photon."""
    m = _as_joint_matrix(joint)
    return m.T @ m.conj()


def reduced_photon(joint) -> np.ndarray:
    m = _as_joint_matrix(joint)
    return m @ m.conj().T


def apply_photon_unitary(joint, jones_sigma) -> np.ndarray:
    """Act with a 2x2 matrix (sigma+/- basis) on the photon half of ``joint``."""
    m = _as_joint_matrix(joint)
    return (np.asarray(jones_sigma, dtype=complex) @ m).reshape(-1)


def check_density_matrix(rho, tol: float = 1e-10) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (ATOM_DIM, ATOM_DIM):
        raise InvalidDensityMatrixError(f"expected a 3x3 matrix, got shape {rho.shape}")
    if not np.allclose(rho, rho.conj().T, atol=tol, rtol=0):
        raise InvalidDensityMatrixError("matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise InvalidDensityMatrixError(f"trace is {np.trace(rho).real:.12g}, not 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise InvalidDensityMatrixError("matrix has a negative eigenvalue")
    return rho


def fidelity(rho, target) -> float:
    """<target|rho|target>."""
    target = np.asarray(target, dtype=complex)
    return float(np.vdot(target, np.asarray(rho, dtype=complex) @ target).real)


def purity_parameter(rho) -> float:
    """r = sqrt(1/2 (3 tr(rho^2) - 1)) for a spin-1 density matrix.

    r = 1 for a pure state and 0 for the maximally mixed state. Raises
    :class:`InvalidDensityMatrixError` when the radicand is clearly negative.
    """
    rho = np.asarray(rho, dtype=complex)
    tr2 = float(np.real(np.trace(rho @ rho)))
    radicand = 0.5 * (3.0 * tr2 - 1.0)
    if radicand < -1e-10:
        raise InvalidDensityMatrixError(
            f"tr(rho^2) = {tr2:.6g} < 1/3; not a valid spin-1 density matrix")
    return float(np.sqrt(max(radicand, 0.0)))


def mixed_with_white_noise(state, r: float) -> np.ndarray:
    """r |chi><chi| + (1 - r) I/3."""
    return r * dm(state) + (1.0 - r) * np.eye(ATOM_DIM) / ATOM_DIM


QUBIT_MIXED = np.diag([0.5, 0.5, 0.0]).astype(complex)
