"""Partial spin-1 tomography with the worst-case (no |1,0> coherence) bound.

Only the {|1,+1>, |1,-1>} qubit is analysed directly; the |1,0> population
is whatever is missing from it, and coherences to |1,0> are set to zero.
The purity parameter of the result is a lower bound on that of the true
state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .measurement import ErrorBudget
from .states import ATOM_DIM, atom_basis_state, purity_parameter

BASES = ("x", "y", "z")
PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
INCONSISTENCY_SIGMAS = 5.0
EXACT_TOL = 1e-9


class ReconstructionError(ValueError):
    """Measured populations are inconsistent beyond statistical tolerance."""


@dataclass
class TomographyInput:
    """Per-basis (P_up, P_down) and, for sampled data, (n_up, n_down) shots."""

    populations: dict[str, tuple[float, float]]
    shots: dict[str, tuple[int, int]] | None = None

    def __post_init__(self):
        missing = set(BASES) - set(self.populations)
        if missing:
            raise ValueError(f"missing bases: {sorted(missing)}")

    def variance(self, basis: str) -> tuple[float, float]:
        if self.shots is None:
            return 0.0, 0.0
        out = []
        for p, n in zip(self.populations[basis], self.shots[basis]):
            # keep a non-zero variance at p = 0 or 1
            q = (p * n + 0.5) / (n + 1)
            out.append(q * (1 - q) / n)
        return out[0], out[1]


def readout_probabilities(rho, basis: str, budget: ErrorBudget | None = None) -> tuple[float, float]:
    """Probability to register 'detected' for the up and down analysis states."""
    f = 0.0 if budget is None else budget.atomic_readout_flip
    out = []
    for sign in ("up", "down"):
        phi = atom_basis_state(basis, sign)
        p = float(np.vdot(phi, rho @ phi).real)
        out.append(f + (1 - 2 * f) * min(max(p, 0.0), 1.0))
    return out[0], out[1]


def measure_populations(rho, basis: str, budget: ErrorBudget, n_shots: int,
                        rng: np.random.Generator) -> tuple[float, float, tuple[int, int, int]]:
    """Sample both analysis states of ``basis`` with ``n_shots`` runs each.

    Each run analyses one qubit superposition, so the two populations are
    independent binomial samples; the readout flip is applied per run.
    """
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    p_up, p_down = readout_probabilities(np.asarray(rho, dtype=complex), basis, budget)
    k_up = int(rng.binomial(n_shots, p_up))
    k_down = int(rng.binomial(n_shots, p_down))
    return k_up / n_shots, k_down / n_shots, (k_up, k_down, n_shots)


def exact_input(rho, budget: ErrorBudget | None = None) -> TomographyInput:
    return TomographyInput({b: readout_probabilities(np.asarray(rho, dtype=complex), b, budget)
                            for b in BASES})


def sampled_input(rho, budget: ErrorBudget, n_shots: int, rng: np.random.Generator) -> TomographyInput:
    pops, shots = {}, {}
    for b in BASES:
        p_up, p_down, _ = measure_populations(rho, b, budget, n_shots, rng)
        pops[b] = (p_up, p_down)
        shots[b] = (n_shots, n_shots)
    return TomographyInput(pops, shots)


def reconstruct_density_matrix(data: TomographyInput) -> tuple[np.ndarray, float]:
    """Linear worst-case reconstruction; returns (rho, r_lower)."""
    p0_each, var_each, s, var_s = [], [], [], []
    for b in BASES:
        p_up, p_down = data.populations[b]
        v_up, v_down = data.variance(b)
        p0_each.append(1.0 - p_up - p_down)
        var_each.append(v_up + v_down)
        s.append(p_up - p_down)
        var_s.append(v_up + v_down)
    p0_each = np.array(p0_each)
    sig_each = np.sqrt(var_each)
    p0 = float(p0_each.mean())
    sig_p0 = float(np.sqrt(np.sum(var_each)) / len(BASES))

    tol = INCONSISTENCY_SIGMAS * sig_each + EXACT_TOL
    bad = np.abs(p0_each - p0) > tol
    if np.any(bad):
        b = BASES[int(np.argmax(bad))]
        raise ReconstructionError(
            f"missing population in basis {b} ({p0_each[BASES.index(b)]:.4g}) disagrees "
            f"with the mean {p0:.4g} beyond {INCONSISTENCY_SIGMAS:g} sigma")
    p0_tol = INCONSISTENCY_SIGMAS * sig_p0 + EXACT_TOL
    if p0 < -p0_tol or p0 > 1 + p0_tol:
        raise ReconstructionError(f"missing population {p0:.4g} outside [0, 1]")
    p0 = min(max(p0, 0.0), 1.0)

    s = np.array(s)
    length = float(np.linalg.norm(s))
    allowed = 1.0 - p0
    if length > allowed:
        sig_len = float(np.sqrt(np.sum(np.array(var_s) * s**2)) / length) if length else 0.0
        excess_tol = INCONSISTENCY_SIGMAS * np.hypot(sig_len, sig_p0) + EXACT_TOL
        if length - allowed > excess_tol:
            raise ReconstructionError(
                f"Bloch vector length {length:.4g} exceeds qubit population {allowed:.4g}")
        s = s * (allowed / length)

    block = 0.5 * ((1.0 - p0) * np.eye(2) + sum(sk * PAULI[b] for sk, b in zip(s, BASES)))
    rho = np.zeros((ATOM_DIM, ATOM_DIM), dtype=complex)
    rho[:2, :2] = block
    rho[2, 2] = p0
    return rho, purity_parameter(rho)


def lower_bound_purity(rho, budget: ErrorBudget | None = None) -> float:
    """r_lower for noiseless populations of ``rho`` (readout flips included)."""
    return reconstruct_density_matrix(exact_input(rho, budget))[1]


# --- decay analysis -------------------------------------------------------

@dataclass
class DecayFit:
    """1/e time of a purity curve.

    ``kind`` is ``"observed"`` when the decay reaches 1/e of its amplitude
    inside the window, ``"extrapolated"`` when ``t_1e`` is a lower bound
    obtained by extrapolating a floor-free Gaussian, and ``"no-decay"``.
    """

    t_1e: float
    kind: str
    r0: float
    floor: float
    t_1e_err: float = float("nan")
    curve: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _gauss_floor(t, r0, floor, tau):
    return floor + (r0 - floor) * np.exp(-(t / tau) ** 2)


def _gauss(t, r0, tau):
    return r0 * np.exp(-(t / tau) ** 2)


def purity_decay_analysis(times, r, sigma=None) -> DecayFit:
    """Fit a Gaussian decay to r(t) and report its 1/e time.

    The decaying part is fitted as ``floor + (r0 - floor) exp(-(t/T)^2)``; a
    superposition state dephasing inside the qubit subspace levels off at a
    finite floor rather than at zero, so T is the 1/e time of the decaying
    part. If T lies beyond the sampled window the floor is not identifiable;
    the floor-free Gaussian ``r0 exp(-(t/T)^2)`` is then extrapolated, which
    bounds the 1/e crossing from below.
    """
    t = np.asarray(times, dtype=float)
    r = np.asarray(r, dtype=float)
    if len(t) < 5 or len(t) != len(r):
        raise ValueError("need at least 5 (time, r) points")
    sig = None if sigma is None else np.maximum(np.asarray(sigma, dtype=float), 1e-12)
    t_max = float(t.max())
    noise = 0.0 if sig is None else float(np.median(sig))
    drop = r[0] - r[-1]
    if drop <= max(3.0 * noise, 1e-9) or np.all(np.diff(r) >= -1e-12):
        return DecayFit(np.inf, "no-decay", float(r[0]), float(r.mean()), curve=r.copy())

    order = np.argsort(np.abs(r - (r[-1] + drop / np.e)))
    tau0 = max(float(t[order[0]]), t_max / 10)
    try:
        p, cov = curve_fit(_gauss_floor, t, r, p0=[r[0], r.min() * 0.9, tau0], sigma=sig,
                           absolute_sigma=sig is not None,
                           bounds=([0, 0, t_max * 1e-3], [1.5, 1.5, t_max * 1e3]), maxfev=20000)
        tau, tau_err = float(p[2]), float(np.sqrt(max(cov[2, 2], 0.0)))
        if tau <= t_max and p[1] < p[0] and np.isfinite(tau_err) and tau_err < 0.5 * tau:
            return DecayFit(tau, "observed", float(p[0]), float(p[1]), tau_err,
                            _gauss_floor(t, *p))
    except RuntimeError:
        pass

    p, cov = curve_fit(_gauss, t, r, p0=[r[0], max(tau0, t_max)], sigma=sig,
                       absolute_sigma=sig is not None,
                       bounds=([0, t_max * 1e-3], [1.5, np.inf]), maxfev=20000)
    tau, tau_err = float(p[1]), float(np.sqrt(max(cov[1, 1], 0.0)))
    return DecayFit(tau, "extrapolated", float(p[0]), 0.0, tau_err, _gauss(t, *p))
