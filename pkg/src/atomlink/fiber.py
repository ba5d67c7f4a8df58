"""Polarisation channel: drifting fibre, wave-plate controller, compensation.

Jones matrices act on (H, V) amplitudes. Stokes vectors are
``(S1, S2, S3) = (<sigma_z>, <sigma_x>, <sigma_y>)`` in that basis, so H is
``+S1``, the diagonal D is ``+S2`` and the circular states are ``+-S3``. The
photonic qubit uses ``sigma+- = (H +- iV)/sqrt2``.

The channel seen by a photon is ``controller @ link``: fibre first, then the
compensating controller.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import polar
from scipy.optimize import brentq
from scipy.spatial.transform import Rotation

from .states import apply_photon_unitary

PAULI_STOKES = np.array([
    [[1, 0], [0, -1]],
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
], dtype=complex)

# columns: sigma+ and sigma- in (H, V) amplitudes
SIGMA_TO_HV = np.array([[1, 1], [1j, -1j]], dtype=complex) / np.sqrt(2)

STOKES_H = np.array([1.0, 0.0, 0.0])
STOKES_V = np.array([-1.0, 0.0, 0.0])
STOKES_P45 = np.array([0.0, 1.0, 0.0])
REFERENCES = (STOKES_V, STOKES_P45)

DEFAULT_THRESHOLD = 0.999
DEFAULT_CYCLE_TIME = 0.7  # s per measure/correct step (shutter limited)
MIN_REFERENCE_ANGLE = np.deg2rad(5.0)
RENORMALIZE_EVERY = 1000

# Replication settings for the compensation loop. The controller corrects
# at most REPLICATION_MAX_STEP of Poincare rotation per step, which makes a
# random link converge after ~10 steps; the drift rate gives a 1 % mean
# loss of correlation over a 10 min stabilisation interval.
REPLICATION_POLARIMETER_SIGMA = 0.005
REPLICATION_MAX_STEP = 0.35
REPLICATION_STABILIZATION_INTERVAL = 600.0


class IllConditionedMeasurement(UserWarning):
    """The two measured reference vectors are nearly parallel."""


def is_unitary(j, tol: float = 1e-10) -> bool:
    j = np.asarray(j, dtype=complex)
    return bool(np.allclose(j @ j.conj().T, np.eye(2), atol=tol, rtol=0))


def waveplate(angle: float, retardance: float) -> np.ndarray:
    """Ideal retarder with its fast axis at ``angle`` from H."""
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return rot @ np.diag([np.exp(-0.5j * retardance), np.exp(0.5j * retardance)]) @ rot.T


def quarter_wave(angle: float) -> np.ndarray:
    return waveplate(angle, np.pi / 2)


def half_wave(angle: float) -> np.ndarray:
    return waveplate(angle, np.pi)


def jones_to_poincare(j) -> np.ndarray:
    """SO(3) rotation induced on Stokes vectors by the Jones matrix ``j``."""
    j = np.asarray(j, dtype=complex)
    jd = j.conj().T
    return np.einsum("iab,bc,jcd,da->ij", PAULI_STOKES, j, PAULI_STOKES, jd).real / 2


def rotation_to_jones(rot) -> np.ndarray:
    """SU(2) element covering the rotation matrix ``rot``."""
    rotvec = Rotation.from_matrix(np.asarray(rot, dtype=float)).as_rotvec()
    return jones_from_rotvec(rotvec)


def jones_from_rotvec(rotvec) -> np.ndarray:
    rotvec = np.asarray(rotvec, dtype=float)
    angle = float(np.linalg.norm(rotvec))
    if angle == 0:
        return np.eye(2, dtype=complex)
    n = rotvec / angle
    gen = np.tensordot(n, PAULI_STOKES, axes=1)
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * gen


def stokes_from_jones(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.einsum("a,iab,b->i", v.conj(), PAULI_STOKES, v).real


def overlap(target, measured) -> float:
    """Poincare overlap (1 + s_target . s_measured) / 2 of unit vectors."""
    a = np.asarray(target, dtype=float)
    b = np.asarray(measured, dtype=float)
    return float((1 + a @ b / (np.linalg.norm(a) * np.linalg.norm(b))) / 2)


def photon_jones_sigma(j_hv) -> np.ndarray:
    """Express an (H, V) Jones matrix in the (sigma+, sigma-) basis."""
    return SIGMA_TO_HV.conj().T @ np.asarray(j_hv, dtype=complex) @ SIGMA_TO_HV


# --- controller -----------------------------------------------------------

@dataclass(frozen=True)
class ControllerSetting:
    """Orientations (rad) of the quarter-, half- and quarter-wave plates.

    The first plate is the one the light meets first.
    """

    retarder_angles: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        angles = tuple(float(np.mod(a, np.pi)) for a in self.retarder_angles)
        object.__setattr__(self, "retarder_angles", angles)


def controller_transform(setting: ControllerSetting) -> np.ndarray:
    a1, a2, a3 = setting.retarder_angles
    return quarter_wave(a3) @ half_wave(a2) @ quarter_wave(a1)


def _circ_dist(a, b) -> float:
    d = np.mod(np.asarray(a) - np.asarray(b) + np.pi / 2, np.pi) - np.pi / 2
    return float(np.max(np.abs(d)))


def decompose_controller(target, near: ControllerSetting | None = None) -> ControllerSetting:
    """Wave-plate angles whose QWP-HWP-QWP stack realises ``target``.

    ``target`` is a 2x2 Jones matrix or a 3x3 Poincare rotation. Rotating a
    plate by ``a`` turns its Poincare axis by ``2a`` about S3, and the
    stack reduces to ``Rz(2 a3) Ry(2 a1 + 2 a3 - 4 a2) Rz(-2 a1)``, a ZYZ
    Euler decomposition. Among the equivalent solutions the one closest to
    ``near`` is returned, which keeps successive settings continuous.
    """
    rot = np.asarray(target)
    if rot.shape == (2, 2):
        rot = jones_to_poincare(rot)
    ref = np.zeros(3) if near is None else np.array(near.retarder_angles)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        A, B, C = Rotation.from_matrix(rot).as_euler("ZYZ")

    candidates = []
    if abs(np.sin(B)) < 1e-7:
        # gimbal lock: only A + C (B = 0) or A - C (B = pi) is fixed; keep a1
        a1 = ref[0]
        C = -2 * a1
        if np.cos(B) > 0:
            total = np.arctan2(rot[1, 0], rot[0, 0])
            A = total - C
        else:
            flip = rot @ Rotation.from_euler("Y", np.pi).as_matrix().T
            A = np.arctan2(flip[1, 0], flip[0, 0]) + C
        sols = [(A, B, C)]
    else:
        sols = [(A, B, C), (A + np.pi, -B, C + np.pi)]
    for A_, B_, C_ in sols:
        a3, a1 = A_ / 2, -C_ / 2
        a2 = (A_ - C_ - B_) / 4
        for shift in (0.0, np.pi / 2):
            candidates.append(np.array([a1, a2 + shift, a3]))
    best = min(candidates, key=lambda c: _circ_dist(c, ref))
    return ControllerSetting(tuple(best))


# --- fibre link -----------------------------------------------------------

@dataclass(frozen=True)
class FiberLinkState:
    """Jones matrix of the fibre plus its drift and loss parameters.

    ``drift_rate`` is in rad of Poincare rotation per sqrt(s).
    """

    transform: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=complex))
    drift_rate: float = 0.0
    loss_transmittance: float = 1.0
    compositions: int = 0

    def __post_init__(self):
        if self.drift_rate < 0:
            raise ValueError("drift_rate must be >= 0")
        if not 0.0 <= self.loss_transmittance <= 1.0:
            raise ValueError("loss_transmittance must lie in [0, 1]")
        if not is_unitary(self.transform, 1e-8):
            raise ValueError("link transform must be unitary")


def random_link_transform(rng: np.random.Generator) -> np.ndarray:
    """Haar-random SU(2) element."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    return np.array([[q[0] + 1j * q[1], q[2] + 1j * q[3]],
                     [-q[2] + 1j * q[3], q[0] - 1j * q[1]]])


def _random_axis(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def drift_step(link: FiberLinkState, dt: float, rng: np.random.Generator) -> FiberLinkState:
    """Compose the link with a random rotation of angle |N(0, rate sqrt(dt))|."""
    return drift_steps(link, dt, 1, rng)


def drift_steps(link: FiberLinkState, dt: float, n: int, rng: np.random.Generator) -> FiberLinkState:
    """``n`` successive drift steps; draws the same numbers as ``n`` calls of drift_step.

    The Jones matrix is re-projected onto the unitaries (polar decomposition)
    every RENORMALIZE_EVERY compositions.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if n < 0:
        raise ValueError("n must be >= 0")
    if link.drift_rate == 0 or n == 0:
        return link
    # per step: three normals for the axis, then one for the angle
    g = rng.standard_normal((n, 4))
    axes = g[:, :3] / np.linalg.norm(g[:, :3], axis=1, keepdims=True)
    angles = np.abs(g[:, 3] * (link.drift_rate * np.sqrt(dt)))
    c = np.cos(angles / 2)
    s = np.sin(angles / 2)[:, None] * axes
    # cos(a/2) I - i sin(a/2) n.sigma, written out for the Stokes Paulis
    steps = np.empty((n, 2, 2), dtype=complex)
    steps[:, 0, 0] = c - 1j * s[:, 0]
    steps[:, 1, 1] = c + 1j * s[:, 0]
    steps[:, 0, 1] = -1j * s[:, 1] - s[:, 2]
    steps[:, 1, 0] = -1j * s[:, 1] + s[:, 2]
    j = np.array(link.transform, dtype=complex)
    count = link.compositions
    for k in range(n):
        j = steps[k] @ j
        count += 1
        if count % RENORMALIZE_EVERY == 0:
            j = polar(j)[0]
    return replace(link, transform=j, compositions=count)


def mean_drift_visibility_loss(drift_rate: float, interval: float) -> float:
    """Correlation loss from free drift, averaged over a stabilisation interval.

    An isotropic random rotation walk decorrelates a Stokes vector as
    ``exp(-rate^2 t / 3)``; the loss is one minus its mean over ``[0, interval]``.
    """
    x = drift_rate**2 * interval / 3
    if x < 1e-12:
        return x / 2
    return float(1 - (1 - np.exp(-x)) / x)


def drift_rate_for_loss(loss: float, interval: float) -> float:
    if not 0 < loss < 1:
        raise ValueError("loss must lie in (0, 1)")
    return brentq(lambda r: mean_drift_visibility_loss(r, interval) - loss, 0.0, 1e3)


REPLICATION_DRIFT_RATE = drift_rate_for_loss(0.01, REPLICATION_STABILIZATION_INTERVAL)


# --- reference measurement and compensation --------------------------------

def channel_transform(link: FiberLinkState, controller: ControllerSetting) -> np.ndarray:
    return controller_transform(controller) @ link.transform


def measure_reference(link: FiberLinkState, controller: ControllerSetting, stokes_in,
                      polarimeter_sigma: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Output Stokes vector of a reference pulse, with polarimeter noise."""
    s = jones_to_poincare(channel_transform(link, controller)) @ np.asarray(stokes_in, dtype=float)
    if polarimeter_sigma > 0:
        if rng is None:
            raise ValueError("noisy measurement needs an rng")
        s = s + rng.normal(0.0, polarimeter_sigma, 3)
    return s / np.linalg.norm(s)


def estimate_rotation(targets, measured) -> np.ndarray:
    """Least-squares rotation taking ``targets`` onto ``measured`` (SVD Wahba)."""
    b = sum(np.outer(m, t) for t, m in zip(targets, measured))
    u, _, vt = np.linalg.svd(b)
    d = np.sign(np.linalg.det(u) * np.linalg.det(vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def _limit_rotation(rot, max_step: float | None) -> np.ndarray:
    if max_step is None:
        return rot
    rv = Rotation.from_matrix(rot).as_rotvec()
    angle = np.linalg.norm(rv)
    if angle > max_step:
        rv = rv * (max_step / angle)
    return Rotation.from_rotvec(rv).as_matrix()


@dataclass
class CycleOutcome:
    setting: ControllerSetting
    measured: tuple[np.ndarray, np.ndarray]
    overlaps: tuple[float, float]
    ill_conditioned: bool = False


def _cycle(link, controller, refs, polarimeter_sigma, rng, max_step) -> CycleOutcome:
    measured = tuple(measure_reference(link, controller, r, polarimeter_sigma, rng) for r in refs)
    overlaps = tuple(overlap(r, m) for r, m in zip(refs, measured))
    angle = np.arccos(np.clip(abs(measured[0] @ measured[1]), -1, 1))
    if angle < MIN_REFERENCE_ANGLE:
        return CycleOutcome(controller, measured, overlaps, True)
    residual = estimate_rotation(refs, measured)
    correction = _limit_rotation(residual.T, max_step)
    new_rot = correction @ jones_to_poincare(controller_transform(controller))
    return CycleOutcome(decompose_controller(new_rot, near=controller), measured, overlaps)


def compensation_cycle(link: FiberLinkState, controller: ControllerSetting, refs=REFERENCES,
                       polarimeter_sigma: float = 0.0, rng: np.random.Generator | None = None,
                       max_step: float | None = None) -> ControllerSetting:
    """One measure-and-correct step; returns the updated controller setting.

    The residual channel rotation is fitted to the two measured reference
    outputs and its inverse (limited to ``max_step`` rad if given) is folded
    into the controller. Nearly parallel measurements raise an
    :class:`IllConditionedMeasurement` warning and keep the old setting.
    """
    out = _cycle(link, controller, refs, polarimeter_sigma, rng, max_step)
    if out.ill_conditioned:
        warnings.warn("reference outputs are nearly parallel; setting kept",
                      IllConditionedMeasurement, stacklevel=2)
    return out.setting


@dataclass
class CompensationResult:
    setting: ControllerSetting
    cycles_used: int
    wall_time: float
    converged: bool
    link: FiberLinkState
    trace: list[tuple[int, float, float, float, float, float]] = field(default_factory=list)

    @property
    def status(self) -> str:
        return "converged" if self.converged else "not-converged"


def run_compensation(link: FiberLinkState, controller: ControllerSetting,
                     threshold: float = DEFAULT_THRESHOLD, max_cycles: int = 50,
                     cycle_time: float = DEFAULT_CYCLE_TIME, *, refs=REFERENCES,
                     polarimeter_sigma: float = 0.0, rng: np.random.Generator | None = None,
                     max_step: float | None = None) -> CompensationResult:
    """Repeat compensation cycles until both references pass ``threshold``.

    Each cycle measures both references; if they already agree with the
    inputs the loop stops, otherwise the controller is updated and the link
    drifts for ``cycle_time``. Non-convergence is reported in the result.
    ``trace`` rows are ``(cycle, overlap_V, overlap_45, a1, a2, a3)``.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    if max_cycles < 1:
        raise ValueError("max_cycles must be >= 1")
    if link.drift_rate > 0 and rng is None:
        raise ValueError("a drifting link needs an rng")
    trace = []
    for cycle in range(1, max_cycles + 1):
        out = _cycle(link, controller, refs, polarimeter_sigma, rng, max_step)
        trace.append((cycle, *out.overlaps, *controller.retarder_angles))
        if min(out.overlaps) >= threshold:
            return CompensationResult(controller, cycle, cycle * cycle_time, True, link, trace)
        controller = out.setting
        if link.drift_rate > 0:
            link = drift_step(link, cycle_time, rng)
    return CompensationResult(controller, max_cycles, max_cycles * cycle_time, False, link, trace)


def transmit_photon(joint, link: FiberLinkState, controller: ControllerSetting,
                    rng: np.random.Generator) -> tuple[bool, np.ndarray]:
    """Send the photon half of ``joint`` through ``controller @ link``."""
    delivered = bool(rng.random() < link.loss_transmittance)
    j_sigma = photon_jones_sigma(channel_transform(link, controller))
    return delivered, apply_photon_unitary(joint, j_sigma)
