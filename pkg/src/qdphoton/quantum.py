"""Polarization qubit and two-qubit primitives.

States are plain numpy arrays: a length-2 complex vector over (H, V), a
length-4 vector over (HH, HV, VH, VV) with the XX photon as the first
factor, and 2x2 / 4x4 complex matrices for operators.

Circular convention: R = (H + iV)/sqrt(2), L = (H - iV)/sqrt(2).  With this
choice the Bell state (HH + VV)/sqrt(2) equals (RL + LR)/sqrt(2).
"""

from dataclasses import dataclass
from numbers import Real

import numpy as np

EPS = 1e-12
TRACE_TOL = 1e-12
HERMITIAN_TOL = 1e-12
PSD_TOL = -1e-10

_S = 1.0 / np.sqrt(2.0)
_BASIS = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_S, _S], dtype=complex),
    "A": np.array([_S, -_S], dtype=complex),
    "R": np.array([_S, 1j * _S], dtype=complex),
    "L": np.array([_S, -1j * _S], dtype=complex),
}
_ORTHOGONAL = {"H": "V", "V": "H", "D": "A", "A": "D", "R": "L", "L": "R"}

PHI_PLUS = np.array([_S, 0.0, 0.0, _S], dtype=complex)
RHO_CLASSICAL = np.diag([0.5, 0.0, 0.0, 0.5]).astype(complex)


def _check_label(label):
    if isinstance(label, str):
        key = label.upper()
        if key not in _BASIS:
            raise ValueError(f"unknown polarization label {label!r}")
        return key
    if isinstance(label, Real) and np.isfinite(label):
        return float(label)
    raise ValueError(f"invalid polarization label {label!r}")


def basis_state(label):
    """Unit amplitude pair for a named polarization or a linear angle (rad)."""
    key = _check_label(label)
    if isinstance(key, str):
        return _BASIS[key].copy()
    return np.array([np.cos(key), np.sin(key)], dtype=complex)


def orthogonal_label(label):
    """The polarization orthogonal to ``label`` (V for H, angle + pi/2, ...)."""
    key = _check_label(label)
    if isinstance(key, str):
        return _ORTHOGONAL[key]
    return key + np.pi / 2.0


def projector(state):
    state = np.asarray(state, dtype=complex)
    if state.shape != (2,) and state.shape != (4,):
        raise ValueError(f"expected a 2- or 4-component state, got shape {state.shape}")
    norm2 = float(np.vdot(state, state).real)
    if abs(norm2 - 1.0) > EPS:
        raise ValueError(f"state is not normalized (|psi|^2 = {norm2!r})")
    return np.outer(state, state.conj())


def rotation_matrix(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotate_frame(obj, theta):
    """Rotate a state or operator by the real rotation R(theta) on every qubit.

    Vectors transform as v -> R v, operators as P -> R P R^T; two-qubit
    objects use R (x) R.
    """
    if not np.isfinite(theta):
        raise ValueError("rotation angle must be finite")
    obj = np.asarray(obj, dtype=complex)
    rot = rotation_matrix(theta)
    if obj.shape in ((4,), (4, 4)):
        rot = np.kron(rot, rot)
    elif obj.shape not in ((2,), (2, 2)):
        raise ValueError(f"cannot rotate object of shape {obj.shape}")
    if obj.ndim == 1:
        return rot @ obj
    return rot @ obj @ rot.T


def tensor(a, b):
    """Kronecker product, first factor on the XX photon."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


# -- eigenvalues -----------------------------------------------------------

def jacobi_eigvalsh(matrix, tol=1e-12, max_sweeps=100):
    """Eigenvalues of a small Hermitian matrix by cyclic complex Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm is below
    ``tol * max(1, ||A||_F)``.  Returns eigenvalues sorted ascending.
    """
    a = np.array(matrix, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    a = 0.5 * (a + a.conj().T)
    scale = max(1.0, float(np.linalg.norm(a)))
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(a[~np.eye(n, dtype=bool)]) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag < 1e-300:
                    continue
                # phase away the imaginary part, then a real symmetric rotation
                phase = apq / mag
                app, aqq = a[p, p].real, a[q, q].real
                tau = (aqq - app) / (2.0 * mag)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot = np.eye(n, dtype=complex)
                rot[p, p] = c
                rot[q, q] = c * np.conj(phase)
                rot[p, q] = s
                rot[q, p] = -s * np.conj(phase)
                a = rot.conj().T @ a @ rot
                a[p, q] = a[q, p] = 0.0
    else:
        raise RuntimeError("Jacobi eigenvalue iteration did not converge")
    return np.sort(np.diag(a).real)


# -- density matrices ------------------------------------------------------

@dataclass(frozen=True)
class DensityMatrixDiagnostics:
    trace_error: float
    hermiticity_error: float
    min_eigenvalue: float
    eigenvalues: np.ndarray

    @property
    def valid(self):
        return (
            self.trace_error <= TRACE_TOL
            and self.hermiticity_error <= HERMITIAN_TOL
            and self.min_eigenvalue >= PSD_TOL
        )


def validate_density_matrix(rho):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4) and rho.shape != (2, 2):
        raise ValueError(f"expected a 2x2 or 4x4 matrix, got shape {rho.shape}")
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    trace_err = float(abs(np.trace(rho) - 1.0))
    evals = jacobi_eigvalsh(rho)
    return DensityMatrixDiagnostics(trace_err, herm, float(evals[0]), evals)


def fidelity(rho, psi):
    """Fidelity <psi|rho|psi> of a density matrix to a pure state."""
    diag = validate_density_matrix(rho)
    if not diag.valid:
        raise ValueError(f"invalid density matrix: {diag}")
    psi = np.asarray(psi, dtype=complex)
    norm2 = float(np.vdot(psi, psi).real)
    if abs(norm2 - 1.0) > EPS:
        raise ValueError(f"state is not normalized (|psi|^2 = {norm2!r})")
    val = np.vdot(psi, np.asarray(rho, dtype=complex) @ psi)
    if abs(val.imag) > EPS:
        raise ValueError(f"fidelity has imaginary part {val.imag!r}")
    return float(val.real)
