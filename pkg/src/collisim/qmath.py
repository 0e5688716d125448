"""Dense linear algebra and qubit primitives.

States and operators are plain ``numpy`` complex arrays. Qubit 0 is the
leftmost tensor factor (most significant bit of the basis index), so a
two-qubit basis is ordered ``|00>, |01>, |10>, |11>``.
"""
import math
import warnings

import numpy as np

__all__ = [
    "MAX_QUBITS",
    "DM_TOL",
    "UNITARY_TOL",
    "GROUND",
    "EXCITED",
    "swap_operator",
    "partial_swap",
    "tensor",
    "partial_trace",
    "trace_distance",
    "fidelity_with_ground",
    "trace_norm",
    "commutator",
    "bloch_state",
    "env_state",
    "wrap_angle",
    "check_density_matrix",
    "check_unitary",
    "n_qubits",
]

MAX_QUBITS = 14
DM_TOL = 1e-10
UNITARY_TOL = 1e-12

GROUND = np.array([[1, 0], [0, 0]], dtype=complex)
EXCITED = np.array([[0, 0], [0, 1]], dtype=complex)
GROUND.setflags(write=False)
EXCITED.setflags(write=False)

_TWO_PI = 2.0 * math.pi


def n_qubits(m):
    """Number of qubits carried by a square matrix of dimension ``2**k``."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    dim = m.shape[0]
    if dim < 1 or dim & (dim - 1):
        raise ValueError(f"dimension {dim} is not a power of 2")
    return dim.bit_length() - 1


def wrap_angle(angle, name="angle"):
    """Reduce ``angle`` into [0, 2*pi], warning when it had to be moved."""
    angle = float(angle)
    if not math.isfinite(angle):
        raise ValueError(f"{name} must be finite, got {angle}")
    if 0.0 <= angle <= _TWO_PI:
        return angle
    wrapped = math.fmod(angle, _TWO_PI)
    if wrapped < 0:
        wrapped += _TWO_PI
    warnings.warn(
        f"{name}={angle!r} outside [0, 2pi]; reduced to {wrapped!r}",
        RuntimeWarning,
        stacklevel=3,
    )
    return wrapped


def _check_pair(a, b, total):
    if not isinstance(total, (int, np.integer)) or total < 2:
        raise ValueError(f"total_qubits must be an integer >= 2, got {total!r}")
    if total > MAX_QUBITS:
        raise ValueError(f"total_qubits={total} exceeds the {MAX_QUBITS}-qubit guard")
    for q in (a, b):
        if not 0 <= q < total:
            raise IndexError(f"qubit index {q} out of range for {total} qubits")
    if a == b:
        raise ValueError("partial swap needs two distinct qubits")


def swap_operator(a, b, total_qubits):
    """Permutation matrix exchanging qubits ``a`` and ``b``."""
    _check_pair(a, b, total_qubits)
    dim = 1 << total_qubits
    idx = np.arange(dim)
    ba = total_qubits - 1 - a
    bb = total_qubits - 1 - b
    bit_a = (idx >> ba) & 1
    bit_b = (idx >> bb) & 1
    swapped = idx ^ ((bit_a ^ bit_b) << ba) ^ ((bit_a ^ bit_b) << bb)
    op = np.zeros((dim, dim), dtype=complex)
    op[swapped, idx] = 1.0
    return op


def partial_swap(strength, subsystem_a=0, subsystem_b=1, total_qubits=2):
    """Partial swap ``cos(g) I + i sin(g) S_ab`` on ``total_qubits`` qubits.

    Parameters
    ----------
    strength : float
        Swap angle in radians. Values outside [0, 2*pi] are wrapped with a
        ``RuntimeWarning``.
    subsystem_a, subsystem_b : int
        The two qubits being exchanged.
    total_qubits : int
        Size of the register the gate is embedded in.

    Returns
    -------
    numpy.ndarray
        Unitary of shape ``(2**total_qubits, 2**total_qubits)``.
    """
    strength = wrap_angle(strength, "strength")
    op = swap_operator(subsystem_a, subsystem_b, total_qubits)
    op *= 1j * math.sin(strength)
    op[np.diag_indices_from(op)] += math.cos(strength)
    return op


def tensor(a, b):
    """Kronecker product ``a (x) b``."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def partial_trace(rho, keep):
    """Reduce ``rho`` onto the qubits in ``keep`` (kept in ascending order)."""
    rho = np.asarray(rho, dtype=complex)
    n = n_qubits(rho)
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise ValueError("keep must name at least one qubit")
    for q in keep:
        if not 0 <= q < n:
            raise IndexError(f"qubit index {q} out of range for {n} qubits")
    if len(keep) == n:
        return rho.copy()
    t = rho.reshape((2,) * (2 * n))
    m = n
    for q in reversed(range(n)):
        if q in keep:
            continue
        t = np.trace(t, axis1=q, axis2=q + m)
        m -= 1
    d = 1 << len(keep)
    return t.reshape(d, d)


def trace_norm(m):
    """Sum of singular values of a square matrix."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"trace norm needs a square matrix, got shape {m.shape}")
    if np.allclose(m, m.conj().T, rtol=0.0, atol=1e-14):
        return float(np.abs(np.linalg.eigvalsh(m)).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def trace_distance(a, b):
    """Half the trace norm of ``a - b``, clipped into [0, 1]."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    diff = 0.5 * (diff + diff.conj().T)
    d = 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())
    return min(max(d, 0.0), 1.0)


def fidelity_with_ground(rho):
    """Population ``<0|rho|0>`` of a single-qubit state."""
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        raise ValueError(f"expected a single-qubit state, got shape {rho.shape}")
    return float(rho[0, 0].real)


def commutator(a, b):
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def bloch_state(theta):
    """Real pure qubit state ``cos(theta)|0> + sin(theta)|1>`` as a density matrix."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c * c, c * s], [c * s, s * s]], dtype=complex)


def env_state(excited=0.0):
    """Diagonal qubit state with population ``excited`` in ``|1>``."""
    excited = float(excited)
    if not 0.0 <= excited <= 1.0:
        raise ValueError(f"excited population must lie in [0, 1], got {excited}")
    return np.diag([1.0 - excited, excited]).astype(complex)


def check_density_matrix(rho, tol=DM_TOL, name="rho"):
    """Validate Hermiticity, unit trace and positivity; return ``rho`` as complex array."""
    rho = np.asarray(rho, dtype=complex)
    n_qubits(rho)
    if not np.all(np.isfinite(rho)):
        raise ValueError(f"{name} has non-finite entries")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > tol:
        raise ValueError(f"{name} is not Hermitian (max deviation {herm:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol:
        raise ValueError(f"{name} has trace {tr.real:.12g}, expected 1")
    low = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if low < -tol:
        raise ValueError(f"{name} is not positive semidefinite (eigenvalue {low:.3e})")
    return rho


def check_unitary(u, tol=UNITARY_TOL):
    u = np.asarray(u, dtype=complex)
    n_qubits(u)
    dev = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if dev > tol:
        raise ValueError(f"matrix is not unitary (max deviation {dev:.3e})")
    return u
