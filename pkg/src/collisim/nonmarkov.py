"""Trace-distance series, the discretised BLP measure and correlation bound terms."""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .engine import ModelParams, TrajectoryRecord, propagate, system_states, _kernel
from .qmath import bloch_state, swap_operator

__all__ = [
    "MeasureResult",
    "SecBoundSeries",
    "distance_series",
    "blp_measure",
    "total_variation",
    "theta_grid",
    "candidate_pairs",
    "optimize_measure",
    "pair_measure",
    "delta_sweep",
    "threshold_sweep",
    "sec_bound_series",
]

TIE_RTOL = 1e-9
# trace distances live in [0, 1]; rises of a few ulp are rounding, not signal
RISE_TOL = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class MeasureResult:
    """Optimised non-Markovianity of one parameter point.

    ``n_value`` is the sum of positive increments of ``series``, the distance
    series of ``best_pair``.
    """

    n_value: float
    best_pair: tuple
    increase_intervals: list
    grid_resolution: int
    series: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class SecBoundSeries:
    """Per-step change of the trace distance next to the two bound terms.

    Entry 0 belongs to the initial condition and is zero throughout.
    """

    discrete_derivative: np.ndarray
    env_term: np.ndarray
    sec_term: np.ndarray

    def __len__(self):
        return len(self.discrete_derivative)


def _states(traj):
    if isinstance(traj, TrajectoryRecord):
        return traj.system
    states = np.asarray(traj, dtype=complex)
    if states.ndim != 3 or states.shape[1:] != (2, 2):
        raise ValueError(f"expected a trajectory of single-qubit states, got {states.shape}")
    return states


def _qubit_distance(diff):
    """Trace distance from (..., 2, 2) differences of two qubit states."""
    half = 0.5 * (diff[..., 0, 0] - diff[..., 1, 1]).real
    return np.minimum(np.sqrt(half * half + np.abs(diff[..., 0, 1]) ** 2), 1.0)


def distance_series(traj1, traj2):
    """Pointwise trace distance between two trajectories' system states."""
    a, b = _states(traj1), _states(traj2)
    if a.shape != b.shape:
        raise ValueError(f"trajectory length mismatch: {len(a)} vs {len(b)}")
    diff = a - b
    diff = 0.5 * (diff + np.conj(np.swapaxes(diff, -1, -2)))
    d = 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum(axis=-1)
    return np.clip(d, 0.0, 1.0)


def blp_measure(series, tol=RISE_TOL):
    """Sum of positive increments of ``series`` and the runs where it rises.

    Increments no larger than ``tol`` count as flat, so rounding noise on a
    decayed distance does not accumulate into a spurious measure.

    Returns
    -------
    value : float
    intervals : list of (start, end)
        Maximal index ranges over which every increment exceeds ``tol``.
    """
    d = np.asarray(series, dtype=float)
    if d.ndim != 1 or d.size < 2:
        raise ValueError("series needs at least two entries")
    inc = np.diff(d)
    rising = inc > tol
    value = float(inc[rising].sum())
    edges = np.diff(np.concatenate([[False], rising, [False]]).astype(np.int8))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return value, [(int(s), int(e)) for s, e in zip(starts, ends)]


def total_variation(series):
    """Sum of absolute increments, the alternative step-counting convention."""
    return float(np.abs(np.diff(np.asarray(series, dtype=float))).sum())


def theta_grid(grid):
    """Uniform Bloch angles on [0, pi); the real pure family repeats with period pi."""
    if int(grid) != grid or grid < 2:
        raise ValueError(f"grid must be an integer >= 2, got {grid!r}")
    return np.arange(int(grid)) * (math.pi / grid)


@numba.njit(cache=True)
def _accumulate_rises(z, x, y, first, second, prev, acc, tol):
    """Add positive distance increments of each pair ``(first[p], second[p])`` into ``acc``.

    ``z, x, y`` are half Bloch components per step and state; ``prev`` holds
    the previous distance of each pair and is updated in place.
    """
    n_steps = z.shape[0]
    for t in range(n_steps):
        for p in range(first.shape[0]):
            i, j = first[p], second[p]
            dz = z[t, i] - z[t, j]
            dx = x[t, i] - x[t, j]
            dy = y[t, i] - y[t, j]
            d = min(math.sqrt(dz * dz + dx * dx + dy * dy), 1.0)
            if d - prev[p] > tol:
                acc[p] += d - prev[p]
            prev[p] = d


def candidate_pairs(grid, pairs="orthogonal"):
    """Bloch-angle pairs searched by :func:`optimize_measure`, in lexicographic order.

    ``"orthogonal"`` pairs every grid angle in [0, pi/2) with its orthogonal
    partner ``theta + pi/2``; ``"all"`` takes every unordered pair of the grid.

    Returns
    -------
    thetas : numpy.ndarray
        Distinct angles to evolve.
    first, second : numpy.ndarray of int
        Indices into ``thetas`` of each pair.
    """
    base = theta_grid(grid)
    if pairs == "all":
        first, second = np.triu_indices(len(base), 1)
        return base, first, second
    if pairs != "orthogonal":
        raise ValueError(f"pairs must be 'orthogonal' or 'all', got {pairs!r}")
    low = base[base < math.pi / 2]
    m = len(low)
    thetas = np.concatenate([low, low + math.pi / 2])
    return thetas, np.arange(m), np.arange(m, 2 * m)


def optimize_measure(params, grid=64, pairs="orthogonal"):
    """Maximise the measure over candidate pairs of a uniform angle grid.

    All candidate states are evolved as one batch under a common draw
    sequence. Ties (within a relative ``TIE_RTOL``) go to the
    lexicographically smallest pair. See :func:`candidate_pairs` for the
    ``pairs`` domains.
    """
    thetas, first, second = candidate_pairs(grid, pairs)
    kern = _kernel(params)
    systems = np.array([bloch_state(t) for t in thetas])
    parts = [_half_bloch(systems.reshape(1, -1, 4).transpose(0, 2, 1))]
    prev = _qubit_distance(systems[first] - systems[second])
    acc = np.zeros(len(first))
    for _, post, _ in propagate(systems, params):
        comps = _half_bloch(kern.to_system @ post)
        _accumulate_rises(*comps, first, second, prev, acc, RISE_TOL)
        parts.append(comps)
    best = acc.max()
    k = int(np.flatnonzero(acc >= best - TIE_RTOL * max(1.0, best))[0])
    i, j = first[k], second[k]
    z, x, y = (np.concatenate([c[n] for c in parts]) for n in range(3))
    series = np.minimum(
        np.sqrt((z[:, i] - z[:, j]) ** 2 + (x[:, i] - x[:, j]) ** 2 + (y[:, i] - y[:, j]) ** 2), 1.0
    )
    value, intervals = blp_measure(series)
    return MeasureResult(
        n_value=value,
        best_pair=(float(thetas[i]), float(thetas[j])),
        increase_intervals=intervals,
        grid_resolution=int(grid),
        series=series,
    )


def _half_bloch(rho_vec):
    # (k, 4, B) row-major qubit states -> z, x, y each (k, B)
    return (
        0.5 * (rho_vec[:, 0].real - rho_vec[:, 3].real),
        np.ascontiguousarray(rho_vec[:, 1].real),
        np.ascontiguousarray(rho_vec[:, 1].imag),
    )


def pair_measure(params, theta1, theta2):
    """Measure for one fixed pair of Bloch angles (no optimisation)."""
    states = system_states(np.array([bloch_state(theta1), bloch_state(theta2)]), params)
    series = distance_series(states[0], states[1])
    value, intervals = blp_measure(series)
    return MeasureResult(value, (float(theta1), float(theta2)), intervals, 0, series)


def _evaluate(job):
    params, grid, pair, pairs = job
    if pair is None:
        return optimize_measure(params, grid, pairs)
    return pair_measure(params, *pair)


def _map(jobs, workers):
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [_evaluate(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate, jobs))


def delta_sweep(params_base, delta_values, grid=64, workers=1, pair=None, pairs="orthogonal"):
    """Optimised measure for each intra-environment strength, in input order.

    ``pair`` fixes the two Bloch angles instead of optimising over the grid.
    """
    delta_values = [float(d) for d in delta_values]
    if not delta_values:
        raise ValueError("delta_values must not be empty")
    jobs = [(params_base.replace(delta=d), grid, pair, pairs) for d in delta_values]
    return list(zip(delta_values, _map(jobs, workers)))


def threshold_sweep(params_base, thresholds, grid=64, workers=1, pair=None, pairs="orthogonal"):
    """Optimised measure for each collision probability.

    Every entry reuses ``params_base.seed``, so the thresholds are compared
    on common random numbers: a collision happening at probability ``p``
    also happens at every larger probability.
    """
    thresholds = [float(p) for p in thresholds]
    if not thresholds:
        raise ValueError("thresholds must not be empty")
    jobs = [(params_base.replace(collision_probability=p), grid, pair, pairs)
            for p in thresholds]
    return list(zip(thresholds, _map(jobs, workers)))


def _trace_norms(m):
    # commutator traces are anti-Hermitian, so go through singular values
    return np.linalg.svd(m, compute_uv=False).sum(axis=-1)


def _trace_env_commutator(h, x):
    # Tr_E [h, x] for stacks of 4x4 x; result (..., 2, 2)
    c = (h @ x - x @ h).reshape(x.shape[:-2] + (2, 2, 2, 2))
    return np.einsum("...ijkj->...ik", c)


def sec_bound_series(traj1, traj2, params=None):
    """Both terms of the system-environment-correlation bound on trace-distance changes.

    The generator of each collision is the bare swap of the system and the
    incoming environment qubit; terms are evaluated on the joint states right
    before that collision. ``params`` is accepted for interface symmetry; the
    generator does not depend on the swap strength.
    """
    if not isinstance(traj1, TrajectoryRecord) or not isinstance(traj2, TrajectoryRecord):
        raise TypeError("sec_bound_series needs TrajectoryRecord inputs with joint-state records")
    if len(traj1) != len(traj2):
        raise ValueError(f"trajectory length mismatch: {len(traj1)} vs {len(traj2)}")
    h = swap_operator(0, 1, 2)
    d = distance_series(traj1, traj2)
    p1, p2 = traj1.pre_collision[1:], traj2.pre_collision[1:]

    def marginals(p):
        t = p.reshape(-1, 2, 2, 2, 2)
        return np.einsum("nijkj->nik", t), np.einsum("nijil->njl", t)

    s1, e1 = marginals(p1)
    s2, e2 = marginals(p2)
    chi1 = p1 - np.einsum("nik,njl->nijkl", s1, e1).reshape(-1, 4, 4)
    chi2 = p2 - np.einsum("nik,njl->nijkl", s2, e2).reshape(-1, 4, 4)
    de = e1 - e2
    env_terms = [
        _trace_norms(_trace_env_commutator(h, np.einsum("nik,njl->nijkl", s, de).reshape(-1, 4, 4)))
        for s in (s1, s2)
    ]
    env = 0.5 * np.minimum(*env_terms)
    sec = 0.5 * _trace_norms(_trace_env_commutator(h, chi1 - chi2))
    zero = np.zeros(1)
    return SecBoundSeries(
        discrete_derivative=np.concatenate([zero, np.diff(d)]),
        env_term=np.concatenate([zero, env]),
        sec_term=np.concatenate([zero, sec]),
    )
