"""Collision dynamics of a qubit sweeping through a chain of environment qubits.

One iteration, in physical order:

1. a fresh environment qubit prepared in ``env_prep`` joins the register;
2. the outgoing environment qubit partially swaps into it with strength
   ``delta`` (no-op on the first iteration, which has no predecessor);
3. the outgoing qubit is traced out;
4. the system collides with the fresh qubit (partial swap, strength
   ``gamma``), only when the per-step uniform draw is below
   ``collision_probability``;
5. under :attr:`Strategy.ERASE` the system/environment pair is replaced by
   the product of its marginals.

:func:`step` performs exactly this on a :class:`SimulationState` with the
``qmath`` primitives. :func:`run_trajectory` and :func:`propagate` reach the
same result through superoperators tabulated from those very step functions,
which is what makes 10^4-10^5 step runs over whole state grids affordable.
:func:`run_exact_oracle` evolves the full chain with no intermediate tracing.
"""
import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .qmath import (
    GROUND,
    MAX_QUBITS,
    check_density_matrix,
    partial_swap,
    partial_trace,
    tensor,
    wrap_angle,
)

__all__ = [
    "Strategy",
    "ModelParams",
    "SimulationState",
    "TrajectoryRecord",
    "initial_state",
    "step",
    "run_trajectory",
    "run_exact_oracle",
    "system_states",
    "propagate",
    "correlation_matrix",
    "collision_draws",
]

CHUNK = 512
MAX_MIXED_ORACLE_QUBITS = 11


class Strategy(enum.IntEnum):
    """How system/environment correlations are carried between iterations."""

    ERASE = 1
    RETAIN = 2

    @classmethod
    def coerce(cls, value):
        if isinstance(value, str):
            key = value.strip().upper()
            aliases = {"1": cls.ERASE, "2": cls.RETAIN,
                       "ERASECORRELATIONS": cls.ERASE, "RETAINCORRELATIONS": cls.RETAIN}
            if key in aliases:
                return aliases[key]
            if key in cls.__members__:
                return cls[key]
            raise ValueError(f"unknown strategy {value!r}; use 1 or 2")
        return cls(int(value))


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Every knob of the collision model.

    ``gamma`` and ``delta`` are reduced modulo 2*pi (with a warning) when
    given outside [0, 2*pi]. ``collision_probability=1`` is the deterministic
    model.
    """

    gamma: float = 0.05
    delta: float = math.pi / 2
    steps: int = 30_000
    strategy: Strategy = Strategy.RETAIN
    env_prep: np.ndarray = field(default_factory=GROUND.copy)
    collision_probability: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gamma", wrap_angle(self.gamma, "gamma"))
        object.__setattr__(self, "delta", wrap_angle(self.delta, "delta"))
        object.__setattr__(self, "strategy", Strategy.coerce(self.strategy))
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps!r}")
        object.__setattr__(self, "steps", int(self.steps))
        p = float(self.collision_probability)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"collision_probability must lie in [0, 1], got {p}")
        object.__setattr__(self, "collision_probability", p)
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an integer in [0, 2**64), got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))
        env = check_density_matrix(self.env_prep, name="env_prep")
        if env.shape != (2, 2):
            raise ValueError("env_prep must be a single-qubit state")
        env = env.copy()
        env.setflags(write=False)
        object.__setattr__(self, "env_prep", env)

    def _key(self):
        return (self.gamma, self.delta, self.steps, self.strategy,
                self.env_prep.tobytes(), self.collision_probability, self.seed)

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class SimulationState:
    """Active system/environment pair between iterations."""

    joint: np.ndarray
    step: int
    rng_state: dict
    collided: bool = False

    @property
    def system(self):
        return partial_trace(self.joint, [0])

    @property
    def environment(self):
        return partial_trace(self.joint, [1])


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-step observables; index 0 is the initial condition.

    ``pre_collision[n]`` is the system/active-environment state right before
    the collision of iteration ``n`` (entry 0 repeats the initial joint
    state).
    """

    system: np.ndarray          # (steps+1, 2, 2)
    environment: np.ndarray     # (steps+1, 2, 2)
    joint: np.ndarray           # (steps+1, 4, 4)
    pre_collision: np.ndarray   # (steps+1, 4, 4)
    collisions: np.ndarray      # (steps+1,) bool

    def __len__(self):
        return self.system.shape[0]

    @property
    def steps(self):
        return len(self) - 1

    @property
    def correlation(self):
        return self.joint - _kron_batch(self.system, self.environment)


def _kron_batch(a, b):
    # a, b: (..., 2, 2) -> (..., 4, 4)
    out = np.einsum("...ik,...jl->...ijkl", a, b)
    return out.reshape(out.shape[:-4] + (4, 4))


def correlation_matrix(joint):
    """``rho_SE - Tr_E(rho_SE) (x) Tr_S(rho_SE)`` for a two-qubit state."""
    joint = np.asarray(joint, dtype=complex)
    if joint.shape != (4, 4):
        raise ValueError(f"correlation matrix needs a 4x4 state, got {joint.shape}")
    return joint - tensor(partial_trace(joint, [0]), partial_trace(joint, [1]))


def collision_draws(params):
    """The uniform draws deciding each collision; one per step, always."""
    rng = np.random.Generator(np.random.PCG64(params.seed))
    return rng.random(params.steps)


def _collision_mask(params):
    return collision_draws(params) < params.collision_probability


# -- literal step ---------------------------------------------------------

def _pre_collision(joint, env_prep, delta, first):
    three = tensor(joint, env_prep)
    if not first:
        u = partial_swap(delta, 1, 2, 3)
        three = u @ three @ u.conj().T
    return partial_trace(three, [0, 2])


def _collide(joint, gamma):
    u = partial_swap(gamma, 0, 1, 2)
    return u @ joint @ u.conj().T


def _erase(joint):
    # product of marginals carries trace**2; dividing by the trace keeps
    # rounding in the trace from compounding step after step
    return tensor(partial_trace(joint, [0]), partial_trace(joint, [1])) / np.trace(joint)


def initial_state(initial_system, params):
    """Step-0 state: the system next to a placeholder environment qubit."""
    rho = check_density_matrix(initial_system, name="initial_system")
    if rho.shape != (2, 2):
        raise ValueError("initial_system must be a single-qubit state")
    rng = np.random.Generator(np.random.PCG64(params.seed))
    return SimulationState(
        joint=tensor(rho, params.env_prep), step=0, rng_state=rng.bit_generator.state
    )


def step(state, params):
    """Advance ``state`` by one collision iteration."""
    if state.step >= params.steps:
        raise RuntimeError(f"step budget of {params.steps} exhausted")
    joint = check_density_matrix(state.joint, name="state.joint")
    if joint.shape != (4, 4):
        raise ValueError("state.joint must be a two-qubit state")
    joint = _pre_collision(joint, params.env_prep, params.delta, first=state.step == 0)
    bitgen = np.random.PCG64()
    bitgen.state = state.rng_state
    rng = np.random.Generator(bitgen)
    collided = rng.random() < params.collision_probability
    if collided:
        joint = _collide(joint, params.gamma)
    if params.strategy is Strategy.ERASE:
        joint = _erase(joint)
    return SimulationState(
        joint=joint, step=state.step + 1, rng_state=bitgen.state, collided=collided
    )


# -- tabulated superoperators ---------------------------------------------

def _superoperator(fn):
    """Row-major vec representation of a linear map on 4x4 matrices."""
    cols = []
    for k in range(16):
        basis = np.zeros(16, dtype=complex)
        basis[k] = 1.0
        cols.append(fn(basis.reshape(4, 4)).reshape(16))
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class _Kernel:
    first: np.ndarray
    pre: np.ndarray
    hit: np.ndarray
    to_system: np.ndarray
    to_env: np.ndarray


def _kernel(params):
    env = params.env_prep
    return _Kernel(
        first=_superoperator(lambda m: _pre_collision(m, env, params.delta, True)),
        pre=_superoperator(lambda m: _pre_collision(m, env, params.delta, False)),
        hit=_superoperator(lambda m: _collide(m, params.gamma)),
        to_system=_superoperator(lambda m: np.kron(partial_trace(m, [0]), np.eye(2)))[[0, 2, 8, 10]],
        to_env=_superoperator(lambda m: np.kron(np.eye(2), partial_trace(m, [1])))[[0, 1, 4, 5]],
    )


# reorders (s, s', e, e') products into row-major (s, e, s', e') vec indices
_ERASE_ORDER = np.arange(16).reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(16)


def _erase_vec(v, kern):
    rs = kern.to_system @ v
    re = kern.to_env @ v
    re /= rs[0] + rs[3]
    return (rs[:, None, :] * re[None, :, :]).reshape(16, -1)[_ERASE_ORDER]


def propagate(initial_systems, params, chunk=CHUNK):
    """Evolve a batch of initial system states together.

    Every member of the batch sees the same collision draws, so pairs drawn
    from the batch are two inputs pushed through one and the same map.

    Parameters
    ----------
    initial_systems : array_like, shape (B, 2, 2)
    params : ModelParams
    chunk : int
        Number of iterations per yielded block.

    Yields
    ------
    pre, post : numpy.ndarray, shape (k, 16, B)
        Row-major vectorised joint states before the collision and at the end
        of each iteration.
    collided : numpy.ndarray of bool, shape (k,)
    """
    systems = np.asarray(initial_systems, dtype=complex)
    if systems.ndim != 3 or systems.shape[1:] != (2, 2):
        raise ValueError(f"expected a (B, 2, 2) batch, got shape {systems.shape}")
    kern = _kernel(params)
    mask = _collision_mask(params)
    erase = params.strategy is Strategy.ERASE
    v = _kron_batch(systems, params.env_prep).reshape(-1, 16).T.copy()
    n = 0
    while n < params.steps:
        k = min(chunk, params.steps - n)
        pre = np.empty((k, 16, v.shape[1]), dtype=complex)
        post = np.empty_like(pre)
        for i in range(k):
            v = (kern.first if n + i == 0 else kern.pre) @ v
            pre[i] = v
            if mask[n + i]:
                v = kern.hit @ v
            if erase:
                v = _erase_vec(v, kern)
            post[i] = v
        yield pre, post, mask[n:n + k]
        n += k


def system_states(initial_systems, params):
    """Reduced system states for a batch, shape ``(B, steps+1, 2, 2)``."""
    systems = np.asarray(initial_systems, dtype=complex)
    kern = _kernel(params)
    blocks = [systems.reshape(1, -1, 4)]
    for _, post, _ in propagate(systems, params):
        blocks.append(np.einsum("sv,kvb->kbs", kern.to_system, post))
    out = np.concatenate(blocks, axis=0)
    return out.transpose(1, 0, 2).reshape(systems.shape[0], -1, 2, 2)


def run_trajectory(initial_system, params):
    """Full per-step record of one trajectory."""
    rho = check_density_matrix(initial_system, name="initial_system")
    if rho.shape != (2, 2):
        raise ValueError("initial_system must be a single-qubit state")
    joint0 = tensor(rho, params.env_prep)
    pre_blocks = [joint0.reshape(1, 16)]
    post_blocks = [joint0.reshape(1, 16)]
    hit_blocks = [np.zeros(1, dtype=bool)]
    for pre, post, collided in propagate(rho[None], params):
        pre_blocks.append(pre[:, :, 0])
        post_blocks.append(post[:, :, 0])
        hit_blocks.append(collided)
    joint = np.concatenate(post_blocks).reshape(-1, 4, 4)
    pre = np.concatenate(pre_blocks).reshape(-1, 4, 4)
    t = joint.reshape(-1, 2, 2, 2, 2)
    return TrajectoryRecord(
        system=np.einsum("nijkj->nik", t),
        environment=np.einsum("nijil->njl", t),
        joint=joint,
        pre_collision=pre,
        collisions=np.concatenate(hit_blocks),
    )


# -- exact full-chain oracle ----------------------------------------------

def _purify(rho, tol=1e-12):
    w, vecs = np.linalg.eigh(rho)
    if w[-1] < 1.0 - tol:
        return None
    return vecs[:, -1]


class _PureChain:
    def __init__(self, factors):
        psi = factors[0]
        for f in factors[1:]:
            psi = np.multiply.outer(psi, f)
        self.t = psi
        self.n = len(factors)

    def gate(self, angle, a, b):
        self.t = math.cos(angle) * self.t + 1j * math.sin(angle) * np.swapaxes(self.t, a, b)

    def reduced(self, qubits):
        rest = [q for q in range(self.n) if q not in qubits]
        t = np.moveaxis(self.t, list(qubits), list(range(len(qubits))))
        m = t.reshape(1 << len(qubits), -1)
        return m @ m.conj().T


class _MixedChain:
    def __init__(self, factors):
        rho = factors[0]
        for f in factors[1:]:
            rho = np.kron(rho, f)
        self.n = len(factors)
        self.t = rho.reshape((2,) * (2 * self.n))

    def gate(self, angle, a, b):
        n = self.n
        c, s = math.cos(angle), math.sin(angle)
        left = np.swapaxes(self.t, a, b)
        right = np.swapaxes(self.t, n + a, n + b)
        both = np.swapaxes(left, n + a, n + b)
        self.t = c * c * self.t + s * s * both + 1j * c * s * (left - right)

    def reduced(self, qubits):
        n = self.n
        rest = [q for q in range(n) if q not in qubits]
        order = list(qubits) + rest
        t = self.t.transpose(order + [n + q for q in order])
        d, r = 1 << len(qubits), 1 << len(rest)
        return np.einsum("iaja->ij", t.reshape(d, r, d, r))


def run_exact_oracle(initial_system, params, chain_length):
    """Evolve system plus ``chain_length`` environment qubits with no tracing.

    Gates act on the complete register by axis exchanges on the state tensor,
    independent of the matrices used by :func:`step`. Only the reduced
    states are read out. Correlation handling always matches
    :attr:`Strategy.RETAIN`; ``params.strategy`` is ignored.
    """
    rho = check_density_matrix(initial_system, name="initial_system")
    if rho.shape != (2, 2):
        raise ValueError("initial_system must be a single-qubit state")
    if chain_length < 1 or chain_length + 1 > MAX_QUBITS:
        raise ValueError(f"chain_length must lie in [1, {MAX_QUBITS - 1}], got {chain_length}")
    if params.steps > chain_length:
        raise ValueError(f"steps={params.steps} exceeds chain_length={chain_length}")
    sys_vec = _purify(rho)
    env_vec = _purify(params.env_prep)
    if sys_vec is not None and env_vec is not None:
        chain = _PureChain([sys_vec] + [env_vec] * chain_length)
    else:
        if chain_length + 1 > MAX_MIXED_ORACLE_QUBITS:
            raise ValueError(
                f"mixed inputs limit the oracle to {MAX_MIXED_ORACLE_QUBITS - 1} environment qubits"
            )
        chain = _MixedChain([rho] + [params.env_prep] * chain_length)

    mask = _collision_mask(params)
    joint0 = tensor(rho, params.env_prep)
    joints, pres = [joint0], [joint0]
    for j in range(1, params.steps + 1):
        if j > 1:
            chain.gate(params.delta, j - 1, j)
        pres.append(chain.reduced([0, j]))
        if mask[j - 1]:
            chain.gate(params.gamma, 0, j)
        joints.append(chain.reduced([0, j]))
    joint = np.array(joints)
    t = joint.reshape(-1, 2, 2, 2, 2)
    return TrajectoryRecord(
        system=np.einsum("nijkj->nik", t),
        environment=np.einsum("nijil->njl", t),
        joint=joint,
        pre_collision=np.array(pres),
        collisions=np.concatenate([[False], mask]),
    )
