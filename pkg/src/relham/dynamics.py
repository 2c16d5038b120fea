"""Time integration: Hamiltonian, damped (large friction scaling) and gradient flows.

Formulation B states live in the monotone cone; after every step adjacent
particles that touched or crossed are merged inelastically into clusters
(sticky particles). Clusters never split. Formulation A states must stay
strictly ordered; contact raises ``InadmissibleStateError``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .energy import (InadmissibleStateError, LagrangianState, check_admissible, force_unchecked,
                     hamiltonian_unchecked)

SCHEMES = ("leapfrog", "damped-leapfrog", "gradient-euler")


@dataclass
class ClusterState:
    """A Lagrangian state together with its partition into sticky clusters.

    ``starts[k]`` is the first label of cluster k; cluster k runs up to
    ``starts[k+1]`` (exclusive).
    """

    state: LagrangianState
    starts: np.ndarray

    def __post_init__(self):
        self.starts = np.asarray(self.starts, dtype=np.intp)

    @classmethod
    def singletons(cls, state):
        return cls(state, np.arange(state.positions.size, dtype=np.intp))

    @property
    def n_clusters(self):
        return int(self.starts.size)

    @property
    def t(self):
        return self.state.t

    def copy(self):
        return ClusterState(self.state.copy(), self.starts.copy())

    def cluster_sizes(self):
        return np.diff(np.append(self.starts, self.state.positions.size))


@dataclass
class IntegratorConfig:
    dt: float = 1e-3
    scheme: str = "leapfrog"
    epsilon: float | None = None
    t_end: float = 1.0
    output_stride: int = 100

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt={self.dt} must be > 0")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme {self.scheme!r} not in {SCHEMES}")
        if self.scheme == "damped-leapfrog" and not (self.epsilon is not None and self.epsilon > 0):
            raise ValueError("damped-leapfrog requires epsilon > 0")
        if not self.t_end >= 0:
            raise ValueError(f"t_end={self.t_end} must be >= 0")
        if int(self.output_stride) < 1:
            raise ValueError("output_stride must be >= 1")
        self.output_stride = int(self.output_stride)

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


def _accel(eta, ref, model, starts):
    f = force_unchecked(eta, ref, model)
    w = ref.masses
    if starts is None or starts.size == eta.size:
        return f / w
    fc = np.add.reduceat(f, starts)
    mc = np.add.reduceat(w, starts)
    return np.repeat(fc / mc, np.diff(np.append(starts, eta.size)))


def _check_contact(eta, model):
    if model.formulation == "A":
        gaps = np.diff(eta)
        if not np.all(gaps > 0):
            cell = int(np.flatnonzero(~(gaps > 0))[0])
            raise InadmissibleStateError(
                f"cell {cell} collapsed (gap {gaps[cell]:.3e}); contact is excluded under formulation A",
                cell=cell)


def sticky_project(state, ref, starts=None):
    """Merge touching or crossed neighbours into clusters.

    Returns a ClusterState. Merged clusters sit at the mass-weighted position
    and move with the mass-weighted velocity, so mass and momentum are kept.
    """
    if isinstance(state, ClusterState):
        starts = state.starts
        state = state.state
    eta = np.ascontiguousarray(state.positions)
    if starts is None:
        starts = np.arange(eta.size, dtype=np.intp)
    cs, _ = _project(eta, np.ascontiguousarray(state.velocities), ref, starts)
    return ClusterState(LagrangianState(cs[0], cs[1], state.t), cs[2])


def _project(eta, v, ref, starts):
    if starts.size < 2 or np.all(np.diff(eta[starts]) > 0):
        return (eta, v, starts), 0
    e, u, s, merges = _backend.kernels.sticky_merge(eta, v, ref.masses, starts)
    return (e, u, np.asarray(s, dtype=np.intp)), int(merges)


def _unpack(state):
    if isinstance(state, ClusterState):
        return state.state, state.starts
    return state, None


def _pack(template, eta, v, t, starts):
    st = LagrangianState(eta, v, t)
    if isinstance(template, ClusterState):
        return ClusterState(st, starts)
    return st


def _verlet(eta, v, acc, dt, ref, model, starts, scale=1.0):
    vh = v + 0.5 * dt * scale * acc
    eta = eta + dt * vh
    _check_contact(eta, model)
    acc = _accel(eta, ref, model, starts)
    return eta, vh + 0.5 * dt * scale * acc, acc


def step_hamiltonian(state, ref, model, dt):
    """One velocity-Verlet step of the Hamiltonian flow."""
    st, starts = _unpack(state)
    eta = st.positions
    check_admissible(eta, ref, model)
    acc = _accel(eta, ref, model, starts)
    eta, v, _ = _verlet(eta, st.velocities, acc, dt, ref, model, starts)
    return _pack(state, eta, v, st.t + dt, starts)


def step_damped(state, ref, model, dt, eps):
    """One Strang step of the scaled damped flow eps^2 eta'' + eta' = f / w.

    Exact damping v <- v exp(-dt/(2 eps^2)) on both sides of a leapfrog step
    whose force is divided by the effective mass eps^2 w. Time is the coarse
    time s and velocities are d(eta)/ds.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    st, starts = _unpack(state)
    eta = st.positions
    check_admissible(eta, ref, model)
    damp = math.exp(-0.5 * dt / (eps * eps))
    acc = _accel(eta, ref, model, starts)
    eta, v, _ = _verlet(eta, st.velocities * damp, acc, dt, ref, model, starts, 1.0 / (eps * eps))
    return _pack(state, eta, v * damp, st.t + dt, starts)


def step_gradient_flow(state, ref, model, dt):
    """One explicit Euler step of eta' = f / w, followed by sticky projection.

    Stored velocities are the gradient-flow velocities f / w at the new state.
    """
    st, starts = _unpack(state)
    s0 = np.arange(st.positions.size, dtype=np.intp) if starts is None else starts
    check_admissible(st.positions, ref, model)
    eta = st.positions + dt * _accel(st.positions, ref, model, s0)
    if model.formulation == "B":
        (eta, _, s0), _ = _project(eta, np.zeros_like(eta), ref, s0)
    else:
        _check_contact(eta, model)
    return _pack(state, eta, _accel(eta, ref, model, s0), st.t + dt, s0)


@dataclass
class MergeEvent:
    t: float
    merges: int
    H_before: float
    H_after: float
    momentum_before: float
    momentum_after: float


@dataclass
class Trajectory:
    """Output-grid record of a run."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    n_clusters: np.ndarray
    merge_events: list = field(default_factory=list)
    dt: float = 0.0
    stride: int = 1

    def state(self, k):
        return LagrangianState(self.positions[k], self.velocities[k], float(self.times[k]))

    def __len__(self):
        return self.times.size


class Integrator:
    """Advances one trajectory, caching accelerations between steps."""

    def __init__(self, initial, ref, model, config, track_merges=True):
        self.ref, self.model, self.cfg = ref, model, config
        st, starts = _unpack(initial)
        check_admissible(st.positions, ref, model)
        self.eta = np.array(st.positions, dtype=float)
        self.v = np.array(st.velocities, dtype=float)
        self.t = float(st.t)
        self.starts = np.arange(self.eta.size, dtype=np.intp) if starts is None else np.array(starts)
        self.sticky = model.formulation == "B"
        self.track = track_merges
        self.events = []
        if self.sticky:
            self._merge()
        self.acc = _accel(self.eta, ref, model, self.starts)
        if config.scheme == "damped-leapfrog":
            eps2 = config.epsilon ** 2
            self.damp = math.exp(-0.5 * config.dt / eps2)
            self.scale = 1.0 / eps2
        if config.scheme == "gradient-euler":
            self.v = self.acc.copy()

    def cluster_state(self):
        return ClusterState(LagrangianState(self.eta.copy(), self.v.copy(), self.t), self.starts.copy())

    def _merge(self):
        if self.starts.size < 2 or np.all(np.diff(self.eta[self.starts]) > 0):
            return False
        if self.track:
            before = hamiltonian_unchecked(self.eta, self.v, self.ref, self.model)
            mom0 = float(np.dot(self.ref.masses, self.v))
        (self.eta, self.v, self.starts), merges = _project(self.eta, self.v, self.ref, self.starts)
        if merges and self.track:
            after = hamiltonian_unchecked(self.eta, self.v, self.ref, self.model)
            self.events.append(MergeEvent(self.t, merges, before, after, mom0,
                                          float(np.dot(self.ref.masses, self.v))))
        return merges > 0

    def step(self):
        cfg, ref, model = self.cfg, self.ref, self.model
        dt = cfg.dt
        if cfg.scheme == "gradient-euler":
            self.eta = self.eta + dt * self.acc
            self.t += dt
            if self.sticky:
                self._merge()
            else:
                _check_contact(self.eta, model)
            self.acc = _accel(self.eta, ref, model, self.starts)
            self.v = self.acc.copy()
            return
        if cfg.scheme == "damped-leapfrog":
            self.v *= self.damp
            self.eta, self.v, self.acc = _verlet(self.eta, self.v, self.acc, dt, ref, model, self.starts, self.scale)
            self.v *= self.damp
        else:
            self.eta, self.v, self.acc = _verlet(self.eta, self.v, self.acc, dt, ref, model, self.starts)
        self.t += dt
        if self.sticky and self._merge():
            self.acc = _accel(self.eta, ref, model, self.starts)


def run(initial, ref, model, config, monitors=(), track_merges=True):
    """Integrate from ``initial`` and record every ``output_stride`` steps.

    Monitors are called as ``monitor(k, cluster_state)`` at each output.
    """
    r = Integrator(initial, ref, model, config, track_merges)
    n_steps = config.n_steps
    stride = config.output_stride
    n_out = n_steps // stride + 1
    n = r.eta.size
    times = np.empty(n_out)
    pos = np.empty((n_out, n))
    vel = np.empty((n_out, n))
    ncl = np.empty(n_out, dtype=np.intp)

    def record(k):
        times[k] = r.t
        pos[k] = r.eta
        vel[k] = r.v
        ncl[k] = r.starts.size
        for mon in monitors:
            mon(k, r.cluster_state())

    record(0)
    t0 = r.t
    for step in range(1, n_steps + 1):
        r.step()
        r.t = t0 + step * config.dt
        if step % stride == 0:
            record(step // stride)
    if n_steps % stride:
        times, pos, vel, ncl = (np.concatenate([a, a[-1:]]) for a in (times, pos, vel, ncl))
        record(n_out)
    return Trajectory(times, pos, vel, ncl, r.events, config.dt, stride)
