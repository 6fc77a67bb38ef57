"""Theta-method time integration of the block DAE system.

The mass matrix is singular (the rotation multiplier has no rate and the
weak-symmetry row only constrains S'), so no ODE reduction is attempted:
each step solves (M + dt theta A) X = rhs with a factorization computed
once and reused.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla


class SolverError(Exception):
    """Linear solve failed or produced non-finite state."""


@dataclass
class SimState:
    t: float
    k: int
    x: np.ndarray

    def copy(self):
        return SimState(self.t, self.k, self.x.copy())


@dataclass
class ThetaScheme:
    """One-step integrator parameters; theta=1/2 is Crank-Nicolson."""

    theta: float = 0.5
    dt: float = 1e-3
    solver: str = "direct"
    tol: float = 1e-10
    residual_check: float = 1e-12

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(f"theta={self.theta} outside [1/2, 1]")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


def project_initial(space, u0=None, w0=None, v0=None, z0=None, t=0.0, k=0):
    """L2-project initial data; the stress and multiplier blocks start at 0."""
    x = np.zeros(space.ndof)
    for block, fn in (("U", u0), ("W", w0), ("V", v0), ("Z", z0)):
        if fn is None:
            continue
        for cell in space.mesh.p_cells:
            x[space.block_dofs(block, cell)] = space.project("U", cell, fn).T
    return SimState(t, k, x)


class TimeStepper:
    """Advances M X' + A X = F(t) by the theta scheme.

    ``load`` maps a time to the assembled right-hand side (None means
    F = 0).  The operator factorization is cached; changing dt or theta
    requires a new stepper.
    """

    def __init__(self, M, A, scheme, load=None):
        self.M = M.tocsr()
        self.A = A.tocsr()
        self.scheme = scheme
        self.load = load
        dt, th = scheme.dt, scheme.theta
        self.lhs = (self.M + dt * th * self.A).tocsc()
        self.rhs_op = (self.M - dt * (1.0 - th) * self.A).tocsr()
        self._lhs_norm = float(abs(self.lhs).sum(axis=1).max())
        if scheme.solver == "direct":
            try:
                self._lu = spla.splu(self.lhs)
            except RuntimeError as exc:
                raise SolverError(
                    f"factorization of (M + dt*theta*A) failed: {exc}; "
                    "check penalty constants and boundary conditions") from exc
        elif scheme.solver == "iterative":
            try:
                ilu = spla.spilu(self.lhs, drop_tol=1e-6, fill_factor=20)
                self._prec = spla.LinearOperator(self.lhs.shape, ilu.solve)
            except RuntimeError as exc:
                raise SolverError(f"ILU preconditioner failed: {exc}") from exc
        else:
            raise ValueError(f"unknown solver {scheme.solver!r}")
        self._f_cache = None

    def _force(self, t):
        if self.load is None:
            return None
        return self.load(t)

    def step(self, state):
        dt, th = self.scheme.dt, self.scheme.theta
        t_next = state.t + dt
        rhs = self.rhs_op @ state.x
        if self.load is not None:
            f_old = self._f_cache if self._f_cache is not None \
                else self._force(state.t)
            f_new = self._force(t_next)
            rhs = rhs + dt * (th * f_new + (1.0 - th) * f_old)
            self._f_cache = f_new
        if self.scheme.solver == "direct":
            x = self._lu.solve(rhs)
            # normwise backward error, robust to ill-scaled coefficients
            res = np.linalg.norm(self.lhs @ x - rhs, np.inf)
            denom = (self._lhs_norm * np.linalg.norm(x, np.inf)
                     + np.linalg.norm(rhs, np.inf))
            if res > self.scheme.residual_check * max(denom, 1e-300):
                raise SolverError(
                    f"direct solve backward error {res / denom:.3e} exceeds "
                    f"tolerance at t={t_next}; the system may be singular")
        else:
            x, info = spla.gmres(self.lhs, rhs, M=self._prec,
                                 rtol=self.scheme.tol, maxiter=2000)
            if info != 0:
                raise SolverError(f"GMRES did not converge (info={info})")
        if not np.all(np.isfinite(x)):
            raise SolverError(f"non-finite state at step {state.k + 1}")
        return SimState(t_next, state.k + 1, x)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)       # strided snapshots
    monitors: list = field(default_factory=list)     # one record per step
    final: SimState = None


def run(stepper, state0, n_steps, monitor=None, snapshot_stride=0,
        callback=None):
    """March ``n_steps`` steps, recording monitors and strided snapshots.

    ``monitor(state)`` returns a dict appended per step (including the
    initial state); NaN/Inf states abort with the failing step index.
    """
    traj = Trajectory()
    state = state0.copy()
    stepper._f_cache = None

    def record(s):
        traj.times.append(s.t)
        if monitor is not None:
            traj.monitors.append(monitor(s))
        if snapshot_stride and s.k % snapshot_stride == 0:
            traj.states.append(s.copy())
        if callback is not None:
            callback(s)

    record(state)
    for _ in range(n_steps):
        state = stepper.step(state)
        record(state)
    traj.final = state
    return traj


def n_steps_for(T, dt):
    """Number of steps so that n * dt = T exactly (integer check)."""
    n = round(T / dt)
    if abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def save_state(path, state, space):
    """Checkpoint: JSON header next to a raw .npy coefficient vector."""
    header = {
        "t": state.t,
        "k": state.k,
        "ndof": space.ndof,
        "offsets": {b: int(space.block_offset[b]) for b in space.block_offset},
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(header, fh, indent=1)
    np.save(str(path) + ".npy", state.x)


def load_state(path):
    with open(str(path) + ".json") as fh:
        header = json.load(fh)
    x = np.load(str(path) + ".npy")
    if len(x) != header["ndof"]:
        raise SolverError(f"checkpoint length {len(x)} != ndof {header['ndof']}")
    return SimState(header["t"], header["k"], x), header
