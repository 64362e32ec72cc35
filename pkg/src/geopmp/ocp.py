"""Constrained discrete-time optimal control problems and trajectories.

A problem bundles the horizon, manifold, dynamics, costs, per-stage state
constraints g_t(x_t) <= 0 (t = 1..T; the initial state is pinned by x_init
alone), admissible control sets, and a DFT support constraint.  Dynamics are
trusted to map the manifold into itself; ``rollout`` re-projects each step
and errors out if a step strays beyond tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DynamicsLeftManifold, InfeasibleError
from .frequency import (
    FrequencyConstraintMatrices,
    FrequencySpec,
    build_freq_matrices,
    freq_residual,
)
from .manifolds import Euclidean, Manifold, ManifoldPoint, SmoothMap

Array = np.ndarray

DYNAMICS_DEFECT_TOL = 1e-7
CONSTRAINT_TOL = 1e-8
FREQ_RESIDUAL_TOL = 1e-8


# ---------------------------------------------------------------------------
# Admissible control sets
# ---------------------------------------------------------------------------


class ControlSet:
    """Base class; subclasses carry the analytic structure tents need."""

    dim: int

    def violation(self, u: Array) -> float:
        """Nonnegative infeasibility measure, zero inside the set."""
        raise NotImplementedError

    def contains(self, u: Array, tol: float = CONSTRAINT_TOL) -> bool:
        return self.violation(np.asarray(u, dtype=float)) <= tol

    def project(self, u: Array) -> Array:
        """Euclidean projection onto the set (where closed-form/iterative)."""
        raise NotImplementedError(f"{type(self).__name__} has no projection")


@dataclass(frozen=True)
class FullSpace(ControlSet):
    dim: int

    def violation(self, u: Array) -> float:
        return 0.0

    def project(self, u: Array) -> Array:
        return np.asarray(u, dtype=float)


@dataclass(frozen=True)
class Box(ControlSet):
    lower: Array
    upper: Array

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.size != hi.size:
            raise ValueError("box bounds must have equal length")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def violation(self, u: Array) -> float:
        u = np.asarray(u, dtype=float).reshape(-1)
        over = np.maximum(u - self.upper, 0.0)
        under = np.maximum(self.lower - u, 0.0)
        return float(max(over.max(initial=0.0), under.max(initial=0.0)))

    def project(self, u: Array) -> Array:
        return np.clip(np.asarray(u, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class Polytope(ControlSet):
    """{u : A u <= b}; nonemptiness is only checked when a solver needs it."""

    A: Array
    b: Array

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        bb = np.asarray(self.b, dtype=float).reshape(-1)
        if a.shape[0] != bb.size:
            raise ValueError("polytope A and b row counts differ")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "b", bb)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def violation(self, u: Array) -> float:
        r = self.A @ np.asarray(u, dtype=float).reshape(-1) - self.b
        return float(np.maximum(r, 0.0).max(initial=0.0))

    def project(self, u: Array) -> Array:
        # Dykstra over the half-spaces; each half-space projection is exact.
        u = np.asarray(u, dtype=float).reshape(-1)
        if self.contains(u, tol=0.0):
            return u
        x = u.copy()
        corrections = np.zeros((self.A.shape[0], u.size))
        for _ in range(2000):
            x_prev = x.copy()
            for i, (a, bi) in enumerate(zip(self.A, self.b)):
                y = x + corrections[i]
                excess = a @ y - bi
                z = y - a * (max(excess, 0.0) / (a @ a)) if excess > 0 else y
                corrections[i] = y - z
                x = z
            if np.linalg.norm(x - x_prev) <= 1e-14 * (1.0 + np.linalg.norm(x)):
                break
        return x


@dataclass(frozen=True)
class AffineSubspace(ControlSet):
    """{u : C u = d}."""

    C: Array
    d: Array

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.C, dtype=float))
        dd = np.asarray(self.d, dtype=float).reshape(-1)
        if c.shape[0] != dd.size:
            raise ValueError("affine subspace C and d row counts differ")
        object.__setattr__(self, "C", c)
        object.__setattr__(self, "d", dd)

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    def violation(self, u: Array) -> float:
        r = self.C @ np.asarray(u, dtype=float).reshape(-1) - self.d
        return float(np.abs(r).max(initial=0.0))

    def project(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float).reshape(-1)
        correction = np.linalg.pinv(self.C) @ (self.C @ u - self.d)
        return u - correction


@dataclass(frozen=True)
class SmoothIneq(ControlSet):
    """{u : h(u) <= 0 componentwise} for a smooth h built via SmoothMap.of_state."""

    h: SmoothMap
    dim: int

    def violation(self, u: Array) -> float:
        vals = self.h(np.asarray(u, dtype=float))
        return float(np.maximum(vals, 0.0).max(initial=0.0))


# ---------------------------------------------------------------------------
# Problem and trajectory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlProblem:
    horizon: int
    manifold: Manifold
    x_init: ManifoldPoint
    dynamics: tuple[SmoothMap, ...]
    stage_costs: tuple[SmoothMap, ...]
    terminal_cost: SmoothMap
    state_constraints: tuple[SmoothMap | None, ...]  # index t-1 holds g_t, t=1..T
    control_sets: tuple[ControlSet, ...]
    freq: FrequencySpec
    doc: dict | None = None  # source document when built from a problem file

    def __post_init__(self):
        T = self.horizon
        if T < 1:
            raise ValueError("horizon must be >= 1")
        for label, seq in (
            ("dynamics", self.dynamics),
            ("stage_costs", self.stage_costs),
            ("state_constraints", self.state_constraints),
            ("control_sets", self.control_sets),
        ):
            object.__setattr__(self, label, tuple(seq))
            if len(getattr(self, label)) != T:
                raise ValueError(f"{label} must have length {T}")
        if self.x_init.manifold is not self.manifold:
            raise ValueError("x_init must live on the problem manifold")
        if self.freq.horizon != T:
            raise ValueError("frequency spec horizon differs from problem horizon")
        m = self.freq.control_dim
        for t, s in enumerate(self.control_sets):
            if s.dim != m:
                raise ValueError(f"control set at t={t} has dim {s.dim}, expected {m}")

    @property
    def control_dim(self) -> int:
        return self.freq.control_dim

    @cached_property
    def freq_matrices(self) -> FrequencyConstraintMatrices:
        return build_freq_matrices(self.freq)

    def constraint_dim(self, t: int) -> int:
        """Number of state-constraint rows at time t (1-based), probing once."""
        g = self.state_constraints[t - 1]
        if g is None:
            return 0
        return g(self.x_init.ambient).size

    def probe_dynamics(self, rng: np.random.Generator, n: int = 20) -> float:
        """Worst membership defect of f_t(x, u) over random on-manifold probes.

        The dynamics are contractually manifold-invariant; this check makes a
        violation loud instead of silently corrupting rollouts.
        """
        worst = 0.0
        for _ in range(n):
            x = self.manifold.random_point(rng)
            t = int(rng.integers(self.horizon))
            u = rng.standard_normal(self.control_dim)
            img = self.dynamics[t](x.ambient, u)
            worst = max(worst, self.manifold.defect(img))
        return worst


@dataclass(frozen=True)
class Trajectory:
    states: tuple[ManifoldPoint, ...]
    controls: Array

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.controls, dtype=float))
        object.__setattr__(self, "controls", u)
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.states) != u.shape[0] + 1:
            raise ValueError("need T+1 states for T controls")

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]


@dataclass(frozen=True)
class FeasibilityReport:
    dynamics_defect: float
    state_constraint_violation: float
    control_set_violation: float
    freq_residual_norm: float

    def feasible(
        self,
        dyn_tol: float = DYNAMICS_DEFECT_TOL,
        con_tol: float = CONSTRAINT_TOL,
        freq_tol: float = FREQ_RESIDUAL_TOL,
    ) -> bool:
        return (
            self.dynamics_defect <= dyn_tol
            and self.state_constraint_violation <= con_tol
            and self.control_set_violation <= con_tol
            and self.freq_residual_norm <= freq_tol
        )

    def as_dict(self) -> dict:
        return {
            "dynamics_defect": self.dynamics_defect,
            "state_constraint_violation": self.state_constraint_violation,
            "control_set_violation": self.control_set_violation,
            "freq_residual_norm": self.freq_residual_norm,
        }


def rollout(problem: ControlProblem, controls) -> Trajectory:
    """Integrate the dynamics from x_init under the given controls.

    Each raw step must land within ``DYNAMICS_DEFECT_TOL`` of the manifold;
    it is then re-projected so numerical drift cannot compound.
    """
    u = np.atleast_2d(np.asarray(controls, dtype=float))
    if u.shape != (problem.horizon, problem.control_dim):
        raise ValueError(
            f"controls must have shape {(problem.horizon, problem.control_dim)}, "
            f"got {u.shape}"
        )
    m = problem.manifold
    states = [problem.x_init]
    for t in range(problem.horizon):
        raw = problem.dynamics[t](states[-1].ambient, u[t])
        defect = m.defect(raw)
        if defect > DYNAMICS_DEFECT_TOL:
            raise DynamicsLeftManifold(
                f"dynamics step t={t} left the manifold: defect {defect:.3e}"
            )
        states.append(ManifoldPoint(m, m.project(raw)))
    return Trajectory(states=tuple(states), controls=u)


def feasibility_report(problem: ControlProblem, traj: Trajectory) -> FeasibilityReport:
    """Constraint-block residuals; reports, never raises on infeasibility."""
    m = problem.manifold
    dyn = max(
        (m.defect(s.ambient) for s in traj.states),
        default=0.0,
    )
    dyn = max(dyn, float(np.linalg.norm(traj.states[0].ambient - problem.x_init.ambient)))
    for t in range(traj.horizon):
        raw = problem.dynamics[t](traj.states[t].ambient, traj.controls[t])
        dyn = max(dyn, float(np.linalg.norm(traj.states[t + 1].ambient - raw)))

    state_v = 0.0
    for t in range(1, traj.horizon + 1):
        g = problem.state_constraints[t - 1]
        if g is not None:
            vals = g(traj.states[t].ambient)
            state_v = max(state_v, float(np.maximum(vals, 0.0).max(initial=0.0)))

    control_v = max(
        (s.violation(traj.controls[t]) for t, s in enumerate(problem.control_sets)),
        default=0.0,
    )

    res = freq_residual(problem.freq_matrices, traj.controls)
    freq_norm = float(np.abs(res).max(initial=0.0))

    return FeasibilityReport(
        dynamics_defect=float(dyn),
        state_constraint_violation=state_v,
        control_set_violation=float(control_v),
        freq_residual_norm=freq_norm,
    )


def total_cost(problem: ControlProblem, traj: Trajectory) -> float:
    """sum_t c_t(x_t, u_t) + c_T(x_T)."""
    acc = 0.0
    for t in range(traj.horizon):
        acc += float(problem.stage_costs[t](traj.states[t].ambient, traj.controls[t])[0])
    acc += float(problem.terminal_cost(traj.states[-1].ambient)[0])
    return acc


# ---------------------------------------------------------------------------
# Affine isometric re-embedding of flat problems
# ---------------------------------------------------------------------------


def reembed_affine(problem: ControlProblem, Q: Array, b: Array) -> ControlProblem:
    """Transport a flat problem through x' = Q x + b with Q^T Q = I.

    The image problem lives on Euclidean(N') and is equivalent stage by
    stage: feasibility, costs, and PMP residuals are preserved exactly.
    """
    if not isinstance(problem.manifold, Euclidean):
        raise ValueError("re-embedding is defined for flat problems only")
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    n = problem.manifold.dim
    if Q.shape[1] != n or Q.shape[0] != b.size or Q.shape[0] < n:
        raise ValueError("Q must be N' x n with N' >= n and b length N'")
    if np.linalg.norm(Q.T @ Q - np.eye(n)) > 1e-12:
        raise ValueError("Q must have orthonormal columns")

    big = Euclidean(Q.shape[0])

    def pull(x: Array) -> Array:
        return Q.T @ (np.asarray(x, dtype=float) - b)

    def lift_dynamics(f: SmoothMap) -> SmoothMap:
        return SmoothMap(
            fn=lambda x, u, _f=f: Q @ _f.fn(pull(x), u) + b,
            jac_state=(
                None
                if f.jac_state is None
                else lambda x, u, _f=f: Q @ np.atleast_2d(_f.jac_state(pull(x), u)) @ Q.T
            ),
            jac_control=(
                None
                if f.jac_control is None
                else lambda x, u, _f=f: Q @ np.atleast_2d(_f.jac_control(pull(x), u))
            ),
            fd_step=f.fd_step,
            takes_control=True,
            name=f.name,
        )

    def lift_scalar(c: SmoothMap) -> SmoothMap:
        return SmoothMap(
            fn=lambda x, u, _c=c: _c.fn(pull(x), u),
            jac_state=(
                None
                if c.jac_state is None
                else lambda x, u, _c=c: np.atleast_2d(_c.jac_state(pull(x), u)) @ Q.T
            ),
            jac_control=(
                None
                if c.jac_control is None
                else lambda x, u, _c=c: _c.jac_control(pull(x), u)
            ),
            fd_step=c.fd_step,
            takes_control=c.takes_control,
            name=c.name,
        )

    return ControlProblem(
        horizon=problem.horizon,
        manifold=big,
        x_init=big.point(Q @ problem.x_init.ambient + b),
        dynamics=tuple(lift_dynamics(f) for f in problem.dynamics),
        stage_costs=tuple(lift_scalar(c) for c in problem.stage_costs),
        terminal_cost=lift_scalar(problem.terminal_cost),
        state_constraints=tuple(
            None if g is None else lift_scalar(g) for g in problem.state_constraints
        ),
        control_sets=problem.control_sets,
        freq=problem.freq,
    )


def map_trajectory_affine(
    traj: Trajectory, target: ControlProblem, Q: Array, b: Array
) -> Trajectory:
    """Image of a flat trajectory under the same re-embedding."""
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    states = tuple(
        ManifoldPoint(target.manifold, Q @ s.ambient + b) for s in traj.states
    )
    return Trajectory(states=states, controls=traj.controls.copy())
