"""Candidate-trajectory solvers: direct enumeration/descent and indirect shooting.

These are desk-scale solvers meant to produce and cross-validate candidate
optima for the necessary-condition machinery, not performance-grade NLP
codes.  ``solve_direct`` covers a refining grid search over bounded control
sets and projected gradient descent over projectable sets intersected with
the frequency kernel.  ``solve_shooting`` solves the two-point boundary
value problem formed by the state/adjoint recursions: the unknowns are the
terminal adjoint covector and the frequency multiplier, the inner Newton
solve picks controls from the stationarity equations, and the outer residual
is the boundary mismatch.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import InfeasibleError, NonConvergence, SingularStationarity
from .frequency import kernel_projector
from .ocp import (
    AffineSubspace,
    Box,
    ControlProblem,
    FullSpace,
    Polytope,
    Trajectory,
    feasibility_report,
    rollout,
    total_cost,
)
from .pmp import RecoveryResult, recover_multipliers

Array = np.ndarray

METHODS = ("direct_grid", "projected_descent", "shooting")


@dataclass(frozen=True)
class SolveOptions:
    method: str = "direct_grid"
    max_iters: int = 500
    tol: float = 1e-10
    grid_points: int = 9
    grid_resolution: float = 1e-9
    n_starts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.max_iters < 1 or self.grid_points < 2 or self.n_starts < 1:
            raise ValueError("iteration counts and grid resolutions must be positive")
        if self.grid_resolution <= 0 or self.tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class SolveResult:
    trajectory: Trajectory
    objective: float
    converged: bool
    status: str
    iterations: int
    recovery: RecoveryResult | None = None

    @property
    def pmp_report(self):
        return None if self.recovery is None else self.recovery.report

    def as_dict(self) -> dict:
        out = {
            "objective": self.objective,
            "converged": self.converged,
            "status": self.status,
            "iterations": self.iterations,
        }
        if self.recovery is not None:
            out["pmp_report"] = self.recovery.report.as_dict()
            out["certificate_exact"] = self.recovery.exact
        return out


def _finish(problem: ControlProblem, controls: Array, status: str, iterations: int,
            converged: bool) -> SolveResult:
    traj = rollout(problem, controls)
    recovery = recover_multipliers(problem, traj)
    return SolveResult(
        trajectory=traj,
        objective=total_cost(problem, traj),
        converged=converged,
        status=status,
        iterations=iterations,
        recovery=recovery,
    )


def objective_gradient(problem: ControlProblem, controls: Array) -> Array:
    """Gradient of the rollout cost in the stacked controls (ambient chain rule)."""
    traj = rollout(problem, controls)
    T, m = traj.horizon, problem.control_dim
    xs, us = traj.states, traj.controls
    q = problem.terminal_cost.jacobian_state(xs[T].ambient).reshape(-1)
    grad = np.zeros((T, m))
    for t in range(T - 1, -1, -1):
        fu = problem.dynamics[t].jacobian_control(xs[t].ambient, us[t])
        cu = problem.stage_costs[t].jacobian_control(xs[t].ambient, us[t]).reshape(-1)
        grad[t] = cu + fu.T @ q
        fx = problem.dynamics[t].jacobian_state(xs[t].ambient, us[t])
        cx = problem.stage_costs[t].jacobian_state(xs[t].ambient, us[t]).reshape(-1)
        q = cx + fx.T @ q
    return grad.reshape(-1)


# ---------------------------------------------------------------------------
# Direct methods
# ---------------------------------------------------------------------------


def _control_bounds(problem: ControlProblem) -> tuple[Array, Array]:
    """Per-stage box bounds enclosing each control set (grid search support)."""
    m = problem.control_dim
    lo = np.zeros((problem.horizon, m))
    hi = np.zeros((problem.horizon, m))
    for t, s in enumerate(problem.control_sets):
        if isinstance(s, Box):
            lo[t], hi[t] = s.lower, s.upper
        elif isinstance(s, Polytope):
            for i in range(m):
                e = np.zeros(m)
                e[i] = 1.0
                for sign, target in ((1.0, lo), (-1.0, hi)):
                    res = scipy.optimize.linprog(
                        sign * e, A_ub=s.A, b_ub=s.b, bounds=[(None, None)] * m,
                        method="highs",
                    )
                    if res.status == 3:  # unbounded
                        raise InfeasibleError(
                            f"grid search needs bounded control sets; polytope at t={t} "
                            f"is unbounded in coordinate {i}"
                        )
                    if not res.success:
                        raise InfeasibleError(f"control polytope at t={t} is empty")
                    target[t, i] = sign * res.fun
        else:
            raise InfeasibleError(
                f"grid search needs bounded control sets, got "
                f"{type(s).__name__} at t={t}"
            )
    return lo, hi


def _feasible(problem: ControlProblem, controls: Array) -> bool:
    traj = rollout(problem, controls)
    return feasibility_report(problem, traj).feasible()


def _solve_grid(problem: ControlProblem, opts: SolveOptions) -> SolveResult:
    T, m = problem.horizon, problem.control_dim
    dims = T * m
    if dims > 8:
        raise ValueError("grid search is limited to horizon * control_dim <= 8")
    lo, hi = (a.reshape(-1) for a in _control_bounds(problem))
    # Cap the per-axis point count so one refinement level stays ~2e5 nodes.
    points = max(2, min(opts.grid_points, int(2e5 ** (1.0 / dims))))

    center = None
    half = (hi - lo) / 2.0
    best: tuple[float, Array] | None = None
    levels = 0
    while True:
        levels += 1
        if center is None:
            axis_lo, axis_hi = lo, hi
        else:
            axis_lo = np.maximum(center - half, lo)
            axis_hi = np.minimum(center + half, hi)
        axes = [
            np.unique(np.linspace(axis_lo[i], axis_hi[i], points))
            for i in range(dims)
        ]
        for combo in itertools.product(*axes):
            u = np.asarray(combo)
            if not _feasible(problem, u.reshape(T, m)):
                continue
            cost = total_cost(problem, rollout(problem, u.reshape(T, m)))
            if best is None or cost < best[0]:
                best = (cost, u)
        if best is None:
            raise InfeasibleError("no feasible point on the control grid")
        center = best[1]
        spacing = max(
            (ah - al) / (points - 1) for al, ah in zip(axis_lo, axis_hi)
        )
        if spacing <= opts.grid_resolution or levels >= opts.max_iters:
            break
        half = 1.5 * spacing * np.ones(dims)
    return _finish(
        problem,
        best[1].reshape(T, m),
        status="grid refined to target resolution",
        iterations=levels,
        converged=True,
    )


class _FeasibleProjector:
    """Projection onto (per-stage control sets) intersected with the frequency
    kernel, via Dykstra when both are present."""

    def __init__(self, problem: ControlProblem):
        self.problem = problem
        self.T, self.m = problem.horizon, problem.control_dim
        mats = problem.freq_matrices
        self.kernel = (
            None if mats.ell == 0 else kernel_projector(mats, self.T, self.m)
        )
        self.trivial_sets = all(
            isinstance(s, FullSpace) for s in problem.control_sets
        )

    def _project_sets(self, flat: Array) -> Array:
        u = flat.reshape(self.T, self.m)
        out = np.stack(
            [self.problem.control_sets[t].project(u[t]) for t in range(self.T)]
        )
        return out.reshape(-1)

    def __call__(self, flat: Array) -> Array:
        if self.kernel is None:
            return self._project_sets(flat)
        if self.trivial_sets:
            return self.kernel @ flat
        # Dykstra between the two convex sets.
        x = flat.copy()
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        for _ in range(500):
            y = self._project_sets(x + p)
            p = x + p - y
            x_new = self.kernel @ (y + q)
            q = y + q - x_new
            if np.linalg.norm(x_new - x) <= 1e-14 * (1.0 + np.linalg.norm(x_new)):
                x = x_new
                break
            x = x_new
        return x


def _solve_descent(problem: ControlProblem, opts: SolveOptions) -> SolveResult:
    if any(g is not None for g in problem.state_constraints):
        raise ValueError(
            "projected descent does not handle state constraints; use the grid"
        )
    T, m = problem.horizon, problem.control_dim
    project = _FeasibleProjector(problem)
    rng = np.random.default_rng(opts.seed)

    def cost_of(flat: Array) -> float:
        return total_cost(problem, rollout(problem, flat.reshape(T, m)))

    best: tuple[float, Array, int, bool] | None = None
    for start in range(opts.n_starts):
        u = project(
            np.zeros(T * m) if start == 0 else rng.normal(scale=1.0, size=T * m)
        )
        cost = cost_of(u)
        step = 1.0
        converged = False
        it = 0
        for it in range(1, opts.max_iters + 1):
            grad = objective_gradient(problem, u.reshape(T, m))
            probe = project(u - grad)
            if np.linalg.norm(probe - u) <= opts.tol * (1.0 + np.linalg.norm(u)):
                converged = True
                break
            accepted = False
            for _ in range(60):
                cand = project(u - step * grad)
                cand_cost = cost_of(cand)
                drop = cost - cand_cost
                if drop >= 1e-4 * float(grad @ (u - cand)) and drop > 0:
                    u, cost = cand, cand_cost
                    step = min(step * 1.5, 1e6)
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                # Step collapsed: local stationarity at machine precision.
                converged = True
                break
        if best is None or cost < best[0]:
            best = (cost, u, it, converged)
    cost, u, iters, converged = best
    return _finish(
        problem,
        u.reshape(T, m),
        status="projected descent converged" if converged else "max iterations",
        iterations=iters,
        converged=converged,
    )


def solve_direct(problem: ControlProblem, opts: SolveOptions | None = None) -> SolveResult:
    """Direct search for the constrained minimizer.

    ``direct_grid`` enumerates a refining control grid over bounded sets and
    returns the best feasible node; ``projected_descent`` runs multistart
    projected gradient descent over the control sets intersected with the
    frequency-constraint kernel.  The result carries the recovered
    certificate's verification report.
    """
    opts = opts or SolveOptions()
    if opts.method == "direct_grid":
        return _solve_grid(problem, opts)
    if opts.method == "projected_descent":
        return _solve_descent(problem, opts)
    raise ValueError(f"solve_direct does not handle method {opts.method!r}")


# ---------------------------------------------------------------------------
# Indirect shooting
# ---------------------------------------------------------------------------


class _ShootingSystem:
    """Boundary-value residual for the state/adjoint two-point problem.

    Outer unknowns z = (terminal covector ambient components, lambda).  For
    a given z, the inner Newton solve finds controls (and tangent-plane
    multipliers for affine control sets) satisfying the stationarity
    equations with nu = 1; the outer residual stacks the transversality
    mismatch at T and the frequency constraint residual.
    """

    def __init__(self, problem: ControlProblem, init_controls: Array):
        if any(g is not None for g in problem.state_constraints):
            raise ValueError("shooting excludes state-constrained problems")
        for t, s in enumerate(problem.control_sets):
            if not isinstance(s, (FullSpace, AffineSubspace)):
                raise ValueError(
                    f"shooting supports FullSpace/AffineSubspace control sets, "
                    f"got {type(s).__name__} at t={t}"
                )
        self.problem = problem
        self.T, self.m = problem.horizon, problem.control_dim
        self.N = problem.manifold.ambient_dim
        self.ell = problem.freq_matrices.ell
        self.zeta_sizes = [
            s.C.shape[0] if isinstance(s, AffineSubspace) else 0
            for s in problem.control_sets
        ]
        self.n_inner = self.T * self.m + sum(self.zeta_sizes)
        self.inner = np.zeros(self.n_inner)
        self.inner[: self.T * self.m] = np.asarray(init_controls, dtype=float).reshape(-1)

    def _split_inner(self, v: Array) -> tuple[Array, list[Array]]:
        u = v[: self.T * self.m].reshape(self.T, self.m)
        zetas = []
        off = self.T * self.m
        for q in self.zeta_sizes:
            zetas.append(v[off : off + q])
            off += q
        return u, zetas

    def _adjoints(self, traj: Trajectory, pi: Array) -> list[Array]:
        """p_1..p_T with p_T = P(x_T) pi and nu = 1 (ambient vectors)."""
        xs, us = traj.states, traj.controls
        p = [xs[self.T].projector() @ pi]
        for t in range(self.T - 1, 0, -1):
            fx = self.problem.dynamics[t].jacobian_state(xs[t].ambient, us[t])
            cx = self.problem.stage_costs[t].jacobian_state(xs[t].ambient, us[t]).reshape(-1)
            p.insert(0, xs[t].projector() @ (fx.T @ p[0] - cx))
        return p

    def _inner_residual(self, v: Array, pi: Array, lam: Array) -> Array:
        u, zetas = self._split_inner(v)
        traj = rollout(self.problem, u)
        p = self._adjoints(traj, pi)
        mats = self.problem.freq_matrices
        rows = []
        for t in range(self.T):
            x = traj.states[t]
            fu = self.problem.dynamics[t].jacobian_control(x.ambient, u[t])
            cu = self.problem.stage_costs[t].jacobian_control(x.ambient, u[t]).reshape(-1)
            w = fu.T @ p[t] - cu
            if self.ell:
                w = w + mats.matrices[t].T @ lam
            s = self.problem.control_sets[t]
            if isinstance(s, AffineSubspace):
                rows.append(w - s.C.T @ zetas[t])
                rows.append(s.C @ u[t] - s.d)
            else:
                rows.append(w)
        return np.concatenate(rows)

    def _solve_inner(self, pi: Array, lam: Array, tol: float = 1e-11) -> Array:
        v = self.inner.copy()
        res = self._inner_residual(v, pi, lam)
        for _ in range(50):
            nrm = np.linalg.norm(res, ord=np.inf)
            if nrm <= tol:
                break
            jac = self._fd_jacobian(lambda w: self._inner_residual(w, pi, lam), v)
            sv = np.linalg.svd(jac, compute_uv=False)
            if sv[-1] <= 1e-12 * max(1.0, sv[0]):
                raise SingularStationarity(
                    "inner stationarity system is singular "
                    f"(conditioning {sv[0] / max(sv[-1], 1e-300):.2e})"
                )
            delta = np.linalg.solve(jac, -res)
            # Damped step: accept the first fraction that reduces the residual.
            scale = 1.0
            for _ in range(30):
                cand = v + scale * delta
                cand_res = self._inner_residual(cand, pi, lam)
                if np.linalg.norm(cand_res, ord=np.inf) < nrm:
                    v, res = cand, cand_res
                    break
                scale *= 0.5
            else:
                raise NonConvergence(
                    "inner stationarity Newton stalled", residual=float(nrm)
                )
        else:
            raise NonConvergence(
                "inner stationarity Newton did not converge",
                residual=float(np.linalg.norm(res, ord=np.inf)),
            )
        self.inner = v
        return v

    @staticmethod
    def _fd_jacobian(fn, v: Array, h: float = 1e-7) -> Array:
        cols = []
        for i in range(v.size):
            e = np.zeros_like(v)
            e[i] = h * (1.0 + abs(v[i]))
            cols.append((fn(v + e) - fn(v - e)) / (2.0 * e[i]))
        return np.column_stack(cols)

    def split_outer(self, z: Array) -> tuple[Array, Array]:
        return z[: self.N], z[self.N :]

    def residual(self, z: Array) -> Array:
        pi, lam = self.split_outer(z)
        v = self._solve_inner(pi, lam)
        u, _ = self._split_inner(v)
        traj = rollout(self.problem, u)
        x_T = traj.states[self.T]
        target = -self.problem.terminal_cost.jacobian_state(x_T.ambient).reshape(-1)
        transversality = x_T.projector() @ (pi - target)
        rows = [transversality]
        if self.ell:
            rows.append(
                sum(
                    self.problem.freq_matrices.matrices[t] @ u[t]
                    for t in range(self.T)
                )
            )
        return np.concatenate(rows)

    def controls(self) -> Array:
        u, _ = self._split_inner(self.inner)
        return u


def solve_shooting(
    problem: ControlProblem,
    opts: SolveOptions | None = None,
    init_guess: Array | None = None,
) -> SolveResult:
    """Single shooting on the two-point boundary value problem.

    Requires an unconstrained-state problem with FullSpace or AffineSubspace
    control sets; frequency constraints are handled by making the frequency
    multiplier an outer unknown.  Raises :class:`NonConvergence` when every
    start fails and :class:`SingularStationarity` when the inner control
    solve degenerates.
    """
    opts = opts or SolveOptions(method="shooting")
    T, m = problem.horizon, problem.control_dim
    if init_guess is None:
        init_guess = np.zeros((T, m))
    init_guess = np.asarray(init_guess, dtype=float).reshape(T, m)
    for t in range(T):
        init_guess[t] = problem.control_sets[t].project(init_guess[t])

    rng = np.random.default_rng(opts.seed)
    sys = _ShootingSystem(problem, init_guess)

    traj0 = rollout(problem, init_guess)
    pi0 = -problem.terminal_cost.jacobian_state(traj0.states[T].ambient).reshape(-1)
    z0 = np.concatenate([pi0, np.zeros(sys.ell)])

    last_residual = np.inf
    last_error: Exception | None = None
    for start in range(opts.n_starts):
        z_init = z0 if start == 0 else z0 + rng.normal(scale=0.5, size=z0.size)
        sys.inner[: T * m] = init_guess.reshape(-1)
        try:
            sol = scipy.optimize.least_squares(
                sys.residual, z_init, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14,
                max_nfev=200 * (z0.size + 1),
            )
        except (NonConvergence, SingularStationarity) as exc:
            last_error = exc
            if isinstance(exc, SingularStationarity) and start == opts.n_starts - 1:
                raise
            continue
        res_norm = float(np.linalg.norm(sys.residual(sol.x), ord=np.inf))
        last_residual = min(last_residual, res_norm)
        if res_norm <= 1e-9:
            return _finish(
                problem,
                sys.controls(),
                status="shooting converged",
                iterations=int(sol.nfev),
                converged=True,
            )
    if last_error is not None and not np.isfinite(last_residual):
        raise NonConvergence(
            f"shooting failed in the inner solve: {last_error}", residual=None
        )
    raise NonConvergence(
        "shooting Newton did not reach tolerance", residual=last_residual
    )


def solve(problem: ControlProblem, opts: SolveOptions | None = None,
          init_guess: Array | None = None) -> SolveResult:
    """Dispatch on ``opts.method`` across all solvers."""
    opts = opts or SolveOptions()
    if opts.method == "shooting":
        return solve_shooting(problem, opts, init_guess)
    return solve_direct(problem, opts)
