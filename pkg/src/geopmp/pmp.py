"""First-order necessary conditions as numeric residuals, and their recovery.

Given a feasible trajectory and a candidate certificate (adjoint covectors
p_1..p_T, state-constraint multipliers mu_1..mu_T, abnormal multiplier nu,
frequency multiplier lambda), ``verify`` evaluates every condition as a
nonnegative residual:

  * nonnegativity of (nu, mu),
  * nontriviality of (mu, nu, lambda) via their total l1 mass,
  * the backward adjoint recursion and terminal transversality,
  * stationarity: the control-slot covector
        w_t = T*_u f_t . p_{t+1} - nu d_u c_t + E_t^T lambda
    must pair nonpositively with every tent direction of the admissible set,
    measured as the distance from w_t to the tent's dual cone,
  * complementary slackness mu_t^j g_t^j(x_t) = 0.

``recover_multipliers`` searches for multipliers making all residuals vanish,
exploiting that the adjoints are linear in (nu, mu): the conditions become a
linear feasibility problem once active sets fix the complementarity pattern.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import InfeasibleError, TentUnavailable
from .manifolds import Covector, differential
from .ocp import (
    ControlProblem,
    FeasibilityReport,
    Trajectory,
    feasibility_report,
)
from .tents import (
    ACTIVATION_TOL,
    active_set,
    constraint_pullback_matrix,
    dual_cone,
    local_tent,
)

Array = np.ndarray

DEFAULT_PASS_TOL = 1e-6

CONDITIONS = (
    "nonnegativity",
    "nontriviality",
    "adjoint_dynamics",
    "transversality",
    "stationarity",
    "complementarity",
)


@dataclass(frozen=True)
class PMPCertificate:
    """Candidate multipliers for the necessary conditions."""

    adjoints: tuple[Covector, ...]  # p_1..p_T at x_1..x_T
    state_multipliers: tuple[Array, ...]  # mu_1..mu_T, one (possibly empty) per t
    abnormal: float  # nu >= 0
    freq_multiplier: Array  # lambda in R^ell

    def __post_init__(self):
        object.__setattr__(self, "adjoints", tuple(self.adjoints))
        mus = tuple(
            np.asarray(m, dtype=float).reshape(-1) for m in self.state_multipliers
        )
        object.__setattr__(self, "state_multipliers", mus)
        object.__setattr__(
            self, "freq_multiplier", np.asarray(self.freq_multiplier, dtype=float).reshape(-1)
        )
        if len(self.adjoints) != len(mus):
            raise ValueError("need one state multiplier block per adjoint step")

    def mass(self) -> float:
        """nu + sum_t ||mu_t||_1 + ||lambda||_1 (the nontriviality measure)."""
        return float(
            self.abnormal
            + sum(np.abs(m).sum() for m in self.state_multipliers)
            + np.abs(self.freq_multiplier).sum()
        )

    def nonnegativity_violation(self) -> float:
        worst = max(0.0, -self.abnormal)
        for m in self.state_multipliers:
            if m.size:
                worst = max(worst, float(np.maximum(-m, 0.0).max()))
        return worst

    def scaled(self, factor: float) -> "PMPCertificate":
        return PMPCertificate(
            adjoints=tuple(Covector(p.base, factor * p.ambient) for p in self.adjoints),
            state_multipliers=tuple(factor * m for m in self.state_multipliers),
            abnormal=factor * self.abnormal,
            freq_multiplier=factor * self.freq_multiplier,
        )


@dataclass(frozen=True)
class PMPReport:
    residuals: dict[str, float]
    verdicts: dict[str, str]
    feasibility: FeasibilityReport
    tolerance: float

    @property
    def overall_pass(self) -> bool:
        return all(v == "pass" for v in self.verdicts.values())

    def max_condition_residual(self) -> float:
        keys = (
            "adjoint_dynamics",
            "transversality",
            "stationarity",
            "complementarity",
            "nonnegativity_violation",
        )
        return max(self.residuals[k] for k in keys)

    def as_dict(self) -> dict:
        return {
            "residuals": dict(self.residuals),
            "verdicts": dict(self.verdicts),
            "feasibility": self.feasibility.as_dict(),
            "feasible": self.feasibility.feasible(),
            "tolerance": self.tolerance,
            "overall_pass": self.overall_pass,
        }


def backward_adjoint(
    problem: ControlProblem,
    traj: Trajectory,
    abnormal: float,
    state_multipliers: tuple[Array, ...] | list[Array],
) -> tuple[Covector, ...]:
    """Adjoint covectors p_1..p_T from the terminal condition backwards.

    p_T = -nu d_x c_T(x_T) - T*g_T(x_T) mu_T, then for t = T-1..1
    p_t = T*_x f_t(x_t, u_t) p_{t+1} - nu d_x c_t(x_t, u_t) - T*g_t(x_t) mu_t.
    Every covector is tangent-projected at its base point.
    """
    T = traj.horizon
    xs, us = traj.states, traj.controls
    mus = [np.asarray(m, dtype=float).reshape(-1) for m in state_multipliers]
    if len(mus) != T:
        raise ValueError(f"need {T} state multiplier blocks")

    def constraint_term(t: int) -> Array:
        g = problem.state_constraints[t - 1]
        mu = mus[t - 1]
        if g is None or mu.size == 0:
            if g is None and mu.size:
                raise ValueError(f"multiplier given for absent constraint at t={t}")
            return np.zeros(problem.manifold.ambient_dim)
        return constraint_pullback_matrix(g, xs[t]) @ mu

    dcT, _ = differential(problem.terminal_cost, xs[T])
    p = [Covector(xs[T], -abnormal * dcT.ambient - constraint_term(T))]
    for t in range(T - 1, 0, -1):
        jf = problem.dynamics[t].jacobian_state(xs[t].ambient, us[t])
        pulled = jf.T @ p[0].ambient
        dc = problem.stage_costs[t].jacobian_state(xs[t].ambient, us[t]).reshape(-1)
        p.insert(0, Covector(xs[t], pulled - abnormal * dc - constraint_term(t)))
    return tuple(p)


def stationarity_vector(
    problem: ControlProblem, traj: Trajectory, cert: PMPCertificate, t: int
) -> Array:
    """w_t = T*_u f_t . p_{t+1} - nu d_u c_t + E_t^T lambda."""
    x, u = traj.states[t], traj.controls[t]
    p_next = cert.adjoints[t]  # adjoints[t] is p_{t+1}
    jfu = problem.dynamics[t].jacobian_control(x.ambient, u)
    w = jfu.T @ p_next.ambient
    duc = problem.stage_costs[t].jacobian_control(x.ambient, u).reshape(-1)
    w = w - cert.abnormal * duc
    mats = problem.freq_matrices
    if mats.ell:
        w = w + mats.matrices[t].T @ cert.freq_multiplier
    return w


def stationarity_residual(
    problem: ControlProblem, traj: Trajectory, cert: PMPCertificate, t: int
) -> float:
    """Distance from w_t to the dual cone of the tent at u_t (0 iff the
    stationarity inequality holds for every tent direction)."""
    w = stationarity_vector(problem, traj, cert, t)
    tent = local_tent(problem.control_sets[t], traj.controls[t])
    return dual_cone(tent).distance(w)


def complementarity_residual(
    problem: ControlProblem, traj: Trajectory, cert: PMPCertificate
) -> float:
    """max over t, j of |mu_t^j g_t^j(x_t)|."""
    worst = 0.0
    for t in range(1, traj.horizon + 1):
        g = problem.state_constraints[t - 1]
        mu = cert.state_multipliers[t - 1]
        if g is None or mu.size == 0:
            continue
        vals = g(traj.states[t].ambient)
        worst = max(worst, float(np.abs(mu * vals).max(initial=0.0)))
    return worst


def verify(
    problem: ControlProblem,
    traj: Trajectory,
    cert: PMPCertificate,
    tol: float = DEFAULT_PASS_TOL,
) -> PMPReport:
    """Evaluate all six conditions as residuals with pass/fail verdicts."""
    feas = feasibility_report(problem, traj)
    T = traj.horizon

    # Rebase the given adjoints so representatives are canonical at the
    # trajectory's own states.
    given = tuple(Covector(traj.states[t + 1], cert.adjoints[t].ambient) for t in range(T))
    recomputed = backward_adjoint(problem, traj, cert.abnormal, cert.state_multipliers)

    transversality = float(np.linalg.norm(given[-1].ambient - recomputed[-1].ambient))
    adjoint_dyn = 0.0
    for t in range(T - 1):
        adjoint_dyn = max(
            adjoint_dyn,
            float(np.linalg.norm(given[t].ambient - recomputed[t].ambient)),
        )

    stationarity = 0.0
    stationarity_checked = True
    for t in range(T):
        try:
            stationarity = max(stationarity, stationarity_residual(problem, traj, cert, t))
        except TentUnavailable:
            stationarity_checked = False
            stationarity = float("inf")

    residuals = {
        "adjoint_dynamics": adjoint_dyn,
        "transversality": transversality,
        "stationarity": stationarity,
        "complementarity": complementarity_residual(problem, traj, cert),
        "nonnegativity_violation": cert.nonnegativity_violation(),
        "nontriviality_mass": cert.mass(),
    }
    verdicts = {
        "nonnegativity": "pass" if residuals["nonnegativity_violation"] <= tol else "fail",
        "nontriviality": "pass" if residuals["nontriviality_mass"] > tol else "fail",
        "adjoint_dynamics": "pass" if adjoint_dyn <= tol else "fail",
        "transversality": "pass" if transversality <= tol else "fail",
        "stationarity": (
            "not_checked"
            if not stationarity_checked
            else ("pass" if stationarity <= tol else "fail")
        ),
        "complementarity": "pass" if residuals["complementarity"] <= tol else "fail",
    }
    return PMPReport(
        residuals=residuals, verdicts=verdicts, feasibility=feas, tolerance=tol
    )


# ---------------------------------------------------------------------------
# Multiplier recovery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RecoveryResult:
    certificate: PMPCertificate
    report: PMPReport
    exact: bool  # True when the linear feasibility program was solved exactly


class _RecoverySystem:
    """Stationarity equalities as a linear system in the unknown multipliers.

    Unknown layout: [nu | active mu entries | lambda | eta blocks | zeta
    blocks], where eta_t >= 0 and zeta_t (free) expand membership of w_t in
    the dual cone cone(G_t) + span(C_t).  The adjoints are eliminated:
    p(nu, mu) is linear, so each unit multiplier contributes one backward
    pass to its column.
    """

    def __init__(self, problem: ControlProblem, traj: Trajectory, activation_tol: float):
        self.problem = problem
        self.traj = traj
        T, m = traj.horizon, problem.control_dim
        self.T, self.m = T, m

        self.active: list[list[int]] = []
        for t in range(1, T + 1):
            g = problem.state_constraints[t - 1]
            self.active.append(
                [] if g is None else active_set(g, traj.states[t], activation_tol).sorted()
            )

        self.tents = [local_tent(problem.control_sets[t], traj.controls[t]) for t in range(T)]
        ell = problem.freq_matrices.ell

        # Column bookkeeping.
        self.mu_index = [(t, j) for t in range(1, T + 1) for j in self.active[t - 1]]
        self.n_mu = len(self.mu_index)
        self.n_lam = ell
        self.eta_sizes = [tent.G.shape[0] for tent in self.tents]
        self.zeta_sizes = [tent.C_eq.shape[0] for tent in self.tents]
        self.n_eta = sum(self.eta_sizes)
        self.n_zeta = sum(self.zeta_sizes)
        self.n_vars = 1 + self.n_mu + self.n_lam + self.n_eta + self.n_zeta

        self.S = np.zeros((T * m, self.n_vars))
        self._fill_columns()

    def _w_rows_from_multipliers(self, nu: float, mus: list[Array]) -> Array:
        """Stacked (w_t)_t for a certificate with lambda = 0."""
        p = backward_adjoint(self.problem, self.traj, nu, mus)
        T, m = self.T, self.m
        out = np.zeros(T * m)
        for t in range(T):
            x, u = self.traj.states[t], self.traj.controls[t]
            jfu = self.problem.dynamics[t].jacobian_control(x.ambient, u)
            w = jfu.T @ p[t].ambient
            if nu:
                duc = self.problem.stage_costs[t].jacobian_control(x.ambient, u).reshape(-1)
                w = w - nu * duc
            out[t * m : (t + 1) * m] = w
        return out

    def _zero_mus(self) -> list[Array]:
        return [
            np.zeros(
                0
                if self.problem.state_constraints[t] is None
                else self.problem.state_constraints[t](self.traj.states[t + 1].ambient).size
            )
            for t in range(self.T)
        ]

    def _fill_columns(self):
        T, m = self.T, self.m
        col = 0
        self.S[:, col] = self._w_rows_from_multipliers(1.0, self._zero_mus())
        col += 1
        for t0, j in self.mu_index:
            mus = self._zero_mus()
            mus[t0 - 1][j] = 1.0
            self.S[:, col] = self._w_rows_from_multipliers(0.0, mus)
            col += 1
        mats = self.problem.freq_matrices
        for k in range(self.n_lam):
            for t in range(T):
                self.S[t * m : (t + 1) * m, col] = mats.matrices[t][k, :]
            col += 1
        for t, tent in enumerate(self.tents):
            rows = slice(t * m, (t + 1) * m)
            for i in range(tent.G.shape[0]):
                self.S[rows, col] = -tent.G[i]
                col += 1
        for t, tent in enumerate(self.tents):
            rows = slice(t * m, (t + 1) * m)
            for i in range(tent.C_eq.shape[0]):
                self.S[rows, col] = -tent.C_eq[i]
                col += 1
        assert col == self.n_vars

    def bounds(self) -> list[tuple[float | None, float | None]]:
        b: list[tuple[float | None, float | None]] = [(0.0, None)]
        b += [(0.0, None)] * self.n_mu
        b += [(None, None)] * self.n_lam
        b += [(0.0, None)] * self.n_eta
        b += [(None, None)] * self.n_zeta
        return b

    def anchors(self, include_normal: bool) -> list[tuple[int, float]]:
        """(column, value) normalization candidates, normal-first."""
        out: list[tuple[int, float]] = []
        if include_normal:
            out.append((0, 1.0))
        out += [(1 + i, 1.0) for i in range(self.n_mu)]
        lam0 = 1 + self.n_mu
        for k in range(self.n_lam):
            out.append((lam0 + k, 1.0))
            out.append((lam0 + k, -1.0))
        return out

    def certificate(self, theta: Array) -> PMPCertificate:
        nu = float(theta[0])
        mus = self._zero_mus()
        for idx, (t0, j) in enumerate(self.mu_index):
            mus[t0 - 1][j] = theta[1 + idx]
        lam = theta[1 + self.n_mu : 1 + self.n_mu + self.n_lam].copy()
        adjoints = backward_adjoint(self.problem, self.traj, nu, mus)
        return PMPCertificate(
            adjoints=adjoints,
            state_multipliers=tuple(mus),
            abnormal=nu,
            freq_multiplier=lam,
        )

    def mass_of(self, theta: Array) -> float:
        return float(
            max(theta[0], 0.0)
            + np.abs(theta[1 : 1 + self.n_mu]).sum()
            + np.abs(theta[1 + self.n_mu : 1 + self.n_mu + self.n_lam]).sum()
        )


def recover_multipliers(
    problem: ControlProblem,
    traj: Trajectory,
    activation_tol: float = ACTIVATION_TOL,
    pass_tol: float = DEFAULT_PASS_TOL,
    feas_tol: float = 1e-8,
    force_abnormal: bool = False,
) -> RecoveryResult:
    """Search for multipliers certifying the necessary conditions.

    Complementarity is imposed as hard zeros on inactive constraint indices,
    which makes every condition linear in (nu, mu, lambda).  The conic scale
    freedom is fixed by anchoring one multiplier component to 1 (the abnormal
    multiplier first, then state multipliers, then frequency multipliers of
    either sign); the anchored linear program is solved inside a ``feas_tol``
    stationarity band (the trajectory itself is only numerically optimal) and
    the result is rescaled to unit nontriviality mass.  When no anchored
    program is feasible the trajectory admits no certificate at this
    tolerance: the anchored bounded least-squares problem with the smallest
    mass-normalized residual is returned instead, and its report carries the
    nonzero residuals.

    ``force_abnormal`` skips the abnormal anchor and pins nu = 0.
    """
    sys = _RecoverySystem(problem, traj, activation_tol)
    anchors = sys.anchors(include_normal=not force_abnormal)
    if not anchors:
        raise InfeasibleError("no multipliers available to normalize")
    bounds = sys.bounds()
    if force_abnormal:
        bounds[0] = (0.0, 0.0)

    cost = np.zeros(sys.n_vars)
    cost[0] = 1.0
    cost[1 : 1 + sys.n_mu] = 1.0
    lam_end = 1 + sys.n_mu + sys.n_lam
    cost[lam_end : lam_end + sys.n_eta] = 1.0

    a_band = np.vstack([sys.S, -sys.S])
    b_band = np.full(2 * sys.S.shape[0], feas_tol)
    for col, val in anchors:
        pinned = list(bounds)
        pinned[col] = (val, val)
        res = scipy.optimize.linprog(
            c=cost, A_ub=a_band, b_ub=b_band, bounds=pinned, method="highs"
        )
        if res.success:
            theta = res.x
            mass = sys.mass_of(theta)
            cert = sys.certificate(theta / mass)
            report = verify(problem, traj, cert, tol=pass_tol)
            return RecoveryResult(certificate=cert, report=report, exact=True)

    # No certificate within the band: bounded least squares per anchor, best
    # mass-normalized residual wins.
    best = None
    lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
    hi = np.array([np.inf if b[1] is None else b[1] for b in bounds])
    for col, val in anchors:
        theta = np.zeros(sys.n_vars)
        theta[col] = val
        keep = [i for i in range(sys.n_vars) if i != col]
        if keep:
            ls = scipy.optimize.lsq_linear(
                sys.S[:, keep], -val * sys.S[:, col], bounds=(lo[keep], hi[keep])
            )
            theta[keep] = ls.x
        mass = sys.mass_of(theta)
        if mass <= 1e-12:
            continue
        score = float(np.linalg.norm(sys.S @ theta)) / mass
        if best is None or score < best[0]:
            best = (score, theta, mass)
    if best is None:
        raise InfeasibleError("multiplier recovery found no usable normalization")
    _, theta, mass = best
    cert = sys.certificate(theta / mass)
    report = verify(problem, traj, cert, tol=pass_tol)
    return RecoveryResult(certificate=cert, report=report, exact=False)
