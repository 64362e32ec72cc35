"""Local tents of admissible sets, their dual cones, and regularity tests.

A tent at a point is the convex cone of directions along which one can enter
the set; for the structured sets shipped here the tents are explicit:
supporting cones at active faces for boxes/polytopes, gradient half-spaces
for smooth inequality sets, tangent planes for affine subspaces.  Tents are
stored in half-space form (directions d with G d <= 0, C d = 0); dual cones
in generator form via Farkas' lemma.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .errors import InfeasiblePointError, NotInSetError, TentUnavailable
from .manifolds import ManifoldPoint, SmoothMap
from .ocp import AffineSubspace, Box, ControlSet, FullSpace, Polytope, SmoothIneq

Array = np.ndarray

ACTIVATION_TOL = 1e-8


def nonneg_lstsq(a: Array, b: Array) -> Array:
    """min ||a x - b|| subject to x >= 0 (Lawson-Hanson active set).

    scipy 1.15's rewritten ``nnls`` terminates prematurely on some small
    well-conditioned instances, and cone distances cannot afford that; this
    is the textbook algorithm with least-squares subproblem solves.
    """
    m, n = a.shape
    tol = 10.0 * max(m, n) * np.finfo(float).eps * max(np.linalg.norm(a, 1), 1.0)
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    for _ in range(6 * n + 12):
        w = a.T @ (b - a @ x)
        w_free = np.where(passive, -np.inf, w)
        if passive.all() or np.max(w_free) <= tol:
            return x
        passive[int(np.argmax(w_free))] = True
        for _ in range(6 * n + 12):
            z = np.zeros(n)
            z[passive], *_ = np.linalg.lstsq(a[:, passive], b, rcond=None)
            if np.all(z[passive] > tol):
                break
            blocking = passive & (z <= tol)
            steps = x[blocking] / (x[blocking] - z[blocking])
            alpha = float(np.min(steps))
            x = x + alpha * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
        x = z
    return x


@dataclass(frozen=True)
class ConeH:
    """Convex cone of directions {d : G d <= 0, C_eq d = 0} at ``vertex``."""

    vertex: Array
    G: Array
    C_eq: Array

    def __post_init__(self):
        v = np.asarray(self.vertex, dtype=float).reshape(-1)
        g = np.asarray(self.G, dtype=float).reshape(-1, v.size)
        c = np.asarray(self.C_eq, dtype=float).reshape(-1, v.size)
        object.__setattr__(self, "vertex", v)
        object.__setattr__(self, "G", g)
        object.__setattr__(self, "C_eq", c)

    @property
    def dim(self) -> int:
        return self.vertex.size

    def contains_direction(self, d: Array, tol: float = 1e-10) -> bool:
        d = np.asarray(d, dtype=float).reshape(-1)
        ok_ineq = self.G.size == 0 or np.all(self.G @ d <= tol)
        ok_eq = self.C_eq.size == 0 or np.all(np.abs(self.C_eq @ d) <= tol)
        return bool(ok_ineq and ok_eq)


@dataclass(frozen=True)
class ConeV:
    """Conic hull of ``generators`` plus the span of ``lineality`` at ``vertex``."""

    vertex: Array
    generators: Array
    lineality: Array

    def __post_init__(self):
        v = np.asarray(self.vertex, dtype=float).reshape(-1)
        g = np.asarray(self.generators, dtype=float).reshape(-1, v.size)
        l = np.asarray(self.lineality, dtype=float).reshape(-1, v.size)
        object.__setattr__(self, "vertex", v)
        object.__setattr__(self, "generators", g)
        object.__setattr__(self, "lineality", l)

    def distance(self, y: Array) -> float:
        """Euclidean distance from y to the cone (NNLS on the generators)."""
        y = np.asarray(y, dtype=float).reshape(-1)
        cols = []
        if self.generators.size:
            cols.append(self.generators.T)
        if self.lineality.size:
            cols.append(self.lineality.T)
            cols.append(-self.lineality.T)
        if not cols:
            return float(np.linalg.norm(y))
        basis = np.hstack(cols)
        coeffs = nonneg_lstsq(basis, y)
        return float(np.linalg.norm(basis @ coeffs - y))

    def contains(self, y: Array, tol: float = 1e-10) -> bool:
        return self.distance(y) <= tol


@dataclass(frozen=True)
class ActiveSet:
    indices: frozenset[int] = field(default_factory=frozenset)

    def __contains__(self, j: int) -> bool:
        return j in self.indices

    def sorted(self) -> list[int]:
        return sorted(self.indices)


def local_tent(control_set: ControlSet, u, tol: float = ACTIVATION_TOL) -> ConeH:
    """Tent of the admissible set at u in half-space form.

    Boxes and polytopes get their supporting cone (active rows), smooth
    inequality sets the intersection of gradient half-spaces over active
    components, affine subspaces their tangent plane, the full space the
    trivial (empty-row) cone.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    if control_set.violation(u) > tol:
        raise NotInSetError(
            f"control {u} violates the set by {control_set.violation(u):.3e}"
        )
    m = u.size
    empty = np.zeros((0, m))

    if isinstance(control_set, FullSpace):
        return ConeH(vertex=u, G=empty, C_eq=empty)
    if isinstance(control_set, Box):
        rows = []
        for i in range(m):
            if u[i] >= control_set.upper[i] - tol:
                e = np.zeros(m)
                e[i] = 1.0
                rows.append(e)
            if u[i] <= control_set.lower[i] + tol:
                e = np.zeros(m)
                e[i] = -1.0
                rows.append(e)
        return ConeH(vertex=u, G=np.array(rows) if rows else empty, C_eq=empty)
    if isinstance(control_set, Polytope):
        resid = control_set.A @ u - control_set.b
        active = resid >= -tol
        return ConeH(vertex=u, G=control_set.A[active], C_eq=empty)
    if isinstance(control_set, SmoothIneq):
        vals = control_set.h(u)
        jac = control_set.h.jacobian_state(u)
        active = np.abs(vals) <= tol
        return ConeH(vertex=u, G=jac[active], C_eq=empty)
    if isinstance(control_set, AffineSubspace):
        return ConeH(vertex=u, G=empty, C_eq=control_set.C)
    raise TentUnavailable(
        f"no constructive tent for control set {type(control_set).__name__}"
    )


def dual_cone(cone: ConeH) -> ConeV:
    """Dual (polar) cone {y : <y, d> <= 0 for all tent directions d}.

    By Farkas' lemma this is the conic hull of the inequality rows plus the
    span of the equality rows.
    """
    return ConeV(vertex=cone.vertex, generators=cone.G, lineality=cone.C_eq)


def active_set(g: SmoothMap, x: ManifoldPoint, tol: float = ACTIVATION_TOL) -> ActiveSet:
    """Indices j with |g^j(x)| <= tol; errors if any component is infeasible."""
    vals = g(x.ambient)
    worst = float(np.max(vals))
    if worst > tol:
        raise InfeasiblePointError(
            f"constraint value {worst:.3e} exceeds activation tolerance"
        )
    return ActiveSet(frozenset(int(j) for j in np.flatnonzero(np.abs(vals) <= tol)))


def constraint_pullback_matrix(g: SmoothMap, x: ManifoldPoint) -> Array:
    """Columns j = canonical representative of T*g(x) applied to e_j."""
    jac = g.jacobian_state(x.ambient)
    return x.projector() @ jac.T


def is_regular(
    g: SmoothMap, x: ManifoldPoint, tol: float = ACTIVATION_TOL
) -> tuple[bool, Array | None]:
    """Regularity of a constraint map at a feasible point.

    Regular means the only mu >= 0, complementary, with T*g(x) mu = 0 is
    mu = 0.  Decided by the bounded LP max sum(mu) s.t. B mu = 0,
    0 <= mu <= 1 over the active components: regular iff the optimum is 0.
    Returns (verdict, witness); the witness is a nonzero multiplier when the
    verdict is False, scaled to unit max-component.
    """
    act = active_set(g, x, tol=tol).sorted()
    r = g(x.ambient).size
    if not act:
        return True, None
    b_full = constraint_pullback_matrix(g, x)
    b_act = b_full[:, act]
    res = scipy.optimize.linprog(
        c=-np.ones(len(act)),
        A_eq=b_act,
        b_eq=np.zeros(b_act.shape[0]),
        bounds=[(0.0, 1.0)] * len(act),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"regularity LP failed: {res.message}")
    total = float(-res.fun)
    if total <= 1e-9:
        return True, None
    mu = np.zeros(r)
    mu[act] = res.x
    mu = mu / mu.max()
    return False, mu
