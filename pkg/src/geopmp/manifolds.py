"""Embedded-manifold state spaces and tangent/cotangent machinery.

States live on closed submanifolds of an ambient Euclidean space and are
always handled through their ambient coordinates: a circle point is a unit
vector in R^2, a rotation is a row-major flattened 3x3 matrix in R^9.
Covectors are stored as canonical ambient representatives (tangent-projected
at their base point), so two representatives are equal iff their projections
coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import JacobianError, MembershipError

DEFAULT_MEMBERSHIP_TOL = 1e-9
DEFAULT_FD_STEP = 1e-6

Array = np.ndarray


def _as_vector(x, n: int | None = None) -> Array:
    v = np.asarray(x, dtype=float).reshape(-1)
    if n is not None and v.size != n:
        raise ValueError(f"expected vector of length {n}, got {v.size}")
    return v


class Manifold:
    """Base class for the built-in closed embeddings."""

    ambient_dim: int
    intrinsic_dim: int
    membership_tol: float

    def defect(self, x: Array) -> float:
        """Membership residual; zero exactly on the embedded image."""
        raise NotImplementedError

    def project(self, x: Array) -> Array:
        """Nearest-point (or equivalent) projection onto the manifold."""
        raise NotImplementedError

    def tangent_projector_at(self, x: Array) -> Array:
        """Orthogonal projector onto the tangent space at an on-manifold x."""
        raise NotImplementedError

    def random_point(self, rng: np.random.Generator) -> "ManifoldPoint":
        raise NotImplementedError

    def point(self, x) -> "ManifoldPoint":
        return ManifoldPoint(self, _as_vector(x, self.ambient_dim))

    def contains(self, x: Array) -> bool:
        return self.defect(_as_vector(x, self.ambient_dim)) <= self.membership_tol


@dataclass(frozen=True)
class Euclidean(Manifold):
    dim: int
    membership_tol: float = DEFAULT_MEMBERSHIP_TOL

    @property
    def ambient_dim(self) -> int:
        return self.dim

    @property
    def intrinsic_dim(self) -> int:
        return self.dim

    def defect(self, x: Array) -> float:
        return 0.0

    def project(self, x: Array) -> Array:
        return np.asarray(x, dtype=float)

    def tangent_projector_at(self, x: Array) -> Array:
        return np.eye(self.dim)

    def random_point(self, rng: np.random.Generator) -> "ManifoldPoint":
        return self.point(rng.standard_normal(self.dim))


@dataclass(frozen=True)
class Sphere(Manifold):
    """Unit sphere S^{n-1} embedded in R^n (``ambient_dim=2`` is the circle)."""

    ambient_dim: int
    membership_tol: float = DEFAULT_MEMBERSHIP_TOL

    def __post_init__(self):
        if self.ambient_dim < 2:
            raise ValueError("sphere needs ambient dimension >= 2")

    @property
    def intrinsic_dim(self) -> int:
        return self.ambient_dim - 1

    def defect(self, x: Array) -> float:
        return abs(float(np.linalg.norm(x)) - 1.0)

    def project(self, x: Array) -> Array:
        nrm = np.linalg.norm(x)
        if nrm == 0.0:
            raise MembershipError("cannot project the origin onto the sphere")
        return np.asarray(x, dtype=float) / nrm

    def tangent_projector_at(self, x: Array) -> Array:
        u = self.project(x)
        return np.eye(self.ambient_dim) - np.outer(u, u)

    def random_point(self, rng: np.random.Generator) -> "ManifoldPoint":
        return self.point(self.project(rng.standard_normal(self.ambient_dim)))


def _skew(m: Array) -> Array:
    return 0.5 * (m - m.T)


@dataclass(frozen=True)
class SpecialOrthogonal3(Manifold):
    """SO(3) as row-major flattened 3x3 matrices in R^9."""

    membership_tol: float = DEFAULT_MEMBERSHIP_TOL

    @property
    def ambient_dim(self) -> int:
        return 9

    @property
    def intrinsic_dim(self) -> int:
        return 3

    @staticmethod
    def as_matrix(x: Array) -> Array:
        return np.asarray(x, dtype=float).reshape(3, 3)

    def defect(self, x: Array) -> float:
        r = self.as_matrix(x)
        ortho = np.linalg.norm(r.T @ r - np.eye(3))
        det = abs(float(np.linalg.det(r)) - 1.0)
        return max(ortho, det)

    def project(self, x: Array) -> Array:
        # Special polar factor: nearest rotation in Frobenius norm.
        u, _, vt = np.linalg.svd(self.as_matrix(x))
        d = np.sign(np.linalg.det(u @ vt))
        r = u @ np.diag([1.0, 1.0, d]) @ vt
        return r.reshape(-1)

    def tangent_projector_at(self, x: Array) -> Array:
        # T_R SO(3) = {R K : K skew}; projection A -> R skew(R^T A).
        r = self.as_matrix(self.project(x))
        cols = []
        for i in range(9):
            e = np.zeros(9)
            e[i] = 1.0
            a = e.reshape(3, 3)
            cols.append((r @ _skew(r.T @ a)).reshape(-1))
        return np.column_stack(cols)

    def random_point(self, rng: np.random.Generator) -> "ManifoldPoint":
        return self.point(self.project(rng.standard_normal((3, 3)).reshape(-1)))


@dataclass(frozen=True)
class Product(Manifold):
    factors: tuple[Manifold, ...]
    membership_tol: float = DEFAULT_MEMBERSHIP_TOL

    def __post_init__(self):
        if not self.factors:
            raise ValueError("product manifold needs at least one factor")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def ambient_dim(self) -> int:
        return sum(f.ambient_dim for f in self.factors)

    @property
    def intrinsic_dim(self) -> int:
        return sum(f.intrinsic_dim for f in self.factors)

    def _slices(self):
        start = 0
        for f in self.factors:
            yield f, slice(start, start + f.ambient_dim)
            start += f.ambient_dim

    def defect(self, x: Array) -> float:
        return max(f.defect(x[s]) for f, s in self._slices())

    def project(self, x: Array) -> Array:
        return np.concatenate([f.project(x[s]) for f, s in self._slices()])

    def tangent_projector_at(self, x: Array) -> Array:
        p = np.zeros((self.ambient_dim, self.ambient_dim))
        for f, s in self._slices():
            p[s, s] = f.tangent_projector_at(x[s])
        return p

    def random_point(self, rng: np.random.Generator) -> "ManifoldPoint":
        return self.point(
            np.concatenate([f.random_point(rng).ambient for f in self.factors])
        )


@dataclass(frozen=True)
class ManifoldPoint:
    """A point on a manifold, stored in ambient coordinates."""

    manifold: Manifold
    ambient: Array

    def __post_init__(self):
        x = _as_vector(self.ambient, self.manifold.ambient_dim)
        object.__setattr__(self, "ambient", x)
        d = self.manifold.defect(x)
        if d > self.manifold.membership_tol:
            raise MembershipError(
                f"point off manifold: defect {d:.3e} > tol {self.manifold.membership_tol:.1e}"
            )

    def projector(self) -> Array:
        return self.manifold.tangent_projector_at(self.ambient)


@dataclass(frozen=True)
class TangentVector:
    """Ambient vector required to lie in the tangent space at ``base``."""

    base: ManifoldPoint
    ambient: Array
    tangency_tol: float = 1e-8

    def __post_init__(self):
        v = _as_vector(self.ambient, self.base.manifold.ambient_dim)
        object.__setattr__(self, "ambient", v)
        normal = v - self.base.projector() @ v
        err = float(np.linalg.norm(normal))
        if err > self.tangency_tol * (1.0 + np.linalg.norm(v)):
            raise MembershipError(
                f"vector not tangent at base: normal component {err:.3e}"
            )


@dataclass(frozen=True)
class Covector:
    """Cotangent element stored as its canonical (tangent-projected) ambient
    representative; construction canonicalizes any ambient input."""

    base: ManifoldPoint
    ambient: Array

    def __post_init__(self):
        v = _as_vector(self.ambient, self.base.manifold.ambient_dim)
        object.__setattr__(self, "ambient", self.base.projector() @ v)

    def norm(self) -> float:
        return float(np.linalg.norm(self.ambient))


def covectors_close(a: Covector, b: Covector, tol: float = 1e-8) -> bool:
    """Equality of covectors up to representative choice (both are canonical)."""
    diff = float(np.linalg.norm(a.ambient - b.ambient))
    scale = max(a.norm(), b.norm())
    return diff <= tol + tol * scale


@dataclass(frozen=True)
class SmoothMap:
    """A smooth map given by ambient-coordinate formulas.

    ``fn(x, u)`` maps an ambient state vector and a control vector to an
    ambient/real vector (scalar outputs are fine).  State-only maps (state
    constraints, terminal costs) are built with :meth:`of_state` and ignore
    the control argument.  Analytic Jacobians are optional; central finite
    differences with step ``fd_step * (1 + ||.||)`` are the fallback.
    """

    fn: Callable[..., Array | float]
    jac_state: Callable[..., Array] | None = None
    jac_control: Callable[..., Array] | None = None
    fd_step: float = DEFAULT_FD_STEP
    takes_control: bool = True
    name: str = ""

    @classmethod
    def of_state(cls, fn, jac=None, fd_step: float = DEFAULT_FD_STEP, name: str = ""):
        return cls(
            fn=lambda x, u=None, _f=fn: _f(x),
            jac_state=None if jac is None else (lambda x, u=None, _j=jac: _j(x)),
            jac_control=None,
            fd_step=fd_step,
            takes_control=False,
            name=name,
        )

    def __call__(self, x: Array, u: Array | None = None) -> Array:
        out = self.fn(x, u) if self.takes_control else self.fn(x, None)
        return np.atleast_1d(np.asarray(out, dtype=float))

    def _fd_jacobian(self, wiggle: Callable[[Array], Array], z: Array) -> Array:
        h = self.fd_step * (1.0 + float(np.linalg.norm(z)))
        cols = []
        for i in range(z.size):
            e = np.zeros_like(z)
            e[i] = h
            cols.append((wiggle(z + e) - wiggle(z - e)) / (2.0 * h))
        return np.column_stack(cols)

    def jacobian_state(self, x: Array, u: Array | None = None) -> Array:
        x = np.asarray(x, dtype=float)
        if self.jac_state is not None:
            j = np.asarray(self.jac_state(x, u), dtype=float)
            return j.reshape(-1, x.size)
        return self._fd_jacobian(lambda z: self(z, u), x)

    def jacobian_control(self, x: Array, u: Array) -> Array:
        if not self.takes_control:
            raise JacobianError("map does not take a control argument")
        u = np.asarray(u, dtype=float)
        if self.jac_control is not None:
            j = np.asarray(self.jac_control(x, u), dtype=float)
            return j.reshape(-1, u.size)
        return self._fd_jacobian(lambda z: self(x, z), u)


def check_jacobians(
    m: SmoothMap,
    probes: Sequence[tuple[Array, Array | None]],
    rtol: float = 1e-5,
) -> None:
    """Validate analytic Jacobians against central finite differences.

    Raises :class:`JacobianError` on the first probe where an analytic
    Jacobian deviates from the FD estimate by more than ``rtol`` relative.
    """
    fd = SmoothMap(
        fn=m.fn, fd_step=m.fd_step, takes_control=m.takes_control, name=m.name
    )
    for x, u in probes:
        pairs = []
        if m.jac_state is not None:
            pairs.append(("state", m.jacobian_state(x, u), fd.jacobian_state(x, u)))
        if m.jac_control is not None and u is not None:
            pairs.append(
                ("control", m.jacobian_control(x, u), fd.jacobian_control(x, u))
            )
        for label, analytic, numeric in pairs:
            err = np.linalg.norm(analytic - numeric)
            scale = max(1.0, float(np.linalg.norm(numeric)))
            if err > rtol * scale:
                raise JacobianError(
                    f"{m.name or 'map'}: analytic {label} Jacobian deviates from "
                    f"finite differences by {err / scale:.3e} (> {rtol:.1e})"
                )


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def tangent_projector(p: ManifoldPoint) -> Array:
    """Orthogonal projector onto T_p M as an ambient NxN matrix."""
    return p.projector()


def cotangent_pullback(
    m: SmoothMap, p: ManifoldPoint, u: Array | None, w: Covector
) -> Covector:
    """Pull the covector ``w`` at ``m(p, u)`` back to the domain point ``p``.

    Computes J_x^T w with the state Jacobian of ``m``, then tangent-projects
    at ``p`` (the canonical representative of the cotangent lift).
    """
    img = m(p.ambient, u)
    codomain = w.base.manifold
    if img.size != codomain.ambient_dim:
        raise ValueError("map output dimension does not match covector base")
    d = codomain.defect(img)
    if d > 1e-6 * (1.0 + float(np.linalg.norm(img))):
        raise MembershipError(f"map image off codomain manifold: defect {d:.3e}")
    jt = m.jacobian_state(p.ambient, u).T
    return Covector(p, jt @ w.ambient)


def control_pullback(m: SmoothMap, p: ManifoldPoint, u: Array, w: Covector) -> Array:
    """Pull ``w`` at ``m(p, u)`` back through the control slot: J_u^T w."""
    return m.jacobian_control(p.ambient, u).T @ w.ambient


def differential(
    cost: SmoothMap, p: ManifoldPoint, u: Array | None = None
) -> tuple[Covector, Array | None]:
    """Differential of a scalar map: (d_x projected to T*_p M, d_u)."""
    val = cost(p.ambient, u)
    if val.size != 1:
        raise ValueError("differential expects a scalar-valued map")
    dx = cost.jacobian_state(p.ambient, u).reshape(-1)
    du = None
    if cost.takes_control and u is not None:
        du = cost.jacobian_control(p.ambient, u).reshape(-1)
    return Covector(p, dx), du


def retract(p: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    """First-order retraction: ambient step followed by manifold projection.

    Euclidean addition, sphere normalization, SO(3) polar factor.
    """
    if v.base is not p and not np.array_equal(v.base.ambient, p.ambient):
        raise ValueError("tangent vector must be based at p")
    m = p.manifold
    return ManifoldPoint(m, m.project(p.ambient + v.ambient))
