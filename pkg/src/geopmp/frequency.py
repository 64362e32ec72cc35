"""DFT support constraints on control sequences and their linear form.

A control component sequence (u_t^k)_{t=0..T-1} has spectrum
u_hat_xi = sum_t u_t^k exp(-i 2 pi xi t / T), xi = 0..T-1 (bins are 0-based,
no normalization factor).  Requiring the spectrum of component k to vanish
outside an allowed bin set W^(k) is equivalent to the linear constraint
sum_t E_t u_t = 0 for matrices E_t built from the real/imaginary parts of
the DFT functionals at forbidden bins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Array = np.ndarray

SUPPORT_TOL = 1e-9


def dft(sequence) -> Array:
    """Unnormalized DFT of a real length-T sequence."""
    u = np.asarray(sequence, dtype=float).reshape(-1)
    if u.size < 1:
        raise ValueError("sequence must have length >= 1")
    return np.fft.fft(u)


def support(v, tol: float = SUPPORT_TOL) -> set[int]:
    """Indices with magnitude above ``tol``."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    v = np.asarray(v)
    return {int(i) for i in np.flatnonzero(np.abs(v) > tol)}


@dataclass(frozen=True)
class FrequencySpec:
    """Allowed DFT support per control component.

    ``allowed_support[k]`` is the set of bins where component k's spectrum
    may be nonzero; everything else must vanish.
    """

    horizon: int
    control_dim: int
    allowed_support: tuple[frozenset[int], ...]

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.control_dim < 1:
            raise ValueError("control_dim must be >= 1")
        sets = tuple(frozenset(int(b) for b in w) for w in self.allowed_support)
        if len(sets) != self.control_dim:
            raise ValueError("need one allowed-support set per control component")
        for k, w in enumerate(sets):
            bad = [b for b in w if not 0 <= b < self.horizon]
            if bad:
                raise ValueError(
                    f"component {k}: bins {sorted(bad)} outside 0..{self.horizon - 1}"
                )
        object.__setattr__(self, "allowed_support", sets)

    @classmethod
    def unconstrained(cls, horizon: int, control_dim: int) -> "FrequencySpec":
        full = frozenset(range(horizon))
        return cls(horizon, control_dim, tuple(full for _ in range(control_dim)))

    @property
    def is_vacuous(self) -> bool:
        full = set(range(self.horizon))
        return all(set(w) == full for w in self.allowed_support)


@dataclass(frozen=True)
class FrequencyConstraintMatrices:
    """Stacked linear form: u feasible iff sum_t matrices[t] @ u_t == 0."""

    ell: int
    matrices: tuple[Array, ...]

    def stacked(self) -> Array:
        """The ell x (m*T) map acting on the time-stacked control vector."""
        return np.hstack(self.matrices) if self.ell else np.zeros((0, 0))


def build_freq_matrices(spec: FrequencySpec) -> FrequencyConstraintMatrices:
    """Linearize the support constraint into matrices E_0..E_{T-1}.

    For each component k and each forbidden bin, one row per independent
    real degree of freedom: the real part of the DFT functional
    (cos(2 pi xi t / T))_t and, away from the DC/Nyquist bins, the imaginary
    part (-sin(2 pi xi t / T))_t.  Conjugate bin pairs {xi, T - xi} pin each
    other for real sequences, so each pair contributes rows only once.
    """
    T, m = spec.horizon, spec.control_dim
    rows: list[tuple[int, Array]] = []  # (component, length-T coefficient row)
    t = np.arange(T)
    for k, allowed in enumerate(spec.allowed_support):
        forbidden = set(range(T)) - set(allowed)
        canonical = sorted({min(xi, T - xi) if xi else 0 for xi in forbidden})
        for xi in canonical:
            angle = 2.0 * np.pi * xi * t / T
            rows.append((k, np.cos(angle)))
            if xi != 0 and 2 * xi != T:
                rows.append((k, -np.sin(angle)))
    ell = len(rows)
    mats = []
    for step in range(T):
        e = np.zeros((ell, m))
        for r, (k, coeff) in enumerate(rows):
            e[r, k] = coeff[step]
        mats.append(e)
    return FrequencyConstraintMatrices(ell=ell, matrices=tuple(mats))


def freq_residual(mats: FrequencyConstraintMatrices, controls) -> Array:
    """sum_t E_t u_t for a (T, m) control sequence; empty when ell == 0."""
    u = np.atleast_2d(np.asarray(controls, dtype=float))
    if mats.ell == 0:
        return np.zeros(0)
    if len(mats.matrices) != u.shape[0] or mats.matrices[0].shape[1] != u.shape[1]:
        raise ValueError(
            f"controls shape {u.shape} does not match {len(mats.matrices)} "
            f"matrices of width {mats.matrices[0].shape[1]}"
        )
    out = np.zeros(mats.ell)
    for e, u_t in zip(mats.matrices, u):
        out += e @ u_t
    return out


def kernel_projector(mats: FrequencyConstraintMatrices, horizon: int, control_dim: int) -> Array:
    """Orthogonal projector onto the null space of the stacked constraint map.

    Acts on time-stacked controls (u_0, ..., u_{T-1}) flattened to length
    T*m; identity when no bins are forbidden.
    """
    n = horizon * control_dim
    if mats.ell == 0:
        return np.eye(n)
    stacked = np.zeros((mats.ell, n))
    for step, e in enumerate(mats.matrices):
        stacked[:, step * control_dim : (step + 1) * control_dim] = e
    _, s, vt = np.linalg.svd(stacked)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0] if s.size else 0.0)))
    null = vt[rank:].T
    return null @ null.T
