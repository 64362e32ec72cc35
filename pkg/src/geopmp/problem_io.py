"""Problem documents, trajectory CSV files, and certificate JSON.

Problem files are JSON documents (version ``geopmp-problem/1``) built from
named map families with parameter matrices; arbitrary code never enters a
problem file.  Validation failures raise :class:`ParseError` with a
JSON-pointer location.  Trajectories serialize as CSV with one row per time
step; certificates as plain JSON arrays.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import ParseError
from .frequency import FrequencySpec
from .manifolds import (
    Euclidean,
    Manifold,
    ManifoldPoint,
    Product,
    SmoothMap,
    Sphere,
    SpecialOrthogonal3,
    check_jacobians,
)
from .ocp import (
    AffineSubspace,
    Box,
    ControlProblem,
    ControlSet,
    FullSpace,
    Polytope,
    SmoothIneq,
    Trajectory,
)
from .pmp import PMPCertificate
from .manifolds import Covector

PROBLEM_VERSION = "geopmp-problem/1"

Array = np.ndarray


def _need(doc: dict, key: str, where: str):
    if key not in doc:
        raise ParseError(f"missing required field '{key}'", where)
    return doc[key]


def _matrix(value, where: str, rows: int | None = None, cols: int | None = None) -> Array:
    try:
        m = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"expected a numeric matrix: {exc}", where) from None
    m = np.atleast_2d(m)
    if m.ndim != 2:
        raise ParseError(f"expected a 2-d matrix, got shape {m.shape}", where)
    if rows is not None and m.shape[0] != rows:
        raise ParseError(f"expected {rows} rows, got {m.shape[0]}", where)
    if cols is not None and m.shape[1] != cols:
        raise ParseError(f"expected {cols} columns, got {m.shape[1]}", where)
    return m


def _vector(value, where: str, size: int | None = None) -> Array:
    try:
        v = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"expected a numeric vector: {exc}", where) from None
    if size is not None and v.size != size:
        raise ParseError(f"expected length {size}, got {v.size}", where)
    return v


# ---------------------------------------------------------------------------
# Manifolds
# ---------------------------------------------------------------------------


def _parse_manifold(doc, where: str) -> Manifold:
    if not isinstance(doc, dict):
        raise ParseError("manifold must be an object", where)
    kind = _need(doc, "kind", where)
    if kind == "euclidean":
        dim = _need(doc, "dim", where)
        if not isinstance(dim, int) or dim < 1:
            raise ParseError("euclidean dim must be a positive integer", f"{where}/dim")
        return Euclidean(dim)
    if kind == "sphere":
        n = _need(doc, "ambient_dim", where)
        if not isinstance(n, int) or n < 2:
            raise ParseError(
                "sphere ambient_dim must be an integer >= 2", f"{where}/ambient_dim"
            )
        return Sphere(n)
    if kind == "so3":
        return SpecialOrthogonal3()
    if kind == "product":
        factors = _need(doc, "factors", where)
        if not isinstance(factors, list) or not factors:
            raise ParseError("product factors must be a nonempty list", f"{where}/factors")
        return Product(
            tuple(
                _parse_manifold(f, f"{where}/factors/{i}") for i, f in enumerate(factors)
            )
        )
    raise ParseError(f"unknown manifold kind '{kind}'", f"{where}/kind")


# ---------------------------------------------------------------------------
# Map families
# ---------------------------------------------------------------------------


def _rotation(angle: float) -> Array:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _d_rotation(angle: float) -> Array:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[-s, -c], [c, -s]])


def _parse_dynamics(doc, where: str, n: int, m: int) -> SmoothMap:
    if not isinstance(doc, dict):
        raise ParseError("dynamics entry must be an object", where)
    form = _need(doc, "form", where)
    if form == "identity":
        return SmoothMap(
            fn=lambda x, u: np.asarray(x, dtype=float),
            jac_state=lambda x, u: np.eye(n),
            jac_control=lambda x, u: np.zeros((n, m)),
            name="identity",
        )
    if form == "linear":
        A = _matrix(_need(doc, "A", where), f"{where}/A", rows=n, cols=n)
        B = _matrix(_need(doc, "B", where), f"{where}/B", rows=n, cols=m)
        c = (
            _vector(doc["c"], f"{where}/c", size=n)
            if "c" in doc and doc["c"] is not None
            else np.zeros(n)
        )
        return SmoothMap(
            fn=lambda x, u: A @ x + B @ u + c,
            jac_state=lambda x, u: A,
            jac_control=lambda x, u: B,
            name="linear",
        )
    if form == "planar_rotation":
        if n != 2:
            raise ParseError("planar_rotation needs a 2-d ambient state", where)
        gain = _vector(_need(doc, "gain", where), f"{where}/gain", size=m)
        offset = float(doc.get("offset", 0.0))

        def angle(u):
            return float(gain @ u) + offset

        return SmoothMap(
            fn=lambda x, u: _rotation(angle(u)) @ x,
            jac_state=lambda x, u: _rotation(angle(u)),
            jac_control=lambda x, u: np.outer(_d_rotation(angle(u)) @ x, gain),
            name="planar_rotation",
        )
    raise ParseError(f"unknown dynamics form '{form}'", f"{where}/form")


def _parse_cost(doc, where: str, n: int, m: int, terminal: bool) -> SmoothMap:
    if not isinstance(doc, dict):
        raise ParseError("cost entry must be an object", where)
    form = _need(doc, "form", where)
    if form == "zero":
        if terminal:
            return SmoothMap.of_state(
                lambda x: 0.0, jac=lambda x: np.zeros((1, n)), name="zero"
            )
        return SmoothMap(
            fn=lambda x, u: 0.0,
            jac_state=lambda x, u: np.zeros((1, n)),
            jac_control=lambda x, u: np.zeros((1, m)),
            name="zero",
        )
    if form == "quadratic":
        Q = (
            _matrix(doc["Q"], f"{where}/Q", rows=n, cols=n)
            if doc.get("Q") is not None
            else np.zeros((n, n))
        )
        q = (
            _vector(doc["q"], f"{where}/q", size=n)
            if doc.get("q") is not None
            else np.zeros(n)
        )
        x_ref = (
            _vector(doc["x_ref"], f"{where}/x_ref", size=n)
            if doc.get("x_ref") is not None
            else np.zeros(n)
        )
        const = float(doc.get("const", 0.0))

        def x_part(x):
            dx = x - x_ref
            return 0.5 * float(dx @ Q @ dx) + float(q @ x) + const

        def x_grad(x):
            return (Q @ (x - x_ref) + q).reshape(1, -1)

        if terminal:
            for bad in ("R", "r", "u_ref"):
                if doc.get(bad) is not None:
                    raise ParseError(
                        "terminal cost cannot have control terms", f"{where}/{bad}"
                    )
            return SmoothMap.of_state(x_part, jac=x_grad, name="quadratic")
        R = (
            _matrix(doc["R"], f"{where}/R", rows=m, cols=m)
            if doc.get("R") is not None
            else np.zeros((m, m))
        )
        r = (
            _vector(doc["r"], f"{where}/r", size=m)
            if doc.get("r") is not None
            else np.zeros(m)
        )
        u_ref = (
            _vector(doc["u_ref"], f"{where}/u_ref", size=m)
            if doc.get("u_ref") is not None
            else np.zeros(m)
        )
        return SmoothMap(
            fn=lambda x, u: x_part(x) + 0.5 * float((u - u_ref) @ R @ (u - u_ref)) + float(r @ u),
            jac_state=lambda x, u: x_grad(x),
            jac_control=lambda x, u: (R @ (u - u_ref) + r).reshape(1, -1),
            name="quadratic",
        )
    raise ParseError(f"unknown cost form '{form}'", f"{where}/form")


def _parse_state_constraint(doc, where: str, n: int) -> SmoothMap | None:
    if doc is None:
        return None
    if not isinstance(doc, dict):
        raise ParseError("state constraint entry must be an object or null", where)
    form = _need(doc, "form", where)
    if form == "affine":
        A = _matrix(_need(doc, "A", where), f"{where}/A", cols=n)
        b = _vector(_need(doc, "b", where), f"{where}/b", size=A.shape[0])
        return SmoothMap.of_state(
            lambda x: A @ x - b, jac=lambda x: A, name="affine_constraint"
        )
    if form == "quadratic":
        terms = _need(doc, "terms", where)
        if not isinstance(terms, list) or not terms:
            raise ParseError("quadratic constraint needs a nonempty 'terms' list", where)
        Qs, qs, cs = [], [], []
        for i, term in enumerate(terms):
            tw = f"{where}/terms/{i}"
            Qs.append(
                _matrix(term["Q"], f"{tw}/Q", rows=n, cols=n)
                if term.get("Q") is not None
                else np.zeros((n, n))
            )
            qs.append(
                _vector(term["q"], f"{tw}/q", size=n)
                if term.get("q") is not None
                else np.zeros(n)
            )
            cs.append(float(term.get("c", 0.0)))

        def g(x):
            return np.array(
                [0.5 * float(x @ Q @ x) + float(q @ x) + c for Q, q, c in zip(Qs, qs, cs)]
            )

        def jac(x):
            return np.vstack([(Q @ x + q).reshape(1, -1) for Q, q in zip(Qs, qs)])

        return SmoothMap.of_state(g, jac=jac, name="quadratic_constraint")
    raise ParseError(f"unknown state constraint form '{form}'", f"{where}/form")


def _parse_control_set(doc, where: str) -> ControlSet:
    if not isinstance(doc, dict):
        raise ParseError("control set entry must be an object", where)
    kind = _need(doc, "kind", where)
    if kind == "full":
        dim = _need(doc, "dim", where)
        if not isinstance(dim, int) or dim < 1:
            raise ParseError("full-space dim must be a positive integer", f"{where}/dim")
        return FullSpace(dim)
    if kind == "box":
        lo = _vector(_need(doc, "lower", where), f"{where}/lower")
        hi = _vector(_need(doc, "upper", where), f"{where}/upper", size=lo.size)
        if np.any(lo > hi):
            raise ParseError("box lower bound exceeds upper bound", where)
        return Box(lo, hi)
    if kind == "polytope":
        A = _matrix(_need(doc, "A", where), f"{where}/A")
        b = _vector(_need(doc, "b", where), f"{where}/b", size=A.shape[0])
        return Polytope(A, b)
    if kind == "affine":
        C = _matrix(_need(doc, "C", where), f"{where}/C")
        d = _vector(_need(doc, "d", where), f"{where}/d", size=C.shape[0])
        return AffineSubspace(C, d)
    if kind == "ball":
        radius = doc.get("radius", 1.0)
        dim = _need(doc, "dim", where)
        if not isinstance(dim, int) or dim < 1:
            raise ParseError("ball dim must be a positive integer", f"{where}/dim")
        if not (isinstance(radius, (int, float)) and radius > 0):
            raise ParseError("ball radius must be positive", f"{where}/radius")
        r2 = float(radius) ** 2
        h = SmoothMap.of_state(
            lambda u: np.array([float(u @ u) - r2]),
            jac=lambda u: (2.0 * u).reshape(1, -1),
            name="ball",
        )
        return SmoothIneq(h=h, dim=dim)
    raise ParseError(f"unknown control set kind '{kind}'", f"{where}/kind")


def _per_stage(entry, horizon: int, where: str) -> list:
    """Broadcast a single object over the horizon, or validate a length-T list."""
    if isinstance(entry, list):
        if len(entry) != horizon:
            raise ParseError(
                f"expected {horizon} per-stage entries, got {len(entry)}", where
            )
        return entry
    return [entry] * horizon


# ---------------------------------------------------------------------------
# Problem documents
# ---------------------------------------------------------------------------


def parse_problem_dict(doc: dict) -> ControlProblem:
    """Build and numerically validate a problem from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ParseError("problem document must be a JSON object", "")
    version = doc.get("version", PROBLEM_VERSION)
    if version != PROBLEM_VERSION:
        raise ParseError(
            f"unsupported version '{version}' (expected '{PROBLEM_VERSION}')", "/version"
        )
    horizon = _need(doc, "horizon", "")
    if not isinstance(horizon, int) or horizon < 1:
        raise ParseError("horizon must be >= 1", "/horizon")

    manifold = _parse_manifold(_need(doc, "manifold", ""), "/manifold")
    n = manifold.ambient_dim
    x_init_v = _vector(_need(doc, "x_init", ""), "/x_init", size=n)
    if manifold.defect(x_init_v) > manifold.membership_tol:
        raise ParseError(
            f"x_init is off the manifold (defect {manifold.defect(x_init_v):.3e})",
            "/x_init",
        )
    x_init = ManifoldPoint(manifold, x_init_v)

    raw_sets = _per_stage(_need(doc, "control_sets", ""), horizon, "/control_sets")
    control_sets = tuple(
        _parse_control_set(s, f"/control_sets/{t}") for t, s in enumerate(raw_sets)
    )
    m = control_sets[0].dim
    for t, s in enumerate(control_sets):
        if s.dim != m:
            raise ParseError(
                f"control set dim {s.dim} differs from dim {m} at t=0",
                f"/control_sets/{t}",
            )

    raw_dyn = _per_stage(_need(doc, "dynamics", ""), horizon, "/dynamics")
    dynamics = tuple(
        _parse_dynamics(d, f"/dynamics/{t}", n, m) for t, d in enumerate(raw_dyn)
    )

    costs = _need(doc, "costs", "")
    if not isinstance(costs, dict):
        raise ParseError("costs must be an object with 'stage' and 'terminal'", "/costs")
    raw_stage = _per_stage(_need(costs, "stage", "/costs"), horizon, "/costs/stage")
    stage_costs = tuple(
        _parse_cost(c, f"/costs/stage/{t}", n, m, terminal=False)
        for t, c in enumerate(raw_stage)
    )
    terminal_cost = _parse_cost(
        _need(costs, "terminal", "/costs"), "/costs/terminal", n, m, terminal=True
    )

    raw_g = _per_stage(doc.get("state_constraints"), horizon, "/state_constraints")
    state_constraints = tuple(
        _parse_state_constraint(g, f"/state_constraints/{t}", n)
        for t, g in enumerate(raw_g)
    )

    support = doc.get("freq_support")
    if support is None:
        freq = FrequencySpec.unconstrained(horizon, m)
    else:
        if not isinstance(support, list) or len(support) != m:
            raise ParseError(
                f"freq_support must list allowed bins for each of the {m} control "
                "components",
                "/freq_support",
            )
        sets = []
        for k, bins in enumerate(support):
            if not isinstance(bins, list):
                raise ParseError("allowed bins must be a list", f"/freq_support/{k}")
            for i, b in enumerate(bins):
                if not isinstance(b, int) or not 0 <= b < horizon:
                    raise ParseError(
                        f"bin {b} outside 0..{horizon - 1}", f"/freq_support/{k}/{i}"
                    )
            sets.append(frozenset(bins))
        freq = FrequencySpec(horizon, m, tuple(sets))

    problem = ControlProblem(
        horizon=horizon,
        manifold=manifold,
        x_init=x_init,
        dynamics=dynamics,
        stage_costs=stage_costs,
        terminal_cost=terminal_cost,
        state_constraints=state_constraints,
        control_sets=control_sets,
        freq=freq,
        doc=_normalize(doc),
    )

    # Numeric sanity on the built maps: manifold invariance of the dynamics
    # and agreement of the analytic Jacobians with finite differences.
    rng = np.random.default_rng(0)
    worst = problem.probe_dynamics(rng, n=10)
    if worst > 1e-7:
        raise ParseError(
            f"dynamics leave the manifold on probe points (defect {worst:.3e})",
            "/dynamics",
        )
    probes = [
        (manifold.random_point(rng).ambient, rng.standard_normal(m)) for _ in range(3)
    ]
    for f in set(dynamics) | set(stage_costs):
        check_jacobians(f, probes)
    check_jacobians(terminal_cost, [(x, None) for x, _ in probes])
    for g in set(state_constraints):
        if g is not None:
            check_jacobians(g, [(x, None) for x, _ in probes])
    return problem


def _normalize(doc) -> dict:
    """Deep-copy through JSON so the stored document is detached and plain."""
    return json.loads(json.dumps(doc))


def parse_problem(path) -> ControlProblem:
    """Load and validate a problem file; raises ParseError with a location."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", "") from None
    return parse_problem_dict(doc)


def serialize_problem(problem: ControlProblem) -> dict:
    """The problem's normalized source document (file-born problems only)."""
    if problem.doc is None:
        raise ValueError(
            "problem was built via the native API and has no document form"
        )
    out = _normalize(problem.doc)
    out.setdefault("version", PROBLEM_VERSION)
    return out


# ---------------------------------------------------------------------------
# Trajectory CSV
# ---------------------------------------------------------------------------


def trajectory_to_csv(traj: Trajectory) -> str:
    n = traj.states[0].ambient.size
    m = traj.controls.shape[1]
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["t"] + [f"x{i}" for i in range(n)] + [f"u{k}" for k in range(m)])
    for t, state in enumerate(traj.states):
        controls = (
            [repr(float(v)) for v in traj.controls[t]] if t < traj.horizon else [""] * m
        )
        writer.writerow([t] + [repr(float(v)) for v in state.ambient] + controls)
    return buf.getvalue()


def write_trajectory_csv(traj: Trajectory, path) -> None:
    Path(path).write_text(trajectory_to_csv(traj))


def read_trajectory_csv(problem: ControlProblem, path) -> Trajectory:
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    if not rows:
        raise ParseError("empty trajectory file", "")
    header, data = rows[0], rows[1:]
    n = problem.manifold.ambient_dim
    m = problem.control_dim
    expected = 1 + n + m
    if len(header) != expected:
        raise ParseError(
            f"trajectory header has {len(header)} columns, expected {expected}", ""
        )
    if len(data) != problem.horizon + 1:
        raise ParseError(
            f"trajectory has {len(data)} rows, expected {problem.horizon + 1}", ""
        )
    states = []
    controls = np.zeros((problem.horizon, m))
    for t, row in enumerate(data):
        states.append(ManifoldPoint(problem.manifold, [float(v) for v in row[1 : 1 + n]]))
        if t < problem.horizon:
            controls[t] = [float(v) for v in row[1 + n :]]
    return Trajectory(states=tuple(states), controls=controls)


# ---------------------------------------------------------------------------
# Certificate JSON
# ---------------------------------------------------------------------------


def certificate_to_dict(cert: PMPCertificate) -> dict:
    return {
        "adjoints": [p.ambient.tolist() for p in cert.adjoints],
        "state_multipliers": [m.tolist() for m in cert.state_multipliers],
        "abnormal": cert.abnormal,
        "freq_multiplier": cert.freq_multiplier.tolist(),
    }


def certificate_from_dict(traj: Trajectory, doc: dict) -> PMPCertificate:
    for key in ("adjoints", "state_multipliers", "abnormal", "freq_multiplier"):
        if key not in doc:
            raise ParseError(f"missing certificate field '{key}'", f"/{key}")
    adjoints = doc["adjoints"]
    if len(adjoints) != traj.horizon:
        raise ParseError(
            f"need {traj.horizon} adjoint covectors, got {len(adjoints)}", "/adjoints"
        )
    mus = doc["state_multipliers"]
    if len(mus) != traj.horizon:
        raise ParseError(
            f"need {traj.horizon} state multiplier blocks, got {len(mus)}",
            "/state_multipliers",
        )
    return PMPCertificate(
        adjoints=tuple(
            Covector(traj.states[t + 1], _vector(p, f"/adjoints/{t}"))
            for t, p in enumerate(adjoints)
        ),
        state_multipliers=tuple(
            _vector(mu, f"/state_multipliers/{t}") for t, mu in enumerate(mus)
        ),
        abnormal=float(doc["abnormal"]),
        freq_multiplier=_vector(doc["freq_multiplier"], "/freq_multiplier"),
    )
