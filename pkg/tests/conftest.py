"""Shared fixtures: the five canonical problem instances and native builders."""

from pathlib import Path

import numpy as np
import pytest

import geopmp as g

PROBLEMS_DIR = Path(__file__).resolve().parents[1] / "problems"

FIXTURE_NAMES = ("lqr_t2", "box_t3", "circle_t3", "state_t3", "freq_t4")


def load_problem(name: str) -> g.ControlProblem:
    return g.parse_problem(PROBLEMS_DIR / f"{name}.json")


@pytest.fixture(scope="session")
def problems() -> dict[str, g.ControlProblem]:
    return {name: load_problem(name) for name in FIXTURE_NAMES}


# ---------------------------------------------------------------------------
# Native-API builders (the escape hatch problem files cannot express)
# ---------------------------------------------------------------------------


def scalar_integrator() -> g.SmoothMap:
    return g.SmoothMap(
        fn=lambda x, u: x + u,
        jac_state=lambda x, u: np.eye(1),
        jac_control=lambda x, u: np.eye(1),
        name="integrator",
    )


def quadratic_stage_cost() -> g.SmoothMap:
    return g.SmoothMap(
        fn=lambda x, u: 0.5 * (float(x @ x) + float(u @ u)),
        jac_state=lambda x, u: x.reshape(1, -1),
        jac_control=lambda x, u: u.reshape(1, -1),
        name="x2u2",
    )


def control_cost() -> g.SmoothMap:
    return g.SmoothMap(
        fn=lambda x, u: 0.5 * float(u @ u),
        jac_state=lambda x, u: np.zeros((1, x.size)),
        jac_control=lambda x, u: u.reshape(1, -1),
        name="u2",
    )


def quadratic_terminal() -> g.SmoothMap:
    return g.SmoothMap.of_state(
        lambda x: 0.5 * float(x @ x), jac=lambda x: x.reshape(1, -1), name="x2"
    )


def zero_terminal(n: int = 1) -> g.SmoothMap:
    return g.SmoothMap.of_state(
        lambda x: 0.0, jac=lambda x: np.zeros((1, n)), name="zero"
    )


def flat_problem(
    horizon: int,
    x_init=(1.0,),
    dynamics=None,
    stage=None,
    terminal=None,
    constraints=None,
    control_sets=None,
    freq=None,
) -> g.ControlProblem:
    """Scalar-control flat problem with LQR-ish defaults."""
    x0 = np.asarray(x_init, dtype=float)
    flat = g.Euclidean(x0.size)
    dyn = dynamics or scalar_integrator()
    stage = stage or quadratic_stage_cost()
    terminal = terminal or quadratic_terminal()
    sets = control_sets or (g.FullSpace(1),) * horizon
    m = sets[0].dim
    return g.ControlProblem(
        horizon=horizon,
        manifold=flat,
        x_init=flat.point(x0),
        dynamics=(dyn,) * horizon if isinstance(dyn, g.SmoothMap) else tuple(dyn),
        stage_costs=(stage,) * horizon if isinstance(stage, g.SmoothMap) else tuple(stage),
        terminal_cost=terminal,
        state_constraints=constraints or (None,) * horizon,
        control_sets=sets,
        freq=freq or g.FrequencySpec.unconstrained(horizon, m),
    )


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def circle_rotation_dynamics() -> g.SmoothMap:
    def d_rotation(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[-s, -c], [c, -s]])

    return g.SmoothMap(
        fn=lambda x, u: rotation_matrix(u[0]) @ x,
        jac_state=lambda x, u: rotation_matrix(u[0]),
        jac_control=lambda x, u: (d_rotation(u[0]) @ x).reshape(2, 1),
        name="circle_rotation",
    )


def all_manifolds() -> list[g.Manifold]:
    return [
        g.Euclidean(1),
        g.Euclidean(3),
        g.Sphere(2),
        g.Sphere(4),
        g.SpecialOrthogonal3(),
        g.Product((g.Sphere(2), g.Euclidean(2))),
        g.Product((g.SpecialOrthogonal3(), g.Sphere(3))),
    ]
