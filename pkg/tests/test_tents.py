import itertools

import numpy as np
import pytest
import scipy.optimize

import geopmp as g
from geopmp.errors import InfeasiblePointError, NotInSetError
from geopmp.tents import constraint_pullback_matrix


# ---------------------------------------------------------------------------
# Local tents
# ---------------------------------------------------------------------------


def test_tent_box_upper_face():
    tent = g.local_tent(g.Box([-1.0], [1.0]), np.array([1.0]))
    assert tent.G.shape == (1, 1)
    assert tent.G[0, 0] == 1.0  # {d <= 0}
    assert tent.contains_direction([-1.0])
    assert not tent.contains_direction([1.0])


def test_tent_box_interior_is_full_space():
    tent = g.local_tent(g.Box([-1.0], [1.0]), np.array([0.0]))
    assert tent.G.shape[0] == 0 and tent.C_eq.shape[0] == 0
    assert tent.contains_direction([123.0])


def test_tent_disk_boundary_gradient_halfspace():
    # h(u) = |u|^2 - 1 active at (1, 0), gradient (2, 0): tent {d : d_1 <= 0}.
    h = g.SmoothMap.of_state(
        lambda u: np.array([float(u @ u) - 1.0]), jac=lambda u: (2 * u).reshape(1, -1)
    )
    disk = g.SmoothIneq(h=h, dim=2)
    tent = g.local_tent(disk, np.array([1.0, 0.0]))
    assert tent.G.shape == (1, 2)
    assert np.allclose(tent.G[0] / np.linalg.norm(tent.G[0]), [1.0, 0.0])
    assert tent.contains_direction([-0.5, 3.0])
    assert not tent.contains_direction([0.5, 0.0])


def test_tent_affine_subspace_tangent_plane():
    aff = g.AffineSubspace(C=[[1.0, 1.0]], d=[1.0])
    tent = g.local_tent(aff, np.array([0.5, 0.5]))
    assert tent.C_eq.shape == (1, 2)
    assert tent.contains_direction([1.0, -1.0])
    assert not tent.contains_direction([1.0, 0.0])


def test_tent_rejects_point_outside_set():
    with pytest.raises(NotInSetError):
        g.local_tent(g.Box([-1.0], [1.0]), np.array([2.0]))


def test_tent_directions_stay_in_set():
    # Strictly interior tent directions re-enter the set for small steps.
    rng = np.random.default_rng(0)
    sets_and_points = [
        (g.Box([-1.0, -1.0], [1.0, 1.0]), np.array([1.0, 0.3])),
        (g.Polytope([[1.0, 1.0], [-1.0, 0.0]], [1.0, 0.0]), np.array([0.5, 0.5])),
        (
            g.SmoothIneq(
                h=g.SmoothMap.of_state(
                    lambda u: np.array([float(u @ u) - 1.0]),
                    jac=lambda u: (2 * u).reshape(1, -1),
                ),
                dim=2,
            ),
            np.array([0.0, 1.0]),
        ),
    ]
    for control_set, u in sets_and_points:
        tent = g.local_tent(control_set, u)
        found = 0
        for _ in range(1000):
            d = rng.standard_normal(2)
            d /= np.linalg.norm(d)
            if tent.G.size and np.any(tent.G @ d > -1e-2):
                continue  # not strictly interior
            found += 1
            eps = 1e-4 * (1.0 + np.linalg.norm(u))
            assert control_set.violation(u + eps * d) <= 1e-7
            if found >= 100:
                break
        assert found >= 100


# ---------------------------------------------------------------------------
# Dual cones
# ---------------------------------------------------------------------------


def test_dual_of_halfline():
    tent = g.ConeH(vertex=np.zeros(1), G=np.array([[1.0]]), C_eq=np.zeros((0, 1)))
    dual = g.dual_cone(tent)
    assert dual.contains(np.array([2.0]))
    assert not dual.contains(np.array([-0.1]), tol=1e-10)


def test_dual_of_full_space_is_origin():
    tent = g.ConeH(vertex=np.zeros(3), G=np.zeros((0, 3)), C_eq=np.zeros((0, 3)))
    dual = g.dual_cone(tent)
    assert dual.distance(np.zeros(3)) == 0.0
    assert dual.distance(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)


def test_dual_of_negative_orthant_sampling():
    tent = g.ConeH(vertex=np.zeros(2), G=np.eye(2), C_eq=np.zeros((0, 2)))
    dual = g.dual_cone(tent)
    rng = np.random.default_rng(3)
    for _ in range(1000):
        y = rng.random(2) @ np.eye(2)  # nonneg combination of e1, e2
        d = -rng.random(2)  # tent direction
        assert y @ d <= 1e-12
    assert dual.contains(np.array([1.0, 0.0]))
    assert dual.contains(np.array([0.0, 1.0]))


def _dual_membership_lp(tent: g.ConeH, y: np.ndarray) -> bool:
    """Brute-force oracle: max <y, d> over tent directions in the unit box."""
    m = y.size
    a_ub = tent.G if tent.G.size else None
    b_ub = np.zeros(tent.G.shape[0]) if tent.G.size else None
    a_eq = tent.C_eq if tent.C_eq.size else None
    b_eq = np.zeros(tent.C_eq.shape[0]) if tent.C_eq.size else None
    res = scipy.optimize.linprog(
        -y, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
        bounds=[(-1.0, 1.0)] * m, method="highs",
    )
    assert res.success
    return -res.fun <= 1e-10


def test_farkas_round_trip_random_cones():
    rng = np.random.default_rng(42)
    pairs = 0
    while pairs < 1000:
        m = int(rng.integers(1, 4))
        rows = int(rng.integers(1, 5))
        tent = g.ConeH(
            vertex=np.zeros(m), G=rng.standard_normal((rows, m)), C_eq=np.zeros((0, m))
        )
        dual = g.dual_cone(tent)
        # members of the dual: nonneg combinations of the rows agree under
        # both the NNLS distance and the LP oracle
        y_in = rng.random(rows) @ tent.G
        assert _dual_membership_lp(tent, y_in), "dual member failed the LP oracle"
        assert dual.contains(y_in, tol=1e-8)
        # certified outsiders: adding a tent direction to a dual member makes
        # the pairing with that direction strictly positive
        d = rng.standard_normal(m)
        if tent.G.size and not np.all(tent.G @ d <= 0):
            continue
        if np.linalg.norm(d) > 1e-9:
            shift = (abs(float(y_in @ d)) + 1.0) / float(d @ d)
            y_out = y_in + shift * d
            assert y_out @ d >= 0.99
            assert not _dual_membership_lp(tent, y_out)
            assert dual.distance(y_out) > 1e-8
        # sampled (generator, direction) pairings are nonpositive
        assert y_in @ d <= 1e-10
        pairs += 1


# ---------------------------------------------------------------------------
# Active sets
# ---------------------------------------------------------------------------


def test_active_set_examples():
    flat = g.Euclidean(2)
    gmap = g.SmoothMap.of_state(
        lambda x: np.array([x[0], x[1] - 1.0]), jac=lambda x: np.eye(2)
    )
    act = g.active_set(gmap, flat.point([0.0, 0.0]))
    assert act.sorted() == [0]

    strictly_neg = g.SmoothMap.of_state(lambda x: np.array([-1.0, -0.5]))
    assert g.active_set(strictly_neg, flat.point([0.0, 0.0])).sorted() == []

    circle = g.Sphere(2)
    onball = g.SmoothMap.of_state(
        lambda x: np.array([float(x @ x) - 1.0]), jac=lambda x: (2 * x).reshape(1, -1)
    )
    assert g.active_set(onball, circle.point([0.0, 1.0])).sorted() == [0]


def test_active_set_rejects_infeasible_point():
    flat = g.Euclidean(1)
    gmap = g.SmoothMap.of_state(lambda x: x - 1.0, jac=lambda x: np.eye(1))
    with pytest.raises(InfeasiblePointError):
        g.active_set(gmap, flat.point([2.0]))


# ---------------------------------------------------------------------------
# Regularity
# ---------------------------------------------------------------------------


def test_regular_single_constraint():
    flat = g.Euclidean(1)
    gmap = g.SmoothMap.of_state(lambda x: x, jac=lambda x: np.eye(1))
    verdict, witness = g.is_regular(gmap, flat.point([0.0]))
    assert verdict and witness is None


def test_non_regular_opposing_gradients_witness():
    flat = g.Euclidean(1)
    gmap = g.SmoothMap.of_state(
        lambda x: np.array([x[0], -x[0]]), jac=lambda x: np.array([[1.0], [-1.0]])
    )
    verdict, witness = g.is_regular(gmap, flat.point([0.0]))
    assert not verdict
    assert np.allclose(witness, [1.0, 1.0])


def test_regular_independent_gradients():
    flat = g.Euclidean(2)
    gmap = g.SmoothMap.of_state(
        lambda x: np.array([x[0], x[1]]), jac=lambda x: np.eye(2)
    )
    verdict, witness = g.is_regular(gmap, flat.point([0.0, 0.0]))
    assert verdict and witness is None


def brute_force_regularity(b_active: np.ndarray) -> bool:
    """Vertex-enumeration oracle for {mu >= 0, sum mu = 1, B mu = 0} = empty.

    Any vertex of the polytope has linearly independent active columns, so
    enumerating supports with plain least squares finds a point iff the
    polytope is nonempty.  Independent of the LP used by ``is_regular``.
    """
    r = b_active.shape[1]
    for size in range(1, r + 1):
        for supp in itertools.combinations(range(r), size):
            a = np.vstack([b_active[:, supp], np.ones((1, size))])
            rhs = np.zeros(a.shape[0])
            rhs[-1] = 1.0
            mu, *_ = np.linalg.lstsq(a, rhs, rcond=None)
            if np.all(mu >= -1e-9) and np.linalg.norm(a @ mu - rhs) <= 1e-9:
                return False  # nontrivial multiplier exists
    return True


def _random_active_instance(rng):
    """Constraint map affine in x with all components exactly active at x0."""
    n = int(rng.integers(1, 4))
    r = int(rng.integers(1, 5))
    a = rng.standard_normal((r, n))
    x0 = rng.standard_normal(n)
    b = a @ x0  # g(x) = A x - b vanishes at x0
    gmap = g.SmoothMap.of_state(lambda x, _a=a, _b=b: _a @ x - _b, jac=lambda x, _a=a: _a)
    return gmap, g.Euclidean(n).point(x0), a


def test_is_regular_agrees_with_brute_force_on_random_instances():
    rng = np.random.default_rng(123)
    agreements = 0
    for _ in range(50):
        gmap, x0, a = _random_active_instance(rng)
        verdict, witness = g.is_regular(gmap, x0)
        oracle = brute_force_regularity(a.T)  # flat: pullback matrix is A^T
        assert verdict == oracle
        if not verdict:
            assert witness is not None
            pulled = constraint_pullback_matrix(gmap, x0) @ witness
            assert np.linalg.norm(pulled) <= 1e-7
            assert np.all(witness >= 0) and witness.max() == pytest.approx(1.0)
        agreements += 1
    assert agreements == 50


def test_is_regular_scale_invariant():
    rng = np.random.default_rng(17)
    for _ in range(20):
        gmap, x0, a = _random_active_instance(rng)
        scale = rng.uniform(0.1, 10.0, size=a.shape[0])
        scaled = g.SmoothMap.of_state(
            lambda x, _a=a, _x0=x0.ambient, _s=scale: _s * (_a @ (x - _x0)),
            jac=lambda x, _a=a, _s=scale: _s[:, None] * _a,
        )
        assert g.is_regular(gmap, x0)[0] == g.is_regular(scaled, x0)[0]


def test_is_regular_on_sphere_uses_tangent_projection():
    # Radial gradients die under the cotangent projection: a single radial
    # constraint active on the sphere is non-regular (mu can be anything).
    circle = g.Sphere(2)
    gmap = g.SmoothMap.of_state(
        lambda x: np.array([float(x @ x) - 1.0]), jac=lambda x: (2 * x).reshape(1, -1)
    )
    verdict, witness = g.is_regular(gmap, circle.point([1.0, 0.0]))
    assert not verdict
    assert witness is not None
