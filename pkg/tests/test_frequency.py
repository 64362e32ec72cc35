import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import geopmp as g
from geopmp.frequency import kernel_projector


# ---------------------------------------------------------------------------
# DFT and support
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "seq, expected",
    [
        ([1, 1, 1, 1], [4, 0, 0, 0]),
        ([1, -1, 1, -1], [0, 0, 4, 0]),
        ([1, 0, 0, 0], [1, 1, 1, 1]),
    ],
)
def test_dft_examples(seq, expected):
    assert np.allclose(g.dft(seq), expected, atol=1e-12)


def test_dft_matches_direct_sum():
    # Oracle: the defining sum, evaluated literally.
    rng = np.random.default_rng(0)
    u = rng.standard_normal(7)
    T = u.size
    direct = np.array(
        [sum(u[t] * np.exp(-2j * np.pi * xi * t / T) for t in range(T)) for xi in range(T)]
    )
    assert np.allclose(g.dft(u), direct, atol=1e-12)


def test_support_examples():
    assert g.support([4, 0, 0, 0], 1e-9) == {0}
    assert g.support([0, 0, 0, 0], 0.5) == set()
    assert g.support(g.dft([1, -1, 1, -1]), 1e-9) == {2}


def test_support_rejects_negative_tol():
    with pytest.raises(ValueError):
        g.support([1.0], -1.0)


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=16))
@settings(max_examples=100, deadline=None)
def test_parseval(seq):
    u = np.asarray(seq)
    spectrum = g.dft(u)
    lhs = float(np.sum(np.abs(spectrum) ** 2))
    rhs = u.size * float(np.sum(u**2))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


# ---------------------------------------------------------------------------
# Constraint matrices
# ---------------------------------------------------------------------------


def test_matrices_t2_dc_only():
    spec = g.FrequencySpec(2, 1, (frozenset({0}),))
    mats = g.build_freq_matrices(spec)
    assert mats.ell == 1
    assert np.allclose(mats.matrices[0], [[1.0]])
    assert np.allclose(mats.matrices[1], [[-1.0]])
    # Oracle: enumerate the basis of sequences and compare against the spectra.
    for seq in ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]):
        residual_zero = np.allclose(
            g.freq_residual(mats, np.array(seq).reshape(2, 1)), 0.0, atol=1e-12
        )
        spectrum_ok = g.support(g.dft(seq), 1e-9) <= {0}
        assert residual_zero == spectrum_ok


def test_matrices_vacuous():
    spec = g.FrequencySpec(4, 1, (frozenset({0, 1, 2, 3}),))
    mats = g.build_freq_matrices(spec)
    assert mats.ell == 0
    assert g.freq_residual(mats, np.zeros((4, 1))).size == 0


def test_matrices_t4_conjugate_pair_dedup():
    spec = g.FrequencySpec(4, 1, (frozenset({0, 2}),))
    mats = g.build_freq_matrices(spec)
    assert mats.ell == 2
    stacked = np.hstack(mats.matrices)  # 2 x 4 on scalar sequences
    assert np.allclose(stacked[0], [1.0, 0.0, -1.0, 0.0], atol=1e-12)
    assert np.allclose(stacked[1], [0.0, -1.0, 0.0, 1.0], atol=1e-12)
    # Brute-force kernel oracle: null space must equal span{(1,1,1,1), (1,-1,1,-1)}.
    _, s, vt = np.linalg.svd(stacked)
    null = vt[2:].T
    kernel_proj = null @ null.T
    basis = np.array([[1.0, 1, 1, 1], [1.0, -1, 1, -1]]).T
    q, _ = np.linalg.qr(basis)
    oracle_proj = q @ q.T
    assert np.linalg.norm(kernel_proj - oracle_proj) <= 1e-12


def test_freq_residual_examples():
    spec = g.FrequencySpec(2, 1, (frozenset({0}),))
    mats = g.build_freq_matrices(spec)
    assert np.allclose(g.freq_residual(mats, [[0.7], [0.7]]), [0.0], atol=1e-12)
    assert np.allclose(g.freq_residual(mats, [[1.0], [-1.0]]), [2.0])
    # Cross-check: the forbidden bin of (1,-1) is active in the raw spectrum.
    assert abs(g.dft([1.0, -1.0])[1]) == pytest.approx(2.0)


def test_freq_residual_dimension_mismatch():
    spec = g.FrequencySpec(2, 1, (frozenset({0}),))
    mats = g.build_freq_matrices(spec)
    with pytest.raises(ValueError):
        g.freq_residual(mats, np.zeros((3, 1)))


def test_spec_rejects_out_of_range_bins():
    with pytest.raises(ValueError):
        g.FrequencySpec(4, 1, (frozenset({4}),))


# ---------------------------------------------------------------------------
# Equivalence of the support constraint and its linear form
# ---------------------------------------------------------------------------


def _random_spec(rng) -> g.FrequencySpec:
    T = int(rng.integers(1, 9))
    m = int(rng.integers(1, 3))
    supports = []
    for _ in range(m):
        keep = rng.random(T) < rng.uniform(0.2, 0.9)
        supports.append(frozenset(int(i) for i in np.flatnonzero(keep)))
    return g.FrequencySpec(T, m, tuple(supports))


def _spectrum_feasible(spec: g.FrequencySpec, u: np.ndarray) -> bool:
    return all(
        g.support(g.dft(u[:, k]), 1e-9) <= set(spec.allowed_support[k])
        for k in range(spec.control_dim)
    )


def test_equivalence_residual_zero_iff_support_allowed():
    # Mixed sample: raw random sequences (generically infeasible both ways),
    # kernel-projected sequences (feasible both ways), and forbidden-bin
    # injections: the two characterizations must agree on every single one.
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(25):
        spec = _random_spec(rng)
        mats = g.build_freq_matrices(spec)
        T, m = spec.horizon, spec.control_dim
        proj = kernel_projector(mats, T, m)
        for _ in range(200):
            kind = rng.integers(3)
            u = rng.standard_normal((T, m))
            if kind == 1:
                u = (proj @ u.reshape(-1)).reshape(T, m)
            elif kind == 2:
                k = int(rng.integers(m))
                forbidden = sorted(set(range(T)) - set(spec.allowed_support[k]))
                if forbidden:
                    xi = forbidden[int(rng.integers(len(forbidden)))]
                    u[:, k] += np.cos(2 * np.pi * xi * np.arange(T) / T)
            residual_zero = bool(
                np.all(np.abs(g.freq_residual(mats, u)) <= 1e-9) if mats.ell else True
            )
            assert residual_zero == _spectrum_feasible(spec, u), (
                f"spec {spec} disagrees on {u!r}"
            )
            checked += 1
    assert checked == 25 * 200


def test_stacked_map_has_full_row_rank():
    rng = np.random.default_rng(77)
    for _ in range(30):
        spec = _random_spec(rng)
        mats = g.build_freq_matrices(spec)
        if mats.ell == 0:
            continue
        stacked = np.hstack(mats.matrices)
        s = np.linalg.svd(stacked, compute_uv=False)
        assert s[-1] > 1e-10, f"rank-deficient rows for {spec}"


def test_kernel_projector_is_orthogonal_projector_onto_null():
    rng = np.random.default_rng(5)
    for _ in range(20):
        spec = _random_spec(rng)
        mats = g.build_freq_matrices(spec)
        T, m = spec.horizon, spec.control_dim
        proj = kernel_projector(mats, T, m)
        assert np.linalg.norm(proj @ proj - proj) <= 1e-10
        assert np.linalg.norm(proj - proj.T) <= 1e-10
        if mats.ell:
            stacked = np.zeros((mats.ell, T * m))
            for t, e in enumerate(mats.matrices):
                stacked[:, t * m : (t + 1) * m] = e
            assert np.linalg.norm(stacked @ proj) <= 1e-10
