import numpy as np
import pytest
from hypothesis import given, strategies as st

from tensorfield.lattice_field import (
    BesovSpec, ModeLattice, besov_norm, bracket, constant, cosine_mode, embed, hat, heat_semigroup,
    hermitian_defect, l2_norm, l2_pairing, lp_block_index, m_norm, m_norm_total, m_operator, project,
    sobolev_norm, splice, to_grid,
)
from conftest import rand

dims = st.sampled_from([2, 3, 4])
seeds = st.integers(0, 2**31)


def small(d):
    return {2: 3, 3: 2, 4: 1}[d]


def test_lattice_basics():
    lat = ModeLattice(3, 2)
    assert lat.size == 125 and lat.shape == (5, 5, 5)
    assert np.all(lat.bracket2 >= 1)
    assert lat.modes[lat.index((1, -2, 0))].tolist() == [1, -2, 0]
    assert lat.contains((2, 2, -2)) and not lat.contains((3, 0, 0))
    assert bracket((1, 1)) == pytest.approx(np.sqrt(3))
    with pytest.raises(ValueError):
        ModeLattice(0, 2)
    with pytest.raises(ValueError):
        ModeLattice(2, -1)


def test_splice_examples():
    assert splice((2, 1), (0, 0), 1).tolist() == [0, 1]
    assert splice((1, 2, 3), (9, 9, 9), 2).tolist() == [1, 9, 3]
    assert hat((4, 5, 6), 3).tolist() == [4, 5, 0]
    with pytest.raises(ValueError):
        splice((1, 2), (1, 2, 3), 1)
    with pytest.raises(ValueError):
        splice((1, 2), (3, 4), 3)


@given(st.lists(st.integers(-5, 5), min_size=2, max_size=5), st.data())
def test_splice_idempotent(m, data):
    c = data.draw(st.integers(1, len(m)))
    assert splice(m, m, c).tolist() == list(m)


def test_pairing_examples():
    lat = ModeLattice(2, 2)
    one = constant(lat)
    assert l2_pairing(one, one) == pytest.approx(1.0)
    e = cosine_mode(lat, (1, 2))
    assert l2_pairing(e, e) == pytest.approx(2.0)


def test_sobolev_examples():
    lat = ModeLattice(3, 2)
    assert sobolev_norm(constant(lat), 2.7) == pytest.approx(1.0)
    assert sobolev_norm(cosine_mode(lat, (0, 1, 0)), 1.0) == pytest.approx(2.0)


@given(dims, seeds)
def test_parseval_and_symmetry(d, seed):
    N = small(d)
    u, v = rand(d, N, seed), rand(d, N, seed + 1)
    assert hermitian_defect(u) == 0.0
    assert l2_pairing(u, v) == pytest.approx(l2_pairing(v, u), rel=1e-12)
    assert l2_pairing(u, u) == pytest.approx(np.sum(np.abs(u) ** 2), rel=1e-12)
    assert l2_norm(u) == pytest.approx(np.sqrt(l2_pairing(u, u)), rel=1e-12)
    # grid quadrature of u^2 at any oversample >= 2
    for k in (2, 3):
        g = to_grid(u, k)
        assert np.abs(g.imag).max() < 1e-10
        assert np.mean(g.real ** 2) == pytest.approx(l2_pairing(u, u), rel=1e-10)


def test_besov_constant_block():
    lat = ModeLattice(2, 3)
    for alpha in (-0.5, 0.0, 1.3):
        spec = BesovSpec(alpha, np.inf, np.inf)
        assert besov_norm(constant(lat, -2.5), spec) == pytest.approx(2 ** -alpha * 2.5, rel=1e-12)


def test_besov_single_block():
    lat = ModeLattice(2, 4)
    blocks = lp_block_index(lat)
    e = cosine_mode(lat, (3, -1))
    assert len(set(blocks[np.abs(e) > 0].tolist())) == 1
    assert blocks[lat.index((3, -1))] == 2  # 2 <= |m|_inf < 4


@given(dims, seeds, st.floats(-0.1, 0.1))
def test_besov_close_to_sobolev(d, seed, alpha):
    u = rand(d, small(d), seed)
    b = besov_norm(u, BesovSpec(alpha, 2, 2))
    assert b == pytest.approx(sobolev_norm(u, alpha), rel=0.1)


@given(dims, seeds, st.floats(-1.5, 1.5))
def test_besov_sobolev_equivalence_constants(d, seed, alpha):
    # per mode 2^j / <m> lies in [min(1/2, 1/sqrt(d)), 2]
    u = rand(d, small(d), seed)
    r = besov_norm(u, BesovSpec(alpha, 2, 2)) / sobolev_norm(u, alpha)
    lo, hi = min(0.5, d ** -0.5), 2.0
    bounds = sorted([lo ** alpha, hi ** alpha])
    assert bounds[0] * (1 - 1e-12) <= r <= bounds[1] * (1 + 1e-12)


def test_besov_rejects_bad_indices():
    with pytest.raises(ValueError):
        BesovSpec(0.0, 0.5, 2)


def test_m_operator_examples():
    lat = ModeLattice(3, 2)
    M = m_operator(constant(lat), 2)
    expect = np.zeros((5, 5))
    expect[2, 2] = 1
    assert np.allclose(M, expect)
    e = cosine_mode(lat, (1, 2, -1))
    M = m_operator(e, 1)
    assert M[3, 3] == pytest.approx(1) and M[1, 1] == pytest.approx(1)
    assert np.trace(M @ M) == pytest.approx(2)
    assert m_norm(e, 1, 4) == pytest.approx(2 ** 0.25)
    assert m_norm(constant(lat), 3, 4) == pytest.approx(1)
    assert m_norm_total(constant(lat), 4) == pytest.approx(3 ** 0.25)


@given(dims, seeds)
def test_m_operator_trace_and_psd(d, seed):
    u = rand(d, small(d), seed)
    for c in range(1, d + 1):
        M = m_operator(u, c)
        assert np.allclose(M, M.T)
        assert np.linalg.eigvalsh(M).min() > -1e-10
        assert np.trace(M) == pytest.approx(l2_pairing(u, u), rel=1e-12)
        assert m_norm(u, c, 2) == pytest.approx(l2_norm(u), rel=1e-12)
        assert m_norm(u, c, 4) <= m_norm(u, c, 2) * (1 + 1e-12)


def test_m_norm_rejects_odd():
    with pytest.raises(ValueError):
        m_norm(rand(2, 1, 0), 1, 3)


@given(dims, seeds, st.floats(-3, 3))
def test_m4_norm_axioms(d, seed, lam):
    N = small(d)
    u, v = rand(d, N, seed), rand(d, N, seed + 7)
    for c in range(1, d + 1):
        nu = m_norm(u, c, 4)
        assert nu >= 0
        assert m_norm(lam * u, c, 4) == pytest.approx(abs(lam) * nu, rel=1e-10, abs=1e-14)
        assert m_norm(u + v, c, 4) <= nu + m_norm(v, c, 4) + 1e-12


def test_heat_semigroup():
    lat = ModeLattice(2, 2)
    u = rand(2, 2, 3)
    assert np.array_equal(heat_semigroup(u, 0.0), u)
    e = cosine_mode(lat, (1, 1))
    assert np.allclose(heat_semigroup(e, 0.3), np.exp(-0.9) * e)
    with pytest.raises(ValueError):
        heat_semigroup(u, -1.0)


@given(dims, seeds, st.floats(0, 2), st.floats(-1, 1))
def test_heat_contraction(d, seed, t, alpha):
    N = small(d)
    u = rand(d, N, seed)
    Pu = heat_semigroup(u, t)
    assert l2_norm(Pu) <= np.exp(-t) * l2_norm(u) * (1 + 1e-12)
    assert sobolev_norm(Pu, alpha) <= sobolev_norm(u, alpha) * (1 + 1e-12)
    if N > 0:
        assert np.allclose(heat_semigroup(project(u, N - 1), t), project(Pu, N - 1))


def test_embed_and_project():
    u = rand(2, 2, 0)
    big = embed(u, 4)
    assert big.shape == (9, 9)
    assert np.array_equal(embed(big, 2), u)
    p = project(u, 1)
    assert p.shape == u.shape and np.all(p[0] == 0) and p[2, 2] == u[2, 2]
