import numpy as np
import pytest
from hypothesis import given, strategies as st

from tensorfield.lattice_field import (
    ModeLattice, constant, cosine_mode, embed, l2_norm, l2_pairing, m_norm, project,
)
from tensorfield.nonlocal_product import (
    PairingKind, action_gradient, interaction, interaction_gradient, naive_nonlocal_product_c,
    nonlocal_product, nonlocal_product_c, partial_pairing, quadrature_nonlocal_product_c,
)
from conftest import rand

dims = st.sampled_from([2, 3, 4])
seeds = st.integers(0, 2**31)
SMALL = {2: 3, 3: 2, 4: 1}


def test_constants():
    for d in (2, 3, 4):
        lat = ModeLattice(d, 1)
        one = constant(lat)
        for c in range(1, d + 1):
            assert np.allclose(nonlocal_product_c(one, one, one, c), one)
        assert np.allclose(nonlocal_product(one, one, one), d * one)
        assert interaction(constant(lat, 1.5)) == pytest.approx(d * 1.5 ** 4)


def test_g_one_collapses():
    d, N = 3, 2
    lat = ModeLattice(d, N)
    f, h = rand(d, N, 1), rand(d, N, 2)
    out = nonlocal_product_c(f, constant(lat), h, 2)
    for m in [(1, -2, 0), (0, 0, 0), (2, 1, -1)]:
        fm = (m[0], 0, m[2])
        hm = (0, m[1], 0)
        assert out[lat.index(m)] == pytest.approx(f[lat.index(fm)] * h[lat.index(hm)])


def test_fast_vs_naive_d3():
    for seed in range(3):
        f, g, h = (rand(3, 2, seed * 3 + i) for i in range(3))
        for c in (1, 2, 3):
            assert np.max(np.abs(nonlocal_product_c(f, g, h, c) - naive_nonlocal_product_c(f, g, h, c))) <= 1e-11


def test_quadrature_d2():
    f, g, h = (rand(2, 1, 40 + i) for i in range(3))
    tot = sum(quadrature_nonlocal_product_c(f, g, h, c) for c in (1, 2))
    assert np.max(np.abs(nonlocal_product(f, g, h) - tot)) <= 1e-9


@given(dims, seeds, st.floats(-2, 2))
def test_trilinear(d, seed, a):
    N = SMALL[d] - (d == 2)
    f, g, h, k = (rand(d, N, seed + i) for i in range(4))
    for c in range(1, d + 1):
        base = nonlocal_product_c(f, g, h, c)
        assert np.allclose(nonlocal_product_c(f + a * k, g, h, c), base + a * nonlocal_product_c(k, g, h, c))
        assert np.allclose(nonlocal_product_c(f, g + a * k, h, c), base + a * nonlocal_product_c(f, k, h, c))
        assert np.allclose(nonlocal_product_c(f, g, h + a * k, c), base + a * nonlocal_product_c(f, g, k, c))


@given(dims, seeds)
def test_projection_equivariance(d, seed):
    N = SMALL[d]
    f, g, h = (rand(d, N, seed + i) for i in range(3))
    big = nonlocal_product(*(embed(x, N + 1) for x in (f, g, h)))
    assert np.allclose(embed(big, N), nonlocal_product(f, g, h))
    assert np.allclose(project(big, N), embed(nonlocal_product(f, g, h), N + 1))


def test_interaction_cosine():
    for d in (2, 3, 4):
        lat = ModeLattice(d, 2)
        e = cosine_mode(lat, (1,) * d)
        assert interaction(e, check=True) == pytest.approx(2 * d)


@given(dims, seeds)
def test_interaction_routes_and_bounds(d, seed):
    u = rand(d, SMALL[d], seed)
    I = interaction(u, check=True)
    assert I >= 0
    assert I ** 0.25 <= d ** 0.25 * l2_norm(u) * (1 + 1e-12)
    assert interaction(0 * u) == 0


def test_partial_pairing_examples():
    d, N = 3, 2
    lat = ModeLattice(d, N)
    one = constant(lat)
    t = rand(d, N, 9)
    out = partial_pairing(PairingKind.MELONIC, one, one, 1, t)
    # only n = 0 and m_c = 0 survive: out_m = t_m on the hyperplane m_1 = 0
    plane = lat.modes[..., 0] == 0
    assert np.allclose(out[plane], t[plane]) and np.allclose(out[~plane], 0)
    assert np.allclose(out, naive_nonlocal_product_c(t, one, one, 1))
    mask = np.all(lat.modes[..., 1:] == 0, axis=-1)
    a, b = rand(d, N, 1), rand(d, N, 2)
    assert np.allclose(partial_pairing("exterior", a, b, 2, one), nonlocal_product_c(a, one, b, 2))
    assert np.allclose(partial_pairing("non_melonic", a, b, 3, t), nonlocal_product_c(a, b, t, 3))
    with pytest.raises(ValueError):
        partial_pairing("melonic", a, b, 1, t, support="hyperplane")
    with pytest.raises(ValueError):
        partial_pairing("melonic", a, b, 1, t, support="line")
    line = np.where(mask, t, 0)
    assert np.allclose(partial_pairing("melonic", a, b, 1, line, support="line"), nonlocal_product_c(line, a, b, 1))
    with pytest.raises(ValueError):
        partial_pairing("full", a, b, 1, t)


@given(dims, seeds)
def test_cauchy_schwarz(d, seed):
    N = SMALL[d]
    phi, psi = rand(d, N, seed), rand(d, N, seed + 1)
    for c in range(1, d + 1):
        lhs1 = abs(l2_pairing(nonlocal_product_c(phi, psi, phi, c), psi))
        rhs = l2_pairing(nonlocal_product_c(psi, psi, phi, c), phi)
        assert lhs1 <= rhs + 1e-12 * max(1.0, abs(rhs))
        lhs2 = abs(l2_pairing(nonlocal_product_c(phi, psi, phi, c), phi))
        # homogeneity forces the squared M^4 norm here
        rhs2 = np.sqrt(max(rhs, 0)) * m_norm(phi, c, 4) ** 2
        assert lhs2 <= rhs2 + 1e-12 * max(1.0, rhs2)


def test_action_gradient():
    for d in (2, 3, 4):
        lat = ModeLattice(d, 1)
        assert np.allclose(action_gradient(0 * constant(lat), 3.0), 0)
        a = 0.7
        out = action_gradient(constant(lat, a), 0.0)
        assert out[(1,) * d] == pytest.approx(-a - d * a ** 3)
        assert np.allclose(out[np.abs(constant(lat)) == 0], 0)
        phi = rand(d, 1, d)
        expect = 2.0 * phi - lat.bracket2 * phi - nonlocal_product(phi, phi, phi)
        assert np.allclose(action_gradient(phi, 2.0), expect)


def test_gradient_finite_difference():
    rng = np.random.default_rng(0)
    for d in (2, 3):
        phi = rand(d, 2, 5)
        g = interaction_gradient(phi)
        for _ in range(5):
            v = rand(d, 2, int(rng.integers(1 << 30)))
            eps = 1e-5
            fd = (interaction(phi + eps * v) - interaction(phi - eps * v)) / (8 * eps)
            assert fd == pytest.approx(l2_pairing(g, v), rel=1e-6)
