import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from conftest import rand
from tensorfield import renorm
from tensorfield.lattice_field import ModeLattice, constant, l2_pairing
from tensorfield.sampler import (
    McmcConfig, batch_means_se, effective_sample_size, generator_on_l2, lyapunov_check, potential,
    potential_gradient, run_chain, run_mala, run_pcn)


def test_config_validation():
    for kw in (dict(algorithm="HMC"), dict(step=0.0), dict(step=1.5), dict(algorithm="MALA", step=-1.0),
               dict(thin=0), dict(n_samples=0), dict(burn_in=-1)):
        with pytest.raises(ValueError):
            McmcConfig(2, 1, **kw)
    with pytest.raises(ValueError):
        run_pcn(McmcConfig(2, 1, algorithm="MALA", step=0.1))
    with pytest.raises(ValueError):
        run_mala(McmcConfig(2, 1))


def test_potential_examples():
    for d in (2, 3, 4):
        table = renorm.renorm_table(d, 1)
        lat = ModeLattice(d, 1)
        assert potential(np.zeros(lat.shape), table, "none") == 0.0
        for a in (0.5, 1.7):
            phi = constant(lat, a)
            assert potential(phi, table, "none") == pytest.approx(d * a ** 4 / 4, rel=1e-13)
            assert potential(phi, table, "c1") == pytest.approx(d * a ** 4 / 4 - table.c1_total * a ** 2 / 2,
                                                                rel=1e-13)
            cc = table.c1_total - table.c2_total
            assert potential(phi, table, "c1_minus_c2") == pytest.approx(d * a ** 4 / 4 - cc * a ** 2 / 2, rel=1e-12)


@given(st.sampled_from([2, 3, 4]), st.integers(0, 10 ** 6))
def test_potential_gradient_finite_differences(d, seed):
    table = renorm.renorm_table(d, 1)
    phi, h = rand(d, 1, seed), rand(d, 1, seed + 1)
    eps = 1e-5
    fd = (potential(phi + eps * h, table, "c1") - potential(phi - eps * h, table, "c1")) / (2 * eps)
    exact = l2_pairing(potential_gradient(phi, table, "c1"), h, d).real
    assert fd == pytest.approx(exact, rel=1e-6, abs=1e-9)


def test_batch_means_se():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(40_000)
    assert batch_means_se(x) == pytest.approx(1 / np.sqrt(x.size), rel=0.2)
    rho = 0.9
    y = np.empty(200_000)
    y[0] = 0.0
    e = rng.standard_normal(y.size) * np.sqrt(1 - rho ** 2)
    for i in range(1, y.size):
        y[i] = rho * y[i - 1] + e[i]
    expected = np.sqrt((1 + rho) / (1 - rho) / y.size)
    assert batch_means_se(y) == pytest.approx(expected, rel=0.25)
    assert effective_sample_size(y) == pytest.approx(y.size * (1 - rho) / (1 + rho), rel=0.5)
    assert np.isnan(batch_means_se(np.ones(3)))


def test_pcn_gaussian_reference():
    cfg = McmcConfig(2, 1, step=0.4, n_samples=20_000, burn_in=0, tracked_modes=((0, 0), (1, 0), (1, 1)))
    st_ = run_pcn(cfg, potential_fn=lambda p: 0.0)
    assert st_.acceptance == 1.0
    b2 = ModeLattice(2, 1).bracket2
    for m in cfg.tracked_modes:
        k = "mode" + "_".join(map(str, m))
        exact = 1.0 / b2[ModeLattice(2, 1).index(m)]
        assert abs(st_.means[k] - exact) < 4 * st_.ses[k]


def test_pcn_acceptance_decreases_with_step():
    acc = [run_pcn(McmcConfig(2, 2, step=b, n_samples=3000, burn_in=200, seed=1)).acceptance
           for b in (0.1, 0.3, 0.6, 0.95)]
    assert all(a > b for a, b in zip(acc, acc[1:]))
    assert 0 <= acc[-1] <= acc[0] <= 1


def test_chains_are_seed_reproducible():
    cfg = McmcConfig(2, 1, n_samples=200, burn_in=10, seed=4, keep_samples=True)
    a, b = run_chain(cfg), run_chain(cfg)
    assert np.array_equal(a.series["L2sq"], b.series["L2sq"])
    assert len(a.samples) == 200 and a.summary()["acceptance"] == a.acceptance


def _toy_moments(d, c):
    # N = 0: one real mode with density exp(-x^2/2 - d x^4/4 + c x^2/2)
    w = lambda x: np.exp(-x * x / 2 - d * x ** 4 / 4 + c * x * x / 2)
    Z = integrate.quad(w, -np.inf, np.inf)[0]
    m2 = integrate.quad(lambda x: x * x * w(x), -np.inf, np.inf)[0] / Z
    m4 = integrate.quad(lambda x: x ** 4 * w(x), -np.inf, np.inf)[0] / Z
    cdf = lambda a: integrate.quad(w, -np.inf, a)[0] / Z
    return m2, m4, cdf


@pytest.mark.parametrize("algorithm,step", [("pCN", 0.7), ("MALA", 0.3)])
def test_detailed_balance_toy(algorithm, step):
    d = 2
    table = renorm.renorm_table(d, 0)
    cfg = McmcConfig(d, 0, algorithm=algorithm, step=step, n_samples=60_000, burn_in=1000, seed=2,
                     keep_samples=True)
    st_ = run_chain(cfg, table)
    m2, m4, cdf = _toy_moments(d, table.c1_total)
    x = np.array([s[0, 0].real for s in st_.samples])
    assert abs(st_.means["L2sq"] - m2) < 3 * st_.ses["L2sq"]
    assert abs(np.mean(x ** 4) - m4) < 3 * batch_means_se(x ** 4)
    # histogram against the quadrature marginal
    edges = np.array([-np.inf, -1.0, -0.5, 0.0, 0.5, 1.0, np.inf])
    ind = (x[:, None] >= edges[None, :-1]) & (x[:, None] < edges[None, 1:])
    probs = np.array([cdf(b) - (cdf(a) if np.isfinite(a) else 0.0) for a, b in zip(edges[:-1], edges[1:])])
    freq = ind.mean(axis=0)
    se = batch_means_se(ind.astype(float))
    assert np.all(np.abs(freq - probs) < 3 * se + 1e-12)


def test_lyapunov_examples():
    for d, N in ((2, 1), (4, 2)):
        table = renorm.renorm_table(d, N)
        rep = lyapunov_check(np.zeros(ModeLattice(d, N).shape), table)
        assert rep.LV[0] == pytest.approx((2 * N + 1) ** d / 2)
        assert rep.holds and rep.N == N
    table = renorm.renorm_table(4, 1)
    lat = ModeLattice(4, 1)
    vals = [generator_on_l2(constant(lat, a), table.c1_total, 4) for a in (1.0, 10.0, 100.0)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < -1e8


def test_lyapunov_on_chain_samples():
    cfg = McmcConfig(4, 2, step=0.2, n_samples=10_000, burn_in=200, seed=0, keep_samples=True)
    st_ = run_pcn(cfg)
    rep = lyapunov_check(np.stack(st_.samples), renorm.renorm_table(4, 2))
    assert rep.holds and np.isfinite(rep.C) and rep.LV.shape == (10_000,)
    assert np.all(rep.LV <= rep.C * 2 ** 4 * rep.V + 1e-9)
