import numpy as np
import pytest

from conftest import zscore
from tensorfield import renorm
from tensorfield.bg_flow import (
    BoundReport, bg_counterterms, build_bg_enhanced, effective_lattice, entropy_term, free_energy_bound,
    scale_grid, stream_bg_enhanced, zero_drift_decomposition)
from tensorfield.lattice_field import ModeLattice, l2_pairing
from tensorfield.nonlocal_product import interaction, nonlocal_product
from tensorfield.stochastic_objects import NoiseSource, bg_variational_value, sample_bg_flow, x2pic2


@pytest.fixture(scope="module")
def enh3():
    d, t_max = 3, 3.0
    grid = scale_grid(t_max, 0.1)
    lat = effective_lattice(d, t_max)
    flow = sample_bg_flow(lat, grid, NoiseSource(lat, 11, "bg", 64))
    return build_bg_enhanced(flow), flow


def test_scale_grid_and_lattice():
    g = scale_grid(2.0, 0.3)
    assert g[0] == 0.0 and g[-1] == 2.0 and np.all(np.diff(g) > 0) and np.max(np.diff(g)) <= 0.3
    with pytest.raises(ValueError):
        scale_grid(1.0, 0.0)
    assert effective_lattice(3, 8.0).N == renorm.n_eff(8.0) == 8
    assert effective_lattice(3, 0.5).N == 1


def test_counterterm_wiring(enh3):
    enh, flow = enh3
    c1, c2 = bg_counterterms(3, flow.t_grid)
    for k, t in enumerate(flow.t_grid):
        assert enh.c1[k] == c1[k] == pytest.approx(renorm.c1_bg(3, t, tail_cut=3), rel=1e-13)
        tab = renorm.bg_renorm_table(3, t, tail_cut=3)
        assert enh.a[k] == pytest.approx(2 * (tab.c1_total - tab.c2_total), rel=1e-8, abs=1e-10)
        assert enh.table(k).c2_total == pytest.approx(tab.c2_total, rel=1e-8, abs=1e-10)
    assert np.all(enh.a[flow.t_grid <= 1] == 0)


def test_factor_four_and_identities(enh3):
    enh, flow = enh3
    d = 3
    b = np.sqrt(enh.lattice.bracket2)
    for k in range(0, len(enh.t), 5):
        X = enh.X[k]
        tab = enh.table(k)
        assert np.allclose(enh.X3[k], 4 * (nonlocal_product(X, X, X, d) - tab.c1_total * X), atol=1e-12)
        assert np.allclose(enh.X2Pic2[k], 4 * x2pic2(X, enh.Pic2[k], tab, d), atol=1e-10)
        J = renorm.sigma_t(enh.t[k], b) / b
        assert np.allclose(enh.rPic2[k], J * enh.X3[k], atol=1e-12)
        assert np.allclose(enh.bX[k], X - enh.Pic2[k] + enh.Pic3[k], atol=1e-12)
        assert np.allclose(enh.S[k], enh.pX3[k] - enh.X3[k] + enh.X2Pic2[k], atol=1e-10)
        m = tab.c1_total - tab.c2_total
        xxxx = interaction(enh.bX[k], d) - 2 * m * l2_pairing(enh.bX[k], enh.bX[k], d)
        assert np.allclose(enh.XXXX[k], xxxx.real, rtol=1e-12, atol=1e-10)
    # trapezoid scale integral of J rPic2
    t = enh.t
    Js = np.stack([renorm.sigma_t(s, b) / b for s in t])[:, None]
    integrand = Js * enh.rPic2
    trap = np.concatenate([np.zeros_like(integrand[:1]),
                           np.cumsum(0.5 * np.diff(t)[:, None, None, None, None] * (integrand[1:] + integrand[:-1]),
                                     axis=0)])
    assert np.allclose(trap, enh.Pic2, atol=1e-10)


def test_objects_vanish_below_scale_one():
    lat = ModeLattice(3, 1)
    flow = sample_bg_flow(lat, [0.0, 0.5, 1.0], NoiseSource(lat, 0, "bg", 3))
    enh = build_bg_enhanced(flow)
    for name in ("X", "X3", "rPic2", "Pic2", "X2Pic2", "Pic3", "bX", "S", "XXXX", "r_norm2"):
        assert np.all(getattr(enh, name) == 0), name
    for k in range(3):
        assert np.all(bg_variational_value(enh, "zero", k) == 0)
        assert np.all(bg_variational_value(enh, "explicit_shift", k) == 0)
    with pytest.raises(ValueError):
        build_bg_enhanced(sample_bg_flow(lat, [0.5, 1.0], NoiseSource(lat, 0, "bg")))


def test_low_modes_freeze_after_saturation(enh3):
    enh, _ = enh3
    # J_t(m) = 0 once t >= 2 <m>, so Pic2 at m = 0 stops changing at t = 2
    k2 = int(np.searchsorted(enh.t, 2.0 - 1e-9))
    zero = (slice(None),) + (enh.lattice.N,) * 3
    P = enh.Pic2[(slice(None),) + zero]
    assert np.all(P[k2:] == P[k2])
    assert np.all(enh.rPic2[(slice(k2, None),) + zero] == 0)


def test_zero_drift_decomposition(enh3):
    enh, _ = enh3
    k = len(enh.t) - 1
    dec = zero_drift_decomposition(enh, k, b_t=1.5)
    # the individual terms are heavy tailed and cancel: compare with the largest
    scale = max(np.max(np.abs(v)) for v in dec.values()) + 1.0
    assert np.max(np.abs(dec["gap"])) <= 1e-12 * scale
    assert np.max(zscore(dec["martingale"][:, None], 0.0)) < 4.5


def test_entropy_and_variational_values(enh3):
    enh, _ = enh3
    k = len(enh.t) - 1
    assert np.all(entropy_term(enh, k, "explicit_shift") == 0)
    assert np.allclose(entropy_term(enh, k, "zero"), 0.5 * enh.r_norm2[k])
    with pytest.raises(ValueError):
        entropy_term(enh, k, "greedy")
    v = bg_variational_value(enh, "explicit_shift", k, b_t=2.0)
    assert np.allclose(v, enh.XXXX[k] + 0.5 * enh.r_norm2[k] - 2.0)
    z = bg_variational_value(enh, "zero", k)
    X = enh.X[k]
    assert np.allclose(z, interaction(X, 3).real - enh.a[k] * l2_pairing(X, X, 3).real)
    with pytest.raises(ValueError):
        bg_variational_value(enh, "greedy", k)


def test_streamed_equals_stored():
    d, grid = 3, scale_grid(2.0, 0.25)
    lat = effective_lattice(d, 2.0)
    a = build_bg_enhanced(sample_bg_flow(lat, grid, NoiseSource(lat, 3, "bg", 4)))
    b = stream_bg_enhanced(d, grid, NoiseSource(lat, 3, "bg", 4), record=[4, 8])
    assert np.allclose(b.S, a.S[[4, 8]]) and np.allclose(b.XXXX, a.XXXX[[4, 8]])


def test_free_energy_bound_small(tmp_path):
    rep = free_energy_bound(3, [0.5, 1.0], replicas=4)
    assert all(e.estimate == 0 and e.se == 0 for e in rep.estimates)
    rep = free_energy_bound(2, [1.0, 2.0, 3.0], replicas=8, aux_replicas=8, h=0.25, chunk=3)
    assert isinstance(rep, BoundReport) and [e.t for e in rep.estimates] == [1.0, 2.0, 3.0]
    assert rep.estimates[0].estimate == 0
    assert all(np.isfinite(e.estimate) and e.se > 0 for e in rep.estimates[1:])
    # the chunk size only groups replicas: the estimates do not depend on it
    again = free_energy_bound(2, [1.0, 2.0, 3.0], replicas=8, aux_replicas=8, h=0.25, chunk=8)
    assert [e.estimate for e in again.estimates] == pytest.approx([e.estimate for e in rep.estimates], rel=1e-12)
    rep.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().splitlines()[0] == "t,estimate,se,replicas"
    assert rep.band >= 0 and rep.max_se > 0
    with pytest.raises(ValueError):
        free_energy_bound(2, [2.0], drift="greedy")
