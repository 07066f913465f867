import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tensorfield import renorm
from tensorfield.diagrams import (
    SKELETONS, GraphError, SkeletonSpec, TensorGraph, analyze, boundary_graph, colourings, double_factorial,
    enumerate_contractions, melonic_snowball, melonic_tadpole, open_two_vertex, perfect_matchings,
    primary_kind, primary_subgraphs, single_vertex, skeleton_graph, truncated_amplitude, wick_covariance,
    x_weighted_sum)
from tensorfield.lattice_field import ModeLattice


@pytest.mark.parametrize("d", [3, 4, 5])
def test_x2m_contraction_degrees(d):
    cs = enumerate_contractions(SkeletonSpec("X2m", d))
    assert len(cs) == 3
    assert sorted(analyze(G).degree for G in cs) == [0, d - 2, d - 1]


@pytest.mark.parametrize("d", [3, 4, 5])
@pytest.mark.parametrize("name", ["X2m", "X2nm", "X3", "XdotX", "Sym", "X2Pic2_1", "X2Pic2_2", "X2Pic2_3"])
def test_degree_gap_on_every_contraction(name, d):
    G, noise = skeleton_graph(SkeletonSpec(name, d))
    cs = enumerate_contractions(SkeletonSpec(name, d))
    assert len(cs) == double_factorial(len(noise) - 1)
    for H in cs:
        a = analyze(H, alpha=0.3, beta=-0.7)
        assert a.degree == 0 or a.degree >= d - 2
        assert a.melonic == (a.degree == 0)
        assert a.boundary_components == 0
        if a.omega_links is not None:
            assert a.omega == pytest.approx(a.omega_links, abs=1e-12)


def test_x3_has_melonic_contraction():
    degs = [analyze(G).degree for G in enumerate_contractions(SkeletonSpec("X3", 3))]
    assert 0 in degs and len(degs) == 15


def test_tadpole_and_snowball_omega():
    assert analyze(melonic_tadpole(3)).omega == 0
    assert analyze(melonic_tadpole(4)).omega == 1
    for d in (3, 4):
        a = analyze(melonic_tadpole(d))
        assert a.primary == "M1" and a.degree == 0 and a.boundary_components == 1
        assert analyze(melonic_tadpole(d), renormalized=True).omega == a.omega - 2
        assert analyze(melonic_snowball(d)).primary == "M2"
    assert analyze(melonic_snowball(3)).omega == -2 and analyze(melonic_snowball(4)).omega == 0
    assert primary_kind(single_vertex(3)) is None


def test_primary_subgraph_detection():
    kinds = sorted(k for k, _ in primary_subgraphs(melonic_snowball(4)))
    assert kinds == ["M1", "M2"]
    X3mel = [G for G in enumerate_contractions(SkeletonSpec("X3", 3)) if analyze(G).degree == 0]
    assert all(k == "M1" for G in X3mel for k, _ in primary_subgraphs(G))


def test_boundary_graphs():
    bd = boundary_graph(single_vertex(3))
    assert bd.n_nodes == 4 and len(bd.edges) == 6
    assert analyze(single_vertex(3)).boundary_components == 1
    same = analyze(open_two_vertex(3, 1, 1))
    assert same.boundary_components == 1
    assert analyze(open_two_vertex(3, 1, 2)).boundary_components == 2
    closed = enumerate_contractions(SkeletonSpec("X2m", 3))[0]
    assert boundary_graph(closed).n_nodes == 0 and analyze(closed).boundary_components == 0


def test_validation_names_the_constraint():
    G = single_vertex(3)
    bad = TensorGraph(3, G.n_nodes, G.external, [e for e in G.edges if e[2] != 2], G.vertices)
    with pytest.raises(GraphError, match="internal node"):
        bad.validate()
    with pytest.raises(GraphError, match="colour 7"):
        TensorGraph(3, 2, frozenset(), [(0, 1, 7)], []).validate()
    with pytest.raises(GraphError, match="self-loop"):
        TensorGraph(3, 2, frozenset(), [(0, 0, 1)], []).validate()
    with pytest.raises(GraphError, match="label"):
        TensorGraph(3, 2, frozenset(), [(0, 1, 1, "gamma")], []).validate()
    # two nodes joined by all d coloured edges
    edges = [(0, 1, c) for c in (1, 2, 3)] + [(0, 2, 0), (1, 3, 0)]
    with pytest.raises(GraphError, match="parallel"):
        TensorGraph(3, 4, frozenset({2, 3}), edges, []).validate()


def test_graph_json_roundtrip():
    G = melonic_snowball(4)
    H = TensorGraph.from_dict(json.loads(G.dumps()))
    assert H.to_dict() == G.to_dict()
    assert analyze(H).to_dict() == analyze(G).to_dict()


def test_counting_laws():
    for k in range(1, 6):
        assert len(perfect_matchings(range(2 * k))) == double_factorial(2 * k - 1)
    assert perfect_matchings(range(3)) == []
    assert len(colourings(4, 4)) == 15 and len(colourings(3, 2)) == 4
    with pytest.raises(ValueError):
        SkeletonSpec("X5", 3)
    with pytest.raises(ValueError):
        SkeletonSpec("X3", 3, (1,))
    assert set(SKELETONS) >= {"X2m", "X2nm", "X3", "XdotX", "Sym"}


def test_wick_covariance_of_x_closed_form():
    for d, N in ((2, 3), (3, 2), (4, 1)):
        for beta in (-1.0, 0.0, 0.5):
            res = wick_covariance("X", d, N, beta=beta)
            assert np.allclose(res.table, 1 / ModeLattice(d, N).bracket2, atol=1e-15)
            assert res.weighted_sum == pytest.approx(x_weighted_sum(d, N, beta), rel=1e-12)


def _x2m_one_closed_form(d, N):
    # Y = sum_c N^c(1, X, X) - C^1: at m = 0 a sum of |X_n|^2 weighted by the
    # number of colours with n_c = 0; on the axis m = m_c e_c a single colour
    lat = ModeLattice(d, N)
    out = np.zeros(lat.shape)
    z = np.sum(lat.modes == 0, axis=-1)
    out[(N,) * d] = np.sum(z ** 2 * 2 / lat.bracket2 ** 2)
    k2 = ModeLattice(d - 1, N).bracket2
    for c in range(d):
        for mc in range(-N, N + 1):
            if mc:
                idx = [N] * d
                idx[c] = mc + N
                out[tuple(idx)] = np.sum(1 / (k2 * (k2 + mc * mc)))
    return out


@pytest.mark.parametrize("d,N", [(3, 1), (3, 2), (4, 1)])
def test_wick_covariance_x2m_one_closed_form(d, N):
    res = wick_covariance("X2m", d, N, f="one")
    assert np.allclose(res.table, _x2m_one_closed_form(d, N), atol=1e-12, rtol=1e-12)


def test_wick_covariance_budget_and_names():
    with pytest.raises(MemoryError):
        wick_covariance("X", 4, 20)
    with pytest.raises(ValueError):
        wick_covariance("Pic2", 3, 1)


def test_tadpole_growth_rates():
    d3 = [(N, truncated_amplitude(melonic_tadpole(3), N)) for N in (4, 8, 16, 32)]
    fit = renorm.divergence_rate(d3)
    assert fit.model == "log" and 5.0 < fit.slope < 7.0
    d4 = [(N, truncated_amplitude(melonic_tadpole(4), N)) for N in (2, 4, 8, 16)]
    fit = renorm.divergence_rate(d4)
    assert fit.model == "linear" and fit.exponent == pytest.approx(1.0, abs=0.05)
    # the closed tadpole sum is the first counterterm, with external momentum 0
    assert truncated_amplitude(melonic_tadpole(3), 3) == pytest.approx(renorm.c1(3, 3), rel=1e-12)


def test_renormalised_amplitude_is_cauchy():
    G = [H for H in enumerate_contractions(SkeletonSpec("X3", 3)) if analyze(H).degree == 0][0]
    assert analyze(G, beta=-1.5).omega == -2
    a32 = truncated_amplitude(G, 32, beta=-1.5, renormalize=True, budget=1e12)
    a64 = truncated_amplitude(G, 64, beta=-1.5, renormalize=True, budget=1e12)
    assert abs(a64 - a32) / a64 <= 0.05
    with pytest.raises(MemoryError):
        truncated_amplitude(G, 8, beta=-1.5, renormalize=True, budget=10.0)


@given(st.sampled_from(["X2m", "X2nm", "XdotX"]), st.integers(3, 5), st.data())
def test_coloured_skeletons_validate(name, d, data):
    cols = tuple(data.draw(st.integers(1, d)) for _ in range(len(SkeletonSpec(name, d).colours)))
    for H in enumerate_contractions(SkeletonSpec(name, d, cols)):
        a = analyze(H)
        assert a.degree == 0 or a.degree >= d - 2
