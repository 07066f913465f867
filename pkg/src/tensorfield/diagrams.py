"""Coloured tensor graphs, power counting and exact Wick sums.

Two independent views of the same perturbative objects live here.

*Combinatorics.*  A :class:`TensorGraph` is a ``(d+1)``-edge-coloured graph
whose colour-0 edges are links and whose coloured edges group into vertices.
A vertex of colour ``c`` has nodes ``(n1, n2, n3, n4)`` with colour-``c``
edges ``n1-n2`` and ``n3-n4`` and bundles of the other ``d-1`` colours on
``n1-n4`` and ``n2-n3``.  For the product ``N^c(f, g, h)`` tested against
``w`` the nodes carry ``(w, h, g, f)``.  :func:`analyze` traces faces,
strands and the boundary graph and returns the degree and the superficial
divergence degree.

*Numerics.*  Stochastic trees are expanded into monomials over Fourier
indices and every Wick pairing is summed exactly with ``numpy.einsum``.
Counterterms enter as monomials of their own, which is algebraically the
renormalised amplitude of the melonic tadpole.
"""

from __future__ import annotations

import itertools
import json
import string
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import renorm
from .lattice_field import ModeLattice, check_color


# ---------------------------------------------------------------------------
# graphs


class GraphError(ValueError):
    """A tensor-graph constraint is violated."""


@dataclass
class TensorGraph:
    """Half-edge free incidence representation.

    Parameters
    ----------
    d : int
    n_nodes : int
    external : frozenset
        External node ids; each has exactly one colour-0 edge.
    edges : list of (u, v, colour, label)
        ``label`` is ``None`` or one of ``"alpha"``, ``"beta"``, ``"time"``.
    vertices : list of (colour, (n1, n2, n3, n4))
        Inferred when ``None``.
    """

    d: int
    n_nodes: int
    external: frozenset
    edges: list
    vertices: list | None = None

    def __post_init__(self):
        self.external = frozenset(self.external)
        self.edges = [tuple(e) if len(e) == 4 else tuple(e) + (None,) for e in self.edges]
        if self.vertices is None:
            self.vertices = _infer_vertices(self)

    @property
    def internal_nodes(self):
        return [n for n in range(self.n_nodes) if n not in self.external]

    def links(self):
        return [i for i, e in enumerate(self.edges) if e[2] == 0]

    def internal_links(self):
        return [i for i in self.links() if not ({self.edges[i][0], self.edges[i][1]} & self.external)]

    def external_links(self):
        return [i for i in self.links() if {self.edges[i][0], self.edges[i][1]} & self.external]

    def incidence(self) -> dict:
        """``inc[node][colour] = (edge id, other end)``."""
        inc = {n: {} for n in range(self.n_nodes)}
        for k, (u, v, c, _) in enumerate(self.edges):
            for a, b in ((u, v), (v, u)):
                if c in inc[a]:
                    raise GraphError(f"node {a} has two edges of colour {c}")
                inc[a][c] = (k, b)
        return inc

    def validate(self) -> None:
        """Check every tensor-graph constraint, naming the first violation."""
        d = self.d
        for u, v, c, lab in self.edges:
            if not 0 <= c <= d:
                raise GraphError(f"edge ({u},{v}) has colour {c} outside 0..{d}")
            if u == v:
                raise GraphError(f"edge ({u},{v}) is a self-loop")
            if lab not in (None, "alpha", "beta", "time"):
                raise GraphError(f"unknown edge label {lab!r}")
        inc = self.incidence()
        for n in range(self.n_nodes):
            cols = set(inc[n])
            if n in self.external:
                if cols != {0}:
                    raise GraphError(f"external node {n} must have exactly one colour-0 edge, has colours {sorted(cols)}")
            elif cols != set(range(d + 1)):
                raise GraphError(f"internal node {n} must have one edge of each colour 0..{d}, has {sorted(cols)}")
        for a in range(self.n_nodes):
            for b in range(a + 1, self.n_nodes):
                par = [c for c in range(1, d + 1) if c in inc[a] and inc[a][c][1] == b]
                if len(par) == d:
                    raise GraphError(f"nodes {a} and {b} are joined by {d} parallel coloured edges")
        for c1 in range(1, d + 1):
            for c2 in range(c1 + 1, d + 1):
                for cyc in _faces(self, c1, c2, inc):
                    if len(cyc) not in (2, 4):
                        raise GraphError(f"({c1},{c2})-face of length {len(cyc)} (must be 2 or 4)")
        seen = set()
        for col, nodes in self.vertices:
            n1, n2, n3, n4 = nodes
            if seen & set(nodes):
                raise GraphError("vertices overlap")
            seen |= set(nodes)
            if inc[n1][col][1] != n2 or inc[n3][col][1] != n4:
                raise GraphError(f"vertex {nodes} lacks its colour-{col} edges")
            for c in range(1, d + 1):
                if c != col and (inc[n1][c][1] != n4 or inc[n2][c][1] != n3):
                    raise GraphError(f"vertex {nodes} lacks its colour-{c} bundle edge")
        if seen != set(self.internal_nodes):
            raise GraphError("internal nodes are not partitioned into vertices")

    # -- structured text
    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "n_nodes": self.n_nodes,
            "external": sorted(self.external),
            "edges": [list(e) for e in self.edges],
            "vertices": [[c, list(v)] for c, v in self.vertices],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TensorGraph":
        return cls(int(obj["d"]), int(obj["n_nodes"]), frozenset(obj.get("external", [])),
                   [tuple(e) for e in obj["edges"]],
                   [(int(c), tuple(v)) for c, v in obj["vertices"]] if "vertices" in obj else None)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _infer_vertices(G: TensorGraph):
    d = G.d
    try:
        inc = G.incidence()
    except GraphError:
        return []
    out, used = [], set()
    for n in sorted(G.internal_nodes):
        if n in used or len(inc[n]) != d + 1:
            continue
        for col in range(1, d + 1):
            others = [c for c in range(1, d + 1) if c != col]
            if not others:
                break
            n4 = inc[n][others[0]][1]
            if any(inc[n][c][1] != n4 for c in others):
                continue
            n2 = inc[n][col][1]
            if n2 not in inc or col not in inc[n2] or others[0] not in inc[n2]:
                continue
            n3 = inc[n2][others[0]][1]
            if inc[n3].get(col, (None, None))[1] != n4:
                continue
            out.append((col, (n, n2, n3, n4)))
            used |= {n, n2, n3, n4}
            break
    return out


def _faces(G: TensorGraph, c1: int, c2: int, inc=None) -> list:
    """Closed ``(c1, c2)`` cycles, each as its list of edge ids."""
    inc = G.incidence() if inc is None else inc
    seen = set()
    out = []
    for start in range(G.n_nodes):
        if c1 not in inc[start] or c2 not in inc[start]:
            continue
        k0 = inc[start][c1][0]
        if k0 in seen:
            continue
        cyc, node, col, ok = [], start, c1, True
        while True:
            if col not in inc[node]:
                ok = False
                break
            k, nxt = inc[node][col]
            cyc.append(k)
            node, col = nxt, c2 if col == c1 else c1
            if node == start and col == c1:
                break
        if ok:
            seen.update(cyc)
            out.append(cyc)
    return out


def _strands(G: TensorGraph, c: int, inc=None):
    """Internal ``(0, c)`` faces and external strands (paths between external nodes)."""
    inc = G.incidence() if inc is None else inc
    internal, external, seen = [], [], set()
    for x in sorted(G.external):
        k, node = inc[x][0]
        if k in seen:
            continue
        path = [k]
        while node not in G.external:
            kc, node = inc[node][c]
            path.append(kc)
            k, node = inc[node][0]
            path.append(k)
        seen.update(p for p in path if G.edges[p][2] == 0)
        external.append((x, node, path))
    for k in G.links():
        if k in seen:
            continue
        u = G.edges[k][0]
        cyc, node, col = [], u, 0
        while True:
            kk, node = inc[node][col]
            cyc.append(kk)
            col = c if col == 0 else 0
            if node == u and col == 0:
                break
        seen.update(p for p in cyc if G.edges[p][2] == 0)
        internal.append(cyc)
    return internal, external


def boundary_graph(G: TensorGraph) -> TensorGraph:
    """External nodes joined by one colour-``c`` edge per external ``(0,c)`` strand.

    A closed graph has an empty boundary.
    """
    ext = sorted(G.external)
    relabel = {x: i for i, x in enumerate(ext)}
    inc = G.incidence()
    edges = []
    for c in range(1, G.d + 1):
        _, external = _strands(G, c, inc)
        for a, b, _ in external:
            edges.append((relabel[a], relabel[b], c, None))
    bd = TensorGraph(G.d, len(ext), frozenset(), edges, [])
    return bd


def _components(n: int, pairs: Iterable[tuple]) -> int:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return len({find(x) for x in range(n)})


@dataclass
class GraphAnalysis:
    faces: dict
    internal_strands: dict
    external_strands: dict
    n_vertices: int
    n_internal_links: int
    n_external_links: int
    boundary_components: int
    degree: int
    omega: float
    omega_links: float | None
    melonic: bool
    primary: str | None

    @property
    def n_internal_strands(self) -> int:
        return sum(len(v) for v in self.internal_strands.values())

    def to_dict(self) -> dict:
        return {
            "faces": {f"{a},{b}": len(v) for (a, b), v in self.faces.items()},
            "n_internal_strands": self.n_internal_strands,
            "n_vertices": self.n_vertices,
            "n_internal_links": self.n_internal_links,
            "n_external_links": self.n_external_links,
            "boundary_components": self.boundary_components,
            "degree": self.degree,
            "omega": self.omega,
            "omega_links": self.omega_links,
            "melonic": self.melonic,
            "primary": self.primary,
        }


def link_label(G: TensorGraph, k: int, alpha: float, beta: float, eta: float = 1.0) -> float:
    """``ell(l)``: 1, ``alpha`` on ``l_alpha``, ``-beta`` on ``l_beta``, ``eta`` on time lines."""
    lab = G.edges[k][3]
    return {"alpha": alpha, "beta": -beta, "time": eta}.get(lab, 1.0)


def analyze(G: TensorGraph, alpha: float = 0.0, beta: float = 0.0, eta: float = 1.0,
            renormalized: bool = False, sym: bool = False, validate: bool = True) -> GraphAnalysis:
    """Faces, strands, boundary, degree and superficial divergence degree.

    ``omega`` follows the vertex form ``d - (5-d)|V| - (d-3)/2 |L^ext| - delta
    - C + 2(1-alpha) 1{l_alpha} + 2(1+beta) 1{l_beta} + 2(1-eta)|time lines|``
    (the last term only with ``sym=True``), less 2 when ``renormalized`` and
    the graph itself is a primary divergent graph.  ``omega_links`` is the
    strand form ``-2 sum ell(l) + |S^int|`` (same subtraction), available
    when the markers sit on links.
    """
    if validate:
        G.validate()
    d = G.d
    inc = G.incidence()
    faces = {}
    for c1 in range(d + 1):
        for c2 in range(c1 + 1, d + 1):
            if c1 == 0:
                continue
            faces[(c1, c2)] = _faces(G, c1, c2, inc)
    s_int, s_ext = {}, {}
    for c in range(1, d + 1):
        s_int[c], s_ext[c] = _strands(G, c, inc)
    n_v = len(G.vertices)
    L_int = G.internal_links()
    L_ext = G.external_links()
    if L_ext:
        bd = boundary_graph(G)
        C = _components(bd.n_nodes, [(u, v) for u, v, _, _ in bd.edges])
    else:
        C = 0
    S = sum(len(v) for v in s_int.values())
    delta_num = d - C + (d - 1) * n_v - S - (d - 1) * len(L_ext) / 2
    if abs(delta_num - round(delta_num)) > 1e-9:
        raise GraphError(f"non-integer degree {delta_num}")
    delta = int(round(delta_num))
    prim = primary_kind(G)
    sub = 2 if (renormalized and prim) else 0

    labels = [e[3] for e in G.edges]
    has_a = "alpha" in labels
    has_b = "beta" in labels
    n_time = sum(1 for k in L_int if G.edges[k][3] == "time")
    omega = (d - (5 - d) * n_v - (d - 3) / 2 * len(L_ext) - delta - C
             + 2 * (1 - alpha) * has_a + 2 * (1 + beta) * has_b
             + (2 * (1 - eta) * n_time if sym else 0.0) - sub)
    marks_on_links = all(e[2] == 0 for e in G.edges if e[3] is not None)
    omega_links = None
    if marks_on_links:
        eta_eff = eta if sym else 1.0
        omega_links = -2 * sum(link_label(G, k, alpha, beta, eta_eff) for k in L_int) + S - sub
    return GraphAnalysis(faces, s_int, s_ext, n_v, len(L_int), len(L_ext), C, delta,
                         float(omega), None if omega_links is None else float(omega_links),
                         delta == 0, prim)


# ---------------------------------------------------------------------------
# building blocks


class GraphBuilder:
    """Incremental construction of tensor graphs."""

    def __init__(self, d: int):
        self.d = d
        self.n = 0
        self.edges: list = []
        self.vertices: list = []
        self.external: set = set()

    def node(self) -> int:
        self.n += 1
        return self.n - 1

    def vertex(self, colour: int, markers: dict | None = None) -> tuple:
        """Add a vertex; ``markers`` maps ``"alpha"``/``"beta"`` to ``"c34"``,
        ``"c12"``, ``"b14"`` or ``"b23"`` (which coloured edge carries it)."""
        colour = check_color(colour, self.d)
        n1, n2, n3, n4 = (self.node() for _ in range(4))
        where = {v: k for k, v in (markers or {}).items()}
        self.edges.append((n1, n2, colour, where.get("c12")))
        self.edges.append((n3, n4, colour, where.get("c34")))
        first = True
        for c in range(1, self.d + 1):
            if c == colour:
                continue
            self.edges.append((n1, n4, c, where.get("b14") if first else None))
            self.edges.append((n2, n3, c, where.get("b23") if first else None))
            first = False
        self.vertices.append((colour, (n1, n2, n3, n4)))
        return n1, n2, n3, n4

    def link(self, a: int, b: int, label: str | None = None) -> None:
        self.edges.append((a, b, 0, label))

    def leg(self, a: int) -> int:
        x = self.node()
        self.external.add(x)
        self.edges.append((a, x, 0, None))
        return x

    def build(self) -> TensorGraph:
        return TensorGraph(self.d, self.n, frozenset(self.external), list(self.edges), list(self.vertices))


def single_vertex(d: int, colour: int = 1) -> TensorGraph:
    """One vertex with four external legs."""
    b = GraphBuilder(d)
    for n in b.vertex(colour):
        b.leg(n)
    return b.build()


def melonic_tadpole(d: int, colour: int = 1) -> TensorGraph:
    """Open two-point graph: link on the bundle pair ``n2-n3``, legs at ``n1, n4``."""
    b = GraphBuilder(d)
    n1, n2, n3, n4 = b.vertex(colour)
    b.link(n2, n3)
    b.leg(n1)
    b.leg(n4)
    return b.build()


def melonic_snowball(d: int, c: int = 1, c2: int = 2) -> TensorGraph:
    """Tadpole of colour ``c2`` inserted on the inner bundle of a colour-``c`` vertex."""
    if c == c2:
        raise ValueError("snowball needs two different colours")
    b = GraphBuilder(d)
    a1, a2, a3, a4 = b.vertex(c)
    b1, b2, b3, b4 = b.vertex(c2)
    b.link(a2, b1)
    b.link(a3, b4)
    b.link(b2, b3)
    b.leg(a1)
    b.leg(a4)
    return b.build()


def open_two_vertex(d: int, c: int = 1, c2: int = 2) -> TensorGraph:
    """Two vertices joined by two links on bundle pairs, four external legs."""
    b = GraphBuilder(d)
    a1, a2, a3, a4 = b.vertex(c)
    b1, b2, b3, b4 = b.vertex(c2)
    b.link(a2, b1)
    b.link(a3, b4)
    for n in (a1, a4, b2, b3):
        b.leg(n)
    return b.build()


def _bundle_pair(G: TensorGraph, u: int, v: int) -> tuple | None:
    for col, nodes in G.vertices:
        n1, n2, n3, n4 = nodes
        if {u, v} == {n2, n3} or {u, v} == {n1, n4}:
            return col, nodes
    return None


def primary_kind(G: TensorGraph) -> str | None:
    """``"M1"`` for a melonic tadpole, ``"M2"`` for a melonic snowball, else ``None``."""
    L_int = G.internal_links()
    L_ext = G.external_links()
    if len(L_ext) != 2:
        return None
    if len(G.vertices) == 1 and len(L_int) == 1:
        u, v, _, _ = G.edges[L_int[0]]
        return "M1" if _bundle_pair(G, u, v) else None
    if len(G.vertices) == 2 and len(L_int) == 3:
        (ca, A), (cb, B) = G.vertices
        if ca == cb:
            return None
        for X, Y in ((A, B), (B, A)):
            tad = [k for k in L_int if {G.edges[k][0], G.edges[k][1]} in ({Y[1], Y[2]}, {Y[0], Y[3]})]
            if len(tad) != 1:
                continue
            u, v = G.edges[tad[0]][:2]
            rest = set(Y) - {u, v}
            others = [k for k in L_int if k != tad[0]]
            ends = [set(G.edges[k][:2]) for k in others]
            inner = set().union(*ends) - rest
            if all(len(e & rest) == 1 for e in ends) and inner in ({X[1], X[2]}, {X[0], X[3]}):
                return "M2"
    return None


def subgraph(G: TensorGraph, link_ids: Sequence[int]) -> TensorGraph:
    """Tensor subgraph spanned by the given internal links of ``G``.

    Its vertices are the endpoints of those links; every other link at those
    vertices becomes an external link.
    """
    chosen = set(link_ids)
    ends = set()
    for k in chosen:
        u, v, c, _ = G.edges[k]
        if c != 0:
            raise GraphError("subgraphs are spanned by links")
        ends |= {u, v}
    verts = [(c, nodes) for c, nodes in G.vertices if set(nodes) & ends]
    keep = sorted(set().union(*[set(n) for _, n in verts])) if verts else []
    relabel = {x: i for i, x in enumerate(keep)}
    n = len(keep)
    edges, external = [], set()
    for k, (u, v, c, lab) in enumerate(G.edges):
        if c != 0:
            if u in relabel and v in relabel:
                edges.append((relabel[u], relabel[v], c, lab))
        elif k in chosen:
            edges.append((relabel[u], relabel[v], 0, lab))
        else:
            for a in (u, v):
                if a in relabel:
                    edges.append((relabel[a], n, 0, None))
                    external.add(n)
                    n += 1
    vmap = [(c, tuple(relabel[x] for x in nodes)) for c, nodes in verts]
    return TensorGraph(G.d, n, frozenset(external), edges, vmap)


def primary_subgraphs(G: TensorGraph) -> list:
    """All ``(kind, link ids)`` with the spanned subgraph a tadpole or snowball."""
    out = []
    L = G.internal_links()
    for k in L:
        if primary_kind(subgraph(G, [k])) == "M1":
            out.append(("M1", (k,)))
    for trip in itertools.combinations(L, 3):
        if primary_kind(subgraph(G, trip)) == "M2":
            out.append(("M2", trip))
    return out


# ---------------------------------------------------------------------------
# skeletons and contractions

SKELETONS = ("X2m", "X2nm", "X3", "XdotX", "Sym", "X2Pic2_1", "X2Pic2_2", "X2Pic2_3")


@dataclass(frozen=True)
class SkeletonSpec:
    """Named object and vertex colours.

    Operators ``X2m`` and ``X2nm`` use the reduced one-vertex skeleton where
    ``l_alpha``/``l_beta`` are coloured edges of the root vertex; every other
    object glues two copies of its tree, outputs by ``l_beta`` and (for
    operators) inputs by ``l_alpha``.  ``X2Pic2_k`` puts ``Pic2`` in slot
    ``k`` of the outer product.
    """

    name: str
    d: int
    colours: tuple = ()

    def __post_init__(self):
        if self.name not in SKELETONS:
            raise ValueError(f"unknown skeleton {self.name!r}")
        need = n_vertices(self.name)
        cols = self.colours or (1,) * need
        if len(cols) != need:
            raise ValueError(f"{self.name} needs {need} vertex colours")
        for c in cols:
            check_color(c, self.d)
        object.__setattr__(self, "colours", tuple(cols))


def n_vertices(name: str) -> int:
    return {"X2m": 1, "X2nm": 1, "X3": 2, "XdotX": 2, "Sym": 4}.get(name, 4)


def skeleton_graph(spec: SkeletonSpec) -> tuple:
    """Skeleton graph and the list of its noise legs (external nodes)."""
    b = GraphBuilder(spec.d)
    cols = spec.colours
    noise = []
    if spec.name in ("X2m", "X2nm"):
        marks = {"alpha": "c34", "beta": "c12"} if spec.name == "X2m" else {"alpha": "b23", "beta": "b14"}
        for n in b.vertex(cols[0], marks):
            noise.append(b.leg(n))
        return b.build(), noise
    if spec.name == "X3":
        A = b.vertex(cols[0])
        B = b.vertex(cols[1])
        b.link(A[0], B[0], "beta")
        noise = [b.leg(n) for n in A[1:] + B[1:]]
        return b.build(), noise
    if spec.name == "XdotX":
        A = b.vertex(cols[0])
        B = b.vertex(cols[1])
        b.link(A[0], B[0], "beta")
        b.link(A[2], B[2], "alpha")
        noise = [b.leg(n) for n in (A[1], A[3], B[1], B[3])]
        return b.build(), noise
    if spec.name == "Sym":
        # outer A (copy 1), inner A2 fed through its output into A's g slot
        A, A2, B, B2 = (b.vertex(c) for c in cols)
        b.link(A[0], B[0], "beta")
        b.link(A2[2], B2[2], "alpha")
        b.link(A2[0], A[2], "time")
        b.link(B2[0], B[2], "time")
        noise = [b.leg(n) for V in (A, A2, B, B2) for n in (V[1], V[3])]
        return b.build(), noise
    slot = int(spec.name[-1])
    # node positions of slots f, g, h in (n1, n2, n3, n4) = (w, h, g, f)
    pos = {1: 3, 2: 2, 3: 1}[slot]
    A, A2, B, B2 = (b.vertex(c) for c in cols)
    b.link(A[0], B[0], "beta")
    for outer, inner in ((A, A2), (B, B2)):
        b.link(inner[0], outer[pos], "time")
        noise += [b.leg(outer[p]) for p in (1, 2, 3) if p != pos]
        noise += [b.leg(n) for n in inner[1:]]
    return b.build(), noise


def perfect_matchings(items: Sequence) -> list:
    items = list(items)
    if not items:
        return [[]]
    if len(items) % 2:
        return []
    first, rest = items[0], items[1:]
    out = []
    for i, other in enumerate(rest):
        for m in perfect_matchings(rest[:i] + rest[i + 1:]):
            out.append([(first, other)] + m)
    return out


def double_factorial(n: int) -> int:
    return 1 if n <= 0 else n * double_factorial(n - 2)


def contract(G: TensorGraph, pairs: Sequence[tuple]) -> TensorGraph:
    """Join the internal ends of each pair of external nodes by a link."""
    inc = G.incidence()
    drop = set()
    new_edges = []
    for a, b in pairs:
        ka, na = inc[a][0]
        kb, nb = inc[b][0]
        drop |= {ka, kb}
        new_edges.append((na, nb, 0, None))
    keep_nodes = [n for n in range(G.n_nodes) if not any(n in p for p in pairs)]
    relabel = {x: i for i, x in enumerate(keep_nodes)}
    edges = [(relabel[u], relabel[v], c, lab) for k, (u, v, c, lab) in enumerate(G.edges) if k not in drop]
    edges += [(relabel[u], relabel[v], c, lab) for u, v, c, lab in new_edges]
    ext = frozenset(relabel[x] for x in G.external if x in relabel)
    verts = [(c, tuple(relabel[x] for x in nodes)) for c, nodes in G.vertices]
    return TensorGraph(G.d, len(keep_nodes), ext, edges, verts)


def enumerate_contractions(spec: SkeletonSpec, validate: bool = True) -> list:
    """Every perfect matching of the noise legs as a closed tensor graph.

    There are ``(2k-1)!!`` of them for ``2k`` legs.  Matchings that would
    violate a tensor-graph constraint raise :class:`GraphError` when
    ``validate`` is set.
    """
    G, noise = skeleton_graph(spec)
    out = []
    for m in perfect_matchings(noise):
        H = contract(G, m)
        if validate:
            H.validate()
        out.append(H)
    return out


def colourings(n: int, d: int) -> list:
    """Vertex colourings up to relabelling of colours (restricted growth strings)."""
    out = []

    def rec(prefix, top):
        if len(prefix) == n:
            out.append(tuple(c + 1 for c in prefix))
            return
        for c in range(min(top + 2, d)):
            rec(prefix + [c], max(top, c))

    rec([], -1)
    return out


# ---------------------------------------------------------------------------
# truncated amplitudes


def _bracket2_tensor(d: int, N: int) -> np.ndarray:
    return ModeLattice(d, N).bracket2


@lru_cache(maxsize=64)
def _tadpole_bound_table(d: int, N: int):
    """``F[s, |m_c|] = sum_k (<m_e>^2 ^ <m_i>^2) / (<m_i>^2 <m_i,chat>^2)``, ``m_i = (k, m_c)``.

    Tabulated against ``s = |m_e|^2``.
    """
    r = renorm.shell_counts(d - 1, N).astype(float)
    sig = np.arange(r.size, dtype=float)
    smax = d * N * N
    out = np.zeros((smax + 1, N + 1))
    for mc in range(N + 1):
        bi = 1.0 + sig + mc * mc
        bh = 1.0 + sig
        for s in range(smax + 1):
            be = 1.0 + s
            out[s, mc] = np.sum(r * np.minimum(be, bi) / (bi * bh))
    return out


def truncated_amplitude(G: TensorGraph, N: int, alpha: float = 0.0, beta: float = 0.0,
                        eta: float = 1.0, renormalize: bool = False, external=None,
                        budget: float = 5e8) -> float:
    """Strand sum of the amplitude with every strand momentum in ``[-N, N]``.

    Each link ``l`` contributes ``<m_l>^{-2 ell(l)}``; the component ``c`` of
    ``m_l`` is the momentum of the ``(0, c)`` strand through ``l``.  With
    ``renormalize`` every melonic tadpole subgraph is replaced by its bound
    ``(<m_e>^2 ^ <m_i>^2) / (<m_i>^2 <m_{i,chat}>^2)`` summed over its inner
    strands.  External strands carry the momentum ``external`` (default 0).
    """
    d = G.d
    K = 2 * N + 1
    inc = G.incidence()
    letter_of = {}
    letters = iter(string.ascii_letters)
    fixed = {}
    ext = np.zeros(d, dtype=int) if external is None else np.asarray(external, dtype=int)
    for c in range(1, d + 1):
        internal, external_s = _strands(G, c, inc)
        for cyc in internal:
            try:
                L = next(letters)
            except StopIteration as exc:
                raise MemoryError("too many strands for the contraction engine") from exc
            for k in cyc:
                if G.edges[k][2] == 0:
                    letter_of[(k, c)] = L
        for _, _, path in external_s:
            for k in path:
                if G.edges[k][2] == 0:
                    fixed[(k, c)] = int(ext[c - 1])
    b2 = _bracket2_tensor(d, N)
    ops, subs = [], []
    skip = set()
    if renormalize:
        table = _tadpole_bound_table(d, N)
        for kind, (k,) in [p for p in primary_subgraphs(G) if p[0] == "M1"]:
            u, v, _, _ = G.edges[k]
            col, nodes = _bundle_pair(G, u, v)
            others = [x for x in nodes if x not in (u, v)]
            ke = inc[others[0]][0][0]
            skip.add(k)
            for c in range(1, d + 1):
                if c != col:
                    letter_of.pop((k, c), None)
            arr, sub = _link_operand(ke, d, N, letter_of, fixed)
            m = ModeLattice(d, N).modes
            s = np.sum(m * m, axis=-1)
            F = table[s, np.abs(m[..., col - 1])]
            ops.append(_slice(F, sub))
            subs.append("".join(x for x in sub if isinstance(x, str)))
    for k in G.links():
        if k in skip:
            continue
        ell = link_label(G, k, alpha, beta, eta)
        arr, sub = _link_operand(k, d, N, letter_of, fixed)
        ops.append(_slice(b2 ** (-ell), sub))
        subs.append("".join(x for x in sub if isinstance(x, str)))
    if not ops:
        return 1.0
    expr = ",".join(subs) + "->"
    path, _ = np.einsum_path(expr, *ops, optimize="greedy")
    if _path_cost(subs, path[1:], K) > budget:
        raise MemoryError("strand sum exceeds the evaluation budget")
    val = np.einsum(expr, *ops, optimize=path)
    return float(np.real(val))


def _path_cost(subs, steps, K) -> float:
    """Sum over contraction steps of ``K^(letters touched)``."""
    terms = [set(x) for x in subs]
    cost = 0.0
    for step in steps:
        picked = [terms[i] for i in step]
        for i in sorted(step, reverse=True):
            terms.pop(i)
        touched = set().union(*picked)
        cost += float(K) ** len(touched)
        rest = set().union(*terms) if terms else set()
        terms.append(touched & rest)
    return cost


def _link_operand(k, d, N, letter_of, fixed):
    sub = []
    for c in range(1, d + 1):
        if (k, c) in letter_of:
            sub.append(letter_of[(k, c)])
        else:
            sub.append(("fix", fixed.get((k, c), 0)))
    return None, sub


def _slice(arr, sub):
    N = (arr.shape[0] - 1) // 2
    idx = tuple(N + s[1] if isinstance(s, tuple) else slice(None) for s in sub)
    return arr[idx]


# ---------------------------------------------------------------------------
# Wick engine


@dataclass(frozen=True)
class Noise:
    """The free field ``X``."""


@dataclass(frozen=True)
class Leaf:
    """A deterministic field (full-lattice coefficient array)."""

    key: str


@dataclass(frozen=True)
class Input:
    """Open input slot of a random operator."""


@dataclass(frozen=True)
class Prod:
    """``N^c(f, g, h)``."""

    c: int
    f: object
    g: object
    h: object


@dataclass(frozen=True)
class Sum:
    terms: tuple  # of (coef, tree)


@dataclass(frozen=True)
class Leg:
    kind: str          # "X", "leaf", "in"
    index: tuple       # d pairs (sign, var)
    key: str | None = None


class _Fresh:
    def __init__(self, prefix):
        self.prefix, self.k = prefix, 0

    def __call__(self):
        self.k += 1
        return f"{self.prefix}{self.k}"


def expand(tree, out: tuple, fresh) -> list:
    """Monomials ``[(coef, legs)]`` of ``tree`` evaluated at Fourier index ``out``."""
    if isinstance(tree, Noise):
        return [(1.0, (Leg("X", out),))]
    if isinstance(tree, Leaf):
        return [(1.0, (Leg("leaf", out, tree.key),))]
    if isinstance(tree, Input):
        return [(1.0, (Leg("in", out),))]
    if isinstance(tree, Sum):
        res = []
        for coef, t in tree.terms:
            res += [(coef * c, legs) for c, legs in expand(t, out, fresh)]
        return res
    if isinstance(tree, Prod):
        d = len(out)
        ci = tree.c - 1
        n = fresh()
        f_idx = tuple((1, (n, i)) if i == ci else out[i] for i in range(d))
        g_idx = tuple((-1, (n, i)) for i in range(d))
        h_idx = tuple(out[i] if i == ci else (1, (n, i)) for i in range(d))
        parts = [expand(t, idx, fresh) for t, idx in ((tree.f, f_idx), (tree.g, g_idx), (tree.h, h_idx))]
        res = []
        for (c1, l1), (c2, l2), (c3, l3) in itertools.product(*parts):
            res.append((c1 * c2 * c3, l1 + l2 + l3))
        return res
    raise TypeError(f"unknown tree node {tree!r}")


class _UF:
    def __init__(self):
        self.parent, self.par, self.zero = {}, {}, set()

    def find(self, x):
        if x not in self.parent:
            self.parent[x], self.par[x] = x, 1
            return x, 1
        p, s = x, 1
        path = []
        while self.parent[p] != p:
            path.append(p)
            s *= self.par[p]
            p = self.parent[p]
        # path compression
        acc = s
        for q in path:
            nxt_par = self.par[q]
            self.parent[q], self.par[q] = p, acc
            acc *= nxt_par
        return p, s

    def union(self, a, b, r, prefer=None):
        """Impose ``a = r * b``."""
        ra, pa = self.find(a)
        rb, pb = self.find(b)
        if ra == rb:
            if pa * r * pb == -1:
                self.zero.add(ra)
            return
        z = ra in self.zero or rb in self.zero
        if prefer is not None and prefer(ra) and not prefer(rb):
            ra, rb, pa, pb = rb, ra, pb, pa
        # ra = pa * r * pb * rb
        self.parent[ra], self.par[ra] = rb, pa * r * pb
        if z:
            self.zero.add(rb)

    def is_zero(self, x):
        return self.find(x)[0] in self.zero


def _evaluate(legs, pairs, weighted, out_vars, d, N, leaves, cov):
    """Sum of one Wick pairing; returns an array over ``out_vars`` (d-tuple of var keys)."""
    uf = _UF()
    is_out = lambda v: v[0] == "m"
    for a, b in pairs + weighted:
        for i in range(d):
            sa, va = legs[a].index[i]
            sb, vb = legs[b].index[i]
            uf.union(va, vb, -sa * sb, prefer=is_out)
    letters = {}
    pool = iter(string.ascii_letters)

    def sub_of(leg):
        sub, flips = [], []
        for i, (s, v) in enumerate(leg.index):
            root, p = uf.find(v)
            if root in uf.zero:
                sub.append(None)
                flips.append(False)
                continue
            if root not in letters:
                letters[root] = next(pool)
            sub.append(letters[root])
            flips.append(s * p == -1)
        return sub, flips

    ops, subs = [], []
    K = 2 * N + 1
    for a, b in pairs:
        sub, _ = sub_of(legs[a])
        ops.append(_take(cov, sub))
        subs.append("".join(x for x in sub if x))
    for k, (a, b) in enumerate(weighted):
        sub, _ = sub_of(legs[a])
        ops.append(_take(leaves["__weight_in"], sub))
        subs.append("".join(x for x in sub if x))
    paired = {x for p in pairs + weighted for x in p}
    for k, leg in enumerate(legs):
        if k in paired:
            continue
        if leg.kind != "leaf":
            raise ValueError("unpaired random leg")
        sub, flips = sub_of(leg)
        arr = leaves[leg.key]
        for ax, fl in enumerate(flips):
            if fl:
                arr = np.flip(arr, axis=ax)
        ops.append(_take(arr, sub))
        subs.append("".join(x for x in sub if x))
    out_sub, out_flip, out_zero = [], [], []
    for v in out_vars:
        root, p = uf.find(v)
        if root in uf.zero:
            out_zero.append(True)
            out_sub.append(None)
            out_flip.append(False)
            continue
        out_zero.append(False)
        if root not in letters:
            letters[root] = next(pool)
            ops.append(np.ones(K))
            subs.append(letters[root])
        out_sub.append(letters[root])
        out_flip.append(p == -1)
    uniq = []
    for s in out_sub:
        if s and s not in uniq:
            uniq.append(s)
    if not ops:
        res = np.asarray(1.0)
    else:
        res = np.einsum(",".join(subs) + "->" + "".join(uniq), *ops, optimize="greedy")
    # expand to one axis per output component
    full = np.zeros((K,) * len(out_vars), dtype=np.result_type(res, float))
    idx_axes = np.indices((K,) * len(uniq)) if uniq else np.zeros((0,), dtype=int)
    sel = []
    for s, z, fl in zip(out_sub, out_zero, out_flip):
        if z:
            sel.append(np.full(res.shape, N, dtype=int) if uniq else np.array(N))
        else:
            ax = idx_axes[uniq.index(s)]
            sel.append(K - 1 - ax if fl else ax)
    np.add.at(full, tuple(sel), res)
    return full


def _take(arr, sub):
    N = (arr.shape[0] - 1) // 2
    idx = tuple(N if s is None else slice(None) for s in sub)
    return arr[idx]


def _closed_sum(legs, out_vars, d, N, leaves, weight_in=None) -> np.ndarray:
    """Sum over all Wick pairings of the ``X`` legs; ``in`` legs pair among themselves with ``weight_in``."""
    cov = 1.0 / ModeLattice(d, N).bracket2
    xs = [k for k, l in enumerate(legs) if l.kind == "X"]
    ins = [k for k, l in enumerate(legs) if l.kind == "in"]
    if len(ins) not in (0, 2):
        raise ValueError("operator mode needs exactly one input per copy")
    weighted = [tuple(ins)] if ins else []
    lv = dict(leaves)
    if ins:
        lv["__weight_in"] = weight_in
    K = 2 * N + 1
    total = np.zeros((K,) * d, dtype=complex)
    for m in perfect_matchings(xs):
        total = total + _evaluate(legs, list(m), weighted, out_vars, d, N, lv, cov)
    return total


def tree_for(name: str, d: int, table: renorm.RenormTable | None = None, f: object = None):
    """Tree of a named object: ``X``, ``X3``, ``X2m``, ``X2nm`` or ``XdotX``.

    The operators are summed over colours; ``f`` defaults to the operator
    input.
    """
    f = Input() if f is None else f
    X = Noise()
    if name == "X":
        return X
    if name == "X3":
        c1 = 0.0 if table is None else table.c1_total
        return Sum(tuple((1.0, Prod(c, X, X, X)) for c in range(1, d + 1)) + ((-c1, X),))
    if name == "X2m":
        terms = []
        for c in range(1, d + 1):
            cc = 0.0 if table is None else table.c1_per_color[c - 1]
            terms += [(1.0, Prod(c, f, X, X)), (-cc, f)]
        return Sum(tuple(terms))
    if name == "X2nm":
        return Sum(tuple((1.0, Prod(c, X, X, f)) for c in range(1, d + 1)))
    if name == "XdotX":
        return Sum(tuple((1.0, Prod(c, X, f, X)) for c in range(1, d + 1)))
    raise ValueError(f"no equal-time Wick representation for {name!r}")


def _out_index(d: int, sign: int):
    return tuple((sign, ("m", i)) for i in range(d))


def wick_mean(tree, d: int, N: int, leaves: dict | None = None) -> np.ndarray:
    """Exact ``E[tau_m]`` for every mode ``m`` of ``Z_N^d``."""
    out = _out_index(d, 1)
    K = 2 * N + 1
    total = np.zeros((K,) * d, dtype=complex)
    for coef, legs in expand(tree, out, _Fresh("a")):
        if coef == 0:
            continue
        total = total + coef * _closed_sum(list(legs), [("m", i) for i in range(d)], d, N, leaves or {})
    return total


def wick_second_moment(tree, d: int, N: int, leaves: dict | None = None, alpha: float = 0.0) -> np.ndarray:
    """Exact ``E[tau_m tau_{-m}] = E|tau_m|^2`` per mode.

    For operator trees (with :class:`Input`) the inputs of the two copies are
    joined with weight ``<n>^{-2 alpha}`` and summed over ``n``.
    """
    K = 2 * N + 1
    A = expand(tree, _out_index(d, 1), _Fresh("a"))
    B = expand(tree, _out_index(d, -1), _Fresh("b"))
    weight = ModeLattice(d, N).bracket2 ** (-alpha)
    total = np.zeros((K,) * d, dtype=complex)
    out_vars = [("m", i) for i in range(d)]
    for (ca, la), (cb, lb) in itertools.product(A, B):
        coef = ca * cb
        if coef == 0:
            continue
        total = total + coef * _closed_sum(list(la + lb), out_vars, d, N, leaves or {}, weight)
    return total


@dataclass
class WickResult:
    table: np.ndarray
    weighted_sum: float
    beta: float
    alpha: float


def wick_covariance(name: str, d: int, N: int, alpha: float = 0.0, beta: float = 0.0,
                    table: renorm.RenormTable | None = None, f=None, budget: int = 6) -> WickResult:
    """``sum_m <m>^{2 beta} E|tau_m|^2`` with its per-mode table.

    ``f`` is ``None`` for the operator kernel (inputs weighted by
    ``<n>^{-2 alpha}``), ``"one"`` for the constant field or a coefficient
    array.  ``table`` defaults to the cut-off counterterms.
    """
    if (2 * N + 1) ** d > 10 ** budget:
        raise MemoryError("lattice too large for the exact Wick sum")
    table = renorm.renorm_table(d, N) if table is None else table
    leaves = {}
    leaf = None
    if isinstance(f, str) and f == "one":
        arr = np.zeros((2 * N + 1,) * d, dtype=complex)
        arr[(N,) * d] = 1.0
        leaves["f"] = arr
        leaf = Leaf("f")
    elif f is not None:
        leaves["f"] = np.asarray(f, dtype=complex)
        leaf = Leaf("f")
    tree = tree_for(name, d, table, leaf)
    tab = wick_second_moment(tree, d, N, leaves, alpha).real
    w = ModeLattice(d, N).bracket2 ** beta
    return WickResult(tab, float(np.sum(w * tab)), beta, alpha)


def x_weighted_sum(d: int, N: int, beta: float) -> float:
    """Closed form ``sum_m <m>^{2 beta - 2}`` for ``tau = X``."""
    r = renorm.shell_counts(d, N).astype(float)
    s = np.arange(r.size)
    return float(np.sum(r * (1.0 + s) ** (beta - 1.0)))
