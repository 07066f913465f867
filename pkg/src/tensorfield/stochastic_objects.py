"""Gaussian inputs and the stochastic trees built from them.

Randomness is organised so that runs are reproducible and can be coupled
across cut-offs.  A :class:`NoiseSource` turns a ``(seed, purpose,
replica)`` key into one real standard normal per lattice mode per draw.  In
coupled mode every shell ``|m|_inf = L`` owns its own counter-based stream,
keyed by ``L`` alone, so two lattices with different ``N`` see identical
numbers on the shells they share.

A real normal per mode is turned into a Hermitian field by pairing ``m``
with ``-m``: for the lexicographically positive representative,
``u_m = s_m (z_m + i z_{-m}) / sqrt(2)`` and ``u_{-m} = conj(u_m)``, while
``u_0 = s_0 z_0``.  Hence ``E|u_m|^2 = s_m^2`` for every mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import renorm
from .lattice_field import ModeLattice, l2_pairing, lattice_of, reflect
from .nonlocal_product import interaction, nonlocal_product, nonlocal_product_c

PURPOSES = {
    "init": 1,
    "ou": 2,
    "langevin": 3,
    "bg": 4,
    "mcmc": 5,
    "aux": 6,
    "test": 7,
}


# ---------------------------------------------------------------------------
# random streams


@dataclass(frozen=True)
class RngStream:
    """Key of a reproducible counter-based stream.

    ``generator(*extra)`` returns a Philox generator seeded from
    ``(seed, replica, purpose, *extra)``; distinct keys give independent
    streams and equal keys give identical draws.
    """

    seed: int
    replica: int = 0
    purpose: str = "ou"

    def generator(self, *extra: int) -> np.random.Generator:
        if self.purpose not in PURPOSES:
            raise ValueError(f"unknown stream purpose {self.purpose!r}")
        key = (int(self.replica), PURPOSES[self.purpose]) + tuple(int(e) for e in extra)
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=key)
        return np.random.Generator(np.random.Philox(ss))


@lru_cache(maxsize=32)
def _shell_layout(d: int, N: int):
    lat = ModeLattice(d, N)
    linf = lat.linf.reshape(-1)
    order = np.argsort(linf, kind="stable")
    counts = np.bincount(linf, minlength=N + 1)
    starts = np.concatenate([[0], np.cumsum(counts)])
    return order, counts, starts


@lru_cache(maxsize=32)
def positive_mask(d: int, N: int) -> np.ndarray:
    """Modes whose first non-zero component is positive."""
    lat = ModeLattice(d, N)
    m = lat.modes.reshape(-1, d)
    nz = m != 0
    first = np.argmax(nz, axis=1)
    sign = m[np.arange(m.shape[0]), first]
    out = (sign > 0) & nz.any(axis=1)
    return out.reshape(lat.shape)


class NoiseSource:
    """One real standard normal per mode and per replica on each draw.

    Parameters
    ----------
    lattice : ModeLattice
    seed : int
    purpose : str
        Stream purpose tag (see ``PURPOSES``).
    replicas : int or sequence of int
        Replica ids; an int ``R`` means ``range(R)``.
    coupled : bool
        One stream per (replica, shell) instead of one bulk stream.  Coupled
        sources on different cut-offs agree on their common shells.
    """

    def __init__(self, lattice: ModeLattice, seed: int, purpose: str = "ou",
                 replicas: int | Sequence[int] = 1, coupled: bool = False):
        self.lattice = lattice
        self.seed = int(seed)
        self.purpose = purpose
        self.replicas = tuple(range(replicas)) if isinstance(replicas, (int, np.integer)) else tuple(replicas)
        self.coupled = coupled
        self.draws = 0
        d, N = lattice.d, lattice.N
        self._order, self._counts, self._starts = _shell_layout(d, N)
        if coupled:
            self._gens = [[RngStream(seed, r, purpose).generator(L) for L in range(N + 1)]
                          for r in self.replicas]
        else:
            first = self.replicas[0] if self.replicas else 0
            self._bulk = RngStream(seed, first, purpose).generator(1 << 20, len(self.replicas))

    @property
    def R(self) -> int:
        return len(self.replicas)

    def normals(self) -> np.ndarray:
        """Array of shape ``(R,) + lattice.shape``."""
        R, size = self.R, self.lattice.size
        canon = np.empty((R, size))
        if self.coupled:
            for i in range(R):
                for L, g in enumerate(self._gens[i]):
                    a, b = self._starts[L], self._starts[L + 1]
                    canon[i, a:b] = g.standard_normal(b - a)
        else:
            canon[:] = self._bulk.standard_normal((R, size))
        out = np.empty((R, size))
        out[:, self._order] = canon
        self.draws += 1
        return out.reshape((R,) + self.lattice.shape)

    def skip(self, n: int) -> None:
        for _ in range(n):
            self.normals()


def gaussian_field(z: np.ndarray, std: np.ndarray, d: int) -> np.ndarray:
    """Hermitian field with ``E|u_m|^2 = std_m^2`` from real normals ``z``."""
    z = np.asarray(z, dtype=float)
    lat = lattice_of(z, d)
    pos = positive_mask(d, lat.N)
    neg = reflect(pos, d)
    r = reflect(z, d)
    s = 1 / np.sqrt(2)
    u = np.where(pos, s * (z + 1j * r), np.where(neg, s * (r - 1j * z), z + 0j))
    return u * std


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck free field


def ou_std(lattice: ModeLattice) -> np.ndarray:
    """Stationary standard deviation ``1/<m>`` of the free field."""
    return 1.0 / np.sqrt(lattice.bracket2)


def ou_coefficients(lattice: ModeLattice, h: float):
    """AR(1) decay ``exp(-h <m>^2)`` and innovation std of the OU update."""
    b2 = lattice.bracket2
    decay = np.exp(-h * b2)
    std = np.sqrt(-np.expm1(-2.0 * h * b2) / b2)
    return decay, std


@dataclass
class OUState:
    """Free field at a time, with the noise source that drives it."""

    field: np.ndarray
    time: float
    source: NoiseSource


def sample_ou_stationary(lattice: ModeLattice, source: NoiseSource) -> np.ndarray:
    """Stationary free-field sample, ``E|X_m|^2 = 1/<m>^2``; shape ``(R,)+lattice``."""
    return gaussian_field(source.normals(), ou_std(lattice), lattice.d)


def ou_state(lattice: ModeLattice, source: NoiseSource, init: NoiseSource | None = None) -> OUState:
    """Stationary initial state; ``init`` defaults to ``source``."""
    return OUState(sample_ou_stationary(lattice, init or source), 0.0, source)


def evolve_ou(state: OUState, h: float) -> OUState:
    """Exact AR(1) step of length ``h`` for every mode."""
    if h <= 0:
        raise ValueError("step must be positive")
    lat = lattice_of(state.field, state.source.lattice.d)
    decay, std = ou_coefficients(lat, h)
    eta = gaussian_field(state.source.normals(), std, lat.d)
    return OUState(decay * state.field + eta, state.time + h, state.source)


# ---------------------------------------------------------------------------
# trees


def build_wick_cube(X: np.ndarray, table: renorm.RenormTable, d: int | None = None) -> np.ndarray:
    """``X^3 = N(X, X, X) - C^1 X`` (no factor 4)."""
    X = np.asarray(X)
    d = X.ndim if d is None else d
    if table.d != d:
        raise ValueError(f"renorm table is for d={table.d}, field has d={d}")
    return nonlocal_product(X, X, X, d) - table.c1_total * X


def x2pic2(X, P, table: renorm.RenormTable, d: int) -> np.ndarray:
    """``(N(P,X,X) - C^1 P) + (N(X,P,X) + N(X,X,P) - C^2 X)``.

    The second counterterm is split evenly between the two orderings with
    ``P`` in slot 2 or 3, matching its definition as the sum of two melonic
    expectations.
    """
    out = nonlocal_product(P, X, X, d) - table.c1_total * P
    out = out + nonlocal_product(X, P, X, d) + nonlocal_product(X, X, P, d) - table.c2_total * X
    return out


def rough_cube(bX, table: renorm.RenormTable, d: int) -> np.ndarray:
    """``N(bX, bX, bX) - (C^1 - C^2) bX``."""
    return nonlocal_product(bX, bX, bX, d) - (table.c1_total - table.c2_total) * bX


@dataclass
class EnhancedNoise:
    """Recorded stochastic objects on a uniform time grid.

    Every array has shape ``(n_times, R) + lattice.shape``; the ``d = 4``
    objects are ``None`` when only the ``d = 3`` set was requested.
    """

    times: np.ndarray
    h: float
    table: renorm.RenormTable
    X: np.ndarray
    X3: np.ndarray
    Pic2: np.ndarray | None = None
    X2Pic2: np.ndarray | None = None
    Pic3: np.ndarray | None = None
    bX: np.ndarray | None = None
    pX3: np.ndarray | None = None
    S: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.table.d


class EnhancedNoiseStepper:
    """Streams the stochastic objects along an exact OU path.

    ``Pic2`` solves ``(d_t + 1 - Laplacian) Pic2 = X^3`` and is started from
    zero at time ``-spinup``; ``Pic3`` solves the same equation with forcing
    ``X2Pic2`` from zero at time 0.  Both use the exponential Euler step
    ``P <- e^{-h<m>^2} P + (1 - e^{-h<m>^2}) <m>^{-2} F``.
    """

    def __init__(self, lattice: ModeLattice, table: renorm.RenormTable, h: float,
                 source: NoiseSource, init: NoiseSource | None = None, spinup: float = 10.0,
                 rough: bool = True, spinup_h: float | None = None, noise: bool = True):
        self.lattice, self.table, self.h = lattice, table, float(h)
        self.d = lattice.d
        self.source, self.rough, self.noise = source, rough, noise
        b2 = lattice.bracket2
        self._E = np.exp(-self.h * b2)
        self._Phi = -np.expm1(-self.h * b2) / b2
        self._decay, self._std = ou_coefficients(lattice, self.h)
        R = source.R
        if noise:
            self.X = sample_ou_stationary(lattice, init or source)
        else:
            self.X = np.zeros((R,) + lattice.shape, dtype=complex)
        self.Pic2 = np.zeros_like(self.X)
        self.Pic3 = np.zeros_like(self.X)
        self.t = -float(spinup)
        self.last_eta = np.zeros_like(self.X)
        self._cache = None
        hs = self.h if spinup_h is None else float(spinup_h)
        n_spin = int(round(spinup / hs)) if spinup > 0 else 0
        if rough and n_spin:
            E_s = np.exp(-hs * b2)
            Phi_s = -np.expm1(-hs * b2) / b2
            dec_s, std_s = ou_coefficients(lattice, hs)
            for _ in range(n_spin):
                X3 = build_wick_cube(self.X, table, self.d)
                self.Pic2 = E_s * self.Pic2 + Phi_s * X3
                self.X = self._ou(dec_s, std_s)
        elif n_spin:
            source.skip(n_spin) if noise else None
        self.t = 0.0

    def _ou(self, decay, std):
        if not self.noise:
            self.last_eta = np.zeros_like(self.X)
            return decay * self.X
        self.last_eta = gaussian_field(self.source.normals(), std, self.d)
        return decay * self.X + self.last_eta

    def objects(self) -> dict:
        """Current ``X, X3`` and, for the rough set, ``Pic2, X2Pic2, Pic3, bX, pX3, S``."""
        if self._cache is not None:
            return self._cache
        d, table = self.d, self.table
        out = {"X": self.X, "X3": build_wick_cube(self.X, table, d)}
        if self.rough:
            out["Pic2"] = self.Pic2
            out["Pic3"] = self.Pic3
            out["X2Pic2"] = x2pic2(self.X, self.Pic2, table, d)
            bX = self.X - self.Pic2 + self.Pic3
            out["bX"] = bX
            out["pX3"] = rough_cube(bX, table, d)
            out["S"] = out["pX3"] - out["X3"] + out["X2Pic2"]
        self._cache = out
        return out

    def step(self) -> None:
        obj = self.objects()
        if self.rough:
            self.Pic2 = self._E * self.Pic2 + self._Phi * obj["X3"]
            self.Pic3 = self._E * self.Pic3 + self._Phi * obj["X2Pic2"]
        self.X = self._ou(self._decay, self._std)
        self.t += self.h
        self._cache = None


def build_enhanced_noise(lattice: ModeLattice, table: renorm.RenormTable, h: float, n_steps: int,
                         source: NoiseSource, init: NoiseSource | None = None, spinup: float = 10.0,
                         rough: bool = True, record_every: int = 1, noise: bool = True,
                         spinup_h: float | None = None) -> EnhancedNoise:
    """Materialise the stochastic objects at every ``record_every``-th step."""
    st = EnhancedNoiseStepper(lattice, table, h, source, init, spinup, rough, spinup_h, noise)
    names = ["X", "X3"] + (["Pic2", "X2Pic2", "Pic3", "bX", "pX3", "S"] if rough else [])
    rec = {k: [] for k in names}
    times = []
    for k in range(n_steps + 1):
        if k % record_every == 0:
            obj = st.objects()
            for name in names:
                rec[name].append(obj[name])
            times.append(st.t)
        if k < n_steps:
            st.step()
    arrays = {k: np.stack(v) for k, v in rec.items()}
    return EnhancedNoise(np.array(times), h * record_every, table, **arrays,
                         meta={"seed": source.seed, "spinup": spinup, "step": h, "record_every": record_every})


def enhanced_noise_from_path(X_path: np.ndarray, h: float, table: renorm.RenormTable, d: int,
                             pic2_init: np.ndarray | None = None, rough: bool = True) -> EnhancedNoise:
    """Objects along a given free-field path on a uniform grid of step ``h``.

    ``X_path`` has shape ``(n_times, ...) + lattice``.
    """
    X_path = np.asarray(X_path)
    if X_path.ndim < d + 1:
        raise ValueError("path needs a leading time axis")
    lat = lattice_of(X_path, d)
    b2 = lat.bracket2
    E = np.exp(-h * b2)
    Phi = -np.expm1(-h * b2) / b2
    X3 = np.stack([build_wick_cube(x, table, d) for x in X_path])
    kw = {}
    if rough:
        P2 = np.zeros_like(X_path)
        P3 = np.zeros_like(X_path)
        X2P2 = np.zeros_like(X_path)
        P2[0] = 0 if pic2_init is None else pic2_init
        for k in range(X_path.shape[0]):
            X2P2[k] = x2pic2(X_path[k], P2[k], table, d)
            if k + 1 < X_path.shape[0]:
                P2[k + 1] = E * P2[k] + Phi * X3[k]
                P3[k + 1] = E * P3[k] + Phi * X2P2[k]
        bX = X_path - P2 + P3
        pX3 = np.stack([rough_cube(b, table, d) for b in bX])
        kw = dict(Pic2=P2, X2Pic2=X2P2, Pic3=P3, bX=bX, pX3=pX3, S=pX3 - X3 + X2P2)
    times = h * np.arange(X_path.shape[0])
    return EnhancedNoise(times, h, table, X_path, X3, **kw)


# ---------------------------------------------------------------------------
# random operators

OPERATORS = ("X2m", "X2nm", "XdotX", "Sym", "X2m_rough", "X2nm_rough", "XdotX_rough")


def _colours(c, d):
    return range(1, d + 1) if c is None else [c]


def apply_random_operator(name: str, noise: EnhancedNoise, k: int, f: np.ndarray,
                          c: int | None = None) -> np.ndarray:
    """Apply a random operator at recorded time index ``k``.

    ``X2m(f) = N^c(f, X, X) - C^{1,c} f`` (melonic), ``X2nm(f) = N^c(X, X, f)``
    (non-melonic), ``XdotX(f) = N^c(X, f, X)`` (exterior), summed over colours
    unless ``c`` is given.  The ``_rough`` variants use ``bX`` and
    ``C^{1,c} - C^{2,c}``.  ``Sym(f) = XdotX(L^{-1} XdotX(f))`` with ``L^{-1}``
    the exponential Euler recursion over the recorded history, started from
    zero at the first recorded time.
    """
    if name not in OPERATORS:
        raise ValueError(f"unknown random operator {name!r}")
    d = noise.d
    f = np.asarray(f)
    rough = name.endswith("_rough")
    base = name.replace("_rough", "")
    if rough and noise.bX is None:
        raise ValueError("rough operators need the d=4 object set")
    field_ = noise.bX if rough else noise.X
    tab = noise.table
    if base == "Sym":
        if noise.X.shape[0] < 2:
            raise ValueError("Sym needs a recorded history of at least two times")
        lat = lattice_of(f, d)
        b2 = lat.bracket2
        E = np.exp(-noise.h * b2)
        Phi = -np.expm1(-noise.h * b2) / b2
        w = np.zeros(np.broadcast_shapes(f.shape, noise.X.shape[1:]), dtype=complex)
        for j in range(k):
            w = E * w + Phi * apply_random_operator("XdotX", noise, j, f, c)
        return apply_random_operator("XdotX", noise, k, w, c)
    Y = field_[k]
    out = 0
    for col in _colours(c, d):
        if base == "X2m":
            ct = tab.c1_per_color[col - 1] - (tab.c2_per_color[col - 1] if rough else 0.0)
            out = out + nonlocal_product_c(np.broadcast_to(f, Y.shape), Y, Y, col, d) - ct * f
        elif base == "X2nm":
            out = out + nonlocal_product_c(Y, Y, np.broadcast_to(f, Y.shape), col, d)
        else:
            out = out + nonlocal_product_c(Y, np.broadcast_to(f, Y.shape), Y, col, d)
    return out


# ---------------------------------------------------------------------------
# scale flow


@dataclass(frozen=True)
class BGFlowState:
    t: float
    X: np.ndarray


@dataclass
class BGFlow:
    """Flow samples ``X_t`` on a scale grid; ``X`` has shape ``(n_t, R) + lattice``."""

    t_grid: np.ndarray
    X: np.ndarray
    lattice: ModeLattice

    def __len__(self):
        return len(self.t_grid)

    def __getitem__(self, i) -> BGFlowState:
        return BGFlowState(float(self.t_grid[i]), self.X[i])


def iter_bg_flow(lattice: ModeLattice, t_grid: Sequence[float], source: NoiseSource):
    """Yield ``(t, X_t)`` along an increasing scale grid.

    Increments over ``[s, t]`` are independent with variance
    ``(rho_t^2 - rho_s^2) / <m>^2`` per mode.  One draw of ``source`` is
    consumed per grid point, so the stream is reproducible whatever the grid
    spacing below scale 1.
    """
    ts = np.asarray(t_grid, dtype=float)
    if ts.ndim != 1 or ts.size == 0 or np.any(np.diff(ts) <= 0) or np.any(ts < 0):
        raise ValueError("scale grid must be non-empty, strictly increasing and non-negative")
    b = np.sqrt(lattice.bracket2)
    cur = np.zeros((source.R,) + lattice.shape, dtype=complex)
    prev = np.zeros(lattice.shape)
    for t in ts:
        r2 = renorm.rho_t2(t, b)
        var = np.maximum(r2 - prev, 0.0) / lattice.bracket2
        z = source.normals()
        if np.any(var > 0):
            cur = cur + gaussian_field(z, np.sqrt(var), lattice.d)
        prev = r2
        yield float(t), cur


def sample_bg_flow(lattice: ModeLattice, t_grid: Sequence[float], source: NoiseSource) -> BGFlow:
    """Exact Gaussian flow ``X_t = int_0^t J_s dB_s`` stored on a scale grid."""
    ts = np.asarray(t_grid, dtype=float)
    X = np.zeros((ts.size, source.R) + lattice.shape, dtype=complex)
    for i, (_, x) in enumerate(iter_bg_flow(lattice, ts, source)):
        X[i] = x
    return BGFlow(ts, X, lattice)


def _functional(f, phi, d):
    if f is None or f == "zero":
        return np.zeros(phi.shape[:phi.ndim - d])
    if f == "mean":
        return phi[(Ellipsis,) + ((phi.shape[-1] - 1) // 2,) * d].real
    if callable(f):
        return np.asarray(f(phi))
    raise ValueError(f"unknown functional tag {f!r}")


def bg_variational_value(enh, drift: str, k: int, b_t: float = 0.0, f=None) -> np.ndarray:
    """Per-replica value of ``V^f_t(X_t + I_t(u)) + 1/2 ||u||^2`` at scale index ``k``.

    ``enh`` is a :class:`tensorfield.bg_flow.BGEnhanced`.  With
    ``drift="zero"`` the argument is ``X_t`` and the entropy term is zero;
    with ``drift="explicit_shift"`` the drift ``u = -(rPic2 - rPic3)`` gives
    ``X_t + I_t(u) = bX_t`` and entropy ``1/2 ||rPic2 - rPic3||^2``.  The
    interaction part uses ``a_t = 2 (C^1_t - C^2_t)``.
    """
    d = enh.d
    a_t = enh.a[k]
    if drift == "zero":
        phi = enh.X[k]
        return _functional(f, phi, d) + interaction(phi, d) - a_t * l2_pairing(phi, phi, d) - b_t
    if drift == "explicit_shift":
        phi = enh.bX[k]
        return _functional(f, phi, d) + enh.XXXX[k] + 0.5 * enh.r_norm2[k] - b_t
    raise ValueError(f"unknown drift tag {drift!r}")
