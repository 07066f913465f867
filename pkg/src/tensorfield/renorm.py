"""Renormalization constants for the hard cut-off and the scale flow.

Lattice sums are organised by shells: ``r_k(s)`` counts the points of
``Z_N^k`` with ``|m|^2 = s``, so a radial sum over ``(2N+1)^k`` points costs
``O(k N^2)`` after one convolution.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, signal

from .lattice_field import check_color

# ---------------------------------------------------------------------------
# shell counts


@lru_cache(maxsize=64)
def shell_counts(k: int, N: int) -> np.ndarray:
    """``r[s]`` = number of ``m`` in ``Z_N^k`` with ``|m|^2 = s``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    out = np.zeros(1, dtype=np.int64)
    out[0] = 1
    if k == 0:
        return out
    base = np.zeros(N * N + 1, dtype=np.int64)
    a = np.arange(-N, N + 1)
    np.add.at(base, a * a, 1)
    for _ in range(k):
        if out.size * base.size < 4_000_000:
            out = np.convolve(out, base)
        else:
            out = np.rint(signal.fftconvolve(out.astype(float), base.astype(float))).astype(np.int64)
    return out


# ---------------------------------------------------------------------------
# hard cut-off constants


def c1(d: int, N: int, c: int = 1) -> float:
    """First counterterm ``c^{1,c}_N = sum_{m in Z_N^{d-1}} <m>^{-2}``.

    Independent of the colour ``c`` (validated only).
    """
    check_color(c, d)
    r = shell_counts(d - 1, N)
    s = np.arange(r.size)
    return float(np.sum(r / (1.0 + s)))


def c1_total(d: int, N: int) -> float:
    return d * c1(d, N)


def r1(d: int, N: int, c: int, m: Sequence[int]) -> float:
    """Renormalized tadpole amplitude ``Pi_N(m)/<m>^2 - Pi_N(m_c-hat)/<m_c-hat>^2``."""
    c = check_color(c, d)
    m = np.asarray(m, dtype=float)
    if m.shape != (d,):
        raise ValueError(f"mode must have length {d}")
    mh = m.copy()
    mh[c - 1] = 0.0
    full = float(np.max(np.abs(m)) <= N) / (1.0 + m @ m)
    cut = float(np.max(np.abs(mh)) <= N) / (1.0 + mh @ mh)
    return full - cut


def r1_array(d: int, N: int, c: int, modes: np.ndarray) -> np.ndarray:
    """Vectorised ``r1`` over an array of modes with trailing axis ``d``."""
    c = check_color(c, d)
    m = np.asarray(modes, dtype=float)
    mh = m.copy()
    mh[..., c - 1] = 0.0
    inside = np.max(np.abs(m), axis=-1) <= N
    inside_h = np.max(np.abs(mh), axis=-1) <= N
    return inside / (1.0 + np.sum(m * m, -1)) - inside_h / (1.0 + np.sum(mh * mh, -1))


def tadpole_residual(d: int, N: int, k) -> np.ndarray:
    """``g(k) = sum_{n in Z_N^{d-1}} [1/(1+|n|^2+k^2) - 1/(1+|n|^2)]``.

    This is the sum of ``r1`` over the internal strands of the melonic
    tadpole with external colour component ``k``; it vanishes at ``k = 0``
    and is non-positive.
    """
    k = np.asarray(k, dtype=float)
    r = shell_counts(d - 1, N).astype(float)
    s = np.arange(r.size, dtype=float)
    flat = (k * k).reshape(-1)
    out = np.empty(flat.size)
    step = max(1, 2 ** 22 // max(1, s.size))  # bound the temporary
    for i in range(0, flat.size, step):
        k2 = flat[i:i + step, None]
        out[i:i + step] = np.sum(r * (1.0 / (1.0 + s + k2) - 1.0 / (1.0 + s)), axis=-1)
    return out.reshape(k.shape)


def c2(d: int, N: int, c: int = 1) -> float:
    """Second counterterm ``c^{2,c}_N``.

    ``c^{2,c} = sum_{c' != c} sum_{n : n_c = 0} <n>^{-4} g(n_{c'})
    = (d-1) sum_{q in Z_N^{d-1}} <q>^{-4} g(q_1)``,
    which includes the factor 2 from the two melonic orderings and the 1/2
    from the stationary time integral.  Non-positive.
    """
    check_color(c, d)
    if N == 0:
        return 0.0
    r = shell_counts(d - 2, N).astype(float)
    s = np.arange(r.size, dtype=float)
    k = np.arange(-N, N + 1, dtype=float)
    g = tadpole_residual(d, N, k)
    w = np.array([np.sum(r / (1.0 + kk * kk + s) ** 2) for kk in k])
    return float((d - 1) * np.sum(w * g))


def c2_reference(d: int, N: int, c: int = 1) -> float:
    """Oracle for ``c2``: the literal nested sum.

    ``1/2 * 2 * sum_{c' != c} sum_{n in Z_N^d, n_c = 0} sum_{p}
    <n>^{-4} r1^{c'}(chi^{c'}(p, n))`` with ``p`` running over a box one larger
    than ``Z_N`` so that the projectors inside ``r1`` do the truncation.
    """
    c = check_color(c, d)
    total = 0.0
    rng_n = range(-N, N + 1)
    rng_p = np.arange(-(N + 1), N + 2)
    for cp in range(1, d + 1):
        if cp == c:
            continue
        free = [i for i in range(d) if i != cp - 1]
        grids = np.meshgrid(*([rng_p] * len(free)), indexing="ij")
        P = np.zeros(grids[0].shape + (d,))
        for j, i in enumerate(free):
            P[..., i] = grids[j]
        for n in itertools.product(rng_n, repeat=d):
            if n[c - 1] != 0:
                continue
            x = P.copy()
            x[..., cp - 1] = n[cp - 1]
            weight = (1.0 + sum(v * v for v in n)) ** -2
            total += 0.5 * 2.0 * weight * float(np.sum(r1_array(d, N, cp, x)))
    return total


# ---------------------------------------------------------------------------
# scale-flow profile


def _bump(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    return out


def _smoothstep(x):
    """C-infinity step: 0 for ``x <= 0``, 1 for ``x >= 1``."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    a, b = _bump(x), _bump(1.0 - x)
    return a / (a + b)


def _smoothstep_prime(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xs = np.where(inside, x, 0.5)
    a, b = _bump(xs), _bump(1.0 - xs)
    da, db = a / xs ** 2, b / (1.0 - xs) ** 2
    val = (da * b + a * db) / (a + b) ** 2
    return np.where(inside, val, 0.0)


def rho(r):
    """Scale-flow cut-off profile.

    ``rho(r) = S(2 - 2r)`` with ``S(x) = f(x) / (f(x) + f(1-x))`` and
    ``f(x) = exp(-1/x)``: smooth, non-increasing, equal to 1 on ``[0, 1/2]``
    and 0 on ``[1, inf)``.  Its steepest slope is 4.
    """
    return _smoothstep(2.0 - 2.0 * np.asarray(r, dtype=float))


def rho_prime(r):
    return -2.0 * _smoothstep_prime(2.0 - 2.0 * np.asarray(r, dtype=float))


def rho_t2(t, b):
    """``rho_t(m)^2 = rho(<m>/t)^2`` given ``b = <m>``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        r = np.where(t > 0, np.asarray(b) / np.where(t > 0, t, 1.0), np.inf)
    return rho(r) ** 2


def d_rho_t2(t, b):
    """``d/dt rho_t(m)^2 = 2 rho |rho'| (r) r / t`` with ``r = <m>/t``."""
    t = np.asarray(t, dtype=float)
    safe = np.where(t > 0, t, 1.0)
    r = np.asarray(b) / safe
    val = 2.0 * rho(r) * np.abs(rho_prime(r)) * r / safe
    return np.where(t > 0, val, 0.0)


def sigma_t(t, b):
    """``sigma_t(m) = sqrt(d/dt rho_t(m)^2)``."""
    return np.sqrt(d_rho_t2(t, b))


def n_eff(t: float) -> int:
    """Smallest ``N`` with ``<(N, 0, ..., 0)> >= t``; all modes with
    ``|m|_inf >= N`` are switched off at scale ``t``."""
    if t <= 1:
        return 0
    return int(math.ceil(math.sqrt(t * t - 1.0) - 1e-12))


def _check_tail(t: float, tail_cut: int | None) -> int:
    need = n_eff(t)
    if tail_cut is None:
        return need
    if tail_cut < need:
        raise ValueError(f"tail_cut={tail_cut} is too small: rho_t is non-zero on the boundary shell (need >= {need})")
    return int(tail_cut)


def c1_bg(d: int, t: float, c: int = 1, tail_cut: int | None = None) -> float:
    """``C^{1,c}_t = sum_{m in Z^{d-1}} rho_t(m)^2 / <m>^2``."""
    check_color(c, d)
    L = _check_tail(t, tail_cut)
    r = shell_counts(d - 1, L).astype(float)
    b2 = 1.0 + np.arange(r.size)
    return float(np.sum(r * rho_t2(t, np.sqrt(b2)) / b2))


class _C2Integrand:
    """``s -> 2(d-1) sum_q rho_s^2 d_s rho_s^2 <q>^{-4} G_s(q_1)``."""

    def __init__(self, d: int, L: int):
        self.d = d
        ks, b2s, mult = [], [], []
        r_rest = shell_counts(d - 2, L)
        for k in range(0, L + 1):
            w = 1 if k == 0 else 2
            for s, cnt in enumerate(r_rest):
                if cnt:
                    ks.append(k)
                    b2s.append(1.0 + k * k + s)
                    mult.append(w * cnt)
        self.k = np.array(ks)
        self.b = np.sqrt(np.array(b2s))
        self.b2 = np.array(b2s)
        self.mult = np.array(mult, dtype=float)
        rp = shell_counts(d - 1, L).astype(float)
        keep = rp > 0
        self.sig = np.arange(rp.size, dtype=float)[keep]
        self.rp = rp[keep]
        self.kvals = np.arange(0, L + 1, dtype=float)

    def G(self, s: float) -> np.ndarray:
        bb = 1.0 + self.sig[None, :] + self.kvals[:, None] ** 2
        b0 = 1.0 + self.sig
        term = rho_t2(s, np.sqrt(bb)) / bb - (rho_t2(s, np.sqrt(b0)) / b0)[None, :]
        return np.sum(self.rp[None, :] * term, axis=1)

    def __call__(self, s: float) -> float:
        if s <= 1.0:
            return 0.0
        w = rho_t2(s, self.b) * d_rho_t2(s, self.b) / self.b2 ** 2
        active = w != 0
        if not np.any(active):
            return 0.0
        G = self.G(s)
        return float(2 * (self.d - 1) * np.sum(self.mult[active] * w[active] * G[self.k[active]]))


def c2_bg_series(d: int, t_grid: Iterable[float], tail_cut: int | None = None,
                 epsabs: float = 1e-10) -> np.ndarray:
    """``C^{2,c}_t`` at each scale of an increasing grid (colour independent).

    The scale integral is accumulated interval by interval with adaptive
    Gauss-Kronrod quadrature at absolute tolerance ``epsabs``.
    """
    ts = np.asarray(list(t_grid), dtype=float)
    if ts.size == 0:
        return ts
    if np.any(np.diff(ts) < 0):
        raise ValueError("scale grid must be non-decreasing")
    L = _check_tail(float(ts.max()), tail_cut)
    f = _C2Integrand(d, L)
    out = np.zeros(ts.size)
    acc, prev = 0.0, 1.0
    for i, t in enumerate(ts):
        if t > prev:
            val, _ = integrate.quad(f, prev, t, epsabs=epsabs, epsrel=1e-10, limit=400)
            acc += val
            prev = t
        out[i] = acc
    return out


def c2_bg(d: int, t: float, c: int = 1, tail_cut: int | None = None) -> float:
    """``C^{2,c}_t`` for one scale."""
    check_color(c, d)
    return float(c2_bg_series(d, [t], tail_cut)[0])


# ---------------------------------------------------------------------------
# tables


@dataclass(frozen=True)
class RenormTable:
    """Per-colour counterterms for a hard cut-off ``N`` or a flow scale ``t``."""

    d: int
    cutoff_kind: str
    cutoff: float
    c1_per_color: tuple
    c2_per_color: tuple

    def __post_init__(self):
        if self.cutoff_kind not in ("N", "t"):
            raise ValueError("cutoff_kind must be 'N' or 't'")
        if len(self.c1_per_color) != self.d or len(self.c2_per_color) != self.d:
            raise ValueError("need one entry per colour")
        vals = np.array(self.c1_per_color + self.c2_per_color, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("counterterms must be finite")
        if min(self.c1_per_color) < 0:
            raise ValueError("c1 must be non-negative")

    @property
    def c1_total(self) -> float:
        return float(sum(self.c1_per_color))

    @property
    def c2_total(self) -> float:
        return float(sum(self.c2_per_color))

    def mass(self, mode: str) -> float:
        """Counterterm for a mode tag ``none``, ``c1`` or ``c1_minus_c2``."""
        if mode == "none":
            return 0.0
        if mode == "c1":
            return self.c1_total
        if mode == "c1_minus_c2":
            return self.c1_total - self.c2_total
        raise ValueError(f"unknown counterterm mode {mode!r}")

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "cutoff_kind": self.cutoff_kind,
            "cutoff": self.cutoff,
            "c1_per_color": list(self.c1_per_color),
            "c2_per_color": list(self.c2_per_color),
            "c1_total": self.c1_total,
            "c2_total": self.c2_total,
        }


def renorm_table(d: int, N: int) -> RenormTable:
    a, b = c1(d, N), c2(d, N)
    return RenormTable(d, "N", N, (a,) * d, (b,) * d)


def zero_table(d: int, N: int = 0) -> RenormTable:
    return RenormTable(d, "N", N, (0.0,) * d, (0.0,) * d)


def bg_renorm_table(d: int, t: float, tail_cut: int | None = None) -> RenormTable:
    a, b = c1_bg(d, t, 1, tail_cut), c2_bg(d, t, 1, tail_cut)
    return RenormTable(d, "t", float(t), (a,) * d, (b,) * d)


# ---------------------------------------------------------------------------
# divergence rates


@dataclass
class RateFit:
    """Outcome of ``divergence_rate``."""

    model: str
    slope: float
    residual: float
    exponent: float
    increments: np.ndarray = field(repr=False)
    slopes: np.ndarray = field(repr=False)


def divergence_rate(samples: Sequence[tuple]) -> RateFit:
    """Classify the growth of ``value(N)`` on a geometric sequence of ``N``.

    Successive increments ``D_k = v(N_{k+1}) - v(N_k)`` grow like
    ``q^gamma`` for ``v ~ N^gamma`` (``q`` the grid ratio) and are constant
    for ``v ~ log N``.  The estimated ``gamma`` selects the model
    ``constant`` (``gamma < -1/2``), ``log`` (``|gamma| <= 1/2``) or ``power``
    (``linear`` when ``|gamma - 1| < 1/2``).  The slope is the last successive
    slope: ``D/log q`` for log, ``D/N`` for linear and the last value for
    constant.  The residual is the rms misfit of the least-squares fit of the
    chosen model.
    """
    pts = sorted((float(n), float(v)) for n, v in samples)
    if len(pts) < 4:
        raise ValueError("need at least four samples")
    Ns = np.array([p[0] for p in pts])
    vs = np.array([p[1] for p in pts])
    ratios = Ns[1:] / Ns[:-1]
    if np.any(Ns <= 0) or np.ptp(ratios) > 1e-9 * ratios.mean() or ratios[0] <= 1:
        raise ValueError("N must be a positive geometric sequence")
    q = ratios[0]
    D = np.diff(vs)
    if np.allclose(D, 0, atol=1e-300):
        raise ValueError("degenerate (constant) sequence")
    with np.errstate(divide="ignore", invalid="ignore"):
        rr = D[1:] / D[:-1]
    rr = rr[np.isfinite(rr) & (rr > 0)]
    gamma = float(np.log(np.median(rr)) / np.log(q)) if rr.size else -np.inf
    if gamma < -0.5:
        model = "constant"
        A = np.stack([np.ones_like(Ns), 1.0 / Ns], axis=1)
        slope = float(vs[-1])
        slopes = vs[1:]
    elif gamma <= 0.5:
        model = "log"
        A = np.stack([np.ones_like(Ns), np.log(Ns)], axis=1)
        slopes = D / np.log(q)
        slope = float(slopes[-1])
    else:
        model = "linear" if abs(gamma - 1) < 0.5 else "power"
        expo = 1.0 if model == "linear" else gamma
        A = np.stack([np.ones_like(Ns), Ns ** expo], axis=1)
        slopes = D / (Ns[:-1] * (q ** expo - 1) / (q - 1)) if model == "linear" else D / (Ns[1:] ** expo - Ns[:-1] ** expo)
        slope = float(slopes[-1])
    coef, *_ = np.linalg.lstsq(A, vs, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - vs) ** 2)))
    return RateFit(model, slope, resid, gamma, D, np.asarray(slopes))


def continuum_c1_slope(d: int) -> float:
    """Continuum limit of the successive slope of ``c1``.

    For ``d = 3``, ``lim (c1(2N) - c1(N)) / log 2 = oint d(theta)`` over the
    boundary of a square seen from the origin, ``8 int_0^1 dy / (1 + y^2)``.
    For ``d = 4``, ``lim (c1(2N) - c1(N)) / N = int_{[-1,1]^3} |x|^{-2} dx
    = 6 int_{[-1,1]^2} dy dz / (1 + y^2 + z^2)``.
    """
    if d == 3:
        val, _ = integrate.quad(lambda y: 1.0 / (1.0 + y * y), 0.0, 1.0, epsabs=1e-13, epsrel=1e-13)
        return 8.0 * val
    if d == 4:
        val, _ = integrate.dblquad(lambda z, y: 1.0 / (1.0 + y * y + z * z), -1.0, 1.0, -1.0, 1.0,
                                   epsabs=1e-12, epsrel=1e-12)
        return 6.0 * val
    raise ValueError("continuum slope is defined for d = 3 (log) and d = 4 (linear)")
