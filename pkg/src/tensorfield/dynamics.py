"""Exponential-Euler integrators for the cut-off Langevin equation.

All schemes act mode by mode as

    u <- E u + Phi F(u) (+ eta),   E = exp(-h <m>^2),   Phi = (1 - E) / <m>^2,

with the nonlinearity ``F`` frozen at the start of the step and ``eta`` the
exact OU innovation.  The linear part is therefore solved exactly for any
step.  Remainder equations reuse the noise stream of the full equation, so
``phi = X + v`` (or ``bX + v`` in four dimensions) can be compared against a
direct run with matched noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from . import renorm
from .lattice_field import ModeLattice, embed, l2_pairing, sobolev_norm
from .nonlocal_product import interaction, nonlocal_product
from .stochastic_objects import (
    EnhancedNoiseStepper,
    NoiseSource,
    gaussian_field,
    ou_coefficients,
)

BLOWUP_L2 = 1e8
COUNTERTERMS = ("none", "c1", "c1_minus_c2")


@dataclass
class SolverConfig:
    """Parameters of one integration.

    ``coupled`` switches the noise to per-shell streams so that runs at
    different ``N`` share their common modes.  ``spinup`` and ``spinup_dt``
    control the warm start of ``Pic2`` for remainder runs.
    """

    d: int
    N: int
    dt: float
    T: float
    counterterm: str = "c1"
    seed: int = 0
    scheme: str = "ETD1"
    replicas: int = 1
    coupled: bool = False
    record_every: int = 1
    spinup: float = 10.0
    spinup_dt: float | None = None
    tracked_modes: tuple = ()
    noise: bool = True

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if self.N < 0:
            raise ValueError("N must be non-negative")
        if not 0 < self.dt <= 0.5:
            raise ValueError("dt must lie in (0, 0.5]")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.scheme != "ETD1":
            raise ValueError(f"unsupported scheme {self.scheme!r}")
        if self.counterterm not in COUNTERTERMS:
            raise ValueError(f"unknown counterterm mode {self.counterterm!r}")
        if self.record_every < 1 or self.replicas < 1:
            raise ValueError("record_every and replicas must be positive")

    @property
    def lattice(self) -> ModeLattice:
        return ModeLattice(self.d, self.N)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def table(self) -> renorm.RenormTable:
        return renorm.renorm_table(self.d, self.N)

    def mass(self) -> float:
        return self.table().mass(self.counterterm)

    def source(self, purpose: str = "langevin") -> NoiseSource:
        return NoiseSource(self.lattice, self.seed, purpose, self.replicas, self.coupled)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["tracked_modes"] = [list(m) for m in self.tracked_modes]
        return out


@dataclass
class Trajectory:
    """Recorded times, observable series and optional snapshots.

    Series have shape ``(n_times, R)``.  ``blowup_time`` is ``None`` unless
    some replica left the finite range, in which case the run stops there.
    """

    times: np.ndarray
    series: dict
    snapshots: list = field(default_factory=list)
    final: np.ndarray | None = None
    blowup_time: float | None = None
    blowup_replica: int | None = None
    tracked: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def blew_up(self) -> bool:
        return self.blowup_time is not None

    def to_csv(self, path, replica: int = 0) -> None:
        names = sorted(self.series)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + names)
            for i, t in enumerate(self.times):
                w.writerow([repr(float(t))] + [repr(float(self.series[n][i][replica])) for n in names])


class _Recorder:
    def __init__(self, tracked_modes, lattice: ModeLattice):
        self.times, self.series, self.snaps = [], {}, []
        self.idx = [lattice.index(m) for m in tracked_modes]
        self.tracked = {tuple(m): [] for m in tracked_modes}

    def add(self, t, values: dict, phi=None, snapshot=False):
        self.times.append(t)
        for k, v in values.items():
            self.series.setdefault(k, []).append(np.asarray(v, dtype=float))
        if phi is not None:
            for m, i in zip(self.tracked, self.idx):
                self.tracked[m].append(phi[(Ellipsis,) + i])
        if snapshot:
            self.snaps.append((t, phi.copy()))

    def build(self, final, blow_t=None, blow_r=None) -> Trajectory:
        series = {k: np.array(v) for k, v in self.series.items()}
        tracked = {m: np.array(v) for m, v in self.tracked.items()}
        return Trajectory(np.array(self.times), series, self.snaps, final, blow_t, blow_r, tracked)


def field_observables(phi: np.ndarray, d: int) -> dict:
    return {
        "L2sq": l2_pairing(phi, phi, d),
        "H1sq": sobolev_norm(phi, 1.0, d) ** 2,
        "interaction": interaction(phi, d),
    }


def _blowup(phi: np.ndarray, d: int):
    l2 = np.sqrt(np.abs(l2_pairing(phi, phi, d)))
    bad = ~np.isfinite(l2) | (l2 > BLOWUP_L2)
    bad = bad | ~np.all(np.isfinite(phi).reshape(phi.shape[:phi.ndim - d] + (-1,)), axis=-1)
    return np.flatnonzero(np.atleast_1d(bad))


def integrate_full_sde(cfg: SolverConfig, source: NoiseSource | None = None,
                       phi0: np.ndarray | None = None, nonlinear: bool = True,
                       snapshot_every: int = 0) -> Trajectory:
    """ETD1 Euler-Maruyama for ``d phi = (c phi - (1-Lap) phi - N(phi)) dt + sqrt(2) dW``.

    Parameters
    ----------
    cfg : SolverConfig
    source : NoiseSource, optional
        Defaults to ``cfg.source("langevin")``.
    phi0 : array, optional
        Initial field, broadcast over replicas; zero by default.
    nonlinear : bool
        ``False`` drops ``N`` (the counterterm is still applied).
    snapshot_every : int
        Store a copy of the field every this many recorded times (0: never).
    """
    lat, d = cfg.lattice, cfg.d
    src = source if source is not None else cfg.source("langevin")
    R = src.R
    h = cfg.dt
    b2 = lat.bracket2
    E = np.exp(-h * b2)
    Phi = -np.expm1(-h * b2) / b2
    _, std = ou_coefficients(lat, h)
    mass = cfg.mass()
    phi = np.zeros((R,) + lat.shape, dtype=complex)
    if phi0 is not None:
        phi = phi + phi0
    rec = _Recorder(cfg.tracked_modes, lat)
    n_rec = 0

    def record(t):
        nonlocal n_rec
        snap = snapshot_every > 0 and n_rec % snapshot_every == 0
        rec.add(t, field_observables(phi, d), phi, snap)
        n_rec += 1

    record(0.0)
    for k in range(1, cfg.n_steps + 1):
        drift = mass * phi
        if nonlinear:
            drift = drift - nonlocal_product(phi, phi, phi, d)
        phi = E * phi + Phi * drift
        if cfg.noise:
            phi = phi + gaussian_field(src.normals(), std, d)
        bad = _blowup(phi, d)
        if bad.size:
            return rec.build(phi, k * h, int(bad[0]))
        if k % cfg.record_every == 0:
            record(k * h)
    return rec.build(phi)


# ---------------------------------------------------------------------------
# remainder equations


def mixed_terms(v: np.ndarray, Y: np.ndarray, mass: float, d: int) -> np.ndarray:
    """The seven products of ``N(Y+v, Y+v, Y+v) - N(Y,Y,Y) - mass v``.

    The counterterm sits in the melonic ``N(v, Y, Y)`` term.
    """
    out = nonlocal_product(v, Y, Y, d) - mass * v
    out = out + nonlocal_product(Y, v, Y, d) + nonlocal_product(Y, Y, v, d)
    out = out + nonlocal_product(v, v, Y, d) + nonlocal_product(v, Y, v, d) + nonlocal_product(Y, v, v, d)
    return out + nonlocal_product(v, v, v, d)


def pairing_observables(v: np.ndarray, Y: np.ndarray, forcing: np.ndarray, mass: float, d: int) -> dict:
    """Pairings of the remainder energy identity.

    ``vXXv = (N(v,Y,Y) - mass v, v)``, ``XvXv = (N(Y,v,Y), v)``,
    ``XXvv = (N(Y,Y,v), v)``, ``Xvvv`` the sum of the three pairings with a
    single ``Y`` (they coincide), ``Sv = (forcing, v)``.
    """
    cub = l2_pairing(nonlocal_product(v, Y, v, d), v, d)
    return {
        "vXXv": l2_pairing(nonlocal_product(v, Y, Y, d) - mass * v, v, d),
        "XvXv": l2_pairing(nonlocal_product(Y, v, Y, d), v, d),
        "XXvv": l2_pairing(nonlocal_product(Y, Y, v, d), v, d),
        "Xvvv": 3.0 * cub,
        "Sv": l2_pairing(forcing, v, d),
        "vL2sq": l2_pairing(v, v, d),
        "vH1sq": sobolev_norm(v, 1.0, d) ** 2,
        "vI": interaction(v, d),
    }


def _remainder(cfg: SolverConfig, v0, source, init, rough: bool, assembly: str,
               snapshot_every: int, return_noise: bool, snapshot_N: int | None = None):
    lat, d = cfg.lattice, cfg.d
    table = cfg.table()
    mass = table.mass(cfg.counterterm)
    src = source if source is not None else cfg.source("langevin")
    ini = init if init is not None else cfg.source("init")
    st = EnhancedNoiseStepper(lat, table, cfg.dt, src, ini, spinup=cfg.spinup if rough else 0.0,
                              rough=rough, spinup_h=cfg.spinup_dt, noise=cfg.noise)
    if assembly not in ("explicit", "compact"):
        raise ValueError(f"unknown assembly {assembly!r}")
    h = cfg.dt
    b2 = lat.bracket2
    E = np.exp(-h * b2)
    Phi = -np.expm1(-h * b2) / b2
    v = np.zeros((src.R,) + lat.shape, dtype=complex)
    if v0 is not None:
        v = v + v0
    rec = _Recorder(cfg.tracked_modes, lat)
    Ykey, Fkey = ("bX", "S") if rough else ("X", "X3")
    path = [] if return_noise else None
    n_rec = 0
    start = None
    # counterterm carried by the forcing (X^3 or S); the compact form below
    # is -mixed(v, Y) - forcing with the cubes of Y cancelled by hand
    ct = table.c1_total - table.c2_total if rough else table.c1_total

    def drift(obj):
        Y, forcing = obj[Ykey], obj[Fkey]
        if assembly == "explicit":
            return -mixed_terms(v, Y, mass, d) - forcing
        phi = Y + v
        out = mass * v + ct * Y - nonlocal_product(phi, phi, phi, d)
        return out + obj["X3"] - obj["X2Pic2"] if rough else out

    for k in range(cfg.n_steps + 1):
        obj = st.objects()
        if start is None:
            start = {kk: vv.copy() for kk, vv in obj.items()}
        if k % cfg.record_every == 0:
            phi = obj[Ykey] + v
            vals = field_observables(phi, d)
            vals.update(pairing_observables(v, obj[Ykey], obj[Fkey], mass, d))
            snap = snapshot_every > 0 and n_rec % snapshot_every == 0
            rec.add(k * h, vals, v, False)
            if snap:
                rec.snaps.append((k * h, v.copy() if snapshot_N is None else embed(v, snapshot_N, d)))
            if return_noise:
                path.append({kk: vv.copy() for kk, vv in obj.items()})
            n_rec += 1
        if k == cfg.n_steps:
            break
        v = E * v + Phi * drift(obj)
        st.step()
        bad = _blowup(v, d)
        if bad.size:
            traj = rec.build(v, (k + 1) * h, int(bad[0]))
            traj.initial_noise = start
            return traj
    traj = rec.build(v)
    traj.initial_noise = start
    if return_noise:
        traj.noise_path = path
    return traj


def integrate_remainder_d3(cfg: SolverConfig, v0: np.ndarray | None = None,
                           source: NoiseSource | None = None, init: NoiseSource | None = None,
                           assembly: str = "explicit", snapshot_every: int = 0,
                           return_noise: bool = False, snapshot_N: int | None = None) -> Trajectory:
    """Remainder ``v = phi - X`` driven by ``-mixed(v, X) - X^3``.

    The mass in the melonic mixed term is ``cfg.counterterm``; with ``c1``
    the run is the exact remainder of the full equation.

    ``X(0)`` is drawn from the ``init`` stream and subsequent OU increments
    from ``source``; a full run started at ``X(0) + v0`` with the same
    ``source`` reproduces ``X + v``.  The recorded field snapshots are those
    of ``v``; ``traj.initial_noise`` holds the objects at time 0.
    """
    return _remainder(cfg, v0, source, init, False, assembly, snapshot_every, return_noise, snapshot_N)


def integrate_remainder_d4(cfg: SolverConfig, v0: np.ndarray | None = None,
                           source: NoiseSource | None = None, init: NoiseSource | None = None,
                           assembly: str = "explicit", snapshot_every: int = 0,
                           return_noise: bool = False, snapshot_N: int | None = None) -> Trajectory:
    """Remainder ``v = phi - bX`` driven by ``-mixed(v, bX) - S``.

    With ``cfg.counterterm = "c1_minus_c2"`` this is the exact remainder of
    the full equation.

    ``Pic2`` is warmed up over ``cfg.spinup`` time units (step
    ``cfg.spinup_dt``, default ``cfg.dt``) which consumes draws of
    ``source``; ``Pic3`` starts from zero.  ``assembly="compact"`` uses the
    algebraically equal form ``c phi - N(phi,phi,phi) + X^3 - X2Pic2``.
    """
    if cfg.d != 4:
        raise ValueError("integrate_remainder_d4 needs d = 4")
    return _remainder(cfg, v0, source, init, True, assembly, snapshot_every, return_noise, snapshot_N)


def coupled_cauchy_gaps(base: SolverConfig, Ns: Sequence[int], snapshot_every: int = 1,
                        assembly: str = "compact") -> dict:
    """``sup_t ||v_{N'} - v_N||_{L^2}`` for consecutive cut-offs of ``Ns``.

    Every run uses per-shell coupled noise with the seed of ``base``, so the
    modes shared by two cut-offs see identical Brownian increments and
    identical initial data.  The supremum is taken over the snapshot grid.
    Returns ``{(N, N'): gap}`` with one entry per replica.
    """
    Ns = sorted(Ns)
    runner = integrate_remainder_d4 if base.d == 4 else integrate_remainder_d3
    prev = None
    gaps = {}
    for i, N in enumerate(Ns):
        cfg = SolverConfig(**{**base.to_dict(), "N": N, "coupled": True, "tracked_modes": ()})
        keep = None if i + 1 < len(Ns) else Ns[i - 1] if i else None
        tr = runner(cfg, assembly=assembly, snapshot_every=snapshot_every, snapshot_N=keep)
        if tr.blew_up:
            raise FloatingPointError(f"remainder blew up at N={N}, t={tr.blowup_time}")
        total = tr.series["vL2sq"][::snapshot_every]
        if prev is not None:
            Np, snaps_p = prev
            low = np.array([s for _, s in tr.snapshots])
            if keep is None:
                low = embed(low, Np, base.d)
            old = np.array([s for _, s in snaps_p])
            low_sq = l2_pairing(low, low, base.d)
            diff_sq = l2_pairing(low - old, low - old, base.d) + np.maximum(total - low_sq, 0.0)
            gaps[(Np, N)] = np.sqrt(np.max(diff_sq, axis=0))
        prev = (N, tr.snapshots)
    return gaps


# ---------------------------------------------------------------------------
# energy bookkeeping


@dataclass
class EnergyReport:
    window: tuple
    dissipation: np.ndarray
    pairings: dict
    lhs: np.ndarray
    rhs: np.ndarray
    residual_per_time: np.ndarray


def _trapz(y, x):
    if len(x) < 2:
        return np.zeros(y.shape[1:])
    return np.trapezoid(y, x, axis=0)


def energy_report(traj: Trajectory, window: Sequence[float] | None = None) -> EnergyReport:
    """Time-integrated form of the remainder energy identity.

    ``1/2 (|v(b)|^2 - |v(a)|^2) + int (|v|_{H^1}^2 + I(v))`` is the left-hand
    side and ``-int (Xvvv + XXvv + XvXv + vXXv + Sv)`` the right-hand side;
    both are per replica.  ``dissipation`` is ``int (|v|_{H^1}^2 + I(v))``.
    """
    t = traj.times
    if len(t) == 0:
        z = np.zeros(1)
        return EnergyReport((0.0, 0.0), z, {}, z, z, z)
    a, b = (t[0], t[-1]) if window is None else window
    sel = (t >= a - 1e-12) & (t <= b + 1e-12)
    ts = t[sel]
    s = {k: v[sel] for k, v in traj.series.items()}
    if "vL2sq" not in s:
        raise ValueError("energy_report needs a remainder trajectory")
    diss = _trapz(s["vH1sq"] + s["vI"], ts)
    names = ("Xvvv", "XXvv", "XvXv", "vXXv", "Sv")
    pair = {k: _trapz(s[k], ts) for k in names}
    lhs = 0.5 * (s["vL2sq"][-1] - s["vL2sq"][0]) + diss
    rhs = -sum(pair.values())
    span = max(ts[-1] - ts[0], 1e-300) if len(ts) > 1 else 1.0
    return EnergyReport((float(a), float(b)), diss, pair, lhs, rhs, np.abs(lhs - rhs) / span)


def window_means(values: np.ndarray, n_windows: int):
    """Means and naive SEs of ``values`` over disjoint equal windows."""
    values = np.asarray(values)
    n = len(values) // n_windows
    blocks = values[: n * n_windows].reshape((n_windows, n) + values.shape[1:])
    from .sampler import batch_means_se

    means = blocks.mean(axis=1)
    ses = np.array([batch_means_se(b) for b in blocks])
    return means, ses
