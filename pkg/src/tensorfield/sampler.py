"""Direct MCMC for the cut-off measure and Lyapunov diagnostics.

The target is ``nu_N(d phi) ~ exp(-V(phi)) g_N(d phi)`` with ``g_N`` the
Gaussian of covariance ``(1 - Lap)^{-1}`` on ``Z_N^d`` and

    V(phi) = I(phi) / 4 - (c / 2) ||phi||^2.

The preconditioned Crank-Nicolson chain is reversible for ``g_N`` by
construction, so only ``V`` enters the acceptance ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import renorm
from .lattice_field import ModeLattice, l2_pairing, sobolev_norm
from .nonlocal_product import action_gradient, interaction, nonlocal_product
from .stochastic_objects import NoiseSource, RngStream, gaussian_field, ou_std


def potential(phi, table: renorm.RenormTable, mode: str = "c1", d: int | None = None):
    """``I(phi)/4 - (c/2) ||phi||^2`` with ``c = table.mass(mode)``."""
    d = table.d if d is None else d
    c = table.mass(mode)
    return 0.25 * interaction(phi, d) - 0.5 * c * l2_pairing(phi, phi, d)


def potential_gradient(phi, table: renorm.RenormTable, mode: str = "c1", d: int | None = None):
    """L^2 gradient ``N(phi, phi, phi) - c phi`` of :func:`potential`."""
    d = table.d if d is None else d
    return nonlocal_product(phi, phi, phi, d) - table.mass(mode) * phi


# ---------------------------------------------------------------------------
# error bars


def batch_means_se(x, n_batches: int | None = None) -> np.ndarray:
    """Batch-means standard error of the mean along axis 0.

    The default uses ``floor(sqrt(n))`` batches of ``floor(sqrt(n))``
    samples, the usual consistent choice for geometrically ergodic chains.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 4:
        return np.full(x.shape[1:], np.nan)
    B = int(np.sqrt(n)) if n_batches is None else int(n_batches)
    B = max(2, min(B, n // 2))
    size = n // B
    means = x[: B * size].reshape((B, size) + x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(B)


def effective_sample_size(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    se = batch_means_se(x)
    var = x.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(se > 0, var / se ** 2, float(x.shape[0]))


# ---------------------------------------------------------------------------
# chains


@dataclass
class McmcConfig:
    """Chain settings; ``step`` is beta for pCN and tau for MALA."""

    d: int
    N: int
    algorithm: str = "pCN"
    step: float = 0.5
    n_samples: int = 10000
    burn_in: int = 1000
    thin: int = 1
    counterterm: str = "c1"
    seed: int = 0
    tracked_modes: tuple = ()
    keep_samples: bool = False

    def __post_init__(self):
        if self.algorithm not in ("pCN", "MALA"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm == "pCN" and not 0 < self.step <= 1:
            raise ValueError("pCN step beta must lie in (0, 1]")
        if self.algorithm == "MALA" and self.step <= 0:
            raise ValueError("MALA step tau must be positive")
        if self.thin < 1 or self.n_samples < 1 or self.burn_in < 0:
            raise ValueError("invalid chain length settings")

    @property
    def lattice(self) -> ModeLattice:
        return ModeLattice(self.d, self.N)


@dataclass
class ChainStats:
    acceptance: float
    means: dict
    ses: dict
    ess: dict
    series: dict = field(default_factory=dict)
    samples: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "acceptance": self.acceptance,
            "means": {k: float(v) for k, v in self.means.items()},
            "ses": {k: float(v) for k, v in self.ses.items()},
            "ess": {k: float(v) for k, v in self.ess.items()},
        }


def _mode_key(m) -> str:
    return "mode" + "_".join(str(int(x)) for x in m)


def chain_observables(phi, d: int, tracked, lattice: ModeLattice) -> dict:
    out = {"L2sq": float(l2_pairing(phi, phi, d)), "interaction": float(interaction(phi, d))}
    for m in tracked:
        out[_mode_key(m)] = float(abs(phi[lattice.index(m)]) ** 2)
    return out


def _finish(cfg: McmcConfig, accepted: int, total: int, rec: dict, samples) -> ChainStats:
    series = {k: np.array(v) for k, v in rec.items()}
    means = {k: float(v.mean()) for k, v in series.items()}
    ses = {k: float(batch_means_se(v)) for k, v in series.items()}
    ess = {k: float(effective_sample_size(v)) for k, v in series.items()}
    return ChainStats(accepted / max(total, 1), means, ses, ess, series, samples)


def run_pcn(cfg: McmcConfig, table: renorm.RenormTable | None = None, potential_fn=None) -> ChainStats:
    """pCN chain ``phi' = sqrt(1 - beta^2) phi + beta xi`` with ``xi ~ g_N``.

    ``potential_fn`` overrides ``V`` (``lambda phi: 0`` gives the pure
    Gaussian chain).
    """
    if cfg.algorithm != "pCN":
        raise ValueError("run_pcn needs algorithm='pCN'")
    lat, d = cfg.lattice, cfg.d
    table = renorm.renorm_table(d, cfg.N) if table is None else table
    V = potential_fn or (lambda p: potential(p, table, cfg.counterterm, d))
    src = NoiseSource(lat, cfg.seed, "mcmc")
    acc_rng = RngStream(cfg.seed, 0, "aux").generator(0)
    std = ou_std(lat)
    beta = cfg.step
    a = np.sqrt(1 - beta * beta)
    phi = np.zeros(lat.shape, dtype=complex)
    Vphi = float(V(phi))
    rec: dict = {}
    samples = []
    accepted = total = 0
    for it in range(cfg.burn_in + cfg.n_samples * cfg.thin):
        xi = gaussian_field(src.normals()[0], std, d)
        prop = a * phi + beta * xi
        Vp = float(V(prop))
        if np.log(acc_rng.random()) < Vphi - Vp:
            phi, Vphi = prop, Vp
            accepted += it >= cfg.burn_in
        total += it >= cfg.burn_in
        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            for k, v in chain_observables(phi, d, cfg.tracked_modes, lat).items():
                rec.setdefault(k, []).append(v)
            if cfg.keep_samples:
                samples.append(phi.copy())
    return _finish(cfg, accepted, total, rec, samples)


def run_mala(cfg: McmcConfig, table: renorm.RenormTable | None = None) -> ChainStats:
    """Preconditioned MALA on the full action, proposal covariance ``2 tau``.

    The proposal is ``phi + tau G grad log pi + sqrt(2 tau G) xi`` with
    ``G = (1 - Lap)^{-1}``, so ``tau G grad log pi = tau (-phi - G grad V)``.
    """
    if cfg.algorithm != "MALA":
        raise ValueError("run_mala needs algorithm='MALA'")
    lat, d = cfg.lattice, cfg.d
    table = renorm.renorm_table(d, cfg.N) if table is None else table
    c = table.mass(cfg.counterterm)
    src = NoiseSource(lat, cfg.seed, "mcmc")
    acc_rng = RngStream(cfg.seed, 0, "aux").generator(0)
    b2 = lat.bracket2
    tau = cfg.step

    def logpi(p):
        return -0.5 * float(sobolev_norm(p, 1.0, d) ** 2) - float(potential(p, table, cfg.counterterm, d))

    def mean(p):
        return p + tau * action_gradient(p, c, d) / b2

    def logq(y, x):
        r = y - mean(x)
        return -float(np.sum(b2 * np.abs(r) ** 2).real) / (4 * tau)

    phi = np.zeros(lat.shape, dtype=complex)
    lp = logpi(phi)
    rec: dict = {}
    samples = []
    accepted = total = 0
    std = np.sqrt(2 * tau) * ou_std(lat)
    for it in range(cfg.burn_in + cfg.n_samples * cfg.thin):
        prop = mean(phi) + gaussian_field(src.normals()[0], std, d)
        lq = logpi(prop)
        if np.log(acc_rng.random()) < lq - lp + logq(phi, prop) - logq(prop, phi):
            phi, lp = prop, lq
            accepted += it >= cfg.burn_in
        total += it >= cfg.burn_in
        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            for k, v in chain_observables(phi, d, cfg.tracked_modes, lat).items():
                rec.setdefault(k, []).append(v)
            if cfg.keep_samples:
                samples.append(phi.copy())
    return _finish(cfg, accepted, total, rec, samples)


def run_chain(cfg: McmcConfig, table: renorm.RenormTable | None = None) -> ChainStats:
    return run_pcn(cfg, table) if cfg.algorithm == "pCN" else run_mala(cfg, table)


# ---------------------------------------------------------------------------
# Lyapunov


@dataclass
class LyapunovReport:
    LV: np.ndarray
    V: np.ndarray
    C: float
    N: int
    holds: bool


def generator_on_l2(phi, mass: float, d: int):
    """``L V(phi) = c|phi|^2 - |phi|_{H^1}^2 - I(phi) + (2N+1)^d / 2`` for ``V = 1 + |phi|^2``.

    This is the displayed generator expression; with the noise normalisation
    ``sqrt(2) dW`` the exact Ito correction would be ``(2N+1)^d`` instead of
    half of it, which only shifts the constant.
    """
    phi = np.asarray(phi)
    K = phi.shape[-1]
    return (mass * l2_pairing(phi, phi, d) - sobolev_norm(phi, 1.0, d) ** 2
            - interaction(phi, d) + K ** d / 2.0)


def lyapunov_check(samples, table: renorm.RenormTable, mode: str = "c1", d: int | None = None) -> LyapunovReport:
    """Smallest ``C`` with ``L V <= C N^4 V`` over the given fields.

    ``samples`` has a leading sample axis (or is a single field).
    """
    d = table.d if d is None else d
    phi = np.asarray(samples)
    if phi.ndim == d:
        phi = phi[None]
    N = (phi.shape[-1] - 1) // 2
    LV = np.atleast_1d(generator_on_l2(phi, table.mass(mode), d))
    V = 1.0 + np.atleast_1d(l2_pairing(phi, phi, d))
    scale = max(N, 1) ** 4
    C = float(np.max(LV / (scale * V)))
    return LyapunovReport(LV, V, C, N, bool(np.isfinite(C)))
