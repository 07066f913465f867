"""Command-line entry point ``tensorfield``.

Every subcommand resolves its options as flag > config file > default,
validates them before computing anything and writes ``manifest.json`` next
to its outputs.  Exit status: 0 on success, 2 on a configuration error
(the message names the offending key), 3 when a simulation blew up.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import io, renorm

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP = 0, 2, 3
REQUIRED = object()


class ConfigError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"config error for key '{key}': {message}")
        self.key = key


class BlowUp(Exception):
    pass


def _int_list(x):
    if isinstance(x, (list, tuple)):
        return [int(v) for v in x]
    return [int(v) for v in str(x).split(",") if v.strip()]


def _float_list(x):
    if isinstance(x, (list, tuple)):
        return [float(v) for v in x]
    return [float(v) for v in str(x).split(",") if v.strip()]


def _modes(x):
    """``"1,0,0;0,1,0"`` or nested lists."""
    if isinstance(x, (list, tuple)):
        return [tuple(int(v) for v in m) for m in x]
    return [tuple(int(v) for v in m.split(",")) for m in str(x).split(";") if m.strip()]


def _bool(x):
    if isinstance(x, bool):
        return x
    s = str(x).lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {x!r}")


@dataclass(frozen=True)
class Opt:
    kind: Callable
    default: object
    help: str = ""
    choices: tuple | None = None


COMMON = {
    "out": Opt(str, "out", "output directory"),
    "seed": Opt(int, 0, "master seed"),
    "threads": Opt(int, 0, "BLAS threads (0 = logical cores)"),
}

SUBCOMMANDS = {
    "renorm-table": {
        "d": Opt(int, REQUIRED, "dimension"),
        "N": Opt(int, None, "hard cut-off"),
        "t": Opt(float, None, "flow scale (instead of N)"),
    },
    "sample-ou": {
        "d": Opt(int, REQUIRED), "N": Opt(int, REQUIRED),
        "replicas": Opt(int, 1), "steps": Opt(int, 0, "OU steps after the stationary draw"),
        "dt": Opt(float, 0.01), "record_every": Opt(int, 1),
    },
    "simulate": {
        "d": Opt(int, REQUIRED), "N": Opt(int, REQUIRED), "dt": Opt(float, 1e-3), "T": Opt(float, REQUIRED),
        "counterterm": Opt(str, "c1", choices=("none", "c1", "c1_minus_c2")),
        "replicas": Opt(int, 1), "record_every": Opt(int, 10), "snapshot_every": Opt(int, 0),
        "tracked_modes": Opt(_modes, []),
    },
    "remainder": {
        "d": Opt(int, REQUIRED, choices=(3, 4)), "N": Opt(int, REQUIRED), "dt": Opt(float, 5e-4),
        "T": Opt(float, REQUIRED), "counterterm": Opt(str, None, choices=("none", "c1", "c1_minus_c2")),
        "spinup": Opt(float, 10.0), "spinup_dt": Opt(float, None), "replicas": Opt(int, 1),
        "record_every": Opt(int, 10), "snapshot_every": Opt(int, 0),
        "assembly": Opt(str, "explicit", choices=("explicit", "compact")),
    },
    "mcmc": {
        "d": Opt(int, REQUIRED), "N": Opt(int, REQUIRED),
        "algorithm": Opt(str, "pCN", choices=("pCN", "MALA")), "step": Opt(float, 0.5),
        "samples": Opt(int, 10000), "burn_in": Opt(int, 1000), "thin": Opt(int, 1),
        "counterterm": Opt(str, "c1", choices=("none", "c1", "c1_minus_c2")),
        "tracked_modes": Opt(_modes, []), "keep_samples": Opt(_bool, False),
    },
    "verify-wick": {
        "d": Opt(int, REQUIRED), "N": Opt(int, REQUIRED), "samples": Opt(int, 10000),
        "tolerance_se": Opt(float, 4.0),
    },
    "diagram": {
        "graph": Opt(str, None, "graph file (structured text)"),
        "skeleton": Opt(str, None, choices=("X2m", "X2nm", "X3", "XdotX", "Sym", "X2Pic2_1", "X2Pic2_2", "X2Pic2_3")),
        "d": Opt(int, 3), "colours": Opt(_int_list, []),
        "alpha": Opt(float, 0.0), "beta": Opt(float, 0.0), "eta": Opt(float, 1.0),
        "renormalized": Opt(_bool, False),
    },
    "bg-bound": {
        "d": Opt(int, 3), "t": Opt(_float_list, REQUIRED), "replicas": Opt(int, 32),
        "drift": Opt(str, "explicit_shift", choices=("zero", "explicit_shift")), "h": Opt(float, 0.05),
        "aux_replicas": Opt(int, None),
    },
    "norms": {
        "snapshot": Opt(str, REQUIRED, "TFF1 file"), "alpha": Opt(float, -0.5), "p": Opt(float, 2.0),
        "q": Opt(float, 2.0), "M": Opt(int, 4, "even exponent of the tensor norm"),
    },
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tensorfield", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, opts in SUBCOMMANDS.items():
        sp = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="JSON config file")
        for key, o in {**COMMON, **opts}.items():
            sp.add_argument(f"--{key}", dest=key, type=str, help=o.help or None)
    return p


def resolve(command: str, flags: dict, config: dict | None = None) -> dict:
    """Merge flag > config > default, coerce types and check required keys."""
    opts = {**COMMON, **SUBCOMMANDS[command]}
    config = config or {}
    for k in config:
        if k not in opts:
            raise ConfigError(k, "unknown key")
    out = {}
    for k, o in opts.items():
        if k in flags and flags[k] is not None:
            raw = flags[k]
        elif k in config:
            raw = config[k]
        else:
            raw = o.default
        if raw is REQUIRED:
            raise ConfigError(k, "required but not given")
        if raw is not None:
            try:
                raw = o.kind(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(k, f"cannot parse {raw!r}: {exc}") from None
            if o.choices is not None and raw not in o.choices:
                raise ConfigError(k, f"must be one of {list(o.choices)}")
        out[k] = raw
    return out


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = io.read_json(path)
    except FileNotFoundError:
        raise ConfigError("config", f"file {path} not found") from None
    except ValueError as exc:
        raise ConfigError("config", f"not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be an object")
    return cfg


def _apply_threads(n: int):
    from threadpoolctl import threadpool_limits

    env = os.environ.get("TENSORFIELD_THREADS")
    n = int(env) if (not n and env) else n
    return threadpool_limits(limits=n if n and n > 0 else None)


# ---------------------------------------------------------------------------
# subcommands


def cmd_renorm_table(cfg, out: Path) -> list:
    if (cfg["N"] is None) == (cfg["t"] is None):
        raise ConfigError("N", "give exactly one of N and t")
    if cfg["N"] is not None:
        table = renorm.renorm_table(cfg["d"], cfg["N"])
    else:
        table = renorm.bg_renorm_table(cfg["d"], cfg["t"])
    io.write_json(out / "renorm_table.json", table.to_dict())
    return ["renorm_table.json"]


def cmd_sample_ou(cfg, out: Path) -> list:
    from .lattice_field import ModeLattice
    from .stochastic_objects import NoiseSource, evolve_ou, ou_state

    lat = ModeLattice(cfg["d"], cfg["N"])
    src = NoiseSource(lat, cfg["seed"], "ou", cfg["replicas"])
    init = NoiseSource(lat, cfg["seed"], "init", cfg["replicas"])
    st = ou_state(lat, src, init)
    snaps = [(st.time, st.field)]
    for k in range(1, cfg["steps"] + 1):
        st = evolve_ou(st, cfg["dt"])
        if k % cfg["record_every"] == 0:
            snaps.append((st.time, st.field))
    names = []
    for r in range(cfg["replicas"]):
        names += io.write_tff_sequence(out, [(t, u[r]) for t, u in snaps], cfg["d"], stem=f"ou_r{r}")
    return names


def _solver_config(cfg, **extra):
    from .dynamics import SolverConfig

    keys = ("d", "N", "dt", "T", "counterterm", "seed", "replicas", "record_every")
    kw = {k: cfg[k] for k in keys if k in cfg and cfg[k] is not None}
    kw.update(extra)
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        msg = str(exc)
        words = msg.replace(",", " ").split()
        key = next((k for k in kw if k in words), "config")
        raise ConfigError(key, msg) from None


def _write_traj(tr, out: Path, cfg, stem: str) -> list:
    names = []
    for r in range(cfg["replicas"]):
        name = f"{stem}_r{r}.csv"
        tr.to_csv(out / name, replica=r)
        names.append(name)
    if tr.snapshots:
        d = cfg["d"]
        snaps = [(t, u[0] if np.ndim(u) > d else u) for t, u in tr.snapshots]
        names += io.write_tff_sequence(out, snaps, d, stem=f"{stem}_snap")
    return names


def cmd_simulate(cfg, out: Path) -> list:
    from .dynamics import integrate_full_sde

    sc = _solver_config(cfg, tracked_modes=tuple(cfg["tracked_modes"]))
    tr = integrate_full_sde(sc, snapshot_every=cfg["snapshot_every"])
    names = _write_traj(tr, out, cfg, "simulate")
    if tr.blew_up:
        raise BlowUp(f"blow-up at t={tr.blowup_time} (replica {tr.blowup_replica})", names)
    return names


def cmd_remainder(cfg, out: Path) -> list:
    from .dynamics import integrate_remainder_d3, integrate_remainder_d4

    ct = cfg["counterterm"] or ("c1" if cfg["d"] == 3 else "c1_minus_c2")
    extra = {"counterterm": ct, "spinup": cfg["spinup"]}
    if cfg["spinup_dt"] is not None:
        extra["spinup_dt"] = cfg["spinup_dt"]
    sc = _solver_config(cfg, **extra)
    run = integrate_remainder_d3 if cfg["d"] == 3 else integrate_remainder_d4
    tr = run(sc, assembly=cfg["assembly"], snapshot_every=cfg["snapshot_every"])
    names = _write_traj(tr, out, cfg, "remainder")
    if tr.blew_up:
        raise BlowUp(f"blow-up at t={tr.blowup_time} (replica {tr.blowup_replica})", names)
    return names


def cmd_mcmc(cfg, out: Path) -> list:
    from .sampler import McmcConfig, run_chain

    try:
        mc = McmcConfig(cfg["d"], cfg["N"], algorithm=cfg["algorithm"], step=cfg["step"],
                        n_samples=cfg["samples"], burn_in=cfg["burn_in"], thin=cfg["thin"],
                        counterterm=cfg["counterterm"], seed=cfg["seed"],
                        tracked_modes=tuple(cfg["tracked_modes"]), keep_samples=cfg["keep_samples"])
    except ValueError as exc:
        raise ConfigError("step" if "step" in str(exc) else "samples", str(exc)) from None
    stats = run_chain(mc)
    io.write_json(out / "mcmc_stats.json", stats.summary())
    names = ["mcmc_stats.json"]
    if cfg["keep_samples"]:
        names += io.write_tff_sequence(out, [(float(i), s) for i, s in enumerate(stats.samples)], cfg["d"], "mcmc")
    return names


def verify_wick(d: int, N: int, samples: int, seed: int = 0, tol: float = 4.0) -> list:
    """Monte Carlo check of the equal-time Wick identities against the exact oracle.

    Returns ``(name, passed, max |z|)`` per identity.
    """
    from . import diagrams
    from .lattice_field import ModeLattice, constant, random_field
    from .nonlocal_product import nonlocal_product, nonlocal_product_c
    from .stochastic_objects import NoiseSource, build_wick_cube, sample_ou_stationary

    lat = ModeLattice(d, N)
    table = renorm.renorm_table(d, N)
    psi = random_field(lat, np.random.default_rng([seed, 7]))
    X = sample_ou_stationary(lat, NoiseSource(lat, seed, "test", samples))
    results = []

    def zcheck(name, draws, exact):
        parts = [(draws.real, exact.real), (np.imag(draws), np.imag(exact))]
        diff = np.concatenate([np.ravel(x.mean(axis=0) - e) for x, e in parts])
        s = np.concatenate([np.ravel(x.std(axis=0, ddof=1)) for x, _ in parts]) / np.sqrt(draws.shape[0])
        z = np.abs(diff) / np.where(s > 0, s, np.inf)
        z = np.where((s == 0) & (np.abs(diff) > 1e-9), np.inf, z)
        zmax = float(np.max(z))
        results.append((name, bool(zmax <= tol), zmax))

    leaves = {"psi": psi}
    for c in range(1, d + 1):
        draws = nonlocal_product_c(X, psi, X, c, d)
        exact = diagrams.wick_mean(diagrams.Prod(c, diagrams.Noise(), diagrams.Leaf("psi"), diagrams.Noise()), d, N, leaves)
        zcheck(f"E N^{c}(X,psi,X) = psi/<m>^2", draws, exact)
        draws = nonlocal_product_c(psi, X, X, c, d) - table.c1_per_color[c - 1] * psi
        tree = diagrams.Sum(((1.0, diagrams.Prod(c, diagrams.Leaf("psi"), diagrams.Noise(), diagrams.Noise())),
                             (-table.c1_per_color[c - 1], diagrams.Leaf("psi"))))
        zcheck(f"E N^{c}(psi,X,X) - C1 psi = R1 residual", draws, diagrams.wick_mean(tree, d, N, leaves))
    one = constant(lat, 1.0)
    objs = {"X": X, "X3": build_wick_cube(X, table, d),
            "X2m": nonlocal_product(one, X, X, d) - table.c1_total * one,
            "X2nm": nonlocal_product(X, X, one, d)}
    for name, v in objs.items():
        draws = np.abs(v) ** 2
        exact = diagrams.wick_covariance(name, d, N, table=table, f=None if name in ("X", "X3") else "one").table
        zcheck(f"E|{name}_m|^2 = Wick sum", draws, exact)
    return results


def cmd_verify_wick(cfg, out: Path) -> list:
    res = verify_wick(cfg["d"], cfg["N"], cfg["samples"], cfg["seed"], cfg["tolerance_se"])
    for name, ok, z in res:
        print(f"{'PASS' if ok else 'FAIL'} {name} (max |z| = {z:.3f})")
    io.write_json(out / "verify_wick.json", [{"identity": n, "pass": ok, "max_z": z} for n, ok, z in res])
    return ["verify_wick.json"]


def cmd_diagram(cfg, out: Path) -> list:
    from . import diagrams

    kw = dict(alpha=cfg["alpha"], beta=cfg["beta"], eta=cfg["eta"], renormalized=cfg["renormalized"])
    if (cfg["graph"] is None) == (cfg["skeleton"] is None):
        raise ConfigError("graph", "give exactly one of graph and skeleton")
    if cfg["graph"] is not None:
        try:
            G = diagrams.TensorGraph.from_dict(io.read_json(cfg["graph"]))
        except (OSError, KeyError, ValueError, TypeError) as exc:
            raise ConfigError("graph", str(exc)) from None
        try:
            doc = diagrams.analyze(G, **kw).to_dict()
        except diagrams.GraphError as exc:
            raise ConfigError("graph", str(exc)) from None
    else:
        try:
            spec = diagrams.SkeletonSpec(cfg["skeleton"], cfg["d"], tuple(cfg["colours"]))
        except ValueError as exc:
            raise ConfigError("colours", str(exc)) from None
        sym = cfg["skeleton"] == "Sym"
        graphs = diagrams.enumerate_contractions(spec)
        doc = {"skeleton": spec.name, "d": spec.d, "colours": list(spec.colours), "count": len(graphs),
               "contractions": [diagrams.analyze(g, sym=sym, **kw).to_dict() for g in graphs]}
    io.write_json(out / "diagram.json", doc)
    print(io.dumps(doc), end="")
    return ["diagram.json"]


def cmd_bg_bound(cfg, out: Path) -> list:
    from .bg_flow import free_energy_bound

    rep = free_energy_bound(cfg["d"], cfg["t"], cfg["replicas"], cfg["drift"], cfg["seed"], cfg["h"],
                            aux_replicas=cfg["aux_replicas"])
    rep.to_csv(out / "bg_bound.csv")
    return ["bg_bound.csv"]


def cmd_norms(cfg, out: Path) -> list:
    from .lattice_field import BesovSpec, besov_norm, l2_norm, m_norm, sobolev_norm

    try:
        u, d, N, t = io.read_tff(cfg["snapshot"])
    except (OSError, io.FormatError) as exc:
        raise ConfigError("snapshot", str(exc)) from None
    try:
        spec = BesovSpec(cfg["alpha"], cfg["p"], cfg["q"])
    except ValueError as exc:
        raise ConfigError("p", str(exc)) from None
    M = cfg["M"]
    if M < 2 or M % 2:
        raise ConfigError("M", "must be an even integer >= 2")
    doc = {"d": d, "N": N, "time": t, "L2": float(l2_norm(u, d)), "H1": float(sobolev_norm(u, 1.0, d)),
           "besov": {"alpha": spec.alpha, "p": spec.p, "q": spec.q, "value": float(besov_norm(u, spec, d=d))},
           f"M{M}": {str(c): float(m_norm(u, c, M, d)) for c in range(1, d + 1)}}
    io.write_json(out / "norms.json", doc)
    return ["norms.json"]


HANDLERS = {
    "renorm-table": cmd_renorm_table, "sample-ou": cmd_sample_ou, "simulate": cmd_simulate,
    "remainder": cmd_remainder, "mcmc": cmd_mcmc, "verify-wick": cmd_verify_wick, "diagram": cmd_diagram,
    "bg-bound": cmd_bg_bound, "norms": cmd_norms,
}


def main(argv=None) -> int:
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = vars(ns)
    command = flags.pop("command")
    try:
        cfg = resolve(command, flags, _load_config(flags.pop("config", None)))
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["out"])
    status = EXIT_OK
    outputs: list = []
    created = not out.exists()
    try:
        out.mkdir(parents=True, exist_ok=True)
        with _apply_threads(cfg["threads"]):
            outputs = HANDLERS[command](cfg, out)
    except ConfigError as exc:
        # handlers validate before writing, so a fresh directory is still empty
        if created and not any(out.iterdir()):
            out.rmdir()
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except BlowUp as exc:
        msg, outputs = exc.args
        print(msg, file=sys.stderr)
        status = EXIT_BLOWUP
    io.write_json(out / "manifest.json", io.manifest(command, cfg, outputs))
    return status


if __name__ == "__main__":
    sys.exit(main())
