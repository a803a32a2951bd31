"""Command-line experiment runner.

Every subcommand reads an optional JSON config, writes one or more CSV files
plus ``<command>.manifest.json`` into ``--out``, and removes its partial
outputs if anything fails.  ``GEOWIENER_SEED`` overrides the config seed;
``--seed`` overrides both.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BudgetExceeded, ConfigError, GeowienerError
from .heat import KAPPA, build_grid, heat_sweep
from .ibp import DirectionSpec, finite_ibp_check, kp_z_sup_error, limit_ibp_check
from .jacobi import DensityReport, psi_bound, psi_det, expansion_bound, expansion_remainder
from .manifolds import Flat, Frame, Manifold, Sphere, get_manifold
from .montecarlo import (
    Budget,
    McEstimate,
    PathBatch,
    RngStream,
    gaussian_identity_check,
    sample_increments,
    sweep,
    tail_exact,
    wz_rate,
)
from .observables import LinearEndpoint, LinearVertices, get_observable
from .pathspace import DrivingPath, Partition
from .summary import CsvParseError, summarize

SEED_ENV = "GEOWIENER_SEED"
DEFAULT_SEED = 20240917

COMMON = {"seed": DEFAULT_SEED, "threads": 1, "budget_s": 600.0, "record_timing": True}

DEFAULTS = {
    "sample": {"manifold": "sphere-2", "n": 16, "n_samples": 10},
    "density": {
        "manifold": "sphere-2",
        "n_list": [8, 16, 32, 64],
        "n_samples": 200_000,
        "observable": "one",
        "weights": ["nu0"],
        "alpha": 0.5,
        "sample_rows": 1000,
    },
    "heat": {
        "manifold": "sphere-2",
        "grid": [64, 128],
        "s": 0.5,
        "n_list": [4, 8, 16, 32, 64],
        "kappas": [KAPPA, 0.0],
        "function": "height",
        "export_nodes": False,
    },
    "ibp-finite": {
        "manifolds": ["sphere-2", "flat-2"],
        "n_list": [1, 2],
        "mode": "quadrature",
        "order": 20,
        "n_samples": 100_000,
        "direction": [1.0, 0.0],
        "functional": {"type": "endpoint", "tilt": 0.75},
    },
    "ibp-limit": {
        "manifold": "sphere-2",
        "n": 100,
        "n_samples": 100_000,
        "direction": [1.0, 0.0],
        "functional": {"type": "endpoint", "a": None},
        "rate_n_list": [8, 16, 32, 64, 128],
        "rate_n_samples": 4000,
    },
    "wz-rate": {"manifold": "sphere-2", "n_list": [8, 16, 32, 64, 128], "n_ref": 1024, "n_samples": 4000},
    "tails": {"manifold": "sphere-2", "n_list": [32, 48, 64, 80, 96], "eps": 0.5, "n_samples": 200_000},
    "identities": {
        "n_matrices": 1000,
        "matrix_dim": 3,
        "max_norm": 0.5,
        "gaussian": {"n": 8, "d": 2, "p": 1.0, "C": 1.0, "n_samples": 100_000},
        "n_segments": 1000,
        "segment_max_norm": 2.0,
    },
}


# -- config and output plumbing ---------------------------------------------------------------


def load_config(command: str, path: str | None, seed: int | None, threads: int | None) -> dict:
    cfg = copy.deepcopy({**COMMON, **DEFAULTS[command]})
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(user) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(user)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            cfg["seed"] = int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    if seed is not None:
        cfg["seed"] = seed
    if threads is not None:
        cfg["threads"] = threads
    if int(cfg["threads"]) < 1:
        raise ConfigError("threads must be >= 1")
    if "n_samples" in cfg and int(cfg["n_samples"]) < 1:
        raise ConfigError("n_samples must be >= 1")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


class Run:
    """Tracks files written by one invocation so a failure can remove them."""

    def __init__(self, command: str, cfg: dict, out: Path):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.written: list[Path] = []
        self.results: dict = {}
        self.start = time.perf_counter()
        self.budget = Budget(cfg.get("budget_s"))

    def timing(self, t: float) -> float:
        return t if self.cfg.get("record_timing", True) else 0.0

    def write_csv(self, name: str, header, rows) -> Path:
        path = self.out / name
        self.written.append(path)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(fmt(v) for v in row) + "\n")
        return path

    def write_manifest(self) -> Path:
        path = self.out / f"{self.command}.manifest.json"
        self.written.append(path)
        runtime = self.timing(time.perf_counter() - self.start)
        manifest = {
            "command": self.command,
            "config": self.cfg,
            "config_hash": config_hash(self.cfg),
            "version": __version__,
            "runtime_s": runtime,
            "outputs": [p.name for p in self.written if p != path],
            "results": self.results,
        }
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
        return path

    def cleanup(self) -> None:
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _mc_rows(run: Run, estimates: list[McEstimate]):
    return [e.row()[:-1] + (run.timing(e.wall_time_s),) for e in estimates]


def _functional(spec: dict | None, m: Manifold, n: int):
    spec = spec or {"type": "endpoint"}
    kind = spec.get("type", "endpoint")
    if kind == "endpoint":
        a = spec.get("a")
        if a is None and spec.get("tilt"):
            # last axis plus a first-axis component so that the pairing with k' = e_1 is not zero by symmetry
            a = np.zeros(m.ambient_dim)
            a[-1] = 1.0
            a[0] += float(spec["tilt"])
        if a is not None and len(a) != m.ambient_dim:
            raise ConfigError(f"endpoint coefficient needs {m.ambient_dim} entries for {m.name}")
        return LinearEndpoint(a)
    if kind == "vertices":
        A = np.asarray(spec["A"], dtype=float)
        if A.shape != (n + 1, m.ambient_dim):
            raise ConfigError(f"vertex functional needs an ({n + 1}, {m.ambient_dim}) coefficient array")
        return LinearVertices(A)
    raise ConfigError(f"unknown functional type {kind!r}; ambient-linear 'endpoint' or 'vertices' only")


def limit_target(m: Manifold, observable: str, weight: str) -> float | None:
    """Known ``|P| -> 0`` limits for the shipped observables on flat space and unit spheres."""
    d = m.dim
    if isinstance(m, Flat):
        return {"one": 1.0, "endpoint_height": 0.0, "endpoint_sq": float(d)}.get(observable)
    if isinstance(m, Sphere):
        scal_factor = math.exp(-d * (d - 1) / 6.0) if weight == "nu0" else 1.0
        base = {"one": 1.0, "endpoint_height": math.exp(-d / 2.0), "endpoint_sq": 1.0}.get(observable)
        return None if base is None else base * scal_factor
    return None


# -- subcommands --------------------------------------------------------------------------------------


def cmd_sample(run: Run):
    cfg = run.cfg
    m = get_manifold(cfg["manifold"])
    part = Partition.uniform(int(cfg["n"]))
    N = int(cfg["n_samples"])
    inc = sample_increments(RngStream(int(cfg["seed"]), 0).generator(), N, part, m.dim)
    batch = PathBatch(m, part, inc)
    rows = []
    for k in range(N):
        for i, x in enumerate(batch.vertices[k]):
            rows.append((k, i, part.times[i], *x))
    header = ["sample_id", "i", "s"] + [f"x{j}" for j in range(m.ambient_dim)]
    run.write_csv("sample.csv", header, rows)
    path = run.out / "sample_paths.json"
    run.written.append(path)
    path.write_text(json.dumps([json.loads(DrivingPath(part, inc[k]).to_json()) for k in range(N)]) + "\n")


def cmd_density(run: Run):
    cfg = run.cfg
    m = get_manifold(cfg["manifold"])
    parts = [Partition.uniform(int(n)) for n in cfg["n_list"]]
    f = get_observable(cfg["observable"])
    targets = {}
    for weight in cfg["weights"]:
        est = sweep(
            m, parts, f, int(cfg["n_samples"]), int(cfg["seed"]), weight,
            float(cfg["alpha"]), int(cfg["threads"]), budget=run.budget,
        )
        name = f"density_{weight}"
        table = _mc_rows(run, est)
        run.write_csv(name + ".csv", McEstimate.CSV_HEADER, table)
        targets[name] = limit_target(m, cfg["observable"], "nu0" if weight == "nu0" else "nu1")
        run.results[name] = [dict(zip(McEstimate.CSV_HEADER, r)) for r in table]
    run.results["targets"] = targets

    rows_n = int(cfg["sample_rows"])
    if rows_n > 0:
        finest = max(parts, key=lambda p: p.n)
        inc = sample_increments(RngStream(int(cfg["seed"]), 0).generator(), rows_n, finest, m.dim)
        b = PathBatch(m, finest, inc)
        W = np.where(b.degenerate, -np.inf, b.log_rho + b.R_P / 6.0)
        rows = [(k, b.rho[k], b.S_P[k], b.R_P[k], W[k], bool(b.degenerate[k])) for k in range(rows_n)]
        run.write_csv("density_samples.csv", DensityReport.CSV_HEADER, rows)


def cmd_heat(run: Run):
    cfg = run.cfg
    m = get_manifold(cfg["manifold"])
    s = float(cfg["s"])
    if isinstance(m, Sphere):
        grid = build_grid(m, tuple(cfg["grid"]))
        z = grid.nodes[:, -1]
        funcs = {"height": (z, math.exp(-s) * z), "y20": (1.5 * z**2 - 0.5, math.exp(-3.0 * s) * (1.5 * z**2 - 0.5))}
    else:
        grid = build_grid(m, int(cfg["grid"][0]), s_total=s)
        r2 = np.einsum("ka,ka->k", grid.nodes, grid.nodes)
        d = m.dim
        funcs = {"gaussian": (np.exp(-0.5 * r2), (1.0 + s) ** (-d / 2) * np.exp(-0.5 * r2 / (1.0 + s)))}
    if cfg["function"] not in funcs:
        raise ConfigError(f"function must be one of {sorted(funcs)} for {m.name}")
    F, exact = funcs[cfg["function"]]
    total = len(cfg["n_list"]) * len(cfg["kappas"])
    est_cost = grid.size**2 * 8
    if est_cost > 2e9:
        raise BudgetExceeded(f"dense kernel would need {est_cost / 1e9:.1f} GB")
    rows = heat_sweep(grid, F, s, [int(n) for n in cfg["n_list"]], [float(k) for k in cfg["kappas"]], exact=exact, budget=run.budget)
    run.write_csv("heat.csv", ("kappa", "n", "sup_error", "l2_error", "runtime"), [r.row()[:-1] + (run.timing(r.runtime),) for r in rows])
    run.results["rows"] = total
    if cfg["export_nodes"]:
        run.write_csv("heat_nodes.csv", [f"x{j}" for j in range(m.ambient_dim)] + ["weight"], grid.node_table())


def cmd_ibp_finite(run: Run):
    cfg = run.cfg
    rows = []
    for name in cfg["manifolds"]:
        m = get_manifold(name)
        for n in cfg["n_list"]:
            part = Partition.uniform(int(n))
            k = DirectionSpec.constant(part, np.asarray(cfg["direction"], dtype=float)[: m.dim])
            F = _functional(cfg["functional"], m, part.n)
            res = finite_ibp_check(
                m, part, F, k, cfg["mode"], int(cfg["order"]), int(cfg["n_samples"]), int(cfg["seed"]), int(cfg["threads"])
            )
            rows.append(res.row())
            run.results[f"{name}/n={n}"] = dict(zip(res.CSV_HEADER, res.row()))
            run.budget.check()
    run.write_csv("ibp_finite.csv", ("mode", "n", "lhs", "rhs", "residual", "se"), rows)


def cmd_ibp_limit(run: Run):
    cfg = run.cfg
    m = get_manifold(cfg["manifold"])
    part = Partition.uniform(int(cfg["n"]))
    direction = np.asarray(cfg["direction"], dtype=float)[: m.dim]
    k = DirectionSpec.constant(part, direction)
    F = _functional(cfg["functional"], m, part.n)
    res = limit_ibp_check(m, part, F, k, int(cfg["n_samples"]), int(cfg["seed"]), int(cfg["threads"]))
    run.write_csv("ibp_limit.csv", res.CSV_HEADER, [res.row()])
    run.results["limit"] = dict(zip(res.CSV_HEADER, res.row()))
    if cfg["rate_n_list"] and isinstance(m, Sphere):
        ests = []
        for n in cfg["rate_n_list"]:
            t0 = time.perf_counter()
            p = Partition.uniform(int(n))
            mean, se = kp_z_sup_error(m, p, direction, int(cfg["rate_n_samples"]), int(cfg["seed"]), int(cfg["threads"]))
            ests.append(McEstimate(p.n, p.mesh, mean, se, int(cfg["rate_n_samples"]), 0, time.perf_counter() - t0))
            run.budget.check()
        run.write_csv("kp_rate.csv", McEstimate.CSV_HEADER, _mc_rows(run, ests))


def cmd_wz_rate(run: Run):
    cfg = run.cfg
    m = get_manifold(cfg["manifold"])
    t0 = time.perf_counter()
    res = wz_rate(m, cfg["n_list"], int(cfg["n_samples"]), int(cfg["seed"]), int(cfg["n_ref"]), int(cfg["threads"]), budget=run.budget)
    wall = run.timing(time.perf_counter() - t0)
    rows = [(r.n, r.mesh, r.l2_error, r.se, int(cfg["n_samples"]), 0, wall) for r in res.rows]
    run.write_csv("wz_rate.csv", McEstimate.CSV_HEADER, rows)
    run.results["slope"] = res.slope
    run.results["reference_n"] = res.reference_n


def cmd_tails(run: Run):
    cfg = run.cfg
    m = get_manifold(cfg["manifold"])
    eps = float(cfg["eps"])
    parts = [Partition.uniform(int(n)) for n in cfg["n_list"]]

    def outside(batch):
        return (np.linalg.norm(batch.increments, axis=2) >= eps).any(axis=1).astype(float)

    args = (int(cfg["n_samples"]), int(cfg["seed"]))
    plain = [sweep(m, [p], outside, *args, "nu1", None, int(cfg["threads"]), budget=run.budget)[0] for p in parts]
    weighted = [sweep(m, [p], outside, *args, "nu0", None, int(cfg["threads"]), budget=run.budget)[0] for p in parts]
    run.write_csv("tails.csv", McEstimate.CSV_HEADER, _mc_rows(run, plain))
    run.write_csv("tails_weighted.csv", McEstimate.CSV_HEADER, _mc_rows(run, weighted))
    run.results["exact_fraction"] = {str(p.n): tail_exact(p, m.dim, eps) for p in parts}


def identity_rows(cfg: dict) -> list[tuple]:
    """Rows ``(identity, statistic, reference, tolerance, passed)`` for the appendix identities."""
    seed = int(cfg["seed"])
    rng = RngStream(seed, 0).generator()
    rows = []

    # determinant identity on random matrices, against an independent series for Psi
    n_mat, dim, max_norm = int(cfg["n_matrices"]), int(cfg["matrix_dim"]), float(cfg["max_norm"])
    worst_id = 0.0
    worst_bound = -math.inf
    for _ in range(n_mat):
        U = rng.standard_normal((dim, dim))
        U *= rng.uniform(0.0, max_norm) / np.linalg.norm(U, 2)
        det, psi = psi_det(U)
        series, P = 0.0, U.copy()
        for j in range(2, 200):
            P = P @ U
            series -= np.trace(P) / j
        worst_id = max(worst_id, abs(det - math.exp(-np.trace(U) + series)) / det)
        worst_bound = max(worst_bound, abs(psi) - psi_bound(U))
    rows.append(("det_identity", worst_id, 0.0, 1e-12, worst_id <= 1e-12))
    rows.append(("psi_bound_margin", worst_bound, 0.0, 0.0, worst_bound <= 0.0))

    g = cfg["gaussian"]
    part = Partition.uniform(int(g["n"]))
    est, exact = gaussian_identity_check(part, int(g["d"]), float(g["p"]), float(g["C"]), int(g["n_samples"]), seed + 1)
    rows.append(("gaussian_moment", est.estimate, exact, 3.0 * est.std_error, abs(est.estimate - exact) <= 3.0 * est.std_error))

    m = Sphere(2)
    fr = m.base_frame
    worst = -math.inf
    for _ in range(int(cfg["n_segments"])):
        db = rng.standard_normal(2)
        db *= rng.uniform(0.0, float(cfg["segment_max_norm"])) / np.linalg.norm(db)
        ds = rng.uniform(0.01, 1.0)
        E = expansion_remainder(m, fr, db, ds)
        worst = max(worst, np.linalg.norm(E, 2) - expansion_bound(float(np.linalg.norm(db)), m.curvature_bound))
    rows.append(("expansion_bound_margin", worst, 0.0, 0.0, worst <= 0.0))
    return rows


def cmd_identities(run: Run):
    rows = identity_rows(run.cfg)
    run.write_csv("identities.csv", ("identity", "statistic", "reference", "tolerance", "passed"), rows)
    run.results = {r[0]: bool(r[4]) for r in rows}


COMMANDS = {
    "sample": cmd_sample,
    "density": cmd_density,
    "heat": cmd_heat,
    "ibp-finite": cmd_ibp_finite,
    "ibp-limit": cmd_ibp_limit,
    "wz-rate": cmd_wz_rate,
    "tails": cmd_tails,
    "identities": cmd_identities,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geowiener", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config and environment)")
        p.add_argument("--threads", type=int, help="worker threads")
        p.add_argument("--out", default=".", help="output directory")
    p = sub.add_parser("summarize")
    p.add_argument("paths", nargs="+", help="CSV files or run directories")
    p.add_argument("--out", help="write summary JSON here instead of stdout")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "summarize":
        try:
            result = summarize(args.paths)
        except CsvParseError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        text = json.dumps(result, indent=2)
        if args.out:
            Path(args.out).write_text(text + "\n")
        else:
            print(text)
        return 0

    try:
        cfg = load_config(args.command, args.config, args.seed, args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = Run(args.command, cfg, out)
    try:
        COMMANDS[args.command](run)
        run.write_manifest()
    except (GeowienerError, KeyError, TypeError, ValueError) as exc:
        run.cleanup()
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, (ConfigError, KeyError, TypeError)) else 1
    except BaseException:
        run.cleanup()
        raise
    print(f"{args.command}: wrote {', '.join(p.name for p in run.written)} to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
