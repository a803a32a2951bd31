"""Convergence fits and pass/fail evaluation of experiment CSVs."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from scipy import stats as sps

from .errors import GeowienerError

KAPPA_DEFAULT = 1.0 / 12.0


class CsvParseError(GeowienerError, ValueError):
    """A CSV artifact could not be parsed; the message names file and line."""


def fit_line(x, y, level: float = 0.95) -> dict | None:
    """Least-squares line with a t-based confidence interval on the slope; ``None`` below two points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 2 or np.ptp(x) == 0:
        return None
    res = sps.linregress(x, y)
    out = {"slope": float(res.slope), "intercept": float(res.intercept), "stderr": None, "ci": None}
    if x.size > 2:
        q = sps.t.ppf(0.5 + level / 2.0, x.size - 2)
        out["stderr"] = float(res.stderr)
        out["ci"] = [float(res.slope - q * res.stderr), float(res.slope + q * res.stderr)]
    return out


def read_csv(path) -> tuple[list[str], list[dict]]:
    """Rows as dicts with numeric fields converted; raises :class:`CsvParseError` naming the line."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CsvParseError(f"{path}: cannot open ({exc})") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}:1: empty file") from None
        rows = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise CsvParseError(f"{path}:{line}: expected {len(header)} fields, found {len(row)}")
            rec = {}
            for key, val in zip(header, row):
                try:
                    rec[key] = float(val)
                except ValueError:
                    if key in ("mode", "identity", "passed", "statistic"):
                        rec[key] = val
                    else:
                        raise CsvParseError(f"{path}:{line}: field {key!r} is not numeric: {val!r}") from None
            rows.append(rec)
    return header, rows


def _manifest_for(path: Path) -> dict:
    for cand in sorted(path.parent.glob("*.manifest.json")):
        try:
            man = json.loads(cand.read_text())
        except (OSError, json.JSONDecodeError):
            continue
        if path.name in man.get("outputs", []):
            return man
    return {}


def _bool(v) -> bool:
    return str(v).strip().lower() in ("true", "1", "1.0", "yes")


def summarize_file(path) -> dict:
    path = Path(path)
    header, rows = read_csv(path)
    man = _manifest_for(path)
    cfg = man.get("config", {})
    name = path.stem
    out: dict = {"file": str(path), "rows": len(rows), "fits": {}, "checks": {}, "passed": None}
    if not rows:
        return out

    if header[:2] == ["kappa", "n"]:
        out["kind"] = "heat"
        kappas = sorted({r["kappa"] for r in rows})
        for k in kappas:
            sub = [r for r in rows if r["kappa"] == k]
            out["fits"][f"kappa={k:.6g}"] = fit_line(np.log([r["n"] for r in sub]), np.log([r["sup_error"] for r in sub]))
        main = [r for r in rows if math.isclose(r["kappa"], KAPPA_DEFAULT)]
        fit = out["fits"].get(f"kappa={KAPPA_DEFAULT:.6g}")
        if main and fit is not None:
            n_max = max(r["n"] for r in main)
            err_max = next(r["sup_error"] for r in main if r["n"] == n_max)
            checks = {"sup_error_le_1pct": err_max <= 0.01, "slope_in_range": -1.3 <= fit["slope"] <= -0.7}
            plain = [r for r in rows if r["kappa"] == 0.0 and r["n"] == n_max]
            if plain:
                checks["kappa0_5x_worse"] = plain[0]["sup_error"] >= 5.0 * err_max
            out["checks"] = checks
            out["passed"] = all(checks.values())
        return out

    if header[:1] == ["mode"]:
        out["kind"] = "ibp"
        checks = {}
        for i, r in enumerate(rows):
            if r["mode"] == "quadrature":
                checks[f"row{i}"] = abs(r["residual"]) <= 1e-6 * max(1.0, abs(r["lhs"]))
            else:
                checks[f"row{i}"] = abs(r["residual"]) <= 3.0 * r["se"]
        out["checks"] = checks
        out["passed"] = all(checks.values())
        return out

    if header[:1] == ["identity"]:
        out["kind"] = "identities"
        out["checks"] = {r["identity"]: _bool(r["passed"]) for r in rows}
        out["passed"] = all(out["checks"].values())
        return out

    if header[:3] == ["n", "mesh", "estimate"]:
        mesh = np.array([r["mesh"] for r in rows])
        est = np.array([r["estimate"] for r in rows])
        if name.startswith("tails"):
            out["kind"] = "tails"
            eps = float(cfg.get("eps", 0.5))
            fit = fit_line(1.0 / mesh, np.log(np.where(est > 0, est, np.nan)))
            out["fits"]["log_fraction_vs_inverse_mesh"] = fit
            if fit is not None:
                out["checks"] = {"slope_le_-eps2/8": fit["slope"] <= -(eps**2) / 8.0}
                out["passed"] = all(out["checks"].values())
            return out
        if name.startswith(("wz_rate", "kp_rate")):
            out["kind"] = "rate"
            fit = fit_line(np.log(mesh), np.log(est))
            out["fits"]["log_error_vs_log_mesh"] = fit
            if fit is not None:
                out["checks"] = {"slope_ge_0.4": fit["slope"] >= 0.4}
                out["passed"] = all(out["checks"].values())
            return out
        out["kind"] = "estimate"
        target = man.get("results", {}).get("targets", {}).get(name)
        if target is not None:
            se = np.array([r["std_error"] for r in rows])
            order = np.argsort(mesh)
            err = np.abs(est - target)
            finest = order[0]
            checks = {"within_3se_at_finest": bool(err[finest] <= 3.0 * se[finest])}
            if len(rows) > 1:
                by_n = err[np.argsort(-mesh)]
                checks["error_decreasing"] = bool(np.all(np.diff(by_n) < 0))
            out["checks"] = checks
            out["target"] = target
            out["passed"] = all(checks.values())
        out["fits"]["log_abs_error_vs_log_mesh"] = (
            fit_line(np.log(mesh), np.log(np.abs(est - target))) if target is not None else None
        )
        return out

    raise CsvParseError(f"{path}:1: unrecognised header {header}")


def summarize(paths) -> dict:
    files = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(p.glob("*.csv")))
        else:
            files.append(p)
    skip = ("sample", "heat_nodes")
    results = [summarize_file(f) for f in files if f.stem not in skip and not f.stem.endswith("_samples")]
    verdicts = [r["passed"] for r in results if r["passed"] is not None]
    return {"results": results, "all_passed": all(verdicts) if verdicts else None}
