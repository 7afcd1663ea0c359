"""Command-line front end.

    conehit {analyze,estimate,validate,oracle} --config run.json --out outdir [--seed N] [--workers N]

Writes ``report.json`` and ``evaluator.csv`` to ``--out``; ``validate`` also
writes ``passage.csv``. Failures print a JSON error object to stderr and
exit nonzero (2 for configuration problems, 1 otherwise).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import secrets
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import __version__
from .asymptotics import (AsymptoticResult, applicable_oracles, assemble, compare,
                          passage_time_law)
from .g_analysis import GAnalysis, ProblemSpec, analyze
from .path_sim import SimConfig, simulate_P, validate_theorem1, weighted_ks
from .pickands_mc import PickandsInput, estimate_HT, exact_H, lower_bound_H
from .qp_core import QPError

MODES = ("analyze", "estimate", "validate", "oracle")

_matrix = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_vector = {"type": "array", "minItems": 1, "items": {"type": "number"}}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["spec"],
    "additionalProperties": False,
    "properties": {
        "spec": {
            "type": "object",
            "required": ["alpha", "mu"],
            "additionalProperties": False,
            "properties": {
                "sigma": _matrix,
                "factor": _matrix,
                "correlation": _matrix,
                "scales": _vector,
                "alpha": _vector,
                "mu": _vector,
                "cone": _matrix,
            },
            "dependentRequired": {"correlation": ["scales"], "scales": ["correlation"]},
        },
        "seed": {"type": "integer", "minimum": 0},
        "u_grid": {**_vector, "items": {"type": "number", "exclusiveMinimum": 0}},
        "pickands": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "number", "exclusiveMinimum": 0},
                "n_steps": {"type": "integer", "minimum": 1},
                "n_paths": {"type": "integer", "minimum": 2},
                "method": {"enum": ["crude", "tilted"]},
                "refine_levels": {"type": "integer", "minimum": 1},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "u_ladder": {**_vector, "items": {"type": "number", "exclusiveMinimum": 0}},
                "horizon_factor": {"type": "number", "minimum": 2},
                "n_steps_per_unit": {"type": "integer", "minimum": 1},
                "n_paths": {"type": "integer", "minimum": 1},
                "mode": {"enum": ["crude", "tilted"]},
            },
        },
    },
}

DEFAULT_U_GRID = (1.0, 2.0, 4.0, 8.0)
DEFAULT_PICKANDS = {"T": 32.0, "n_steps": 1024, "n_paths": 20_000, "method": "tilted",
                    "refine_levels": 3}
DEFAULT_SIM = {"u_ladder": [2.0, 3.0, 4.0], "horizon_factor": 3.0, "n_steps_per_unit": 64,
               "n_paths": 20_000, "mode": "tilted"}
PASSAGE_S = np.linspace(-4.0, 4.0, 81)


class CliError(Exception):
    def __init__(self, code: str, message: str, module: Optional[str] = None):
        super().__init__(message)
        self.code = code
        self.module = module

    def as_dict(self) -> dict:
        out = {"code": self.code, "message": str(self)}
        if self.module:
            out["module"] = self.module
        return out


class ConfigError(CliError):
    pass


@dataclass(frozen=True)
class RunConfig:
    spec: ProblemSpec
    raw: dict
    config_hash: str
    u_grid: tuple[float, ...]
    pickands: dict
    sim: dict


def _reject_constant(name):
    raise ConfigError("CONFIG_INVALID", f"non-finite literal {name} in config")


def _config_hash(raw: dict) -> str:
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def load_config(path) -> RunConfig:
    """Read, schema-validate and convert a JSON run configuration."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("CONFIG_UNREADABLE", str(exc)) from None
    try:
        raw = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError("CONFIG_INVALID", f"not valid JSON: {exc}") from None
    return parse_config(raw)


def parse_config(raw: dict) -> RunConfig:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    err = jsonschema.exceptions.best_match(validator.iter_errors(raw))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        code = "CONFIG_MISSING_FIELD" if err.validator in ("required", "dependentRequired") \
            else "CONFIG_INVALID"
        raise ConfigError(code, f"{where}: {err.message}")
    s = raw["spec"]
    given = [k for k in ("sigma", "factor", "correlation") if k in s]
    if not given:
        raise ConfigError("CONFIG_MISSING_FIELD",
                          "spec: one of 'sigma', 'factor' or 'correlation' is required")
    if len(given) > 1:
        raise ConfigError("CONFIG_INVALID", f"spec: give exactly one of {given}")
    try:
        if "sigma" in s:
            sigma = np.array(s["sigma"], dtype=float)
        elif "factor" in s:
            A = np.array(s["factor"], dtype=float)
            sigma = A @ A.T
        else:
            sc = np.array(s["scales"], dtype=float)
            sigma = np.array(s["correlation"], dtype=float) * np.outer(sc, sc)
        if "cone" in s:
            spec = ProblemSpec.with_cone(sigma, s["alpha"], s["mu"], np.array(s["cone"], float))
        else:
            spec = ProblemSpec(sigma, s["alpha"], s["mu"])
    except (ValueError, ArithmeticError, QPError) as exc:
        raise ConfigError("CONFIG_INVALID", f"spec: {exc}", type(exc).__module__) from None
    return RunConfig(
        spec=spec, raw=raw, config_hash=_config_hash(raw),
        u_grid=tuple(float(u) for u in raw.get("u_grid", DEFAULT_U_GRID)),
        pickands={**DEFAULT_PICKANDS, **raw.get("pickands", {})},
        sim={**DEFAULT_SIM, **raw.get("sim", {})},
    )


# ---------------------------------------------------------------------------
# report pieces


def _num(x):
    """JSON-safe float: ``None`` for infinities and NaN."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _list(v):
    return [_num(x) for x in np.asarray(v, dtype=float).ravel()]


def qp_summary(analysis: GAnalysis) -> dict:
    q = analysis.qp_at_t0
    return {"b": _list(q.b), "b_tilde": _list(q.b_tilde), "I": list(q.essential),
            "K": list(q.weakly_essential), "J": list(q.unessential), "value": _num(q.value),
            "lambda": _list(q.lam)}


def g_summary(analysis: GAnalysis, description: str) -> dict:
    return {
        "t0": analysis.t0, "ghat": analysis.ghat, "gtilde": analysis.gtilde,
        "classification": description,
        "I": list(analysis.I), "K": list(analysis.K), "J": list(analysis.J),
        "at_breakpoint": analysis.at_breakpoint,
        "breakpoint_margin": _num(analysis.breakpoint_margin),
        "segments": [{"lo": _num(s.lo), "hi": _num(s.hi), "index_set": list(s.index_set),
                      "coeffs": _list(s.coeffs)} for s in analysis.segments],
    }


def evaluator_rows(ar: AsymptoticResult, us: Sequence[float], sim_rows=None) -> list[dict]:
    sims = {r.u: r for r in sim_rows or ()}
    rows = []
    for u in us:
        row = {"u": float(u), "P_asym": None, "band_lo": None, "band_hi": None,
               "p_hat": None, "stderr": None}
        if ar.H_value is not None or ar.exact is not None:
            row["P_asym"] = _num(ar.evaluate(u))
        if ar.H_value is not None:
            lo, hi = ar.band(u)
            row["band_lo"], row["band_hi"] = _num(lo), _num(hi)
        if u in sims:
            row["p_hat"], row["stderr"] = sims[u].p_hat, sims[u].stderr
        rows.append(row)
    return rows


def _csv_cell(v) -> str:
    return "" if v is None else repr(float(v))


def emit_plot_data(out_dir, evaluator: Sequence[dict], passage: Optional[Sequence[dict]] = None
                   ) -> list[Path]:
    """Write ``evaluator.csv`` and, when given, ``passage.csv`` (RFC 4180, CRLF)."""
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        specs = [("evaluator.csv", ["u", "P_asym", "band_lo", "band_hi", "p_hat", "stderr"],
                  evaluator)]
        if passage is not None:
            specs.append(("passage.csv", ["s", "F_limit", "F_empirical"], passage))
        for name, cols, rows in specs:
            path = out_dir / name
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
                w.writerow(cols)
                for r in rows:
                    w.writerow([_csv_cell(r[c]) for c in cols])
            written.append(path)
    except OSError as exc:
        raise CliError("IO_ERROR", str(exc), __name__) from None
    return written


def _empirical_cdf(x, w, s):
    order = np.argsort(x, kind="stable")
    xs, cw = x[order], np.cumsum(w[order]) / w.sum()
    k = np.searchsorted(xs, s, side="right")
    return np.where(k > 0, cw[np.maximum(k - 1, 0)], 0.0)


# ---------------------------------------------------------------------------
# pipeline


def _pickands(cfg: RunConfig, analysis: GAnalysis, seed: int, workers):
    p = cfg.pickands
    inp = PickandsInput.from_analysis(analysis, T=float(p["T"]), n_steps=int(p["n_steps"]),
                                      n_paths=int(p["n_paths"]), seed=seed,
                                      method=p["method"], refine_levels=int(p["refine_levels"]))
    return estimate_HT(inp, workers=workers)


def run_pipeline(mode: str, cfg: RunConfig, seed: int, workers=None) -> tuple[dict, list, list]:
    """Return ``(report, evaluator_rows, passage_rows)``."""
    spec = cfg.spec
    analysis = analyze(spec)
    ar = assemble(analysis)
    report = {
        "version": __version__, "config_hash": cfg.config_hash, "seed": seed, "mode": mode,
        "input": cfg.raw, "qp": qp_summary(analysis),
        "g_analysis": g_summary(analysis, ar.description),
        "classification": ar.description, "C_I": ar.C_I,
        "H": {"exact": _num(exact_H(analysis)), "lower_bound": lower_bound_H(analysis)},
    }
    us = cfg.u_grid
    sim_rows = None
    passage = None
    if mode in ("estimate", "validate"):
        pk = _pickands(cfg, analysis, seed, workers)
        report["H"].update({"T": pk.T, "HT_over_T": pk.HT_over_T, "stderr": pk.H_stderr,
                            "estimate": pk.H, "delta": pk.delta, "n_paths": pk.n_effective,
                            "method": pk.method})
        if analysis.m > 1:
            ar = assemble(analysis, pk)
    if mode == "oracle":
        found = applicable_oracles(spec)
        results = []
        for name, fn in found.items():
            o = fn(spec)
            bad = compare(ar, o)
            results.append({"name": name, "agree": not bad, "mismatched": bad,
                            "t0": o.t0, "ghat": o.ghat, "gtilde": o.gtilde, "C_I": o.C_I})
            if o.exact is not None:
                ar = replace(ar, exact=o.exact)
        report["oracles"] = results
        bad = [r for r in results if not r["agree"]]
        if bad:
            raise CliError("ORACLE_DISAGREEMENT",
                           "; ".join(f"{r['name']}: {r['mismatched']}" for r in bad),
                           "conehit.asymptotics")
    if mode == "validate":
        s = cfg.sim
        base = SimConfig(u=1.0, horizon_factor=float(s["horizon_factor"]),
                         n_steps_per_unit=int(s["n_steps_per_unit"]),
                         n_paths=int(s["n_paths"]), seed=seed, mode=s["mode"])
        us = tuple(float(u) for u in s["u_ladder"])
        t1 = validate_theorem1(spec, ar, us, base=base, workers=workers, analysis=analysis)
        sim_rows = t1.rows
        report["theorem1"] = {
            "rows": [{"u": r.u, "p_hat": r.p_hat, "stderr": r.stderr, "P_asym": r.P_asym,
                      "ratio": r.ratio, "ratio_stderr": r.ratio_stderr} for r in t1.rows],
            "band": list(t1.band), "pass": t1.passed, "trend_toward_one": t1.trend_toward_one,
        }
        # passage times at the largest u of the ladder
        law = passage_time_law(analysis)
        est = simulate_P(spec, replace(base, u=us[-1]), analysis=analysis, workers=workers)
        x = law.standardize(est.passage_samples, us[-1])
        F_lim = law.cdf(PASSAGE_S)
        F_emp = _empirical_cdf(x, est.weights, PASSAGE_S) if est.n_hits else np.zeros_like(F_lim)
        passage = [{"s": float(a), "F_limit": float(b), "F_empirical": float(c)}
                   for a, b, c in zip(PASSAGE_S, F_lim, F_emp)]
        report["theorem2"] = {
            "u": us[-1], "n_hits": est.n_hits, "ess": est.ess,
            "ks": weighted_ks(x, est.weights, law.cdf) if est.n_hits else None,
        }
    rows = evaluator_rows(ar, us, sim_rows)
    report["evaluator"] = rows
    return report, rows, passage


def write_report(out_dir, report: dict) -> Path:
    path = Path(out_dir) / "report.json"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n")
    except OSError as exc:
        raise CliError("IO_ERROR", str(exc), __name__) from None
    return path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conehit", description=__doc__.splitlines()[0])
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="overrides the config seed; generated and printed when absent")
    p.add_argument("--workers", type=int, default=1,
                   help="worker threads (the CONEHIT_WORKERS variable takes precedence)")
    return p


def _fail(err: CliError, out_dir) -> int:
    payload = {"error": err.as_dict(), "version": __version__}
    print(json.dumps(payload), file=sys.stderr)
    try:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "error.json").write_text(json.dumps(payload, indent=2) + "\n")
    except OSError:
        pass
    return 2 if isinstance(err, ConfigError) else 1


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.raw.get("seed")
        if seed is None:
            seed = secrets.randbelow(2**31)
            print(f"seed: {seed}", file=sys.stderr)
        report, rows, passage = run_pipeline(args.mode, cfg, int(seed), args.workers)
        write_report(args.out, report)
        emit_plot_data(args.out, rows, passage)
    except CliError as err:
        return _fail(err, args.out)
    except Exception as exc:  # serialized with the module that raised it
        return _fail(CliError("MODULE_ERROR", f"{type(exc).__name__}: {exc}",
                              type(exc).__module__), args.out)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
