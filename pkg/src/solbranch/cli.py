"""Command line: ``solbranch run | oracle | verify``.

Configs are TOML files validated against :data:`CONFIG_SCHEMA` before any
sampling.  Exit codes: 0 ok, 1 config/schema error, 2 convergence-bound
failure under ``--strict-bounds``, 3 runtime error (and any failed criterion
for ``verify``).
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys

import jsonschema
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__

__all__ = ["CONFIG_SCHEMA", "CSV_COLUMNS", "ORACLE_COLUMNS", "load_config", "apply_overrides",
           "validate_config", "run_config", "run_oracle", "records_to_csv", "main"]

FORMAT_VERSION = 1
CSV_COLUMNS = ["format_version", "engine", "coord1", "coord2", "t", "species", "mean_re", "mean_im",
               "stderr", "stderr_re", "stderr_im", "n_samples", "n_rejected", "flags", "elapsed_s"]
ORACLE_COLUMNS = ["format_version", "engine", "oracle", "coord1", "coord2", "t", "species",
                  "value_re", "value_im", "tolerance"]

ENGINES = ("soledge", "soledge-chi1", "tokam-config", "tokam-fourier")
SPECIES = {"soledge": ["N", "Gamma"], "soledge-chi1": ["N", "Gamma"], "tokam-config": ["n", "Omega"],
           "tokam-fourier": ["chi", "zeta"]}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_expr = {"type": "string"}
_pair = {"oneOf": [_expr, {"type": "array", "items": _expr, "minItems": 2, "maxItems": 2}]}

_SOLEDGE_PARAMS = {"type": "object", "additionalProperties": False, "properties": {
    "q": _pos, "D": {"type": "number", "minimum": 0}, "nu": {"type": "number", "minimum": 0}, "eta": _pos,
    "Gamma0": _num, "p_survive": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    "nonlinear": {"type": "boolean"}, "scheme": {"enum": ["control", "literal"]}}}
_TOKAM_PARAMS = {"type": "object", "additionalProperties": False, "properties": {
    "sigma": _pos, "Lambda": _num, "D": _pos, "nu": _pos, "g": {"type": "number", "minimum": 0}, "S": _expr}}
_FOURIER_PARAMS = {"type": "object", "additionalProperties": False, "properties": {
    "sigma": {"type": "number", "minimum": 0}, "Lambda": _num, "D": _pos, "nu": _pos,
    "g": {"type": "number", "minimum": 0}, "S": _pair}}


def _init(names, item):
    return {"type": "object", "additionalProperties": False, "required": list(names),
            "properties": {n: item for n in names}}


def _engine_rule(engine, params, init, species):
    return {"if": {"properties": {"engine": {"const": engine}}},
            "then": {"properties": {"params": params, "init": init,
                                    "points": {"items": {"properties": {
                                        "species": {"type": "array", "items": {"enum": species}}}}}}}}


CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["engine", "init", "points"],
    "properties": {
        "engine": {"enum": list(ENGINES)},
        "n_samples": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "max_jet_order": {"type": "integer", "minimum": 0},
        "max_depth": {"type": "integer", "minimum": 0},
        "format": {"enum": ["csv", "json"]},
        "h": {"enum": ["default", "sech"]},
        "kernel": {"type": "object", "additionalProperties": False, "properties": {"s": _pos, "c": _pos}},
        "params": {"type": "object"},
        "init": {"type": "object"},
        "guards": {"type": "object", "additionalProperties": False, "properties": {
            "eps_div": _pos, "k_min": _pos, "bound_M": {"type": "number", "minimum": 0},
            "M_cap": {"type": "number", "minimum": 0},
            "caps": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}}}},
        "points": {"type": "array", "minItems": 1, "items": {
            "type": "object", "additionalProperties": False, "required": ["coords", "t"],
            "properties": {"coords": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                           "t": _pos, "species": {"type": "array", "minItems": 1}}}},
    },
    "allOf": [
        _engine_rule("soledge", _SOLEDGE_PARAMS, _init(["N", "Gamma"], _expr), SPECIES["soledge"]),
        _engine_rule("soledge-chi1", _SOLEDGE_PARAMS, _init(["N", "Gamma"], _expr), SPECIES["soledge"]),
        _engine_rule("tokam-config", _TOKAM_PARAMS, _init(["n", "Omega"], _expr), SPECIES["tokam-config"]),
        _engine_rule("tokam-fourier", _FOURIER_PARAMS, _init(["chi", "zeta"], _pair), SPECIES["tokam-fourier"]),
    ],
}

DEFAULTS = {"n_samples": 10_000, "seed": 0, "threads": 1, "max_jet_order": 8, "format": "csv", "h": "default"}


class ConfigError(ValueError):
    pass


class BoundError(RuntimeError):
    pass


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(cfg: dict, sets) -> dict:
    """Apply ``KEY=VALUE`` dotted-path overrides (list items by index)."""
    cfg = copy.deepcopy(cfg)
    for item in sets or ():
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for i, part in enumerate(parts):
            last = i == len(parts) - 1
            if isinstance(node, list):
                try:
                    idx = int(part)
                    node[idx]
                except (ValueError, IndexError):
                    raise ConfigError(f"bad list index {part!r} in {key!r}") from None
                if last:
                    node[idx] = _parse_value(value)
                else:
                    node = node[idx]
            else:
                if last:
                    node[part] = _parse_value(value)
                else:
                    node = node.setdefault(part, {})
                    if not isinstance(node, (dict, list)):
                        raise ConfigError(f"{key!r} descends into a scalar")
    return cfg


_VARS = {"soledge": ("r", "theta"), "soledge-chi1": ("r", "theta"), "tokam-config": ("x1", "x2"),
         "tokam-fourier": ("k1", "k2")}


def _check_expressions(cfg):
    from .expr import ParseError, parse

    allowed = _VARS[cfg["engine"]]
    items = [(f"init/{k}", v, allowed) for k, v in cfg["init"].items()]
    if "S" in cfg.get("params", {}):
        items.append(("params/S", cfg["params"]["S"], allowed + ("t",)))
    for where, v, names in items:
        for text in (v if isinstance(v, list) else [v]):
            try:
                parse(text, names)
            except ParseError as exc:
                raise ConfigError(f"config error at {where}: {exc}") from None


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    _check_expressions(cfg)
    out = dict(DEFAULTS)
    out.update(cfg)
    return out


def _species(cfg, point):
    return point.get("species") or SPECIES[cfg["engine"]]


def _record(cfg, point, species, est=None, value=None, flags=(), elapsed=None):
    rec = {"format_version": FORMAT_VERSION, "engine": cfg["engine"], "coord1": point["coords"][0],
           "coord2": point["coords"][1], "t": point["t"], "species": species}
    if est is not None:
        m = complex(est.mean)
        rec.update(mean_re=m.real, mean_im=m.imag, stderr=est.standard_error, stderr_re=est.stderr_re,
                   stderr_im=est.stderr_im, n_samples=est.n_samples, n_rejected=est.n_rejected,
                   flags=";".join(list(est.flags) + [f"rejected-{k}:{v}" for k, v in
                                                     sorted(est.reject_reasons.items())]),
                   elapsed_s=est.elapsed)
    else:
        rec.update(mean_re=float(value), mean_im=0.0, stderr=0.0, stderr_re=0.0, stderr_im=0.0, n_samples=0,
                   n_rejected=0, flags=";".join(flags), elapsed_s=elapsed)
    return rec


def _check_bounds(cfg, point, strict):
    """Convergence-bound flag for a point; raises BoundError when strict."""
    from .fourier import fourier_bound_check
    from .soledge import ConvergenceViolated, SoledgeParams, convergence_guard
    from .tokam import TokamParams, tokam_bound_check

    g = cfg.get("guards", {})
    eng, t = cfg["engine"], point["t"]
    if eng == "soledge" and "bound_M" in g:
        res = convergence_guard(SoledgeParams(**cfg.get("params", {})), g["bound_M"], t)
        if isinstance(res, ConvergenceViolated):
            msg = f"convergence bound (t/q)M < 1 violated: (t/q)M = {res.value:.6g}"
            if strict:
                raise BoundError(msg)
            return f"bound-violated:{res.value:.6g}"
        return "bound-ok"
    if eng == "tokam-config" and "M_cap" in g:
        p = TokamParams(**cfg.get("params", {}))
        if tokam_bound_check(p, t, g["M_cap"]) == "violated":
            thr = 1.0 / -math.expm1(-p.rate * t)
            msg = f"convergence bound M <= 1/(1 - exp(-sigma e^Lambda t)) violated: M = {g['M_cap']:.6g} > {thr:.6g}"
            if strict:
                raise BoundError(msg)
            return "bound-violated"
        return "bound-ok"
    if eng == "tokam-fourier" and "caps" in g:
        if fourier_bound_check(g["caps"]) == "violated":
            worst = max(g["caps"].items(), key=lambda kv: kv[1])
            msg = f"convergence bound M <= 1 violated: {worst[0]} = {worst[1]:.6g}"
            if strict:
                raise BoundError(msg)
            return "bound-violated"
        return "bound-ok"
    return None


def run_config(cfg: dict, strict_bounds: bool = False) -> list:
    """Validate ``cfg`` and return one record per (point, species)."""
    import time

    from .jets import set_eps_div
    from .soledge import derive_seed

    from . import jets

    cfg = validate_config(cfg)
    # all bounds are checked before any sampling
    bound_flags = [_check_bounds(cfg, pt, strict_bounds) for pt in cfg["points"]]
    previous = jets.EPS_DIV
    try:
        set_eps_div(cfg.get("guards", {}).get("eps_div", previous))
        return _run_points(cfg, bound_flags)
    finally:
        set_eps_div(previous)


def _run_points(cfg, bound_flags):
    import time

    from .soledge import derive_seed

    guards = cfg.get("guards", {})
    eng, prm, init = cfg["engine"], cfg.get("params", {}), cfg["init"]
    workers, n = cfg["threads"], cfg["n_samples"]
    records = []
    for i, pt in enumerate(cfg["points"]):
        seed = derive_seed(cfg["seed"], "point", i)
        coords, t = tuple(pt["coords"]), pt["t"]
        extra = [bound_flags[i]] if bound_flags[i] else []
        for sp in _species(cfg, pt):
            if eng == "soledge":
                from .soledge import SoledgeParams, estimate_soledge

                est = estimate_soledge(SoledgeParams(**prm), init["N"], init["Gamma"], coords, t, n, seed,
                                       max_jet_order=cfg["max_jet_order"], workers=workers,
                                       max_depth=cfg.get("max_depth"), species=sp)
            elif eng == "soledge-chi1":
                from .soledge import SoledgeParams, solve_chi1

                t0 = time.perf_counter()
                vals = solve_chi1(SoledgeParams(**prm), init["N"], init["Gamma"], coords, t)
                records.append(_record(cfg, pt, sp, value=vals[0 if sp == "N" else 1],
                                       flags=["deterministic"], elapsed=time.perf_counter() - t0))
                continue
            elif eng == "tokam-config":
                from .tokam import TokamParams, estimate_tokam

                est = estimate_tokam(TokamParams(**prm), init["n"], init["Omega"], sp, coords, t, n, seed,
                                     h=cfg["h"], max_jet_order=cfg["max_jet_order"], workers=workers,
                                     max_depth=cfg.get("max_depth"))
            else:
                from .fourier import FourierParams, MajorizingKernel, estimate_fourier

                fp = dict(prm)
                if isinstance(fp.get("S"), list):
                    fp["S"] = tuple(fp["S"])
                kern = MajorizingKernel(**cfg.get("kernel", {}))
                p = FourierParams(**fp, kernel=kern, k_min=guards.get("k_min", 1e-3))
                est = estimate_fourier(p, init["chi"], init["zeta"], sp, coords, t, n, seed, workers=workers,
                                       max_depth=cfg.get("max_depth"))
            rec = _record(cfg, pt, sp, est)
            if extra:
                rec["flags"] = ";".join(extra + ([rec["flags"]] if rec["flags"] else []))
            records.append(rec)
    return records


def run_oracle(cfg: dict, kind: str = "auto", depth: int = 1) -> list:
    """Deterministic reference values for each configured point."""
    from .fourier import FourierParams, MajorizingKernel
    from .oracles import picard_iterate_quadrature, soledge_characteristics_exact, soledge_fd_point
    from .soledge import SoledgeParams, solve_chi1
    from .tokam import TokamParams

    cfg = validate_config(cfg)
    eng, prm, init = cfg["engine"], cfg.get("params", {}), cfg["init"]
    if kind == "auto":
        kind = {"soledge": "fd", "soledge-chi1": "chi1"}.get(eng, "picard")
    rows = []
    for pt in cfg["points"]:
        coords, t = tuple(pt["coords"]), pt["t"]
        if eng in ("soledge", "soledge-chi1"):
            p = SoledgeParams(**prm)
            if kind == "fd":
                vals = soledge_fd_point(p, init["N"], init["Gamma"], coords, t, chi=1 if eng == "soledge-chi1" else 0)
            elif kind == "picard":
                vals = picard_iterate_quadrature("soledge", depth, (init["N"], init["Gamma"]), coords, t, p)
            elif kind == "chi1":
                vals = [(v, 1e-8) for v in solve_chi1(p, init["N"], init["Gamma"], coords, t)]
            elif kind == "exact":
                raise ConfigError("the exact characteristics oracle takes (m, g) data; use the library call")
            else:
                raise ConfigError(f"oracle kind {kind!r} does not apply to {eng}")
        elif kind != "picard":
            raise ConfigError(f"oracle kind {kind!r} does not apply to {eng}")
        elif eng == "tokam-config":
            vals = picard_iterate_quadrature("tokam-config", depth, (init["n"], init["Omega"]), coords, t,
                                             TokamParams(**prm), h=cfg["h"])
        else:
            fp = dict(prm)
            if isinstance(fp.get("S"), list):
                fp["S"] = tuple(fp["S"])
            p = FourierParams(**fp, kernel=MajorizingKernel(**cfg.get("kernel", {})))
            vals = picard_iterate_quadrature("tokam-fourier", depth, (init["chi"], init["zeta"]), coords, t, p)
        for sp, v in zip(SPECIES[eng], vals):
            if sp not in _species(cfg, pt):
                continue
            val, tol = (v.value, v.tolerance) if hasattr(v, "value") else v
            val = complex(val)
            rows.append({"format_version": FORMAT_VERSION, "engine": eng, "oracle": kind,
                         "coord1": coords[0], "coord2": coords[1], "t": t, "species": sp,
                         "value_re": val.real, "value_im": val.imag, "tolerance": float(tol)})
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records, timing: bool = False, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        w.writerow(["" if (c == "elapsed_s" and not timing) else _fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, np.ndarray):
        v = v.tolist()
    elif isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, complex):
        return [_json_safe(v.real), _json_safe(v.imag)]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def records_to_json(records, cfg, timing: bool = False) -> str:
    recs = [dict(r, elapsed_s=r.get("elapsed_s") if timing else None) for r in records]
    doc = {"format_version": FORMAT_VERSION, "solbranch_version": __version__, "seed": cfg.get("seed", 0),
           "config": cfg, "records": recs}
    return json.dumps(_json_safe(doc), indent=2, default=str) + "\n"


def _write(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _build_parser():
    ap = argparse.ArgumentParser(prog="solbranch", description="Branching-diffusion estimators for SOL turbulence models.")
    ap.add_argument("--version", action="version", version=f"solbranch {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted-path override")
        p.add_argument("--output", help="write to this file instead of stdout")
        p.add_argument("--format", choices=["csv", "json"])

    run = sub.add_parser("run", help="estimate fields at the configured points")
    common(run)
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int, help="worker processes (default: SOLBRANCH_THREADS or 1)")
    run.add_argument("--strict-bounds", action="store_true", help="fail (exit 2) when a convergence bound is violated")
    run.add_argument("--timing", action="store_true", help="fill the elapsed_s column")

    orc = sub.add_parser("oracle", help="deterministic reference values at the configured points")
    common(orc)
    orc.add_argument("--kind", choices=["auto", "fd", "picard", "chi1"], default="auto")
    orc.add_argument("--depth", type=int, choices=[1, 2], default=1)

    ver = sub.add_parser("verify", help="run the acceptance suite")
    ver.add_argument("suite", choices=["fast", "full"])
    ver.add_argument("--only", help="comma-separated criterion numbers")
    ver.add_argument("--output", help="write the JSON report here")
    return ap


def _load(args):
    cfg = apply_overrides(load_config(args.config), args.set)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        cfg["threads"] = args.threads
    elif "threads" not in cfg:
        from .estimate import default_workers

        cfg["threads"] = default_workers()
    if args.format:
        cfg["format"] = args.format
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "verify":
        from .verify import run_suite

        only = {int(x) for x in args.only.split(",")} if args.only else None
        results = run_suite(args.suite, only=only, echo=lambda s: print(s, flush=True))
        report = {"suite": args.suite, "criteria": [
            {"number": r.number, "title": r.title, "passed": r.passed, "elapsed_s": r.elapsed,
             "measured": r.measured} for r in results]}
        text = json.dumps(_json_safe(report), indent=2, default=str) + "\n"
        if args.output:
            _write(text, args.output)
        elif args.suite == "full":
            sys.stdout.write(text)
        return 0 if all(r.passed for r in results) else 3
    try:
        cfg = _load(args)
        if args.command == "oracle":
            cfg = validate_config(cfg)
            rows = run_oracle(cfg, args.kind, args.depth)
            text = (records_to_csv(rows, columns=ORACLE_COLUMNS) if cfg["format"] == "csv"
                    else json.dumps(_json_safe({"format_version": FORMAT_VERSION, "config": cfg, "records": rows}),
                                    indent=2) + "\n")
        else:
            records = run_config(cfg, strict_bounds=args.strict_bounds)
            cfg = validate_config(cfg)
            text = (records_to_csv(records, args.timing) if cfg["format"] == "csv"
                    else records_to_json(records, cfg, args.timing))
    except ConfigError as exc:
        print(f"solbranch: {exc}", file=sys.stderr)
        return 1
    except BoundError as exc:
        print(f"solbranch: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"solbranch: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    _write(text, args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
