"""Command-line front end.

    jumpfolio solve     --config cfg.json [--out result.json]
    jumpfolio statics   --config cfg.json
    jumpfolio sweep     --config cfg.json [--format csv|json]
    jumpfolio simulate  --config cfg.json [--seed N] [--format json|csv]
    jumpfolio decompose --config cfg.json

Exit codes: 0 success, 2 configuration error, 3 domain/solver error, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from typing import Any

import jsonschema
import numpy as np

from . import errors, sim, solver, statics
from .errors import ConfigError, JumpfolioError
from .levy import AsymmetricPowerLaw, DiscreteCompound, PointMass, UniformDensity
from .market import MultiSectorMarket, OneSectorMarket, RawMarket, decompose_sigma, invariance_residual

SCHEMA_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_INTERNAL = 0, 2, 3, 4

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}
_rho = {"type": "number", "minimum": -1, "exclusiveMaximum": 1}

MEASURE_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "power_law"},
                "lambda_plus": {"type": "number", "minimum": 0},
                "lambda_minus": {"type": "number", "minimum": 0},
            },
            "required": ["kind", "lambda_plus"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "uniform"},
                "lambda": {"type": "number", "minimum": 0},
                "lo": {"type": "number", "minimum": -1},
                "hi": _num,
            },
            "required": ["kind", "lambda", "lo", "hi"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "point_mass"},
                "lambda": {"type": "number", "minimum": 0},
                "z": {"type": "number", "minimum": -1},
            },
            "required": ["kind", "lambda", "z"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "discrete"},
                "lambda": {"type": "number", "minimum": 0},
                "atoms": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                },
            },
            "required": ["kind", "lambda", "atoms"],
            "additionalProperties": False,
        },
    ]
}

MARKET_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "one_sector"},
                "n": {"type": "integer", "minimum": 2},
                "v": _pos,
                "rho": _rho,
                "rbar": _num,
                "jbar": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
                "r": _num,
                "r_perp": _vec,
                "measure": MEASURE_SCHEMA,
            },
            "required": ["kind", "n", "v", "rho", "rbar", "jbar", "measure"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "multi_sector"},
                "m": {"type": "integer", "minimum": 1},
                "k": {"type": "integer", "minimum": 1},
                "v": {"type": "array", "items": _pos, "minItems": 1},
                "rho_intra": {"type": "array", "items": _rho, "minItems": 1},
                "rho_cross": {"oneOf": [_rho, {"type": "array", "items": {"type": "array", "items": _rho}}]},
                "r_sector": _vec,
                "j": _mat,
                "measures": {"type": "array", "items": MEASURE_SCHEMA, "minItems": 1},
                "r": _num,
                "r_perp": _vec,
            },
            "required": ["kind", "m", "k", "v", "rho_intra", "rho_cross", "r_sector", "j", "measures"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "raw"},
                "sigma": _mat,
                "R": _vec,
                "jumps": _mat,
                "measures": {"type": "array", "items": MEASURE_SCHEMA, "minItems": 1},
                "r": _num,
            },
            "required": ["kind", "sigma", "R", "jumps", "measures"],
            "additionalProperties": False,
        },
    ]
}

PREFERENCES_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"kind": {"const": "power"}, "gamma": _pos, "beta": _pos},
            "required": ["kind", "gamma", "beta"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"kind": {"const": "exponential"}, "q": _pos, "beta": _pos},
            "required": ["kind", "q", "beta"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"kind": {"const": "log"}, "beta": _pos},
            "required": ["kind", "beta"],
            "additionalProperties": False,
        },
    ]
}

_mode = {"enum": ["finite", "asymptotic"]}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "market": MARKET_SCHEMA,
        "preferences": PREFERENCES_SCHEMA,
        "solve": {
            "type": "object",
            "properties": {"method": {"enum": ["auto", "separated", "numeric"]}},
            "additionalProperties": False,
        },
        "statics": {
            "type": "object",
            "properties": {
                "query": {"enum": ["critical_lambda", "critical_jump_size", "asymptotic", "sensitivity", "large_n"]},
                "regime": {"enum": ["lambda_to_zero", "lambda_to_infinity", "small_lambda"]},
                "wrt": {"enum": ["lambda", "jump_size", "gamma"]},
                "mode": _mode,
                "ns": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
            },
            "required": ["query"],
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {
                "grid": {
                    "type": "object",
                    "propertyNames": {"enum": list(statics.SWEEP_PARAMETERS)},
                    "additionalProperties": _vec,
                    "minProperties": 1,
                },
                "mode": _mode,
            },
            "required": ["grid"],
            "additionalProperties": False,
        },
        "simulate": {
            "type": "object",
            "properties": {
                "paths": {"type": "integer", "minimum": 1},
                "horizon": _pos,
                "tail": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "dt": _pos,
                "eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
                "antithetic": {"type": "boolean"},
                "x0": _pos,
                "chunk": {"type": "integer", "minimum": 2},
                "small_jump_drift": {"type": "boolean"},
                "weights": _vec,
            },
            "additionalProperties": False,
        },
    },
    "required": ["schema_version", "market", "preferences"],
    "additionalProperties": False,
}

_nullable_num = {"type": ["number", "null"]}
_nullable_vec = {"type": "array", "items": _nullable_num}

SOLVE_RESULT_SCHEMA = {
    "type": "object",
    "properties": {
        "omega": _nullable_vec,
        "omega0": _nullable_num,
        "omega_bar": _nullable_vec,
        "omega_perp": _nullable_vec,
        "varpi": _nullable_vec,
        "y": _nullable_vec,
        "K": {"oneOf": [_nullable_num, {"type": "array", "items": _nullable_num, "minItems": 2, "maxItems": 2}]},
        "funds": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "properties": {"delta1": _nullable_vec, "delta2": _nullable_vec, "y": _nullable_num},
                    "required": ["delta1", "delta2", "y"],
                },
            ]
        },
        "objective": _nullable_num,
        "diagnostics": {"type": "object"},
    },
    "required": ["omega", "omega0", "omega_bar", "omega_perp", "varpi", "y", "K", "funds", "objective", "diagnostics"],
}

SIMULATE_RESULT_SCHEMA = {
    "type": "object",
    "properties": {
        "estimate": _nullable_num,
        "stderr": _nullable_num,
        "benchmark": _nullable_num,
        "z_score": _nullable_num,
        "K": _nullable_num,
        "paths": {"type": "integer"},
        "horizon": _num,
        "bankruptcies": {"type": "integer"},
        "mean_jumps": _num,
        "terminal_wealth_mean": _nullable_num,
    },
    "required": ["estimate", "stderr", "benchmark", "z_score", "K", "paths", "horizon", "bankruptcies"],
}


# ---------------------------------------------------------------------------
# output


def fmt_float(x: float) -> str:
    return "%.17g" % x


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON with floats at 17 significant digits and non-finite values as ``null``."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj)) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        body = (",\n" + inner).join(dumps(v, indent, _level + 1) for v in obj)
        return "[\n" + inner + body + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (",\n" + inner).join(f"{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items())
        return "{\n" + inner + items + "\n" + pad + "}"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv(header: list[str], rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# config -> objects


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    validate_config(cfg)
    return cfg


def _path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    best = jsonschema.exceptions.best_match(validator.iter_errors(cfg))
    if best is not None:
        # oneOf failures hide the offending field; report the deepest sub-error
        leaf = _deepest(best)
        raise ConfigError(f"{_path(leaf)}: {leaf.message}")


def _deepest(err: jsonschema.ValidationError) -> jsonschema.ValidationError:
    best = err
    for sub in err.context or ():
        cand = _deepest(sub)
        if len(list(cand.absolute_path)) > len(list(best.absolute_path)):
            best = cand
    return best


def build_measure(d: dict):
    kind = d["kind"]
    if kind == "power_law":
        return AsymmetricPowerLaw(d["lambda_plus"], d.get("lambda_minus", 0.0))
    if kind == "uniform":
        return UniformDensity(d["lambda"], d["lo"], d["hi"])
    if kind == "point_mass":
        return PointMass(d["lambda"], d["z"])
    if kind == "discrete":
        return DiscreteCompound(d["lambda"], tuple((float(z), float(p)) for z, p in d["atoms"]))
    raise ConfigError(f"unknown measure kind {kind!r}")


def build_market(d: dict):
    kind = d["kind"]
    try:
        if kind == "one_sector":
            return OneSectorMarket(
                d["n"], d["v"], d["rho"], d["rbar"], d["jbar"], build_measure(d["measure"]), d.get("r", 0.0), d.get("r_perp")
            )
        if kind == "multi_sector":
            return MultiSectorMarket(
                d["m"],
                d["k"],
                d["v"],
                d["rho_intra"],
                d["rho_cross"],
                d["r_sector"],
                d["j"],
                tuple(build_measure(mu) for mu in d["measures"]),
                d.get("r", 0.0),
                d.get("r_perp"),
            )
        if kind == "raw":
            return RawMarket(
                d["sigma"], d["R"], np.asarray(d["jumps"], float), tuple(build_measure(mu) for mu in d["measures"]), d.get("r", 0.0)
            )
    except JumpfolioError as exc:
        raise ConfigError(f"market: {type(exc).__name__}: {exc}") from None
    raise ConfigError(f"unknown market kind {kind!r}")


def build_preferences(d: dict):
    try:
        if d["kind"] == "power":
            return solver.PowerUtility(d["gamma"], d["beta"])
        if d["kind"] == "exponential":
            return solver.ExponentialUtility(d["q"], d["beta"])
        return solver.LogUtility(d["beta"])
    except JumpfolioError as exc:
        raise ConfigError(f"preferences: {type(exc).__name__}: {exc}") from None


# ---------------------------------------------------------------------------
# commands


def policy_document(pol: solver.Policy) -> dict:
    funds = None
    if pol.funds is not None:
        funds = {"delta1": pol.funds.delta1, "delta2": pol.funds.delta2, "y": pol.funds.y}
    diag = {k: v for k, v in pol.diagnostics.items()}
    return {
        "omega": pol.omega,
        "omega0": pol.omega0,
        "omega_bar": pol.omega_bar,
        "omega_perp": pol.omega_perp,
        "varpi": pol.varpi,
        "y": pol.y,
        "K": list(pol.K) if isinstance(pol.K, tuple) else pol.K,
        "funds": funds,
        "objective": pol.objective,
        "diagnostics": diag,
    }


def cmd_solve(cfg: dict, fmt: str) -> str:
    market, prefs = build_market(cfg["market"]), build_preferences(cfg["preferences"])
    method = cfg.get("solve", {}).get("method", "auto")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pol = solver.solve_policy(market, prefs, method=method)
    if fmt == "csv":
        perp = pol.omega_perp if pol.omega_perp.size else np.full(pol.omega.size, math.nan)
        return _csv(["asset", "omega", "omega_perp"], [[i, float(w), float(p)] for i, (w, p) in enumerate(zip(pol.omega, perp))])
    return dumps(policy_document(pol)) + "\n"


def _statics_market(cfg: dict) -> OneSectorMarket:
    market = build_market(cfg["market"])
    if not isinstance(market, OneSectorMarket):
        raise ConfigError("market: statics and sweeps need a one_sector market")
    return market


def cmd_statics(cfg: dict, fmt: str) -> str:
    if "statics" not in cfg:
        raise ConfigError("statics: block is required for this command")
    block = cfg["statics"]
    market = _statics_market(cfg)
    prefs = build_preferences(cfg["preferences"])
    query, mode = block["query"], block.get("mode", "asymptotic")
    doc: dict[str, Any] = {"query": query}
    if query == "critical_lambda":
        doc["value"] = statics.critical_lambda(market.rbar, market.jbar, market.measure)
    elif query == "critical_jump_size":
        doc["value"] = statics.critical_jump_size(market.rbar, market.measure.intensity, market.measure)
    elif query == "asymptotic":
        res = statics.asymptotic_behavior(market, block.get("regime", "lambda_to_zero"), mode)
        doc.update(regime=res.regime, value=res.value, kink_binding=res.kink_binding, slope=res.slope, detail=res.detail)
    elif query == "sensitivity":
        if not isinstance(prefs, solver.PowerUtility):
            raise ConfigError("preferences: sensitivities need power utility")
        wrt = block.get("wrt", "lambda")
        doc.update(wrt=wrt, mode=mode, value=statics.sensitivity(market, prefs, wrt, mode))
    elif query == "large_n":
        res = statics.large_n_limit(market, prefs, block.get("ns"))
        doc.update(varpi_inf=res.varpi_inf, ns=list(res.ns), varpi_n=list(res.varpi_n), gaps=list(res.gaps))
    return dumps(doc) + "\n"


SWEEP_OUTPUTS = ("varpi", "y", "objective", "K", "status")


def cmd_sweep(cfg: dict, fmt: str) -> str:
    if "sweep" not in cfg:
        raise ConfigError("sweep: block is required for this command")
    prefs = build_preferences(cfg["preferences"])
    if not isinstance(prefs, solver.PowerUtility):
        raise ConfigError("preferences: sweeps need power utility")
    spec = statics.SweepSpec(_statics_market(cfg), prefs, cfg["sweep"]["grid"], cfg["sweep"].get("mode", "asymptotic"))
    result = statics.sweep(spec)
    names = list(spec.parameters)
    if fmt == "json":
        rows = [
            {**row.point, "varpi": row.varpi, "y": row.y, "objective": row.objective, "K": row.K, "status": row.status}
            for row in result.rows
        ]
        return dumps({"columns": names + list(SWEEP_OUTPUTS), "rows": rows}) + "\n"
    table = [[row.point[p] for p in names] + [row.varpi, row.y, row.objective, row.K, row.status] for row in result.rows]
    return _csv(names + list(SWEEP_OUTPUTS), table)


def _sim_config(block: dict, K: float, seed: int | None) -> sim.SimConfig:
    horizon = block.get("horizon")
    if horizon is None:
        horizon = sim.default_horizon(K, block.get("tail", 1e-3))
    kw = {k: block[k] for k in ("paths", "dt", "eps", "antithetic", "x0", "chunk", "small_jump_drift") if k in block}
    kw["seed"] = seed if seed is not None else block.get("seed", 0)
    return sim.SimConfig(horizon=horizon, **kw)


def cmd_simulate(cfg: dict, fmt: str, seed: int | None = None) -> str:
    market, prefs = build_market(cfg["market"]), build_preferences(cfg["preferences"])
    if not isinstance(prefs, solver.PowerUtility):
        raise ConfigError("preferences: simulate supports power utility")
    block = cfg.get("simulate", {})
    if "weights" in block:
        omega = np.asarray(block["weights"], float)
        if omega.shape != (market.n,):
            raise ConfigError(f"simulate.weights: expected {market.n} entries, got {omega.size}")
        _, K = solver.evaluate_policy_constant(market, prefs, omega)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pol = solver.solve_policy(market, prefs)
        omega, K = pol.omega, float(pol.K)
    if not K > 0:
        raise errors.TransversalityViolated(f"K = {K:.6g} <= 0: the value identity does not hold")
    try:
        config = _sim_config(block, K, seed)
    except ConfigError as exc:
        raise ConfigError(f"simulate: {exc}") from None
    vals, terms, bank, counts = sim.simulate_many(market, [omega], [K], prefs, config)
    if fmt == "csv":
        rows = [
            [i, float(x), float(v), int(c), bool(b)]
            for i, (x, v, c, b) in enumerate(zip(terms[0], vals[0], counts, bank[0]))
        ]
        return _csv(["path", "terminal_wealth", "value", "jumps", "bankrupt"], rows)
    mean, se = sim._mean_stderr(vals[0], config.antithetic)
    est = sim.ValueEstimate(mean, se, sim.value_benchmark(prefs, K, config.x0, config.horizon))
    doc = {
        "estimate": est.estimate,
        "stderr": est.stderr,
        "benchmark": est.benchmark,
        "z_score": est.z_score,
        "K": K,
        "paths": config.paths,
        "horizon": config.horizon,
        "seed": int(config.seed),
        "bankruptcies": int(bank[0].sum()),
        "mean_jumps": float(counts.mean()),
        "terminal_wealth_mean": float(terms[0].mean()),
    }
    return dumps(doc) + "\n"


def cmd_decompose(cfg: dict, fmt: str) -> str:
    market = build_market(cfg["market"])
    if isinstance(market, RawMarket):
        return dumps({"sigma": market.sigma_matrix, "invariance_residual": invariance_residual(market.sigma_matrix, 1)}) + "\n"
    d = decompose_sigma(market)
    kappa = list(d.kappa) if isinstance(d.kappa, tuple) else d.kappa
    return dumps({"sigma": d.sigma, "sigma_bar": d.sigma_bar, "sigma_perp": d.sigma_perp, "kappa": kappa}) + "\n"


COMMANDS = {
    "solve": (cmd_solve, ("json", "csv")),
    "statics": (cmd_statics, ("json",)),
    "sweep": (cmd_sweep, ("csv", "json")),
    "simulate": (cmd_simulate, ("json", "csv")),
    "decompose": (cmd_decompose, ("json",)),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jumpfolio", description="Optimal portfolios under jump risk")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), help="output format")
        p.add_argument("--seed", type=int, help="override the simulation seed")
    return parser


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgError(message)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    parser.__class__ = _Parser
    for action in parser._subparsers._group_actions:
        for p in action.choices.values():
            p.__class__ = _Parser
    try:
        args = parser.parse_args(argv)
    except _ArgError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    func, formats = COMMANDS[args.command]
    fmt = args.format or formats[0]
    try:
        if fmt not in formats:
            raise ConfigError(f"--format {fmt} is not available for {args.command}")
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config)
        text = func(cfg, fmt, args.seed) if args.command == "simulate" else func(cfg, fmt)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: ConfigError: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (JumpfolioError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except Exception as exc:  # noqa: BLE001  never surface a traceback to the shell
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
