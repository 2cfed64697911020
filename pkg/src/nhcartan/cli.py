"""Command-line runner: ``simulate``, ``invariant``, ``check`` and ``list-models``.

Exit codes: 0 success, 1 self-check failure, 2 configuration error,
3 numerical failure, 4 invariant threshold violated.
"""

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import zoo
from .checks import run_checks
from .constraints import complete_eta, constraint_residual
from .dynamics import (HamiltonRHS, LagrangeRHS, hamiltonian_reduced, legendre_invert,
                       reduced_momenta)
from .errors import ConfigError, NHError, UnknownModel, InvalidParameter
from .frame import eta_from_velocity, velocity_from_eta
from .integrate import IntegratorConfig, integrate
from .invariants import drift_report, harmonic_loop

SCHEMA_VERSION = "nhcartan-scenario/1"

_vec = {"type": "array", "items": {"type": "number"}, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "model", "horizon"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "model": {
            "type": "object", "additionalProperties": False, "required": ["name"],
            "properties": {"name": {"type": "string"}, "params": {"type": "object"}},
        },
        "initial": {
            "type": "object", "additionalProperties": False,
            "properties": {"t0": {"type": "number"}, "x": _vec, "eta": _vec, "ystar": _vec},
            "not": {"required": ["eta", "ystar"]},
        },
        "formulation": {"enum": ["lagrange", "hamilton"]},
        "integrator": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "method": {"enum": ["rk4", "rk45"]},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "rtol": {"type": "number", "exclusiveMinimum": 0},
                "atol": {"type": "number", "exclusiveMinimum": 0},
                "max_steps": {"type": "integer", "minimum": 1},
                "sample_interval": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "loop": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "t0": {"type": "number"},
                "x": _vec, "ystar": _vec,
                "x_cos": _vec, "x_sin": _vec, "y_cos": _vec, "y_sin": _vec,
                "t_cos": {"type": "number"}, "t_sin": {"type": "number"},
                "N": {"type": "integer", "minimum": 8},
                "slides": {"type": "integer", "minimum": 1},
                "derivative": {"enum": ["fd4", "fft"]},
                "convergence": {"type": "boolean"},
                "taus": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object", "additionalProperties": False, "required": ["label"],
                        "properties": {
                            "label": {"type": "string"},
                            "base": {"type": "number", "minimum": 0},
                            "amplitude": {"type": "number"},
                        },
                    },
                },
            },
        },
        "thresholds": {
            "type": "object", "additionalProperties": False,
            "properties": {"max_drift": {"type": "number"}, "max_drift_I1": {"type": "number"}},
        },
        "outputs": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
            },
        },
    },
}


class _Exit(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {path}: {where}: {exc.message}") from exc
    return cfg


def config_hash(cfg):
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _model(cfg):
    try:
        return zoo.get_model(cfg["model"]["name"], cfg["model"].get("params"))
    except (UnknownModel, InvalidParameter) as exc:
        raise ConfigError(str(exc)) from exc


def _integrator(cfg):
    try:
        return IntegratorConfig(**cfg.get("integrator", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"integrator: {exc}") from exc


def _vector(values, size, what):
    v = np.asarray(values, dtype=float)
    if v.shape != (size,):
        raise ConfigError(f"{what} needs {size} entries, got {v.size}")
    return v


def _initial(desc, cfg):
    ini = cfg.get("initial", {})
    t0 = float(ini.get("t0", 0.0))
    x0 = _vector(ini["x"], desc.n, "initial.x") if "x" in ini else desc.default_x
    model = desc.lagrangian
    if "ystar" in ini:
        y0 = _vector(ini["ystar"], desc.m, "initial.ystar")
        eta0 = legendre_invert(model, x0, y0, t0)
    else:
        eta0 = _vector(ini["eta"], desc.m, "initial.eta") if "eta" in ini else desc.default_eta
        y0 = reduced_momenta(model, eta0, x0, t0)
    return t0, x0, eta0, y0


def _outputs(cfg, override):
    out = cfg.get("outputs", {})
    d = Path(override or out.get("directory", "."))
    d.mkdir(parents=True, exist_ok=True)
    return d, set(out.get("formats", ["csv", "json"]))


def _fmt(v):
    if v is None:
        return ""
    return repr(float(v))


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in r])


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(path, out_dir=None):
    cfg = load_config(path)
    desc = _model(cfg)
    icfg = _integrator(cfg)
    model = desc.lagrangian
    n, m = desc.n, desc.m
    t0, x0, eta0, y0 = _initial(desc, cfg)
    t1 = t0 + float(cfg["horizon"])
    form = cfg.get("formulation", "lagrange")
    if form == "hamilton":
        tr = integrate(HamiltonRHS(model), np.r_[x0, y0], t0, t1, icfg)
        x, y = tr.y[:, :n], tr.y[:, n:]
        eta = legendre_invert(model, x, y, tr.t)
    else:
        tr = integrate(LagrangeRHS(model), np.r_[x0, eta0], t0, t1, icfg)
        x, eta = tr.y[:, :n], tr.y[:, n:]
        y = reduced_momenta(model, eta, x, tr.t)
    H = hamiltonian_reduced(model, x, y, tr.t, eta_i=eta)
    # constraint residual of the parameters recovered from the reconstructed velocity
    full = complete_eta(model.cs, eta, x, tr.t)
    recovered = eta_from_velocity(desc.frame, x, velocity_from_eta(desc.frame, x, full, tr.t), tr.t)
    cres = constraint_residual(model.cs, recovered, x, tr.t)

    d, formats = _outputs(cfg, out_dir)
    files = []
    if "csv" in formats:
        header = (["t"] + [f"x_{i + 1}" for i in range(n)] + [f"eta_{j + 1}" for j in range(m)]
                  + [f"ystar_{j + 1}" for j in range(m)] + ["Hstar"]
                  + [f"constraint_residual_{a + 1}" for a in range(n - m)])
        rows = np.column_stack([tr.t, x, eta, y, H, cres])
        _write_csv(d / "trajectory.csv", header, rows.tolist())
        files.append("trajectory.csv")
    meta = {
        "schema": SCHEMA_VERSION, "command": "simulate", "model": desc.name,
        "parameters": _jsonable(desc.parameters), "formulation": form,
        "config_hash": config_hash(cfg), "steps": tr.stats, "samples": int(tr.t.size),
        "max_constraint_residual": float(np.max(cres, initial=0.0)),
        "Hstar_drift": float(np.max(np.abs(H - H[0]))), "files": files + ["run.json"],
    }
    _write_json(d / "run.json", meta)
    return 0


def _jsonable(params):
    return {k: (list(v) if isinstance(v, (tuple, list, np.ndarray)) else v) for k, v in params.items()}


def _tau(spec):
    base = float(spec.get("base", 1.0))
    amp = float(spec.get("amplitude", 0.0))
    if base - abs(amp) < 0:
        raise ConfigError(f"tau {spec['label']!r} becomes negative")
    return lambda s: base + amp * np.sin(2 * np.pi * s)


def cmd_invariant(path, out_dir=None):
    cfg = load_config(path)
    if "loop" not in cfg:
        raise ConfigError("invariant runs need a 'loop' section")
    desc = _model(cfg)
    icfg = _integrator(cfg)
    model = desc.lagrangian
    lp = cfg["loop"]
    t0, x0, _, y0 = _initial(desc, cfg)
    t0 = float(lp.get("t0", t0))
    cx = _vector(lp["x"], desc.n, "loop.x") if "x" in lp else x0
    cy = _vector(lp["ystar"], desc.m, "loop.ystar") if "ystar" in lp else y0
    amps = {k: _vector(lp[k], desc.n if k.startswith("x") else desc.m, f"loop.{k}")
            for k in ("x_cos", "x_sin", "y_cos", "y_sin") if k in lp}
    N = int(lp.get("N", 128))
    loop = harmonic_loop(t0, cx, cy, t_cos=float(lp.get("t_cos", 0.0)), t_sin=float(lp.get("t_sin", 0.0)),
                         samples=N, **amps)
    horizon = float(cfg["horizon"])
    taus_cfg = lp.get("taus", [{"label": "constant", "base": horizon}])
    taus = {t["label"]: _tau(t) for t in taus_cfg}
    grid = np.linspace(0.0, 1.0, int(lp.get("slides", 10)) + 1)
    conv = bool(lp.get("convergence", True))
    Ns = sorted({max(8, N // 4), max(8, N // 2), N}) if conv else None
    rep = drift_report(loop, model, icfg, taus, grid, Ns=Ns, method=lp.get("derivative", "fd4"))
    if rep["errors"]:
        raise _Exit(3, "; ".join(f"tau {e['tau']}: {e['error']}" for e in rep["errors"]))

    d, formats = _outputs(cfg, out_dir)
    files = []
    if "csv" in formats:
        _write_csv(d / "invariant_drift.csv", ["slide", "tau", "sigma", "I", "I1", "drift", "drift_I1"],
                   [[str(r["slide"]), r["tau"], r["sigma"], r["I"], r["I1"], r["drift"], r["drift_I1"]]
                    for r in rep["rows"]])
        files.append("invariant_drift.csv")
        if Ns:
            _write_csv(d / "convergence.csv", ["N", "max_drift"],
                       [[str(c["N"]), c["max_drift"]] for c in rep["convergence_N"]])
            files.append("convergence.csv")
    th = cfg.get("thresholds", {})
    d1 = [r["drift_I1"] for r in rep["rows"] if r["drift_I1"] is not None]
    max_d1 = max(d1) if d1 else None
    violations = []
    if "max_drift" in th and not rep["max_drift"] <= th["max_drift"]:
        violations.append(f"max drift of I {rep['max_drift']:.3e} > {th['max_drift']:.3e}")
    if "max_drift_I1" in th and max_d1 is not None and not max_d1 <= th["max_drift_I1"]:
        violations.append(f"max drift of I1 {max_d1:.3e} > {th['max_drift_I1']:.3e}")
    meta = {
        "schema": SCHEMA_VERSION, "command": "invariant", "model": desc.name,
        "parameters": _jsonable(desc.parameters), "config_hash": config_hash(cfg),
        "I0": rep["I0"], "I1_0": rep["I1_0"], "max_drift": rep["max_drift"], "max_drift_I1": max_d1,
        "convergence_N": rep.get("convergence_N"), "thresholds": th, "violations": violations,
        "files": files + ["run.json"],
    }
    _write_json(d / "run.json", meta)
    print(f"{desc.name}: I0 = {rep['I0']!r}, max drift = {rep['max_drift']:.3e}"
          + ("" if max_d1 is None else f", I1 max drift = {max_d1:.3e}"))
    if violations:
        raise _Exit(4, "; ".join(violations))
    return 0


def cmd_check(model=None, break_astar=False, as_json=False):
    if model is not None and model not in zoo.model_names():
        raise ConfigError(f"unknown model {model!r}")
    results = run_checks([model] if model else None, break_astar)
    failed = [r for r in results if r.passed is False]
    if as_json:
        print(json.dumps([r.as_dict() for r in results], indent=2))
    else:
        for r in results:
            tag = {True: "PASS", False: "FAIL", None: "INFO"}[r.passed]
            print(f"{tag}  {r.model:<30} {r.check:<34} {r.value:11.3e}  (limit {r.threshold:.1e})  {r.note}")
        print(f"{len(results) - len(failed)} of {len(results)} rows pass"
              + (" (ablation: A* term removed)" if break_astar else ""))
    return 1 if failed else 0


def cmd_list_models(as_json=False):
    rows = []
    for name in zoo.model_names():
        d = zoo.get_model(name)
        rows.append({"name": name, "n": d.n, "m": d.m, "constraint": d.constraint_type,
                     "oracles": d.oracles, "defaults": _jsonable(zoo.model_defaults(name))})
    if as_json:
        print(json.dumps(rows, indent=2))
    else:
        for r in rows:
            defaults = ", ".join(f"{k}={v}" for k, v in r["defaults"].items())
            print(f"{r['name']:<30} n={r['n']} m={r['m']} constraint={r['constraint']:<10} "
                  f"oracles={','.join(r['oracles']) or 'none':<16} {defaults}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="nhcartan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="integrate one trajectory")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (overrides the config)")
    s = sub.add_parser("invariant", help="evaluate loop integrals along a tube")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (overrides the config)")
    s = sub.add_parser("check", help="run the self-check suite")
    s.add_argument("--model")
    s.add_argument("--break-astar", action="store_true", help="drop the A* term (ablation)")
    s.add_argument("--json", action="store_true")
    s = sub.add_parser("list-models", help="show the model registry")
    s.add_argument("--json", action="store_true")
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out)
        if args.command == "invariant":
            return cmd_invariant(args.config, args.out)
        if args.command == "check":
            return cmd_check(args.model, args.break_astar, args.json)
        return cmd_list_models(args.json)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _Exit as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except NHError as exc:
        print(f"numerical failure in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
