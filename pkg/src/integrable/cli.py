"""Batch front end: run a named experiment from a JSON config and write artifacts plus report.json.

Exit codes: 0 when every residual passes, 2 when some residual fails, 1 on a
usage, config or runtime error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from typing import Any, Callable, Dict, List, Optional, Tuple

import jsonschema
import numpy as np

from . import birkhoff, dressing, elliptic, geometry, jetcalc, laxflow
from .algebra import ContextError, get_context

COMMANDS = ("compute-q", "flow-rhs", "dress", "goursat", "finite-type", "verify", "extract")

# every pass/fail bar lives here; a config's "tolerances" section overrides entries
DEFAULT_TOLERANCES: Dict[str, float] = {
    "symbolic": 0.0,
    "pde": 1e-4,
    "flatness": 1e-3,
    "reality": 1e-8,
    "projection": 1e-10,
    "reconstruction": 1e-8,
    "axes": 1e-6,
    "spectrum": 1e-6,
    "cross_validation": 1e-3,
    "isospectral": 1e-6,
    "harmonic": 1e-5,
    "normalized_system": 1e-5,
    "primitive": 1e-5,
    "gram": 1e-6,
    "cartan": 1e-8,
}

# ---------------------------------------------------------------------------
# schema

_NUMBER = {"type": "number"}
_COMPLEX = {"oneOf": [_NUMBER, {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}]}
_VECTOR = {"type": "array", "items": _COMPLEX, "minItems": 1}
_MATRIX = {"type": "array", "items": _VECTOR, "minItems": 1}
_AXIS = {"type": "object", "additionalProperties": False, "required": ["n"],
         "properties": {"lo": _NUMBER, "hi": _NUMBER, "n": {"type": "integer", "minimum": 5}}}
_GRID = {"oneOf": [_AXIS, {"type": "array", "items": _AXIS, "minItems": 1}]}
_ELEMENT = {"type": "object", "additionalProperties": False, "required": ["family", "pole", "vector"],
            "properties": {"family": {"enum": list(dressing.FAMILIES) + ["f", "g", "h"]},
                           "pole": _COMPLEX, "vector": _VECTOR,
                           "reality": {"enum": list(dressing.REALITY_TAGS)}}}
_DRESS_PARAMS = {
    "type": "object", "additionalProperties": False, "required": ["kind"],
    "properties": {
        "kind": {"enum": ["flow", "minus-one", "ntuple"]},
        "j": {"type": "integer", "minimum": 1, "maximum": 6},
        "b": _MATRIX,
        "grid": _GRID,
        "elements": {"type": "array", "items": _ELEMENT},
        "tzitzeica": {"type": "object", "additionalProperties": False, "required": ["mu", "a0"],
                      "properties": {"mu": _NUMBER, "a0": {"type": "array", "items": _NUMBER,
                                                             "minItems": 3, "maxItems": 3}}},
    },
}
PARAM_SCHEMAS: Dict[str, dict] = {
    "compute-q": {"type": "object", "additionalProperties": False, "required": ["j"],
                  "properties": {"j": {"type": "integer", "minimum": 1, "maximum": 6}, "b": _MATRIX}},
    "dress": _DRESS_PARAMS,
    "goursat": {
        "type": "object", "additionalProperties": False, "required": ["source"],
        "properties": {
            "grid": _AXIS,
            "N": {"type": "integer", "minimum": 8},
            "K": {"type": "integer", "minimum": 2},
            "source": {"oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["soliton"],
                 "properties": {"soliton": _ELEMENT}},
                {"type": "object", "additionalProperties": False, "required": ["xi", "eta"],
                 "properties": {"xi": {"type": "array", "items": _MATRIX},
                                "eta": {"type": "array", "items": _MATRIX}}},
            ]},
        },
    },
    "finite-type": {
        "type": "object", "additionalProperties": False, "required": ["V"],
        "properties": {
            "m": {"type": "integer", "minimum": 1},
            "d": {"type": "integer", "minimum": 1},
            "V": {"type": "object", "patternProperties": {"^-?[0-9]+$": _MATRIX}, "additionalProperties": False},
            "grid": _GRID,
        },
    },
    "verify": {"type": "object", "additionalProperties": False, "required": ["input", "equation"],
               "properties": {"input": {"type": "string"},
                              "equation": {"enum": list(laxflow.PDE_TAGS)},
                              "j": {"type": "integer", "minimum": 1}}},
    "extract": {"type": "object", "additionalProperties": False, "required": ["object", "source"],
                "properties": {"object": {"enum": ["curved-flat", "cartan", "harmonic"]},
                               "source": _DRESS_PARAMS}},
}
PARAM_SCHEMAS["flow-rhs"] = PARAM_SCHEMAS["compute-q"]

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command", "context"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "context": {"type": "string"},
        "output": {"type": "string"},
        "seed": {"type": "integer"},
        "accuracy": {"enum": [2, 4]},
        "tolerances": {"type": "object", "additionalProperties": False,
                       "properties": {k: {"type": "number", "minimum": 0} for k in DEFAULT_TOLERANCES}},
        "params": {"type": "object"},
    },
}


class ConfigError(ValueError):
    pass


def validate_config(config: Any) -> dict:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
        jsonschema.validate(config.get("params", {}), PARAM_SCHEMAS[config["command"]])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    return config


# ---------------------------------------------------------------------------
# deterministic JSON

def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def dumps(obj: Any, indent: int = 0) -> str:
    """JSON text with floats at 17 significant digits and sorted keys."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return dumps({"re": float(obj.real), "im": float(obj.imag)}, indent)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent)
    return json.dumps(obj)


def digest(config: dict, seed: Optional[int]) -> str:
    canon = json.dumps({"config": config, "seed": seed}, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# config decoding

def _complex(v) -> complex:
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def _matrix(rows) -> np.ndarray:
    M = np.array([[_complex(v) for v in row] for row in rows], dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError("matrices must be square")
    return M


def _axes(spec, count: int, lo: float = -1.0, hi: float = 1.0) -> Tuple[np.ndarray, ...]:
    if spec is None:
        spec = {"n": 65}
    specs = spec if isinstance(spec, list) else [spec] * count
    if len(specs) != count:
        raise ConfigError(f"expected {count} grid axes, got {len(specs)}")
    return tuple(np.linspace(s.get("lo", lo), s.get("hi", hi), s["n"]) for s in specs)


def _element(spec) -> dressing.SimplePoleDressing:
    V = np.array([_complex(v) for v in spec["vector"]], dtype=complex)
    return dressing.SimplePoleDressing(spec["family"], _complex(spec["pole"]), V, spec.get("reality"))


class Run:
    """Bookkeeping for one experiment: residuals, tolerance checks and written artifacts."""

    def __init__(self, config: dict, out: str, scale: float, seed: Optional[int]):
        self.config = config
        self.out = out
        self.seed = seed
        self.accuracy = int(config.get("accuracy", 4))
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(config.get("tolerances", {}))
        self.tolerances = {k: v * scale for k, v in tol.items()}
        self.residuals: Dict[str, float] = {}
        self.passes: Dict[str, bool] = {}
        self.artifacts: List[str] = []

    def check(self, name: str, value: float, bar: str) -> None:
        value = float(value)
        self.residuals[name] = value
        self.passes[name] = bool(math.isfinite(value) and value <= self.tolerances[bar])

    def write(self, name: str, text: str) -> None:
        os.makedirs(self.out, exist_ok=True)
        with open(os.path.join(self.out, name), "w") as fh:
            fh.write(text)
        self.artifacts.append(name)

    def write_grid(self, stem: str, grid: laxflow.SolutionGrid) -> None:
        self.write(stem + ".json", dumps(grid.to_dict()) + "\n")
        os.makedirs(self.out, exist_ok=True)
        grid.to_csv(os.path.join(self.out, stem + ".csv"))
        self.artifacts.append(stem + ".csv")


# ---------------------------------------------------------------------------
# commands

def _cmd_symbolic(run: Run, ctx, params, rhs: bool) -> None:
    b = _matrix(params["b"]) if "b" in params else None
    j = params["j"]
    expr = jetcalc.flow_rhs(ctx, b, j) if rhs else jetcalc.compute_Q(ctx, b, j)
    names = jetcalc.default_names(ctx)
    payload = {"context": ctx.name, "j": j, "kind": "flow_rhs" if rhs else "Q",
               "expression": expr.to_tree(names)}
    run.write("flow_rhs.json" if rhs else "q.json", dumps(payload) + "\n")
    res = jetcalc.recursion_residual(ctx, b, j)
    nonzero = sum(1 for row in res.entries for p in row if p.terms)
    run.check("recursion_identity_nonzero_entries", nonzero, "symbolic")


def _pde_tag(ctx, kind: str, j: int) -> str:
    if kind == "flow":
        if ctx.name == "sl2-su2" and j in (2, 3):
            return "nls" if j == 2 else "mkdv"
        return "flow"
    if kind == "minus-one":
        return {"sl2-su2/so2": "sge", "sl3-tzitzeica": "tzitzeica"}.get(ctx.name, "minus-one")
    return "grassmann" if ctx.name.endswith("grassmann") else "uu0-system"


def _build_solution(ctx, params):
    kind = params["kind"]
    j = params.get("j", 2)
    b = _matrix(params["b"]) if "b" in params else None
    count = len(ctx.flats) if kind == "ntuple" else 2
    axes = _axes(params.get("grid"), count)
    base = dressing.vacuum_solution(ctx, kind, axes, b=b, j=j)
    sol = base
    if "tzitzeica" in params:
        tz = params["tzitzeica"]
        sol = dressing.tzitzeica_dress(sol, tz["mu"], np.array(tz["a0"], dtype=complex))
    els = [_element(e) for e in params.get("elements", [])]
    if els:
        sol = dressing.multi_dress(els, sol)
    return sol, els, kind, j, b


def _connection(ctx, kind, j, b, grid):
    if kind == "flow":
        return laxflow.assemble_lax(ctx, ctx.b if b is None else b, j, grid)
    if kind == "minus-one":
        return laxflow.assemble_minus_one(ctx, grid)
    return laxflow.assemble_ntuple(ctx, grid)


def _cmd_dress(run: Run, ctx, params) -> None:
    sol, els, kind, j, b = _build_solution(ctx, params)
    grid = sol.grid
    run.write_grid("fields", grid)
    acc = run.accuracy
    tag = _pde_tag(ctx, kind, j)
    extra = {"j": j} if tag == "flow" else {}
    if tag == "flow" and b is not None:
        extra["b"] = b
    run.check(f"pde_{tag}", laxflow.pde_residual(tag, grid, ctx, accuracy=acc, **extra), "pde")
    theta = _connection(ctx, kind, j, b, grid)
    run.check("flatness", laxflow.flatness_residual(theta, accuracy=acc), "flatness")
    for i, el in enumerate(els):
        run.check(f"element{i}_reality", el.reality_residual(ctx), "reality")
    if isinstance(sol, dressing.DressedSolution) and sol.projection is not None and els:
        run.check("projection_defect", dressing.projection_defect(sol.projection), "projection")


def _table(axis: np.ndarray, values: np.ndarray) -> Callable[[float], np.ndarray]:
    h = axis[1] - axis[0]

    def at(s: float) -> np.ndarray:
        i = int(round((s - axis[0]) / h))
        if not 0 <= i < axis.size or abs(axis[i] - s) > 1e-9 * max(1.0, abs(s)):
            raise ValueError(f"{s} is not a tabulated node")
        return values[i]
    return at


def _cmd_goursat(run: Run, ctx, params) -> None:
    g = params.get("grid", {"n": 33})
    x = np.linspace(0.0, g.get("hi", 1.0), g["n"])
    if g.get("lo", 0.0) != 0.0:
        raise ConfigError("goursat grids start at 0")
    N = params.get("N", birkhoff.DEFAULT_N)
    K = params.get("K", birkhoff.DEFAULT_K)
    src = params["source"]
    reference = None
    if "soliton" in src:
        # tabulate the dressed soliton at half spacing so that RK4 midpoints are exact nodes
        fine = np.linspace(0.0, x[-1], 2 * x.size - 1)
        sol = dressing.dress(_element(src["soliton"]), dressing.vacuum_solution(ctx, "minus-one", (fine, fine)))
        u, v = sol.grid["u"], sol.grid["v"]
        xi, eta = _table(fine, u[:, 0]), _table(fine, v[0, :])
        reference = (u[::2, ::2], v[::2, ::2])
    else:
        xi = np.array([_matrix(m) for m in src["xi"]])
        eta = np.array([_matrix(m) for m in src["eta"]])
    res = birkhoff.goursat_solve(ctx, xi, eta, x, x, N=N, K=K)
    grid = res.grid(ctx.name)
    run.write_grid("fields", grid)
    xi_nodes = birkhoff._as_callable(xi, x)(x)
    eta_nodes = birkhoff._as_callable(eta, x)(x)
    run.check("axes_x", np.max(np.abs(res.u[:, 0] - xi_nodes)), "axes")
    run.check("axes_t", np.max(np.abs(res.v[0, :] - eta_nodes)), "axes")
    run.check("pde_minus_one", laxflow.pde_residual("minus-one", grid, ctx, accuracy=run.accuracy), "pde")
    spec = max(birkhoff._spectrum_defect(res.v[idx], ctx.b) for idx in np.ndindex(res.v.shape[:2]))
    run.check("spectrum_drift", spec, "spectrum")
    run.check("factor_reconstruction", res.max_reconstruction, "reconstruction")
    if reference is not None:
        cross = max(np.max(np.abs(res.u - reference[0])), np.max(np.abs(res.v - reference[1])))
        run.check("cross_validation", cross, "cross_validation")


def _cmd_finite_type(run: Run, ctx, params) -> None:
    m = params.get("m", 1)
    d = params.get("d", m)
    ec = elliptic.EllipticContext(ctx, m, d)
    V = birkhoff.LaurentLoop.from_terms({int(p): _matrix(M) for p, M in params["V"].items()})
    x, y = _axes(params.get("grid"), 2, -0.5, 0.5)
    lams = [-1.0]
    if ec.sigma is not None and ec.sigma.order > 2 and m == 1:
        lams = elliptic.primitive_lams(ec.sigma.order)
    state = elliptic.finite_type_integrate(ec, V, x, y, lams=lams)
    grid = state.solution_grid()
    run.write_grid("fields", grid)
    acc = run.accuracy
    run.check("isospectral_drift", elliptic.isospectral_drift(state, 0.7 + 0.2j), "isospectral")
    run.check("reality", elliptic.reality_defect(state), "reality")
    run.check("normalized_system", elliptic.gtau_residual(ec, grid, True, acc), "normalized_system")
    run.check("harmonic", elliptic.harmonic_residual(grid, ctx, acc), "harmonic")
    if len(lams) > 1:
        run.check("primitive", elliptic.primitive_defect(state), "primitive")


def _cmd_verify(run: Run, ctx, params) -> None:
    with open(params["input"]) as fh:
        grid = laxflow.SolutionGrid.from_dict(json.load(fh))
    extra = {"j": params["j"]} if "j" in params else {}
    tag = params["equation"]
    run.check(f"pde_{tag}", laxflow.pde_residual(tag, grid, ctx, accuracy=run.accuracy, **extra), "pde")


def _cmd_extract(run: Run, ctx, params) -> None:
    sol, _, _, _, _ = _build_solution(ctx, params["source"])
    what = params["object"]
    if what == "curved-flat":
        im = geometry.curved_flat_tangent(sol.frame, ctx, accuracy=run.accuracy)
        run.check("gram_drift", im.diagnostics["gram_drift"], "gram")
    elif what == "cartan":
        im = geometry.cartan_map(sol.frame, ctx, accuracy=run.accuracy)
        if "cartan_defect" in im.diagnostics:
            run.check("cartan_defect", im.diagnostics["cartan_defect"], "cartan")
    else:
        im = geometry.harmonic_from_minus1(sol.frame, ctx, accuracy=run.accuracy)
        run.check("harmonic", im.diagnostics["harmonic_residual"], "pde")
        run.check("spectrum", im.diagnostics["spectrum_defect"], "spectrum")
    if "unitarity_defect" in im.diagnostics:
        run.check("unitarity", im.diagnostics["unitarity_defect"], "cartan")
    os.makedirs(run.out, exist_ok=True)
    im.to_csv(os.path.join(run.out, "immersion.csv"))
    run.artifacts.append("immersion.csv")
    run.write("diagnostics.json", dumps(im.diagnostics) + "\n")


def _context_for(config: dict):
    name = config["context"]
    if config["command"] == "finite-type" and name == "sl3-eh":
        return elliptic.eh_context()
    try:
        return get_context(name)
    except ContextError as exc:
        raise ConfigError(str(exc)) from None


def execute(config: dict, out: str, seed: Optional[int] = None, tolerance_scale: float = 1.0) -> Tuple[int, dict]:
    """Validate and run one experiment; returns (exit status, report)."""
    validate_config(config)
    seed = config.get("seed") if seed is None else seed
    ctx = _context_for(config)
    params = config.get("params", {})
    run = Run(config, out, tolerance_scale, seed)
    if seed is not None:
        np.random.seed(seed)
    start = time.perf_counter()
    status = 0
    error = None
    cmd = config["command"]
    try:
        if cmd in ("compute-q", "flow-rhs"):
            _cmd_symbolic(run, ctx, params, rhs=(cmd == "flow-rhs"))
        elif cmd == "dress":
            _cmd_dress(run, ctx, params)
        elif cmd == "goursat":
            _cmd_goursat(run, ctx, params)
        elif cmd == "finite-type":
            _cmd_finite_type(run, ctx, params)
        elif cmd == "verify":
            _cmd_verify(run, ctx, params)
        else:
            _cmd_extract(run, ctx, params)
    except ConfigError:
        raise
    except Exception as exc:      # runtime failure after validation: flag partial artifacts
        error = f"{type(exc).__name__}: {exc}"
        status = 1
    report = {
        "command": cmd,
        "context": config["context"],
        "inputs_digest": digest(config, seed),
        "tolerances": {k: run.tolerances[k] for k in sorted(run.tolerances)},
        "residuals": run.residuals,
        "pass": run.passes,
        "all_pass": bool(run.passes) and all(run.passes.values()) and error is None,
        "artifacts": sorted(run.artifacts),
        "wall_time": time.perf_counter() - start,
    }
    if error is not None:
        report["error"] = error
        report["partial"] = bool(run.artifacts)
    elif not report["all_pass"]:
        status = 2
    run.write("report.json", dumps(report) + "\n")
    return status, report


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def main(argv: Optional[List[str]] = None) -> int:
    parser = _Parser(prog="integrable", description="Run an integrable-systems experiment from a JSON config.")
    parser.add_argument("--config", required=True, help="path to the experiment config (JSON)")
    parser.add_argument("--out", help="output directory (overrides the config's 'output')")
    parser.add_argument("--seed", type=int, help="seed for randomized parts")
    parser.add_argument("--tolerance-scale", type=float, default=1.0, help="multiply every tolerance")
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            config = json.load(fh)
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
        validate_config(config)
        if args.tolerance_scale <= 0:
            raise ConfigError("--tolerance-scale must be positive")
        out = args.out or config.get("output") or "out"
        status, report = execute(config, out, args.seed, args.tolerance_scale)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"integrable: {exc}", file=sys.stderr)
        return 1
    verdict = "error" if "error" in report else ("pass" if status == 0 else "fail")
    print(f"{report['command']}: {verdict} ({len(report['residuals'])} residuals) -> {os.path.join(out, 'report.json')}")
    if "error" in report:
        print(report["error"], file=sys.stderr)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
