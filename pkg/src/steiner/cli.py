"""Command-line interface: solve instances, run oracles, check gradients.

Instances are JSON files:

    {
      "dimension": 2,
      "anchors": [[0, 0], [4, 0], [0, 3]],
      "potential": {"kind": "euclidean"},
      "testing_plan": {"strategy": "grid", "count": 16, "seed": 0},
      "flow": {"grad_tol": 1e-8}
    }

Results are JSON with a fixed key order and floats printed at 17
significant digits, so identical inputs produce byte-identical outputs.
Traces export to CSV for plotting. Exit codes: 0 success, 1 input or
configuration error, 2 no critical point found.
"""

import argparse
import json
import os
import sys

import numpy as np

from .core import AnchorSet, Objective, finite_difference_gradient, max_relative_gradient_error
from .critical_set import (TestingPlan, default_domain_box, enumerate_critical_points)
from .errors import ConfigError, InputError, NoCriticalPointError, NumericalError, SteinerError
from .flow import FlowConfig
from .oracles import centroid, grid_search, weiszfeld
from .potentials import PotentialSpec

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_CRITICAL_POINT = 2

GRADCHECK_TOLERANCE = 1e-5

# Fault-injection hook so the failing path of gradcheck stays testable.
CORRUPT_GRADIENT_ENV = "STEINER_GRADCHECK_CORRUPT"


# ---------------------------------------------------------------------------
# Canonical JSON: insertion-ordered keys, floats at 17 significant digits.

def _fmt_json(value, indent=0):
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        inner = ",\n".join(
            f"{pad}  {json.dumps(str(k))}: {_fmt_json(v, indent + 1)}"
            for k, v in value.items())
        return "{\n" + inner + "\n" + pad + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        items = [_fmt_json(v, indent) for v in value]
        return "[" + ", ".join(items) + "]"
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if value is None:
        return "null"
    return json.dumps(value)


def dumps_result(data: dict) -> str:
    return _fmt_json(data) + "\n"


def _write_json(path, data: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_result(data))


# ---------------------------------------------------------------------------
# Instance files.

class Instance:
    """Parsed instance file: anchors plus solver configuration."""

    def __init__(self, dimension, anchors, potential, testing_plan=None, flow=None):
        self.dimension = dimension
        self.anchors = anchors
        self.potential = potential
        self.testing_plan = testing_plan
        self.flow = flow


def _expect_object(value, field):
    if not isinstance(value, dict):
        raise InputError(f"{field}: expected a JSON object")
    return value


def _expect_number(value, field):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"{field}: expected a number")
    if not np.isfinite(value):
        raise InputError(f"{field}: not a finite number")
    return float(value)


def _expect_int(value, field):
    if isinstance(value, bool) or not isinstance(value, int):
        raise InputError(f"{field}: expected an integer")
    return value


def _reject_unknown(data, known, field):
    for key in data:
        if key not in known:
            raise InputError(f"{field}.{key}: unknown field")


def parse_instance(data) -> Instance:
    """Validate raw JSON data into an :class:`Instance`.

    Errors name the offending field, down to the anchor row index.
    """
    data = _expect_object(data, "instance")
    _reject_unknown(data, {"dimension", "anchors", "potential", "testing_plan", "flow"},
                    "instance")
    if "dimension" not in data:
        raise InputError("dimension: missing required field")
    dimension = _expect_int(data["dimension"], "dimension")
    if dimension < 1:
        raise InputError(f"dimension: must be >= 1, got {dimension}")

    if "anchors" not in data:
        raise InputError("anchors: missing required field")
    rows = data["anchors"]
    if not isinstance(rows, list) or not rows:
        raise InputError("anchors: expected a non-empty list of coordinate rows")
    parsed_rows = []
    for i, row in enumerate(rows):
        if not isinstance(row, list):
            raise InputError(f"anchors[{i}]: expected a coordinate list")
        if len(row) != dimension:
            raise InputError(
                f"anchors[{i}]: expected {dimension} coordinates, got {len(row)}")
        parsed_rows.append([_expect_number(c, f"anchors[{i}][{j}]")
                            for j, c in enumerate(row)])
    anchors = AnchorSet(parsed_rows)

    if "potential" not in data:
        raise InputError("potential: missing required field")
    pot = _expect_object(data["potential"], "potential")
    _reject_unknown(pot, {"kind", "p", "epsilon", "sigma", "weights"}, "potential")
    if "kind" not in pot:
        raise InputError("potential.kind: missing required field")
    if not isinstance(pot["kind"], str):
        raise InputError("potential.kind: expected a string")
    kwargs = {}
    for key in ("p", "epsilon", "sigma"):
        if key in pot:
            kwargs[key] = _expect_number(pot[key], f"potential.{key}")
    if "weights" in pot:
        w = pot["weights"]
        if not isinstance(w, list) or not w:
            raise InputError("potential.weights: expected a non-empty list")
        kwargs["weights"] = tuple(
            _expect_number(x, f"potential.weights[{j}]") for j, x in enumerate(w))
    potential = PotentialSpec(pot["kind"], **kwargs)

    plan = None
    if "testing_plan" in data and data["testing_plan"] is not None:
        tp = _expect_object(data["testing_plan"], "testing_plan")
        _reject_unknown(tp, {"strategy", "count", "domain_box", "seed"}, "testing_plan")
        plan_kwargs = {}
        if "strategy" in tp:
            if not isinstance(tp["strategy"], str):
                raise InputError("testing_plan.strategy: expected a string")
            plan_kwargs["strategy"] = tp["strategy"]
        if "count" in tp:
            plan_kwargs["count"] = _expect_int(tp["count"], "testing_plan.count")
        if "seed" in tp:
            plan_kwargs["seed"] = _expect_int(tp["seed"], "testing_plan.seed")
        if "domain_box" in tp and tp["domain_box"] is not None:
            box = tp["domain_box"]
            if not isinstance(box, list) or len(box) != dimension:
                raise InputError(
                    f"testing_plan.domain_box: expected {dimension} [lo, hi] pairs")
            parsed_box = []
            for k, pair in enumerate(box):
                if not isinstance(pair, list) or len(pair) != 2:
                    raise InputError(f"testing_plan.domain_box[{k}]: expected [lo, hi]")
                parsed_box.append((
                    _expect_number(pair[0], f"testing_plan.domain_box[{k}][0]"),
                    _expect_number(pair[1], f"testing_plan.domain_box[{k}][1]")))
            plan_kwargs["domain_box"] = tuple(parsed_box)
        plan = TestingPlan(**plan_kwargs)

    flow_cfg = None
    if "flow" in data and data["flow"] is not None:
        fl = _expect_object(data["flow"], "flow")
        fields = {"grad_tol", "max_steps", "initial_step", "armijo_c",
                  "backtrack_factor", "min_step"}
        _reject_unknown(fl, fields, "flow")
        flow_kwargs = {}
        for key in fields & set(fl):
            if key == "max_steps":
                flow_kwargs[key] = _expect_int(fl[key], "flow.max_steps")
            else:
                flow_kwargs[key] = _expect_number(fl[key], f"flow.{key}")
        flow_cfg = FlowConfig(**flow_kwargs)

    return Instance(dimension, anchors, potential, plan, flow_cfg)


def load_instance(path) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: malformed JSON: {exc}") from exc
    return parse_instance(data)


def serialize_instance(inst: Instance) -> dict:
    """Inverse of :func:`parse_instance` on semantic content."""
    pot = {"kind": inst.potential.kind}
    if inst.potential.kind == "p_norm":
        pot["p"] = inst.potential.p
    if inst.potential.epsilon is not None:
        pot["epsilon"] = inst.potential.epsilon
    if inst.potential.kind == "gaussian_well":
        pot["sigma"] = inst.potential.sigma
    if inst.potential.weights is not None:
        pot["weights"] = list(inst.potential.weights)
    data = {
        "dimension": inst.dimension,
        "anchors": [list(row) for row in inst.anchors.points],
        "potential": pot,
    }
    if inst.testing_plan is not None:
        tp = {"strategy": inst.testing_plan.strategy, "count": inst.testing_plan.count,
              "seed": inst.testing_plan.seed}
        if inst.testing_plan.domain_box is not None:
            tp["domain_box"] = [list(pair) for pair in inst.testing_plan.domain_box]
        data["testing_plan"] = tp
    if inst.flow is not None:
        fc = inst.flow
        data["flow"] = {"grad_tol": fc.grad_tol, "max_steps": fc.max_steps,
                        "initial_step": fc.initial_step, "armijo_c": fc.armijo_c,
                        "backtrack_factor": fc.backtrack_factor, "min_step": fc.min_step}
    return data


# ---------------------------------------------------------------------------
# Shared command plumbing.

def _potential_echo(spec: PotentialSpec) -> dict:
    echo = {"kind": spec.kind}
    if spec.kind == "p_norm":
        echo["p"] = spec.p
    echo["epsilon"] = spec.epsilon
    if spec.kind == "gaussian_well":
        echo["sigma"] = spec.sigma
    if spec.weights is not None:
        echo["weights"] = list(spec.weights)
    return echo


def _critical_point_json(cp) -> dict:
    return {"location": list(cp.location), "value": cp.value,
            "grad_norm": cp.grad_norm, "basin_count": cp.basin_count,
            "negative_curvature": cp.negative_curvature}


def cmd_solve(args) -> int:
    inst = load_instance(args.input)
    obj = Objective(inst.anchors, inst.potential)

    plan = inst.testing_plan or TestingPlan()
    overrides = {}
    if args.strategy is not None:
        overrides["strategy"] = args.strategy
    if args.starts is not None:
        overrides["count"] = args.starts
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        plan = TestingPlan(**{**plan.__dict__, **overrides})
    if plan.domain_box is None:
        plan = TestingPlan(strategy=plan.strategy, count=plan.count,
                           domain_box=default_domain_box(obj.anchors), seed=plan.seed)

    cfg = inst.flow or FlowConfig()
    if args.grad_tol is not None:
        cfg = FlowConfig(**{**cfg.__dict__, "grad_tol": args.grad_tol})

    try:
        result = enumerate_critical_points(
            obj, plan, cfg, args.cluster_radius,
            keep_traces=args.trace is not None, threads=args.threads)
    except NoCriticalPointError as exc:
        _write_json(args.output, {"error": str(exc), "diagnostics": exc.diagnostics})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CRITICAL_POINT

    payload = {
        "steiner": {"location": list(result.steiner.location),
                    "value": result.steiner.value,
                    "grad_norm": result.steiner.grad_norm},
        "critical_set": [_critical_point_json(c) for c in result.critical_set],
        "diagnostics": result.diagnostics,
        "config_echo": {
            "dimension": obj.dimension,
            "n_anchors": obj.anchors.n,
            "potential": _potential_echo(obj.potential),
            "testing_plan": {"strategy": plan.strategy, "count": plan.count,
                             "domain_box": [list(p) for p in plan.domain_box],
                             "seed": plan.seed},
            "flow": {"grad_tol": cfg.grad_tol, "max_steps": cfg.max_steps,
                     "initial_step": cfg.initial_step, "armijo_c": cfg.armijo_c,
                     "backtrack_factor": cfg.backtrack_factor,
                     "min_step": cfg.min_step},
            "cluster_radius": args.cluster_radius,
            "threads": args.threads,
        },
    }
    _write_json(args.output, payload)
    if args.trace is not None:
        for k, tr in enumerate(result.traces):
            tr.write_csv(f"{args.trace}.{k}.csv")
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = load_instance(args.input)
    if args.method == "weiszfeld":
        weights = inst.potential.weights if inst.potential.kind == "weighted_euclidean" else None
        report = weiszfeld(inst.anchors, weights=weights, tol=args.tol,
                           max_iter=args.max_iter)
    elif args.method == "centroid":
        report = centroid(inst.anchors)
    else:  # grid
        obj = Objective(inst.anchors, inst.potential)
        if inst.testing_plan is not None and inst.testing_plan.domain_box is not None:
            box = inst.testing_plan.domain_box
        else:
            box = default_domain_box(inst.anchors)
        report = grid_search(obj, box, args.spacing)
    _write_json(args.output, {
        "method": report.method,
        "location": list(report.location),
        "value": report.value,
        "iterations": report.iterations,
        "converged": report.converged,
    })
    return EXIT_OK


def run_gradcheck(obj: Objective, box, samples: int, h: float, seed: int) -> dict:
    """Sample the box, keep points clear of the anchors, compare gradients."""
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    exclusion = 10.0 * (obj.potential.epsilon or 0.0)
    rng = np.random.default_rng(seed)
    points = []
    attempts = 0
    while len(points) < samples and attempts < 100 * samples:
        attempts += 1
        x = rng.uniform(lo, hi)
        if exclusion > 0.0:
            if np.min(np.linalg.norm(obj.anchors.points - x, axis=1)) < exclusion:
                continue
        points.append(x)
    if len(points) < samples:
        raise ConfigError(
            "gradcheck: could not sample enough points away from the anchors")
    points = np.array(points)

    if os.environ.get(CORRUPT_GRADIENT_ENV):
        max_err = 0.0
        for p in points:
            ga = obj.gradient(p)
            ga = ga + 1e-3 * (1.0 + np.linalg.norm(ga))  # injected fault
            gf = finite_difference_gradient(obj, p, h)
            denom = max(np.linalg.norm(ga), np.linalg.norm(gf), 1e-5)
            max_err = max(max_err, float(np.linalg.norm(ga - gf) / denom))
    else:
        max_err = max_relative_gradient_error(obj, points, h)

    return {
        "samples": samples,
        "h": h,
        "seed": seed,
        "max_rel_error": max_err,
        "tolerance": GRADCHECK_TOLERANCE,
        "pass": bool(max_err <= GRADCHECK_TOLERANCE),
    }


def cmd_gradcheck(args) -> int:
    inst = load_instance(args.input)
    if args.samples < 1:
        raise InputError(f"samples: must be >= 1, got {args.samples}")
    obj = Objective(inst.anchors, inst.potential)
    if inst.testing_plan is not None and inst.testing_plan.domain_box is not None:
        box = inst.testing_plan.domain_box
    else:
        box = default_domain_box(inst.anchors)
    h = args.h
    if h is None:
        lo, hi = np.array([b[0] for b in box]), np.array([b[1] for b in box])
        h = 1e-6 * float(np.linalg.norm(hi - lo))
    report = run_gradcheck(obj, box, args.samples, h, args.seed)
    _write_json(args.report, report)
    if not report["pass"]:
        print(f"gradcheck failed: max relative error {report['max_rel_error']:.3e} "
              f"> {GRADCHECK_TOLERANCE}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steiner",
        description="Minimize a sum of distance potentials to anchor points by "
                    "multi-start descent tracing, with independent oracles.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run the multi-start flow solver")
    p_solve.add_argument("--input", required=True, help="instance JSON file")
    p_solve.add_argument("--output", required=True, help="result JSON file")
    p_solve.add_argument("--trace", default=None, metavar="PREFIX",
                         help="write per-start trace CSVs to PREFIX.<k>.csv")
    p_solve.add_argument("--grad-tol", type=float, default=None, dest="grad_tol")
    p_solve.add_argument("--starts", type=int, default=None,
                         help="override the testing-point count")
    p_solve.add_argument("--strategy", default=None,
                         choices=["grid", "uniform_random", "anchors_jittered"])
    p_solve.add_argument("--seed", type=int, default=None)
    p_solve.add_argument("--cluster-radius", type=float, default=None,
                         dest="cluster_radius")
    p_solve.add_argument("--threads", type=int, default=1)
    p_solve.set_defaults(func=cmd_solve)

    p_oracle = sub.add_parser("oracle", help="run an independent reference solver")
    p_oracle.add_argument("method", choices=["weiszfeld", "centroid", "grid"])
    p_oracle.add_argument("--input", required=True)
    p_oracle.add_argument("--output", required=True)
    p_oracle.add_argument("--tol", type=float, default=1e-10)
    p_oracle.add_argument("--max-iter", type=int, default=10_000, dest="max_iter")
    p_oracle.add_argument("--spacing", type=float, default=0.01)
    p_oracle.set_defaults(func=cmd_oracle)

    p_grad = sub.add_parser("gradcheck",
                            help="compare analytic and finite-difference gradients")
    p_grad.add_argument("--input", required=True)
    p_grad.add_argument("--samples", type=int, default=1000)
    p_grad.add_argument("--h", type=float, default=None,
                        help="difference step (default: 1e-6 of the box diagonal)")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--report", required=True, help="report JSON file")
    p_grad.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NoCriticalPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CRITICAL_POINT
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CRITICAL_POINT


if __name__ == "__main__":
    sys.exit(main())
