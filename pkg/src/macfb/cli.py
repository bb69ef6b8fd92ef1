"""Command line front end.

Every subcommand reads one TOML config, performs a single experiment
stage, prints a canonical JSON document to stdout, and exits with:
0 = success, 2 = configuration or validation failure, 3 = a work cap
was exceeded, 4 = an invariant check found a deviation.

JSON output is deterministic byte for byte: fields appear in a fixed
order and floats are rendered with 17 significant digits.
"""

import argparse
import dataclasses
import math
import os
import sys
import tempfile

from . import capacity, config, costs, dp
from .errors import BudgetExceeded, ConfigError, MacfbError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_INVARIANT = 4


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------

def _json_fragments(obj, out: list):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            raise ValueError("non-finite value has no canonical JSON form")
        out.append(f"{obj:.17g}")
    elif isinstance(obj, str):
        out.append('"' + obj.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"')
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _json_fragments(v, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            _json_fragments(str(k), out)
            out.append(": ")
            _json_fragments(v, out)
        out.append("}")
    else:
        try:
            _json_fragments(obj.item(), out)  # numpy scalars
        except AttributeError:
            raise ValueError(f"cannot serialize {type(obj).__name__} to JSON")


def canonical_json(obj) -> str:
    """Insertion-ordered JSON with fixed float formatting."""
    out: list = []
    _json_fragments(obj, out)
    return "".join(out) + "\n"


def _atomic_write(path: str, text: str):
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(doc: dict, args, name: str):
    text = canonical_json(doc)
    sys.stdout.write(text)
    if args.out:
        _atomic_write(os.path.join(args.out, name), text)


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _load(args) -> config.ExperimentConfig:
    if not args.config:
        raise ConfigError("--config PATH is required")
    cfg = config.from_toml(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.cap_nodes is not None:
        cfg.node_cap = args.cap_nodes
    if args.rational:
        cfg.rational = True
    if args.log_base is not None:
        cfg.spec = dataclasses.replace(cfg.spec, log_base=args.log_base)
    return cfg.validate()


def _cost_functional(cfg) -> costs.CostFunctional:
    try:
        return costs.CostFunctional(cfg.objective, cfg.spec.log_base, cfg.weights)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _solve(cfg):
    ch = config.resolve_channel(cfg)
    tree = dp.build_reachable_tree(cfg.spec, ch, cfg.horizon, node_cap=cfg.node_cap)
    cost = None if cfg.objective == "error_probability" else _cost_functional(cfg)
    policy, annotation = dp.backward_dp(tree, cost)
    return ch, tree, cost, policy, annotation


def _action_doc(e) -> dict:
    return {"e1": list(e.e1.mapping), "e2": list(e.e2.mapping)}


def _require_lambda(cfg) -> capacity.LambdaWeights:
    if cfg.lam is None:
        raise ConfigError("this subcommand needs run.lambda = [l1, l2, l3] in the config")
    return cfg.lam


def _problem_doc(cfg) -> dict:
    s = cfg.spec
    return {
        "x1_size": s.x1_size, "x2_size": s.x2_size, "z_size": s.z_size,
        "m1": s.m1, "m2": s.m2, "log_base": s.log_base,
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args):
    cfg = _load(args)
    ch = config.resolve_channel(cfg)
    doc = {
        "command": "validate",
        "problem": _problem_doc(cfg),
        "stochastic": True,
        "rows": cfg.spec.x1_size * cfg.spec.x2_size,
        "row_sums_within_tolerance": True,
    }
    _ = ch
    _emit(doc, args, "validate.json")
    return EXIT_OK


def cmd_solve_dp(args):
    cfg = _load(args)
    ch, tree, cost, policy, annotation = _solve(cfg)
    doc = {
        "command": "solve-dp",
        "problem": _problem_doc(cfg),
        "horizon": cfg.horizon,
        "objective": cfg.objective,
        "num_nodes": tree.num_nodes,
        "level_sizes": tree.level_sizes(),
    }
    key = "pe_star" if cfg.objective == "error_probability" else "root_value"
    doc[key] = annotation.root_value
    doc["root_action"] = _action_doc(tree.actions[policy.action_index_at(0, tree.belief_at(0, 0))])
    if cfg.rational:
        if cfg.objective != "error_probability":
            raise ConfigError("rational mode only applies to the error-probability objective")
        exact = dp.backward_dp_rational(cfg.spec, ch, cfg.horizon, node_cap=cfg.node_cap)
        doc["pe_star_exact"] = f"{exact.value.numerator}/{exact.value.denominator}"
        doc["pe_star_exact_float"] = float(exact.value)
    _emit(doc, args, "solve_dp.json")
    return EXIT_OK


def cmd_eval_policy(args):
    cfg = _load(args)
    ch, tree, cost, policy, annotation = _solve(cfg)
    ev = dp.evaluate_policy_exact(tree, policy, cost)
    doc = {
        "command": "eval-policy",
        "horizon": cfg.horizon,
        "objective": cfg.objective,
        "value": ev.value,
        "stage_value": ev.stage_value,
        "terminal_value": ev.terminal_value,
        "backward_value": annotation.root_value,
        "consistent": bool(abs(ev.value - annotation.root_value) < 1e-12),
    }
    _emit(doc, args, "eval_policy.json")
    return EXIT_OK


def cmd_simulate(args):
    cfg = _load(args)
    if cfg.objective != "error_probability":
        raise ConfigError("simulate reports error rates; set run.objective = 'error_probability'")
    ch, tree, cost, policy, annotation = _solve(cfg)
    exact = dp.evaluate_policy_exact(tree, policy).value
    sim = dp.simulate_monte_carlo(tree, policy, cfg.trials, seed=cfg.seed)
    doc = {
        "command": "simulate",
        "horizon": cfg.horizon,
        "trials": sim.trials,
        "seed": sim.seed,
        "num_errors": sim.num_errors,
        "error_rate": sim.error_rate,
        "ci_half_width": sim.ci_half_width,
        "exact_value": exact,
        "within_ci": bool(abs(sim.error_rate - exact) <= sim.ci_half_width),
    }
    _emit(doc, args, "simulate.json")
    return EXIT_OK


def cmd_oracle_unstructured(args):
    cfg = _load(args)
    if cfg.objective != "error_probability":
        raise ConfigError("the unstructured oracle optimizes error probability only")
    ch, tree, cost, policy, annotation = _solve(cfg)
    res = dp.brute_force_unstructured(cfg.spec, ch, cfg.horizon, strategy_cap=cfg.strategy_cap)
    doc = {
        "command": "oracle-unstructured",
        "horizon": cfg.horizon,
        "oracle_value": res.value,
        "num_strategy_pairs": res.num_pairs,
        "dp_value": annotation.root_value,
        "abs_difference": abs(res.value - annotation.root_value),
        "agree": bool(abs(res.value - annotation.root_value) < 1e-12),
    }
    _emit(doc, args, "oracle_unstructured.json")
    return EXIT_OK


def cmd_costs(args):
    cfg = _load(args)
    if cfg.objective == "error_probability":
        raise ConfigError("the costs subcommand needs an entropy-drift or ejs objective")
    ch, tree, cost, policy, annotation = _solve(cfg)
    root = tree.belief_at(0, 0)
    table = [cost.instantaneous(root, e, ch) for e in tree.actions]
    check = costs.check_telescoping(tree, policy, cost)
    doc = {
        "command": "costs",
        "objective": cfg.objective,
        "log_base": cfg.spec.log_base,
        "horizon": cfg.horizon,
        "root_cost_by_action": table,
        "initial_constant": cost.initial_constant(cfg.spec),
        "telescoping_lhs": check.lhs,
        "telescoping_rhs": check.rhs,
        "telescoping_abs_diff": check.abs_diff,
        "overflow_seen": cost.overflow_seen,
    }
    _emit(doc, args, "costs.json")
    return EXIT_OK


def cmd_fixed_point(args):
    cfg = _load(args)
    if cfg.objective == "error_probability":
        raise ConfigError("fixed-point solving needs an entropy-drift or ejs objective")
    ch = config.resolve_channel(cfg)
    cost = _cost_functional(cfg)
    grid = costs.SimplexGrid(cfg.grid_resolution, cfg.spec.num_pairs)
    res = costs.fixed_point_solve(
        cfg.spec, ch, cost, grid,
        mode=cfg.fp_mode, discount=cfg.discount,
        tol=cfg.fp_tol, max_iter=cfg.fp_max_iter,
    )
    anchor, _ = grid.project_index(dp.JointBelief.uniform(cfg.spec.m1, cfg.spec.m2).p.reshape(-1))
    doc = {
        "command": "fixed-point",
        "objective": cfg.objective,
        "mode": res.mode,
        "grid_resolution": res.grid_resolution,
        "num_grid_points": len(res.values),
        "discount": cfg.discount if cfg.fp_mode == "discounted" else None,
        "iterations": res.iterations,
        "residual": res.residual,
        "converged": res.converged,
        "gain": res.gain,
        "gain_near_zero": res.gain_near_zero,
        "value_at_uniform": float(res.values[anchor]),
        "projection_error_max": res.projection_error_max,
    }
    _emit(doc, args, "fixed_point.json")
    return EXIT_OK


def cmd_capacity_eval(args):
    cfg = _load(args)
    lam = _require_lambda(cfg)
    ch, tree, cost, policy, annotation = _solve(cfg)
    bd = capacity.evaluate_In(cfg.spec, policy, ch, cfg.horizon, lam, node_cap=cfg.node_cap)
    doc = {"command": "capacity-eval", "horizon": cfg.horizon, "policy": "dp_optimal"}
    doc.update(bd.to_json_dict())
    if cfg.oracle:
        ref = capacity.full_history_In(cfg.spec, policy, ch, cfg.horizon, lam, history_cap=cfg.history_cap)
        dev = max(
            abs(x - y)
            for x, y in zip(
                bd.per_t_i1 + bd.per_t_i2 + bd.per_t_i3,
                ref.per_t_i1 + ref.per_t_i2 + ref.per_t_i3,
            )
        )
        doc["oracle_max_deviation"] = dev
        doc["oracle_agrees"] = bool(dev < 1e-10)
    _emit(doc, args, "capacity_eval.json")
    return EXIT_OK


def cmd_capacity_search(args):
    cfg = _load(args)
    lam = _require_lambda(cfg)
    ch = config.resolve_channel(cfg)
    res = capacity.search_Cn_lambda(
        cfg.spec, ch, cfg.horizon, lam,
        policy_cap=cfg.policy_cap, node_cap=cfg.node_cap,
    )
    doc = {
        "command": "capacity-search",
        "horizon": cfg.horizon,
        "value": res.value,
        "bound_type": res.bound_type,
        "num_policies": res.num_policies,
        "root_action": _action_doc(res.policy.action_at(0, dp.JointBelief.uniform(cfg.spec.m1, cfg.spec.m2))),
    }
    doc["breakdown"] = res.breakdown.to_json_dict()
    _emit(doc, args, "capacity_search.json")
    return EXIT_OK


def cmd_lambda_sweep(args):
    cfg = _load(args)
    if not cfg.lambdas:
        raise ConfigError("lambda-sweep needs run.lambdas = [[l1,l2,l3], ...] in the config")
    ch = config.resolve_channel(cfg)
    rows = capacity.lambda_sweep(
        cfg.spec, ch, cfg.horizon, cfg.lambdas,
        policy_cap=cfg.policy_cap, node_cap=cfg.node_cap,
    )
    docrows = []
    for r in rows:
        entry = {"lambda": list(r.lam.as_tuple())}
        if r.breakdown is None:
            entry.update({"in_lambda": None, "i1": None, "i2": None, "i3": None, "error": r.error})
        else:
            b = r.breakdown
            entry.update({"in_lambda": b.in_lambda, "i1": b.avg_i1, "i2": b.avg_i2,
                          "i3": b.avg_i3, "error": None})
        docrows.append(entry)
    doc = {
        "command": "lambda-sweep",
        "horizon": cfg.horizon,
        "bound_type": capacity.BOUND_TYPE,
        "rows": docrows,
    }
    _emit(doc, args, "lambda_sweep.json")
    csv_text = capacity.sweep_rows_to_csv(rows)
    if args.out:
        _atomic_write(os.path.join(args.out, "lambda_sweep.csv"), csv_text)
    return EXIT_OK


def cmd_check_invariants(args):
    cfg = _load(args)
    ch = config.resolve_channel(cfg)
    n = cfg.horizon
    tree = dp.build_reachable_tree(cfg.spec, ch, n, node_cap=cfg.node_cap)
    policy, _ = dp.backward_dp(tree)
    fixed = dp.constant_policy(tree, 0)

    update_dev = dp.check_belief_recursion(cfg.spec, ch, n, num_histories=200, seed=cfg.seed)
    fact = capacity.check_factorization(cfg.spec, policy, ch, n, history_cap=cfg.history_cap)
    kern = capacity.check_kernel_independence(
        cfg.spec, [policy, fixed], ch, min(n, 3), history_cap=cfg.history_cap)

    lam = cfg.lam if cfg.lam is not None else capacity.LambdaWeights(1.0, 1.0, 1.0)
    a = capacity.evaluate_In(cfg.spec, policy, ch, n, lam, node_cap=cfg.node_cap)
    b = capacity.full_history_In(cfg.spec, policy, ch, n, lam, history_cap=cfg.history_cap)
    stage_dev = max(
        abs(x - y)
        for x, y in zip(a.per_t_i1 + a.per_t_i2 + a.per_t_i3,
                        b.per_t_i1 + b.per_t_i2 + b.per_t_i3)
    )

    checks = [
        ("belief_update_consistency", update_dev, 1e-12),
        ("private_public_factorization", fact.max_deviation, 1e-12),
        ("stage_vs_history_information", stage_dev, 1e-10),
        ("kernel_policy_independence", kern.max_deviation, 1e-12),
    ]
    doc = {"command": "check-invariants", "horizon": n, "checks": []}
    all_pass = True
    for name, devi, tol in checks:
        ok = bool(devi < tol)
        all_pass = all_pass and ok
        doc["checks"].append({"name": name, "max_deviation": devi, "tolerance": tol, "passed": ok})
    doc["all_passed"] = all_pass
    _emit(doc, args, "check_invariants.json")
    return EXIT_OK if all_pass else EXIT_INVARIANT


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "validate": cmd_validate,
    "solve-dp": cmd_solve_dp,
    "eval-policy": cmd_eval_policy,
    "simulate": cmd_simulate,
    "oracle-unstructured": cmd_oracle_unstructured,
    "costs": cmd_costs,
    "fixed-point": cmd_fixed_point,
    "capacity-eval": cmd_capacity_eval,
    "capacity-search": cmd_capacity_search,
    "lambda-sweep": cmd_lambda_sweep,
    "check-invariants": cmd_check_invariants,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="macfb",
        description="Posterior dynamic programming and directed-information "
                    "bounds for a two-sender channel with feedback.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the experiment TOML")
        p.add_argument("--out", default=None, help="directory for output artifacts")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--cap-nodes", type=int, default=None, help="override caps.nodes")
        p.add_argument("--rational", action="store_true", help="also compute the exact rational value")
        p.add_argument("--log-base", choices=("bits", "nats"), default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except MacfbError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
