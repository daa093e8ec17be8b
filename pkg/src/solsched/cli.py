"""Command-line interface.

Every command writes a machine-readable JSON report to stdout and a short
human summary to stderr; ``--seed`` makes every command reproducible.
Exit codes: 0 success, 2 invalid input, 3 infeasible or cap exceeded,
1 internal error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
import threading

from . import __version__
from .coordination import CoordinationStore
from .dispatch import DispatchError, Schedule, deterministic_view, dispatch
from .model import validate_mission
from .modelio import (
    ModelFormatError,
    canonical_dumps,
    canonical_loads,
    estimate_to_doc,
    mission_from_doc,
    schedule_from_doc,
    schedule_to_doc,
    trace_to_doc,
    validation_to_doc,
)
from .multistage import (
    TreeCapExceeded,
    TreeFormatError,
    build_perfect_information_tree,
    evaluate_multistage,
)
from .optimize import config_from_doc, initial_solution, optimize
from .robustness import estimate_robustness, exact_robustness
from .scenarios import ContinuousSupportError, EnumerationCapExceeded, sample_scenario

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3


def _read_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return canonical_loads(fh.read())


def _load_model(path: str):
    return mission_from_doc(_read_json(path))


def _load_schedule(path: str) -> Schedule:
    return schedule_from_doc(_read_json(path))


def _emit(doc, args, summary: str) -> None:
    if getattr(args, "format", "machine") == "machine":
        sys.stdout.write(canonical_dumps(doc))
    else:
        sys.stdout.write(summary + "\n")
    sys.stderr.write(summary + "\n")


def cmd_validate(args) -> int:
    model = _load_model(args.model)
    report = validate_mission(model)
    _emit(validation_to_doc(report), args,
          "valid" if report.valid else f"invalid: {len(report.violations)} violation(s)")
    return EXIT_OK if report.valid else EXIT_INVALID


def cmd_robustness(args) -> int:
    model = _load_model(args.model)
    schedule = _load_schedule(args.schedule)
    est = estimate_robustness(model, schedule, n=args.samples,
                              master_seed=args.seed, workers=args.workers)
    doc = estimate_to_doc(est)
    if args.exact:
        doc["exact"] = exact_robustness(model, schedule)
    _emit(doc, args,
          f"p_hat={est.p_hat:.4f} +- {est.std_error:.4f} "
          f"ci95=[{est.ci95[0]:.4f}, {est.ci95[1]:.4f}] n={est.n_samples}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _load_model(args.model)
    schedule = _load_schedule(args.schedule)
    if args.nominal:
        trace = deterministic_view(model, schedule)
    else:
        sc = sample_scenario(model, args.seed, args.scenario_index)
        trace = dispatch(model, schedule, sc)
    _emit(trace_to_doc(trace), args,
          f"success={trace.success} makespan={trace.makespan()}"
          + ("" if trace.success else f" reason={trace.failure_reason}"))
    return EXIT_OK if trace.success else EXIT_INFEASIBLE


def cmd_optimize(args) -> int:
    model = _load_model(args.model)
    config = config_from_doc(_read_json(args.config) if args.config else {})
    if args.seed is not None:
        from dataclasses import replace
        config = replace(config, master_seed=args.seed)
    if args.workers is not None:
        from dataclasses import replace
        config = replace(config, workers=args.workers)
    start = _load_schedule(args.schedule) if args.schedule else None
    result = optimize(model, start, config, threading.Event())
    doc = {
        "best_schedule": schedule_to_doc(result.best_schedule),
        "best_estimate": estimate_to_doc(result.best_estimate),
        "unbiased_estimate": estimate_to_doc(result.unbiased_estimate),
        "best_objective": result.best_objective,
        "iterations_used": result.iterations_used,
        "objective_trace": [list(t) for t in result.objective_trace],
        "seed": result.seed,
    }
    _emit(doc, args,
          f"best objective={result.best_objective:.4f} "
          f"p_hat={result.unbiased_estimate.p_hat:.4f} "
          f"iterations={result.iterations_used}")
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(canonical_dumps(schedule_to_doc(result.best_schedule)))
    return EXIT_OK


def cmd_tree(args) -> int:
    model = _load_model(args.model)
    ids = [a.id for a in model.activities]
    n_orders = 1
    for k in range(2, len(ids) + 1):
        n_orders *= k
    if n_orders > args.max_orders:
        raise EnumerationCapExceeded(
            f"{n_orders} candidate orders exceed --max-orders {args.max_orders}")
    candidates, labels = [], []
    for perm in itertools.permutations(ids):
        candidates.append(Schedule(perm, _crew_for(model, perm)))
        labels.append(",".join(perm))
    tree = build_perfect_information_tree(model, candidates, labels=labels)
    from dataclasses import replace as dc_replace
    tree = dc_replace(tree, depth_cap=args.depth)
    result = evaluate_multistage(tree)
    fixed = {lbl: exact_robustness(model, s) for lbl, s in zip(labels, candidates)}
    best_fixed = max(fixed.items(), key=lambda kv: (kv[1], kv[0]))
    doc = {
        "value": result.value,
        "node_count": result.node_count,
        "n_orders": len(candidates),
        "best_fixed_order": best_fixed[0],
        "best_fixed_value": best_fixed[1],
        "fixed_values": fixed,
    }
    _emit(doc, args,
          f"perfect-reoptimization value={result.value:.4f} "
          f"best fixed={best_fixed[1]:.4f} ({best_fixed[0]})")
    return EXIT_OK


def _crew_for(model, order):
    from .optimize import _least_loaded_crew
    return _least_loaded_crew(model, list(order))


def cmd_agent(args) -> int:
    from .agent import AgentConfig, agent_loop
    from .coordination import SystemClock
    from .service_helpers import HttpStoreClient
    client = HttpStoreClient(base_url=args.store)
    config = AgentConfig(agent_id=args.agent_id, poll_interval=args.poll_interval,
                         slice_iterations=args.slice_iterations)
    stop = threading.Event()
    sys.stderr.write(f"agent {args.agent_id} polling {args.store}\n")
    try:
        agent_loop(client, config, stop, SystemClock())
    except KeyboardInterrupt:
        stop.set()
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn
    from .service import create_app
    store = CoordinationStore(args.store)
    app = create_app(store, n_agents=args.agents)
    sys.stderr.write(f"serving on {args.host}:{args.port} (store: {args.store})\n")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="solsched")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, schedule=False):
        p.add_argument("--model", required=True, help="model file (canonical JSON)")
        if schedule:
            p.add_argument("--schedule", required=True, help="schedule file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--format", choices=("text", "machine"), default="machine")

    p = sub.add_parser("validate", help="check model invariants")
    p.add_argument("--model", required=True)
    p.add_argument("--format", choices=("text", "machine"), default="machine")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("robustness", help="estimate schedule success probability")
    common(p, schedule=True)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--exact", action="store_true",
                   help="also compute the exact value (all-discrete models only)")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("simulate", help="dispatch one scenario")
    common(p, schedule=True)
    p.add_argument("--scenario-index", type=int, default=0)
    p.add_argument("--nominal", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="local search for a robust schedule")
    p.add_argument("--model", required=True)
    p.add_argument("--config", help="search config file")
    p.add_argument("--schedule", help="optional starting schedule")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--output", help="write the best schedule here")
    p.add_argument("--format", choices=("text", "machine"), default="machine")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("tree", help="perfect-reoptimization value over all orders")
    p.add_argument("--model", required=True)
    p.add_argument("--max-orders", type=int, default=24)
    p.add_argument("--depth", type=int, default=64)
    p.add_argument("--format", choices=("text", "machine"), default="machine")
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("agent", help="run an optimization agent against a store")
    p.add_argument("--store", required=True, help="service base URL")
    p.add_argument("--agent-id", default="agent-cli")
    p.add_argument("--poll-interval", type=float, default=1.0)
    p.add_argument("--slice-iterations", type=int, default=50)
    p.set_defaults(func=cmd_agent)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--store", required=True, help="store log path")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8421)
    p.add_argument("--agents", type=int, default=2)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, json.JSONDecodeError, ModelFormatError,
            DispatchError, KeyError, ValueError) as exc:
        if isinstance(exc, (EnumerationCapExceeded, ContinuousSupportError,
                            TreeCapExceeded, TreeFormatError)):
            sys.stderr.write(f"infeasible: {exc}\n")
            return EXIT_INFEASIBLE
        sys.stderr.write(f"invalid input: {exc}\n")
        return EXIT_INVALID
    except Exception as exc:  # pragma: no cover - internal failure path
        sys.stderr.write(f"internal error: {exc!r}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
