"""Command-line entry point.

Exit codes: 0 success, 2 validation/config error, 3 data error, 4 runtime
error (port in use, I/O).  Every command is deterministic given its flags,
input files, and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import calibration, session, simulate
from .control import optimal_density
from .model import (
    BuildPlan,
    BuildTrace,
    InfeasibleTarget,
    InvalidDataset,
    InvalidPlan,
    LeafctlError,
    ProcessModel,
    dumps_json,
    load_calibration_csv,
    load_model_json,
    open_loop_density,
    validate,
)
from .session import SessionStore

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

DEFAULT_DATA_DIR = "leafctl-data"


def _data_dir(args) -> Path:
    return Path(args.data_dir or os.environ.get("LEAFCTL_DATA_DIR") or DEFAULT_DATA_DIR)


def _load_model(path: str) -> ProcessModel:
    try:
        return load_model_json(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise _DataError(f"cannot read model file: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise _DataError(f"malformed model file {path}: {exc}") from exc


class _DataError(LeafctlError):
    code = "DataError"


def _plan_from_args(args) -> BuildPlan:
    return BuildPlan(
        n=args.n,
        target_k=args.k,
        repetitions=args.repetitions,
        d_min=args.d_min,
        d_max=args.d_max,
    )


def cmd_calibrate(args) -> int:
    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
        return EXIT_DATA
    dataset = load_calibration_csv(text)
    model = calibration.calibrate(dataset)
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(dumps_json(model), encoding="utf-8")
    if args.format == "json":
        print(json.dumps(model.to_dict()))
    else:
        print(f"alpha   {model.alpha:.6f} kg/mm per %")
        print(f"beta    {model.beta:.6f} kg/mm")
        print(f"sigma_p {model.sigma_p:.6f} kg/mm")
        print(f"sigma_o {model.sigma_o:.6f} kg/mm")
    return EXIT_OK


def _decision_rows(plan: BuildPlan, model: ProcessModel, mu: float) -> list[dict]:
    rows = []
    for i in range(plan.n):
        per_leaf = (plan.target_k - mu) / plan.n  # open-loop split from the start
        decision = optimal_density(plan, model, mu, i) if i == 0 else None
        rows.append({"step": i + 1, "per_leaf_mean": per_leaf, "decision": decision})
    return rows


def cmd_plan(args) -> int:
    model = _load_model(args.model)
    plan = _plan_from_args(args)
    mu = args.mu
    validate(plan, model)
    d_ol = open_loop_density(plan, model)
    first = optimal_density(plan, model, mu, 0)
    per_leaf = (plan.target_k - mu) / plan.n
    # the equal split assigns every remaining leaf the same mean, so the
    # per-step rows coincide until a measurement moves the estimate
    steps = [
        {"step": i + 1, "per_leaf_mean": per_leaf, "density": first.recommended_density}
        for i in range(plan.n)
    ]
    if args.format == "json":
        print(json.dumps({
            "open_loop_density": d_ol,
            "per_leaf_mean": per_leaf,
            "first_decision": first.to_dict(),
            "per_step": steps,
        }))
        return EXIT_OK
    print(f"target {plan.target_k} kg/mm over {plan.n} leaves (from estimate {mu} kg/mm)")
    print(f"open-loop density: {d_ol:.3f} %")
    flag = "  [clamped]" if first.clamped else ""
    print(f"next density: {first.recommended_density:.3f} %{flag}")
    print(
        f"predicted final: {first.predicted_final_mean:.3f} "
        f"+/- {first.predicted_final_sd:.3f} kg/mm"
    )
    print(f"{'step':>4} {'per-leaf mean kg/mm':>20} {'density %':>10}")
    for row in steps:
        print(f"{row['step']:>4} {row['per_leaf_mean']:>20.4f} {row['density']:>10.3f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _load_model(args.model)
    plan = _plan_from_args(args)
    config = simulate.SimConfig(
        plan=plan,
        model_true=model,
        trials=args.trials,
        seed=args.seed if args.seed is not None else 0,
        paired=args.paired,
    )
    report = simulate.monte_carlo(config, workers=args.workers)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    if args.format == "json":
        print(report.to_json(), end="")
    elif args.format == "csv":
        print(report.to_csv(), end="")
    else:
        print(f"trials {report.trials}  seed {report.seed}  paired {report.paired}")
        print(f"{'strategy':<12} {'mean |err| kg/mm':>17} {'mean |err| %':>13} {'sd kg/mm':>10}")
        for kind in simulate.STRATEGIES:
            s = report.strategies[kind]
            print(
                f"{kind:<12} {s.mean_abs_error:>17.4f} {s.mean_abs_error_pct:>13.3f} "
                f"{s.sd_abs_error:>10.4f}"
            )
    return EXIT_OK


def _parse_measurement_line(line: str) -> list[float] | None:
    parts = line.replace(",", " ").split()
    if not parts:
        return None
    return [float(p) for p in parts]


def cmd_operate(args) -> int:
    store = SessionStore(_data_dir(args))
    if args.resume:
        state = store.get_session(args.resume)
    else:
        if args.model is None or args.n is None or args.k is None:
            print("error: --model, --n and --k are required unless resuming", file=sys.stderr)
            return EXIT_VALIDATION
        state = store.create_session(_plan_from_args(args), _load_model(args.model))
    out = sys.stdout
    print(f"session {state.id}  target {state.plan.target_k} kg/mm over {state.plan.n} leaves", file=out)
    while state.status != session.COMPLETE:
        decision = state.next_decision
        flag = "  [clamped]" if decision.clamped else ""
        print(f"step {len(state.history) + 1}/{state.plan.n}: print with density "
              f"{decision.recommended_density:.3f} %{flag}", file=out)
        print("enter stiffness measurement(s) in kg/mm (blank or q to pause):", file=out)
        line = sys.stdin.readline()
        if not line or line.strip().lower() in ("q", "quit", "exit"):
            print(f"paused; resume with --resume {state.id}", file=out)
            return EXIT_OK
        try:
            values = _parse_measurement_line(line)
        except ValueError:
            print("could not parse numbers, try again", file=out)
            continue
        if not values:
            print(f"paused; resume with --resume {state.id}", file=out)
            return EXIT_OK
        state = store.record_measurement(state.id, values=values)
        entry = state.history[-1]
        print(
            f"recorded {entry.averaged_observation:.4f} kg/mm (r={entry.repetitions}); "
            f"belief {state.belief.mean:.4f} kg/mm (var {state.belief.variance:.5f})",
            file=out,
        )
        if state.next_decision is not None:
            print(
                f"predicted final {state.next_decision.predicted_final_mean:.3f} "
                f"+/- {state.next_decision.predicted_final_sd:.3f} kg/mm",
                file=out,
            )
    print(
        f"complete: final observation {state.history[-1].averaged_observation:.4f} kg/mm, "
        f"error {state.final_abs_error_pct:.2f} % of target",
        file=out,
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import make_server

    port = args.port if args.port is not None else int(os.environ.get("LEAFCTL_PORT", "8173"))
    static_dir = args.static_dir
    if static_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static_dir = str(bundled) if bundled.is_dir() else None
    try:
        server = make_server(args.host, port, _data_dir(args), static_dir)
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{port}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"serving on http://{args.host}:{port} (data dir: {_data_dir(args)})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def _render_trace_text(trace: BuildTrace) -> str:
    lines = [f"strategy: {trace.strategy}"]
    lines.append(f"{'step':>4} {'density %':>10} {'observed':>10} {'true':>10} {'belief':>10}")
    for s in trace.steps:
        obs = "-" if s.observed_stiffness is None else f"{s.observed_stiffness:.4f}"
        true = "-" if s.true_stiffness is None else f"{s.true_stiffness:.4f}"
        belief = "-" if s.belief_after is None else f"{s.belief_after.mean:.4f}"
        lines.append(f"{s.step:>4} {s.applied_density:>10.3f} {obs:>10} {true:>10} {belief:>10}")
    if trace.final_abs_error_pct is not None:
        lines.append(f"final |error|: {trace.final_abs_error_pct:.2f} % of target")
    return "\n".join(lines)


def _render_trace_csv(trace: BuildTrace) -> str:
    lines = ["step,applied_density,observed_stiffness,true_stiffness,belief_mean,belief_variance"]
    for s in trace.steps:
        cells = [
            str(s.step),
            repr(s.applied_density),
            "" if s.observed_stiffness is None else repr(s.observed_stiffness),
            "" if s.true_stiffness is None else repr(s.true_stiffness),
            "" if s.belief_after is None else repr(s.belief_after.mean),
            "" if s.belief_after is None else repr(s.belief_after.variance),
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    try:
        payload = json.loads(Path(args.trace).read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"error: cannot read {args.trace}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: malformed JSON in {args.trace}: {exc}", file=sys.stderr)
        return EXIT_DATA
    if "strategies" in payload:  # Monte Carlo report
        if args.format == "csv":
            k = payload["plan"]["target_k"]
            print("strategy,trial,final_error_kg_mm,final_error_pct")
            for kind in simulate.STRATEGIES:
                for t, err in enumerate(payload["strategies"][kind]["final_errors_kg_mm"]):
                    print(f"{kind},{t},{err!r},{err / k * 100.0!r}")
        elif args.format == "json":
            print(json.dumps(payload))
        else:
            print(f"trials {payload['trials']}  seed {payload['seed']}  paired {payload['paired']}")
            for kind in simulate.STRATEGIES:
                s = payload["strategies"][kind]
                print(
                    f"{kind:<12} mean |err| {s['mean_abs_error_kg_mm']:.4f} kg/mm "
                    f"({s['mean_abs_error_pct']:.3f} %)"
                )
        return EXIT_OK
    trace = BuildTrace.from_dict(payload)
    if args.format == "csv":
        print(_render_trace_csv(trace), end="")
    elif args.format == "json":
        print(json.dumps(trace.to_dict()))
    else:
        print(_render_trace_text(trace))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leafctl", description=__doc__)
    parser.add_argument("--data-dir", default=None, help="session/model data directory "
                        "(default: $LEAFCTL_DATA_DIR or ./leafctl-data)")
    parser.add_argument("--seed", type=int, default=None, help="master seed for stochastic commands")
    parser.add_argument("--format", choices=("text", "json", "csv"), default="text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit a process model from bending-test CSV data")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None, help="write the model JSON here")
    p.set_defaults(func=cmd_calibrate)

    def add_plan_flags(p, required=True):
        p.add_argument("--model", required=required, help="process model JSON file")
        p.add_argument("--n", type=int, required=required, help="leaf count")
        p.add_argument("--k", type=float, required=required, help="target stiffness kg/mm")
        p.add_argument("--repetitions", "--r", type=int, default=5, dest="repetitions")
        p.add_argument("--d-min", type=float, default=0.0)
        p.add_argument("--d-max", type=float, default=100.0)

    p = sub.add_parser("plan", help="show open-loop density and the equal-split allocation")
    add_plan_flags(p)
    p.add_argument("--mu", type=float, default=0.0, help="current stiffness estimate kg/mm")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="Monte Carlo comparison of the three strategies")
    add_plan_flags(p)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--paired", action="store_true",
                   help="share noise draws across strategies per trial")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--csv", default=None, help="write the per-trial CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("operate", help="interactive print session on the terminal")
    add_plan_flags(p, required=False)
    p.add_argument("--resume", default=None, help="resume a paused session by id")
    p.set_defaults(func=cmd_operate)

    p = sub.add_parser("serve", help="run the local session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None, help="default: $LEAFCTL_PORT or 8173")
    p.add_argument("--static-dir", default=None, help="serve this directory as the UI")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="render a build trace or Monte Carlo report")
    p.add_argument("--trace", required=True, help="BuildTrace or report JSON file")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidPlan, InfeasibleTarget) as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (InvalidDataset, calibration.CalibrationError, _DataError,
            session.UnknownSession, session.CorruptEventLog) as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LeafctlError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
