"""Command-line interface: certify, run, report.

Exit codes: 0 success; 1 parse/IO/hash errors; 2 certification infeasibility;
3 runtime safety violation; 4 cascaded OCP infeasibility.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import (
    CascadedInfeasibility,
    EmptyTightenedSet,
    GraphNotRooted,
    InfeasibleLeaderTube,
    NotHurwitz,
    ScenarioError,
    TubeformError,
)
from .pipeline import certify_scenario, load_certificate, write_certificate
from .scenario import load_scenario, scenario_hash
from .sim import SimConfig, SimTrace, run_simulation, trace_metrics
from .svgplot import SvgFigure


def cmd_certify(scenario_path: str, out_path: str) -> int:
    try:
        cfg = load_scenario(scenario_path)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        result = certify_scenario(cfg)
    except (GraphNotRooted, InfeasibleLeaderTube, EmptyTightenedSet, NotHurwitz) as exc:
        print(f"infeasible: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except TubeformError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    write_certificate(out_path, result)
    print(
        f"certified {cfg.name}: sv_min={result.bound_cert.sv_min:.6g} "
        f"bound={result.bound_cert.bound:.6g}"
    )
    for tube in result.tubes:
        print(
            f"  agent {tube.agent}: w_eff={tube.w_eff:.6g} r={tube.r:.6g} "
            f"r_ball={tube.r_ball:.6g} margin={tube.margin_radius:.6g} "
            f"eta={tube.input_eta:.6g}"
        )
    return 0


def cmd_run(
    scenario_path: str,
    cert_path: str,
    out_dir: str,
    seed: int | None = None,
    t_end: float | None = None,
    toggle_feedforward: bool = False,
    baseline_margins: bool = False,
) -> int:
    try:
        cfg = load_scenario(scenario_path)
        cert_doc = load_certificate(cert_path)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if cert_doc.get("scenario_sha256") != scenario_hash(cfg):
        print("error: certificate does not match scenario (hash mismatch)", file=sys.stderr)
        return 1
    result = certify_scenario(cfg, spot_checks=False)

    overrides: dict = {}
    if seed is not None:
        overrides["seed"] = seed
    if t_end is not None:
        overrides["t_end"] = t_end
    if toggle_feedforward:
        overrides["feedforward_on"] = not cfg.sim.feedforward_on
    if baseline_margins:
        overrides["baseline_margins"] = True
    sim_cfg = SimConfig.from_scenario(cfg, **overrides)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        sim_result = run_simulation(cfg, result, sim_cfg)
    except CascadedInfeasibility as exc:
        print(f"cascaded infeasibility: {exc}", file=sys.stderr)
        return 4
    except (ScenarioError, TubeformError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    trace_path = out / "trace.csv"
    sim_result.trace.to_csv(trace_path)
    metrics = trace_metrics(sim_result.trace)
    metrics["violations"] = [
        {"kind": v.kind, "fine_step": v.step, "t": v.t, "agent": v.agent, "value": v.value}
        for v in sim_result.violations
    ]
    (out / "summary.json").write_text(json.dumps(metrics, indent=2) + "\n")
    print(f"trace written to {trace_path}")
    print(
        f"min clearances: obstacle={metrics['min_obstacle_clearance']:.6g} "
        f"pairwise={metrics['min_pairwise_clearance']:.6g}; "
        f"final stacked error={metrics['final_mean_stacked_error']:.6g} "
        f"(bound {metrics['bound']:.6g})"
    )
    if sim_result.violations:
        first = sim_result.violations[0]
        print(
            f"safety violation: {first.kind} at fine step {first.step} "
            f"(t={first.t:.3f}, agent {first.agent})",
            file=sys.stderr,
        )
        return 3
    return 0


def _agent_ids(trace: SimTrace) -> list[int]:
    ids = []
    for col in trace.columns:
        if col.startswith("ferr") and col.endswith("_0") and col != "ferr_stacked":
            ids.append(int(col[4:].split("_")[0]))
    return sorted(set(ids))


def _plot_trajectories(traces: list[SimTrace], labels: list[str], path: Path) -> None:
    fig = SvgFigure("Agent trajectories", "x position", "y position", equal_aspect=True)
    for obs in traces[0].metadata.get("obstacles", "").split(";"):
        if not obs:
            continue
        cx, cy, radius, inflation = (float(v) for v in obs.split(","))
        fig.add_circle(cx, cy, radius, color="#333333", fill="#aaaaaa")
        fig.add_circle(cx, cy, radius + inflation, color="#888888", dashed=True)
    for t_idx, (trace, label) in enumerate(zip(traces, labels)):
        ids = _agent_ids(trace)
        lead = f"{label}: " if len(traces) > 1 else ""
        fig.add_line(
            trace.col("x0_10"), trace.col("x0_11"), label=f"{lead}leader",
            color=PALETTE_LEADER[t_idx], dashed=t_idx == 1,
        )
        for i in ids:
            fig.add_line(
                trace.col(f"x{i}_10"),
                trace.col(f"x{i}_11"),
                label=f"{lead}agent {i}" if t_idx == 0 and i <= 2 else None,
                dashed=t_idx == 1,
            )
    fig.write(path)


PALETTE_LEADER = ["#000000", "#777777"]


def _plot_errors(traces: list[SimTrace], labels: list[str], path: Path) -> None:
    fig = SvgFigure("Formation offset error components", "time [s]", "error")
    for t_idx, (trace, label) in enumerate(zip(traces, labels)):
        lead = f"{label}: " if len(traces) > 1 else ""
        for i in _agent_ids(trace):
            for ax in range(2):
                fig.add_line(
                    trace.col("t"),
                    trace.col(f"ferr{i}_{ax}"),
                    label=f"{lead}agent {i} axis {ax}" if i == 1 else None,
                    dashed=t_idx == 1,
                )
    fig.write(path)


def _plot_clearances(traces: list[SimTrace], labels: list[str], path: Path) -> None:
    fig = SvgFigure("Minimum safety clearances", "time [s]", "clearance")
    for t_idx, (trace, label) in enumerate(zip(traces, labels)):
        lead = f"{label}: " if len(traces) > 1 else ""
        fig.add_line(trace.col("t"), trace.col("clr_obs"), label=f"{lead}obstacle",
                     dashed=t_idx == 1)
        fig.add_line(trace.col("t"), trace.col("clr_pair"), label=f"{lead}pairwise",
                     dashed=t_idx == 1)
    fig.add_hline(0.0, color="#000000", label="zero")
    fig.write(path)


def _plot_occupancy(traces: list[SimTrace], labels: list[str], path: Path) -> None:
    fig = SvgFigure("Tube occupancy V_i / r_i^2", "time [s]", "occupancy")
    for t_idx, (trace, label) in enumerate(zip(traces, labels)):
        lead = f"{label}: " if len(traces) > 1 else ""
        for col in trace.columns:
            if col.startswith("occ"):
                fig.add_line(trace.col("t"), trace.col(col),
                             label=f"{lead}{col}" if t_idx == 0 else None,
                             dashed=t_idx == 1)
    fig.add_hline(1.0, color="#d62728", label="limit")
    fig.write(path)


def cmd_report(trace_paths: list[str], out_dir: str) -> int:
    try:
        traces = [SimTrace.from_csv(p) for p in trace_paths]
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    labels = []
    for trace in traces:
        mode = []
        if trace.metadata.get("baseline_margins") == "1":
            mode.append("baseline margins")
        if trace.metadata.get("feedforward_on") == "0":
            mode.append("no feedforward")
        labels.append(", ".join(mode) or "feedforward")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _plot_trajectories(traces, labels, out / "trajectories.svg")
    _plot_errors(traces, labels, out / "formation_errors.svg")
    _plot_clearances(traces, labels, out / "clearances.svg")
    _plot_occupancy(traces, labels, out / "tube_occupancy.svg")
    rows = ["metric," + ",".join(labels)]
    all_metrics = [trace_metrics(t) for t in traces]
    for key in (
        "min_obstacle_clearance",
        "min_pairwise_clearance",
        "final_mean_stacked_error",
        "max_stacked_error",
        "bound",
        "relaxed_steps",
    ):
        rows.append(key + "," + ",".join(f"{m[key]:.6g}" for m in all_metrics))
    (out / "metrics.csv").write_text("\n".join(rows) + "\n")
    print(f"report written to {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="tubeform",
        description="Tube-certified distributed MPC for leader-follower formations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cert = sub.add_parser("certify", help="run the offline design stage")
    p_cert.add_argument("scenario")
    p_cert.add_argument("-o", "--out", required=True, help="certificate output path")

    p_run = sub.add_parser("run", help="closed-loop simulation")
    p_run.add_argument("scenario")
    p_run.add_argument("--cert", required=True)
    p_run.add_argument("-o", "--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--t-end", type=float, default=None)
    p_run.add_argument("--toggle-feedforward", action="store_true")
    p_run.add_argument("--baseline-margins", action="store_true")

    p_rep = sub.add_parser("report", help="emit SVG plots and a metrics table")
    p_rep.add_argument("traces", nargs="+")
    p_rep.add_argument("-o", "--out", required=True, help="output directory")

    args = parser.parse_args(argv)
    if args.command == "certify":
        return cmd_certify(args.scenario, args.out)
    if args.command == "run":
        return cmd_run(
            args.scenario,
            args.cert,
            args.out,
            seed=args.seed,
            t_end=args.t_end,
            toggle_feedforward=args.toggle_feedforward,
            baseline_margins=args.baseline_margins,
        )
    return cmd_report(args.traces, args.out)


if __name__ == "__main__":
    sys.exit(main())
