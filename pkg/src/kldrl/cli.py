"""Command line entry point: ``kldrl run|sweep|verify|nash``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import SWEEPABLE, ConfigError, ScenarioConfig, build_scenario, load_config
from .game import ConvergenceError, is_contractive, nash_oracle, nash_residual
from .sim import RunFailure, SimulationError, batch_run, integrate
from .simplex import kl_divergence
from .update import lhs_stationarity, perturbed_nash

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

FLOAT_FMT = "%.17g"


def _err(msg: str) -> None:
    print(f"kldrl: {msg}", file=sys.stderr)


def _equilibrium(game):
    if not is_contractive(game):
        return None
    return nash_oracle(game, tol=1e-12)


def summarize(traj, cfg: ScenarioConfig) -> dict:
    game = traj.game
    layout = game.layout
    x = traj.final_state
    ne = _equilibrium(game)
    threshold = cfg["output.threshold"]
    amps = [dg.oscillation_amplitude(traj, i, 0.2) for i in range(layout.n)]
    metrics = {
        "average_payoff": dg.average_payoff(traj).final,
        "max_gain": [dg.max_gain(traj, k).final for k in range(layout.M)],
        "oscillation_amplitude": amps[0],
        "oscillation_amplitude_all": amps,
    }
    out = {
        "terminal": {"t": float(traj.times[-1]), "x": x.tolist(), "p": traj.payoffs[-1].tolist()},
        "nash_residual": nash_residual(game, x),
        "theta_updates": len(traj.theta_events),
        "final_theta": traj.thetas[-1].tolist(),
    }
    if ne is not None:
        kl1 = dg.kl_to_target(traj, ne, population=0)
        out["nash"] = ne.tolist()
        out["kl_to_NE"] = kl_divergence(x, ne)
        out["kl_to_NE_population"] = [
            kl_divergence(x[sl], ne[sl]) for sl in layout.slices
        ]
        metrics["convergence_time"] = dg.convergence_time(kl1, threshold)
        metrics["convergence_threshold"] = threshold
    out["metrics"] = metrics
    out["config"] = cfg.to_dict()
    return out


def write_run(traj, cfg: ScenarioConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    n = traj.layout.n
    header = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"p_{i + 1}" for i in range(n)] + ["dxnorm"]
    table = np.column_stack([traj.times, traj.states, traj.payoffs, traj.dxnorm])
    np.savetxt(out_dir / cfg["output.trajectory"], table, fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")

    ev_header = ["l", "t_l"] + [f"theta_{i + 1}" for i in range(n)]
    rows = [(0, 0.0, traj.theta0)] + [(l + 1, t, th) for l, (t, th) in enumerate(traj.theta_events)]
    with open(out_dir / cfg["output.events"], "w") as fh:
        fh.write(",".join(ev_header) + "\n")
        for l, t, th in rows:
            fh.write(",".join([str(l), FLOAT_FMT % t] + [FLOAT_FMT % v for v in th]) + "\n")

    summary = summarize(traj, cfg)
    (out_dir / cfg["output.summary"]).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _load(path, stride=None) -> tuple[ScenarioConfig, object]:
    cfg = load_config(path)
    if stride is not None:
        cfg = cfg.with_value("sim.record_stride", stride)
    return cfg, build_scenario(cfg)


def cmd_run(args) -> int:
    try:
        cfg, scenario = _load(args.config, args.stride)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_USAGE
    try:
        traj = integrate(scenario)
    except (SimulationError, LookupError, ValueError) as exc:
        _err(f"simulation failed: {exc}")
        return EXIT_FAIL
    summary = write_run(traj, cfg, Path(args.out))
    print(json.dumps({"out": str(args.out), "theta_updates": summary["theta_updates"], "kl_to_NE": summary.get("kl_to_NE")}))
    return EXIT_OK


def _parse_values(text: str | None) -> list[float]:
    if text is None:
        return []
    return [float(s) for s in text.split(",") if s.strip()]


def cmd_sweep(args) -> int:
    if args.param not in SWEEPABLE:
        _err(f"--param must be one of {sorted(SWEEPABLE)}")
        return EXIT_USAGE
    try:
        values = _parse_values(args.values)
    except ValueError as exc:
        _err(f"bad --values: {exc}")
        return EXIT_USAGE
    if not values:
        _err("--values is empty")
        return EXIT_USAGE
    try:
        base, _ = _load(args.config, args.stride)
        configs = [base.with_value(args.param, v) for v in values]
        scenarios = [build_scenario(c) for c in configs]
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_USAGE

    workers = min(len(scenarios), os.cpu_count() or 1)
    results = batch_run(scenarios, workers=workers)
    out = Path(args.out)
    runs = []
    status = EXIT_OK
    for v, cfg, traj in zip(values, configs, results):
        entry = {"value": v}
        if isinstance(traj, RunFailure):
            _err(f"{args.param}={v}: {traj.error}")
            entry["error"] = str(traj.error)
            status = EXIT_FAIL
        else:
            summary = write_run(traj, cfg, out / f"{args.param}={v:g}")
            entry["dir"] = f"{args.param}={v:g}"
            entry["convergence_time"] = summary["metrics"].get("convergence_time")
            entry["kl_to_NE"] = summary.get("kl_to_NE")
            entry["theta_updates"] = summary["theta_updates"]
        runs.append(entry)
    out.mkdir(parents=True, exist_ok=True)
    sweep = {"param": args.param, "threshold": base["output.threshold"], "runs": runs}
    (out / "sweep.json").write_text(json.dumps(sweep, indent=2, sort_keys=True) + "\n")
    print(json.dumps(sweep))
    return status


def cmd_nash(args) -> int:
    try:
        cfg, scenario = _load(args.config)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_USAGE
    game = scenario.game
    eta = scenario.protocol.eta
    theta = scenario.protocol.theta
    try:
        ne = nash_oracle(game, tol=1e-12)
        pne = perturbed_nash(game, eta, theta, tol=1e-13)
    except (ValueError, ConvergenceError) as exc:
        _err(str(exc))
        return EXIT_FAIL
    report = {
        "game": game.name,
        "eta": eta,
        "theta": theta.tolist(),
        "nash": ne.tolist(),
        "nash_residual": nash_residual(game, ne),
        "perturbed_nash": pne.tolist(),
        "perturbed_residual": lhs_stationarity(pne, game(pne), theta, eta, game.layout),
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks, render

    results = run_checks()
    print(render(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kldrl", description="KL-regularized learning in population games")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out")
    p.add_argument("--stride", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="simulate one scenario over several parameter values")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated list")
    p.add_argument("--out", default="sweep")
    p.add_argument("--stride", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the built-in invariant checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("nash", help="print the Nash and perturbed Nash equilibria")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_nash)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
