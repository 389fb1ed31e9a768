"""Command-line harness.

Subcommands: run-sddp, run-dp, compare, scale, make-case, wind-fit,
wind-rescale, bench-kernel. All outputs are UTF-8 CSVs with documented
headers plus one summary JSON per run; numeric CSV fields use a fixed
%.10g format so identical configurations reproduce byte-identical files
(wall-clock fields live only in the JSON summaries).
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import dp as dp_mod
from . import lp as lp_mod
from . import sddp as sddp_mod
from . import wind as wind_mod
from .errors import GridSddpError, MaxItersExceeded
from .fixtures import make_case, write_fixture
from .network import Bus, Network, parse_case, validate
from .stage import StageOptions, initial_state

log = logging.getLogger("gridsddp")


def _fmt(v):
    return format(float(v), ".10g")


@dataclass
class ExperimentConfig:
    case: str
    wind: str
    horizon: int = 0          # 0 means "use the case's full profile"
    iterations: int = 4
    backward_samples: int = 25
    scenarios: int = 25
    forward_samples: int = 25
    alpha: float = 0.05
    stop_rule: str = "fixed"
    dp_grid: tuple = (6, 6, 7)
    sim_scenarios: int = 100
    breakpoints: int = 11
    seed: int = 0
    threads: int = 1
    out: str = "out"

    def check(self):
        problems = []
        for name in ("iterations", "backward_samples", "scenarios", "forward_samples",
                     "sim_scenarios", "breakpoints"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.horizon < 0:
            problems.append("horizon must be >= 1 (or omitted)")
        if not os.path.exists(self.case):
            problems.append(f"case file not found: {self.case}")
        if self.wind and not os.path.exists(self.wind):
            problems.append(f"wind model file not found: {self.wind}")
        if any(v < 1 for v in self.dp_grid):
            problems.append("dp grid counts must be >= 1")
        return problems


def with_horizon(net, horizon):
    """Truncate load profiles to the requested horizon."""
    if horizon <= 0 or horizon == net.horizon:
        return net
    if horizon > net.horizon:
        raise GridSddpError(
            f"horizon {horizon} exceeds the case's load profile length {net.horizon}")
    buses = tuple(Bus(b.id, b.is_slack, b.load_profile[:horizon]) for b in net.buses)
    return Network(buses=buses, generators=net.generators, lines=net.lines,
                   storage_devices=net.storage_devices, wind_farms=net.wind_farms,
                   penalty_m=net.penalty_m, initial_storage=net.initial_storage,
                   initial_generation=net.initial_generation,
                   initial_wind=net.initial_wind)


def load_inputs(cfg):
    net = with_horizon(parse_case(cfg.case), cfg.horizon)
    problems = validate(net)
    if problems:
        raise GridSddpError("invalid network: " + "; ".join(problems))
    model = wind_mod.load_wind_model(cfg.wind)
    if model.n_farms != len(net.wind_farms):
        raise GridSddpError(
            f"wind model has {model.n_farms} farms, case has {len(net.wind_farms)}")
    return net, model


# -- output writers -----------------------------------------------------------


def write_bounds_csv(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "lower_bound", "upper_mean", "upper_sd",
                    "ci_lo", "ci_hi"])
        for k, b in enumerate(history, start=1):
            w.writerow([k, _fmt(b.lower_bound), _fmt(b.upper_mean), _fmt(b.upper_sd),
                        _fmt(b.ci[0]), _fmt(b.ci[1])])


def write_cuts_csv(path, net, pool):
    dev_ids = [d.id for d in net.storage_devices]
    gen_ids = [g.id for g in net.generators]
    farm_ids = [f.id for f in net.wind_farms]
    header = ["t", "iteration", "intercept"] \
        + [f"g_s_{i}" for i in dev_ids] + [f"g_p_{i}" for i in gen_ids] \
        + [f"g_w_{i}" for i in farm_ids]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for cut in pool.all_cuts():
            it = cut.provenance.iteration if cut.provenance else 0
            w.writerow([cut.t, it, _fmt(cut.intercept)]
                       + [_fmt(v) for v in cut.g_s] + [_fmt(v) for v in cut.g_p]
                       + [_fmt(v) for v in cut.g_w])


def write_trajectories_csv(path, net, trajectories):
    dev_ids = [d.id for d in net.storage_devices]
    gen_ids = [g.id for g in net.generators]
    farm_ids = [f.id for f in net.wind_farms]
    header = ["path", "t"] + [f"s_{i}" for i in dev_ids] + [f"p_{i}" for i in gen_ids] \
        + [f"w_{i}" for i in farm_ids] + ["slack_pos", "slack_neg", "h_t"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for l, path_decisions in enumerate(trajectories):
            for t, dec in enumerate(path_decisions, start=1):
                w.writerow([l, t]
                           + [_fmt(v) for v in dec.next_state.s]
                           + [_fmt(v) for v in dec.generation]
                           + [_fmt(v) for v in dec.next_state.w_prev]
                           + [_fmt(dec.slack_pos.sum()), _fmt(dec.slack_neg.sum()),
                              _fmt(dec.immediate_cost)])


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- commands -----------------------------------------------------------------


def cmd_run_sddp(cfg):
    net, model = load_inputs(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    sddp_cfg = sddp_mod.SddpConfig(
        backward_samples=cfg.backward_samples, scenarios=cfg.scenarios,
        forward_samples=cfg.forward_samples, max_iters=cfg.iterations,
        alpha=cfg.alpha, stop_rule=cfg.stop_rule, seed=cfg.seed,
        threads=cfg.threads)
    options = StageOptions(breakpoints=cfg.breakpoints)
    engine = sddp_mod.SddpEngine(net, model, options=options, config=sddp_cfg)
    lp_mod.reset_solve_count()
    t0 = time.perf_counter()
    history = []
    converged = True
    try:
        result = engine.run()
        history = result.history
        trajectories = result.trajectories
        iterations = result.iterations
    except MaxItersExceeded as exc:
        history = exc.history
        trajectories = None
        iterations = len(history)
        converged = False
    wall = time.perf_counter() - t0

    write_bounds_csv(os.path.join(cfg.out, "bounds.csv"), history)
    write_cuts_csv(os.path.join(cfg.out, "cuts.csv"), net, engine.pool)
    if trajectories is not None:
        write_trajectories_csv(os.path.join(cfg.out, "trajectories.csv"), net,
                               trajectories)
    last = history[-1]
    _write_json(os.path.join(cfg.out, "summary.json"), {
        "iterations": iterations,
        "converged": converged,
        "lower_bound": last.lower_bound,
        "upper_mean": last.upper_mean,
        "upper_sd": last.upper_sd,
        "ci": [last.ci[0], last.ci[1]],
        "wall_time_seconds": wall,
        "lp_solve_count": lp_mod.solve_count(),
        "cuts_per_period_per_iteration": cfg.backward_samples,
        "cut_pool_total": engine.pool.total(),
    })
    if not converged:
        raise MaxItersExceeded(
            f"ci stop rule unsatisfied after {iterations} iterations "
            f"(artifacts written to {cfg.out})", bounds=last, history=history)
    log.info("run-sddp done: %d iterations, lower %.4f, upper %.4f",
             iterations, last.lower_bound, last.upper_mean)
    return 0


def cmd_run_dp(cfg):
    net, model = load_inputs(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    options = StageOptions(breakpoints=cfg.breakpoints)
    lp_mod.reset_solve_count()
    t0 = time.perf_counter()
    grid, transitions = dp_mod.build_state_grid(net, model, counts=cfg.dp_grid,
                                                seed=cfg.seed)
    table = dp_mod.backward_dp(net, grid, transitions, net.horizon,
                               options=options, threads=cfg.threads)
    wall = time.perf_counter() - t0
    table.dump_csv(os.path.join(cfg.out, "value_table.csv"))
    _write_json(os.path.join(cfg.out, "dp_summary.json"), {
        "evaluations_per_period": table.evaluations_per_period,
        "total_evaluations": table.total_evaluations,
        "wall_time_seconds": wall,
        "lp_solve_count": lp_mod.solve_count(),
    })
    log.info("run-dp done: %d evaluations per period", table.evaluations_per_period)
    return 0


def _simulate_sddp(engine, scenarios):
    trajectories, bounds, _ = engine.forward_pass(scenarios)
    totals = np.array([sum(d.immediate_cost for d in path) for path in trajectories])
    return totals


def cmd_compare(cfg):
    net, model = load_inputs(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    options = StageOptions(breakpoints=cfg.breakpoints)
    init = initial_state(net, model)
    scenarios = wind_mod.simulate(model, [init.w_prev], net.horizon,
                                  cfg.sim_scenarios, [cfg.seed, 0x51D])

    sddp_cfg = sddp_mod.SddpConfig(
        backward_samples=cfg.backward_samples, scenarios=cfg.scenarios,
        forward_samples=cfg.forward_samples, max_iters=cfg.iterations,
        alpha=cfg.alpha, stop_rule=cfg.stop_rule, seed=cfg.seed,
        threads=cfg.threads)
    engine = sddp_mod.SddpEngine(net, model, options=options, config=sddp_cfg)
    t0 = time.perf_counter()
    try:
        engine.run()
    except MaxItersExceeded:
        log.info("compare: ci rule unsatisfied, using the final cut pool")
    sddp_train = time.perf_counter() - t0
    t0 = time.perf_counter()
    sddp_costs = _simulate_sddp(engine, scenarios)
    sddp_sim = time.perf_counter() - t0

    t0 = time.perf_counter()
    grid, transitions = dp_mod.build_state_grid(net, model, counts=cfg.dp_grid,
                                                seed=cfg.seed)
    table = dp_mod.backward_dp(net, grid, transitions, net.horizon,
                               options=options, threads=cfg.threads)
    dp_train = time.perf_counter() - t0
    t0 = time.perf_counter()
    _, dp_stats = dp_mod.simulate_dp_policy(net, table, grid, transitions, init,
                                            scenarios, options=options)
    dp_sim = time.perf_counter() - t0

    rows = [
        ("sddp", 1, sddp_costs.min(), sddp_costs.max(), sddp_costs.mean(),
         sddp_costs.std(ddof=1) if len(sddp_costs) > 1 else 0.0, sddp_train + sddp_sim),
        ("dp", 1, dp_stats["min"], dp_stats["max"], dp_stats["mean"], dp_stats["sd"],
         dp_train + dp_sim),
    ]
    with open(os.path.join(cfg.out, "compare.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "run", "min", "max", "mean", "sd", "cpu_seconds"])
        for method, run, mn, mx, mean, sd, cpu in rows:
            w.writerow([method, run, _fmt(mn), _fmt(mx), _fmt(mean), _fmt(sd), _fmt(cpu)])
    _write_json(os.path.join(cfg.out, "compare_summary.json"), {
        "sddp": {"mean": float(sddp_costs.mean()), "train_seconds": sddp_train,
                 "sim_seconds": sddp_sim},
        "dp": {"mean": dp_stats["mean"], "train_seconds": dp_train,
               "sim_seconds": dp_sim},
        "mean_gap_fraction": float((sddp_costs.mean() - dp_stats["mean"])
                                   / dp_stats["mean"]) if dp_stats["mean"] else 0.0,
    })
    return 0


def cmd_scale(cfg, case_list):
    os.makedirs(cfg.out, exist_ok=True)
    rows = []
    for case_path in case_list:
        model_path = os.path.splitext(case_path)[0] + ".model"
        entry = {"case": os.path.basename(case_path)}
        try:
            sub = replace(cfg, case=case_path, wind=model_path)
            net, model = load_inputs(sub)
            sddp_cfg = sddp_mod.SddpConfig(
                backward_samples=cfg.backward_samples, scenarios=cfg.scenarios,
                forward_samples=cfg.forward_samples, max_iters=cfg.iterations,
                alpha=cfg.alpha, stop_rule=cfg.stop_rule, seed=cfg.seed,
                threads=cfg.threads)
            engine = sddp_mod.SddpEngine(net, model,
                                         options=StageOptions(breakpoints=cfg.breakpoints),
                                         config=sddp_cfg)
            t0 = time.perf_counter()
            engine.run()
            wall = time.perf_counter() - t0
            entry.update(buses=len(net.buses), generators=len(net.generators),
                         lines=len(net.lines), storage=len(net.storage_devices),
                         wind=len(net.wind_farms), cpu_seconds=wall, status="ok")
        except Exception as exc:  # per-case failures recorded, run continues
            log.error("scale case %s failed: %s", case_path, exc)
            entry.update(buses="", generators="", lines="", storage="", wind="",
                         cpu_seconds="", status=f"error: {type(exc).__name__}")
        rows.append(entry)
    with open(os.path.join(cfg.out, "scale.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "buses", "generators", "lines", "storage", "wind",
                    "cpu_seconds", "status"])
        for e in rows:
            cpu = _fmt(e["cpu_seconds"]) if e["cpu_seconds"] != "" else ""
            w.writerow([e["case"], e["buses"], e["generators"], e["lines"],
                        e["storage"], e["wind"], cpu, e["status"]])
    return 0


def cmd_make_case(args):
    net, model = make_case(buses=args.buses, generators=args.generators,
                           lines=args.lines, storage=args.storage, wind=args.wind_farms,
                           horizon=args.horizon, seed=args.seed)
    problems = validate(net)
    if problems:
        raise GridSddpError("generated network failed validation: " + "; ".join(problems))
    write_fixture(net, model, args.out)
    print(args.out)
    return 0


def cmd_wind_fit(args):
    data = wind_mod.read_wind_csv(args.csv)
    capacity = None
    if args.capacity:
        capacity = [float(v) for v in args.capacity.split(",")]
    model = wind_mod.fit_lag1(data, capacity=capacity)
    wind_mod.save_wind_model(model, args.out)
    print(args.out)
    return 0


def cmd_wind_rescale(args):
    data = wind_mod.read_wind_csv(args.csv)
    capacity = np.array([float(v) for v in args.capacity.split(",")])
    scaled = wind_mod.rescale_to_capacity_factor(data, capacity, args.capacity_factor)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"farm_{m + 1}" for m in range(scaled.shape[1])])
        for t, row in enumerate(scaled, start=1):
            w.writerow([t] + [_fmt(v) for v in row])
    print(args.out)
    return 0


def cmd_bench_kernel(args):
    """Compare the compiled and pure-python simplex kernels on stage LPs."""
    from .lp import active_kernel, available_kernels, set_kernel, solve
    from .sddp import SddpConfig, SddpEngine

    net, model = make_case(buses=args.buses, generators=max(2, args.buses // 4),
                           lines=args.buses + args.buses // 2, storage=1, wind=1,
                           horizon=6, seed=args.seed)
    engine = SddpEngine(net, model, config=SddpConfig(
        backward_samples=4, scenarios=4, forward_samples=4, max_iters=1,
        stop_rule="fixed", seed=args.seed))
    engine.run()  # leaves a cut pool so benchmark stages carry cut rows
    tpl = engine._template(1)
    init = initial_state(net, model)
    winds = wind_mod.simulate(model, [init.w_prev], 1, args.solves, args.seed)[:, 0, :]

    os.makedirs(args.out, exist_ok=True)
    results = []
    saved = active_kernel()
    for kernel in available_kernels():
        set_kernel(kernel)
        tpl.instantiate(init, winds[0])
        solve(tpl.lp)  # warm the caches
        t0 = time.perf_counter()
        for i in range(args.solves):
            tpl.instantiate(init, winds[i])
            solve(tpl.lp)
        dt = time.perf_counter() - t0
        results.append((kernel, tpl.lp.num_cons, tpl.lp.num_vars, args.solves, dt,
                        args.solves / dt))
    set_kernel(saved)
    with open(os.path.join(args.out, "kernel_bench.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["kernel", "rows", "cols", "solves", "seconds", "solves_per_second"])
        for row in results:
            w.writerow([row[0], row[1], row[2], row[3], _fmt(row[4]), _fmt(row[5])])
    for kernel, rows_, cols, solves, dt, rate in results:
        print(f"{kernel:8s} {rows_:4d}x{cols:<4d}  {solves} solves in {dt:.3f}s "
              f"({rate:.0f}/s)")
    return 0


# -- argument plumbing ---------------------------------------------------------


def _add_experiment_flags(sub):
    sub.add_argument("--case", required=True)
    sub.add_argument("--wind", required=True)
    sub.add_argument("--horizon", type=int, default=0)
    sub.add_argument("--iterations", type=int, default=4)
    sub.add_argument("--backward-samples", type=int, default=25, dest="backward_samples")
    sub.add_argument("--scenarios", type=int, default=25)
    sub.add_argument("--forward-samples", type=int, default=25, dest="forward_samples")
    sub.add_argument("--alpha", type=float, default=0.05)
    sub.add_argument("--stop-rule", choices=["ci", "fixed"], default="fixed",
                     dest="stop_rule")
    sub.add_argument("--dp-grid", default="6,6,7", dest="dp_grid")
    sub.add_argument("--sim-scenarios", type=int, default=100, dest="sim_scenarios")
    sub.add_argument("--breakpoints", type=int, default=11)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument("--out", default="out")


def _config_from(args):
    grid = tuple(int(v) for v in args.dp_grid.split(","))
    if len(grid) != 3:
        raise GridSddpError("--dp-grid expects three comma-separated counts: s,g,w")
    return ExperimentConfig(
        case=args.case, wind=args.wind, horizon=args.horizon,
        iterations=args.iterations, backward_samples=args.backward_samples,
        scenarios=args.scenarios, forward_samples=args.forward_samples,
        alpha=args.alpha, stop_rule=args.stop_rule, dp_grid=grid,
        sim_scenarios=args.sim_scenarios, breakpoints=args.breakpoints,
        seed=args.seed, threads=args.threads, out=args.out)


def build_parser():
    parser = argparse.ArgumentParser(prog="gridsddp",
                                     description="Stochastic dispatch scheduling "
                                                 "with SDDP and a tabular DP baseline")
    subs = parser.add_subparsers(dest="command", required=True)

    for name in ("run-sddp", "run-dp", "compare"):
        sub = subs.add_parser(name)
        _add_experiment_flags(sub)

    sub = subs.add_parser("scale")
    sub.add_argument("--cases", required=True,
                     help="comma-separated case files; each expects a "
                          "matching .model next to it")
    _add_experiment_flags(sub)
    # scale reuses the shared flags except --case/--wind, which come per case
    for action in list(sub._actions):
        if action.dest in ("case", "wind"):
            action.required = False
            action.default = ""

    sub = subs.add_parser("make-case")
    sub.add_argument("--buses", type=int, required=True)
    sub.add_argument("--generators", type=int, required=True)
    sub.add_argument("--lines", type=int, required=True)
    sub.add_argument("--storage", type=int, default=1)
    sub.add_argument("--wind-farms", type=int, default=1, dest="wind_farms")
    sub.add_argument("--horizon", type=int, default=24)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)

    sub = subs.add_parser("wind-fit")
    sub.add_argument("--csv", required=True)
    sub.add_argument("--capacity", default="")
    sub.add_argument("--out", required=True)

    sub = subs.add_parser("wind-rescale")
    sub.add_argument("--csv", required=True)
    sub.add_argument("--capacity", required=True)
    sub.add_argument("--capacity-factor", type=float, required=True,
                     dest="capacity_factor")
    sub.add_argument("--out", required=True)

    sub = subs.add_parser("bench-kernel")
    sub.add_argument("--buses", type=int, default=9)
    sub.add_argument("--solves", type=int, default=200)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", default="out")

    return parser


def main(argv=None):
    level = os.environ.get("GRIDSDDP_LOG", "error").lower()
    logging.basicConfig(
        level={"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}.get(level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s")

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("run-sddp", "run-dp", "compare", "scale"):
            cfg = _config_from(args)
            if args.command == "scale":
                case_list = [p for p in args.cases.split(",") if p]
                return cmd_scale(cfg, case_list)
            problems = cfg.check()
            if problems:
                raise GridSddpError("; ".join(problems))
            if args.command == "run-sddp":
                return cmd_run_sddp(cfg)
            if args.command == "run-dp":
                return cmd_run_dp(cfg)
            return cmd_compare(cfg)
        if args.command == "make-case":
            return cmd_make_case(args)
        if args.command == "wind-fit":
            return cmd_wind_fit(args)
        if args.command == "wind-rescale":
            return cmd_wind_rescale(args)
        if args.command == "bench-kernel":
            return cmd_bench_kernel(args)
        raise GridSddpError(f"unknown command {args.command!r}")
    except GridSddpError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        log.debug("unhandled failure", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
