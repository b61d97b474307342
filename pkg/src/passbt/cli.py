"""Command-line interface.

Subcommands:
    codebook   generate a sampling-grid codebook and export it as CSV
    train      run beam training for the scenario's mode (swsu|swmu|mwmu)
    oracle     full 2D exhaustive reference search (budget-guarded)
    sweep      evaluate schemes over a swept variable; CSV plus figure
    overhead   closed-form training-overhead table

Exit codes: 0 success, 2 validation error, 3 budget exceeded.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .codebook import Codebook
from .errors import BudgetExceededError, PassbtError
from .oracle import OracleBudget, exhaustive_2d
from .physics import rate_from_signal
from .plotting import figure_path_for, plot_sweep, plot_trace
from .scenario import load_scenario
from .sweeps import (
    SweepSpec,
    overhead_table,
    run_mwmu,
    run_swmu,
    run_swsu,
    stage3_cell_counts,
    sweep_run,
    write_csv,
)
from .training import grid_midpoints

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BUDGET = 3


def _add_scenario_args(parser):
    parser.add_argument("--scenario", help="scenario file; defaults apply when omitted")
    parser.add_argument("--mode", choices=("swsu", "swmu", "mwmu"), help="override mode")
    parser.add_argument("--users", type=int, help="override user count (template locations)")
    parser.add_argument("--frequency-hz", type=float, help="override carrier frequency")
    parser.add_argument("--power-w", type=float, help="override total power in W")
    parser.add_argument("--power-dbm", type=float, help="override total power in dBm")
    parser.add_argument("--antenna-count", type=int, help="override activated antenna count")
    parser.add_argument("--branches", type=int, help="override branches per layer (K)")
    parser.add_argument("--stage1-layers", type=int, help="override L1")
    parser.add_argument("--stage2-layers", type=int, help="override L2")
    parser.add_argument("--exhaustive-cell-m", type=float, help="override d_ES")
    parser.add_argument("--seed", type=int, help="override RNG seed")
    parser.add_argument("--noise", action="store_true", help="enable measurement noise")


def _overrides_from(args) -> dict:
    overrides = {}
    if args.mode:
        overrides[(None, "mode")] = args.mode
    if args.users is not None:
        overrides[("users", "count")] = args.users
    if args.frequency_hz is not None:
        overrides[("system", "carrier_frequency_hz")] = repr(args.frequency_hz)
    if args.power_w is not None:
        overrides[("system", "total_power_w")] = repr(args.power_w)
    if args.power_dbm is not None:
        overrides[("system", "total_power_dbm")] = repr(args.power_dbm)
    if args.antenna_count is not None:
        overrides[("training", "antenna_count")] = args.antenna_count
    if args.branches is not None:
        overrides[("training", "branches_per_layer")] = args.branches
    if args.stage1_layers is not None:
        overrides[("training", "stage1_layers")] = args.stage1_layers
    if args.stage2_layers is not None:
        overrides[("training", "stage2_layers")] = args.stage2_layers
    if args.exhaustive_cell_m is not None:
        overrides[("training", "exhaustive_cell_m")] = repr(args.exhaustive_cell_m)
    if args.seed is not None:
        overrides[(None, "seed")] = args.seed
    if args.noise:
        overrides[("system", "noise_enabled")] = "true"
    return overrides


def _load(args):
    return load_scenario(args.scenario, _overrides_from(args))


def _cmd_codebook(args) -> int:
    scenario = _load(args)
    waveguide = scenario.waveguides[0]
    region = scenario.regions[0]
    book = Codebook(n_antennas=scenario.hyperparams.antenna_count)
    gx, gy = grid_midpoints(region, args.grid_x, args.grid_y)
    for x, y in zip(gx, gy):
        book.get_or_generate(float(x), float(y), waveguide, scenario.guard, scenario.params)
    book.to_csv(args.out)
    print(f"codebook: {len(book)} codewords x {book.n_antennas} antennas -> {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    scenario = _load(args)
    noise = scenario.params.noise_power
    if scenario.mode == "swsu":
        result, rate = run_swsu(scenario)
        print(
            f"swsu: rate {rate:.6g} bits/s/Hz, estimate "
            f"({result.x_opt:.6g}, {result.y_opt:.6g}), {result.measurements} measurements"
        )
        rows = [
            (row.layer, row.stage, row.n_active,
             rate_from_signal(row.best_metric**2, 0.0, noise))
            for row in result.trace
        ]
        if args.csv:
            write_csv(args.csv, ["layer", "stage", "n_active", "rate_bps_hz"], rows)
            print(f"trace -> {args.csv}")
            if not args.no_figure:
                fig = plot_trace(result.trace, noise, figure_path_for(args.csv))
                print(f"figure -> {fig}")
    elif scenario.mode == "swmu":
        result, sum_rate, tdma_rate = run_swmu(scenario)
        print(
            f"swmu: NOMA sum rate {sum_rate:.6g} bits/s/Hz "
            f"(TDMA {tdma_rate:.6g}), {result.measurements} measurements"
        )
        cluster_of = {}
        for c_idx, cluster in enumerate(result.clusters):
            for m in cluster.users:
                cluster_of[m] = (c_idx, cluster.member_count)
        rows = [
            (m, cluster_of[m][0], cluster_of[m][1],
             user_result.x_opt, user_result.y_opt,
             float(result.joint.per_user_rates[m]),
             float(result.joint.per_user_gains[m]))
            for m, user_result in enumerate(result.per_user)
        ]
        if args.csv:
            write_csv(
                args.csv,
                ["user", "cluster", "cluster_size", "x_est", "y_est",
                 "rate_bps_hz", "effective_gain_w"],
                rows,
            )
            print(f"results -> {args.csv}")
    else:
        result, sum_rate = run_mwmu(scenario)
        print(
            f"mwmu: sum rate {sum_rate:.6g} bits/s/Hz, "
            f"{result.measurements} measurements"
        )
        rows = [
            (m, user_result.x_opt, user_result.y_opt,
             float(result.per_user_sinr[m]), float(result.per_user_rates[m]))
            for m, user_result in enumerate(result.per_user)
        ]
        if args.csv:
            write_csv(
                args.csv,
                ["user", "x_est", "y_est", "sinr", "rate_bps_hz"],
                rows,
            )
            print(f"results -> {args.csv}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    scenario = _load(args)
    hp = scenario.hyperparams
    region = scenario.regions[0]
    cells = stage3_cell_counts(
        region.x_len, region.y_len, hp.branches, hp.stage1_layers, hp.stage2_layers,
        hp.exhaustive_cell,
    )
    nx = hp.branches**hp.stage1_layers * cells[0]
    ny = hp.branches**hp.stage2_layers * cells[1]
    result = exhaustive_2d(
        scenario.users[0],
        region,
        nx,
        ny,
        hp.antenna_count,
        scenario.waveguides[0],
        scenario.guard,
        scenario.params,
        budget=OracleBudget(args.budget),
    )
    rate = rate_from_signal(result.best_metric**2, 0.0, scenario.params.noise_power)
    print(
        f"oracle: rate {rate:.6g} bits/s/Hz at ({result.best_x:.6g}, {result.best_y:.6g}), "
        f"{result.evaluations} evaluations"
    )
    if args.csv:
        write_csv(
            args.csv,
            ["best_x", "best_y", "rate_bps_hz", "evaluations"],
            [(result.best_x, result.best_y, rate, result.evaluations)],
        )
        print(f"results -> {args.csv}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    scenario = _load(args)
    values = tuple(float(v) for v in args.values)
    spec = SweepSpec(variable=args.variable, values=values, output_path=args.out)
    header, rows = sweep_run(scenario, spec)
    write_csv(args.out, header, rows)
    print(f"sweep: {len(rows)} rows -> {args.out}")
    if not args.no_figure and rows:
        fig = plot_sweep(header, rows, figure_path_for(args.out))
        print(f"figure -> {fig}")
    return EXIT_OK


def _cmd_overhead(args) -> int:
    scenario = _load(args)
    rows = overhead_table(scenario.hyperparams, region_size=args.region_size)
    if args.csv:
        write_csv(args.csv, ["scenario", "scheme", "n_users", "measurements"], rows)
        print(f"table -> {args.csv}")
    width = max(len(str(r[3])) for r in rows)
    for scenario_name, scheme, m, count in rows:
        print(f"{scenario_name:5s} {scheme:14s} M={m}  {count:>{width}}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="passbt",
        description="Codebook-based beam training for pinching-antenna systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cb = sub.add_parser("codebook", help="generate and export a codebook grid")
    _add_scenario_args(p_cb)
    p_cb.add_argument("--grid-x", type=int, default=16, help="sampling points along x")
    p_cb.add_argument("--grid-y", type=int, default=16, help="sampling points along y")
    p_cb.add_argument("--out", required=True, help="output CSV path")
    p_cb.set_defaults(func=_cmd_codebook)

    p_train = sub.add_parser("train", help="run beam training")
    _add_scenario_args(p_train)
    p_train.add_argument("--csv", help="write the trace/results CSV here")
    p_train.add_argument("--no-figure", action="store_true", help="skip figure rendering")
    p_train.set_defaults(func=_cmd_train)

    p_oracle = sub.add_parser("oracle", help="full 2D exhaustive reference")
    _add_scenario_args(p_oracle)
    p_oracle.add_argument("--budget", type=int, default=2**22, help="max evaluations")
    p_oracle.add_argument("--csv", help="write the result CSV here")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_sweep = sub.add_parser("sweep", help="sweep a variable and emit CSV + figure")
    _add_scenario_args(p_sweep)
    p_sweep.add_argument(
        "--variable",
        required=True,
        choices=("antenna_count", "power_dbm", "layer_index", "phase_offset", "frequency"),
    )
    p_sweep.add_argument("--values", nargs="+", required=True, help="swept values")
    p_sweep.add_argument("--out", required=True, help="output CSV path")
    p_sweep.add_argument("--no-figure", action="store_true", help="skip figure rendering")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_over = sub.add_parser("overhead", help="closed-form overhead table")
    _add_scenario_args(p_over)
    p_over.add_argument("--region-size", type=float, default=10.0, help="per-user region edge, m")
    p_over.add_argument("--csv", help="write the table CSV here")
    p_over.set_defaults(func=_cmd_overhead)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceededError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BUDGET
    except PassbtError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except np.linalg.LinAlgError as err:  # defensive: numerical failure
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
