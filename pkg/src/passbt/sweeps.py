"""Experiment sweeps, overhead accounting, and CSV emission.

All sweep outputs are CSV rows with a header and 12-significant-digit
numbers, so repeated runs of the same scenario are byte-identical.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .codebook import advance_phase, generate_positions
from .errors import InvalidParameterError
from .mwmu import WaveguideArray, run_increased_3sbt
from .noma import run_improved_3sbt
from .oracle import conventional_ula_bound, fixed_pinching_bound, tdma_wrapper
from .physics import coherent_sum, derive_params, rate_from_signal
from .scenario import Scenario, codeword_span_margin, dbm_to_watts
from .training import run_3sbt

WORKERS_ENV = "PASSBT_WORKERS"

SWEEP_VARIABLES = ("antenna_count", "power_dbm", "layer_index", "phase_offset", "frequency")


@dataclass(frozen=True)
class SweepSpec:
    """One swept variable, its values, and where the CSV goes."""

    variable: str
    values: tuple
    output_path: str | None = None

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise InvalidParameterError(
                f"unknown sweep variable {self.variable!r}; choose from {SWEEP_VARIABLES}"
            )
        if len(self.values) == 0:
            raise InvalidParameterError("sweep needs at least one value")


def write_csv(path, header, rows) -> None:
    """Write rows with 12-significant-digit float formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [f"{v:.12g}" if isinstance(v, float) else v for v in row]
            )


# ---------------------------------------------------------------------------
# Overhead accounting (Table-style closed forms)
# ---------------------------------------------------------------------------


def stage3_cell_counts(x_len, y_len, branches, l1, l2, cell_threshold):
    """Minimal stage-3 grid for a region narrowed by l1 + l2 layers."""
    k1 = max(1, math.ceil(x_len / branches**l1 / cell_threshold))
    k2 = max(1, math.ceil(y_len / branches**l2 / cell_threshold))
    return k1, k2


def proposed_overhead(branches, l1, l2, per_user_cells) -> int:
    """M K (L1 + L2) plus the product of per-user stage-3 grids."""
    m_users = len(per_user_cells)
    product = 1
    for k1, k2 in per_user_cells:
        product *= k1 * k2
    return m_users * branches * (l1 + l2) + product


def exhaustive_overhead(branches, l1, l2, per_user_cells) -> int:
    """K^(M (L1+L2)) times the product of per-user stage-3 grids."""
    m_users = len(per_user_cells)
    product = 1
    for k1, k2 in per_user_cells:
        product *= k1 * k2
    return branches ** (m_users * (l1 + l2)) * product


def overhead_table(hp, region_size: float = 10.0):
    """All training-overhead rows for the desk-scale setup.

    Every user occupies a region_size x region_size area, so the per-user
    stage-3 grid is the same for each scheme.  Counts are exact integers;
    the full-scale exhaustive entries are symbolic (never executed).

    Returns:
        Rows of (scenario, scheme, n_users, measurements).
    """
    cells = stage3_cell_counts(
        region_size,
        region_size,
        hp.branches,
        hp.stage1_layers,
        hp.stage2_layers,
        hp.exhaustive_cell,
    )
    k, l1, l2 = hp.branches, hp.stage1_layers, hp.stage2_layers
    rows = [
        ("swsu", "2d_exhaustive", 1, exhaustive_overhead(k, l1, l2, [cells])),
        ("swsu", "proposed", 1, proposed_overhead(k, l1, l2, [cells])),
        ("swmu", "2d_exhaustive", 2, exhaustive_overhead(k, l1, l2, [cells] * 2)),
        ("swmu", "2d_exhaustive", 3, exhaustive_overhead(k, l1, l2, [cells] * 3)),
        ("swmu", "proposed", 2, proposed_overhead(k, l1, l2, [cells] * 2)),
        ("swmu", "proposed", 3, proposed_overhead(k, l1, l2, [cells] * 3)),
        ("mwmu", "2d_exhaustive", 2, exhaustive_overhead(k, l1, l2, [cells] * 2)),
        ("mwmu", "proposed", 2, proposed_overhead(k, l1, l2, [cells] * 2)),
    ]
    return rows


# ---------------------------------------------------------------------------
# Scheme evaluation per scenario
# ---------------------------------------------------------------------------


def run_swsu(scenario: Scenario):
    """Single-user training on the scenario; returns (result, rate)."""
    result = run_3sbt(
        scenario.users[0],
        scenario.regions[0],
        scenario.hyperparams,
        scenario.waveguides[0],
        scenario.guard,
        scenario.params,
        rng=scenario.rng(),
    )
    rate = rate_from_signal(result.best_metric**2, 0.0, scenario.params.noise_power)
    return result, rate


def run_swmu(scenario: Scenario):
    """NOMA training; returns the result plus its TDMA counterpart."""
    result = run_improved_3sbt(
        scenario.users,
        scenario.regions,
        scenario.hyperparams,
        scenario.waveguides[0],
        scenario.guard,
        scenario.params,
        scenario.alpha,
        scenario.noise_powers,
        merge_threshold=scenario.merge_threshold,
        budget=scenario.combination_budget,
        rng=scenario.rng(),
    )
    tdma_rate = tdma_wrapper(result.joint.per_user_gains, scenario.noise_powers)
    return result, result.joint.sum_rate, tdma_rate


def run_mwmu(scenario: Scenario):
    """Increased-dimensional training; returns (result, sum_rate)."""
    array = WaveguideArray(
        waveguides=tuple(scenario.waveguides),
        antennas_per_waveguide=scenario.hyperparams.antenna_count,
    )
    result = run_increased_3sbt(
        scenario.users,
        scenario.regions,
        array,
        scenario.hyperparams,
        scenario.guard,
        scenario.params,
        scenario.noise_powers,
        budget=scenario.combination_budget,
        rng=scenario.rng(),
    )
    return result, result.sum_rate


def _bounds_for_user(scenario: Scenario, user, waveguide):
    fixed = fixed_pinching_bound(
        user, scenario.hyperparams.antenna_count, waveguide, scenario.params
    )
    conv = conventional_ula_bound(
        user, scenario.hyperparams.antenna_count, waveguide, scenario.params
    )
    return fixed, conv


# ---------------------------------------------------------------------------
# Phase-pattern sweep
# ---------------------------------------------------------------------------


def sweep_phase_pattern(scenario: Scenario, offsets):
    """Rate versus per-antenna arrival-phase progression at the user.

    The user's own codeword is phase-aligned (every antenna contributes
    phase 0).  For offset phi, entry n is slid toward the waveguide end
    until its arrival phase has grown by (n * phi) mod 2 pi, so successive
    antennas arrive phi apart;  phi = 0 reproduces the aligned codeword and
    phi = pi fully interleaves the contributions.  Rows where a shifted pair
    violates the guard distance are flagged.

    Returns:
        Rows of (offset_rad, rate_bps_hz, guard_ok).
    """
    if scenario.mode != "swsu":
        raise InvalidParameterError("phase-pattern sweeps run in swsu mode")
    user = scenario.users[0]
    waveguide = scenario.waveguides[0]
    params = scenario.params
    n = scenario.hyperparams.antenna_count

    base = generate_positions(
        np.array([user.x]), np.array([user.y]), waveguide, n, scenario.guard, params
    )[0]

    rows = []
    for phi in offsets:
        deltas = np.mod(np.arange(n) * float(phi), 2.0 * math.pi)
        shifted = advance_phase(base, deltas, user.x, user.y, waveguide, params)
        spaced = np.diff(np.sort(shifted))
        guard_ok = bool((spaced >= scenario.guard - 1e-12).all()) if n > 1 else True
        amplitude = math.sqrt(params.total_power / n) * coherent_sum(
            shifted, waveguide, user.x, user.y, params
        )
        rate = rate_from_signal(abs(amplitude) ** 2, 0.0, params.noise_power)
        rows.append((float(phi), rate, int(guard_ok)))
    return rows


# ---------------------------------------------------------------------------
# Generic sweeps
# ---------------------------------------------------------------------------


def scenario_with_value(scenario: Scenario, variable: str, value) -> Scenario:
    """A copy of the scenario with one swept variable applied.

    Frequency sweeps re-derive the wavelength-dependent guard distance
    (lambda / 2) and waveguide margins, mirroring how the guard scales with
    the carrier.
    """
    if variable == "antenna_count":
        hp = replace(scenario.hyperparams, antenna_count=int(value))
        waveguides = _with_margin(scenario, hp.antenna_count, scenario.guard, scenario.params)
        return replace(scenario, hyperparams=hp, waveguides=waveguides)
    if variable == "power_dbm":
        params = replace(scenario.params, total_power=dbm_to_watts(float(value)))
        return replace(scenario, params=params)
    if variable == "frequency":
        params = derive_params(
            float(value),
            scenario.params.refractive_index,
            scenario.params.waveguide_height,
            scenario.params.total_power,
            scenario.params.noise_power,
        )
        guard = params.wavelength / 2.0
        waveguides = _with_margin(scenario, scenario.hyperparams.antenna_count, guard, params)
        return replace(scenario, params=params, guard=guard, waveguides=waveguides)
    raise InvalidParameterError(f"variable {variable!r} does not rescale a scenario")


def _with_margin(scenario, n_antennas, guard, params):
    margin = codeword_span_margin(n_antennas, guard, params.wavelength)
    hull = max(r.x_max for r in scenario.regions)
    return [
        replace(wg, x_end=hull + margin) for wg in scenario.waveguides
    ]


def _evaluate_point(scenario: Scenario, variable: str, value):
    """All scheme rows for one sweep value."""
    current = scenario_with_value(scenario, variable, value)
    rows = []
    if current.mode == "swsu":
        result, rate = run_swsu(current)
        rows.append((variable, float(value), "dynamic_pinching", rate, result.measurements))
        fixed, conv = _bounds_for_user(current, current.users[0], current.waveguides[0])
        rows.append((variable, float(value), "fixed_pinching_bound", fixed, 0))
        rows.append((variable, float(value), "conventional_ula_bound", conv, 0))
    elif current.mode == "swmu":
        result, sum_rate, tdma_rate = run_swmu(current)
        rows.append((variable, float(value), "dynamic_pinching_noma", sum_rate, result.measurements))
        rows.append((variable, float(value), "dynamic_pinching_tdma", tdma_rate, result.measurements))
        fixed_rates = []
        conv_rates = []
        for user in current.users:
            fixed, conv = _bounds_for_user(current, user, current.waveguides[0])
            fixed_rates.append(fixed)
            conv_rates.append(conv)
        rows.append(
            (variable, float(value), "fixed_pinching_tdma_bound",
             sum(fixed_rates) / len(fixed_rates), 0)
        )
        rows.append(
            (variable, float(value), "conventional_ula_tdma_bound",
             sum(conv_rates) / len(conv_rates), 0)
        )
    else:
        result, sum_rate = run_mwmu(current)
        rows.append((variable, float(value), "dynamic_pinching_mwmu", sum_rate, result.measurements))
    return rows


def sweep_run(scenario: Scenario, spec: SweepSpec):
    """Evaluate every sweep value; rows keep the spec's value order.

    Points run in a thread pool sized by the PASSBT_WORKERS environment
    variable (default 1); ordering is restored by index before returning.

    Returns:
        (header, rows) ready for write_csv.
    """
    header = ["variable", "value", "scheme", "rate_bps_hz", "measurements"]
    if spec.variable == "phase_offset":
        rows = [
            ("phase_offset", offset, "dynamic_pinching", rate, 0, guard_ok)
            for offset, rate, guard_ok in sweep_phase_pattern(scenario, spec.values)
        ]
        return header + ["guard_ok"], rows
    if spec.variable == "layer_index":
        if scenario.mode != "swsu":
            raise InvalidParameterError("layer sweeps run in swsu mode")
        result, _ = run_swsu(scenario)
        rows = []
        for row in result.trace:
            rate = rate_from_signal(row.best_metric**2, 0.0, scenario.params.noise_power)
            rows.append(("layer_index", float(row.layer), "dynamic_pinching", rate, row.n_active))
        wanted = {int(v) for v in spec.values}
        rows = [r for r in rows if int(r[1]) in wanted]
        return header, rows

    workers = max(1, int(os.environ.get(WORKERS_ENV, "1")))
    if workers == 1:
        chunks = [_evaluate_point(scenario, spec.variable, v) for v in spec.values]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_evaluate_point, scenario, spec.variable, v) for v in spec.values
            ]
            chunks = [f.result() for f in futures]
    rows = [row for chunk in chunks for row in chunk]
    return header, rows
