"""Brute-force references and baseline schemes for acceptance comparisons.

The exhaustive 2D search is the ground truth the staged training is measured
against; fixed-pinching and conventional-ULA rates are genie phase-matched
upper bounds for their layouts; the TDMA wrapper serves the trained users one
at a time with the full per-slot power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codebook import generate_positions
from .errors import BudgetExceededError, InvalidParameterError
from .physics import Point3, SystemParams, Waveguide, coherent_sum, rate_from_signal
from .training import SamplingRange, grid_midpoints

DEFAULT_EVALUATION_BUDGET = 2**22


@dataclass(frozen=True)
class OracleBudget:
    """Hard cap on executed oracle evaluations."""

    max_evaluations: int = DEFAULT_EVALUATION_BUDGET

    def __post_init__(self):
        if self.max_evaluations < 1:
            raise InvalidParameterError("evaluation budget must be >= 1")

    def check(self, required: int) -> None:
        if required > self.max_evaluations:
            raise BudgetExceededError(
                f"exhaustive search needs {required} evaluations, "
                f"budget is {self.max_evaluations}",
                required=required,
                budget=self.max_evaluations,
            )


@dataclass
class ExhaustiveResult:
    """Argmax of a full-grid codeword scan."""

    best_x: float
    best_y: float
    best_metric: float
    best_positions: np.ndarray
    evaluations: int


def exhaustive_2d(
    user: Point3,
    region: SamplingRange,
    cells_x: int,
    cells_y: int,
    n_antennas: int,
    waveguide: Waveguide,
    guard: float,
    params: SystemParams,
    budget: OracleBudget | None = None,
) -> ExhaustiveResult:
    """Measure |r| at every grid-cell midpoint codeword and take the argmax.

    Ties break toward the smaller (x-index, y-index) pair.  The evaluation
    count equals cells_x * cells_y.

    Raises:
        BudgetExceededError: when the grid exceeds the budget.
    """
    if cells_x < 1 or cells_y < 1:
        raise InvalidParameterError("cell counts must be >= 1")
    budget = budget or OracleBudget()
    evaluations = cells_x * cells_y
    budget.check(evaluations)

    gx, gy = grid_midpoints(region, cells_x, cells_y)
    positions = generate_positions(gx, gy, waveguide, n_antennas, guard, params)
    amplitude = math.sqrt(params.total_power / n_antennas) * coherent_sum(
        positions, waveguide, user.x, user.y, params
    )
    metrics = np.abs(amplitude)
    best = int(np.argmax(metrics))  # first max: lexicographic tie-break
    return ExhaustiveResult(
        best_x=float(gx[best]),
        best_y=float(gy[best]),
        best_metric=float(metrics[best]),
        best_positions=positions[best],
        evaluations=evaluations,
    )


def exhaustive_2d_multiuser(
    users: list[Point3],
    regions: list[SamplingRange],
    cells: list[tuple[int, int]],
    objective,
    budget: OracleBudget | None = None,
):
    """Cross-product exhaustive scan for several users.

    `objective` maps one midpoint per user, shape (M, 2), to a scalar; the
    count is the product of per-user grid sizes.  Intended for reduced-scale
    verification; the symbolic full-scale counts are reported by the
    overhead table instead.
    """
    budget = budget or OracleBudget()
    required = 1
    for k1, k2 in cells:
        required *= k1 * k2
    budget.check(required)

    grids = [grid_midpoints(region, k1, k2) for region, (k1, k2) in zip(regions, cells)]
    best_value = -math.inf
    best_choice = None
    sizes = [len(g[0]) for g in grids]
    index = [0] * len(users)
    for flat in range(required):
        rem = flat
        for m in range(len(users) - 1, -1, -1):
            index[m] = rem % sizes[m]
            rem //= sizes[m]
        points = [(grids[m][0][index[m]], grids[m][1][index[m]]) for m in range(len(users))]
        value = objective(points)
        if value > best_value:
            best_value = value
            best_choice = list(points)
    return best_choice, best_value, required


def _phase_matched_rate(distances: np.ndarray, params: SystemParams) -> float:
    """Rate with all per-antenna phases assumed aligned (coherent magnitude sum)."""
    n = distances.shape[0]
    amplitude = math.sqrt(params.total_power / n) * math.sqrt(params.attenuation) * float(
        np.sum(1.0 / distances)
    )
    return rate_from_signal(amplitude**2, 0.0, params.noise_power)


def fixed_pinching_bound(
    user: Point3, n_antennas: int, waveguide: Waveguide, params: SystemParams
) -> float:
    """Upper-bound rate of half-wavelength-spaced antennas centered on the user.

    The array is placed on the waveguide at the user's x (genie placement)
    and phase matching is assumed.
    """
    if n_antennas < 1:
        raise InvalidParameterError("antenna count must be >= 1")
    offsets = (np.arange(n_antennas) - (n_antennas - 1) / 2.0) * (params.wavelength / 2.0)
    xs = user.x + offsets
    distances = np.sqrt(
        (xs - user.x) ** 2 + (waveguide.y - user.y) ** 2 + waveguide.height**2
    )
    return _phase_matched_rate(distances, params)


def conventional_ula_bound(
    user: Point3,
    n_antennas: int,
    waveguide: Waveguide,
    params: SystemParams,
    bs_x: float | None = None,
) -> float:
    """Upper-bound rate of a half-wavelength ULA fixed at the base station.

    The array runs along the waveguide axis, centered at the feed (= BS)
    location, with phase matching assumed.
    """
    if n_antennas < 1:
        raise InvalidParameterError("antenna count must be >= 1")
    center = waveguide.feed_x if bs_x is None else bs_x
    offsets = (np.arange(n_antennas) - (n_antennas - 1) / 2.0) * (params.wavelength / 2.0)
    xs = center + offsets
    distances = np.sqrt(
        (xs - user.x) ** 2 + (waveguide.y - user.y) ** 2 + waveguide.height**2
    )
    return _phase_matched_rate(distances, params)


def tdma_wrapper(signal_powers, noise_powers) -> float:
    """Time-shared sum rate: each user alone in 1/M of the time, full power.

    Args:
        signal_powers: per-user received signal power under the scheme's
            antenna configuration with no power-domain sharing (alpha = 1).
        noise_powers: per-user noise powers.

    Returns:
        (1/M) * sum_m log2(1 + S_m / sigma_m^2).
    """
    signal_powers = np.asarray(signal_powers, dtype=float)
    noise_powers = np.asarray(noise_powers, dtype=float)
    m_users = signal_powers.shape[0]
    if m_users < 1:
        raise InvalidParameterError("at least one user is required")
    total = 0.0
    for s, sigma in zip(signal_powers, noise_powers):
        total += rate_from_signal(float(s), 0.0, float(sigma))
    return total / m_users
