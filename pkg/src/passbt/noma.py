"""Multi-user NOMA over a single waveguide.

The activated antennas are split into per-user clusters that first train
separately (stages 1-2 of the single-user scheme, restricted to the cluster).
Clusters whose users turned out to be close are merged, or regenerated on
opposite alternation sides when only their x-estimates collide.  A final
joint scan over all cross-user cell combinations maximizes the SIC sum rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codebook import Codebook
from .errors import BudgetExceededError, InvalidParameterError
from .physics import Point3, SystemParams, Waveguide, coherent_sum
from .training import (
    SamplingRange,
    TrainingHyperparams,
    TrainingResult,
    exhaustive_cell_counts,
    grid_midpoints,
    run_stages12,
)

DEFAULT_COMBINATION_BUDGET = 2**22


def cluster_antennas(n_antennas: int, n_users: int) -> list[int]:
    """Cluster sizes: ceil(N/M) for the first (N mod M) clusters, floor after.

    Raises:
        InvalidParameterError: if N < M or M < 1.
    """
    if n_users < 1:
        raise InvalidParameterError(f"user count must be >= 1, got {n_users}")
    if n_antennas < n_users:
        raise InvalidParameterError(
            f"cannot split {n_antennas} antennas into {n_users} clusters"
        )
    head = n_antennas % n_users
    big, small = math.ceil(n_antennas / n_users), math.floor(n_antennas / n_users)
    return [big if m < head else small for m in range(n_users)]


def noma_received_strength(
    user: Point3,
    positions,
    waveguide: Waveguide,
    params: SystemParams,
    alpha_m: float,
    total_antennas: int,
    rng: np.random.Generator | None = None,
):
    """Desired-signal strength alpha_m |h^H g|^2 with g = sqrt(P/N) entries.

    `positions` may cover all activated antennas or only one cluster (the
    separated-training variant); the per-antenna amplitude always uses the
    total activated count.
    """
    xs = np.asarray(positions, dtype=float)
    if xs.shape[-1] == 0:
        raise InvalidParameterError("cluster must contain at least one antenna")
    amplitude = math.sqrt(params.total_power / total_antennas) * coherent_sum(
        xs, waveguide, user.x, user.y, params
    )
    if rng is not None:
        scale = math.sqrt(params.noise_power / 2.0)
        amplitude = amplitude + rng.normal(0.0, scale, np.shape(amplitude)) + 1j * rng.normal(
            0.0, scale, np.shape(amplitude)
        )
    return alpha_m * np.abs(amplitude) ** 2


def sic_rates(gains, alpha, noise_powers, order=None):
    """Per-user SIC rates for downlink power-domain NOMA.

    Users are ranked by ascending effective gain; the rank-m user's signal is
    decoded by every rank j >= m at rate
    log2(1 + g_j a_m / (g_j sum_{i>m} a_i + sigma_j^2)), and the achievable
    rate of that signal is the minimum over the decoders.

    Args:
        gains: effective channel gains |h_m^H g|^2, indexed by user.
        alpha: power-allocation coefficients indexed by SIC rank (weakest
            user first); must sum to 1 within 1e-9.
        noise_powers: per-user noise powers, indexed by user.
        order: optional frozen SIC permutation (user indices, ascending
            gain); recomputed from `gains` when omitted.

    Returns:
        (rates, order): per-user rates aligned with the input user indexing,
        and the SIC permutation used.
    """
    gains = np.asarray(gains, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    noise_powers = np.asarray(noise_powers, dtype=float)
    m_users = gains.shape[0]
    if alpha.shape[0] != m_users:
        raise InvalidParameterError("power allocation length must match user count")
    if abs(alpha.sum() - 1.0) > 1e-9:
        raise InvalidParameterError(f"power allocation must sum to 1, got {alpha.sum()!r}")
    if order is None:
        order = list(np.argsort(gains, kind="stable"))
    rates = np.zeros(m_users)
    for rank in range(m_users):
        residual = alpha[rank + 1 :].sum()
        decoders = []
        for j in range(rank, m_users):
            g_j = gains[order[j]]
            sigma_j = noise_powers[order[j]]
            decoders.append(math.log2(1.0 + g_j * alpha[rank] / (g_j * residual + sigma_j)))
        rates[order[rank]] = min(decoders)
    return rates, list(order)


@dataclass
class AntennaCluster:
    """A group of activated antennas serving one or more users."""

    users: list[int]
    member_count: int
    search_range: SamplingRange
    codebook: Codebook
    side: str = "full"
    estimates: list[tuple[float, float]] = field(default_factory=list)


def separated_training(
    users: list[Point3],
    regions: list[SamplingRange],
    sizes: list[int],
    hp: TrainingHyperparams,
    waveguide: Waveguide,
    guard: float,
    params: SystemParams,
    alpha_by_user,
    rng: np.random.Generator | None = None,
):
    """Stage 1: each cluster trains its own user inside its own region.

    Returns (clusters, results); each result's estimate and range feed the
    reclustering step.  Adds K*(L1+L2) measurements per user.
    """
    clusters: list[AntennaCluster] = []
    results: list[TrainingResult] = []
    total = sum(sizes)
    for m, (user, region, size) in enumerate(zip(users, regions, sizes)):
        book = Codebook(n_antennas=size)

        def measure(positions, _user=user, _alpha=float(alpha_by_user[m])):
            return noma_received_strength(
                _user, positions, waveguide, params, _alpha, total, rng
            )

        narrowed, result = run_stages12(
            user, region, hp, waveguide, guard, params, book, measure, antenna_cap=size
        )
        clusters.append(
            AntennaCluster(
                users=[m],
                member_count=size,
                search_range=narrowed,
                codebook=book,
                estimates=[(result.x_opt, result.y_opt)],
            )
        )
        results.append(result)
    return clusters, results


def _last_odd_position(positions: np.ndarray) -> float:
    """Location of the highest odd-numbered (1-based) entry: the end-side tip."""
    n = positions.shape[0]
    idx = n - 1 if n % 2 == 1 else n - 2
    return float(positions[idx])


def _last_even_position(positions: np.ndarray) -> float:
    """Location of the highest even-numbered entry: the feed-side tip."""
    n = positions.shape[0]
    if n < 2:
        return float(positions[0])
    idx = n - 1 if n % 2 == 0 else n - 2
    return float(positions[idx])


def recluster(
    clusters: list[AntennaCluster],
    merge_threshold: float,
    guard: float,
    waveguide: Waveguide,
    params: SystemParams,
) -> list[AntennaCluster]:
    """Stage 2: merge clusters of nearby users, or split colliding ones.

    Adjacent users closer than the merge threshold share one cluster whose
    range is the bounding box of both.  If only the x-estimates collide and
    the facing chain tips are within the guard distance, the left cluster
    regenerates on the feed side only and the right one on the end side.
    """
    groups = [
        AntennaCluster(
            users=list(c.users),
            member_count=c.member_count,
            search_range=c.search_range,
            codebook=c.codebook,
            side=c.side,
            estimates=list(c.estimates),
        )
        for c in clusters
    ]
    m = 1
    while m < len(groups):
        left, right = groups[m - 1], groups[m]
        ex_l, ey_l = left.estimates[-1]
        ex_r, ey_r = right.estimates[0]
        dist = math.hypot(ex_l - ex_r, ey_l - ey_r)
        if dist <= merge_threshold:
            merged_count = left.member_count + right.member_count
            groups[m - 1] = AntennaCluster(
                users=left.users + right.users,
                member_count=merged_count,
                search_range=SamplingRange.merge(left.search_range, right.search_range),
                codebook=Codebook(n_antennas=merged_count),
                estimates=left.estimates + right.estimates,
            )
            del groups[m]
            continue  # allow chained merges into the same group
        if abs(ex_l - ex_r) <= merge_threshold:
            cw_left = left.codebook.get_or_generate(ex_l, ey_l, waveguide, guard, params)
            cw_right = right.codebook.get_or_generate(ex_r, ey_r, waveguide, guard, params)
            if abs(_last_odd_position(cw_left.positions) - _last_even_position(cw_right.positions)) < guard:
                groups[m - 1] = AntennaCluster(
                    users=left.users,
                    member_count=left.member_count,
                    search_range=left.search_range,
                    codebook=Codebook(n_antennas=left.member_count, side="even"),
                    side="even",
                    estimates=left.estimates,
                )
                groups[m] = AntennaCluster(
                    users=right.users,
                    member_count=right.member_count,
                    search_range=right.search_range,
                    codebook=Codebook(n_antennas=right.member_count, side="odd"),
                    side="odd",
                    estimates=right.estimates,
                )
        m += 1
    return groups


def ordering_gains(
    users: list[Point3],
    groups: list[AntennaCluster],
    waveguide: Waveguide,
    guard: float,
    params: SystemParams,
) -> np.ndarray:
    """Effective gains |h_m^H g|^2 with every cluster at its representative point.

    Single-user groups sit at their stage-2 estimate; merged groups at the
    mean of their members' estimates.  One codeword per group keeps the
    activated total at N.
    """
    position_blocks = []
    for group in groups:
        rep_x = sum(e[0] for e in group.estimates) / len(group.estimates)
        rep_y = sum(e[1] for e in group.estimates) / len(group.estimates)
        cw = group.codebook.get_or_generate(rep_x, rep_y, waveguide, guard, params)
        position_blocks.append(np.asarray(cw.positions))
    all_positions = np.concatenate(position_blocks)
    total = all_positions.shape[0]
    gains = np.empty(len(users))
    for m, user in enumerate(users):
        amp = coherent_sum(all_positions, waveguide, user.x, user.y, params)
        gains[m] = params.total_power / total * abs(amp) ** 2
    return gains


@dataclass
class JointSearchResult:
    """Outcome of the joint multi-user exhaustive stage."""

    best_codewords: list
    best_cells: list[tuple[int, int]]
    sum_rate: float
    per_user_rates: np.ndarray
    per_user_gains: np.ndarray
    sic_order: list[int]
    combinations: int
    cell_counts: list[tuple[int, int]]


def joint_exhaustive(
    users: list[Point3],
    groups: list[AntennaCluster],
    hp: TrainingHyperparams,
    waveguide: Waveguide,
    guard: float,
    params: SystemParams,
    alpha,
    noise_powers,
    sic_order: list[int],
    budget: int = DEFAULT_COMBINATION_BUDGET,
) -> JointSearchResult:
    """Stage 3: scan every cross-group cell combination for the best sum rate.

    Every group's range is gridded to the exhaustive-cell threshold; one cell
    choice per group forms a combination, measured once.  The per-user
    effective gain superposes all groups through the shared waveguide.

    Raises:
        BudgetExceededError: when the combination count exceeds `budget`.
    """
    m_users = len(users)
    cell_counts = []
    grids = []
    for group in groups:
        k1, k2 = exhaustive_cell_counts(
            group.search_range.x_len, group.search_range.y_len, hp.exhaustive_cell
        )
        cell_counts.append((k1, k2))
        gx, gy = grid_midpoints(group.search_range, k1, k2)
        grids.append((gx, gy))

    combinations = 1
    for k1, k2 in cell_counts:
        combinations *= k1 * k2
    if combinations > budget:
        raise BudgetExceededError(
            f"joint search needs {combinations} combinations, budget is {budget}",
            required=combinations,
            budget=budget,
        )

    total_antennas = sum(group.member_count for group in groups)
    # Per (group, cell) codewords, then per-user partial channel sums.
    group_codewords = []
    partial = []  # partial[g][m] -> complex sums over that group's cells
    for group, (gx, gy) in zip(groups, grids):
        codewords = [
            group.codebook.get_or_generate(float(x), float(y), waveguide, guard, params)
            for x, y in zip(gx, gy)
        ]
        group_codewords.append(codewords)
        stacked = np.stack([cw.positions for cw in codewords])
        sums = [
            coherent_sum(stacked, waveguide, user.x, user.y, params) for user in users
        ]
        partial.append(sums)

    n_groups = len(groups)
    rates_shape = tuple(k1 * k2 for k1, k2 in cell_counts)
    gains = []
    for m in range(m_users):
        total = np.zeros(rates_shape, dtype=complex)
        for g in range(n_groups):
            shape = [1] * n_groups
            shape[g] = rates_shape[g]
            total = total + partial[g][m].reshape(shape)
        gains.append(params.total_power / total_antennas * np.abs(total) ** 2)

    alpha = np.asarray(alpha, dtype=float)
    noise_powers = np.asarray(noise_powers, dtype=float)
    sum_rate = np.zeros(rates_shape)
    per_rank_rates = []
    for rank in range(m_users):
        residual = alpha[rank + 1 :].sum()
        decode = None
        for j in range(rank, m_users):
            g_j = gains[sic_order[j]]
            sigma_j = noise_powers[sic_order[j]]
            r_jm = np.log2(1.0 + g_j * alpha[rank] / (g_j * residual + sigma_j))
            decode = r_jm if decode is None else np.minimum(decode, r_jm)
        per_rank_rates.append(decode)
        sum_rate = sum_rate + decode

    flat_best = int(np.argmax(sum_rate))  # first max: lexicographic tie-break
    best_idx = np.unravel_index(flat_best, rates_shape)
    best_codewords = [group_codewords[g][best_idx[g]] for g in range(n_groups)]
    best_cells = []
    for g, (k1, k2) in enumerate(cell_counts):
        best_cells.append(divmod(int(best_idx[g]), k2))

    per_user_rates = np.zeros(m_users)
    per_user_gains = np.zeros(m_users)
    for rank in range(m_users):
        per_user_rates[sic_order[rank]] = per_rank_rates[rank][best_idx]
    for m in range(m_users):
        per_user_gains[m] = gains[m][best_idx]

    return JointSearchResult(
        best_codewords=best_codewords,
        best_cells=best_cells,
        sum_rate=float(sum_rate[best_idx]),
        per_user_rates=per_user_rates,
        per_user_gains=per_user_gains,
        sic_order=list(sic_order),
        combinations=combinations,
        cell_counts=cell_counts,
    )


@dataclass
class NomaTrainingResult:
    """Full outcome of the improved three-stage multi-user training."""

    per_user: list[TrainingResult]
    clusters: list[AntennaCluster]
    joint: JointSearchResult
    measurements: int


def run_improved_3sbt(
    users: list[Point3],
    regions: list[SamplingRange],
    hp: TrainingHyperparams,
    waveguide: Waveguide,
    guard: float,
    params: SystemParams,
    alpha,
    noise_powers,
    merge_threshold: float = 2.0,
    budget: int = DEFAULT_COMBINATION_BUDGET,
    rng: np.random.Generator | None = None,
) -> NomaTrainingResult:
    """Separated training, reclustering, then the joint sum-rate scan.

    Total measurements: M*K*(L1+L2) plus the combination count.
    """
    if len(users) != len(regions):
        raise InvalidParameterError("one region per user is required")
    sizes = cluster_antennas(hp.antenna_count, len(users))
    clusters, results = separated_training(
        users, regions, sizes, hp, waveguide, guard, params, alpha, rng
    )
    groups = recluster(clusters, merge_threshold, guard, waveguide, params)
    gains = ordering_gains(users, groups, waveguide, guard, params)
    sic_order = list(np.argsort(gains, kind="stable"))
    joint = joint_exhaustive(
        users, groups, hp, waveguide, guard, params, alpha, noise_powers, sic_order, budget
    )
    measurements = sum(r.measurements for r in results) + joint.combinations
    return NomaTrainingResult(
        per_user=results, clusters=groups, joint=joint, measurements=measurements
    )
