"""Multi-waveguide multi-user model with partially-connected beamforming.

Each waveguide carries one precoded stream; the pinching beamformer is block
diagonal with equal per-antenna amplitude sqrt(P / (Q N)).  Training first
pairs users with waveguides by descending y, then narrows each user on its
own waveguide, and finally scans cross-user cell combinations for the best
sum rate under full inter-stream interference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codebook import Codebook, associate_waveguides, generate_positions
from .errors import (
    BudgetExceededError,
    InvalidParameterError,
    UnsupportedConfigurationError,
)
from .physics import Point3, SystemParams, Waveguide, channel_coefficient, coherent_sum
from .training import (
    SamplingRange,
    TrainingHyperparams,
    TrainingResult,
    exhaustive_cell_counts,
    grid_midpoints,
    run_stages12,
)

DEFAULT_COMBINATION_BUDGET = 2**22


@dataclass(frozen=True)
class WaveguideArray:
    """Q parallel waveguides with N activated antennas each."""

    waveguides: tuple
    antennas_per_waveguide: int

    def __post_init__(self):
        ys = [wg.y for wg in self.waveguides]
        if len(set(ys)) != len(ys):
            raise InvalidParameterError("waveguides must have distinct y coordinates")
        heights = {wg.height for wg in self.waveguides}
        if len(heights) != 1:
            raise InvalidParameterError("waveguides must share a common height")
        if self.antennas_per_waveguide < 1:
            raise InvalidParameterError("antennas per waveguide must be >= 1")

    @property
    def q(self) -> int:
        return len(self.waveguides)

    @property
    def total_antennas(self) -> int:
        return self.q * self.antennas_per_waveguide


def mwmu_channel_vector(
    user: Point3,
    waveguides,
    codeword_positions,
    params: SystemParams,
) -> np.ndarray:
    """Concatenated channel from all Q*N activated antennas to one user.

    Args:
        user: receiver location.
        waveguides: Q waveguides in array order.
        codeword_positions: per-waveguide activated x-positions (each length N).
        params: system constants.

    Returns:
        Complex vector of length Q*N, waveguide-major.
    """
    blocks = []
    for wg, positions in zip(waveguides, codeword_positions):
        feed = wg.feed_point
        blocks.append(
            np.array(
                [
                    channel_coefficient(user, wg.antenna_point(float(x)), feed, params)
                    for x in np.asarray(positions)
                ]
            )
        )
    return np.concatenate(blocks)


def pinching_beamformer(q_counts, params: SystemParams) -> np.ndarray:
    """Block-diagonal QN x Q amplitude map with entries sqrt(P / (Q N))."""
    q = len(q_counts)
    total = sum(q_counts)
    amp = math.sqrt(params.total_power / total)
    mat = np.zeros((total, q))
    row = 0
    for col, count in enumerate(q_counts):
        mat[row : row + count, col] = amp
        row += count
    return mat


def one_hot_precoders(q: int) -> list[np.ndarray]:
    """Default digital precoders W_m = e_m (one stream per waveguide)."""
    return [np.eye(q)[:, m].copy() for m in range(q)]


def mwmu_sinr(channel: np.ndarray, beamformer: np.ndarray, precoders, m: int, noise_power: float) -> float:
    """SINR of user m: |h^H G W_m|^2 over |sum_{i != m} h^H G W_i|^2 + sigma^2."""
    effective = channel.conj() @ beamformer  # (Q,)
    signal = abs(effective @ precoders[m]) ** 2
    interference = 0.0 + 0.0j
    for i, w in enumerate(precoders):
        if i != m:
            interference += effective @ w
    return float(signal / (abs(interference) ** 2 + noise_power))


def mwmu_sum_rate(channels, beamformer, precoders, noise_powers) -> float:
    """Achievable sum rate sum_m log2(1 + SINR_m)."""
    total = 0.0
    for m, channel in enumerate(channels):
        total += math.log2(1.0 + mwmu_sinr(channel, beamformer, precoders, m, noise_powers[m]))
    return total


@dataclass
class MwmuResult:
    """Outcome of the increased-dimensional three-stage training."""

    assignment: list
    per_user: list[TrainingResult]
    best_codewords: list
    sum_rate: float
    per_user_rates: np.ndarray
    per_user_sinr: np.ndarray
    combinations: int
    measurements: int


def run_increased_3sbt(
    users: list[Point3],
    regions: list[SamplingRange],
    array: WaveguideArray,
    hp: TrainingHyperparams,
    guard: float,
    params: SystemParams,
    noise_powers,
    budget: int = DEFAULT_COMBINATION_BUDGET,
    rng: np.random.Generator | None = None,
) -> MwmuResult:
    """Waveguide association, separated per-user training, then a joint scan.

    Stage 1 costs no measurements; stage 2 adds M*K*(L1+L2); stage 3 adds one
    measurement per cross-user cell combination.

    Raises:
        UnsupportedConfigurationError: unless the user count equals the
            waveguide count.
        BudgetExceededError: when the combination count exceeds `budget`.
    """
    m_users = len(users)
    if m_users != array.q:
        raise UnsupportedConfigurationError(
            f"this scheme requires one waveguide per user (M = Q); "
            f"got M = {m_users}, Q = {array.q}"
        )
    if len(regions) != m_users:
        raise InvalidParameterError("one region per user is required")

    assignment = associate_waveguides(regions, list(array.waveguides))

    n_per = array.antennas_per_waveguide
    total_antennas = array.total_antennas
    amp_factor = math.sqrt(params.total_power / total_antennas)

    per_user: list[TrainingResult] = []
    narrowed: list[SamplingRange] = []
    codebooks: list[Codebook] = []
    for user, region, waveguide in zip(users, regions, assignment):
        book = Codebook(n_antennas=n_per)

        def measure(positions, _user=user, _wg=waveguide):
            signal = amp_factor * coherent_sum(positions, _wg, _user.x, _user.y, params)
            if rng is not None:
                scale = math.sqrt(params.noise_power / 2.0)
                signal = signal + rng.normal(0.0, scale, np.shape(signal)) + 1j * rng.normal(
                    0.0, scale, np.shape(signal)
                )
            return np.abs(signal)

        rng_range, result = run_stages12(
            user, region, hp, waveguide, guard, params, book, measure, antenna_cap=n_per
        )
        per_user.append(result)
        narrowed.append(rng_range)
        codebooks.append(book)

    # Stage 3: per-user grids on the associated waveguides.
    cell_counts = []
    grids = []
    for rng_range in narrowed:
        k1, k2 = exhaustive_cell_counts(rng_range.x_len, rng_range.y_len, hp.exhaustive_cell)
        cell_counts.append((k1, k2))
        grids.append(grid_midpoints(rng_range, k1, k2))

    combinations = 1
    for k1, k2 in cell_counts:
        combinations *= k1 * k2
    if combinations > budget:
        raise BudgetExceededError(
            f"joint search needs {combinations} combinations, budget is {budget}",
            required=combinations,
            budget=budget,
        )

    # partial[q][m]: user m's complex channel sum against waveguide q's cells.
    group_codewords = []
    partial = []
    for q, ((gx, gy), book) in enumerate(zip(grids, codebooks)):
        waveguide = assignment[q]
        codewords = [
            book.get_or_generate(float(x), float(y), waveguide, guard, params)
            for x, y in zip(gx, gy)
        ]
        group_codewords.append(codewords)
        stacked = np.stack([cw.positions for cw in codewords])
        partial.append(
            [coherent_sum(stacked, waveguide, u.x, u.y, params) for u in users]
        )

    shape = tuple(k1 * k2 for k1, k2 in cell_counts)
    power_per_antenna = params.total_power / total_antennas
    sum_rate = np.zeros(shape)
    per_user_rate_grids = []
    per_user_sinr_grids = []
    for m in range(m_users):
        signal = None
        interference = np.zeros(shape, dtype=complex)
        for q in range(m_users):
            block_shape = [1] * m_users
            block_shape[q] = shape[q]
            block = partial[q][m].reshape(block_shape)
            if q == m:
                signal = power_per_antenna * np.abs(np.broadcast_to(block, shape)) ** 2
            else:
                interference = interference + block
        sinr = signal / (power_per_antenna * np.abs(interference) ** 2 + noise_powers[m])
        rate = np.log2(1.0 + sinr)
        per_user_sinr_grids.append(sinr)
        per_user_rate_grids.append(rate)
        sum_rate = sum_rate + rate

    flat_best = int(np.argmax(sum_rate))  # first max: lexicographic tie-break
    best_idx = np.unravel_index(flat_best, shape)
    best_codewords = [group_codewords[q][best_idx[q]] for q in range(m_users)]
    per_user_rates = np.array([per_user_rate_grids[m][best_idx] for m in range(m_users)])
    per_user_sinr = np.array([per_user_sinr_grids[m][best_idx] for m in range(m_users)])

    measurements = sum(r.measurements for r in per_user) + combinations
    return MwmuResult(
        assignment=assignment,
        per_user=per_user,
        best_codewords=best_codewords,
        sum_rate=float(sum_rate[best_idx]),
        per_user_rates=per_user_rates,
        per_user_sinr=per_user_sinr,
        combinations=combinations,
        measurements=measurements,
    )


@dataclass
class Lemma1Result:
    """Exhaustive comparison of antenna allocations across two waveguides."""

    allocations: list
    exact_strengths: np.ndarray
    approx_strengths: np.ndarray
    best_allocation: tuple
    best_allocation_approx: tuple


def lemma1_bruteforce(
    user: Point3,
    array: WaveguideArray,
    n_antennas: int,
    guard: float,
    params: SystemParams,
) -> Lemma1Result:
    """Enumerate pairwise antenna splits and return the strongest allocation.

    Every allocation places its antennas by the usual phase-aligned steps,
    clustered around the waveguide point nearest the user.  Received strength
    is evaluated exactly (spherical-wave sum) and with the coherent
    perpendicular-foot approximation; both argmaxes are reported.
    """
    if array.q < 2:
        raise InvalidParameterError("lemma verification needs at least two waveguides")
    waveguides = list(array.waveguides)

    allocations = []
    seen = set()
    for i in range(array.q):
        for j in range(i + 1, array.q):
            for n_i in range(n_antennas + 1):
                counts = [0] * array.q
                counts[i] = n_i
                counts[j] = n_antennas - n_i
                key = tuple(counts)
                if key not in seen:
                    seen.add(key)
                    allocations.append(key)

    feet = np.array(
        [math.sqrt((wg.y - user.y) ** 2 + wg.height**2) for wg in waveguides]
    )
    power_per_antenna = params.total_power / n_antennas

    exact = np.empty(len(allocations))
    approx = np.empty(len(allocations))
    for a_idx, counts in enumerate(allocations):
        amplitude = 0.0 + 0.0j
        coherent = 0.0
        for q, count in enumerate(counts):
            if count == 0:
                continue
            positions = generate_positions(
                np.array([user.x]), np.array([user.y]), waveguides[q], count, guard, params
            )[0]
            amplitude += coherent_sum(positions, waveguides[q], user.x, user.y, params)
            coherent += count / feet[q]
        exact[a_idx] = power_per_antenna * abs(amplitude) ** 2
        approx[a_idx] = power_per_antenna * params.attenuation * coherent**2

    return Lemma1Result(
        allocations=allocations,
        exact_strengths=exact,
        approx_strengths=approx,
        best_allocation=allocations[int(np.argmax(exact))],
        best_allocation_approx=allocations[int(np.argmax(approx))],
    )
