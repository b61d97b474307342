"""Three-stage beam training for one user on one waveguide.

Stage 1 narrows the x-range with a single activated antenna, stage 2 narrows
the y-range while doubling the active antenna count each layer, and stage 3
sweeps a small 2D grid over the remaining cell with every antenna active.
The running optimum only ever moves up, and the measurement counter is the
exact number of received-signal evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codebook import Codebook, truncate_codeword
from .errors import InvalidParameterError
from .physics import Point3, SystemParams, Waveguide, coherent_sum

AXIS_X = "x"
AXIS_Y = "y"


@dataclass(frozen=True)
class SamplingRange:
    """Axis-aligned rectangle on the user plane."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise InvalidParameterError(f"inverted sampling range {self}")

    @property
    def x_len(self) -> float:
        return self.x_max - self.x_min

    @property
    def y_len(self) -> float:
        return self.y_max - self.y_min

    @property
    def x_mid(self) -> float:
        return 0.5 * (self.x_min + self.x_max)

    @property
    def y_mid(self) -> float:
        return 0.5 * (self.y_min + self.y_max)

    def contains(self, x: float, y: float, tol: float = 0.0) -> bool:
        return (
            self.x_min - tol <= x <= self.x_max + tol
            and self.y_min - tol <= y <= self.y_max + tol
        )

    def within(self, other: "SamplingRange", tol: float = 1e-12) -> bool:
        return (
            self.x_min >= other.x_min - tol
            and self.x_max <= other.x_max + tol
            and self.y_min >= other.y_min - tol
            and self.y_max <= other.y_max + tol
        )

    @staticmethod
    def merge(a: "SamplingRange", b: "SamplingRange") -> "SamplingRange":
        """Smallest rectangle covering both inputs."""
        return SamplingRange(
            min(a.x_min, b.x_min),
            max(a.x_max, b.x_max),
            min(a.y_min, b.y_min),
            max(a.y_max, b.y_max),
        )


@dataclass(frozen=True)
class TrainingHyperparams:
    """Knobs of the three-stage search."""

    branches: int = 2  # sub-ranges per layer (K)
    stage1_layers: int = 8  # L1
    stage2_layers: int = 8  # L2
    exhaustive_cell: float = 1e-2  # d_ES, m
    antenna_count: int = 18  # N

    def __post_init__(self):
        if self.branches < 2:
            raise InvalidParameterError(f"branches per layer must be >= 2, got {self.branches}")
        if self.stage1_layers < 1 or self.stage2_layers < 1:
            raise InvalidParameterError("layer counts must be >= 1")
        if not self.exhaustive_cell > 0.0:
            raise InvalidParameterError("exhaustive cell threshold must be > 0")
        if self.antenna_count < 1:
            raise InvalidParameterError("antenna count must be >= 1")


@dataclass(frozen=True)
class LayerSubdivision:
    """K equal cells of a parent range along one axis, with midpoints."""

    parent: SamplingRange
    axis: str
    cells: tuple
    midpoints: np.ndarray


def subdivide(rng: SamplingRange, axis: str, branches: int) -> LayerSubdivision:
    """Split `rng` into `branches` equal cells along `axis`.

    The k-th midpoint is min + (k - 1/2) * length / K.

    Raises:
        InvalidParameterError: on a zero-length axis or K < 2.
    """
    if branches < 2:
        raise InvalidParameterError(f"branches must be >= 2, got {branches}")
    if axis == AXIS_X:
        lo, length = rng.x_min, rng.x_len
    elif axis == AXIS_Y:
        lo, length = rng.y_min, rng.y_len
    else:
        raise InvalidParameterError(f"unknown axis {axis!r}")
    if length <= 0.0:
        raise InvalidParameterError(f"degenerate range: zero length along {axis}")

    edges = lo + np.arange(branches + 1) * (length / branches)
    midpoints = lo + (np.arange(branches) + 0.5) * (length / branches)
    cells = []
    for k in range(branches):
        if axis == AXIS_X:
            cells.append(SamplingRange(edges[k], edges[k + 1], rng.y_min, rng.y_max))
        else:
            cells.append(SamplingRange(rng.x_min, rng.x_max, edges[k], edges[k + 1]))
    return LayerSubdivision(rng, axis, tuple(cells), midpoints)


@dataclass(frozen=True)
class TraceRow:
    """One logged layer (stage 3 is logged as a single aggregate row)."""

    layer: int
    stage: int
    n_active: int
    midpoints: tuple
    metrics: tuple
    best_metric: float


@dataclass
class TrainingResult:
    """Outcome of one training run."""

    best_codeword: object
    best_metric: float
    x_opt: float
    y_opt: float
    final_range: SamplingRange
    measurements: int
    trace: list = field(default_factory=list)


class _Tracker:
    """Running optimum, estimate and measurement counter for one run."""

    def __init__(self, initial_range: SamplingRange):
        self.best_metric = 0.0
        self.best_codeword = None
        self.x_opt = initial_range.x_mid
        self.y_opt = initial_range.y_mid
        self.final_range = initial_range
        self.measurements = 0
        self.trace: list[TraceRow] = []

    def consider(self, metric, codeword, x=None, y=None, cell=None):
        if metric > self.best_metric:
            self.best_metric = metric
            self.best_codeword = codeword
            if x is not None:
                self.x_opt = x
            if y is not None:
                self.y_opt = y
            if cell is not None:
                self.final_range = cell

    def result(self) -> TrainingResult:
        return TrainingResult(
            best_codeword=self.best_codeword,
            best_metric=self.best_metric,
            x_opt=self.x_opt,
            y_opt=self.y_opt,
            final_range=self.final_range,
            measurements=self.measurements,
            trace=self.trace,
        )


def default_measure(
    user: Point3,
    waveguide: Waveguide,
    params: SystemParams,
    rng: np.random.Generator | None = None,
):
    """Measurement returning |r| for a batch of codeword position arrays."""

    def measure(positions: np.ndarray) -> np.ndarray:
        n_active = positions.shape[-1]
        signal = math.sqrt(params.total_power / n_active) * coherent_sum(
            positions, waveguide, user.x, user.y, params
        )
        if rng is not None:
            scale = math.sqrt(params.noise_power / 2.0)
            noise = rng.normal(0.0, scale, signal.shape) + 1j * rng.normal(
                0.0, scale, signal.shape
            )
            signal = signal + noise
        return np.abs(signal)

    return measure


def stage2_antenna_count(layer: int, stage1_layers: int, cap: int) -> int:
    """Active antennas in stage-2 layer `layer`: min(2^(l + 1 - L1), cap)."""
    return min(2 ** (layer + 1 - stage1_layers), cap)


def _measure_layer(sub, y_anchor, x_anchor, axis, n_active, codebook, waveguide, guard, params, measure):
    """Codewords and metrics for the K midpoints of one layer."""
    codewords = []
    for mid in sub.midpoints:
        sx, sy = (mid, y_anchor) if axis == AXIS_X else (x_anchor, mid)
        codewords.append(codebook.get_or_generate(sx, sy, waveguide, guard, params))
    stacked = np.stack([cw.positions[:n_active] for cw in codewords])
    metrics = measure(stacked)
    return codewords, metrics


def run_hierarchical_stage(
    *,
    tracker: _Tracker,
    search_range: SamplingRange,
    axis: str,
    layers: int,
    first_layer: int,
    hp: TrainingHyperparams,
    codebook: Codebook,
    waveguide: Waveguide,
    guard: float,
    params: SystemParams,
    measure,
    anchor: float,
    n_active_for_layer,
    stage: int,
) -> SamplingRange:
    """One hierarchical stage: per layer, measure K midpoints and descend.

    The layer's argmax cell (ties to the smaller index) becomes the next
    layer's range; the tracked optimum and estimate update only on strict
    improvement.  Adds K measurements per layer.
    """
    current = search_range
    for offset in range(layers):
        layer = first_layer + offset
        n_active = n_active_for_layer(layer)
        sub = subdivide(current, axis, hp.branches)
        codewords, metrics = _measure_layer(
            sub, anchor, anchor, axis, n_active, codebook, waveguide, guard, params, measure
        )
        tracker.measurements += hp.branches
        best_k = int(np.argmax(metrics))
        for k, (cw, metric) in enumerate(zip(codewords, metrics)):
            if axis == AXIS_X:
                tracker.consider(float(metric), truncated(cw, n_active), x=float(sub.midpoints[k]))
            else:
                tracker.consider(float(metric), truncated(cw, n_active), y=float(sub.midpoints[k]))
        current = sub.cells[best_k]
        tracker.trace.append(
            TraceRow(
                layer=layer,
                stage=stage,
                n_active=n_active,
                midpoints=tuple(float(m) for m in sub.midpoints),
                metrics=tuple(float(m) for m in metrics),
                best_metric=tracker.best_metric,
            )
        )
    return current


def truncated(codeword, n_active):
    """Codeword restricted to its first n_active entries."""
    return truncate_codeword(codeword, n_active)


def exhaustive_cell_counts(x_len: float, y_len: float, cell_threshold: float) -> tuple[int, int]:
    """Minimal (K1, K2) with every sub-range shorter than the threshold."""
    k1 = max(1, math.ceil(x_len / cell_threshold))
    k2 = max(1, math.ceil(y_len / cell_threshold))
    return k1, k2


def grid_midpoints(rng: SamplingRange, k1: int, k2: int):
    """Midpoints of the k1 x k2 grid over `rng`, in (k1, k2) lexicographic order."""
    xs = rng.x_min + (np.arange(k1) + 0.5) * (rng.x_len / k1)
    ys = rng.y_min + (np.arange(k2) + 0.5) * (rng.y_len / k2)
    gx = np.repeat(xs, k2)
    gy = np.tile(ys, k1)
    return gx, gy


def stage3_exhaustive(
    *,
    tracker: _Tracker,
    search_range: SamplingRange,
    hp: TrainingHyperparams,
    codebook: Codebook,
    waveguide: Waveguide,
    guard: float,
    params: SystemParams,
    measure,
    layer: int,
) -> None:
    """Scan all K1 x K2 cell midpoints of the stage-2 range with N antennas."""
    k1, k2 = exhaustive_cell_counts(search_range.x_len, search_range.y_len, hp.exhaustive_cell)
    gx, gy = grid_midpoints(search_range, k1, k2)
    codewords = [
        codebook.get_or_generate(float(x), float(y), waveguide, guard, params)
        for x, y in zip(gx, gy)
    ]
    stacked = np.stack([cw.positions for cw in codewords])
    metrics = measure(stacked)
    tracker.measurements += k1 * k2

    cell_x = search_range.x_len / k1
    cell_y = search_range.y_len / k2
    order = np.argmax(metrics)  # first max wins: lexicographic (k1, k2) tie-break
    if metrics[order] > tracker.best_metric:
        i1, i2 = divmod(int(order), k2)
        cell = SamplingRange(
            search_range.x_min + i1 * cell_x,
            search_range.x_min + (i1 + 1) * cell_x,
            search_range.y_min + i2 * cell_y,
            search_range.y_min + (i2 + 1) * cell_y,
        )
        tracker.consider(
            float(metrics[order]), codewords[int(order)], x=float(gx[order]), y=float(gy[order]),
            cell=cell,
        )
    tracker.trace.append(
        TraceRow(
            layer=layer,
            stage=3,
            n_active=hp.antenna_count,
            midpoints=(),
            metrics=(float(np.max(metrics)),),
            best_metric=tracker.best_metric,
        )
    )


def run_3sbt(
    user: Point3,
    region: SamplingRange,
    hp: TrainingHyperparams,
    waveguide: Waveguide,
    guard: float,
    params: SystemParams,
    codebook: Codebook | None = None,
    rng: np.random.Generator | None = None,
    measure=None,
    antenna_cap: int | None = None,
) -> TrainingResult:
    """Full three-stage beam training for a single user.

    Total measurements come out to K*(L1 + L2) + K1*K2 exactly.

    Args:
        user: true user location (drives the measurements only).
        region: initial sampling range.
        hp: training hyperparameters.
        waveguide: the waveguide the codewords live on.
        guard: antenna guard distance.
        params: system constants.
        codebook: reused codebook; a fresh one is created when omitted.
        rng: optional noise source for the measurements.
        measure: alternative measurement function (multi-user training
            installs a cluster-restricted one).
        antenna_cap: cap on the stage-2 antenna growth (cluster size in
            multi-user training); defaults to hp.antenna_count.
    """
    if codebook is None:
        codebook = Codebook(n_antennas=hp.antenna_count)
    if measure is None:
        measure = default_measure(user, waveguide, params, rng)
    cap = hp.antenna_count if antenna_cap is None else antenna_cap

    tracker = _Tracker(region)
    x_range = run_hierarchical_stage(
        tracker=tracker,
        search_range=region,
        axis=AXIS_X,
        layers=hp.stage1_layers,
        first_layer=1,
        hp=hp,
        codebook=codebook,
        waveguide=waveguide,
        guard=guard,
        params=params,
        measure=measure,
        anchor=region.y_mid,
        n_active_for_layer=lambda layer: 1,
        stage=1,
    )
    y_range = run_hierarchical_stage(
        tracker=tracker,
        search_range=x_range,
        axis=AXIS_Y,
        layers=hp.stage2_layers,
        first_layer=hp.stage1_layers + 1,
        hp=hp,
        codebook=codebook,
        waveguide=waveguide,
        guard=guard,
        params=params,
        measure=measure,
        anchor=x_range.x_mid,
        n_active_for_layer=lambda layer: stage2_antenna_count(layer, hp.stage1_layers, cap),
        stage=2,
    )
    tracker.final_range = y_range
    stage3_exhaustive(
        tracker=tracker,
        search_range=y_range,
        hp=hp,
        codebook=codebook,
        waveguide=waveguide,
        guard=guard,
        params=params,
        measure=measure,
        layer=hp.stage1_layers + hp.stage2_layers + 1,
    )
    return tracker.result()


def run_stages12(
    user: Point3,
    region: SamplingRange,
    hp: TrainingHyperparams,
    waveguide: Waveguide,
    guard: float,
    params: SystemParams,
    codebook: Codebook,
    measure,
    antenna_cap: int,
) -> tuple[SamplingRange, TrainingResult]:
    """Stages 1-2 only, as used by the multi-user separated-training step.

    Returns the narrowed rectangular range and the per-user result whose
    estimate is the stage-2 optimum.
    """
    tracker = _Tracker(region)
    x_range = run_hierarchical_stage(
        tracker=tracker,
        search_range=region,
        axis=AXIS_X,
        layers=hp.stage1_layers,
        first_layer=1,
        hp=hp,
        codebook=codebook,
        waveguide=waveguide,
        guard=guard,
        params=params,
        measure=measure,
        anchor=region.y_mid,
        n_active_for_layer=lambda layer: 1,
        stage=1,
    )
    y_range = run_hierarchical_stage(
        tracker=tracker,
        search_range=x_range,
        axis=AXIS_Y,
        layers=hp.stage2_layers,
        first_layer=hp.stage1_layers + 1,
        hp=hp,
        codebook=codebook,
        waveguide=waveguide,
        guard=guard,
        params=params,
        measure=measure,
        anchor=x_range.x_mid,
        n_active_for_layer=lambda layer: stage2_antenna_count(layer, hp.stage1_layers, antenna_cap),
        stage=2,
    )
    tracker.final_range = y_range
    return y_range, tracker.result()
