"""Scalable codebook of phase-aligned activated-antenna locations.

A codeword stores, for one sampling point, the ordered antenna positions at
which the total phase (free-space plus in-guide) reaching that point is a
multiple of 2 pi.  Entries alternate sides: the first antenna is found
searching from the point's foot toward the waveguide end, the second from
just below the first toward the feed, and subsequent odd/even entries extend
those two chains outward with a guard distance between neighbours.  Prefixes
are stable, so one stored codeword serves every smaller antenna count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .errors import GeometryError, InvalidParameterError, OutOfExtentError
from .physics import TWO_PI, SystemParams, Waveguide

PHASE_TOL = 1e-6  # rad; acceptance threshold for a solved location
_KEY_QUANTUM = 1e-6  # m; sampling coordinates are keyed on this grid

TOWARD_END = 1
TOWARD_FEED = -1

_CSV_HEADER = ["sampling_x", "sampling_y", "waveguide_index", "antenna_index", "antenna_x"]


def wrap_phase(phase):
    """Map phase(s) to the principal interval [-pi, pi)."""
    return (np.asarray(phase) + math.pi) % TWO_PI - math.pi


def total_phase(x, sampling_x, sampling_y, waveguide: Waveguide, params: SystemParams):
    """Free-space plus in-guide phase from antenna(s) at `x` to the sampling point."""
    xs = np.asarray(x, dtype=float)
    dx = xs - sampling_x
    dy = waveguide.y - sampling_y
    dist = np.sqrt(dx * dx + dy * dy + waveguide.height**2)
    return (
        TWO_PI / params.wavelength * dist
        + TWO_PI / params.guide_wavelength * np.abs(xs - waveguide.feed_x)
    )


def _solve_roots(
    sampling_x: np.ndarray,
    sampling_y: np.ndarray,
    start: np.ndarray,
    direction: int,
    waveguide: Waveguide,
    params: SystemParams,
) -> np.ndarray:
    """Vectorized first-root search for the phase-alignment condition.

    Marches from `start` in steps of lambda_g / 8 until the wrapped residue of
    the total phase changes sign without wrapping (a step never adds more than
    pi/2 of phase, so a 2 pi wrap cannot be skipped), then bisects the bracket
    down to an interval of lambda * 1e-9.

    Args:
        sampling_x, sampling_y: target point coordinates, shape (F,).
        start: per-lane search origin, shape (F,).
        direction: TOWARD_END (+1) or TOWARD_FEED (-1).
        waveguide: host waveguide; the search is limited by its x_end on the
            end side and by the feed x on the feed side.
        params: system constants.

    Returns:
        Array of root x-positions, shape (F,).

    Raises:
        OutOfExtentError: if any lane reaches the search limit unbracketed.
    """
    xf = np.asarray(sampling_x, dtype=float)
    yf = np.asarray(sampling_y, dtype=float)
    a = np.array(start, dtype=float, copy=True)

    limit = waveguide.x_end if direction == TOWARD_END else waveguide.feed_x
    step = direction * params.guide_wavelength / 8.0

    ra = wrap_phase(total_phase(a, xf, yf, waveguide, params))
    roots = np.where(np.abs(ra) <= PHASE_TOL, a, np.nan)
    active = np.isnan(roots)

    lo = np.zeros_like(a)
    hi = np.zeros_like(a)
    rlo = np.zeros_like(a)

    while active.any():
        b = a + step
        if direction == TOWARD_END:
            b = np.minimum(b, limit)
        else:
            b = np.maximum(b, limit)
        rb = wrap_phase(total_phase(b, xf, yf, waveguide, params))

        exact = active & (np.abs(rb) <= PHASE_TOL)
        roots = np.where(exact, b, roots)
        active &= ~exact

        bracket = active & (ra * rb < 0.0) & (np.abs(rb - ra) < math.pi)
        lo = np.where(bracket, np.minimum(a, b), lo)
        hi = np.where(bracket, np.maximum(a, b), hi)
        rlo = np.where(bracket, np.where(a <= b, ra, rb), rlo)
        active &= ~bracket

        exhausted = active & (b == limit)
        if exhausted.any():
            idx = int(np.argmax(exhausted))
            raise OutOfExtentError(
                f"no phase-aligned location before x = {limit} for sampling point "
                f"({float(np.ravel(xf)[idx])}, {float(np.ravel(yf)[idx])}) "
                f"on waveguide {waveguide.index}"
            )
        a, ra = b, rb

    need = np.isnan(roots)  # lanes that went through bracketing
    xtol = params.wavelength * 1e-9
    while True:
        wide = need & (hi - lo > xtol)
        if not wide.any():
            break
        mid = 0.5 * (lo + hi)
        rm = wrap_phase(total_phase(mid, xf, yf, waveguide, params))
        same = rlo * rm > 0.0
        lo = np.where(wide & same, mid, lo)
        rlo = np.where(wide & same, rm, rlo)
        hi = np.where(wide & ~same, mid, hi)
    return np.where(need, 0.5 * (lo + hi), roots)


def solve_phase_location(
    sampling_x: float,
    sampling_y: float,
    waveguide: Waveguide,
    start_x: float,
    direction: int,
    params: SystemParams,
) -> float:
    """First x at/after `start_x` (in `direction`) where the phase aligns.

    Raises:
        InvalidParameterError: if start_x lies outside the waveguide extent.
        OutOfExtentError: if no solution exists before the waveguide limit.
    """
    if not waveguide.x_start <= start_x <= waveguide.x_end:
        raise InvalidParameterError(
            f"start_x {start_x} outside waveguide extent "
            f"[{waveguide.x_start}, {waveguide.x_end}]"
        )
    root = _solve_roots(
        np.array([sampling_x]),
        np.array([sampling_y]),
        np.array([start_x]),
        direction,
        waveguide,
        params,
    )
    return float(root[0])


def generate_positions(
    sampling_x,
    sampling_y,
    waveguide: Waveguide,
    n_antennas: int,
    guard: float,
    params: SystemParams,
    side: str = "full",
) -> np.ndarray:
    """Antenna positions for a batch of sampling points.

    Entry 1 searches toward the waveguide end from the point's x; entry 2
    toward the feed from (entry 1 - guard); later odd entries continue the
    end-side chain and even entries the feed-side chain.  With side "odd" or
    "even" only the corresponding chain is produced (used when two antenna
    clusters must interleave without coupling).

    Args:
        sampling_x, sampling_y: shape (F,) coordinates.
        waveguide: host waveguide; every sampling x must be >= its feed x.
        n_antennas: entries per codeword, >= 1.
        guard: minimum spacing between activated antennas, > 0.
        params: system constants.
        side: "full", "odd" (end side only) or "even" (feed side only).

    Returns:
        Positions of shape (F, n_antennas).

    Raises:
        OutOfExtentError: when the waveguide is too short for the requested
            count; the failing 1-based antenna index is attached.
    """
    if n_antennas < 1:
        raise InvalidParameterError(f"antenna count must be >= 1, got {n_antennas}")
    if not guard > 0.0:
        raise InvalidParameterError(f"guard distance must be > 0, got {guard}")
    if side not in ("full", "odd", "even"):
        raise InvalidParameterError(f"unknown generation side {side!r}")

    xf = np.atleast_1d(np.asarray(sampling_x, dtype=float))
    yf = np.atleast_1d(np.asarray(sampling_y, dtype=float))
    if (xf < waveguide.feed_x).any():
        raise GeometryError(
            "sampling points left of the feed are not supported "
            f"(feed_x = {waveguide.feed_x})"
        )
    if (xf > waveguide.x_end).any():
        raise InvalidParameterError("sampling point beyond the waveguide end")

    out = np.empty((xf.shape[0], n_antennas), dtype=float)

    def solve(start, direction, index):
        try:
            return _solve_roots(xf, yf, start, direction, waveguide, params)
        except OutOfExtentError as err:
            raise OutOfExtentError(str(err), antenna_index=index) from None

    first = solve(xf, TOWARD_END, 1)
    if side == "full":
        out[:, 0] = first
        if n_antennas >= 2:
            out[:, 1] = solve(first - guard, TOWARD_FEED, 2)
        for n in range(2, n_antennas):
            if n % 2 == 0:  # 1-based odd entry: extend the end-side chain
                out[:, n] = solve(out[:, n - 2] + guard, TOWARD_END, n + 1)
            else:
                out[:, n] = solve(out[:, n - 2] - guard, TOWARD_FEED, n + 1)
    elif side == "odd":
        out[:, 0] = first
        for n in range(1, n_antennas):
            out[:, n] = solve(out[:, n - 1] + guard, TOWARD_END, n + 1)
    else:  # even: feed-side chain seeded below the (discarded) first entry
        prev = solve(first - guard, TOWARD_FEED, 1)
        out[:, 0] = prev
        for n in range(1, n_antennas):
            out[:, n] = solve(out[:, n - 1] - guard, TOWARD_FEED, n + 1)
    return out


@dataclass(frozen=True)
class Codeword:
    """Ordered activated-antenna x-positions for one sampling point."""

    sampling_x: float
    sampling_y: float
    waveguide_index: int
    positions: np.ndarray
    side: str = "full"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return int(self.positions.shape[0])


def generate_codeword(
    sampling_x: float,
    sampling_y: float,
    waveguide: Waveguide,
    n_antennas: int,
    guard: float,
    params: SystemParams,
    side: str = "full",
) -> Codeword:
    """Single-point wrapper around generate_positions."""
    pos = generate_positions(
        np.array([sampling_x]), np.array([sampling_y]), waveguide, n_antennas, guard, params, side
    )
    return Codeword(float(sampling_x), float(sampling_y), waveguide.index, pos[0], side)


def truncate_codeword(codeword: Codeword, n_active: int) -> Codeword:
    """First `n_active` entries of a codeword; sampling point unchanged."""
    if not 1 <= n_active <= len(codeword):
        raise InvalidParameterError(
            f"truncation length {n_active} outside [1, {len(codeword)}]"
        )
    if n_active == len(codeword):
        return codeword
    return replace(codeword, positions=codeword.positions[:n_active].copy())


def _quantize(coord: float) -> int:
    return int(round(coord / _KEY_QUANTUM))


@dataclass
class Codebook:
    """Exact-key map from quantized sampling points to codewords.

    Keys quantize coordinates to 1e-6 m so midpoints computed by different
    code paths look up identically.  All stored codewords share n_antennas.
    """

    n_antennas: int
    side: str = "full"
    _entries: dict = field(default_factory=dict, repr=False)

    @staticmethod
    def key_for(sampling_x: float, sampling_y: float, waveguide_index: int):
        return (_quantize(sampling_x), _quantize(sampling_y), waveguide_index)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key) -> bool:
        return key in self._entries

    def lookup(self, sampling_x: float, sampling_y: float, waveguide_index: int):
        return self._entries.get(self.key_for(sampling_x, sampling_y, waveguide_index))

    def insert(self, codeword: Codeword) -> None:
        if len(codeword) != self.n_antennas:
            raise InvalidParameterError(
                f"codeword length {len(codeword)} does not match codebook "
                f"antenna count {self.n_antennas}"
            )
        key = self.key_for(codeword.sampling_x, codeword.sampling_y, codeword.waveguide_index)
        self._entries[key] = codeword

    def get_or_generate(
        self,
        sampling_x: float,
        sampling_y: float,
        waveguide: Waveguide,
        guard: float,
        params: SystemParams,
    ) -> Codeword:
        """Return the stored codeword for this point, generating on a miss."""
        key = self.key_for(sampling_x, sampling_y, waveguide.index)
        hit = self._entries.get(key)
        if hit is not None:
            return hit
        cw = generate_codeword(
            sampling_x, sampling_y, waveguide, self.n_antennas, guard, params, self.side
        )
        self._entries[key] = cw
        return cw

    def codewords(self) -> Iterable[Codeword]:
        return self._entries.values()

    def extend_antennas(
        self, n_new: int, waveguides: dict[int, Waveguide], guard: float, params: SystemParams
    ) -> None:
        """Grow every codeword to `n_new` entries by continuing its chains.

        Prefixes are untouched; odd entries continue from the last odd one,
        even entries from the last even one.  Extending an empty codebook
        just records the new count.
        """
        if not n_new > self.n_antennas:
            raise InvalidParameterError(
                f"new antenna count {n_new} must exceed stored count {self.n_antennas}"
            )
        old = self.n_antennas
        for key, cw in list(self._entries.items()):
            wg = waveguides[cw.waveguide_index]
            grown = np.empty(n_new, dtype=float)
            grown[:old] = cw.positions
            xf = np.array([cw.sampling_x])
            yf = np.array([cw.sampling_y])
            for n in range(old, n_new):
                if self.side == "full":
                    step = 2
                    direction = TOWARD_END if n % 2 == 0 else TOWARD_FEED
                else:
                    step = 1
                    direction = TOWARD_END if self.side == "odd" else TOWARD_FEED
                start = grown[n - step] + direction * guard
                try:
                    root = _solve_roots(xf, yf, np.array([start]), direction, wg, params)
                except OutOfExtentError as err:
                    raise OutOfExtentError(str(err), antenna_index=n + 1) from None
                grown[n] = root[0]
            self._entries[key] = replace(cw, positions=grown)
        self.n_antennas = n_new

    def to_csv(self, path) -> None:
        """Write one row per (sampling point, antenna), 12 significant digits."""
        rows = sorted(self._entries.items())
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_HEADER)
            for _, cw in rows:
                for n, x in enumerate(cw.positions, start=1):
                    writer.writerow(
                        [
                            f"{cw.sampling_x:.12g}",
                            f"{cw.sampling_y:.12g}",
                            cw.waveguide_index,
                            n,
                            f"{x:.12g}",
                        ]
                    )

    @classmethod
    def from_csv(cls, path) -> "Codebook":
        """Rebuild a codebook from its CSV export."""
        grouped: dict = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != _CSV_HEADER:
                raise InvalidParameterError(f"unexpected codebook CSV header: {header}")
            for row in reader:
                sx, sy, wg, idx, x = row
                grouped.setdefault((float(sx), float(sy), int(wg)), []).append(
                    (int(idx), float(x))
                )
        lengths = {len(v) for v in grouped.values()}
        if len(lengths) > 1:
            raise InvalidParameterError("codebook CSV has codewords of differing lengths")
        book = cls(n_antennas=lengths.pop() if lengths else 0)
        for (sx, sy, wg), entries in grouped.items():
            entries.sort()
            book._entries[cls.key_for(sx, sy, wg)] = Codeword(
                sx, sy, wg, np.array([x for _, x in entries])
            )
        return book


def advance_phase(
    positions,
    deltas,
    sampling_x: float,
    sampling_y: float,
    waveguide: Waveguide,
    params: SystemParams,
) -> np.ndarray:
    """Shift each antenna toward the waveguide end by a prescribed phase amount.

    Entry n moves to the nearest x >= positions[n] where the total phase at
    the sampling point has grown by deltas[n] (radians).  The total phase is
    strictly increasing toward the end, so the target is unique.

    Raises:
        OutOfExtentError: if a shifted position would pass the waveguide end.
    """
    pos = np.asarray(positions, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    if (deltas < 0.0).any():
        raise InvalidParameterError("phase advances must be >= 0")
    target = total_phase(pos, sampling_x, sampling_y, waveguide, params) + deltas

    a = pos.copy()
    fa = total_phase(a, sampling_x, sampling_y, waveguide, params)
    done = deltas <= PHASE_TOL
    out = np.where(done, pos, np.nan)
    active = ~done
    step = params.guide_wavelength / 8.0
    lo = np.zeros_like(a)
    hi = np.zeros_like(a)
    while active.any():
        b = np.minimum(a + step, waveguide.x_end)
        fb = total_phase(b, sampling_x, sampling_y, waveguide, params)
        bracket = active & (fb >= target)
        lo = np.where(bracket, a, lo)
        hi = np.where(bracket, b, hi)
        active &= ~bracket
        exhausted = active & (b == waveguide.x_end)
        if exhausted.any():
            raise OutOfExtentError(
                f"phase advance passes the waveguide end at x = {waveguide.x_end}"
            )
        a, fa = b, fb

    need = np.isnan(out)
    xtol = params.wavelength * 1e-9
    while True:
        wide = need & (hi - lo > xtol)
        if not wide.any():
            break
        mid = 0.5 * (lo + hi)
        fm = total_phase(mid, sampling_x, sampling_y, waveguide, params)
        below = fm < target
        lo = np.where(wide & below, mid, lo)
        hi = np.where(wide & ~below, mid, hi)
    return np.where(need, 0.5 * (lo + hi), out)


def associate_waveguides(ranges, waveguides):
    """Pair sampling ranges with waveguides by descending y.

    Ranges are ranked by descending y_min and waveguides by descending y;
    the k-th of each are matched.  Ties keep the original ordering.

    Args:
        ranges: sequence with a `y_min` attribute each.
        waveguides: sequence of Waveguide, same length.

    Returns:
        List of waveguides aligned with the input `ranges` order.
    """
    if len(ranges) != len(waveguides):
        raise InvalidParameterError(
            f"{len(ranges)} ranges cannot be matched to {len(waveguides)} waveguides"
        )
    range_rank = sorted(range(len(ranges)), key=lambda i: (-ranges[i].y_min, i))
    guide_rank = sorted(range(len(waveguides)), key=lambda i: (-waveguides[i].y, i))
    assigned = [None] * len(ranges)
    for r_idx, w_idx in zip(range_rank, guide_rank):
        assigned[r_idx] = waveguides[w_idx]
    return assigned
