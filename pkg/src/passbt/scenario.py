"""Scenario configuration: defaults, file parsing, and validation.

Scenario files are line-oriented `key = value` pairs grouped into bracketed
sections.  Every key is optional; an empty file yields the default desk
setup (28 GHz carrier, -90 dBm noise, 3 m waveguide height, 18 antennas,
K = 2 with 8 + 8 training layers, 1 cm exhaustive cells).  Unknown keys are
rejected with the offending line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .physics import Point3, SystemParams, Waveguide, derive_params
from .training import SamplingRange, TrainingHyperparams

MODES = ("swsu", "swmu", "mwmu")

DEFAULT_CARRIER_HZ = 28e9
DEFAULT_REFRACTIVE_INDEX = 1.4
DEFAULT_HEIGHT_M = 3.0
DEFAULT_POWER_W = 1.0
DEFAULT_NOISE_DBM = -90.0
DEFAULT_ANTENNAS = 18
DEFAULT_BRANCHES = 2
DEFAULT_LAYERS = 8
DEFAULT_EXHAUSTIVE_CELL = 1e-2
DEFAULT_MERGE_THRESHOLD = 2.0
DEFAULT_BUDGET = 2**22
DEFAULT_REGION_SIZE = 10.0

_TOP_KEYS = {"mode", "seed"}
_SECTION_KEYS = {
    "system": {
        "carrier_frequency_hz",
        "refractive_index",
        "waveguide_height_m",
        "total_power_w",
        "total_power_dbm",
        "noise_power_w",
        "noise_power_dbm",
        "noise_enabled",
    },
    "training": {
        "branches_per_layer",
        "stage1_layers",
        "stage2_layers",
        "exhaustive_cell_m",
        "antenna_count",
        "guard_distance_m",
        "merge_threshold_m",
        "combination_budget",
    },
    "waveguides": {"y_coords", "feed_x", "x_margin_m"},
    "users": {"count", "user"},
    "noma": {"power_allocation"},
}


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts * 1000.0)


@dataclass
class Scenario:
    """A fully resolved simulation setup."""

    mode: str
    params: SystemParams
    hyperparams: TrainingHyperparams
    guard: float
    merge_threshold: float
    combination_budget: int
    waveguides: list[Waveguide]
    users: list[Point3]
    regions: list[SamplingRange]
    alpha: list[float]
    noise_powers: np.ndarray
    seed: int = 0
    noise_enabled: bool = False
    source: dict = field(default_factory=dict, repr=False)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_waveguides(self) -> int:
        return len(self.waveguides)

    def rng(self) -> np.random.Generator | None:
        return np.random.default_rng(self.seed) if self.noise_enabled else None


def template_users(mode: str, count: int) -> tuple[list[Point3], list[SamplingRange]]:
    """Default user locations and regions for a mode.

    Multi-user templates place the m-th user at
    (10 (m - 1/2), 10 (m - 1/2) - 1, 0) with 10 m x 10 m regions tiled along
    the x axis (single waveguide) or the y axis (multi-waveguide).
    """
    size = DEFAULT_REGION_SIZE
    if mode == "swsu":
        return [Point3(5.0, 4.0, 0.0)], [SamplingRange(0.0, size, 0.0, size)]
    users = [
        Point3(size * (m - 0.5), size * (m - 0.5) - 1.0, 0.0) for m in range(1, count + 1)
    ]
    if mode == "swmu":
        regions = [
            SamplingRange(size * (m - 1), size * m, 0.0, size) for m in range(1, count + 1)
        ]
    else:
        regions = [
            SamplingRange(0.0, size, size * (m - 1), size * m) for m in range(1, count + 1)
        ]
    return users, regions


def default_alpha(count: int) -> list[float]:
    """Power-allocation defaults, weakest user first."""
    if count == 1:
        return [1.0]
    if count == 2:
        return [0.7, 0.3]
    if count == 3:
        return [0.5, 0.3, 0.2]
    # Graceful fallback for larger M: geometric-ish split, normalized.
    weights = [count - m for m in range(count)]
    total = sum(weights)
    return [w / total for w in weights]


def codeword_span_margin(n_antennas: int, guard: float, wavelength: float) -> float:
    """End-side waveguide headroom so edge sampling points still fit codewords."""
    return n_antennas * (guard + 3.0 * wavelength)


class _Raw:
    """Parsed key/value pairs with their source lines."""

    def __init__(self):
        self.values: dict = {}  # (section, key) -> (line, token-string)
        self.users: list = []  # (line, token-string)

    def get(self, section, key, default=None):
        entry = self.values.get((section, key))
        return default if entry is None else entry

    def set(self, section, key, line, value):
        self.values[(section, key)] = (line, value)


def _parse_lines(text: str) -> _Raw:
    raw = _Raw()
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("[") and body.endswith("]"):
            section = body[1:-1].strip().lower()
            if section not in _SECTION_KEYS:
                raise ConfigError(f"unknown section [{section}]", line=lineno, key=section)
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", line=lineno)
        key, _, value = body.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if not value:
            raise ConfigError(f"missing value for {key!r}", line=lineno, key=key)
        if section is None:
            if key not in _TOP_KEYS:
                raise ConfigError(f"unknown key {key!r} at top level", line=lineno, key=key)
            raw.set(None, key, lineno, value)
        else:
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}]", line=lineno, key=key
                )
            if key == "user":
                raw.users.append((lineno, value))
            elif (section, key) in raw.values:
                raise ConfigError(f"duplicate key {key!r}", line=lineno, key=key)
            else:
                raw.set(section, key, lineno, value)
    return raw


def _as_float(entry, key):
    line, value = entry
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {value!r}", line=line, key=key) from None


def _as_int(entry, key):
    line, value = entry
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}", line=line, key=key) from None


def _as_bool(entry, key):
    line, value = entry
    lowered = value.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {value!r}", line=line, key=key)


def _as_floats(entry, key):
    line, value = entry
    try:
        return [float(tok) for tok in value.split()]
    except ValueError:
        raise ConfigError(f"{key} must be numbers, got {value!r}", line=line, key=key) from None


def _positive(value, key, line=None):
    if not value > 0:
        raise ConfigError(f"{key} must be > 0, got {value}", line=line, key=key)
    return value


def _parse_user(line, value):
    tokens = value.split()
    try:
        if len(tokens) == 2:
            return Point3(float(tokens[0]), float(tokens[1]), 0.0), None
        if len(tokens) == 7 and tokens[2].lower() == "region":
            user = Point3(float(tokens[0]), float(tokens[1]), 0.0)
            region = SamplingRange(
                float(tokens[3]), float(tokens[4]), float(tokens[5]), float(tokens[6])
            )
            return user, region
    except ValueError:
        pass
    raise ConfigError(
        "user must be 'x y' or 'x y region xmin xmax ymin ymax', got " f"{value!r}",
        line=line,
        key="user",
    )


def parse_scenario(text: str) -> Scenario:
    """Build a validated Scenario from config text."""
    raw = _parse_lines(text)

    mode_entry = raw.get(None, "mode", (None, "swsu"))
    mode = mode_entry[1].lower()
    if mode not in MODES:
        raise ConfigError(
            f"mode must be one of {MODES}, got {mode!r}", line=mode_entry[0], key="mode"
        )
    seed = _as_int(raw.get(None, "seed", (None, "0")), "seed")

    carrier = _as_float(
        raw.get("system", "carrier_frequency_hz", (None, str(DEFAULT_CARRIER_HZ))),
        "carrier_frequency_hz",
    )
    n_eff = _as_float(
        raw.get("system", "refractive_index", (None, str(DEFAULT_REFRACTIVE_INDEX))),
        "refractive_index",
    )
    height = _as_float(
        raw.get("system", "waveguide_height_m", (None, str(DEFAULT_HEIGHT_M))),
        "waveguide_height_m",
    )
    power_w_entry = raw.get("system", "total_power_w")
    power_dbm_entry = raw.get("system", "total_power_dbm")
    if power_w_entry is not None and power_dbm_entry is not None:
        raise ConfigError(
            "give total_power_w or total_power_dbm, not both",
            line=power_dbm_entry[0],
            key="total_power_dbm",
        )
    if power_dbm_entry is not None:
        power = dbm_to_watts(_as_float(power_dbm_entry, "total_power_dbm"))
    elif power_w_entry is not None:
        power = _as_float(power_w_entry, "total_power_w")
        _positive(power, "total_power_w", power_w_entry[0])
    else:
        power = DEFAULT_POWER_W
    noise_w_entry = raw.get("system", "noise_power_w")
    noise_dbm_entry = raw.get("system", "noise_power_dbm")
    if noise_w_entry is not None and noise_dbm_entry is not None:
        raise ConfigError(
            "give noise_power_w or noise_power_dbm, not both",
            line=noise_dbm_entry[0],
            key="noise_power_dbm",
        )
    if noise_w_entry is not None:
        noise = _as_float(noise_w_entry, "noise_power_w")
        _positive(noise, "noise_power_w", noise_w_entry[0])
    elif noise_dbm_entry is not None:
        noise = dbm_to_watts(_as_float(noise_dbm_entry, "noise_power_dbm"))
    else:
        noise = dbm_to_watts(DEFAULT_NOISE_DBM)
    noise_enabled = _as_bool(
        raw.get("system", "noise_enabled", (None, "false")), "noise_enabled"
    )

    for key, value, entry in (
        ("carrier_frequency_hz", carrier, raw.get("system", "carrier_frequency_hz")),
        ("waveguide_height_m", height, raw.get("system", "waveguide_height_m")),
    ):
        _positive(value, key, entry[0] if entry else None)

    params = derive_params(carrier, n_eff, height, power, noise)

    branches = _as_int(
        raw.get("training", "branches_per_layer", (None, str(DEFAULT_BRANCHES))),
        "branches_per_layer",
    )
    l1 = _as_int(raw.get("training", "stage1_layers", (None, str(DEFAULT_LAYERS))), "stage1_layers")
    l2 = _as_int(raw.get("training", "stage2_layers", (None, str(DEFAULT_LAYERS))), "stage2_layers")
    d_es = _as_float(
        raw.get("training", "exhaustive_cell_m", (None, str(DEFAULT_EXHAUSTIVE_CELL))),
        "exhaustive_cell_m",
    )
    antennas = _as_int(
        raw.get("training", "antenna_count", (None, str(DEFAULT_ANTENNAS))), "antenna_count"
    )
    hp = TrainingHyperparams(
        branches=branches,
        stage1_layers=l1,
        stage2_layers=l2,
        exhaustive_cell=d_es,
        antenna_count=antennas,
    )

    guard_entry = raw.get("training", "guard_distance_m", (None, "auto"))
    if guard_entry[1].lower() == "auto":
        guard = params.wavelength / 2.0
    else:
        guard = _positive(_as_float(guard_entry, "guard_distance_m"), "guard_distance_m", guard_entry[0])
    merge_threshold = _as_float(
        raw.get("training", "merge_threshold_m", (None, str(DEFAULT_MERGE_THRESHOLD))),
        "merge_threshold_m",
    )
    budget = _as_int(
        raw.get("training", "combination_budget", (None, str(DEFAULT_BUDGET))),
        "combination_budget",
    )

    count_entry = raw.get("users", "count")
    if raw.users and count_entry is not None:
        raise ConfigError(
            "give explicit user lines or a count, not both",
            line=count_entry[0],
            key="count",
        )
    if raw.users:
        parsed = [_parse_user(line, value) for line, value in raw.users]
        users = [u for u, _ in parsed]
        explicit_regions = [r for _, r in parsed]
        _, template_regions = template_users(mode, len(users))
        regions = [
            explicit if explicit is not None else template
            for explicit, template in zip(explicit_regions, template_regions)
        ]
    else:
        if count_entry is not None:
            count = _as_int(count_entry, "count")
            _positive(count, "count", count_entry[0])
        else:
            count = 1 if mode == "swsu" else 2
        users, regions = template_users(mode, count)
    if mode == "swsu" and len(users) != 1:
        raise ConfigError(f"swsu mode needs exactly 1 user, got {len(users)}")

    y_entry = raw.get("waveguides", "y_coords")
    if y_entry is not None:
        y_coords = _as_floats(y_entry, "y_coords")
    elif mode == "mwmu":
        y_coords = [DEFAULT_REGION_SIZE * (q - 0.5) for q in range(1, len(users) + 1)]
    else:
        y_coords = [5.0]
    feed_x = _as_float(raw.get("waveguides", "feed_x", (None, "0.0")), "feed_x")
    margin_entry = raw.get("waveguides", "x_margin_m", (None, "auto"))
    if margin_entry[1].lower() == "auto":
        margin = codeword_span_margin(antennas, guard, params.wavelength)
    else:
        margin = _positive(_as_float(margin_entry, "x_margin_m"), "x_margin_m", margin_entry[0])

    x_hull_max = max(r.x_max for r in regions)
    waveguides = [
        Waveguide(
            index=q,
            y=y,
            height=height,
            feed_x=feed_x,
            x_start=feed_x,
            x_end=x_hull_max + margin,
        )
        for q, y in enumerate(y_coords)
    ]
    if mode in ("swsu", "swmu") and len(waveguides) != 1:
        raise ConfigError(
            f"{mode} mode uses a single waveguide, got {len(waveguides)}",
            line=y_entry[0] if y_entry else None,
            key="y_coords",
        )
    if mode == "mwmu" and len(waveguides) != len(users):
        raise ConfigError(
            f"mwmu mode needs one waveguide per user, got {len(waveguides)} "
            f"waveguides for {len(users)} users",
            line=y_entry[0] if y_entry else None,
            key="y_coords",
        )

    alpha_entry = raw.get("noma", "power_allocation")
    if alpha_entry is not None:
        alpha = _as_floats(alpha_entry, "power_allocation")
        if len(alpha) != len(users):
            raise ConfigError(
                f"power_allocation needs {len(users)} coefficients, got {len(alpha)}",
                line=alpha_entry[0],
                key="power_allocation",
            )
        if abs(sum(alpha) - 1.0) > 1e-9:
            raise ConfigError(
                f"power_allocation must sum to 1, got {sum(alpha)}",
                line=alpha_entry[0],
                key="power_allocation",
            )
        if any(not 0.0 < a <= 1.0 for a in alpha):
            raise ConfigError(
                "power_allocation coefficients must lie in (0, 1]",
                line=alpha_entry[0],
                key="power_allocation",
            )
    else:
        alpha = default_alpha(len(users))

    return Scenario(
        mode=mode,
        params=params,
        hyperparams=hp,
        guard=guard,
        merge_threshold=merge_threshold,
        combination_budget=budget,
        waveguides=waveguides,
        users=users,
        regions=regions,
        alpha=alpha,
        noise_powers=np.full(len(users), noise),
        seed=seed,
        noise_enabled=noise_enabled,
    )


def load_scenario(path=None, overrides: dict | None = None) -> Scenario:
    """Load a scenario file (or the defaults) and apply CLI-style overrides.

    Overrides are `(section, key) -> string` pairs applied after parsing the
    file, exactly as if the lines had appeared in it.
    """
    text = ""
    if path is not None:
        with open(path) as fh:
            text = fh.read()
    if overrides:
        # Overrides replace file values: parse the file first, then re-render.
        base = _parse_lines(text)
        for (section, key), value in overrides.items():
            if key == "user":
                base.users = [(0, v) for v in (value if isinstance(value, list) else [value])]
            else:
                base.set(section, key, 0, str(value))
        rendered = []
        if base.get(None, "mode"):
            rendered.append(f"mode = {base.get(None, 'mode')[1]}")
        if base.get(None, "seed"):
            rendered.append(f"seed = {base.get(None, 'seed')[1]}")
        for section in _SECTION_KEYS:
            keys = [
                (k, v)
                for (s, k), (_, v) in base.values.items()
                if s == section and k != "user"
            ]
            if keys or (section == "users" and base.users):
                rendered.append(f"[{section}]")
                for k, v in keys:
                    rendered.append(f"{k} = {v}")
                if section == "users":
                    for _, v in base.users:
                        rendered.append(f"user = {v}")
        text = "\n".join(rendered)
    return parse_scenario(text)
