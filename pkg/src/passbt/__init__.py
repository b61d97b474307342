"""Beam training simulator for pinching-antenna systems."""

from .codebook import (
    Codebook,
    Codeword,
    associate_waveguides,
    generate_codeword,
    generate_positions,
    solve_phase_location,
    truncate_codeword,
)
from .errors import (
    BudgetExceededError,
    ConfigError,
    GeometryError,
    InvalidParameterError,
    OutOfExtentError,
    PassbtError,
    SingularityError,
    UnsupportedConfigurationError,
)
from .mwmu import (
    WaveguideArray,
    lemma1_bruteforce,
    mwmu_channel_vector,
    mwmu_sinr,
    mwmu_sum_rate,
    one_hot_precoders,
    pinching_beamformer,
    run_increased_3sbt,
)
from .noma import (
    cluster_antennas,
    joint_exhaustive,
    noma_received_strength,
    recluster,
    run_improved_3sbt,
    separated_training,
    sic_rates,
)
from .oracle import (
    OracleBudget,
    conventional_ula_bound,
    exhaustive_2d,
    fixed_pinching_bound,
    tdma_wrapper,
)
from .physics import (
    Point3,
    SystemParams,
    Waveguide,
    channel_coefficient,
    derive_params,
    in_waveguide_phase,
    rate_from_signal,
    received_signal_swsu,
)
from .scenario import Scenario, load_scenario, parse_scenario
from .sweeps import SweepSpec, overhead_table, sweep_phase_pattern, sweep_run
from .training import (
    SamplingRange,
    TrainingHyperparams,
    TrainingResult,
    run_3sbt,
    subdivide,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
