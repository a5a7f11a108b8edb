"""Photon-counting trajectories, filtering and past-state smoothing for N-level cascades."""

from .ancilla import (
    KrausInstrument,
    OutcomeProbabilities,
    boundary_probs,
    smoothed_outcome_probs,
    validate_instrument,
)
from .filter import (
    TrajectoryBatch,
    TrajectoryResult,
    apply_jump,
    filter_along_record,
    jump_intensity,
    no_count_evolve,
    sample_trajectories,
    sample_trajectory,
    stability_exponents,
    zakai_along_record,
)
from .integrate import TimeGrid
from .master import default_grid, evolve_populations, evolve_unconditioned
from .model import (
    Channel,
    LevelSystem,
    build_system,
    collapse_operator,
    damping_operator,
    lindbladian,
    liouvillian,
    load_system,
    total_rate,
)
from .oracle import discrete_step, enumerate_joint, oracle_smoothed_probs
from .paths import Path
from .records import CountEvent, CountRecord, read_record, write_record
from .smoother import backward_effect, record_likelihood

__version__ = "0.1.0"
