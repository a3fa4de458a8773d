"""Random uplink NOMA with cross-slot SIC packet recovery."""

__version__ = "0.1.0"

from .channel import (
    AnalyticalDomainError,
    ParameterError,
    SystemConfig,
    db_to_linear,
    is_potential,
    rho_threshold,
    sample_snr,
    sic_prefix_length,
)
from .markov import (
    BufferState,
    EventProbabilities,
    TransitionModel,
    TransitionPolynomial,
    analytical_sum_rate,
    build_transition_model,
    event_probabilities,
    event_probabilities_mc,
    steady_state,
    throughput_matrix,
)
from .optimizer import (
    GridSpec,
    OptimizationResult,
    build_lookup_table,
    grid_search_analytical,
    grid_search_simulated,
    sweep_k,
)
from .sic import (
    BufferedSlot,
    CollisionBuffer,
    PacketCopy,
    PacketId,
    cross_slot_cancel,
    evict_dead_slots,
    intra_slot_detect,
    recovery_cascade,
)
from .simulator import (
    SimMetrics,
    classify_buffer_state,
    run_experiment,
    run_monte_carlo,
    run_slot,
)
