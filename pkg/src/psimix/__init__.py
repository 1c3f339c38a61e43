"""psi-mixing sources, slot-based simulation, block rate-distortion and coding bounds."""

from .bounds import (
    BoundReport,
    achievable_rate,
    convergence_sweep,
    convex_gap_bound,
    good_slot_count,
    term_decomposition,
)
from .codesim import (
    MemorylessChannel,
    TrialBatch,
    bsc,
    direct_communication_check,
    error_curve,
    run_trial,
)
from .errors import PsimixError
from .mixing import (
    MixingProfile,
    blocked_psi_comparison,
    ergodic_cesaro_check,
    lambda_profile,
    psi_brute_force,
    psi_markov,
    residual_distribution,
    verify_decomposition,
)
from .process import (
    CylinderLaw,
    MarkovSource,
    binary_symmetric_chain,
    block_process,
    check_irreducible_aperiodic,
    conditional_law,
    cylinder_probability,
    iid_source,
    load_chain,
    marginal_PT,
    order_m_wrap,
    stationary_distribution,
)
from .ratedist import (
    DistortionMeasure,
    RDPoint,
    blahut_arimoto,
    rd_curve,
    rd_limit_estimate,
    rd_vector_source,
)
from .simulate import (
    SlotSchedule,
    build_schedule,
    draw_flags,
    exact_simulated_law,
    generate_codebook,
    simulate_sequence,
)

__version__ = "0.1.0"
