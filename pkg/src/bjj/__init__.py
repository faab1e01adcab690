"""Two-mode Bose-Josephson junction with two-body atom losses.

Exact block-diagonal master-equation dynamics, quantum trajectories,
closed-form conditional states and phase-estimation metrics.
"""

__version__ = "0.1.0"

from .fock import (  # noqa: E402
    Channel,
    ModelParams,
    SectorState,
    angular_momentum_matrices,
    apply_jump,
    coherent_state,
    damping_eigenvalues,
    h0_eigenvalues,
    heff_eigenvalues,
)
from .dynamics import (  # noqa: E402
    BlockDensity,
    IntegrationError,
    IntegratorConfig,
    SectorDensity,
    cat_component_phases,
    evolve_master,
    evolve_master_series,
    formation_time,
    lossless_evolve,
    master_rhs,
    mean_atom_number,
    sector_weight,
)
from .trajectories import (  # noqa: E402
    EnsembleEstimate,
    JumpRecord,
    Trajectory,
    ensemble_average,
    evolve_with_jumps,
    jump_angles,
    propagate_no_jump,
    run_trajectory,
    trajectory_state_analytic,
)
from .conditional import (  # noqa: E402
    EnvelopeSpec,
    damping_center,
    envelope_C,
    jump_time_distribution,
    loss_time_std,
    multi_loss_conditional_approx,
    no_loss_conditional,
    single_loss_conditional,
    weak_loss_envelope,
)
from .metrics import (  # noqa: E402
    FisherResult,
    HusimiGrid,
    husimi,
    qfi_matrix,
    qfi_optimal,
    qfi_total,
    shot_noise_report,
)
