"""pruefer-lab: level statistics of 1D operators with decaying random potential."""

from .model import (
    DecayProfile,
    PotentialModel,
    SpectralConstants,
    carre_du_champ_mean,
    energy_for_beta,
    eval_decay,
    eval_potential,
    find_critical_energy,
    lyapunov_from_spectral_measure,
    resolvent_apply,
    spectral_constants,
)
from .pruefer import (
    NoisePath,
    PhaseTrajectory,
    integrate_theta,
    integrate_theta_batch,
    phase_mod,
    relative_phase,
    simulate_noise,
)
from .spectrum import (
    EigenWindow,
    PointProcessSample,
    choose_length,
    count_states,
    laplace_functional_via_phase,
    solve_eigenvalues,
    spacing_fluctuations,
    two_window_sample,
)
from .limits import (
    CBESample,
    ClockSample,
    PsiPaths,
    cbe_chain,
    cbe_scaled_gaps,
    clock_limit_sample,
    gaussian_covariance,
    gaussian_covariance_general,
    psi_batch,
    sample_circular_beta,
    sde_limit_point_process,
    simulate_eta_sde,
    simulate_psi_sde,
)
from . import stats

__version__ = "0.1.0"
