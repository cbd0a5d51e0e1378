"""Wirelessly powered massive-MIMO uplink toolkit.

Models a multi-antenna access point that charges K single-antenna users over
the downlink by energy beamforming and then receives their uplink data, with
the users spending a fraction of the harvested energy on channel-estimation
pilots.  Provides closed-form rate lower bounds for zero-forcing and
maximum-ratio-combining detection, exact-rate Monte Carlo validation, and a
grid-search solver for the max-min rate resource-allocation problem over the
frame split (tau, alpha), the energy-splitting fraction rho, and the
beam-energy weights xi.
"""

from wetmm.sysmodel import (
    ChannelRealization,
    PathLossModel,
    SystemParams,
    complex_gaussian,
    generate_channel,
    path_loss,
    trial_rng,
)
from wetmm.estimation import (
    PilotConfig,
    draw_realization,
    error_variance,
    make_pilots,
    mmse_estimate,
    receive_pilots,
)
from wetmm.energy import (
    EnergyReport,
    ResourceAllocation,
    asymptotic_energy,
    beamformer,
    energy_report,
    error_variance_split,
    expected_harvested_energy,
    general_beamformer,
    harvested_energy_fixedpoint,
    ideal_energy,
    opmm_energy,
    uplink_power,
)
from wetmm.rates import (
    RateReport,
    asymptotic_mrc_rate,
    asymptotic_zf_rate,
    c1_limit,
    c1_sample,
    closed_form_rate,
    ideal_asymptotic_rate,
    ideal_rate,
    large_k_rate,
    maxmin_asymptotic_rate,
    mm_dorg,
    mrc_rate,
    opmm_mrc_rate,
    opmm_zf_rate,
    user_load_for_rate,
    zf_rate,
)
from wetmm.optimizer import (
    OptimizationResult,
    asymptotic_allocation,
    grid_search_p1,
    optimal_rho_zf,
    optimal_xi,
    solve_p1_analytic,
)
from wetmm.montecarlo import (
    BeamformerComparison,
    BoundCheck,
    FrameSample,
    McConfig,
    McRateEstimate,
    estimate_exact_rate,
    run_trials,
    simulate_frame,
    verify_beamformer_structure,
    verify_bound_tightness,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
