"""Stochastic frame simulation validating the closed forms end to end.

Each trial draws one channel realization, runs the energy phase through the
actual beamformer, estimates the channel (or injects the statistically
equivalent estimate), and computes the exact per-user uplink SINR

    gamma_k = p_k |a_k^H ghat_k|^2 /
              ( sum_{i != k} p_i |a_k^H ghat_i|^2
                + ||a_k||^2 ( sum_i p_i sigma2_e_i + sigma2 ) )

with a_k the k-th detector column, so that (1 - tau - alpha) E[log2(1 +
gamma_k)] is the exact ergodic rate the closed-form expressions lower-bound.
Uplink powers use the steady-state energies: the analytical model's
operating point, reproduced here so the Monte Carlo estimates the same
quantity the formulas predict.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wetmm.energy import (
    ResourceAllocation,
    beamformer,
    clamp_rho,
    general_beamformer,
    harvested_energy_fixedpoint,
    ideal_energy,
    opmm_energy,
    uplink_power,
)
from wetmm.estimation import draw_realization, error_variance
from wetmm.sysmodel import SystemParams, generate_channel, trial_rng

__all__ = [
    "COND_LIMIT",
    "MAX_RESAMPLES",
    "McConfig",
    "FrameSample",
    "McRateEstimate",
    "BoundCheck",
    "BeamformerComparison",
    "simulate_frame",
    "run_trials",
    "estimate_exact_rate",
    "verify_bound_tightness",
    "verify_beamformer_structure",
]

COND_LIMIT = 1e12
MAX_RESAMPLES = 8


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings.

    Attributes:
        n_trials: number of independent channel realizations.
        master_seed: root seed; trial t uses the (t, salt) spawn of it.
        channel_knowledge: "statistical" draws the estimate and error
            directly from their exact joint distribution; "pilot" runs the
            full pilot transmission and MMSE estimator.  The two are
            distributionally identical; "statistical" is the cheap default.
        detector: "zf" or "mrc".
        system: "wetmm", "opmm", or "ideal".
    """

    n_trials: int = 1000
    master_seed: int = 0
    channel_knowledge: str = "statistical"
    detector: str = "zf"
    system: str = "wetmm"

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.channel_knowledge not in ("statistical", "pilot"):
            raise ValueError(f"unknown channel knowledge path: {self.channel_knowledge!r}")
        if self.detector not in ("zf", "mrc"):
            raise ValueError(f"unknown detector: {self.detector!r}")
        if self.system not in ("wetmm", "opmm", "ideal"):
            raise ValueError(f"unknown system: {self.system!r}")


@dataclass
class FrameSample:
    """One simulated frame: per-user energy and exact SINR.

    Attributes:
        energy: length-K harvested-energy samples alpha p_dl |g_k^H w|^2.
        sinr: length-K exact SINR samples.
        resamples: how many redraws a near-singular ZF Gram matrix forced.
        trial: trial index the sample came from.
    """

    energy: np.ndarray
    sinr: np.ndarray
    resamples: int
    trial: int


@dataclass
class McRateEstimate:
    """Per-user Monte Carlo rate estimate with standard errors."""

    rate: np.ndarray
    rate_se: np.ndarray
    energy: np.ndarray
    energy_se: np.ndarray
    n_trials: int
    n_resamples: int


@dataclass
class BoundCheck:
    """Exact MC rate versus the closed-form lower bound.

    ``jensen_ok`` means no user's bound exceeds the exact rate by more than
    3 MC standard errors; ``tight`` means every relative gap is within the
    tolerance given to the check; ``conclusive`` is False when the MC error
    bars are too wide for either statement to mean anything.
    """

    exact: np.ndarray
    exact_se: np.ndarray
    bound: np.ndarray
    gap: np.ndarray
    jensen_ok: bool
    tight: bool
    conclusive: bool


@dataclass
class BeamformerComparison:
    """Paired MC energies: subspace beam versus complement-leaking beam."""

    structured: np.ndarray
    structured_se: np.ndarray
    general: np.ndarray
    general_se: np.ndarray
    diff: np.ndarray
    diff_se: np.ndarray
    theta_mass: float
    n_trials: int


def _operating_point(params: SystemParams, alloc: ResourceAllocation, system: str):
    """Steady-state energies, pilot energies, powers, and error variances."""
    rem = 1.0 - alloc.tau - alloc.alpha
    if alloc.alpha <= 0 or rem <= 0:
        raise ValueError("Monte Carlo needs alpha > 0 and tau + alpha < 1")
    if system == "ideal":
        e = ideal_energy(alloc.alpha, alloc.xi, params.beta, params.M, params.p_dl)
        powers = e / (1.0 - alloc.alpha)
        return e, None, powers, np.zeros(params.K)
    rho = float(clamp_rho(alloc.rho))
    if system == "wetmm":
        e = harvested_energy_fixedpoint(alloc.alpha, rho, alloc.xi, params.beta,
                                        params.M, params.p_dl, params.sigma2_ul)
    else:
        e = opmm_energy(alloc.alpha, params.beta, params.p_dl)
    pilot_energy = rho * e
    powers = uplink_power(alloc.tau, alloc.alpha, rho, e)
    err_var = error_variance(params.beta, pilot_energy, params.sigma2_ul)
    return e, pilot_energy, powers, err_var


def _exact_sinr(G_hat: np.ndarray, powers: np.ndarray, err_var: np.ndarray,
                sigma2: float, detector: str):
    """SINR of every user for one realization; None if ZF is ill-conditioned."""
    if detector == "zf":
        gram = G_hat.conj().T @ G_hat
        if np.linalg.cond(gram) > COND_LIMIT:
            return None
        A = np.linalg.solve(gram, G_hat.conj().T).conj().T
    else:
        A = G_hat
    cross = np.abs(A.conj().T @ G_hat) ** 2
    signal = powers * np.diag(cross)
    interference = cross @ powers - np.diag(cross) * powers
    norms2 = np.sum(np.abs(A) ** 2, axis=0)
    noise = norms2 * (float(np.dot(powers, err_var)) + sigma2)
    return signal / (interference + noise)


def simulate_frame(params: SystemParams, alloc: ResourceAllocation, cfg: McConfig,
                   trial: int) -> FrameSample:
    """Simulate one frame: energy-phase sample and exact uplink SINRs.

    A near-singular ZF Gram matrix triggers a full redraw of the trial with
    an incremented sub-seed; the count is recorded on the sample.

    Raises:
        np.linalg.LinAlgError: if the redraw budget is exhausted.
    """
    if cfg.detector == "zf":
        params.require_zf()
    _, pilot_energy, powers, err_var = _operating_point(params, alloc, cfg.system)
    for salt in range(MAX_RESAMPLES + 1):
        if cfg.system == "ideal":
            rng = trial_rng(cfg.master_seed, trial, salt)
            G = generate_channel(params, rng)
            G_hat = G
        else:
            real = draw_realization(params, pilot_energy, cfg.master_seed, trial,
                                    method=cfg.channel_knowledge, salt=salt)
            G, G_hat = real.G, real.G_hat
        if cfg.system == "opmm":
            w = np.full(params.M, 1.0 / np.sqrt(params.M), dtype=complex)
        else:
            w = beamformer(G_hat, alloc.xi)
        energy = alloc.alpha * params.p_dl * np.abs(G.conj().T @ w) ** 2
        sinr = _exact_sinr(G_hat, powers, err_var, params.sigma2_ul, cfg.detector)
        if sinr is not None:
            return FrameSample(energy=energy, sinr=sinr, resamples=salt, trial=trial)
    raise np.linalg.LinAlgError(
        f"ZF Gram matrix stayed ill-conditioned after {MAX_RESAMPLES} redraws (trial {trial})"
    )


def run_trials(params: SystemParams, alloc: ResourceAllocation, cfg: McConfig) -> list[FrameSample]:
    """Simulate cfg.n_trials independent frames."""
    return [simulate_frame(params, alloc, cfg, t) for t in range(cfg.n_trials)]


def _mean_se(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = samples.mean(axis=0)
    n = samples.shape[0]
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / np.sqrt(n)


def estimate_exact_rate(params: SystemParams, alloc: ResourceAllocation,
                        cfg: McConfig) -> McRateEstimate:
    """Per-user exact ergodic rate: mean of rem * log2(1 + gamma) with SE.

    rem is 1 - tau - alpha (1 - alpha for the ideal system, which has no
    estimation phase).  Harvested-energy statistics ride along for free.
    """
    samples = run_trials(params, alloc, cfg)
    sinr = np.stack([s.sinr for s in samples])
    energy = np.stack([s.energy for s in samples])
    rem = 1.0 - alloc.alpha if cfg.system == "ideal" else 1.0 - alloc.tau - alloc.alpha
    rate, rate_se = _mean_se(rem * np.log2(1.0 + sinr))
    e_mean, e_se = _mean_se(energy)
    return McRateEstimate(rate=rate, rate_se=rate_se, energy=e_mean, energy_se=e_se,
                          n_trials=cfg.n_trials,
                          n_resamples=int(sum(s.resamples for s in samples)))


def verify_bound_tightness(params: SystemParams, alloc: ResourceAllocation, cfg: McConfig,
                           gap_tol: float = 0.05, precision: float = 0.02) -> BoundCheck:
    """Compare the exact MC rate against the closed-form lower bound.

    The bound must sit below the exact rate up to MC noise (3 standard
    errors).  ``tight`` additionally checks gap / exact <= gap_tol per
    user.  If any user's 3-sigma half width exceeds ``precision`` of its
    exact rate, the check is flagged inconclusive and neither verdict
    should be trusted.
    """
    from wetmm.rates import closed_form_rate

    est = estimate_exact_rate(params, alloc, cfg)
    bound = closed_form_rate(params, alloc, cfg.system, cfg.detector).rate
    gap = est.rate - bound
    conclusive = bool(np.all(3.0 * est.rate_se <= precision * np.abs(est.rate)))
    jensen_ok = bool(np.all(gap >= -3.0 * est.rate_se))
    with np.errstate(invalid="ignore", divide="ignore"):
        tight = bool(np.all(gap / est.rate <= gap_tol))
    return BoundCheck(exact=est.rate, exact_se=est.rate_se, bound=bound, gap=gap,
                      jensen_ok=jensen_ok, tight=tight, conclusive=conclusive)


def verify_beamformer_structure(params: SystemParams, alloc: ResourceAllocation,
                                theta_mass: float, cfg: McConfig) -> BeamformerComparison:
    """Paired MC test that moving beam energy off the user subspace loses.

    The general beam splits downlink energy as xi' = (1 - theta_mass) xi on
    the estimated user directions plus theta_mass spread uniformly over the
    orthogonal complement.  The structured competitor renormalizes xi' back
    onto the simplex, which for a uniform scaling is xi itself.  Both beams
    see the same realizations, so the per-trial difference is a paired
    sample.
    """
    if not 0 <= theta_mass <= 1:
        raise ValueError("theta_mass must lie in [0, 1]")
    if cfg.system != "wetmm":
        raise ValueError("the beam-structure comparison applies to the subspace-beam system")
    n_comp = params.M - params.K
    if n_comp < 1:
        raise ValueError("need M > K for an orthogonal complement")
    _, pilot_energy, _, _ = _operating_point(params, alloc, cfg.system)
    xi_prime = (1.0 - theta_mass) * alloc.xi
    theta = np.full(n_comp, theta_mass / n_comp)
    scale = alloc.alpha * params.p_dl
    structured = np.empty((cfg.n_trials, params.K))
    general = np.empty((cfg.n_trials, params.K))
    for t in range(cfg.n_trials):
        real = draw_realization(params, pilot_energy, cfg.master_seed, t,
                                method=cfg.channel_knowledge)
        w_s = beamformer(real.G_hat, alloc.xi)
        w_g = general_beamformer(real.G_hat, xi_prime, theta)
        structured[t] = scale * np.abs(real.G.conj().T @ w_s) ** 2
        general[t] = scale * np.abs(real.G.conj().T @ w_g) ** 2
    s_mean, s_se = _mean_se(structured)
    g_mean, g_se = _mean_se(general)
    d_mean, d_se = _mean_se(structured - general)
    return BeamformerComparison(structured=s_mean, structured_se=s_se,
                                general=g_mean, general_se=g_se,
                                diff=d_mean, diff_se=d_se,
                                theta_mass=float(theta_mass), n_trials=cfg.n_trials)
