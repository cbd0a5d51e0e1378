"""Pilot construction, received-pilot synthesis, and MMSE channel estimation.

Users send orthogonal uplink pilots with per-user pilot energy D_k (total
energy over the whole pilot block, i.e. pilot length times per-symbol pilot
power).  The access point observes

    Y_p = G (Phi D^(1/2))^T + N,    Phi^H Phi = I_K,  N i.i.d. CN(0, sigma2)

and forms the linear MMSE estimate

    G_hat = Y_p Phi^* (B D + sigma2 I)^(-1) D^(1/2) B,   B = diag(beta).

Estimate and error are independent with per-entry variances
beta_k - error_var_k and error_var_k = beta_k sigma2 / (sigma2 + beta_k D_k).

Two interchangeable ways to produce a (G, G_hat) pair are provided: the full
pilot pipeline above, and a direct statistical draw of estimate and error
from their exact marginals.  Both give the same distribution for every
downstream statistic; the direct draw skips the (M x L) pilot block and is
the default inside optimization and Monte Carlo loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wetmm.sysmodel import ChannelRealization, SystemParams, complex_gaussian, generate_channel, trial_rng

__all__ = [
    "PilotConfig",
    "make_pilots",
    "receive_pilots",
    "mmse_estimate",
    "error_variance",
    "draw_realization",
]


@dataclass(frozen=True)
class PilotConfig:
    """Orthogonal pilot block.

    Attributes:
        L: pilot length in symbols, L >= K.
        pilot_energy: length-K vector of total per-user pilot energies.
        Phi: (L, K) pilot matrix with orthonormal columns.
    """

    L: int
    pilot_energy: np.ndarray
    Phi: np.ndarray


def make_pilots(L: int, K: int, pilot_energy) -> PilotConfig:
    """Build a DFT-based orthogonal pilot block.

    Column k of Phi is the k-th column of the L-point DFT matrix scaled to
    unit norm, so Phi^H Phi = I_K exactly for any L >= K.

    Args:
        L: pilot length in symbols.
        K: number of users.
        pilot_energy: scalar or length-K total pilot energy per user.

    Raises:
        ValueError: if L < K or any pilot energy is negative.
    """
    if L < K:
        raise ValueError(f"pilot length must cover all users, got L={L} < K={K}")
    energy = np.broadcast_to(np.asarray(pilot_energy, dtype=float), (K,)).copy()
    if np.any(energy < 0):
        raise ValueError("pilot energy must be nonnegative")
    rows = np.arange(L)[:, None]
    cols = np.arange(K)[None, :]
    phi = np.exp(-2j * np.pi * rows * cols / L) / np.sqrt(L)
    energy.setflags(write=False)
    phi.setflags(write=False)
    return PilotConfig(L=L, pilot_energy=energy, Phi=phi)


def receive_pilots(G: np.ndarray, pilots: PilotConfig, sigma2_ul: float, seed) -> np.ndarray:
    """Synthesize the noisy received pilot block Y_p = G (Phi D^(1/2))^T + N.

    Args:
        G: true channel, (M, K).
        pilots: pilot block with per-user energies D.
        sigma2_ul: noise power per receive antenna.
        seed: integer seed or numpy Generator for the noise draw.

    Returns:
        Complex (M, L) received block.  With zero pilot energy the output is
        pure noise.
    """
    rng = seed if isinstance(seed, np.random.Generator) else trial_rng(int(seed))
    amp = np.sqrt(pilots.pilot_energy)
    signal = (G * amp[None, :]) @ pilots.Phi.T
    noise = complex_gaussian(rng, (G.shape[0], pilots.L), sigma2_ul)
    return signal + noise


def mmse_estimate(Y_p: np.ndarray, pilots: PilotConfig, beta: np.ndarray, sigma2_ul: float) -> np.ndarray:
    """Linear MMSE channel estimate from a received pilot block.

    Args:
        Y_p: received block, (M, L).
        pilots: the pilot block that produced Y_p.
        beta: length-K path losses.
        sigma2_ul: noise power per receive antenna.

    Returns:
        (M, K) estimate whose column k has per-entry variance
        beta_k - error_variance(beta_k, D_k, sigma2_ul).
    """
    if sigma2_ul <= 0:
        raise ValueError("sigma2_ul must be positive")
    beta = np.asarray(beta, dtype=float)
    energy = pilots.pilot_energy
    # diagonal K x K factors collapse to a per-column scale
    scale = np.sqrt(energy) * beta / (beta * energy + sigma2_ul)
    return (Y_p @ pilots.Phi.conj()) * scale[None, :]


def error_variance(beta_k, pilot_energy_k, sigma2_ul):
    """Per-entry MMSE estimation-error variance.

        error_var = beta / (1 + beta * D / sigma2)

    Decreasing in the pilot energy D; equals beta at D = 0 (estimate carries
    no information) and tends to 0 as D grows.  Broadcasts over arrays.
    """
    beta_k = np.asarray(beta_k, dtype=float)
    pilot_energy_k = np.asarray(pilot_energy_k, dtype=float)
    if np.any(pilot_energy_k < 0):
        raise ValueError("pilot energy must be nonnegative")
    if np.any(sigma2_ul <= 0):
        raise ValueError("sigma2_ul must be positive")
    return beta_k / (1.0 + beta_k * pilot_energy_k / sigma2_ul)


def draw_realization(
    params: SystemParams,
    pilot_energy,
    master_seed: int,
    trial: int = 0,
    method: str = "statistical",
    salt: int = 0,
) -> ChannelRealization:
    """Draw a channel together with its MMSE estimate.

    Args:
        params: scenario constants.
        pilot_energy: scalar or length-K total pilot energy per user.
        master_seed, trial: stream selector; identical values reproduce the
            realization bit for bit.
        method: "statistical" samples estimate and error directly from their
            exact marginals; "pilot" runs the full pipeline (channel draw,
            received block, MMSE estimator).  The two are distributionally
            equivalent.
        salt: in-trial resampling counter, 0 for the first attempt.

    Returns:
        ChannelRealization with independent estimate and error.
    """
    energy = np.broadcast_to(np.asarray(pilot_energy, dtype=float), (params.K,))
    rng = trial_rng(master_seed, trial, salt)
    err_var = error_variance(params.beta, energy, params.sigma2_ul)
    if method == "statistical":
        g_hat = complex_gaussian(rng, (params.M, params.K), params.beta - err_var)
        err = complex_gaussian(rng, (params.M, params.K), err_var)
        g = g_hat - err
    elif method == "pilot":
        g = generate_channel(params, rng)
        pilots = make_pilots(params.K, params.K, energy)
        y = receive_pilots(g, pilots, params.sigma2_ul, rng)
        g_hat = mmse_estimate(y, pilots, params.beta, params.sigma2_ul)
    else:
        raise ValueError(f"unknown channel-knowledge method: {method!r}")
    return ChannelRealization(G=g, G_hat=g_hat, error_var=err_var, seed=master_seed, trial=trial)
