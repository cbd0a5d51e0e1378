"""Scenario definition, path-loss modeling, and random channel generation.

The channel between the M-antenna access point and the K single-antenna
users is independent Rayleigh fading scaled by per-user long-term path loss:

    G = H diag(beta)^(1/2),   H i.i.d. CN(0, 1)

so column k of G is CN(0, beta_k I_M).  Channel reciprocity holds within a
frame; the frame length is normalized to 1, so all phase durations are
dimensionless fractions and the energy delivered over a fraction is simply
power times fraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SystemParams",
    "PathLossModel",
    "ChannelRealization",
    "path_loss",
    "generate_channel",
    "trial_rng",
    "complex_gaussian",
]


def trial_rng(master_seed: int, trial: int = 0, salt: int = 0) -> np.random.Generator:
    """Independent random stream for one Monte Carlo trial.

    Streams are derived as ``SeedSequence(master_seed, spawn_key=(trial, salt))``,
    so any (master_seed, trial) pair maps to the same stream no matter how many
    trials run, in what order, or on how many workers.  ``salt`` is reserved for
    in-trial resampling (e.g. redrawing a numerically singular channel) and must
    stay 0 on the first attempt.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial), int(salt)))
    return np.random.default_rng(ss)


def complex_gaussian(rng: np.random.Generator, shape, var=1.0) -> np.ndarray:
    """I.i.d. circularly symmetric complex Gaussian samples CN(0, var).

    Each sample is built from two independent real Gaussians of variance
    var/2.  ``var`` broadcasts against ``shape``, so per-column variances can
    be passed directly.
    """
    var = np.asarray(var, dtype=float)
    if np.any(var < 0):
        raise ValueError("variance must be nonnegative")
    std = np.sqrt(var / 2.0)
    return std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of one scenario.

    Attributes:
        M: antenna count at the access point.
        K: number of single-antenna users.
        p_dl: downlink transmit power in watts.
        sigma2_ul: noise power at each access-point antenna in watts.
        sigma2_user: noise power at the user receiver in watts.  Stored for
            completeness; receiver noise is not harvestable energy, so nothing
            downstream consumes it.
        beta: length-K vector of long-term path losses (linear scale).
    """

    M: int
    K: int
    p_dl: float
    sigma2_ul: float
    sigma2_user: float
    beta: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        if self.M < 2:
            raise ValueError(f"need at least 2 antennas, got M={self.M}")
        if self.K < 1:
            raise ValueError(f"need at least 1 user, got K={self.K}")
        if beta.shape != (self.K,):
            raise ValueError(f"beta must have shape ({self.K},), got {beta.shape}")
        if not np.all(beta > 0):
            raise ValueError("all path losses must be positive")
        for name in ("p_dl", "sigma2_ul", "sigma2_user"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    def require_zf(self) -> None:
        """Zero-forcing detection needs strictly more antennas than users."""
        if self.M < self.K + 1:
            raise ValueError(f"ZF requires M >= K+1, got M={self.M}, K={self.K}")


@dataclass(frozen=True)
class PathLossModel:
    """Power-law path loss beta = beta0 * d^(-u).

    Attributes:
        beta0: path loss at unit distance.
        u: path-loss exponent.
        distances: per-user distances, same length as the user set.
    """

    beta0: float
    u: float
    distances: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.distances, dtype=float)).copy()
        if self.beta0 <= 0:
            raise ValueError("beta0 must be positive")
        if not np.all(d > 0):
            raise ValueError("distances must be positive")
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)


def path_loss(model: PathLossModel) -> np.ndarray:
    """Per-user path losses for a power-law model."""
    return model.beta0 * model.distances ** (-model.u)


def generate_channel(params: SystemParams, seed) -> np.ndarray:
    """One draw of the M x K uplink channel matrix G = H diag(beta)^(1/2).

    Args:
        params: scenario constants.
        seed: integer master seed (expanded through :func:`trial_rng`) or an
            existing numpy Generator to draw from directly.

    Returns:
        Complex (M, K) array; column k has i.i.d. CN(0, beta_k) entries.
        A fixed integer seed reproduces the matrix bit for bit.
    """
    rng = seed if isinstance(seed, np.random.Generator) else trial_rng(int(seed))
    h = complex_gaussian(rng, (params.M, params.K))
    return h * np.sqrt(params.beta)[None, :]


@dataclass
class ChannelRealization:
    """A channel draw together with its estimate.

    Attributes:
        G: true channel, (M, K) complex.
        G_hat: MMSE channel estimate, (M, K) complex.
        error_var: length-K per-entry variance of the estimation error
            column, so entries of ``G_hat[:, k] - G[:, k]`` are
            CN(0, error_var[k]).
        seed: master seed that produced the draw.
        trial: trial index under that seed.
    """

    G: np.ndarray
    G_hat: np.ndarray
    error_var: np.ndarray
    seed: int
    trial: int = 0
