"""Downlink energy transfer: beamforming and harvested-energy models.

The frame splits into a channel-estimation phase (fraction tau), a downlink
wireless-energy-transfer phase (fraction alpha), and an uplink data phase
(fraction 1 - tau - alpha).  Each user banks the energy harvested during the
energy phase, spends a fraction rho of it on the next frame's pilots, and
the remaining (1 - rho) on uplink data transmission.

The access point beams with

    w = sum_k sqrt(xi_k) g_hat_k / ||g_hat_k||,   sum_k xi_k = 1

which has unit norm in expectation only; it is deliberately not renormalized
per realization.  In steady state the banked energy solves the fixed point
E = Q(rho E), where Q(D) is the mean harvested energy under pilot energy D.
That quadratic has the closed-form positive root implemented here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wetmm.estimation import error_variance
from wetmm.sysmodel import SystemParams

__all__ = [
    "RHO_CLAMP",
    "ResourceAllocation",
    "EnergyReport",
    "clamp_rho",
    "beamformer",
    "general_beamformer",
    "expected_harvested_energy",
    "harvested_energy_fixedpoint",
    "error_variance_split",
    "uplink_power",
    "ideal_energy",
    "opmm_energy",
    "asymptotic_energy",
    "energy_report",
]

# The harvested-energy fixed point and the splitting error variance are
# singular at rho = 0 and rho = 1, both of which the allocation constraints
# allow.  All evaluations pull rho this far inside the open interval.
RHO_CLAMP = 1e-4


def clamp_rho(rho):
    """Pull the energy-splitting fraction away from its singular endpoints."""
    return np.clip(rho, RHO_CLAMP, 1.0 - RHO_CLAMP)


@dataclass(frozen=True)
class ResourceAllocation:
    """One point of the resource-allocation search space.

    Attributes:
        tau: channel-estimation time fraction, >= 0.
        alpha: energy-transfer time fraction, >= 0, with tau + alpha <= 1.
        rho: fraction of harvested energy spent on pilots, in [0, 1].
            Formulas evaluate it clamped to [RHO_CLAMP, 1 - RHO_CLAMP].
        xi: length-K beam-energy weights summing to 1.
    """

    tau: float
    alpha: float
    rho: float
    xi: np.ndarray

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float)).copy()
        if self.tau < 0 or self.alpha < 0:
            raise ValueError("time fractions must be nonnegative")
        if self.tau + self.alpha > 1.0 + 1e-12:
            raise ValueError(f"tau + alpha = {self.tau + self.alpha} exceeds the frame")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if np.any(xi < 0):
            raise ValueError("beam weights must be nonnegative")
        if abs(xi.sum() - 1.0) > 1e-9:
            raise ValueError(f"beam weights must sum to 1, got {xi.sum()}")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)


@dataclass
class EnergyReport:
    """Per-user steady-state energy bookkeeping at one allocation.

    Attributes:
        E: banked harvested energy per frame.
        pilot_energy: rho * E, spent on the pilot block.
        uplink_power: transmit power during the data phase.
        error_var: channel-estimation error variance at that pilot energy.
    """

    E: np.ndarray
    pilot_energy: np.ndarray
    uplink_power: np.ndarray
    error_var: np.ndarray


def beamformer(G_hat: np.ndarray, xi) -> np.ndarray:
    """Energy beam aimed at the estimated user channels.

    w = sum_k sqrt(xi_k) g_hat_k / ||g_hat_k||.  The norm of w is 1 only in
    expectation; per realization it fluctuates and must not be renormalized,
    otherwise the harvested-energy statistics change.

    Raises:
        ValueError: if any estimate column is numerically zero.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    norms = np.linalg.norm(G_hat, axis=0)
    if np.any(norms <= 0) or not np.all(np.isfinite(norms)):
        raise ValueError("degenerate channel estimate: zero-norm column")
    return (G_hat / norms[None, :]) @ np.sqrt(xi)


def general_beamformer(G_hat: np.ndarray, xi_prime, theta) -> np.ndarray:
    """Beam with energy split between user directions and their complement.

    w0 = sum_k sqrt(xi'_k) g_hat_k / ||g_hat_k|| + sum_i sqrt(theta_i) u_i
    where {u_i} is an orthonormal basis of the orthogonal complement of the
    estimated signal subspace.  Requires sum(xi') + sum(theta) = 1.

    Useful as the comparison arm when showing that moving energy off the
    estimated subspace never helps: it only reaches users through their
    estimation error.
    """
    xi_prime = np.atleast_1d(np.asarray(xi_prime, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    m, k = G_hat.shape
    if np.any(xi_prime < 0) or np.any(theta < 0):
        raise ValueError("beam weights must be nonnegative")
    total = xi_prime.sum() + theta.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"beam weights must sum to 1, got {total}")
    if theta.size > m - k:
        raise ValueError(f"at most M-K={m - k} complement directions, got {theta.size}")
    # complete QR: columns K..M-1 of Q span the complement of col(G_hat)
    q, _ = np.linalg.qr(G_hat, mode="complete")
    complement = q[:, k:k + theta.size]
    w = complement @ np.sqrt(theta.astype(complex))
    if xi_prime.sum() > 0:
        norms = np.linalg.norm(G_hat, axis=0)
        if np.any(norms <= 0):
            raise ValueError("degenerate channel estimate: zero-norm column")
        w = w + (G_hat / norms[None, :]) @ np.sqrt(xi_prime)
    return w


def expected_harvested_energy(pilot_energy, alpha, xi, beta, M, p_dl, sigma2_ul):
    """Mean harvested energy under the subspace beam, given pilot energy.

    Q = alpha p_dl xi beta M [1 - (M-1) sigma2 / (M (beta D + sigma2))]
        + alpha p_dl beta (1 - xi)

    First term: the beam aimed at the user, discounted by estimation error.
    Second term: incidental harvest from the beams aimed at the other users.
    Only the total pilot energy D matters, not how it splits into pilot
    length times power.  Broadcasts over arrays.
    """
    pilot_energy = np.asarray(pilot_energy, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(pilot_energy < 0):
        raise ValueError("pilot energy must be nonnegative")
    directed = alpha * p_dl * xi * beta * M * (
        1.0 - (M - 1) * sigma2_ul / (M * (beta * pilot_energy + sigma2_ul))
    )
    side = alpha * p_dl * beta * (1.0 - xi)
    return directed + side


def _fixedpoint_raw(alpha, rho, xi, beta, M, p_dl, sigma2_ul):
    """Positive root of E^2 - g E - alpha p_dl sigma2 / rho = 0; no checks.

    Returns exactly 0 where alpha == 0 (g < 0 and the constant term vanishes).
    For g < 0 the textbook form (g + sqrt(g^2 + c)) / 2 cancels
    catastrophically, so the root is rewritten as c / (2 (sqrt(g^2 + c) - g)),
    which is additive in that regime.  Callers are responsible for clamping rho.
    """
    g = alpha * p_dl * beta * (xi * (M - 1) + 1.0) - sigma2_ul / (beta * rho)
    c = 4.0 * alpha * p_dl * sigma2_ul / rho
    disc = np.sqrt(g * g + c)
    with np.errstate(divide="ignore", invalid="ignore"):
        small_root = (0.5 * c) / (disc - g)
    return np.where(g >= 0.0, 0.5 * (g + disc), small_root)


def harvested_energy_fixedpoint(alpha, rho, xi, beta, M, p_dl, sigma2_ul):
    """Steady-state banked energy: the unique positive solution of E = Q(rho E).

    Substituting pilot energy D = rho E into the mean harvest Q(D) yields a
    quadratic in E whose positive root is

        E = (g + sqrt(g^2 + 4 alpha p_dl sigma2 / rho)) / 2,
        g = alpha p_dl beta (xi (M-1) + 1) - sigma2 / (beta rho).

    Args:
        alpha: energy-phase fraction, > 0.
        rho: splitting fraction in (0, 1); evaluated clamped to
            [RHO_CLAMP, 1 - RHO_CLAMP].
        xi, beta, M, p_dl, sigma2_ul: as elsewhere; broadcastable.

    Raises:
        ValueError: if alpha <= 0 or rho outside (0, 1).
    """
    alpha = np.asarray(alpha, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("alpha must be positive")
    if np.any(rho <= 0) or np.any(rho >= 1):
        raise ValueError("rho must lie strictly inside (0, 1)")
    return _fixedpoint_raw(alpha, clamp_rho(rho), xi, beta, M, p_dl, sigma2_ul)


def error_variance_split(alpha, rho, xi, beta, M, p_dl, sigma2_ul):
    """Estimation-error variance when pilots carry energy rho * E.

    Equals error_variance(beta, rho * E, sigma2) with E the steady-state
    fixed point, i.e. beta sigma2 / (beta rho E + sigma2).
    """
    rho_c = clamp_rho(rho)
    e_fix = harvested_energy_fixedpoint(alpha, rho, xi, beta, M, p_dl, sigma2_ul)
    return error_variance(beta, rho_c * e_fix, sigma2_ul)


def uplink_power(tau, alpha, rho, E):
    """Data-phase transmit power: all unspent energy over the data duration.

        p = (1 - rho) E / (1 - tau - alpha)

    Raises:
        ValueError: if tau + alpha >= 1 (no data phase to spend it in).
    """
    tau = np.asarray(tau, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(tau + alpha >= 1):
        raise ValueError("tau + alpha must be < 1 for a data phase to exist")
    return (1.0 - np.asarray(rho, dtype=float)) * np.asarray(E, dtype=float) / (1.0 - tau - alpha)


def ideal_energy(alpha, xi, beta, M, p_dl):
    """Harvested energy with perfect channel knowledge (no pilots, no error).

        E = alpha p_dl beta (xi M + 1 - xi)
    """
    beta = np.asarray(beta, dtype=float)
    return alpha * p_dl * beta * (np.asarray(xi, dtype=float) * (M - 1) + 1.0)


def opmm_energy(alpha, beta, p_dl):
    """Harvested energy under an isotropic (non-beamformed) energy phase.

    The all-ones beam w = 1/sqrt(M) delivers no array gain: E = alpha p_dl beta.
    """
    return alpha * p_dl * np.asarray(beta, dtype=float)


def asymptotic_energy(alpha, xi, beta, M, p_dl):
    """Large-array limit of the harvested energy: E = alpha p_dl beta xi M.

    Valid when the directed beam dominates, i.e. when both
    M >> sigma2 / (alpha p_dl rho beta^2 xi) (estimation error negligible)
    and xi M >> 1 (side beams negligible).
    """
    return alpha * p_dl * np.asarray(beta, dtype=float) * np.asarray(xi, dtype=float) * M


def energy_report(params: SystemParams, alloc: ResourceAllocation) -> EnergyReport:
    """Steady-state per-user energy bookkeeping at one allocation."""
    rho_c = float(clamp_rho(alloc.rho))
    if alloc.alpha > 0:
        e_fix = harvested_energy_fixedpoint(
            alloc.alpha, rho_c, alloc.xi, params.beta, params.M, params.p_dl, params.sigma2_ul
        )
    else:
        e_fix = np.zeros(params.K)
    pilot = rho_c * e_fix
    p = uplink_power(alloc.tau, alloc.alpha, rho_c, e_fix)
    err = error_variance(params.beta, pilot, params.sigma2_ul)
    return EnergyReport(E=e_fix, pilot_energy=pilot, uplink_power=p, error_var=err)
