"""Closed-form achievable-rate lower bounds and their large-array limits.

All rates are ergodic achievable rates in bits/s/Hz (base-2 logs) for the
uplink data phase, computed from steady-state energies.  The finite-M
expressions are Jensen-type lower bounds on the exact ergodic rate under
MMSE channel knowledge; Monte Carlo validation of the gap lives in
:mod:`wetmm.montecarlo`.

Zero-forcing, with rem = 1 - tau - alpha:

    sinr_k = (M-K) beta_k^2 rho E_k /
             { sigma2 (beta_k rho + sigma2/E_k)
               [ rem/(1-rho) + sum_i beta_i E_i/(beta_i rho E_i + sigma2) ] }

Maximum-ratio combining:

    sinr_k = (M-1) beta_k^2 rho E_k /
             { (beta_k rho + sigma2/E_k)
               [ sigma2 rem/(1-rho) + sum_{i != k} beta_i E_i ]
               + beta_k sigma2 }

Both hold for any per-user energy vector E, which is how the isotropic
benchmark ("opmm": E = alpha p_dl beta) reuses the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wetmm.energy import ResourceAllocation, clamp_rho, _fixedpoint_raw, ideal_energy, opmm_energy
from wetmm.sysmodel import SystemParams

__all__ = [
    "RateReport",
    "zf_sinr_from_energy",
    "mrc_sinr_from_energy",
    "zf_rate",
    "mrc_rate",
    "ideal_rate",
    "opmm_zf_rate",
    "opmm_mrc_rate",
    "asymptotic_zf_rate",
    "asymptotic_mrc_rate",
    "maxmin_asymptotic_rate",
    "ideal_asymptotic_rate",
    "closed_form_rate",
    "mm_dorg",
    "large_k_rate",
    "user_load_for_rate",
    "c1_limit",
    "c1_sample",
]


@dataclass
class RateReport:
    """Per-user rates at one allocation.

    Attributes:
        rate: length-K achievable rates, bits/s/Hz.
        sinr: length-K effective SINRs (linear).
        detector: "zf" or "mrc".
        system: "wetmm", "ideal", or "opmm".
        allocation: the allocation the report was evaluated at.
    """

    rate: np.ndarray
    sinr: np.ndarray
    detector: str
    system: str
    allocation: ResourceAllocation

    @property
    def min_rate(self) -> float:
        return float(np.min(self.rate))


def _check_detector(detector: str) -> None:
    if detector not in ("zf", "mrc"):
        raise ValueError(f"unknown detector: {detector!r}")


def zf_sinr_from_energy(E, beta, tau, alpha, rho, M, sigma2_ul):
    """Zero-forcing effective SINR for arbitrary per-user energies.

    ``E`` and ``beta`` carry users on the last axis; ``tau``, ``alpha`` and
    ``rho`` broadcast against the leading axes.  Entries with E = 0 give
    SINR 0.  Requires M >= K + 1.
    """
    E = np.asarray(E, dtype=float)
    beta = np.asarray(beta, dtype=float)
    K = beta.shape[-1]
    if M < K + 1:
        raise ValueError(f"ZF requires M >= K+1, got M={M}, K={K}")
    rho = np.asarray(rho, dtype=float)
    rem = 1.0 - np.asarray(tau, dtype=float) - np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        load = beta * E / (beta * rho * E + sigma2_ul)
        bracket = rem / (1.0 - rho) + np.sum(load, axis=-1, keepdims=True)
        safe_e = np.where(E > 0, E, 1.0)
        sinr = (M - K) * beta**2 * rho * E / (
            sigma2_ul * (beta * rho + sigma2_ul / safe_e) * bracket
        )
    return np.where(E > 0, sinr, 0.0)


def mrc_sinr_from_energy(E, beta, tau, alpha, rho, M, sigma2_ul):
    """Maximum-ratio-combining effective SINR for arbitrary per-user energies.

    Same conventions as :func:`zf_sinr_from_energy`.  Requires M >= 2; works
    for K = 1, where the cross-user interference sum is empty.
    """
    E = np.asarray(E, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if M < 2:
        raise ValueError(f"MRC requires M >= 2, got M={M}")
    rho = np.asarray(rho, dtype=float)
    rem = 1.0 - np.asarray(tau, dtype=float) - np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        be = beta * E
        cross = np.sum(be, axis=-1, keepdims=True) - be
        safe_e = np.where(E > 0, E, 1.0)
        denom = (beta * rho + sigma2_ul / safe_e) * (
            sigma2_ul * rem / (1.0 - rho) + cross
        ) + beta * sigma2_ul
        sinr = (M - 1) * beta**2 * rho * E / denom
    return np.where(E > 0, sinr, 0.0)


def _report(params, alloc, sinr, system, detector, prefactor) -> RateReport:
    rate = prefactor * np.log2(1.0 + sinr)
    return RateReport(rate=rate, sinr=sinr, detector=detector, system=system, allocation=alloc)


def _wetmm_energies(params: SystemParams, alloc: ResourceAllocation):
    rho_c = clamp_rho(alloc.rho)
    if alloc.alpha > 0:
        e_fix = _fixedpoint_raw(
            alloc.alpha, rho_c, alloc.xi, params.beta, params.M, params.p_dl, params.sigma2_ul
        )
    else:
        e_fix = np.zeros(params.K)
    return e_fix, rho_c


def zf_rate(params: SystemParams, alloc: ResourceAllocation) -> RateReport:
    """Zero-forcing rate lower bound at steady-state harvested energies."""
    params.require_zf()
    e_fix, rho_c = _wetmm_energies(params, alloc)
    sinr = zf_sinr_from_energy(
        e_fix, params.beta, alloc.tau, alloc.alpha, rho_c, params.M, params.sigma2_ul
    )
    return _report(params, alloc, sinr, "wetmm", "zf", 1.0 - alloc.tau - alloc.alpha)


def mrc_rate(params: SystemParams, alloc: ResourceAllocation) -> RateReport:
    """Maximum-ratio-combining rate lower bound at steady-state energies."""
    e_fix, rho_c = _wetmm_energies(params, alloc)
    sinr = mrc_sinr_from_energy(
        e_fix, params.beta, alloc.tau, alloc.alpha, rho_c, params.M, params.sigma2_ul
    )
    return _report(params, alloc, sinr, "wetmm", "mrc", 1.0 - alloc.tau - alloc.alpha)


def ideal_rate(params: SystemParams, alpha: float, xi, detector: str) -> RateReport:
    """Rate with perfect channel knowledge at both ends.

    No estimation phase and no pilot energy split: tau = 0, rho = 0, the
    whole banked energy feeds the data phase, and detection is error-free.

        zf:  (1-alpha) log2(1 + E_k (M-K) beta_k / ((1-alpha) sigma2))
        mrc: (1-alpha) log2(1 + E_k (M-1) beta_k /
                                (sum_{i != k} E_i beta_i + (1-alpha) sigma2))
    """
    _check_detector(detector)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if alpha < 0 or alpha > 1:
        raise ValueError("alpha must lie in [0, 1]")
    e = ideal_energy(alpha, xi, params.beta, params.M, params.p_dl)
    rem = 1.0 - alpha
    if detector == "zf":
        params.require_zf()
        sinr = e * (params.M - params.K) * params.beta / (rem * params.sigma2_ul) if rem > 0 else np.zeros(params.K)
    else:
        if params.M < 2:
            raise ValueError("MRC requires M >= 2")
        be = e * params.beta
        cross = be.sum() - be
        sinr = e * (params.M - 1) * params.beta / (cross + rem * params.sigma2_ul) if rem > 0 else np.zeros(params.K)
    alloc = ResourceAllocation(tau=0.0, alpha=alpha, rho=0.0, xi=xi)
    return _report(params, alloc, sinr, "ideal", detector, rem)


def opmm_zf_rate(params: SystemParams, alloc: ResourceAllocation) -> RateReport:
    """Zero-forcing rate for the isotropic energy-phase benchmark.

    Identical structure to :func:`zf_rate` with the no-array-gain energy
    E = alpha p_dl beta.  Beam weights in ``alloc`` are ignored.
    """
    params.require_zf()
    e = opmm_energy(alloc.alpha, params.beta, params.p_dl)
    rho_c = clamp_rho(alloc.rho)
    sinr = zf_sinr_from_energy(
        e, params.beta, alloc.tau, alloc.alpha, rho_c, params.M, params.sigma2_ul
    )
    return _report(params, alloc, sinr, "opmm", "zf", 1.0 - alloc.tau - alloc.alpha)


def opmm_mrc_rate(params: SystemParams, alloc: ResourceAllocation) -> RateReport:
    """MRC rate for the isotropic energy-phase benchmark."""
    e = opmm_energy(alloc.alpha, params.beta, params.p_dl)
    rho_c = clamp_rho(alloc.rho)
    sinr = mrc_sinr_from_energy(
        e, params.beta, alloc.tau, alloc.alpha, rho_c, params.M, params.sigma2_ul
    )
    return _report(params, alloc, sinr, "opmm", "mrc", 1.0 - alloc.tau - alloc.alpha)


def asymptotic_zf_rate(params: SystemParams, alloc: ResourceAllocation) -> RateReport:
    """Large-array zero-forcing rate.

        rem log2(1 + M (M-K) alpha p_dl beta_k^2 xi_k rho /
                     (sigma2 [K + rem rho / (1-rho)]))

    The expression vanishes at both rho endpoints; rho = 1 is evaluated
    just inside the boundary to keep the division finite.
    """
    params.require_zf()
    rem = 1.0 - alloc.tau - alloc.alpha
    rho = min(float(alloc.rho), 1.0 - 1e-12)
    num = params.M * (params.M - params.K) * alloc.alpha * params.p_dl * params.beta**2 * alloc.xi * rho
    den = params.sigma2_ul * (params.K + rem * rho / (1.0 - rho))
    sinr = num / den
    return _report(params, alloc, sinr, "wetmm", "zf", rem)


def asymptotic_mrc_rate(params: SystemParams, alloc: ResourceAllocation) -> RateReport:
    """Large-array MRC rate: interference-limited and independent of rho.

        rem log2(1 + (M-1) beta_k^2 xi_k / sum_{i != k} beta_i^2 xi_i)

    With a single user the interference sum is empty and the limit is
    unbounded; the report then carries infinite SINR and rate rather than
    raising, since that is the honest value of the limit.
    """
    if params.M < 2:
        raise ValueError("MRC requires M >= 2")
    rem = 1.0 - alloc.tau - alloc.alpha
    w = params.beta**2 * alloc.xi
    cross = w.sum() - w
    with np.errstate(divide="ignore"):
        sinr = np.where(cross > 0, (params.M - 1) * w / np.where(cross > 0, cross, 1.0), np.inf)
    return _report(params, alloc, sinr, "wetmm", "mrc", rem)


def maxmin_asymptotic_rate(params: SystemParams, detector: str) -> float:
    """Limit of the optimized max-min rate as the frame overhead vanishes.

        zf:  log2(1 + M^2 p_dl / (sigma2 (sqrt(K)+1)^2 sum_i 1/beta_i^2))
        mrc: log2(1 + (M-1)/(K-1)),  unbounded at K = 1.
    """
    _check_detector(detector)
    if detector == "zf":
        params.require_zf()
        gamma = params.M**2 * params.p_dl / (
            params.sigma2_ul * (np.sqrt(params.K) + 1.0) ** 2 * np.sum(1.0 / params.beta**2)
        )
        return float(np.log2(1.0 + gamma))
    if params.M < 2:
        raise ValueError("MRC requires M >= 2")
    if params.K == 1:
        return float("inf")
    return float(np.log2(1.0 + (params.M - 1) / (params.K - 1)))


def ideal_asymptotic_rate(params: SystemParams, alpha: float, detector: str) -> float:
    """Large-array limit of the perfect-knowledge max-min rate.

        zf:  (1-alpha) log2(1 + alpha p_dl M (M-K) /
                                 (sigma2 (1-alpha) sum_i 1/beta_i^2))
        mrc: (1-alpha) log2(1 + (M-1)/(K-1)),  unbounded at K = 1.
    """
    _check_detector(detector)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if detector == "zf":
        params.require_zf()
        gamma = alpha * params.p_dl * params.M * (params.M - params.K) / (
            params.sigma2_ul * (1.0 - alpha) * np.sum(1.0 / params.beta**2)
        )
        return float((1.0 - alpha) * np.log2(1.0 + gamma))
    if params.K == 1:
        return float("inf")
    return float((1.0 - alpha) * np.log2(1.0 + (params.M - 1) / (params.K - 1)))


def closed_form_rate(params: SystemParams, alloc: ResourceAllocation, system: str, detector: str) -> RateReport:
    """Dispatch to the closed-form rate for a (system, detector) pair.

    For the "ideal" system the allocation's tau and rho are ignored (both
    are structurally zero with perfect channel knowledge).
    """
    _check_detector(detector)
    if system == "wetmm":
        return zf_rate(params, alloc) if detector == "zf" else mrc_rate(params, alloc)
    if system == "opmm":
        return opmm_zf_rate(params, alloc) if detector == "zf" else opmm_mrc_rate(params, alloc)
    if system == "ideal":
        return ideal_rate(params, alloc.alpha, alloc.xi, detector)
    raise ValueError(f"unknown system: {system!r}")


def mm_dorg(rates, m_values) -> float:
    """Rate growth exponent: least-squares slope of rate versus log2(M).

    Fitted over the largest decade of the antenna grid (M >= max(M)/10),
    where the curves are in their scaling regime.  A slope of 2 means the
    rate grows like 2 log2 M (quadratic SINR growth in M); 1 means linear.
    """
    rates = np.asarray(rates, dtype=float)
    m_values = np.asarray(m_values, dtype=float)
    if rates.shape != m_values.shape:
        raise ValueError("rates and m_values must have matching shapes")
    keep = m_values >= m_values.max() / 10.0
    if keep.sum() < 2:
        raise ValueError("need at least two antenna counts in the top decade")
    slope, _ = np.polyfit(np.log2(m_values[keep]), rates[keep], 1)
    return float(slope)


def large_k_rate(zeta, alpha_star, c1, p_dl, sigma2_ul):
    """Per-user rate in the dense regime, as a function of user load.

        R(zeta) = log2( alpha* p_dl (1 - zeta) / (c1 sigma2 zeta^2) ),
        zeta = K / M,  c1 = (1/K) sum_i 1/beta_i^2.

    Strictly decreasing in zeta on (0, 1); diverges to -inf as zeta -> 1.
    """
    zeta = np.asarray(zeta, dtype=float)
    if np.any(zeta <= 0) or np.any(zeta >= 1):
        raise ValueError("user load zeta must lie strictly inside (0, 1)")
    if alpha_star <= 0 or c1 <= 0:
        raise ValueError("alpha_star and c1 must be positive")
    return np.log2(alpha_star * p_dl * (1.0 - zeta) / (c1 * sigma2_ul * zeta**2))


def user_load_for_rate(target_rate, alpha_star, c1, p_dl, sigma2_ul,
                       tol: float = 1e-13, max_iter: int = 200) -> float:
    """Largest supportable user load K/M for a per-user rate target.

    Inverts :func:`large_k_rate` by bisection; the function is strictly
    decreasing on (0, 1), so the root is unique when it exists.

    Raises:
        ValueError: if the target exceeds the rate at vanishing load.
    """
    lo, hi = 1e-15, 1.0 - 1e-15
    if large_k_rate(lo, alpha_star, c1, p_dl, sigma2_ul) < target_rate:
        raise ValueError("target rate unattainable at any positive user load")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if large_k_rate(mid, alpha_star, c1, p_dl, sigma2_ul) >= target_rate:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, lo):
            break
    return 0.5 * (lo + hi)


def c1_limit(beta0: float, u: float, a: float, b: float) -> float:
    """Limit of (1/K) sum 1/beta_i^2 for distances uniform on [a, b].

        c1 -> beta0^(-2) (b^(2u+1) - a^(2u+1)) / ((b - a)(2u + 1))

    Continuous at a = b, where it degenerates to beta0^(-2) a^(2u).
    """
    if beta0 <= 0 or a <= 0 or b < a:
        raise ValueError("need beta0 > 0 and 0 < a <= b")
    if np.isclose(a, b):
        return float(a ** (2 * u) / beta0**2)
    n = 2 * u + 1
    return float((b**n - a**n) / ((b - a) * n * beta0**2))


def c1_sample(beta) -> float:
    """Empirical c1 = (1/K) sum_i 1/beta_i^2 for a drawn user population."""
    beta = np.asarray(beta, dtype=float)
    if beta.size == 0 or np.any(beta <= 0):
        raise ValueError("need a nonempty vector of positive path losses")
    return float(np.mean(1.0 / beta**2))
