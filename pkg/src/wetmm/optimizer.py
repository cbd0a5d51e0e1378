"""Max-min rate resource allocation: analytic pieces and a grid-search oracle.

The optimization problem is

    maximize   min_k R_k(tau, alpha, rho, xi)
    subject to tau, alpha >= 0,  tau + alpha <= 1,  rho in (0, 1),
               xi on the probability simplex,

with R_k the closed-form rate lower bounds from :mod:`wetmm.rates`.  The
ground truth is an exhaustive lattice search (:func:`grid_search_p1`);
analytic formulas for xi and rho plus a one-dimensional alpha search
(:func:`solve_p1_analytic`) give a fast approximation that tracks the grid
optimum closely at large M.

The search lattice is the set of integer multiples of the step sizes.  A
coarse pass (steps scaled by ``coarse_factor``) locates an incumbent, then a
fine pass re-evaluates the box within ``refine_radius`` coarse steps of it.
Ties are broken toward smaller tau, then alpha, then rho, then xi_1, and the
reduction is deterministic regardless of evaluation chunking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wetmm.energy import ResourceAllocation, _fixedpoint_raw, clamp_rho, ideal_energy
from wetmm.rates import closed_form_rate
from wetmm.sysmodel import SystemParams

__all__ = [
    "OptimizationResult",
    "optimal_xi",
    "optimal_rho_zf",
    "asymptotic_allocation",
    "grid_search_p1",
    "solve_p1_analytic",
    "rate_map",
    "rate_vs_rho",
]

DEFAULT_STEPS = (0.00025, 0.0005, 0.0005)


@dataclass
class OptimizationResult:
    """Outcome of a max-min rate search.

    Attributes:
        allocation: the best allocation found.
        min_rate: minimum per-user rate at that allocation, bits/s/Hz.
        rates: length-K per-user rates at that allocation.
        detector: "zf" or "mrc".
        system: "wetmm", "ideal", or "opmm".
        grid_steps: fine lattice steps used, (tau, alpha, rho[, xi_1]) or
            (alpha[, xi_1]) for the ideal system.
        n_evaluations: number of feasible lattice points at which the
            objective was evaluated (coarse and fine passes combined).
    """

    allocation: ResourceAllocation
    min_rate: float
    rates: np.ndarray
    detector: str
    system: str
    grid_steps: tuple
    n_evaluations: int


def optimal_xi(beta) -> np.ndarray:
    """Beam weights equalizing the large-array per-user rates.

    xi_k proportional to 1/beta_k^2, normalized to the simplex.  Weaker
    users get more downlink energy because their uplink SINR scales with
    beta_k^2 xi_k.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or beta.size == 0 or np.any(beta <= 0):
        raise ValueError("beta must be a nonempty 1-D vector of positive gains")
    w = 1.0 / beta**2
    return w / w.sum()


def optimal_rho_zf(K: int, tau, alpha):
    """Energy split maximizing the large-array zero-forcing rate.

        rho* = sqrt(K) / (sqrt(K) + sqrt(1 - tau - alpha))

    Broadcasts over tau and alpha.
    """
    if K < 1:
        raise ValueError("need at least one user")
    rem = 1.0 - np.asarray(tau, dtype=float) - np.asarray(alpha, dtype=float)
    if np.any(rem < 0):
        raise ValueError("tau + alpha must not exceed 1")
    sk = np.sqrt(float(K))
    out = sk / (sk + np.sqrt(rem))
    return out if out.ndim else float(out)


def asymptotic_allocation(params: SystemParams, detector: str,
                          c: float = 1.0, nu: float = 0.05, phi: float = 0.9) -> ResourceAllocation:
    """Advisory large-array allocation: a starting point, not a final answer.

    tau = 0 (the large-array analysis sends it to the lattice minimum) and
    the energy-phase fraction follows the decay orders alpha ~ c M^(-2 nu)
    for ZF and alpha ~ c M^(-phi) for MRC; the constants are not pinned by
    the theory, so the returned point only seeds a finite-M search.
    rho is the analytic ZF optimum, or 1/2 for MRC (whose large-array rate
    does not depend on rho).
    """
    if detector not in ("zf", "mrc"):
        raise ValueError(f"unknown detector: {detector!r}")
    if detector == "zf":
        alpha = c * params.M ** (-2.0 * nu)
    else:
        alpha = c * params.M ** (-phi)
    alpha = float(np.clip(alpha, 1e-6, 1.0 - 1e-6))
    rho = optimal_rho_zf(params.K, 0.0, alpha) if detector == "zf" else 0.5
    return ResourceAllocation(tau=0.0, alpha=alpha, rho=float(rho), xi=optimal_xi(params.beta))


def _check_tags(params: SystemParams, system: str, detector: str) -> None:
    if system not in ("wetmm", "opmm", "ideal"):
        raise ValueError(f"unknown system: {system!r}")
    if detector not in ("zf", "mrc"):
        raise ValueError(f"unknown detector: {detector!r}")
    if detector == "zf":
        params.require_zf()
    elif params.M < 2:
        raise ValueError("MRC requires M >= 2")


def _index_lattice(step: float, lo_idx: int, hi_idx: int) -> np.ndarray:
    return step * np.arange(lo_idx, hi_idx + 1, dtype=float)


def _plane_tables(params: SystemParams, system: str, detector: str,
                  alpha_vals: np.ndarray, rho_vals: np.ndarray, xi_arr: np.ndarray):
    """Precompute the tau-independent part of the objective.

    Axes are (alpha, rho, xi-candidate[, user]).  For ZF the per-user SINR
    shares one bracket term, so only min_k of the numerator and the summed
    pilot load are kept; MRC keeps per-user tables.
    """
    beta = params.beta
    M, K, s2 = params.M, params.K, params.sigma2_ul
    a4 = alpha_vals[:, None, None, None]
    r4 = rho_vals[None, :, None, None]
    x4 = xi_arr[None, None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        if system == "wetmm":
            E = _fixedpoint_raw(a4, r4, x4, beta, M, params.p_dl, s2)
        else:
            E = a4 * params.p_dl * beta + 0.0 * (r4 + 0.0 * x4[..., :1])
        safe_e = np.where(E > 0, E, 1.0)
        denom_pilot = beta * r4 + s2 / safe_e
        if detector == "zf":
            f = np.where(E > 0, (M - K) * beta**2 * r4 * E / (s2 * denom_pilot), 0.0)
            fmin = f.min(axis=-1)
            load = np.sum(beta * E / (beta * r4 * E + s2), axis=-1)
            inv1mr = 1.0 / (1.0 - rho_vals)
            return ("zf", fmin, load, inv1mr)
        a_num = (M - 1) * beta**2 * r4 * E
        bs = denom_pilot * s2 / (1.0 - r4)
        be = beta * E
        cross = be.sum(axis=-1, keepdims=True) - be
        d = denom_pilot * cross + beta * s2
        return ("mrc", a_num, bs, d)


def _sweep_tau(tau_vals: np.ndarray, alpha_vals: np.ndarray, tables, plane_shape):
    """Stream the tau axis over precomputed planes; deterministic argmax.

    Returns (best value, (i_tau, i_alpha, i_rho, i_xi), feasible count).
    Within a plane, np.argmax on the C-ordered block picks the smallest
    alpha, then rho, then xi index; strict > across ascending tau keeps the
    smallest tau.
    """
    n_rho, n_xi = plane_shape
    best_val = -np.inf
    best_idx = None
    n_eval = 0
    for it, tau in enumerate(tau_vals):
        rem = 1.0 - tau - alpha_vals
        feas = rem >= 0.0
        n_feas = int(feas.sum())
        if n_feas == 0:
            continue
        n_eval += n_feas * n_rho * n_xi
        rem3 = np.where(feas, rem, 0.0)[:, None, None]
        if tables[0] == "zf":
            _, fmin, load, inv1mr = tables
            bracket = rem3 * inv1mr[None, :, None] + load
            sinr = np.where(bracket > 0, fmin / np.where(bracket > 0, bracket, 1.0), 0.0)
        else:
            _, a_num, bs, d = tables
            sinr = (a_num / (bs * rem3[..., None] + d)).min(axis=-1)
        rate = rem3 * np.log2(1.0 + sinr)
        rate[~feas, :, :] = -np.inf
        j = int(np.argmax(rate))
        v = float(rate.flat[j])
        if v > best_val:
            best_val = v
            best_idx = (it, *np.unravel_index(j, rate.shape))
    return best_val, best_idx, n_eval


def _xi_candidates(params: SystemParams, system: str, xi_policy: str,
                   xi_idx: np.ndarray | None, xi_step: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (index vector, candidate array (n, K)) for the xi axis."""
    if system == "opmm":
        return np.array([0]), np.full((1, params.K), 1.0 / params.K)
    if xi_policy == "analytic":
        return np.array([0]), optimal_xi(params.beta)[None, :]
    if xi_policy != "simplex":
        raise ValueError(f"unknown xi policy: {xi_policy!r}")
    if params.K != 2:
        raise ValueError("simplex xi search is implemented for K = 2 only")
    xi1 = xi_step * xi_idx
    return xi_idx, np.stack([xi1, 1.0 - xi1], axis=-1)


def _search_pass(params, system, detector, steps, xi_policy, xi_step,
                 t_idx, a_idx, r_idx, x_idx):
    tau_vals = steps[0] * t_idx
    alpha_vals = steps[1] * a_idx
    rho_vals = steps[2] * r_idx
    x_idx, xi_arr = _xi_candidates(params, system, xi_policy, x_idx, xi_step)
    tables = _plane_tables(params, system, detector, alpha_vals, rho_vals, xi_arr)
    val, idx, n_eval = _sweep_tau(tau_vals, alpha_vals, tables, (rho_vals.size, xi_arr.shape[0]))
    if idx is None:
        return val, None, n_eval
    it, ia, ir, ix = idx
    return val, (int(t_idx[it]), int(a_idx[ia]), int(r_idx[ir]), int(x_idx[ix])), n_eval


def _ideal_search(params: SystemParams, detector: str, alpha_step: float,
                  xi_policy: str, xi_step: float) -> OptimizationResult:
    """Exhaustive search for the perfect-knowledge system: alpha (and xi) only."""
    n_a = int(np.floor(1.0 / alpha_step + 1e-9))
    alpha_vals = _index_lattice(alpha_step, 0, n_a)
    _, xi_arr = _xi_candidates(params, "wetmm", xi_policy, np.arange(int(round(1.0 / xi_step)) + 1), xi_step)
    beta, M, K, s2 = params.beta, params.M, params.K, params.sigma2_ul
    e = ideal_energy(alpha_vals[:, None, None], xi_arr[None, :, :], beta, M, params.p_dl)
    rem = (1.0 - alpha_vals)[:, None, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        if detector == "zf":
            sinr = e * (M - K) * beta / (rem * s2)
        else:
            be = e * beta
            cross = be.sum(axis=-1, keepdims=True) - be
            sinr = e * (M - 1) * beta / (cross + rem * s2)
        sinr = np.where(rem > 0, sinr, 0.0)
        rate = (rem * np.log2(1.0 + sinr)).min(axis=-1)
    j = int(np.argmax(rate))
    ia, ix = np.unravel_index(j, rate.shape)
    alloc = ResourceAllocation(tau=0.0, alpha=float(alpha_vals[ia]), rho=0.0, xi=xi_arr[ix])
    report = closed_form_rate(params, alloc, "ideal", detector)
    steps_used = (alpha_step,) if xi_arr.shape[0] == 1 else (alpha_step, xi_step)
    return OptimizationResult(
        allocation=alloc, min_rate=report.min_rate, rates=report.rate,
        detector=detector, system="ideal", grid_steps=steps_used,
        n_evaluations=int(alpha_vals.size * xi_arr.shape[0]),
    )


def grid_search_p1(params: SystemParams, system: str = "wetmm", detector: str = "zf",
                   steps: tuple = DEFAULT_STEPS, xi_policy: str = "analytic",
                   xi_step: float = 0.001, coarse_factor: int = 20,
                   refine_radius: int | None = None) -> OptimizationResult:
    """Exhaustive coarse-to-fine lattice search for the max-min allocation.

    Args:
        params: system under optimization.
        system: "wetmm", "opmm", or "ideal" (ideal searches alpha/xi only).
        detector: "zf" or "mrc".
        steps: fine lattice steps for (tau, alpha, rho).
        xi_policy: "analytic" (beam weights fixed at optimal_xi) or
            "simplex" (K = 2 only: xi_1 swept on its own lattice).
        xi_step: fine lattice step for xi_1 under the simplex policy.
        coarse_factor: coarse steps are this multiple of the fine steps;
            1 disables the coarse pass and sweeps the fine lattice directly.
        refine_radius: half-width of the fine re-evaluation box, in coarse
            steps around the incumbent.  Default 10 for the 3-D search and
            2 for the 4-D simplex search, whose refine box would otherwise
            dominate the runtime.

    Returns:
        OptimizationResult at the lattice argmax (ties: smallest tau, then
        alpha, then rho, then xi_1).

    Raises:
        ValueError: on invalid tags, steps, or an empty feasible lattice.
    """
    _check_tags(params, system, detector)
    if len(steps) != 3 or any(s <= 0 for s in steps):
        raise ValueError("steps must be three positive lattice spacings")
    if not 0 < xi_step <= 1:
        raise ValueError("xi_step must lie in (0, 1]")
    if coarse_factor < 1:
        raise ValueError("coarse_factor must be >= 1")
    if system == "ideal":
        return _ideal_search(params, detector, steps[1], xi_policy, xi_step)

    simplex = system == "wetmm" and xi_policy == "simplex"
    if refine_radius is None:
        refine_radius = 2 if simplex else 10
    n_t = int(np.floor(1.0 / steps[0] + 1e-9))
    n_a = int(np.floor(1.0 / steps[1] + 1e-9))
    n_r = int(np.floor(1.0 / steps[2] - 1.0 + 1e-9))
    n_x = int(round(1.0 / xi_step))
    if n_t < 1 or n_a < 1 or n_r < 1:
        raise ValueError("step sizes leave an empty lattice")

    cf = int(coarse_factor)
    t_coarse = np.arange(0, n_t + 1, cf)
    a_coarse = np.arange(0, n_a + 1, cf)
    r_coarse = np.arange(cf, n_r + 1, cf)
    if r_coarse.size == 0:
        r_coarse = np.arange(1, n_r + 1)
    x_coarse = np.arange(0, n_x + 1, cf)
    if np.max(1.0 - steps[0] * t_coarse[0] - steps[1] * a_coarse) < 0:
        raise ValueError("empty feasible lattice")

    val, idx, n_eval = _search_pass(params, system, detector, steps, xi_policy,
                                    xi_step, t_coarse, a_coarse, r_coarse, x_coarse)
    if idx is None:
        raise ValueError("empty feasible lattice")

    if cf > 1:
        half = refine_radius * cf
        bt, ba, br, bx = idx
        t_fine = np.arange(max(0, bt - half), min(n_t, bt + half) + 1)
        a_fine = np.arange(max(0, ba - half), min(n_a, ba + half) + 1)
        r_fine = np.arange(max(1, br - half), min(n_r, br + half) + 1)
        x_fine = np.arange(max(0, bx - half), min(n_x, bx + half) + 1)
        val_f, idx_f, n_eval_f = _search_pass(params, system, detector, steps, xi_policy,
                                              xi_step, t_fine, a_fine, r_fine, x_fine)
        n_eval += n_eval_f
        if idx_f is not None and (val_f > val or (val_f == val and idx_f < idx)):
            val, idx = val_f, idx_f

    bt, ba, br, bx = idx
    if system == "opmm":
        xi_best = np.full(params.K, 1.0 / params.K)
        steps_used = steps
    elif simplex:
        xi1 = xi_step * bx
        xi_best = np.array([xi1, 1.0 - xi1])
        steps_used = (*steps, xi_step)
    else:
        xi_best = optimal_xi(params.beta)
        steps_used = steps
    alloc = ResourceAllocation(tau=steps[0] * bt, alpha=steps[1] * ba,
                               rho=steps[2] * br, xi=xi_best)
    report = closed_form_rate(params, alloc, system, detector)
    return OptimizationResult(
        allocation=alloc, min_rate=report.min_rate, rates=report.rate,
        detector=detector, system=system, grid_steps=tuple(steps_used),
        n_evaluations=n_eval,
    )


def solve_p1_analytic(params: SystemParams, detector: str = "zf",
                      alpha_step: float = 0.0005, mrc_rho: float = 0.5) -> OptimizationResult:
    """Fast approximate solution built from the analytic components.

    tau = 0 and xi = optimal_xi throughout; rho follows the analytic ZF
    optimum as a function of alpha (or the fixed ``mrc_rho`` for MRC, whose
    large-array rate is rho-independent); alpha comes from a 1-D sweep of
    the closed-form min rate on its fine lattice.  Tracks grid_search_p1
    within a few percent at large M; the full search remains the oracle.
    """
    _check_tags(params, "wetmm", detector)
    if alpha_step <= 0 or alpha_step > 1:
        raise ValueError("alpha_step must lie in (0, 1]")
    n_a = int(np.floor(1.0 / alpha_step + 1e-9))
    alpha_vals = _index_lattice(alpha_step, 0, n_a)
    if detector == "zf":
        rho_vals = np.asarray(optimal_rho_zf(params.K, 0.0, alpha_vals))
    else:
        rho_vals = np.full_like(alpha_vals, mrc_rho)
    rho_c = clamp_rho(rho_vals)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = _fixedpoint_raw(alpha_vals[:, None], rho_c[:, None], optimal_xi(params.beta),
                            params.beta, params.M, params.p_dl, params.sigma2_ul)
    from wetmm.rates import mrc_sinr_from_energy, zf_sinr_from_energy
    sinr_fn = zf_sinr_from_energy if detector == "zf" else mrc_sinr_from_energy
    sinr = sinr_fn(e, params.beta, 0.0, alpha_vals[:, None], rho_c[:, None],
                   params.M, params.sigma2_ul)
    min_rate = ((1.0 - alpha_vals)[:, None] * np.log2(1.0 + sinr)).min(axis=-1)
    ia = int(np.argmax(min_rate))
    alloc = ResourceAllocation(tau=0.0, alpha=float(alpha_vals[ia]),
                               rho=float(rho_vals[ia]), xi=optimal_xi(params.beta))
    report = closed_form_rate(params, alloc, "wetmm", detector)
    return OptimizationResult(
        allocation=alloc, min_rate=report.min_rate, rates=report.rate,
        detector=detector, system="wetmm", grid_steps=(alpha_step,),
        n_evaluations=int(alpha_vals.size),
    )


def rate_map(params: SystemParams, system: str, detector: str,
             tau_vals, alpha_vals, rho: float, xi) -> np.ndarray:
    """Per-user closed-form rates over a (tau, alpha) window at fixed rho.

    Returns shape (len(tau_vals), len(alpha_vals), K); infeasible cells
    (tau + alpha > 1) are NaN.
    """
    _check_tags(params, system, detector)
    if system == "ideal":
        raise ValueError("the ideal system has no (tau, rho) axes to map")
    from wetmm.rates import mrc_sinr_from_energy, zf_sinr_from_energy
    tau_vals = np.asarray(tau_vals, dtype=float)
    alpha_vals = np.asarray(alpha_vals, dtype=float)
    xi = np.asarray(xi, dtype=float)
    rho_c = float(clamp_rho(rho))
    with np.errstate(divide="ignore", invalid="ignore"):
        if system == "wetmm":
            e = _fixedpoint_raw(alpha_vals[:, None], rho_c, xi, params.beta,
                                params.M, params.p_dl, params.sigma2_ul)
        else:
            e = alpha_vals[:, None] * params.p_dl * params.beta * np.ones_like(xi)
    sinr_fn = zf_sinr_from_energy if detector == "zf" else mrc_sinr_from_energy
    sinr = sinr_fn(e[None, :, :], params.beta, tau_vals[:, None, None],
                   alpha_vals[None, :, None], rho_c, params.M, params.sigma2_ul)
    rem = 1.0 - tau_vals[:, None, None] - alpha_vals[None, :, None]
    with np.errstate(invalid="ignore"):
        rate = np.where(rem >= 0, rem, np.nan) * np.log2(1.0 + np.maximum(sinr, 0.0))
    return rate


def rate_vs_rho(params: SystemParams, system: str, detector: str,
                tau: float, alpha: float, rho_vals, xi) -> np.ndarray:
    """Per-user closed-form rates along a rho sweep at fixed (tau, alpha).

    Returns shape (len(rho_vals), K).
    """
    _check_tags(params, system, detector)
    if system == "ideal":
        raise ValueError("the ideal system has no rho axis to sweep")
    if tau < 0 or alpha < 0 or tau + alpha > 1:
        raise ValueError("need tau, alpha >= 0 with tau + alpha <= 1")
    from wetmm.rates import mrc_sinr_from_energy, zf_sinr_from_energy
    rho_vals = np.asarray(rho_vals, dtype=float)
    xi = np.asarray(xi, dtype=float)
    rho_c = clamp_rho(rho_vals)
    with np.errstate(divide="ignore", invalid="ignore"):
        if system == "wetmm" and alpha > 0:
            e = _fixedpoint_raw(alpha, rho_c[:, None], xi, params.beta,
                                params.M, params.p_dl, params.sigma2_ul)
        elif system == "wetmm":
            e = np.zeros((rho_vals.size, params.K))
        else:
            e = np.broadcast_to(alpha * params.p_dl * params.beta,
                                (rho_vals.size, params.K))
    sinr_fn = zf_sinr_from_energy if detector == "zf" else mrc_sinr_from_energy
    sinr = sinr_fn(e, params.beta, tau, alpha, rho_c[:, None], params.M, params.sigma2_ul)
    return (1.0 - tau - alpha) * np.log2(1.0 + sinr)
