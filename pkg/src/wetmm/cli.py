"""Experiment runner: writes the benchmark tables and figure data as CSV.

Each subcommand evaluates one experiment and writes a CSV (RFC-4180 style,
'.' decimal separator) plus a JSON sidecar recording the fully resolved
configuration, into the output directory.  Files are written atomically
(temp file, then rename) and every experiment is deterministic given the
configuration and master seed: re-running produces byte-identical output.

Configuration is a flat ``key = value`` text file; unknown keys are errors.
Powers are watts internally; any power key also accepts a ``_dbm``-suffixed
variant (e.g. ``sigma2_ul_dbm = -120``).  Command-line flags override the
config file, which overrides the defaults (the two-user reference scenario:
distances 6 m and 12 m, cubic path loss with 1e-3 reference gain, 1 W
downlink power, -120 dBm noise).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from wetmm.estimation import draw_realization
from wetmm.montecarlo import McConfig, _operating_point, estimate_exact_rate, run_trials
from wetmm.optimizer import (
    grid_search_p1,
    optimal_rho_zf,
    optimal_xi,
    rate_map,
    rate_vs_rho,
)
from wetmm.rates import (
    asymptotic_mrc_rate,
    asymptotic_zf_rate,
    c1_limit,
    c1_sample,
    closed_form_rate,
    large_k_rate,
    mm_dorg,
)
from wetmm.sysmodel import PathLossModel, SystemParams, path_loss, trial_rng

__all__ = [
    "ExperimentSpec",
    "dbm_to_watts",
    "load_config",
    "build_params",
    "run_optimize",
    "run_table1",
    "run_contour",
    "run_rho_sweep",
    "run_rate_vs_m",
    "run_fairness",
    "run_mc_validate",
    "run_large_k",
    "main",
]

EXPERIMENTS = ("optimize", "table1", "contour", "rho-sweep", "rate-vs-m",
               "fairness", "mc-validate", "large-k")


@dataclass
class ExperimentSpec:
    """Resolved experiment configuration; defaults are the reference scenario."""

    m: int = 200
    distances: tuple = (6.0, 12.0)
    beta0: float = 1e-3
    pathloss_exponent: float = 3.0
    p_dl: float = 1.0
    sigma2_ul: float = 1e-15
    sigma2_user: float = 1e-15
    detector: str = "zf"
    system: str = "wetmm"
    xi_policy: str = "analytic"
    tau_step: float = 0.00025
    alpha_step: float = 0.0005
    rho_step: float = 0.0005
    xi_step: float = 0.001
    coarse_factor: int = 20
    refine_radius: int = 10
    fig_tau_step: float = 0.001
    fig_alpha_step: float = 0.002
    fig_rho_step: float = 0.002
    fig_coarse_factor: int = 10
    n_trials: int = 1000
    master_seed: int = 12345
    out_dir: str = "out"
    m_values: tuple = (25, 50, 100, 200, 400, 600, 800, 1000)
    rate_vs_m_values: tuple = (3, 4, 5, 6, 8, 10, 13, 16, 21, 25, 32, 40, 50, 64,
                               80, 100, 128, 160, 200, 256, 320, 400, 500, 640, 800, 1000)
    fairness_m_values: tuple = (25, 50, 100, 200, 400)
    contour_rho: float = 0.5965
    contour_tau_max: float = 0.02
    contour_alpha_max: float = 0.15
    sweep_tau: float = 0.00825
    sweep_alpha: float = 0.076
    large_k_users: int = 10000
    large_k_alpha: float = 0.05
    zeta_min: float = 0.02
    zeta_max: float = 0.98
    zeta_step: float = 0.02

    def __post_init__(self):
        if len(self.distances) < 1 or any(d <= 0 for d in self.distances):
            raise ValueError("distances must be positive")
        if self.detector not in ("zf", "mrc"):
            raise ValueError(f"unknown detector: {self.detector!r}")
        if self.system not in ("wetmm", "opmm", "ideal"):
            raise ValueError(f"unknown system: {self.system!r}")
        for name in ("tau_step", "alpha_step", "rho_step", "xi_step",
                     "fig_tau_step", "fig_alpha_step", "fig_rho_step", "zeta_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.m < 2:
            raise ValueError("m must be >= 2")

    @property
    def steps(self) -> tuple:
        return (self.tau_step, self.alpha_step, self.rho_step)

    @property
    def fig_steps(self) -> tuple:
        return (self.fig_tau_step, self.fig_alpha_step, self.fig_rho_step)


def dbm_to_watts(dbm: float) -> float:
    """Convert a power in dBm to watts."""
    return 1e-3 * 10.0 ** (dbm / 10.0)


_DBM_KEYS = {"p_dl_dbm": "p_dl", "sigma2_ul_dbm": "sigma2_ul",
             "sigma2_user_dbm": "sigma2_user"}
_TUPLE_FIELDS = {"distances": float, "m_values": int, "rate_vs_m_values": int,
                 "fairness_m_values": int}


def _parse_value(field: str, raw: str):
    if field in _TUPLE_FIELDS:
        conv = _TUPLE_FIELDS[field]
        return tuple(conv(part.strip()) for part in raw.split(",") if part.strip())
    default = ExperimentSpec.__dataclass_fields__[field].default
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def load_config(path: str) -> dict:
    """Parse a flat key = value config file into ExperimentSpec overrides.

    Raises:
        ValueError: on unknown keys or malformed lines.
    """
    known = set(ExperimentSpec.__dataclass_fields__)
    overrides = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key in _DBM_KEYS:
                overrides[_DBM_KEYS[key]] = dbm_to_watts(float(raw))
            elif key in known:
                overrides[key] = _parse_value(key, raw)
            else:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
    return overrides


def build_params(spec: ExperimentSpec, m: int | None = None) -> SystemParams:
    """SystemParams for an ExperimentSpec's propagation scenario at antenna count m."""
    model = PathLossModel(beta0=spec.beta0, u=spec.pathloss_exponent,
                          distances=np.asarray(spec.distances, dtype=float))
    return SystemParams(M=int(m if m is not None else spec.m), K=len(spec.distances),
                        p_dl=spec.p_dl, sigma2_ul=spec.sigma2_ul,
                        sigma2_user=spec.sigma2_user, beta=path_loss(model))


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".10g")
    return str(value)


def _write_atomic(path: str, data: bytes) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header: list, rows: list) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    _write_atomic(path, buf.getvalue().encode("utf-8"))


def _write_sidecar(csv_path: str, spec: ExperimentSpec, experiment: str,
                   extra: dict | None = None) -> str:
    sidecar = os.path.splitext(csv_path)[0] + ".json"
    payload = {
        "experiment": experiment,
        "csv": os.path.basename(csv_path),
        "spec": dataclasses.asdict(spec),
    }
    if extra:
        payload.update(extra)
    data = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    _write_atomic(sidecar, data.encode("utf-8"))
    return sidecar


def _search(spec: ExperimentSpec, params: SystemParams, system: str, detector: str,
            fig: bool = False):
    return grid_search_p1(
        params, system, detector,
        steps=spec.fig_steps if fig else spec.steps,
        xi_policy=spec.xi_policy, xi_step=spec.xi_step,
        coarse_factor=spec.fig_coarse_factor if fig else spec.coarse_factor,
        refine_radius=spec.refine_radius if spec.xi_policy == "analytic" else None,
    )


def _mc_config(spec: ExperimentSpec, system: str, detector: str,
               n_trials: int | None = None) -> McConfig:
    return McConfig(n_trials=n_trials or spec.n_trials, master_seed=spec.master_seed,
                    detector=detector, system=system)


def run_optimize(spec: ExperimentSpec):
    """Single max-min allocation search at spec.m; one CSV row."""
    params = build_params(spec)
    res = _search(spec, params, spec.system, spec.detector)
    a = res.allocation
    header = (["m", "system", "detector", "tau_star", "alpha_star", "rho_star"]
              + [f"xi_user{k + 1}" for k in range(params.K)]
              + [f"rate_user{k + 1}" for k in range(params.K)]
              + ["min_rate", "n_evaluations"])
    row = ([params.M, spec.system, spec.detector, a.tau, a.alpha, a.rho]
           + list(a.xi) + list(res.rates) + [res.min_rate, res.n_evaluations])
    path = os.path.join(spec.out_dir, "optimize.csv")
    _write_csv(path, header, [row])
    _write_sidecar(path, spec, "optimize")
    return [row], path


def run_table1(spec: ExperimentSpec):
    """Allocation-versus-antenna-count table with MC rate columns.

    Per antenna count: grid-search allocation, the closed-form optimal
    energy split at that allocation, the large-array rate, the analytic
    rate, and per-user Monte Carlo rates.
    """
    if len(spec.distances) != 2:
        raise ValueError("the allocation table is defined for the two-user scenario")
    header = ["M", "tau_star", "alpha_star", "rho_star_analytic", "rho_star_grid",
              "rate_asymptotic", "rate_analytic", "mc_rate_user1", "mc_rate_user2"]
    rows = []
    for m in spec.m_values:
        params = build_params(spec, m)
        res = _search(spec, params, "wetmm", spec.detector)
        a = res.allocation
        rho_analytic = optimal_rho_zf(params.K, a.tau, a.alpha)
        asym_fn = asymptotic_zf_rate if spec.detector == "zf" else asymptotic_mrc_rate
        rate_asym = asym_fn(params, a).min_rate
        mc = estimate_exact_rate(params, a, _mc_config(spec, "wetmm", spec.detector))
        rows.append([m, a.tau, a.alpha, rho_analytic, a.rho,
                     rate_asym, res.min_rate, mc.rate[0], mc.rate[1]])
    path = os.path.join(spec.out_dir, "table1.csv")
    _write_csv(path, header, rows)
    _write_sidecar(path, spec, "table1")
    return rows, path


def run_contour(spec: ExperimentSpec):
    """Per-user rate over a (tau, alpha) window at fixed rho."""
    params = build_params(spec)
    xi = optimal_xi(params.beta)
    tau_vals = spec.tau_step * np.arange(0, int(round(spec.contour_tau_max / spec.tau_step)) + 1)
    alpha_vals = spec.alpha_step * np.arange(0, int(round(spec.contour_alpha_max / spec.alpha_step)) + 1)
    rates = rate_map(params, spec.system, spec.detector, tau_vals, alpha_vals,
                     spec.contour_rho, xi)
    header = ["tau", "alpha"] + [f"rate_user{k + 1}" for k in range(params.K)]
    rows = []
    for i, tau in enumerate(tau_vals):
        for j, alpha in enumerate(alpha_vals):
            rows.append([tau, alpha] + list(rates[i, j]))
    path = os.path.join(spec.out_dir, "contour.csv")
    _write_csv(path, header, rows)
    _write_sidecar(path, spec, "contour", {"fixed_rho": spec.contour_rho})
    return rows, path


def run_rho_sweep(spec: ExperimentSpec):
    """Per-user rate along the energy-splitting fraction at fixed (tau, alpha)."""
    params = build_params(spec)
    xi = optimal_xi(params.beta)
    n_r = int(np.floor(1.0 / spec.rho_step - 1.0 + 1e-9))
    rho_vals = spec.rho_step * np.arange(1, n_r + 1)
    rates = rate_vs_rho(params, spec.system, spec.detector, spec.sweep_tau,
                        spec.sweep_alpha, rho_vals, xi)
    header = ["rho"] + [f"rate_user{k + 1}" for k in range(params.K)] + ["min_rate"]
    rows = [[rho] + list(r) + [float(np.min(r))] for rho, r in zip(rho_vals, rates)]
    path = os.path.join(spec.out_dir, "rho_sweep.csv")
    _write_csv(path, header, rows)
    _write_sidecar(path, spec, "rho-sweep",
                   {"fixed_tau": spec.sweep_tau, "fixed_alpha": spec.sweep_alpha})
    return rows, path


def run_rate_vs_m(spec: ExperimentSpec):
    """Optimized min rates per antenna count for all four system curves.

    Columns: wetmm/ideal/opmm with ZF plus wetmm with MRC.  Rate growth
    slopes (fitted over the top decade of the antenna grid) go into the
    sidecar.
    """
    curves = [("wetmm_zf", "wetmm", "zf"), ("wetmm_mrc", "wetmm", "mrc"),
              ("ideal_zf", "ideal", "zf"), ("opmm_zf", "opmm", "zf")]
    header = ["m"] + [name for name, _, _ in curves]
    rows = []
    for m in spec.rate_vs_m_values:
        row = [m]
        for _, system, detector in curves:
            params = build_params(spec, m)
            if detector == "zf" and m < params.K + 1:
                row.append(float("nan"))
                continue
            row.append(_search(spec, params, system, detector, fig=True).min_rate)
        rows.append(row)
    m_arr = np.array([r[0] for r in rows], dtype=float)
    slopes = {}
    for idx, (name, _, _) in enumerate(curves, start=1):
        vals = np.array([r[idx] for r in rows], dtype=float)
        keep = ~np.isnan(vals)
        slopes[name] = mm_dorg(vals[keep], m_arr[keep]) if keep.sum() >= 2 else None
    path = os.path.join(spec.out_dir, "rate_vs_m.csv")
    _write_csv(path, header, rows)
    _write_sidecar(path, spec, "rate-vs-m", {"mm_dorg": slopes})
    return rows, path


def run_fairness(spec: ExperimentSpec):
    """Per-user MC rates versus antenna count, subspace beam versus isotropic."""
    if len(spec.distances) != 2:
        raise ValueError("the fairness comparison is defined for the two-user scenario")
    header = ["m", "wetmm_user1", "wetmm_user2", "opmm_user1", "opmm_user2"]
    rows = []
    for m in spec.fairness_m_values:
        params = build_params(spec, m)
        row = [m]
        for system in ("wetmm", "opmm"):
            res = _search(spec, params, system, spec.detector, fig=True)
            mc = estimate_exact_rate(params, res.allocation,
                                     _mc_config(spec, system, spec.detector))
            row.extend([mc.rate[0], mc.rate[1]])
        rows.append(row)
    path = os.path.join(spec.out_dir, "fairness.csv")
    _write_csv(path, header, rows)
    _write_sidecar(path, spec, "fairness")
    return rows, path


def run_mc_validate(spec: ExperimentSpec):
    """Closed forms versus MC at the spec.m grid optimum: energy, error
    variance, and rate bound, with standard errors and z-scores."""
    system = spec.system if spec.system != "ideal" else "wetmm"
    params = build_params(spec)
    res = _search(spec, params, system, spec.detector)
    alloc = res.allocation
    cfg = _mc_config(spec, system, spec.detector)
    samples = run_trials(params, alloc, cfg)
    energy = np.stack([s.energy for s in samples])
    e_closed, pilot_energy, _, err_var = _operating_point(params, alloc, system)
    bound = closed_form_rate(params, alloc, system, spec.detector).rate
    err_sq = []
    for t in range(cfg.n_trials):
        real = draw_realization(params, pilot_energy, cfg.master_seed, t,
                                method="pilot")
        err_sq.append(np.mean(np.abs(real.G_hat - real.G) ** 2, axis=0))
    err_sq = np.stack(err_sq)
    rows = []

    def block(kind, closed, mc_samples):
        mean = mc_samples.mean(axis=0)
        se = mc_samples.std(axis=0, ddof=1) / np.sqrt(mc_samples.shape[0])
        for k in range(params.K):
            z = (mean[k] - closed[k]) / se[k] if se[k] > 0 else 0.0
            rows.append([kind, k + 1, closed[k], mean[k], se[k], z])

    block("energy", e_closed, energy)
    block("error_var", err_var, err_sq)
    block("rate_bound", bound, np.stack([
        (1.0 - alloc.tau - alloc.alpha) * np.log2(1.0 + s.sinr) for s in samples
    ]))
    header = ["quantity", "user", "closed_form", "mc_mean", "mc_se", "z_score"]
    path = os.path.join(spec.out_dir, "mc_validate.csv")
    _write_csv(path, header, rows)
    _write_sidecar(path, spec, "mc-validate",
                   {"allocation": {"tau": alloc.tau, "alpha": alloc.alpha,
                                   "rho": alloc.rho, "xi": list(alloc.xi)}})
    return rows, path


def run_large_k(spec: ExperimentSpec):
    """Dense-regime rate versus user load, plus path-loss moment convergence."""
    c1_inf = c1_limit(spec.beta0, spec.pathloss_exponent,
                      min(spec.distances), max(spec.distances))
    n_z = int(round((spec.zeta_max - spec.zeta_min) / spec.zeta_step))
    zeta = spec.zeta_min + spec.zeta_step * np.arange(0, n_z + 1)
    zeta = zeta[(zeta > 0) & (zeta < 1)]
    rates = large_k_rate(zeta, spec.large_k_alpha, c1_inf, spec.p_dl, spec.sigma2_ul)
    rate_rows = [[z, r] for z, r in zip(zeta, rates)]
    rate_path = os.path.join(spec.out_dir, "large_k_rates.csv")
    _write_csv(rate_path, ["zeta", "rate"], rate_rows)

    rng = trial_rng(spec.master_seed, 0, 1)
    a, b = min(spec.distances), max(spec.distances)
    d = rng.uniform(a, b, size=spec.large_k_users)
    c1_rows = []
    counts = sorted({min(n, spec.large_k_users) for n in (10, 100, 1000, spec.large_k_users)})
    for n in counts:
        beta = spec.beta0 * d[:n] ** (-spec.pathloss_exponent)
        c1 = c1_sample(beta)
        c1_rows.append([n, c1, c1_inf, abs(c1 - c1_inf) / c1_inf])
    c1_path = os.path.join(spec.out_dir, "large_k_c1.csv")
    _write_csv(c1_path, ["n_users", "c1_sample", "c1_limit", "rel_err"], c1_rows)
    _write_sidecar(rate_path, spec, "large-k",
                   {"c1_csv": os.path.basename(c1_path), "c1_limit": c1_inf})
    return (rate_rows, c1_rows), rate_path


_RUNNERS = {
    "optimize": run_optimize,
    "table1": run_table1,
    "contour": run_contour,
    "rho-sweep": run_rho_sweep,
    "rate-vs-m": run_rate_vs_m,
    "fairness": run_fairness,
    "mc-validate": run_mc_validate,
    "large-k": run_large_k,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wetmm",
        description="Energy-harvesting massive-MIMO uplink experiments (CSV out).",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--detector", choices=("zf", "mrc"))
        p.add_argument("--system", choices=("wetmm", "ideal", "opmm"))
        p.add_argument("--trials", type=int, help="Monte Carlo trials")
        if name in ("optimize", "mc-validate", "contour", "rho-sweep"):
            p.add_argument("--m", type=int, help="antenna count")
        if name == "contour":
            p.add_argument("--rho", type=float, help="fixed energy split")
        if name == "rho-sweep":
            p.add_argument("--tau", type=float, help="fixed estimation fraction")
            p.add_argument("--alpha", type=float, help="fixed energy-phase fraction")
    return parser


def _resolve_spec(args: argparse.Namespace) -> ExperimentSpec:
    overrides = {}
    if args.config:
        overrides.update(load_config(args.config))
    flag_map = {"seed": "master_seed", "out": "out_dir", "detector": "detector",
                "system": "system", "trials": "n_trials", "m": "m",
                "rho": "contour_rho", "tau": "sweep_tau", "alpha": "sweep_alpha"}
    for flag, field in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    return ExperimentSpec(**overrides)


def main(argv: list | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = _resolve_spec(args)
        rows, path = _RUNNERS[args.experiment](spec)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.experiment == "large-k":
        rate_rows, c1_rows = rows
        print(f"wrote {path} ({len(rate_rows)} rows) and companion "
              f"{os.path.join(os.path.dirname(path), 'large_k_c1.csv')} ({len(c1_rows)} rows)")
    else:
        print(f"wrote {path} ({len(rows)} rows)")
    if args.experiment == "optimize":
        row = rows[0]
        print(f"m={row[0]} system={row[1]} detector={row[2]} tau={_fmt(row[3])} "
              f"alpha={_fmt(row[4])} rho={_fmt(row[5])} min_rate={_fmt(row[-2])}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
