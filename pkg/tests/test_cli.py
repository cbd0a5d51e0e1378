"""Tests for the experiment runner: config parsing, CSV/sidecar output, determinism."""

import csv
import json
import math
import os

import numpy as np
import pytest

from wetmm.cli import (
    ExperimentSpec,
    build_params,
    dbm_to_watts,
    load_config,
    main,
)
from wetmm.optimizer import grid_search_p1

# Coarse search settings so CLI round trips stay fast; values are otherwise
# the reference scenario.
FAST_SEARCH = """\
m = 50
tau_step = 0.005
alpha_step = 0.01
rho_step = 0.01
coarse_factor = 2
refine_radius = 2
n_trials = 40
"""


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def read_sidecar(csv_path):
    with open(os.path.splitext(csv_path)[0] + ".json", encoding="utf-8") as fh:
        return json.load(fh)


def test_dbm_to_watts_reference_points():
    assert np.isclose(dbm_to_watts(0.0), 1e-3, rtol=1e-12)
    assert np.isclose(dbm_to_watts(30.0), 1.0, rtol=1e-12)
    assert np.isclose(dbm_to_watts(-120.0), 1e-15, rtol=1e-12)


def test_load_config_types_comments_and_blanks(tmp_path):
    cfg = write_config(tmp_path, """
# full-line comment

m = 80            # trailing comment
tau_step = 0.002
detector = mrc
distances = 5, 10, 20
m_values = 25,50
""")
    overrides = load_config(cfg)
    assert overrides == {
        "m": 80,
        "tau_step": 0.002,
        "detector": "mrc",
        "distances": (5.0, 10.0, 20.0),
        "m_values": (25, 50),
    }
    assert isinstance(overrides["m"], int)
    assert all(isinstance(d, float) for d in overrides["distances"])
    assert all(isinstance(v, int) for v in overrides["m_values"])


def test_load_config_dbm_keys_convert_to_watts(tmp_path):
    cfg = write_config(tmp_path, "sigma2_ul_dbm = -120\np_dl_dbm = 30\n")
    overrides = load_config(cfg)
    assert set(overrides) == {"sigma2_ul", "p_dl"}
    assert np.isclose(overrides["sigma2_ul"], 1e-15, rtol=1e-12)
    assert np.isclose(overrides["p_dl"], 1.0, rtol=1e-12)


def test_load_config_unknown_key_reports_location(tmp_path):
    cfg = write_config(tmp_path, "m = 50\n\nbogus_key = 1\n")
    with pytest.raises(ValueError, match="unknown config key"):
        load_config(cfg)
    try:
        load_config(cfg)
    except ValueError as exc:
        assert f"{cfg}:3:" in str(exc)


def test_load_config_malformed_line(tmp_path):
    cfg = write_config(tmp_path, "just a bare line\n")
    with pytest.raises(ValueError, match="expected 'key = value'"):
        load_config(cfg)


def test_spec_validation():
    for bad in (
        {"detector": "ml"},
        {"system": "genie"},
        {"n_trials": 0},
        {"m": 1},
        {"tau_step": 0.0},
        {"rho_step": -0.1},
        {"distances": ()},
        {"distances": (6.0, -1.0)},
    ):
        with pytest.raises(ValueError):
            ExperimentSpec(**bad)
    spec = ExperimentSpec()
    assert spec.steps == (spec.tau_step, spec.alpha_step, spec.rho_step)
    assert spec.fig_steps == (spec.fig_tau_step, spec.fig_alpha_step, spec.fig_rho_step)


def test_build_params_reference_scenario():
    spec = ExperimentSpec()
    params = build_params(spec)
    assert params.M == 200 and params.K == 2
    assert np.allclose(params.beta, [4.6296296296296296e-06, 5.787037037037037e-07],
                       rtol=1e-12)
    assert build_params(spec, 64).M == 64


def test_optimize_csv_matches_direct_search(tmp_path, capsys):
    cfg = write_config(tmp_path, FAST_SEARCH)
    out = tmp_path / "out_a"
    assert main(["optimize", "--config", cfg, "--out", str(out)]) == 0
    captured = capsys.readouterr()
    assert "wrote" in captured.out and "optimize.csv" in captured.out

    header, rows = read_csv(out / "optimize.csv")
    assert header == ["m", "system", "detector", "tau_star", "alpha_star", "rho_star",
                      "xi_user1", "xi_user2", "rate_user1", "rate_user2",
                      "min_rate", "n_evaluations"]
    assert len(rows) == 1
    row = rows[0]
    assert row[0] == "50" and row[1] == "wetmm" and row[2] == "zf"

    spec = ExperimentSpec(**load_config(cfg), out_dir=str(out))
    res = grid_search_p1(build_params(spec), spec.system, spec.detector,
                         steps=spec.steps, xi_policy=spec.xi_policy,
                         xi_step=spec.xi_step, coarse_factor=spec.coarse_factor,
                         refine_radius=spec.refine_radius)
    # CSV floats are '.10g' renderings of exactly the direct-search result.
    assert row[3] == format(float(res.allocation.tau), ".10g")
    assert row[4] == format(float(res.allocation.alpha), ".10g")
    assert row[5] == format(float(res.allocation.rho), ".10g")
    assert row[10] == format(float(res.min_rate), ".10g")

    sidecar = read_sidecar(str(out / "optimize.csv"))
    assert sidecar["experiment"] == "optimize"
    assert sidecar["csv"] == "optimize.csv"
    assert sidecar["spec"]["m"] == 50
    assert sidecar["spec"]["master_seed"] == 12345
    assert sidecar["spec"]["distances"] == [6.0, 12.0]

    with open(out / "optimize.csv", "rb") as fh:
        data = fh.read()
    assert data.endswith(b"\r\n")


def test_optimize_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, FAST_SEARCH)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["optimize", "--config", cfg, "--out", str(out_a)]) == 0
    first_csv = (out_a / "optimize.csv").read_bytes()
    first_json = (out_a / "optimize.json").read_bytes()
    assert main(["optimize", "--config", cfg, "--out", str(out_a)]) == 0
    assert (out_a / "optimize.csv").read_bytes() == first_csv
    assert (out_a / "optimize.json").read_bytes() == first_json
    # CSV content does not depend on the output directory.
    assert main(["optimize", "--config", cfg, "--out", str(out_b)]) == 0
    assert (out_b / "optimize.csv").read_bytes() == first_csv


def test_flags_override_config(tmp_path):
    cfg = write_config(tmp_path, FAST_SEARCH)
    out = tmp_path / "out"
    rc = main(["optimize", "--config", cfg, "--out", str(out), "--seed", "99",
               "--m", "30", "--detector", "mrc", "--trials", "10"])
    assert rc == 0
    sidecar = read_sidecar(str(out / "optimize.csv"))
    assert sidecar["spec"]["master_seed"] == 99
    assert sidecar["spec"]["m"] == 30
    assert sidecar["spec"]["detector"] == "mrc"
    assert sidecar["spec"]["n_trials"] == 10
    header, rows = read_csv(out / "optimize.csv")
    assert rows[0][0] == "30" and rows[0][2] == "mrc"


def test_optimize_ideal_system(tmp_path):
    cfg = write_config(tmp_path, FAST_SEARCH)
    out = tmp_path / "out"
    assert main(["optimize", "--config", cfg, "--out", str(out),
                 "--system", "ideal"]) == 0
    header, rows = read_csv(out / "optimize.csv")
    assert rows[0][1] == "ideal"
    assert float(rows[0][10]) > 0.0


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, "m = 50\nnonsense = 3\n")
    assert main(["optimize", "--config", cfg]) == 2
    captured = capsys.readouterr()
    assert "error:" in captured.err
    assert "unknown config key" in captured.err


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["optimize", "--config", str(tmp_path / "absent.cfg")]) == 2
    assert "error:" in capsys.readouterr().err


def test_table1_requires_two_users(tmp_path, capsys):
    cfg = write_config(tmp_path, "distances = 9\n")
    assert main(["table1", "--config", cfg, "--out", str(tmp_path / "out")]) == 2
    assert "two-user" in capsys.readouterr().err


def test_rho_sweep_rows_and_fixed_point_sidecar(tmp_path):
    cfg = write_config(tmp_path, FAST_SEARCH + "rho_step = 0.05\n")
    out = tmp_path / "out"
    rc = main(["rho-sweep", "--config", cfg, "--out", str(out),
               "--tau", "0.01", "--alpha", "0.08"])
    assert rc == 0
    header, rows = read_csv(out / "rho_sweep.csv")
    assert header == ["rho", "rate_user1", "rate_user2", "min_rate"]
    # interior lattice only: 0.05, 0.10, ..., 0.95
    assert len(rows) == 19
    assert np.isclose(float(rows[0][0]), 0.05, rtol=1e-12)
    assert np.isclose(float(rows[-1][0]), 0.95, rtol=1e-12)
    for row in rows:
        assert np.isclose(float(row[3]), min(float(row[1]), float(row[2])), rtol=1e-12)
    sidecar = read_sidecar(str(out / "rho_sweep.csv"))
    assert sidecar["fixed_tau"] == 0.01
    assert sidecar["fixed_alpha"] == 0.08


def test_contour_covers_window(tmp_path):
    cfg = write_config(tmp_path, FAST_SEARCH + "contour_tau_max = 0.02\n"
                       "contour_alpha_max = 0.04\n")
    out = tmp_path / "out"
    assert main(["contour", "--config", cfg, "--out", str(out), "--rho", "0.6"]) == 0
    header, rows = read_csv(out / "contour.csv")
    assert header == ["tau", "alpha", "rate_user1", "rate_user2"]
    # tau in {0, .005, .01, .015, .02}, alpha in {0, .01, .02, .03, .04}
    assert len(rows) == 25
    taus = sorted({float(r[0]) for r in rows})
    alphas = sorted({float(r[1]) for r in rows})
    assert np.allclose(taus, [0.0, 0.005, 0.01, 0.015, 0.02], atol=1e-12)
    assert np.allclose(alphas, [0.0, 0.01, 0.02, 0.03, 0.04], atol=1e-12)
    assert read_sidecar(str(out / "contour.csv"))["fixed_rho"] == 0.6


def test_mc_validate_blocks_and_allocation_sidecar(tmp_path):
    cfg = write_config(tmp_path, FAST_SEARCH + "m = 20\n")
    out = tmp_path / "out"
    assert main(["mc-validate", "--config", cfg, "--out", str(out)]) == 0
    header, rows = read_csv(out / "mc_validate.csv")
    assert header == ["quantity", "user", "closed_form", "mc_mean", "mc_se", "z_score"]
    assert [r[0] for r in rows] == ["energy", "energy", "error_var", "error_var",
                                   "rate_bound", "rate_bound"]
    assert [r[1] for r in rows] == ["1", "2"] * 3
    for row in rows:
        assert math.isfinite(float(row[5]))
    alloc = read_sidecar(str(out / "mc_validate.csv"))["allocation"]
    assert set(alloc) == {"tau", "alpha", "rho", "xi"}
    assert len(alloc["xi"]) == 2


def test_rate_vs_m_nan_below_zf_floor(tmp_path):
    cfg = write_config(tmp_path, """
rate_vs_m_values = 2, 4
fig_tau_step = 0.01
fig_alpha_step = 0.02
fig_rho_step = 0.02
fig_coarse_factor = 2
""")
    out = tmp_path / "out"
    assert main(["rate-vs-m", "--config", cfg, "--out", str(out)]) == 0
    header, rows = read_csv(out / "rate_vs_m.csv")
    assert header == ["m", "wetmm_zf", "wetmm_mrc", "ideal_zf", "opmm_zf"]
    assert len(rows) == 2
    # ZF needs M >= K + 1 = 3; MRC has no such floor.
    row2 = rows[0]
    assert math.isnan(float(row2[1])) and math.isnan(float(row2[3]))
    assert math.isfinite(float(row2[2]))
    assert all(math.isfinite(float(v)) for v in rows[1][1:])
    slopes = read_sidecar(str(out / "rate_vs_m.csv"))["mm_dorg"]
    assert slopes["wetmm_zf"] is None and slopes["ideal_zf"] is None
    assert isinstance(slopes["wetmm_mrc"], float)


def test_large_k_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path, """
large_k_users = 500
zeta_min = 0.1
zeta_max = 0.9
zeta_step = 0.1
""")
    out = tmp_path / "out"
    assert main(["large-k", "--config", cfg, "--out", str(out)]) == 0
    captured = capsys.readouterr()
    assert "large_k_rates.csv (9 rows)" in captured.out
    assert "large_k_c1.csv (3 rows)" in captured.out
    header, rows = read_csv(out / "large_k_rates.csv")
    assert header == ["zeta", "rate"]
    assert np.allclose([float(r[0]) for r in rows], 0.1 * np.arange(1, 10), atol=1e-12)
    header, rows = read_csv(out / "large_k_c1.csv")
    assert header == ["n_users", "c1_sample", "c1_limit", "rel_err"]
    assert [int(r[0]) for r in rows] == [10, 100, 500]
    # sampled moment converges toward the printed limit
    assert float(rows[-1][3]) < float(rows[0][3])
    sidecar = read_sidecar(str(out / "large_k_rates.csv"))
    assert sidecar["c1_csv"] == "large_k_c1.csv"
    assert np.isclose(sidecar["c1_limit"], 846473142857.143, rtol=1e-9)
