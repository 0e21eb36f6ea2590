import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fas_sic.analysis import cdf_lower_R
from fas_sic.channels import FiniteScatterParams, TapProfile
from fas_sic.cli import main
from fas_sic.geometry import FasGrid
from fas_sic.harness import (
    CellResult,
    ConfigError,
    ExperimentConfig,
    RsiReport,
    config_from_dict,
    empirical_cdf,
    load_config,
    run_experiment,
    summarize,
)
from fas_sic.harness import experiment as experiment_mod
from fas_sic.sic import PilotConfig, SimParams

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
G33 = FasGrid(3, 3, 0.5, 0.5)


def small_cfg(**kw):
    base = dict(scenario="rich", grids=(G33,), trials=300, seed=3,
                schemes=("fas_min_rsi", "fas_max_forward", "fpa"))
    base.update(kw)
    return ExperimentConfig(**base)


# -- summaries ------------------------------------------------------------


def test_summarize_examples():
    s = summarize([1, 1, 1])
    assert s.mean == 1 and s.stderr == 0
    s = summarize([0, 2])
    assert s.mean == 1 and s.median == 1
    assert math.isnan(summarize([4.0]).stderr)
    with pytest.raises(ValueError):
        summarize([])


def test_summarize_exponential_mean():
    s = summarize(np.random.default_rng(0).exponential(size=100_000))
    assert abs(s.mean - 1) < 0.01
    assert s.stderr == pytest.approx(1 / math.sqrt(100_000), rel=0.05)


def test_empirical_cdf_examples():
    assert empirical_cdf([1, 2, 3], [2]) == [(2.0, 2 / 3)]
    assert empirical_cdf([1, 2, 3], [0.5])[0][1] == 0
    assert empirical_cdf([1, 2, 3], [3, 10]) == [(3.0, 1.0), (10.0, 1.0)]
    with pytest.raises(ValueError):
        empirical_cdf([], [1.0])


def test_empirical_cdf_matches_single_port_bound():
    rng = np.random.default_rng(1)
    x = rng.exponential(size=10**6) / rng.exponential(size=10**6)
    pts = np.geomspace(1e-3, 1e3, 200)
    frac = np.array([f for _, f in empirical_cdf(x, pts)])
    assert np.abs(frac - cdf_lower_R(pts, 1)).max() < 0.002


@given(st.lists(st.floats(0, 100), min_size=1, max_size=50), st.lists(st.floats(0, 100), max_size=10))
def test_empirical_cdf_properties(samples, points):
    pts = sorted(points)
    out = empirical_cdf(samples, pts)
    fr = [f for _, f in out]
    assert all(0 <= f <= 1 for f in fr)
    assert fr == sorted(fr)
    for p, f in out:
        assert f == sum(s <= p for s in samples) / len(samples)


# -- config ---------------------------------------------------------------


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.variants()


def test_config_defaults_and_sweep():
    cfg = config_from_dict({"scenario": "finite_scatter", "grid": [{"n": [2, 2], "w": [1, 1]}],
                            "finite_scatter": {"k_factor": 0.0, "n_paths": 5},
                            "sweep": {"k_factor": [0.0, 3.0], "n_paths": [5, 7]}})
    assert cfg.sim.kappa_e == pytest.approx(1000.0)
    assert cfg.sim.bw_hz == 5e6
    labels = [v.label for v in cfg.variants()]
    assert labels[0] == "finite_scatter/k_factor=0.0,n_paths=5" and len(labels) == 4
    assert cfg.variants()[3].finite_scatter == FiniteScatterParams(3.0, 7)


def test_config_grid_product_and_iab_default():
    cfg = config_from_dict({"scenario": "wideband_iab", "wideband": {"profile": "iab", "k_factor_tap0": 7.0},
                            "grid_product": {"n": [[2, 2], [3, 3]], "w": [[1, 1], [5, 5]]}})
    assert len(cfg.grids) == 4
    assert cfg.tap_profile.delay_samples.tolist() == [0, 15, 54]
    assert cfg.tap_profile.k_factor_tap0 == 7.0
    assert cfg.effective_block_size == 16


@pytest.mark.parametrize("doc,match", [
    ({"grid": [{"n": [2, 2], "w": [1, 1]}]}, "scenario"),
    ({"scenario": "rich"}, "grid"),
    ({"scenario": "cave", "grid": [{"n": [2, 2], "w": [1, 1]}]}, "scenario"),
    ({"scenario": "rich", "grid": [{"n": [2, 2], "w": [1, 1]}], "trials": 0}, "trials"),
    ({"scenario": "rich", "grid": [{"n": [2, 2], "w": [1, 1]}], "schemes": []}, "scheme"),
    ({"scenario": "rich", "grid": [{"n": [2, 2], "w": [1, 1]}], "schemes": ["magic"]}, "schemes"),
    ({"scenario": "truncated", "grid": [{"n": [2, 2], "w": [1, 1]}]}, "truncation"),
    ({"scenario": "finite_scatter", "grid": [{"n": [2, 2], "w": [1, 1]}]}, "finite_scatter"),
    ({"scenario": "wideband_iab", "grid": [{"n": [2, 2], "w": [1, 1]}]}, "wideband"),
    ({"scenario": "rich", "grid": [{"n": [2, 2]}]}, "w ="),
    ({"scenario": "rich", "grid": [{"n": [2, 2], "w": [1, 1]}], "colour": "red"}, "unknown"),
    ({"scenario": "rich", "grid": [{"n": [2, 2], "w": [1, 1]}], "sim": {"e_s": -1}}, "sim"),
    ({"scenario": "rich", "grid": [{"n": [2, 2], "w": [1, 1]}], "pilot": {"l_e": 9, "l_c": 10}}, "pilot"),
    ({"scenario": "rich", "grid": [{"n": [2, 2], "w": [1, 1]}], "sweep": {"l_e": [1]}}, "pilot"),
    ({"scenario": "rich", "grid": [{"n": [2, 2], "w": [1, 1]}], "sweep": {"w": [1]}}, "sweep"),
    ({"scenario": "rich", "grid": [{"n": [2, 2], "w": [1, 1]}], "seed": -1}, "seed"),
])
def test_config_errors(doc, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(doc)


def test_load_config_reports_toml_errors(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("scenario = \n")
    with pytest.raises(ConfigError, match="bad.toml"):
        load_config(p)


# -- runs -----------------------------------------------------------------


def test_single_trial_flags_undefined_stderr():
    rep = run_experiment(small_cfg(trials=1, schemes=("fas_min_rsi",)))
    row = rep.select(metric="rsi_mean")[0]
    assert row.trials == 1 and row.stderr is None
    assert {r.scheme for r in rep.rows} == {"fas_min_rsi"}


def test_reproducible_across_threads():
    cfg = small_cfg(trials=1000, block_size=64, cdf_points=(0.01, 0.1))
    a = run_experiment(cfg, threads=1).to_csv()
    b = run_experiment(cfg, threads=4).to_csv()
    assert a == b
    assert run_experiment(replace(cfg, seed=4)).to_csv() != a


def test_csv_round_trip():
    rep = run_experiment(small_cfg(trials=5, cdf_points=(0.5,)))
    back = RsiReport.from_csv(rep.to_csv())
    assert back == rep
    assert back.to_csv() == rep.to_csv()


@given(st.lists(st.tuples(st.floats(allow_nan=True), st.one_of(st.none(), st.floats(0, 1e9))), max_size=8))
def test_csv_round_trip_values(values):
    rows = tuple(CellResult("rich/l_e=9", 2, 3, 0.1, 7.25, "fpa", f"m{i}", v, se, 10, 2**63)
                 for i, (v, se) in enumerate(values))
    rep = RsiReport(rows, 30.0)
    assert RsiReport.from_csv(rep.to_csv()) == rep


def test_csv_rejects_unknown_header():
    with pytest.raises(ValueError):
        RsiReport.from_csv("scenario,n1\n")


def test_min_rsi_dominates_shared_fpa():
    cfg = small_cfg(grids=(FasGrid(2, 2, 1.0, 1.0), FasGrid(4, 4, 1.0, 1.0)), trials=2000, keep_samples=True)
    rep = run_experiment(cfg)
    for g in cfg.grids:
        fas = rep.samples[("rich", g, "fas_min_rsi")]["rsi"]
        fpa = rep.samples[("rich", g, "fpa")]["rsi"]
        fwd = rep.samples[("rich", g, "fas_max_forward")]["rsi"]
        assert np.all(fas <= fpa) and np.all(fas <= fwd)


def test_independent_fpa_draws_separately():
    cfg = small_cfg(trials=2000, keep_samples=True, fpa_mode="independent")
    rep = run_experiment(cfg)
    fas = rep.samples[("rich", G33, "fas_min_rsi")]["rsi"]
    fpa = rep.samples[("rich", G33, "fpa")]["rsi"]
    assert np.mean(fas <= fpa) >= 0.8
    assert np.any(fas > fpa)


def test_streams_do_not_depend_on_aperture():
    a, b = FasGrid(1, 1, 0.0, 0.0), FasGrid(1, 1, 3.0, 3.0)
    rep = run_experiment(small_cfg(grids=(a, b), trials=300, schemes=("fpa",), keep_samples=True))
    assert np.array_equal(rep.samples[("rich", a, "fpa")]["rsi"], rep.samples[("rich", b, "fpa")]["rsi"])


def test_sweep_variants_are_reported_separately():
    g = FasGrid(3, 3, 1.0, 1.0)
    cfg = ExperimentConfig("finite_scatter", (g,), trials=200, seed=1, schemes=("fas_min_rsi",),
                           finite_scatter=FiniteScatterParams(0.0, 4), sweep=(("k_factor", (0.0, 7.0)),))
    rep = run_experiment(cfg)
    labels = sorted({r.scenario for r in rep.rows})
    assert labels == ["finite_scatter/k_factor=0.0", "finite_scatter/k_factor=7.0"]


def test_pilot_rows_and_overhead():
    cfg = small_cfg(pilot=PilotConfig(900), sim=SimParams.from_db(30.0, sigma_eta2=4.0))
    rep = run_experiment(cfg)
    cap = rep.value(metric="capacity_mean", scheme="fas_min_rsi")
    ce = rep.value(metric="capacity_ce_mean", scheme="fas_min_rsi")
    assert ce == pytest.approx(cap * PilotConfig(900).overhead_factor, rel=1e-12)


def test_wideband_and_truncated_runs():
    wide = run_experiment(ExperimentConfig("wideband_iab", (FasGrid(2, 2, 1.0, 1.0),), trials=20, seed=1,
                                           schemes=("fas_min_rsi", "fpa"), tap_profile=TapProfile.iab()))
    assert wide.value(metric="rate_mean", scheme="fas_min_rsi") > 0
    trunc = run_experiment(ExperimentConfig("truncated", (G33,), trials=50, seed=1, m=4))
    assert trunc.value(metric="rsi_mean") > 0


def test_report_metrics_are_consistent():
    rep = run_experiment(small_cfg(trials=500))
    mean = rep.value(metric="rsi_mean", scheme="fas_min_rsi")
    assert rep.value(metric="rsi_mean_db", scheme="fas_min_rsi") == pytest.approx(10 * math.log10(mean))
    assert rep.value(metric="cancellation_db", scheme="fas_min_rsi") == pytest.approx(30 - 10 * math.log10(mean))
    gap = rep.value(metric="cancellation_vs_fpa_db", scheme="fas_min_rsi")
    assert gap == pytest.approx(rep.value(metric="rsi_mean_db", scheme="fpa")
                                - rep.value(metric="rsi_mean_db", scheme="fas_min_rsi"))


def test_numeric_failure_becomes_cell_error(monkeypatch):
    real = experiment_mod._run_block

    def flaky(cell, cfg, block, count):
        if cell.grid.n1 == 2:
            raise FloatingPointError("overflow in synthetic cell")
        return real(cell, cfg, block, count)

    monkeypatch.setattr(experiment_mod, "_run_block", flaky)
    rep = run_experiment(small_cfg(grids=(FasGrid(2, 2, 1, 1), G33), trials=20))
    assert len(rep.errors) == 1 and "overflow" in rep.errors[0].message
    assert rep.select(n1=3, metric="rsi_mean")


# -- CLI ------------------------------------------------------------------


def test_cli_run_writes_csv_and_manifest(tmp_path, capsys):
    assert main(["run", str(CONFIGS / "smoke.toml"), "--trials", "64", "--out", str(tmp_path)]) == 0
    csv_text = (tmp_path / "smoke.csv").read_text()
    manifest = json.loads((tmp_path / "smoke.manifest.json").read_text())
    assert manifest["config"]["trials"] == 64 and manifest["cell_errors"] == []
    assert manifest["reference_db"] == pytest.approx(30.0)
    assert RsiReport.from_csv(csv_text).select(scheme="fpa")
    assert "smoke.csv" in capsys.readouterr().out


def test_cli_run_is_byte_identical(tmp_path):
    for sub, threads in (("a", "1"), ("b", "3")):
        assert main(["run", str(CONFIGS / "smoke.toml"), "--trials", "300", "--threads", threads,
                     "--seed", "99", "--out", str(tmp_path / sub)]) == 0
    assert (tmp_path / "a/smoke.csv").read_bytes() == (tmp_path / "b/smoke.csv").read_bytes()
    assert (tmp_path / "a/smoke.manifest.json").read_bytes() == (tmp_path / "b/smoke.manifest.json").read_bytes()


def test_cli_bounds(tmp_path, capsys):
    assert main(["bounds", "900", "30", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "1.11235" in out
    rep = RsiReport.from_csv((tmp_path / "bounds_N900.csv").read_text())
    assert rep.value(metric="rsi_lower_bound") == pytest.approx(1000 / 899)
    assert main(["bounds", "1", "30"]) == 2


def test_cli_approx_and_cdf(tmp_path):
    assert main(["approx", str(CONFIGS / "smoke.toml"), "--trials", "40", "--out", str(tmp_path)]) == 0
    rep = RsiReport.from_csv((tmp_path / "smoke_approx.csv").read_text())
    assert rep.select(scheme="approx", metric="rsi_mean") and rep.select(scheme="bound")
    assert main(["cdf", str(CONFIGS / "smoke.toml"), "--trials", "50", "--out", str(tmp_path)]) == 0
    cdf = RsiReport.from_csv((tmp_path / "smoke_cdf.csv").read_text())
    assert cdf.select(scheme="bound", metric="cdf_R@1.0")


def test_cli_errors(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.toml")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text('scenario = "rich"\n')
    assert main(["run", str(bad)]) == 2
    assert "grid" in capsys.readouterr().err
    assert main(["run", str(CONFIGS / "smoke.toml"), "--threads", "0"]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])
