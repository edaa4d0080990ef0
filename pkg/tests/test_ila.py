"""Indirect-learning fit/deploy/evaluate harness and sweep reports."""

import numpy as np
import pytest

from dpdlab import (
    AgmpnnModel,
    FormatError,
    MpmCoefficients,
    MpmSpec,
    RvftdnnModel,
    TapWindow,
    TrainConfig,
    generate_waveform,
    preset,
)
from dpdlab.ila import (
    DEFAULT_MPM_K_GRID,
    DEFAULT_NN_GRID,
    DEFAULT_PARAM_TARGETS,
    DEFAULT_TAPS_LIST,
    EVAL_SEED_OFFSET,
    FAMILIES,
    MAX_ALIGN_LAG,
    REPORT_HEADER,
    DpdModelSpec,
    IlaReport,
    _advance,
    fit_predistorter,
    linearization_nmse_db,
    load_model,
    reports_to_csv,
    run_ila,
    sweep_complexity,
    sweep_taps,
)
from dpdlab.pa_sim import PaConfig
from dpdlab.rvftdnn import rvftdnn_param_count

FAST_CFG = TrainConfig(segment_len=512, max_epochs=3, patience=2)


def _linear_pa():
    return PaConfig(coeffs=np.array([[1.0 + 0.0j]]))


# === constants and spec validation ===

def test_module_constants():
    assert MAX_ALIGN_LAG == 8
    assert EVAL_SEED_OFFSET == 1000
    assert FAMILIES == ("mpm", "agmpnn", "rvftdnn")
    assert DEFAULT_TAPS_LIST == (4, 5, 6, 7, 8, 9, 10)
    assert DEFAULT_PARAM_TARGETS == (100, 200, 300, 400, 500, 600)
    assert DEFAULT_MPM_K_GRID == (1, 2, 3, 4, 5, 6, 7, 8)
    assert DEFAULT_NN_GRID == (8, 10, 12, 14, 16, 18, 20)
    assert REPORT_HEADER.split(",") == [
        "family", "preset", "taps", "k_orders", "m_experts", "params_formula",
        "params_actual", "seed", "postinv_nmse_db", "lin_nmse_db", "no_dpd_nmse_db"]


def test_model_spec_rejects_unknown_kind():
    with pytest.raises(ValueError):
        DpdModelSpec(kind="volterra", window=TapWindow(pre_taps=3))


def test_report_feasibility():
    blank = IlaReport(family="mpm", preset="low", taps=4, seed=1)
    assert not blank.feasible
    full = IlaReport(family="mpm", preset="low", taps=4, seed=1, postinv_nmse_db=-20.0)
    assert full.feasible


# === sample shifting ===

def test_advance_examples():
    x = np.arange(5, dtype=np.complex128)
    assert np.array_equal(_advance(x, 0), x)
    assert np.array_equal(_advance(x, 2), np.array([2, 3, 4, 0, 0], dtype=complex))
    assert np.array_equal(_advance(x, -2), np.array([0, 0, 0, 1, 2], dtype=complex))


# === closed-loop behavior ===

def test_linear_pa_needs_no_predistortion():
    spec = DpdModelSpec(kind="mpm", window=TapWindow(pre_taps=0), k_orders=1)
    report = run_ila(_linear_pa(), "high", spec, seed=1, n_samples=4096)
    assert report.postinv_nmse_db < -150.0
    assert report.lin_nmse_db < -250.0
    assert report.no_dpd_nmse_db < -250.0
    assert report.improved


def test_low_preset_polynomial_dpd_improves_substantially():
    spec = DpdModelSpec(kind="mpm", window=TapWindow(pre_taps=6), k_orders=5)
    report = run_ila(preset("low"), "low", spec, seed=1, n_samples=8192)
    assert report.improved
    assert report.lin_nmse_db < report.no_dpd_nmse_db - 15.0
    assert report.postinv_nmse_db < -30.0


def test_eval_seed_defaults_to_offset():
    spec = DpdModelSpec(kind="mpm", window=TapWindow(pre_taps=1), k_orders=2)
    report = run_ila(preset("low"), "low", spec, seed=7, n_samples=4096)
    assert report.eval_seed == 7 + EVAL_SEED_OFFSET
    explicit = run_ila(preset("low"), "low", spec, seed=7, n_samples=4096, eval_seed=42)
    assert explicit.eval_seed == 42
    assert explicit.lin_nmse_db != report.lin_nmse_db  # different evaluation data


def test_run_ila_is_deterministic():
    spec = DpdModelSpec(kind="mpm", window=TapWindow(pre_taps=3), k_orders=3)
    a = run_ila(preset("high"), "high", spec, seed=2, n_samples=4096)
    b = run_ila(preset("high"), "high", spec, seed=2, n_samples=4096)
    assert a.postinv_nmse_db == b.postinv_nmse_db
    assert a.lin_nmse_db == b.lin_nmse_db
    assert a.no_dpd_nmse_db == b.no_dpd_nmse_db
    assert a.gain == b.gain


def test_fit_seed_changes_feedback_noise():
    spec = DpdModelSpec(kind="mpm", window=TapWindow(pre_taps=3), k_orders=3)
    chi = generate_waveform(1, 4096, 0.25)
    a = fit_predistorter(preset("low"), chi, spec, TrainConfig(), seed=1)
    b = fit_predistorter(preset("low"), chi, spec, TrainConfig(), seed=2)
    assert a.postinv_nmse_db != b.postinv_nmse_db


def test_improved_flag_matches_metrics():
    spec = DpdModelSpec(kind="mpm", window=TapWindow(pre_taps=2), k_orders=2)
    report = run_ila(preset("high"), "high", spec, seed=3, n_samples=4096)
    assert report.improved == (report.lin_nmse_db <= report.no_dpd_nmse_db)


def test_iterated_fit_runs_and_stays_feasible():
    spec = DpdModelSpec(kind="mpm", window=TapWindow(pre_taps=4), k_orders=4)
    chi = generate_waveform(4, 4096, 0.25)
    once = fit_predistorter(preset("low"), chi, spec, TrainConfig(), seed=4, n_iterations=1)
    twice = fit_predistorter(preset("low"), chi, spec, TrainConfig(), seed=4, n_iterations=2)
    assert np.isfinite(once.postinv_nmse_db)
    assert np.isfinite(twice.postinv_nmse_db)
    assert not np.array_equal(once.model.coeff, twice.model.coeff)
    with pytest.raises(ValueError):
        fit_predistorter(preset("low"), chi, spec, TrainConfig(), seed=4, n_iterations=0)


def test_no_dpd_metric_ignores_model():
    chi = generate_waveform(5, 4096, 0.25)
    nmse, gain = linearization_nmse_db(preset("high"), None, chi)
    assert -16.0 < nmse < -13.0
    assert abs(gain) < 1.0  # compression shrinks the loop gain


# === tap-count sweep ===

def test_sweep_taps_reduced_grid():
    rows = sweep_taps(preset("high"), "high", taps_list=(4, 7), seeds=(1,),
                      n_samples=4096, cfg=FAST_CFG, nn_grid=(6,))
    assert len(rows) == 6  # 3 families x 2 tap counts x 1 seed
    assert [(r.family, r.taps, r.seed) for r in rows] == [
        ("mpm", 4, 1), ("mpm", 7, 1),
        ("agmpnn", 4, 1), ("agmpnn", 7, 1),
        ("rvftdnn", 4, 1), ("rvftdnn", 7, 1)]
    by_key = {(r.family, r.taps): r for r in rows}

    agm7 = by_key[("agmpnn", 7)]
    assert (agm7.k_orders, agm7.m_experts) == (3, 3)
    assert agm7.params_formula == 309
    assert agm7.params_actual == 171
    assert agm7.warm_start_nmse_db is not None

    mpm7 = by_key[("mpm", 7)]
    assert mpm7.k_orders in DEFAULT_MPM_K_GRID
    assert mpm7.params_actual == 2 * 7 * mpm7.k_orders <= 600

    nn4 = by_key[("rvftdnn", 4)]
    assert (nn4.n1, nn4.n2) == (6, 6)
    assert nn4.params_actual == rvftdnn_param_count(4, 6, 6)
    for r in rows:
        assert r.feasible
        assert r.preset == "high"
        assert np.isfinite(r.lin_nmse_db) and np.isfinite(r.no_dpd_nmse_db)
        assert r.improved == (r.lin_nmse_db <= r.no_dpd_nmse_db)


def test_sweep_taps_marks_infeasible_network_budget():
    rows = sweep_taps(preset("high"), "high", taps_list=(4,), seeds=(1,),
                      families=("rvftdnn",), n_samples=4096, cfg=FAST_CFG,
                      nn_grid=(4,))  # (4, 4) holds only 66 parameters
    assert len(rows) == 1
    assert not rows[0].feasible
    assert rows[0].lin_nmse_db is None
    assert rows[0].taps == 4 and rows[0].seed == 1


# === complexity sweep ===

def test_sweep_complexity_reduced_targets():
    pa_by = {"low": preset("low"), "high": preset("high")}
    rows = sweep_complexity(pa_by, taps=7, param_targets=(100, 600), seeds=(1,),
                            n_samples=4096, cfg=FAST_CFG)
    assert len(rows) == 12  # 3 families x 2 targets x 2 presets x 1 seed
    assert [(r.family, r.preset) for r in rows[:4]] == [
        ("mpm", "high"), ("mpm", "low"), ("mpm", "high"), ("mpm", "low")]

    targets = (100, 600, 100, 600, 100, 600)
    for i, family in enumerate(("mpm", "mpm", "agmpnn", "agmpnn", "rvftdnn", "rvftdnn")):
        for j in range(2):
            row = rows[2 * i + j]
            assert row.family == family
            assert row.preset == ("high", "low")[j]
            target = targets[i]
            if row.feasible:
                assert abs(row.params_actual - target) <= 0.25 * target
            else:
                assert row.lin_nmse_db is None and row.params_actual is None

    # The polynomial family cannot reach 600 parameters at 7 taps (112 max).
    assert all(not r.feasible for r in rows if r.family == "mpm" and rows.index(r) in (2, 3))
    assert all(r.feasible for r in rows if r.family != "mpm")


# === report serialization ===

def test_reports_to_csv_exact_format():
    rows = [
        IlaReport(family="mpm", preset="low", taps=4, seed=1, k_orders=3,
                  params_formula=24, params_actual=24,
                  postinv_nmse_db=-20.25, lin_nmse_db=-30.5, no_dpd_nmse_db=-19.0),
        IlaReport(family="rvftdnn", preset="high", taps=5, seed=2),
    ]
    text = reports_to_csv(rows)
    lines = text.split("\n")
    assert lines[0] == REPORT_HEADER
    assert lines[1] == "mpm,low,4,3,,24,24,1,-20.250000,-30.500000,-19.000000"
    assert lines[2] == "rvftdnn,high,5,,,,,2,,,"
    assert lines[3] == ""
    assert text == reports_to_csv(rows)  # byte-stable


def test_reports_to_csv_empty():
    assert reports_to_csv([]) == REPORT_HEADER + "\n"


# === model file dispatch ===

def test_load_model_dispatches_on_kind(tmp_path):
    mpm_model = MpmCoefficients(
        spec=MpmSpec(window=TapWindow(pre_taps=1), k_orders=2),
        coeff=np.array([[1.0, 0.1j], [0.05, 0.0]]))
    agm_model = AgmpnnModel.init(TapWindow(pre_taps=1), 2, 2, seed=0)
    nn_model = RvftdnnModel.init(TapWindow(pre_taps=1), 4, 3, seed=0)
    for name, model, cls in (("a.model", mpm_model, MpmCoefficients),
                             ("b.model", agm_model, AgmpnnModel),
                             ("c.model", nn_model, RvftdnnModel)):
        path = tmp_path / name
        model.save(path)
        loaded = load_model(path)
        assert isinstance(loaded, cls)
        x = generate_waveform(0, 64, 0.5)
        assert np.array_equal(loaded.predict(x).samples, model.predict(x).samples)


def test_load_model_rejects_unknown_kind(tmp_path):
    model = MpmCoefficients(spec=MpmSpec(window=TapWindow(pre_taps=0), k_orders=1),
                            coeff=np.ones((1, 1), dtype=complex))
    path = tmp_path / "weird.model"
    model.save(path)
    path.write_text(path.read_text().replace("kind = mpm", "kind = volterra"))
    with pytest.raises(FormatError):
        load_model(path)
