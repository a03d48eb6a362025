import json
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blowrefine.analysis import (
    PHASES_COLUMNS,
    blowup_limit_series,
    emit_reports,
    extract_vk,
    n_pre,
    phase_rows,
    predictions,
    profile_error,
    ratio_series,
    read_csv,
    refining,
    slope_fit,
    z_grid,
)
from blowrefine.engine import RunReport
from blowrefine.config import RunConfig
from blowrefine.errors import DataError, InsufficientDataError
from blowrefine.nonlinearity import ModelParams, kappa
from blowrefine.similarity import estimate_blowup_time
from helpers import synthetic_records

P = RunConfig(hbar=0.005).model_params()


def test_n_pre_reference_value():
    assert n_pre(0.005, 0.25, 0.5, 3.0, 4.0) == pytest.approx(3750.0, rel=1e-14)
    assert predictions(P).N_limit == pytest.approx(3750.0, rel=1e-14)


def test_gamma_and_B_arithmetic():
    pr = predictions(P)
    A = 0.04 ** -2 * (0.6 ** -2 - 1) / ((2 / 12) * 2 * 0.25)
    assert pr.c_p == pytest.approx(1 / 6)
    assert pr.gamma == pytest.approx(2 * A * math.log(2), rel=1e-14)
    assert pr.B == pytest.approx(-A * math.log(0.04 ** -2 * 0.005 ** 2 / 2), rel=1e-14)
    assert pr.B > 0
    # continuous and node sup coincide for the centred cosine
    assert predictions(P, 4.0).B_continuous == pr.B
    assert predictions(P, 5.0).B_continuous != pr.B


def test_predicted_profile():
    pr = predictions(P)
    assert pr.v_pred(0.0) == P.M
    assert pr.v_pred(1.0) == pytest.approx(0.35110 * P.M, rel=1e-4)
    assert pr.v_pred(1.0) == pytest.approx(P.M * (1 + (1 / 0.36 - 1) * 4) ** -0.5, rel=1e-14)
    z = z_grid()
    np.testing.assert_array_equal(pr.v_pred(z), pr.v_pred(-z))


def test_ratio_series_constant_on_constant_counts():
    recs = synthetic_records(P, steps=1234.0)
    k, r = ratio_series(recs, predictions(P))
    assert np.all(r == r[0]) and r[0] == pytest.approx(1234.0 / 3750.0)


def exact_linear(gamma, B, ks):
    return [SimpleNamespace(k=k, j_plus=math.sqrt(gamma * k + B) / 2) for k in ks]


def test_slope_fit_exact_on_linear_data():
    pr = predictions(P)
    fit = slope_fit(exact_linear(pr.gamma, pr.B, range(0, 45)), pr)
    assert fit.ratio == pytest.approx(1.0, abs=1e-12)
    assert fit.B_hat == pytest.approx(pr.B, rel=1e-10)
    assert list(fit.k) == list(range(20, 41))


@given(st.integers(-10, 10), st.floats(10.0, 1e4), st.floats(1.0, 1e5))
def test_slope_fit_reindexing_invariant(shift, slope, icpt):
    pr = predictions(P)
    base = exact_linear(slope, icpt, range(20, 41))
    moved = [SimpleNamespace(k=r.k + shift, j_plus=r.j_plus) for r in base]
    f1 = slope_fit(base, pr)
    f2 = slope_fit(moved, pr, 20 + shift, 40 + shift)
    assert f2.gamma_hat == pytest.approx(f1.gamma_hat, rel=1e-9)


def test_slope_fit_needs_three_points():
    with pytest.raises(InsufficientDataError):
        slope_fit(exact_linear(1.0, 1.0, [20, 21]), predictions(P))


def test_blowup_limit_identity():
    recs = synthetic_records(P, T=0.02, K=15)
    fr = estimate_blowup_time(recs, P)
    _, series = blowup_limit_series(recs, fr, P)
    np.testing.assert_allclose(series, kappa(P), rtol=1e-9)
    late = SimpleNamespace(remaining=(), time_to_go=lambda k: -1.0)
    with pytest.raises(DataError):
        blowup_limit_series(recs, late, P)


def test_extract_vk_peak_and_symmetry():
    recs = synthetic_records(P, K=5)
    z, v = extract_vk(recs, 3, P)
    assert v[200] == pytest.approx(P.M, rel=1e-14)
    np.testing.assert_allclose(v, v[::-1], rtol=1e-14, atol=0)
    with pytest.raises(IndexError):
        extract_vk(recs[1:], 1, P)
    with pytest.raises(DataError):
        extract_vk(recs, 3, P, z=[1.5])


def test_profile_error_zero_iff_equal():
    pr = predictions(P)
    z = z_grid()
    assert profile_error(pr.v_pred(z), pr) == 0.0
    bumped = pr.v_pred(z).copy()
    bumped[17] += 1e-3
    assert profile_error(bumped, pr) == pytest.approx(1e-3)
    assert profile_error(bumped[::-1], pr) == pytest.approx(1e-3)


def test_empty_report_writes_headers(tmp_path):
    cfg = RunConfig()
    rep = RunReport(cfg, cfg.model_params(), [], [])
    emit_reports(rep, str(tmp_path))
    assert (tmp_path / "phases.csv").read_text() == ",".join(PHASES_COLUMNS) + "\n"
    assert (tmp_path / "similarity.csv").read_text().count("\n") == 1


def test_reports_round_trip(run_cache, tmp_path):
    rep = run_cache(0.04, 10.0, 40)
    summary = emit_reports(rep, str(tmp_path))
    pred = predictions(rep.params, 4.0)
    data = read_csv(str(tmp_path / "phases.csv"))
    assert len(data["k"]) == 40
    rows = list(phase_rows(rep.records, pred))
    for i, name in enumerate(PHASES_COLUMNS):
        np.testing.assert_array_equal(data[name], [r[i] for r in rows])
    prof = read_csv(str(tmp_path / "profile_40.csv"))
    _, v = extract_vk(rep.records, 40, rep.params)
    np.testing.assert_array_equal(prof["v_k"], v)
    assert prof["abs_err"].max() == profile_error(v, pred) == summary["profile_error"]["40"]
    stored = json.loads((tmp_path / "predictions.json").read_text())
    assert stored["N_limit"] == pred.N_limit and stored["kappa"] == kappa(3.0)
    assert stored["lyapunov_violations"] == 0
    sim = read_csv(str(tmp_path / "similarity.csv"))
    assert len(sim["s"]) == 41 and np.isnan(sim["dissipation"][0])
    fig = np.loadtxt(tmp_path / "fig_interval.dat")
    assert fig.shape == (40, 2)


def test_reports_are_byte_identical(run_cache, tmp_path):
    rep = run_cache(0.04, 10.0, 40)
    emit_reports(rep, str(tmp_path / "a"))
    emit_reports(rep, str(tmp_path / "b"))
    for name in ("phases.csv", "profile_40.csv", "similarity.csv", "predictions.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_refining_drops_initial_phase(run_cache):
    rep = run_cache(0.04, 10.0, 40)
    assert [r.k for r in refining(rep.records)] == list(range(1, 41))
