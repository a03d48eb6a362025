"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion."""

import math

import numpy as np
import pytest

from blowrefine.analysis import (
    blowup_limit_series,
    extract_vk,
    predictions,
    profile_error,
    ratio_series,
    refining,
    slope_fit,
)
from blowrefine.cli import main
from blowrefine.config import parse_config
from blowrefine.fd_core import explicit_update
from blowrefine.nonlinearity import ModelParams, kappa, solve_phi
from blowrefine.similarity import (
    HermiteBasis,
    WeightedQuadrature,
    classify_behavior,
    estimate_blowup_time,
    hermite_poly,
    run_diagnostics,
)


@pytest.fixture
def report_line(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} :: {detail}")
        return ok
    return emit


def n_ratio(run_cache, hbar, a, k=40):
    rep = run_cache(hbar, a, 40)
    ks, r = ratio_series(refining(rep.records), predictions(rep.params))
    return dict(zip(ks.tolist(), r.tolist()))[k]


def test_1_threshold_relation(report_line):
    got = {h: parse_config(f"hbar = {h}").model_params().M for h in (0.04, 0.02, 0.01, 0.005)}
    want = {0.04: 0.32, 0.02: 0.16, 0.01: 0.08, 0.005: 0.04}
    ok = all(got[h] == want[h] for h in want)
    assert report_line(1, "M = 8 hbar exactly", ok, got)


def test_2_ratio_convergence_a10(run_cache, report_line):
    r = n_ratio(run_cache, 0.02, 10.0)
    ok = 0.95 <= r <= 1.10
    assert report_line(2, "N_40/N_pre in [0.95, 1.10] at hbar=0.02, a=10", ok, f"{r:.6f}")


def test_2_full_table_a10(run_cache, report_line):
    table = {10: 1.0325, 15: 1.0203, 20: 1.0149, 25: 1.0117, 30: 1.0096, 35: 1.0080, 40: 1.0072}
    rep = run_cache(0.005, 10.0, 40)
    ks, r = ratio_series(refining(rep.records), predictions(rep.params))
    got = dict(zip(ks.tolist(), r.tolist()))
    dev = {k: got[k] / v - 1 for k, v in table.items()}
    ok = all(abs(d) <= 0.03 for d in dev.values())
    detail = ", ".join(f"k={k}: {got[k]:.4f} ({table[k]})" for k in table)
    assert report_line(2, "hbar=0.005, a=10 within 3% of the reference column", ok, detail)


def test_3_slow_regime_a01(run_cache, report_line):
    r = n_ratio(run_cache, 0.02, 0.1)
    ok = 0.5 <= r <= 0.75
    assert report_line(3, "N_40/N_pre in [0.5, 0.75] at hbar=0.02, a=0.1", ok, f"{r:.6f}")


def test_4_profile_error(run_cache, report_line):
    errs = []
    for h in (0.04, 0.02, 0.01):
        rep = run_cache(h, 10.0, 40)
        _, v = extract_vk(rep.records, 40, rep.params)
        errs.append(profile_error(v, predictions(rep.params)))
    ok = errs[0] <= 6e-3 and all(e1 <= 1.2 * e0 for e0, e1 in zip(errs, errs[1:]))
    assert report_line(4, "e <= 6e-3 at hbar=0.04 and decreasing in hbar", ok,
                       ", ".join(f"{e:.3e}" for e in errs))


def test_5_slope_fit(run_cache, report_line):
    ratios = {}
    for a in (10.0, 1.0, 0.1):
        rep = run_cache(0.02, a, 40)
        ratios[a] = slope_fit(refining(rep.records), predictions(rep.params), 20, 40).ratio
    ok = (abs(ratios[10.0] / 1.1541 - 1) <= 0.15 and abs(ratios[1.0] / 1.1436 - 1) <= 0.15
          and ratios[0.1] < 0.9)
    assert report_line(5, "slope ratios at hbar=0.02", ok,
                       ", ".join(f"a={a:g}: {r:.4f}" for a, r in ratios.items()))


def test_6_blowup_limit(run_cache, report_line):
    rep = run_cache(0.01, 10.0, 40)
    frame = estimate_blowup_time(rep.records, rep.params)
    ks, series = blowup_limit_series(rep.records, frame, rep.params)
    dev = np.abs(series[ks >= 30] / kappa(rep.params) - 1)
    ok = bool(np.all(dev <= 0.02))
    assert report_line(6, "(T - sigma_k)^{1/2} sup u within 2% of kappa for k >= 30", ok,
                       f"max deviation {dev.max():.3e}")


def test_7_lyapunov(run_cache, report_line):
    rep = run_cache(0.02, 1.0, 40)
    first = run_diagnostics(rep, classify=False).s[0]
    d = run_diagnostics(rep, s_from=first + 1.0, classify=False)
    L = d.lyapunov
    worst = float(np.max(L.defect / np.abs(L.J[1:])))
    ok = L.ok and L.non_increasing
    assert report_line(7, "J_a non-increasing, defect <= 1e-3 |J_a|", ok,
                       f"{len(L.s)} snapshots, worst defect/|J| = {worst:.2e}")


def test_8_oracles(report_line):
    res = {}
    # heat only, exact decaying mode
    errs = []
    for n in (10, 20, 40):
        x = np.linspace(-1, 1, 2 * n + 1)
        h = x[1] - x[0]
        tau = 0.25 * h * h
        steps = int(round(0.1 / tau))
        u = np.cos(0.5 * math.pi * x)
        u[0] = u[-1] = 0.0
        for _ in range(steps):
            u = explicit_update(u, 0.25, tau, 0.0, 0.0)
        errs.append(np.max(np.abs(u - math.exp(-0.25 * math.pi ** 2 * steps * tau) * np.cos(0.5 * math.pi * x))))
    res["heat"] = all(abs(e0 / e1 - 4) <= 0.5 for e0, e1 in zip(errs, errs[1:]))
    # ODE only, u' = u^3 from 4 blows up at 1/32
    def t_blow(tau):
        u, t = np.array([0.0, 4.0, 0.0]), 0.0
        while u[1] < 1e4:
            u = explicit_update(u, 0.0, tau, 0.0, 0.0, lambda v: v ** 3, diffusion=False)
            t += tau
        return t + 0.5 / u[1] ** 2
    e = [abs(t_blow(t) - 1 / 32) for t in (2e-5, 1e-5, 5e-6)]
    res["ode"] = all(abs(e0 / e1 - 2) <= 0.3 for e0, e1 in zip(e, e[1:]))
    # phi ODE
    P = ModelParams.build(3.0, 1.0, 1.0, 2, 0.6, 0.25, 0.02, 4.0)
    phi = solve_phi(1.0, 200.0, P)
    s = np.linspace(1.5, 199, 500)
    res["phi"] = np.max(phi.residual(s)) < 1e-8 and abs(phi.eta(100.0) * 100.0 - 1.0) <= 0.15
    # Hermite orthogonality
    q = WeightedQuadrature()
    b = HermiteBasis(8, q)
    G = (b.table * q.weights) @ b.table.T
    nrm = np.sqrt(np.outer(np.diag(G), np.diag(G)))
    res["hermite"] = np.max(np.abs(G / nrm - np.eye(9))) < 1e-10
    # exact case ii input
    target = -kappa(3.0) / 12
    traj = [(phi(t) + target / t * hermite_poly(2, q.nodes), t) for t in np.linspace(20, 80, 12)]
    c = classify_behavior(traj, phi, q, P)
    res["classify"] = c.behavior == "ii" and np.max(np.abs(c.scaled_c2 - (-0.0589255650988))) < 1e-10
    ok = all(res.values())
    assert report_line(8, "oracle suites", ok, ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in res.items()))


def test_9_determinism(tmp_path, report_line):
    cfg = tmp_path / "c.txt"
    cfg.write_text("hbar = 0.04\nphases = 40\n")
    for d in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    ok = (tmp_path / "a" / "phases.csv").read_bytes() == (tmp_path / "b" / "phases.csv").read_bytes()
    assert report_line(9, "byte-identical phases.csv", ok, "two cmd_run invocations")
