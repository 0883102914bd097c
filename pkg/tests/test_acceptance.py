"""Acceptance criteria 1-9, one printed PASS/FAIL line each.

Experiments run at spatial downsampling 8 (and 32 for the sampling study)
on the full trajectory with a single seed.
"""
import time
import warnings
from dataclasses import replace

import numpy as np
import pytest

from crossterm import invariant_ratio, variant_ratio
from tvrir.dtw import build_dtw_matrix
from tvrir.harness import ExperimentConfig, interior_mean, run_experiment
from tvrir.kalman import KalmanConfig, iterate, run_filter
from tvrir.scene import Room, Trajectory, enumerate_image_sources
from tvrir.transition import ReflectionTrack, build_invariant_matrix, build_variant_matrix

FS = 16000.0


def report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, detail


def means(curves):
    return {a: interior_mean(c) for a, c in curves.items()}


def fmt(m):
    return " ".join(f"{a}={v:.2f}" for a, v in m.items())


@pytest.fixture(scope="module")
def exp1_omega8():
    t = time.perf_counter()
    res = run_experiment(1, ExperimentConfig(omega=8))["exp1"]
    return res, time.perf_counter() - t


@pytest.fixture(scope="module")
def exp3_omega32():
    t = time.perf_counter()
    res = run_experiment(3, ExperimentConfig(omegas=(32,)))["exp3_omega32"]
    return res, time.perf_counter() - t


def test_criterion_1_toy_identity(toy, capsys):
    t = time.perf_counter()
    k = toy
    A = build_invariant_matrix(k["tracks"], k["eps"], k["Ts"], k["N"], k["L"]).entries
    A1 = build_variant_matrix(k["tracks"], 1, k["eps"], k["Ts"], k["N"]).entries
    A2 = build_variant_matrix(k["tracks"], 2, k["eps"], k["Ts"], k["N"]).entries
    end = build_invariant_matrix(
        [ReflectionTrack.from_endpoints(r.toa_start, r.toa_end, 2) for r in k["tracks"]],
        k["eps"], k["Ts"], k["N"], 2).entries
    d1 = np.abs(A @ A - A2 @ A1).max()
    d2 = np.abs(A @ A - end).max()
    dt = time.perf_counter() - t
    report(capsys, 1, d1 <= 1e-12 and d2 <= 1e-12 and dt < 1.0,
           f"max|A^2-A(2)A(1)|={d1:.1e} max|A^2-A_endpoints|={d2:.1e} ({dt:.3f} s)")


def test_criterion_2_dtw_toy(toy, capsys):
    t = time.perf_counter()
    k = toy
    A = build_invariant_matrix(k["tracks"], k["eps"], k["Ts"], k["N"], k["L"])
    Ad = build_dtw_matrix(k["h0"], k["hL"], k["L"], k["eps"], k["Ts"], k["N"])
    rows = A.active_rows
    d = np.abs(Ad.entries[rows] - A.entries[rows]).max()
    dt = time.perf_counter() - t
    report(capsys, 2, d <= 1e-9 and dt < 1.0, f"max diff on {rows.size} active rows = {d:.1e} ({dt:.3f} s)")


def test_criterion_3_cross_term(capsys):
    t = time.perf_counter()
    room = Room((4.5, 5.8, 2.9))
    imgs = enumerate_image_sources(room, (1.05, 2.98, 1.17), 1)
    step = 0.25 / FS
    worst_disjoint, n_disjoint = 0.0, 0
    for mic in [(1.94, 3.10, 1.09), (3.5, 1.2, 2.0), (0.6, 5.0, 0.5), (2.5, 4.0, 1.5)]:
        m0 = np.array(mic)
        m1 = m0 + step * np.array([0.6, -0.8, 0.0])
        for i in range(len(imgs)):
            for j in range(len(imgs)):
                if i == j:
                    continue
                r, disjoint = variant_ratio(imgs[i], imgs[j], m0, m1)
                if disjoint:
                    worst_disjoint = max(worst_disjoint, r)
                    n_disjoint += 1
    # location-invariant construction on a coarse trajectory
    traj = Trajectory((1.94, 3.10, 1.09), (1.94 + 15 * 8 * step, 3.10, 1.09), 16)
    worst_inv, n_inv = 0.0, 0
    for i, j in [(0, 1), (0, 3), (1, 4), (2, 6), (3, 5)]:
        r, disjoint = invariant_ratio([imgs[i], imgs[j]], traj)
        if disjoint:
            worst_inv = max(worst_inv, r)
            n_inv += 1
    # overlapping intervals: two images equidistant from a mic on the room's mid plane
    sym = enumerate_image_sources(room, (2.25, 1.0, 1.2), 1)
    pair = [im for im in sym if im.order == 1 and im.position[0] != 2.25]
    m0 = np.array([2.25, 4.0, 1.2])
    over_v, dis_v = variant_ratio(pair[0], pair[1], m0, m0 + np.array([0.0, 4 * step, 0.0]))
    over_i, dis_i = invariant_ratio(pair, Trajectory(m0, m0 + np.array([0.0, 0.01, 0.0]), 8))
    dt = time.perf_counter() - t
    ok = (n_disjoint > 0 and n_inv > 0 and worst_disjoint < 0.05 and worst_inv < 0.05
          and not dis_v and not dis_i and over_v > 0.05 and over_i > 0.05)
    report(capsys, 3, ok,
           f"disjoint: max |e|/peak variant={worst_disjoint:.4f} ({n_disjoint} pairs) "
           f"invariant={worst_inv:.4f} ({n_inv} pairs); overlapping: {over_v:.3f} / {over_i:.3f} ({dt:.1f} s)")


def test_criterion_4_experiment1(exp1_omega8, capsys):
    res, dt = exp1_omega8
    m = means(res)
    ok = (m["KF-A"] <= m["KF-alpha"] - 10 and m["KF-A_dtw"] <= m["KF-alpha"] - 8 and dt < 300)
    report(capsys, 4, ok, f"omega=8 interior means: {fmt(m)} ({dt:.0f} s)")


def test_criterion_5_experiment2(capsys):
    t = time.perf_counter()
    res = run_experiment(2, ExperimentConfig(omega=8))
    dt = time.perf_counter() - t
    m = means(res["exp2_snr-6"])
    li = [res[s]["LI-A"].tobytes() for s in ("exp2_snr6", "exp2_snr0", "exp2_snr-6")]
    improvement = m["KF-alpha"] - m["KF-A"]
    ok = improvement >= 2 and li[0] == li[1] == li[2] and dt < 900
    report(capsys, 5, ok,
           f"SNR -6 dB: {fmt(m)}; KF-A improvement {improvement:.2f} dB; "
           f"LI-A identical across SNRs: {li[0] == li[1] == li[2]} ({dt:.0f} s)")


def test_criterion_6_experiment3(exp1_omega8, exp3_omega32, capsys):
    # the omega=8 point of the sampling study is configured identically to experiment 1
    m8, m32 = means(exp1_omega8[0]), means(exp3_omega32[0])
    dt = exp3_omega32[1]
    refs = max(m32["LI-A"], m32["KF-alpha"])
    beats = m32["KF-A"] < refs and m32["KF-A_dtw"] < refs
    # both filters lose accuracy with sparser sampling and KF-A stays ahead
    monotone = (m32["KF-alpha"] >= m8["KF-alpha"] and m32["KF-A"] >= m8["KF-A"]
                and m8["KF-alpha"] > m8["KF-A"] and m32["KF-alpha"] > m32["KF-A"])
    gap8, gap32 = m8["KF-alpha"] - m8["KF-A"], m32["KF-alpha"] - m32["KF-A"]
    report(capsys, 6, beats and monotone and dt < 300,
           f"omega=32: {fmt(m32)}; KF-alpha {m8['KF-alpha']:.2f}->{m32['KF-alpha']:.2f}, "
           f"KF-A {m8['KF-A']:.2f}->{m32['KF-A']:.2f}; gap KF-alpha-KF-A {gap8:.2f}->{gap32:.2f} dB ({dt:.0f} s)")


def test_criterion_7_experiment4(capsys):
    t = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = run_experiment(4, ExperimentConfig(omega=8))["exp4"]
    dt = time.perf_counter() - t
    overlap_warned = any("overlapping reflection pairs" in str(w.message) for w in caught)
    m = means(res)
    improvement = m["KF-alpha"] - m["KF-A"]
    finite = all(np.all(np.isfinite(c)) for c in res.values())
    ok = improvement >= 3 and overlap_warned and finite and dt < 600
    report(capsys, 7, ok, f"second order, omega=8: {fmt(m)}; KF-A improvement {improvement:.2f} dB; "
                          f"overlap warning raised: {overlap_warned} ({dt:.0f} s)")


def test_criterion_8_kalman_units(toy, capsys):
    # scalar recursion against the closed form written out by hand
    h0, a, q, p0, r = 0.3, 0.95, 1e-3, 1e-6, 0.01
    xs, ys = [0.0, 0.7, -1.3, 0.4], [0.0, 0.2, -0.5, 0.1]
    states = list(iterate(np.array([h0]), a, np.array(ys), np.array(xs)[:, None], KalmanConfig(q, r, p0)))
    h, p, err = h0, p0, 0.0
    for s, x, y in zip(states[1:], xs[1:], ys[1:]):
        hp, pp = a * h, a * a * p + q
        kg = pp * x / (x * x * pp + r)
        h, p = hp + kg * (y - x * hp), (1 - kg * x) * pp
        err = max(err, abs(s.h_hat[0] - h), abs(s.P[0, 0] - p))
    # zero input and output: the Kalman filter reduces to interpolation
    A = build_invariant_matrix(toy["tracks"], toy["eps"], toy["Ts"], toy["N"], toy["L"])
    L, N = 8, toy["N"]
    cfg = KalmanConfig(1e-3, 0.0, 1e-6)
    kf = run_filter("KF-A", A, np.zeros(L), np.zeros((L, N)), cfg, toy["h0"])
    li = run_filter("LI-A", A, np.zeros(L), np.zeros((L, N)), cfg, toy["h0"])
    same = all(np.array_equal(u, v) for u, v in zip(kf, li))
    # covariance symmetry over 1e4 steps
    rng = np.random.default_rng(0)
    n = 8
    M = 0.99 * np.eye(n) + 0.01 * rng.standard_normal((n, n))
    asym = 0.0
    for s in iterate(np.zeros(n), M, rng.standard_normal(10_000), rng.standard_normal((10_000, n)),
                     KalmanConfig(1e-3, 1e-2, 1e-6)):
        asym = max(asym, float(np.abs(s.P - s.P.T).max()))
    report(capsys, 8, err <= 1e-12 and same and asym <= 1e-9,
           f"scalar closed-form err={err:.1e}; KF-A(x=0,y=0)==LI-A: {same}; max|P-P^T|={asym:.1e}")


def test_criterion_9_determinism(tmp_path, capsys):
    cfg = ExperimentConfig(omega=8, scale=0.1, seeds=(3,), omegas=(8, 32), snrs=(0.0,))
    identical = []
    for exp_id in (1, 2, 3, 4):
        run_experiment(exp_id, cfg, tmp_path / "a")
        run_experiment(exp_id, replace(cfg), tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    for name in files:
        identical.append((tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes())
    report(capsys, 9, len(files) == 5 and all(identical),
           f"{sum(identical)}/{len(files)} experiment CSVs byte-identical on rerun")
