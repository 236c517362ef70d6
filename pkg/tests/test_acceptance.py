"""Acceptance criteria, one test and one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also collected in the terminal summary.
"""
import csv
import io
import time

import numpy as np
import pytest

import oracles
import properties
from su2rb.analysis import analyze, best_ell, qubit_frame_complexity, variance_table_j, variance_table_k
from su2rb.cli import CampaignConfig, matrices_csv, predict_csv, run_campaign
from su2rb.noise import NoiseModel, SpamModel
from su2rb.protocols import ExperimentPlan, estimate, synthesis_weights
from su2rb.spinrep import haar_quaternions
from su2rb.superop import f_matrix, m_matrix, rotation_superops
from su2rb.wigner import HalfInt

SEVEN_HALVES = HalfInt(7)
LENGTHS = (1, 2, 4, 8, 16, 32, 64)


def _campaign(protocol, noise, seed=0, spam=None, n=10_000):
    plan = ExperimentPlan(SEVEN_HALVES, protocol, LENGTHS, n, noise=noise, seed=seed,
                          spam=spam or SpamModel())
    return analyze(estimate(plan).decays())


def _predict_row(noise, gamma):
    rows = list(csv.reader(io.StringIO(predict_csv(7, noise, gamma))))
    return [float(r[2]) for r in rows[1:9]]


def test_criterion_01_m_matrix(acceptance_report):
    t0 = time.perf_counter()
    rows = list(csv.reader(io.StringIO(matrices_csv(7))))
    m = np.array([[float(v) for v in r[2:]] for r in rows[1:] if r[0] == "M"])
    dt = time.perf_counter() - t0
    err = np.abs(m - oracles.M_SEVEN_HALVES).max()
    ok = err < 1e-12 and dt < 1.0
    acceptance_report("1 M matrix j=7/2", ok, f"max |dM| = {err:.1e} (tol 1e-12), {dt:.2f} s (limit 1 s)")
    assert ok


def test_criterion_02_f_matrix(acceptance_report):
    t0 = time.perf_counter()
    err = np.abs(f_matrix(SEVEN_HALVES) - np.array(oracles.F_SEVEN_HALVES, dtype=float)).max()
    err_tr = max(np.abs(f_matrix(HalfInt(tj), normalized=False) - oracles.f_matrix_from_traces(tj)).max()
                 for tj in (1, 2, 3, 4))
    dt = time.perf_counter() - t0
    ok = err < 1e-12 and err_tr < 1e-10 and dt < 10
    acceptance_report("2 F matrix", ok, f"j=7/2 max |dF| = {err:.1e} (tol 1e-12); 6-j vs trace form "
                      f"j<=2 max {err_tr:.1e} (tol 1e-10); {dt:.2f} s (limit 10 s)")
    assert ok


def test_criterion_03_variance_tables(acceptance_report):
    t0 = time.perf_counter()
    tk = variance_table_k()
    tj = variance_table_j()
    err_k = np.abs(tk - np.array(oracles.VARIANCE_WITH_K)).max()
    err_j = np.abs(tj - np.array(oracles.VARIANCE_WITH_J)).max()
    ells = all(best_ell(p, SEVEN_HALVES, k)[0] == oracles.BEST_ELL_WITH_K[k]
               for k in range(1, 8) for p in ("chirb", "r1rb"))
    dt = time.perf_counter() - t0
    ratio = tk[7, 0] / tk[7, 3]
    ok = err_k < 1e-3 and err_j < 1e-3 and ells and dt < 10
    acceptance_report("3 zero-noise variance tables", ok,
                      f"max dev k-table {err_k:.1e}, j-table {err_j:.1e} (tol 1e-3); best l matches: {ells}; "
                      f"chirb/ssr1rb at k=7 = {ratio:.1f}; {dt:.2f} s (limit 10 s)")
    assert ok


def test_criterion_04_ssrb_degeneracy(acceptance_report):
    t0 = time.perf_counter()
    m = m_matrix(SEVEN_HALVES)
    dev, var = 0.0, 0.0
    for n in (1, 10, 1000):
        table = estimate(ExperimentPlan(SEVEN_HALVES, "ssrb", LENGTHS, n, seed=0))
        for s in LENGTHS:
            dev = max(dev, np.abs(m @ table.matrix(s) @ m.T - np.eye(8)).max())
            if n > 1:
                var = max(var, np.nanmax(table.estimator_variance(s)))
    dt = time.perf_counter() - t0
    ok = dev < 1e-12 and var < 1e-20 and dt < 30
    acceptance_report("4 SSRB zero-noise degeneracy", ok,
                      f"max |M P M^T - I| = {dev:.1e} (tol 1e-12), max variance {var:.1e}, N in {{1,10,1000}}, "
                      f"{dt:.1f} s (limit 30 s)")
    assert ok


@pytest.mark.slow
def test_criterion_05_monte_carlo_variance(acceptance_report):
    t0 = time.perf_counter()
    parts, ok = [], True
    for col, proto in ((3, "ssr1rb"), (2, "sschirb")):
        plan = ExperimentPlan(SEVEN_HALVES, proto, (1,), 100_000, shots=1, seed=0, circuits="independent")
        var = estimate(plan).estimator_variance(1)
        for k in (1, 4, 7):
            want = oracles.VARIANCE_WITH_K[k][col]
            rel = var[k] / want - 1
            ok &= abs(rel) < 0.05
            parts.append(f"{proto} k={k}: {var[k]:.4g} vs {want:g} ({100 * rel:+.1f}%)")
    dt = time.perf_counter() - t0
    acceptance_report("5 Monte Carlo variance (N=1e5, tol 5%)", ok, "; ".join(parts) + f"; {dt:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_06_coherent_campaign(acceptance_report, tmp_path):
    t0 = time.perf_counter()
    target = oracles.COHERENT_P[2]
    parts, ok = [], True
    cfg = CampaignConfig.from_dict({"twice_j": 7, "protocol": "sschirb", "gamma": 0.04, "phi": 0.0,
                                    "meas_kind": "ideal"})
    _, res_chi = run_campaign(cfg, tmp_path)
    res_r1 = _campaign("ssr1rb", NoiseModel("coherent_jz2", 0.04))
    for name, res in (("sschirb", res_chi), ("ssr1rb", res_r1)):
        p, s = res.p_raw, res.sigma_p
        good = abs(p[2] - target) < 3 * s[2] and abs(p[1]) < 3 * s[1] and abs(p[3]) < 3 * s[3]
        ok &= good
        parts.append(f"{name} p2 = {p[2]:.5f} +- {s[2]:.5f} (z {(p[2] - target) / s[2]:+.2f}), "
                     f"p1 z {p[1] / s[1]:+.2f}, p3 z {p[3] / s[3]:+.2f}")
    row = _predict_row("coherent_jz2", 0.04)
    row_ok = all(oracles.within_sig_figs(g, w, units=0.5) for g, w in zip(row, oracles.COHERENT_P))
    ok &= row_ok
    parts.append(f"predict row to 4 s.f.: {row_ok}")
    dt = time.perf_counter() - t0
    acceptance_report("6 coherent campaign (3 sigma_p)", ok, "; ".join(parts) + f"; {dt:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_07_dephasing_campaign(acceptance_report):
    t0 = time.perf_counter()
    target = oracles.DEPHASING_P[1]
    parts, ok = [], True
    for proto in ("sschirb", "ssr1rb"):
        res = _campaign(proto, NoiseModel("dephasing", 0.01))
        p, s = res.p_raw[1], res.sigma_p[1]
        ok &= abs(p - target) < 3 * s
        parts.append(f"{proto} p1 = {p:.5f} +- {s:.5f} (z {(p - target) / s:+.2f})")
    row = _predict_row("dephasing", 0.01)
    row_ok = all(oracles.within_sig_figs(g, w) for g, w in zip(row, oracles.DEPHASING_P))
    ok &= row_ok
    parts.append(f"predict row within one unit of the 4th figure: {row_ok}")
    dt = time.perf_counter() - t0
    acceptance_report("7 dephasing campaign (3 sigma_p)", ok, "; ".join(parts) + f"; {dt:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_08_spam_robustness(acceptance_report):
    t0 = time.perf_counter()
    target = oracles.COHERENT_P[2]
    spam = SpamModel(phi=0.2, meas_kind="permutation")
    noise = NoiseModel("coherent_jz2", 0.04)
    z = {}
    for proto in ("ssrb", "sschirb", "ssr1rb"):
        res = _campaign(proto, noise, spam=spam)
        z[proto] = (res.p_raw[2] - target) / res.sigma_p[2]
    ok = abs(z["sschirb"]) < 3 and abs(z["ssr1rb"]) < 3 and abs(z["ssrb"]) > 3
    dt = time.perf_counter() - t0
    acceptance_report("8 SPAM robustness (phi=0.2, permuted POVM, seed 0)", ok,
                      ", ".join(f"{p} p2 z {v:+.2f}" for p, v in z.items()) + f"; {dt:.0f} s")
    assert ok


def test_criterion_09_frame_complexity(acceptance_report):
    from fractions import Fraction as F
    want = {"clifford_char": (24, 9, F(81, 16)), "pauli_char": (4, 1, 1), "z2_char": (2, 1, 1),
            "pauli_frame_full": (4, 3, F(9, 4)), "nonpauli_frame_full": (12, 9, 9)}
    ok = True
    for scheme, exp in want.items():
        c = qubit_frame_complexity(scheme)
        ok &= (c.n_group, c.uniform_metric, c.optimal_metric) == exp
    for n in range(1, 7):
        c = qubit_frame_complexity("nqubit_full", n)
        ok &= (c.n_group, c.uniform_metric, c.optimal_metric) == (4 ** n, 4 ** n - 1, 4 * (1 - F(1, 4 ** n)) ** 2)
        c = qubit_frame_complexity("nqubit_rank1", n)
        ok &= (c.n_group, c.uniform_metric, c.optimal_metric) == (4 ** n, 1, 1)
    ptms = oracles.clifford_ptms()
    coeffs = [np.trace(r[1:, 1:]) / 8 for r in ptms]
    ok &= bool(np.allclose(sum(c * r for c, r in zip(coeffs, ptms)), np.diag([0, 1, 1, 1])))
    acceptance_report("9 qubit frame complexity", ok,
                      "five single-qubit schemes and n-qubit schemes n=1..6 exact; Clifford PTM synthesis checked")
    assert ok


def test_criterion_10_property_suite(acceptance_report):
    t0 = time.perf_counter()
    failures = []
    worst = 0.0
    for check in properties.ALL_CHECKS:
        try:
            worst = max(worst, check())
        except AssertionError as exc:
            failures.append(f"{check.__name__}: {exc}")
    dt = time.perf_counter() - t0
    ok = not failures and dt < 60
    acceptance_report("10 special-function properties (j<=4)", ok,
                      f"{len(properties.ALL_CHECKS)} identity families, worst deviation {worst:.1e}, "
                      f"{len(failures)} failures, {dt:.1f} s (limit 60 s)")
    assert ok, failures


def test_criterion_11_projector_synthesis(acceptance_report):
    tj = 3
    d2 = (tj + 1) ** 2
    ns = (1000, 4000, 16000)
    repeats = 24
    rng = np.random.default_rng(0)
    targets = {"character": [], "rank1": []}
    for k in range(tj + 1):
        pi = np.zeros(d2)
        pi[k * k:(k + 1) ** 2] = 1
        q = np.zeros(d2)
        q[k * k + k] = 1
        targets["character"].append(np.diag(pi))
        targets["rank1"].append(np.diag(q))
    errs = {kind: np.zeros((len(ns), tj + 1)) for kind in targets}
    for a, n in enumerate(ns):
        for _ in range(repeats):
            quats = haar_quaternions(rng, n)
            r = rotation_superops(HalfInt(tj), quats)
            for kind in targets:
                w = synthesis_weights(tj, quats, kind)
                avg = np.einsum("nk,nab->kab", w, r) / n
                for k in range(tj + 1):
                    errs[kind][a, k] += np.linalg.norm(avg[k] - targets[kind][k]) ** 2
    parts, ok = [], True
    for kind, e in errs.items():
        rms = np.sqrt(e / repeats)
        for k in range(1, tj + 1):
            slope = np.polyfit(np.log(ns), np.log(rms[:, k]), 1)[0]
            ok &= abs(slope + 0.5) < 0.1
            parts.append(f"{kind} k={k} slope {slope:+.3f}")
    acceptance_report("11 projector synthesis O(N^-1/2) (j=3/2, slope -0.5 +- 0.1)", ok, ", ".join(parts))
    assert ok
