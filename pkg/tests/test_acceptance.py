"""Acceptance criteria 1-8.  Each test prints one PASS/FAIL line, repeated in the terminal summary.

Monte Carlo criteria 3-5 run the FPA with MaxIter=100 so the whole file
finishes in roughly ten minutes on one core.
"""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from fpacdma import channel as ch
from fpacdma import experiments as ex
from fpacdma.baselines import decorrelator_detect, matched_filter_detect, ml_exhaustive, mmse_detect
from fpacdma.fpa import FpaConfig, fpa_detect, levy_step, mantegna_sigma, pc_update_due
from fpacdma.spreading import correlation_matrix, cyclic_cross_correlation, generate_gold_family
from fpacdma.stats import chi_square_sf, friedman, kruskal_wallis, reported_matrix

MC_FPA = FpaConfig(max_iter=100)


def report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def test_criterion_1_single_user_calibration():
    cfg = ex.ExperimentConfig(exp_id="acc1", detectors=("mf",), axis_values=(6.0, 7.0, 8.0), runs=10,
                              frame_length=1000, min_bits=5 * 10**6, num_users=1, fixed_fading=1.0)
    t0 = time.perf_counter()
    recs = ex.run_ber_sweep(cfg)
    per_point = (time.perf_counter() - t0) / 3
    rel = {r.axis_value: r.ber_mean / ex.single_user_ber(r.axis_value) - 1.0 for r in recs}
    bits = min(r.bits * r.runs for r in recs)
    ok = all(abs(e) < 0.15 for e in rel.values()) and bits >= 5 * 10**6 and per_point < 120
    detail = ", ".join(f"{s:g} dB {100 * e:+.1f}%" for s, e in rel.items())
    assert report(1, ok, f"MF vs Q(sqrt(2 SNR)) {detail}; {bits} bits/point; {per_point:.1f} s/point")


def test_criterion_2_ml_oracle_equivalence():
    R = correlation_matrix(generate_gold_family(5), 4).R
    E = np.ones(4)
    cfg = FpaConfig(max_iter=500, num_flowers=25)
    t0 = time.perf_counter()
    hits = {}
    for label, noise_var in (("noiseless", 0.0), ("10 dB", 0.05)):
        r = np.random.default_rng(2000 if noise_var == 0 else 2010)
        count = 0
        for _ in range(100):
            a = np.clip(r.normal(0.8, 0.1, 4), 0.1, 1.5)
            d = np.where(r.random(4) < 0.5, -1.0, 1.0)
            L = np.linalg.cholesky(R)
            z = R @ (a * d) + math.sqrt(noise_var) * (L @ r.standard_normal(4))
            _, oracle = ml_exhaustive(z, R, E, a, return_fitness=True)
            res, _ = fpa_detect(z, R, E, cfg, rng=r, known_fading=a)
            count += res.best_fitness >= oracle - 1e-9
        hits[label] = int(count)
    secs = time.perf_counter() - t0
    ok = all(h >= 95 for h in hits.values()) and secs < 60
    assert report(2, ok, f"FPA reaches exhaustive-ML fitness {hits} of 100; {secs:.1f} s")


def test_criterion_3_ber_trend():
    cfg = ex.ExperimentConfig(exp_id="acc3", detectors=("fpa", "mmse", "mf"), axis_values=(7, 8, 9, 10, 11),
                              runs=50, min_bits=10**5, num_users=10, nearfar_db=4.0, fpa=MC_FPA)
    t0 = time.perf_counter()
    recs = ex.run_ber_sweep(cfg)
    secs = time.perf_counter() - t0
    mean = {(r.axis_value, r.detector): r.ber_mean for r in recs}
    band8 = 0.0085 / 3 <= mean[(8.0, "fpa")] <= 0.0085 * 3
    band10 = 0.0017 / 3 <= mean[(10.0, "fpa")] <= 0.0017 * 3
    order = all(mean[(s, "fpa")] < mean[(s, "mmse")] < mean[(s, "mf")] for s in (7.0, 8.0, 9.0, 10.0, 11.0))
    bits = min(r.bits * r.runs for r in recs)
    ok = band8 and band10 and order and bits >= 10**5 and secs < 1800
    table = "; ".join(
        f"{s:g} dB fpa {mean[(s, 'fpa')]:.2e} mmse {mean[(s, 'mmse')]:.2e} mf {mean[(s, 'mf')]:.2e}"
        for s in (7.0, 8.0, 9.0, 10.0, 11.0)
    )
    assert report(3, ok, f"(a) 8 dB {'in' if band8 else 'out of'} band, 10 dB {'in' if band10 else 'out of'} band; "
                         f"(b) ordering {'holds' if order else 'broken'}; {table}; {secs:.0f} s")


def test_criterion_4_near_far():
    cfg = ex.ExperimentConfig(exp_id="acc4", detectors=("fpa", "mf", "decorrelator"), axis_values=(0.0, 10.0),
                              runs=10, min_bits=5 * 10**4, num_users=4, snr_db=10.0, fpa=MC_FPA)
    recs = ex.run_nearfar(cfg)
    b = {(r.axis_value, r.detector): r.ber_mean for r in recs}
    ratio = {d: b[(10.0, d)] / b[(0.0, d)] for d in ("fpa", "mf", "decorrelator")}
    ok = ratio["mf"] >= 2 * ratio["fpa"] and 0.5 < ratio["decorrelator"] < 2.0
    detail = ", ".join(f"{d} x{v:.2f}" for d, v in ratio.items())
    assert report(4, ok, f"BER ratio 10 dB / 0 dB: {detail}")


def test_criterion_5_channel_mse():
    cfg = ex.ExperimentConfig(exp_id="acc5", detectors=("fpa",), runs=75, num_users=8, nearfar_db=0.0,
                              snr_db=12.0, fpa=MC_FPA)
    tr = ex.channel_mse_trajectories(cfg)["fpa"]
    floor = ex.channel_mse_trajectories(ex.noiseless_frozen_config(cfg))["fpa"].final
    plateau_ok = 20 <= tr.plateau_index <= 60
    floor_ok = tr.final < 10 * floor
    report(5, plateau_ok and floor_ok,
           f"plateau at symbol {tr.plateau_index} ({'in' if plateau_ok else 'outside'} [20, 60]); "
           f"final MSE {tr.final:.2e} vs 10x noiseless-frozen floor {10 * floor:.2e} ({'below' if floor_ok else 'above'})")
    assert plateau_ok
    assert floor_ok


def test_criterion_6_significance_machinery():
    h, _ = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    names = ("FPA", "Std-GA", "TS", "SQ")
    ranks = dict(zip(names, friedman(reported_matrix(names)).average_ranks))
    p = chi_square_sf(7.815, 3)
    ok = (abs(h - 7.2) <= 1e-9 and min(ranks, key=ranks.get) == "FPA" and max(ranks, key=ranks.get) == "Std-GA"
          and ranks["FPA"] <= 1.7 and abs(p - 0.05) <= 5e-4)
    rank_txt = ", ".join(f"{k} {v:.3f}" for k, v in ranks.items())
    assert report(6, ok, f"H={h:.12g}; Friedman ranks {rank_txt}; chi2_sf(7.815, 3)={p:.5f}")


def test_criterion_7_invariants(tmp_path):
    t0 = time.perf_counter()
    failures = []
    rng = np.random.default_rng(77)
    gold = generate_gold_family(5)

    R10 = correlation_matrix(gold, 10).R
    cfg = FpaConfig(max_iter=400)
    for _ in range(5):
        z = R10 @ (rng.uniform(0.5, 1.2, 10) * np.where(rng.random(10) < 0.5, -1, 1)) + 0.3 * rng.standard_normal(10)
        res, _ = fpa_detect(z, R10, np.ones(10), cfg, rng=rng)
        if np.any(np.diff(res.fitness_trace) < 0):
            failures.append("elitism")
        if np.any(res.entropy_trace < 0) or np.any(res.entropy_trace > math.log(25) + 1e-9):
            failures.append("entropy range")
        if np.any(res.pc_trace < 0.05) or np.any(res.pc_trace > 0.95):
            failures.append("P_c range")
        steps = np.nonzero(np.diff(np.concatenate([[cfg.p_change0], res.pc_trace])))[0] + 1
        if not all(pc_update_due(int(t), cfg.max_iter) for t in steps):
            failures.append("P_c grid")

    chips = gold.chips
    values = set()
    for i, j in itertools.combinations(range(gold.family_size), 2):
        values.update(cyclic_cross_correlation(chips[i], chips[j]).astype(int).tolist())
    if values != {-9, -1, 7}:
        failures.append("Gold three-valued")

    worst = 0.0
    for _ in range(100):
        u = int(rng.integers(2, 12))
        p = ch.ChannelParams(u, rng.uniform(0.2, 8.0, u), 0.0, frame_length=25)
        obs = ch.simulate_frame(gold, p, rng)
        if not np.array_equal(decorrelator_detect(obs.z, obs.R), obs.true_symbols):
            failures.append("decorrelator exactness")
            break
        v = obs.true_symbols * obs.true_fading * np.sqrt(p.bit_energies)
        worst = max(worst, float(np.max(np.abs(obs.z - v @ obs.R))))
    if worst >= 1e-10:
        failures.append(f"matched-filter identity {worst:.1e}")

    R8 = correlation_matrix(gold, 8).R
    E = rng.uniform(0.5, 4.0, 8)
    z = rng.normal(size=(500, 8))
    if not np.array_equal(mmse_detect(z, R8, 1e-12, E), decorrelator_detect(z, R8)):
        failures.append("MMSE -> decorrelator")
    if not np.array_equal(mmse_detect(z, R8, 1e12, E), matched_filter_detect(z)):
        failures.append("MMSE -> MF")

    small = ex.ExperimentConfig(exp_id="acc7", detectors=("fpa", "ga", "mf", "mmse"), axis_values=(8.0, 11.0),
                                runs=3, frame_length=40, min_bits=240, num_users=6, fpa=FpaConfig(max_iter=20))
    ex.write_records_csv(ex.run_experiment(small), tmp_path / "a.csv", record_seconds=False)
    ex.write_records_csv(ex.run_experiment(small), tmp_path / "b.csv", record_seconds=False)
    if (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes():
        failures.append("byte-identical rerun")

    secs = time.perf_counter() - t0
    ok = not failures and secs < 300
    assert report(7, ok, f"invariants {'all hold' if not failures else 'violated: ' + ', '.join(failures)}; "
                         f"max|S^T r - R A E^1/2 d| = {worst:.1e}; {secs:.1f} s")


def test_criterion_8_levy_sampler():
    s = np.abs(levy_step(10**5, 1.0, np.random.default_rng(88)))
    tail = np.sort(s)[-1000:]
    hill = len(tail) / float(np.sum(np.log(tail / tail[0])))
    sigma = mantegna_sigma(1.0)
    ok = abs(hill - 1.0) <= 0.15 and sigma == 1.0
    assert report(8, ok, f"tail exponent {hill:.3f} over 1e5 samples; sigma(1) = {sigma!r}")
