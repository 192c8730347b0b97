"""Exit criteria, run at desk scale.

Desk scale: 800 m torus, 5000 slots per realization (10% warm-up), 200
realizations, default hyperparameters (delta 0.1, rho = theta, eta_sharp 0.1,
eta_S = eta_D = 2/3). Gaps are judged against the sum of the two 95% CI
half-widths. Each test records a PASS/FAIL line shown in the terminal summary.
"""
import math
import random

import mpmath
import numpy as np
import pytest

from acceptance_log import record
from test_channel import oracle_sir, random_instance
from test_geometry import ppp_chi_square_pvalue
from tddsim.channel import ChannelParams, compute_sir, draw_fade
from tddsim.cli import run_cli
from tddsim.engine import Realization, SimConfig, run_experiment
from tddsim.geometry import Region, sample_ppp
from tddsim.scheduling import Direction, MwuState, Scheme, mwu_update

DESK = SimConfig(side_length=800.0, horizon=5000, realizations=200, master_seed=1)
K_SWEEP = (1, 2, 3, 5, 8)
SCHEMES = (Scheme.STDD, Scheme.DTDD_FIXED, Scheme.DTDD_MWU)
SHORT = {Scheme.STDD: "S-TDD", Scheme.DTDD_FIXED: "D-TDD", Scheme.DTDD_MWU: "MWU"}


@pytest.fixture(scope="module")
def k_sweep():
    """``{(scheme, k_s): AggregateMetrics}`` at theta = 0 dB; k_s = 3 is the A1-A3 point."""
    return {(s, k): run_experiment(DESK.replace(scheme=s, k_s=k)) for s in SCHEMES for k in K_SWEEP}


def thr(agg, direction):
    e = agg.direction(direction).throughput
    return e.mean, e.ci95


def beats(a, b):
    """``a`` exceeds ``b`` by more than the summed CI half-widths."""
    return a[0] - b[0] > a[1] + b[1]


def fmt(est):
    return f"{est[0]:.4f}±{est[1]:.4f}"


def point(k_sweep, direction, k=3):
    return {s: thr(k_sweep[(s, k)], direction) for s in SCHEMES}


def test_a1_downlink_ordering(k_sweep):
    t = point(k_sweep, "DL")
    ok = beats(t[Scheme.DTDD_MWU], t[Scheme.DTDD_FIXED]) and beats(t[Scheme.DTDD_FIXED], t[Scheme.STDD])
    detail = ", ".join(f"{SHORT[s]} {fmt(t[s])}" for s in SCHEMES)
    assert record("A1 DL throughput MWU > D-TDD > S-TDD", ok, detail), detail


def test_a2_uplink_ordering(k_sweep):
    t = point(k_sweep, "UL")
    mwu, stdd, fixed = t[Scheme.DTDD_MWU], t[Scheme.STDD], t[Scheme.DTDD_FIXED]
    mwu_ok = mwu[0] >= stdd[0] - (mwu[1] + stdd[1])  # CI overlap allowed
    ok = mwu_ok and beats(stdd, fixed)
    detail = ", ".join(f"{SHORT[s]} {fmt(t[s])}" for s in SCHEMES)
    assert record("A2 UL throughput MWU >= S-TDD > D-TDD", ok, detail), detail


def test_a3_gain_magnitudes(k_sweep):
    dl, ul = point(k_sweep, "DL"), point(k_sweep, "UL")
    r_dl = dl[Scheme.DTDD_MWU][0] / dl[Scheme.DTDD_FIXED][0]
    r_ul = ul[Scheme.DTDD_MWU][0] / ul[Scheme.DTDD_FIXED][0]
    ok = r_dl >= 1.5 and r_ul >= 2.0
    detail = f"MWU/D-TDD ratio DL {r_dl:.3f} (need >= 1.5), UL {r_ul:.3f} (need >= 2.0)"
    assert record("A3 MWU gain over fixed D-TDD", ok, detail), detail


def test_a4_downlink_vs_k_s(k_sweep):
    problems = []
    for s in SCHEMES:
        series = [thr(k_sweep[(s, k)], "DL") for k in K_SWEEP]
        for (k0, a), (k1, b) in zip(zip(K_SWEEP, series), zip(K_SWEEP[1:], series[1:])):
            if not beats(a, b):
                problems.append(f"{SHORT[s]} not decreasing K_s {k0}->{k1} ({fmt(a)} vs {fmt(b)})")
    for k in K_SWEEP:
        t = point(k_sweep, "DL", k)
        for other in (Scheme.STDD, Scheme.DTDD_FIXED):
            if not beats(t[Scheme.DTDD_MWU], t[other]):
                problems.append(f"MWU not above {SHORT[other]} at K_s={k} "
                                f"({fmt(t[Scheme.DTDD_MWU])} vs {fmt(t[other])})")
    curves = "; ".join(
        f"{SHORT[s]} " + "/".join(f"{thr(k_sweep[(s, k)], 'DL')[0]:.4f}" for k in K_SWEEP) for s in SCHEMES)
    detail = f"DL over K_s {K_SWEEP}: {curves}" + (f" | {len(problems)} violations: " + "; ".join(problems[:4]) if problems else "")
    assert record("A4 DL throughput falls with K_s, MWU on top", not problems, detail), detail


def test_a5_uplink_empty_queue(k_sweep):
    problems = []
    rows = []
    for k in K_SWEEP:
        pe = {s: k_sweep[(s, k)].ul.pr_empty_queue.mean for s in SCHEMES}
        rows.append(f"K_s={k}: " + "/".join(f"{pe[s]:.3f}" for s in SCHEMES))
        if not all(pe[Scheme.DTDD_MWU] > pe[o] for o in (Scheme.STDD, Scheme.DTDD_FIXED)):
            problems.append(k)
    detail = "UL Pr(Q=0) S-TDD/D-TDD/MWU " + "; ".join(rows)
    ok = not problems
    assert record("A5 UL Pr(Q=0) MWU above both baselines", ok, detail), detail


def test_p1_conservation():
    r = random.Random(101)
    events = 0
    cfgs = 0
    while events < 1_000_000:
        cfg = SimConfig(side_length=r.uniform(200, 400), horizon=r.randint(200, 600),
                        xi_ul=r.random(), xi_dl=r.random(), k_s=r.randint(1, 6),
                        scheme=r.choice(list(Scheme)), theta_db=r.uniform(-10, 10))
        real = Realization(cfg, r.getrandbits(63))
        n_queues = 2 * real.n_links
        if n_queues == 0:
            continue
        for _ in range(cfg.horizon):
            real.run_slot()
            real.check_conservation()
        events += n_queues * cfg.horizon
        cfgs += 1
    detail = f"{events} queue-slot events over {cfgs} random configs"
    assert record("P1 packet conservation", True, detail)


def test_p2_sir_oracle():
    r = random.Random(202)
    params, region = ChannelParams(alpha=3.8), Region(500.0)
    worst = 0.0
    for _ in range(10_000):
        rx, d, i = random_instance(r)
        got = compute_sir(rx, d, i, params, region).value
        want = oracle_sir(rx, d, i, 3.8, 500.0)
        worst = max(worst, abs(got - want) / abs(want))
    ok = worst <= 1e-9
    detail = f"10000 instances, worst relative error {worst:.2e} (tol 1e-9)"
    assert record("P2 SIR vs brute-force oracle", ok, detail), detail


def test_p3_mwu_renormalization_invariance():
    mpmath.mp.dps = 60
    rng = np.random.default_rng(303)
    worst, w_min, w_max = 0.0, math.inf, 0.0
    for _ in range(10):
        s = MwuState()
        wu = wd = mpmath.mpf(1)
        delta = float(rng.uniform(0.01, 0.5))
        rho = float(rng.uniform(0.1, 10.0))
        for _ in range(1000):
            dl = bool(rng.random() < 0.5)
            m = float(rng.uniform(-rho, rho))
            s = mwu_update(s, Direction.DL if dl else Direction.UL, m, delta, rho)
            x = mpmath.mpf(m) / rho
            f = (1 - mpmath.mpf(delta)) ** x if x >= 0 else (1 + mpmath.mpf(delta)) ** (-x)
            if dl:
                wd *= f
            else:
                wu *= f
            worst = max(worst, abs(s.eta - float(wd / (wu + wd))))
            w_min = min(w_min, s.w_ul, s.w_dl)
            w_max = max(w_max, s.w_ul, s.w_dl)
    ok = worst <= 1e-12 and w_min > 0 and w_max <= 2
    detail = f"10 x 1000 steps, max |eta diff| {worst:.2e} (tol 1e-12), weights in [{w_min:.3g}, {w_max:.3g}]"
    assert record("P3 MWU renormalization invariance", ok, detail), detail


def test_p4_workers_do_not_change_csv(tmp_path):
    cfg = tmp_path / "p4.cfg"
    cfg.write_text("side_length = 400\nhorizon = 600\n")
    outs = []
    for threads in (1, 4):
        out = tmp_path / f"p4_{threads}.csv"
        code = run_cli(["--config", str(cfg), "--schemes", "all", "--realizations", "8",
                        "--seed", "99", "--threads", str(threads), "--out", str(out)])
        assert code == 0
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1]
    assert record("P4 1 vs 4 workers byte-identical CSV", ok, f"{len(outs[0])} bytes each"), "CSV differs"


def test_p5_distributions():
    rng = np.random.default_rng(505)
    counts = np.array([len(sample_ppp(1e-3, Region(100), rng)) for _ in range(10_000)])
    pval = ppp_chi_square_pvalue(counts, 10.0)
    fades = draw_fade(rng, 100_000)
    fade_z = abs(fades.mean() - 1) / (1 / math.sqrt(fades.size))

    cfg = SimConfig(side_length=300, horizon=100_000, scheme="stdd", xi_ul=0.2, xi_dl=0.2)
    real = Realization(cfg, 5)
    mixed = 0
    active_slots = 0
    for _ in range(cfg.horizon):
        out = real.run_slot()
        if out.is_dl.size:
            active_slots += 1
            mixed += not (out.is_dl.all() or not out.is_dl.any())
    ok = pval > 0.01 and fade_z < 3 and mixed == 0 and active_slots > 0
    detail = (f"PPP chi-square p={pval:.3f} (>0.01), fade mean z={fade_z:.2f} (<3), "
              f"S-TDD mixed-direction slots {mixed}/{active_slots} active of {cfg.horizon}")
    assert record("P5 distributional checks", ok, detail), detail
