"""End-to-end acceptance gate: one PASS/FAIL line per criterion.

Stochastic criteria use 100 seeded runs per setting. Runs are cached per
setting so criteria that share a setting reuse it. The full module takes
several minutes on one core.
"""

from __future__ import annotations

import functools
import os
from dataclasses import replace

import mpmath
import numpy as np
import pytest
from scipy import stats

import oracles
from cobandit import engine, game, gossip, scenario, theory
from cobandit.cli import run_experiment
from cobandit.metrics import EPSILON_PCT

pytestmark = pytest.mark.acceptance

RUNS = 100
ALPHA = 0.05
WORKERS = int(os.environ.get("COBANDIT_WORKERS", max(1, min(8, os.cpu_count() or 1))))


@functools.lru_cache(maxsize=None)
def summaries(builder: str, algorithm: str = "cobandit", **params):
    cfg = scenario.BUILTIN[builder]()
    cfg = cfg.with_algorithm(algorithm)
    if params:
        cfg = cfg.with_params(**params)
    return run_experiment(cfg, RUNS, 0, None, parallel=WORKERS, traces=False)


def report(*args, **kw):
    return summaries(*args, **kw)[1]


def stable_at_nash_fraction(builder, **params) -> float:
    runs, _ = summaries(builder, **params)
    return sum(s.verdict.stable and s.verdict.at_nash for s in runs) / len(runs)


def test_criterion_1_baseline_stabilization(acceptance):
    co, ewa, exp3 = report("baseline"), report("baseline", "ewa"), report("baseline", "exp3")
    checks = [
        co.pct_stable >= 90.0,
        co.pct_stable_at_nash >= 80.0,
        co.median_stabilization_slot is not None and 70 <= co.median_stabilization_slot <= 270,
        ewa.pct_stable == 100.0 and ewa.pct_stable_at_nash == 100.0,
        ewa.median_stabilization_slot is not None and 25 <= ewa.median_stabilization_slot <= 100,
        exp3.pct_stable == 0.0,
    ]
    detail = (
        f"cobandit stable={co.pct_stable:.0f}% at_ne={co.pct_stable_at_nash:.0f}% "
        f"median={co.median_stabilization_slot}; ewa stable={ewa.pct_stable:.0f}% "
        f"at_ne={ewa.pct_stable_at_nash:.0f}% median={ewa.median_stabilization_slot}; "
        f"exp3 stable={exp3.pct_stable:.0f}%"
    )
    acceptance(1, all(checks), detail)
    assert all(checks), detail


def test_criterion_2_download_ordering(acceptance):
    co = report("baseline").median_download_gb
    ewa = report("baseline", "ewa").median_download_gb
    exp3 = report("baseline", "exp3").median_download_gb
    ok = ewa >= co and co >= 0.9 * ewa and co >= 1.30 * exp3
    detail = f"median GB ewa={ewa:.3f} cobandit={co:.3f} exp3={exp3:.3f} ratio={co / exp3:.3f}"
    acceptance(2, ok, detail)
    assert ok, detail


def _no_sharing_probe_runs(seeds=range(10)):
    """Max deviation from uniform and the distance series, sharing disabled."""
    worst = 0.0
    dists = []
    for seed in seeds:
        cfg = scenario.cooperation(p_t=0.0).with_params(sharing=False)
        rec = engine.run(replace(cfg, seed=seed))
        p = rec.probs[rec.active]
        k = p.shape[-1]
        worst = max(worst, float(np.abs(p - 1.0 / k).max()))
        dists.append(rec.distance)
    return worst, np.mean(dists, axis=0)


def test_criterion_3_cooperation(acceptance):
    med = {}
    for p_t in (0.0, 0.05, 0.25, 0.5):
        med[p_t] = report("cooperation", p_t=p_t, d=0, always_listen=True).median_stabilization_slot
    have = all(v is not None for v in med.values())
    decreasing = have and med[0.05] > med[0.25] > med[0.5]
    slow_without = have and med[0.0] >= 3.0 * med[0.05]
    worst, dist = _no_sharing_probe_runs()
    uniform = worst <= 1e-9
    # with nobody learning, the late mean distance is no lower than the early one
    early, late = dist[:100].mean(), dist[-100:].mean()
    no_drop = late >= 0.9 * early
    ok = decreasing and slow_without and uniform and no_drop
    detail = (
        "medians " + " ".join(f"p_t={k}:{v}" for k, v in med.items())
        + f"; no-sharing max|p-uniform|={worst:.1e} mean distance early={early:.1f} late={late:.1f}"
    )
    acceptance(3, ok, detail)
    assert ok, detail


def test_criterion_4_delay_helps(acceptance):
    fracs = {d: stable_at_nash_fraction("baseline", d=d) for d in (0, 1, 3)}
    fracs[5] = stable_at_nash_fraction("baseline")
    seq = [round(fracs[d] * RUNS) for d in (0, 1, 3, 5)]
    # one-sided Fisher test per step: a drop must be significant to count against the trend
    pvals = [
        stats.fisher_exact([[a, RUNS - a], [b, RUNS - b]], alternative="greater").pvalue
        for a, b in zip(seq, seq[1:])
    ]
    strict = all(b >= a for a, b in zip(seq, seq[1:]))
    ok = all(p >= ALPHA for p in pvals) and seq[-1] > seq[0]
    detail = (
        "stable at NE " + " ".join(f"d={d}:{100 * f:.0f}%" for d, f in fracs.items())
        + " step p-values " + " ".join(f"{p:.3f}" for p in pvals)
        + f" point-estimate order {'holds' if strict else 'broken'}"
    )
    acceptance(4, ok, detail)
    assert ok, detail


def test_criterion_5_uniform_capacities(acceptance):
    uni_runs, uni = summaries("uniform")
    base = report("baseline")
    stable = [s for s in uni_runs if s.verdict.stable]
    symmetric = all(s.verdict.at_nash for s in stable)
    faster = (
        uni.median_stabilization_slot is not None
        and base.median_stabilization_slot is not None
        and uni.median_stabilization_slot < base.median_stabilization_slot
    )
    ne = game.nash_allocation([13.0] * 5, 20).counts
    ok = faster and symmetric and ne == (4, 4, 4, 4, 4)
    detail = (
        f"median uniform={uni.median_stabilization_slot} baseline={base.median_stabilization_slot}; "
        f"{len(stable)} stable uniform runs, all at [4,4,4,4,4]={symmetric}"
    )
    acceptance(5, ok, detail)
    assert ok, detail


def test_criterion_6_dynamic_adaptation(acceptance):
    co = report("leave600", minimal_reset=True).mean_distance
    exp3 = report("leave600", "exp3").mean_distance
    after = np.nonzero(co[600:] < EPSILON_PCT)[0]
    back_at = 601 + int(after[0]) if after.size else None
    recovers = back_at is not None and back_at <= 800
    window = slice(699, 1200)
    gap = exp3[window] - co[window]
    above = bool(np.all(gap > 0))
    ok = recovers and above
    detail = f"cobandit back below {EPSILON_PCT} at slot {back_at}; exp3 - cobandit over 700..1200 min={gap.min():.2f}"
    acceptance(6, ok, detail)
    assert ok, detail


def _property_suite() -> dict:
    out = {}

    rec = engine.run(scenario.baseline(seed=7, horizon=300))
    p = rec.probs[rec.active]
    out["simplex"] = bool(np.all(p >= 0) and np.allclose(p.sum(axis=-1), 1.0, atol=1e-12))

    tops = []
    engine.run(
        scenario.baseline(seed=8, horizon=200),
        probe=lambda v: tops.append(v.weights[v.active].max(axis=-1)),
    )
    out["max_weight_one"] = bool(np.all(np.concatenate(tops) == 1.0))

    mean, target = oracles.unbiasedness_experiment(400_000, seed=11)
    out["unbiased"] = bool(np.all(np.abs(mean / target - 1.0) <= 0.01))

    gains = np.random.default_rng(3).random((200, 4))
    co, ewa = oracles.coincidence_trajectories(gains)
    out["cobandit_equals_ewa"] = bool(np.array_equal(co, ewa))

    ne_ok = True
    for k in (1, 2, 3):
        for caps in np.ndindex(*(5,) * k):
            caps = [c + 1.0 for c in caps]
            for n in range(1, 7):
                brute = set(oracles.brute_force_equilibria(caps, n))
                greedy = game.nash_allocation(caps, n).counts
                agree = all(
                    game.is_nash(caps, c) == (c in brute) for c in oracles.compositions(n, k)
                )
                ne_ok &= greedy in brute and agree
    out["ne_brute_force"] = bool(ne_ok)

    msgs = engine.messages_from_record(rec)[:200]
    t = max(m.slot for m in msgs)
    once = gossip.absorb(gossip.FeedbackBuffer(5), msgs, None, t, 5)
    twice = gossip.absorb(once, msgs, None, t, 5)
    out["dedup_idempotent"] = once.messages == twice.messages

    fresh = True
    for t, bufs in oracles.replay_gossip(rec, 5):
        fresh &= all(m.slot >= t - 5 for b in bufs.values() for m in b)
    out["staleness_bound"] = bool(fresh)

    again = engine.run(scenario.baseline(seed=7, horizon=300))
    out["reproducible"] = rec.equals(again)
    return out


def test_criterion_7_property_suite(acceptance):
    results = _property_suite()
    ok = all(results.values())
    detail = " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in results.items())
    acceptance(7, ok, detail)
    assert ok, detail


def test_criterion_8_theory_values(acceptance):
    hear = theory.hear_probability(20, 0.05, 1)
    _, bound = theory.regret_bound(theory.TheoryInputs(k=5, d=0, T=100, b0=0.0))
    with mpmath.workdps(50):
        k, d, T = 5, 0, 100
        b = mpmath.mpf(1) / k
        exact = 2 * mpmath.e * mpmath.sqrt((d + 1) * mpmath.log(k) * T / b) + d
    grid = np.linspace(0.0, theory.B0_MAX, 20)
    bounds = [theory.regret_bound(theory.TheoryInputs(k=5, d=0, T=100, b0=float(b0)))[1] for b0 in grid]
    monotone = all(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])) and bounds[-1] < bounds[0]
    ok = abs(hear - 0.09275) <= 1e-9 and abs(bound - float(exact)) <= 1e-9 and monotone
    detail = f"hear={hear:.12f} bound={bound:.12f} oracle={mpmath.nstr(exact, 15)} monotone={monotone}"
    acceptance(8, ok, detail)
    assert ok, detail
