"""Named verification suites, shared by the command-line ``verify`` command
and the acceptance tests.

Each suite returns ``(ok, lines)``: a verdict plus human-readable detail
lines.  Suites are deterministic given their seed.
"""

from __future__ import annotations

import math

import numpy as np

from .bandit import estimate_loss
from .benchmarks import (
    brute_force_oracle,
    coupon_offline_strategy,
    dyn,
    dyn_limited,
    dyn_rho,
    dyn_tilde_kserver,
    kserver_dyn,
    offline_opt,
)
from .core import InfeasibleError, PredictorTrace, line_metric
from .instances import (
    CouponParams,
    gen_coupon_lb,
    gen_kserver_line_lb,
    lgt_shortest_path,
    line_lb_suggestions,
    mts_to_lgt,
    random_instance,
)

_METRIC_KINDS = ("euclidean", "uniform", "line")


def _small_corpus(count, seed, inf_frac=0.1):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(2, 5))
        T = int(rng.integers(1, 7))
        ell = int(rng.integers(1, 4))
        kind = _METRIC_KINDS[int(rng.integers(3))]
        inst = random_instance(n, T, rng, kind=kind, zero_frac=0.2, inf_frac=inf_frac)
        traces = [PredictorTrace(rng.integers(0, n, T)) for _ in range(ell)]
        yield inst, traces


def dp_oracle_suite(count=1000, seed=20240901):
    """Every benchmark DP equals exhaustive enumeration on a random corpus
    of tiny instances, including feasibility verdicts."""
    checks = 0
    for inst, traces in _small_corpus(count, seed):
        T = inst.T
        cases = [("dyn", lambda: dyn(inst, traces)[0], ("dyn", {})),
                 ("opt", lambda: offline_opt(inst)[0], ("opt", {}))]
        for m in range(T + 1):
            cases.append((f"dyn_m[{m}]",
                          (lambda m=m: dyn_limited(inst, traces, m)[0]),
                          ("dyn_limited", {"m": m})))
        for rho in (0.0, 1.0, 5.0):
            cases.append((f"dyn_rho[{rho}]",
                          (lambda rho=rho: dyn_rho(inst, traces, rho)[0]),
                          ("dyn_rho", {"rho": rho})))
        for name, fn, oracle_args in cases:
            try:
                got, feasible = fn(), True
            except InfeasibleError:
                got, feasible = None, False
            try:
                want, feasible2 = brute_force_oracle(inst, traces, *oracle_args), True
            except InfeasibleError:
                want, feasible2 = None, False
            if feasible != feasible2:
                return False, [f"feasibility mismatch for {name}: dp={feasible} oracle={feasible2}"]
            if feasible and abs(got - want) > 1e-9:
                return False, [f"value mismatch for {name}: dp={got} oracle={want}"]
            checks += 1
    return True, [f"{checks} benchmark values matched exhaustive enumeration on {count} instances"]


def lgt_suite(count=100, seed=20240902):
    """The layered-graph reduction is exact: its shortest source-to-target
    path equals the unrestricted dynamic-combination benchmark."""
    rng = np.random.default_rng(seed)
    for i in range(count):
        n = int(rng.integers(2, 6))
        T = int(rng.integers(1, 12))
        ell = int(rng.integers(1, 5))
        inst = random_instance(n, T, rng, kind=_METRIC_KINDS[int(rng.integers(3))], zero_frac=0.2)
        traces = [PredictorTrace(rng.integers(0, n, T)) for _ in range(ell)]
        sp = lgt_shortest_path(mts_to_lgt(inst, traces))
        v, _ = dyn(inst, traces)
        if abs(sp - v) > 1e-9:
            return False, [f"instance {i}: shortest path {sp} != dyn {v}"]
    return True, [f"shortest path equals dyn on {count} random instances"]


def _random_lazy_kserver(rng, n, k, T):
    """Random k-server instance with consistent lazy name suggestions."""
    from .instances import random_metric

    metric = random_metric(n, rng, kind=_METRIC_KINDS[int(rng.integers(3))])
    positions = rng.permutation(n)[:k]
    init = tuple(int(x) for x in positions)
    requests = rng.integers(0, n, size=T)
    ell = int(rng.integers(2, 4))
    names = []
    for _ in range(ell):
        cfg = list(init)
        nm = np.zeros(T, dtype=np.int64)
        for t, r in enumerate(requests):
            r = int(r)
            if r in cfg:
                u = cfg.index(r)
            else:
                u = int(rng.integers(k))
                cfg[u] = r
            nm[t] = u
        names.append(nm)
    return metric, init, requests, names


def tilde_suite(count=100, seed=20240903):
    """The named-server benchmark never exceeds the configuration-following
    benchmark, and the worked two-server example gives 20 vs 90."""
    metric = line_metric([0.0, 10.0, 90.0, 100.0])
    v_dyn, _ = kserver_dyn(metric, (0, 3), [1, 2], [[0, 0], [1, 1]])
    v_tilde = dyn_tilde_kserver(metric, (0, 3), [1, 2], [[0, 0], [1, 1]])
    if not (abs(v_tilde - 20.0) < 1e-9 and abs(v_dyn - 90.0) < 1e-9):
        return False, [f"worked example: tilde={v_tilde} (want 20), dyn={v_dyn} (want 90)"]
    rng = np.random.default_rng(seed)
    for i in range(count):
        n = int(rng.integers(3, 6))
        k = int(rng.integers(2, n))
        T = int(rng.integers(3, 11))
        metric, init, requests, names = _random_lazy_kserver(rng, n, k, T)
        vt = dyn_tilde_kserver(metric, init, requests, names)
        vd, _ = kserver_dyn(metric, init, requests, names)
        if vt > vd + 1e-9:
            return False, [f"instance {i}: named-server benchmark {vt} exceeds configuration benchmark {vd}"]
    return True, [f"named-server benchmark <= configuration benchmark on {count} instances; example 20 < 90 ok"]


def _lazy_opt_line(k, requests, initial_hole, restrict):
    """Optimal lazy k-server cost on the unit line with named servers.

    ``restrict`` limits the serving server's name to the two neighbours of
    the requested point (the adjacent-server rule).  Configurations map
    name -> position; servers are named left to right at the start.
    """
    pts = list(range(k + 1))
    init = tuple(p for p in pts if p != initial_hole)  # sorted: name j = j-th from left
    frontier = {init: 0.0}
    for q in requests:
        allowed = set(line_lb_suggestions(k, q)) if restrict else set(range(k))
        nxt = {}
        for cfg, cost in frontier.items():
            if q in cfg:
                if cfg.index(q) in allowed:
                    if cost < nxt.get(cfg, math.inf):
                        nxt[cfg] = cost
                continue
            for u in allowed:
                lst = list(cfg)
                move = abs(lst[u] - q)
                lst[u] = q
                cfg2 = tuple(lst)
                c2 = cost + move
                if c2 < nxt.get(cfg2, math.inf):
                    nxt[cfg2] = c2
        frontier = nxt
        if not frontier:
            return math.inf
    return min(frontier.values())


def adjacent_serving_suite(ks=(2, 3), max_len=6):
    """On every short request sequence over k+1 line points, some optimal
    lazy solution serves each request with one of the two servers adjacent
    to it (checked as: the adjacent-serving restriction costs nothing)."""
    checked = 0
    for k in ks:
        pts = k + 1
        for L in range(1, max_len + 1):
            for code in range(pts**L):
                requests = []
                c = code
                for _ in range(L):
                    requests.append(c % pts)
                    c //= pts
                full = _lazy_opt_line(k, requests, k, restrict=False)
                adj = _lazy_opt_line(k, requests, k, restrict=True)
                if abs(full - adj) > 1e-9:
                    return False, [f"k={k} requests={requests}: optimum {full}, adjacent-serving {adj}"]
                checked += 1
    return True, [f"adjacent-serving optimality verified on {checked} request sequences"]


def line_lb_trace_suite(ks=(2, 3, 4), count=50, seed=20240904, T=12):
    """The generator's hole trajectories agree with simulating each
    predictor as a lazy named-server algorithm."""
    rng = np.random.default_rng(seed)
    for k in ks:
        for _ in range(count):
            requests = rng.integers(0, k + 1, size=T)
            lb = gen_kserver_line_lb(k, requests)
            for which in (0, 1):
                cfg = list(range(k))  # server j at point j, hole at k
                holes = []
                for q in requests:
                    q = int(q)
                    if q not in cfg:  # hole hit: serve with the suggested server
                        name = lb.suggestions[len(holes)][which]
                        cfg[name] = q
                    holes.append(next(p for p in range(k + 1) if p not in cfg))
                if not np.array_equal(np.asarray(holes), lb.traces[which].states):
                    return False, [f"k={k} predictor {which}: trace mismatch for {requests}"]
    return True, [f"hole trajectories match a lazy server simulator for k in {tuple(ks)}"]


def coupon_stats_suite(ell=16, alpha=0.1, T=100_000, seeds=range(20), gap_rtol=0.05):
    """Renewal statistics of the hindsight strategy on the random-expensive-
    state instances: mean inter-switch gap near ell * H_{ell-1} and above
    ell * ln(ell)."""
    gaps = []
    for seed in seeds:
        cp = gen_coupon_lb(CouponParams(ell=ell, T=T, alpha=alpha, seed=int(seed)))
        _, sched = coupon_offline_strategy(cp.instance, cp.sigma, m=10**9)
        sw = np.flatnonzero(sched.sigma[1:] != sched.sigma[:-1]) + 1
        gaps.extend(np.diff(sw).tolist())
    mean_gap = float(np.mean(gaps))
    target = ell * sum(1.0 / i for i in range(1, ell))
    floor = ell * math.log(ell)
    lines = [f"mean inter-switch gap {mean_gap:.3f} vs ell*H_(ell-1) = {target:.3f}, floor {floor:.3f}"]
    ok = abs(mean_gap - target) <= gap_rtol * target and mean_gap >= floor
    return ok, lines


def unbiasedness_suite(gammas=(0.05, 0.2), draws=100_000, seed=20240905, D=1.0, ell=2, f=(1.0, 2.0)):
    """The one-hot loss estimate averages to gamma/(2 D ell) times the true
    cost vector, within three standard errors componentwise."""
    f = np.asarray(f, dtype=float)
    lines = []
    for gamma in gammas:
        rng = np.random.default_rng(seed + int(gamma * 1000))
        explore = rng.random(draws) < gamma
        picks = rng.integers(0, ell, size=draws)
        acc = np.zeros(ell)
        acc_sq = np.zeros(ell)
        for x, i in zip(explore, picks):
            if x:
                fhat = estimate_loss(int(i), float(f[i]), D, ell)
                acc += fhat
                acc_sq += fhat**2
        mean = acc / draws
        var = acc_sq / draws - mean**2
        se = np.sqrt(np.maximum(var, 1e-30) / draws)
        want = gamma / (2.0 * D * ell) * f
        lines.append(f"gamma={gamma}: mean={mean.round(5).tolist()} want={want.round(5).tolist()}")
        if np.any(np.abs(mean - want) > 3.0 * se):
            return False, lines + ["estimator mean outside three standard errors"]
    return True, lines


SUITES = {
    "dp-oracle": dp_oracle_suite,
    "lgt": lgt_suite,
    "tilde": tilde_suite,
    "adjacent-serving": adjacent_serving_suite,
    "line-lb": line_lb_trace_suite,
    "coupon-stats": coupon_stats_suite,
    "unbiasedness": unbiasedness_suite,
}
