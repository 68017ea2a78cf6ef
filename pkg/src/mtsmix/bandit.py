"""Bandit access to predictors: one query per step.

The algorithm keeps an anchor state at the queried predictor's suggestion.
Before each step it decides (independently, with probability gamma) whether
to explore: an exploration step queries a uniformly random predictor, feeds
the rescaled observation into Share as an unbiased loss estimate, serves the
task on a greedy round trip from the anchor, and leaves the anchor in place.
An exploitation step feeds zero, queries the predictor Share currently
follows, and moves the anchor there.

The two-query variant replaces the greedy round trip by a second query on
exploration steps and always moves the anchor; matched seeds make the two
runs share their exploration sets and index chains, so their costs can be
compared pairwise.

Instances must be normalized (cheapest cost 0 at each step) and the oracle
serves predictor costs capped at twice the diameter, which keeps every fed
estimate inside [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    TOL,
    ContractViolation,
    InfeasibleError,
    MetricSpace,
    MtsInstance,
    StructuralError,
    Trajectory,
    cap_predictor_costs,
    trace_matrix,
)
from .unfair import (
    sample_coupled_state,
    share_distribution,
    share_params,
    share_state,
    share_update,
    unfair_rate_for_epsilon,
)


@dataclass(frozen=True)
class BanditConfig:
    """Exploration rate, target suboptimality, and Share's unfairness
    factor."""

    gamma: float
    epsilon: float
    r: float
    seed: int | None = None

    def __post_init__(self):
        if not (0 < self.gamma < 0.25):
            raise StructuralError("exploration rate must lie in (0, 1/4)")
        if not self.r > 0:
            raise StructuralError("unfairness factor must be positive")


def make_bandit_config(epsilon, ell, gamma=None, seed=None):
    """Config with gamma = min(1, epsilon)/6 and Share's rate matched to
    epsilon."""
    if gamma is None:
        gamma = min(1.0, epsilon) / 6.0
    r = unfair_rate_for_epsilon(epsilon, max(ell, 2), "share")
    return BanditConfig(float(gamma), float(epsilon), r, seed)


class PredictorOracle:
    """Answers one (predictor, step) query at a time with the predictor's
    suggested state and its capped per-step cost.

    Enforces the per-step query budget (1, or 2 for the two-query variant)
    and records every answer.
    """

    def __init__(self, inst: MtsInstance, traces, max_queries_per_step=1):
        self.inst = inst
        self.phi = trace_matrix(traces)
        self.fbar, self.cap_flags = cap_predictor_costs(inst, traces)
        self.max_queries_per_step = max_queries_per_step
        self.counts = np.zeros(inst.T, dtype=np.int64)
        self.log = []

    @property
    def ell(self):
        return self.phi.shape[0]

    def query(self, t, i, step_type=""):
        if not (1 <= t <= self.inst.T):
            raise StructuralError(f"query time {t} out of range")
        if not (0 <= i < self.ell):
            raise StructuralError(f"predictor {i} out of range")
        if self.counts[t - 1] >= self.max_queries_per_step:
            raise ContractViolation(f"more than {self.max_queries_per_step} queries at t={t}")
        self.counts[t - 1] += 1
        state = int(self.phi[i, t - 1])
        cost = float(self.fbar[t - 1, i])
        self.log.append({"t": int(t), "queried": int(i), "state": state,
                         "cost": cost, "type": step_type})
        return state, cost


def greedy_state(metric: MetricSpace, c, b):
    """State minimizing distance-from-b plus current cost, ties to the
    lowest index."""
    c = np.asarray(c, dtype=float)
    vals = metric.dist[b] + c
    g = int(np.argmin(vals))
    if not np.isfinite(vals[g]):
        raise InfeasibleError("no feasible state for the greedy step")
    return g


def estimate_loss(i_queried, f_observed, D, ell):
    """Unbiased one-hot loss estimate: the observed capped cost scaled into
    [0, 1] at the queried coordinate, zero elsewhere."""
    if f_observed < -TOL or f_observed > 2.0 * D + TOL:
        raise ContractViolation(f"observed cost {f_observed} outside [0, 2D]; capping was bypassed")
    fhat = np.zeros(ell)
    fhat[i_queried] = min(max(f_observed, 0.0), 2.0 * D) / (2.0 * D)
    return fhat


@dataclass
class BanditRun:
    trajectory: Trajectory
    anchors: np.ndarray       # b_t
    follow: np.ndarray        # subroutine's index chain a_t
    exploration: np.ndarray   # bool mask X
    picks: np.ndarray         # pre-sampled exploration queries i_t
    query_log: list
    record: dict


def _check_normalized(inst):
    finite = np.isfinite(inst.costs)
    mins = np.where(finite, inst.costs, np.inf).min(axis=1)
    if np.any(mins > TOL):
        raise ContractViolation("bandit runs need a normalized instance (min cost 0 per step)")


def _bandit_run(inst, oracle, cfg, rng, prime):
    _check_normalized(inst)
    T, ell = inst.T, oracle.ell
    D = inst.metric.diameter
    if D <= 0:
        raise StructuralError("need a metric of positive diameter")
    alpha, beta = share_params(cfg.r, ell)
    state = share_state(ell, alpha, beta)

    # exploration set and its queries are decided upfront, independent of
    # everything the run observes
    explore = rng.random(T) < cfg.gamma
    picks = rng.integers(0, ell, size=T)

    marg = share_distribution(state)
    cur = int(rng.integers(ell))  # marginally per Share's uniform start
    b = inst.initial_state
    anchors = np.zeros(T, dtype=np.int64)
    follow = np.zeros(T, dtype=np.int64)
    per_step = np.zeros((T, 2))
    fed_max = 0.0
    for t in range(T):
        p = share_distribution(state)
        cur = sample_coupled_state(marg, p, cur, rng)
        marg = p
        follow[t] = cur
        if explore[t]:
            j = int(picks[t])
            _, fbar = oracle.query(t + 1, j, "explore")
            fhat = estimate_loss(j, fbar, D, ell)
            fed_max = max(fed_max, float(fhat[j]))
            state = share_update(state, fhat)
            if prime:
                bj, _ = oracle.query(t + 1, cur, "anchor")
                move = inst.metric.d(b, bj)
                b = bj
                serve = float(inst.costs[t, b])
            else:
                g = greedy_state(inst.metric, inst.costs[t], b)
                move = 2.0 * inst.metric.d(b, g)  # round trip, anchor unchanged
                serve = float(inst.costs[t, g])
        else:
            bj, _ = oracle.query(t + 1, cur, "exploit")
            move = inst.metric.d(b, bj)
            b = bj
            serve = float(inst.costs[t, b])
        if not np.isfinite(serve):
            raise InfeasibleError(f"bandit run hit an INFEASIBLE state at t={t + 1}", t=t + 1)
        per_step[t, 0] = move
        per_step[t, 1] = serve
        anchors[t] = b
    if fed_max > 1.0 + TOL:
        raise AssertionError("an estimate left [0, 1]; capping is broken")
    traj = Trajectory(anchors, per_step, float(per_step.sum()))
    record = {
        "cost": traj.total,
        "explore_steps": int(explore.sum()),
        "switches": int(np.count_nonzero(follow[1:] != follow[:-1])),
        "gamma": cfg.gamma,
        "r": cfg.r,
        "variant": "two-query" if prime else "one-query",
    }
    return BanditRun(traj, anchors, follow, explore, picks, oracle.log, record)


def bandit_combine_run(inst: MtsInstance, oracle: PredictorOracle, cfg: BanditConfig, rng) -> BanditRun:
    """One-query bandit run; exploration steps take a greedy round trip from
    the frozen anchor."""
    return _bandit_run(inst, oracle, cfg, rng, prime=False)


def bandit_combine_prime_run(inst: MtsInstance, oracle: PredictorOracle, cfg: BanditConfig, rng) -> BanditRun:
    """Two-query variant: exploration steps also query the subroutine's
    current predictor and move the anchor there (no greedy detour)."""
    if oracle.max_queries_per_step < 2:
        raise ContractViolation("the two-query variant needs an oracle allowing 2 queries per step")
    return _bandit_run(inst, oracle, cfg, rng, prime=True)
