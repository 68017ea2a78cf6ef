"""Full-access predictor mixing.

At every step the per-predictor costs (movement plus service) are scaled by
the metric diameter and issued as a task on the uniform metric over
predictor indices.  An unfair-MTS subroutine on that derived instance picks
which predictor to follow; the realized index chain is sampled through the
subroutine's distribution sequence with the minimal-movement coupling.

OddExponent sees the current step's cost before committing (its input is
split into elementary pieces, and the chain re-couples after each piece);
Share commits first and is fed the cost afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    TOL,
    ContractViolation,
    MtsInstance,
    StructuralError,
    Trajectory,
    predictor_cost_table,
    trajectory_cost,
)
from .unfair import (
    default_odd_exponent,
    odd_exponent_state,
    oe_split_apply,
    sample_coupled_state,
    share_distribution,
    share_params,
    share_slices,
    share_state,
    share_update,
    unfair_rate_for_epsilon,
)

SUBROUTINES = ("oddexponent", "share")


@dataclass(frozen=True)
class CombineConfig:
    """Mixing configuration: target suboptimality, subroutine, and the
    derived unfairness factor (see ``make_combine_config``)."""

    epsilon: float
    subroutine: str
    r: float
    seed: int | None = None

    def __post_init__(self):
        if self.subroutine not in SUBROUTINES:
            raise StructuralError(f"unknown subroutine {self.subroutine!r}")
        if not self.r > 0:
            raise StructuralError("unfairness factor must be positive")


def make_combine_config(epsilon, subroutine, ell, seed=None):
    """Config with the unfairness factor matched to the subroutine's
    guarantee at suboptimality ``epsilon`` for ``ell`` predictors."""
    r = unfair_rate_for_epsilon(epsilon, max(ell, 2), subroutine)
    return CombineConfig(float(epsilon), subroutine, r, seed)


def build_uniform_costs(inst: MtsInstance, traces):
    """Derived uniform-metric cost table: each predictor's per-step cost
    (movement + service) divided by the metric diameter."""
    if inst.metric.diameter <= 0:
        raise StructuralError("need a metric of positive diameter")
    f = predictor_cost_table(inst, traces)
    if not np.isfinite(f).all():
        from .core import InfeasibleError

        t = int(np.argmin(np.isfinite(f).all(axis=1))) + 1
        raise InfeasibleError(f"predictor on an INFEASIBLE state at t={t}", t=t)
    return f / inst.metric.diameter


class _PoolRng:
    """Reads pre-drawn uniforms in order; keeps the reference path and the
    compiled path on the same stream."""

    __slots__ = ("pool", "idx")

    def __init__(self, pool):
        self.pool = pool
        self.idx = 0

    def random(self):
        if self.idx >= len(self.pool):
            raise ContractViolation("uniform pool exhausted")
        u = self.pool[self.idx]
        self.idx += 1
        return float(u)


@dataclass
class CombineRun:
    trajectory: Trajectory
    follow: np.ndarray
    record: dict


def _follow_oddexponent_py(costs_u, r, a, pool):
    ell = costs_u.shape[1]
    rng = _PoolRng(pool)
    state = odd_exponent_state(ell, r, initial_state=0, a=a)
    marg = np.zeros(ell)
    marg[0] = 1.0
    cur = 0
    follow = np.zeros(len(costs_u), dtype=np.int64)
    pieces = truncations = 0
    dropped = 0.0
    for t in range(len(costs_u)):
        res = oe_split_apply(state, costs_u[t])
        for dist in res.dists:
            cur = sample_coupled_state(marg, dist, cur, rng)
            marg = dist
        state = res.state
        pieces += len(res.pieces)
        truncations += len(res.truncated)
        dropped += sum(amt for _, amt in res.dropped) + sum(rem for _, _, rem in res.truncated)
        follow[t] = cur
    return follow, {"pieces": pieces, "truncations": truncations, "dropped_mass": dropped,
                    "final_w": [round(x, 12) for x in state.wf.w]}


def _follow_oddexponent(costs_u, r, a, pool, kernel):
    from . import _kernels

    if kernel == "auto":
        kernel = _kernels.AVAILABLE and costs_u.size >= 2048
    if kernel and not _kernels.AVAILABLE:
        raise StructuralError("compiled fast path requested but numba is unavailable")
    if kernel:
        follow, pieces, truncations, dropped, final_w = _kernels.oe_follow(
            np.ascontiguousarray(costs_u), float(r), int(a), pool
        )
        return follow, {"pieces": int(pieces), "truncations": int(truncations),
                        "dropped_mass": float(dropped), "final_w": [round(x, 12) for x in final_w]}
    return _follow_oddexponent_py(costs_u, r, a, pool)


def _follow_share_py(costs_u, alpha, beta, pool):
    T, ell = costs_u.shape
    rng = _PoolRng(pool)
    state = share_state(ell, alpha, beta)
    marg = np.zeros(ell)
    marg[0] = 1.0
    cur = 0
    follow = np.zeros(T, dtype=np.int64)
    pieces = 0
    for t in range(T):
        # commit to this step's index before seeing its cost
        p = share_distribution(state)
        cur = sample_coupled_state(marg, p, cur, rng)
        marg = p
        follow[t] = cur
        for sl in share_slices(costs_u[t]):
            state = share_update(state, sl)
            p = share_distribution(state)
            cur = sample_coupled_state(marg, p, cur, rng)
            marg = p
            pieces += 1
    return follow, pieces, state.weights


def _follow_share(costs_u, r, rng, kernel):
    from . import _kernels

    T, ell = costs_u.shape
    alpha, beta = share_params(r, ell)
    slices = np.maximum(1, np.ceil(costs_u.max(axis=1) - TOL)).astype(int)
    pool = rng.random(2 * int(T + slices.sum()) + 8)
    if kernel == "auto":
        kernel = _kernels.AVAILABLE and costs_u.size >= 2048
    if kernel and not _kernels.AVAILABLE:
        raise StructuralError("compiled fast path requested but numba is unavailable")
    if kernel:
        follow, pieces, final_w = _kernels.share_follow(np.ascontiguousarray(costs_u), alpha, beta, pool)
    else:
        follow, pieces, final_w = _follow_share_py(costs_u, alpha, beta, pool)
    return follow, {"pieces": int(pieces), "final_weights": [round(x, 12) for x in final_w]}


def combine_run(inst: MtsInstance, traces, cfg: CombineConfig, rng, kernel="auto") -> CombineRun:
    """Run the mixer over full-access predictors and return the realized
    trajectory plus the follow log.

    The subroutine is fed the derived uniform costs one step at a time and
    the realized index i_t is produced before the next step's cost exists;
    the returned trajectory occupies predictor i_t's suggested state at
    every step, with exact accounting.
    """
    ell = len(traces)
    if ell == 0:
        raise StructuralError("need at least one predictor")
    if ell == 1:
        follow = np.zeros(inst.T, dtype=np.int64)
        traj = trajectory_cost(inst, traces[0].states)
        return CombineRun(traj, follow, {"pieces": 0, "switches": 0})
    costs_u = build_uniform_costs(inst, traces)
    if cfg.subroutine == "oddexponent":
        a = default_odd_exponent(ell)
        pool = rng.random(2 * inst.T * ell + 8)
        follow, digest = _follow_oddexponent(costs_u, cfg.r, a, pool, kernel)
    else:
        follow, digest = _follow_share(costs_u, cfg.r, rng, kernel)

    states = np.array([traces[int(i)].states[t] for t, i in enumerate(follow)])
    traj = trajectory_cost(inst, states)

    # realized-cost decomposition: following pays the predictor's own cost,
    # a switch adds at most one diameter on top of it
    f = predictor_cost_table(inst, traces)
    D = inst.metric.diameter
    prev = np.concatenate(([0], follow[:-1]))
    step = traj.per_step_costs.sum(axis=1)
    ft = f[np.arange(inst.T), follow]
    same = follow == prev
    if np.any(step[same] > ft[same] + TOL) or np.any(step[same] < ft[same] - TOL):
        raise AssertionError("stay-step cost differs from the followed predictor's cost")
    if np.any(step > D + ft + TOL):
        raise AssertionError("switch-step cost exceeds diameter plus predictor cost")

    switches = int(np.count_nonzero(follow[1:] != follow[:-1]))
    record = {
        "follow": follow.tolist(),
        "switches": switches,
        "per_step_costs": [round(x, 12) for x in step],
        "cost": traj.total,
        "subroutine": cfg.subroutine,
        "r": cfg.r,
        "epsilon": cfg.epsilon,
    }
    record.update(digest)
    return CombineRun(traj, follow, record)


def switch_budget(eps, D, ell, dyn_value):
    """Largest switch budget the mixing guarantee covers:
    floor(eps^2 * dyn / (4 D e ln ell))."""
    if eps <= 0 or D <= 0 or ell < 2:
        raise StructuralError("need eps > 0, D > 0, ell >= 2")
    if dyn_value < 0:
        raise StructuralError("benchmark value must be non-negative")
    return int(math.floor(eps * eps * dyn_value / (4.0 * D * math.e * math.log(ell))))


def robustify(inst: MtsInstance, trace_a, trace_b, cfg: CombineConfig, rng, kernel="auto") -> CombineRun:
    """Mix two full state sequences (e.g. a prediction-based run and a
    classical online algorithm's run) as a two-predictor instance."""
    return combine_run(inst, [trace_a, trace_b], cfg, rng, kernel=kernel)
