"""Unfair task systems on the uniform metric and the two randomized
subroutines used to pick which predictor to follow.

"Unfair" means the offline optimum pays ``r`` per unit of movement while the
algorithm pays 1; large ``r`` discourages the reference solution from
switching states too often.  Two subroutines are provided:

  * ``OddExponent`` - work-function based; needs its input split into
    elementary cost vectors (one non-zero coordinate each), with values
    truncated at the point where a state's probability mass hits zero.
  * ``Share`` - multiplicative weights with mass redistribution; handles any
    cost vector with entries in [0, 1] directly and never looks at the
    current step's cost before committing to a state.

States are value types and every update is pure (state in, state out), so
independent trials can run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TOL, ContractViolation, StructuralError

# Probability mass at or below this threshold is snapped to exactly zero
# (and the state treated as saturated).  Must exceed the bisection
# resolution used when truncating elementary costs.
SATURATION_TOL = 1e-7

_BISECT_TOL = 1e-9


def _seq_sum(x):
    # left-to-right accumulation; keeps results identical to the scalar loops
    # in the compiled fast path
    return float(np.add.accumulate(x)[-1]) if len(x) else 0.0


def _odd_pow(x, a):
    # left-associated repeated product, elementwise; a is a small odd integer
    out = x
    for _ in range(a - 1):
        out = out * x
    return out


def check_distribution(p, tol=TOL):
    p = np.asarray(p, dtype=float)
    if np.any(p < -tol) or np.any(p > 1 + tol):
        raise ContractViolation(f"distribution entries outside [0,1]: {p}")
    if abs(p.sum() - 1.0) > max(tol, 1e-9 * len(p)):
        raise ContractViolation(f"distribution sums to {p.sum()}, not 1")
    return p


def earth_mover_uniform(p, q):
    """Minimal probability mass that must move to turn p into q (uniform
    metric), i.e. the total positive part of p - q."""
    diff = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    return _seq_sum(np.maximum(diff, 0.0))


def sample_coupled_state(prev, next_dist, current, rng):
    """Resample a state marginally distributed per ``prev`` so that it is
    marginally distributed per ``next_dist``, moving with the minimum
    possible probability (= earth mover's distance on the uniform metric).

    Stays with probability min(prev[cur], next[cur]) / prev[cur]; otherwise
    jumps to a state drawn from the normalized positive part of
    ``next_dist - prev``.
    """
    prev = np.asarray(prev, dtype=float)
    nxt = np.asarray(next_dist, dtype=float)
    pc = float(prev[current])
    if pc <= 0.0:
        raise ContractViolation(f"current state {current} has zero mass under prev")
    stay = min(pc, float(nxt[current])) / pc
    if rng.random() < stay:
        return int(current)
    pos = np.maximum(nxt - prev, 0.0)
    total = _seq_sum(pos)
    if total <= 0.0:
        return int(current)
    u = rng.random() * total
    acc = 0.0
    last = int(current)
    for j in range(len(pos)):
        if pos[j] > 0.0:
            last = j
            acc += pos[j]
            if acc > u:
                return j
    return last


# ---------------------------------------------------------------------------
# Instances and work functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnfairUniformInstance:
    """Task sequence on the ell-point uniform metric with the offline
    optimum's movement scaled by ``r``.  Costs must be finite."""

    ell: int
    r: float
    costs: np.ndarray  # (T, ell)
    initial_state: int = 0

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=float)
        if self.ell < 2:
            raise StructuralError("need at least two states")
        if not self.r > 0:
            raise StructuralError("unfairness factor must be positive")
        if costs.ndim != 2 or costs.shape[1] != self.ell:
            raise StructuralError(f"costs must be (T, {self.ell}), got {costs.shape}")
        if not np.isfinite(costs).all() or np.any(costs < -TOL):
            raise StructuralError("unfair instances require finite non-negative costs")
        if not (0 <= self.initial_state < self.ell):
            raise StructuralError("initial state out of range")
        object.__setattr__(self, "costs", costs)

    @property
    def T(self):
        return self.costs.shape[0]


@dataclass(frozen=True)
class WorkFunctionState:
    """Work function on the uniform metric with movement priced at ``r``.

    ``v[x]`` is the cheapest cost of any trajectory serving the prefix and
    ending at x (movement scaled by r); ``w[i] = min_x(v[x] + [i != x])``
    adds the unscaled trailing distance.  Gaps of w are at most 1.
    """

    w: np.ndarray
    v: np.ndarray
    r: float


def initial_work_function(ell, r, initial_state=0):
    v = np.full(ell, float(r))
    v[initial_state] = 0.0
    return WorkFunctionState(_w_from_v(v), v, float(r))


def _min_excluding_self(v):
    # M[x] = min over y != x of v[y]
    order = np.argsort(v, kind="stable")
    m1, i1 = v[order[0]], order[0]
    m2 = v[order[1]] if len(v) > 1 else np.inf
    out = np.full(len(v), m1)
    out[i1] = m2
    return out


def _w_from_v(v):
    return np.minimum(v, v.min() + 1.0)


def work_function_update(s: WorkFunctionState, c) -> WorkFunctionState:
    """Advance the work function by one cost vector.

    v'(x) = c(x) + min_y(v(y) + r*[y != x]); w' recomputed from v'.  Equals
    brute-force minimization over all trajectories with movement scaled by r
    and an unscaled trailing distance.
    """
    c = np.asarray(c, dtype=float)
    if not np.isfinite(c).all():
        raise ContractViolation("work function updates need finite costs")
    v = s.v
    inner = np.minimum(v, _min_excluding_self(v) + s.r)
    v_new = c + inner
    return WorkFunctionState(_w_from_v(v_new), v_new, s.r)


# ---------------------------------------------------------------------------
# OddExponent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OddExponentState:
    """Work function plus the odd exponent ``a`` and the set of states that
    currently hold zero probability mass."""

    wf: WorkFunctionState
    a: int
    saturated: frozenset


def default_odd_exponent(ell):
    """Nearest odd integer to ln(ell), at least 1."""
    return max(1, 2 * round((math.log(ell) - 1) / 2) + 1)


def odd_exponent_state(ell, r, initial_state=0, a=None):
    if a is None:
        a = default_odd_exponent(ell)
    if a < 1 or a % 2 == 0:
        raise StructuralError(f"exponent must be odd and positive, got {a}")
    wf = initial_work_function(ell, r, initial_state)
    return OddExponentState(wf, int(a), frozenset(_saturated_set(_raw_weights(wf.w, a))))


def _raw_weights(w, a):
    # raw_j = (1 + sum_i (w_i - w_j)^a) / ell, accumulated in index order
    ell = len(w)
    gaps = _odd_pow(w[:, None] - w[None, :], a)  # [i, j]
    sums = np.add.accumulate(gaps, axis=0)[-1]
    return (1.0 + sums) / ell


def _saturated_set(raw):
    return [int(j) for j in range(len(raw)) if raw[j] <= SATURATION_TOL]


def _dist_from_raw(raw):
    if np.any(raw < -1e-9):
        raise ContractViolation(
            f"negative probability {raw.min()}: cost was fed without elementary splitting"
        )
    p = np.where(raw > SATURATION_TOL, raw, 0.0)
    total = _seq_sum(p)
    return p / total


def odd_exponent_distribution(state: OddExponentState):
    """Probability of each state: p_j = (1 + sum_i (w_i - w_j)^a) / ell with
    saturated states pinned to exactly 0 (and the rest renormalized)."""
    return _dist_from_raw(_raw_weights(state.wf.w, state.a))


@dataclass(frozen=True)
class SplitResult:
    """Outcome of feeding one cost vector through elementary splitting."""

    pieces: list        # (coordinate, value) in increasing coordinate order
    dists: list         # distribution after each emitted piece
    state: OddExponentState
    dropped: list       # (coordinate, amount) dropped on saturated states
    truncated: list     # (coordinate, emitted, remainder) truncation events


def _apply_elementary(wf, k, val):
    c = np.zeros(len(wf.v))
    c[k] = val
    return work_function_update(wf, c)


def oe_split_apply(state: OddExponentState, c) -> SplitResult:
    """Split a cost vector into elementary pieces and apply them in
    increasing coordinate order, with saturation truncation.

    A coordinate already at zero mass has its cost dropped.  A coordinate
    whose full cost would drive its mass to (or below) zero is truncated to
    the smallest value doing so, found by bisection; the remainder is
    dropped and the state becomes saturated.
    """
    c = np.asarray(c, dtype=float)
    if not np.isfinite(c).all() or np.any(c < -TOL):
        raise ContractViolation("elementary splitting needs finite non-negative costs")
    wf, a = state.wf, state.a
    raw = _raw_weights(wf.w, a)
    pieces, dists, dropped, truncated = [], [], [], []
    for k in range(len(c)):
        val = float(c[k])
        if val <= 0.0:
            continue
        if raw[k] <= SATURATION_TOL:
            dropped.append((k, val))
            continue
        wf_full = _apply_elementary(wf, k, val)
        raw_full = _raw_weights(wf_full.w, a)
        if raw_full[k] > SATURATION_TOL:
            wf = wf_full
            raw = raw_full
            pieces.append((k, val))
        else:
            # smallest value emptying state k, to bisection resolution
            lo, hi = 0.0, val
            while hi - lo > _BISECT_TOL:
                mid = 0.5 * (lo + hi)
                if _raw_weights(_apply_elementary(wf, k, mid).w, a)[k] > SATURATION_TOL:
                    lo = mid
                else:
                    hi = mid
            wf = _apply_elementary(wf, k, hi)
            raw = _raw_weights(wf.w, a)
            pieces.append((k, hi))
            truncated.append((k, hi, val - hi))
        dists.append(_dist_from_raw(raw))
    new_state = OddExponentState(wf, a, frozenset(_saturated_set(raw)))
    return SplitResult(pieces, dists, new_state, dropped, truncated)


def split_elementary(state: OddExponentState, c):
    """Elementary cost vectors (one non-zero coordinate each) equivalent to
    ``c`` for OddExponent, plus the advanced state.

    Returns ``(vectors, new_state)``; per-coordinate sums equal ``c`` except
    where saturation dropped or truncated cost.
    """
    res = oe_split_apply(state, c)
    ell = len(np.asarray(c))
    vectors = []
    for k, val in res.pieces:
        e = np.zeros(ell)
        e[k] = val
        vectors.append(e)
    return vectors, res.state


# ---------------------------------------------------------------------------
# Share
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShareState:
    """Multiplicative-weights state with mass sharing parameter ``alpha`` and
    decay base ``beta``."""

    weights: np.ndarray
    alpha: float
    beta: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0):
            raise StructuralError("weights must stay strictly positive")
        if not (0 <= self.alpha <= 0.5):
            raise StructuralError("alpha must lie in [0, 1/2]")
        if not (0 <= self.beta <= 1):
            raise StructuralError("beta must lie in [0, 1]")
        object.__setattr__(self, "weights", w)


def share_state(ell, alpha, beta):
    return ShareState(np.ones(ell), float(alpha), float(beta))


def share_distribution(state: ShareState):
    w = state.weights
    return w / _seq_sum(w)


def share_update(state: ShareState, c) -> ShareState:
    """One multiplicative-weights step with mass sharing.

    w'(i) = w(i) * beta^c(i) + alpha * Delta / ell, where Delta is the total
    weight destroyed by the decay.  Cost entries must lie in [0, 1]; larger
    costs must be pre-split into bounded slices (see ``share_slices``).
    """
    c = np.asarray(c, dtype=float)
    if np.any(c < -TOL) or np.any(c > 1 + TOL):
        raise ContractViolation("share_update needs cost entries in [0, 1]")
    w = state.weights
    decayed = w * state.beta ** c
    delta = _seq_sum(w - decayed)
    return ShareState(decayed + state.alpha * delta / len(w), state.alpha, state.beta)


def share_slices(c):
    """Split a cost vector into equal proportional slices bounded by 1."""
    c = np.asarray(c, dtype=float)
    m = float(c.max()) if c.size else 0.0
    if m <= 1.0:
        return [c]
    k = int(math.ceil(m - TOL))
    return [c / k] * k


def share_params(r, ell):
    """Share configuration achieving the r-unfair guarantee on ell states:
    alpha = 1/(2r+1) and beta = max(1/2, 1 - ln(ell/alpha)/r)."""
    if not r > 0 or ell < 2:
        raise StructuralError("need r > 0 and ell >= 2")
    alpha = 1.0 / (2.0 * r + 1.0)
    gamma = math.log(ell / alpha) / r
    beta = max(0.5, 1.0 - gamma)
    return alpha, beta


def share_unfair_bound(r, ell):
    """Guaranteed r-unfair competitive ratio of Share configured by
    ``share_params``: 1 + (8/r) (ln ell + ln(2r+1))."""
    return 1.0 + (8.0 / r) * (math.log(ell) + math.log(2.0 * r + 1.0))


def odd_exponent_unfair_bound(r, ell):
    """Guaranteed r-unfair competitive ratio of OddExponent:
    1 + 2 e ln(ell) / r."""
    return 1.0 + 2.0 * math.e * math.log(ell) / r


def unfair_rate_for_epsilon(eps, ell, alg):
    """Smallest unfairness factor r at which the named subroutine's r-unfair
    ratio drops to 1 + eps.

    Closed form for OddExponent; for Share the bound's surplus is decreasing
    in r, so the root is found by bisection to relative tolerance 1e-6.
    """
    if not eps > 0 or ell < 2:
        raise StructuralError("need eps > 0 and ell >= 2")
    if alg == "oddexponent":
        return 2.0 * math.e * math.log(ell) / eps
    if alg != "share":
        raise StructuralError(f"unknown subroutine {alg!r}")

    def surplus(r):
        return (8.0 / r) * (math.log(ell) + math.log(2.0 * r + 1.0))

    lo, hi = 1e-12, 1.0
    while surplus(hi) > eps:
        hi *= 2.0
    while hi - lo > 1e-6 * hi:
        mid = 0.5 * (lo + hi)
        if surplus(mid) > eps:
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------------------
# Offline optimum and expected-cost runs
# ---------------------------------------------------------------------------


def unfair_opt(inst: UnfairUniformInstance):
    """Exact offline optimum with movement priced at r, by DP.

    Returns (value, argmin state sequence); ties break toward the lowest
    state index.
    """
    ell, r = inst.ell, inst.r
    move = r * (np.ones((ell, ell)) - np.eye(ell))
    V = np.full(ell, np.inf)
    V[inst.initial_state] = 0.0
    parents = np.zeros((inst.T, ell), dtype=np.int64)
    for t in range(inst.T):
        total = V[:, None] + move  # [z, y]
        parents[t] = np.argmin(total, axis=0)
        V = inst.costs[t] + total.min(axis=0)
    y = int(np.argmin(V))
    value = float(V[y])
    seq = np.zeros(inst.T, dtype=np.int64)
    for t in range(inst.T - 1, -1, -1):
        seq[t] = y
        y = int(parents[t, y])
    return value, seq


@dataclass(frozen=True)
class UnfairRunResult:
    expected_cost: float
    service: float
    movement: float
    steps: int
    pieces: int
    dropped_mass: float
    truncations: int


def run_odd_exponent_expected(inst: UnfairUniformInstance, a=None):
    """Exact expected cost of OddExponent on an unfair uniform instance.

    Service is charged per emitted elementary piece at the post-piece
    distribution (one-step lookahead); movement is the earth mover's
    distance between consecutive distributions, starting from the point
    mass at the initial state.
    """
    state = odd_exponent_state(inst.ell, inst.r, inst.initial_state, a=a)
    marg = np.zeros(inst.ell)
    marg[inst.initial_state] = 1.0
    service = movement = dropped = 0.0
    pieces = truncations = 0
    for t in range(inst.T):
        res = oe_split_apply(state, inst.costs[t])
        for (k, val), dist in zip(res.pieces, res.dists):
            movement += earth_mover_uniform(marg, dist)
            service += val * float(dist[k])
            marg = dist
        pieces += len(res.pieces)
        truncations += len(res.truncated)
        dropped += sum(amt for _, amt in res.dropped) + sum(rem for _, _, rem in res.truncated)
        state = res.state
    return UnfairRunResult(service + movement, service, movement, inst.T, pieces, dropped, truncations)


def run_share_expected(inst: UnfairUniformInstance, alpha=None, beta=None):
    """Exact expected cost of Share on an unfair uniform instance.

    Share commits to its distribution before seeing the step's cost; large
    costs are fed as proportional slices bounded by 1, and the chain may
    move once per slice.
    """
    if alpha is None or beta is None:
        alpha, beta = share_params(inst.r, inst.ell)
    state = share_state(inst.ell, alpha, beta)
    marg = np.zeros(inst.ell)
    marg[inst.initial_state] = 1.0
    service = movement = 0.0
    pieces = 0
    for t in range(inst.T):
        for sl in share_slices(inst.costs[t]):
            p = share_distribution(state)
            movement += earth_mover_uniform(marg, p)
            service += float(np.add.accumulate(p * sl)[-1])
            marg = p
            state = share_update(state, sl)
            pieces += 1
    return UnfairRunResult(service + movement, service, movement, inst.T, pieces, 0.0, 0)
