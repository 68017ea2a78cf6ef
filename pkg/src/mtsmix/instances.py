"""Instance generators and problem reductions.

Includes the adversarial constructions used by the lower-bound experiments
(the random-expensive-state instances on the uniform metric and the
two-predictor line instances for k-server), the hole encoding of k-server on
k+1 points, the reduction of predictor combination to layered graph
traversal, the reduction of metrical service systems to k-server with
predictors, and synthetic predictor families for benchmark corpora.

Generators are pure functions of (params, seed); every generator can emit
the JSON instance format plus a sidecar with its parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    INFEASIBLE,
    MetricSpace,
    MtsInstance,
    PredictorTrace,
    StructuralError,
    InfeasibleError,
    line_metric,
    predictor_cost_table,
    trace_matrix,
    uniform_metric,
)

# ---------------------------------------------------------------------------
# Random corpora
# ---------------------------------------------------------------------------


def random_metric(n, rng, kind="euclidean", diameter=1.0):
    """Random n-point metric with the given diameter (exact for euclidean
    and line; uniform metrics always have diameter 1)."""
    if kind == "uniform":
        return uniform_metric(n)
    if kind == "line":
        coords = np.sort(rng.random(n))
    elif kind == "euclidean":
        pts = rng.random((n, 2))
        coords = None
    else:
        raise StructuralError(f"unknown metric kind {kind!r}")
    if kind == "line":
        dist = np.abs(coords[:, None] - coords[None, :])
    else:
        dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    top = dist.max()
    if top <= 0:  # degenerate draw; fall back to a line
        return line_metric(np.linspace(0.0, diameter, n))
    dist = dist * (diameter / top)
    np.fill_diagonal(dist, 0.0)
    dist = (dist + dist.T) / 2
    return MetricSpace(tuple(f"p{i}" for i in range(n)), dist)


def random_instance(n, T, rng, kind="euclidean", cost_hi=1.0, zero_frac=0.0, inf_frac=0.0, diameter=1.0):
    """Random instance: random metric plus iid uniform costs, optionally
    sprinkled with zeros and INFEASIBLE entries (never a whole step)."""
    metric = random_metric(n, rng, kind=kind, diameter=diameter)
    costs = rng.uniform(0.0, cost_hi, size=(T, n))
    if zero_frac > 0:
        costs[rng.random((T, n)) < zero_frac] = 0.0
    if inf_frac > 0:
        mask = rng.random((T, n)) < inf_frac
        keep = rng.integers(0, n, size=T)  # one guaranteed-feasible state per step
        mask[np.arange(T), keep] = False
        costs[mask] = INFEASIBLE
    return MtsInstance(metric, int(rng.integers(n)), costs)


def definitize_costs(inst: MtsInstance, penalty=None):
    """Replace INFEASIBLE entries by a large finite penalty (default
    10 * T * diameter) so the instance can be fed to algorithms that require
    finite costs.  Benchmarks should keep the original instance."""
    if penalty is None:
        penalty = 10.0 * inst.T * inst.metric.diameter
    costs = np.where(np.isfinite(inst.costs), inst.costs, penalty)
    return MtsInstance(inst.metric, inst.initial_state, costs), float(penalty)


def gen_predictors(inst: MtsInstance, kind, params, rng):
    """Synthetic predictor traces.

    fixed_state  - each predictor pinned to one point (params: states or count)
    noisy_opt    - offline optimum with each state resampled w.p. p_noise
    greedy       - argmin of movement-from-previous plus current cost
    lazy_random  - stays until its current cost exceeds a threshold, then
                   jumps to a uniformly random feasible state
    """
    params = dict(params or {})
    count = int(params.get("count", 1))
    T, n = inst.T, inst.n
    if kind == "fixed_state":
        states = params.get("states")
        if states is None:
            states = rng.integers(0, n, size=count)
        return [PredictorTrace(np.full(T, int(s))) for s in states]
    if kind == "noisy_opt":
        from .benchmarks import offline_opt

        p_noise = float(params.get("p_noise", 0.1))
        _, base = offline_opt(inst)
        traces = []
        for _ in range(count):
            flip = rng.random(T) < p_noise
            states = np.where(flip, rng.integers(0, n, size=T), base)
            traces.append(PredictorTrace(states))
        return traces
    if kind == "greedy":
        prev = inst.initial_state
        states = np.zeros(T, dtype=np.int64)
        for t in range(T):
            vals = inst.metric.dist[prev] + inst.costs[t]
            prev = int(np.argmin(vals))  # inf-aware; ties to lowest index
            states[t] = prev
        return [PredictorTrace(states)] * count
    if kind == "lazy_random":
        threshold = float(params.get("threshold", 0.5))
        traces = []
        for _ in range(count):
            cur = inst.initial_state
            states = np.zeros(T, dtype=np.int64)
            for t in range(T):
                c = inst.costs[t, cur]
                if not np.isfinite(c) or c > threshold:
                    finite = np.flatnonzero(np.isfinite(inst.costs[t]))
                    cur = int(finite[rng.integers(len(finite))])
                states[t] = cur
            traces.append(PredictorTrace(states))
        return traces
    raise StructuralError(f"unknown predictor kind {kind!r}")


# ---------------------------------------------------------------------------
# Random-expensive-state lower bound (uniform metric)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouponParams:
    """Parameters of the uniform-metric lower-bound generator."""

    ell: int
    T: int
    alpha: float
    seed: int = 0

    def __post_init__(self):
        if self.ell < 2:
            raise StructuralError("need at least two points")
        if not (0 < self.alpha <= 1):
            raise StructuralError("alpha must lie in (0, 1]")
        if self.T < 1:
            raise StructuralError("need at least one step")


@dataclass(frozen=True)
class CouponInstance:
    instance: MtsInstance
    traces: list
    sigma: np.ndarray
    params: CouponParams


def gen_coupon_lb(p: CouponParams) -> CouponInstance:
    """Uniform-metric instance where one uniformly random state per step
    costs 1 and every other state costs alpha/ell, with one predictor pinned
    to each point.

    Any online algorithm pays at least ~T/ell in expectation (the expensive
    state lands on it with probability 1/ell), while a hindsight combination
    with a modest switch budget stays almost free of full hits.
    """
    rng = np.random.default_rng(p.seed)
    sigma = rng.integers(0, p.ell, size=p.T)
    costs = np.full((p.T, p.ell), p.alpha / p.ell)
    costs[np.arange(p.T), sigma] = 1.0
    inst = MtsInstance(uniform_metric(p.ell), 0, costs)
    traces = [PredictorTrace(np.full(p.T, i)) for i in range(p.ell)]
    return CouponInstance(inst, traces, sigma, p)


# ---------------------------------------------------------------------------
# k-server: hole encoding and the two-predictor line construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KServerInstance:
    """k-server instance with named servers: ``initial_config[j]`` is the
    point occupied by server j; requests are point indices."""

    metric: MetricSpace
    initial_config: tuple
    requests: np.ndarray

    def __post_init__(self):
        requests = np.asarray(self.requests, dtype=np.int64)
        if len(self.initial_config) < 1 or len(self.initial_config) >= self.metric.n:
            raise StructuralError("need 1 <= k < n servers")
        if any(not (0 <= p < self.metric.n) for p in self.initial_config):
            raise StructuralError("server position out of range")
        if len(requests) and (requests.min() < 0 or requests.max() >= self.metric.n):
            raise StructuralError("request out of range")
        object.__setattr__(self, "requests", requests)
        object.__setattr__(self, "initial_config", tuple(int(x) for x in self.initial_config))

    @property
    def k(self):
        return len(self.initial_config)


def kserver_hole_encode(k, metric: MetricSpace, requests, initial_hole):
    """Encode k-server on k+1 points as a task system over hole positions.

    The single uncovered point is the state; moving the hole from p to q
    costs d(p, q) (a server walks from q to p), and a request makes the
    requested point infeasible as a hole.
    """
    if metric.n != k + 1:
        raise StructuralError(f"hole encoding needs exactly {k + 1} points, metric has {metric.n}")
    requests = np.asarray(requests, dtype=np.int64)
    if len(requests) and (requests.min() < 0 or requests.max() >= metric.n):
        raise StructuralError("request out of range")
    if not (0 <= initial_hole < metric.n):
        raise StructuralError("initial hole out of range")
    costs = np.zeros((len(requests), metric.n))
    costs[np.arange(len(requests)), requests] = INFEASIBLE
    return MtsInstance(metric, int(initial_hole), costs)


def line_lb_suggestions(k, request):
    """Server names (0-based) the two line predictors suggest on a request
    to point index ``request``: the servers adjacent to the point, with both
    suggesting the single neighbour at the two ends of the line."""
    if not (0 <= request <= k):
        raise StructuralError(f"request {request} outside 0..{k}")
    left = request - 1 if request >= 1 else 0
    right = request if request <= k - 1 else k - 1
    return left, right


@dataclass(frozen=True)
class KServerLineLB:
    instance: MtsInstance          # hole encoding
    traces: list                   # two predictor hole trajectories
    suggestions: list              # (left name, right name) per request
    kserver: KServerInstance


def gen_kserver_line_lb(k, request_seq, coords=None) -> KServerLineLB:
    """Two-predictor construction on k+1 line points.

    Servers are indexed left to right in the initial configuration (points
    0..k-1 occupied, hole at point k).  On a request to point i, the first
    predictor serves with the neighbouring server on the left, the second
    with the one on the right; at the two ends both suggest the only
    neighbour.  Predictors move lazily, and their configurations stay
    sorted, so each is fully described by its hole position.
    """
    if k < 1:
        raise StructuralError("need k >= 1")
    requests = np.asarray(request_seq, dtype=np.int64)
    if len(requests) == 0:
        raise StructuralError("need at least one request")
    if requests.min() < 0 or requests.max() > k:
        raise StructuralError("request outside the line")
    metric = line_metric(np.arange(k + 1, dtype=float) if coords is None else coords)
    if metric.n != k + 1:
        raise StructuralError("coords must give k+1 points")
    suggestions = [line_lb_suggestions(k, int(q)) for q in requests]
    holes = [k, k]  # both predictors start with the rightmost point free
    tracks = [[], []]
    for q in requests:
        q = int(q)
        # left policy: the serving server sits one point left of the request
        # (or at point 1 when the request is the left end)
        if holes[0] == q:
            holes[0] = q - 1 if q >= 1 else 1
        if holes[1] == q:
            holes[1] = q + 1 if q <= k - 1 else k - 1
        tracks[0].append(holes[0])
        tracks[1].append(holes[1])
    inst = kserver_hole_encode(k, metric, requests, initial_hole=k)
    traces = [PredictorTrace(np.asarray(tr)) for tr in tracks]
    kinst = KServerInstance(metric, tuple(range(k)), requests)
    return KServerLineLB(inst, traces, suggestions, kinst)


# ---------------------------------------------------------------------------
# Reduction to layered graph traversal
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayeredGraph:
    """Layered graph with edges only between consecutive layers.

    ``gaps[t]`` is the weight matrix from layer t to layer t+1; layer 0 is
    the source and the final layer is a single target vertex.
    """

    layer_sizes: list
    gaps: list

    def __post_init__(self):
        for t, g in enumerate(self.gaps):
            if g.shape != (self.layer_sizes[t], self.layer_sizes[t + 1]):
                raise StructuralError(f"gap {t} has shape {g.shape}")

    def to_dict(self):
        return {
            "layer_sizes": list(self.layer_sizes),
            "gaps": [g.tolist() for g in self.gaps],
        }


def mts_to_lgt(inst: MtsInstance, traces) -> LayeredGraph:
    """Turn a predictor-combination problem into layered graph traversal.

    Layer t holds one vertex per predictor; the edge from predictor i's
    vertex at t-1 to predictor j's vertex at t weighs the movement between
    their suggested states plus j's service cost at t.  All vertices of the
    last real layer connect to a single target at weight 0, so the shortest
    source-to-target path costs exactly the best dynamic combination.
    """
    f = predictor_cost_table(inst, traces)  # validates traces
    if not np.isfinite(f).all():
        t = int(np.argmin(np.isfinite(f).all(axis=1))) + 1
        raise InfeasibleError(f"predictor on an INFEASIBLE state at t={t}", t=t)
    phi = trace_matrix(traces)
    ell, T = phi.shape
    dist = inst.metric.dist
    serve = inst.costs[np.arange(T)[:, None], phi.T]  # (T, ell)
    gaps = []
    first = dist[inst.initial_state, phi[:, 0]] + serve[0]
    gaps.append(first.reshape(1, ell))
    for t in range(1, T):
        move = dist[np.ix_(phi[:, t - 1], phi[:, t])]
        gaps.append(move + serve[t][None, :])
    gaps.append(np.zeros((ell, 1)))
    return LayeredGraph([1] + [ell] * T + [1], gaps)


def lgt_shortest_path(g: LayeredGraph):
    """Weight of the lightest source-to-target path (forward min-plus)."""
    best = np.zeros(g.layer_sizes[0])
    for gap in g.gaps:
        best = (best[:, None] + gap).min(axis=0)
    return float(best.min())


# ---------------------------------------------------------------------------
# Reduction from metrical service systems to k-server with predictors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MssInstance:
    """Service system: a single server must move into the requested point
    set at each round."""

    metric: MetricSpace
    start: int
    requests: list  # list of tuples of point indices

    def __post_init__(self):
        if not (0 <= self.start < self.metric.n):
            raise StructuralError("start point out of range")
        reqs = []
        for t, W in enumerate(self.requests):
            W = tuple(int(x) for x in W)
            if len(W) == 0:
                raise StructuralError(f"empty request set at round {t + 1}")
            if any(not (0 <= x < self.metric.n) for x in W):
                raise StructuralError(f"request point out of range at round {t + 1}")
            reqs.append(W)
        object.__setattr__(self, "requests", reqs)

    @property
    def width(self):
        return max(len(W) for W in self.requests)


@dataclass(frozen=True)
class MssReduction:
    instance: MtsInstance     # hole-encoded k-server instance, k = n - 1
    traces: list              # predictor hole trajectories
    requests: np.ndarray      # emitted k-server requests
    round_ends: list          # index of the last emitted step of each round (-1 if none)
    reps: int


def mss_to_kserver(mss: MssInstance, reps=None, ell=None) -> MssReduction:
    """Encode a service system as k-server with predictors, k = n - 1.

    Each round floods every point outside the requested set with ``reps``
    sweeps of requests, while the predictors park their holes on the
    requested points (shorter sets repeat their last point).  Any cheap
    solution must move its hole into the requested set, and hole positions
    at round ends map back to a service-system solution of no larger cost.
    """
    n = mss.metric.n
    k = n - 1
    if reps is None:
        reps = 2 * math.ceil(mss.metric.diameter * (k + 1))
    if ell is None:
        ell = mss.width
    if ell < mss.width:
        raise StructuralError("need at least one predictor per requested point")
    requests = []
    holes = []
    round_ends = []
    for W in mss.requests:
        outside = [x for x in range(n) if x not in W]
        sweep = outside * reps
        requests.extend(sweep)
        pads = tuple(W[min(j, len(W) - 1)] for j in range(ell))
        holes.extend([pads] * len(sweep))
        round_ends.append(len(requests) - 1)
    if not requests:
        raise StructuralError("reduction emitted no requests (every round covers all points)")
    requests = np.asarray(requests, dtype=np.int64)
    inst = kserver_hole_encode(k, mss.metric, requests, initial_hole=mss.start)
    holes = np.asarray(holes, dtype=np.int64)  # (steps, ell)
    traces = [PredictorTrace(holes[:, j]) for j in range(ell)]
    return MssReduction(inst, traces, requests, round_ends, reps)


def mss_cost(mss: MssInstance, points):
    """Cost of a service-system solution visiting ``points[t]`` in round t."""
    pts = [int(x) for x in points]
    if len(pts) != len(mss.requests):
        raise StructuralError("solution length mismatch")
    prev = mss.start
    total = 0.0
    for t, x in enumerate(pts):
        if x not in mss.requests[t]:
            raise StructuralError(f"round {t + 1} served outside the requested set")
        total += mss.metric.d(prev, x)
        prev = x
    return total
