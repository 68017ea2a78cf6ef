"""Core data types for metrical task systems: finite metric spaces, task-cost
sequences, predictor suggestion traces, and exact cost accounting.

All types are treated as immutable after construction (arrays are never
written to in place) and all operations are pure functions, so instances can
be shared freely between concurrent workers.

Conventions used throughout the package:
  * states and predictors are 0-based indices,
  * ``INFEASIBLE`` (= ``inf``) marks states in which a task cannot be served,
  * every predictor implicitly occupies the initial state before time 1,
  * float comparisons use the absolute tolerance ``TOL``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# Sentinel for "cannot serve here".  Plain IEEE inf already has the algebra
# we need: INFEASIBLE + x = INFEASIBLE and min(INFEASIBLE, x) = x.
INFEASIBLE = math.inf

# Absolute tolerance for equality of costs/distances.  Benchmark DPs at desk
# scale accumulate ~1e6 additions, far below double-precision drift at 1e-9.
TOL = 1e-9

INSTANCE_FORMAT_VERSION = 1


class MtsError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(MtsError):
    """Malformed input: dimension mismatch, bad index, unknown name."""


class InfeasibleError(MtsError):
    """A trajectory, predictor, or benchmark hit an INFEASIBLE state.

    ``t`` is the first offending time step (1-based), when known.
    """

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ContractViolation(MtsError):
    """A documented precondition of an operation was broken by the caller."""


class SizeLimitError(MtsError):
    """An exact enumeration or DP would exceed its size guard."""


@dataclass(frozen=True)
class MetricSpace:
    """Finite metric space: named points plus a distance matrix.

    ``dist`` must be symmetric, zero on the diagonal, and satisfy the
    triangle inequality within ``TOL``; ``validate_metric`` reports all
    violations.  ``diameter`` is the cached maximum pairwise distance.
    """

    points: tuple
    dist: np.ndarray
    diameter: float = field(init=False)

    def __post_init__(self):
        dist = np.asarray(self.dist, dtype=float)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise StructuralError(f"distance matrix must be square, got {dist.shape}")
        if dist.shape[0] != len(self.points):
            raise StructuralError(
                f"{len(self.points)} points but {dist.shape[0]}x{dist.shape[1]} matrix"
            )
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "diameter", float(dist.max()) if dist.size else 0.0)

    @property
    def n(self):
        return len(self.points)

    def d(self, i, j):
        return float(self.dist[i, j])


def uniform_metric(n, names=None):
    """Uniform metric on ``n`` points: every pairwise distance is 1."""
    if n < 1:
        raise StructuralError("need at least one point")
    dist = np.ones((n, n)) - np.eye(n)
    points = tuple(names) if names is not None else tuple(f"p{i}" for i in range(n))
    return MetricSpace(points, dist)


def line_metric(coords, names=None):
    """Metric induced by points on the real line at the given coordinates."""
    c = np.asarray(coords, dtype=float)
    dist = np.abs(c[:, None] - c[None, :])
    points = tuple(names) if names is not None else tuple(f"p{i}" for i in range(len(c)))
    return MetricSpace(points, dist)


def validate_metric(m: MetricSpace):
    """Return a list of human-readable metric violations (empty iff valid).

    Checks zero diagonal, non-negativity, symmetry, and the triangle
    inequality over all ordered triples, each within ``TOL``.
    """
    d = m.dist
    n = m.n
    violations = []
    for i in range(n):
        if abs(d[i, i]) > TOL:
            violations.append(f"dist[{i}][{i}] = {d[i, i]} != 0")
    for i in range(n):
        for j in range(i + 1, n):
            if d[i, j] < -TOL or d[j, i] < -TOL:
                violations.append(f"negative distance at ({i},{j})")
            if abs(d[i, j] - d[j, i]) > TOL:
                violations.append(f"symmetry violated at ({i},{j}): {d[i, j]} vs {d[j, i]}")
    for i in range(n):
        for k in range(n):
            for j in range(n):
                if d[i, j] > d[i, k] + d[k, j] + TOL:
                    violations.append(
                        f"triangle violated at ({i},{k},{j}): "
                        f"{d[i, j]} > {d[i, k]} + {d[k, j]}"
                    )
    return violations


@dataclass(frozen=True)
class MtsInstance:
    """A task-system instance: metric, initial state, and per-step costs.

    ``costs`` has shape (T, n); entries are non-negative or INFEASIBLE, with
    at least one feasible state per step.
    """

    metric: MetricSpace
    initial_state: int
    costs: np.ndarray

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=float)
        if costs.ndim != 2:
            raise StructuralError(f"costs must be a (T, n) matrix, got shape {costs.shape}")
        T, n = costs.shape
        if T < 1:
            raise StructuralError("instance must have at least one time step")
        if n != self.metric.n:
            raise StructuralError(f"cost vectors of length {n} on a {self.metric.n}-point metric")
        if not (0 <= self.initial_state < n):
            raise StructuralError(f"initial state {self.initial_state} out of range")
        finite = np.isfinite(costs)
        if np.any(costs[finite] < -TOL):
            raise StructuralError("negative cost entry")
        if not finite.any(axis=1).all():
            t = int(np.argmin(finite.any(axis=1))) + 1
            raise StructuralError(f"all-INFEASIBLE cost vector at t={t}")
        object.__setattr__(self, "costs", costs)

    @property
    def T(self):
        return self.costs.shape[0]

    @property
    def n(self):
        return self.costs.shape[1]


@dataclass(frozen=True)
class PredictorTrace:
    """One predictor's suggested state per time step (implicitly starting at
    the instance's initial state before time 1)."""

    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        if states.ndim != 1:
            raise StructuralError("trace must be a 1-d sequence of state indices")
        object.__setattr__(self, "states", states)

    def __len__(self):
        return len(self.states)


def check_traces(inst: MtsInstance, traces):
    """Validate trace lengths and state ranges against an instance."""
    for i, tr in enumerate(traces):
        if len(tr) != inst.T:
            raise StructuralError(f"predictor {i} has length {len(tr)}, instance has T={inst.T}")
        if len(tr) and (tr.states.min() < 0 or tr.states.max() >= inst.n):
            raise StructuralError(f"predictor {i} suggests a state outside the metric")


def trace_matrix(traces):
    """Stack traces into an (ell, T) index matrix."""
    return np.stack([tr.states for tr in traces])


@dataclass(frozen=True)
class Trajectory:
    """A realized state sequence with exact per-step (movement, service)
    accounting; ``total`` is the sum of all entries."""

    states: np.ndarray
    per_step_costs: np.ndarray  # shape (T, 2): movement, service
    total: float


def trajectory_cost(inst: MtsInstance, states) -> Trajectory:
    """Exact cost of occupying ``states[t]`` at each step.

    Movement at step t is the distance from the previous state (the initial
    state before t=1); service is the step's cost at the occupied state.
    Raises InfeasibleError (with the first offending 1-based t) if the
    sequence ever sits on an INFEASIBLE state.
    """
    s = np.asarray(states, dtype=np.int64)
    if s.shape != (inst.T,):
        raise StructuralError(f"state sequence of length {len(s)}, instance has T={inst.T}")
    if len(s) and (s.min() < 0 or s.max() >= inst.n):
        raise StructuralError("state index out of range")
    prev = np.concatenate(([inst.initial_state], s[:-1]))
    movement = inst.metric.dist[prev, s]
    service = inst.costs[np.arange(inst.T), s]
    if not np.isfinite(service).all():
        t = int(np.argmin(np.isfinite(service))) + 1
        raise InfeasibleError(f"trajectory sits on an INFEASIBLE state at t={t}", t=t)
    per_step = np.column_stack([movement, service])
    return Trajectory(s, per_step, float(per_step.sum()))


def predictor_step_cost(inst: MtsInstance, trace: PredictorTrace, t: int) -> float:
    """Cost (movement + service) the predictor itself pays at step t (1-based)."""
    if not (1 <= t <= inst.T):
        raise StructuralError(f"t={t} outside 1..{inst.T}")
    prev = inst.initial_state if t == 1 else int(trace.states[t - 2])
    cur = int(trace.states[t - 1])
    service = inst.costs[t - 1, cur]
    if not np.isfinite(service):
        raise InfeasibleError(f"predictor sits on an INFEASIBLE state at t={t}", t=t)
    return float(inst.metric.dist[prev, cur] + service)


def predictor_cost_table(inst: MtsInstance, traces):
    """(T, ell) matrix of per-step predictor costs f_t(i); INFEASIBLE where a
    predictor occupies an infeasible state (flagged, not rejected)."""
    check_traces(inst, traces)
    phi = trace_matrix(traces)  # (ell, T)
    prev = np.concatenate([np.full((len(traces), 1), inst.initial_state), phi[:, :-1]], axis=1)
    move = inst.metric.dist[prev, phi]  # (ell, T)
    serve = inst.costs[np.arange(inst.T)[None, :], phi]
    return (move + serve).T.copy()  # (T, ell)


def normalize_costs(inst: MtsInstance):
    """Shift each step's costs so its cheapest feasible state costs 0.

    Returns ``(instance, offsets)`` where ``offsets[t]`` is the subtracted
    minimum.  INFEASIBLE entries stay INFEASIBLE, and every state sequence
    gets cheaper by exactly ``offsets.sum()``.
    """
    finite = np.isfinite(inst.costs)
    offsets = np.where(finite, inst.costs, np.inf).min(axis=1)
    new_costs = inst.costs - offsets[:, None]
    # inf - finite stays inf; clamp tiny negatives from the subtraction
    new_costs = np.where(finite, np.maximum(new_costs, 0.0), INFEASIBLE)
    return MtsInstance(inst.metric, inst.initial_state, new_costs), offsets


def cap_cost_table(f, D):
    """Clamp a per-step predictor cost table at 2D; returns (table, flags)."""
    f = np.asarray(f, dtype=float)
    cap = 2.0 * D
    flags = f > cap
    return np.minimum(f, cap), flags


def cap_predictor_costs(inst: MtsInstance, traces):
    """Per-step predictor costs clamped at twice the diameter.

    This is the cost table a bandit-access algorithm observes: a predictor
    charging more than 2D per step can always be emulated at 2D by serving at
    a zero-cost state and returning, so the instance must be normalized
    (cheapest feasible cost 0 at every step).  Returns ``(table, flags)``
    where ``flags`` marks every (t, i) at which the cap fired.
    """
    finite = np.isfinite(inst.costs)
    mins = np.where(finite, inst.costs, np.inf).min(axis=1)
    if np.any(mins > TOL):
        raise ContractViolation("instance must be normalized before capping predictor costs")
    f = predictor_cost_table(inst, traces)
    return cap_cost_table(f, inst.metric.diameter)


# ---------------------------------------------------------------------------
# Instance file format (JSON, UTF-8).  "inf" encodes INFEASIBLE; indices are
# 0-based.  See README for the full schema.
# ---------------------------------------------------------------------------


def _encode_cost(x):
    return "inf" if math.isinf(x) else float(x)


def _decode_cost(x):
    if x == "inf":
        return INFEASIBLE
    if isinstance(x, (int, float)):
        return float(x)
    raise StructuralError(f"bad cost entry {x!r}")


def instance_to_dict(inst: MtsInstance, traces=()):
    return {
        "version": INSTANCE_FORMAT_VERSION,
        "metric": {
            "points": list(inst.metric.points),
            "dist": inst.metric.dist.tolist(),
        },
        "initial_state": int(inst.initial_state),
        "costs": [[_encode_cost(x) for x in row] for row in inst.costs],
        "predictors": [tr.states.tolist() for tr in traces],
    }


def instance_from_dict(data):
    if data.get("version") != INSTANCE_FORMAT_VERSION:
        raise StructuralError(f"unsupported instance format version {data.get('version')!r}")
    metric = MetricSpace(tuple(data["metric"]["points"]), np.asarray(data["metric"]["dist"], dtype=float))
    costs = np.array([[_decode_cost(x) for x in row] for row in data["costs"]], dtype=float)
    inst = MtsInstance(metric, int(data["initial_state"]), costs)
    traces = [PredictorTrace(np.asarray(s, dtype=np.int64)) for s in data.get("predictors", [])]
    check_traces(inst, traces)
    return inst, traces


def save_instance(path, inst: MtsInstance, traces=()):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(inst, traces), fh)


def load_instance(path):
    """Load ``(instance, traces)`` from the JSON instance format."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return instance_from_dict(data)
