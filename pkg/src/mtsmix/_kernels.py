"""Compiled fast path for long OddExponent runs.

``oe_follow`` reproduces the reference implementation in ``combine.py``
(splitting, saturation truncation, coupling) operation for operation on the
same pre-drawn uniform pool, so the two paths yield bit-identical follow
logs; the equivalence is enforced by tests.  Falls back gracefully when
numba is missing.
"""

from __future__ import annotations

import numpy as np

from .core import ContractViolation
from .unfair import SATURATION_TOL, _BISECT_TOL

try:
    from numba import njit

    AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _apply_elementary(v, r, k, val, out_v, out_w):
    ell = v.shape[0]
    # first minimum and second order statistic of v
    m1 = np.inf
    i1 = -1
    m2 = np.inf
    for i in range(ell):
        if v[i] < m1:
            m2 = m1
            m1 = v[i]
            i1 = i
        elif v[i] < m2:
            m2 = v[i]
    for x in range(ell):
        excl = m2 if x == i1 else m1
        inner = v[x]
        if excl + r < inner:
            inner = excl + r
        out_v[x] = inner
    out_v[k] = out_v[k] + val
    mv = out_v[0]
    for x in range(1, ell):
        if out_v[x] < mv:
            mv = out_v[x]
    for x in range(ell):
        w = out_v[x]
        if mv + 1.0 < w:
            w = mv + 1.0
        out_w[x] = w


@njit(cache=True)
def _raw_at(w, a, k):
    ell = w.shape[0]
    s = 0.0
    for i in range(ell):
        g = w[i] - w[k]
        p = g
        for _ in range(a - 1):
            p = p * g
        s += p
    return (1.0 + s) / ell


@njit(cache=True)
def _raw_into(w, a, raw):
    for j in range(w.shape[0]):
        raw[j] = _raw_at(w, a, j)


@njit(cache=True)
def _oe_follow_impl(costs, r, a, pool, sat_tol, bisect_tol):
    T, ell = costs.shape
    v = np.full(ell, r)
    v[0] = 0.0
    w = np.empty(ell)
    mv = v[0]
    for i in range(1, ell):
        if v[i] < mv:
            mv = v[i]
    for i in range(ell):
        w[i] = v[i] if v[i] < mv + 1.0 else mv + 1.0
    raw = np.empty(ell)
    p = np.empty(ell)
    marg = np.zeros(ell)
    marg[0] = 1.0
    cur = 0
    follow = np.zeros(T, dtype=np.int64)
    tv = np.empty(ell)
    tw = np.empty(ell)
    ptr = 0
    pieces = 0
    truncs = 0
    dropped = 0.0
    err = 0
    for t in range(T):
        _raw_into(w, a, raw)
        for k in range(ell):
            val = costs[t, k]
            if val <= 0.0:
                continue
            if raw[k] <= sat_tol:
                dropped += val
                continue
            _apply_elementary(v, r, k, val, tv, tw)
            if _raw_at(tw, a, k) > sat_tol:
                for x in range(ell):
                    v[x] = tv[x]
                    w[x] = tw[x]
            else:
                lo = 0.0
                hi = val
                while hi - lo > bisect_tol:
                    mid = 0.5 * (lo + hi)
                    _apply_elementary(v, r, k, mid, tv, tw)
                    if _raw_at(tw, a, k) > sat_tol:
                        lo = mid
                    else:
                        hi = mid
                _apply_elementary(v, r, k, hi, tv, tw)
                for x in range(ell):
                    v[x] = tv[x]
                    w[x] = tw[x]
                dropped += val - hi
                truncs += 1
            pieces += 1
            _raw_into(w, a, raw)
            # distribution with saturated states pinned to zero
            total = 0.0
            for j in range(ell):
                if raw[j] < -1e-9:
                    err = 1
                p[j] = raw[j] if raw[j] > sat_tol else 0.0
                total += p[j]
            for j in range(ell):
                p[j] = p[j] / total
            # minimal-movement coupling on the same uniform pool
            pc = marg[cur]
            if pc <= 0.0:
                err = 2
            nc = p[cur]
            stay = (pc if pc < nc else nc) / pc
            u = pool[ptr]
            ptr += 1
            if not (u < stay):
                s = 0.0
                for j in range(ell):
                    d = p[j] - marg[j]
                    s += d if d > 0.0 else 0.0
                if s > 0.0:
                    u2 = pool[ptr] * s
                    ptr += 1
                    acc = 0.0
                    last = cur
                    for j in range(ell):
                        d = p[j] - marg[j]
                        if d > 0.0:
                            last = j
                            acc += d
                            if acc > u2:
                                break
                    cur = last
            for j in range(ell):
                marg[j] = p[j]
        follow[t] = cur
    return follow, pieces, truncs, dropped, w.copy(), err


def oe_follow(costs, r, a, pool):
    """Follow log of OddExponent on a uniform-metric cost table, coupled via
    the given uniform pool.  Mirrors the reference path exactly."""
    if not AVAILABLE:
        raise ContractViolation("numba is not available")
    follow, pieces, truncs, dropped, final_w, err = _oe_follow_impl(
        costs, r, a, pool, SATURATION_TOL, _BISECT_TOL
    )
    if err == 1:
        raise ContractViolation("negative probability inside the compiled path")
    if err == 2:
        raise ContractViolation("coupling from a zero-mass state inside the compiled path")
    return follow, pieces, truncs, dropped, final_w


@njit(cache=True)
def _share_follow_impl(costs, alpha, beta, pool):
    T, ell = costs.shape
    w = np.ones(ell)
    p = np.empty(ell)
    marg = np.zeros(ell)
    marg[0] = 1.0
    cur = 0
    ptr = 0
    pieces = 0
    err = 0
    follow = np.zeros(T, dtype=np.int64)
    for t in range(T):
        m = costs[t, 0]
        for i in range(1, ell):
            if costs[t, i] > m:
                m = costs[t, i]
        k = 1 if m <= 1.0 else int(np.ceil(m - 1e-9))
        for rep in range(k + 1):
            # rep 0 couples to the pre-feed distribution (the committed
            # index); later reps update with one slice first
            if rep > 0:
                delta = 0.0
                for i in range(ell):
                    d = w[i] * beta ** (costs[t, i] / k)
                    delta += w[i] - d
                    p[i] = d  # reuse as scratch for decayed weights
                for i in range(ell):
                    w[i] = p[i] + alpha * delta / ell
                pieces += 1
            s = 0.0
            for i in range(ell):
                s += w[i]
            for i in range(ell):
                p[i] = w[i] / s
            pc = marg[cur]
            if pc <= 0.0:
                err = 2
            nc = p[cur]
            stay = (pc if pc < nc else nc) / pc
            u = pool[ptr]
            ptr += 1
            if not (u < stay):
                tot = 0.0
                for j in range(ell):
                    d = p[j] - marg[j]
                    tot += d if d > 0.0 else 0.0
                if tot > 0.0:
                    u2 = pool[ptr] * tot
                    ptr += 1
                    acc = 0.0
                    last = cur
                    for j in range(ell):
                        d = p[j] - marg[j]
                        if d > 0.0:
                            last = j
                            acc += d
                            if acc > u2:
                                break
                    cur = last
            for j in range(ell):
                marg[j] = p[j]
            if rep == 0:
                follow[t] = cur
    return follow, pieces, w.copy(), err


def share_follow(costs, alpha, beta, pool):
    """Follow log of Share on a uniform-metric cost table: commits to an
    index before each step's cost, then feeds the cost in slices bounded by
    1, re-coupling after each slice.  Mirrors the reference path exactly."""
    if not AVAILABLE:
        raise ContractViolation("numba is not available")
    follow, pieces, final_w, err = _share_follow_impl(costs, alpha, beta, pool)
    if err == 2:
        raise ContractViolation("coupling from a zero-mass state inside the compiled path")
    return follow, pieces, final_w
