"""Reproducible experiment harness.

Subcommands:
  gen     write a generated instance (plus a .meta.json sidecar)
  run     execute an algorithm for several seeded trials, appendable CSV out
  bench   compute offline benchmarks for an instance (JSON, optional CSV)
  verify  run a named verification suite; exit 0 iff it passes
  sweep   cross-product of algorithms x instances from a JSON config

Identical (config, master_seed) reproduce byte-identical CSV bodies: trial
seeds come from a stateless splitmix-style mix of (master seed, instance id,
trial index), rows are sorted before writing, and numbers are printed with
12 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import suites
from .bandit import PredictorOracle, bandit_combine_prime_run, bandit_combine_run, make_bandit_config
from .benchmarks import compute_benchmarks, dyn_limited
from .combine import combine_run, make_combine_config, switch_budget
from .core import MtsError, StructuralError, load_instance, normalize_costs, save_instance
from .instances import (
    CouponParams,
    definitize_costs,
    gen_coupon_lb,
    gen_kserver_line_lb,
    gen_predictors,
    random_instance,
)

CSV_VERSION = "mtsmix-csv-1"
CSV_COLUMNS = [
    "instance_id", "algo", "params", "trial", "seed", "cost", "switches",
    "dyn", "dyn_m", "m", "dyn_rho", "rho", "opt", "ratio_dyn", "ratio_dyn_m",
]

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z):
    z &= _MASK
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_trial_seed(master_seed, instance_id, trial_index):
    """Stateless 64-bit trial seed.

    The instance id is hashed (sha256, low 8 bytes) into the master seed and
    the trial index advances a splitmix-style stream; the finalizing mix is
    a bijection, so two trials of the same instance can never collide.
    """
    digest = int.from_bytes(hashlib.sha256(str(instance_id).encode("utf-8")).digest()[:8], "little")
    state = (int(master_seed) ^ digest) & _MASK
    return _mix64(state + (int(trial_index) + 1) * _GOLDEN)


def _fmt(x):
    if x is None or x == "":
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _instance_id(path):
    return os.path.splitext(os.path.basename(path))[0]


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def _cmd_gen(args):
    rng = np.random.default_rng(args.seed)
    meta = {"kind": args.kind, "seed": args.seed}
    if args.kind == "coupon":
        cp = gen_coupon_lb(CouponParams(ell=args.ell, T=args.T, alpha=args.alpha, seed=args.seed))
        inst, traces = cp.instance, cp.traces
        meta.update({"ell": args.ell, "T": args.T, "alpha": args.alpha,
                     "sigma_seq": cp.sigma.tolist()})
    elif args.kind == "random":
        inst = random_instance(args.n, args.T, rng, kind=args.metric, cost_hi=args.cost_hi)
        kinds = [("noisy_opt", {"p_noise": 0.05}), ("noisy_opt", {"p_noise": 0.2}),
                 ("greedy", {}), ("lazy_random", {"threshold": 0.5}), ("fixed_state", {})]
        traces = []
        for i in range(args.ell):
            kind, params = kinds[i % len(kinds)]
            traces.extend(gen_predictors(inst, kind, dict(params, count=1), rng))
        meta.update({"n": args.n, "T": args.T, "ell": args.ell, "metric": args.metric,
                     "cost_hi": args.cost_hi,
                     "predictor_kinds": [kinds[i % len(kinds)][0] for i in range(args.ell)]})
    elif args.kind == "kserver-line":
        if args.requests:
            requests = [int(x) for x in args.requests.split(",")]
        else:
            requests = rng.integers(0, args.k + 1, size=args.T).tolist()
        lb = gen_kserver_line_lb(args.k, requests)
        inst, traces = lb.instance, lb.traces
        meta.update({"k": args.k, "requests": requests,
                     "suggestions": [list(s) for s in lb.suggestions]})
    else:
        raise StructuralError(f"unknown generator kind {args.kind!r}")
    save_instance(args.out, inst, traces)
    with open(args.out + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh)
    print(f"wrote {args.out} ({inst.T} steps, {len(traces)} predictors)")
    return 0


# ---------------------------------------------------------------------------
# run / sweep
# ---------------------------------------------------------------------------


def _algo_params_string(args):
    parts = []
    if args.algo == "combine":
        parts.append(f"subroutine={args.subroutine}")
    if args.epsilon is not None:
        parts.append(f"epsilon={_fmt(args.epsilon)}")
    if args.algo in ("bandit", "bandit-prime") and args.gamma is not None:
        parts.append(f"gamma={_fmt(args.gamma)}")
    return ";".join(parts)


def _run_one_instance(args, path, rows):
    inst, traces = load_instance(path)
    if not traces:
        raise StructuralError(f"{path} carries no predictor traces")
    instance_id = _instance_id(path)
    ell = len(traces)
    params = _algo_params_string(args)

    bench_m = args.m
    report = compute_benchmarks(inst, traces,
                                m_values=[bench_m] if bench_m is not None else [],
                                rho_values=[args.rho] if args.rho is not None else [])
    dyn_v = report.dyn[0]
    if args.algo == "combine" and args.epsilon is not None and bench_m is None and ell >= 2:
        bench_m = switch_budget(args.epsilon, inst.metric.diameter, ell, dyn_v)
        report.dyn_m[bench_m] = dyn_limited(inst, traces, bench_m)
    dyn_m_v = report.dyn_m[bench_m][0] if bench_m is not None else None
    rho_v = report.dyn_rho[args.rho][0] if args.rho is not None else None
    opt_v = report.opt[0]

    run_inst, offset_total, oracle_factory = inst, 0.0, None
    if args.algo in ("bandit", "bandit-prime"):
        finite, _pen = definitize_costs(inst)
        norm, offsets = normalize_costs(finite)
        run_inst, offset_total = norm, float(offsets.sum())
        limit = 2 if args.algo == "bandit-prime" else 1
        oracle_factory = lambda: PredictorOracle(norm, traces, limit)

    for trial in range(args.trials):
        seed = derive_trial_seed(args.seed, instance_id, trial)
        rng = np.random.default_rng(seed)
        if args.algo == "combine":
            eps = args.epsilon if args.epsilon is not None else 1.0
            cfg = make_combine_config(eps, args.subroutine, ell)
            run = combine_run(inst, traces, cfg, rng)
            cost = run.trajectory.total
            switches = run.record["switches"]
        elif args.algo in ("bandit", "bandit-prime"):
            eps = args.epsilon if args.epsilon is not None else 1.0
            cfg = make_bandit_config(eps, ell, gamma=args.gamma)
            fn = bandit_combine_prime_run if args.algo == "bandit-prime" else bandit_combine_run
            run = fn(run_inst, oracle_factory(), cfg, rng)
            cost = run.trajectory.total + offset_total
            switches = run.record["switches"]
        else:
            raise StructuralError(f"unknown algorithm {args.algo!r}")
        rows.append({
            "instance_id": instance_id, "algo": args.algo, "params": params,
            "trial": trial, "seed": seed, "cost": cost, "switches": switches,
            "dyn": dyn_v, "dyn_m": dyn_m_v, "m": bench_m,
            "dyn_rho": rho_v, "rho": args.rho, "opt": opt_v,
            "ratio_dyn": (cost / dyn_v) if dyn_v else None,
            "ratio_dyn_m": (cost / dyn_m_v) if dyn_m_v else None,
        })


def _write_rows(path, rows):
    rows = sorted(rows, key=lambda r: (r["instance_id"], r["algo"], r["params"], r["trial"]))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {CSV_VERSION} columns={','.join(CSV_COLUMNS)}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([_fmt(r[c]) if c not in ("instance_id", "algo", "params") else r[c]
                             for c in CSV_COLUMNS])


def _cmd_run(args):
    for key in ("algo", "instance", "out"):
        if not getattr(args, key):
            raise StructuralError(f"run needs --{key} (flag or config file)")
    if isinstance(args.instance, str):
        args.instance = [args.instance]
    rows = []
    for path in args.instance:
        _run_one_instance(args, path, rows)
    _write_rows(args.out, rows)
    print(f"wrote {args.out} ({len(rows)} trial rows)")
    return 0


def _cmd_sweep(args):
    with open(args.config, encoding="utf-8") as fh:
        cfg = json.load(fh)
    rows = []
    base = argparse.Namespace(
        subroutine="oddexponent", epsilon=None, gamma=None, m=None, rho=None,
        trials=int(cfg.get("trials", 1)), seed=int(cfg.get("master_seed", 0)),
    )
    for algo_spec in cfg["algos"]:
        ns = argparse.Namespace(**vars(base))
        ns.algo = algo_spec["algo"]
        for key in ("subroutine", "epsilon", "gamma", "m", "rho"):
            if key in algo_spec:
                setattr(ns, key, algo_spec[key])
        for path in cfg["instances"]:
            _run_one_instance(ns, path, rows)
    _write_rows(cfg["out"], rows)
    print(f"wrote {cfg['out']} ({len(rows)} trial rows)")
    return 0


# ---------------------------------------------------------------------------
# bench / verify
# ---------------------------------------------------------------------------


def _cmd_bench(args):
    inst, traces = load_instance(args.instance)
    if not traces:
        raise StructuralError(f"{args.instance} carries no predictor traces")
    report = compute_benchmarks(inst, traces, m_values=args.m or [], rho_values=args.rho or [])
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["instance_id", "benchmark", "param", "value", "argmin_switches"])
            for row in report.csv_rows(_instance_id(args.instance)):
                writer.writerow([row[0], row[1], _fmt(row[2]), _fmt(row[3]), _fmt(row[4])])
    print(f"wrote {args.out}")
    return 0


def _cmd_verify(args):
    names = list(suites.SUITES) if args.suite == "all" else [args.suite]
    failed = False
    for name in names:
        fn = suites.SUITES[name]
        kwargs = {}
        if args.count is not None and "count" in fn.__code__.co_varnames:
            kwargs["count"] = args.count
        ok, lines = fn(**kwargs)
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {name}")
        for line in lines:
            print(f"    {line}")
        failed |= not ok
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser(run_defaults=None):
    p = argparse.ArgumentParser(prog="mtsmix", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("--kind", required=True, choices=["coupon", "random", "kserver-line"])
    g.add_argument("--ell", type=int, default=4)
    g.add_argument("--T", type=int, default=100)
    g.add_argument("--alpha", type=float, default=0.1)
    g.add_argument("--n", type=int, default=6)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--metric", default="euclidean", choices=["euclidean", "uniform", "line"])
    g.add_argument("--cost-hi", type=float, default=1.0)
    g.add_argument("--requests", default=None, help="comma-separated request indices")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--out", required=True)
    g.set_defaults(func=_cmd_gen)

    r = sub.add_parser("run", help="run an algorithm over seeded trials")
    r.add_argument("--config", default=None, help="JSON file with defaults for these flags")
    r.add_argument("--algo", choices=["combine", "bandit", "bandit-prime"])
    r.add_argument("--subroutine", default="oddexponent", choices=["oddexponent", "share"])
    r.add_argument("--epsilon", type=float, default=None)
    r.add_argument("--gamma", type=float, default=None)
    r.add_argument("--instance", nargs="+")
    r.add_argument("--trials", type=int, default=1)
    r.add_argument("--seed", type=int, default=0, help="master seed")
    r.add_argument("--m", type=int, default=None, help="switch budget for the dyn_m column")
    r.add_argument("--rho", type=float, default=None, help="switch charge for the dyn_rho column")
    r.add_argument("-o", "--out", default=None)
    r.set_defaults(func=_cmd_run)
    if run_defaults:
        bad = {k for k in run_defaults if not any(a.dest == k for a in r._actions)}
        if bad:
            raise StructuralError(f"unknown config keys: {sorted(bad)}")
        r.set_defaults(**run_defaults)

    b = sub.add_parser("bench", help="compute offline benchmarks")
    b.add_argument("--instance", required=True)
    b.add_argument("--m", type=int, nargs="*", default=None)
    b.add_argument("--rho", type=float, nargs="*", default=None)
    b.add_argument("--csv", default=None)
    b.add_argument("-o", "--out", required=True)
    b.set_defaults(func=_cmd_bench)

    v = sub.add_parser("verify", help="run a named verification suite")
    v.add_argument("--suite", required=True, choices=sorted(suites.SUITES) + ["all"])
    v.add_argument("--count", type=int, default=None)
    v.set_defaults(func=_cmd_verify)

    s = sub.add_parser("sweep", help="cross-product run from a JSON config")
    s.add_argument("--config", required=True)
    s.set_defaults(func=_cmd_sweep)
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        run_defaults = None
        if argv and argv[0] == "run" and "--config" in argv:
            path = argv[argv.index("--config") + 1]
            with open(path, encoding="utf-8") as fh:
                run_defaults = json.load(fh)
        args = build_parser(run_defaults).parse_args(argv)
        return args.func(args)
    except (OSError, json.JSONDecodeError, StructuralError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MtsError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
