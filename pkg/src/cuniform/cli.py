"""``cuniform`` command line: precompute, sample, coverage, simulate.

Exit codes: 0 success, 2 configuration or usage error, 3 incompatible policy
file, 4 dead level or solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

from .config import ExperimentConfig
from .errors import ConfigError, DeadLevelError, IncompatiblePolicyError
from .policyio import load_policy, save_policy
from .sampler import level_histograms, sample_cuniform, sample_gaussian, sample_lognormal, tv_to_uniform
from .simworld import (COVERAGE_COLUMNS, SUDDEN_GOAL, Environment, cluttered_suite, coverage_row, load_environment,
                       sudden_obstacle_suite)
from .uniformflow import precompute

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INCOMPATIBLE = 3
EXIT_SOLVER = 4


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        doc = cfg.to_dict()
        doc["seed"] = args.seed
        cfg = ExperimentConfig(doc, base_dir=cfg.base_dir)
    return cfg


def _policy(cfg: ExperimentConfig, path, required: bool):
    if path is None:
        if required:
            raise ConfigError("this command needs --policy (run `cuniform precompute` first)")
        return None
    if not Path(path).is_file():
        raise ConfigError(f"policy file {path} does not exist")
    try:
        return load_policy(path, expected_hash=cfg.policy_hash())
    except (json.JSONDecodeError, AttributeError, KeyError, TypeError, ValueError) as e:
        raise IncompatiblePolicyError(f"{path} is not a readable policy file: {e}") from None


def _write(path, text: str):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from None


def cmd_precompute(args) -> int:
    cfg = _config(args)
    out = Path(args.out or "policy.json")

    def progress(st):
        print(f"level {st['t']:2d} -> {st['t'] + 1:2d}: cells {st['cells']:6d}  next {st['next_cells']:6d}  "
              f"edges {st['edges']:7d}  flow {st['flow_value']:>11d}/{st['capacity']:<11d}  "
              f"deficit {st['deficit']:.6f}  solve {st['solve_ms']:9.2f} ms", flush=True)

    pre = cfg.doc["precompute"]
    table = precompute(cfg.model, cfg.grid, cfg.x0, cfg.actions, cfg.N, cfg.dt, n_samples=int(pre["n_samples"]),
                       seed=cfg.seed, progress=progress)
    if not out.parent.is_dir():
        raise ConfigError(f"cannot write {out}: directory {out.parent} does not exist")
    try:
        save_policy(table, out, record_timings=args.record_timings)
    except OSError as e:
        raise ConfigError(f"cannot write {out}: {e}") from None
    print(f"levels {len(table.levels)}  uniform through t={table.uniform_through()}  "
          f"total {table.timing['total_s']:.2f} s  -> {out}")
    return EXIT_OK


def _sample_batch(cfg: ExperimentConfig, policy, kind: str, K: int, seed: int):
    s = cfg.doc["sampler"]
    if kind == "cuniform":
        return sample_cuniform(policy, K=K, seed=seed)
    sigma = cfg.sigma(s["sigma_u"])
    x0 = policy.origin if policy is not None else cfg.x0
    if kind == "gaussian":
        return sample_gaussian(cfg.model, x0, None, sigma, cfg.N, K, seed, cfg.dt)
    return sample_lognormal(cfg.model, x0, None, sigma, cfg.N, K, seed, cfg.dt, s["sigma_ln"])


def cmd_sample(args) -> int:
    cfg = _config(args)
    kind = args.kind or cfg.doc["sampler"]["kind"]
    K = args.K or int(cfg.doc["sampler"]["K"])
    policy = _policy(cfg, args.policy, required=kind == "cuniform")
    batch = _sample_batch(cfg, policy, kind, K, cfg.seed)
    names = getattr(cfg.model, "state_names", None)
    if args.out is not None and str(args.out).endswith(".json"):
        doc = batch.to_json()
        doc["config_seed"] = cfg.seed
        _write(args.out, json.dumps(doc))
    else:
        _write(args.out, batch.csv_text(names))
    msg = f"sampled {batch.K} {kind} trajectories, {batch.T} steps, seed {cfg.seed}"
    if kind == "cuniform":
        tvs = [tv_to_uniform(h) for h in level_histograms(batch, policy)]
        msg += f", drift {batch.drift}; TV to uniform per level: " + " ".join(f"{v:.3f}" for v in tvs)
    print(msg, file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def cmd_coverage(args) -> int:
    cfg = _config(args)
    policy = _policy(cfg, args.policy, required=True)
    T_steps = cfg.coverage_steps
    if T_steps > policy.N:
        raise ConfigError(f"coverage horizon {T_steps} steps exceeds the policy horizon {policy.N}")
    sigmas = {k: cfg.sigma(k) for k in ("low", "medium", "high")}
    K_list = args.K_list or cfg.doc["coverage"]["K_list"]
    rows = []
    for K in K_list:
        rep = coverage_row(policy, int(K), T_steps, cfg.seed, sigmas, cfg.doc["sampler"]["sigma_ln"])
        rows.append((int(K), rep))
    total = rows[0][1]["C-Uniform"].total if rows else 0

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", *COVERAGE_COLUMNS, *(f"{c} %" for c in COVERAGE_COLUMNS), "total", "seed"])
    for K, rep in rows:
        w.writerow([K, *(rep[c].covered for c in COVERAGE_COLUMNS),
                    *(f"{rep[c].percentage:.2f}" for c in COVERAGE_COLUMNS), total, cfg.seed])
    _write(args.out, buf.getvalue())
    if args.out not in (None, "-"):
        doc = {"seed": cfg.seed, "T_steps": T_steps, "total": total,
               "rows": [{"K": K, "columns": {c: rep[c].to_dict() for c in COVERAGE_COLUMNS}} for K, rep in rows]}
        _write(Path(args.out).with_suffix(".json"), json.dumps(doc, indent=1))
        print(buf.getvalue(), end="")
    return EXIT_OK


def _sim_kwargs(cfg: ExperimentConfig, env_goal):
    c = cfg.doc["controller"]
    return dict(cfg=cfg.cost_config(env_goal), sigma_ln=cfg.doc["sampler"]["sigma_ln"],
                max_blocked_cycles=int(c["max_blocked_cycles"]))


def cmd_simulate(args) -> int:
    cfg = _config(args)
    sim = cfg.doc["simulate"]
    samplers = args.samplers or ["cuniform", "lognormal", "gaussian"]
    policy = _policy(cfg, args.policy, required="cuniform" in samplers)
    base_sigma = cfg.sigma(sim["baseline_sigma_u"])
    records = []
    table = []
    t0 = time.perf_counter()
    if args.suite == "sudden":
        K_list = args.K_list or sim["K_list"]
        header = ["appearance", "K", *samplers]
        times = [None] if args.no_obstacle else sim["appearance_times"]
        for app in times:
            label = "No Obstacle" if app is None else ("Fully Visible" if app == 0 else f"{app:g}")
            for K in K_list:
                row = [label, K]
                for kind in samplers:
                    res = sudden_obstacle_suite(app, int(K), kind, int(sim["trials"]), cfg.seed, model=cfg.model,
                                                policy=policy, sigma_u=base_sigma, **_sim_kwargs(cfg, SUDDEN_GOAL))
                    row.append(f"{res.success_rate:.2f}")
                    records.append({"appearance_time": app, "K": K, "sampler": kind,
                                    **res.to_dict(trajectories=args.trajectories)})
                table.append(row)
    else:
        if args.env:
            envs = [args.env]
        elif cfg.environment_path is not None:
            envs = [str(cfg.environment_path)]
        else:
            envs = sim["cluttered_envs"]
        loaded: list[Environment] = []
        for e in envs:
            try:
                loaded.append(load_environment(e))
            except (FileNotFoundError, KeyError, ValueError) as err:
                raise ConfigError(f"cannot load environment {e!r}: {err}") from None
        K_list = args.K_list or sim["cluttered_K_list"]
        header = ["K", *(f"{kind} {env.name}" for kind in samplers for env in loaded)]
        for K in K_list:
            row = [K]
            for kind in samplers:
                for env in loaded:
                    res = cluttered_suite(env, int(K), kind, int(sim["starts"]), cfg.seed, model=cfg.model,
                                          policy=policy, sigma_u=base_sigma, **_sim_kwargs(cfg, env.goal))
                    row.append(f"{res.success_rate:.2f} ({res.successes})")
                    records.append({"env": env.name, "K": K, "sampler": kind,
                                    **res.to_dict(trajectories=args.trajectories)})
            table.append(row)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(table)
    print(buf.getvalue(), end="")
    print(f"seed {cfg.seed}  wall {time.perf_counter() - t0:.1f} s")
    if args.out:
        out = Path(args.out)
        _write(out.with_suffix(".csv"), buf.getvalue())
        _write(out.with_suffix(".json"), json.dumps({"suite": args.suite, "seed": cfg.seed, "header": header,
                                                        "table": table, "runs": records}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cuniform", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, policy=True):
        sp.add_argument("--config", help="experiment config JSON (merged over the defaults)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output path")
        if policy:
            sp.add_argument("--policy", help="policy JSON written by `precompute`")

    sp = sub.add_parser("precompute", help="build level sets and solve the per-level max flows")
    common(sp, policy=False)
    sp.add_argument("--record-timings", action="store_true",
                    help="store solve times in the file (makes reruns differ byte-wise)")
    sp.set_defaults(func=cmd_precompute)

    sp = sub.add_parser("sample", help="export a trajectory batch as CSV (or JSON with a .json --out)")
    common(sp)
    sp.add_argument("--kind", choices=["cuniform", "gaussian", "lognormal"])
    sp.add_argument("--K", type=int)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("coverage", help="coverage table over K and sampler columns")
    common(sp)
    sp.add_argument("--K-list", type=int, nargs="+", dest="K_list")
    sp.set_defaults(func=cmd_coverage)

    sp = sub.add_parser("simulate", help="closed-loop success-rate suites")
    common(sp)
    sp.add_argument("--suite", choices=["sudden", "cluttered"], required=True)
    sp.add_argument("--env", help="environment file or bundled name (cluttered suite)")
    sp.add_argument("--K-list", type=int, nargs="+", dest="K_list")
    sp.add_argument("--samplers", nargs="+", choices=["cuniform", "lognormal", "gaussian"])
    sp.add_argument("--no-obstacle", action="store_true", help="sudden suite without any obstacle (smoke run)")
    sp.add_argument("--trajectories", action="store_true", help="include executed trajectories in the JSON")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except IncompatiblePolicyError as e:
        print(f"incompatible policy: {e}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except DeadLevelError as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
