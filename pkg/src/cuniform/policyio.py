"""Versioned JSON persistence for :class:`~cuniform.uniformflow.PolicyTable`.

Layout::

    {"format_version": 1, "hash": ..., "model": {...}, "grid": {...},
     "dt": 0.2, "actions": [[...], ...], "N": 15, "seed": 0, "x0": [...],
     "n_samples": 1,
     "levels": [{"t": 0, "cells": n, "edges": e, "flow_value": v,
                 "capacity": n*m, "deficit": d, "solve_ms": null,
                 "entries": [{"cell": [i, j, k],
                              "probs": [{"action_index": a, "p": "num/den"}]}]}],
     "terminal_cells": [[i, j, k], ...]}

Probabilities are always exact rationals because flows are integral.  The
successor table is not stored; it is rebuilt on load by propagating cell
midpoints, which reproduces the precomputation bit for bit.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .dynamics import model_from_config
from .errors import IncompatiblePolicyError
from .gridspace import GridSpec
from .levelsets import LevelSet
from .uniformflow import PolicyLevel, PolicyTable

FORMAT_VERSION = 1


def policy_hash(model_cfg: dict, grid: GridSpec, actions, dt: float) -> str:
    doc = {
        "model": model_cfg,
        "grid": grid.to_dict(),
        "actions": np.asarray(actions, dtype=float).tolist(),
        "dt": float(dt),
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def policy_to_dict(table: PolicyTable, record_timings: bool = False) -> dict:
    levels = []
    for t, pol in enumerate(table.policies):
        cells = table.levels[t].cells.tolist()
        rows, acts = np.nonzero(pol.num)
        nums = pol.num[rows, acts].tolist()
        dens = pol.den[rows, acts].tolist()
        entries = [{"cell": c, "probs": []} for c in cells]
        for r, a, nu, de in zip(rows.tolist(), acts.tolist(), nums, dens):
            entries[r]["probs"].append({"action_index": a, "p": f"{nu}/{de}"})
        st = pol.stats
        levels.append({
            "t": t,
            "cells": st["cells"],
            "next_cells": st["next_cells"],
            "edges": st["edges"],
            "flow_value": st["flow_value"],
            "capacity": st["capacity"],
            "deficit": st["deficit"],
            "fallback_cells": st["fallback_cells"],
            "solve_ms": round(st["solve_ms"], 3) if record_timings and "solve_ms" in st else None,
            "entries": entries,
        })
    return {
        "format_version": FORMAT_VERSION,
        "hash": table.content_hash(),
        "model": table.model.config(),
        "grid": table.grid.to_dict(),
        "dt": table.dt,
        "actions": table.actions.tolist(),
        "N": table.N,
        "seed": table.seed,
        "x0": np.asarray(table.x0, dtype=float).tolist(),
        "n_samples": table.n_samples,
        "levels": levels,
        "terminal_cells": table.levels[-1].cells.tolist(),
    }


def save_policy(table: PolicyTable, path, record_timings: bool = False) -> None:
    doc = policy_to_dict(table, record_timings=record_timings)
    Path(path).write_text(json.dumps(doc, separators=(",", ":")))


def policy_from_dict(doc: dict, expected_hash: str | None = None) -> PolicyTable:
    if doc.get("format_version") != FORMAT_VERSION:
        raise IncompatiblePolicyError(f"unsupported policy format {doc.get('format_version')!r}")
    model = model_from_config(doc["model"])
    grid = GridSpec.from_dict(doc["grid"])
    actions = np.asarray(doc["actions"], dtype=float)
    dt = float(doc["dt"])
    stored = doc["hash"]
    actual = policy_hash(model.config(), grid, actions, dt)
    if stored != actual:
        raise IncompatiblePolicyError("policy file hash does not match its own header (corrupted or edited)")
    if expected_hash is not None and stored != expected_hash:
        raise IncompatiblePolicyError(
            f"policy hash {stored[:12]} does not match the configuration ({expected_hash[:12]}); recompute it")
    A = len(actions)
    levels = []
    raw = []
    for lv in doc["levels"]:
        cells = np.asarray([e["cell"] for e in lv["entries"]], dtype=np.int64).reshape(-1, grid.dim)
        levels.append(LevelSet(lv["t"], grid, grid.keys(cells)))
        raw.append(lv)
    terminal = np.asarray(doc["terminal_cells"], dtype=np.int64).reshape(-1, grid.dim)
    levels.append(LevelSet(len(raw), grid, grid.keys(terminal)))

    policies = []
    for t, lv in enumerate(raw):
        n = len(levels[t])
        num = np.zeros((n, A), dtype=np.int64)
        den = np.ones((n, A), dtype=np.int64)
        ri, ai, pn, pd = [], [], [], []
        for r, e in enumerate(lv["entries"]):
            for pr in e["probs"]:
                a, _, b = pr["p"].partition("/")
                ri.append(r)
                ai.append(pr["action_index"])
                pn.append(int(a))
                pd.append(int(b) if b else 1)
        num[ri, ai] = pn
        den[ri, ai] = pd
        g = np.gcd(num, den)
        num //= g
        den //= g
        mids = grid.midpoints(levels[t].cells)
        nxt = model.step(mids[:, None, :], actions[None, :, :], dt)
        idx, ok = grid.cells_of(nxt)
        rows = levels[t + 1].index_of(grid.keys(idx))
        succ = np.where(ok, rows, -1).astype(np.int64)
        stats = {k: lv[k] for k in ("cells", "next_cells", "edges", "flow_value", "capacity", "deficit",
                                    "fallback_cells")}
        if lv.get("solve_ms") is not None:
            stats["solve_ms"] = lv["solve_ms"]
        policies.append(PolicyLevel(t=t, probs=num / den, num=num, den=den, succ=succ, stats=stats))
    return PolicyTable(model=model, grid=grid, dt=dt, actions=actions, N=int(doc["N"]),
                       x0=np.asarray(doc["x0"], dtype=float), n_samples=int(doc["n_samples"]),
                       seed=int(doc["seed"]), levels=levels, policies=policies)


def load_policy(path, expected_hash: str | None = None) -> PolicyTable:
    return policy_from_dict(json.loads(Path(path).read_text()), expected_hash=expected_hash)
