"""Command-line front end.

    python -m flexqueue throughput  [--config FILE] [flags]
    python -m flexqueue waits       ...
    python -m flexqueue equilibrium ...
    python -m flexqueue sweep {fig4_7,fig6,thm2,lemmas} ...
    python -m flexqueue couple      ...
    python -m flexqueue replay MANIFEST

Data go to files under ``--out`` (a directory) or to standard output;
diagnostics go to standard error.  Exit codes: 0 success, 1 a checked
property failed (thm2, lemmas), 2 configuration or input error,
3 a solver did not converge.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments, sim
from .config import ConfigError, RunConfig, load_manifest, resolve
from .ctmc.chain import CapacityError, ChainFamily, solve_truncated, virtual_wait_table
from .ctmc.linalg import ConvergenceError
from .equilibrium import (WaitEvaluator, default_support, solve_projection,
                          solve_scalar_two_type)
from .model import InputError, StrategyProfile

log = logging.getLogger("flexqueue")

SWEEPS = ("fig4_7", "fig6", "thm2", "lemmas")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _plain(x):
    """JSON-safe value: numpy scalars unwrapped, infinities as strings."""
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return None
        return x
    return x


def _render(rows: list, columns: list, fmt: str) -> str:
    if fmt == "json":
        return json.dumps([_plain({c: r[c] for c in columns}) for r in rows], indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([experiments.fmt(r[c]) for c in columns])
    return buf.getvalue()


def emit(cfg: RunConfig, name: str, rows: list, columns: list, command=None) -> None:
    """Write ``rows`` to ``<out>/<name>.<fmt>`` plus a manifest, or to stdout."""
    fmt = cfg["output"]["format"]
    text = _render(rows, columns, fmt)
    out = cfg["output"]["path"]
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out) / f"{name}.{fmt}"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    experiments.write_manifest(experiments._manifest_path(path), cfg.to_dict(), cfg.seed, [path],
                               command or (name,))
    log.info("wrote %s", path)


def _sigma_columns(sigma: np.ndarray) -> dict:
    return {f"sigma_{i}_{q}": float(sigma[i, q])
            for i in range(sigma.shape[0]) for q in range(sigma.shape[1])}


def _market_columns(cfg: RunConfig) -> dict:
    p = cfg.market
    cols = {f"lam{i}": p.lam[i] for i in range(p.ell + 1)}
    cols.update({f"mu{i}": p.mu[i] for i in range(p.ell + 1)})
    cols["theta"] = p.theta
    return cols


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _family(cfg: RunConfig, support) -> ChainFamily:
    s = cfg["solver"]
    return ChainFamily(cfg.market, cfg.policy, support, caps=cfg.cap, eps=s["eps"],
                       budget=s["budget"], method=s["method"])


def solve_equilibria(cfg: RunConfig) -> list:
    """Equilibria for the configured market and policy."""
    s = cfg["solver"]
    p, policy = cfg.market, cfg.policy
    support = default_support(p, policy)
    ev = WaitEvaluator(p, policy, support, family=_family(cfg, support))
    if p.ell == 1 and len(policy.queues) == 2:
        return solve_scalar_two_type(p, policy, s["grid"], s["tol"], s["which"], ev)
    init = cfg.sigma_profile()
    if init is None:
        row = support[0] / support[0].sum()
        init = StrategyProfile.flexible_row(row, p.ell) if len(policy.queues) == p.ell + 1 \
            else StrategyProfile.truthful(policy, p.ell)
    return [solve_projection(p, policy, init, s["step"], s["damping"], s["max_iter"],
                             s["ne_tol"], evaluator=ev)]


def _profile(cfg: RunConfig) -> StrategyProfile:
    sigma = cfg.sigma_profile()
    if sigma is None:
        sigma = solve_equilibria(cfg)[0].sigma_star
    return sigma


def cmd_throughput(cfg: RunConfig) -> dict:
    sigma = _profile(cfg)
    s = cfg["solver"]
    p = cfg.market
    chain, dist = solve_truncated(p, cfg.policy, sigma, cfg.cap, s["eps"], s["tail_target"],
                                  s["budget"], s["method"])
    fam = chain.family
    rec = {"policy": cfg.policy.name, **_market_columns(cfg), **_sigma_columns(sigma.sigma),
           "tp_exact": fam.throughput(dist), "n_states": fam.layout.n_states,
           "tail_mass_bound": dist.tail_mass_bound}
    horizon = cfg["sim"]["horizon"]
    if horizon > 0:
        warm = cfg["sim"]["warmup"] or 0.0
        res = sim.run(p, cfg.policy, sigma, horizon, stream=sim.EventStream(cfg.seed),
                      warmup=warm, n_batches=cfg["sim"]["batches"])
        rec.update({"tp_sim": res.throughput_estimate, "tp_sim_se": res.std_error,
                    "tp_sim_ci": res.ci_halfwidth})
    sys.stdout.write(json.dumps(_plain(rec), sort_keys=True) + "\n")
    if cfg["output"]["path"] is not None:
        emit(cfg, "throughput", [rec], list(rec))
    return rec


def cmd_waits(cfg: RunConfig) -> list:
    sigma = _profile(cfg)
    s = cfg["solver"]
    p, policy = cfg.market, cfg.policy
    W = virtual_wait_table(p, policy, sigma, cap=cfg.cap, eps=s["eps"],
                           tail_target=s["tail_target"], budget=s["budget"], method=s["method"])
    reps = cfg["sim"]["replications"]
    stream = sim.EventStream(cfg.seed)
    rows = []
    for (i, q), w in W.items():
        row = {"agent_type": i, "queue": q, "wait_exact": w}
        if reps > 0:
            est = sim.tagged_wait(p, policy, sigma, i, q, replications=reps,
                                  warmup=cfg["sim"]["warmup"], stream=stream)
            row.update({"wait_sim": math.inf if est.infinite else est.mean,
                        "wait_sim_se": est.std_error})
        rows.append(row)
    cols = ["agent_type", "queue", "wait_exact"] + (["wait_sim", "wait_sim_se"] if reps else [])
    emit(cfg, "waits", rows, cols)
    return rows


def cmd_equilibrium(cfg: RunConfig) -> list:
    eqs = solve_equilibria(cfg)
    rows = []
    support = default_support(cfg.market, cfg.policy)
    fam = _family(cfg, support)
    for e in eqs:
        rows.append({**_market_columns(cfg), "policy": cfg.policy.name,
                     **_sigma_columns(e.sigma_star.sigma), "residual": e.residual,
                     "tp_exact": fam.throughput(fam.stationary(e.sigma_star)),
                     "converged": e.converged, "kind": e.kind or "iterate",
                     "method": e.method})
    cols = list(rows[0]) if rows else []
    emit(cfg, "equilibrium", rows, cols)
    return rows


def cmd_sweep(name: str, cfg: RunConfig) -> int:
    sw = cfg["sweep"]
    fmt = cfg["output"]["format"]
    outdir = cfg["output"]["path"]
    target = Path(outdir) / f"{name}.csv" if outdir is not None and fmt == "csv" else None
    manifest = cfg.to_dict()
    status = 0
    if name in ("fig4_7", "fig6"):
        if cfg.market.ell != 1:
            raise ConfigError(f"sweep {name} needs market.ell = 1")
        fn = experiments.sweep_fig4_7 if name == "fig4_7" else experiments.sweep_fig6
        rows = fn(target, grid=sw["grid"], base=cfg.market, workers=sw["workers"],
                  scalar_grid=sw["scalar_grid"], tol=cfg["solver"]["tol"], manifest=manifest)
        cols = experiments.FIG4_COLUMNS if name == "fig4_7" else experiments.FIG6_COLUMNS
    elif name == "thm2":
        rep = experiments.theorem2_grid(sw["ell"], sw["n_params"], sw["n_sigmas"], cfg.seed,
                                        target, budget=sw["budget"], manifest=manifest)
        rows = rep.rows
        cols = list(rows[0])
        for v in rep.violations:
            sys.stderr.write(json.dumps(_plain({"violation": v})) + "\n")
        status = 0 if rep.holds else 1
    elif name == "lemmas":
        reps = cfg["sim"]["replications"] or 10_000
        rep = experiments.lemma_suite(cfg.seed, target, replications=reps,
                                      params=cfg.market.replace(), manifest=manifest)
        rows = rep.rows
        cols = experiments.LEMMA_COLUMNS
        for r in rep.failures:
            sys.stderr.write(json.dumps(_plain({"failure": r})) + "\n")
        status = 0 if rep.holds else 1
    else:
        raise ConfigError(f"unknown sweep {name!r}; choose from {', '.join(SWEEPS)}")
    if target is None:
        if outdir is None:
            sys.stdout.write(_render(rows, cols, fmt))
        else:
            emit(cfg, name, rows, cols, ("sweep", name))
    return status


def cmd_couple(cfg: RunConfig) -> dict:
    c = cfg["couple"]
    p = cfg.market
    if c["i"] > p.ell:
        raise ConfigError(f"couple.i must lie in 1..{p.ell}")
    kind = cfg.policy.name
    base = experiments.place_agents(kind, c["base"])
    horizon = cfg["sim"]["horizon"] or 1.0 / p.theta
    reps = cfg["sim"]["replications"] or 10_000
    res = sim.coupled_value_of_flexibility(p, kind, base, c["i"], horizon, reps, cfg.seed,
                                           pooled=cfg.policy.pooled_fallback,
                                           log_replications=c["log_replications"])
    rec = {"policy": kind, "base": "-".join(map(str, c["base"])), "i": c["i"],
           "horizon": horizon, "replications": reps, "seed": cfg.seed,
           "mean_matches_base": res.means[0], "mean_matches_plus_flexible": res.means[1],
           "mean_matches_plus_specialized": res.means[2],
           "first": res.first, "first_se": res.first_se,
           "second": res.second, "second_se": res.second_se, "holds": res.holds()}
    emit(cfg, "couple", [rec], list(rec))
    out = cfg["output"]["path"]
    if out is not None and res.event_logs:
        sim.write_event_log(res.event_logs, Path(out) / "couple_events.csv")
    return rec


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON config file (a manifest works too)")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--out", help="output directory; stdout when omitted")
    p.add_argument("--format", choices=("csv", "json"), help="data file format")
    p.add_argument("--cap", type=int, help="per-queue truncation cap")
    p.add_argument("--horizon", type=float, help="simulation horizon")
    p.add_argument("--reps", type=int, help="simulation replications")
    p.add_argument("--policy", choices=("ncr", "acr", "rcr"), help="dispatch policy")
    p.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flexqueue",
                                 description="Strategic matching queues: exact solves, "
                                             "equilibria, sweeps and coupled simulation.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("throughput", "stationary match rate"),
                       ("waits", "expected virtual waits per agent type and queue"),
                       ("equilibrium", "Nash equilibria of the joining game"),
                       ("couple", "coupled value-of-flexibility run")):
        _common(sub.add_parser(name, help=text))
    sp = sub.add_parser("sweep", help="parameter sweeps and property suites")
    sp.add_argument("name", choices=SWEEPS)
    _common(sp)
    rp = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out", help="output directory")
    rp.add_argument("-v", "--verbose", action="store_true")
    return ap


def _flags(ns) -> dict:
    return {"seed": getattr(ns, "seed", None), "output.path": getattr(ns, "out", None),
            "output.format": getattr(ns, "format", None), "solver.cap": getattr(ns, "cap", None),
            "sim.horizon": getattr(ns, "horizon", None),
            "sim.replications": getattr(ns, "reps", None),
            "policy.kind": getattr(ns, "policy", None)}


def _error(kind: str, exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")
    return code


def _recorded_command(path) -> tuple:
    try:
        doc = load_manifest(path)
        cmd = list(doc["manifest"]["command"])
    except (KeyError, TypeError) as e:
        raise ConfigError(f"{path} is not a manifest: missing {e}") from None
    if not cmd or cmd[0] not in ("throughput", "waits", "equilibrium", "couple", "sweep"):
        raise ConfigError(f"manifest records no runnable command: {cmd!r}")
    return cmd[0], (cmd[1] if len(cmd) > 1 else None)


def run(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        command = ns.command
        name = getattr(ns, "name", None)
        if command == "replay":
            command, name = _recorded_command(ns.manifest)
            cfg = resolve(ns.manifest, {"output.path": ns.out}, environ={})
        else:
            cfg = resolve(ns.config, _flags(ns))
        if command == "throughput":
            cmd_throughput(cfg)
        elif command == "waits":
            cmd_waits(cfg)
        elif command == "equilibrium":
            cmd_equilibrium(cfg)
        elif command == "couple":
            cmd_couple(cfg)
        elif command == "sweep":
            return cmd_sweep(name, cfg)
        else:
            raise ConfigError(f"unknown command {command!r}")
    except (ConfigError, InputError, CapacityError) as e:
        return _error("config", e, 2)
    except ConvergenceError as e:
        return _error("convergence", e, 3)
    return 0


def main() -> None:
    sys.exit(run())
