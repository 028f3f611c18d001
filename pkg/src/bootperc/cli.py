"""Command-line experiment runner.

Subcommands: generate | percolate | lln | scan | trajectory | sandwich |
kernel | theory.  One JSON config document describes the model and the
experiment; flags override the seed, replicate count, thread budget and
output directory.  Outputs are CSV (fixed, versioned headers) plus JSON
records, written so that the same config and seed reproduce every byte.

Replicate streams are split by counter: replicate i draws from
numpy's PCG64 seeded with SeedSequence(entropy=seed, spawn_key=(i,)),
independent of the thread schedule.

Exit codes: 0 success, 2 config error, 3 invariant violation,
4 numeric failure.  BOOTPERC_LOG in {error, info, debug} controls
logging verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import discretise, odeflow, percolation, theory
from .graphgen import SparseGraph, sample_chung_lu
from .weights import (WeightDistribution, WeightSequence, make_point_mass,
                      make_power_law, weight_sequence_from_values)

log = logging.getLogger("bootperc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "model": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["point_mass", "mixture", "power_law"]},
                "d": {"type": "number", "exclusiveMinimum": 0},
                "values": {"type": "array", "items": {"type": "number"}},
                "probs": {"type": "array", "items": {"type": "number"}},
                "beta": {"type": "number", "exclusiveMinimum": 2},
                "i0": {"type": "number", "minimum": 0},
                "zeta": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
            "required": ["kind"],
        },
        "n": {"type": "integer", "minimum": 1},
        "r": {"type": "integer", "minimum": 2},
        "seeding": {
            "type": "object",
            "properties": {
                "p": {"type": "number", "minimum": 0, "maximum": 1},
                "a_exponent": {"type": "number", "minimum": 0, "maximum": 1},
                "a_exponents": {"type": "array",
                                "items": {"type": "number", "minimum": 0,
                                          "maximum": 1}},
            },
        },
        "replicates": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "discretisation": {
            "type": "object",
            "properties": {
                "gamma": {"type": "number", "exclusiveMinimum": 0,
                          "exclusiveMaximum": 1},
                "ell": {"type": "integer", "minimum": 1},
            },
        },
        "kernel": {
            "type": "object",
            "properties": {
                "weight_threshold": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "tolerances": {"type": "object"},
    },
    "required": ["model", "n", "r"],
    "additionalProperties": False,
}

DEFAULTS = {
    "model": {"kind": "point_mass", "d": 10.0},
    "n": 10000,
    "r": 2,
    "seeding": {"p": 0.2},
    "replicates": 1,
    "seed": 0,
    "threads": 1,
    "out": ".",
    "discretisation": {"gamma": 0.1, "ell": 20},
    "kernel": {"weight_threshold": 10.0},
    "tolerances": {},
}


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    # model and seeding are alternatives, replaced wholesale; the auxiliary
    # sections merge key-by-key over their defaults
    mergeable = {"discretisation", "kernel", "tolerances"}
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        for key, val in user.items():
            if key in mergeable and isinstance(val, dict):
                cfg[key].update(val)
            else:
                cfg[key] = val
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    try:
        import jsonschema
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except Exception as exc:
        raise ConfigError(f"config rejected by schema: {exc}") from exc
    if cfg["model"]["kind"] == "mixture":
        vals = cfg["model"].get("values")
        probs = cfg["model"].get("probs")
        if not vals or not probs or len(vals) != len(probs) \
                or abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError("mixture model needs matching values/probs "
                              "summing to 1")
    return cfg


def build_distribution(model: dict, n: int) -> WeightDistribution:
    kind = model["kind"]
    if kind == "point_mass":
        return WeightDistribution.point_mass(model["d"])
    if kind == "mixture":
        return WeightDistribution.finite_mixture(model["values"], model["probs"])
    zeta = model.get("zeta")
    cutoff = float(n) ** zeta if zeta else None
    return WeightDistribution.truncated_power_law(
        model["beta"], x0=model.get("d", 1.0), cutoff=cutoff)


def build_sequence(model: dict, n: int) -> WeightSequence:
    kind = model["kind"]
    if kind == "point_mass":
        return make_point_mass(model["d"], n)
    if kind == "mixture":
        probs = np.asarray(model["probs"], dtype=np.float64)
        counts = np.floor(probs * n).astype(int)
        # largest-remainder rounding so counts sum to n exactly
        rem = probs * n - counts
        for k in np.argsort(-rem)[: n - counts.sum()]:
            counts[k] += 1
        vals = np.repeat(np.asarray(model["values"], dtype=np.float64), counts)
        return weight_sequence_from_values(vals)
    zeta = model.get("zeta")
    cap = float(n) ** zeta if zeta else None
    return make_power_law(n, model.get("d", 1.0), model["beta"],
                          model.get("i0", 0.0), cap=cap)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(index,)))


def _run_replicates(cfg: dict, worker):
    reps = cfg["replicates"]
    threads = cfg.get("threads", 1)
    if threads <= 1:
        return [worker(i) for i in range(reps)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(worker, range(reps)))


def _outdir(cfg: dict) -> Path:
    path = Path(cfg["out"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Theory record
# ---------------------------------------------------------------------------

def theory_record(cfg: dict) -> dict:
    dist = build_distribution(cfg["model"], cfg["n"])
    r = cfg["r"]
    seeding = cfg.get("seeding", {})
    if "p" in seeding:
        p = float(seeding["p"])
        if p == 1.0:
            return {"model": cfg["model"], "r": r, "p": p, "y_hat": 1.0,
                    "derivative": -1.0, "fraction": 1.0, "stable": True,
                    "boundary_root": True}
        fp = theory.solve_fixed_point(dist, p, r)
        frac = theory.final_fraction(dist, fp.y_hat, p, r)
        return {"model": cfg["model"], "r": r, "p": p, "y_hat": fp.y_hat,
                "derivative": fp.derivative, "fraction": frac,
                "stable": fp.stable, "boundary_root": fp.boundary_root}
    if cfg["model"]["kind"] != "power_law":
        raise ConfigError("vanishing-density seeding needs a power-law model")
    beta = cfg["model"]["beta"]
    x0 = cfg["model"].get("d", 1.0)
    fp = theory.powerlaw_fixed_point(beta, x0, r)
    frac = theory.final_fraction(
        WeightDistribution.truncated_power_law(beta, x0), fp.y_hat, 0.0, r)
    rec = {"model": cfg["model"], "r": r, "p": 0.0, "y_hat": fp.y_hat,
           "derivative": fp.derivative, "fraction": frac,
           "stable": fp.stable, "died_out": fp.died_out}
    zeta = cfg["model"].get("zeta")
    if zeta:
        crit = theory.critical_density(cfg["n"], r, beta, zeta)
        rec["a_c"] = crit.a_c
        rec["a_c_exponent"] = crit.exponent
        rec["zeta_in_range"] = crit.zeta_in_range
    return rec


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate(cfg: dict) -> int:
    ws = build_sequence(cfg["model"], cfg["n"])
    g = sample_chung_lu(ws, replicate_rng(cfg["seed"], 0))
    out = _outdir(cfg)
    g.save_binary(out / "graph.clg1")
    print(f"n={g.n} m={g.m} mean_degree={g.mean_degree:.6f}")
    log.info("graph written to %s", out / "graph.clg1")
    return EXIT_OK


def cmd_percolate(cfg: dict) -> int:
    ws = build_sequence(cfg["model"], cfg["n"])
    p = float(cfg["seeding"].get("p", 0.0))
    r = cfg["r"]

    def worker(i: int):
        rng = replicate_rng(cfg["seed"], i)
        g = sample_chung_lu(ws, rng)
        seeds = percolation.seed_bernoulli(ws.n, p, rng)
        res = percolation.run_bootstrap(g, seeds, r)
        return seeds.size, res.size, res.rounds

    rows = _run_replicates(cfg, worker)
    out = _outdir(cfg)
    with open(out / "percolate.csv", "w") as fh:
        fh.write("replicate,A0,Af,rounds\n")
        for i, (a0, af, rounds) in enumerate(rows):
            fh.write(f"{i},{a0},{af},{rounds}\n")
    mean_frac = float(np.mean([af for _, af, _ in rows])) / ws.n
    print(f"replicates={len(rows)} mean_fraction={mean_frac:.6f}")
    return EXIT_OK


def cmd_lln(cfg: dict) -> int:
    ws = build_sequence(cfg["model"], cfg["n"])
    p = float(cfg["seeding"]["p"])
    r = cfg["r"]
    record = theory_record(cfg)

    def worker(i: int):
        rng = replicate_rng(cfg["seed"], i)
        g = sample_chung_lu(ws, rng)
        seeds = percolation.seed_bernoulli(ws.n, p, rng)
        res = percolation.run_bootstrap(g, seeds, r)
        return seeds.size, res.size

    rows = _run_replicates(cfg, worker)
    fracs = np.array([af / ws.n for _, af in rows])
    out = _outdir(cfg)
    with open(out / "lln.csv", "w") as fh:
        fh.write("replicate,A0,Af,fraction\n")
        for i, (a0, af) in enumerate(rows):
            fh.write(f"{i},{a0},{af},{_fmt(af / ws.n)}\n")
    record["sim_mean_fraction"] = float(fracs.mean())
    record["sim_std_fraction"] = float(fracs.std())
    if record["stable"]:
        record["gap"] = abs(record["fraction"] - float(fracs.mean()))
    else:
        record["gap"] = None
        record["comparison_skipped"] = "unstable fixed point"
        log.info("fixed point unstable; LLN comparison skipped")
    with open(out / "theory.json", "w") as fh:
        json.dump(record, fh, sort_keys=True, indent=1)
    gap = record["gap"]
    print(f"mean_fraction={fracs.mean():.6f} std={fracs.std():.6f} "
          f"prediction={record['fraction']:.6f} "
          f"gap={gap if gap is None else round(gap, 6)}")
    return EXIT_OK


def cmd_scan(cfg: dict) -> int:
    if cfg["model"]["kind"] != "power_law":
        raise ConfigError("scan needs a power-law model")
    exps = cfg["seeding"].get("a_exponents")
    if not exps:
        raise ConfigError("scan needs seeding.a_exponents")
    ws = build_sequence(cfg["model"], cfg["n"])
    n, r = cfg["n"], cfg["r"]
    record = theory_record(cfg)
    rows = []
    for k, expo in enumerate(exps):
        a_n = float(n) ** float(expo)

        def worker(i: int, _k=k, _a=a_n):
            rng = replicate_rng(cfg["seed"], _k * 100000 + i)
            g = sample_chung_lu(ws, rng)
            seeds = percolation.seed_bernoulli(n, _a / n, rng)
            res = percolation.run_bootstrap(g, seeds, r)
            return seeds.size, res.size

        reps = _run_replicates(cfg, worker)
        ratios = [af / max(a0, 1) for a0, af in reps]
        fracs = [af / n for _, af in reps]
        rows.append((float(expo), a_n, float(np.mean(ratios)),
                     float(np.mean(fracs))))
    out = _outdir(cfg)
    with open(out / "scan.csv", "w") as fh:
        fh.write("exponent,a_n,mean_ratio_af_a0,mean_fraction\n")
        for expo, a_n, ratio, frac in rows:
            fh.write(f"{_fmt(expo)},{_fmt(a_n)},{_fmt(ratio)},{_fmt(frac)}\n")
    with open(out / "scan.json", "w") as fh:
        json.dump(record, fh, sort_keys=True, indent=1)
    print(f"scanned {len(rows)} exponents; critical exponent "
          f"{record.get('a_c_exponent')}")
    return EXIT_OK


def _exact_discretisation(cfg: dict):
    """Class structure used by trajectory runs; exact for atomic models."""
    dist = build_distribution(cfg["model"], cfg["n"])
    gamma = cfg["discretisation"]["gamma"]
    ell = cfg["discretisation"]["ell"]
    part = discretise.build_partition(dist, gamma, ell)
    return part, dist


def cmd_trajectory(cfg: dict) -> int:
    p = float(cfg["seeding"]["p"])
    r = cfg["r"]
    n = cfg["n"]
    part, dist = _exact_discretisation(cfg)
    ws = build_sequence(cfg["model"], cfg["n"])
    if dist.kind == "power_law":
        minus = discretise.discretise_minus(ws, part, p,
                                            replicate_rng(cfg["seed"], 990000))
        seq = minus.sequence
        always = minus.always_infected
        disc = discretise.build_discretisation(part, "minus", p=p)
        norm = ws.total_weight
    else:
        cell_idx = part.map_weights(ws.weights)
        if np.any(cell_idx < 0):
            raise ConfigError("trajectory model must discretise exactly; "
                              "lower gamma to keep all atoms light")
        seq = WeightSequence(ws.weights, class_of=cell_idx)
        always = None
        disc = discretise.build_discretisation(part, "minus", p=p)
        norm = ws.total_weight
    sol = odeflow.integrate(disc, p, r, h=1e-4)

    def worker(i: int):
        rng = replicate_rng(cfg["seed"], i)
        traj = percolation.run_sequential_exposure(
            seq, norm, r, rng, p=p, always_infected=always, n_ref=n)
        rep = percolation.deviation_report(traj, sol)
        return traj, rep

    results = _run_replicates(cfg, worker)
    out = _outdir(cfg)
    traj0, _ = results[0]
    tau_sim = traj0.t / n
    pcols = traj0.c.shape[1] * traj0.c.shape[2]
    with open(out / "trajectory.csv", "w") as fh:
        heads = ["t", "tau", "u_over_n", "nu", "wU_over_n", "mu_U"]
        pl, rr = traj0.c.shape[1], traj0.c.shape[2]
        heads += [f"c_{i+1}_{j}_over_n" for i in range(pl) for j in range(rr)]
        heads += [f"gamma_{i+1}_{j}" for i in range(pl) for j in range(rr)]
        fh.write(",".join(heads) + "\n")
        flat = traj0.c.reshape(-1, pcols)
        for k in range(traj0.u.size):
            tau = tau_sim[k]
            row = [str(k), _fmt(tau), _fmt(traj0.u[k] / n),
                   _fmt(np.interp(tau, sol.tau, sol.nu)),
                   _fmt(traj0.w_u[k] / n),
                   _fmt(np.interp(tau, sol.tau, sol.mu_u))]
            row += [_fmt(x / n) for x in flat[k]]
            row += [_fmt(np.interp(tau, sol.tau, sol.gamma[:, i, j]))
                    for i in range(pl) for j in range(rr)]
            fh.write(",".join(row) + "\n")
    devs = [rep.max_deviation for _, rep in results]
    summary = {
        "max_deviation_per_replicate": devs,
        "median_max_deviation": float(np.median(devs)),
        "per_coordinate_first": results[0][1].per_coordinate,
        "overlap_truncated_any": any(rep.overlap_truncated for _, rep in results),
        "y_hat": sol.y_hat, "alpha_hat": sol.alpha_hat, "tau_hat": sol.tau_hat,
    }
    with open(out / "deviation.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
    print(f"median max deviation {summary['median_max_deviation']:.5f} "
          f"over {len(devs)} replicates")
    return EXIT_OK


def cmd_sandwich(cfg: dict) -> int:
    p = float(cfg["seeding"]["p"])
    r = cfg["r"]
    ws = build_sequence(cfg["model"], cfg["n"])
    dist = build_distribution(cfg["model"], cfg["n"])
    gamma = cfg["discretisation"]["gamma"]
    ell = cfg["discretisation"]["ell"]
    rng = replicate_rng(cfg["seed"], 0)
    res = discretise.sandwich_experiment(ws, dist, gamma, ell, p, r,
                                         cfg["replicates"], rng)
    out = _outdir(cfg)
    with open(out / "sandwich.csv", "w") as fh:
        fh.write("replicate,size_orig,size_minus,size_plus\n")
        for i in range(res.replicates):
            fh.write(f"{i},{res.sizes_orig[i]},{res.sizes_minus[i]},"
                     f"{res.sizes_plus[i]}\n")
    print(f"coupled_ok={res.coupled_ok} vacuous_lower={res.vacuous_lower} "
          f"upper_margin={res.upper_dominance_margin:.4f}")
    if not res.coupled_ok:
        log.error("coupled lower bound violated: %d subgraph, %d size",
                  res.subgraph_violations, res.lower_violations)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_kernel(cfg: dict) -> int:
    if cfg["model"]["kind"] != "power_law":
        raise ConfigError("kernel report needs a power-law model")
    ws = build_sequence(cfg["model"], cfg["n"])
    n, r = cfg["n"], cfg["r"]
    C = float(cfg["kernel"]["weight_threshold"])
    seeding = cfg["seeding"]
    if "p" in seeding:
        prob = float(seeding["p"])
    else:
        prob = float(n) ** float(seeding["a_exponent"]) / n
    kernel_mask = ws.weights >= C
    k_size = int(kernel_mask.sum())

    def worker(i: int):
        rng = replicate_rng(cfg["seed"], i)
        g = sample_chung_lu(ws, rng)
        seeds = percolation.seed_bernoulli(n, prob, rng)
        frozen = np.ones(n, dtype=np.uint8)
        frozen[kernel_mask] = 0
        frozen[seeds] = 0
        res = percolation.run_bootstrap(g, seeds, r, frozen=frozen)
        infected_kernel = int((res.active & kernel_mask).sum())
        return seeds.size, infected_kernel

    rows = _run_replicates(cfg, worker)
    out = _outdir(cfg)
    vacuous = k_size == 0
    with open(out / "kernel.csv", "w") as fh:
        fh.write("replicate,A0,kernel_size,kernel_infected,kernel_fraction\n")
        for i, (a0, ki) in enumerate(rows):
            frac = 1.0 if vacuous else ki / k_size
            fh.write(f"{i},{a0},{k_size},{ki},{_fmt(frac)}\n")
    fracs = [1.0 if vacuous else ki / k_size for _, ki in rows]
    print(f"kernel_size={k_size} mean_kernel_fraction={np.mean(fracs):.4f}"
          f"{' (vacuous)' if vacuous else ''}")
    return EXIT_OK


def cmd_theory(cfg: dict) -> int:
    record = theory_record(cfg)
    out = _outdir(cfg)
    text = json.dumps(record, sort_keys=True, indent=1)
    with open(out / "theory.json", "w") as fh:
        fh.write(text)
    print(text)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "percolate": cmd_percolate,
    "lln": cmd_lln,
    "scan": cmd_scan,
    "trajectory": cmd_trajectory,
    "sandwich": cmd_sandwich,
    "kernel": cmd_kernel,
    "theory": cmd_theory,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bootperc",
        description="bootstrap percolation experiments on product-weight "
                    "random graphs")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON config path")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--replicates", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--print-config", action="store_true",
                        help="print the resolved config (with defaults) and exit")
    args = parser.parse_args(argv)

    level = os.environ.get("BOOTPERC_LOG", "error").lower()
    logging.basicConfig(
        level={"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}.get(level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = load_config(args.config, {
            "seed": args.seed, "replicates": args.replicates,
            "threads": args.threads, "out": args.out})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        print(json.dumps(cfg, sort_keys=True, indent=1))
        return EXIT_OK
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except theory.NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
