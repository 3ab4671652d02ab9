"""Command-line entry point: ``jtsampler <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import math
import os
import random
import sys
import time
from collections import Counter

import numpy as np

from . import __version__
from . import junction_tree as jt
from . import oracle
from .ggim import GgimParams, GgimScore, PriorSpec, read_data, simulate_data, write_data
from .graph_core import Graph, NotDecomposable, format_edge_list, read_edge_list
from .moves import MULTI, SINGLE
from .profile import ProfileScore
from .sampler import (
    STANDARD,
    TWO_STAGE,
    AnnealOptions,
    ChainOptions,
    EdgeOccupancy,
    Hooks,
    TargetDistribution,
    UniformScore,
    anneal,
    edge_penalty,
    run_chain,
    write_trace,
)


def _metadata(args, extra=None) -> dict:
    # output paths are left out so that reruns elsewhere produce identical files
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "out", "write_graph")}
    out = {"tool": f"jtsampler {__version__}", "seed": getattr(args, "seed", None),
           "config": json.dumps(cfg, sort_keys=True)}
    out.update(extra or {})
    return out


def _header(meta: dict) -> str:
    return "".join(f"# {k}: {v}\n" for k, v in meta.items())


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _rule(name):
    return TWO_STAGE if name in ("two-stage", TWO_STAGE) else STANDARD


def _cadence(k):
    return None if not k else int(k)


# -- verify --------------------------------------------------------------------


def cmd_verify(args) -> int:
    rows = []

    def check(name, value, expected, ok):
        rows.append((name, str(value), str(expected), "PASS" if ok else "FAIL"))
        print(f"{name:<44} {value!s:>24} {expected!s:>24}  {'PASS' if ok else 'FAIL'}", flush=True)

    print(f"{'check':<44} {'value':>24} {'expected':>24}  status")
    if args.quick:
        v, n_dec, n_mu1, mu_edgeless = 6, 18154, None, 6 ** 4
    else:
        v, n_dec, n_mu1, mu_edgeless = 7, 617675, 187447, 16807
    t0 = time.time()
    table = oracle.enumerate_decomposable(v)
    check(f"graphs scanned (v={v})", table.n_scanned, 2 ** (v * (v - 1) // 2),
          table.n_scanned == 2 ** (v * (v - 1) // 2))
    check(f"decomposable graphs (v={v})", len(table), n_dec, len(table) == n_dec)
    n1 = sum(1 for m in table.mu if m == 1)
    if n_mu1 is not None:
        check(f"graphs with one junction tree (v={v})", n1, n_mu1, n1 == n_mu1)
    edgeless = jt.count_junction_trees(jt.build_junction_tree(Graph.edgeless(v)))
    check(f"mu of the edgeless graph (v={v})", edgeless, mu_edgeless, edgeless == mu_edgeless)
    k0 = table.index[tuple(1 << i for i in range(v))]
    check(f"table mu of the edgeless graph (v={v})", table.mu[k0], mu_edgeless,
          table.mu[k0] == mu_edgeless)

    vmax = 5 if args.quick else 6
    bad = 0
    total = 0
    for w in range(1, vmax + 1):
        tw = oracle.enumerate_decomposable(w)
        for k in range(len(tw)):
            g = tw.graph(k)
            total += 1
            if jt.count_junction_trees(jt.build_junction_tree(g)) != len(oracle.brute_force_junction_trees(g)):
                bad += 1
    check(f"mu vs brute force, all graphs v<={vmax}", f"{total - bad}/{total}", f"{total}/{total}", bad == 0)

    worst = 0.0
    for arity in (SINGLE, MULTI):
        for rule in (STANDARD, TWO_STAGE):
            for mu in (False, True):
                r = oracle.transition_matrix_check(4, TargetDistribution(UniformScore(), mu), arity, rule)
                worst = max(worst, r)
    check("stationarity residual v=4 (8 kernels)", f"{worst:.3e}", "< 1e-12", worst < 1e-12)
    n_fail = sum(1 for r in rows if r[3] == "FAIL")
    print(f"{len(rows) - n_fail}/{len(rows)} checks passed in {time.time() - t0:.1f}s")
    return 1 if n_fail else 0


# -- sample ------------------------------------------------------------------------


def cmd_sample(args) -> int:
    v = args.v
    if args.graph:
        g = read_edge_list(args.graph)
        v = g.v
    else:
        g = Graph.edgeless(v)
    j0 = jt.build_junction_tree(g)
    if args.mu_correction is None:
        mu = args.mode == "graph-uniform"
    else:
        mu = args.mu_correction == "on"
    opts = ChainOptions(sweeps=args.sweeps, thin=args.thin, param_update_every=1,
                        randomize_tree_every=_cadence(args.randomize_every),
                        acceptance_rule=_rule(args.rule), move_arity=args.arity, seed=args.seed)
    counts = Counter()
    want_cdf = v <= 7 and not args.no_cdf

    def observe(sweep, state):
        counts[tuple(state.cliques())] += 1

    hooks = Hooks(observer=observe if want_cdf else None)
    t0 = time.time()
    res = run_chain(j0, TargetDistribution(UniformScore(), mu), opts, hooks)
    elapsed = time.time() - t0
    out = _outdir(args.out)
    meta = _metadata(args, {"mu_correction": "on" if mu else "off"})
    write_trace(res, os.path.join(out, "trace.csv"), meta)
    print(f"sweeps={args.sweeps} acceptance={res.acceptance_rate:.4f} elapsed={elapsed:.1f}s")
    if want_cdf:
        table = oracle.enumerate_decomposable(v)
        mode = "graph" if mu else "jt"
        expected = table.expected(mode)
        observed = np.zeros(len(table))
        for key, c in counts.items():
            observed[table.index[key]] = c
        if observed.sum():
            observed /= observed.sum()
        order = table.order_by_mu()
        ecdf = np.cumsum(expected[order])
        ocdf = np.cumsum(observed[order])
        with open(os.path.join(out, "cdf.csv"), "w") as fh:
            fh.write(_header(meta))
            fh.write("rank,mu,expected,observed\n")
            step = max(1, len(order) // 5000)
            for r in list(range(0, len(order), step)) + [len(order) - 1]:
                fh.write(f"{r},{table.mu[order[r]]},{ecdf[r]:.8f},{ocdf[r]:.8f}\n")
        print(f"max |observed - expected| CDF difference: {np.max(np.abs(ecdf - ocdf)):.5f}")
    return 0


# -- fit ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    data = read_data(args.data)
    v = data.v
    prior = PriorSpec(args.alpha, args.beta, args.edge_penalty)
    score = GgimScore(data, GgimParams(args.init_sigma2, args.init_rho, v), prior)
    target = TargetDistribution(score, args.mu_correction != "off")
    opts = ChainOptions(sweeps=args.sweeps, thin=args.thin, param_update_every=args.param_every,
                        randomize_tree_every=_cadence(args.randomize_every),
                        acceptance_rule=_rule(args.rule), move_arity=args.arity, seed=args.seed)
    j0 = jt.build_junction_tree(Graph.edgeless(v))
    burn = int(args.sweeps * args.burn_in)
    occ = EdgeOccupancy(j0, start=burn)
    hooks = Hooks(param_update=lambda state, rng: score.update_params(state, rng, args.rho_step),
                  scalars=lambda: (score.params.sigma2, score.params.rho),
                  scalar_names=("sigma2", "rho"), on_accept=occ.on_accept)
    t0 = time.time()
    res = run_chain(j0, target, opts, hooks)
    elapsed = time.time() - t0
    out = _outdir(args.out)
    meta = _metadata(args, {"n": data.n, "v": v})
    write_trace(res, os.path.join(out, "trace.csv"), meta)
    freq = occ.frequencies(args.sweeps)
    with open(os.path.join(out, "edges.csv"), "w") as fh:
        fh.write(_header(meta))
        np.savetxt(fh, freq, delimiter=",", fmt="%.6f")
    kept = [r for r in res.trace if r[0] > burn] or res.trace
    if kept:
        s2 = np.mean([r[5] for r in kept])
        rho = np.mean([r[6] for r in kept])
        print(f"posterior mean sigma2={s2:.4f} rho={rho:.4f}")
    print(f"sweeps={args.sweeps} acceptance={res.acceptance_rate:.4f} elapsed={elapsed:.1f}s "
          f"final edges={res.state.n_edges()} edges with frequency > 0.5: {int((np.triu(freq, 1) > 0.5).sum())}")
    return 0


# -- simulate ----------------------------------------------------------------------


def band_graph(v: int, k: int) -> Graph:
    """Order-k Markov chain graph: i ~ j iff 0 < |i - j| <= k."""
    return Graph(v, [(i, j) for i in range(v) for j in range(i + 1, min(v, i + k + 1))])


def cmd_simulate(args) -> int:
    if args.graph:
        g = read_edge_list(args.graph)
    elif args.band:
        g = band_graph(*args.band)
    else:
        raise ValueError("give --graph FILE or --band V K")
    tree = jt.build_junction_tree(g)
    data = simulate_data(tree, GgimParams(args.sigma2, args.rho, g.v), args.n,
                         np.random.default_rng(args.seed))
    meta = _metadata(args, {"graph_edges": json.dumps(g.edges), "sigma2": args.sigma2,
                            "rho": args.rho, "n": args.n, "v": g.v})
    write_data(data, args.out, meta)
    if args.write_graph:
        with open(args.write_graph, "w") as fh:
            fh.write(format_edge_list(g, [f"{k}: {val}" for k, val in meta.items()]))
    print(f"wrote {args.n} x {g.v} data to {args.out}")
    return 0


# -- anneal ------------------------------------------------------------------------


def _anneal_one(data_gram, n, alpha, args, seed):
    v = data_gram.shape[0]
    score = ProfileScore(data_gram, n, alpha)
    opts = ChainOptions(sweeps=args.sweeps, thin=max(1, args.sweeps // 1000) if args.sweeps else 1,
                        param_update_every=1, randomize_tree_every=_cadence(args.randomize_every),
                        acceptance_rule=_rule(args.rule), move_arity=args.arity, seed=seed)
    a_opts = AnnealOptions(args.cooling, alpha, args.t0)
    j0 = jt.build_junction_tree(Graph.edgeless(v))
    return anneal(j0, score, a_opts, opts, random.Random(seed))


def cmd_anneal(args) -> int:
    data = read_data(args.data)
    alpha = edge_penalty(data.v, args.d)
    out = _outdir(args.out)
    meta = _metadata(args, {"alpha": f"{alpha:.12g}", "n": data.n, "v": data.v})
    print(f"alpha = log(({data.v}-1)/{args.d} - 1) = {alpha:.6f}")
    results = []
    t0 = time.time()
    for r in range(args.replicates):
        res = _anneal_one(data.gram, data.n, alpha, args, args.seed + r)
        results.append(res)
        print(f"replicate {r}: best={res.best_score:.6f} final={res.final_score:.6f} "
              f"best_sweep={res.best_sweep}", flush=True)
    elapsed = time.time() - t0
    best_i = max(range(len(results)), key=lambda i: results[i].best_score)
    best = results[best_i]
    best_graph = jt.graph_of(best.best_tree)
    best_key = best.best_tree.cliques()
    with open(os.path.join(out, "replicates.csv"), "w") as fh:
        fh.write(_header(meta))
        fh.write("replicate,seed,best_score,final_score,best_sweep,visited_best,final_is_best\n")
        for r, res in enumerate(results):
            visited = res.best_tree.cliques() == best_key
            final = res.state.cliques() == best_key
            fh.write(f"{r},{args.seed + r},{res.best_score:.10f},{res.final_score:.10f},"
                     f"{res.best_sweep},{int(visited)},{int(final)}\n")
    with open(os.path.join(out, "anneal_trace.csv"), "w") as fh:
        fh.write(_header(meta))
        fh.write("sweep,temperature,score,best\n")
        for row in results[0].trace:
            fh.write(",".join(f"{x:.10g}" for x in row) + "\n")
    with open(os.path.join(out, "best.txt"), "w") as fh:
        fh.write(format_edge_list(best_graph, [f"{k}: {val}" for k, val in meta.items()]
                                  + [f"penalized log-likelihood: {best.best_score:.10f}"]))
    n_visit = sum(1 for res in results if res.best_tree.cliques() == best_key)
    print(f"best penalized score {best.best_score:.6f} ({best_graph.n_edges} edges); "
          f"{n_visit}/{len(results)} replicates reached it; elapsed {elapsed:.1f}s")
    return 0


# -- count-jt ------------------------------------------------------------------------


def cmd_count_jt(args) -> int:
    g = read_edge_list(args.graph)
    tree = jt.build_junction_tree(g)
    mu = jt.count_junction_trees(tree)
    print(f"mu {mu}")
    print(f"log_mu {math.log(mu):.12g}")
    print(f"cliques {len(tree.cliques())}")
    return 0


# -- parser ----------------------------------------------------------------------------


def _chain_flags(p, sweeps, thin=100, arity=MULTI):
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--sweeps", type=int, default=sweeps)
    p.add_argument("--thin", type=int, default=thin)
    p.add_argument("--arity", choices=(SINGLE, MULTI), default=arity)
    p.add_argument("--rule", choices=("standard", "two-stage"), default="standard")
    p.add_argument("--randomize-every", type=int, default=1000,
                   help="sweeps between junction tree randomizations (0 disables)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jtsampler", description=__doc__)
    ap.add_argument("--version", action="version", version=f"jtsampler {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the exhaustive oracle checks")
    p.add_argument("--quick", action="store_true", help="v=6 enumeration instead of v=7")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sample", help="sample junction trees under a uniform target")
    _chain_flags(p, 1_000_000)
    p.add_argument("--v", type=int, default=7)
    p.add_argument("--graph", help="starting graph (edge-list file); default edgeless")
    p.add_argument("--mode", choices=("jt-uniform", "graph-uniform"), default="jt-uniform")
    p.add_argument("--mu-correction", choices=("on", "off"), default=None,
                   help="override the mode's mu correction")
    p.add_argument("--no-cdf", action="store_true")
    p.add_argument("--out", default="sample_out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fit", help="posterior sampling for the intra-class Gaussian model")
    _chain_flags(p, 1_000_000)
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--edge-penalty", type=float, default=0.0, help="log p(G) = -c |E|")
    p.add_argument("--rho-step", type=float, default=0.5)
    p.add_argument("--param-every", type=int, default=1000)
    p.add_argument("--init-sigma2", type=float, default=1.0)
    p.add_argument("--init-rho", type=float, default=0.0)
    p.add_argument("--burn-in", type=float, default=0.5, help="fraction of sweeps discarded")
    p.add_argument("--mu-correction", choices=("on", "off"), default="on")
    p.add_argument("--out", default="fit_out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate intra-class Gaussian data on a graph")
    p.add_argument("--graph")
    p.add_argument("--band", type=int, nargs=2, metavar=("V", "K"),
                   help="order-K Markov chain graph on V vertices instead of --graph")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--sigma2", type=float, default=30.0)
    p.add_argument("--rho", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default="data.csv")
    p.add_argument("--write-graph", help="also write the generating graph as an edge list")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("anneal", help="simulated annealing for the penalized profile likelihood")
    _chain_flags(p, 3_000_000)
    p.add_argument("--data", required=True)
    p.add_argument("--d", type=float, default=1.0, help="expected average degree")
    p.add_argument("--cooling", type=float, default=0.999999)
    p.add_argument("--t0", type=float, default=1.0, help="initial temperature")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--out", default="anneal_out")
    p.set_defaults(func=cmd_anneal)

    p = sub.add_parser("count-jt", help="number of junction trees of a decomposable graph")
    p.add_argument("--graph", required=True)
    p.set_defaults(func=cmd_count_jt)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NotDecomposable, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
