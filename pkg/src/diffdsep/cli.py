"""Command line front end: ``gen``, ``pvalues``, ``discover`` and ``eval``.

Settings come from, in increasing precedence: built-in defaults, an INI style
config file (``--config``) and command line flags. Exit status is 0 on
success, 1 on a user error and 2 when an internal invariant is violated.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .citests import CiTable, ConfigurationError, build_ci_table, oracle_table, read_dataset, write_dataset
from .datagen import ancestral_sample, gen_cpts, gen_er_dag, gen_sf_dag, write_manifest
from .graph import GraphError, read_dag, write_adjacency
from .sampler import ChainConfig, run_chain
from .selection import DagCandidate, evaluate, select_topk

logger = logging.getLogger("diffdsep")

CACHE_ENV = "DIFFDSEP_CACHE_DIR"


class UserError(Exception):
    """Bad input from the command line, config file or filesystem."""


# ------------------------------------------------------------------ config


@dataclass
class RunConfig:
    chain: ChainConfig = field(default_factory=ChainConfig)
    betas: list = field(default_factory=lambda: [0.8])
    data: str | None = None
    oracle: str | None = None
    cache_dir: str | None = None
    out_dir: str = "."
    test: str = "auto"
    workers: int = 1

    def __post_init__(self):
        if not self.betas:
            raise UserError("the beta list must not be empty")
        if any(b <= 0 for b in self.betas):
            raise UserError("every beta must be positive")
        if self.workers < 1:
            raise UserError("workers must be at least 1")

    def as_dict(self) -> dict:
        out = asdict(self)
        out["chain"]["support"] = list(self.chain.support)
        return out


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _parse_float_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(",", " ").split()]


_CHAIN_TYPES = {
    "beta": float, "steps": int, "alpha_train": float, "alpha_eval": float, "s": float,
    "seed": int, "topk": int, "max_len": int, "init": float, "statement_scale": float,
    "support": lambda v: tuple(_parse_float_list(v)),
    "task_weights": lambda v: tuple(_parse_float_list(v)),
}


def read_config_file(path) -> dict:
    """Flatten the ``[chain]`` and ``[run]`` sections of an INI file."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise UserError(f"cannot read config file {path}")
    out = {}
    for section in ("chain", "run"):
        if parser.has_section(section):
            out.update(dict(parser.items(section)))
    return out


def build_run_config(args) -> RunConfig:
    file_vals = read_config_file(args.config) if getattr(args, "config", None) else {}
    chain_kw = {}
    for f in fields(ChainConfig):
        flag = getattr(args, f.name, None)
        if f.name == "beta":
            continue
        if flag is not None:
            chain_kw[f.name] = flag
        elif f.name in file_vals:
            try:
                chain_kw[f.name] = _CHAIN_TYPES[f.name](file_vals[f.name])
            except (KeyError, ValueError) as exc:
                raise UserError(f"bad config value for {f.name}: {file_vals[f.name]!r}") from exc
    if getattr(args, "beta", None):
        betas = list(args.beta)
    elif "betas" in file_vals or "beta" in file_vals:
        betas = _parse_float_list(file_vals.get("betas", file_vals.get("beta")))
    else:
        betas = [ChainConfig.beta]
    try:
        chain = ChainConfig(beta=betas[0], **chain_kw)
    except ValueError as exc:
        raise UserError(str(exc)) from exc

    def pick(name, default):
        flag = getattr(args, name, None)
        return flag if flag is not None else file_vals.get(name, default)

    cache = pick("cache_dir", None) or os.environ.get(CACHE_ENV)
    return RunConfig(
        chain=chain,
        betas=betas,
        data=pick("data", None),
        oracle=pick("oracle", None),
        cache_dir=cache,
        out_dir=pick("out", "."),
        test=pick("test", "auto"),
        workers=int(pick("workers", 1)),
    )


# ------------------------------------------------------------------- gen


def _check_free(paths, force: bool):
    taken = [str(p) for p in paths if Path(p).exists()]
    if taken and not force:
        raise UserError(f"refusing to overwrite {', '.join(taken)} (use --force)")


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "data.csv", out / "truth.csv", out / "manifest.json"]
    _check_free(paths, args.force)
    if args.model == "er":
        dag = gen_er_dag(args.nodes, args.ratio, args.seed)
        params = {"d": args.nodes, "r": args.ratio, "p": min(1.0, args.ratio / args.nodes)}
    else:
        dag = gen_sf_dag(args.nodes, args.ratio, args.seed)
        params = {"d": args.nodes, "r": args.ratio, "m": int(args.ratio // 2)}
    # independent streams for the CPTs and the samples
    cpt_seed, sample_seed = np.random.SeedSequence(args.seed).spawn(2)
    net = gen_cpts(dag, cpt_seed)
    data = ancestral_sample(net, args.samples, sample_seed)
    write_dataset(paths[0], data)
    write_adjacency(paths[1], dag)
    params["n"] = args.samples
    write_manifest(
        paths[2], tool="diffdsep", version=__version__, generator=args.model, params=params,
        seed=args.seed, rng="numpy PCG64", files=["data.csv", "truth.csv"],
        config_hash=config_hash({"model": args.model, **params, "seed": args.seed}),
    )
    print(f"wrote {paths[0]}, {paths[1]}, {paths[2]} ({dag.n_edges} edges)")
    return 0


# --------------------------------------------------------------- pvalues


def _load_data(path):
    if path is None:
        raise UserError("no dataset given (--data)")
    if not Path(path).exists():
        raise UserError(f"dataset {path} does not exist")
    return read_dataset(path)


def _table_for(cfg: RunConfig) -> CiTable:
    if cfg.oracle:
        return oracle_table(read_dag(cfg.oracle))
    data = _load_data(cfg.data)
    try:
        return build_ci_table(data, cfg.test, cache_dir=cfg.cache_dir)
    except ConfigurationError as exc:
        raise UserError(str(exc)) from exc


def cmd_pvalues(args) -> int:
    cfg = build_run_config(args)
    t0 = time.perf_counter()
    table = _table_for(cfg)
    wall = time.perf_counter() - t0
    idx = table.index
    status = "cache hit" if table.source == "cache" else "computed"
    print(f"{status}: test={table.test} d={table.n_nodes} |I0|={len(idx.order0)} |I1|={len(idx.order1)} "
          f"M0={table.m0:.6g} M1={table.m1:.6g} wall={wall:.3f}s")
    return 0


# -------------------------------------------------------------- discover


def _run_one(job):
    table, chain, trace_path = job
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = run_chain(table, chain, trace_path=trace_path)
    return result.candidates, result.acceptance_rate, [str(w.message) for w in caught]


def cmd_discover(args) -> int:
    cfg = build_run_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = _table_for(cfg)

    jobs = []
    for i, beta in enumerate(cfg.betas):
        chain = ChainConfig(**{**asdict(cfg.chain), "beta": beta, "seed": cfg.chain.seed + i})
        sub = out / f"chain_{i}_beta{beta:g}"
        sub.mkdir(exist_ok=True)
        jobs.append((table, chain, str(sub / "trace.jsonl")))
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    merged: list[DagCandidate] = []
    chains = []
    for (_, chain, trace), (cands, rate, msgs) in zip(jobs, results):
        for m in msgs:
            print(f"warning (beta={chain.beta:g}): {m}", file=sys.stderr)
        merged.extend(cands)
        chains.append({"beta": chain.beta, "seed": chain.seed, "acceptance_rate": rate, "trace": trace})

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        top = select_topk(merged, cfg.chain.topk)
    if len(top) < cfg.chain.topk:
        print(f"warning: only {len(top)} distinct DAGs visited", file=sys.stderr)
    selected = []
    for rank, c in enumerate(top, start=1):
        name = f"top{rank}.csv"
        write_adjacency(out / name, c.dag)
        selected.append({"rank": rank, "file": name, "tptn": c.tptn, "step": c.step, "edges": c.dag.n_edges})
    cfg_dict = cfg.as_dict()
    summary = {
        "tool": "diffdsep",
        "version": __version__,
        "config": cfg_dict,
        "config_hash": config_hash(cfg_dict),
        "seeds": [c["seed"] for c in chains],
        "chains": chains,
        "selected": selected,
    }
    (out / "selection.json").write_text(json.dumps(summary, indent=2) + "\n")
    for s in selected:
        print(f"top{s['rank']}: tptn={s['tptn']:.4f} step={s['step']} edges={s['edges']}")
    return 0


# ------------------------------------------------------------------ eval


def _pairs_from_args(args) -> list[tuple[str, str]]:
    pairs = []
    if args.pairs:
        with open(args.pairs, newline="") as fh:
            for row in csv.DictReader(fh):
                pairs.append((row["pred"], row["truth"]))
    if args.pred:
        if not args.truth:
            raise UserError("--pred needs --truth")
        pairs.extend((p, args.truth) for p in args.pred)
    if not pairs:
        raise UserError("nothing to evaluate; give --pred/--truth or --pairs")
    return pairs


def ecdf_points(values) -> list[tuple[float, int, float]]:
    """Sorted values with their rank and empirical CDF level."""
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    return [(float(x), i + 1, (i + 1) / n) for i, x in enumerate(v)]


def cmd_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for pred_path, truth_path in _pairs_from_args(args):
        for p in (pred_path, truth_path):
            if not Path(p).exists():
                raise UserError(f"{p} does not exist")
        pred, truth = read_dag(pred_path), read_dag(truth_path)
        if pred.n_nodes != truth.n_nodes:
            raise UserError(f"{pred_path} has {pred.n_nodes} nodes but {truth_path} has {truth.n_nodes}")
        rep = evaluate(pred, truth)
        rows.append({"pred": pred_path, "truth": truth_path, **rep.as_dict()})
    (out / "metrics.json").write_text(json.dumps(rows, indent=2) + "\n")
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    with open(out / "ecdf_ci_mcc.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ci_mcc", "rank", "ecdf"])
        w.writerows(ecdf_points([r["ci_mcc"] for r in rows]))
    mcc = np.array([r["ci_mcc"] for r in rows])
    print(f"{len(rows)} evaluations: ci_mcc mean {mcc.mean():.4f} sd {mcc.std():.4f}")
    return 0


# ---------------------------------------------------------------- parser


def _chain_flags(p):
    p.add_argument("--config", help="INI file with [chain] and [run] sections")
    p.add_argument("--data", help="dataset CSV with a header row")
    p.add_argument("--test", choices=["auto", "chisq", "fisherz"], default=None)
    p.add_argument("--cache-dir", dest="cache_dir", default=None,
                   help=f"p-value cache directory (default ${CACHE_ENV})")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffdsep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic binary benchmark")
    g.add_argument("--model", choices=["er", "sf"], required=True)
    g.add_argument("--nodes", type=int, required=True)
    g.add_argument("--ratio", type=float, required=True)
    g.add_argument("--samples", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", default=".")
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_gen)

    p = sub.add_parser("pvalues", help="build (or load) the CI p-value table")
    _chain_flags(p)
    p.set_defaults(func=cmd_pvalues, oracle=None)

    d = sub.add_parser("discover", help="run sampling chains and select DAGs")
    _chain_flags(d)
    d.add_argument("--oracle", help="truth adjacency CSV; use noiseless p-values from it")
    d.add_argument("--out", default=None)
    d.add_argument("--beta", type=float, nargs="+", default=None)
    d.add_argument("--steps", type=int, default=None)
    d.add_argument("--topk", type=int, default=None)
    d.add_argument("--seed", type=int, default=None)
    d.add_argument("--alpha-train", dest="alpha_train", type=float, default=None)
    d.add_argument("--alpha-eval", dest="alpha_eval", type=float, default=None)
    d.add_argument("--s", type=float, default=None)
    d.add_argument("--max-len", dest="max_len", type=int, default=None,
                   help="path-length cap of the reachability recursions (0: full horizon)")
    d.add_argument("--statement-scale", dest="statement_scale", type=float, default=None,
                   help="per-task scale of the statement losses (0: plain sums)")
    d.add_argument("--workers", type=int, default=None)
    d.set_defaults(func=cmd_discover)

    e = sub.add_parser("eval", help="score predicted DAGs against a truth DAG")
    e.add_argument("--truth")
    e.add_argument("--pred", nargs="+")
    e.add_argument("--pairs", help="CSV with columns pred,truth")
    e.add_argument("--out", default=".")
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UserError, ConfigurationError, GraphError, FileNotFoundError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # invariant violations and bugs
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
