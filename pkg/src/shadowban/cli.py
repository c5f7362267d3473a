"""Command-line entry point: ``shadowban <subcommand> ...``.

Every subcommand writes its primary output to ``-o`` (stdout by default) and a
run-metadata JSON (config, seed, versions, wall time) next to it, or to stderr
when the output goes to stdout. Exit codes: 0 ok, 1 usage, 2 data, 3 transport.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import platform
import sys
import time
from datetime import datetime, timezone

import numpy as np
import scipy

from . import __version__
from .detector import DEFAULT_SINCE, OSNClient, TransportError, detect_many
from .epidemic import (
    DEFAULT_BETA_GRID,
    DEFAULT_P0_GRID,
    DEFAULT_RIDGE_TRIALS,
    RidgePoint,
    SIParams,
    analytic_mu,
    default_k,
    fit_ridge,
    plant_synthetic,
    ridge_valley,
    select_beta,
)
from .graph import PopulationDataset, ban_cooccurrence, ban_summary, clustering_avg, mean_degree, sb_fraction, topology_summary, two_core_size
from .h0 import CSV_HEADER as H0_HEADER
from .h0 import dataset_test, estimate_mu, plant_uniform, rank_unlikely, results_to_rows
from .ingest import DatasetError, filter_suitable, iter_records, load_dataset, open_text, save_dataset
from .likelihood import CSV_HEADER as LIKELIHOOD_HEADER
from .likelihood import DEFAULT_BIN_EDGES, DEFAULT_TRIALS, LIKELY_MIN, UNLIKELY_MAX, bin_and_compare, report_rows
from .osnsim import MockOSNServer, load_scenario, plant_scenario, save_scenario
from .parallel import default_workers
from .sampler import DEFAULT_DEPTH, DEFAULT_FANOUT, CompleteSource, SyntheticWorld, crawl_population, synthetic_population


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _env_int(name: str, default: int) -> int:
    v = os.environ.get(name)
    return int(v) if v else default


# -- output helpers ----------------------------------------------------------


def _write_csv(path: str, header: list[str], rows) -> None:
    with open_text(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: str, obj) -> None:
    with open_text(path, "w") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load(path: str, keep_singletons: bool = False) -> PopulationDataset:
    d = load_dataset(path)
    if not keep_singletons:
        d, _ = filter_suitable(d)
    if not d.graphs:
        raise DatasetError(f"{path}: no suitable ego-graph")
    return d


def _config(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "exit_code"):
            continue
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def _metadata(args, started: float, wall: float, summary: dict | None) -> dict:
    return {
        "command": args.command,
        "config": _config(args),
        "seed": args.seed,
        "workers": args.workers,
        "versions": {
            "shadowban": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(timespec="seconds"),
        "wall_time_s": round(wall, 3),
        "summary": summary or {},
    }


# -- subcommands -------------------------------------------------------------


def cmd_stats(args) -> dict:
    d = _load(args.dataset, args.keep_singletons)
    co = ban_cooccurrence(d)
    out = {
        "population": d.name,
        "mu_hat": estimate_mu(d),
        "mean_degree": mean_degree(d),
        "topology": topology_summary(d),
        "bans": ban_summary(d),
        "cooccurrence": dataclasses.asdict(co),
    }
    _write_json(args.output, out)
    if args.per_graph:
        rows = []
        for g in d.graphs:
            u = g.undirected()
            rows.append([g.landmark, len(g), int(u.degree.sum()) // 2, g.n_banned, f"{sb_fraction(g):.6f}",
                         f"{clustering_avg(g):.6f}", two_core_size(g)])
        _write_csv(args.per_graph, ["landmark", "n", "undirected_edges", "s", "sb_fraction", "clustering", "two_core"], rows)
    return {"graphs": len(d), "mu_hat": out["mu_hat"]}


def cmd_h0(args) -> dict:
    d = _load(args.dataset, args.keep_singletons)
    mu = args.mu if args.mu is not None else estimate_mu(d)
    results = rank_unlikely(d, mu, args.top) if args.top else dataset_test(d, mu)
    _write_csv(args.output, H0_HEADER, results_to_rows(results))
    return {"mu": mu, "rows": len(results)}


def _ridge_rows(ridge: list[RidgePoint], k: int) -> list[list]:
    valley = {id(p) for p in ridge_valley(ridge)}
    return [
        [repr(p.params.p0), repr(p.params.beta), f"{p.simulated_mu:.8f}", f"{p.distance:.8f}",
         f"{analytic_mu(p.params, k):.8f}", int(id(p) in valley)]
        for p in ridge
    ]


RIDGE_HEADER = ["p0", "beta", "simulated_mu", "distance", "analytic_mu", "valley"]


def _read_ridge(path: str, mu_hat: float) -> list[RidgePoint]:
    with open_text(path, "r") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(RIDGE_HEADER) - set(rows[0]):
        raise DatasetError(f"{path}: not a ridge CSV")
    out = []
    for r in rows:
        sim = float(r["simulated_mu"])
        out.append(RidgePoint(SIParams(float(r["p0"]), float(r["beta"])), sim, abs(sim - mu_hat), 0))
    return out


def cmd_fit_h1(args) -> dict:
    d = _load(args.dataset, args.keep_singletons)
    ridge = fit_ridge(d, args.p0_grid, args.beta_grid, args.trials, args.seed, args.workers, args.mu)
    k = args.k or default_k(d)
    _write_csv(args.output, RIDGE_HEADER, _ridge_rows(ridge, k))
    return {"k": k, "mu_hat": args.mu if args.mu is not None else estimate_mu(d), "points": len(ridge)}


def cmd_select_beta(args) -> dict:
    d = _load(args.dataset, args.keep_singletons)
    mu_hat = args.mu if args.mu is not None else estimate_mu(d)
    if args.ridge:
        ridge = _read_ridge(args.ridge, mu_hat)
    else:
        ridge = fit_ridge(d, args.p0_grid, args.beta_grid, args.trials, args.seed, args.workers, mu_hat)
    sel = select_beta(d, ridge, args.trials, args.seed, args.workers)
    out = {
        "p0": sel.params.p0,
        "beta": sel.params.beta,
        "beta_over_p0": sel.ratio,
        "mu_hat": mu_hat,
        "empirical_neighbor_conditional": sel.empirical,
        "candidates": [
            {"p0": pt.params.p0, "beta": pt.params.beta, "simulated_mu": pt.simulated_mu,
             "simulated_neighbor_conditional": sim}
            for pt, sim in sel.candidates
        ],
    }
    _write_json(args.output, out)
    return {"p0": sel.params.p0, "beta": sel.params.beta}


def _params_from(args) -> SIParams:
    if args.params:
        with open_text(args.params, "r") as fh:
            obj = json.load(fh)
        return SIParams(float(obj["p0"]), float(obj["beta"]))
    if args.p0 is None or args.beta is None:
        raise UsageError("give --p0 and --beta, or --params FILE")
    return SIParams(args.p0, args.beta)


def cmd_likelihood(args) -> dict:
    d = _load(args.dataset, args.keep_singletons)
    params = _params_from(args)
    cmp = bin_and_compare(d, params, args.trials, args.bin_edges, args.mu, args.seed, args.workers,
                          args.likely_min, args.unlikely_max)
    _write_csv(args.output, LIKELIHOOD_HEADER, report_rows(cmp.reports))
    if args.summary:
        _write_json(args.summary, cmp.summary())
    return cmp.summary()


def cmd_features(args) -> dict:
    from .features import (
        IMPORTANCE_HEADER,
        TreeParams,
        accuracy,
        balance,
        fit_tree,
        impurity_importance,
        importance_rows,
        labeled_samples,
        permutation_importance,
        split,
    )

    d = load_dataset(args.dataset)
    samples, dropped = labeled_samples(d)
    if not samples:
        raise DatasetError("no user carries the full feature set")
    try:
        bal = balance(samples, args.seed)
    except ValueError as exc:
        raise DatasetError(str(exc)) from None
    train, test = split(bal, args.train_fraction, args.seed)
    max_features = args.max_features
    if max_features not in (None, "sqrt", "log2"):
        max_features = int(max_features)
    params = TreeParams(args.min_samples_split, args.min_samples_leaf, max_features, args.max_depth)
    model = fit_tree(train, params, args.seed)
    imp = impurity_importance(model)
    perm = permutation_importance(model, test or train, args.seed)
    _write_csv(args.output, IMPORTANCE_HEADER, importance_rows(imp, perm))
    if args.model:
        with open_text(args.model, "w") as fh:
            fh.write(model.to_json() + "\n")
    return {
        "users_complete": len(samples),
        "users_dropped": dropped,
        "balanced": len(bal),
        "train": len(train),
        "test": len(test),
        "train_accuracy": accuracy(model, train),
        "test_accuracy": accuracy(model, test) if test else None,
        "depth": model.depth,
        "leaves": model.n_leaves,
    }


def cmd_synth(args) -> dict:
    if args.topologies:
        topo = load_dataset(args.topologies)
    else:
        world = SyntheticWorld(seed=args.world_seed if args.world_seed is not None else args.seed)
        topo = synthetic_population(args.graphs, args.seed, world, args.fanout)
        topo, _ = filter_suitable(topo)
    if args.mu is not None:
        if args.p0 is not None or args.beta is not None:
            raise UsageError("--mu (uniform bans) excludes --p0/--beta")
        d = plant_uniform(topo, args.mu, args.seed, args.name)
    else:
        if args.p0 is None or args.beta is None:
            raise UsageError("give --p0 and --beta, or --mu")
        d = plant_synthetic(topo, SIParams(args.p0, args.beta), args.seed, args.name)
    if "world" in topo.metadata:
        d.metadata["world"] = topo.metadata["world"]
    d.metadata["created"] = ""
    save_dataset(d, args.output)
    return {"graphs": len(d), "nodes": d.n_nodes, "banned": d.n_banned}


def _is_scenario(path: str) -> bool:
    with open_text(path, "r") as fh:
        for _, head in iter_records(fh):
            return isinstance(head, dict) and head.get("kind") == "scenario"
    return False


def cmd_serve_mock(args) -> dict:
    if _is_scenario(args.input):
        scenario = load_scenario(args.input)
    else:
        scenario = plant_scenario(load_dataset(args.input))
    if args.export:
        save_scenario(scenario, args.export)
        return {"exported": args.export, "users": len(scenario)}
    server = MockOSNServer(scenario, args.host, args.port)
    print(f"serving {len(scenario)} users on {server.url}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return {}


DETECT_HEADER = ["user", "status", "typeahead", "search", "ghost", "banned", "error"]


def _read_lines(path: str) -> list[str]:
    with open_text(path, "r") as fh:
        return [ln.strip() for ln in fh if ln.strip()]


def cmd_detect(args) -> dict:
    users = list(args.users)
    if args.users_file:
        users += _read_lines(args.users_file)
    if args.all:
        status, obj, _ = OSNClient(args.endpoint).get_json("/users")
        if status != 200 or "users" not in obj:
            raise TransportError("endpoint does not list its users")
        users += list(obj["users"])
    if not users:
        raise UsageError("no users to test (give names, --users-file or --all)")
    results = detect_many(args.endpoint, users, args.since, args.workers, args.full_scan)
    rows = []
    for r in results:
        p = r.profile
        rows.append([r.user, r.status, int(p.typeahead), int(p.search), int(p.ghost), int(p.banned), r.error or ""])
    _write_csv(args.output, DETECT_HEADER, rows)
    if args.evidence:
        with open_text(args.evidence, "w") as fh:
            for r in results:
                fh.write(json.dumps(r.as_dict(), sort_keys=True) + "\n")
    counts: dict[str, int] = {}
    for r in results:
        counts[r.status] = counts.get(r.status, 0) + 1
    if counts.get("incomplete"):
        print(f"{counts['incomplete']} user(s) could not be tested completely", file=sys.stderr)
        args.exit_code = 3
    return {"users": len(results), "status": counts, "banned": sum(r.profile.banned for r in results)}


def cmd_sample(args) -> dict:
    from .detector import OSNInteractionSource, detect

    bans = None
    if args.source == "synthetic":
        source = SyntheticWorld(seed=args.world_seed if args.world_seed is not None else args.seed)
    elif args.source == "complete":
        source = CompleteSource(seed=args.seed)
    elif args.source.startswith("http://"):
        source = OSNInteractionSource(args.source, args.since)
        if args.detect:
            client = source.client

            def bans(user):
                return detect(client, user, args.since or DEFAULT_SINCE).profile
    else:
        raise UsageError(f"unknown source {args.source!r} (synthetic, complete or http://...)")
    landmarks = list(args.landmarks)
    if args.count:
        if not isinstance(source, SyntheticWorld):
            raise UsageError("--count draws landmarks from the synthetic world only")
        landmarks += source.landmarks(args.count, args.seed)
    if not landmarks:
        raise UsageError("no landmarks")
    d = crawl_population(source, landmarks, args.fanout, args.depth, args.name, bans, args.crawl_time)
    if not args.source.startswith("http://"):
        d.metadata["created"] = ""
    save_dataset(d, args.output)
    return {"graphs": len(d), "failures": len(d.metadata["failures"]), "singletons": len(d.metadata["singletons"])}


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=_env_int("SHADOWBAN_SEED", 0),
                        help="master seed (env SHADOWBAN_SEED, default 0)")
    common.add_argument("--workers", type=int, default=default_workers(),
                        help="parallel workers (env SHADOWBAN_WORKERS, default: all cores)")
    common.add_argument("-o", "--output", default="-", help="primary output file ('-' for stdout)")
    common.add_argument("--metadata", help="run-metadata JSON path (default: OUTPUT.meta.json)")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("dataset", help="dataset JSONL ('-' for stdin, .gz accepted)")
    data.add_argument("--keep-singletons", action="store_true", help="do not drop one-node graphs")

    mu = argparse.ArgumentParser(add_help=False)
    mu.add_argument("--mu", type=float, help="population ban rate (default: pooled fraction of the dataset)")

    grids = argparse.ArgumentParser(add_help=False)
    grids.add_argument("--p0-grid", type=_floats, default=DEFAULT_P0_GRID)
    grids.add_argument("--beta-grid", type=_floats, default=DEFAULT_BETA_GRID)
    grids.add_argument("--trials", type=int, default=DEFAULT_RIDGE_TRIALS, help="simulations per graph and grid point")

    p = _Parser(prog="shadowban", description="Shadow-ban topology analysis toolkit.")
    p.add_argument("--version", action="version", version=f"shadowban {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("stats", parents=[common, data], help="topology and ban statistics (JSON)")
    s.add_argument("--per-graph", help="also write a per-graph CSV here")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("h0-test", parents=[common, data, mu], help="binomial test of every graph (CSV)")
    s.add_argument("--top", type=int, default=0, help="only the TOP least likely graphs, most unlikely first")
    s.set_defaults(func=cmd_h0)

    s = sub.add_parser("fit-h1", parents=[common, data, mu, grids], help="simulated ridge over (p0, beta) (CSV)")
    s.add_argument("--k", type=int, help="regular degree for the analytic column (default: rounded mean degree)")
    s.set_defaults(func=cmd_fit_h1)

    s = sub.add_parser("select-beta", parents=[common, data, mu, grids], help="pick (p0, beta) on the ridge (JSON)")
    s.add_argument("--ridge", help="reuse a fit-h1 CSV instead of recomputing the ridge")
    s.set_defaults(func=cmd_select_beta)

    s = sub.add_parser("likelihood", parents=[common, data, mu], help="per-graph H0/H1 likelihoods (CSV)")
    s.add_argument("--p0", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--params", help="JSON with p0 and beta (e.g. select-beta output)")
    s.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    s.add_argument("--bin-edges", type=_floats, default=DEFAULT_BIN_EDGES, help="descending, from 1 to 0")
    s.add_argument("--likely-min", type=float, default=LIKELY_MIN)
    s.add_argument("--unlikely-max", type=float, default=UNLIKELY_MAX)
    s.add_argument("--summary", help="write bin counts and ratios as JSON here")
    s.set_defaults(func=cmd_likelihood)

    s = sub.add_parser("features", parents=[common], help="decision tree on profile features (importance CSV)")
    s.add_argument("dataset")
    s.add_argument("--train-fraction", type=float, default=0.8)
    s.add_argument("--min-samples-split", type=int, default=13)
    s.add_argument("--min-samples-leaf", type=int, default=11)
    s.add_argument("--max-features", default=None, help="sqrt, log2 or a count (default: all)")
    s.add_argument("--max-depth", type=int)
    s.add_argument("--model", help="write the fitted tree as JSON here")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("synth", parents=[common], help="synthetic dataset with planted bans (JSONL)")
    s.add_argument("--graphs", type=int, default=500)
    s.add_argument("--p0", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--mu", type=float, help="plant independent bans instead of SI")
    s.add_argument("--topologies", help="plant on the graphs of this dataset instead of sampling new ones")
    s.add_argument("--world-seed", type=int, help="synthetic world seed (default: --seed)")
    s.add_argument("--fanout", type=int, default=DEFAULT_FANOUT)
    s.add_argument("--name", default="SYNTHETIC")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("serve-mock", parents=[common], help="serve a scenario (or a dataset) over HTTP")
    s.add_argument("input", help="scenario JSONL, or dataset JSONL to plant")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8080)
    s.add_argument("--export", help="write the scenario to this file and exit")
    s.set_defaults(func=cmd_serve_mock)

    s = sub.add_parser("detect", parents=[common], help="run the ban tests against an endpoint (CSV)")
    s.add_argument("users", nargs="*")
    s.add_argument("--endpoint", required=True)
    s.add_argument("--users-file")
    s.add_argument("--all", action="store_true", help="every user the mock lists")
    s.add_argument("--since", default=DEFAULT_SINCE)
    s.add_argument("--full-scan", action="store_true", help="check every tweet, not only the newest 33")
    s.add_argument("--evidence", help="write per-user evidence as JSONL here")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("sample", parents=[common], help="snowball-sample ego-graphs (JSONL)")
    s.add_argument("landmarks", nargs="*")
    s.add_argument("--source", default="synthetic", help="synthetic, complete or an http:// endpoint")
    s.add_argument("--count", type=int, default=0, help="draw this many landmarks from the synthetic world")
    s.add_argument("--fanout", type=int, default=DEFAULT_FANOUT)
    s.add_argument("--depth", type=int, default=DEFAULT_DEPTH)
    s.add_argument("--world-seed", type=int)
    s.add_argument("--since")
    s.add_argument("--detect", action="store_true", help="annotate bans through the endpoint")
    s.add_argument("--crawl-time")
    s.add_argument("--name", default="RANDOM")
    s.set_defaults(func=cmd_sample)
    return p


def _emit_metadata(args, meta: dict) -> None:
    path = args.metadata or (None if args.output == "-" else args.output + ".meta.json")
    if path is None:
        print(json.dumps(meta, sort_keys=True), file=sys.stderr)
    else:
        _write_json(path, meta)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    started = time.time()
    t0 = time.perf_counter()
    try:
        summary = args.func(args)
    except UsageError as exc:
        print(f"shadowban {args.command}: {exc}", file=sys.stderr)
        return 1
    except (TransportError, ConnectionError) as exc:
        print(f"shadowban {args.command}: transport error: {exc}", file=sys.stderr)
        return 3
    except (DatasetError, ValueError, KeyError, OSError) as exc:
        print(f"shadowban {args.command}: {exc}", file=sys.stderr)
        return 2
    code = getattr(args, "exit_code", 0)
    if args.command != "serve-mock" or args.export:
        _emit_metadata(args, _metadata(args, started, time.perf_counter() - t0, summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
