"""Command-line interface: run experiments, compute distances, generate
synthetic spaces, and summarize result files."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .arch import Architecture, validate
from .bench import export_tabular, synth_space
from .errors import ConfigError, OtkError
from .pool import SpaceSpec
from .runner import (
    ExperimentConfig,
    parse_config_file,
    parse_seeds,
    read_records,
    run_experiment,
    summarize,
    write_records,
    write_summary,
)
from .trees import default_taxonomy, load_taxonomy
from .tw import DistanceWeights, component_distances

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otk-nas")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a search experiment")
    run_p.add_argument("--config", help="flat key = value config file")
    run_p.add_argument("--mode", choices=["sequential", "batch"])
    run_p.add_argument("--optimizer")
    run_p.add_argument("--budget", type=int)
    run_p.add_argument("--batch-size", type=int, dest="batch_size")
    run_p.add_argument("--pool-size", type=int, dest="pool_size")
    run_p.add_argument("--init-fraction", type=float, dest="init_fraction")
    run_p.add_argument("--kappa", type=float)
    run_p.add_argument("--ngram", type=int)
    run_p.add_argument("--seeds", help="e.g. 0..29 or 0,3,7")
    run_p.add_argument("--ops", help="comma-separated operation labels")
    run_p.add_argument("--max-nodes", type=int, dest="max_nodes")
    run_p.add_argument("--min-nodes", type=int, dest="min_nodes")
    run_p.add_argument("--max-edges", type=int, dest="max_edges")
    run_p.add_argument("--space-seed", type=int, dest="space_seed")
    run_p.add_argument("--tabular", help="load this tabular CSV instead")
    run_p.add_argument("--taxonomy", dest="taxonomy_path")
    run_p.add_argument("--quality-sign", type=int, dest="quality_sign")
    run_p.add_argument("--mutate-rounds", type=int, dest="mutate_rounds")
    run_p.add_argument("--hyper-starts", type=int, dest="hyper_starts")
    run_p.add_argument("--workers", type=int)
    run_p.add_argument("--record-timing", action="store_true", default=None)
    run_p.add_argument("--out", required=False)

    dist_p = sub.add_parser("distance", help="distances between two architectures")
    dist_p.add_argument("--a", required=True)
    dist_p.add_argument("--b", required=True)
    dist_p.add_argument("--ngram", type=int, choices=[1, 2], default=1)
    dist_p.add_argument("--weights", default="0.3333333333333333,0.3333333333333333")
    dist_p.add_argument("--taxonomy")

    gen_p = sub.add_parser("gen-space", help="generate a synthetic tabular space")
    gen_p.add_argument("--nodes", type=int, required=True)
    gen_p.add_argument("--min-nodes", type=int, default=3, dest="min_nodes")
    gen_p.add_argument("--max-edges", type=int, dest="max_edges")
    gen_p.add_argument("--ops", required=True)
    gen_p.add_argument("--seed", type=int, default=0)
    gen_p.add_argument("--out", required=True)

    sum_p = sub.add_parser("summarize", help="summarize a results CSV")
    sum_p.add_argument("results")
    sum_p.add_argument("--out", required=True)
    return parser


_CONFIG_PARSERS = {
    "mode": str,
    "optimizer": str,
    "budget": int,
    "batch_size": int,
    "pool_size": int,
    "init_fraction": float,
    "kappa": float,
    "ngram": int,
    "seeds": parse_seeds,
    "ops": lambda s: tuple(x.strip() for x in s.split(",") if x.strip()),
    "max_nodes": int,
    "min_nodes": int,
    "max_edges": int,
    "space_seed": int,
    "tabular": str,
    "taxonomy_path": str,
    "out": str,
    "quality_sign": int,
    "mutate_rounds": int,
    "hyper_starts": int,
    "workers": int,
    "record_timing": lambda s: s.lower() in ("1", "true", "yes"),
}


def _config_from_args(args) -> ExperimentConfig:
    values = {}
    if args.config:
        for key, raw in parse_config_file(args.config).items():
            if key not in _CONFIG_PARSERS:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                values[key] = _CONFIG_PARSERS[key](raw)
            except ConfigError:
                raise
            except Exception as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
    for key in _CONFIG_PARSERS:
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            if key == "seeds" and isinstance(cli_val, str):
                cli_val = parse_seeds(cli_val)
            if key == "ops" and isinstance(cli_val, str):
                cli_val = tuple(x.strip() for x in cli_val.split(",") if x.strip())
            values[key] = cli_val
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in values.items() if k in fields})


def _cmd_run(args) -> int:
    config = _config_from_args(args).validated()
    records, _ = run_experiment(config)
    out = config.out
    if out:
        write_records(records, out)
        print(f"wrote {len(records)} records to {out}")
    else:
        rows = summarize(records)
        last = rows[-1]
        print(f"final best_val median {last[1]!r} over {last[4]} seed(s)")
    return EXIT_OK


def _load_arch(path):
    with open(path, "r", encoding="utf-8") as fh:
        return validate(Architecture.from_json(fh.read()))


def _cmd_distance(args) -> int:
    x = _load_arch(args.a)
    z = _load_arch(args.b)
    taxonomy = load_taxonomy(args.taxonomy) if args.taxonomy else default_taxonomy()
    parts = [float(v) for v in args.weights.split(",")]
    if len(parts) != 2:
        raise ConfigError("--weights expects 'alpha1,alpha2'")
    weights = DistanceWeights(parts[0], parts[1])
    d_op, d_in, d_out = component_distances(x, z, args.ngram, taxonomy)
    combined = (
        weights.alpha1 * d_op + weights.alpha2 * d_in + weights.alpha3 * d_out
    )
    print(f"ngram_tw {d_op!r}")
    print(f"indegree_tw {d_in!r}")
    print(f"outdegree_tw {d_out!r}")
    print(f"d_nn {combined!r}")
    return EXIT_OK


def _cmd_gen_space(args) -> int:
    ops = tuple(x.strip() for x in args.ops.split(",") if x.strip())
    max_edges = args.max_edges
    if max_edges is None:
        max_edges = args.nodes * (args.nodes - 1) // 2
    space = SpaceSpec(
        vocab=ops,
        max_nodes=args.nodes,
        max_edges=max_edges,
        min_nodes=args.min_nodes,
    )
    oracle = synth_space(space, args.seed)
    export_tabular(oracle, args.out)
    print(f"wrote {len(oracle)} architectures to {args.out}")
    return EXIT_OK


def _cmd_summarize(args) -> int:
    records = read_records(args.results)
    write_summary(summarize(records), args.out)
    print(f"wrote summary to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "distance": _cmd_distance,
        "gen-space": _cmd_gen_space,
        "summarize": _cmd_summarize,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OtkError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
