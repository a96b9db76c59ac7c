"""Command line entry point: ``dani {infer,simulate,sbm,eval,communities}``.

Exit codes: 0 success, 1 input/output or data error, 2 usage error.

Any subcommand accepts ``--config FILE`` holding ``key = value`` lines
(``#`` starts a comment, keys are option names with or without leading
dashes). Flags given on the command line override the file.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import io as dio
from .cascades import build_corpus, dataset_stats
from .communities import community_report, label_propagation
from .inference import infer, select_edges
from .metrics import link_report
from .pipeline import infer_pipeline
from .simulate import GenerationError, SbmConfig, SimConfig, generate_sbm, simulate_cascades

logger = logging.getLogger("dani")


class DataError(Exception):
    """Bad input data or unreadable files; maps to exit code 1."""


def _open_read(path: str):
    try:
        return open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def _open_write(path: str):
    try:
        return open(path, "w", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None


def _read_graph(path: str):
    with _open_read(path) as fh:
        return dio.parse_edge_list(fh)


def _read_communities(path: str):
    with _open_read(path) as fh:
        return dio.parse_communities(fh)


# -- subcommands -----------------------------------------------------------


def cmd_infer(args) -> int:
    if args.top_k is not None and args.top_k <= 0:
        raise UsageError("--top-k must be a positive integer")
    if args.threshold is not None and args.threshold < 0:
        raise UsageError("--threshold must be nonnegative")
    if args.parallel < 1:
        raise UsageError("--parallel must be >= 1")

    start = time.perf_counter()
    with _open_read(args.cascades) as fh:
        log = dio.parse_cascades(fh)
    corpus = build_corpus(log)
    if not corpus.vectors:
        raise DataError("no cascade with at least 2 events")
    if args.pipeline:
        edges = infer_pipeline(corpus, partitions=args.parallel, debug_dir=args.debug_dir)
    else:
        edges = infer(corpus)
    graph = select_edges(edges, top_k=args.top_k, threshold=args.threshold)
    with _open_write(args.output) as out:
        dio.write_edge_list(graph, out)
    elapsed = time.perf_counter() - start

    stats = dataset_stats(corpus.vectors, corpus.nodes)
    for name, value in stats.rows():
        print(f"{name},{value}", file=sys.stderr)
    print(f"dropped,{corpus.dropped}", file=sys.stderr)
    print(f"edges,{graph.number_of_edges()}", file=sys.stderr)
    print(f"elapsed_ms,{int(round(elapsed * 1000))}", file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    try:
        config = SimConfig(
            num_cascades=args.num_cascades,
            beta=args.beta,
            rate=args.rate,
            horizon=args.horizon,
            seed=args.seed,
            min_length=args.min_length,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    graph = _read_graph(args.graph)
    try:
        cascades = simulate_cascades(graph, config, workers=args.parallel)
    except GenerationError as exc:
        raise DataError(str(exc)) from None
    with _open_write(args.output) as out:
        dio.write_cascades(sorted(graph.nodes), cascades, out)
    return 0


def cmd_sbm(args) -> int:
    try:
        config = SbmConfig(n=args.nodes, k=args.communities, p_in=args.p_in, p_out=args.p_out, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    graph, communities = generate_sbm(config)
    with _open_write(args.graph_out) as out:
        dio.write_edge_list(graph, out)
    if args.comms_out:
        with _open_write(args.comms_out) as out:
            dio.write_communities(communities, out)
    return 0


def cmd_eval(args) -> int:
    truth = _read_graph(args.truth) if args.truth else None
    inferred = _read_graph(args.inferred) if args.inferred else None
    truth_comms = _read_communities(args.truth_comms) if args.truth_comms else None
    inferred_comms = _read_communities(args.inferred_comms) if args.inferred_comms else None

    if args.mode == "links":
        if truth is None or inferred is None:
            raise UsageError("links mode needs --truth and --inferred")
        if truth_comms is None:
            truth_comms = label_propagation(truth, seed=args.seed)
        if inferred_comms is None:
            inferred_comms = label_propagation(inferred, seed=args.seed)
        report = link_report(truth, inferred, truth_comms, inferred_comms, degree_mode=args.degree_mode)
    else:
        if truth_comms is None:
            if truth is None:
                raise UsageError("communities mode needs --truth-comms or --truth")
            truth_comms = label_propagation(truth, seed=args.seed)
        if inferred_comms is None:
            if inferred is None:
                raise UsageError("communities mode needs --inferred-comms or --inferred")
            inferred_comms = label_propagation(inferred, seed=args.seed)
        if not truth_comms or not inferred_comms:
            raise DataError("community assignments must be non-empty")
        report = community_report(truth_comms, inferred_comms)

    if args.output:
        with _open_write(args.output) as out:
            dio.write_report(report, out)
    else:
        dio.write_report(report, sys.stdout)
    return 0


def cmd_communities(args) -> int:
    graph = _read_graph(args.graph)
    communities = label_propagation(graph, seed=args.seed, max_iters=args.max_iters)
    with _open_write(args.output) as out:
        dio.write_communities(communities, out)
    return 0


# -- argument handling -----------------------------------------------------


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dani", description="Network inference from diffusion cascades.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="key=value file with default option values")
        p.set_defaults(func=func)
        return p

    p = add("infer", cmd_infer, "infer a weighted edge list from a cascade file")
    p.add_argument("--cascades", required=True)
    p.add_argument("--output", required=True)
    sel = p.add_mutually_exclusive_group()
    sel.add_argument("--top-k", type=int, help="keep the K heaviest edges")
    sel.add_argument("--threshold", type=float, help="keep edges with weight >= TAU")
    p.add_argument("--parallel", type=int, default=1, help="partitions / workers for --pipeline")
    p.add_argument("--pipeline", action="store_true", help="run the staged map/shuffle/reduce job")
    p.add_argument("--debug-dir", type=Path, help="dump each pipeline stage's records as TSV")

    p = add("simulate", cmd_simulate, "simulate cascades over a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--num-cascades", type=int, required=True)
    p.add_argument("--beta", type=float, default=0.3, help="per-edge transmission probability")
    p.add_argument("--rate", type=float, default=1.0, help="exponential delay rate")
    p.add_argument("--horizon", type=float, default=10.0, help="observation window")
    p.add_argument("--min-length", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--output", required=True)

    p = add("sbm", cmd_sbm, "generate a planted-partition graph")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--communities", type=int, required=True)
    p.add_argument("--p-in", type=float, required=True)
    p.add_argument("--p-out", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--graph-out", required=True)
    p.add_argument("--comms-out")

    p = add("eval", cmd_eval, "score an inferred graph or community assignment")
    p.add_argument("mode", choices=("links", "communities"))
    p.add_argument("--truth")
    p.add_argument("--inferred")
    p.add_argument("--truth-comms")
    p.add_argument("--inferred-comms")
    p.add_argument("--degree-mode", choices=("total", "in", "out"), default="total")
    p.add_argument("--seed", type=int, default=0, help="seed for label propagation when communities are detected")
    p.add_argument("--output", help="report path (default stdout)")

    p = add("communities", cmd_communities, "detect communities by label propagation")
    p.add_argument("--graph", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=100)
    return parser


def read_config(path: str) -> dict[str, str]:
    values = {}
    with _open_read(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _peek(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Subcommand and ``--config`` path, found before full parsing so required flags can come from the file."""
    commands = parser._subparsers._group_actions[0].choices
    peek = argparse.ArgumentParser(add_help=False)
    peek.add_argument("--config")
    known, _ = peek.parse_known_args(argv)
    known.command = next((a for a in argv if a in commands), None)
    if known.command is None:
        known.config = None
    return known


def _apply_config(parser: argparse.ArgumentParser, argv: list[str], args) -> argparse.Namespace:
    values = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help", "func"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except (TypeError, ValueError):
                raise UsageError(f"bad value {raw!r} for config key {key!r}") from None
        # a config value satisfies a required flag
        action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = _peek(parser, argv)
    try:
        if pre.config:
            args = _apply_config(parser, argv, pre)
        else:
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"dani: error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"dani: error: {exc}", file=sys.stderr)
        return 1

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dani: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, dio.FormatError, ValueError) as exc:
        print(f"dani: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
