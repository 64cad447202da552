"""Command-line interface: ``infer``, ``prune``, ``bound`` and ``ising``.

Exit codes: 0 success, 1 usage error, 2 input-file error, 3 enumeration cap
exceeded. Results are CSV on stdout or in ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys

from .bp import BpConfig
from .divergence import graph_bound, nested_witness, witness_divergence
from .exact import DEFAULT_MAX_VARS, EnumerationCapError, exact_kl, exact_moments
from .graph import GraphFormatError, read_graph
from .ising import PATTERNS, ExperimentRecord, IsingConfig, records_as_rows, run_sweep
from .pruning import ignorant_inference, infer, make_scheme

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_CAP = 0, 1, 2, 3

FORMAT_HELP = """\
graph files use the fgv1 text format ('#' starts a comment, blank lines are ignored):

  fgv1
  vars <N>
  factor <theta> <k> <v_1> ... <v_k> <table>    (one line per factor; ids count from 0)
  seed unary | seed list <id> ...               (optional, must be the last line)

<table> is a string of 2^k characters in {0,1}; character a (from 0) is phi
at the assignment a = sum_j y_{v_j} 2^(j-1), so y_{v_1} is the least
significant bit. Without a seed line the seed is the set of unary factors.

For min-div the budget M counts the seed factors too: at most M - |seed|
candidates are added.
"""


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _subset(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated factor ids, got {text!r}") from None


def _alphas(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_bp_flags(p) -> None:
    g = p.add_argument_group("belief propagation")
    g.add_argument("--max-iters", type=int, default=BpConfig.max_iters)
    g.add_argument("--tol", type=float, default=BpConfig.tol)
    g.add_argument("--damping", type=float, default=BpConfig.damping)


def _add_output_flags(p) -> None:
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.add_argument("--precision", choices=("default", "full"), default="default",
                   help="'full' prints 17 significant digits (exact float round trip)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="factorprune", description="Pruned marginal inference in binary Markov networks.",
                     epilog=FORMAT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def graph_cmd(name, help_):
        p = sub.add_parser(name, help=help_, description=help_, epilog=FORMAT_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--graph", required=True, help="fgv1 graph file")
        p.add_argument("--max-vars", type=int, default=DEFAULT_MAX_VARS, help="enumeration cap for exact engine")
        _add_output_flags(p)
        return p

    p = graph_cmd("infer", "Marginals of every variable and feature means of the inferred factors.")
    p.add_argument("--engine", choices=("bp", "exact"), default="bp")
    p.add_argument("--subset", type=_subset, help="comma-separated factor ids (default: all factors)")
    _add_bp_flags(p)

    p = graph_cmd("prune", "Select candidates from seed gains, then infer on seed + selection.")
    p.add_argument("--scheme", choices=("min-size", "min-div", "min-joint"), required=True)
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--epsilon", type=float, help="min-size: bound on the excluded gain sum")
    grp.add_argument("--budget", type=int, help="min-div: total factor budget M, seed included")
    grp.add_argument("--gamma", type=float, help="min-joint: gain threshold")
    p.add_argument("--engine", choices=("bp", "exact"), default="bp")
    _add_bp_flags(p)

    p = graph_cmd("bound", "First-moment KL bounds for a pruned subset, with the exact KL (small graphs).")
    p.add_argument("--subset", type=_subset, help="factor ids kept (default: the seed)")

    p = sub.add_parser("ising", help="Grid denoising sweep over alpha.", description="Grid denoising sweep over alpha.")
    p.add_argument("--size", type=int, default=32, help="grid side length")
    p.add_argument("--alphas", type=_alphas, default=[1.0, 2.0, 3.0, 5.0, 8.0])
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--edge-weight", type=float, default=1.0)
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--pattern", choices=PATTERNS, default="square")
    p.add_argument("--scheme", choices=("min-size", "min-div", "min-joint"), default="min-joint")
    p.add_argument("--param", type=float, help="fixed scheme parameter (skips calibration)")
    p.add_argument("--calibrate-at", type=float, default=5.0, help="alpha used for calibration")
    p.add_argument("--target-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--engine", choices=("bp", "exact"), default="bp")
    p.add_argument("--jobs", type=int, default=1, help="worker processes across instances")
    _add_bp_flags(p)
    _add_output_flags(p)
    return parser


def _fmt(value, full: bool) -> str:
    if isinstance(value, bool) or value is None:
        return "" if value is None else str(value)
    if isinstance(value, float):
        return f"{value:.17g}" if full else f"{value:.10g}"
    return str(value)


def _write(rows: list[dict], header: list[str], args) -> None:
    full = args.precision == "full"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row.get(k), full) for k in header])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _bp(args) -> BpConfig:
    try:
        return BpConfig(max_iters=args.max_iters, tol=args.tol, damping=args.damping)
    except ValueError as e:
        raise _UsageError(str(e)) from None


def _cmd_infer(args) -> None:
    graph = read_graph(args.graph)
    subset = graph.factor_ids if args.subset is None else graph.check_subset(args.subset)
    est = infer(graph, subset, args.engine, _bp(args), args.max_vars)
    rows = [{"kind": "var", "id": v, "value": float(b)} for v, b in enumerate(est.var_beliefs)]
    rows += [{"kind": "factor", "id": i, "value": float(m)} for i, m in sorted(est.factor_mu.items())]
    _write(rows, ["kind", "id", "value"], args)


_PRUNE_COLUMNS = ["scheme", "param", "n_candidates", "n_added", "size_fraction", "predicted_d1",
                  "seed_time", "score_time", "final_time", "total_time", "converged",
                  "exact_kl", "bound_loose", "bound_tight"]


def _cmd_prune(args) -> None:
    param = {"min-size": args.epsilon, "min-div": args.budget, "min-joint": args.gamma}[args.scheme]
    if param is None:
        flag = {"min-size": "--epsilon", "min-div": "--budget", "min-joint": "--gamma"}[args.scheme]
        raise _UsageError(f"scheme {args.scheme} takes {flag}")
    graph = read_graph(args.graph)
    scheme = make_scheme(args.scheme, param)
    res = ignorant_inference(graph, scheme, _bp(args), args.engine, args.max_vars)
    row = {
        "scheme": scheme.name,
        "param": scheme.param,
        "n_candidates": len(res.selection.gains_used),
        "n_added": len(res.selection.selected),
        "size_fraction": float(res.size_fraction),
        "predicted_d1": float(res.selection.predicted_d1),
        "seed_time": res.timings["seed"],
        "score_time": res.timings["score"],
        "final_time": res.timings["final"],
        "total_time": res.total_time,
        "converged": bool(res.final_estimate.converged),
    }
    if args.engine == "exact":
        h = res.pruned_subset
        row["exact_kl"] = exact_kl(graph, h, graph.factor_ids, args.max_vars)
        b = graph_bound(graph, h, exact_moments(graph, h, args.max_vars))
        row["bound_loose"], row["bound_tight"] = b.loose, b.tight
    _write([row], _PRUNE_COLUMNS, args)


def _cmd_bound(args) -> None:
    graph = read_graph(args.graph)
    h = graph.seed if args.subset is None else graph.check_subset(args.subset)
    moments = exact_moments(graph, h, args.max_vars)
    b = graph_bound(graph, h, moments)
    rest = sorted(graph.factor_ids - h)
    means = [moments.mu[i] for i in rest]
    thetas = graph.thetas[rest]
    row = {
        "n_kept": len(h),
        "n_left_out": b.L,
        "loose": b.loose,
        "tight": b.tight,
        "exact_kl": exact_kl(graph, h, graph.factor_ids, args.max_vars),
        "witness_divergence": witness_divergence(nested_witness(means, thetas), thetas) if rest else 0.0,
    }
    _write([row], list(row), args)


def _cmd_ising(args) -> None:
    try:
        config = IsingConfig(grid_side=args.size, alpha=args.calibrate_at, edge_weight=args.edge_weight,
                             noise_sigma=args.noise_sigma, pattern=args.pattern, rng_seed=args.seed,
                             instances=args.instances)
    except ValueError as e:
        raise _UsageError(str(e)) from None
    if args.jobs < 1:
        raise _UsageError("--jobs must be >= 1")
    records = run_sweep(config, args.alphas, args.scheme, (args.calibrate_at, args.target_fraction),
                        _bp(args), args.engine, args.jobs, args.param)
    _write(records_as_rows(records), ExperimentRecord.field_names(), args)


_COMMANDS = {"infer": _cmd_infer, "prune": _cmd_prune, "bound": _cmd_bound, "ising": _cmd_ising}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _COMMANDS[args.command](args)
    except SystemExit as e:  # --help
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    except _UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except EnumerationCapError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CAP
    except GraphFormatError as e:
        print(f"error: {args.graph}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
