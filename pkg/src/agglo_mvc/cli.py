"""Command line: ``agglo-mvc {synth,train,eval,inspect}``.

Exit codes: 0 success, 1 usage or validation error, 2 training did not reach
``k`` components, 3 I/O error.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import DatasetError, load_dataset, read_labels, save_results, synth_blobs, synth_layered
from .metrics import evaluate
from .model import MODES
from .structure import StructureError, ViewStructure
from .trainer import TrainerConfig, read_trace, train

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED, EXIT_IO = 0, 1, 2, 3
THREADS_ENV = "AGGLO_MVC_THREADS"

logger = logging.getLogger("agglo_mvc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    parser = _Parser(prog="agglo-mvc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    synth = sub.add_parser("synth", help="generate a synthetic multi-view dataset")
    kinds = synth.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    blobs = kinds.add_parser("blobs", help="Gaussian blobs, flat view structure")
    blobs.add_argument("--k", type=int, default=3)
    blobs.add_argument("--n-per-cluster", type=int, default=50)
    blobs.add_argument("--views", type=int, default=2)
    blobs.add_argument("--dims", type=int, default=2)
    blobs.add_argument("--separation", type=float, default=8.0)
    blobs.add_argument("--noise", type=float, default=1.0)
    blobs.add_argument("--seed", type=int, default=0)
    blobs.add_argument("--out", required=True)
    layered = kinds.add_parser("layered", help="entangled two-layer views")
    layered.add_argument("--k", type=int, default=6)
    layered.add_argument("--n", type=int, default=71)
    layered.add_argument("--groups", type=_int_list, default=[5, 6])
    layered.add_argument("--overlap", type=float, default=0.6)
    layered.add_argument("--dims", type=int, default=75)
    layered.add_argument("--seed", type=int, default=0)
    layered.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="cluster a dataset")
    tr.add_argument("--mode", choices=MODES, default="ann")
    tr.add_argument("--k", type=int, required=True)
    tr.add_argument("--lambda-init", type=float)
    tr.add_argument("--lambda-max", type=float)
    tr.add_argument("--p", type=float, help="activation scale P (> 1)")
    tr.add_argument("--lr", type=float)
    tr.add_argument("--r", type=int, help="neighbours kept per row")
    tr.add_argument("--max-iters", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--data", required=True, help="dataset manifest (JSON)")
    tr.add_argument("--structure", required=True, help="view structure (JSON)")
    tr.add_argument("--out", required=True)

    ev = sub.add_parser("eval", help="score predicted labels against the truth")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--out", help="a .json file, or a directory to hold metrics.json (default: stdout only)")

    ins = sub.add_parser("inspect", help="summarise a finished run directory")
    ins.add_argument("run_dir")
    return parser


def cmd_synth(args):
    if args.kind == "blobs":
        dataset, structure = synth_blobs(args.n_per_cluster, args.k, views=args.views, dims=args.dims,
                                         separation=args.separation, noise=args.noise, seed=args.seed)
    else:
        if not 0.0 <= args.overlap < 1.0:
            raise UsageError("--overlap must lie in [0, 1)")
        dataset, structure = synth_layered(args.n, args.k, groups=args.groups, overlap=args.overlap,
                                           seed=args.seed, dims=args.dims)
    out = Path(args.out)
    manifest = dataset.save(out)
    structure.save(out / "structure.json")
    print(f"wrote {manifest} and {out / 'structure.json'} ({len(structure.leaves)} leaves, n={dataset.n})")
    return EXIT_OK


def cmd_train(args):
    try:
        config = TrainerConfig.for_mode(
            args.mode, args.k, lambda_init=args.lambda_init, lambda_max=args.lambda_max, P=args.p,
            lr=args.lr, r=args.r, max_iters=args.max_iters, seed=args.seed,
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    dataset = load_dataset(args.data)
    structure = ViewStructure.load(args.structure)
    result = train(config, dataset, structure)
    report = evaluate(result.labels, dataset.labels) if dataset.labels is not None else None
    save_results(result, report, args.out, config=config)
    print(f"components: {result.components}")
    print(f"converged: {str(result.converged).lower()}")
    print(f"iterations: {result.iterations}")
    if report is not None:
        print("metrics: " + " ".join(f"{key}={value:.4f}" for key, value in report.to_dict().items()))
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_eval(args):
    pred, truth = read_labels(args.pred), read_labels(args.truth)
    try:
        report = evaluate(pred, truth)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = report.to_json()
    if args.out:
        out = Path(args.out)
        if out.suffix != ".json":
            out = out / "metrics.json"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    print(text)
    return EXIT_OK


def cmd_inspect(args):
    run = Path(args.run_dir)
    trace_path = run / "trace.csv"
    if not trace_path.is_file():
        raise FileNotFoundError(f"no trace.csv in {run}")
    trace = read_trace(trace_path)
    if not trace:
        raise UsageError(f"{trace_path} has no rows")
    k = None
    cfg_path = run / "run_config.json"
    if cfg_path.is_file():
        k = json.loads(cfg_path.read_text()).get("k")
    last = trace[-1]
    labels_path = run / "labels.csv"
    components = int(read_labels(labels_path).max()) + 1 if labels_path.is_file() else last.components
    lams = np.array([rec.lam for rec in trace])
    print(f"run: {run}")
    if k is not None:
        print(f"target k: {k}")
    print(f"components: {components}")
    print(f"converged: {str(k is not None and last.components == k).lower()}")
    print(f"iterations: {last.iteration}")
    print(f"final eigenvalue sum: {last.eigval_sum:.6e}")
    print(f"lambda: start {lams[0]:.6g}, min {lams.min():.6g}, max {lams.max():.6g}, final {lams[-1]:.6g}")
    halvings = int(np.sum(lams[1:] < lams[:-1]))
    print(f"lambda halvings: {halvings}")
    metrics_path = run / "metrics.json"
    if metrics_path.is_file():
        metrics = json.loads(metrics_path.read_text())
        print("metrics: " + " ".join(f"{key}={value:.4f}" for key, value in metrics.items()))
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "inspect": cmd_inspect}


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return None
    try:
        threads = int(value)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {value!r}") from None
    if threads < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {value!r}")
    return threads


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _thread_limit()
        if threads is None:
            return COMMANDS[args.command](args)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=threads):
            return COMMANDS[args.command](args)
    except (UsageError, StructureError, DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
