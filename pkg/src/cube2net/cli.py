"""Command-line entry point.

Subcommands cover the whole workflow: ``synth`` writes a seeded dataset,
``build-cube`` materializes the cell index, ``construct`` runs one method
end to end, ``eval`` scores a predicted partition against a reference,
and ``report`` aggregates finished runs into a summary table and figures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .cube import DimensionSchema, build_cube, load_links, load_objects, write_manifest
from .errors import Cube2NetError
from .metrics import clustering_metrics, load_partition
from .pipeline import METHODS, RunConfig, run_pipeline
from .synth import SyntheticSpec, generate_greedy_trap, generate_synthetic

logger = logging.getLogger(__name__)


def _cmd_synth(args: argparse.Namespace) -> int:
    if args.preset == "trap":
        dataset = generate_greedy_trap(args.seed, args.out, word_dim=args.word_dim)
    else:
        spec = SyntheticSpec(
            dimensions=args.dimensions,
            labels_per_dimension=args.labels_per_dimension,
            word_dim=args.word_dim,
            cells=args.cells,
            objects_per_cell=args.objects_per_cell,
            planted_cells=args.planted_cells,
            query_fraction=args.query_fraction,
            noise_fraction=args.noise_fraction,
            intra_link_prob=args.intra_link_prob,
            cross_link_prob=args.cross_link_prob,
        )
        dataset = generate_synthetic(spec, args.seed, args.out)
    logger.info(
        "wrote %d objects, %d links, query of %d to %s",
        dataset.object_count,
        dataset.link_count,
        len(dataset.query_ids),
        dataset.out_dir,
    )
    return 0


def _cmd_build_cube(args: argparse.Namespace) -> int:
    objects = load_objects(args.objects)
    links = load_links(args.links)
    if not objects:
        raise Cube2NetError(f"{args.objects}: no objects")
    schema = DimensionSchema(tuple(sorted(objects[0].labels)))
    cube = build_cube(objects, links, schema, args.min_cell_size)
    write_manifest(cube, args.out)
    logger.info("%d cells -> %s", cube.cell_count, args.out)
    return 0


def _cmd_construct(args: argparse.Namespace) -> int:
    doc: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    overrides = {
        key: value
        for key, value in vars(args).items()
        if key in RunConfig.__dataclass_fields__ and value is not None
    }
    doc.update(overrides)
    config = RunConfig.from_dict(doc)
    report = run_pipeline(config)
    print(json.dumps(report.to_json(), sort_keys=True, indent=2))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    predicted = load_partition(args.predicted)
    truth = load_partition(args.truth)
    f1, jaccard, nmi = clustering_metrics(predicted, truth)
    doc = {"f1": f1, "jaccard": jaccard, "nmi": nmi}
    text = json.dumps(doc, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    from .reporting import generate_report

    paths = generate_report(args.run_dirs, args.out)
    print(paths.summary)
    for figure in paths.figures:
        print(figure)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cube2net",
        description="Query-specific network construction from a data cube.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=("planted", "trap"), default="planted")
    p.add_argument("--dimensions", type=int, default=2)
    p.add_argument("--labels-per-dimension", type=int, default=4)
    p.add_argument("--word-dim", type=int, default=8)
    p.add_argument("--cells", type=int, default=15)
    p.add_argument("--objects-per-cell", type=int, default=12)
    p.add_argument("--planted-cells", type=int, default=3)
    p.add_argument("--query-fraction", type=float, default=0.8)
    p.add_argument("--noise-fraction", type=float, default=0.1)
    p.add_argument("--intra-link-prob", type=float, default=0.3)
    p.add_argument("--cross-link-prob", type=float, default=0.01)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("build-cube", help="index objects and links into a cell manifest")
    p.add_argument("--objects", required=True)
    p.add_argument("--links", required=True)
    p.add_argument("--min-cell-size", type=int, default=10)
    p.add_argument("--out", required=True, help="manifest JSON path")
    p.set_defaults(func=_cmd_build_cube)

    p = sub.add_parser("construct", help="run one construction method end to end")
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override")
    p.add_argument("--objects", dest="objects_path")
    p.add_argument("--links", dest="links_path")
    p.add_argument("--query", dest="query_path")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--m", type=int, help="cells to select / trajectory length")
    p.add_argument("--min-cell-size", type=int, dest="min_cell_size")
    p.add_argument("--seed", type=int)
    p.add_argument("--maxdisc-budget", type=int, dest="maxdisc_budget")
    p.add_argument("--word-table", dest="word_table_path")
    p.add_argument("--word-dim", type=int, dest="word_dim")
    p.add_argument("--aliases", dest="aliases_path")
    p.add_argument("--stopwords", dest="stopwords_path")
    p.add_argument("--trajectories", type=int, dest="trajectories_per_iteration")
    p.add_argument("--iterations", type=int, dest="iterations")
    p.add_argument("--discount", type=float, dest="discount")
    p.add_argument("--clip-epsilon", type=float, dest="clip_epsilon")
    p.add_argument("--sgd-epochs", type=int, dest="sgd_epochs")
    p.add_argument("--minibatch", type=int, dest="minibatch_size")
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--hidden", type=int, dest="hidden_size")
    p.add_argument("--value-coef", type=float, dest="value_coef")
    p.set_defaults(func=_cmd_construct)

    p = sub.add_parser("eval", help="score a predicted partition against a reference")
    p.add_argument("--predicted", required=True, help="TSV of id<TAB>cluster")
    p.add_argument("--truth", required=True, help="TSV of id<TAB>cluster")
    p.add_argument("--out", help="also write the metrics JSON here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="summarize finished runs, with figures")
    p.add_argument("run_dirs", nargs="+", help="run directories with metrics.json")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except Cube2NetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
