"""Command-line interface.

Every subcommand is a thin shell over a library operation, working on
plain-text artifacts so that analyses compose and re-run reproducibly.
Exit codes: 0 success, 2 usage error, 3 data/domain error, 4 numerical
error.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import DataError, FactorAtlasError, NumericalError
from . import decompose, engine, mapping, matrix, pipeline, plots, storage, synth

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _load_labels(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return matrix.read_label_map(fh)


def _matrix_labels(m):
    return {int(j): m.label(j) for j in set(m.cases) | set(m.variables)}


def cmd_ingest(args):
    with open(args.edges, encoding="utf-8") as fh:
        m = matrix.ingest_edge_list(
            fh, label_map=_load_labels(args.labels), drop_diagonal=args.drop_diagonal
        )
    storage.write_matrix(m, args.out)
    stats = matrix.compute_stats(m)
    print(f"ingested {stats.n_cases} cases x {stats.n_vars} variables, "
          f"{stats.n_links} links, {stats.total_citations} citations -> {args.out}")
    return EXIT_OK


def cmd_stats(args):
    m = storage.read_matrix(args.matrix)
    payload = matrix.compute_stats(m).as_dict()
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_filter(args):
    m = storage.read_matrix(args.matrix)
    filtered, dropped = matrix.filter_by_variance(m, args.min_variance)
    storage.write_matrix(filtered, args.out)
    if args.dropped_out:
        storage.write_dropped(dropped, args.dropped_out)
    print(f"kept {filtered.n_vars} of {m.n_vars} variables "
          f"(variance >= {args.min_variance:g}) -> {args.out}")
    return EXIT_OK


def cmd_factor(args):
    m = storage.read_matrix(args.matrix)
    rotate = args.rotate == "varimax"
    model, scores = engine.fit_model(
        m, args.k, rotate=rotate, compute_scores=args.scores, method=args.method
    )
    prefix = args.out_prefix
    labels = _matrix_labels(m)
    storage.write_eigenvalues(model.spectrum, f"{prefix}.eigenvalues.tsv")
    storage.write_loadings(model.loadings, labels, f"{prefix}.loadings.tsv")
    scores_file = None
    if scores is not None:
        scores_file = f"{Path(prefix).name}.scores.tsv"
        storage.write_scores(scores, f"{prefix}.scores.tsv")
    storage.write_model(model, labels, f"{prefix}.model.json", scores_file=scores_file)
    if args.plot:
        plots.save_scree_plot(model.spectrum, f"{prefix}.scree.png")
    if args.suppress_below is not None:
        print(storage.format_loadings_display(model.loadings, labels, args.suppress_below))
    n_kaiser = engine.kaiser_count(model.spectrum)
    rotation_note = ""
    if model.rotation is not None:
        rotation_note = (f", varimax in {model.rotation.sweeps} sweeps"
                         f" (criterion {model.rotation.criterion:.6f})")
    print(f"extracted {model.k} of {model.spectrum.n_vars} components, "
          f"{n_kaiser} eigenvalues > 1{rotation_note} -> {prefix}.*")
    return EXIT_OK


def cmd_designate(args):
    model, meta = storage.read_model(args.model)
    scores_file = meta.get("scores_file")
    if not scores_file:
        raise DataError("model has no scores file; run `factor` with --scores")
    scores_path = Path(args.model).parent / scores_file
    scores = storage.read_scores(scores_path)
    factor_labels = storage.read_factor_labels(args.factor_labels) if args.factor_labels else {}
    designations = decompose.designate(model, scores, labels=factor_labels)
    labels = dict(meta["variable_labels"])
    labels.update(zip((int(j) for j in scores.case_ids), scores.case_labels))
    if args.out:
        storage.write_designations(designations, labels, args.out)
        mean, sd = decompose.size_stats(designations) if len(designations) >= 2 else (0.0, 0.0)
        print(f"designated {len(designations)} factors "
              f"(positive-set sizes: mean {mean:.1f}, sd {sd:.1f}) -> {args.out}")
    else:
        print(storage.format_designations(designations, labels), end="")
    return EXIT_OK


def cmd_select(args):
    scores = storage.read_scores(args.scores)
    label = args.label or f"factor_{args.factor:02d}_positive"
    cset = decompose.select_positive(scores, args.factor, label)
    storage.write_set(cset, args.out)
    print(f"selected {len(cset.members)} journals with positive scores "
          f"on factor {args.factor} -> {args.out}")
    return EXIT_OK


def cmd_drill(args):
    m = storage.read_matrix(args.matrix)
    cset = storage.read_set(args.set)
    root = decompose.DecompositionNode(level=0, matrix=m)
    child = decompose.drill_down(root, cset, args.k, rotate=args.rotate != "none")
    prefix = args.out_prefix
    labels = _matrix_labels(child.matrix)
    storage.write_matrix(child.matrix, f"{prefix}.matrix.tsv")
    storage.write_eigenvalues(child.model.spectrum, f"{prefix}.eigenvalues.tsv")
    storage.write_loadings(child.model.loadings, labels, f"{prefix}.loadings.tsv")
    storage.write_scores(child.scores, f"{prefix}.scores.tsv")
    storage.write_model(child.model, labels, f"{prefix}.model.json",
                        scores_file=f"{Path(prefix).name}.scores.tsv")
    storage.write_designations(child.designations, labels, f"{prefix}.designations.tsv")
    if child.dropped_variables is not None and len(child.dropped_variables):
        storage.write_dropped(child.dropped_variables, f"{prefix}.dropped.tsv")
    n_kaiser = engine.kaiser_count(child.model.spectrum)
    print(f"drilled into {child.matrix.n_cases} cases x {child.matrix.n_vars} variables "
          f"({len(child.dropped_variables)} citing-less dropped), "
          f"{n_kaiser} eigenvalues > 1 -> {prefix}.*")
    return EXIT_OK


def cmd_env(args):
    m = storage.read_matrix(args.matrix)
    env = decompose.local_environment(m, args.seed, pct=args.pct / 100.0, rule=args.rule)
    storage.write_matrix(env, args.out)
    print(f"local environment of {m.label(args.seed)} at {args.pct:g}%: "
          f"{env.n_cases} cases x {env.n_vars} variables -> {args.out}")
    return EXIT_OK


def cmd_map(args):
    m = storage.read_matrix(args.matrix)
    sim = mapping.cosine_similarity(m, orientation=args.orientation)
    graph = mapping.build_graph(
        sim, isolate_threshold=args.isolate_cos, edge_threshold=args.edge_cos
    )
    mapping.export_pajek(graph, args.out)
    print(f"{graph.n_nodes} nodes, {graph.n_edges} edges "
          f"({graph.n_isolates_removed} isolates below cosine {args.isolate_cos:g} removed) "
          f"-> {args.out}")
    return EXIT_OK


def cmd_scatter(args):
    scores = storage.read_scores(args.scores)
    series = mapping.scatter_scores(
        scores,
        args.fx,
        args.fy,
        min_abs=args.min_abs,
        axis_rule=args.axis_rule,
        scale="log" if args.log else "linear",
    )
    out = Path(args.out)
    storage.write_scatter(series, out, out.with_suffix(".json"))
    if args.plot:
        plots.save_scatter_plot(series, out.with_suffix(".png"))
    note = f", {series.n_log_excluded} excluded by log scale" if series.n_log_excluded else ""
    print(f"{len(series.ids)} points pass |score| > {args.min_abs:g} "
          f"({args.axis_rule} axes){note} -> {args.out}")
    return EXIT_OK


def cmd_compare(args):
    sets = [storage.read_set(p) for p in args.sets]
    report = decompose.compare_sets(sets)
    if args.out:
        storage.write_json(report.as_dict(), args.out)
    print(f"union of {len(sets)} sets: {report.union_size} journals")
    for labels, count, _ in report.regions:
        print(f"  [{' & '.join(labels)}] only: {count}")
    for (a, b), v in report.jaccard:
        print(f"  Jaccard({a}, {b}) = {v:.4f}")
    return EXIT_OK


def cmd_synth(args):
    nested = None
    if args.sub_blocks:
        if args.size % args.sub_blocks:
            raise DataError(f"--sub-blocks {args.sub_blocks} must divide --size {args.size}")
        nested = synth.BlockSpec(
            n_blocks=args.sub_blocks,
            journals_per_block=args.size // args.sub_blocks,
            lambda_in=args.sub_lin,
            lambda_out=args.sub_lout,
        )
    spec = synth.BlockSpec(
        n_blocks=args.blocks,
        journals_per_block=args.size,
        lambda_in=args.lin,
        lambda_out=args.lout,
        nested=nested,
        seed=args.seed,
    )
    m, truth = synth.generate_block_model(spec)
    storage.write_matrix(m, args.out)
    storage.write_truth(truth, args.truth)
    print(f"planted {truth.n_blocks} blocks over {len(truth.journal_ids)} journals "
          f"-> {args.out}, {args.truth}")
    return EXIT_OK


def cmd_recover(args):
    m = storage.read_matrix(args.matrix)
    truth = storage.read_truth(args.truth)
    report = synth.evaluate_recovery(m, truth, args.k)
    print(f"recovery accuracy: {report.accuracy:.4f} "
          f"({report.matching_method} block-factor matching)")
    print("confusion (rows = planted blocks, columns = factors):")
    for b, row in enumerate(report.confusion):
        print(f"  block {b}: " + " ".join(f"{int(c):4d}" for c in row))
    return EXIT_OK


def cmd_run(args):
    overrides = {
        key: getattr(args, key)
        for key in pipeline._FIELD_PARSERS
        if hasattr(args, key) and getattr(args, key) is not None
    }
    if args.config:
        config = pipeline.read_config(args.config, overrides)
    else:
        missing = {"edges", "out_dir"} - overrides.keys()
        if missing:
            raise DataError(f"run needs --config or flags for: {sorted(missing)}")
        config = pipeline.RunConfig(**overrides).validate()
    manifest = pipeline.run_pipeline(config)
    n_artifacts = sum(len(s["artifacts"]) for s in manifest["stages"])
    print(f"pipeline ok: {len(manifest['stages'])} stages, {n_artifacts} artifacts "
          f"-> {Path(config.out_dir) / 'manifest.json'}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="factor-atlas",
        description="Classify journals from aggregated citation matrices "
                    "via rotated principal component models.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress details")
    parser.add_argument("--threads", type=int, default=None,
                        help="bound intra-stage parallelism (or FACTOR_ATLAS_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a cited/citing/count edge list")
    p.add_argument("--edges", required=True)
    p.add_argument("--labels")
    p.add_argument("--out", required=True)
    p.add_argument("--drop-diagonal", action="store_true",
                   help="zero within-journal citations (kept by default)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="corpus statistics as JSON")
    p.add_argument("matrix")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("filter", help="drop low-variance citing columns")
    p.add_argument("matrix")
    p.add_argument("--min-variance", type=float, default=8.0)
    p.add_argument("--out", required=True)
    p.add_argument("--dropped-out")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("factor", help="extract components, optionally rotate and score")
    p.add_argument("matrix")
    p.add_argument("--k", type=int, default=12)
    p.add_argument("--rotate", choices=["varimax", "none"], default="none")
    p.add_argument("--scores", action="store_true", help="compute factor scores")
    p.add_argument("--method", choices=["auto", "dense", "streaming"], default="auto")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--suppress-below", type=float, default=None, metavar="X",
                   help="print loadings table with |entry| < X blanked (display only)")
    p.add_argument("--plot", action="store_true", help="also render a scree plot PNG")
    p.set_defaults(func=cmd_factor)

    p = sub.add_parser("designate", help="top journals and positive counts per factor")
    p.add_argument("model", help="model JSON written by `factor`")
    p.add_argument("--factor-labels", help="sidecar TSV factor<TAB>label")
    p.add_argument("--out")
    p.set_defaults(func=cmd_designate)

    p = sub.add_parser("select", help="positive-score journal set of one factor")
    p.add_argument("scores")
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--label")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("drill", help="subset by a journal set and refit")
    p.add_argument("matrix")
    p.add_argument("--set", required=True)
    p.add_argument("--k", type=int, default=12)
    p.add_argument("--rotate", choices=["varimax", "none"], default="varimax")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_drill)

    p = sub.add_parser("env", help="local citation environment around a seed journal")
    p.add_argument("matrix")
    p.add_argument("--seed", type=int, required=True, help="seed journal id")
    p.add_argument("--pct", type=float, default=0.5,
                   help="traffic threshold as percent of the seed totals")
    p.add_argument("--rule", choices=["or", "and"], default="or")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_env)

    p = sub.add_parser("map", help="cosine similarity graph as a Pajek file")
    p.add_argument("matrix")
    p.add_argument("--isolate-cos", type=float, default=0.2)
    p.add_argument("--edge-cos", type=float, default=0.5)
    p.add_argument("--orientation", choices=["cited-rows", "citing-columns"],
                   default="cited-rows")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("scatter", help="two-factor score scatter series")
    p.add_argument("scores")
    p.add_argument("--fx", type=int, required=True)
    p.add_argument("--fy", type=int, required=True)
    p.add_argument("--min-abs", type=float, default=10.0)
    p.add_argument("--axis-rule", choices=["both", "either"], default="both")
    p.add_argument("--log", action="store_true", help="signed log10 coordinates")
    p.add_argument("--plot", action="store_true", help="also render a PNG")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scatter)

    p = sub.add_parser("compare", help="Venn regions and Jaccard of 2-5 sets")
    p.add_argument("sets", nargs="+")
    p.add_argument("--out", help="write the full report JSON here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="generate a planted block-model corpus")
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--size", type=int, required=True, help="journals per block")
    p.add_argument("--lin", type=float, required=True, help="within-block intensity")
    p.add_argument("--lout", type=float, required=True, help="cross-block intensity")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sub-blocks", type=int, help="nested sub-blocks per block")
    p.add_argument("--sub-lin", type=float, help="within-sub-block intensity")
    p.add_argument("--sub-lout", type=float, help="cross-sub-block intensity")
    p.add_argument("--out", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("recover", help="score block recovery of the factor pipeline")
    p.add_argument("matrix")
    p.add_argument("truth")
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("run", help="full pipeline with a manifest")
    p.add_argument("--config", help="key = value config file; flags override")
    p.add_argument("--edges")
    p.add_argument("--labels")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--variance-threshold", dest="variance_threshold", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--isolate-cos", dest="isolate_cos", type=float)
    p.add_argument("--edge-cos", dest="edge_cos", type=float)
    p.add_argument("--scatter-min-abs", dest="scatter_min_abs", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    threads = args.threads
    if threads is None and os.environ.get("FACTOR_ATLAS_THREADS"):
        try:
            threads = int(os.environ["FACTOR_ATLAS_THREADS"])
        except ValueError:
            print("factor-atlas: FACTOR_ATLAS_THREADS must be an integer", file=sys.stderr)
            return EXIT_USAGE
    args.threads = threads
    try:
        if args.command == "run":
            # the pipeline applies its own bound from the config
            return args.func(args)
        limiter = None
        if threads is not None:
            from threadpoolctl import threadpool_limits

            limiter = threadpool_limits(limits=threads)
        try:
            return args.func(args)
        finally:
            if limiter is not None:
                limiter.unregister()
    except NumericalError as exc:
        print(f"factor-atlas: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DataError as exc:
        print(f"factor-atlas: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FactorAtlasError as exc:
        print(f"factor-atlas: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"factor-atlas: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
