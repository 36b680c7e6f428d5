"""End-to-end pipeline over on-disk artifacts.

``run_pipeline`` executes the full workflow (ingest, filter, factor,
rotate, scores, classify, map, scatter) against one configuration, writes
every intermediate artifact, and emits a manifest with a content hash per
artifact. Identical configuration and inputs reproduce identical bytes,
so manifest hashes double as a regression check. A stage failure aborts
the run and leaves a partial manifest naming the stage.
"""

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

from .errors import DomainError, EmptySelectionError, FactorAtlasError, ParseError
from . import decompose, engine, mapping, matrix, plots, storage

log = logging.getLogger(__name__)

STAGE_NAMES = ("ingest", "filter", "factor", "rotate", "scores", "classify", "map", "scatter")


@dataclass
class RunConfig:
    """Reproducible parameters of one pipeline run."""

    edges: str
    out_dir: str
    labels: str | None = None
    variance_threshold: float = 8.0
    k: int = 12
    rotate: bool = True
    isolate_cos: float = 0.2
    edge_cos: float = 0.5
    scatter_min_abs: float = 10.0
    scatter_fx: int = 1
    scatter_fy: int = 2
    scatter_axis_rule: str = "both"
    scatter_log: bool = False
    drop_diagonal: bool = False
    plots: bool = True
    seed: int = 0
    threads: int | None = None

    def validate(self):
        if self.variance_threshold < 0:
            raise DomainError("variance_threshold must be >= 0")
        if self.k < 1:
            raise DomainError("k must be >= 1")
        if not 0.0 <= self.isolate_cos <= self.edge_cos <= 1.0:
            raise DomainError("need 0 <= isolate_cos <= edge_cos <= 1")
        if self.scatter_min_abs < 0:
            raise DomainError("scatter_min_abs must be >= 0")
        if self.scatter_axis_rule not in ("both", "either"):
            raise DomainError("scatter_axis_rule must be 'both' or 'either'")
        if self.scatter_fx == self.scatter_fy:
            raise DomainError("scatter_fx and scatter_fy must differ")
        if min(self.scatter_fx, self.scatter_fy) < 1:
            raise DomainError("scatter factors are 1-based")
        if self.threads is not None and self.threads < 1:
            raise DomainError("threads must be >= 1")
        return self

    def as_dict(self):
        return dataclasses.asdict(self)


_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def _parse_bool(text):
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise DomainError(f"expected a boolean, got {text!r}") from None


def _parse_opt(parser):
    return lambda text: None if text.strip().lower() == "none" else parser(text)


_FIELD_PARSERS = {
    "edges": str,
    "out_dir": str,
    "labels": _parse_opt(str),
    "variance_threshold": float,
    "k": int,
    "rotate": _parse_bool,
    "isolate_cos": float,
    "edge_cos": float,
    "scatter_min_abs": float,
    "scatter_fx": int,
    "scatter_fy": int,
    "scatter_axis_rule": str,
    "scatter_log": _parse_bool,
    "drop_diagonal": _parse_bool,
    "plots": _parse_bool,
    "seed": int,
    "threads": _parse_opt(int),
}


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_config(config: RunConfig, path):
    """Flat ``key = value`` file; round-trips losslessly."""
    lines = [f"{f.name} = {_format_value(getattr(config, f.name))}"
             for f in dataclasses.fields(config)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_config(path, overrides=None) -> RunConfig:
    """Parse a config file, then apply non-None overrides on top."""
    values = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"expected `key = value`, got {raw!r}", line_no)
        key = key.strip()
        if key not in _FIELD_PARSERS:
            raise ParseError(f"unknown config key {key!r}", line_no)
        try:
            values[key] = _FIELD_PARSERS[key](value.strip())
        except (ValueError, DomainError) as exc:
            raise ParseError(f"bad value for {key}: {exc}", line_no) from None
    for key, value in (overrides or {}).items():
        if value is not None:
            if key not in _FIELD_PARSERS:
                raise DomainError(f"unknown config key {key!r}")
            values[key] = value
    missing = {"edges", "out_dir"} - values.keys()
    if missing:
        raise DomainError(f"config is missing required keys: {sorted(missing)}")
    return RunConfig(**values).validate()


class _WarningCollector(logging.Handler):
    """Captures package warnings so the manifest can carry them."""

    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.messages = []

    def emit(self, record):
        self.messages.append(record.getMessage())


class _ManifestBuilder:
    def __init__(self, config, out_dir):
        self.out_dir = out_dir
        self.stages = []
        self.manifest = {
            "format": "factor-atlas-manifest",
            "version": 1,
            "config": config.as_dict(),
            "stages": self.stages,
            "status": "running",
            "failed_stage": None,
            "error": None,
        }

    def record(self, name, params, artifacts, warnings):
        self.stages.append(
            {
                "name": name,
                "params": params,
                "artifacts": [
                    {
                        "path": str(Path(p).relative_to(self.out_dir)),
                        "sha256": storage.file_sha256(p),
                        "bytes": Path(p).stat().st_size,
                    }
                    for p in artifacts
                ],
                "warnings": warnings,
            }
        )

    def finish(self, status, failed_stage=None, error=None):
        self.manifest["status"] = status
        self.manifest["failed_stage"] = failed_stage
        self.manifest["error"] = error
        storage.write_json(self.manifest, self.out_dir / "manifest.json")
        return self.manifest


def _limit_threads(threads):
    if threads is None:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def run_pipeline(config: RunConfig):
    """Execute every stage and return the manifest dict.

    On a stage error the partial manifest (with ``failed_stage`` set) is
    written before the exception propagates.
    """
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    builder = _ManifestBuilder(config, out_dir)
    collector = _WarningCollector()
    pkg_logger = logging.getLogger("factor_atlas")
    pkg_logger.addHandler(collector)
    state = {}
    limiter = _limit_threads(config.threads)
    try:
        for name in STAGE_NAMES:
            collector.messages = []
            try:
                params, artifacts = _STAGES[name](config, out_dir, state)
            except FactorAtlasError as exc:
                builder.finish("failed", failed_stage=name, error=str(exc))
                raise
            except OSError as exc:
                builder.finish("failed", failed_stage=name, error=str(exc))
                raise FactorAtlasError(f"stage {name}: {exc}") from exc
            builder.record(name, params, artifacts, list(collector.messages))
        return builder.finish("ok")
    finally:
        pkg_logger.removeHandler(collector)
        if limiter is not None:
            limiter.unregister()


def _stage_ingest(config, out_dir, state):
    labels = {}
    if config.labels:
        with open(config.labels, encoding="utf-8") as fh:
            labels = matrix.read_label_map(fh)
    with open(config.edges, encoding="utf-8") as fh:
        m = matrix.ingest_edge_list(fh, label_map=labels, drop_diagonal=config.drop_diagonal)
    state["corpus"] = m
    matrix_path = out_dir / "corpus.matrix.tsv"
    stats_path = out_dir / "corpus.stats.json"
    storage.write_matrix(m, matrix_path)
    storage.write_json(matrix.compute_stats(m).as_dict(), stats_path)
    params = {
        "edges": config.edges,
        "labels": config.labels,
        "drop_diagonal": config.drop_diagonal,
    }
    return params, [matrix_path, stats_path]


def _stage_filter(config, out_dir, state):
    filtered, dropped = matrix.filter_by_variance(state["corpus"], config.variance_threshold)
    state["filtered"] = filtered
    matrix_path = out_dir / "filtered.matrix.tsv"
    dropped_path = out_dir / "filtered.dropped.tsv"
    storage.write_matrix(filtered, matrix_path)
    storage.write_dropped(dropped, dropped_path)
    return {"variance_threshold": config.variance_threshold}, [matrix_path, dropped_path]


def _stage_factor(config, out_dir, state):
    m = state["filtered"]
    z = engine.standardize(m)
    corr = z.gram()
    spectrum, unrotated = engine.eigendecompose(corr, config.k, variable_ids=m.variables)
    state.update(z=z, corr=corr, spectrum=spectrum, unrotated=unrotated)
    eig_path = out_dir / "eigenvalues.tsv"
    load_path = out_dir / "loadings_unrotated.tsv"
    storage.write_eigenvalues(spectrum, eig_path)
    labels = {int(j): m.label(j) for j in m.variables}
    storage.write_loadings(unrotated, labels, load_path)
    artifacts = [eig_path, load_path]
    if config.plots:
        scree_path = out_dir / "scree.png"
        plots.save_scree_plot(spectrum, scree_path)
        artifacts.append(scree_path)
    params = {"k": config.k, "kaiser_count": engine.kaiser_count(state["spectrum"])}
    return params, artifacts


def _stage_rotate(config, out_dir, state):
    if not config.rotate:
        state["model"] = engine.FactorModel(
            loadings=state["unrotated"], spectrum=state["spectrum"], rotation=None
        )
        return {"skipped": True}, []
    rotated, rotation = engine.varimax_rotate(state["unrotated"])
    state["model"] = engine.FactorModel(
        loadings=rotated, spectrum=state["spectrum"], rotation=rotation
    )
    m = state["filtered"]
    labels = {int(j): m.label(j) for j in m.variables}
    load_path = out_dir / "loadings_rotated.tsv"
    storage.write_loadings(rotated, labels, load_path)
    params = {
        "method": "varimax",
        "kaiser_normalization": True,
        "sweeps": rotation.sweeps,
        "converged": rotation.converged,
        "criterion": rotation.criterion,
    }
    return params, [load_path]


def _stage_scores(config, out_dir, state):
    scores = engine.factor_scores(state["model"], state["z"], state["corr"])
    state["scores"] = scores
    m = state["filtered"]
    labels = {int(j): m.label(j) for j in m.variables}
    scores_path = out_dir / "scores.tsv"
    model_path = out_dir / "model.json"
    storage.write_scores(scores, scores_path)
    storage.write_model(state["model"], labels, model_path, scores_file="scores.tsv")
    return {"ridge_applied": scores.ridge_applied}, [scores_path, model_path]


def _stage_classify(config, out_dir, state):
    m = state["filtered"]
    designations = decompose.designate(state["model"], state["scores"])
    state["designations"] = designations
    labels = {int(j): m.label(j) for j in set(m.cases) | set(m.variables)}
    desig_path = out_dir / "designations.tsv"
    storage.write_designations(designations, labels, desig_path)
    artifacts = [desig_path]
    sets_dir = out_dir / "sets"
    sets_dir.mkdir(exist_ok=True)
    for d in designations:
        try:
            cset = decompose.select_positive(
                state["scores"], d.factor_index, f"factor_{d.factor_index:02d}_positive"
            )
        except EmptySelectionError:
            log.warning("factor %d has no positive scores; no set written", d.factor_index)
            continue
        set_path = sets_dir / f"set_f{d.factor_index:02d}.tsv"
        storage.write_set(cset, set_path)
        artifacts.append(set_path)
    return {"n_factors": len(designations)}, artifacts


def _stage_map(config, out_dir, state):
    sim = mapping.cosine_similarity(state["filtered"], orientation="cited-rows")
    graph = mapping.build_graph(
        sim, isolate_threshold=config.isolate_cos, edge_threshold=config.edge_cos
    )
    net_path = out_dir / "journals.net"
    mapping.export_pajek(graph, net_path)
    params = {
        "orientation": "cited-rows",
        "isolate_cos": config.isolate_cos,
        "edge_cos": config.edge_cos,
        "nodes": graph.n_nodes,
        "edges": graph.n_edges,
        "isolates_removed": graph.n_isolates_removed,
    }
    return params, [net_path]


def _stage_scatter(config, out_dir, state):
    series = mapping.scatter_scores(
        state["scores"],
        config.scatter_fx,
        config.scatter_fy,
        min_abs=config.scatter_min_abs,
        axis_rule=config.scatter_axis_rule,
        scale="log" if config.scatter_log else "linear",
    )
    stem = f"scatter_f{config.scatter_fx}_f{config.scatter_fy}"
    tsv_path = out_dir / f"{stem}.tsv"
    json_path = out_dir / f"{stem}.json"
    storage.write_scatter(series, tsv_path, json_path)
    artifacts = [tsv_path, json_path]
    if config.plots:
        png_path = out_dir / f"{stem}.png"
        plots.save_scatter_plot(series, png_path)
        artifacts.append(png_path)
    return series.metadata(), artifacts


_STAGES = {
    "ingest": _stage_ingest,
    "filter": _stage_filter,
    "factor": _stage_factor,
    "rotate": _stage_rotate,
    "scores": _stage_scores,
    "classify": _stage_classify,
    "map": _stage_map,
    "scatter": _stage_scatter,
}
