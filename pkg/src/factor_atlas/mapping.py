"""Vector-space journal maps and factor-score scatter series.

Cosine similarity over raw citation-count vectors visualizes the vector
space itself; it is intentionally distinct from the correlation structure
the factor model decomposes, which works on z-scores. Graphs are emitted
in Pajek format for external viewers; no layout is computed here.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyGraphError, ParseError
from .matrix import CitationMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric cosine matrix over journal citation-count vectors."""

    ids: np.ndarray
    labels: tuple
    values: np.ndarray
    orientation: str
    excluded_ids: tuple = ()


@dataclass(frozen=True)
class CosineGraph:
    """Thresholded undirected journal similarity graph.

    ``edges`` rows are (position i, position j, weight) with i < j, both
    0-based into ``node_ids``. Thresholds are None for imported graphs.
    """

    node_ids: np.ndarray
    labels: tuple
    edges: tuple
    isolate_threshold: float | None = None
    edge_threshold: float | None = None
    n_isolates_removed: int = 0

    @property
    def n_nodes(self):
        return len(self.node_ids)

    @property
    def n_edges(self):
        return len(self.edges)


@dataclass(frozen=True)
class ScatterSeries:
    """Point set for a two-factor score plot."""

    ids: np.ndarray
    labels: tuple
    x: np.ndarray
    y: np.ndarray
    factor_x: int
    factor_y: int
    rotated: bool
    min_abs: float
    axis_rule: str
    scale: str
    n_filtered_out: int = 0
    n_log_excluded: int = 0

    def metadata(self):
        return {
            "factor_x": self.factor_x,
            "factor_y": self.factor_y,
            "rotated": self.rotated,
            "min_abs": self.min_abs,
            "axis_rule": self.axis_rule,
            "scale": self.scale,
            "n_points": len(self.ids),
            "n_filtered_out": self.n_filtered_out,
            "n_log_excluded": self.n_log_excluded,
        }


def cosine_similarity(m: CitationMatrix, orientation="cited-rows") -> SimilarityMatrix:
    """Cosine similarity between journal citation-count vectors.

    ``cited-rows`` compares the cases by their citing-environment profiles
    (the default for journal maps); ``citing-columns`` compares the citing
    variables. Zero vectors are excluded with a warning, not an error.
    """
    if orientation == "cited-rows":
        vectors = m.counts.tocsr()
        ids = m.cases
    elif orientation == "citing-columns":
        vectors = m.counts.T.tocsr()
        ids = m.variables
    else:
        raise DomainError(f"orientation must be 'cited-rows' or 'citing-columns', got {orientation!r}")

    norms = np.sqrt(np.asarray(vectors.multiply(vectors).sum(axis=1)).ravel())
    live = norms > 0.0
    excluded = tuple(int(j) for j in ids[~live])
    if excluded:
        log.warning("excluding %d zero vectors from the similarity matrix", len(excluded))
    vectors = vectors[np.flatnonzero(live)]
    ids = ids[live]
    norms = norms[live]

    gram = np.asarray((vectors @ vectors.T).todense())
    sim = gram / np.outer(norms, norms)
    sim = (sim + sim.T) / 2.0
    np.clip(sim, 0.0, 1.0, out=sim)
    np.fill_diagonal(sim, 1.0)
    return SimilarityMatrix(
        ids=ids,
        labels=tuple(m.label(j) for j in ids),
        values=sim,
        orientation=orientation,
        excluded_ids=excluded,
    )


def build_graph(sim: SimilarityMatrix, isolate_threshold=0.2, edge_threshold=0.5) -> CosineGraph:
    """Drop isolates, then keep pairs at or above the edge threshold.

    A node is an isolate when its best off-diagonal cosine falls below
    ``isolate_threshold``; isolates are removed before edges are formed, so
    a retained node may still end up with no edge at the (higher) edge
    threshold.
    """
    if not 0.0 <= isolate_threshold <= edge_threshold <= 1.0:
        raise DomainError(
            f"need 0 <= isolate ({isolate_threshold}) <= edge ({edge_threshold}) <= 1"
        )
    values = sim.values.copy()
    np.fill_diagonal(values, -1.0)
    keep = values.max(axis=1) >= isolate_threshold
    n_removed = int((~keep).sum())
    if n_removed:
        log.info("removed %d isolates below cosine %g", n_removed, isolate_threshold)
    if not keep.any():
        raise EmptyGraphError(f"no node has a neighbor at cosine >= {isolate_threshold}")

    kept_idx = np.flatnonzero(keep)
    sub = values[np.ix_(kept_idx, kept_idx)]
    edges = []
    for a in range(len(kept_idx) - 1):
        for b in range(a + 1, len(kept_idx)):
            w = sub[a, b]
            if w >= edge_threshold:
                edges.append((a, b, float(w)))
    return CosineGraph(
        node_ids=sim.ids[kept_idx],
        labels=tuple(sim.labels[i] for i in kept_idx),
        edges=tuple(edges),
        isolate_threshold=isolate_threshold,
        edge_threshold=edge_threshold,
        n_isolates_removed=n_removed,
    )


def _quote_label(label):
    return '"' + label.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _unquote_label(text, line_no):
    if len(text) < 2 or not (text.startswith('"') and text.endswith('"')):
        raise ParseError(f"expected quoted label, got {text!r}", line_no)
    body = text[1:-1]
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\":
            if i + 1 >= len(body) or body[i + 1] not in ('"', "\\"):
                raise ParseError(f"bad escape in label {text!r}", line_no)
            out.append(body[i + 1])
            i += 2
        elif c == '"':
            raise ParseError(f"unescaped quote in label {text!r}", line_no)
        else:
            out.append(c)
            i += 1
    return "".join(out)


def export_pajek(graph: CosineGraph, path):
    """Write the graph as a Pajek ``.net`` file.

    Vertices are numbered 1..n in node order with quoted labels; edges are
    ``i j w`` with 4-decimal weights. The serialization is canonical, so
    exporting a parsed file reproduces it byte for byte.
    """
    lines = [f"*Vertices {graph.n_nodes}"]
    for pos, label in enumerate(graph.labels, start=1):
        lines.append(f"{pos} {_quote_label(label)}")
    lines.append("*Edges")
    for a, b, w in sorted(graph.edges):
        lines.append(f"{a + 1} {b + 1} {w:.4f}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_pajek(path) -> CosineGraph:
    """Read a Pajek ``.net`` file written by :func:`export_pajek`.

    The file format stores 1-based vertex numbers, labels, and 4-decimal
    edge weights; thresholds are not part of the format and come back as
    None.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("*Vertices"):
        raise ParseError("missing *Vertices header", 1)
    try:
        n = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise ParseError(f"bad vertex count in {lines[0]!r}", 1) from None

    labels = []
    for line_no in range(2, 2 + n):
        if line_no - 1 >= len(lines):
            raise ParseError("vertex section truncated", line_no)
        line = lines[line_no - 1]
        head, _, rest = line.partition(" ")
        if not head.isdigit() or int(head) != line_no - 1:
            raise ParseError(f"expected vertex {line_no - 1}, got {line!r}", line_no)
        labels.append(_unquote_label(rest.strip(), line_no))

    edge_header = 2 + n
    if edge_header - 1 >= len(lines) or lines[edge_header - 1] != "*Edges":
        raise ParseError("missing *Edges section", edge_header)
    edges = []
    for line_no in range(edge_header + 1, len(lines) + 1):
        line = lines[line_no - 1]
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"expected `i j w`, got {line!r}", line_no)
        try:
            a, b, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"bad edge line {line!r}", line_no) from None
        if not (1 <= a <= n and 1 <= b <= n) or a == b:
            raise ParseError(f"edge endpoints out of range in {line!r}", line_no)
        lo, hi = min(a, b), max(a, b)
        edges.append((lo - 1, hi - 1, w))
    return CosineGraph(
        node_ids=np.arange(1, n + 1, dtype=np.int64),
        labels=tuple(labels),
        edges=tuple(edges),
    )


def signed_log10(v):
    """Odd log transform: sign(v) * log10(|v|), with 0 mapped to 0."""
    if v == 0.0:
        return 0.0
    return math.copysign(math.log10(abs(v)), v)


def scatter_scores(scores, factor_x, factor_y, min_abs=10.0, axis_rule="both",
                   scale="linear") -> ScatterSeries:
    """Select and transform score pairs for a two-factor scatter plot.

    ``min_abs`` keeps cases whose absolute score strictly exceeds it on
    both axes (``axis_rule="both"``) or on at least one (``"either"``);
    zero disables the filter. Under ``scale="log"`` coordinates map to
    signed log10 and points with any coordinate magnitude in (0, 1] are
    excluded (their logarithm would flip sign misleadingly); exclusions are
    counted, never silent.
    """
    if factor_x == factor_y:
        raise DomainError("scatter axes must be two different factors")
    for f in (factor_x, factor_y):
        if not 1 <= f <= scores.k:
            raise DomainError(f"factor {f} outside 1..{scores.k}")
    if axis_rule not in ("both", "either"):
        raise DomainError(f"axis_rule must be 'both' or 'either', got {axis_rule!r}")
    if scale not in ("linear", "log"):
        raise DomainError(f"scale must be 'linear' or 'log', got {scale!r}")
    if min_abs < 0:
        raise DomainError(f"min_abs must be >= 0, got {min_abs}")

    x = scores.entries[:, factor_x - 1]
    y = scores.entries[:, factor_y - 1]
    if min_abs == 0.0:
        passed = np.ones(len(x), dtype=bool)
    elif axis_rule == "both":
        passed = (np.abs(x) > min_abs) & (np.abs(y) > min_abs)
    else:
        passed = (np.abs(x) > min_abs) | (np.abs(y) > min_abs)
    n_filtered_out = int((~passed).sum())

    n_log_excluded = 0
    if scale == "log":
        ax, ay = np.abs(x), np.abs(y)
        in_unit = ((ax > 0.0) & (ax <= 1.0)) | ((ay > 0.0) & (ay <= 1.0))
        n_log_excluded = int((passed & in_unit).sum())
        if n_log_excluded:
            log.warning("log scale excludes %d points with a coordinate in (0, 1]",
                        n_log_excluded)
        passed &= ~in_unit

    idx = np.flatnonzero(passed)
    out_x = x[idx].astype(np.float64)
    out_y = y[idx].astype(np.float64)
    if scale == "log":
        out_x = np.array([signed_log10(v) for v in out_x])
        out_y = np.array([signed_log10(v) for v in out_y])
    return ScatterSeries(
        ids=scores.case_ids[idx],
        labels=tuple(scores.case_labels[i] for i in idx),
        x=out_x,
        y=out_y,
        factor_x=factor_x,
        factor_y=factor_y,
        rotated=scores.rotated,
        min_abs=min_abs,
        axis_rule=axis_rule,
        scale=scale,
        n_filtered_out=n_filtered_out,
        n_log_excluded=n_log_excluded,
    )
