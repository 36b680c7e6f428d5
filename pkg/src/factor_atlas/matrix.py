"""Sparse journal-journal citation matrices.

A citation matrix is asymmetric: rows ("cases") are journals in their cited
role, columns ("variables") are journals in their citing role. Cell
``(i, j)`` counts citations from articles in journal ``j`` to articles in
journal ``i`` within the aggregation window. Absent cells are true zeros,
not missing data: a non-citation is informative. Within-journal cells on
the diagonal are kept by default.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import (
    DegenerateSubsetError,
    DomainError,
    DuplicateEdgeError,
    EmptyCorpusError,
    EmptySelectionError,
    NotFoundError,
    ParseError,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class JournalRecord:
    """Identity of one journal in the corpus."""

    id: int
    label: str
    is_cited: bool
    is_citing: bool


@dataclass(frozen=True)
class MatrixStats:
    """Corpus-level counts and densities of a citation matrix."""

    n_cases: int
    n_vars: int
    n_links: int
    total_citations: int
    density: float
    mean_per_link: float

    def as_dict(self):
        """Stable dict for JSON reports; density to 4 significant digits."""
        return {
            "n_cases": self.n_cases,
            "n_vars": self.n_vars,
            "n_links": self.n_links,
            "total_citations": self.total_citations,
            "density": float(f"{self.density:.4g}"),
            "density_pct": float(f"{self.density * 100.0:.4g}"),
            "mean_per_link": round(self.mean_per_link, 4),
        }


@dataclass(frozen=True)
class CitationMatrix:
    """Immutable sparse cases x variables count matrix with journal identities.

    Attributes
    ----------
    cases : ndarray of int
        Cited journal ids, ascending.
    variables : ndarray of int
        Citing journal ids, ascending.
    counts : scipy.sparse.csr_matrix
        Shape ``(len(cases), len(variables))``; stored values are >= 1.
    journals : dict of int -> JournalRecord
        Corpus-wide identity table; shared (not copied) by derived views.
    """

    cases: np.ndarray
    variables: np.ndarray
    counts: sparse.csr_matrix
    journals: dict = field(repr=False)

    @property
    def n_cases(self):
        return len(self.cases)

    @property
    def n_vars(self):
        return len(self.variables)

    def label(self, journal_id):
        rec = self.journals.get(int(journal_id))
        return rec.label if rec is not None else str(journal_id)

    def case_positions(self):
        """id -> row index map."""
        return {int(j): i for i, j in enumerate(self.cases)}

    def variable_positions(self):
        """id -> column index map."""
        return {int(j): i for i, j in enumerate(self.variables)}

    def case_totals(self):
        """Total times each case journal is cited (row sums)."""
        return np.asarray(self.counts.sum(axis=1)).ravel()

    def variable_totals(self):
        """Total references given by each variable journal (column sums)."""
        return np.asarray(self.counts.sum(axis=0)).ravel()

    def equals(self, other):
        """Structural equality: same cases, variables, and cell values."""
        return (
            np.array_equal(self.cases, other.cases)
            and np.array_equal(self.variables, other.variables)
            and (self.counts != other.counts).nnz == 0
        )


def build_matrix(cases, variables, cells, journals):
    """Assemble a CitationMatrix from explicit parts.

    ``cells`` is an iterable of ``(cited_id, citing_id, count)``. Ordering of
    ``cases`` and ``variables`` is normalized to ascending id so that
    identical content always produces an identical matrix.
    """
    cases = np.asarray(sorted(int(c) for c in cases), dtype=np.int64)
    variables = np.asarray(sorted(int(v) for v in variables), dtype=np.int64)
    row_of = {int(j): i for i, j in enumerate(cases)}
    col_of = {int(j): i for i, j in enumerate(variables)}
    rows, cols, data = [], [], []
    for cited, citing, count in cells:
        rows.append(row_of[int(cited)])
        cols.append(col_of[int(citing)])
        data.append(float(count))
    counts = sparse.csr_matrix(
        (data, (rows, cols)), shape=(len(cases), len(variables)), dtype=np.float64
    )
    counts.sum_duplicates()
    counts.sort_indices()
    return CitationMatrix(cases=cases, variables=variables, counts=counts, journals=journals)


def ingest_edge_list(lines, label_map=None, drop_diagonal=False):
    """Parse a ``cited <TAB> citing <TAB> count`` edge list into a matrix.

    Parameters
    ----------
    lines : iterable of str
        Line-oriented stream. Lines starting with ``#`` and blank lines are
        skipped. Fields may be separated by any whitespace.
    label_map : mapping of int -> str, optional
        Journal display names; journals without an entry are labelled with
        their id.
    drop_diagonal : bool
        Zero out within-journal cells (cited == citing). Off by default;
        the diagonal is informative and retained.

    Returns
    -------
    CitationMatrix

    Raises
    ------
    ParseError
        Malformed line (wrong field count, non-integer field).
    DomainError
        Citation count below 1.
    DuplicateEdgeError
        Repeated (cited, citing) pair. Aggregated data carries one row per
        pair; summation would mask corrupt inputs.
    EmptyCorpusError
        No cells survive.
    """
    label_map = label_map or {}
    seen = set()
    cells = []
    cited_ids = set()
    citing_ids = set()
    n_diagonal_dropped = 0

    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(f"expected 3 fields, got {len(fields)}", line_no)
        try:
            cited, citing, count = (int(f) for f in fields)
        except ValueError:
            raise ParseError(f"non-integer field in {fields!r}", line_no) from None
        if count < 1:
            raise DomainError(f"line {line_no}: citation count must be >= 1, got {count}")
        key = (cited, citing)
        if key in seen:
            raise DuplicateEdgeError(f"line {line_no}: duplicate pair {key}")
        seen.add(key)
        if drop_diagonal and cited == citing:
            n_diagonal_dropped += 1
            continue
        cells.append((cited, citing, count))
        cited_ids.add(cited)
        citing_ids.add(citing)

    if not cells:
        raise EmptyCorpusError("edge list contains no citation cells")
    if n_diagonal_dropped:
        log.warning("dropped %d within-journal diagonal cells", n_diagonal_dropped)

    journals = {}
    for jid in sorted(cited_ids | citing_ids):
        journals[jid] = JournalRecord(
            id=jid,
            label=str(label_map.get(jid, jid)),
            is_cited=jid in cited_ids,
            is_citing=jid in citing_ids,
        )
    return build_matrix(sorted(cited_ids), sorted(citing_ids), cells, journals)


def read_label_map(lines):
    """Parse an ``id <TAB> label`` table into a dict."""
    labels = {}
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise ParseError("expected `id<TAB>label`", line_no)
        try:
            jid = int(parts[0])
        except ValueError:
            raise ParseError(f"non-integer id {parts[0]!r}", line_no) from None
        label = parts[1].strip()
        if not label:
            raise ParseError("empty label", line_no)
        labels[jid] = label
    return labels


def compute_stats(m):
    """Corpus statistics: links, totals, density, mean citations per link."""
    n_links = int(m.counts.nnz)
    total = int(round(float(m.counts.sum())))
    denom = m.n_cases * m.n_vars
    density = n_links / denom if denom else 0.0
    if n_links == 0:
        log.warning("matrix has no links; mean_per_link reported as 0 by convention")
        mean_per_link = 0.0
    else:
        mean_per_link = total / n_links
    return MatrixStats(
        n_cases=m.n_cases,
        n_vars=m.n_vars,
        n_links=n_links,
        total_citations=total,
        density=density,
        mean_per_link=mean_per_link,
    )


def column_variances(m):
    """Population variance of every citing column, absent cells as zeros."""
    n = m.n_cases
    if n == 0:
        return np.zeros(m.n_vars)
    csc = m.counts.tocsc()
    s1 = np.asarray(csc.sum(axis=0)).ravel()
    s2 = np.asarray(csc.multiply(csc).sum(axis=0)).ravel()
    mean = s1 / n
    var = s2 / n - mean**2
    return np.maximum(var, 0.0)


def column_variance(m, variable_id):
    """Population variance of one citing column over all cases."""
    pos = m.variable_positions().get(int(variable_id))
    if pos is None:
        raise NotFoundError(f"unknown variable {variable_id}")
    return float(column_variances(m)[pos])


def filter_by_variance(m, threshold):
    """Drop citing columns whose population variance falls below ``threshold``.

    Low-variance columns belong to small journals that contribute little to
    the factor structure; removing them keeps the variable set tractable.
    Cases are untouched.

    Returns
    -------
    (CitationMatrix, ndarray)
        The filtered matrix and the dropped variable ids.
    """
    if threshold < 0:
        raise DomainError(f"variance threshold must be >= 0, got {threshold}")
    variances = column_variances(m)
    keep = variances >= threshold
    if not keep.any():
        raise EmptySelectionError(
            f"variance threshold {threshold} removed all {m.n_vars} variables"
        )
    dropped = m.variables[~keep]
    if dropped.size:
        log.info("variance filter at %g dropped %d of %d variables", threshold, dropped.size, m.n_vars)
    filtered = CitationMatrix(
        cases=m.cases,
        variables=m.variables[keep],
        counts=m.counts[:, np.flatnonzero(keep)].tocsr(),
        journals=m.journals,
    )
    return filtered, dropped


def subset(m, keep_cases):
    """Restrict to a case subset, keeping only those journals as variables.

    The variable set of the result is ``keep_cases & m.variables``: inside a
    selected group, only the selected journals' citing patterns span the
    space. Columns that end up with zero variance over the restricted cases
    are dropped with a warning.

    Returns
    -------
    (CitationMatrix, ndarray)
        The restricted matrix and the ids of zero-variance columns dropped.
    """
    keep = {int(j) for j in keep_cases}
    if not keep:
        raise DomainError("keep_cases must be non-empty")
    known = set(int(j) for j in m.cases)
    strangers = keep - known
    if strangers:
        raise DomainError(f"keep_cases not among matrix cases: {sorted(strangers)[:10]}")

    case_mask = np.fromiter((int(j) in keep for j in m.cases), dtype=bool, count=m.n_cases)
    var_mask = np.fromiter((int(j) in keep for j in m.variables), dtype=bool, count=m.n_vars)
    sub = CitationMatrix(
        cases=m.cases[case_mask],
        variables=m.variables[var_mask],
        counts=m.counts[np.flatnonzero(case_mask)][:, np.flatnonzero(var_mask)].tocsr(),
        journals=m.journals,
    )
    variances = column_variances(sub)
    live = variances > 0.0
    if not live.any():
        raise DegenerateSubsetError(
            f"all {sub.n_vars} citing columns have zero variance over the {sub.n_cases}-case subset"
        )
    dropped = sub.variables[~live]
    if dropped.size:
        log.warning("subset dropped %d zero-variance citing columns", dropped.size)
        sub = CitationMatrix(
            cases=sub.cases,
            variables=sub.variables[live],
            counts=sub.counts[:, np.flatnonzero(live)].tocsr(),
            journals=m.journals,
        )
    return sub, dropped
