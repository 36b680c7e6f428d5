"""Hierarchical decomposition of a corpus into factor-defined journal sets.

A rotated factor is designated by evidence, not by name: its top-loading
citing journal, its top-scoring cited journal, and the number of journals
scoring positively on it. Journals with a positive score on a dimension
form that dimension's classification set; a negative score means the
journal definitely does not belong. Selecting a set and re-factoring the
restricted matrix descends one level, from database to discipline to
specialty. Sets from one orthogonally rotated model may overlap: factors
are independent dimensions, not a partition, and nothing here enforces
partition semantics.
"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateEnvironmentError,
    DomainError,
    EmptySelectionError,
    NotFoundError,
)
from .matrix import CitationMatrix, subset
from .engine import FactorModel, ScoreMatrix, fit_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FactorDesignation:
    """Evidence summary for one rotated factor (1-based index)."""

    factor_index: int
    top_loading_id: int
    top_loading_value: float
    top_score_id: int
    top_score_value: float
    n_positive_scores: int
    n_zero_scores: int = 0
    loading_tie: bool = False
    score_tie: bool = False
    label: str | None = None


@dataclass(frozen=True)
class ClassificationSet:
    """A labeled set of journal ids with its origin."""

    label: str
    members: frozenset
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.members:
            raise EmptySelectionError(f"classification set {self.label!r} is empty")


@dataclass
class DecompositionNode:
    """One level of the top-down decomposition tree."""

    level: int
    matrix: CitationMatrix
    parent_factor: int | None = None
    model: FactorModel | None = None
    scores: ScoreMatrix | None = None
    designations: list = field(default_factory=list)
    dropped_variables: np.ndarray | None = None
    children: list = field(default_factory=list)


def _argmax_with_tie(values):
    best = int(np.argmax(values))
    tie = bool(np.sum(values == values[best]) > 1)
    return best, tie


def designate(model: FactorModel, scores: ScoreMatrix, labels=None):
    """Summarize every factor by its top journals and positive-score count.

    Ties on the maximum are broken toward the lowest journal id (ids are
    ascending in the matrices) and flagged. Optional ``labels`` attach
    human-assigned factor names by 1-based index; the designation itself
    never invents one.
    """
    if scores.derived_from is not model:
        log.warning("scores were not derived from the supplied model")
    labels = labels or {}
    out = []
    load = model.loadings.entries
    sc = scores.entries
    for j in range(model.k):
        li, l_tie = _argmax_with_tie(load[:, j])
        si, s_tie = _argmax_with_tie(sc[:, j])
        n_zero = int(np.sum(sc[:, j] == 0.0))
        if n_zero:
            log.warning("factor %d has %d exact-zero scores (excluded from the positive set)",
                        j + 1, n_zero)
        out.append(
            FactorDesignation(
                factor_index=j + 1,
                top_loading_id=int(model.loadings.variable_ids[li]),
                top_loading_value=float(load[li, j]),
                top_score_id=int(scores.case_ids[si]),
                top_score_value=float(sc[si, j]),
                n_positive_scores=int(np.sum(sc[:, j] > 0.0)),
                n_zero_scores=n_zero,
                loading_tie=l_tie,
                score_tie=s_tie,
                label=labels.get(j + 1),
            )
        )
    return out


def select_positive(scores: ScoreMatrix, factor: int, label: str) -> ClassificationSet:
    """Journals with a strictly positive score on the given 1-based factor."""
    if not 1 <= factor <= scores.k:
        raise DomainError(f"factor {factor} outside 1..{scores.k}")
    col = scores.entries[:, factor - 1]
    positive = col > 0.0
    n_zero = int(np.sum(col == 0.0))
    if n_zero:
        log.warning("factor %d: %d journals score exactly zero and are excluded", factor, n_zero)
    members = frozenset(int(j) for j in scores.case_ids[positive])
    if not members:
        raise EmptySelectionError(f"no journal scores positively on factor {factor}")
    return ClassificationSet(
        label=label,
        members=members,
        provenance={
            "kind": "positive-score",
            "factor": factor,
            "k": scores.k,
            "rotated": scores.rotated,
        },
    )


def size_stats(designations):
    """Mean and sample standard deviation of the positive-score counts."""
    if len(designations) < 2:
        raise DomainError("size statistics need at least 2 designations")
    counts = np.array([d.n_positive_scores for d in designations], dtype=np.float64)
    return float(counts.mean()), float(counts.std(ddof=1))


def drill_down(parent: DecompositionNode, cset: ClassificationSet, k: int,
               rotate=True, method="auto") -> DecompositionNode:
    """Refit a k-factor model on the matrix restricted to a journal set.

    The child is refitted from raw counts (re-standardized, re-correlated),
    not projected from the parent model. Journals in the set without citing
    data are recorded as dropped.
    """
    if k > len(cset.members):
        raise DomainError(f"k={k} exceeds the {len(cset.members)}-journal set")
    child_matrix, dropped = subset(parent.matrix, cset.members)
    if child_matrix.n_cases < k + 1:
        raise DomainError(
            f"subset has {child_matrix.n_cases} cases; need at least k+1={k + 1}"
        )
    if child_matrix.n_vars < 2:
        raise DomainError(f"subset has {child_matrix.n_vars} variables; need at least 2")
    if k > child_matrix.n_vars:
        raise DomainError(f"k={k} exceeds {child_matrix.n_vars} usable variables")
    model, scores = fit_model(child_matrix, k, rotate=rotate, method=method)
    child = DecompositionNode(
        level=parent.level + 1,
        matrix=child_matrix,
        parent_factor=cset.provenance.get("factor"),
        model=model,
        scores=scores,
        designations=designate(model, scores),
        dropped_variables=dropped,
    )
    parent.children.append(child)
    return child


def local_environment(m: CitationMatrix, seed: int, pct=0.005, rule="or"):
    """Restrict the matrix to the journals trading citations with a seed.

    A journal enters the environment when its citations to the seed exceed
    ``pct`` of the seed's total cited traffic, or when the citations it
    receives from the seed exceed ``pct`` of the seed's total citing
    traffic. ``rule="and"`` requires both. The seed is always included.
    """
    seed = int(seed)
    if rule not in ("or", "and"):
        raise DomainError(f"rule must be 'or' or 'and', got {rule!r}")
    row_pos = m.case_positions().get(seed)
    col_pos = m.variable_positions().get(seed)
    if row_pos is None and col_pos is None:
        raise NotFoundError(f"seed journal {seed} not in matrix")
    if row_pos is None or col_pos is None:
        raise DomainError(f"seed journal {seed} must be present as both cited and citing")

    cited_row = np.asarray(m.counts[row_pos].todense()).ravel()       # who cites the seed
    citing_col = np.asarray(m.counts[:, col_pos].todense()).ravel()   # whom the seed cites
    cited_total = cited_row.sum()
    citing_total = citing_col.sum()

    to_seed = {int(j) for j, c in zip(m.variables, cited_row) if c > pct * cited_total}
    from_seed = {int(j) for j, c in zip(m.cases, citing_col) if c > pct * citing_total}
    env = (to_seed & from_seed) if rule == "and" else (to_seed | from_seed)
    env.add(seed)
    if len(env) < 2:
        raise DegenerateEnvironmentError(
            f"environment of journal {seed} at {pct:.4%} contains only the seed"
        )

    case_mask = np.fromiter((int(j) in env for j in m.cases), dtype=bool, count=m.n_cases)
    var_mask = np.fromiter((int(j) in env for j in m.variables), dtype=bool, count=m.n_vars)
    return CitationMatrix(
        cases=m.cases[case_mask],
        variables=m.variables[var_mask],
        counts=m.counts[np.flatnonzero(case_mask)][:, np.flatnonzero(var_mask)].tocsr(),
        journals=m.journals,
    )


@dataclass(frozen=True)
class ComparisonReport:
    """Venn partition of 2-5 classification sets."""

    set_labels: tuple
    regions: tuple      # ((labels present), count, sorted member ids)
    jaccard: tuple      # ((label a, label b), index)
    union_size: int

    def as_dict(self):
        return {
            "sets": list(self.set_labels),
            "union_size": self.union_size,
            "regions": [
                {"labels": list(labels), "count": count, "members": members}
                for labels, count, members in self.regions
            ],
            "jaccard": [
                {"a": a, "b": b, "jaccard": round(v, 6)} for (a, b), v in self.jaccard
            ],
        }


def compare_sets(sets) -> ComparisonReport:
    """Partition the union of the sets into exclusive Venn regions.

    Every non-empty region of the partition is reported with its member
    ids, alongside pairwise Jaccard indices.
    """
    sets = list(sets)
    if not 2 <= len(sets) <= 5:
        raise DomainError(f"comparison needs 2 to 5 sets, got {len(sets)}")
    labels = [s.label for s in sets]
    if len(set(labels)) != len(labels):
        raise DomainError("classification sets must carry distinct labels")

    union = set()
    for s in sets:
        union |= s.members
    region_members = {}
    for j in sorted(union):
        signature = tuple(s.label for s in sets if j in s.members)
        region_members.setdefault(signature, []).append(j)
    regions = tuple(
        (sig, len(ids), ids)
        for sig, ids in sorted(region_members.items(), key=lambda kv: (-len(kv[0]), kv[0]))
    )

    jaccard = []
    for a, b in itertools.combinations(sets, 2):
        inter = len(a.members & b.members)
        uni = len(a.members | b.members)
        jaccard.append(((a.label, b.label), inter / uni if uni else 0.0))
    return ComparisonReport(
        set_labels=tuple(labels),
        regions=regions,
        jaccard=tuple(jaccard),
        union_size=len(union),
    )
