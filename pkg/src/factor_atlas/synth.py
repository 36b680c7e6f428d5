"""Planted block-model corpora and recovery scoring.

Stands in for the proprietary citation data: citation counts are drawn
from Poisson intensities that are dense within a planted block (a
"discipline") and sparse across blocks, optionally with nested sub-blocks
("specialties") inside each block. Recovery runs the factor pipeline and
scores how well factor assignments reproduce the planted partition.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DataError, DomainError
from .matrix import CitationMatrix, JournalRecord, column_variances
from .engine import eigendecompose, factor_scores, standardize, varimax_rotate, FactorModel

log = logging.getLogger(__name__)

EXHAUSTIVE_MATCH_LIMIT = 8


@dataclass(frozen=True)
class BlockSpec:
    """Parameters of a planted block model.

    ``lambda_in`` is the Poisson intensity of within-block cells and
    ``lambda_out`` of cross-block cells. A ``nested`` sub-spec refines each
    block: its ``lambda_in`` applies within a sub-block and its
    ``lambda_out`` across sub-blocks of the same parent block, overriding
    the parent's ``lambda_in``; the parent's ``lambda_out`` still governs
    cross-block cells.
    """

    n_blocks: int
    journals_per_block: int
    lambda_in: float
    lambda_out: float
    nested: "BlockSpec | None" = None
    seed: int = 0

    def __post_init__(self):
        if self.n_blocks < 1:
            raise DomainError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if self.journals_per_block < 2:
            raise DomainError(f"journals_per_block must be >= 2, got {self.journals_per_block}")
        if not self.lambda_in > self.lambda_out >= 0:
            raise DomainError(
                f"need lambda_in > lambda_out >= 0, got {self.lambda_in}, {self.lambda_out}"
            )
        if self.nested is not None:
            sub = self.nested
            if sub.n_blocks * sub.journals_per_block != self.journals_per_block:
                raise DomainError(
                    "nested spec must tile the parent block: "
                    f"{sub.n_blocks} x {sub.journals_per_block} != {self.journals_per_block}"
                )
            if not sub.lambda_in > sub.lambda_out > self.lambda_out:
                raise DomainError(
                    "nested rates must satisfy sub lambda_in > sub lambda_out > parent lambda_out"
                )

    @property
    def n_journals(self):
        return self.n_blocks * self.journals_per_block


@dataclass(frozen=True)
class BlockAssignment:
    """Planted ground truth: journal ids and their (leaf) block indices."""

    journal_ids: np.ndarray
    blocks: np.ndarray
    n_blocks: int
    nested_shape: tuple | None = None  # (super blocks, sub blocks per super)

    def super_blocks(self):
        """Top-level block of each journal (identity for flat models)."""
        if self.nested_shape is None:
            return self.blocks
        return self.blocks // self.nested_shape[1]

    def block_of(self, journal_id):
        pos = int(np.searchsorted(self.journal_ids, int(journal_id)))
        if pos >= len(self.journal_ids) or self.journal_ids[pos] != int(journal_id):
            raise DomainError(f"journal {journal_id} not in assignment")
        return int(self.blocks[pos])


@dataclass(frozen=True)
class RecoveryReport:
    """How well a factor solution reproduces the planted blocks."""

    accuracy: float
    confusion: np.ndarray        # blocks x factors journal counts
    matching: tuple              # factor index matched to each block, -1 if none
    matching_method: str         # "exhaustive" (optimal) or "greedy" (flagged)
    assigned_factors: np.ndarray


def _intensity_matrix(spec: BlockSpec):
    n = spec.n_journals
    blocks = np.repeat(np.arange(spec.n_blocks), spec.journals_per_block)
    same_super = blocks[:, None] == blocks[None, :]
    if spec.nested is None:
        rates = np.where(same_super, spec.lambda_in, spec.lambda_out)
        leaf = blocks
        shape = None
    else:
        sub = spec.nested
        leaf = blocks * sub.n_blocks + np.tile(
            np.repeat(np.arange(sub.n_blocks), sub.journals_per_block), spec.n_blocks
        )
        same_sub = leaf[:, None] == leaf[None, :]
        rates = np.where(
            same_sub, sub.lambda_in, np.where(same_super, sub.lambda_out, spec.lambda_out)
        )
        shape = (spec.n_blocks, sub.n_blocks)
    return rates, leaf, shape


def generate_block_model(spec: BlockSpec):
    """Draw a citation matrix with planted block structure.

    Cell (cited i, citing j) is Poisson with the block-pair intensity;
    zeros are omitted from the sparse matrix. Journal ids are 1..N and
    every journal appears on both the cited and the citing side.

    Returns
    -------
    (CitationMatrix, BlockAssignment)
    """
    rates, leaf, nested_shape = _intensity_matrix(spec)
    rng = np.random.default_rng(spec.seed)
    dense = rng.poisson(rates).astype(np.float64)
    if not dense.any():
        raise DataError("block spec produced an all-zero matrix; raise the intensities")

    n = spec.n_journals
    ids = np.arange(1, n + 1, dtype=np.int64)
    journals = {
        int(j): JournalRecord(id=int(j), label=str(int(j)), is_cited=True, is_citing=True)
        for j in ids
    }
    m = CitationMatrix(
        cases=ids,
        variables=ids.copy(),
        counts=sparse.csr_matrix(dense),
        journals=journals,
    )
    truth = BlockAssignment(
        journal_ids=ids,
        blocks=leaf.astype(np.int64),
        n_blocks=int(leaf.max()) + 1,
        nested_shape=nested_shape,
    )
    return m, truth


def _match_blocks(confusion, n_blocks, k):
    """Best injective block -> factor matching by matched journal count."""
    if max(n_blocks, k) <= EXHAUSTIVE_MATCH_LIMIT:
        best, best_perm = -1, None
        for perm in itertools.permutations(range(k), min(n_blocks, k)):
            hit = sum(confusion[b, f] for b, f in enumerate(perm))
            if hit > best:
                best, best_perm = hit, perm
        matching = list(best_perm) + [-1] * (n_blocks - len(best_perm))
        return matching, "exhaustive"
    log.warning("matching %d blocks to %d factors greedily; result may be suboptimal",
                n_blocks, k)
    work = confusion.astype(np.float64).copy()
    matching = [-1] * n_blocks
    for _ in range(min(n_blocks, k)):
        b, f = np.unravel_index(np.argmax(work), work.shape)
        matching[b] = int(f)
        work[b, :] = -1
        work[:, f] = -1
    return matching, "greedy"


def evaluate_recovery(m: CitationMatrix, truth: BlockAssignment, k: int) -> RecoveryReport:
    """Run the factor pipeline and score block recovery.

    Each journal is assigned the factor with the largest absolute rotated
    loading (journals absent from the variable side fall back to their
    largest factor score). Factors are matched to blocks by the best
    injective assignment: exhaustively up to 8, greedily above (flagged in
    the report).
    """
    work, dropped = _drop_dead_columns(m)
    if len(dropped):
        log.warning("dropped %d zero-variance columns before recovery", len(dropped))
    z = standardize(work)
    corr = z.gram()
    spectrum, loadings = eigendecompose(corr, k, variable_ids=work.variables)
    if k >= 2:
        loadings, rotation = varimax_rotate(loadings)
        model = FactorModel(loadings=loadings, spectrum=spectrum, rotation=rotation)
    else:
        model = FactorModel(loadings=loadings, spectrum=spectrum, rotation=None)
    scores = factor_scores(model, z, corr)

    var_pos = {int(j): i for i, j in enumerate(work.variables)}
    case_pos = {int(j): i for i, j in enumerate(work.cases)}
    assigned = np.empty(len(truth.journal_ids), dtype=np.int64)
    for idx, j in enumerate(truth.journal_ids):
        vp = var_pos.get(int(j))
        if vp is not None:
            assigned[idx] = int(np.argmax(np.abs(model.loadings.entries[vp])))
        else:
            cp = case_pos.get(int(j))
            if cp is None:
                raise DomainError(f"journal {j} from the truth table is not in the matrix")
            assigned[idx] = int(np.argmax(scores.entries[cp]))

    n_blocks = truth.n_blocks
    confusion = np.zeros((n_blocks, k), dtype=np.int64)
    for b, f in zip(truth.blocks, assigned):
        confusion[b, f] += 1
    matching, method = _match_blocks(confusion, n_blocks, k)
    hits = sum(confusion[b, f] for b, f in enumerate(matching) if f >= 0)
    return RecoveryReport(
        accuracy=hits / len(truth.journal_ids),
        confusion=confusion,
        matching=tuple(matching),
        matching_method=method,
        assigned_factors=assigned,
    )


def _drop_dead_columns(m: CitationMatrix):
    variances = column_variances(m)
    live = variances > 0.0
    dropped = m.variables[~live]
    out = CitationMatrix(
        cases=m.cases,
        variables=m.variables[live],
        counts=m.counts[:, np.flatnonzero(live)].tocsr(),
        journals=m.journals,
    )
    return out, dropped
