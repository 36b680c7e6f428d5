"""Principal component extraction, varimax rotation, and factor scores.

The citing columns of a citation matrix are standardized and their Pearson
correlation structure is decomposed into principal components. Unrotated
loadings are exact and extraction is stepwise: pulling more components
never changes the ones already extracted. Varimax rotation redistributes
the loadings toward simple structure for designation; it assumes a factor
count and is therefore kept explicit and reproducible here (deterministic
cyclic pairwise rotations, Kaiser row normalization, reported sweep count).

Factor scores place the cited journals inside the citing-pattern space:
exact projections in the unrotated case, regression-method scores for the
rotated case.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, svds

from .errors import DegenerateVariableError, DomainError, IllConditionedError
from .matrix import CitationMatrix

log = logging.getLogger(__name__)

# Above this many variables the full dense eigendecomposition is replaced
# by an iterative singular decomposition of the implicit z-scored matrix.
DENSE_EIG_CUTOFF = 1024

EIGENVALUE_FLOOR = -1e-9
RIDGE_CONDITION_LIMIT = 1e12
RIDGE_EPSILON = 1e-8


@dataclass(frozen=True)
class EigenSpectrum:
    """Descending eigenvalues of a correlation matrix.

    May hold the complete spectrum (dense route) or only the leading
    entries (iterative route); ``explained`` shares are always relative to
    the full trace, which equals the number of variables.
    """

    eigenvalues: np.ndarray
    n_vars: int

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def is_complete(self):
        return len(self.eigenvalues) == self.n_vars

    @property
    def explained(self):
        return self.eigenvalues / self.n_vars


@dataclass(frozen=True)
class LoadingsMatrix:
    """Variables x factors correlations between variables and components."""

    entries: np.ndarray
    variable_ids: np.ndarray
    rotated: bool

    @property
    def k(self):
        return self.entries.shape[1]

    @property
    def n_vars(self):
        return self.entries.shape[0]

    def communalities(self):
        """Per-variable sum of squared loadings; rotation-invariant."""
        return (self.entries**2).sum(axis=1)


@dataclass(frozen=True)
class VarimaxRotation:
    """Outcome of a varimax run: orthogonal transform and convergence data."""

    transform: np.ndarray
    sweeps: int
    criterion: float
    criterion_path: np.ndarray
    converged: bool
    kaiser_normalized: bool


@dataclass
class FactorModel:
    """A fitted component model: loadings, spectrum slice, optional rotation.

    ``loadings`` holds the rotated loadings when ``rotation`` is set,
    otherwise the unrotated ones. ``score_coefficients`` is populated when
    factor scores are computed from the model.
    """

    loadings: LoadingsMatrix
    spectrum: EigenSpectrum
    rotation: VarimaxRotation | None = None
    score_coefficients: np.ndarray | None = None

    @property
    def k(self):
        return self.loadings.k

    @property
    def rotated(self):
        return self.rotation is not None


@dataclass(frozen=True)
class ScoreMatrix:
    """Cases x factors scores in standard-deviation units."""

    entries: np.ndarray
    case_ids: np.ndarray
    case_labels: tuple
    rotated: bool
    ridge_applied: bool = False
    derived_from: FactorModel | None = field(default=None, repr=False, compare=False)

    @property
    def k(self):
        return self.entries.shape[1]


class StandardizedMatrix:
    """Implicit z-scored view of a sparse count matrix.

    Each citing column is centered and scaled to unit population standard
    deviation. The dense matrix is never materialized: absent cells all map
    to the per-column constant ``-mean/sd``, so products against the
    z-scored matrix are computed from the sparse counts plus a rank-one
    correction.
    """

    def __init__(self, counts, mean, sigma, case_ids, variable_ids, case_labels):
        self._counts = counts.tocsr()
        self.mean = mean
        self.sigma = sigma
        self.case_ids = case_ids
        self.variable_ids = variable_ids
        self.case_labels = case_labels

    @property
    def shape(self):
        return self._counts.shape

    @property
    def n_cases(self):
        return self._counts.shape[0]

    @property
    def n_vars(self):
        return self._counts.shape[1]

    def matmul(self, b):
        """Z @ b for a dense (n_vars,) or (n_vars x k) operand."""
        b = np.asarray(b, dtype=np.float64)
        one_d = b.ndim == 1
        if one_d:
            b = b[:, None]
        scaled = b / self.sigma[:, None]
        out = self._counts @ scaled - (self.mean @ scaled)[None, :]
        return out[:, 0] if one_d else out

    def rmatmul(self, u):
        """Z.T @ u for a dense (n_cases,) or (n_cases x k) operand."""
        u = np.asarray(u, dtype=np.float64)
        return (self._counts.T @ u - np.multiply.outer(self.mean, u.sum(axis=0))) / (
            self.sigma[:, None] if u.ndim > 1 else self.sigma
        )

    def gram(self):
        """Correlation matrix (1/n) Z.T Z, symmetrized and clipped."""
        n = self.n_cases
        gram = np.asarray((self._counts.T @ self._counts).todense()) / n
        corr = (gram - np.outer(self.mean, self.mean)) / np.outer(self.sigma, self.sigma)
        corr = (corr + corr.T) / 2.0
        np.clip(corr, -1.0, 1.0, out=corr)
        np.fill_diagonal(corr, 1.0)
        return corr

    def toarray(self):
        """Dense z-scored matrix; only for small inputs and tests."""
        dense = np.asarray(self._counts.todense())
        return (dense - self.mean[None, :]) / self.sigma[None, :]


def standardize(m: CitationMatrix) -> StandardizedMatrix:
    """Build the implicit z-scored view of the citing columns.

    Raises
    ------
    DegenerateVariableError
        If any column has zero variance (lists the offending ids).
    """
    n = m.n_cases
    csc = m.counts.tocsc()
    s1 = np.asarray(csc.sum(axis=0)).ravel()
    s2 = np.asarray(csc.multiply(csc).sum(axis=0)).ravel()
    mean = s1 / n
    var = np.maximum(s2 / n - mean**2, 0.0)
    dead = var <= 0.0
    if dead.any():
        raise DegenerateVariableError(m.variables[dead].tolist())
    labels = tuple(m.label(j) for j in m.cases)
    return StandardizedMatrix(
        counts=m.counts,
        mean=mean,
        sigma=np.sqrt(var),
        case_ids=m.cases,
        variable_ids=m.variables,
        case_labels=labels,
    )


def correlation(m: CitationMatrix) -> np.ndarray:
    """Pearson correlation matrix of the citing columns."""
    return standardize(m).gram()


def _stable_descending(values, vectors):
    """Sort eigenpairs by descending value; ties ordered by the position of
    the first nonzero eigenvector component so results do not depend on the
    solver's internal ordering of degenerate subspaces."""
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    p = len(values)
    i = 0
    while i < p:
        j = i
        while j + 1 < p and values[j + 1] == values[i]:
            j += 1
        if j > i:
            block = vectors[:, i : j + 1]
            firsts = []
            for c in range(block.shape[1]):
                nz = np.flatnonzero(np.abs(block[:, c]) > 1e-12)
                firsts.append(int(nz[0]) if nz.size else p)
            sub = np.argsort(firsts, kind="stable")
            vectors[:, i : j + 1] = block[:, sub]
        i = j + 1
    return values, vectors


def _orient_columns(mat, transform=None):
    """Make the largest-magnitude entry of each column positive (in place).

    When ``transform`` is given its columns are flipped alongside so that
    the product relation with the original matrix is preserved.
    """
    for j in range(mat.shape[1]):
        col = mat[:, j]
        if col.size and col[np.argmax(np.abs(col))] < 0:
            mat[:, j] = -col
            if transform is not None:
                transform[:, j] = -transform[:, j]
    return mat


def eigendecompose(corr, k=None, variable_ids=None):
    """Extract principal components of a correlation matrix.

    Parameters
    ----------
    corr : ndarray
        Symmetric correlation matrix with unit diagonal.
    k : int or None
        Number of components to keep in the loadings; ``None`` keeps all.
        The returned spectrum is always complete on this route.
    variable_ids : array-like, optional
        Ids attached to the loadings rows; defaults to 0..p-1.

    Returns
    -------
    (EigenSpectrum, LoadingsMatrix)
        Unrotated loading column j is eigenvector j scaled by the square
        root of eigenvalue j; per column, the entry of largest magnitude is
        made positive so repeated runs are bit-identical.
    """
    corr = np.asarray(corr, dtype=np.float64)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise DomainError(f"correlation matrix must be square, got {corr.shape}")
    p = corr.shape[0]
    if np.abs(corr - corr.T).max(initial=0.0) > 1e-8:
        raise DomainError("correlation matrix is not symmetric")
    if np.abs(np.diag(corr) - 1.0).max(initial=0.0) > 1e-8:
        raise DomainError("correlation matrix diagonal is not 1")
    if k is None:
        k = p
    if not 1 <= k <= p:
        raise DomainError(f"factor count k={k} outside 1..{p}")

    values, vectors = np.linalg.eigh((corr + corr.T) / 2.0)
    values, vectors = _stable_descending(values, vectors)
    if values.min(initial=0.0) < EIGENVALUE_FLOOR:
        raise DomainError(
            f"eigenvalue {values.min():.3e} below numerical floor; input is not a correlation matrix"
        )
    values = np.maximum(values, 0.0)
    vectors = _orient_columns(vectors)

    if variable_ids is None:
        variable_ids = np.arange(p, dtype=np.int64)
    loadings = LoadingsMatrix(
        entries=vectors[:, :k] * np.sqrt(values[:k])[None, :],
        variable_ids=np.asarray(variable_ids, dtype=np.int64),
        rotated=False,
    )
    return EigenSpectrum(eigenvalues=values, n_vars=p), loadings


def eigendecompose_streaming(z: StandardizedMatrix, k: int):
    """Leading components via singular decomposition of the implicit z matrix.

    Mathematically identical to :func:`eigendecompose` on the correlation
    matrix; avoids forming it when the variable count is large. Only the
    leading ``k`` eigenvalues are returned, so the spectrum is partial.
    """
    n, p = z.shape
    if not 1 <= k < min(n, p):
        raise DomainError(f"streaming extraction requires 1 <= k < min(cases, vars); got k={k}")
    root_n = math.sqrt(n)
    op = LinearOperator(
        shape=(n, p),
        matvec=lambda v: z.matmul(v.ravel()) / root_n,
        rmatvec=lambda u: z.rmatmul(u.ravel()) / root_n,
        dtype=np.float64,
    )
    # Deterministic start vector: repeated runs must match bit for bit.
    dim = min(n, p)
    v0 = np.linspace(1.0, 2.0, dim)
    v0 /= np.linalg.norm(v0)
    _, s, vt = svds(op, k=k, v0=v0, which="LM", maxiter=max(2000, 20 * k))
    order = np.argsort(-s, kind="stable")
    values = s[order] ** 2
    vectors = vt[order].T.copy()
    values = np.maximum(values, 0.0)
    vectors = _orient_columns(vectors)
    loadings = LoadingsMatrix(
        entries=vectors * np.sqrt(values)[None, :],
        variable_ids=z.variable_ids,
        rotated=False,
    )
    return EigenSpectrum(eigenvalues=values, n_vars=p), loadings


def kaiser_count(spectrum: EigenSpectrum) -> int:
    """Number of eigenvalues strictly greater than one."""
    return int((spectrum.eigenvalues > 1.0).sum())


def scree(spectrum: EigenSpectrum, n: int):
    """First ``n`` spectrum entries as (rank, eigenvalue, cumulative share)."""
    if n > len(spectrum):
        raise DomainError(f"requested {n} entries from a {len(spectrum)}-entry spectrum")
    cum = np.cumsum(spectrum.explained)
    return [(r + 1, float(spectrum.eigenvalues[r]), float(cum[r])) for r in range(n)]


def _varimax_criterion(w):
    # Raw varimax objective: per-factor variance of squared loadings.
    sq = w**2
    return float((np.mean(sq**2, axis=0) - np.mean(sq, axis=0) ** 2).sum())


def varimax_rotate(loadings: LoadingsMatrix, kaiser_normalize=True, tol=1e-6, max_sweeps=100):
    """Rotate loadings to simple structure with planar varimax sweeps.

    Rows are divided by their root communalities during optimization when
    ``kaiser_normalize`` is set (zero-communality rows are passed through
    untouched) and rescaled on output. Factor pairs are visited in a fixed
    cyclic order; each visit applies the closed-form angle that maximizes
    the pair's contribution to the criterion, so the criterion ascends
    monotonically. Iteration stops when a full sweep improves the criterion
    by less than ``tol``.

    Output columns are reordered by descending explained sum of squares and
    sign-fixed; both operations are folded into the returned orthogonal
    transform, so ``rotated = unrotated @ transform`` holds exactly.

    Returns
    -------
    (LoadingsMatrix, VarimaxRotation)
    """
    k = loadings.k
    if k < 2:
        raise DomainError(f"varimax rotation needs at least 2 factors, got {k}")
    a = np.array(loadings.entries, dtype=np.float64)
    h = np.sqrt((a**2).sum(axis=1))
    active = h > 0.0 if kaiser_normalize else np.ones(len(h), dtype=bool)
    w = a[active].copy()
    if kaiser_normalize:
        w /= h[active, None]
    p_eff = w.shape[0]
    if p_eff == 0:
        raise DomainError("all loading rows have zero communality")

    transform = np.eye(k)
    path = [_varimax_criterion(w)]
    converged = False
    for _ in range(max_sweeps):
        for i in range(k - 1):
            for j in range(i + 1, k):
                x = w[:, i]
                y = w[:, j]
                u = x * x - y * y
                v = 2.0 * x * y
                usum = u.sum()
                vsum = v.sum()
                num = 2.0 * (u @ v) - 2.0 * usum * vsum / p_eff
                den = (u @ u - v @ v) - (usum**2 - vsum**2) / p_eff
                if num == 0.0 and den == 0.0:
                    continue
                theta = 0.25 * math.atan2(num, den)
                if abs(theta) < 1e-12:
                    continue
                c = math.cos(theta)
                s = math.sin(theta)
                rot = np.array([[c, -s], [s, c]])
                w[:, [i, j]] = w[:, [i, j]] @ rot
                transform[:, [i, j]] = transform[:, [i, j]] @ rot
        path.append(_varimax_criterion(w))
        if path[-1] - path[-2] < tol:
            converged = True
            break
    if not converged:
        log.warning("varimax did not converge within %d sweeps (last improvement %.3e)",
                    max_sweeps, path[-1] - path[-2])

    rotated = np.zeros_like(a)
    rotated[active] = w * h[active, None] if kaiser_normalize else w
    rotated[~active] = a[~active]
    _orient_columns(rotated, transform)
    order = np.argsort(-(rotated**2).sum(axis=0), kind="stable")
    rotated = rotated[:, order]
    transform = transform[:, order]

    out = LoadingsMatrix(entries=rotated, variable_ids=loadings.variable_ids, rotated=True)
    rotation = VarimaxRotation(
        transform=transform,
        sweeps=len(path) - 1,
        criterion=path[-1],
        criterion_path=np.asarray(path),
        converged=converged,
        kaiser_normalized=kaiser_normalize,
    )
    return out, rotation


def factor_scores(model: FactorModel, z: StandardizedMatrix, corr=None) -> ScoreMatrix:
    """Score the cases of a standardized matrix on a fitted model.

    Unrotated models score exactly: column j is ``Z a_j / lambda_j``, which
    has unit variance and is uncorrelated across factors. Rotated models use
    the regression method: coefficients solve ``corr @ B = rotated
    loadings``. A near-singular correlation matrix (condition number above
    1e12) is ridged with ``corr + 1e-8 I`` and the result flagged.

    Populates ``model.score_coefficients`` as a side effect.
    """
    if not np.array_equal(model.loadings.variable_ids, z.variable_ids):
        raise DomainError("model and standardized matrix have different variable sets")
    k = model.k
    if model.rotation is None:
        lam = model.spectrum.eigenvalues[:k]
        if lam.min(initial=np.inf) <= 0.0:
            raise IllConditionedError(
                "cannot score a factor with zero eigenvalue; extract fewer factors"
            )
        coeff = model.loadings.entries / lam[None, :]
        ridge = False
    else:
        if corr is None:
            raise DomainError("rotated factor scores require the correlation matrix")
        if model.spectrum.is_complete:
            lam_min = float(model.spectrum.eigenvalues.min())
            lam_max = float(model.spectrum.eigenvalues.max())
            cond = np.inf if lam_min <= 0.0 else lam_max / lam_min
        else:
            cond = np.linalg.cond(corr)
        if cond > RIDGE_CONDITION_LIMIT:
            log.warning(
                "correlation matrix condition %.2e exceeds %.0e; applying ridge %.0e",
                cond, RIDGE_CONDITION_LIMIT, RIDGE_EPSILON,
            )
            lhs = corr + RIDGE_EPSILON * np.eye(corr.shape[0])
            ridge = True
        else:
            lhs = corr
            ridge = False
        coeff = np.linalg.solve(lhs, model.loadings.entries)

    model.score_coefficients = coeff
    return ScoreMatrix(
        entries=z.matmul(coeff),
        case_ids=z.case_ids,
        case_labels=z.case_labels,
        rotated=model.rotation is not None,
        ridge_applied=ridge,
        derived_from=model,
    )


def fit_model(m: CitationMatrix, k: int, rotate=True, compute_scores=True,
              method="auto", kaiser_normalize=True, tol=1e-6, max_sweeps=100):
    """Run the standardize / correlate / extract / rotate / score chain.

    Parameters
    ----------
    m : CitationMatrix
        Matrix with strictly positive column variances (filter first).
    k : int
        Number of components to retain.
    rotate : bool
        Apply varimax after extraction (requires k >= 2).
    method : str
        "dense" forces the correlation eigendecomposition, "streaming" the
        iterative route, "auto" picks by variable count. Both routes agree
        to 1e-8; only the dense route yields a complete spectrum.

    Returns
    -------
    (FactorModel, ScoreMatrix or None)
    """
    if method not in ("auto", "dense", "streaming"):
        raise DomainError(f"unknown extraction method {method!r}")
    z = standardize(m)
    n, p = z.shape
    corr = z.gram()
    use_streaming = method == "streaming" or (
        method == "auto" and p > DENSE_EIG_CUTOFF and k < min(n, p)
    )
    if use_streaming:
        spectrum, unrotated = eigendecompose_streaming(z, k)
    else:
        spectrum, unrotated = eigendecompose(corr, k, variable_ids=m.variables)

    if rotate:
        rotated, rotation = varimax_rotate(
            unrotated, kaiser_normalize=kaiser_normalize, tol=tol, max_sweeps=max_sweeps
        )
        model = FactorModel(loadings=rotated, spectrum=spectrum, rotation=rotation)
    else:
        model = FactorModel(loadings=unrotated, spectrum=spectrum, rotation=None)

    scores = factor_scores(model, z, corr) if compute_scores else None
    return model, scores
