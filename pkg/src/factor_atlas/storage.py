"""On-disk artifact formats.

Everything is deterministic plain text: identical objects serialize to
identical bytes, which is what makes pipeline manifests hashable and
re-runs comparable. Interchange floats are written with ``repr`` so they
parse back bit-exact; report columns use fixed decimals.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ParseError
from .matrix import CitationMatrix, JournalRecord, build_matrix
from .engine import (
    EigenSpectrum,
    FactorModel,
    LoadingsMatrix,
    ScoreMatrix,
    VarimaxRotation,
)

MATRIX_HEADER = "# factor-atlas matrix v1"


def _fmt(x):
    return repr(float(x))


def _clean_label(label):
    return str(label).replace("\t", " ").replace("\n", " ")


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# -- citation matrices -------------------------------------------------------

def write_matrix(m: CitationMatrix, path):
    """Sectioned TSV: journal table, case ids, variable ids, nonzero cells."""
    lines = [MATRIX_HEADER]
    journal_ids = sorted(m.journals)
    lines.append(f"*journals\t{len(journal_ids)}")
    for jid in journal_ids:
        rec = m.journals[jid]
        lines.append(
            f"{jid}\t{_clean_label(rec.label)}\t{int(rec.is_cited)}\t{int(rec.is_citing)}"
        )
    lines.append(f"*cases\t{m.n_cases}")
    lines.extend(str(int(j)) for j in m.cases)
    lines.append(f"*variables\t{m.n_vars}")
    lines.extend(str(int(j)) for j in m.variables)
    coo = m.counts.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines.append(f"*cells\t{coo.nnz}")
    for i in order:
        lines.append(
            f"{int(m.cases[coo.row[i]])}\t{int(m.variables[coo.col[i]])}\t{int(round(coo.data[i]))}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_matrix(path) -> CitationMatrix:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MATRIX_HEADER:
        raise ParseError(f"{path} is not a factor-atlas matrix file", 1)

    def expect_section(idx, name):
        if idx >= len(lines):
            raise ParseError(f"missing *{name} section", idx + 1)
        parts = lines[idx].split("\t")
        if parts[0] != f"*{name}" or len(parts) != 2:
            raise ParseError(f"expected *{name} section header, got {lines[idx]!r}", idx + 1)
        try:
            return int(parts[1])
        except ValueError:
            raise ParseError(f"bad count in {lines[idx]!r}", idx + 1) from None

    idx = 1
    n_journals = expect_section(idx, "journals")
    idx += 1
    journals = {}
    for _ in range(n_journals):
        parts = lines[idx].split("\t")
        if len(parts) != 4:
            raise ParseError(f"bad journal row {lines[idx]!r}", idx + 1)
        jid = int(parts[0])
        journals[jid] = JournalRecord(
            id=jid, label=parts[1], is_cited=parts[2] == "1", is_citing=parts[3] == "1"
        )
        idx += 1

    n_cases = expect_section(idx, "cases")
    idx += 1
    cases = [int(lines[idx + i]) for i in range(n_cases)]
    idx += n_cases
    n_vars = expect_section(idx, "variables")
    idx += 1
    variables = [int(lines[idx + i]) for i in range(n_vars)]
    idx += n_vars

    n_cells = expect_section(idx, "cells")
    idx += 1
    cells = []
    for _ in range(n_cells):
        parts = lines[idx].split("\t")
        if len(parts) != 3:
            raise ParseError(f"bad cell row {lines[idx]!r}", idx + 1)
        cells.append((int(parts[0]), int(parts[1]), int(parts[2])))
        idx += 1
    return build_matrix(cases, variables, cells, journals)


# -- spectra, loadings, scores ------------------------------------------------

def write_eigenvalues(spectrum: EigenSpectrum, path, n=None):
    """Report TSV: rank, eigenvalue, percent of variance, cumulative percent."""
    n = len(spectrum) if n is None else min(n, len(spectrum))
    cum = np.cumsum(spectrum.explained) * 100.0
    lines = ["rank\teigenvalue\tpct\tcum_pct"]
    for r in range(n):
        lines.append(
            f"{r + 1}\t{spectrum.eigenvalues[r]:.6f}\t{spectrum.explained[r] * 100.0:.4f}\t{cum[r]:.4f}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_loadings(loadings: LoadingsMatrix, labels, path):
    """Complete machine-readable loadings: one row per variable."""
    k = loadings.k
    header = "id\tlabel\t" + "\t".join(f"factor_{j + 1}" for j in range(k))
    lines = [header]
    for i, jid in enumerate(loadings.variable_ids):
        vals = "\t".join(_fmt(v) for v in loadings.entries[i])
        lines.append(f"{int(jid)}\t{_clean_label(labels.get(int(jid), jid))}\t{vals}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def format_loadings_display(loadings: LoadingsMatrix, labels, suppress_below=0.0):
    """Human-readable table with small entries blanked, publication style.

    Affects only this rendering; files written by :func:`write_loadings`
    always carry every entry.
    """
    k = loadings.k
    rows = []
    for i, jid in enumerate(loadings.variable_ids):
        cells = []
        for v in loadings.entries[i]:
            cells.append(f"{v:.3f}" if abs(v) >= suppress_below else "")
        rows.append((str(labels.get(int(jid), jid)), cells))
    width = max((len(r[0]) for r in rows), default=8)
    header = " ".join(f"{('F' + str(j + 1)):>8}" for j in range(k))
    out = [f"{'':<{width}} {header}"]
    for name, cells in rows:
        out.append(f"{name:<{width}} " + " ".join(f"{c:>8}" for c in cells))
    return "\n".join(out)


def write_scores(scores: ScoreMatrix, path):
    meta = {
        "format": "factor-atlas-scores",
        "version": 1,
        "k": scores.k,
        "rotated": scores.rotated,
        "ridge_applied": scores.ridge_applied,
    }
    header = "id\tlabel\t" + "\t".join(f"factor_{j + 1}" for j in range(scores.k))
    lines = ["# " + json.dumps(meta, sort_keys=True), header]
    for i, jid in enumerate(scores.case_ids):
        vals = "\t".join(_fmt(v) for v in scores.entries[i])
        lines.append(f"{int(jid)}\t{_clean_label(scores.case_labels[i])}\t{vals}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_scores(path) -> ScoreMatrix:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2 or not lines[0].startswith("# "):
        raise ParseError(f"{path} is not a factor-atlas scores file", 1)
    try:
        meta = json.loads(lines[0][2:])
    except json.JSONDecodeError:
        raise ParseError("bad JSON metadata header", 1) from None
    if meta.get("format") != "factor-atlas-scores":
        raise ParseError(f"{path} is not a factor-atlas scores file", 1)
    k = int(meta["k"])
    ids, labels, rows = [], [], []
    for line_no, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 + k:
            raise ParseError(f"expected {2 + k} fields, got {len(parts)}", line_no)
        ids.append(int(parts[0]))
        labels.append(parts[1])
        rows.append([float(v) for v in parts[2:]])
    return ScoreMatrix(
        entries=np.asarray(rows, dtype=np.float64),
        case_ids=np.asarray(ids, dtype=np.int64),
        case_labels=tuple(labels),
        rotated=bool(meta.get("rotated", False)),
        ridge_applied=bool(meta.get("ridge_applied", False)),
    )


# -- factor models -------------------------------------------------------------

def write_model(model: FactorModel, labels, path, scores_file=None):
    """Complete model as JSON: spectrum, loadings, rotation, coefficients."""
    rotation = None
    if model.rotation is not None:
        rotation = {
            "sweeps": model.rotation.sweeps,
            "converged": model.rotation.converged,
            "criterion": model.rotation.criterion,
            "kaiser_normalized": model.rotation.kaiser_normalized,
            "criterion_path": model.rotation.criterion_path.tolist(),
            "transform": model.rotation.transform.tolist(),
        }
    payload = {
        "format": "factor-atlas-model",
        "version": 1,
        "k": model.k,
        "rotated": model.rotated,
        "variable_ids": [int(j) for j in model.loadings.variable_ids],
        "variable_labels": [
            _clean_label(labels.get(int(j), j)) for j in model.loadings.variable_ids
        ],
        "eigenvalues": model.spectrum.eigenvalues.tolist(),
        "spectrum_n_vars": model.spectrum.n_vars,
        "loadings": model.loadings.entries.tolist(),
        "rotation": rotation,
        "score_coefficients": (
            None if model.score_coefficients is None else model.score_coefficients.tolist()
        ),
        "scores_file": scores_file,
    }
    write_json(payload, path)


def read_model(path):
    """Returns (FactorModel, metadata dict with variable labels, scores file)."""
    payload = read_json(path)
    if payload.get("format") != "factor-atlas-model":
        raise ParseError(f"{path} is not a factor-atlas model file", 1)
    rotated = bool(payload["rotated"])
    loadings = LoadingsMatrix(
        entries=np.asarray(payload["loadings"], dtype=np.float64),
        variable_ids=np.asarray(payload["variable_ids"], dtype=np.int64),
        rotated=rotated,
    )
    spectrum = EigenSpectrum(
        eigenvalues=np.asarray(payload["eigenvalues"], dtype=np.float64),
        n_vars=int(payload["spectrum_n_vars"]),
    )
    rotation = None
    if payload["rotation"] is not None:
        r = payload["rotation"]
        rotation = VarimaxRotation(
            transform=np.asarray(r["transform"], dtype=np.float64),
            sweeps=int(r["sweeps"]),
            criterion=float(r["criterion"]),
            criterion_path=np.asarray(r["criterion_path"], dtype=np.float64),
            converged=bool(r["converged"]),
            kaiser_normalized=bool(r["kaiser_normalized"]),
        )
    coeff = payload.get("score_coefficients")
    model = FactorModel(
        loadings=loadings,
        spectrum=spectrum,
        rotation=rotation,
        score_coefficients=None if coeff is None else np.asarray(coeff, dtype=np.float64),
    )
    meta = {
        "variable_labels": dict(
            zip(payload["variable_ids"], payload["variable_labels"])
        ),
        "scores_file": payload.get("scores_file"),
    }
    return model, meta


# -- classification sets, designations, reports --------------------------------

def write_set(cset, path):
    meta = {
        "format": "factor-atlas-set",
        "version": 1,
        "label": cset.label,
        "provenance": cset.provenance,
    }
    lines = ["# " + json.dumps(meta, sort_keys=True)]
    lines.extend(str(j) for j in sorted(cset.members))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_set(path):
    from .decompose import ClassificationSet

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError(f"{path} is empty", 1)
    label = Path(path).stem
    provenance = {"kind": "external-list", "path": str(path)}
    start = 0
    if lines[0].startswith("# "):
        try:
            meta = json.loads(lines[0][2:])
            label = meta.get("label", label)
            provenance = meta.get("provenance", provenance)
        except json.JSONDecodeError:
            raise ParseError("bad JSON metadata header", 1) from None
        start = 1
    members = set()
    for line_no, line in enumerate(lines[start:], start=start + 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            members.add(int(line.strip()))
        except ValueError:
            raise ParseError(f"non-integer id {line!r}", line_no) from None
    return ClassificationSet(label=label, members=frozenset(members), provenance=provenance)


def write_designations(designations, labels, path):
    """TSV mirroring the published designation tables."""
    header = (
        "factor\tlabel\ttop_loading_id\ttop_loading_label\ttop_loading\t"
        "top_score_id\ttop_score_label\ttop_score\tn_positive\tn_zero\tties"
    )
    lines = [header]
    for d in designations:
        ties = ",".join(
            t for t, on in (("loading", d.loading_tie), ("score", d.score_tie)) if on
        )
        lines.append(
            "\t".join(
                [
                    str(d.factor_index),
                    d.label or "",
                    str(d.top_loading_id),
                    _clean_label(labels.get(d.top_loading_id, d.top_loading_id)),
                    f"{d.top_loading_value:.6f}",
                    str(d.top_score_id),
                    _clean_label(labels.get(d.top_score_id, d.top_score_id)),
                    f"{d.top_score_value:.6f}",
                    str(d.n_positive_scores),
                    str(d.n_zero_scores),
                    ties,
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_factor_labels(path):
    """Sidecar TSV `factor_index <TAB> label` with human-assigned names."""
    labels = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError("expected `factor<TAB>label`", line_no)
        try:
            labels[int(parts[0])] = parts[1].strip()
        except ValueError:
            raise ParseError(f"non-integer factor index {parts[0]!r}", line_no) from None
    return labels


def write_dropped(ids, path):
    lines = ["# dropped variable ids"]
    lines.extend(str(int(j)) for j in ids)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_scatter(series, path, sidecar_path=None):
    """TSV point list plus JSON sidecar with axes, thresholds, exclusions."""
    lines = ["id\tlabel\tx\ty"]
    for i in range(len(series.ids)):
        lines.append(
            f"{int(series.ids[i])}\t{_clean_label(series.labels[i])}\t"
            f"{_fmt(series.x[i])}\t{_fmt(series.y[i])}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if sidecar_path is not None:
        write_json(series.metadata(), sidecar_path)


def write_truth(truth, path):
    meta = {"n_blocks": truth.n_blocks}
    if truth.nested_shape is not None:
        meta["nested_shape"] = list(truth.nested_shape)
    lines = ["# " + json.dumps(meta, sort_keys=True), "journal_id\tblock_index"]
    for jid, block in zip(truth.journal_ids, truth.blocks):
        lines.append(f"{int(jid)}\t{int(block)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_truth(path):
    from .synth import BlockAssignment

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    nested_shape = None
    ids, blocks = [], []
    for line_no, line in enumerate(lines, start=1):
        if line.startswith("# "):
            try:
                meta = json.loads(line[2:])
                if "nested_shape" in meta:
                    nested_shape = tuple(meta["nested_shape"])
            except json.JSONDecodeError:
                pass
            continue
        if not line.strip() or line.startswith("#") or line.startswith("journal_id"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError("expected `journal_id<TAB>block_index`", line_no)
        try:
            ids.append(int(parts[0]))
            blocks.append(int(parts[1]))
        except ValueError:
            raise ParseError(f"non-integer field in {line!r}", line_no) from None
    if not ids:
        raise ParseError(f"{path} holds no assignments", 1)
    order = np.argsort(ids, kind="stable")
    ids = np.asarray(ids, dtype=np.int64)[order]
    blocks = np.asarray(blocks, dtype=np.int64)[order]
    return BlockAssignment(
        journal_ids=ids,
        blocks=blocks,
        n_blocks=int(blocks.max()) + 1,
        nested_shape=nested_shape,
    )
