"""Matrix containers, column normalization and delimited-text I/O.

Rows are subjects and columns are features throughout the package.
Feature indices are 0-based.
"""

from __future__ import annotations

import csv
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Invalid matrix content or shape."""


class EmptyMatrixError(DataError):
    """Raised when normalization would leave no columns."""


class ParseError(DataError):
    """A delimited file could not be parsed.

    ``row`` and ``col`` are 1-based positions in the file (``col`` is None
    for whole-row problems such as ragged rows).
    """

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        loc = ""
        if row is not None:
            loc = f" at row {row}" + (f", column {col}" if col is not None else "")
        super().__init__(message + loc)
        self.row = row
        self.col = col


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DataMatrix:
    """Raw n x p matrix with subject and feature identifiers."""

    values: np.ndarray
    subject_ids: tuple[str, ...] = ()
    feature_ids: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DataError(f"expected a 2-d matrix, got shape {v.shape}")
        n, p = v.shape
        if n < 2 or p < 1:
            raise DataError(f"need n >= 2 subjects and p >= 1 features, got {n}x{p}")
        if not np.all(np.isfinite(v)):
            i, j = np.argwhere(~np.isfinite(v))[0]
            raise DataError(f"non-finite entry at subject {i}, feature {j}")
        sids = tuple(self.subject_ids) or tuple(f"s{i}" for i in range(n))
        fids = tuple(self.feature_ids) or tuple(f"f{j}" for j in range(p))
        if len(sids) != n or len(fids) != p:
            raise DataError("identifier lengths do not match matrix shape")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "subject_ids", sids)
        object.__setattr__(self, "feature_ids", fids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def columns(self, idx: Sequence[int]) -> "DataMatrix":
        idx = np.asarray(idx, dtype=int)
        return DataMatrix(self.values[:, idx], self.subject_ids,
                          tuple(self.feature_ids[j] for j in idx))


@dataclass(frozen=True)
class NormalizedMatrix:
    """Column-standardized matrix W with the moments used to build it.

    ``retained_features`` maps columns of ``values`` back to columns of the
    source matrix; ``dropped_features`` lists the zero-variance columns.
    """

    values: np.ndarray
    col_means: np.ndarray
    col_sds: np.ndarray
    dropped_features: tuple[int, ...]
    retained_features: np.ndarray
    sd_mode: str = "sample"
    subject_ids: tuple[str, ...] = ()
    feature_ids: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabelVector:
    labels: np.ndarray
    K: int = field(default=0)

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 1 or not np.issubdtype(lab.dtype, np.integer):
            raise DataError("labels must be a 1-d integer vector")
        K = self.K or int(lab.max())
        if K < 1 or lab.min() < 1 or lab.max() > K:
            raise DataError(f"labels must lie in 1..{K}")
        lab = lab.astype(int).copy()
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "K", K)

    @classmethod
    def from_codes(cls, codes: Sequence) -> "LabelVector":
        """Map arbitrary class codes to 1..K in sorted order of the codes."""
        uniq, inv = np.unique(np.asarray(codes), return_inverse=True)
        return cls(inv.astype(int) + 1, len(uniq))


def _as_values(X) -> np.ndarray:
    if isinstance(X, (DataMatrix, NormalizedMatrix)):
        return X.values
    return np.asarray(X, dtype=float)


def normalize_columns(X: DataMatrix | np.ndarray, sd_mode: str = "sample") -> NormalizedMatrix:
    """Standardize every column to mean 0 and standard deviation 1.

    ``sd_mode`` picks the denominator of the standard deviation: ``"sample"``
    (n - 1) or ``"population"`` (n). Constant columns cannot be standardized;
    they are dropped and logged rather than raising.
    """
    if sd_mode not in ("sample", "population"):
        raise ValueError(f"unknown sd_mode {sd_mode!r}")
    if not isinstance(X, DataMatrix):
        X = DataMatrix(X)
    v = X.values
    constant = np.ptp(v, axis=0) == 0
    dropped = tuple(int(j) for j in np.flatnonzero(constant))
    keep = np.flatnonzero(~constant)
    if keep.size == 0:
        raise EmptyMatrixError("every column has zero variance")
    if dropped:
        logger.warning("dropped %d zero-variance feature(s): %s", len(dropped),
                       list(dropped[:10]) + (["..."] if len(dropped) > 10 else []))
    sub = v[:, keep]
    means = sub.mean(axis=0)
    centered = sub - means
    sds = centered.std(axis=0, ddof=1 if sd_mode == "sample" else 0)
    W = centered / sds
    # second centering pass removes the O(eps * |mean| / sd) residue
    W -= W.mean(axis=0)
    keep_arr = keep.copy()
    keep_arr.setflags(write=False)
    return NormalizedMatrix(
        values=_frozen(W),
        col_means=_frozen(means),
        col_sds=_frozen(sds),
        dropped_features=dropped,
        retained_features=keep_arr,
        sd_mode=sd_mode,
        subject_ids=X.subject_ids,
        feature_ids=tuple(X.feature_ids[j] for j in keep),
    )


def _sniff_delimiter(first_line: str) -> str:
    return "\t" if "\t" in first_line else ","


def load_matrix(path: str | os.PathLike, transpose: bool = False,
                has_header: bool = False) -> DataMatrix:
    """Read a comma- or tab-delimited numeric matrix.

    The delimiter is taken from the first line. With ``has_header`` the first
    line labels the file's columns; those become feature ids, or subject ids
    when ``transpose`` is set (feature-major files).
    """
    path = Path(path)
    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or all(not ln.strip() for ln in lines):
        raise ParseError(f"empty file {path}")
    delim = _sniff_delimiter(lines[0])
    rows = list(csv.reader(lines, delimiter=delim))

    header = None
    start = 0
    if has_header:
        header = [h.strip() for h in rows[0]]
        start = 1
    body = [(i + 1, r) for i, r in enumerate(rows) if i >= start and any(c.strip() for c in r)]
    if not body:
        raise ParseError(f"no data rows in {path}")
    width = len(header) if header is not None else len(body[0][1])
    out = np.empty((len(body), width))
    for k, (lineno, r) in enumerate(body):
        if len(r) != width:
            raise ParseError(f"ragged row: {len(r)} fields, expected {width}", row=lineno)
        for j, cell in enumerate(r):
            try:
                out[k, j] = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r}", row=lineno, col=j + 1) from None
    if transpose:
        out = out.T
        return DataMatrix(out, subject_ids=tuple(header) if header else ())
    return DataMatrix(out, feature_ids=tuple(header) if header else ())


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix(X: DataMatrix | np.ndarray, path: str | os.PathLike,
                 header: bool = False, delimiter: str = ",") -> None:
    """Write a matrix with full float precision (round-trips through load_matrix)."""
    v = _as_values(X)
    lines = []
    if header:
        fids = X.feature_ids if isinstance(X, (DataMatrix, NormalizedMatrix)) else \
            tuple(f"f{j}" for j in range(v.shape[1]))
        lines.append(delimiter.join(fids))
    for row in v:
        lines.append(delimiter.join(repr(float(x)) for x in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_labels(path: str | os.PathLike) -> np.ndarray:
    """One integer label per line; blank lines are ignored."""
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            try:
                labels.append(int(s))
            except ValueError:
                raise ParseError(f"non-integer label {s!r}", row=lineno, col=1) from None
    if not labels:
        raise ParseError(f"empty labels file {path}")
    return np.asarray(labels, dtype=int)
