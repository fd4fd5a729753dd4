"""Dense linear-algebra primitives shared by every other module.

Matrices are plain ``float64`` ndarrays. A "row-normalized" matrix is one
whose rows all have unit Euclidean norm to within ``ROW_NORM_TOL``.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    EmptyQuantile,
    InvariantViolation,
    NoConvergence,
    ParseError,
    ZeroRow,
)

ROW_NORM_TOL = 1e-12
ZERO_ROW_TOL = 1e-14
DEFAULT_TOL = 1e-10


def count_floor(frac, m):
    """floor(frac * m), immune to products like 0.29 * 100 = 28.999..."""
    return int(math.floor(round(frac * m, 9)))


def count_ceil(frac, m):
    """ceil(frac * m), immune to products like 0.01 * 200 = 2.0000000000000004."""
    return int(math.ceil(round(frac * m, 9)))


def _as_matrix(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionMismatch(f"expected a nonempty 2-d matrix, got shape {A.shape}")
    return A


def normalize_rows(raw):
    """Scale each row to unit norm.

    Returns ``(A, scales)`` with ``A[i] = raw[i] / scales[i]``. The returned
    matrix is read-only.
    """
    raw = _as_matrix(raw)
    if not np.all(np.isfinite(raw)):
        raise InvariantViolation("matrix has non-finite entries")
    scales = np.linalg.norm(raw, axis=1)
    bad = np.flatnonzero(scales <= ZERO_ROW_TOL)
    if bad.size:
        raise ZeroRow(int(bad[0]))
    A = raw / scales[:, None]
    A.flags.writeable = False
    return A, scales


def check_row_normalized(A, tol=ROW_NORM_TOL):
    """Raise InvariantViolation unless every row of ``A`` has unit norm."""
    A = _as_matrix(A)
    if not np.all(np.isfinite(A)):
        raise InvariantViolation("matrix has non-finite entries")
    dev = np.abs(np.linalg.norm(A, axis=1) - 1.0)
    worst = int(np.argmax(dev))
    if dev[worst] > tol:
        raise InvariantViolation(f"row {worst} has norm deviating from 1 by {dev[worst]:.3e}")
    return A


def _iteration_cap(n, tol):
    return 10 * n * max(1, math.ceil(math.log(1.0 / tol)))


def _check_tol(tol):
    if not 0.0 < tol <= 1e-2:
        raise ValueError(f"tol must lie in (0, 1e-2], got {tol}")


def _power_top(G, tol, start):
    """Dominant eigenpair of the PSD matrix G by power iteration.

    Returns ``(None, v)`` when the iteration cap is hit, which happens when
    the top two eigenvalues are nearly tied.
    """
    cap = _iteration_cap(G.shape[0], tol)
    v = start / np.linalg.norm(start)
    for _ in range(cap):
        w = G @ v
        rho = float(v @ w)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0, v
        if np.linalg.norm(w - rho * v) <= tol * rho:
            return rho, v
        v = w / norm_w
    return None, v


def _dense_eigvals(G):
    ev = np.linalg.eigvalsh(G)
    if not np.all(np.isfinite(ev)):
        raise NoConvergence("dense symmetric eigensolve produced non-finite values")
    return ev


def sigma_max(A, tol=DEFAULT_TOL):
    """Largest singular value via power iteration on the Gram matrix AᵀA."""
    _check_tol(tol)
    A = _as_matrix(A)
    G = A.T @ A
    n = G.shape[0]
    diag = np.diag(G)
    rho, _ = _power_top(G, tol, np.ones(n))
    # An all-ones start can be (numerically) orthogonal to the top eigenvector;
    # the top eigenvalue is never below the largest diagonal entry.
    if rho is not None and rho < diag.max() * (1.0 - tol):
        start = np.zeros(n)
        start[int(np.argmax(diag))] = 1.0
        rho, _ = _power_top(G, tol, start)
    if rho is None:
        # stalled on a tiny spectral gap; the Gram matrix is only n x n
        rho = float(_dense_eigvals(G)[-1])
    return math.sqrt(max(rho, 0.0))


def sigma_min(A, tol=DEFAULT_TOL):
    """Smallest singular value via inverse iteration on AᵀA.

    Returns exactly 0 for wide matrices and for numerically singular Gram
    matrices (Cholesky breakdown).
    """
    _check_tol(tol)
    A = _as_matrix(A)
    m, n = A.shape
    if m < n:
        return 0.0
    G = A.T @ A
    try:
        factor = scipy.linalg.cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return 0.0
    if not np.all(np.isfinite(factor[0])) or np.any(np.diag(factor[0]) <= 0.0):
        return 0.0

    def solve(v):
        return scipy.linalg.cho_solve(factor, v, check_finite=False)

    cap = _iteration_cap(n, tol)
    diag = np.diag(G)
    starts = [np.ones(n)]
    e = np.zeros(n)
    e[int(np.argmin(diag))] = 1.0
    starts.append(e)
    for start in starts:
        v = start / np.linalg.norm(start)
        for _ in range(cap):
            w = solve(v)
            mu = float(v @ w)
            if np.linalg.norm(w - mu * v) <= tol * mu:
                break
            v = w / np.linalg.norm(w)
        else:
            # stalled on a tiny spectral gap at the bottom
            lam = float(_dense_eigvals(G)[0])
            break
        lam = 1.0 / mu
        # smallest eigenvalue never exceeds the smallest diagonal entry
        if lam <= diag.min() * (1.0 + tol):
            break
    return math.sqrt(max(lam, 0.0))


def residuals(A, x, b):
    """|<a_i, x> - b_i| for every row."""
    A = _as_matrix(A)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    if x.shape != (n,) or b.shape != (m,):
        raise DimensionMismatch(f"A is {m}x{n} but x has shape {x.shape} and b has shape {b.shape}")
    return np.abs(A @ x - b)


@dataclass(frozen=True)
class QuantileSelection:
    """The ``floor(q m)`` rows with smallest residual.

    ``indices`` is sorted ascending; ``threshold`` is the largest selected
    residual.
    """

    threshold: float
    indices: np.ndarray


def quantile_mask(r, k):
    """Boolean mask of the k smallest entries of r, ties to the smaller index.

    Linear expected time (introselect), no full sort.
    """
    Q = np.partition(r, k - 1)[k - 1]
    mask = r < Q
    need = k - int(np.count_nonzero(mask))
    eq = r == Q
    mask |= eq & (np.cumsum(eq) <= need)
    return Q, mask


def quantile_select(r, q):
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 1:
        raise DimensionMismatch("residual vector must be 1-d")
    k = count_floor(q, r.shape[0])
    if k < 1:
        raise EmptyQuantile(f"floor(q*m) = 0 for q={q}, m={r.shape[0]}")
    Q, mask = quantile_mask(r, k)
    indices = np.flatnonzero(mask)
    indices.flags.writeable = False
    return QuantileSelection(threshold=float(Q), indices=indices)


def _parse_float_row(tokens, n, lineno):
    if len(tokens) != n:
        raise ParseError(f"expected {n} values, found {len(tokens)}", lineno)
    try:
        row = [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None
    if not all(math.isfinite(v) for v in row):
        raise ParseError("non-finite value", lineno)
    return row


def format_float(v):
    return repr(float(v))


def format_row(values):
    return " ".join(format_float(v) for v in values)


def parse_matrix_block(lines, start, m, n):
    """Read m rows of n floats from ``lines[start:]``; returns (matrix, next index)."""
    rows = []
    for i in range(m):
        idx = start + i
        if idx >= len(lines):
            raise ParseError(f"file ends after {i} of {m} matrix rows", idx + 1)
        rows.append(_parse_float_row(lines[idx].split(), n, idx + 1))
    return np.array(rows, dtype=np.float64).reshape(m, n), start + m


def parse_header_ints(line, lineno, count):
    tokens = line.split()
    if len(tokens) < count:
        raise ParseError(f"expected {count} header fields", lineno)
    try:
        values = [int(t) for t in tokens[:count]]
    except ValueError:
        raise ParseError(f"bad header {line!r}", lineno) from None
    if any(v < 1 for v in values):
        raise ParseError("dimensions must be positive", lineno)
    return values, tokens[count:]


def write_matrix(A, path):
    A = _as_matrix(A)
    m, n = A.shape
    with open(path, "w") as fh:
        fh.write(f"{m} {n}\n")
        for row in A:
            fh.write(format_row(row) + "\n")


def read_matrix(path):
    """Read the ``m n`` + rows text format. NaN/Inf are rejected."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    (m, n), extra = parse_header_ints(lines[0], 1, 2)
    if extra:
        raise ParseError("matrix header must be 'm n'", 1)
    A, _ = parse_matrix_block(lines, 1, m, n)
    return A
