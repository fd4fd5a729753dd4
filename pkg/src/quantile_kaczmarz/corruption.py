"""Synthetic ground-truth systems and sparse right-hand-side corruption."""
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .errors import BadDimensions, BetaOutOfRange, InvariantViolation, ParseError
from .linalg import (
    check_row_normalized,
    count_ceil,
    format_float,
    format_row,
    normalize_rows,
    parse_header_ints,
    parse_matrix_block,
)

MODELS = ("random-gaussian", "constant-offset", "sign-flip", "aligned-cluster")


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class CorruptedSystem:
    """Ground truth ``(A, x_true, b_true)`` plus the observed right-hand side.

    ``corrupt_set`` lists the rows whose observed value was overwritten. The
    solver never gets to see it.
    """

    A: np.ndarray
    x_true: np.ndarray
    b_true: np.ndarray
    b_observed: np.ndarray
    corrupt_set: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    beta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "x_true", _frozen(self.x_true))
        object.__setattr__(self, "b_true", _frozen(self.b_true))
        object.__setattr__(self, "b_observed", _frozen(self.b_observed))
        object.__setattr__(self, "corrupt_set", _frozen(np.sort(self.corrupt_set), np.int64))
        self.validate()

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    def validate(self):
        check_row_normalized(self.A)
        m, n = self.A.shape
        if self.x_true.shape != (n,) or self.b_true.shape != (m,) or self.b_observed.shape != (m,):
            raise InvariantViolation("vector lengths do not match the matrix")
        for name in ("x_true", "b_true", "b_observed"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvariantViolation(f"{name} has non-finite entries")
        gap = np.max(np.abs(self.A @ self.x_true - self.b_true))
        if gap > 1e-10 * max(1.0, float(np.linalg.norm(self.x_true))):
            raise InvariantViolation(f"A x_true differs from b_true by {gap:.3e}")
        C = self.corrupt_set
        if C.size and (C[0] < 0 or C[-1] >= m or np.any(np.diff(C) == 0)):
            raise InvariantViolation("corrupt_set must hold distinct row indices")
        if not 0.0 <= self.beta < 1.0:
            raise InvariantViolation(f"beta={self.beta} outside [0, 1)")
        if C.size > count_ceil(self.beta, m):
            raise InvariantViolation(f"|C|={C.size} exceeds ceil(beta m)={count_ceil(self.beta, m)}")
        clean = np.ones(m, dtype=bool)
        clean[C] = False
        if np.any(self.b_observed[clean] != self.b_true[clean]):
            raise InvariantViolation("b_observed differs from b_true outside corrupt_set")

    @property
    def constructed_beta(self):
        """|C| / m, the corruption fraction actually realised."""
        return self.corrupt_set.size / self.m

    def equals(self, other):
        return (
            self.beta == other.beta
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.x_true, other.x_true)
            and np.array_equal(self.b_true, other.b_true)
            and np.array_equal(self.b_observed, other.b_observed)
            and np.array_equal(self.corrupt_set, other.corrupt_set)
        )


@dataclass(frozen=True)
class CorruptionSpec:
    """``magnitude`` means: random-gaussian scale, constant-offset value,
    aligned-cluster displacement length; sign-flip ignores it. ``None``
    selects the model default."""

    beta: float
    model: str = "random-gaussian"
    magnitude: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown corruption model {self.model!r}; choose from {MODELS}")
        if not (self.beta >= 0.0) or self.beta >= 1.0:
            raise BetaOutOfRange(f"beta must lie in [0, 1), got {self.beta}")
        if self.magnitude is not None and not np.isfinite(self.magnitude):
            raise ValueError("magnitude must be finite")


def generate_gaussian_system(m, n, seed):
    """Rows uniform on the unit sphere, x_true standard Gaussian, no corruption."""
    if not (isinstance(m, (int, np.integer)) and isinstance(n, (int, np.integer))) or not m >= n >= 1:
        raise BadDimensions(f"need integers m >= n >= 1, got m={m}, n={n}")
    raw = rngmod.stream(seed, rngmod.MATRIX).standard_normal((m, n))
    A, _ = normalize_rows(raw)
    x_true = rngmod.stream(seed, rngmod.X_TRUE).standard_normal(n)
    return CorruptedSystem(A=A, x_true=x_true, b_true=A @ x_true, b_observed=A @ x_true)


def support_size(beta, m):
    return min(count_ceil(beta, m), m)


def corrupt(system, spec):
    """Overwrite ``ceil(beta m)`` entries of b according to ``spec.model``.

    Any previous corruption of ``system`` is discarded first.
    """
    if spec.beta >= 1.0 or spec.beta < 0.0:
        raise BetaOutOfRange(f"beta must lie in [0, 1), got {spec.beta}")
    A, b_true = system.A, system.b_true
    m, n = A.shape
    k = support_size(spec.beta, m)
    b = b_true.copy()
    if k == 0:
        return replace(system, b_observed=b, corrupt_set=np.empty(0, dtype=np.int64), beta=spec.beta)

    support_rng = rngmod.stream(spec.seed, rngmod.CORRUPT_SUPPORT)
    value_rng = rngmod.stream(spec.seed, rngmod.CORRUPT_VALUES)
    b_scale = max(float(np.max(np.abs(b_true))), 1.0)

    if spec.model == "aligned-cluster":
        u = support_rng.standard_normal(n)
        u /= np.linalg.norm(u)
        align = np.abs(A @ u)
        C = np.sort(np.argsort(-align, kind="stable")[:k])
        # corrupted rows agree with a fake solution x_true + magnitude * u
        mag = spec.magnitude if spec.magnitude is not None else max(float(np.linalg.norm(system.x_true)), 1.0)
        b[C] = b_true[C] + mag * (A[C] @ u)
    else:
        C = np.sort(support_rng.choice(m, size=k, replace=False))
        if spec.model == "random-gaussian":
            scale = spec.magnitude if spec.magnitude is not None else 10.0 * b_scale
            b[C] = b_true[C] + scale * value_rng.standard_normal(k)
        elif spec.model == "constant-offset":
            value = spec.magnitude if spec.magnitude is not None else 10.0 * b_scale
            b[C] = b_true[C] + value
        else:
            b[C] = -b_true[C]
    return replace(system, b_observed=b, corrupt_set=C.astype(np.int64), beta=spec.beta)


def save_system(system, path):
    m, n = system.A.shape
    with open(path, "w") as fh:
        fh.write(f"{m} {n} {format_float(system.beta)}\n")
        for row in system.A:
            fh.write(format_row(row) + "\n")
        fh.write(format_row(system.x_true) + "\n")
        fh.write(format_row(system.b_true) + "\n")
        fh.write(format_row(system.b_observed) + "\n")
        fh.write(f"{system.corrupt_set.size}\n")
        fh.write(" ".join(str(int(i)) for i in system.corrupt_set) + "\n")


def load_system(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    (m, n), rest = parse_header_ints(lines[0], 1, 2)
    if len(rest) != 1:
        raise ParseError("header must be 'm n beta'", 1)
    try:
        beta = float(rest[0])
    except ValueError:
        raise ParseError(f"bad beta {rest[0]!r}", 1) from None
    A, pos = parse_matrix_block(lines, 1, m, n)
    (x_true,), pos = parse_matrix_block(lines, pos, 1, n)
    (b_true, b_obs), pos = parse_matrix_block(lines, pos, 2, m)
    if pos >= len(lines):
        raise ParseError("missing corrupted-set size", pos + 1)
    try:
        count = int(lines[pos])
    except ValueError:
        raise ParseError(f"bad corrupted-set size {lines[pos]!r}", pos + 1) from None
    pos += 1
    tokens = lines[pos].split() if pos < len(lines) else []
    if len(tokens) != count:
        raise ParseError(f"expected {count} corrupted indices, found {len(tokens)}", pos + 1)
    try:
        C = np.array([int(t) for t in tokens], dtype=np.int64)
    except ValueError:
        raise ParseError("bad corrupted index", pos + 1) from None
    if np.any(np.diff(C) <= 0):
        raise ParseError("corrupted indices must be sorted and distinct", pos + 1)
    try:
        beta_ok = 0.0 <= beta < 1.0
    except TypeError:
        beta_ok = False
    if not beta_ok:
        raise InvariantViolation(f"beta={beta} outside [0, 1)")
    return CorruptedSystem(A=A, x_true=x_true, b_true=b_true, b_observed=b_obs, corrupt_set=C, beta=beta)
