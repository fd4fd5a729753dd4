"""Kaczmarz projection, row-selection rules and the blind solver loop."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import rng as rngmod
from .errors import AllZeroResiduals, ConfigError, DimensionMismatch, EmptyQuantile
from .linalg import count_floor, quantile_mask, quantile_select

STRATEGIES = {
    "uniform": kernels.STRATEGY_UNIFORM,
    "quantile": kernels.STRATEGY_QUANTILE,
    "sampled_quantile": kernels.STRATEGY_SAMPLED,
    "motzkin": kernels.STRATEGY_MOTZKIN,
    "powered": kernels.STRATEGY_POWERED,
}

CONVERGED = "Converged"
BUDGET_EXHAUSTED = "BudgetExhausted"

# iterations per kernel call; fixes memory for the pre-drawn uniforms
CHUNK = 8192


def project_step(x, a, b_i):
    """Orthogonal projection of x onto the hyperplane <a, y> = b_i (``a`` unit norm)."""
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    return x + (b_i - a @ x) * a


def select_uniform(rng, m):
    return min(int(rng.random() * m), m - 1)


def _pick_smallest(r, k, rng):
    _, mask = quantile_mask(r, k)
    return int(np.flatnonzero(mask)[min(int(rng.random() * k), k - 1)])


def select_quantile(r, q, rng):
    """Uniform pick among the floor(q m) smallest residuals."""
    r = np.asarray(r, dtype=np.float64)
    k = count_floor(q, r.size)
    if k < 1:
        raise EmptyQuantile(f"floor(q*m) = 0 for q={q}, m={r.size}")
    return _pick_smallest(r, k, rng)


def row_residual_access(A, x, b):
    """Callable computing |<a_i, x> - b_i| only for the requested rows.

    The callable counts inner products in its ``calls`` attribute.
    """
    A = np.asarray(A, dtype=np.float64)

    def residual_of(rows):
        rows = np.asarray(rows, dtype=np.int64)
        residual_of.calls += rows.size
        return np.abs(A[rows] @ x - b[rows])

    residual_of.calls = 0
    residual_of.m = A.shape[0]
    return residual_of


def select_quantile_sampled(residual_of, m, q, t, rng, sample_rng=None):
    """Quantile pick restricted to t rows drawn without replacement.

    Only the t sampled residuals are evaluated. The without-replacement draw
    uses ``sample_rng`` (default: ``rng``) and the final pick uses ``rng``,
    so with t = m the pick matches ``select_quantile`` on the same ``rng``.
    """
    if not 1 <= t <= m:
        raise ValueError(f"t must lie in [1, m={m}], got {t}")
    k = count_floor(q, t)
    if k < 1:
        raise EmptyQuantile(f"floor(q*t) = 0 for q={q}, t={t}")
    sample_rng = rng if sample_rng is None else sample_rng
    u = sample_rng.random(t)
    perm = np.arange(m)
    for j in range(t):
        s = min(j + int(u[j] * (m - j)), m - 1)
        perm[j], perm[s] = perm[s], perm[j]
    rows = np.sort(perm[:t])
    local = _pick_smallest(residual_of(rows), k, rng)
    return int(rows[local])


def select_motzkin(r):
    """Most violated equation, ties to the smaller index."""
    return int(np.argmax(np.asarray(r)))


def select_powered(r, p, rng):
    """Pick i with probability r_i^p / sum_j r_j^p."""
    r = np.asarray(r, dtype=np.float64)
    if p < 0:
        raise ValueError("p must be nonnegative")
    w = r ** p
    cum = np.cumsum(w)
    if not cum[-1] > 0.0:
        raise AllZeroResiduals("every residual is zero; the iterate already solves the system")
    i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    if i >= r.size or w[i] <= 0.0:
        positive = np.flatnonzero(w > 0.0)
        later = positive[positive >= min(i, r.size - 1)]
        i = int(later[0]) if later.size else int(positive[-1])
    return i


@dataclass(frozen=True)
class SolverConfig:
    strategy: str = "quantile"
    q: float | None = None
    t: int | None = None
    p: float | None = None
    max_iters: int = 1000
    stop_tol: float = 0.0
    seed: int = 0
    x0: tuple | None = None

    def validate(self, m, n):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {sorted(STRATEGIES)}")
        if not (isinstance(self.max_iters, (int, np.integer)) and self.max_iters >= 1):
            raise ConfigError("max_iters must be a positive integer")
        if not self.stop_tol >= 0.0:
            raise ConfigError("stop_tol must be nonnegative")
        if self.strategy in ("quantile", "sampled_quantile"):
            if self.q is None or not 0.0 < self.q < 1.0:
                raise ConfigError(f"strategy {self.strategy} needs q in (0, 1), got {self.q}")
        if self.strategy == "quantile" and count_floor(self.q, m) < 1:
            raise EmptyQuantile(f"floor(q*m) = 0 for q={self.q}, m={m}")
        if self.strategy == "sampled_quantile":
            if self.t is None or not 1 <= self.t <= m:
                raise ConfigError(f"sampled_quantile needs t in [1, m={m}], got {self.t}")
            if count_floor(self.q, self.t) < 1:
                raise EmptyQuantile(f"floor(q*t) = 0 for q={self.q}, t={self.t}")
        if self.strategy == "powered" and (self.p is None or not self.p >= 0.0):
            raise ConfigError(f"powered selection needs p >= 0, got {self.p}")
        if self.x0 is not None and len(self.x0) != n:
            raise DimensionMismatch(f"x0 has length {len(self.x0)}, expected {n}")

    def label(self):
        if self.strategy == "quantile":
            return f"quantile(q={self.q:g})"
        if self.strategy == "sampled_quantile":
            return f"sampled_quantile(q={self.q:g},t={self.t})"
        if self.strategy == "powered":
            return f"powered(p={self.p:g})"
        return self.strategy


@dataclass
class ConvergenceTrace:
    """Per-iteration record of one solver run.

    Entry k of each array describes iteration k + 1: the pick, the quantile
    threshold it was drawn under (NaN for rules without one) and the squared
    error after the step (NaN when the ground truth is unknown).
    """

    initial_err_sq: float
    err_sq: np.ndarray
    quantile_Q: np.ndarray
    picked_index: np.ndarray
    status: str
    picked_corrupted: np.ndarray | None = None
    iterates: np.ndarray | None = field(default=None, repr=False)
    x_final: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_iters(self):
        return self.picked_index.size

    @property
    def final_err_sq(self):
        return float(self.err_sq[-1]) if self.n_iters else self.initial_err_sq

    def annotate(self, corrupt_set):
        """Mark which picks hit a corrupted row. Done after the fact; the
        solver itself never sees the corrupted set."""
        self.picked_corrupted = np.isin(self.picked_index, np.asarray(corrupt_set, dtype=np.int64))
        return self

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "err_sq", "quantile_Q", "picked_index", "picked_corrupted", "status"])
        w.writerow([0, _fmt(self.initial_err_sq), "", "", "", self.status if self.n_iters == 0 else ""])
        flags = self.picked_corrupted
        for k in range(self.n_iters):
            last = k == self.n_iters - 1
            w.writerow([
                k + 1,
                _fmt(self.err_sq[k]),
                _fmt(self.quantile_Q[k]),
                int(self.picked_index[k]),
                "" if flags is None else int(bool(flags[k])),
                self.status if last else "",
            ])


def _fmt(v):
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def run_solver(A, b_observed, config, x_true=None, record_iterates=False, loop=None):
    """Run the configured Kaczmarz variant from ``config.x0`` (default 0).

    Only ``A`` and ``b_observed`` drive the iteration. ``x_true`` is used to
    record errors and, when ``config.stop_tol > 0``, to stop early.
    ``loop`` overrides the kernel implementation (see ``kernels``).
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b_observed, dtype=np.float64)
    m, n = A.shape
    if b.shape != (m,):
        raise DimensionMismatch(f"b has shape {b.shape}, expected ({m},)")
    config.validate(m, n)
    if x_true is not None:
        x_true = np.ascontiguousarray(x_true, dtype=np.float64)
        if x_true.shape != (n,):
            raise DimensionMismatch(f"x_true has shape {x_true.shape}, expected ({n},)")
    elif config.stop_tol > 0.0:
        raise ConfigError("stop_tol > 0 needs the ground truth (oracle mode)")
    loop = kernels.solve_loop if loop is None else loop

    strategy = STRATEGIES[config.strategy]
    t = int(config.t) if config.strategy == "sampled_quantile" else 0
    if config.strategy == "quantile":
        k_sel = count_floor(config.q, m)
    elif config.strategy == "sampled_quantile":
        k_sel = count_floor(config.q, t)
    else:
        k_sel = 0
    p = float(config.p) if config.p is not None else 0.0
    stop_tol_sq = config.stop_tol ** 2 if config.stop_tol > 0.0 else -1.0

    x = np.zeros(n) if config.x0 is None else np.array(config.x0, dtype=np.float64)
    truth = x_true if x_true is not None else np.empty(0)
    initial_err = float(np.sum((x - x_true) ** 2)) if x_true is not None else math.nan

    total = config.max_iters
    err = np.full(total, np.nan)
    Qs = np.full(total, np.nan)
    idx = np.zeros(total, dtype=np.int64)
    xs = np.zeros((total if record_iterates else 0, n))
    perm = np.arange(m, dtype=np.int64)
    pick_rng = rngmod.stream(config.seed, rngmod.SOLVER_PICK)
    sample_rng = rngmod.stream(config.seed, rngmod.SOLVER_SAMPLE)

    done = 0
    status = BUDGET_EXHAUSTED
    if stop_tol_sq >= 0.0 and initial_err <= stop_tol_sq:
        status = CONVERGED
        total = 0
    while done < total:
        size = min(CHUNK, total - done)
        u_pick = pick_rng.random(size)
        u_sample = sample_rng.random((size, t)) if t else np.empty((size, 0))
        sl = slice(done, done + size)
        got, code = loop(A, b, x, truth, strategy, k_sel, t, p, u_pick, u_sample, stop_tol_sq,
                         err[sl], Qs[sl], idx[sl], xs[sl] if record_iterates else xs, perm)
        done += got
        if code == kernels.CODE_CONVERGED:
            status = CONVERGED
            break
        if code == kernels.CODE_ALL_ZERO:
            # every observed equation holds exactly; every rule is a no-op from here
            status = CONVERGED
            break

    return ConvergenceTrace(
        initial_err_sq=initial_err,
        err_sq=err[:done].copy(),
        quantile_Q=Qs[:done].copy(),
        picked_index=idx[:done].copy(),
        status=status,
        iterates=xs[:done].copy() if record_iterates else None,
        x_final=x,
    )


@dataclass(frozen=True)
class StepExpectation:
    """Exact one-step expectation of ||x_{k+1} - x_true||^2 under a uniform
    pick from the quantile set B, split into corrupted (S) and clean rows."""

    expected_err_sq: float
    per_index: np.ndarray
    B: np.ndarray
    S: np.ndarray

    @property
    def clean(self):
        return np.setdiff1d(self.B, self.S)

    def mean_over(self, rows):
        if rows.size == 0:
            return math.nan
        pos = np.searchsorted(self.B, rows)
        return float(np.mean(self.per_index[pos]))


def exact_step_expectation(A, b_observed, x_k, x_true, q, corrupt_set=None):
    """Enumerate every admissible pick and average the resulting errors.

    Verification oracle: it needs the ground truth. If ``corrupt_set`` is
    omitted, corrupted rows are those with b_i != <a_i, x_true>.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b_observed, dtype=np.float64)
    x_k = np.asarray(x_k, dtype=np.float64)
    x_true = np.asarray(x_true, dtype=np.float64)
    m, n = A.shape
    if b.shape != (m,) or x_k.shape != (n,) or x_true.shape != (n,):
        raise DimensionMismatch("dimensions of A, b, x_k and x_true disagree")
    B = quantile_select(np.abs(A @ x_k - b), q).indices
    if corrupt_set is None:
        gap = np.abs(A @ x_true - b)
        corrupt_set = np.flatnonzero(gap > 1e-9 * max(1.0, float(np.max(np.abs(b)))))
    S = np.intersect1d(B, np.asarray(corrupt_set, dtype=np.int64))
    AB = A[B]
    steps = x_k + (b[B] - AB @ x_k)[:, None] * AB
    per_index = np.sum((steps - x_true) ** 2, axis=1)
    return StepExpectation(float(np.mean(per_index)), per_index, B, S)
