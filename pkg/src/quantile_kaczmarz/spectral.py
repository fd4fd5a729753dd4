"""Subset-restricted singular values, the convergence condition and rate,
and the Gaussian truncated-second-moment heuristic."""
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .errors import BadSubsetSize, MassOutOfRange, ParameterDomain, TooManySubsets
from .linalg import DEFAULT_TOL, count_ceil, count_floor, sigma_max

EXACT_SUBSET_CAP = 2_000_000
_BATCH_ENTRIES = 2_000_000

EXACT = "exact"
SAMPLED = "sampled-upper-bound"
SAMPLED_LOWER = "sampled-lower-bound"
GREEDY = "greedy-direction-upper-bound"


def _subset_sigmas(A, subsets, mode):
    """sigma_min or sigma_max of A restricted to each row subset (batched)."""
    subsets = np.asarray(subsets, dtype=np.int64)
    s = subsets.shape[1]
    n = A.shape[1]
    if mode == "min" and s < n:
        return np.zeros(subsets.shape[0])
    sv = np.linalg.svd(A[subsets], compute_uv=False)
    return sv[:, -1] if mode == "min" else sv[:, 0]


def _better(mode):
    return np.argmin if mode == "min" else np.argmax


def _improves(mode, value, best):
    return best is None or (value < best if mode == "min" else value > best)


def _exact(A, s, mode):
    m, n = A.shape
    if math.comb(m, s) > EXACT_SUBSET_CAP:
        raise TooManySubsets(f"C({m}, {s}) = {math.comb(m, s)} exceeds the exact cap {EXACT_SUBSET_CAP}")
    batch = max(1, _BATCH_ENTRIES // max(1, s * n))
    combos = itertools.combinations(range(m), s)
    best, witness = None, None
    pick = _better(mode)
    # lexicographic enumeration; strict improvement keeps the smallest witness
    while True:
        chunk = list(itertools.islice(combos, batch))
        if not chunk:
            break
        subsets = np.array(chunk, dtype=np.int64)
        vals = _subset_sigmas(A, subsets, mode)
        j = int(pick(vals))
        if _improves(mode, vals[j], best):
            best, witness = float(vals[j]), subsets[j]
    return best, witness


def _sampled(A, s, mode, trials, seed):
    m = A.shape[0]
    gen = rngmod.stream(seed, rngmod.SUBSET_SAMPLE)
    subsets = np.sort(np.array([gen.choice(m, size=s, replace=False) for _ in range(trials)]), axis=1)
    vals = _subset_sigmas(A, subsets, mode)
    j = int(_better(mode)(vals))
    return float(vals[j]), subsets[j]


def _greedy(A, s, directions, seed):
    m, n = A.shape
    gen = rngmod.stream(seed, rngmod.SUBSET_SAMPLE, 1)
    X = gen.standard_normal((directions, n))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    proj = (A @ X.T) ** 2
    subsets = np.sort(np.argsort(proj, axis=0, kind="stable")[:s].T, axis=1)
    vals = _subset_sigmas(A, subsets, "min")
    j = int(np.argmin(vals))
    return float(vals[j]), subsets[j]


def sigma_subset_extremal(A, s, mode="min", method="exact", trials=200, directions=200, seed=0):
    """Extremal singular value over all s-row restrictions of A.

    ``mode="min"``: min over subsets S of sigma_min(A_S).
    ``mode="max"``: max over subsets S of sigma_max(A_S).

    ``method="exact"`` enumerates every subset. ``"sampled"`` looks at
    ``trials`` random subsets; ``"greedy"`` (min only) takes, for each of
    ``directions`` random unit vectors x, the s rows least aligned with x.
    The non-exact methods only bound the true value from one side (above
    for min, below for max).

    Returns ``(value, witness_rows, method_flag)``.
    """
    A = np.asarray(A, dtype=np.float64)
    m = A.shape[0]
    if not isinstance(s, (int, np.integer)) or not 1 <= s <= m:
        raise BadSubsetSize(f"subset size must lie in [1, {m}], got {s}")
    if mode not in ("min", "max"):
        raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")
    if method == "exact":
        value, witness = _exact(A, s, mode)
        flag = EXACT
    elif method == "sampled":
        value, witness = _sampled(A, s, mode, trials, seed)
        flag = SAMPLED if mode == "min" else SAMPLED_LOWER
    elif method == "greedy":
        if mode != "min":
            raise ValueError("greedy search only bounds the subset minimum")
        value, witness = _greedy(A, s, directions, seed)
        flag = GREEDY
    else:
        raise ValueError(f"unknown method {method!r}")
    return value, tuple(int(i) for i in witness), flag


def _corruption_terms(q, beta):
    gap = 1.0 - q - beta
    return 2.0 * math.sqrt(beta) / math.sqrt(gap) + beta / gap


def _check_domain(q, beta):
    if not 0.0 < q < 1.0:
        raise ParameterDomain(f"q must lie in (0, 1), got {q}")
    if not 0.0 <= beta < q:
        raise ParameterDomain(f"need 0 <= beta < q, got beta={beta}, q={q}")
    if q + beta >= 1.0:
        raise ParameterDomain(f"need q + beta < 1, got q={q}, beta={beta}")


def condition_lhs(q, beta):
    """q/(q-beta) * (2 sqrt(beta)/sqrt(1-q-beta) + beta/(1-q-beta))."""
    _check_domain(q, beta)
    return q / (q - beta) * _corruption_terms(q, beta)


def convergence_rate(sigma_max_value, sigma_sub_min, q, beta, m):
    """Guaranteed per-step contraction deficit c, or None when c <= 0."""
    _check_domain(q, beta)
    if sigma_max_value < 0 or sigma_sub_min < 0:
        raise ParameterDomain("singular values must be nonnegative")
    c = (q - beta) * sigma_sub_min ** 2 / (q * q * m) - sigma_max_value ** 2 / (q * m) * _corruption_terms(q, beta)
    return c if c > 0.0 else None


def _normal_mass(alpha):
    return math.erf(alpha / math.sqrt(2.0))


def _phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def heuristic_alpha(mass):
    """Half-width alpha with P(|Z| <= alpha) = mass for standard normal Z."""
    if not 0.0 < mass < 1.0:
        raise MassOutOfRange(f"mass must lie in (0, 1), got {mass}")
    lo, hi = 0.0, 40.0
    alpha = 1.0
    for _ in range(200):
        f = _normal_mass(alpha) - mass
        if f > 0:
            hi = alpha
        else:
            lo = alpha
        if f == 0.0 or hi - lo < 1e-15:
            break
        step = f / (2.0 * _phi(alpha))
        nxt = alpha - step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - alpha) < 1e-15 * max(1.0, alpha):
            alpha = nxt
            break
        alpha = nxt
    return alpha


def _truncated_second_moment(alpha, mass):
    if alpha >= 0.1:
        return mass - 2.0 * alpha * _phi(alpha)
    # the closed form cancels catastrophically for small alpha; integrate
    # the Taylor series of x^2 exp(-x^2/2) term by term instead
    total, term, a2 = 0.0, alpha ** 3, alpha * alpha
    for k in range(12):
        total += term / (2 * k + 3)
        term *= -0.5 * a2 / (k + 1)
    return 2.0 * total / math.sqrt(2.0 * math.pi)


def heuristic_ratio(mass):
    """Second moment of a standard normal restricted to [-alpha, alpha] of
    the given mass: mass - 2 alpha phi(alpha)."""
    return _truncated_second_moment(heuristic_alpha(mass), mass)


@dataclass(frozen=True)
class HeuristicResult:
    mass: float
    alpha: float
    ratio: float


def heuristic(mass):
    alpha = heuristic_alpha(mass)
    return HeuristicResult(mass=mass, alpha=alpha, ratio=_truncated_second_moment(alpha, mass))


def corollary_threshold(q, tol=1e-12):
    """Largest beta with condition_lhs(q, beta) < heuristic_ratio(q - beta).

    The left side increases and the right side decreases in beta, so the
    admissible betas form an interval [0, beta*) found by bisection.
    """
    if not 0.0 < q < 1.0:
        return 0.0

    def margin(beta):
        return heuristic_ratio(q - beta) - condition_lhs(q, beta)

    lo, hi = 0.0, min(q, 1.0 - q)
    if not margin(lo) > 0.0:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if margin(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def subset_size(q, beta, m):
    """Rows guaranteed clean inside the quantile set: floor(qm) - ceil(beta m)."""
    return count_floor(q, m) - count_ceil(beta, m)


@dataclass(frozen=True)
class SpectralSummary:
    sigma_max: float
    sigma_sub_min: float
    sigma_sub_min_method: str
    subset_size: int
    sigma_beta_max: float | None
    condition_lhs: float
    condition_rhs: float
    rate_c: float | None
    witness: tuple = ()

    @property
    def condition_holds(self):
        return self.rate_c is not None

    @property
    def certified(self):
        """True only when the rate rests on an exactly enumerated minimum."""
        return self.rate_c is not None and self.sigma_sub_min_method == EXACT

    def as_items(self):
        return [
            ("sigma_max", self.sigma_max),
            ("sigma_sub_min", self.sigma_sub_min),
            ("sigma_sub_min_method", self.sigma_sub_min_method),
            ("subset_size", self.subset_size),
            ("sigma_beta_max", self.sigma_beta_max),
            ("condition_lhs", self.condition_lhs),
            ("condition_rhs", self.condition_rhs),
            ("condition_holds", self.condition_holds),
            ("rate_c", self.rate_c),
            ("certified", self.certified),
        ]


def spectral_summary(A, q, beta, method="exact", trials=200, directions=200, seed=0, tol=DEFAULT_TOL):
    """Everything the convergence theorem needs to know about A at (q, beta)."""
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    lhs = condition_lhs(q, beta)
    smax = sigma_max(A, tol)
    s = subset_size(q, beta, m)
    witness = ()
    if s < n:
        # fewer rows than columns: every restriction has a kernel
        sub, flag = 0.0, EXACT
    else:
        sub, witness, flag = sigma_subset_extremal(A, s, "min", method, trials, directions, seed)
    if sub > smax + 1e-9:
        raise AssertionError(f"subset minimum {sub} exceeds sigma_max {smax}")

    s_beta = count_ceil(beta, m)
    if s_beta == 0:
        sbm = 0.0
    elif math.comb(m, s_beta) <= EXACT_SUBSET_CAP:
        sbm = sigma_subset_extremal(A, s_beta, "max", "exact")[0]
    else:
        sbm = None
    rhs = sub ** 2 / smax ** 2
    rate = convergence_rate(smax, sub, q, beta, m)
    return SpectralSummary(smax, sub, flag, s, sbm, lhs, rhs, rate, witness)
