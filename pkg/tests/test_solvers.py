import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantile_kaczmarz.corruption import CorruptionSpec, corrupt, generate_gaussian_system
from quantile_kaczmarz.errors import AllZeroResiduals, ConfigError, EmptyQuantile
from quantile_kaczmarz.linalg import normalize_rows
from quantile_kaczmarz.solvers import (
    BUDGET_EXHAUSTED,
    CONVERGED,
    SolverConfig,
    exact_step_expectation,
    project_step,
    row_residual_access,
    run_solver,
    select_motzkin,
    select_powered,
    select_quantile,
    select_quantile_sampled,
    select_uniform,
)


def test_project_examples():
    np.testing.assert_array_equal(project_step([0.0, 0.0], [1.0, 0.0], 3.0), [3.0, 0.0])
    np.testing.assert_array_equal(project_step([1.0, 1.0], [0.0, 1.0], 1.0), [1.0, 1.0])


unit = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.asarray(v) / np.linalg.norm(v))
vec = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=3).map(np.asarray)


@settings(max_examples=200, deadline=None)
@given(vec, unit, st.floats(-1e3, 1e3, allow_nan=False))
def test_project_lands_on_hyperplane_and_is_idempotent(x, a, b):
    y = project_step(x, a, b)
    scale = 1.0 + abs(b) + np.abs(x).sum()
    assert abs(a @ y - b) <= 1e-12 * scale
    np.testing.assert_allclose(project_step(y, a, b), y, atol=1e-12 * scale)


@settings(max_examples=200, deadline=None)
@given(vec, unit, vec)
def test_project_non_expansive_for_consistent_row(x, a, z):
    # distance to any point on the hyperplane does not grow
    b = float(a @ z)
    y = project_step(x, a, b)
    assert np.linalg.norm(y - z) <= np.linalg.norm(x - z) * (1 + 1e-12) + 1e-9


def test_uniform_frequencies():
    rng = np.random.default_rng(1)
    counts = np.bincount([select_uniform(rng, 5) for _ in range(50000)], minlength=5)
    # chi-square with 4 dof; 18.47 is the 0.999 quantile
    chi2 = np.sum((counts - 10000.0) ** 2 / 10000.0)
    assert chi2 < 18.47


def test_quantile_pick_support_and_frequencies():
    rng = np.random.default_rng(2)
    r = np.arange(1.0, 11.0)
    picks = np.array([select_quantile(r, 0.5, rng) for _ in range(20000)])
    assert set(np.unique(picks)) == {0, 1, 2, 3, 4}
    counts = np.bincount(picks, minlength=5)[:5]
    assert np.all(np.abs(counts / 20000 - 0.2) < 0.02)


def test_quantile_pick_tiny_q():
    assert select_quantile([5.0, 1.0, 3.0], 0.34, np.random.default_rng(0)) == 1
    with pytest.raises(EmptyQuantile):
        select_quantile([5.0, 1.0, 3.0], 0.2, np.random.default_rng(0))


def test_motzkin():
    assert select_motzkin([1.0, 5.0, 5.0, 2.0]) == 1
    assert select_motzkin([0.0, 0.0]) == 0


def test_powered_frequencies():
    rng = np.random.default_rng(3)
    picks = np.array([select_powered([1.0, 2.0], 2.0, rng) for _ in range(100000)])
    assert abs(np.mean(picks == 1) - 0.8) <= 0.02


def test_powered_zero_weight_never_picked():
    rng = np.random.default_rng(3)
    picks = {select_powered([0.0, 1.0, 0.0, 3.0], 1.0, rng) for _ in range(2000)}
    assert picks == {1, 3}
    with pytest.raises(AllZeroResiduals):
        select_powered([0.0, 0.0], 1.0, rng)


def _sampled_rule_oracle(m, t, k, trials, rng):
    """Vectorised independent model of the sampled rule with residual = row index."""
    ranks = np.empty(trials, dtype=np.int64)
    step = 50000
    for lo in range(0, trials, step):
        size = min(step, trials - lo)
        rows = np.argpartition(rng.random((size, m)), t - 1, axis=1)[:, :t]
        rows.sort(axis=1)
        j = rng.integers(0, k, size)
        ranks[lo:lo + size] = rows[np.arange(size), j]
    return ranks


def test_sampled_never_picks_top_percentile():
    m, t, q = 1000, 50, 0.5
    r = np.arange(m, dtype=float)
    ranks = _sampled_rule_oracle(m, t, 25, 10**6, np.random.default_rng(4))
    assert np.mean(ranks >= 990) < 1e-6
    rng = np.random.default_rng(5)
    picks = np.array([select_quantile_sampled(lambda rows: r[rows], m, q, t, rng) for _ in range(20000)])
    assert np.all(picks < 990)
    # same pick distribution as the oracle model, compared through the mean rank
    se = ranks.std() / math.sqrt(picks.size)
    assert abs(picks.mean() - ranks.mean()) < 5 * se


def test_sampled_evaluates_only_t_rows():
    A, _ = normalize_rows(np.random.default_rng(0).standard_normal((40, 3)))
    access = row_residual_access(A, np.zeros(3), np.ones(40))
    select_quantile_sampled(access, 40, 0.5, 7, np.random.default_rng(0))
    assert access.calls == 7


def test_sampled_full_sample_equals_quantile():
    r = np.random.default_rng(6).random(30)
    for seed in range(200):
        a = select_quantile(r, 0.6, np.random.default_rng(seed))
        b = select_quantile_sampled(lambda rows: r[rows], 30, 0.6, 30, np.random.default_rng(seed),
                                    sample_rng=np.random.default_rng(10**6 + seed))
        assert a == b


def test_sampled_t1_is_uniform():
    rng = np.random.default_rng(7)
    r = np.arange(5.0)
    # a singleton sample is its own quantile; q = 1 keeps floor(q t) = 1
    picks = [select_quantile_sampled(lambda rows: r[rows], 5, 1.0, 1, rng) for _ in range(50000)]
    chi2 = np.sum((np.bincount(picks, minlength=5) - 10000.0) ** 2 / 10000.0)
    assert chi2 < 18.47


def _system(m=60, n=4, beta=0.1, seed=0, model="random-gaussian"):
    return corrupt(generate_gaussian_system(m, n, seed), CorruptionSpec(beta=beta, model=model, seed=seed + 1))


def test_run_solver_deterministic():
    s = _system()
    cfg = SolverConfig("quantile", q=0.7, max_iters=500, seed=3)
    t1 = run_solver(s.A, s.b_observed, cfg, x_true=s.x_true)
    t2 = run_solver(s.A, s.b_observed, cfg, x_true=s.x_true)
    np.testing.assert_array_equal(t1.picked_index, t2.picked_index)
    np.testing.assert_array_equal(t1.err_sq, t2.err_sq)


def test_run_solver_is_blind_to_ground_truth():
    s = _system()
    cfg = SolverConfig("quantile", q=0.7, max_iters=300, seed=3)
    seen = run_solver(s.A, s.b_observed, cfg, x_true=s.x_true)
    blind = run_solver(s.A, s.b_observed, cfg)
    other_truth = run_solver(s.A, s.b_observed, cfg, x_true=s.x_true + 1.0)
    np.testing.assert_array_equal(seen.picked_index, blind.picked_index)
    np.testing.assert_array_equal(seen.x_final, blind.x_final)
    np.testing.assert_array_equal(seen.x_final, other_truth.x_final)
    assert np.all(np.isnan(blind.err_sq))


def test_run_solver_ignores_corrupt_set_label():
    s = _system(beta=0.05, model="constant-offset")
    relabelled = replace(s, beta=0.2, corrupt_set=np.union1d(s.corrupt_set, [0, 1, 2]))
    cfg = SolverConfig("quantile", q=0.7, max_iters=200, seed=1)
    a = run_solver(s.A, s.b_observed, cfg, x_true=s.x_true)
    b = run_solver(relabelled.A, relabelled.b_observed, cfg, x_true=relabelled.x_true)
    np.testing.assert_array_equal(a.picked_index, b.picked_index)


def test_oracle_stop_needs_truth():
    s = _system()
    with pytest.raises(ConfigError):
        run_solver(s.A, s.b_observed, SolverConfig("uniform", max_iters=10, stop_tol=1e-6))


def test_quantile_converges_under_corruption():
    s = _system(m=200, n=5, beta=0.1, seed=11)
    trace = run_solver(s.A, s.b_observed, SolverConfig("quantile", q=0.7, max_iters=20000, stop_tol=1e-8, seed=0),
                       x_true=s.x_true)
    assert trace.status == CONVERGED
    assert trace.final_err_sq <= 1e-16
    uni = run_solver(s.A, s.b_observed, SolverConfig("uniform", max_iters=5000, seed=0), x_true=s.x_true)
    assert uni.status == BUDGET_EXHAUSTED
    assert uni.final_err_sq > 1e-4


def test_trace_annotation_and_csv(tmp_path):
    s = _system(m=20, n=2, beta=0.1, seed=2)
    trace = run_solver(s.A, s.b_observed, SolverConfig("uniform", max_iters=50, seed=0), x_true=s.x_true)
    trace.annotate(s.corrupt_set)
    np.testing.assert_array_equal(trace.picked_corrupted, np.isin(trace.picked_index, s.corrupt_set))
    path = tmp_path / "t.csv"
    with open(path, "w", newline="") as fh:
        trace.write_csv(fh)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,err_sq,quantile_Q,picked_index,picked_corrupted,status"
    assert len(lines) == 52
    assert lines[-1].endswith(BUDGET_EXHAUSTED)


def test_exact_expectation_identity_full_quantile():
    # A = I, every row admissible: E||x1 - x*||^2 = (1 - 1/n) ||x0 - x*||^2
    n = 4
    x_true = np.array([1.0, -2.0, 0.5, 3.0])
    step = exact_step_expectation(np.eye(n), x_true, np.zeros(n), x_true, 1.0)
    assert step.B.size == n
    assert step.expected_err_sq == pytest.approx((1 - 1 / n) * float(x_true @ x_true), rel=1e-14)
    # q = 0.75 keeps the three smallest residuals |x_i|: drop coordinates 1, 0.5, -2 in turn
    step = exact_step_expectation(np.eye(n), x_true, np.zeros(n), x_true, 0.75)
    np.testing.assert_array_equal(step.B, [0, 1, 2])
    assert step.expected_err_sq == pytest.approx(14.25 - (1 + 4 + 0.25) / 3, rel=1e-14)


def test_exact_expectation_all_rows_identity():
    n = 5
    x_true = np.arange(1.0, n + 1)
    A = np.vstack([np.eye(n), np.eye(n)])
    b = A @ x_true
    step = exact_step_expectation(A, b, np.zeros(n), x_true, 0.5)
    # the 5 smallest residuals are rows for coordinates 1,1,2,2,3
    err = float(x_true @ x_true)
    assert step.expected_err_sq == pytest.approx(err - (1 + 1 + 4 + 4 + 9) / 5, rel=1e-14)


def test_exact_expectation_matches_monte_carlo():
    s = _system(m=40, n=3, beta=0.1, seed=9)
    x_k = np.array([0.3, -0.2, 0.8])
    step = exact_step_expectation(s.A, s.b_observed, x_k, s.x_true, 0.7, corrupt_set=s.corrupt_set)
    rng = np.random.default_rng(1)
    r = np.abs(s.A @ x_k - s.b_observed)
    samples = []
    for _ in range(20000):
        i = select_quantile(r, 0.7, rng)
        y = project_step(x_k, s.A[i], s.b_observed[i])
        samples.append(float(np.sum((y - s.x_true) ** 2)))
    samples = np.asarray(samples)
    se = samples.std() / math.sqrt(samples.size)
    assert abs(samples.mean() - step.expected_err_sq) <= 3 * se + 1e-12


def test_exact_expectation_infers_corrupt_rows():
    s = _system(m=40, n=3, beta=0.2, seed=9, model="constant-offset")
    x_k = s.x_true + 0.01
    a = exact_step_expectation(s.A, s.b_observed, x_k, s.x_true, 0.9)
    b = exact_step_expectation(s.A, s.b_observed, x_k, s.x_true, 0.9, corrupt_set=s.corrupt_set)
    np.testing.assert_array_equal(a.S, b.S)
