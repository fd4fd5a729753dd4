"""Seeded batch experiments, method comparison and bound verification."""
import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .corruption import CorruptionSpec, corrupt, generate_gaussian_system, load_system
from .errors import CertificateUnavailable, ConfigError, ParameterDomain, TooManySubsets
from .linalg import count_ceil, quantile_select, sigma_max, sigma_min
from .solvers import exact_step_expectation, run_solver
from .spectral import EXACT_SUBSET_CAP, spectral_summary, subset_size

SLACK = 1e-9


def trial_system(config, trial):
    """The corrupted system of one trial. Shared by every method."""
    if config.system is not None:
        base = load_system(config.system)
    else:
        base = generate_gaussian_system(config.m, config.n, rngmod.derive_seed(config.seed, rngmod.TRIAL_SYSTEM, trial))
    if config.system is not None and config.model is None:
        return base
    spec = CorruptionSpec(
        beta=config.beta,
        model=config.model or "random-gaussian",
        magnitude=config.magnitude,
        seed=rngmod.derive_seed(config.seed, rngmod.TRIAL_CORRUPTION, trial),
    )
    return corrupt(base, spec)


def trial_solver_seed(config, trial):
    return rngmod.derive_seed(config.seed, rngmod.TRIAL_SOLVER, trial)


def _run_trial(args):
    config, trial, write_traces = args
    system = trial_system(config, trial)
    rows = []
    for method in config.methods:
        solver_cfg = config.solver_config(method, trial_solver_seed(config, trial))
        start = time.perf_counter()
        trace = run_solver(system.A, system.b_observed, solver_cfg, x_true=system.x_true)
        wall = time.perf_counter() - start
        trace.annotate(system.corrupt_set)
        if write_traces:
            path = os.path.join(config.out, f"trace_trial{trial:04d}_{method}.csv")
            with open(path, "w", newline="") as fh:
                trace.write_csv(fh)
        rows.append({
            "method": method,
            "trial": trial,
            "final_err_sq": trace.final_err_sq,
            "iterations": trace.n_iters,
            "status": trace.status,
            "corrupted_picks": int(np.count_nonzero(trace.picked_corrupted)),
            "wall_time": wall,
        })
    return rows


def _map_trials(config, write_traces):
    jobs = [(config, i, write_traces) for i in range(config.trials)]
    if config.workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(job) for job in jobs]
    # ordered reduce over trial index
    return [row for rows in results for row in rows]


SUMMARY_FIELDS = ["method", "trial", "final_err_sq", "iterations", "status", "corrupted_picks", "wall_time"]


def run_experiment(config):
    """Run every method on every trial; write traces and ``summary.csv``.

    Returns the summary rows. Only the ``wall_time`` column varies between
    identical reruns.
    """
    config.validate(need_out=True)
    os.makedirs(config.out, exist_ok=True)
    rows = _map_trials(config, write_traces=True)
    with open(os.path.join(config.out, "summary.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({**row, "final_err_sq": repr(row["final_err_sq"]), "wall_time": f"{row['wall_time']:.6f}"})
    return rows


def compare_methods(config):
    """Median and interquartile range of the final squared error per method,
    over identical corrupted instances."""
    config.validate()
    rows = _map_trials(config, write_traces=bool(config.out))
    table = []
    for method in config.methods:
        finals = np.array([r["final_err_sq"] for r in rows if r["method"] == method])
        iters = np.array([r["iterations"] for r in rows if r["method"] == method])
        q25, med, q75 = np.percentile(finals, [25, 50, 75])
        table.append({
            "method": method,
            "trials": finals.size,
            "median_err_sq": float(med),
            "q25_err_sq": float(q25),
            "q75_err_sq": float(q75),
            "median_iterations": float(np.median(iters)),
            "converged": sum(r["status"] == "Converged" for r in rows if r["method"] == method),
        })
    return table


@dataclass
class CheckResult:
    name: str
    instances: int = 0
    violations: int = 0
    worst_margin: float = -math.inf

    @property
    def passed(self):
        return self.violations == 0

    def record(self, lhs, rhs):
        margin = lhs - rhs
        self.instances += 1
        if margin > self.worst_margin:
            self.worst_margin = margin
        if margin > SLACK:
            self.violations += 1


@dataclass
class Certificate:
    trial: int
    status: str
    rate_c: float | None = None
    sigma_sub_min: float | None = None
    sigma_max: float | None = None
    max_contraction: float | None = None


@dataclass
class VerificationReport:
    checks: dict = field(default_factory=dict)
    certificates: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    def lines(self):
        out = []
        for c in self.checks.values():
            verdict = "PASS" if c.passed else "FAIL"
            out.append(f"{c.name}: {verdict} states={c.instances} violations={c.violations} worst_margin={c.worst_margin:.6e}")
        for cert in self.certificates:
            line = f"certificate trial={cert.trial}: {cert.status}"
            if cert.rate_c is not None:
                line += f" rate_c={cert.rate_c:.6e} bound={1 - cert.rate_c:.12f}"
            if cert.max_contraction is not None:
                line += f" measured_max_contraction={cert.max_contraction:.12f}"
            out.append(line)
        out.append("verify: " + ("PASS" if self.passed else "FAIL"))
        return out


def _certificate(system, q, beta_eff, trial):
    m, n = system.A.shape
    s = subset_size(q, beta_eff, m)
    if s >= n and s >= 1 and math.comb(m, s) > EXACT_SUBSET_CAP:
        raise CertificateUnavailable(f"trial {trial}: exact sigma_min over C({m}, {s}) subsets is infeasible")
    try:
        summary = spectral_summary(system.A, q, beta_eff, method="exact")
    except ParameterDomain as exc:
        return Certificate(trial, f"unavailable-by-domain ({exc})"), None
    except TooManySubsets as exc:
        raise CertificateUnavailable(str(exc)) from None
    if not summary.certified:
        return Certificate(trial, "unavailable-by-condition", None, summary.sigma_sub_min, summary.sigma_max), None
    return Certificate(trial, "certified", summary.rate_c, summary.sigma_sub_min, summary.sigma_max), summary


def verify(config, checks=None):
    """Run the quantile solver and test every proof step at every visited state.

    Checks (lhs <= rhs + 1e-9 at each state x_k, err = ||x_k - x_true||^2):

    lemma1        quantile threshold Q <= sigma_max sqrt(err) / sqrt(m (1 - q - beta))
    lemma2        mean over corrupted admissible rows S of the post-step error
                  <= (1 + sigma_max^2 / sqrt(|S| m) (2/sqrt(1-q-beta) + sqrt(beta)/(1-q-beta))) err
    lemma3        mean over clean admissible rows <= (1 - sigma_min(A_clean)^2 / (q m)) err
    assembled     exact expectation <= the two bounds mixed with the actual pick odds
    theorem_step  exact expectation <= (1 - c) err, on instances with an exact certificate
    sv_rate       uniform-pick expectation <= (1 - sigma_min(A)^2 / m) err

    ``beta`` is the realised ceil(beta m) / m of each instance.
    """
    config.validate(need_methods=False)
    checks = tuple(checks if checks is not None else (config.verify or ("lemma1", "lemma2", "lemma3")))
    if config.q is None:
        raise ConfigError("verify needs q")
    q = config.q
    report = VerificationReport(checks={name: CheckResult(name) for name in checks})
    for trial in range(config.trials):
        system = trial_system(config, trial)
        A, b, x_true, C = system.A, system.b_observed, system.x_true, system.corrupt_set
        m, n = A.shape
        beta_eff = count_ceil(system.beta, m) / m
        smax = sigma_max(A)
        smin_full = sigma_min(A) if "sv_rate" in checks else None
        gap = 1.0 - q - beta_eff
        corr = (2.0 / math.sqrt(gap) + math.sqrt(beta_eff) / gap) if gap > 0 else math.inf

        summary = None
        if "theorem_step" in checks:
            cert, summary = _certificate(system, q, beta_eff, trial)
            report.certificates.append(cert)

        solver_cfg = config.solver_config("quantile", trial_solver_seed(config, trial))
        trace = run_solver(A, b, solver_cfg, x_true=x_true, record_iterates=True)
        x0 = np.zeros(n)
        states = np.vstack([x0[None, :], trace.iterates])
        worst_ratio = 0.0
        for x in states:
            e = x - x_true
            err = float(e @ e)
            r = np.abs(A @ x - b)
            sel = quantile_select(r, q)
            step = exact_step_expectation(A, b, x, x_true, q, corrupt_set=C)
            B, S = step.B, step.S
            clean = step.clean

            if "lemma1" in checks and gap > 0:
                report.checks["lemma1"].record(sel.threshold, smax * math.sqrt(err) / math.sqrt(m * gap))

            l2 = l3 = None
            if S.size and gap > 0:
                l2 = (1.0 + smax ** 2 / math.sqrt(S.size * m) * corr) * err
                if "lemma2" in checks:
                    report.checks["lemma2"].record(step.mean_over(S), l2)
            if clean.size:
                sc = sigma_min(A[clean])
                l3 = (1.0 - sc ** 2 / (q * m)) * err
                if "lemma3" in checks:
                    report.checks["lemma3"].record(step.mean_over(clean), l3)
            if "assembled" in checks and gap > 0:
                w_s = S.size / B.size
                bound = (w_s * l2 if S.size else 0.0) + ((1.0 - w_s) * l3 if clean.size else 0.0)
                report.checks["assembled"].record(step.expected_err_sq, bound)
            if "theorem_step" in checks and summary is not None:
                report.checks["theorem_step"].record(step.expected_err_sq, (1.0 - summary.rate_c) * err)
                if err > 0:
                    worst_ratio = max(worst_ratio, step.expected_err_sq / err)
            if "sv_rate" in checks:
                # Strohmer-Vershynin applies to the consistent system only
                uniform_steps = x + (system.b_true - A @ x)[:, None] * A
                expected = float(np.mean(np.sum((uniform_steps - x_true) ** 2, axis=1)))
                report.checks["sv_rate"].record(expected, (1.0 - smin_full ** 2 / m) * err)
        if summary is not None:
            report.certificates[-1].max_contraction = worst_ratio
    return report
