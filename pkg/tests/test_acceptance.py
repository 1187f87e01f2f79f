"""Acceptance criteria 1-10 on the two-dimensional swap-symmetric Gaussian target.

Each test records a ``PASS n: ...`` or ``FAIL n: ...`` line, printed at the end
of the pytest session.  Runtimes include the sampler runs each criterion
depends on.  Run directly with ``python3 tests/test_acceptance.py``.
"""

import sys
import time

import numpy as np
from scipy import stats

from conftest import ACCEPTANCE_LINES, RUN_SEED, RUN_SECONDS, benchmark_config, benchmark_run
from amor.analysis import (acf, align_to_reference, descent_value, gradient_identity_check, integrated_act,
                           ks_statistic, mean_field, moments, pitheta_samples)
from amor.permgroup import PermutationGroup
from amor.relabel import AdaptiveState, theta_margin
from amor.samplers import run_am, run_amor
from amor.targets import make_benchmark_target
from amor.verify import detailed_balance_residuals, random_theta, voronoi_fraction

TARGET = make_benchmark_target()
GROUP = TARGET.group
ACT_MAX_LAG = 1000


def record(number: int, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def timed_run(sampler: str, alpha: float = 1.0):
    out = benchmark_run(sampler, alpha)
    return out, RUN_SECONDS[(sampler, alpha)]


def aligned_post_burn_in(out):
    k = align_to_reference(GROUP, out.final_theta, TARGET.seed.mean)
    return out.post_burn_in()[:, GROUP.index_stack[k]]


def test_criterion_01_detailed_balance():
    start = time.perf_counter()
    res = detailed_balance_residuals(TARGET, GROUP, 2.38 ** 2 / 2, np.random.default_rng(RUN_SEED), 1000)
    elapsed = time.perf_counter() - start
    worst = float(res.max())
    record(1, worst <= 1e-10 and elapsed < 1.0,
           f"detailed balance max relative residual {worst:.2e} (tol 1e-10) over 1000 triples, {elapsed:.2f}s (<1s)")


def test_criterion_02_partition_mass():
    start = time.perf_counter()
    rng = np.random.default_rng(RUN_SEED)
    n = 100_000
    tol = 3.0 * np.sqrt(0.25 / n)
    devs = np.array([abs(voronoi_fraction(TARGET.sample(rng, n), GROUP,
                                          random_theta(rng, GROUP, mean_center=[1.0, 1.0])) - 0.5)
                     for _ in range(20)])
    elapsed = time.perf_counter() - start
    inside = int(np.sum(devs <= tol))
    record(2, inside >= 19 and elapsed < 10.0,
           f"Voronoi mass within {tol:.4f} of 0.5 for {inside}/20 thetas (need 19), "
           f"max deviation {devs.max():.4f}, {elapsed:.1f}s (<10s)")


def test_criterion_03_gradient_identity():
    start = time.perf_counter()
    theta = AdaptiveState([0.0, 2.0], np.eye(2))
    err_mu, err_sigma = gradient_identity_check(TARGET, GROUP, theta, 1.0, 1_000_000, 1e-3,
                                                np.random.default_rng(RUN_SEED))
    elapsed = time.perf_counter() - start
    record(3, max(err_mu, err_sigma) <= 0.05 and elapsed < 60.0,
           f"Lyapunov gradient max relative error mu {err_mu:.2e}, sigma {err_sigma:.2e} (tol 0.05), "
           f"{elapsed:.1f}s (<60s)")


def test_criterion_04_trivial_group_equivalence():
    start = time.perf_counter()
    cfg = benchmark_config(alpha=0.0, T=10_000, burn_in=0)
    trivial = PermutationGroup.trivial(2)
    a = run_amor(cfg, TARGET, group=trivial)
    b = run_am(cfg, TARGET)
    elapsed = time.perf_counter() - start
    same = (np.array_equal(a.xs, b.xs) and np.array_equal(a.mus, b.mus)
            and np.array_equal(a.sigmas, b.sigmas) and np.array_equal(a.accepted, b.accepted))
    mismatched = int(np.sum(np.any(a.xs != b.xs, axis=1)))
    record(4, same and elapsed < 5.0,
           f"trivial-group AMOR vs AM bit-identical over T=10000: {same} ({mismatched} differing rows), "
           f"{elapsed:.1f}s (<5s)")


def test_criterion_05_slln_symmetric_functionals():
    out, run_s = timed_run("amor")
    start = time.perf_counter()
    post = out.post_burn_in()
    total = float(np.mean(post[:, 0] + post[:, 1]))
    product = float(np.mean(post[:, 0] * post[:, 1]))
    elapsed = run_s + time.perf_counter() - start
    ok = abs(total - 2.0) <= 0.2 and abs(product + 0.975) <= 0.3 and elapsed < 5.0
    record(5, ok, f"mean(x1+x2) {total:.4f} (2 +/- 0.2), mean(x1*x2) {product:.4f} (-0.975 +/- 0.3), "
                  f"{elapsed:.1f}s (<5s)")


def test_criterion_06_marginal_recovery():
    out, run_s = timed_run("amor")
    start = time.perf_counter()
    xs = aligned_post_burn_in(out)
    ks = [ks_statistic(xs[:, i], TARGET.seed.marginal_cdf(i)) for i in range(2)]
    elapsed = run_s + time.perf_counter() - start
    record(6, max(ks) <= 0.08 and elapsed < 5.0,
           f"aligned AMOR marginals KS {ks[0]:.4f}, {ks[1]:.4f} (tol 0.08), {elapsed:.1f}s (<5s)")


def test_criterion_07_mixing_comparison():
    runs = [timed_run(name) for name in ("amor", "reference_rwm", "am_ordered")]
    (amor, s1), (ref, s2), (ordered, s3) = runs
    start = time.perf_counter()
    amor_first = aligned_post_burn_in(amor)[:, 0]
    act_amor = integrated_act(acf(amor_first, ACT_MAX_LAG))
    act_ref = integrated_act(acf(ref.post_burn_in()[:, 0], ACT_MAX_LAG))
    skew_amor = abs(float(stats.skew(amor_first)))
    skew_ordered = abs(float(stats.skew(ordered.post_burn_in()[:, 0])))
    elapsed = s1 + s2 + s3 + time.perf_counter() - start
    act_ratio = act_amor / act_ref
    skew_ratio = skew_ordered / skew_amor
    ok = act_ratio <= 2.5 and skew_ratio >= 1.5 and elapsed < 15.0
    record(7, ok, f"ACT AMOR {act_amor:.1f} / reference {act_ref:.1f} = {act_ratio:.2f} (<=2.5); "
                  f"|skew| ordered {skew_ordered:.3f} / AMOR {skew_amor:.3f} = {skew_ratio:.2f} (>=1.5), "
                  f"{elapsed:.1f}s (<15s)")


def test_criterion_08_stability_and_alpha_robustness():
    runs = {alpha: timed_run("amor", alpha) for alpha in (1e-3, 1.0)}
    elapsed = sum(s for _, s in runs.values())
    last = {alpha: out.last_projection() for alpha, (out, _) in runs.items()}
    margins = {alpha: theta_margin(GROUP, out.final_theta) for alpha, (out, _) in runs.items()}
    spread = max(margins.values()) / min(margins.values()) - 1.0
    ok = all(t <= 2000 for t in last.values()) and spread <= 0.25 and elapsed < 10.0
    record(8, ok, f"last projection at t={last[1e-3]} (alpha=1e-3), t={last[1.0]} (alpha=1), need <=2000; "
                  f"final margins {margins[1e-3]:.3f} vs {margins[1.0]:.3f}, spread {spread:.1%} (<=25%), "
                  f"{elapsed:.1f}s (<10s)")


def test_criterion_09_fixed_point():
    start = time.perf_counter()
    norms = {}
    for alpha in (1e-3, 1.0):
        out = benchmark_run("amor", alpha)
        theta = out.final_theta
        draws = pitheta_samples(TARGET, GROUP, theta, 1_000_000, np.random.default_rng(RUN_SEED))
        norms[alpha] = mean_field(theta, alpha, moments(draws), GROUP).norm
    elapsed = time.perf_counter() - start
    ok = max(norms.values()) <= 0.1 and elapsed < 30.0
    record(9, ok, f"mean-field norm at final theta {norms[1e-3]:.3f} (alpha=1e-3), {norms[1.0]:.3f} (alpha=1), "
                  f"tol 0.1, {elapsed:.1f}s (<30s)")


def test_criterion_10_descent():
    start = time.perf_counter()
    rng = np.random.default_rng(RUN_SEED)
    n_batches, batch = 10, 10_000
    worst_excess, worst = -np.inf, None
    for _ in range(50):
        theta = random_theta(rng, GROUP, mean_center=[1.0, 1.0])
        vals = np.array([descent_value(theta, mean_field(theta, 1.0, moments(
            pitheta_samples(TARGET, GROUP, theta, batch, rng)), GROUP)) for _ in range(n_batches)])
        mean, stderr = vals.mean(), vals.std(ddof=1) / np.sqrt(n_batches)
        if mean - 3 * stderr > worst_excess:
            worst_excess, worst = mean - 3 * stderr, (mean, stderr)
    elapsed = time.perf_counter() - start
    record(10, worst_excess <= 0.0 and elapsed < 30.0,
           f"max over 50 thetas of <grad w, h> - 3 stderr = {worst_excess:.3g} "
           f"(at {worst[0]:.3g} +/- {worst[1]:.2g}), need <=0, {elapsed:.1f}s (<30s)")


if __name__ == "__main__":
    import pytest

    sys.exit(pytest.main([__file__, "-q"]))
