"""Desk-scale property suites behind ``amor verify``.

Each suite returns a list of ``CheckResult``; a suite passes when all of its
checks do.  The whole set runs in well under two minutes on one core.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analysis import gradient_identity_check
from .permgroup import PermutationGroup
from .relabel import AdaptiveState, criterion, relabel_many, theta_margin
from .samplers import SamplerConfig, amor_log_ratio, proposal_log_density, run_am, run_amor
from .targets import SymmetrizedTarget, make_benchmark_target

DEFAULT_SEED = 2026


@dataclass(frozen=True)
class CheckResult:
    name: str
    statistic: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{verdict}  {self.name}: statistic={self.statistic:.6g} tolerance={self.tolerance:.6g}{extra}"


def random_theta(rng: np.random.Generator, group: PermutationGroup, min_margin: float = 0.05,
                 mean_center=None, mean_scale: float = 3.0) -> AdaptiveState:
    """A random theta in Theta: Gaussian mean, Wishart-like covariance, margin above ``min_margin``."""
    d = group.dim
    center = np.zeros(d) if mean_center is None else np.asarray(mean_center, dtype=float)
    while True:
        mu = center + mean_scale * rng.standard_normal(d)
        a = rng.standard_normal((d, d))
        sigma = a @ a.T + 0.5 * np.eye(d)
        theta = AdaptiveState(mu, sigma)
        if theta_margin(group, theta) > min_margin:
            return theta


def voronoi_fraction(draws, group: PermutationGroup, theta: AdaptiveState) -> float:
    """Share of ``draws`` whose own labeling already minimises the criterion."""
    values = criterion(theta, np.asarray(draws)[:, group.index_stack])
    return float(np.mean(values[:, 0] <= values.min(axis=1)))


def detailed_balance_residuals(target: SymmetrizedTarget, group: PermutationGroup, c: float,
                               rng: np.random.Generator, n_triples: int) -> np.ndarray:
    """Relative residuals of pi(x) q(x,y) a(x,y) = pi(y) q(y,x) a(y,x) on random triples in V_theta."""
    out = np.empty(n_triples)
    for i in range(n_triples):
        theta = random_theta(rng, group, mean_center=np.full(group.dim, 1.0))
        x, y = relabel_many(group, theta, target.sample(rng, 2), rng)
        lp_x, lp_y = float(target.log_density(x)), float(target.log_density(y))
        lq_xy = proposal_log_density(group, theta, c, x, y)
        lq_yx = proposal_log_density(group, theta, c, y, x)
        lr_xy = amor_log_ratio(group, target, theta, c, x, y, lp_x, lp_y)
        lr_yx = amor_log_ratio(group, target, theta, c, y, x, lp_y, lp_x)
        lhs = lp_x + lq_xy + min(0.0, lr_xy)
        rhs = lp_y + lq_yx + min(0.0, lr_yx)
        out[i] = abs(np.expm1(lhs - rhs))
    return out


def benchmark_run_config(seed: int, T: int = 20_000, burn_in: int = 4_000, alpha: float = 1.0) -> SamplerConfig:
    return SamplerConfig(T=T, x0=np.array([0.0, 2.0]), alpha=alpha, burn_in=burn_in, seed=seed)


# --- suites ------------------------------------------------------------------

def suite_balance(seed: int) -> list[CheckResult]:
    target = make_benchmark_target()
    res = detailed_balance_residuals(target, target.group, 2.38 ** 2 / 2, np.random.default_rng(seed), 1000)
    worst = float(res.max())
    return [CheckResult("detailed balance, max relative residual over 1000 triples", worst, 1e-10, worst <= 1e-10)]


def suite_partition(seed: int) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    target = make_benchmark_target()
    group = target.group
    n, n_theta = 100_000, 20
    tol = 3.0 * np.sqrt(0.25 / n)
    expected = 1.0 / len(group)
    devs = []
    for _ in range(n_theta):
        theta = random_theta(rng, group, mean_center=np.full(2, 1.0))
        devs.append(abs(voronoi_fraction(target.sample(rng, n), group, theta) - expected))
    devs = np.array(devs)
    inside = int(np.sum(devs <= tol))
    return [CheckResult(f"V_theta mass vs 1/|P|, thetas within tolerance (of {n_theta})",
                        float(inside), 19.0, inside >= 19, f"max deviation {devs.max():.4g}, per-theta tol {tol:.4g}")]


def suite_gradient(seed: int, n: int = 1_000_000) -> list[CheckResult]:
    target = make_benchmark_target()
    theta = AdaptiveState([0.0, 2.0], np.eye(2))
    err_mu, err_sigma = gradient_identity_check(target, target.group, theta, 1.0, n, 1e-3,
                                                np.random.default_rng(seed))
    return [CheckResult("grad_mu w vs -Sigma^-1 h_mu, max relative error", err_mu, 0.05, err_mu <= 0.05),
            CheckResult("grad_Sigma w vs closed form, max relative error", err_sigma, 0.05, err_sigma <= 0.05)]


def suite_slln(seed: int) -> list[CheckResult]:
    target = make_benchmark_target()
    out = run_amor(benchmark_run_config(seed), target)
    xs = out.post_burn_in()
    s = float(np.mean(xs[:, 0] + xs[:, 1]))
    p = float(np.mean(xs[:, 0] * xs[:, 1]))
    return [CheckResult("|mean(x1 + x2) - 2|", abs(s - 2.0), 0.2, abs(s - 2.0) <= 0.2),
            CheckResult("|mean(x1 * x2) + 0.975|", abs(p + 0.975), 0.3, abs(p + 0.975) <= 0.3)]


def suite_equivalence(seed: int) -> list[CheckResult]:
    target = make_benchmark_target()
    trivial = PermutationGroup.trivial(2)
    trivial_target = SymmetrizedTarget(target.seed, trivial)
    cfg = SamplerConfig(T=10_000, x0=np.array([0.0, 2.0]), alpha=0.0, seed=seed)
    a = run_amor(cfg, trivial_target)
    b = run_am(cfg, trivial_target)
    fields = ("xs", "accepted", "mus", "sigmas", "psis", "tie_counts")
    mismatched = sum(not np.array_equal(getattr(a, f), getattr(b, f)) for f in fields)
    return [CheckResult("trace fields differing between AMOR(trivial, alpha=0) and AM",
                        float(mismatched), 0.0, mismatched == 0)]


SUITES: dict[str, Callable[[int], list[CheckResult]]] = {
    "partition": suite_partition,
    "balance": suite_balance,
    "gradient": suite_gradient,
    "slln": suite_slln,
    "equivalence": suite_equivalence,
}
