"""Diagnostics and Monte Carlo oracles for the relabeled target and the SA mean field.

The oracle for pi_theta never runs a Markov chain: exact draws from the
symmetric target are relabeled into V_theta, which makes them exact
pi_theta draws because every cell P V_theta carries the same pi-mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .permgroup import PermutationGroup
from .relabel import AdaptiveState, barrier, criterion, penalty_terms, relabel_many, theta_margin
from .targets import LOG_2PI, SymmetrizedTarget


@dataclass(frozen=True)
class MomentEstimate:
    mean: np.ndarray
    cov: np.ndarray
    n: int
    mean_stderr: np.ndarray


@dataclass(frozen=True)
class MeanFieldValue:
    h_mu: np.ndarray
    h_sigma: np.ndarray

    @property
    def norm(self) -> float:
        """Norm from <(a, A), (b, B)> = a.b + Trace(A^T B)."""
        return float(np.sqrt(self.h_mu @ self.h_mu + np.sum(self.h_sigma * self.h_sigma)))


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    edges: np.ndarray
    underflow: int
    overflow: int

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.underflow + self.overflow


# --- chain diagnostics -------------------------------------------------------

def acf(series, max_lag: int) -> np.ndarray:
    """Autocorrelation for lags 0..max_lag, normalised by the global variance."""
    s = np.asarray(series, dtype=float).ravel()
    n = s.size
    if not 1 <= max_lag < n:
        raise ValueError(f"need 1 <= max_lag < len(series), got max_lag={max_lag}, n={n}")
    dev = s - s.mean()
    var = float(dev @ dev) / n
    if var == 0.0:
        raise ValueError("series has zero variance; autocorrelation is undefined")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(dev[:n - k] @ dev[k:]) / ((n - k) * var)
    return out


def integrated_act(acf_values) -> float:
    """1 + 2 * sum of the autocorrelations up to (excluding) the first negative one."""
    rho = np.asarray(acf_values, dtype=float)
    neg = np.flatnonzero(rho[1:] < 0)
    stop = neg[0] + 1 if neg.size else rho.size
    return float(1.0 + 2.0 * rho[1:stop].sum())


def marginal_histogram(samples, coord: int, bins: int = 60, range=None) -> Histogram:
    x = np.asarray(samples, dtype=float)
    x = x[:, coord] if x.ndim == 2 else x
    if x.size == 0:
        raise ValueError("no samples")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo, hi = (x.min(), x.max()) if range is None else range
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    under = int(np.sum(x < lo))
    over = int(np.sum(x > hi))
    return Histogram(counts, edges, under, over)


def ks_statistic(samples, cdf: Callable) -> float:
    """Kolmogorov-Smirnov distance between the empirical CDF of ``samples`` and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def moments(samples) -> MomentEstimate:
    x = np.asarray(samples, dtype=float)
    n = x.shape[0]
    mean = x.mean(axis=0)
    dev = x - mean
    cov = dev.T @ dev / n
    return MomentEstimate(mean, cov, n, np.sqrt(np.diag(cov) / n))


# --- pi_theta oracle ---------------------------------------------------------

def pitheta_samples(target: SymmetrizedTarget, group: PermutationGroup, theta: AdaptiveState,
                    n: int, rng: np.random.Generator) -> np.ndarray:
    """n independent draws from pi restricted to V_theta."""
    return relabel_many(group, theta, target.sample(rng, n), rng)


def pitheta_moments(target, group, theta, n, rng) -> MomentEstimate:
    _require_theta(group, theta)
    return moments(pitheta_samples(target, group, theta, n, rng))


def _require_theta(group, theta):
    if not theta_margin(group, theta) > 0:
        raise ValueError("theta is outside Theta (Sigma^-1 mu is fixed by a group element)")


def mean_field(theta: AdaptiveState, alpha: float, moments: MomentEstimate,
               group: PermutationGroup) -> MeanFieldValue:
    _require_theta(group, theta)
    dm = moments.mean - theta.mu
    h_mu = dm.copy()
    h_sigma = moments.cov - theta.sigma + np.outer(dm, dm)
    if alpha:
        pen_mu, pen_sigma = penalty_terms(group, theta)
        h_mu = h_mu + alpha * pen_mu
        h_sigma = h_sigma + alpha * pen_sigma
    return MeanFieldValue(h_mu, 0.5 * (h_sigma + h_sigma.T))


# --- Lyapunov function -------------------------------------------------------

def lyapunov_w_from_samples(pi_draws, group: PermutationGroup, theta: AdaptiveState,
                            alpha: float) -> float:
    """w(theta) estimated from fixed pi-draws (relabeled here, so draws can be reused across theta)."""
    orbits = np.asarray(pi_draws, dtype=float)[:, group.index_stack]
    crit = criterion(theta, orbits).min(axis=1)
    cross_entropy = 0.5 * (theta.dim * LOG_2PI + theta.logdet + crit.mean())
    return float(cross_entropy + (barrier(group, theta, alpha) if alpha else 0.0))


def lyapunov_w(target, group, theta, alpha, n, rng) -> float:
    """Cross-entropy of pi_theta against N(mu, Sigma), plus the margin barrier."""
    _require_theta(group, theta)
    return lyapunov_w_from_samples(target.sample(rng, n), group, theta, alpha)


def lyapunov_gradient(theta: AdaptiveState, h: MeanFieldValue) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form gradient (-Sigma^-1 h_mu, -1/2 Sigma^-1 h_Sigma Sigma^-1)."""
    prec = theta.chol_inv.T @ theta.chol_inv
    return -prec @ h.h_mu, -0.5 * prec @ h.h_sigma @ prec


def _sym_direction(d, i, j):
    e = np.zeros((d, d))
    e[i, j] += 1.0
    e[j, i] += 1.0
    return e


def fd_lyapunov_gradient(pi_draws, group, theta: AdaptiveState, alpha: float,
                         fd_step: float) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of w with common random numbers.

    Returns the mu-gradient and the matrix of directional derivatives along
    E_ij + E_ji (upper triangle filled, i <= j).
    """
    d = theta.dim
    w = lambda th: lyapunov_w_from_samples(pi_draws, group, th, alpha)  # noqa: E731
    g_mu = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = fd_step
        g_mu[i] = (w(AdaptiveState(theta.mu + e, theta.sigma))
                   - w(AdaptiveState(theta.mu - e, theta.sigma))) / (2 * fd_step)
    g_dir = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            e = fd_step * _sym_direction(d, i, j)
            g_dir[i, j] = (w(AdaptiveState(theta.mu, theta.sigma + e))
                           - w(AdaptiveState(theta.mu, theta.sigma - e))) / (2 * fd_step)
    return g_mu, g_dir


def gradient_identity_check(target, group, theta, alpha, n, fd_step, rng) -> tuple[float, float]:
    """Max relative error of the closed-form gradient of w against finite differences.

    Both sides use the same n pi-draws.  Errors are sup-norm differences
    scaled by the sup-norm of the closed form, per block.
    """
    margin = theta_margin(group, theta)
    if not 0 < fd_step <= margin / 10:
        raise ValueError(f"fd_step must lie in (0, margin/10] = (0, {margin / 10:.4g}]")
    draws = target.sample(rng, n)
    relabeled = relabel_many(group, theta, draws)
    h = mean_field(theta, alpha, moments(relabeled), group)
    cf_mu, cf_sigma = lyapunov_gradient(theta, h)
    fd_mu, fd_dir = fd_lyapunov_gradient(draws, group, theta, alpha, fd_step)
    d = theta.dim
    cf_dir = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            cf_dir[i, j] = np.sum(cf_sigma * _sym_direction(d, i, j))
    iu = np.triu_indices(d)
    err_mu = np.max(np.abs(fd_mu - cf_mu)) / np.max(np.abs(cf_mu))
    err_sigma = np.max(np.abs(fd_dir[iu] - cf_dir[iu])) / np.max(np.abs(cf_dir[iu]))
    return float(err_mu), float(err_sigma)


def descent_value(theta: AdaptiveState, h: MeanFieldValue) -> float:
    """<grad w, h> = -h_mu^T Sigma^-1 h_mu - 1/2 Trace(Sigma^-1 h_Sigma Sigma^-1 h_Sigma)."""
    prec = theta.chol_inv.T @ theta.chol_inv
    a = prec @ h.h_sigma
    return float(-h.h_mu @ prec @ h.h_mu - 0.5 * np.trace(a @ a))


def descent_check(target, group, theta, alpha, n, rng) -> float:
    h = mean_field(theta, alpha, pitheta_moments(target, group, theta, n, rng), group)
    return descent_value(theta, h)


def align_to_reference(group: PermutationGroup, theta: AdaptiveState, reference_mean) -> int:
    """Index of the group element P for which P mu is closest to ``reference_mean``."""
    ref = np.asarray(reference_mean, dtype=float)
    orbit = group.orbit(theta.mu)
    return int(np.argmin(((orbit - ref) ** 2).sum(axis=1)))


# --- modality ----------------------------------------------------------------

def _lower_hull(px, py):
    """Indices of the greatest convex minorant of points sorted by x."""
    hull = []
    for i in range(px.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            if (py[b] - py[a]) * (px[i] - px[a]) >= (py[i] - py[a]) * (px[b] - px[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull)


def dip_statistic(samples, knots: int = 400) -> float:
    """Hartigan-style dip: half the sup distance from the ECDF to the nearest unimodal CDF.

    The ECDF is evaluated at ``knots`` order statistics.  For each candidate
    mode the best unimodal fit is the convex minorant to its left and the
    concave majorant to its right; the dip takes the best mode.  Coarsening
    adds at most 1/knots to the result.  Unimodal samples give values near
    1/sqrt(n); a clear two-bump sample gives a few hundredths.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 4:
        raise ValueError("need at least 4 samples")
    idx = np.unique(np.linspace(0, n - 1, min(knots, n)).astype(int))
    px, pf = x[idx], (idx + 1) / n
    best = np.inf
    for m in range(px.size):
        lx, lf = px[:m + 1], pf[:m + 1]
        h = _lower_hull(lx, lf)
        dev_left = np.max(np.abs(lf - np.interp(lx, lx[h], lf[h]))) if h.size > 1 else 0.0
        rx, rf = px[m:], pf[m:]
        # concave majorant = negated convex minorant of the negated curve
        h = _lower_hull(rx, -rf)
        dev_right = np.max(np.abs(rf - np.interp(rx, rx[h], rf[h]))) if h.size > 1 else 0.0
        best = min(best, max(dev_left, dev_right))
    return float(best / 2.0)
