"""Stable AMOR and the baseline samplers it is compared against.

Every sampler draws from one ``numpy.random.Generator`` (PCG64 seeded from
``config.seed``) in a fixed order per iteration:

1. ``d`` standard normals for the Gaussian increment,
2. one uniform to break a relabeling tie, only when the argmin is not unique,
3. one uniform for the accept/reject decision (always drawn).

Samplers that never relabel simply skip item 2, which is what makes AMOR with
the trivial group and ``alpha = 0`` reproduce plain AM draw for draw.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from .permgroup import PermutationGroup
from .relabel import (AdaptiveState, InvalidStateError, optimal_permutation,
                      penalty_terms, theta_margin)
from .targets import LOG_2PI, logsumexp, GaussianSeedDensity, SeedDensity, SymmetrizedTarget

logger = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    """A numerical failure inside a run; the message names the step and iteration."""


class ConfigError(ValueError):
    pass


@dataclass
class SamplerConfig:
    T: int
    x0: np.ndarray
    c: float | None = None              # None -> 2.38**2 / d
    alpha: float = 0.0
    gamma_star: float = 1.0
    beta: float = 0.7
    delta0: float = 1e-2
    delta_halving: bool = True
    burn_in: int = 0
    theta0: AdaptiveState | None = None
    seed: int = 0
    pd_floor: float = 1e-10
    tie_tol: float = 0.0

    def __post_init__(self):
        self.x0 = np.array(self.x0, dtype=float).reshape(-1)
        if self.c is None:
            self.c = 2.38 ** 2 / self.x0.size

    @property
    def dim(self) -> int:
        return self.x0.size

    def gamma(self, t: int) -> float:
        return self.gamma_star * t ** (-self.beta)

    def delta(self, psi: int) -> float:
        return self.delta0 * 2.0 ** (-psi) if self.delta_halving else self.delta0

    def validate(self) -> None:
        if not (isinstance(self.T, (int, np.integer)) and self.T >= 1):
            raise ConfigError("T must be an integer >= 1")
        if not 0 <= self.burn_in < self.T:
            raise ConfigError("burn_in must satisfy 0 <= burn_in < T")
        if not self.c > 0:
            raise ConfigError("c must be positive")
        if not self.alpha >= 0:
            raise ConfigError("alpha must be non-negative")
        if not self.gamma_star > 0:
            raise ConfigError("gamma_star must be positive")
        if not 0.5 < self.beta <= 1.0:
            raise ConfigError("beta must lie in (1/2, 1]")
        if not self.delta0 > 0:
            raise ConfigError("delta0 must be positive")
        if not self.pd_floor > 0:
            raise ConfigError("pd_floor must be positive")
        if not self.tie_tol >= 0:
            raise ConfigError("tie_tol must be non-negative")
        if not np.all(np.isfinite(self.x0)):
            raise ConfigError("x0 must be finite")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def resolved(self, group: PermutationGroup) -> "SamplerConfig":
        """Copy with ``theta0`` filled in and checked against K_{delta0}."""
        self.validate()
        if group.dim != self.dim:
            raise ConfigError(f"x0 has dimension {self.dim}, group acts on {group.dim}")
        theta0 = self.theta0 if self.theta0 is not None else default_theta0(self.x0, group, self.delta0)
        if theta0.dim != self.dim:
            raise ConfigError("theta0 dimension does not match x0")
        if not theta0.is_valid(self.pd_floor):
            raise ConfigError("theta0 covariance must be symmetric positive definite above pd_floor")
        if theta_margin(group, theta0) < self.delta0:
            raise ConfigError(f"theta0 is not in K_delta0: margin {theta_margin(group, theta0):.3g} < {self.delta0}")
        return dataclasses.replace(self, theta0=theta0)


def default_theta0(x0, group: PermutationGroup, delta0: float) -> AdaptiveState:
    """mu0 = x0, nudged along (0, 1, ..., d-1) until the margin reaches delta0; Sigma0 = I."""
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    ramp = np.arange(d, dtype=float)
    step = 0.0
    for _ in range(64):
        theta = AdaptiveState(x0 + step * ramp, np.eye(d))
        if theta_margin(group, theta) >= delta0:
            return theta
        step = delta0 if step == 0.0 else 2.0 * step
    raise ConfigError("could not find an initial theta with the required margin")


@dataclass(frozen=True)
class ChainRecord:
    t: int
    x: np.ndarray
    accepted: bool
    mu: np.ndarray
    sigma: np.ndarray
    psi: int
    tie_count: int


@dataclass
class RunOutput:
    """Per-iteration traces stored column-wise; ``records`` gives the row view."""

    sampler: str
    xs: np.ndarray          # (T, d)
    accepted: np.ndarray    # (T,) bool
    mus: np.ndarray         # (T, d)
    sigmas: np.ndarray      # (T, d, d)
    psis: np.ndarray        # (T,) int
    tie_counts: np.ndarray  # (T,) int
    config_echo: SamplerConfig
    final_theta: AdaptiveState = field(init=False)

    def __post_init__(self):
        self.final_theta = AdaptiveState(self.mus[-1], self.sigmas[-1])

    @property
    def T(self) -> int:
        return self.xs.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean())

    @property
    def total_projections(self) -> int:
        return int(self.psis[-1])

    @property
    def records(self) -> list[ChainRecord]:
        return [ChainRecord(t + 1, self.xs[t], bool(self.accepted[t]), self.mus[t], self.sigmas[t],
                            int(self.psis[t]), int(self.tie_counts[t])) for t in range(self.T)]

    def post_burn_in(self) -> np.ndarray:
        return self.xs[self.config_echo.burn_in:]

    def last_projection(self) -> int:
        """Iteration (1-based) of the last projection, 0 if none happened."""
        jumps = np.flatnonzero(np.diff(np.concatenate([[0], self.psis])))
        return int(jumps[-1] + 1) if jumps.size else 0


class _Trace:
    def __init__(self, T, d):
        self.xs = np.empty((T, d))
        self.accepted = np.zeros(T, dtype=bool)
        self.mus = np.empty((T, d))
        self.sigmas = np.empty((T, d, d))
        self.psis = np.zeros(T, dtype=np.int64)
        self.ties = np.ones(T, dtype=np.int64)

    def put(self, i, state: "ChainState"):
        self.xs[i] = state.x
        self.accepted[i] = state.accepted
        self.mus[i] = state.theta.mu
        self.sigmas[i] = state.theta.sigma
        self.psis[i] = state.psi
        self.ties[i] = state.tie_count

    def output(self, name, config):
        return RunOutput(name, self.xs, self.accepted, self.mus, self.sigmas, self.psis, self.ties, config)


@dataclass(frozen=True)
class ChainState:
    t: int
    x: np.ndarray
    log_pi: float
    theta: AdaptiveState
    psi: int = 0
    accepted: bool = False
    tie_count: int = 1


# --- kernel pieces -----------------------------------------------------------

def gaussian_log_density(y, x, theta: AdaptiveState, c: float):
    """log N(y | x, c Sigma), batched over leading axes of ``y``."""
    z = (np.asarray(y, dtype=float) - x) @ theta.chol_inv.T
    d = theta.dim
    return -0.5 * (d * LOG_2PI + d * np.log(c) + theta.logdet + np.einsum("...i,...i->...", z, z) / c)


def proposal_log_density(group: PermutationGroup, theta: AdaptiveState, c: float, x, y) -> float:
    """log sum_P N(P y | x, c Sigma)."""
    y = np.asarray(y, dtype=float)
    return float(logsumexp(gaussian_log_density(group.orbit(y), np.asarray(x, dtype=float), theta, c)))


def amor_log_ratio(group, target: SymmetrizedTarget, theta, c, x_cur, x_prop,
                   log_pi_cur: float | None = None, log_pi_prop: float | None = None) -> float:
    """Log of the AMOR acceptance ratio, with the orbit-summed proposal densities."""
    if log_pi_cur is None:
        log_pi_cur = target.log_density(x_cur)
    if log_pi_cur == -np.inf:
        raise SamplerError("current state has zero target density")
    if log_pi_prop is None:
        log_pi_prop = target.log_density(x_prop)
    if log_pi_prop == -np.inf:
        return -np.inf
    x_cur = np.asarray(x_cur, dtype=float)
    x_prop = np.asarray(x_prop, dtype=float)
    idx = group.index_stack
    # row 0: P x_cur around x_prop (reverse move); row 1: P x_prop around x_cur
    z = np.concatenate((x_cur[idx] - x_prop, x_prop[idx] - x_cur)) @ theta.chol_inv.T
    q = (z * z).sum(axis=-1).reshape(2, -1) * (-0.5 / c)
    log_q = np.logaddexp.reduce(q, axis=-1)
    # normalising constants of the two Gaussian sums are identical and cancel
    return (log_pi_prop - log_pi_cur) + (log_q[0] - log_q[1])


def amor_acceptance(group, target, theta, c, x_cur, x_prop) -> float:
    """Acceptance probability of a relabeled candidate ``x_prop``."""
    return float(np.exp(min(0.0, amor_log_ratio(group, target, theta, c, x_cur, x_prop))))


def _accept(log_ratio: float, u: float) -> bool:
    return log_ratio >= 0.0 or u < np.exp(log_ratio)


def sa_update(group, theta: AdaptiveState, x_new, gamma_t: float, alpha: float) -> AdaptiveState:
    """One Robbins-Monro step on (mu, Sigma), with the barrier penalty when alpha > 0."""
    if gamma_t == 0.0:
        return theta
    mu, sigma = theta.mu, theta.sigma
    diff = np.asarray(x_new, dtype=float) - mu
    new_mu = mu + gamma_t * diff
    new_sigma = sigma + gamma_t * (diff[:, None] * diff[None, :] - sigma)
    if alpha != 0.0:
        pen_mu, pen_sigma = penalty_terms(group, theta)
        new_mu = new_mu + alpha * gamma_t * pen_mu
        new_sigma = new_sigma + alpha * gamma_t * pen_sigma
    return AdaptiveState(new_mu, 0.5 * (new_sigma + new_sigma.T))


def in_compact(group, theta: AdaptiveState, delta: float, pd_floor: float) -> bool:
    """theta in K_delta, with Sigma also required to clear the eigenvalue floor."""
    if not theta.is_valid(pd_floor):
        return False
    return theta_margin(group, theta) >= delta


def project_if_needed(group, theta: AdaptiveState, psi: int, config: SamplerConfig):
    """Reset to theta0 and bump the counter when theta has left K_{delta_psi}."""
    if in_compact(group, theta, config.delta(psi), config.pd_floor):
        return theta, psi
    return config.theta0, psi + 1


def _initial_state(config: SamplerConfig, log_density: Callable) -> ChainState:
    lp = float(log_density(config.x0))
    if lp == -np.inf:
        raise ConfigError("x0 has zero target density")
    return ChainState(0, config.x0, lp, config.theta0)


def _proposal_chol(theta: AdaptiveState, c: float, t: int) -> np.ndarray:
    try:
        return np.sqrt(c) * theta.chol
    except InvalidStateError as exc:
        raise SamplerError(f"step 'proposal' at iteration {t}: {exc}") from exc


def _check_candidate(y, t: int) -> None:
    if not np.all(np.isfinite(y)):
        raise SamplerError(f"step 'proposal' at iteration {t}: non-finite candidate")


def amor_step(state: ChainState, config: SamplerConfig, target: SymmetrizedTarget,
              group: PermutationGroup, rng: np.random.Generator) -> ChainState:
    t = state.t + 1
    theta, c = state.theta, config.c
    x_tilde = state.x + _proposal_chol(theta, c, t) @ rng.standard_normal(config.dim)
    _check_candidate(x_tilde, t)
    relabel = optimal_permutation(group, theta, x_tilde, config.tie_tol, rng)
    x_tilde = relabel.relabeled_x
    lp_prop = float(target.log_density(x_tilde))
    log_ratio = amor_log_ratio(group, target, theta, c, state.x, x_tilde, state.log_pi, lp_prop)
    if np.isnan(log_ratio):
        raise SamplerError(f"step 'acceptance' at iteration {t}: acceptance ratio is NaN")
    u = rng.random()
    if _accept(log_ratio, u):
        x, lp, accepted = x_tilde, lp_prop, True
    else:
        x, lp, accepted = state.x, state.log_pi, False
    try:
        candidate = sa_update(group, theta, x, config.gamma(t), config.alpha)
    except InvalidStateError as exc:
        raise SamplerError(f"step 'sa_update' at iteration {t}: {exc}") from exc
    new_theta, psi = project_if_needed(group, candidate, state.psi, config)
    if psi != state.psi:
        logger.debug("projection at iteration %d (psi=%d)", t, psi)
    return ChainState(t, x, lp, new_theta, psi, accepted, relabel.tie_count)


def run_amor(config: SamplerConfig, target: SymmetrizedTarget,
             group: PermutationGroup | None = None) -> RunOutput:
    """Stable AMOR: adaptive Metropolis with online relabeling, penalties and projections."""
    group = target.group if group is None else group
    config = config.resolved(group)
    rng = np.random.default_rng(config.seed)
    state = _initial_state(config, target.log_density)
    trace = _Trace(config.T, config.dim)
    for i in range(config.T):
        state = amor_step(state, config, target, group, rng)
        trace.put(i, state)
    return trace.output("amor", config)


# --- baselines ---------------------------------------------------------------

def _am_update(theta: AdaptiveState, x, gamma_t: float) -> AdaptiveState:
    diff = np.asarray(x, dtype=float) - theta.mu
    new_mu = theta.mu + gamma_t * diff
    new_sigma = theta.sigma + gamma_t * (diff[:, None] * diff[None, :] - theta.sigma)
    return AdaptiveState(new_mu, 0.5 * (new_sigma + new_sigma.T))


def am_step(state: ChainState, config: SamplerConfig, log_density: Callable,
            rng: np.random.Generator, transform: Callable | None = None) -> ChainState:
    """Haario-style AM step; ``transform`` maps the raw proposal (e.g. sorting)."""
    t = state.t + 1
    theta = state.theta
    y = state.x + _proposal_chol(theta, config.c, t) @ rng.standard_normal(config.dim)
    _check_candidate(y, t)
    if transform is not None:
        y = transform(y)
    lp_y = float(log_density(y))
    log_ratio = lp_y - state.log_pi
    u = rng.random()
    if _accept(log_ratio, u):
        x, lp, accepted = y, lp_y, True
    else:
        x, lp, accepted = state.x, state.log_pi, False
    candidate = _am_update(theta, x, config.gamma(t))
    # AM has no margin to protect; only the eigenvalue floor triggers a reset
    psi = state.psi
    if not candidate.is_valid(config.pd_floor):
        candidate, psi = config.theta0, psi + 1
    return ChainState(t, x, lp, candidate, psi, accepted, 1)


def _run_am_like(name, config, target, transform=None) -> RunOutput:
    group = PermutationGroup.trivial(config.dim)
    config = config.resolved(group)
    rng = np.random.default_rng(config.seed)
    state = _initial_state(config, target.log_density)
    trace = _Trace(config.T, config.dim)
    for i in range(config.T):
        state = am_step(state, config, target.log_density, rng, transform)
        trace.put(i, state)
    return trace.output(name, config)


def run_am(config: SamplerConfig, target: SymmetrizedTarget) -> RunOutput:
    """Plain adaptive Metropolis on the full symmetric target."""
    return _run_am_like("am", config, target)


def run_am_ordered(config: SamplerConfig, target: SymmetrizedTarget) -> RunOutput:
    """AM with every proposal sorted ascending (identifiability constraint)."""
    if len(target.group) != np.prod(np.arange(1, target.dim + 1)):
        raise ConfigError("the ordering constraint assumes the full symmetric group")
    return _run_am_like("am_ordered", config, target, transform=np.sort)


def posthoc_order(output: RunOutput) -> RunOutput:
    """Sort every recorded sample ascending after the fact; theta traces are kept."""
    return dataclasses.replace(output, sampler=output.sampler + "+posthoc", xs=np.sort(output.xs, axis=1))


def run_celeux(config: SamplerConfig, target: SymmetrizedTarget,
               proposal_diag=None, group: PermutationGroup | None = None) -> RunOutput:
    """Non-adaptive random-walk Metropolis with Celeux-style online relabeling.

    Proposals use a fixed diagonal covariance (default ``c * diag(Sigma0)``).
    Relabeling uses the running mean and the *diagonal* running variances of
    the chain so far (1/t normalisation); no correction enters the MH ratio.
    Until a coordinate's variance clears ``pd_floor`` the matching entry of
    ``diag(Sigma0)`` stands in.
    """
    group = target.group if group is None else group
    config = config.resolved(group)
    d = config.dim
    prior_var = np.diag(config.theta0.sigma).copy()
    if proposal_diag is None:
        proposal_diag = config.c * prior_var
    proposal_sd = np.sqrt(np.asarray(proposal_diag, dtype=float))
    if proposal_sd.shape != (d,) or not np.all(proposal_sd > 0):
        raise ConfigError("proposal_diag must hold d positive variances")
    rng = np.random.default_rng(config.seed)
    state = _initial_state(config, target.log_density)
    trace = _Trace(config.T, d)
    n, mean, m2 = 0, config.theta0.mu.copy(), np.zeros(d)
    for i in range(config.T):
        t = i + 1
        var = m2 / n if n else np.zeros(d)
        var = np.where(var > config.pd_floor, var, prior_var)
        theta = AdaptiveState(mean, np.diag(var))
        y = state.x + proposal_sd * rng.standard_normal(d)
        _check_candidate(y, t)
        relabel = optimal_permutation(group, theta, y, config.tie_tol, rng)
        y = relabel.relabeled_x
        lp_y = float(target.log_density(y))
        u = rng.random()
        if _accept(lp_y - state.log_pi, u):
            x, lp, accepted = y, lp_y, True
        else:
            x, lp, accepted = state.x, state.log_pi, False
        n += 1
        if n == 1:
            mean, m2 = x.copy(), np.zeros(d)
        else:
            delta = x - mean
            mean = mean + delta / n
            m2 = m2 + delta * (x - mean)
        var_now = m2 / n
        shown = AdaptiveState(mean, np.diag(np.where(var_now > config.pd_floor, var_now, prior_var)))
        state = ChainState(t, x, lp, shown, 0, accepted, relabel.tie_count)
        trace.put(i, state)
    return trace.output("celeux", config)


def run_reference_rwm(seed: SeedDensity, config: SamplerConfig) -> RunOutput:
    """Random-walk Metropolis on the un-symmetrized Gaussian seed with proposal c * cov."""
    if not isinstance(seed, GaussianSeedDensity):
        raise ConfigError("the reference chain needs a Gaussian seed")
    group = PermutationGroup.trivial(seed.dim)
    fixed = AdaptiveState(seed.mean, seed.cov)
    config = dataclasses.replace(config, theta0=fixed).resolved(group)
    rng = np.random.default_rng(config.seed)
    chol = np.sqrt(config.c) * fixed.chol
    state = _initial_state(config, seed.log_density)
    trace = _Trace(config.T, seed.dim)
    for i in range(config.T):
        y = state.x + chol @ rng.standard_normal(seed.dim)
        _check_candidate(y, i + 1)
        lp_y = float(seed.log_density(y))
        u = rng.random()
        if _accept(lp_y - state.log_pi, u):
            state = ChainState(i + 1, y, lp_y, fixed, 0, True)
        else:
            state = ChainState(i + 1, state.x, state.log_pi, fixed, 0, False)
        trace.put(i, state)
    return trace.output("reference_rwm", config)


SAMPLERS = ("amor", "am", "am_ordered", "celeux", "reference_rwm")


def run_sampler(name: str, config: SamplerConfig, target: SymmetrizedTarget,
                proposal_diag=None) -> RunOutput:
    """Dispatch by sampler name (one of ``SAMPLERS``)."""
    if name == "amor":
        return run_amor(config, target)
    if name == "am":
        return run_am(config, target)
    if name == "am_ordered":
        return run_am_ordered(config, target)
    if name == "celeux":
        return run_celeux(config, target, proposal_diag)
    if name == "reference_rwm":
        return run_reference_rwm(target.seed, config)
    raise ConfigError(f"unknown sampler {name!r}; expected one of {', '.join(SAMPLERS)}")
