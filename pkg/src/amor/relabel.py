"""Relabeling geometry: the quadratic criterion, Voronoi cells and the margin of Theta."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .permgroup import PermutationGroup


class InvalidStateError(ValueError):
    """Raised when (mu, Sigma) is not usable, e.g. Sigma is not positive definite."""


class AdaptiveState:
    """theta = (mu, Sigma): running mean and covariance.

    The Cholesky factor is computed lazily so that a candidate produced by the
    stochastic-approximation update can be inspected (and rejected by the
    projection step) before anything tries to factor it.
    """

    __slots__ = ("mu", "sigma", "__dict__")

    def __init__(self, mu, sigma):
        mu = np.array(mu, dtype=float).reshape(-1)
        sigma = np.array(sigma, dtype=float)
        if sigma.shape != (mu.size, mu.size):
            raise InvalidStateError(f"sigma has shape {sigma.shape}, expected {(mu.size, mu.size)}")
        self.mu = mu
        self.sigma = sigma
        self.mu.setflags(write=False)
        self.sigma.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.mu.size

    def __repr__(self) -> str:
        return f"AdaptiveState(mu={self.mu.tolist()}, sigma={self.sigma.tolist()})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, AdaptiveState):
            return NotImplemented
        return np.array_equal(self.mu, other.mu) and np.array_equal(self.sigma, other.sigma)

    def is_symmetric(self, rtol: float = 1e-12) -> bool:
        if (self.sigma == self.sigma.T).all():
            return True
        scale = max(np.abs(self.sigma).max(), np.finfo(float).tiny)
        return bool(np.abs(self.sigma - self.sigma.T).max() <= rtol * scale)

    def min_eigenvalue(self) -> float:
        if not np.all(np.isfinite(self.sigma)):
            return -np.inf
        return float(np.linalg.eigvalsh(0.5 * (self.sigma + self.sigma.T))[0])

    @cached_property
    def chol(self) -> np.ndarray:
        if not (np.isfinite(self.sigma).all() and np.isfinite(self.mu).all()):
            raise InvalidStateError("non-finite entries in theta")
        if not self.is_symmetric():
            raise InvalidStateError("sigma is not symmetric")
        try:
            return np.linalg.cholesky(self.sigma)
        except np.linalg.LinAlgError as exc:
            raise InvalidStateError("sigma is not positive definite") from exc

    @cached_property
    def chol_inv(self) -> np.ndarray:
        return np.linalg.inv(self.chol)

    @cached_property
    def logdet(self) -> float:
        return 2.0 * float(np.log(np.diag(self.chol)).sum())

    @cached_property
    def precision_mu(self) -> np.ndarray:
        """Sigma^{-1} mu via two triangular solves."""
        w = self.chol_inv @ self.mu
        return self.chol_inv.T @ w

    def whiten(self, x) -> np.ndarray:
        """L^{-1}(x - mu) for a single point or a batch (last axis = d)."""
        x = np.asarray(x, dtype=float)
        return (x - self.mu) @ self.chol_inv.T

    def is_valid(self, pd_floor: float = 0.0) -> bool:
        """Symmetric, positive definite, and smallest eigenvalue >= ``pd_floor``."""
        try:
            self.chol
        except InvalidStateError:
            return False
        if pd_floor <= 0.0:
            return True
        # cheap sufficient test: lambda_min >= 1/||Sigma^-1||_2 >= 1/||L^-1||_F^2
        li = self.chol_inv
        if 1.0 >= pd_floor * float((li * li).sum()):
            return True
        return self.min_eigenvalue() >= pd_floor


@dataclass(frozen=True)
class RelabelResult:
    perm_index: int
    relabeled_x: np.ndarray
    tie_count: int


def criterion(theta: AdaptiveState, x) -> float | np.ndarray:
    """(x - mu)^T Sigma^{-1} (x - mu), batched over leading axes."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != theta.dim:
        raise ValueError(f"x has dimension {x.shape[-1]}, theta has {theta.dim}")
    z = theta.whiten(x)
    out = np.einsum("...i,...i->...", z, z)
    return float(out) if out.ndim == 0 else out


def orbit_criteria(group: PermutationGroup, theta: AdaptiveState, x) -> np.ndarray:
    """Criterion of every permuted copy P x, in group order."""
    return criterion(theta, group.orbit(x))


def _argmin_set(values: np.ndarray, tie_tol: float) -> np.ndarray:
    return np.flatnonzero(values <= values.min() + tie_tol)


def optimal_permutation(group: PermutationGroup, theta: AdaptiveState, x,
                        tie_tol: float = 0.0, rng: np.random.Generator | None = None) -> RelabelResult:
    """Pick a permutation minimising the criterion of P x.

    Ties (within ``tie_tol``, absolute) are broken by one uniform draw from
    ``rng``; a unique minimiser consumes no randomness.
    """
    if tie_tol < 0:
        raise ValueError("tie_tol must be non-negative")
    orbit = group.orbit(x)
    values = criterion(theta, orbit)
    candidates = _argmin_set(np.atleast_1d(values), tie_tol)
    if candidates.size == 1:
        k = int(candidates[0])
    else:
        if rng is None:
            raise ValueError("an rng is needed to break a tie between permutations")
        k = int(candidates[min(int(rng.random() * candidates.size), candidates.size - 1)])
    return RelabelResult(k, orbit[k], int(candidates.size))


def relabel_many(group: PermutationGroup, theta: AdaptiveState, xs,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Vectorised relabeling of a batch ``xs`` of shape (n, d) into V_theta.

    Exact ties are broken uniformly if ``rng`` is given, else by group order.
    """
    xs = np.asarray(xs, dtype=float)
    orbits = xs[:, group.index_stack]                    # (n, |P|, d)
    values = criterion(theta, orbits)                    # (n, |P|)
    if rng is None or len(group) == 1:
        k = np.argmin(values, axis=1)
    else:
        ties = values == values.min(axis=1, keepdims=True)
        # uniform among tied entries: random keys, masked
        keys = np.where(ties, rng.random(values.shape), -1.0)
        k = np.argmax(keys, axis=1)
    return orbits[np.arange(xs.shape[0]), k]


def in_voronoi(group: PermutationGroup, theta: AdaptiveState, x) -> bool:
    values = orbit_criteria(group, theta, x)
    return bool(values[0] <= values.min())


def theta_margin(group: PermutationGroup, theta: AdaptiveState) -> float:
    """inf over non-identity P of ||(I - P) Sigma^{-1} mu||; +inf for the trivial group."""
    v = theta.precision_mu
    if len(group) == 1:
        return np.inf
    diffs = v - v[group.index_stack[1:]]
    return float(np.sqrt((diffs * diffs).sum(axis=1)).min())


def u_matrix(perm) -> np.ndarray:
    """U_P = (I - P)^T (I - P)."""
    m = np.eye(perm.dim) - perm.matrix()
    return m.T @ m


def barrier(group: PermutationGroup, theta: AdaptiveState, alpha: float = 1.0) -> float:
    """(alpha/2) * sum over non-identity P of ||(I - P) Sigma^{-1} mu||^{-2}."""
    v = theta.precision_mu
    total = 0.0
    for p in group.non_identity():
        r = v - v[p.index]
        total += 1.0 / float(r @ r)
    return 0.5 * alpha * total


def penalty_terms(group: PermutationGroup, theta: AdaptiveState) -> tuple[np.ndarray, np.ndarray]:
    """Penalty directions that push theta away from the degenerate set.

    With ``v = Sigma^{-1} mu`` and ``m_P = ||(I - P) v||``::

        pen_mu    =  sum_P m_P^{-4} U_P v
        pen_sigma = -sum_P m_P^{-4} (mu mu^T Sigma^{-1} U_P + U_P Sigma^{-1} mu mu^T)

    so that ``(pen_mu, pen_sigma) = (-Sigma grad_mu b, -2 Sigma grad_Sigma b Sigma)``
    for the unit-weight barrier ``b``.  Callers scale by ``alpha * gamma_t``.
    """
    d = theta.dim
    if len(group) == 1:
        return np.zeros(d), np.zeros((d, d))
    v = theta.precision_mu
    uv = group.u_stack @ v                               # U_P v, one row per P
    m2 = uv @ v                                          # ||(I - P) v||^2 = v^T U_P v
    if not np.all(m2 > 0.0):
        bad = group[1 + int(np.argmin(m2))]
        raise InvalidStateError(f"theta lies outside Theta: Sigma^-1 mu is fixed by {bad.image}")
    s = (uv / (m2 * m2)[:, None]).sum(axis=0)
    # mu mu^T Sigma^{-1} U_P = mu (U_P v)^T since U_P and Sigma^{-1} are symmetric
    a = np.outer(theta.mu, s)
    return s, -(a + a.T)
