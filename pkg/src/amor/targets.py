"""Permutation-invariant targets built by averaging a seed density over a group."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .permgroup import PermutationGroup

LOG_2PI = float(np.log(2.0 * np.pi))


class TargetError(ValueError):
    pass


def logsumexp(a, axis=-1):
    """log(sum(exp(a))) along ``axis``; all -inf gives -inf."""
    return np.logaddexp.reduce(np.asarray(a, dtype=float), axis=axis)


@dataclass(frozen=True)
class GaussianSeed:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise TargetError(f"cov has shape {cov.shape}, expected {(mean.size, mean.size)}")
        scale = np.abs(cov).max()
        if np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise TargetError("cov must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise TargetError("cov must be positive definite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_chol_inv", np.linalg.inv(chol))
        object.__setattr__(self, "_logdet", 2.0 * float(np.log(np.diag(chol)).sum()))

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_density(self, x) -> np.ndarray | float:
        z = (np.asarray(x, dtype=float) - self.mean) @ self._chol_inv.T
        out = -0.5 * (self.dim * LOG_2PI + self._logdet + np.einsum("...i,...i->...", z, z))
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        shape = (self.dim,) if n is None else (n, self.dim)
        return self.mean + rng.standard_normal(shape) @ self._chol.T


class SeedDensity:
    """Base class for the seed density that gets symmetrized.

    Subclasses provide ``log_density`` (batched over leading axes) and ``sample``.
    """

    kind = "abstract"
    dim: int

    def log_density(self, x):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def marginal_cdf(self, coord: int):
        """CDF of a single coordinate, when available in closed form."""
        raise NotImplementedError(f"no closed-form marginal for {self.kind} seeds")


class GaussianSeedDensity(SeedDensity):
    kind = "gaussian"

    def __init__(self, gaussian: GaussianSeed):
        self.gaussian = gaussian
        self.dim = gaussian.dim

    @property
    def mean(self):
        return self.gaussian.mean

    @property
    def cov(self):
        return self.gaussian.cov

    def log_density(self, x):
        return self.gaussian.log_density(x)

    def sample(self, rng, n=None):
        return self.gaussian.sample(rng, n)

    def marginal_cdf(self, coord: int):
        from scipy.stats import norm
        m = self.gaussian.mean[coord]
        s = np.sqrt(self.gaussian.cov[coord, coord])
        return lambda t: norm.cdf(t, loc=m, scale=s)


class TwistedSeedDensity(SeedDensity):
    """Gaussian pushed through the shear ``y2 = x2 + bend * (x1^2 - C11)``.

    The shear has unit Jacobian, so the density is the Gaussian density at the
    pre-image.  Only the first two coordinates take part.
    """

    kind = "twisted"

    def __init__(self, gaussian: GaussianSeed, bend: float):
        if not np.isfinite(bend):
            raise TargetError("bend must be finite")
        if gaussian.dim < 2:
            raise TargetError("the twisted seed needs d >= 2")
        self.gaussian = gaussian
        self.bend = float(bend)
        self.dim = gaussian.dim
        self._c11 = float(gaussian.cov[0, 0])

    def _shift(self, x1):
        return self.bend * (x1 * x1 - self._c11)

    def forward(self, x) -> np.ndarray:
        y = np.array(x, dtype=float, copy=True)
        y[..., 1] = y[..., 1] + self._shift(y[..., 0])
        return y

    def inverse(self, y) -> np.ndarray:
        x = np.array(y, dtype=float, copy=True)
        x[..., 1] = x[..., 1] - self._shift(x[..., 0])
        return x

    def log_density(self, x):
        return self.gaussian.log_density(self.inverse(x))

    def sample(self, rng, n=None):
        return self.forward(self.gaussian.sample(rng, n))

    def marginal_cdf(self, coord: int):
        if coord == 0 or self.bend == 0.0:
            return GaussianSeedDensity(self.gaussian).marginal_cdf(coord)
        return super().marginal_cdf(coord)


class MixtureSeedDensity(SeedDensity):
    kind = "mixture"

    def __init__(self, weights: Sequence[float], components: Sequence[GaussianSeed]):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or weights.size != len(components) or weights.size == 0:
            raise TargetError("need one weight per mixture component")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise TargetError("mixture weights must be non-negative and sum to 1")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise TargetError("mixture components have different dimensions")
        self.weights = weights
        self.components = list(components)
        self.dim = dims.pop()
        with np.errstate(divide="ignore"):
            self._log_w = np.log(weights)

    def log_density(self, x):
        parts = np.stack([lw + c.log_density(x) for lw, c in zip(self._log_w, self.components)], axis=-1)
        out = logsumexp(parts, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, rng, n=None):
        if n is None:
            k = int(rng.choice(len(self.components), p=self.weights))
            return self.components[k].sample(rng)
        ks = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for k, comp in enumerate(self.components):
            sel = ks == k
            if sel.any():
                out[sel] = comp.sample(rng, int(sel.sum()))
        return out

    def marginal_cdf(self, coord: int):
        from scipy.stats import norm
        locs = np.array([c.mean[coord] for c in self.components])
        scales = np.sqrt([c.cov[coord, coord] for c in self.components])
        w = self.weights
        return lambda t: np.sum(w * norm.cdf(np.asarray(t)[..., None], loc=locs, scale=scales), axis=-1)


def _check_point(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise TargetError(f"point has dimension {x.shape[-1]}, target has {dim}")
    if not np.all(np.isfinite(x)):
        raise TargetError("non-finite point")
    return x


def seed_log_density(seed: SeedDensity, x):
    return seed.log_density(_check_point(x, seed.dim))


def sample_seed(seed: SeedDensity, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    return seed.sample(rng, n)


@dataclass(frozen=True)
class SymmetrizedTarget:
    """pi(x) = (1/|P|) sum_P seed(P x), optionally truncated to a centred ball."""

    seed: SeedDensity
    group: PermutationGroup
    support_radius: float | None = None
    _log_order: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.seed.dim != self.group.dim:
            raise TargetError("seed and group dimensions differ")
        if self.support_radius is not None and not self.support_radius > 0:
            raise TargetError("support_radius must be positive")
        object.__setattr__(self, "_log_order", float(np.log(len(self.group))))

    @property
    def dim(self) -> int:
        return self.seed.dim

    def log_density(self, x):
        x = _check_point(x, self.dim)
        orbit = x[..., self.group.index_stack]                   # (..., |P|, d)
        out = logsumexp(self.seed.log_density(orbit), axis=-1) - self._log_order
        if self.support_radius is not None:
            r2 = np.einsum("...i,...i->...", x, x)
            out = np.where(r2 <= self.support_radius ** 2, out, -np.inf)
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Exact pi-draws: seed draws with a uniformly chosen group element applied.

        With a support radius, draws outside the ball are rejected and redrawn.
        """
        out = self._sample_once(rng, n)
        if self.support_radius is None:
            return out
        keep = np.einsum("ij,ij->i", out, out) <= self.support_radius ** 2
        out = out[keep]
        while out.shape[0] < n:
            more = self._sample_once(rng, n)
            more = more[np.einsum("ij,ij->i", more, more) <= self.support_radius ** 2]
            out = np.concatenate([out, more])
        return out[:n]

    def _sample_once(self, rng, n):
        xs = self.seed.sample(rng, n)
        k = rng.integers(len(self.group), size=n)
        return np.take_along_axis(xs, self.group.index_stack[k], axis=1)


def target_log_density(target: SymmetrizedTarget, x):
    return target.log_density(x)


BENCHMARK_SEED_MEAN = (0.0, 2.0)
BENCHMARK_SEED_COV = ((16.0, -0.975), (-0.975, 1.0))


def make_benchmark_seed() -> GaussianSeedDensity:
    return GaussianSeedDensity(GaussianSeed(np.array(BENCHMARK_SEED_MEAN), np.array(BENCHMARK_SEED_COV)))


def make_benchmark_target() -> SymmetrizedTarget:
    """The two-dimensional swap-symmetrized Gaussian used for the method comparison."""
    return SymmetrizedTarget(make_benchmark_seed(), PermutationGroup.full_symmetric(2))


def make_twisted_target(bend: float = 0.1) -> SymmetrizedTarget:
    g = GaussianSeed(np.array(BENCHMARK_SEED_MEAN), np.array(BENCHMARK_SEED_COV))
    return SymmetrizedTarget(TwistedSeedDensity(g, bend), PermutationGroup.full_symmetric(2))


def make_bimodal_target(separation: float = 8.0) -> SymmetrizedTarget:
    """Equal-weight two-component seed; components offset along the first axis."""
    cov = np.array(BENCHMARK_SEED_COV)
    m = np.array(BENCHMARK_SEED_MEAN)
    shift = np.array([separation / 2.0, 0.0])
    comps = [GaussianSeed(m - shift, cov / 4.0), GaussianSeed(m + shift, cov / 4.0)]
    return SymmetrizedTarget(MixtureSeedDensity([0.5, 0.5], comps), PermutationGroup.full_symmetric(2))
