"""Trace CSV and key/value summary files.

Trace: UTF-8 CSV with a header row, one row per iteration::

    t, x_0..x_{d-1}, accepted, psi, mu_0..mu_{d-1}, sigma_0_0..sigma_{d-1}_{d-1}, tie_count

Floats are written with ``repr`` (shortest string that round-trips), so a
trace read back gives bit-identical arrays.

Summary: one ``key = value`` per line.  Keys, in order:

    version, sampler, seed, T, burn_in, n_post_burn_in, acceptance_rate,
    total_projections, last_projection, mean_<i>, cov_<i>_<j>, act_<i>,
    ks_<i>, aligned_perm, wall_clock_seconds, config.<section>.<key>

``ks_<i>`` compares coordinate ``i`` of the post-burn-in samples, permuted by
the group element that brings the final mu closest to the seed mean, with the
seed's marginal CDF.  Means and covariances use the raw (unaligned) samples
and a 1/n normalisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import acf, align_to_reference, integrated_act, ks_statistic, moments
from .permgroup import PermutationGroup
from .samplers import RunOutput
from .targets import GaussianSeedDensity, SeedDensity


class TraceFormatError(ValueError):
    def __init__(self, path, line, message):
        self.line = line
        super().__init__(f"{path}: line {line}: {message}")


def trace_header(d: int) -> list[str]:
    return (["t"] + [f"x_{i}" for i in range(d)] + ["accepted", "psi"]
            + [f"mu_{i}" for i in range(d)]
            + [f"sigma_{i}_{j}" for i in range(d) for j in range(d)] + ["tie_count"])


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trace(output: RunOutput, path) -> None:
    d = output.xs.shape[1]
    sig = output.sigmas.reshape(output.T, d * d)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(trace_header(d)) + "\n")
        for i in range(output.T):
            row = [str(i + 1)]
            row += [_fmt(v) for v in output.xs[i]]
            row += ["1" if output.accepted[i] else "0", str(int(output.psis[i]))]
            row += [_fmt(v) for v in output.mus[i]]
            row += [_fmt(v) for v in sig[i]]
            row.append(str(int(output.tie_counts[i])))
            fh.write(",".join(row) + "\n")


@dataclass(frozen=True)
class TraceData:
    t: np.ndarray
    xs: np.ndarray
    accepted: np.ndarray
    psis: np.ndarray
    mus: np.ndarray
    sigmas: np.ndarray
    tie_counts: np.ndarray

    @property
    def dim(self) -> int:
        return self.xs.shape[1]


def read_trace(path) -> TraceData:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        n_x = sum(1 for h in header if h.startswith("x_"))
        if n_x == 0 or header != trace_header(n_x):
            raise TraceFormatError(path, 1, "header does not match the trace format")
        d = n_x
        width = len(header)
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split(",")
            if len(fields) != width:
                raise TraceFormatError(path, lineno, f"expected {width} fields, got {len(fields)}")
            try:
                t = int(fields[0])
                acc = int(fields[1 + d])
                psi = int(fields[2 + d])
                ties = int(fields[-1])
                floats = [float(v) for v in fields[1:1 + d] + fields[3 + d:-1]]
            except ValueError:
                raise TraceFormatError(path, lineno, "non-numeric field") from None
            if acc not in (0, 1):
                raise TraceFormatError(path, lineno, "accepted must be 0 or 1")
            if not all(math.isfinite(v) for v in floats):
                raise TraceFormatError(path, lineno, "non-finite value")
            rows.append((t, acc, psi, ties, floats))
    if not rows:
        raise TraceFormatError(path, 2, "trace has no data rows")
    floats = np.array([r[4] for r in rows])
    n = len(rows)
    return TraceData(
        t=np.array([r[0] for r in rows], dtype=np.int64),
        xs=floats[:, :d],
        accepted=np.array([r[1] for r in rows], dtype=bool),
        psis=np.array([r[2] for r in rows], dtype=np.int64),
        mus=floats[:, d:2 * d],
        sigmas=floats[:, 2 * d:].reshape(n, d, d),
        tie_counts=np.array([r[3] for r in rows], dtype=np.int64),
    )


def reference_mean(seed: SeedDensity) -> np.ndarray:
    """Seed mean: exact for a Gaussian seed, else from 2e5 draws at a fixed RNG seed."""
    if isinstance(seed, GaussianSeedDensity):
        return np.asarray(seed.mean, dtype=float)
    return seed.sample(np.random.default_rng(0), 200_000).mean(axis=0)


def aligned_samples(samples, group: PermutationGroup, final_mu, final_sigma, seed: SeedDensity):
    """Permute every sample by the element that maps the final mu closest to the seed mean."""
    from .relabel import AdaptiveState

    k = align_to_reference(group, AdaptiveState(final_mu, final_sigma), reference_mean(seed))
    return np.asarray(samples)[:, group.index_stack[k]], k


def marginal_stats(samples, max_lag: int):
    """Moments and the integrated ACT of every coordinate."""
    est = moments(samples)
    lag = min(max_lag, samples.shape[0] - 1)
    acts = [integrated_act(acf(samples[:, i], lag)) for i in range(samples.shape[1])]
    return est, acts


def ks_per_coord(samples, seed: SeedDensity) -> list[float]:
    return [ks_statistic(samples[:, i], seed.marginal_cdf(i)) for i in range(samples.shape[1])]


def moment_lines(est, acts, ks=None) -> list[tuple[str, str]]:
    d = est.mean.size
    out = [(f"mean_{i}", _fmt(est.mean[i])) for i in range(d)]
    out += [(f"cov_{i}_{j}", _fmt(est.cov[i, j])) for i in range(d) for j in range(d)]
    out += [(f"act_{i}", _fmt(a)) for i, a in enumerate(acts)]
    if ks is not None:
        out += [(f"ks_{i}", _fmt(k)) for i, k in enumerate(ks)]
    return out


def write_keyvalue(path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in pairs:
            fh.write(f"{k} = {v}\n")


def read_keyvalue(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out
