"""Experiment configuration files.

The format is flat ``key = value`` lines under ``[section]`` headers.  ``#``
starts a comment anywhere; ``;`` only at the start of a line.  Numeric arrays
are comma-separated and matrices are row-major.  Hand-rolled rather than
configparser so every key keeps its line number for error messages.

Sections and keys::

    [target]
    kind = gaussian | twisted | mixture | benchmark
    mean = 0, 2                      # gaussian / twisted
    cov = 16, -0.975, -0.975, 1      # row-major d*d
    bend = 0.1                       # twisted only
    weights = 0.5, 0.5               # mixture only
    means = ...                      # mixture: k*d values
    covs = ...                       # mixture: k*d*d values
    group = full_symmetric | trivial | 1,0 | 2,0,1   (generators separated by '|')
    support_radius = 30              # optional

    [sampler]
    name = amor | am | am_ordered | celeux | reference_rwm
    T, burn_in, x0, c, alpha, gamma_star, beta, delta0, delta_halving,
    seed, pd_floor, tie_tol, mu0, sigma0, proposal_diag

    [output]
    dir = out
    emit = trace, summary, histograms, acf
    max_lag = 100
    bins = 60
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .permgroup import GroupError, PermutationGroup, parse_group_spec
from .relabel import AdaptiveState
from .samplers import SAMPLERS, SamplerConfig
from .targets import (GaussianSeed, GaussianSeedDensity, MixtureSeedDensity, SymmetrizedTarget,
                      TargetError, TwistedSeedDensity, make_benchmark_target)

EMIT_CHOICES = ("trace", "summary", "histograms", "acf")

_SECTION = re.compile(r"^\[\s*([A-Za-z_][\w.-]*)\s*\]$")
_KEYVAL = re.compile(r"^([A-Za-z_][\w.-]*)\s*=\s*(.*)$")


class ConfigFileError(ValueError):
    def __init__(self, path, line, message):
        self.path, self.line = str(path), line
        super().__init__(f"{path}:{line}: {message}")


@dataclass
class RawConfig:
    """Parsed sections with the line number of every key (for error messages)."""

    path: str
    sections: dict[str, dict[str, str]] = field(default_factory=dict)
    lines: dict[tuple[str, str], int] = field(default_factory=dict)
    section_lines: dict[str, int] = field(default_factory=dict)
    n_lines: int = 0

    def error(self, section, key, message):
        line = self.lines.get((section, key), self.section_lines.get(section, self.n_lines))
        return ConfigFileError(self.path, line, message)

    def require_section(self, name):
        if name not in self.sections:
            raise ConfigFileError(self.path, max(self.n_lines, 1), f"missing required section [{name}]")
        return self.sections[name]

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def echo(self) -> list[tuple[str, str]]:
        return [(f"{s}.{k}", v) for s, kv in self.sections.items() for k, v in kv.items()]


def parse_text(text: str, path: str = "<config>") -> RawConfig:
    raw = RawConfig(path)
    current = None
    lines = text.splitlines()
    raw.n_lines = len(lines)
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped or stripped.startswith(";"):
            continue
        m = _SECTION.match(stripped)
        if m:
            current = m.group(1).lower()
            if current in raw.sections:
                raise ConfigFileError(path, lineno, f"duplicate section [{current}]")
            raw.sections[current] = {}
            raw.section_lines[current] = lineno
            continue
        m = _KEYVAL.match(stripped)
        if not m:
            raise ConfigFileError(path, lineno, f"cannot parse line: {line.strip()!r}")
        if current is None:
            raise ConfigFileError(path, lineno, "key outside of any [section]")
        key = m.group(1).lower()
        if key in raw.sections[current]:
            raise ConfigFileError(path, lineno, f"duplicate key {key!r} in [{current}]")
        raw.sections[current][key] = m.group(2).strip()
        raw.lines[(current, key)] = lineno
    return raw


def read_config(path) -> RawConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigFileError(path, 0, f"cannot read config: {exc.strerror}") from exc
    return parse_text(text, str(path))


# --- typed accessors ---------------------------------------------------------

def _floats(raw, section, key, default=None, size=None):
    value = raw.get(section, key)
    if value is None:
        if default is None:
            raise raw.error(section, key, f"missing required key {key!r} in [{section}]")
        return np.asarray(default, dtype=float)
    try:
        arr = np.array([float(v) for v in value.split(",")], dtype=float)
    except ValueError:
        raise raw.error(section, key, f"{key} must be a comma-separated list of numbers") from None
    if not np.all(np.isfinite(arr)):
        raise raw.error(section, key, f"{key} must be finite")
    if size is not None and arr.size != size:
        raise raw.error(section, key, f"{key} must have {size} values, got {arr.size}")
    return arr


def _float(raw, section, key, default=None):
    value = raw.get(section, key)
    if value is None:
        if default is None:
            raise raw.error(section, key, f"missing required key {key!r} in [{section}]")
        return default
    try:
        out = float(value)
    except ValueError:
        raise raw.error(section, key, f"{key} must be a number") from None
    if not np.isfinite(out):
        raise raw.error(section, key, f"{key} must be finite")
    return out


def _int(raw, section, key, default=None):
    value = raw.get(section, key)
    if value is None:
        if default is None:
            raise raw.error(section, key, f"missing required key {key!r} in [{section}]")
        return default
    try:
        return int(value)
    except ValueError:
        raise raw.error(section, key, f"{key} must be an integer") from None


def _bool(raw, section, key, default):
    value = raw.get(section, key)
    if value is None:
        return default
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise raw.error(section, key, f"{key} must be a boolean")


def parse_generators(value: str) -> list[tuple[int, ...]]:
    return [tuple(int(i) for i in part.split(",")) for part in value.split("|") if part.strip()]


def build_target(raw: RawConfig) -> SymmetrizedTarget:
    raw.require_section("target")
    kind = (raw.get("target", "kind") or "").lower()
    if not kind:
        raise raw.error("target", "kind", "missing required key 'kind' in [target]")
    try:
        if kind == "benchmark":
            target = make_benchmark_target()
            seed = target.seed
        elif kind in ("gaussian", "twisted"):
            mean = _floats(raw, "target", "mean")
            d = mean.size
            cov = _floats(raw, "target", "cov", size=d * d).reshape(d, d)
            g = GaussianSeed(mean, cov)
            seed = GaussianSeedDensity(g) if kind == "gaussian" else TwistedSeedDensity(
                g, _float(raw, "target", "bend"))
        elif kind == "mixture":
            weights = _floats(raw, "target", "weights")
            k = weights.size
            means = _floats(raw, "target", "means")
            if means.size % k:
                raise raw.error("target", "means", "means must hold k*d values")
            d = means.size // k
            covs = _floats(raw, "target", "covs", size=k * d * d).reshape(k, d, d)
            comps = [GaussianSeed(means[i * d:(i + 1) * d], covs[i]) for i in range(k)]
            seed = MixtureSeedDensity(weights, comps)
        else:
            raise raw.error("target", "kind", f"unknown target kind {kind!r}")
    except (TargetError, GroupError) as exc:
        raise raw.error("target", "kind", str(exc)) from None

    group_spec = raw.get("target", "group", "full_symmetric")
    try:
        spec = group_spec if group_spec.strip().isidentifier() else parse_generators(group_spec)
        group = parse_group_spec(spec, seed.dim)
    except (GroupError, ValueError) as exc:
        raise raw.error("target", "group", f"bad group spec: {exc}") from None
    radius = raw.get("target", "support_radius")
    try:
        return SymmetrizedTarget(seed, group, None if radius is None else _float(raw, "target", "support_radius"))
    except TargetError as exc:
        raise raw.error("target", "support_radius", str(exc)) from None


@dataclass
class ExperimentConfig:
    raw: RawConfig
    target: SymmetrizedTarget
    sampler: str
    sampler_config: SamplerConfig
    proposal_diag: np.ndarray | None
    output_dir: Path
    emit: tuple[str, ...]
    max_lag: int
    bins: int

    @property
    def group(self) -> PermutationGroup:
        return self.target.group


def build_experiment(raw: RawConfig, seed_override: int | None = None,
                     out_override: str | None = None) -> ExperimentConfig:
    target = build_target(raw)
    raw.require_section("sampler")
    d = target.dim
    name = (raw.get("sampler", "name") or "amor").lower()
    if name not in SAMPLERS:
        raise raw.error("sampler", "name", f"sampler must be one of {', '.join(SAMPLERS)}")
    theta0 = None
    if raw.get("sampler", "mu0") is not None or raw.get("sampler", "sigma0") is not None:
        mu0 = _floats(raw, "sampler", "mu0", size=d)
        sigma0 = _floats(raw, "sampler", "sigma0", size=d * d).reshape(d, d)
        theta0 = AdaptiveState(mu0, sigma0)
    seed = seed_override if seed_override is not None else _int(raw, "sampler", "seed", 0)
    cfg = SamplerConfig(
        T=_int(raw, "sampler", "t"),
        x0=_floats(raw, "sampler", "x0", size=d),
        c=_float(raw, "sampler", "c", 2.38 ** 2 / d),
        alpha=_float(raw, "sampler", "alpha", 0.0),
        gamma_star=_float(raw, "sampler", "gamma_star", 1.0),
        beta=_float(raw, "sampler", "beta", 0.7),
        delta0=_float(raw, "sampler", "delta0", 1e-2),
        delta_halving=_bool(raw, "sampler", "delta_halving", True),
        burn_in=_int(raw, "sampler", "burn_in", 0),
        theta0=theta0,
        seed=seed,
        pd_floor=_float(raw, "sampler", "pd_floor", 1e-10),
        tie_tol=_float(raw, "sampler", "tie_tol", 0.0),
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigFileError(raw.path, raw.section_lines.get("sampler", 0), str(exc)) from None
    proposal_diag = None
    if raw.get("sampler", "proposal_diag") is not None:
        proposal_diag = _floats(raw, "sampler", "proposal_diag", size=d)

    out_dir = out_override or raw.get("output", "dir", "out")
    emit = tuple(e.strip().lower() for e in raw.get("output", "emit", "trace, summary").split(",") if e.strip())
    bad = [e for e in emit if e not in EMIT_CHOICES]
    if bad:
        raise raw.error("output", "emit", f"unknown emit option(s): {', '.join(bad)}")
    return ExperimentConfig(raw, target, name, cfg, proposal_diag, Path(out_dir), emit,
                            _int(raw, "output", "max_lag", 100), _int(raw, "output", "bins", 60))
