import functools
import time

import numpy as np
import pytest

from amor.samplers import SamplerConfig, run_am, run_am_ordered, run_amor, run_celeux, run_reference_rwm
from amor.targets import make_benchmark_target

RUN_SEED = 2026
BENCHMARK_T, BENCHMARK_BURN_IN = 20_000, 4_000

ACCEPTANCE_LINES: list[str] = []
# wall-clock seconds of each cached benchmark_run, keyed like its arguments
RUN_SECONDS: dict[tuple[str, float], float] = {}


def benchmark_config(alpha=1.0, seed=RUN_SEED, T=BENCHMARK_T, burn_in=BENCHMARK_BURN_IN, **kw):
    return SamplerConfig(T=T, x0=np.array([0.0, 2.0]), alpha=alpha, burn_in=burn_in, seed=seed, **kw)


@functools.lru_cache(maxsize=None)
def benchmark_run(sampler: str, alpha: float = 1.0):
    """Full-length benchmark-target runs, shared across test modules."""
    target = make_benchmark_target()
    cfg = benchmark_config(alpha)
    runners = {
        "amor": lambda: run_amor(cfg, target),
        "am": lambda: run_am(cfg, target),
        "am_ordered": lambda: run_am_ordered(cfg, target),
        "celeux": lambda: run_celeux(cfg, target),
        "reference_rwm": lambda: run_reference_rwm(target.seed, cfg),
    }
    start = time.perf_counter()
    out = runners[sampler]()
    RUN_SECONDS[(sampler, alpha)] = time.perf_counter() - start
    return out


@pytest.fixture(scope="session")
def benchmark_target():
    return make_benchmark_target()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
