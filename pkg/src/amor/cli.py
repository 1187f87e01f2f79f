"""``amor`` command line: run, verify, diagnose.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure
(numerical breakdown in a run, malformed trace, degenerate diagnostics).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import acf, marginal_histogram
from .config import ConfigFileError, build_experiment, build_target, read_config
from .relabel import InvalidStateError
from .samplers import ConfigError, SamplerError, run_sampler
from .traceio import (TraceFormatError, aligned_samples, ks_per_coord, marginal_stats, moment_lines,
                      read_trace, write_keyvalue, write_trace)
from .verify import DEFAULT_SEED, SUITES

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _err(msg: str) -> None:
    print(f"amor: error: {msg}", file=sys.stderr)


def _threads() -> int:
    """AMOR_THREADS caps internal parallelism; every code path is single-threaded today."""
    value = os.environ.get("AMOR_THREADS", "1")
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"AMOR_THREADS must be a positive integer, got {value!r}") from None
    if n < 1:
        raise ConfigError(f"AMOR_THREADS must be a positive integer, got {value!r}")
    return n


def _write_acf(path, xs, max_lag):
    cols = [acf(xs[:, i], max_lag) for i in range(xs.shape[1])]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("lag," + ",".join(f"acf_{i}" for i in range(xs.shape[1])) + "\n")
        for k in range(max_lag + 1):
            fh.write(f"{k}," + ",".join(repr(float(c[k])) for c in cols) + "\n")


def _write_histograms(out_dir: Path, xs, bins, seed=None):
    """One CSV per coordinate; with a seed, an expected-count column from its marginal CDF."""
    n = xs.shape[0]
    for i in range(xs.shape[1]):
        h = marginal_histogram(xs, i, bins)
        header = "bin_lo,bin_hi,count"
        expected = None
        if seed is not None:
            cdf = seed.marginal_cdf(i)(h.edges)
            expected = n * np.diff(cdf)
            header += ",reference_expected_count"
        with open(out_dir / f"hist_{i}.csv", "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for b in range(bins):
                row = f"{float(h.edges[b])!r},{float(h.edges[b + 1])!r},{int(h.counts[b])}"
                if expected is not None:
                    row += f",{float(expected[b])!r}"
                fh.write(row + "\n")


# --- commands ----------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        _threads()
        exp = build_experiment(read_config(args.config), args.seed, args.out)
    except (ConfigFileError, ConfigError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    out_dir = exp.output_dir
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _err(f"cannot create output directory {out_dir}: {exc.strerror}")
        return EXIT_CONFIG

    start = time.perf_counter()
    try:
        # overflow surfaces as a named SamplerError below, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            output = run_sampler(exp.sampler, exp.sampler_config, exp.target, exp.proposal_diag)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except (SamplerError, InvalidStateError, FloatingPointError) as exc:
        _err(f"run failed: {exc}")
        return EXIT_RUNTIME
    elapsed = time.perf_counter() - start

    try:
        if "trace" in exp.emit:
            write_trace(output, out_dir / "trace.csv")
        post = output.post_burn_in()
        if "summary" in exp.emit:
            est, acts = marginal_stats(post, exp.max_lag)
            aligned, k = aligned_samples(post, exp.group, output.mus[-1], output.sigmas[-1], exp.target.seed)
            cfg = output.config_echo
            pairs = [("version", __version__), ("sampler", exp.sampler), ("seed", str(cfg.seed)),
                     ("T", str(cfg.T)), ("burn_in", str(cfg.burn_in)), ("n_post_burn_in", str(post.shape[0])),
                     ("acceptance_rate", repr(output.acceptance_rate)),
                     ("total_projections", str(output.total_projections)),
                     ("last_projection", str(output.last_projection()))]
            pairs += moment_lines(est, acts, ks_per_coord(aligned, exp.target.seed))
            pairs += [("aligned_perm", " ".join(map(str, exp.group[k].image))),
                      ("wall_clock_seconds", f"{elapsed:.3f}")]
            echo = dict(exp.raw.echo())
            echo["sampler.seed"] = str(cfg.seed)
            pairs += [(f"config.{k2}", v) for k2, v in echo.items()]
            write_keyvalue(out_dir / "summary.txt", pairs)
        if "acf" in exp.emit:
            _write_acf(out_dir / "acf.csv", post, min(exp.max_lag, post.shape[0] - 1))
        if "histograms" in exp.emit:
            _write_histograms(out_dir, post, exp.bins, exp.target.seed)
    except ValueError as exc:
        _err(f"step 'summary': {exc}")
        return EXIT_RUNTIME
    except OSError as exc:
        _err(f"cannot write output: {exc}")
        return EXIT_RUNTIME
    print(f"wrote {exp.sampler} run (T={output.T}, acceptance {output.acceptance_rate:.3f}) to {out_dir}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        _threads()
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if args.suite != "all" and args.suite not in SUITES:
        _err(f"unknown suite {args.suite!r}; choose from {', '.join([*SUITES, 'all'])}")
        return EXIT_CONFIG
    names = list(SUITES) if args.suite == "all" else [args.suite]
    seed = DEFAULT_SEED if args.seed is None else args.seed
    ok = True
    for name in names:
        start = time.perf_counter()
        results = SUITES[name](seed)
        print(f"[{name}] seed={seed} ({time.perf_counter() - start:.1f}s)")
        for r in results:
            print("  " + r.line())
            ok &= r.passed
    print("all checks passed" if ok else "some checks FAILED")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_diagnose(args) -> int:
    seed_density = None
    group = None
    if args.reference is not None:
        try:
            target = build_target(read_config(args.reference))
        except ConfigFileError as exc:
            _err(str(exc))
            return EXIT_CONFIG
        seed_density, group = target.seed, target.group
    try:
        trace = read_trace(args.trace)
    except OSError as exc:
        _err(f"cannot read trace: {exc}")
        return EXIT_RUNTIME
    except TraceFormatError as exc:
        _err(f"malformed trace: {exc}")
        return EXIT_RUNTIME
    if group is not None and group.dim != trace.dim:
        _err("reference target dimension does not match the trace")
        return EXIT_CONFIG
    if not 0 <= args.burn_in < trace.xs.shape[0]:
        _err("--burn-in must be smaller than the number of trace rows")
        return EXIT_CONFIG
    out_dir = Path(args.out) if args.out else Path(args.trace).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    post = trace.xs[args.burn_in:]
    try:
        if args.max_lag >= post.shape[0]:
            raise ValueError(f"--max-lag {args.max_lag} needs more than {post.shape[0]} samples")
        _write_acf(out_dir / "acf.csv", post, args.max_lag)
        _write_histograms(out_dir, post, args.bins, seed_density)
        est, acts = marginal_stats(post, args.max_lag)
        ks = None
        if seed_density is not None:
            aligned, _ = aligned_samples(post, group, trace.mus[-1], trace.sigmas[-1], seed_density)
            ks = ks_per_coord(aligned, seed_density)
    except ValueError as exc:
        _err(f"diagnostics failed: {exc}")
        return EXIT_RUNTIME
    pairs = [("n", str(post.shape[0])), ("burn_in", str(args.burn_in))] + moment_lines(est, acts, ks)
    write_keyvalue(out_dir / "moments.txt", pairs)
    with open(out_dir / "marginals.csv", "w", encoding="utf-8") as fh:
        fh.write("coord,mean,sd,act" + (",ks" if ks is not None else "") + "\n")
        for i in range(trace.dim):
            row = f"{i},{float(est.mean[i])!r},{float(np.sqrt(est.cov[i, i]))!r},{acts[i]!r}"
            if ks is not None:
                row += f",{ks[i]!r}"
            fh.write(row + "\n")
    print(f"wrote diagnostics for {post.shape[0]} samples to {out_dir}")
    return EXIT_OK


# --- entry point -------------------------------------------------------------

def _seed(value: str) -> int:
    n = int(value)
    if not 0 <= n < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return n


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amor", description="Adaptive Metropolis with online relabeling.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sampler from a config file")
    run.add_argument("--config", required=True, help="experiment config file")
    run.add_argument("--seed", type=_seed, help="override [sampler] seed")
    run.add_argument("--out", help="override [output] dir")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run the property suites")
    ver.add_argument("--suite", default="all", help=f"one of {', '.join([*SUITES, 'all'])}")
    ver.add_argument("--seed", type=_seed, help=f"RNG seed (default {DEFAULT_SEED})")
    ver.set_defaults(func=cmd_verify)

    dia = sub.add_parser("diagnose", help="ACF, histograms and moments from a trace file")
    dia.add_argument("trace", help="trace CSV written by 'amor run'")
    dia.add_argument("--max-lag", type=_positive, default=100)
    dia.add_argument("--bins", type=_positive, default=60)
    dia.add_argument("--burn-in", type=int, default=0, help="rows to drop before computing statistics")
    dia.add_argument("--reference", help="config file whose [target] seed gives reference marginals")
    dia.add_argument("--out", help="output directory (default: next to the trace)")
    dia.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage problems are configuration errors here
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
