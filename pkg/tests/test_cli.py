import time
from pathlib import Path

import numpy as np
import pytest

from amor.cli import main
from amor.config import ConfigFileError, build_experiment, parse_text, read_config
from amor.samplers import run_sampler
from amor.traceio import read_keyvalue, read_trace

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

SMALL = """\
# short AMOR run
[target]
kind = benchmark

[sampler]
name = {sampler}
T = {T}
burn_in = {burn_in}
x0 = 0, 2
alpha = 1
seed = 11

[output]
dir = {out}
emit = trace, summary, histograms, acf
max_lag = 20
bins = 15
"""


def write_config(tmp_path, name="run.ini", sampler="amor", T=10, burn_in=0, out=None, text=None):
    path = tmp_path / name
    out = out or tmp_path / "out"
    path.write_text(text if text is not None else SMALL.format(sampler=sampler, T=T, burn_in=burn_in, out=out))
    return path


def data_rows(path):
    return path.read_text().splitlines()[1:]


# --- run ---------------------------------------------------------------------

def test_run_writes_one_row_per_iteration(tmp_path):
    cfg = write_config(tmp_path, T=10)
    assert main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    assert len(data_rows(out / "trace.csv")) == 10
    header = (out / "trace.csv").read_text().splitlines()[0]
    assert header == "t,x_0,x_1,accepted,psi,mu_0,mu_1,sigma_0_0,sigma_0_1,sigma_1_0,sigma_1_1,tie_count"
    assert {"summary.txt", "acf.csv", "hist_0.csv", "hist_1.csv"} <= {p.name for p in out.iterdir()}


def test_missing_target_section_is_a_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[sampler]\nT = 10\nx0 = 0, 2\n")
    assert main(["run", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert f"{cfg}:3:" in err and "[target]" in err


def test_bad_value_reports_its_line(tmp_path, capsys):
    text = SMALL.format(sampler="amor", T="ten", burn_in=0, out=tmp_path / "o")
    cfg = write_config(tmp_path, text=text)
    assert main(["run", "--config", str(cfg)]) == 1
    assert f"{cfg}:7:" in capsys.readouterr().err


def test_unknown_sampler_is_a_config_error(tmp_path):
    assert main(["run", "--config", str(write_config(tmp_path, sampler="gibbs"))]) == 1


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 1


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, T=300)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path, T=50)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "12"])
    assert (tmp_path / "a" / "trace.csv").read_bytes() != (tmp_path / "b" / "trace.csv").read_bytes()
    summary = read_keyvalue(tmp_path / "b" / "summary.txt")
    assert summary["seed"] == "12" and summary["config.sampler.seed"] == "12"


def test_config_echo_reproduces_the_run(tmp_path):
    cfg = write_config(tmp_path, T=200, burn_in=50)
    assert main(["run", "--config", str(cfg), "--seed", "99", "--out", str(tmp_path / "first")]) == 0
    summary = read_keyvalue(tmp_path / "first" / "summary.txt")
    sections = {}
    for key, value in summary.items():
        if key.startswith("config."):
            section, name = key[len("config."):].split(".", 1)
            sections.setdefault(section, []).append(f"{name} = {value}")
    rebuilt = "\n".join(f"[{s}]\n" + "\n".join(lines) for s, lines in sections.items())
    cfg2 = write_config(tmp_path, name="echo.ini", text=rebuilt)
    assert main(["run", "--config", str(cfg2), "--out", str(tmp_path / "second")]) == 0
    assert (tmp_path / "first" / "trace.csv").read_bytes() == (tmp_path / "second" / "trace.csv").read_bytes()


def test_summary_labels_every_number(tmp_path):
    cfg = write_config(tmp_path, T=200, burn_in=50)
    main(["run", "--config", str(cfg)])
    s = read_keyvalue(tmp_path / "out" / "summary.txt")
    for key in ("version", "sampler", "seed", "T", "burn_in", "n_post_burn_in", "acceptance_rate",
                "total_projections", "last_projection", "mean_0", "cov_0_1", "act_1", "ks_0", "ks_1",
                "aligned_perm", "wall_clock_seconds"):
        assert key in s, key
    assert s["n_post_burn_in"] == "150"
    assert 0.0 <= float(s["acceptance_rate"]) <= 1.0


def test_runtime_failure_names_step_and_iteration(tmp_path, capsys):
    text = SMALL.format(sampler="amor", T=50, burn_in=0, out=tmp_path / "o").replace("alpha = 1", "c = 1e308")
    assert main(["run", "--config", str(write_config(tmp_path, text=text))]) == 2
    err = capsys.readouterr().err
    assert "step 'acceptance'" in err and "iteration" in err


def test_invalid_thread_count_is_a_config_error(tmp_path, monkeypatch):
    monkeypatch.setenv("AMOR_THREADS", "zero")
    assert main(["run", "--config", str(write_config(tmp_path))]) == 1
    monkeypatch.setenv("AMOR_THREADS", "0")
    assert main(["verify", "--suite", "balance"]) == 1


@pytest.mark.parametrize("sampler", ["am", "am_ordered", "celeux", "reference_rwm"])
def test_every_sampler_runs_from_config(tmp_path, sampler):
    cfg = write_config(tmp_path, sampler=sampler, T=100, burn_in=10)
    assert main(["run", "--config", str(cfg)]) == 0
    assert read_keyvalue(tmp_path / "out" / "summary.txt")["sampler"] == sampler


def test_shipped_configs_parse():
    paths = sorted(CONFIG_DIR.glob("*.ini"))
    assert paths
    for path in paths:
        exp = build_experiment(read_config(path))
        assert exp.sampler_config.T > exp.sampler_config.burn_in


# --- config parsing ------------------------------------------------------------

def test_mixture_and_generator_config():
    raw = parse_text("""
[target]
kind = mixture
weights = 0.3, 0.7
means = 0, 1, 2, 0, 1, 2
covs = 1,0,0, 0,1,0, 0,0,1, 2,0,0, 0,2,0, 0,0,2
group = 1,2,0
[sampler]
T = 5
x0 = 0, 1, 2
""", "mix.ini")
    exp = build_experiment(raw)
    assert len(exp.group) == 3
    assert exp.target.dim == 3
    np.testing.assert_allclose(exp.target.seed.weights, [0.3, 0.7])


def test_two_generators_give_symmetric_group():
    raw = parse_text("[target]\nkind = gaussian\nmean = 0,1,2\ncov = 1,0,0,0,1,0,0,0,1\n"
                     "group = 1,0,2 | 1,2,0\n[sampler]\nT = 5\nx0 = 0,1,2\n", "g.ini")
    assert len(build_experiment(raw).group) == 6


def test_twisted_target_from_config():
    raw = parse_text("[target]\nkind = twisted\nmean = 0, 2\ncov = 16, -0.975, -0.975, 1\nbend = 0.1\n"
                     "[sampler]\nT = 5\nx0 = 0, 2\n", "tw.ini")
    assert build_experiment(raw).target.log_density([0.0, 2.0]) < 0


def test_parser_errors_carry_line_numbers():
    with pytest.raises(ConfigFileError, match=r"x\.ini:3:"):
        parse_text("[target]\nkind = benchmark\n[target]\n", "x.ini")
    with pytest.raises(ConfigFileError, match=r"x\.ini:3:"):
        parse_text("[target]\nkind = benchmark\nkind = gaussian\n", "x.ini")
    with pytest.raises(ConfigFileError, match=r"x\.ini:2:"):
        parse_text("[target]\nthis line has no equals sign\n", "x.ini")
    with pytest.raises(ConfigFileError, match=r"x\.ini:1:"):
        parse_text("kind = benchmark\n", "x.ini")
    raw = parse_text("[target]\nkind = benchmark\n[sampler]\nT = 5\nx0 = 0, nan\n", "x.ini")
    with pytest.raises(ConfigFileError, match=r"x\.ini:5:"):
        build_experiment(raw)


def test_comments_are_ignored():
    raw = parse_text("; header\n[target]  # trailing\nkind = benchmark  # the default\n"
                     "[sampler]\nT = 5 # five\nx0 = 0, 2\n", "c.ini")
    assert build_experiment(raw).sampler_config.T == 5


# --- verify --------------------------------------------------------------------

def test_unknown_suite(capsys):
    assert main(["verify", "--suite", "nonsense"]) == 1
    assert "unknown suite" in capsys.readouterr().err


def test_balance_suite_passes(capsys):
    assert main(["verify", "--suite", "balance"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "1e-10" in out


def test_partition_suite_reports_fraction(capsys):
    assert main(["verify", "--suite", "partition", "--seed", "5"]) == 0
    assert "PASS" in capsys.readouterr().out


@pytest.mark.slow
def test_all_suites_pass_within_budget():
    start = time.perf_counter()
    assert main(["verify", "--suite", "all"]) == 0
    assert time.perf_counter() - start < 120.0


# --- diagnose ------------------------------------------------------------------

@pytest.fixture
def amor_trace(tmp_path):
    cfg = write_config(tmp_path, T=2000, burn_in=500)
    assert main(["run", "--config", str(cfg)]) == 0
    return tmp_path / "out" / "trace.csv", cfg


def test_diagnose_acf_has_max_lag_plus_one_rows(amor_trace, tmp_path):
    trace, _ = amor_trace
    assert main(["diagnose", str(trace), "--max-lag", "30", "--out", str(tmp_path / "d")]) == 0
    assert len(data_rows(tmp_path / "d" / "acf.csv")) == 31
    assert len(data_rows(tmp_path / "d" / "hist_0.csv")) == 60


def test_diagnose_default_lags_and_bins(amor_trace, tmp_path):
    trace, _ = amor_trace
    assert main(["diagnose", str(trace), "--out", str(tmp_path / "d")]) == 0
    assert len(data_rows(tmp_path / "d" / "acf.csv")) == 101
    assert (tmp_path / "d" / "hist_0.csv").read_text().splitlines()[0] == "bin_lo,bin_hi,count"


def test_diagnose_reference_adds_ks_column(amor_trace, tmp_path):
    trace, cfg = amor_trace
    assert main(["diagnose", str(trace), "--reference", str(cfg), "--out", str(tmp_path / "d")]) == 0
    rows = (tmp_path / "d" / "marginals.csv").read_text().splitlines()
    assert rows[0] == "coord,mean,sd,act,ks"
    assert len(rows) == 3
    assert all(0.0 <= float(r.split(",")[-1]) <= 1.0 for r in rows[1:])
    assert "reference_expected_count" in (tmp_path / "d" / "hist_1.csv").read_text().splitlines()[0]


def test_diagnose_reproduces_summary_moments_exactly(amor_trace, tmp_path):
    trace, cfg = amor_trace
    summary = read_keyvalue(trace.parent / "summary.txt")
    assert main(["diagnose", str(trace), "--burn-in", summary["burn_in"], "--max-lag", "20",
                 "--reference", str(cfg), "--out", str(tmp_path / "d")]) == 0
    moments = read_keyvalue(tmp_path / "d" / "moments.txt")
    for key, value in moments.items():
        if key.startswith(("mean_", "cov_", "act_", "ks_")):
            assert value == summary[key], key


def test_trace_round_trips_bit_exactly(amor_trace):
    trace, cfg = amor_trace
    exp = build_experiment(read_config(cfg))
    direct = run_sampler(exp.sampler, exp.sampler_config, exp.target)
    data = read_trace(trace)
    np.testing.assert_array_equal(data.xs, direct.xs)
    np.testing.assert_array_equal(data.mus, direct.mus)
    np.testing.assert_array_equal(data.sigmas, direct.sigmas)


def test_constant_trace_fails_in_acf(tmp_path, capsys):
    rows = ["t,x_0,x_1,accepted,psi,mu_0,mu_1,sigma_0_0,sigma_0_1,sigma_1_0,sigma_1_1,tie_count"]
    rows += [f"{t},1.0,2.0,0,0,1.0,2.0,1.0,0.0,0.0,1.0,1" for t in range(1, 301)]
    path = tmp_path / "const.csv"
    path.write_text("\n".join(rows) + "\n")
    assert main(["diagnose", str(path), "--max-lag", "10"]) == 2
    assert "zero variance" in capsys.readouterr().err


def test_malformed_row_reports_line(amor_trace, tmp_path, capsys):
    trace, _ = amor_trace
    lines = trace.read_text().splitlines()
    lines[6] = lines[6].replace(",", ",oops,", 1)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["diagnose", str(bad)]) == 2
    assert "line 7" in capsys.readouterr().err


def test_missing_trace_is_runtime_error(tmp_path):
    assert main(["diagnose", str(tmp_path / "none.csv")]) == 2


def test_usage_errors_exit_one():
    assert main([]) == 1
    assert main(["diagnose", "x.csv", "--max-lag", "0"]) == 1
