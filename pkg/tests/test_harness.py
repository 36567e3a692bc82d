import json

import pytest

from fsmcmc.harness.cli import main
from fsmcmc.harness.config import ConfigError, load_config, validate_config
from fsmcmc.harness.experiments import (
    CSV_HEADER,
    SweepRow,
    run_experiment,
    write_result,
    write_rows,
)
from fsmcmc.harness.report import render_figures, render_table

GOOD = {
    "experiment": "pcn_uniform_gap",
    "seed": 99,
    "spectrum": {"rule": "power_law", "q": 1.0},
    "target": {"name": "zero"},
    "m_list": [2, 4],
    "delta": 0.18,
    "n_steps": 50_000,
}


def cfg(**overrides):
    raw = {**GOOD, **overrides}
    return validate_config(raw)


def write_json(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


# --- config validation -----------------------------------------------------


def test_validate_good_config():
    config = cfg()
    assert config.experiment == "pcn_uniform_gap"
    assert config.delta_for(8) == 0.18


def test_validate_field_paths():
    with pytest.raises(ConfigError) as err:
        validate_config({**GOOD, "m_list": []})
    assert err.value.field == "m_list"
    with pytest.raises(ConfigError) as err:
        validate_config({**GOOD, "m_list": [4, 2]})
    assert err.value.field == "m_list"
    with pytest.raises(ConfigError) as err:
        validate_config({k: v for k, v in GOOD.items() if k != "seed"})
    assert err.value.field == "seed"
    with pytest.raises(ConfigError) as err:
        validate_config({**GOOD, "typo_key": 1})
    assert err.value.field == "typo_key"
    with pytest.raises(ConfigError) as err:
        validate_config({**GOOD, "scaling": {"s": 0.1, "a": 0.0}})
    assert err.value.field == "delta"
    with pytest.raises(ConfigError) as err:
        validate_config({**GOOD, "n_steps": 100})
    assert err.value.field == "n_steps"
    with pytest.raises(ConfigError) as err:
        validate_config({**GOOD, "spectrum": {"rule": "power_law", "q": -1}})
    assert err.value.field == "spectrum.q"


def test_scaling_delta_for():
    config = cfg(delta=None, scaling={"s": 0.5, "a": 1.0},
                 experiment="conductance_sweep", n_steps=0)
    assert config.delta_for(4) == pytest.approx(0.125)
    assert config.scaling_exponent() == 1.0


def test_load_config_json_and_toml(tmp_path):
    jpath = write_json(tmp_path, "c.json", GOOD)
    assert load_config(jpath).seed == 99
    tpath = tmp_path / "c.toml"
    tpath.write_text(
        'experiment = "pcn_uniform_gap"\nseed = 7\nm_list = [2, 4]\ndelta = 0.18\n'
        'n_steps = 50000\n[spectrum]\nrule = "power_law"\nq = 1.0\n[target]\nname = "zero"\n'
    )
    assert load_config(tpath).seed == 7
    assert load_config(jpath, seed_override=123).seed == 123
    with pytest.raises(ConfigError):
        load_config(write_json(tmp_path, "bad.yaml", GOOD))
    bad = tmp_path / "broken.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_bundled_configs_all_validate():
    from fsmcmc.harness.cli import bundled_configs

    names = set()
    for name, path in bundled_configs().items():
        config = load_config(path)
        names.add(config.experiment)
    assert names == {
        "pcn_uniform_gap",
        "rwm_decay",
        "harris_verify",
        "ergodic_suite",
        "conductance_sweep",
    }


# --- sweep rows ------------------------------------------------------------


def test_csv_header_and_degenerate_marker(tmp_path):
    rows = [
        SweepRow(4, 0.18, None, "acf_linear_functional", 0.2, False, 0.19, 0.21, 100, 7),
        SweepRow(8, 0.1, 1.0, "iact_acf", float("nan"), False, None, None, 100, 7),
    ]
    path = tmp_path / "sweep.csv"
    write_rows(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1].split(",")[3] == "acf_linear_functional"
    assert lines[2].split(",")[4] == "degenerate"
    assert lines[1].split(",")[5] == "false"


# --- experiment drivers ----------------------------------------------------


def test_pcn_uniform_gap_small():
    result = run_experiment(cfg())
    assert result.experiment == "pcn_uniform_gap"
    assert set(result.verdicts) == {
        "gap_within_10pct_of_rho",
        "gap_uniform_3se_band",
        "iact_within_15pct_of_ar1",
    }
    assert result.passed
    methods = {r.method for r in result.rows}
    assert {"acf_linear_functional", "batch_means", "iact_acf", "iact_batch_means"} <= methods


def test_run_experiment_deterministic_and_thread_invariant():
    r1 = run_experiment(cfg(), threads=1)
    r2 = run_experiment(cfg(), threads=3)
    assert [row.cells() for row in r1.rows] == [row.cells() for row in r2.rows]
    assert r1.verdicts == r2.verdicts


def test_rwm_decay_small():
    config = cfg(
        experiment="rwm_decay",
        delta=None,
        scaling={"s": 0.1, "a": 0.0},
        m_list=[1, 2, 4, 8],
        n_steps=0,
        params={"n_samples": 40_000, "ball_radius": 6.0},
    )
    result = run_experiment(config)
    assert result.passed, result.verdicts
    means = [r.value for r in result.rows if r.method == "mean_accept"]
    assert all(b < a for a, b in zip(means, means[1:]))
    bounds = {r.m: r.value for r in result.rows if r.method == "analytic_rwm_bound"}
    assert set(bounds) == {1, 2, 4, 8}


def test_rwm_decay_rate_check_fails_in_preasymptotic_range():
    # over m = 2^4..2^10 the closed form has not entered its decay regime:
    # the rate verdicts must come back false rather than be forced green
    config = cfg(
        experiment="rwm_decay",
        delta=None,
        scaling={"s": 0.1, "a": 0.0},
        m_list=[1, 2],
        n_steps=0,
        params={"n_samples": 5000, "rate_m_log2": list(range(4, 11))},
    )
    result = run_experiment(config)
    assert not result.verdicts["superpolynomial_rate_p4"]
    assert not result.verdicts["superpolynomial_rate_p1"]


def test_rwm_decay_requires_counterexample_setting():
    with pytest.raises(ConfigError):
        run_experiment(cfg(experiment="rwm_decay", delta=None,
                           scaling={"s": 0.1, "a": 0.0}, n_steps=0,
                           target={"name": "norm_tilt", "L": 1.0}))


def test_harris_verify_small():
    config = cfg(
        experiment="harris_verify",
        target={"name": "norm_tilt", "L": 0.05},
        m_list=[8],
        n_steps=0,
        params={
            "epsilon": 0.1,
            "n_pairs": 100,
            "contraction_samples": 128,
            "smallness_pairs": 40,
            "smallness_samples": 32,
            "lyapunov_samples": 4000,
        },
    )
    result = run_experiment(config)
    assert result.verdicts["premises_hold_m8"]
    cert = result.details["certificate_m8"]
    assert cert["lyapunov"]["l"] < 1
    assert cert["contraction"]["c"] < 1
    assert cert["smallness"]["s"] < 1


def test_ergodic_suite_small():
    config = cfg(
        experiment="ergodic_suite",
        m_list=[4],
        n_steps=4000,
        n_replicas=500,
        params={"mse_n_grid": [100, 1000], "slln_n_grid": [500, 4000]},
    )
    result = run_experiment(config)
    assert result.verdicts["burnin_pin_exact"]
    assert result.verdicts["mse_within_bound"]
    assert result.verdicts["clt_ks_pass_at_1pct"]
    assert result.passed, result.verdicts


def test_conductance_sweep_small():
    config = cfg(
        experiment="conductance_sweep",
        delta=None,
        scaling={"s": 1.0, "a": 1.0},
        m_list=[16, 64, 256],
        n_steps=0,
        params={"a_list": [1.0], "n_samples": 40_000, "orthant_check": True},
    )
    result = run_experiment(config)
    assert result.verdicts["halfspace_slope_a1"]
    assert result.verdicts["orthant_exact_half"]


# --- CLI -------------------------------------------------------------------


HARRIS_SMALL = {
    "experiment": "harris_verify",
    "seed": 5,
    "spectrum": {"rule": "power_law", "q": 1.0},
    "target": {"name": "norm_tilt", "L": 0.05},
    "m_list": [8],
    "delta": 0.18,
    "params": {
        "epsilon": 0.1,
        "n_pairs": 60,
        "contraction_samples": 64,
        "smallness_pairs": 20,
        "smallness_samples": 16,
        "lyapunov_samples": 2000,
    },
}


def test_cli_validate(tmp_path, capsys):
    path = write_json(tmp_path, "ok.json", HARRIS_SMALL)
    assert main(["validate", "-c", str(path)]) == 0
    assert "valid" in capsys.readouterr().out


def test_cli_validate_bad_config(tmp_path, capsys):
    path = write_json(tmp_path, "bad.json", {**HARRIS_SMALL, "m_list": []})
    assert main(["validate", "-c", str(path)]) == 2
    assert "m_list" in capsys.readouterr().err


def test_cli_missing_config_is_io_error(tmp_path):
    assert main(["validate", "-c", str(tmp_path / "nope.json")]) == 3


def test_cli_run_and_report(tmp_path, capsys):
    path = write_json(tmp_path, "h.json", HARRIS_SMALL)
    out = tmp_path / "out"
    assert main(["run", "-c", str(path), "-o", str(out)]) == 0
    captured = capsys.readouterr().out
    assert "premises_hold_m8: PASS" in captured
    assert (out / "sweep.csv").exists()
    assert (out / "result.json").exists()
    payload = json.loads((out / "result.json").read_text())
    assert payload["passed"] is True

    assert main(["report", "-i", str(out / "sweep.csv")]) == 0
    captured = capsys.readouterr().out
    assert "method" in captured.splitlines()[0]


def test_cli_run_byte_identical_and_thread_invariant(tmp_path):
    path = write_json(
        tmp_path, "g.json",
        {**GOOD, "m_list": [2, 4], "n_steps": 5000, "seed": 31},
    )
    outs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", "3")):
        out = tmp_path / name
        assert main(["run", "-c", str(path), "-o", str(out), "--threads", threads]) in (0, 1)
        outs.append((out / "sweep.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_cli_verdict_failure_exit_code(tmp_path):
    # the pre-asymptotic rate range makes the rate verdict deterministically false
    config = {
        "experiment": "rwm_decay",
        "seed": 9,
        "spectrum": {"rule": "power_law", "q": 1.0},
        "target": {"name": "zero"},
        "m_list": [1, 2],
        "scaling": {"s": 0.1, "a": 0.0},
        "params": {"n_samples": 5000, "rate_m_log2": [4, 5, 6, 7]},
    }
    path = write_json(tmp_path, "fail.json", config)
    assert main(["run", "-c", str(path), "-o", str(tmp_path / "out")]) == 1


def test_cli_seed_env_override(tmp_path, monkeypatch):
    path = write_json(tmp_path, "h.json", HARRIS_SMALL)
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    main(["run", "-c", str(path), "-o", str(out1)])
    monkeypatch.setenv("FSMCMC_SEED", "777")
    main(["run", "-c", str(path), "-o", str(out2)])
    assert (out1 / "sweep.csv").read_bytes() != (out2 / "sweep.csv").read_bytes()
    monkeypatch.setenv("FSMCMC_SEED", "not_an_int")
    assert main(["validate", "-c", str(path)]) == 2


def test_report_renders_figures(tmp_path):
    config = cfg(
        experiment="conductance_sweep",
        delta=None,
        scaling={"s": 1.0, "a": 1.0},
        m_list=[16, 64, 256],
        n_steps=0,
        params={"a_list": [1.0], "n_samples": 10_000, "orthant_check": False},
    )
    result = run_experiment(config)
    paths = write_result(result, tmp_path / "out")
    figures = render_figures(paths["csv"])
    assert figures
    for fig in figures:
        assert fig.exists() and fig.suffix == ".png"
        assert fig.parent == (tmp_path / "out")
    table = render_table(paths["csv"])
    assert table.splitlines()[0].startswith("m")
    assert "conductance_half_space" in table
