import json

import pytest

from svaforge import cli, domain
from svaforge.errors import ConfigError

from conftest import fixture_path

CONFIG_TOML = """\
[run]
proof_depth = 8
max_fix_attempts = 5
hil_mode = "interactive"
"""


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(CONFIG_TOML)
    return str(path)


def _run_args(tmp_path, config_file, design="handshake", scenario="handshake_scenario.json",
              **extra):
    args = [
        "run",
        "--design", fixture_path(f"{design}.dsn"),
        "--spec", fixture_path(f"{design}.rb"),
        "--backend", f"scripted:{fixture_path(scenario)}",
        "--config", config_file,
        "--out", str(tmp_path / "out"),
    ]
    for k, v in extra.items():
        args += [f"--{k}", v]
    return args


# ---------------------------------------------------------------------------
# run


def test_run_success_exit_zero_and_artifacts(tmp_path, config_file, capsys):
    rc = cli.main(_run_args(tmp_path, config_file))
    out = capsys.readouterr().out
    assert rc == cli.EXIT_OK
    assert "phase=Done" in out
    assert "p1: proven" in out
    assert "coverage: 100.0%" in out
    base = tmp_path / "out" / "run-001"
    assert (base / "properties" / "p1.sva").exists()
    assert (base / "bind_manifest.json").exists()
    ledger = domain.load_ledger(base / "ledger.jsonl")
    assert ledger.run_id == "run-001"
    assert ledger.events[0].kind == "SpecParsed"


def test_run_pending_hil_exit_two(tmp_path, config_file, capsys):
    rc = cli.main(
        _run_args(tmp_path, config_file, design="encoder",
                  scenario="encoder_hil_scenario.json")
    )
    out = capsys.readouterr().out
    assert rc == cli.EXIT_HIL_PENDING
    assert "phase=Hil" in out
    assert "pending HIL items" in out


def test_run_missing_design_exit_one(tmp_path, config_file, capsys):
    args = _run_args(tmp_path, config_file)
    args[args.index("--design") + 1] = str(tmp_path / "missing.dsn")
    assert cli.main(args) == cli.EXIT_ERROR
    assert "error:" in capsys.readouterr().err


def test_run_bad_backend_spec(tmp_path, config_file, capsys):
    args = _run_args(tmp_path, config_file)
    args[args.index("--backend") + 1] = "carrier-pigeon"
    assert cli.main(args) == cli.EXIT_ERROR
    assert "backend must be" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# config loading


def test_load_config_values(config_file):
    cfg = cli._load_config(config_file)
    assert cfg.proof_depth == 8 and cfg.hil_mode == "interactive"


def test_load_config_flag_overrides_file(config_file):
    assert cli._load_config(config_file, hil_mode="auto_accept").hil_mode == "auto_accept"


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[run]\nproof_depht = 8\n")
    with pytest.raises(ConfigError) as err:
        cli._load_config(str(path))
    assert "proof_depht" in str(err.value)


def test_load_config_rejects_bad_values(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text('[run]\nhil_mode = "oracle"\n')
    with pytest.raises(ConfigError):
        cli._load_config(str(path))


# ---------------------------------------------------------------------------
# kg query


def test_kg_query_prints_cited_context(capsys):
    rc = cli.main(["kg", "query", "When should WLAST be asserted relative to AWLEN"])
    out = capsys.readouterr().out
    assert rc == cli.EXIT_OK
    assert "WLAST = 1 on (AWLEN + 1)-th beat" in out
    assert all("[node:" in line for line in out.splitlines())


def test_kg_query_budget_limits_lines(capsys):
    cli.main(["kg", "query", "WLAST", "--budget", "1"])
    out = capsys.readouterr().out
    assert len(out.splitlines()) == 1


# ---------------------------------------------------------------------------
# bench


def test_bench_over_materialized_ledgers(tmp_path, config_file, capsys):
    cli.main(_run_args(tmp_path, config_file))
    capsys.readouterr()
    csv_path = tmp_path / "kpi.csv"
    rc = cli.main(
        ["bench", str(tmp_path / "out" / "*" / "ledger.jsonl"), "--csv", str(csv_path)]
    )
    out = capsys.readouterr().out
    assert rc == cli.EXIT_OK
    assert "Pass@1" in out and "100.00" in out
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("design,model_label,pass_index")
    assert lines[1].startswith("handshake,scripted,1,")


def test_bench_missing_ledger_exit_one(tmp_path, capsys):
    assert cli.main(["bench", str(tmp_path / "nope.jsonl")]) == cli.EXIT_ERROR
    assert "error:" in capsys.readouterr().err
