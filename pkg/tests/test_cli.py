import csv
import io
import json
from pathlib import Path

import pytest

from solbranch.cli import CSV_COLUMNS, ConfigError, apply_overrides, main, records_to_csv, run_config, validate_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

ZERO = """
engine = "soledge"
n_samples = 500
seed = 3

[params]
q = 2.0

[init]
N = "0"
Gamma = "0"

[[points]]
coords = [0.3, 0.7]
t = 0.2
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_zero_data_rows(tmp_path, capsys):
    assert main(["run", "--config", write(tmp_path, ZERO)]) == 0
    out = rows(capsys.readouterr().out)
    assert [r["species"] for r in out] == ["N", "Gamma"]
    for r in out:
        assert float(r["mean_re"]) == 0.0 and float(r["stderr"]) == 0.0
        # Gamma^2/N at N = 0 trips the division guard; those paths are counted, not zeroed
        assert int(r["n_samples"]) + int(r["n_rejected"]) == 500


def test_header_fixed(tmp_path, capsys):
    main(["run", "--config", write(tmp_path, ZERO)])
    assert capsys.readouterr().out.splitlines()[0] == ",".join(CSV_COLUMNS)


def test_thread_count_does_not_change_output(tmp_path, capsys):
    cfg = write(tmp_path, ZERO.replace('N = "0"', 'N = "2 + 0.2*cos(theta)"')
                .replace('Gamma = "0"', 'Gamma = "0.2*sin(theta)"').replace("500", "5000"))
    main(["run", "--config", cfg, "--threads", "1"])
    a = capsys.readouterr().out
    main(["run", "--config", cfg, "--threads", "8"])
    b = capsys.readouterr().out
    assert a == b


def test_strict_bounds_exit_two(tmp_path, capsys):
    cfg = write(tmp_path, ZERO + "\n[guards]\nbound_M = 5.0\n")
    # t M / q = 0.2 * 5 / 2 = 0.5 passes; t = 0.6 gives 1.5
    assert main(["run", "--config", cfg, "--strict-bounds"]) == 0
    capsys.readouterr()
    assert main(["run", "--config", cfg, "--strict-bounds", "--set", "points.0.t=0.6"]) == 2
    err = capsys.readouterr().err
    assert "(t/q)M < 1" in err and "1.5" in err


def test_bound_flag_without_strict(tmp_path, capsys):
    cfg = write(tmp_path, ZERO + "\n[guards]\nbound_M = 15.0\n")
    assert main(["run", "--config", cfg]) == 0
    out = rows(capsys.readouterr().out)
    assert out[0]["flags"].startswith("bound-violated:1.5")


@pytest.mark.parametrize("extra", ["bogus = 1\n", "\n[params]\nfoo = 1\n"])
def test_unknown_keys_exit_one(tmp_path, extra, capsys):
    text = ZERO.replace("[params]\nq = 2.0\n", "") + extra if "params" in extra else extra + ZERO
    assert main(["run", "--config", write(tmp_path, text)]) == 1
    assert "solbranch:" in capsys.readouterr().err


def test_bad_expression_exit_one(tmp_path, capsys):
    assert main(["run", "--config", write(tmp_path, ZERO.replace('N = "0"', 'N = "cos(thteta)"'))]) == 1
    assert "thteta" in capsys.readouterr().err


def test_wrong_species_exit_one(tmp_path):
    text = ZERO + 'species = ["chi"]\n'
    assert main(["run", "--config", write(tmp_path, text)]) == 1


def test_missing_file_is_config_error(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 1


def test_runtime_error_exit_three(tmp_path, capsys):
    text = """
engine = "soledge-chi1"

[init]
N = "sqrt(0 - r)"
Gamma = "0"

[[points]]
coords = [0.5, 0.0]
t = 0.1
"""
    with pytest.warns(RuntimeWarning):
        assert main(["run", "--config", write(tmp_path, text)]) == 3
    assert "runtime error" in capsys.readouterr().err


def test_json_output(tmp_path):
    out = tmp_path / "out.json"
    assert main(["run", "--config", write(tmp_path, ZERO), "--format", "json", "--output", str(out),
                 "--seed", "11"]) == 0
    doc = json.loads(out.read_text())
    assert doc["seed"] == 11
    assert doc["config"]["engine"] == "soledge"
    assert set(CSV_COLUMNS) <= set(doc["records"][0])
    assert doc["records"][0]["elapsed_s"] is None


def test_overrides():
    cfg = {"engine": "soledge", "params": {"q": 1.0}, "points": [{"coords": [0, 0], "t": 0.1}]}
    out = apply_overrides(cfg, ["params.q=3.5", "points.0.coords=[1.0, 2.0]", "n_samples=10"])
    assert out["params"]["q"] == 3.5 and out["points"][0]["coords"] == [1.0, 2.0] and out["n_samples"] == 10
    assert cfg["params"]["q"] == 1.0
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["params.q"])


def test_validate_fills_defaults():
    cfg = validate_config({"engine": "soledge-chi1", "init": {"N": "1", "Gamma": "0"},
                           "points": [{"coords": [0, 0], "t": 0.1}]})
    assert cfg["format"] == "csv" and cfg["n_samples"] > 0


def test_eps_div_not_leaked():
    from solbranch import jets

    cfg = {"engine": "soledge", "n_samples": 10, "init": {"N": "1", "Gamma": "0"},
           "guards": {"eps_div": 1e-3}, "points": [{"coords": [0, 0], "t": 0.1}]}
    run_config(cfg)
    assert jets.EPS_DIV == 1e-9


@pytest.mark.parametrize("name", ["soledge_chi1.toml", "tokam.toml", "fourier.toml", "soledge.toml"])
def test_shipped_configs_run(name, capsys):
    assert main(["run", "--config", str(CONFIGS / name), "--set", "n_samples=200"]) == 0
    out = rows(capsys.readouterr().out)
    assert out and all(r["format_version"] == "1" for r in out)


def test_oracle_subcommand(capsys):
    assert main(["oracle", "--config", str(CONFIGS / "soledge_chi1.toml")]) == 0
    out = rows(capsys.readouterr().out)
    assert out[0]["oracle"]


def test_verify_report(tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["verify", "fast", "--only", "6,13", "--output", str(out)])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("[PASS] criterion  6")
    doc = json.loads(out.read_text())
    assert [c["number"] for c in doc["criteria"]] == [6, 13]
    assert all(c["passed"] is True for c in doc["criteria"])


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert capsys.readouterr().out.startswith("solbranch ")
