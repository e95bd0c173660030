import json
from pathlib import Path

import pytest

from neutral_tci.cli import CSV_COLUMNS, main
from neutral_tci.config import ConfigFieldError, parse_config
from neutral_tci.pathspace import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = """\
schema = 1

[model]
name = "ou"

[model.params]
tau = 0.25

[grid]
tau = 0.25
horizon = 1.0
dt = 0.03125

[perturbation]
kind = "{kind}"
value = 1.0

[run]
n_paths = 24
seed = 4
metrics = ["l2", "inf2"]
"""


def write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(args):
    return main([str(a) for a in args])


def test_zero_h_passes_with_zero_distances(tmp_path, capsys):
    cfg = write(tmp_path, BASE.format(kind="zero"))
    assert run(["verify", "--config", cfg, "--out", tmp_path / "o"]) == 0
    rows = (tmp_path / "o" / "samples.csv").read_text().splitlines()
    assert rows[0] == ",".join(CSV_COLUMNS)
    assert len(rows) == 25
    for r in rows[1:]:
        f = r.split(",")
        assert f[1] == "0.0" and f[2] == "" and f[3] == "0.0" and f[4] == "0.0"
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["payload"]["passed"] is True
    assert summary["payload"]["verdicts"]["l2"]["constants"]["assembly_trace"][-1][0] == "final_C"


def test_same_seed_identical_bytes(tmp_path):
    cfg = write(tmp_path, BASE.format(kind="constant"))
    for d in ("a", "b"):
        assert run(["verify", "--config", cfg, "--out", tmp_path / d]) == 0
    assert (tmp_path / "a/samples.csv").read_bytes() == (tmp_path / "b/samples.csv").read_bytes()
    sa = json.loads((tmp_path / "a/summary.json").read_text())
    sb = json.loads((tmp_path / "b/summary.json").read_text())
    assert sa["payload_sha256"] == sb["payload_sha256"]
    assert sa["payload"] == sb["payload"]


def test_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, BASE.format(kind="zero").replace('kind = "zero"', 'kind = "feedback"\ngain = -1.0'))
    run(["verify", "--config", cfg, "--out", tmp_path / "a"])
    run(["verify", "--config", cfg, "--out", tmp_path / "b", "--seed", 5])
    assert (tmp_path / "a/samples.csv").read_bytes() != (tmp_path / "b/samples.csv").read_bytes()


def test_infeasible_constant_exit_1(tmp_path, capsys):
    assert run(["verify", "--config", CONFIGS / "infeasible_l2.toml", "--out", tmp_path]) == 1
    err = capsys.readouterr().err
    assert "lambda1 - lambda2 > 0" in err


def test_failing_verdict_exit_2(tmp_path, capsys):
    text = BASE.format(kind="constant") + "epsilon = 0.5\n"
    text = text.replace("[model.params]", "[model.constants]\nsigma_bound = 0.01\n\n[model.params]")
    cfg = write(tmp_path, text)
    # understated sigma bound: both the audit and the verdict must reject
    assert run(["verify", "--config", cfg, "--out", tmp_path / "o"]) == 2


@pytest.mark.parametrize("patch,where", [
    (("dt = 0.03125", "dt = 0.3"), "grid.dt"),
    (("n_paths = 24", "n_paths = 0"), "run.n_paths"),
    (('kind = "zero"', 'kind = "wild"'), "perturbation.kind"),
    (("seed = 4", "seed = -1"), "run.seed"),
    (('metrics = ["l2", "inf2"]', 'metrics = ["w1"]'), "run.metrics"),
    (("schema = 1", "schema = 2"), "schema"),
])
def test_field_diagnostics(patch, where):
    text = BASE.format(kind="zero").replace(*patch)
    with pytest.raises(ConfigFieldError) as info:
        parse_config(text, "exp.toml")
    assert info.value.where == where
    if where != "schema":
        assert info.value.line == text.splitlines().index(next(
            l for l in text.splitlines() if l.startswith(patch[1].split(" =")[0]))) + 1


def test_missing_schema_and_syntax_error():
    with pytest.raises(ConfigFieldError, match="schema"):
        parse_config(BASE.format(kind="zero").replace("schema = 1\n", ""))
    with pytest.raises(ConfigError, match="TOML syntax"):
        parse_config("schema = 1\n[model\n")


def test_non_integer_horizon_with_inf1():
    text = BASE.format(kind="zero").replace("horizon = 1.0", "horizon = 1.5").replace('"inf2"', '"inf1"')
    with pytest.raises(ConfigFieldError, match="integer horizon"):
        parse_config(text)


def test_invalid_config_exit_1(tmp_path, capsys):
    cfg = write(tmp_path, BASE.format(kind="zero").replace("dt = 0.03125", "dt = 0.3"))
    assert run(["verify", "--config", cfg]) == 1
    assert "exp.toml:12" in capsys.readouterr().err


def test_list_catalog(capsys):
    assert run(["list"]) == 0
    cat = json.loads(capsys.readouterr().out)
    names = [e["name"] for e in cat]
    assert len(cat) >= 4
    assert {"ou", "discrete-delay", "weighted-neutral", "heat-example"} <= set(names)
    for e in cat:
        assert {"kappa", "lambda1", "lambda2", "lambda3", "delta", "sigma_bound"} <= set(e["constants"])
    heat = cat[names.index("heat-example")]
    assert heat["formulas"]["rho1"] == "L*tau"


def test_audit_and_constants_commands(tmp_path):
    assert run(["audit", "--config", CONFIGS / "discrete_delay.toml", "--out", tmp_path]) == 0
    audit = json.loads((tmp_path / "audit.json").read_text())["payload"]["audit"]
    assert audit["gating_passed"] is True
    assert run(["constants", "--config", CONFIGS / "weighted_neutral.toml", "--out", tmp_path]) == 0
    consts = json.loads((tmp_path / "constants.json").read_text())["payload"]["constants"]
    assert set(consts) == {"l2", "inf1"}


def test_spde_verify_and_gnuplot(tmp_path):
    text = (CONFIGS / "heat_example.toml").read_text().replace("n_paths = 256", "n_paths = 8")
    cfg = write(tmp_path, text)
    assert run(["spde-verify", "--config", cfg, "--out", tmp_path / "o", "--emit-gnuplot"]) == 0
    assert (tmp_path / "o" / "plot_samples.gp").read_text().startswith("set datafile")
    rows = (tmp_path / "o" / "samples.csv").read_text().splitlines()
    assert len(rows) == 9 and rows[1].split(",")[2] == "" and rows[1].split(",")[4] == ""
    assert run(["verify", "--config", cfg, "--out", tmp_path / "p"]) == 1


def test_no_partial_files_left(tmp_path):
    cfg = write(tmp_path, BASE.format(kind="zero"))
    run(["verify", "--config", cfg, "--out", tmp_path / "o"])
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["samples.csv", "summary.json"]


def test_workers_env_default(tmp_path, monkeypatch):
    cfg = write(tmp_path, BASE.format(kind="constant"))
    run(["verify", "--config", cfg, "--out", tmp_path / "a"])
    monkeypatch.setenv("NEUTRAL_TCI_WORKERS", "3")
    run(["verify", "--config", cfg, "--out", tmp_path / "b"])
    assert (tmp_path / "a/samples.csv").read_bytes() == (tmp_path / "b/samples.csv").read_bytes()
