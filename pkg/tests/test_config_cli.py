import csv
import json

import pytest
import yaml

from potopt import cli
from potopt.config import RECIPES, echo, load_config, load_recipe, parse_config, recipe_text, set_param
from potopt.errors import ConfigError

SMALL = {
    "name": "small",
    "problem": {
        "objective": "energy",
        "constraint": {"family": "lp", "p": 2.0},
        "domain": {"kind": "interval", "lower": 0.0, "upper": 1.0, "nodes": 101},
        "source": {"kind": "constant", "value": 1.0},
    },
}


def _write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    d = tmp_path / "out"
    monkeypatch.setenv("POTOPT_OUT_DIR", str(d))
    return d


@pytest.mark.parametrize("name", RECIPES)
def test_recipes_parse_and_round_trip(name):
    cfg = load_recipe(name)
    assert parse_config(echo(cfg)) == cfg
    assert recipe_text(name).strip()


def test_unknown_recipe():
    with pytest.raises(ConfigError):
        recipe_text("nope")


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(extra=1),
    lambda d: d["problem"]["domain"].update(radius=3.0),
    lambda d: d["problem"]["constraint"].pop("p"),
    lambda d: d["problem"]["constraint"].update(p=0.5),
    lambda d: d["problem"]["domain"].update(nodes=2),
    lambda d: d["problem"].pop("source"),
    lambda d: d["problem"].update(objective="lambda2"),
    lambda d: d["problem"]["source"].update(kind="indicator"),
    lambda d: d.update(counterexample={"n": 4, "j": 64, "p": 0.5}),
    lambda d: d.update(solver={"schedule": [2.0, 1.5, 1.8]}),
])
def test_invalid_configs_rejected(mutate):
    data = json.loads(json.dumps(SMALL))
    mutate(data)
    with pytest.raises(ConfigError):
        parse_config(data)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: [unclosed")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("- a list")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_set_param():
    out = set_param(SMALL, "problem.constraint.p", 3.0)
    assert out["problem"]["constraint"]["p"] == 3.0 and SMALL["problem"]["constraint"]["p"] == 2.0
    assert set_param(SMALL, "problem.domain.nodes", 201.0)["problem"]["domain"]["nodes"] == 201
    for bad in ("problem.source.kind", "problem.nope", "nope.x", "name"):
        with pytest.raises(ConfigError):
            set_param(SMALL, bad, 1.0)


def test_delta_source_must_sit_on_node():
    data = json.loads(json.dumps(SMALL))
    data["problem"]["source"] = {"kind": "delta", "center": 0.333}
    data["problem"]["constraint"] = {"family": "lp", "p": 1}
    cfg = parse_config(data)
    with pytest.raises(ConfigError):
        cfg.problem.source.field(cfg.problem.domain.grid())


def test_run_writes_record_and_csv(tmp_path, outdir, capsys):
    assert cli.main(["run", str(_write(tmp_path, SMALL))]) == 0
    rec = json.loads((outdir / "small.json").read_text())
    assert rec["schema_version"] == "1.0"
    assert parse_config(rec["config"]) == parse_config(SMALL)
    assert abs(rec["duality_gap"]) <= 1e-8 * abs(rec["objective_value"])
    assert set(rec["refinement"]) == {"h", "h_value", "h2", "h2_value"}
    with open(outdir / "small.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["coordinate", "u", "V", "f"]
    assert len(rows) == 102
    assert "small:" in capsys.readouterr().out


def test_walls_written_as_inf(outdir, capsys):
    assert cli.main(["recipe", "figure2"]) == 0
    with open(outdir / "figure2.csv") as fh:
        V = [row["V"] for row in csv.DictReader(fh)]
    assert "inf" in V
    assert all(v == "inf" or float(v) < 1e12 for v in V)


def test_determinism(tmp_path, outdir):
    path = _write(tmp_path, SMALL)
    cli.main(["run", str(path)])
    first = (outdir / "small.csv").read_bytes()
    cli.main(["run", str(path)])
    assert (outdir / "small.csv").read_bytes() == first


def test_config_error_exit_code(tmp_path, outdir, capsys):
    bad = dict(SMALL, bogus=1)
    assert cli.main(["run", str(_write(tmp_path, bad))]) == 1
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 1
    assert cli.main(["sweep", str(_write(tmp_path, SMALL)), "--param", "problem.source.kind", "--values", "1"]) == 1
    assert cli.main(["sweep", str(_write(tmp_path, SMALL)), "--param", "problem.constraint.p", "--values", "x"]) == 1
    assert "config error" in capsys.readouterr().err


def test_no_convergence_exit_code(tmp_path, outdir, capsys):
    data = json.loads(json.dumps(SMALL))
    data["problem"]["constraint"]["p"] = 1.05
    data["solver"] = {"max_iter": 1}
    assert cli.main(["run", str(_write(tmp_path, data))]) == 2
    rec = json.loads((outdir / "small.json").read_text())
    assert rec["converged"] is False


def test_sweep_order_and_parallel_determinism(tmp_path, monkeypatch, capsys):
    path = _write(tmp_path, SMALL)
    values = "4,1.1,2,1.5"
    tables = []
    for jobs in ("1", "3"):
        d = tmp_path / f"out{jobs}"
        monkeypatch.setenv("POTOPT_OUT_DIR", str(d))
        assert cli.main(["sweep", str(path), "--param", "problem.constraint.p", "--values", values, "--jobs", jobs]) == 0
        with open(d / "small_sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["value"]) for r in rows] == [4.0, 1.1, 2.0, 1.5]
        for k, v in enumerate([4.0, 1.1, 2.0, 1.5]):
            rec = json.loads((d / f"small_{k:03d}.json").read_text())
            assert rec["config"]["problem"]["constraint"]["p"] == v
        tables.append([(d / f"small_{k:03d}.csv").read_bytes() for k in range(4)])
    assert tables[0] == tables[1]


def test_recipe_show(capsys):
    assert cli.main(["recipe", "examdelta", "--show"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["name"] == "examdelta"


def test_help_mentions_clamp(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    assert "1e12" in capsys.readouterr().out


def test_default_output_dir(tmp_path, monkeypatch):
    monkeypatch.delenv("POTOPT_OUT_DIR", raising=False)
    monkeypatch.chdir(tmp_path)
    assert cli.main(["run", str(_write(tmp_path, SMALL))]) == 0
    assert (tmp_path / "potopt_out" / "small.json").is_file()
