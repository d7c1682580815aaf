import json

import pytest

from dcsm import load_deployment, load_scenario
from dcsm.cli import main
from dcsm.model import save_deployment


@pytest.fixture
def ill_file(tmp_path):
    from importlib import resources
    p = tmp_path / "ill.yaml"
    p.write_text((resources.files("dcsm") / "data" / "illustrative.yaml").read_text())
    return p


def test_solve_exact_and_validate(ill_file, tmp_path, capsys):
    dep = tmp_path / "dep.yaml"
    assert main(["solve", str(ill_file), "--solver", "exact", "--gap", "0", "--out", str(dep)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["acceptance_rate"] == pytest.approx(0.6) and out["violations"] == []
    assert main(["validate", str(ill_file), str(dep)]) == 0
    assert "no violations" in capsys.readouterr().out


def test_validate_reports_violation(ill_file, tmp_path, capsys):
    dep = tmp_path / "dep.yaml"
    main(["solve", str(ill_file), "--solver", "exact", "--out", str(dep)])
    d = load_deployment(dep)
    d.accepted[1] = True
    d.accepted[2] = True  # accepted but unmapped
    save_deployment(d, dep)
    capsys.readouterr()
    assert main(["validate", str(ill_file), str(dep)]) == 1
    assert "(mapping)" in capsys.readouterr().out


@pytest.mark.parametrize("solver", ["mldg", "absa"])
def test_heuristics(ill_file, solver, capsys):
    assert main(["solve", str(ill_file), "--solver", solver, "--seed", "4", "--absa-iterations", "300"]) == 0
    assert json.loads(capsys.readouterr().out)["solver"] == solver


def test_enumerate_cap(ill_file, capsys):
    # five chains exceed the enumeration cap
    assert main(["solve", str(ill_file), "--solver", "exact", "--enumerate"]) == 2


def test_gen_and_import(tmp_path):
    out = tmp_path / "t.yaml"
    assert main(["gen", "tiny", "--seed", "4", "--out", str(out)]) == 0
    assert load_scenario(out).name == "tiny-s4"
    from importlib import resources
    g = tmp_path / "bt.graphml"
    g.write_text((resources.files("dcsm") / "data" / "bteurope.graphml").read_text())
    topo = tmp_path / "bt.yaml"
    assert main(["import-topo", str(g), "--out", str(topo)]) == 0
    assert len(load_scenario(topo).substrate.nodes) == 22


def test_usage_errors(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.yaml")]) == 2
    assert main(["gen", "nonexistent-template", "--seed", "1"]) == 2
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_substrate_exhausted_is_infeasible(tmp_path, ill_file):
    import yaml
    data = yaml.safe_load(ill_file.read_text())
    for n in data["substrate"]["nodes"]:
        n["cpu_capacity"] = 50
    p = tmp_path / "small.yaml"
    p.write_text(yaml.safe_dump(data))
    assert main(["solve", str(p), "--solver", "mldg"]) == 1


def test_sweep(tmp_path, capsys):
    spec = tmp_path / "sweep.yaml"
    spec.write_text("axis: num_sfcs\nvalues: [1]\nseeds: [0, 1]\nsolvers: [mldg, exact]\n"
                    "template: {topology: tiny}\n")
    assert main(["sweep", str(spec), "--jobs", "1"]) == 0
    assert (tmp_path / "sweep.csv").exists() and (tmp_path / "sweep_aggregate.csv").exists()
    assert len((tmp_path / "sweep.jsonl").read_text().splitlines()) == 4
