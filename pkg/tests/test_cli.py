import csv
import json

import numpy as np
import pytest

from pileup import cli, experiment
from pileup.experiment import ExperimentSpec, RunResult, SpecError


def write_spec(path, **over):
    d = {"regime": 3, "n_list": [10, 20], "beta_rule": "1/sqrt(n)", "grid": {"m": 400}}
    d.update(over)
    path.write_text(json.dumps(d))
    return path


def test_spec_validation():
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"regime": 3, "n_list": [20, 10], "beta_rule": "1/sqrt(n)"})
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"regime": 2, "n_list": [10], "beta_rule": "1/sqrt(n)", "c": 1.0})
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"regime": 3, "n_list": [10], "beta_rule": "1/sqrt(n)", "colour": 1})
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"regime": 4, "n_list": [10], "beta_rule": "c"})
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"regime": 3, "n_list": [10], "beta_rule": "explicit", "betas": [1, 2]})
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"regime": 5, "n_list": [10], "beta_rule": "constant", "beta": 1.0})
    s = ExperimentSpec.from_dict({"regime": "first-critical", "n_list": [10, 20], "beta_rule": "c/n", "c": 5})
    assert s.regime == 2 and s.beta_values() == [0.5, 0.25]
    assert ExperimentSpec.from_dict(s.to_dict()) == s


def test_run_round_trip(tmp_path):
    spec = ExperimentSpec.from_json(write_spec(tmp_path / "spec.json"))
    res = experiment.run(spec)
    assert res.all_converged
    assert [r.n for r in res.records] == [10, 20]
    assert res.records[1].w1 < res.records[0].w1
    back = RunResult.from_json(res.to_json())
    assert back.to_csv() == res.to_csv()
    assert back.records[0].x == res.records[0].x
    rows = list(csv.reader(res.to_csv().splitlines()))
    assert rows[0] == experiment.CSV_HEADER
    # 17 significant digits survive the text round trip
    assert float(rows[1][2]) == res.records[0].energy_discrete


def test_jitter_is_seeded():
    d = {"regime": 3, "n_list": [15], "beta_rule": "1/sqrt(n)", "jitter": 0.3, "seed": 7}
    a = experiment.run(ExperimentSpec.from_dict(d))
    b = experiment.run(ExperimentSpec.from_dict(d))
    assert a.records[0].x == b.records[0].x
    x0 = experiment._initial(15, 7, 0.3)
    assert not np.allclose(x0, np.arange(1, 16) / 15)


def test_cli_run_writes_outputs(tmp_path):
    spec = write_spec(tmp_path / "spec.json")
    out = tmp_path / "out"
    assert cli.main(["run", str(spec), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["continuum_density.csv", "density_n10.csv", "density_n20.csv",
                     "results.csv", "results.json"]
    dens = np.loadtxt(out / "continuum_density.csv", delimiter=",", skiprows=1)
    assert dens.shape[1] == 2
    assert np.sum(dens[:, 1]) * (dens[1, 0] - dens[0, 0]) == pytest.approx(1.0)


def test_cli_run_csv_to_stdout(tmp_path, capsys):
    spec = write_spec(tmp_path / "spec.json")
    assert cli.main(["run", str(spec)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == ",".join(experiment.CSV_HEADER)
    assert len(out.splitlines()) == 3


def test_cli_not_converged_exit_code(tmp_path):
    spec = write_spec(tmp_path / "spec.json", solver={"max_iters": 1})
    assert cli.main(["run", str(spec), "--out", str(tmp_path / "o")]) == 1


def test_cli_bad_spec_exit_code(tmp_path, capsys):
    spec = tmp_path / "bad.json"
    spec.write_text(json.dumps({"regime": 3, "n_list": [], "beta_rule": "1/sqrt(n)"}))
    assert cli.main(["run", str(spec)]) == 2
    assert "n_list" in capsys.readouterr().err


def test_cli_missing_file_exit_code(tmp_path):
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 3


def test_cli_minimize(tmp_path):
    out = tmp_path / "m.json"
    assert cli.main(["minimize", "--regime", "2", "--n", "1", "--beta", "1", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["converged"] and d["x"][0] == pytest.approx(0.098169, abs=1e-5)


def test_cli_continuum_and_potential(tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert cli.main(["continuum", "--regime", "3", "--closed-form", "--m", "100", "--out", str(out)]) == 0
    assert "energy=" in capsys.readouterr().err
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert data.shape == (100, 2)
    pot = tmp_path / "p.csv"
    assert cli.main(["potential", "--smin", "0.1", "--smax", "2", "--num", "5", "--log", "--out", str(pot)]) == 0
    tab = np.loadtxt(pot, delimiter=",", skiprows=1)
    assert tab.shape == (5, 5)
    assert np.all(tab[:, 1] > 0) and np.all(tab[:, 2] < 0)


def test_cli_continuum_needs_c():
    assert cli.main(["continuum", "--regime", "2", "--m", "50"]) == 2
