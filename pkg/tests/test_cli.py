import json

import numpy as np
import pytest

from mevsindy.cli import main
from mevsindy.model import linear_model
from mevsindy.pod import SnapshotMatrix, write_snapshots


def _run(args, capsys):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def identified(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["generate", "table1", "--beta", "0.5", "--omega-f", "1.999", "--x0", "0,0",
                 "--out", str(root / "gen")]) == 0
    assert main(["identify", str(root / "gen" / "trajectory.csv"), "--orders", "0,1",
                 "--out", str(root / "id")]) == 0
    return root


def test_generate_outputs(identified):
    gen = identified / "gen"
    assert {p.name for p in gen.iterdir()} == {"trajectory.csv", "trajectory.forcing.json",
                                               "manifest.json"}
    forcing = json.loads((gen / "trajectory.forcing.json").read_text())
    assert forcing == {"beta": 0.5, "omega_f": 1.999, "shape": "cosine"}
    manifest = json.loads((gen / "manifest.json").read_text())
    assert manifest["command"] == "generate"
    assert manifest["parameters"]["x0"] == [0.0, 0.0]


def test_generate_is_byte_identical(identified, tmp_path, capsys):
    code, _, _ = _run(["generate", "table1", "--beta", "0.5", "--omega-f", "1.999", "--x0", "0,0",
                       "--out", tmp_path], capsys)
    assert code == 0
    for name in ("trajectory.csv", "manifest.json"):
        assert (tmp_path / name).read_bytes() == (identified / "gen" / name).read_bytes()


def test_generate_free_decay(tmp_path, capsys):
    code, _, _ = _run(["generate", "table1", "--beta", "0", "--x0", "1,0", "--duration", "50",
                       "--out", tmp_path], capsys)
    assert code == 0
    data = np.loadtxt(tmp_path / "trajectory.csv", delimiter=",", skiprows=1)
    assert abs(data[-1, 1]) < 1.0


def test_generate_beam(tmp_path, capsys):
    code, _, _ = _run(["generate", "beam", "--beta", "0.25", "--omega-f", "0.551", "--duration",
                       "100", "--out", tmp_path], capsys)
    assert code == 0
    header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,x1,x2,x3,v1,v2,v3"


def test_identify_table1_five_terms(identified):
    model = json.loads((identified / "id" / "model.json").read_text())
    assert len(model["terms"][0]) == 3          # x^2, x^3, v
    assert model["forcing"][0][0] != 0          # forcing cos
    assert model["omega_sq"][0] == pytest.approx(4.0, rel=0.01)
    report = json.loads((identified / "id" / "report.json").read_text())
    entry = report["channels"]["0"]
    assert entry["residual"] <= 0.1
    assert entry["known_beta"] == [0.5]
    assert entry["recovered_forcing_amplitude"][0] == pytest.approx(0.5, rel=0.05)
    assert "contributions" in entry


def test_identify_empty_file(tmp_path, capsys):
    (tmp_path / "empty.csv").write_text("")
    code, _, err = _run(["identify", tmp_path / "empty.csv", "--out", tmp_path / "o"], capsys)
    assert code != 0
    report = json.loads(err)
    assert report["code"] == "input_validation"
    assert json.loads((tmp_path / "o" / "error.json").read_text())["code"] == "input_validation"


def test_identify_config_env(identified, tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"regression": {"residual_tolerance": 1e-9}}))
    monkeypatch.setenv("MEVSINDY_CONFIG", str(cfg))
    code, _, err = _run(["identify", identified / "gen" / "trajectory.csv", "--orders", "0,1",
                         "--out", tmp_path / "o"], capsys)
    assert code != 0
    assert json.loads(err)["code"] == "residual_too_large"


def test_frc_and_score(identified, tmp_path, capsys):
    code, _, _ = _run(["frc", identified / "id" / "model.json", "--beta", "0.25,0.5,1.0",
                       "--omega-range", "1.9,2.1", "--ds0", "0.002", "--out", tmp_path / "frc"],
                      capsys)
    assert code == 0
    files = sorted(p.name for p in (tmp_path / "frc").glob("*.csv"))
    assert files == ["frc_beta_0.25.csv", "frc_beta_0.5.csv", "frc_beta_1.csv"]
    truth = tmp_path / "truth.json"
    from mevsindy.model import table1_model
    table1_model().save(truth)
    assert main(["frc", str(truth), "--beta", "0.5", "--omega-range", "1.9,2.1", "--ds0", "0.002",
                 "--jobs", "1", "--out", str(tmp_path / "ref")]) == 0
    capsys.readouterr()
    code, out, _ = _run(["score", tmp_path / "frc" / "frc_beta_0.5.csv",
                         tmp_path / "ref" / "frc_beta_0.5.csv", "--out", tmp_path / "s"], capsys)
    assert code == 0
    score = json.loads((tmp_path / "s" / "score.json").read_text())
    assert score["mcdrc"] < 0.1 and score["success"]
    assert (tmp_path / "s" / "manifest.json").exists()


def test_frc_linear_and_score_identity(tmp_path, capsys):
    model = tmp_path / "lin.json"
    linear_model(2.0, 0.05).save(model)
    assert _run(["frc", model, "--beta", "0.5", "--omega-range", "1.8,2.2", "--out", tmp_path],
                capsys)[0] == 0
    f = tmp_path / "frc_beta_0.5.csv"
    code, _, _ = _run(["score", f, f, "--out", tmp_path / "s"], capsys)
    assert code == 0
    assert json.loads((tmp_path / "s" / "score.json").read_text())["mcdrc"] == 0.0


def test_frc_accepts_preset(tmp_path, capsys):
    model = tmp_path / "lin.json"
    linear_model().save(model)
    args = ["--beta", "0.5", "--omega-range", "1.8,2.2", "--jobs", "1"]
    assert _run(["frc", "linear", *args, "--out", tmp_path / "a"], capsys)[0] == 0
    assert _run(["frc", model, *args, "--out", tmp_path / "b"], capsys)[0] == 0
    name = "frc_beta_0.5.csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["inputs"] == [] and manifest["parameters"]["model"] == "linear"


def test_frc_bad_range(tmp_path, capsys):
    model = tmp_path / "lin.json"
    linear_model().save(model)
    code, _, err = _run(["frc", model, "--beta", "0.5", "--omega-range", "2.2,1.8",
                         "--out", tmp_path], capsys)
    assert code == 2 and json.loads(err)["code"] == "input_validation"


def test_pod_command(tmp_path, capsys):
    rng = np.random.default_rng(0)
    x = SnapshotMatrix(rng.normal(size=(80, 2)) @ rng.normal(size=(2, 6)), 0.1)
    write_snapshots(x, tmp_path / "snap.csv")
    code, out, _ = _run(["pod", tmp_path / "snap.csv", "--k-hat", "2", "--out", tmp_path / "p"],
                        capsys)
    assert code == 0
    assert json.loads(out)["truncation_error"] < 1e-10
    assert {p.name for p in (tmp_path / "p").iterdir()} == {"basis.npz", "reduced.csv",
                                                          "manifest.json"}


def test_pod_rank_too_large(tmp_path, capsys):
    x = SnapshotMatrix(np.random.default_rng(0).normal(size=(80, 3)), 0.1)
    write_snapshots(x, tmp_path / "snap.bin")
    code, _, err = _run(["pod", tmp_path / "snap.bin", "--k-hat", "4", "--out", tmp_path / "p"],
                        capsys)
    assert code == 2 and json.loads(err)["code"] == "rank_too_large"


def test_unknown_flag(capsys):
    code, _, err = _run(["generate", "table1", "--bogus"], capsys)
    assert code == 2 and json.loads(err)["code"] == "input_validation"
