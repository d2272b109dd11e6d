import csv
import json
from pathlib import Path

import numpy as np
import pytest

from wlaplab.cli import emit_plots, load_config, main
from wlaplab.errors import ConfigInvalid, NoSpectrumData

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _report(out: Path) -> dict:
    return json.loads((out / "report.json").read_text())


def _stable(report: dict) -> dict:
    report = json.loads(json.dumps(report))
    report.pop("wall_time")
    report.pop("version")
    report["config"].pop("out")
    return report


def test_verify_passes_and_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["verify", "--config", str(CONFIGS / "gaussian2.toml"), "--out", str(out)]) == 0
    ra, rb = _report(a), _report(b)
    assert ra["schema_version"] == "1.0" and ra["status"] == "PASS" and ra["failed"] == []
    assert _stable(ra) == _stable(rb)
    assert (a / "spectrum.csv").read_bytes() == (b / "spectrum.csv").read_bytes()


def test_falsification_probe_exits_one(tmp_path):
    code = main(["verify", "--config", str(CONFIGS / "gaussian_probe.toml"), "--out", str(tmp_path)])
    report = _report(tmp_path)
    assert code == 1 and report["status"] == "FAIL" and "bounds" in report["failed"]


def test_declared_bound_flag(tmp_path):
    args = ["verify", "--space", "gaussian:n=1,lambda=0.5", "--basis", "hermite:deg=12",
            "--checks", "spectrum,bounds", "--out", str(tmp_path)]
    assert main(args) == 0
    assert main(args + ["--declared-bound", "0.7"]) == 1


def test_csv_columns(tmp_path):
    assert main(["spectrum", "--space", "sphere:n=2,r=1", "--basis", "harmonics:lmax=3",
                 "--eigs", "9", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "spectrum.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["index", "eigenvalue", "cluster_id", "multiplicity", "residual"]
    assert [int(r["multiplicity"]) for r in rows] == [1, 3, 3, 3, 5, 5, 5, 5, 5]
    assert np.allclose([float(r["eigenvalue"]) for r in rows], [0, 2, 2, 2, 6, 6, 6, 6, 6])


def test_fano_config(tmp_path):
    assert main(["verify", "--config", str(CONFIGS / "fano_perturbed.toml"),
                 "--out", str(tmp_path)]) == 0
    names = {c["name"]: c["status"] for c in _report(tmp_path)["checks"]}
    assert names["holomorphy"] == "PASS" and names["bounds"] == "PASS"


def test_toric_subcommand(tmp_path, capsys):
    assert main(["toric", "--polytope", str(CONFIGS / "blowup.json"), "--out", str(tmp_path)]) == 0
    details = _report(tmp_path)["checks"][0]["details"]
    assert details["status"] == "NONZERO" and details["barycenter"] == ["-1/6", "1/12"]
    assert "toric" in capsys.readouterr().out


def test_config_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('space = "gaussian:n=1"\nunknown_key = 3\n')
    assert main(["verify", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["verify", "--space", "product:n=3,k=2", "--out", str(tmp_path)]) == 2
    assert main(["verify", "--space", "gaussian:n=1", "--checks", "nonsense",
                 "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err
    with pytest.raises(ConfigInvalid):
        load_config(str(bad), {})


def test_plots_and_missing_spectrum(tmp_path):
    out = tmp_path / "sweep"
    assert main(["spectrum", "--config", str(CONFIGS / "complex_gaussian.toml"),
                 "--out", str(out)]) == 0
    assert main(["plot", "--report", str(out / "report.json")]) == 0
    for name in ("ladder.png", "ladder.svg", "multiplicity.png", "multiplicity.svg"):
        assert (out / name).stat().st_size > 0
    with pytest.raises(NoSpectrumData):
        emit_plots({"checks": []}, tmp_path)
    toric = tmp_path / "toric"
    main(["toric", "--polytope", str(CONFIGS / "triangle.json"), "--out", str(toric)])
    assert main(["plot", "--report", str(toric / "report.json")]) == 1
    assert main(["plot", "--report", str(tmp_path / "missing.json")]) == 2


def test_list_spaces(capsys):
    assert main(["list-spaces"]) == 0
    text = capsys.readouterr().out
    for kind in ("gaussian", "sphere", "product", "complex-gaussian", "fano-cp1"):
        assert kind in text


def test_matrix_export(tmp_path):
    cfg = tmp_path / "export.toml"
    cfg.write_text('space = "gaussian:n=1,lambda=0.5"\nbasis = "hermite:deg=4"\n'
                   'checks = ["spectrum"]\nexport_matrices = true\n')
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path)]) == 0

    def read(name):
        lines = (tmp_path / name).read_text().splitlines()
        assert lines[1] == "# rows 5 cols 5"
        return np.array([float(x) for x in lines[4:]]).reshape(5, 5, order="F")

    stiffness, gram = read("stiffness.txt"), read("gram.txt")
    # Hermite functions diagonalize both: A = diag(k lambda) M with M a multiple of I
    assert np.allclose(gram, gram[0, 0] * np.eye(5), atol=1e-12)
    assert np.allclose(stiffness, np.diag(0.5 * np.arange(5)) @ gram, atol=1e-12)
