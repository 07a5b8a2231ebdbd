import json

import numpy as np
import pytest

from wavebc.cli import main
from wavebc.dataset import read_container

INTERVAL = """\
domain.kind = interval
domain.h = 0.005
time.T = 0.5
potential.kind = gaussian
potential.amplitude = 2
potential.center = 0.25
potential.width = 0.06
inversion.second_derivative = discrete
"""


@pytest.fixture()
def cfg(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(INTERVAL)
    return p


@pytest.fixture()
def dataset(tmp_path, cfg):
    out = tmp_path / "data.rbc"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--deterministic"]) == 0
    return out


def test_round_trip_simulate_check_invert_plot(tmp_path, dataset, capsys):
    rep = tmp_path / "report.txt"
    assert main(["check", "--data", str(dataset), "--out", str(rep), "--json"]) == 0
    js = json.loads((tmp_path / "report.txt.json").read_text())
    assert js["overall"] is True
    res = tmp_path / "res"
    assert main(["invert", "--data", str(dataset), "--out", str(res), "--deterministic"]) == 0
    summary = json.loads((res / "error_summary.json").read_text())
    assert summary["relative_l2_error"] < 1e-4
    assert "isometry_defect" in (res / "diagnostics.log").read_text()
    figs = tmp_path / "figs"
    assert main(["plot", "--data", str(res), "--out", str(figs)]) == 0
    for name in ("q_profile.csv", "q_profile.svg", "eigen_decay.csv", "isometry_defect.svg",
                 "wave_snapshot.csv"):
        assert (figs / name).is_file()


def test_deterministic_runs_are_bit_identical(tmp_path, cfg, dataset):
    again = tmp_path / "again.rbc"
    assert main(["simulate", "--config", str(cfg), "--out", str(again), "--deterministic"]) == 0
    assert again.read_bytes() == dataset.read_bytes()
    for d in ("r1", "r2"):
        assert main(["invert", "--data", str(dataset), "--out", str(tmp_path / d), "--deterministic"]) == 0
    assert (tmp_path / "r1/result.rbc").read_bytes() == (tmp_path / "r2/result.rbc").read_bytes()


def test_noise_flag_sets_relative_size(tmp_path, cfg, dataset, capsys):
    noisy = tmp_path / "noisy.rbc"
    capsys.readouterr()
    assert main(["simulate", "--config", str(cfg), "--out", str(noisy), "--noise", "1e-3",
                 "--seed", "7", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["noise_relative"] == pytest.approx(1e-3, rel=1e-9)
    a, b = read_container(dataset).arrays["kernel"], read_container(noisy).arrays["kernel"]
    assert np.linalg.norm(b - a) / np.linalg.norm(a) == pytest.approx(1e-3, rel=1e-9)
    assert read_container(noisy).manifest["synthetic_noise_level"] == pytest.approx(1e-3)


def test_nonlocal_dataset_has_no_truth_and_no_error_summary(tmp_path, cfg):
    data = tmp_path / "nl.rbc"
    assert main(["simulate", "--config", str(cfg), "--out", str(data), "--nonlocal"]) == 0
    c = read_container(data)
    assert c.manifest["nonlocal_source"] is True and "q_true" not in c.arrays
    res = tmp_path / "res"
    assert main(["invert", "--data", str(data), "--out", str(res)]) == 0
    assert not (res / "error_summary.json").exists()


def test_oracle_free_interval(tmp_path):
    p = tmp_path / "free.cfg"
    p.write_text("domain.kind = interval\ndomain.h = 0.01\ntime.T = 0.5\n")
    out = tmp_path / "oracle"
    assert main(["oracle", "--config", str(p), "--out", str(out)]) == 0
    res = json.loads((out / "duality.json").read_text())
    assert res["dalembert"] < 1e-12
    assert max(res["duality"]) <= res["h"]


@pytest.mark.parametrize("argv", [[], ["bogus"], ["invert", "--data"], ["simulate", "--config", "x"],
                                  ["invert", "--data", "x", "--out", "y", "--partition", "0"],
                                  ["check", "--data", "x", "--seed", "-1"]])
def test_usage_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_invalid_inputs_exit_2(tmp_path, dataset):
    bad = tmp_path / "bad.cfg"
    bad.write_text(INTERVAL + "unknown.key = 3\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x.rbc")]) == 2
    trunc = tmp_path / "trunc.rbc"
    trunc.write_bytes(dataset.read_bytes()[:-100])
    assert main(["check", "--data", str(trunc)]) == 2
    assert main(["invert", "--data", str(tmp_path / "missing.rbc"), "--out", str(tmp_path / "o")]) == 2
    assert main(["plot", "--data", str(dataset), "--out", str(tmp_path / "f")]) == 2


def test_check_failure_exits_3(tmp_path, cfg):
    noisy = tmp_path / "noisy.rbc"
    assert main(["simulate", "--config", str(cfg), "--out", str(noisy), "--noise", "0.05"]) == 0
    assert main(["check", "--data", str(noisy), "--json"]) == 3
