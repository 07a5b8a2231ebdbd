import csv

import numpy as np

from wavebc.plotting import plot_bundle, write_csv


def _bundle(n_tau, n_gamma):
    rng = np.random.default_rng(0)
    tau = (np.arange(n_tau) + 0.5) / n_tau * 0.4
    arrs = {"q_rec": rng.normal(size=(n_tau, n_gamma)), "q_true": np.zeros((n_tau, n_gamma)),
            "mask": np.ones((n_tau, n_gamma)), "tau": tau,
            "gamma": 2 * np.pi * np.arange(n_gamma) / n_gamma, "rho": np.array([1.0]),
            "eigenvalues": np.exp(-np.arange(20.0)), "partition_steps": np.array([4.0, 2, 1]),
            "defects": np.array([1e-3, 5e-4, 2e-4]), "raw_defects": np.array([1e-2, 5e-3, 2e-3]),
            "w_rec": rng.normal(size=(n_tau, n_gamma))}
    return arrs


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_interval_bundle(tmp_path):
    files = plot_bundle(_bundle(10, 1), "interval", tmp_path)
    assert all(f.is_file() for f in files)
    rows = _rows(tmp_path / "q_profile.csv")
    assert rows[0] == ["x", "q_true", "q_rec", "mask"] and len(rows) == 11
    eig = np.array([float(r[1]) for r in _rows(tmp_path / "eigen_decay.csv")[1:]])
    assert np.all(np.diff(eig) <= 0)
    assert "nan" in _rows(tmp_path / "wave_snapshot.csv")[1][2]  # no reference stored


def test_disc_bundle_has_polar_figure(tmp_path):
    plot_bundle(_bundle(6, 8), "disc", tmp_path)
    assert (tmp_path / "q_polar.svg").read_text().lstrip().startswith("<?xml")
    rows = _rows(tmp_path / "q_field.csv")
    assert rows[0] == ["tau", "gamma", "q_true", "q_rec", "mask"] and len(rows) == 49


def test_figures_are_byte_stable(tmp_path):
    plot_bundle(_bundle(10, 1), "interval", tmp_path / "a")
    plot_bundle(_bundle(10, 1), "interval", tmp_path / "b")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_csv_values_round_trip(tmp_path):
    x = np.array([0.1, 1 / 3, -2e-17])
    write_csv(tmp_path / "v.csv", ["x"], [x])
    back = np.array([float(r[0]) for r in _rows(tmp_path / "v.csv")[1:]])
    assert np.array_equal(back, x)
