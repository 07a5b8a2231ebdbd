"""CSV series and SVG figures for result bundles."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dataset import DatasetError, atomic_write_bytes, atomic_write_text  # noqa: E402

# fixed salt and no date stamp keep SVG output byte-stable
matplotlib.rcParams["svg.hashsalt"] = "wavebc"
_SVG_META = {"Date": None, "Creator": "wavebc"}


def write_csv(path, header: list[str], columns: list) -> None:
    cols = [np.asarray(c).ravel() for c in columns]
    if len({c.size for c in cols}) > 1:
        raise ValueError("CSV columns differ in length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*cols):
        w.writerow([repr(float(v)) for v in row])
    atomic_write_text(path, buf.getvalue())


def _save(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata=_SVG_META)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def _need(arrays: dict, *names):
    missing = [n for n in names if n not in arrays]
    if missing:
        raise DatasetError(f"result bundle misses {', '.join(missing)}")


def plot_potential(arrays: dict, kind: str, out: Path) -> list[Path]:
    _need(arrays, "q_rec", "mask", "tau", "gamma")
    q, mask, tau, gamma = arrays["q_rec"], arrays["mask"], arrays["tau"], arrays["gamma"]
    q_true = arrays.get("q_true", np.full_like(q, np.nan))
    files = []
    if kind == "interval":
        p = out / "q_profile.csv"
        write_csv(p, ["x", "q_true", "q_rec", "mask"], [tau, q_true[:, 0], q[:, 0], mask[:, 0]])
        files.append(p)
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(tau, q_true[:, 0], label="true")
        ax.plot(tau, np.where(mask[:, 0] > 0, q[:, 0], np.nan), "--", label="recovered")
        ax.set_xlabel("x")
        ax.set_ylabel("q")
        ax.legend()
        fig.tight_layout()
        p = out / "q_profile.svg"
        _save(fig, p)
        files.append(p)
        return files
    tt, gg = np.meshgrid(tau, gamma, indexing="ij")
    p = out / "q_field.csv"
    write_csv(p, ["tau", "gamma", "q_true", "q_rec", "mask"], [tt, gg, q_true, q, mask])
    files.append(p)
    rho = float(arrays.get("rho", np.array([1.0]))[0])
    fig, axes = plt.subplots(1, 2, subplot_kw={"projection": "polar"}, figsize=(8, 4))
    dg = gamma[1] - gamma[0] if gamma.size > 1 else 2 * np.pi
    th_edges = np.append(gamma - dg / 2, gamma[-1] + dg / 2)
    dtau = tau[1] - tau[0] if tau.size > 1 else tau[0] * 2
    r_edges = rho - np.append(tau - dtau / 2, tau[-1] + dtau / 2)
    vmax = np.nanmax(np.abs(np.concatenate([q.ravel(), np.nan_to_num(q_true).ravel()]))) or 1.0
    for ax, data, title in ((axes[0], q_true, "true q"),
                            (axes[1], np.where(mask > 0, q, np.nan), "recovered q")):
        mesh = ax.pcolormesh(th_edges, r_edges, data, shading="flat", vmin=-vmax, vmax=vmax, cmap="RdBu_r")
        ax.set_title(title)
        ax.set_yticklabels([])
    fig.colorbar(mesh, ax=list(axes), shrink=0.7)
    p = out / "q_polar.svg"
    _save(fig, p)
    files.append(p)
    return files


def plot_waves(arrays: dict, out: Path) -> list[Path]:
    _need(arrays, "w_rec", "tau")
    tau, w_rec = arrays["tau"], arrays["w_rec"][:, 0]
    w_ref = arrays["w_ref"][:, 0] if "w_ref" in arrays else np.full_like(w_rec, np.nan)
    p = out / "wave_snapshot.csv"
    write_csv(p, ["tau", "w_rec", "w_ref"], [tau, w_rec, w_ref])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(tau, w_rec, label="reconstructed")
    if "w_ref" in arrays:
        ax.plot(tau, w_ref, "--", label="forward solver")
    ax.set_xlabel("depth")
    ax.set_ylabel("wave at T")
    ax.legend()
    fig.tight_layout()
    s = out / "wave_snapshot.svg"
    _save(fig, s)
    return [p, s]


def plot_spectrum(arrays: dict, out: Path) -> list[Path]:
    _need(arrays, "eigenvalues")
    lam = np.sort(arrays["eigenvalues"])[::-1]
    p = out / "eigen_decay.csv"
    write_csv(p, ["index", "eigenvalue"], [np.arange(lam.size), lam])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    pos = np.where(lam > 0, lam, np.nan)
    ax.semilogy(pos / np.nanmax(pos))
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue / max")
    fig.tight_layout()
    s = out / "eigen_decay.svg"
    _save(fig, s)
    return [p, s]


def plot_defects(arrays: dict, out: Path) -> list[Path]:
    _need(arrays, "partition_steps", "defects", "raw_defects")
    steps, d, raw = arrays["partition_steps"], arrays["defects"], arrays["raw_defects"]
    p = out / "isometry_defect.csv"
    write_csv(p, ["partition_step", "defect", "raw_defect"], [steps, d, raw])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.loglog(steps, np.maximum(d, 1e-17), "o-", label="normalized")
    ax.loglog(steps, np.maximum(raw, 1e-17), "s--", label="raw")
    ax.set_xlabel("partition step (samples)")
    ax.set_ylabel("isometry defect")
    ax.legend()
    fig.tight_layout()
    s = out / "isometry_defect.svg"
    _save(fig, s)
    return [p, s]


def plot_bundle(arrays: dict, kind: str, out) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = plot_potential(arrays, kind, out)
    files += plot_waves(arrays, out)
    files += plot_spectrum(arrays, out)
    files += plot_defects(arrays, out)
    return files
