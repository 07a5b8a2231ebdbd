"""Command-line entry point ``wavebc``.

Exit codes: 0 success or pass, 1 usage error, 2 invalid input data or
configuration, 3 characterization failure, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bc_inversion import (DegenerateConfigurationError, InversionConfig, NotPSDError,
                           amplitude_integral, default_test_controls, domain_from_response,
                           invert, psd_sqrt)
from .characterization import CharacterizationConfig, duality_samples, run_characterization
from .config import ConfigError, load_config
from .dataset import (DatasetError, atomic_write_text, load_response, read_container,
                      save_response, write_container)
from .geometry import DomainSpec, interior_grid
from .trace_spaces import integrate_matrix
from .wave_forward import (ConfigurationError, add_relative_noise, potential_on_interior,
                           simulate_pulses, solver_grid)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK, EXIT_NUMERIC = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _nonneg(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("value must be non-negative")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("value must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wavebc", description="Boundary-control reconstruction of a wave potential.")
    p.add_argument("--version", action="version", version=f"wavebc {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--deterministic", action="store_true",
                        help="serial execution and no timestamps (bit-reproducible output)")
        sp.add_argument("--seed", type=_u64, default=None, help="seed for noise and sampling")
        sp.add_argument("--json", action="store_true", help="machine-readable output")

    s = sub.add_parser("simulate", help="synthesize response data from a config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="dataset file")
    s.add_argument("--noise", type=_nonneg, default=None, help="relative kernel noise")
    s.add_argument("--nonlocal", action="store_true", help="use the nonlocal stencil source")
    common(s)

    s = sub.add_parser("invert", help="reconstruct the potential from a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True, help="result directory")
    s.add_argument("--config", default=None, help="optional config with inversion overrides")
    s.add_argument("--spectral-floor", type=float, default=None)
    s.add_argument("--partition", type=_positive_int, default=None, help="partition step in samples")
    common(s)

    s = sub.add_parser("check", help="run the characterization checks on a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--out", default=None, help="report path (text; JSON alongside with --json)")
    s.add_argument("--config", default=None, help="optional config with characterization overrides")
    common(s)

    s = sub.add_parser("oracle", help="reference control operator and dual traces")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="oracle directory")
    common(s)

    s = sub.add_parser("plot", help="CSV series and SVG figures of a result bundle")
    s.add_argument("--data", required=True, help="result directory or result.rbc")
    s.add_argument("--out", required=True, help="figure directory")
    common(s)
    return p


# -- helpers -----------------------------------------------------------------------------------------

def _provenance(args, extra: dict | None = None) -> dict:
    prov = {"tool": "wavebc", "version": __version__, "deterministic": bool(args.deterministic)}
    if not args.deterministic:
        prov["created_unix"] = time.time()
        prov["host_pid"] = os.getpid()
    prov.update(extra or {})
    return prov


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
    else:
        print(text)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _subconfig(cls, echo: dict, prefix: str, **extra):
    names = {f.name for f in dataclasses.fields(cls)}
    kw = {k[len(prefix):]: v for k, v in echo.items()
          if k.startswith(prefix) and k[len(prefix):] in names}
    kw.update(extra)
    return cls(**kw)


def _inversion_config(args, echo: dict) -> InversionConfig:
    if args.config:
        icfg = load_config(args.config).inversion
    else:
        icfg = _subconfig(InversionConfig, echo, "inversion.")
    over = {}
    if getattr(args, "spectral_floor", None) is not None:
        over["spectral_floor"] = args.spectral_floor
    if getattr(args, "partition", None) is not None:
        over["partition_step"] = args.partition
    return dataclasses.replace(icfg, **over)


def _run_config(args):
    cfg = load_config(args.config)
    over = {}
    if getattr(args, "noise", None) is not None:
        over["noise_level"] = args.noise
    if getattr(args, "nonlocal", False):
        over["nonlocal_source"] = True
    if args.seed is not None:
        over["seed"] = args.seed
    if args.deterministic:
        over["deterministic"] = True
    return dataclasses.replace(cfg, **over)


def _workers(cfg_deterministic: bool) -> int:
    return 1 if cfg_deterministic else max(1, os.cpu_count() or 1)


# -- commands ----------------------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _run_config(args)
    grid = solver_grid(cfg.domain, cfg.T)
    base = None if cfg.base_dir is None else Path(cfg.base_dir)
    q = cfg.potential.build(grid, base)
    K = cfg.stencil()
    sol = simulate_pulses(cfg.domain, q, cfg.T, K=K, workers=_workers(cfg.deterministic),
                          deterministic=cfg.deterministic)
    R = add_relative_noise(sol.response, cfg.noise_level, cfg.seed)
    q_true = None if K is not None else potential_on_interior(grid, q)
    echo = cfg.to_flat()
    save_response(args.out, R, config_echo=echo, q_true=q_true,
                  W_ref=sol.W if cfg.store_oracle else None,
                  provenance=_provenance(args, {"seed": cfg.seed}))
    rel = float(np.linalg.norm(R.kernel - sol.response.kernel) / np.linalg.norm(sol.response.kernel))
    payload = {"out": str(args.out), "n_tau": R.n_tau, "n_gamma": R.n_gamma,
               "noise_relative": rel, "nonlocal_source": R.nonlocal_source}
    _emit(args, payload, f"wrote {args.out}: n_tau={R.n_tau} n_gamma={R.n_gamma} "
                         f"noise={rel:.3e} nonlocal={R.nonlocal_source}")
    return EXIT_OK


def cmd_invert(args) -> int:
    R, cont = load_response(args.data)
    echo = cont.manifest.get("config", {})
    icfg = _inversion_config(args, echo)
    domain = domain_from_response(R)
    try:
        res = invert(R, icfg, domain=domain)
    except NotPSDError as exc:
        print(f"numerical abort: {exc}; run 'wavebc check' for the characterization report",
              file=sys.stderr)
        return EXIT_NUMERIC
    grid = interior_grid(domain, R.T)
    pot = res.potential
    prov = dict(res.provenance)
    if args.deterministic:
        prov.pop("elapsed_s", None)
    # defect sequence over three partition refinements
    C_half = psd_sqrt(res.connecting, prov["positivity_tol"])
    steps = [icfg.partition_step * 2 ** k for k in (2, 1, 0) if icfg.partition_step * 2 ** k <= R.n_tau]
    amps = [amplitude_integral(C_half, R.n_gamma, R.dt, s, icfg.projection_rank_tol) for s in steps]
    ctrl = default_test_controls(R.T, R.dt, icfg.n_test_controls, R.n_gamma, domain.gamma_weights,
                                 icfg.control_width)[icfg.n_test_controls // 2]
    arrays = {
        "q_rec": pot.values, "mask": pot.reliability_mask.astype(float),
        "tau": grid.tau, "gamma": grid.gamma, "rho": np.array([domain.rho]),
        "eigenvalues": res.connecting.eigvals[::-1].copy(),
        "partition_steps": np.array(steps, dtype=float),
        "defects": np.array([a.isometry_defect for a in amps]),
        "raw_defects": np.array([a.raw_defect for a in amps]),
        "w_rec": (res.W_rec.entries @ ctrl.values.ravel()).reshape(grid.shape),
    }
    if "W_ref" in cont.arrays:
        arrays["w_ref"] = (cont.arrays["W_ref"] @ ctrl.values.ravel()).reshape(grid.shape)
    summary = None
    if "q_true" in cont.arrays:
        arrays["q_true"] = cont.arrays["q_true"]
        summary = {"relative_l2_error": pot.relative_error(cont.arrays["q_true"]),
                   "n_reliable": int(pot.reliability_mask.sum())}
    out = Path(args.out)
    manifest = {"type": "result", "kind": R.kind, "T": R.T, "dt": R.dt,
                "inversion": dataclasses.asdict(icfg), "diagnostics": prov,
                "source": {"dataset_config": echo},
                "provenance": _provenance(args)}
    write_container(out / "result.rbc", manifest, arrays)
    log = "".join(f"{k} = {v}\n" for k, v in sorted(prov.items()))
    atomic_write_text(out / "diagnostics.log", log)
    if summary is not None:
        atomic_write_text(out / "error_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    text = f"wrote {out}/result.rbc; isometry defect {prov['isometry_defect']:.2e}"
    if summary is not None:
        text += f"; relative L2 error {summary['relative_l2_error']:.4f}"
    _emit(args, {"out": str(out), "diagnostics": prov, "error_summary": summary}, text)
    return EXIT_OK


def cmd_check(args) -> int:
    R, cont = load_response(args.data)
    echo = cont.manifest.get("config", {})
    if args.config:
        rc = load_config(args.config)
        ccfg = rc.characterization
    else:
        icfg = _subconfig(InversionConfig, echo, "inversion.")
        ccfg = _subconfig(CharacterizationConfig, echo, "characterization.", inversion=icfg)
    if args.seed is not None:
        ccfg = dataclasses.replace(ccfg, seed=args.seed)
    report = run_characterization(R, ccfg, domain_from_response(R))
    text = report.to_text()
    if args.out:
        atomic_write_text(args.out, text)
        if args.json:
            atomic_write_text(Path(str(args.out) + ".json") if not str(args.out).endswith(".json")
                              else Path(args.out), report.to_json() + "\n")
    if args.json:
        print(report.to_json())
    else:
        print(text, end="")
    return EXIT_OK if report.overall else EXIT_CHECK


def dalembert_residual(domain: DomainSpec, T: float, W: np.ndarray) -> float:
    """Relative distance between ``W`` and ``f -> (J f)(T - x)`` for ``q = 0`` on the interval."""
    n = domain.n_tau(T)
    J = integrate_matrix(n, domain.time_step(T))
    ref = J[::-1]  # row k (depth tau_k) reads (J f) at t = T - tau_k
    return float(np.linalg.norm(W - ref) / np.linalg.norm(ref))


def cmd_oracle(args) -> int:
    cfg = _run_config(args)
    grid = solver_grid(cfg.domain, cfg.T)
    base = None if cfg.base_dir is None else Path(cfg.base_dir)
    q = cfg.potential.build(grid, base)
    K = cfg.stencil()
    sol = simulate_pulses(cfg.domain, q, cfg.T, K=K, workers=_workers(cfg.deterministic),
                          deterministic=cfg.deterministic)
    dual = duality_samples(cfg.domain, q, cfg.T, sol.W, K=K)
    arrays = {"W_ref": sol.W}
    for i, (f, y, o) in enumerate(zip(dual["controls"], dual["fields"], dual["traces"])):
        arrays[f"control_{i}"] = f
        arrays[f"field_{i}"] = y
        arrays[f"dual_trace_{i}"] = o
    residuals = {"duality": [float(r) for r in dual["residuals"]], "h": sol.response.dt}
    if cfg.domain.kind == "interval" and q is None and K is None:
        residuals["dalembert"] = dalembert_residual(cfg.domain, cfg.T, sol.W)
    out = Path(args.out)
    manifest = {"type": "oracle", "kind": cfg.domain.kind, "T": cfg.T, "dt": sol.response.dt,
                "config": cfg.to_flat(), "residuals": residuals, "provenance": _provenance(args)}
    write_container(out / "oracle.rbc", manifest, arrays)
    atomic_write_text(out / "duality.json", json.dumps(residuals, indent=2, sort_keys=True) + "\n")
    _emit(args, residuals, f"wrote {out}/oracle.rbc; max duality residual {max(residuals['duality']):.2e}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_bundle

    src = Path(args.data)
    if src.is_dir():
        src = src / "result.rbc"
    cont = read_container(src)
    if cont.manifest.get("type") != "result":
        raise DatasetError(f"{src} is not a result bundle")
    files = plot_bundle(cont.arrays, cont.manifest.get("kind", "interval"), args.out)
    _emit(args, {"files": [str(f) for f in files]}, "\n".join(str(f) for f in files))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "invert": cmd_invert, "check": cmd_check,
            "oracle": cmd_oracle, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DatasetError, ConfigurationError, FileNotFoundError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NotPSDError, DegenerateConfigurationError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
