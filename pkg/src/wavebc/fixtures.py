"""Synthetic clean and corrupted response data for the characterization checks.

Every corrupted fixture is built so that one condition fails while the data
stay as close as possible to a clean case:

* ``non_symmetric`` adds a non-symmetric matrix to the lag-0 block of disc
  data.  The lag-0 block drops out of the connecting operator exactly, so only
  the symmetry relation is affected.
* ``non_psd`` adds ``beta J^{-1}`` to the response, which shifts the
  connecting operator by ``-beta I``.
* ``rescaled`` doubles the kernel.
* ``rough_q`` uses a piecewise-constant potential with ``max|q| = 50``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .bc_inversion import connecting_from_response
from .geometry import DomainSpec
from .trace_spaces import integrate_matrix
from .wave_forward import (NonlocalStencil, PotentialField, ResponseData,
                           make_potential, simulate_pulses, solver_grid)

SMALL_DISC = dict(kind="disc", n_radial=24, n_angular=64, n_gamma=8)
SMALL_DISC_T = 0.35
INTERVAL_H = 1.0 / 200
INTERVAL_T = 0.5


@dataclass
class Fixture:
    name: str
    response: ResponseData
    domain: DomainSpec
    expect_fail: tuple = ()
    q_max_allowed: float | None = None
    q_true: np.ndarray | None = field(default=None, repr=False)


def small_disc() -> DomainSpec:
    return DomainSpec(**SMALL_DISC)


def small_interval() -> DomainSpec:
    return DomainSpec("interval", h=INTERVAL_H)


def _response(domain: DomainSpec, T: float, q=None, K=None) -> ResponseData:
    return simulate_pulses(domain, q, T, K=K).response


def clean_interval() -> Fixture:
    d = small_interval()
    q = make_potential(solver_grid(d, INTERVAL_T), "gaussian", 2.0, 0.25, 0.06)
    return Fixture("clean_interval", _response(d, INTERVAL_T, q), d, q_true=q.values)


def clean_disc() -> Fixture:
    d = small_disc()
    q = make_potential(solver_grid(d, SMALL_DISC_T), "gaussian", 2.0, 0.175, 0.07)
    return Fixture("clean_disc", _response(d, SMALL_DISC_T, q), d, q_true=q.values)


def non_symmetric(rel: float = 0.1, seed: int = 0) -> Fixture:
    base = clean_disc()
    R = base.response
    rng = np.random.default_rng(seed)
    g = R.n_gamma
    B = rng.standard_normal((g, g))
    B -= B.T  # purely antisymmetric part maximises the symmetry defect
    # |I (x) B| = rel |R| in the Frobenius norm
    B *= rel * np.linalg.norm(R.full_matrix()) / (np.linalg.norm(B) * np.sqrt(R.kernel.shape[0]))
    k = R.kernel.copy()
    k[0] += B
    return Fixture("non_symmetric", replace(R, kernel=k), base.domain, ("condition_1",))


def non_psd(shift: float = 0.02) -> Fixture:
    base = clean_interval()
    R = base.response
    lam_max = connecting_from_response(R).lam_max
    n2 = R.kernel.shape[0]
    Jinv = np.linalg.inv(integrate_matrix(n2, R.dt))[:, 0]
    k = R.kernel + shift * lam_max * Jinv[:, None, None] * np.eye(R.n_gamma)[None]
    return Fixture("non_psd", replace(R, kernel=k), base.domain, ("condition_2",))


def rescaled(factor: float = 2.0) -> Fixture:
    base = clean_interval()
    return Fixture("rescaled", base.response.scaled(factor), base.domain, ("condition_5",))


def rough_q(amplitude: float = 50.0, seed: int = 0) -> Fixture:
    d = small_interval()
    grid = solver_grid(d, INTERVAL_T)
    rng = np.random.default_rng(seed)
    n_pieces = 24
    levels = amplitude * rng.uniform(0.6, 1.0, n_pieces)
    levels[rng.integers(n_pieces)] = amplitude
    idx = np.minimum((np.arange(grid.n_cells) * n_pieces) // grid.n_cells, n_pieces - 1)
    q = PotentialField(levels[idx])
    return Fixture("rough_q", _response(d, INTERVAL_T, q), d, ("condition_7",),
                   q_max_allowed=20.0, q_true=q.values)


def nonlocal_k() -> Fixture:
    d = small_disc()
    K = NonlocalStencil((0.5, 1.0, 0.5), spacing=8)
    return Fixture("nonlocal_k", _response(d, SMALL_DISC_T, K=K), d)


def matched_local() -> Fixture:
    """Local potential with the same total weight as :func:`nonlocal_k`."""
    d = small_disc()
    q = make_potential(solver_grid(d, SMALL_DISC_T), "constant", 2.0)
    return Fixture("matched_local", _response(d, SMALL_DISC_T, q), d, q_true=q.values)


CORRUPTED = {"non_symmetric": non_symmetric, "non_psd": non_psd,
             "rescaled": rescaled, "rough_q": rough_q}
CLEAN = {"clean_interval": clean_interval, "clean_disc": clean_disc}
