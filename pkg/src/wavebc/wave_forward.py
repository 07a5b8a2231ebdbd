"""Leapfrog simulation of the boundary-controlled wave equation.

The interval is discretised with cell-centred nodes ``x_j = (j + 1/2) h`` and
unit Courant number.  The disc is handled on a polar annulus: cell-centred in
the radial direction with ``dr = dt``, pseudo-spectral in angle, with the
angular part of the Laplacian averaged over three time levels with weights
(1/4, 1/2, 1/4) so that the radial Courant condition alone governs stability.

Forcing convention: solver step ``n`` advances from level ``n`` to ``n + 1``
and uses control sample ``n - 1`` (the first step is unforced).  With this
alignment the boundary trace of sample ``k`` is ``u_0^{k+1} + dt/2 f_k`` and
the snapshot at ``t = T`` of an ``n``-sample control is the mean of levels
``n`` and ``n + 1``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import DimensionError, DomainSpec, InteriorGrid, interior_grid
from .trace_spaces import BoundaryTimeField, InteriorField


class ConfigurationError(ValueError):
    """Solver margins, CFL or grid alignment violated."""


# -- angular basis --------------------------------------------------------------

def _site_modes(n_gamma: int):
    """Fourier modes spanned by ``n_gamma`` equispaced sites and their weights."""
    m = np.arange(n_gamma // 2 + 1)
    c = np.where(m == 0, 1.0, 2.0)
    if n_gamma % 2 == 0:
        c[-1] = 1.0
    return m, c


def prolongation_matrix(n_fine: int, n_gamma: int) -> np.ndarray:
    """Trig-cardinal prolongation from boundary sites to fine solver angles.

    Columns are isometric under the lumped quadratures of both grids, i.e.
    ``P* P = I`` with ``P* = (n_gamma / n_fine) P^T``.  For an even number of
    sites the Nyquist mode is scaled by ``sqrt(2)`` to keep this exact.
    """
    if n_fine % n_gamma:
        raise DimensionError("fine angle count must be a multiple of n_gamma")
    if n_gamma == 1:
        return np.ones((n_fine, 1))
    th_f = 2 * np.pi * np.arange(n_fine) / n_fine
    th_s = 2 * np.pi * np.arange(n_gamma) / n_gamma
    P = np.full((n_fine, n_gamma), 1.0)
    m_all, _ = _site_modes(n_gamma)
    for m in m_all[1:]:
        if n_gamma % 2 == 0 and m == n_gamma // 2:
            P += np.sqrt(2) * np.outer(np.cos(m * th_f), np.cos(m * th_s))
        else:
            P += 2 * np.cos(m * (th_f[:, None] - th_s[None, :]))
    return P / n_gamma


def site_angular_laplacian(n_gamma: int) -> np.ndarray:
    """Second angular derivative acting on site coefficients (``d^2/dtheta^2``)."""
    if n_gamma == 1:
        return np.zeros((1, 1))
    P = prolongation_matrix(n_gamma * 4, n_gamma)
    n_f = P.shape[0]
    k = np.fft.fftfreq(n_f, 1.0 / n_f)
    D2 = np.real(np.fft.ifft(-(k ** 2)[:, None] * np.fft.fft(P, axis=0), axis=0))
    return (n_gamma / n_f) * P.T @ D2


# -- grids and fields -----------------------------------------------------------------

@dataclass(frozen=True)
class SolverGrid:
    """Cell-centred solver grid for a horizon ``T``.

    ``depth`` holds the depths of the radial (or 1D) cells; ``dt`` equals the
    cell size, so interior-grid layers coincide with the first ``n_tau``
    solver cells.
    """

    domain: DomainSpec
    T: float
    dt: float
    n_cells: int
    n_angular: int

    @property
    def depth(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dt

    @property
    def shape(self) -> tuple:
        if self.domain.kind == "interval":
            return (self.n_cells,)
        return (self.n_cells, self.n_angular)

    @property
    def radius(self) -> np.ndarray:
        return self.domain.rho - self.depth

    @property
    def angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_angular) / self.n_angular

    @property
    def n_tau(self) -> int:
        return int(round(self.T / self.dt))

    def coordinates(self) -> np.ndarray:
        """Cartesian coordinates of the nodes, shape ``grid.shape + (dim,)``."""
        if self.domain.kind == "interval":
            return self.depth[:, None]
        r, th = self.radius[:, None], self.angles[None, :]
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def solver_grid(domain: DomainSpec, T: float) -> SolverGrid:
    dt = domain.time_step(T)
    domain.n_tau(T)
    if domain.kind == "interval":
        n_cells = int(round(domain.L_solver / dt))
        if n_cells * dt <= T:
            raise ConfigurationError("interval too short: records up to 2T would see the far end")
        return SolverGrid(domain, T, dt, n_cells, 1)
    n_cells = int(np.ceil(domain.inner_wall_depth / dt - 1e-9))
    if n_cells * dt <= T:
        raise ConfigurationError("inner wall too shallow for reflection-free records up to 2T")
    if n_cells * dt >= domain.rho:
        raise ConfigurationError("inner wall reaches the centre of the disc")
    return SolverGrid(domain, T, dt, n_cells, domain.n_angular)


@dataclass(frozen=True)
class PotentialField:
    """Potential sampled at solver nodes."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("potential must be finite")
        object.__setattr__(self, "values", v)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def make_potential(grid: SolverGrid, kind: str = "zero", amplitude: float = 0.0,
                   center: float = 0.4, width: float = 0.1,
                   func: Callable | None = None) -> PotentialField:
    """Sample a potential on the solver grid.

    ``gaussian`` is ``amplitude * exp(-((tau - center) / width)^2)`` in the
    depth variable, which on the disc is radially symmetric.  ``function``
    evaluates ``func`` at Cartesian node coordinates.
    """
    tau = np.broadcast_to(grid.depth[:, None], (grid.n_cells, grid.n_angular))
    if grid.domain.kind == "interval":
        tau = tau[:, 0]
    if kind == "zero":
        v = np.zeros_like(tau)
    elif kind == "constant":
        v = np.full_like(tau, amplitude)
    elif kind == "gaussian":
        v = amplitude * np.exp(-(((tau - center) / width) ** 2))
    elif kind == "function":
        xy = grid.coordinates()
        v = np.asarray(func(*np.moveaxis(xy, -1, 0)), dtype=float) * np.ones_like(tau)
    else:
        raise ValueError(f"unknown potential kind {kind!r}")
    return PotentialField(np.array(v))


@dataclass(frozen=True)
class NonlocalStencil:
    """Symmetric convolution ``(K * u)(x) = sum_k w_k u(x + k s)``.

    Offsets run from ``-r`` to ``r`` with ``r = (len(weights) - 1) // 2`` and
    spacing ``s`` in solver cells; on the disc the shift is angular.  Zero
    padding is used at the ends of the interval.
    """

    weights: tuple
    spacing: int = 1

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) % 2 == 0:
            raise ValueError("stencil needs an odd number of weights")
        if not np.allclose(w, w[::-1]):
            raise ValueError("stencil must be symmetric")
        if self.spacing < 1:
            raise ValueError("stencil spacing must be positive")

    def apply(self, u: np.ndarray) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        r = (len(w) - 1) // 2
        out = np.zeros_like(u)
        for i, wk in enumerate(w):
            off = (i - r) * self.spacing
            if wk == 0.0:
                continue
            if u.ndim == 1:
                s = np.zeros_like(u)
                if off >= 0:
                    s[: len(u) - off] = u[off:]
                else:
                    s[-off:] = u[: len(u) + off]
            else:
                s = np.roll(u, -off, axis=1)
            out += wk * s
        return out


@dataclass(frozen=True)
class SpaceTimeField:
    """Solution levels ``u^0 .. u^N`` plus the recorded boundary trace."""

    values: np.ndarray
    dt_solver: float
    trace: np.ndarray
    cfl: float = 1.0

    def snapshot(self, n: int) -> np.ndarray:
        """Wave at ``t = n dt``: mean of levels ``n`` and ``n + 1``."""
        return 0.5 * (self.values[n] + self.values[n + 1])


# -- the scheme -----------------------------------------------------------------------

class _Scheme:
    """Spatial operator, mass solve and boundary source of the leapfrog."""

    def __init__(self, grid: SolverGrid, q: PotentialField | None,
                 K: NonlocalStencil | None = None):
        self.grid = grid
        if q is not None and q.values.shape != grid.shape:
            raise DimensionError(f"potential shape {q.values.shape} != solver grid {grid.shape}")
        self.q = None if q is None else q.values
        self.K = K
        dt = grid.dt
        if grid.domain.kind == "disc":
            r = grid.radius
            self.r = r
            self.r_face = grid.domain.rho - np.arange(grid.n_cells + 1) * dt
            self.r_face[-1] = 0.0  # homogeneous Neumann at the inner wall
            m = np.fft.rfftfreq(grid.n_angular, 1.0 / grid.n_angular)
            self.ang = -(m[None, :] ** 2) / (r[:, None] ** 2)
            self.mass = 1.0 - 0.25 * dt * dt * self.ang
            self.src = grid.domain.rho / (r[0] * dt)
        else:
            self.src = 1.0 / dt

    def potential_term(self, u):
        out = 0.0
        if self.q is not None:
            out = self.q * u
        if self.K is not None:
            out = out + self.K.apply(u)
        return out

    def rhs(self, u: np.ndarray) -> np.ndarray:
        """``(Laplacian - q) u`` without the boundary source, in physical space."""
        dt = self.grid.dt
        if self.grid.domain.kind == "interval":
            lap = np.empty_like(u)
            lap[1:-1] = u[2:] - 2 * u[1:-1] + u[:-2]
            lap[0] = u[1] - u[0]
            lap[-1] = u[-2] - u[-1]
            return lap / dt ** 2 - self.potential_term(u)
        rf = self.r_face
        flux = np.zeros((u.shape[0] + 1, u.shape[1]))
        flux[1:-1] = rf[1:-1, None] * (u[1:] - u[:-1])
        lap_r = (flux[1:] - flux[:-1]) / (self.r[:, None] * dt ** 2)
        return lap_r - self.potential_term(u)

    def advance(self, u: np.ndarray, u_prev: np.ndarray, flux) -> np.ndarray:
        """One leapfrog step with boundary flux ``flux`` (scalar or per angle)."""
        dt = self.grid.dt
        acc = self.rhs(u)
        if self.grid.domain.kind == "interval":
            acc[0] += self.src * flux
            return 2 * u - u_prev + dt * dt * acc
        acc[0] += self.src * flux
        spec = np.fft.rfft(acc, axis=1)
        spec += self.ang * np.fft.rfft(u, axis=1)
        spec /= self.mass
        return 2 * u - u_prev + dt * dt * np.fft.irfft(spec, n=self.grid.n_angular, axis=1)


def _run(scheme: _Scheme, forcing: np.ndarray, n_steps: int, profile=None, keep=True):
    """March ``n_steps`` steps; step ``n`` applies flux ``forcing[n] * profile``."""
    grid = scheme.grid
    u_prev = np.zeros(grid.shape)
    u = np.zeros(grid.shape)
    levels = [u.copy()] if keep else None
    boundary = [u[0].copy()]
    prof = 1.0 if profile is None else profile
    for n in range(n_steps):
        flux = forcing[n] * prof if n < len(forcing) else 0.0
        u_next = scheme.advance(u, u_prev, flux)
        if not np.all(np.isfinite(u_next)):
            raise FloatingPointError(f"solver diverged at step {n}")
        u_prev, u = u, u_next
        if keep:
            levels.append(u.copy())
        boundary.append(u[0].copy())
    return levels, np.array(boundary)


def _forcing_from_control(values: np.ndarray) -> np.ndarray:
    """Per-step forcing: step n uses sample n - 1."""
    return np.concatenate([np.zeros((1,) + values.shape[1:]), values], axis=0)


def _fine_profile(grid: SolverGrid, site_values: np.ndarray) -> np.ndarray:
    P = prolongation_matrix(grid.n_angular, grid.domain.n_gamma)
    return site_values @ P.T


def _restrict(grid: SolverGrid, fine: np.ndarray) -> np.ndarray:
    """Fine angles -> site coefficients (last axis)."""
    d = grid.domain
    P = prolongation_matrix(grid.n_angular, d.n_gamma)
    return (d.n_gamma / grid.n_angular) * fine @ P


def solve_ibvp(domain: DomainSpec, q: PotentialField | None, f: BoundaryTimeField,
               t_end: float, T: float | None = None,
               K: NonlocalStencil | None = None) -> SpaceTimeField:
    """Solve with zero Cauchy data and Neumann flux ``f`` up to ``t_end``.

    ``f`` lives on the control grid (per boundary site).  ``T`` fixes the
    solver grid (defaults to the control horizon).  Levels ``0 .. N + 1``
    are kept, ``N = t_end / dt``, so the snapshot at ``t_end`` is available.
    """
    T = f.horizon if T is None else T
    grid = solver_grid(domain, T)
    if abs(f.dt - grid.dt) > 1e-12 * grid.dt:
        raise ConfigurationError("control time step must equal the solver step")
    if t_end > 2 * T * (1 + 1e-12):
        raise ConfigurationError("t_end exceeds the reflection-free window 2T")
    n_end = int(round(t_end / grid.dt))
    scheme = _Scheme(grid, q, K)
    ctrl = f.values[:, 0] if domain.kind == "interval" else _fine_profile(grid, f.values)
    levels, bnd = _run(scheme, _forcing_from_control(ctrl), n_end + 1)
    pad = np.zeros((n_end,) + ctrl.shape[1:])
    m = min(n_end, ctrl.shape[0])
    pad[:m] = ctrl[:m]
    trace = bnd[1: n_end + 1] + 0.5 * grid.dt * pad
    trace = trace[:, None] if domain.kind == "interval" else _restrict(grid, trace)
    return SpaceTimeField(np.array(levels), grid.dt, trace)


def control_operator_ref(domain: DomainSpec, q: PotentialField | None,
                         f: BoundaryTimeField, T: float | None = None,
                         K: NonlocalStencil | None = None) -> InteriorField:
    """Forward-solver snapshot ``u^f(., T)`` on the interior grid."""
    T = f.horizon if T is None else T
    if f.n_tau != domain.n_tau(T):
        raise DimensionError("control horizon must equal T")
    sol = solve_ibvp(domain, q, f, T, T=T, K=K)
    grid = interior_grid(domain, T)
    snap = sol.snapshot(grid.shape[0])[: grid.shape[0]]
    if domain.kind == "interval":
        vals = snap[:, None]
    else:
        vals = _restrict(solver_grid(domain, T), snap)
    return InteriorField(vals, grid.cell_volume)


# -- response data ------------------------------------------------------------------------

@dataclass(frozen=True)
class ResponseData:
    """Sampled response operator ``R^{2T}`` as a block-Toeplitz kernel.

    ``kernel[k, j, i]`` is the trace sample ``k`` at site ``j`` produced by a
    unit pulse in control sample 0 at site ``i``.
    """

    kernel: np.ndarray
    T: float
    dt: float
    gamma_weights: np.ndarray
    kind: str = "interval"
    synthetic_noise_level: float = 0.0
    nonlocal_source: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        if k.ndim != 3 or k.shape[1] != k.shape[2]:
            raise DimensionError("kernel must be shaped (n_t, n_gamma, n_gamma)")
        if not np.all(np.isfinite(k)):
            raise ValueError("response kernel must be finite")
        if k.shape[0] != 2 * self.n_tau:
            raise DimensionError(f"kernel has {k.shape[0]} samples, expected 2T/dt = {2 * self.n_tau}")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "gamma_weights", np.asarray(self.gamma_weights, dtype=float))

    @property
    def n_tau(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def n_gamma(self) -> int:
        return self.kernel.shape[1]

    def full_matrix(self, n_samples: int | None = None) -> np.ndarray:
        """Lower block-Toeplitz matrix on flattened (time, site) indices."""
        n = self.kernel.shape[0] if n_samples is None else n_samples
        g = self.n_gamma
        out = np.zeros((n, g, n, g))
        for lag in range(n):
            blk = self.kernel[lag]
            for m in range(n - lag):
                out[m + lag, :, m, :] = blk
        return out.reshape(n * g, n * g)

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Response to a control given as an (n_t, n_gamma) array."""
        f = np.asarray(f, dtype=float)
        n = f.shape[0]
        out = np.zeros_like(f)
        for lag in range(n):
            out[lag:] += f[: n - lag] @ self.kernel[lag].T
        return out

    def scaled(self, factor: float) -> "ResponseData":
        return replace(self, kernel=self.kernel * factor)


@dataclass(frozen=True)
class PulseSolution:
    """Response kernel and reference control operator from one set of solves."""

    response: ResponseData
    W: np.ndarray  # interior (k, s) x control (m, i), flattened
    grid: InteriorGrid


def _pulse_solve(scheme: _Scheme, grid: SolverGrid, site: int):
    d = grid.domain
    n = grid.n_tau
    forcing = np.zeros(2 * n + 1)
    forcing[1] = 1.0
    if d.kind == "interval":
        profile = None
    else:
        e = np.zeros(d.n_gamma)
        e[site] = 1.0
        profile = _fine_profile(grid, e)
    levels, bnd = _run(scheme, forcing, 2 * n, profile=profile)
    tr = bnd[1: 2 * n + 1].copy()
    tr[0] = tr[0] + 0.5 * grid.dt * (1.0 if profile is None else profile)
    # snapshots of the pulse wave at levels 1..n+1, cells of the controlled layer
    snaps = np.array(levels[: n + 2])[:, :n]
    if d.kind == "interval":
        return tr[:, None], snaps[..., None]
    return _restrict(grid, tr), _restrict(grid, snaps)


def simulate_pulses(domain: DomainSpec, q: PotentialField | None, T: float,
                    K: NonlocalStencil | None = None, workers: int = 1,
                    deterministic: bool = True) -> PulseSolution:
    """One forward solve per boundary site; returns ``R^{2T}`` and ``W_ref``.

    Shift invariance in time gives the response to a pulse in sample ``m`` as
    the sample-0 response delayed by ``m``, so the kernel and all columns of
    the reference control operator follow from these solves.
    """
    domain.check_horizon(T, cap=1.0)
    grid = solver_grid(domain, T)
    scheme = _Scheme(grid, q, K)
    sites = range(domain.n_gamma)
    if workers > 1 and not deterministic:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda s: _pulse_solve(scheme, grid, s), sites))
    else:
        results = [_pulse_solve(scheme, grid, s) for s in sites]
    n, g = grid.n_tau, domain.n_gamma
    kernel = np.stack([r[0] for r in results], axis=-1)  # (2n, j, i)
    W = np.zeros((n, g, n, g))
    for i, (_, snaps) in enumerate(results):
        for m in range(n):
            W[:, :, m, i] = 0.5 * (snaps[n - m] + snaps[n + 1 - m])
    igrid = interior_grid(domain, T)
    resp = ResponseData(kernel, T, grid.dt, domain.gamma_weights, kind=domain.kind,
                        nonlocal_source=K is not None, meta=domain_meta(domain))
    return PulseSolution(resp, W.reshape(n * g, n * g), igrid)


def domain_meta(domain: DomainSpec) -> dict:
    keys = ("kind", "L_solver", "h", "rho", "inner_wall_depth", "n_angular", "n_radial", "n_gamma")
    return {k: getattr(domain, k) for k in keys}


def assemble_response(domain: DomainSpec, q: PotentialField | None, T: float,
                      **kw) -> ResponseData:
    return simulate_pulses(domain, q, T, **kw).response


def assemble_response_nonlocal(domain: DomainSpec, K: NonlocalStencil, T: float,
                               q: PotentialField | None = None, **kw) -> ResponseData:
    """Response with ``q u`` replaced by ``K * u`` (plus an optional local part)."""
    return simulate_pulses(domain, q, T, K=K, **kw).response


def control_matrix_ref(domain: DomainSpec, q: PotentialField | None, T: float,
                       **kw) -> np.ndarray:
    return simulate_pulses(domain, q, T, **kw).W


# -- dual system -----------------------------------------------------------------------------

def solve_dual(domain: DomainSpec, q: PotentialField | None, y: InteriorField,
               T: float, K: NonlocalStencil | None = None) -> BoundaryTimeField:
    """Observation ``O^T y``: boundary trace of the time-reversed Cauchy problem.

    The dual wave has zero value at ``t = T`` and velocity ``y`` with respect
    to the reversed time ``s = T - t`` (so ``v_t = -y`` in forward time, the
    sign for which ``(W f, y) = (f, O y)`` holds), with homogeneous Neumann
    data.  It is marched backwards from the half levels ``T -+ dt/2`` and
    sampled at the control midpoints.
    """
    grid = solver_grid(domain, T)
    igrid = interior_grid(domain, T)
    if y.values.shape != igrid.shape:
        raise DimensionError("dual initial data must live on the interior grid")
    n = grid.n_tau
    scheme = _Scheme(grid, q, K)
    vel = np.zeros(grid.shape)
    if domain.kind == "interval":
        vel[:n] = y.values[:, 0]
    else:
        vel[:n] = y.values @ prolongation_matrix(grid.n_angular, domain.n_gamma).T
    # levels v(T + dt/2) = -dt/2 y and v(T - dt/2) = dt/2 y; march backwards
    v_after = -0.5 * grid.dt * vel
    v_now = 0.5 * grid.dt * vel
    out = [v_now[0].copy()]
    for _ in range(n - 1):
        v_next = scheme.advance(v_now, v_after, 0.0)
        v_after, v_now = v_now, v_next
        out.append(v_now[0].copy())
    tr = np.array(out)[::-1]  # sample k sits at t_k = (k + 1/2) dt
    if domain.kind == "disc":
        tr = _restrict(grid, tr)
    else:
        tr = tr[:, None]
    return BoundaryTimeField(tr, grid.dt, domain.gamma_weights)


def potential_on_interior(grid: SolverGrid, q: PotentialField | None) -> np.ndarray:
    """Sample a solver-grid potential at the interior nodes ``(tau_k, gamma_j)``."""
    n, g = grid.n_tau, grid.domain.n_gamma
    if q is None:
        return np.zeros((n, g))
    if grid.domain.kind == "interval":
        return q.values[:n, None].copy()
    return q.values[:n, :: grid.n_angular // g].copy()


def add_relative_noise(R: ResponseData, level: float, seed: int = 0) -> ResponseData:
    """Additive Gaussian noise on the kernel with relative Frobenius size ``level``."""
    if level < 0:
        raise ValueError("noise level must be non-negative")
    if level == 0:
        return R
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(R.kernel.shape)
    e *= level * np.linalg.norm(R.kernel) / np.linalg.norm(e)
    return replace(R, kernel=R.kernel + e, synthetic_noise_level=float(level))
