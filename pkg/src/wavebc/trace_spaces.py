"""Discrete outer and inner spaces and the standard operators acting on them.

Boundary-time fields are sampled at cell midpoints ``t_k = (k + 1/2) dt`` so
that time reversal maps sample ``k`` to ``n - 1 - k`` exactly and every
quadrature weight in time equals ``dt``.  Flattened indices run over
``(k, j)`` with the time index outermost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import DimensionError


@dataclass(frozen=True)
class BoundaryTimeField:
    """Element of ``F^T``: samples on (time, boundary site)."""

    values: np.ndarray
    dt: float
    gamma_weights: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise DimensionError("boundary-time values must be (n_tau, n_gamma)")
        if not np.all(np.isfinite(v)):
            raise ValueError("boundary-time values must be finite")
        gw = np.asarray(self.gamma_weights, dtype=float)
        if gw.shape != (v.shape[1],):
            gw = np.broadcast_to(gw, (v.shape[1],)).copy()
        if np.any(gw <= 0) or not self.dt > 0:
            raise ValueError("quadrature weights must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "gamma_weights", gw)

    @property
    def n_tau(self) -> int:
        return self.values.shape[0]

    @property
    def n_gamma(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return self.n_tau * self.dt

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.n_tau) + 0.5) * self.dt

    @property
    def weights(self) -> np.ndarray:
        return self.dt * np.broadcast_to(self.gamma_weights, self.values.shape)

    def with_values(self, values) -> "BoundaryTimeField":
        return BoundaryTimeField(values, self.dt, self.gamma_weights)

    def inner(self, other: "BoundaryTimeField") -> float:
        _check_same(self, other)
        return float(np.sum(self.weights * self.values * other.values))

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))


@dataclass(frozen=True)
class InteriorField:
    """Element of ``H^T``: values on the interior grid with cell volumes."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.shape != w.shape:
            raise DimensionError("interior values and weights differ in shape")
        if not np.all(np.isfinite(v)):
            raise ValueError("interior values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    def inner(self, other: "InteriorField") -> float:
        if other.values.shape != self.values.shape:
            raise DimensionError("interior fields differ in shape")
        return float(np.sum(self.weights * self.values * other.values))

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense matrix between tagged spaces (flattened (k, j) indices)."""

    entries: np.ndarray
    domain_tag: str
    codomain_tag: str

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2:
            raise DimensionError("operator entries must be a matrix")
        object.__setattr__(self, "entries", e)

    @property
    def shape(self):
        return self.entries.shape

    def __matmul__(self, other):
        return self.entries @ (other.entries if isinstance(other, OperatorMatrix) else other)


def _check_same(f: BoundaryTimeField, g: BoundaryTimeField) -> None:
    if f.values.shape != g.values.shape or not np.isclose(f.dt, g.dt):
        raise DimensionError("boundary-time fields live on different grids")


# -- matrices on the time axis ------------------------------------------------

def reverse_matrix(n: int) -> np.ndarray:
    return np.eye(n)[::-1].copy()


def integrate_matrix(n: int, dt: float) -> np.ndarray:
    """Cumulative integral ``int_0^t`` at midpoint samples.

    ``(J f)_k = dt * (sum_{m<k} f_m + f_k / 2)``: exact for constants and the
    discrete counterpart the leapfrog boundary trace obeys in free space.
    """
    return dt * (np.tril(np.ones((n, n)), -1) + 0.5 * np.eye(n))


def odd_extend_matrix(n: int) -> np.ndarray:
    """Odd extension about ``t = T`` from ``n`` to ``2n`` samples."""
    return np.vstack([np.eye(n), -reverse_matrix(n)])


def delay_matrix(n: int, lag_steps: int) -> np.ndarray:
    return np.eye(n, k=-lag_steps)


def kron_sites(time_op: np.ndarray, n_gamma: int) -> np.ndarray:
    """Lift a time-axis matrix to flattened (time, site) indices."""
    if n_gamma == 1:
        return time_op
    return np.kron(time_op, np.eye(n_gamma))


# -- field operations ------------------------------------------------------------

def time_reverse(f: BoundaryTimeField) -> BoundaryTimeField:
    return f.with_values(f.values[::-1])


def time_integrate(f: BoundaryTimeField) -> BoundaryTimeField:
    v = f.values
    cum = np.cumsum(v, axis=0) - 0.5 * v
    return f.with_values(f.dt * cum)


def anticipating_integrate(f: BoundaryTimeField) -> BoundaryTimeField:
    """Adjoint of :func:`time_integrate`: ``int_t^T``."""
    return time_reverse(time_integrate(time_reverse(f)))


def odd_extend(f: BoundaryTimeField) -> BoundaryTimeField:
    return f.with_values(np.concatenate([f.values, -f.values[::-1]], axis=0))


def odd_restrict(g: BoundaryTimeField) -> BoundaryTimeField:
    """Adjoint of :func:`odd_extend` under the quadrature inner products."""
    if g.n_tau % 2:
        raise DimensionError("odd_restrict needs an even number of samples (horizon 2T)")
    n = g.n_tau // 2
    return g.with_values(g.values[:n] - g.values[n:][::-1])


def _lag_steps(f: BoundaryTimeField, lag: float) -> int:
    if lag < 0:
        raise ValueError("lag must be non-negative")
    steps = int(round(lag / f.dt))
    if abs(steps * f.dt - lag) > 1e-9 * max(f.dt, lag):
        raise ValueError(f"lag {lag} is not a multiple of dt={f.dt}")
    return steps


def delay_shift(f: BoundaryTimeField, lag: float) -> BoundaryTimeField:
    s = _lag_steps(f, lag)
    out = np.zeros_like(f.values)
    if s < f.n_tau:
        out[s:] = f.values[: f.n_tau - s]
    return f.with_values(out)


def _site_mask(n_gamma: int, sigma: Sequence[int] | None) -> np.ndarray:
    mask = np.ones(n_gamma, dtype=bool)
    if sigma is not None:
        mask[:] = False
        mask[np.asarray(list(sigma), dtype=int)] = True
    return mask


def band_mask(n_tau: int, n_gamma: int, xi_steps: int,
              sigma: Sequence[int] | None = None) -> np.ndarray:
    """Samples with ``t_k >= T - xi`` (and sites in ``sigma``)."""
    keep_t = np.arange(n_tau) >= n_tau - xi_steps
    return keep_t[:, None] & _site_mask(n_gamma, sigma)[None, :]


def band_cutoff(f: BoundaryTimeField, xi: float, sigma=None) -> BoundaryTimeField:
    """Projection onto controls supported in ``sigma x [T - xi, T]``."""
    if xi < -1e-12 or xi > f.horizon * (1 + 1e-12):
        raise ValueError(f"xi={xi} outside [0, {f.horizon}]")
    m = int(round(xi / f.dt))
    return f.with_values(np.where(band_mask(f.n_tau, f.n_gamma, m, sigma), f.values, 0.0))


def depth_mask(n_tau: int, n_gamma: int, xi_steps: int,
               sigma: Sequence[int] | None = None, gamma=None,
               dt: float | None = None, boundary_distance=None) -> np.ndarray:
    """Interior nodes in ``Omega_sigma^xi``.

    Without ``sigma`` this keeps the first ``xi_steps`` layers.  With ``sigma``
    a node is kept when its distance to the chosen sites, measured by
    ``boundary_distance(tau, gamma_node, gamma_site)``, is below ``xi``.
    """
    keep = (np.arange(n_tau) < xi_steps)[:, None] & np.ones((1, n_gamma), dtype=bool)
    if sigma is None:
        return keep
    tau = (np.arange(n_tau) + 0.5) * dt
    xi = xi_steps * dt
    sites = np.asarray(gamma)[np.asarray(list(sigma), dtype=int)]
    d = np.min(boundary_distance(tau[:, None, None], np.asarray(gamma)[None, :, None],
                                 sites[None, None, :]), axis=-1)
    return keep & (d < xi)


def depth_cutoff(y: InteriorField, xi: float, dt: float, sigma=None, **kw) -> InteriorField:
    n_tau, n_gamma = y.values.shape
    if xi < -1e-12 or xi > n_tau * dt * (1 + 1e-12):
        raise ValueError(f"xi={xi} outside [0, T]")
    m = int(round(xi / dt))
    mask = depth_mask(n_tau, n_gamma, m, sigma, dt=dt, **kw)
    return InteriorField(np.where(mask, y.values, 0.0), y.weights)


def time_derivative(f: BoundaryTimeField) -> BoundaryTimeField:
    """Central differences with one-sided second-order stencils at both ends."""
    if f.n_tau < 3:
        raise ValueError("time_derivative needs at least three samples")
    return f.with_values(np.gradient(f.values, f.dt, axis=0, edge_order=2))


def dual_time_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """Central differences for dual traces on ``[0, T]``.

    Dual traces vanish at ``t = T`` (zero Cauchy data), so the sequence is
    continued by zero past the last sample and by a constant before the first.
    Both continuations keep the restriction of the stencil to any band of
    samples symmetric and positive definite.
    """
    v = np.asarray(values, dtype=float)
    pad = np.concatenate([v[:1], v, np.zeros_like(v[:1])], axis=0)
    return (pad[2:] - pad[:-2]) / (2 * dt)


# -- smooth controls -----------------------------------------------------------------

@dataclass(frozen=True)
class SmoothControlSpec:
    """Family of smooth controls.

    ``centers`` and ``widths`` are in units of ``T``; ``profile`` holds one
    boundary profile per site (or ``None`` for a constant profile).  Class
    ``M`` controls vanish near ``t = 0``, class ``M0`` near both ends.
    """

    shape: str = "raised_cosine"
    centers: tuple = (0.5,)
    widths: tuple = (0.4,)
    profile: tuple | None = None
    cls: str = "M"


@dataclass(frozen=True)
class SmoothControl:
    """A sampled control with analytic derivatives.

    ``values``/``f_t``/``f_tt`` are sampled at the ``n_tau`` midpoints; the
    ``*_ext`` arrays carry one extra sample at ``T + dt/2``.
    """

    field: BoundaryTimeField
    f_t: np.ndarray
    f_tt: np.ndarray
    ext_value: np.ndarray
    at_T: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def second_difference(self) -> np.ndarray:
        """Discrete second difference matching the leapfrog time stencil."""
        v = self.field.values
        ext = np.concatenate([np.zeros_like(v[:1]), v, self.ext_value[None, :]], axis=0)
        return (ext[2:] - 2 * ext[1:-1] + ext[:-2]) / self.field.dt ** 2


def _pulse(shape: str, s: np.ndarray):
    """Profile, first and second derivative in the scaled variable s."""
    if shape == "raised_cosine":
        inside = np.abs(s) < 0.5
        a = 2 * np.pi
        f = np.where(inside, 0.5 * (1 + np.cos(a * s)), 0.0)
        f1 = np.where(inside, -0.5 * a * np.sin(a * s), 0.0)
        f2 = np.where(inside, -0.5 * a * a * np.cos(a * s), 0.0)
        return f, f1, f2
    if shape == "gaussian_pulse":
        # support truncated at |s| = 0.5 where the pulse is below 1e-8
        k = 64 * np.log(10)
        g = np.exp(-0.5 * k * s * s) * (np.abs(s) < 0.5)
        return g, -k * s * g, (k * k * s * s - k) * g
    raise ValueError(f"unknown control shape {shape!r}")


def make_smooth_controls(spec: SmoothControlSpec, count: int, T: float, dt: float,
                         n_gamma: int = 1, gamma_weights=None) -> list[SmoothControl]:
    """Sample ``count`` controls of the requested class.

    Centres and widths cycle through ``spec.centers`` / ``spec.widths``.
    Supports must start at least one time step after ``t = 0``; a class-M
    pulse may extend past ``T`` (it is simply cut there, so ``f(T)`` can be
    nonzero), a class-M0 pulse must end one step before ``T``.
    """
    if spec.cls not in ("M", "M0"):
        raise ValueError("control class must be 'M' or 'M0'")
    n = int(round(T / dt))
    t = (np.arange(n + 1) + 0.5) * dt
    gw = np.ones(n_gamma) if gamma_weights is None else np.asarray(gamma_weights)
    prof = np.ones(n_gamma) if spec.profile is None else np.asarray(spec.profile, float)
    if prof.shape != (n_gamma,):
        raise DimensionError("profile must have one value per boundary site")
    out = []
    for i in range(count):
        c = spec.centers[i % len(spec.centers)] * T
        w = spec.widths[i % len(spec.widths)] * T
        start, stop = c - w / 2, c + w / 2
        if start < dt - 1e-12:
            raise ValueError(f"control support starts at {start}; class M needs t >= dt")
        if spec.cls == "M0" and stop > T - dt + 1e-12:
            raise ValueError("class M0 controls must vanish near t = T")
        s = (t - c) / w
        f, f1, f2 = _pulse(spec.shape, s)
        vals = np.outer(f, prof)
        f_T = _pulse(spec.shape, np.array([(T - c) / w]))[0]
        out.append(SmoothControl(
            BoundaryTimeField(vals[:n], dt, gw),
            np.outer(f1 / w, prof)[:n],
            np.outer(f2 / w ** 2, prof)[:n],
            vals[n],
            f_T[0] * prof,
        ))
    return out
