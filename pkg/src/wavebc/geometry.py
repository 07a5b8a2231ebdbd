"""Analytic geometry of the two supported domains.

Two domains are supported:

* ``interval`` -- the half-line truncated at ``L_solver`` and controlled from
  the single endpoint ``x = 0``.  The boundary is one point, so the boundary
  coordinate ``gamma`` is a trivial index and the Jacobian is identically 1.
* ``disc`` -- the disc of radius ``rho`` centred at the origin.  The boundary
  coordinate is the polar angle, the depth is ``rho - |x|`` and the cut locus
  is the centre.

The discrete layout shared by every other module is fixed here: control time
samples sit at cell midpoints ``t_k = (k + 1/2) dt`` and the interior nodes of
the controlled layer sit at depths ``tau_k = (k + 1/2) dt``, so the image
operator is a weighted re-indexing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

KINDS = ("interval", "disc")

#: Default cap on the reconstruction horizon as a fraction of ``T_cut``.
HORIZON_CAP = 0.9


class GeometryError(ValueError):
    """Raised for points outside the domain or on the cut locus."""


class OutOfDomainError(GeometryError):
    pass


class CutLocusError(GeometryError):
    pass


class DimensionError(ValueError):
    """Raised when grids, fields and operators disagree in shape."""


@dataclass(frozen=True)
class DomainSpec:
    """Geometry plus solver resolution.

    For the interval, ``h`` is the space step; the time step equals ``h``.
    For the disc, ``n_radial`` counts radial cells across the controlled layer
    ``0 <= tau <= T`` (the solver pads the annulus with further cells up to
    ``inner_wall_depth``), ``n_angular`` counts solver angles and ``n_gamma``
    counts boundary basis sites.
    """

    kind: str
    L_solver: float = 1.2
    h: float = 1.0 / 400
    rho: float = 1.0
    inner_wall_depth: float = 0.5
    n_angular: int = 128
    n_radial: int = 64
    n_gamma: int = 16

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        for name in ("L_solver", "h", "rho", "inner_wall_depth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("n_angular", "n_radial", "n_gamma"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.kind == "interval" and self.n_gamma != 1:
            object.__setattr__(self, "n_gamma", 1)
        if self.kind == "disc":
            if self.n_angular % self.n_gamma:
                raise ValueError("n_angular must be a multiple of n_gamma")
            if self.inner_wall_depth >= self.rho:
                raise ValueError("inner_wall_depth must be smaller than rho")

    @property
    def T_star(self) -> float:
        return self.L_solver if self.kind == "interval" else self.rho

    @property
    def T_cut(self) -> float:
        return self.L_solver if self.kind == "interval" else self.rho

    @property
    def boundary_measure(self) -> float:
        return 1.0 if self.kind == "interval" else 2 * np.pi * self.rho

    def check_horizon(self, T: float, cap: float = HORIZON_CAP) -> None:
        """Validate a reconstruction horizon against the cut locus and padding."""
        if not T > 0:
            raise ValueError("horizon T must be positive")
        if T >= cap * self.T_cut:
            raise ValueError(
                f"T={T} must stay below {cap} * T_cut = {cap * self.T_cut}")
        if self.kind == "interval" and not self.L_solver > T:
            raise ValueError("interval needs L_solver > T (reflection-free records up to 2T)")
        if self.kind == "disc" and not self.inner_wall_depth > T:
            raise ValueError("disc needs inner_wall_depth > T (reflection-free records up to 2T)")

    def time_step(self, T: float) -> float:
        """Time step shared by solver and control grid for horizon ``T``."""
        if self.kind == "interval":
            return self.h
        return T / self.n_radial

    def n_tau(self, T: float) -> int:
        dt = self.time_step(T)
        n = int(round(T / dt))
        if abs(n * dt - T) > 1e-9 * max(T, 1.0):
            raise ValueError(f"T={T} is not a multiple of the time step {dt}")
        return n

    @cached_property
    def gamma_sites(self) -> np.ndarray:
        """Boundary coordinates of the control basis sites."""
        if self.kind == "interval":
            return np.zeros(1)
        return 2 * np.pi * np.arange(self.n_gamma) / self.n_gamma

    @cached_property
    def gamma_weights(self) -> np.ndarray:
        """Lumped boundary quadrature weight per site (exact polar measure)."""
        return np.full(self.n_gamma, self.boundary_measure / self.n_gamma)


@dataclass(frozen=True)
class SgcPoint:
    gamma: float
    tau: float


def _as_point(domain: DomainSpec, point) -> np.ndarray:
    p = np.atleast_1d(np.asarray(point, dtype=float))
    expected = 1 if domain.kind == "interval" else 2
    if p.shape != (expected,):
        raise DimensionError(f"{domain.kind} points have {expected} coordinate(s)")
    return p


def eikonal(domain: DomainSpec, point) -> float:
    """Distance from ``point`` to the controlled boundary."""
    p = _as_point(domain, point)
    if domain.kind == "interval":
        x = float(p[0])
        if x < 0 or x > domain.L_solver:
            raise OutOfDomainError(f"x={x} outside [0, {domain.L_solver}]")
        return x
    r = float(np.hypot(*p))
    if r > domain.rho * (1 + 1e-12):
        raise OutOfDomainError(f"|x|={r} outside the disc of radius {domain.rho}")
    return domain.rho - min(r, domain.rho)


def sgc_inverse(domain: DomainSpec, point) -> SgcPoint:
    tau = eikonal(domain, point)
    if domain.kind == "interval":
        return SgcPoint(0.0, tau)
    p = _as_point(domain, point)
    if np.hypot(*p) == 0.0:
        raise CutLocusError("the centre of the disc lies on the cut locus")
    return SgcPoint(float(np.arctan2(p[1], p[0]) % (2 * np.pi)), tau)


def _check_tau(domain: DomainSpec, tau: float) -> None:
    if tau < 0:
        raise OutOfDomainError("depth must be non-negative")
    if tau >= domain.T_cut:
        raise CutLocusError(f"depth {tau} reaches the cut locus (T_cut={domain.T_cut})")


def sgc_forward(domain: DomainSpec, p: SgcPoint) -> np.ndarray:
    _check_tau(domain, p.tau)
    if domain.kind == "interval":
        return np.array([p.tau])
    r = domain.rho - p.tau
    return np.array([r * np.cos(p.gamma), r * np.sin(p.gamma)])


def jacobian_beta(domain: DomainSpec, p: SgcPoint) -> float:
    """Volume Jacobian ``beta`` in ``dx = beta dGamma dtau``."""
    _check_tau(domain, p.tau)
    if domain.kind == "interval":
        return 1.0
    return (domain.rho - p.tau) / domain.rho


def beta_profile(domain: DomainSpec, tau: np.ndarray) -> np.ndarray:
    """Vectorised ``jacobian_beta`` over an array of depths."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau >= domain.T_cut) or np.any(tau < 0):
        raise CutLocusError("depths must lie in [0, T_cut)")
    if domain.kind == "interval":
        return np.ones_like(tau)
    return (domain.rho - tau) / domain.rho


@dataclass(frozen=True)
class InteriorGrid:
    """Nodes covering the controlled layer ``Omega^T``.

    Arrays are shaped ``(n_tau, n_gamma)``: row ``k`` is the layer at depth
    ``tau_k = (k + 1/2) dt``, column ``j`` the boundary site ``gamma_j``.
    """

    domain: DomainSpec
    T: float
    tau: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray = field(repr=False)
    cell_volume: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.beta.shape

    @property
    def size(self) -> int:
        return self.beta.size

    @property
    def dt(self) -> float:
        return self.T / self.shape[0]

    def nodes(self) -> np.ndarray:
        """Cartesian coordinates, shape ``(n_tau, n_gamma, dim)``."""
        if self.domain.kind == "interval":
            return self.tau[:, None, None] * np.ones((1, 1, 1))
        r = self.domain.rho - self.tau
        return np.stack([np.outer(r, np.cos(self.gamma)),
                         np.outer(r, np.sin(self.gamma))], axis=-1)


def interior_grid(domain: DomainSpec, T: float) -> InteriorGrid:
    domain.check_horizon(T, cap=1.0)
    n = domain.n_tau(T)
    dt = T / n
    tau = (np.arange(n) + 0.5) * dt
    beta = np.repeat(beta_profile(domain, tau)[:, None], domain.n_gamma, axis=1)
    vol = beta * dt * domain.gamma_weights[None, :]
    return InteriorGrid(domain, T, tau, domain.gamma_sites.copy(), beta, vol)


def pattern_mask(domain: DomainSpec, T: float) -> np.ndarray:
    """Boolean mask of ``Theta^T`` over the control grid of ``Sigma^T``."""
    n = domain.n_tau(T)
    tau = (np.arange(n) + 0.5) * (T / n)
    inside = tau < domain.T_cut
    return np.repeat(inside[:, None], domain.n_gamma, axis=1)


def image_apply(grid: InteriorGrid, y):
    """Image of an interior field: ``beta^(1/2) y`` written in (gamma, tau)."""
    from .trace_spaces import BoundaryTimeField, InteriorField

    values = y.values if isinstance(y, InteriorField) else np.asarray(y, dtype=float)
    if values.shape != grid.shape:
        raise DimensionError(f"field shape {values.shape} != grid shape {grid.shape}")
    mask = pattern_mask(grid.domain, grid.T)
    img = np.where(mask, np.sqrt(grid.beta) * values, 0.0)
    return BoundaryTimeField(img, grid.dt, grid.domain.gamma_weights)


def image_adjoint(grid: InteriorGrid, g):
    """Adjoint of :func:`image_apply`: ``beta^(-1/2) g`` read back at the nodes."""
    from .trace_spaces import BoundaryTimeField, InteriorField

    values = g.values if isinstance(g, BoundaryTimeField) else np.asarray(g, dtype=float)
    if values.shape != grid.shape:
        raise DimensionError(f"field shape {values.shape} != grid shape {grid.shape}")
    return InteriorField(values / np.sqrt(grid.beta), grid.cell_volume)


def image_matrix(grid: InteriorGrid) -> np.ndarray:
    """Diagonal of the image operator on flattened (tau, gamma) indices."""
    return np.sqrt(grid.beta).ravel()
