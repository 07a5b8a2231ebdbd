"""Reconstruction of interior waves and of the potential from response data.

Pipeline: connecting operator from the response kernel, truncated PSD square
root, nest of projections onto ``C^{1/2} F^{T,xi}``, amplitude integral,
reconstructed control operator and finally the potential from the graph
``{W f, W f_tt}``.

Matrices act on flattened (time sample, site) indices.  All control weights
are equal (``dt * |Gamma| / n_gamma``), so adjoints are plain transposes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .geometry import DimensionError, DomainSpec, InteriorGrid, image_matrix, interior_grid
from .trace_spaces import (OperatorMatrix, SmoothControl, SmoothControlSpec,
                           dual_time_derivative, integrate_matrix, kron_sites,
                           make_smooth_controls, odd_extend_matrix)
from .wave_forward import ResponseData, site_angular_laplacian


class NotPSDError(ValueError):
    """Connecting operator has a significantly negative eigenvalue."""


class DegenerateConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class InversionConfig:
    """Knobs of the reconstruction.

    ``partition_step`` is in control samples.  ``margin_gamma``/``margin_T``
    are lengths; ``None`` means three cells.  ``second_derivative`` selects
    the time derivative of the test controls used in the potential step:
    ``analytic`` (closed form, second-order accurate) or ``discrete``
    (second difference of the samples, which the leapfrog reproduces exactly).
    ``control_width`` is the support of the default test pulses in units of T.
    ``smoothing`` (cells, 0 = off) is the width of a Gaussian window over
    which the pointwise graph equations are pooled; it trades resolution for
    robustness when the waves carry noise that the Laplacian would amplify.
    """

    partition_step: int = 1
    spectral_floor: float = 1e-14
    positivity_tol: float = 1e-8
    projection_rank_tol: float = 1e-10
    denom_threshold: float = 0.05
    margin_gamma: float | None = None
    margin_T: float | None = None
    n_test_controls: int = 8
    second_derivative: str = "analytic"
    control_width: float = 0.9
    smoothing: float = 0.0

    def __post_init__(self):
        if int(self.partition_step) < 1:
            raise ValueError("partition_step must be a positive number of samples")
        for name in ("spectral_floor", "positivity_tol", "projection_rank_tol",
                     "denom_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.smoothing < 0:
            raise ValueError("smoothing must be non-negative")
        if self.n_test_controls < 1:
            raise ValueError("n_test_controls must be positive")
        if self.second_derivative not in ("discrete", "analytic"):
            raise ValueError("second_derivative must be 'discrete' or 'analytic'")

    def margins(self, T: float, dt: float) -> tuple[float, float]:
        mg = 3 * dt if self.margin_gamma is None else self.margin_gamma
        mt = 3 * dt if self.margin_T is None else self.margin_T
        if not (0 < mg < T / 4 and 0 < mt < T / 4):
            raise ValueError("margins must be positive and below T/4")
        return mg, mt


def domain_from_response(R: ResponseData) -> DomainSpec:
    """Rebuild the domain description carried in the response metadata."""
    keys = ("L_solver", "h", "rho", "inner_wall_depth", "n_angular", "n_radial", "n_gamma")
    kw = {k: R.meta[k] for k in keys if k in R.meta and k != "kind"}
    if R.kind == "interval":
        kw.setdefault("h", R.dt)
        kw.setdefault("L_solver", max(1.2, 1.5 * R.T))
    else:
        kw.setdefault("n_gamma", R.n_gamma)
        kw.setdefault("n_radial", R.n_tau)
        kw.setdefault("rho", float(R.gamma_weights[0] * R.n_gamma / (2 * np.pi)))
    return DomainSpec(R.kind, **kw)


# -- connecting operator ---------------------------------------------------------------

@dataclass
class ConnectingOperator:
    matrix: OperatorMatrix
    asymmetry: float
    spectral_floor: float
    eigvals: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)

    @property
    def lam_max(self) -> float:
        return float(max(self.eigvals[-1], 0.0))

    @property
    def lam_min_ratio(self) -> float:
        return float(self.eigvals[0] / self.eigvals[-1]) if self.eigvals[-1] > 0 else -np.inf

    @property
    def retained_rank(self) -> int:
        return int(np.sum(self.eigvals > self.spectral_floor * self.lam_max))


def connecting_matrix(R: ResponseData) -> np.ndarray:
    """Unsymmetrised ``-1/2 S* R J S`` on the control grid."""
    n, g = R.n_tau, R.n_gamma
    Rm = R.full_matrix()
    J2 = kron_sites(integrate_matrix(2 * n, R.dt), g)
    S = kron_sites(odd_extend_matrix(n), g)
    return -0.5 * S.T @ (Rm @ (J2 @ S))


def connecting_from_response(R: ResponseData, spectral_floor: float = 1e-8) -> ConnectingOperator:
    if not np.allclose(R.gamma_weights, R.gamma_weights[0]):
        raise DimensionError("unequal boundary weights are not supported")
    C = connecting_matrix(R)
    nrm = np.linalg.norm(C)
    asym = float(np.linalg.norm(C - C.T) / nrm) if nrm > 0 else 0.0
    C = 0.5 * (C + C.T)
    lam, U = np.linalg.eigh(C)
    return ConnectingOperator(OperatorMatrix(C, "F^T", "F^T"), asym, spectral_floor, lam, U)


def psd_sqrt(C: ConnectingOperator, positivity_tol: float = 1e-8) -> OperatorMatrix:
    """Square root with eigenvalues below ``spectral_floor * lam_max`` dropped."""
    lam, U = C.eigvals, C.eigvecs
    if lam[-1] <= 0:
        raise NotPSDError("connecting operator has no positive spectrum")
    if lam[0] < -positivity_tol * lam[-1]:
        raise NotPSDError(
            f"lambda_min / lambda_max = {lam[0] / lam[-1]:.3e} below -{positivity_tol:.1e}")
    keep = lam > C.spectral_floor * lam[-1]
    root = (U[:, keep] * np.sqrt(lam[keep])) @ U[:, keep].T
    return OperatorMatrix(root, "F^T", "F^T")


# -- nest of projections -------------------------------------------------------------------

def nest_columns(n_tau: int, n_gamma: int, xi_steps: int, sigma=None) -> np.ndarray:
    """Flattened control indices with ``t_k >= T - xi`` (sites in ``sigma``)."""
    ks = np.arange(n_tau - xi_steps, n_tau)
    sites = np.arange(n_gamma) if sigma is None else np.asarray(list(sigma), dtype=int)
    return (ks[:, None] * n_gamma + sites[None, :]).ravel()


def orthonormal_span(B: np.ndarray, scale: float, rank_tol: float,
                     against: np.ndarray | None = None) -> np.ndarray:
    """Orthonormal basis of ``span(B)`` minus ``span(against)``, rank-revealing."""
    if against is not None and against.shape[1]:
        for _ in range(2):
            B = B - against @ (against.T @ B)
    if B.shape[1] == 0:
        return np.zeros((B.shape[0], 0))
    U, s, _ = np.linalg.svd(B, full_matrices=False)
    return U[:, s > rank_tol * scale]


def nest_projection(C_half: OperatorMatrix, n_gamma: int, xi_steps: int, sigma=None,
                    rank_tol: float = 1e-10) -> np.ndarray:
    """Orthogonal projection onto ``C^{1/2} F_sigma^{T,xi}``."""
    M = C_half.entries
    n_tau = M.shape[0] // n_gamma
    if not 0 <= xi_steps <= n_tau:
        raise ValueError(f"xi index {xi_steps} outside the nest [0, {n_tau}]")
    cols = nest_columns(n_tau, n_gamma, xi_steps, sigma)
    Q = orthonormal_span(M[:, cols], np.linalg.norm(M, 2), rank_tol)
    return Q @ Q.T


# -- amplitude integral ------------------------------------------------------------------------

@dataclass
class AmplitudeOperator:
    matrix: OperatorMatrix
    partition: np.ndarray
    isometry_defect: float
    coisometry_defect: float
    raw_defect: float
    retained: np.ndarray = field(repr=False)


def _time_derivative_columns(G: np.ndarray, n_tau: int, n_gamma: int, dt: float) -> np.ndarray:
    g = G.reshape(n_tau, n_gamma, -1)
    return dual_time_derivative(g, dt).reshape(G.shape)


def _polar_factor(M: np.ndarray, rank_tol: float) -> np.ndarray:
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = s > rank_tol * max(s[0], 1e-300) if s.size else s > 0
    return U[:, keep] @ Vt[keep]


def amplitude_integral(C_half: OperatorMatrix, n_gamma: int, dt: float,
                       partition_step: int = 4, rank_tol: float = 1e-10,
                       normalize: bool = True) -> AmplitudeOperator:
    """Discrete amplitude integral over a uniform partition of ``[0, T]``.

    Each belt ``i`` contributes ``-Y dX_i D_t C^{1/2} dP_i``.  With
    ``normalize`` the belt block is replaced by its polar (nearest
    isometric) factor, which cancels the smoothing of the central time
    difference inside thin belts; the raw sum is always formed as well and
    its defect recorded.
    """
    M = C_half.entries
    N = M.shape[0]
    n_tau = N // n_gamma
    if n_tau * n_gamma != N:
        raise DimensionError("C^{1/2} size is not a multiple of n_gamma")
    step = int(partition_step)
    if step < 1 or step > n_tau:
        raise ValueError("partition step must lie in [1, n_tau] samples")
    scale = np.linalg.norm(M, 2)
    A = np.zeros((N, N))
    A_raw = np.zeros((N, N))
    basis = np.zeros((N, 0))
    thresholds = [0]
    # Y maps sample k to n_tau - 1 - k within each site
    rev = (np.arange(n_tau)[::-1][:, None] * n_gamma + np.arange(n_gamma)[None, :]).ravel()
    for lo in range(0, n_tau, step):
        hi = min(lo + step, n_tau)
        thresholds.append(hi)
        cols = nest_columns(n_tau, n_gamma, hi)[: (hi - lo) * n_gamma]
        Qi = orthonormal_span(M[:, cols], scale, rank_tol, against=basis)
        if Qi.shape[1] == 0:
            continue
        basis = np.hstack([basis, Qi])
        D = _time_derivative_columns(M @ Qi, n_tau, n_gamma, dt)
        belt = cols
        blk = D[belt]
        out = np.zeros((N, Qi.shape[1]))
        out[rev[belt]] = -blk
        A_raw += out @ Qi.T
        if normalize:
            out[rev[belt]] = -_polar_factor(blk, rank_tol)
            A += out @ Qi.T
    if not normalize:
        A = A_raw
    P_ret = basis @ basis.T
    iso = _defect(A.T @ A, P_ret)
    raw = _defect(A_raw.T @ A_raw, P_ret)
    AAt = A @ A.T
    co = _defect(AAt, np.eye(N)) if basis.shape[1] == N else _defect(AAt, A @ P_ret @ A.T)
    return AmplitudeOperator(OperatorMatrix(A, "F^T", "F^T"),
                             np.array(thresholds) * dt, iso, co, raw, basis)


def _defect(X: np.ndarray, P: np.ndarray) -> float:
    """Spectral-norm distance ``|| P X P - P ||`` on the retained subspace."""
    if not np.any(P):
        return 0.0
    return float(np.linalg.norm(P @ X @ P - P, 2))


def reconstruct_control(A: AmplitudeOperator, C_half: OperatorMatrix,
                        grid: InteriorGrid) -> OperatorMatrix:
    """``W_rec = I* A C^{1/2}`` from controls to interior nodes."""
    V = A.matrix.entries @ C_half.entries
    if V.shape[0] != grid.size:
        raise DimensionError(f"operator size {V.shape[0]} != interior grid size {grid.size}")
    return OperatorMatrix(V / image_matrix(grid)[:, None], "F^T", "H^T")


# -- potential ---------------------------------------------------------------------------------

@dataclass
class RecoveredPotential:
    values: np.ndarray
    reliability_mask: np.ndarray
    grid: InteriorGrid = field(repr=False)
    residual_stats: dict = field(default_factory=dict)

    def relative_error(self, q_true: np.ndarray) -> float:
        m = self.reliability_mask
        return float(np.linalg.norm((self.values - q_true)[m]) / np.linalg.norm(q_true[m]))


def default_test_controls(T: float, dt: float, count: int, n_gamma: int = 1,
                          gamma_weights=None, width: float = 0.9,
                          shape: str = "gaussian_pulse") -> list[SmoothControl]:
    """Class-M pulses of one width with centres spread over the admissible range.

    Supports start at least two samples after ``t = 0``.  Wide, smooth pulses
    keep the error of replacing the scheme's time differences by analytic
    derivatives small.
    """
    lo = width / 2 + 2 * dt / T
    hi = 1.0 - width / 2
    if hi < lo:
        raise ValueError("control width too large for a class-M support")
    centres = tuple(np.linspace(lo, hi, count))
    spec = SmoothControlSpec(shape, centres, (width,), None, "M")
    return make_smooth_controls(spec, count, T, dt, n_gamma, gamma_weights)


def interior_laplacian(grid: InteriorGrid, w: np.ndarray, w_ang: np.ndarray | None = None) -> np.ndarray:
    """Discrete Laplacian on the interior grid (one-sided at the layer edges).

    For the disc the radial part uses the flux form of the solver and the
    angular part acts on ``w_ang`` (defaults to ``w``) through the site basis.
    """
    dt = grid.dt
    n = w.shape[0]
    if grid.domain.kind == "interval":
        pad = np.concatenate([w[:1], w, np.zeros_like(w[:1])], axis=0)
        return (pad[2:] - 2 * pad[1:-1] + pad[:-2]) / dt ** 2
    rho = grid.domain.rho
    r = rho - grid.tau
    r_face = rho - np.arange(n + 1) * dt
    flux = np.zeros((n + 1, w.shape[1]))
    flux[1:-1] = r_face[1:-1, None] * (w[1:] - w[:-1])
    flux[-1] = r_face[-1] * (0.0 - w[-1])
    lap_r = (flux[1:] - flux[:-1]) / (r[:, None] * dt ** 2)
    D2 = site_angular_laplacian(grid.domain.n_gamma)
    src = w if w_ang is None else w_ang
    return lap_r + (src @ D2.T) / r[:, None] ** 2


def _pool(a: np.ndarray, width: float) -> np.ndarray:
    """Gaussian window in depth (clamped) and along the boundary (periodic)."""
    out = gaussian_filter1d(a, width, axis=0, mode="nearest")
    if a.shape[1] > 1:
        out = gaussian_filter1d(out, width, axis=1, mode="wrap")
    return out


def recover_potential(W_rec: OperatorMatrix, controls: list[SmoothControl],
                      cfg: InversionConfig, grid: InteriorGrid) -> RecoveredPotential:
    """Weighted least-squares fit of ``q`` from the graph ``{W f, W f_tt}``."""
    shape = grid.shape
    dt = grid.dt
    Wm = W_rec.entries
    num = np.zeros(shape)
    den = np.zeros(shape)
    amps = []
    for c in controls:
        f = c.values
        if f.shape != shape:
            raise DimensionError("test control shape does not match the control grid")
        ftt = c.second_difference() if cfg.second_derivative == "discrete" else c.f_tt
        w = (Wm @ f.ravel()).reshape(shape)
        wtt = (Wm @ ftt.ravel()).reshape(shape)
        w_ang = None
        if grid.domain.kind == "disc":
            w_ang = w + 0.25 * dt * dt * wtt
        lap = interior_laplacian(grid, w, w_ang)
        num += w * (lap - wtt)
        den += w * w
        amps.append(np.max(np.abs(w)))
    if cfg.smoothing > 0:
        num, den = (_pool(a, cfg.smoothing) for a in (num, den))
    mg, mt = cfg.margins(grid.T, dt)
    tau = grid.tau[:, None] * np.ones((1, shape[1]))
    amp = max(amps) if amps else 0.0
    mask = (tau >= mg) & (tau <= grid.T - mt) & (den > (cfg.denom_threshold * amp) ** 2)
    if not mask.any():
        raise DegenerateConfigurationError("reliable region is empty")
    q = np.where(mask, num / np.where(den > 0, den, 1.0), 0.0)
    stats = {"n_reliable": int(mask.sum()), "n_controls": len(controls),
             "max_wave_amplitude": float(amp)}
    return RecoveredPotential(q, mask, grid, stats)


# -- driver ------------------------------------------------------------------------------------

@dataclass
class InversionResult:
    potential: RecoveredPotential
    W_rec: OperatorMatrix
    connecting: ConnectingOperator
    amplitude: AmplitudeOperator
    provenance: dict


def invert(R: ResponseData, cfg: InversionConfig | None = None,
           controls: list[SmoothControl] | None = None,
           domain: DomainSpec | None = None) -> InversionResult:
    """Run the full reconstruction on response data."""
    cfg = InversionConfig() if cfg is None else cfg
    domain = domain_from_response(R) if domain is None else domain
    grid = interior_grid(domain, R.T)
    if grid.size != R.n_tau * R.n_gamma:
        raise DimensionError("response data and domain disagree on the control grid")
    clock = time.perf_counter()
    C = connecting_from_response(R, cfg.spectral_floor)
    pos_tol = max(cfg.positivity_tol, 10 * R.synthetic_noise_level)
    try:
        C_half = psd_sqrt(C, pos_tol)
    except NotPSDError as exc:
        raise NotPSDError(f"{exc} (data fail the positivity condition 2)") from exc
    A = amplitude_integral(C_half, R.n_gamma, R.dt, cfg.partition_step, cfg.projection_rank_tol)
    W_rec = reconstruct_control(A, C_half, grid)
    if controls is None:
        controls = default_test_controls(R.T, R.dt, cfg.n_test_controls, R.n_gamma,
                                         domain.gamma_weights, cfg.control_width)
    pot = recover_potential(W_rec, controls, cfg, grid)
    prov = {
        "asymmetry": C.asymmetry,
        "lambda_min_ratio": C.lam_min_ratio,
        "lambda_max": C.lam_max,
        "retained_rank": C.retained_rank,
        "size": int(C.matrix.shape[0]),
        "isometry_defect": A.isometry_defect,
        "coisometry_defect": A.coisometry_defect,
        "raw_isometry_defect": A.raw_defect,
        "partition_step": int(cfg.partition_step),
        "positivity_tol": pos_tol,
        "elapsed_s": time.perf_counter() - clock,
        **pot.residual_stats,
    }
    return InversionResult(pot, W_rec, C, A, prov)
