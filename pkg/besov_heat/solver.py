"""
Half-space heat initial-boundary value solver.

The problem is split as u = u1 + u2 + u3: u1 propagates the odd (Dirichlet)
or even (Neumann) reflection of the initial datum on the whole grid, u3 does
the same for the forcing, and u2 is the boundary corrector carrying
h - trace(u1). u2 is built per tangential frequency from the half-line heat
kernels damped by exp(-|xi'|^2 t), integrated in time against piecewise
linear boundary data with exact sub-interval weights.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from typing import List, Optional

import numpy as np
from scipy import fft as sfft
from scipy.special import erfc, erfcx, exprel

from .errors import GridMismatchError, ResidualWarning
from .fields import Field, GridSpec, HalfField, SpaceTimeField, TimeField, TimeGrid
from .kernels import KernelKind, KernelType, panel_rule, principal_root

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverSettings:
    """
    Args:
        grading: Geometric sub-step grading toward s = t (required)
        substeps: Number of graded sub-steps per time step, at least 8
        eta_min: First layer of graded eta grids
        eta_ratio: Ratio of graded eta grids
        residual_threshold: Relative PDE residual above which a solve is flagged
        threads: Worker threads over tangential frequency columns
    """

    grading: bool = True
    substeps: int = 8
    eta_min: float = 1e-3
    eta_ratio: float = 1.15
    residual_threshold: float = 5e-2
    threads: int = 1

    def __post_init__(self):
        if not self.grading or self.substeps < 8:
            raise ValueError("the boundary corrector needs graded sub-steps (at least 8) near t = s")
        if not self.eta_ratio > 1.0 or not self.eta_min > 0:
            raise ValueError("graded eta grids need eta_min > 0 and ratio > 1")


@dataclass
class IbvpData:
    """Initial-boundary value problem on the half-space sub-grid"""

    bc: KernelKind
    u0: HalfField
    h: TimeField
    tgrid: TimeGrid
    f: Optional[SpaceTimeField] = None

    def __post_init__(self):
        if self.bc.type not in (KernelType.DIRICHLET, KernelType.NEUMANN):
            raise ValueError(f"only Dirichlet and Neumann problems are solved, got {self.bc.name}")
        grid = self.u0.grid
        if self.h.tgrid != self.tgrid:
            raise GridMismatchError("boundary datum and problem use different time grids")
        expected = grid.boundary() if grid.n > 1 else None
        if self.h.space != expected:
            raise GridMismatchError(f"boundary datum lives on {self.h.space}, expected {expected}")
        if self.f is not None:
            if self.f.grid != grid or self.f.tgrid != self.tgrid or not self.f.half:
                raise GridMismatchError("forcing must be a half-space field on the problem grids")

    @property
    def grid(self) -> GridSpec:
        return self.u0.grid

    @classmethod
    def zeros(cls, bc: KernelKind, grid: GridSpec, tgrid: TimeGrid) -> 'IbvpData':
        space = grid.boundary() if grid.n > 1 else None
        shape = (tgrid.Nt,) + (space.shape if space is not None else ())
        return cls(bc, HalfField(grid, np.zeros(grid.half_shape)), TimeField(tgrid, np.zeros(shape), space), tgrid)


@dataclass
class BoundaryLayer:
    """u2 sampled on times x boundary grid x an arbitrary eta grid"""

    tgrid: TimeGrid
    space: Optional[GridSpec]
    eta: np.ndarray
    samples: np.ndarray

    def to_spacetime(self, grid: GridSpec) -> SpaceTimeField:
        if self.eta.shape != (grid.N // 2,) or not np.allclose(self.eta, grid.half_coords()):
            raise GridMismatchError("layer heights do not match the half-space sub-grid")
        return SpaceTimeField(self.tgrid, grid, self.samples, half=True)

    def trace(self) -> np.ndarray:
        """Linear extrapolation to eta = 0 from the two lowest layers"""
        e0, e1 = self.eta[0], self.eta[1]
        s0, s1 = self.samples[..., 0], self.samples[..., 1]
        return s0 - e0 * (s1 - s0) / (e1 - e0)


@dataclass
class SolutionBundle:
    u: SpaceTimeField
    u1: SpaceTimeField
    u2: SpaceTimeField
    u3: SpaceTimeField
    residuals: np.ndarray
    relative_residual: float
    compatibility_gap: float
    flagged: bool = False
    notes: List[str] = field(default_factory=list)


def graded_eta_grid(eta_min: float, eta_max: float, ratio: float = 1.15) -> np.ndarray:
    """eta_i = eta_min * ratio^i up to eta_max"""
    count = int(math.floor(math.log(eta_max / eta_min) / math.log(ratio))) + 1
    return eta_min * ratio ** np.arange(count)


def _reflect(u0: HalfField, sign: float) -> Field:
    grid = u0.grid
    half = grid.N // 2
    samples = np.zeros(grid.shape, dtype=u0.samples.dtype)
    samples[..., half:] = u0.samples
    samples[..., 1:half] = sign * u0.samples[..., :0:-1]
    return Field(grid, samples)


def extend_odd(u0: HalfField) -> Field:
    """Odd reflection across x_n = 0; the x_n = 0 layer is kept as given"""
    return _reflect(u0, -1.0)


def extend_even(u0: HalfField) -> Field:
    """Even reflection across x_n = 0"""
    return _reflect(u0, 1.0)


def _phi_functions(z: np.ndarray):
    phi1 = exprel(z)
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    phi2 = np.where(small, 0.5 + z / 6.0 + z * z / 24.0, (phi1 - 1.0) / safe)
    return phi1, phi2


def whole_space_heat(v0: Field, f: Optional[SpaceTimeField], tgrid: TimeGrid) -> SpaceTimeField:
    """
    Heat flow on the periodic grid, exact in space.

    Duhamel's integral uses the second-order exponential integrator for
    forcing that is linear between time samples.
    """
    grid = v0.grid
    if f is not None and (f.grid != grid or f.half or f.tgrid != tgrid):
        raise GridMismatchError("forcing must be a whole-grid field on the same grids")
    decay = grid.frequency_radius() ** 2
    z = -decay * tgrid.dt
    propagator = np.exp(z)
    phi1, phi2 = _phi_functions(z)

    vhat = v0.spectrum()
    out = np.empty((tgrid.Nt,) + grid.shape)
    out[0] = v0.physical_samples().real
    fhat_next = sfft.fftn(f.samples[0]) if f is not None else None
    for i in range(tgrid.Nt - 1):
        vhat = propagator * vhat
        if f is not None:
            fhat_prev, fhat_next = fhat_next, sfft.fftn(f.samples[i + 1])
            vhat = vhat + tgrid.dt * ((phi1 - phi2) * fhat_prev + phi2 * fhat_next)
        out[i + 1] = sfft.ifftn(vhat).real
    return SpaceTimeField(tgrid, grid, out, half=False)


def half_line_kernel(bc: KernelKind, t, xi_sq, eta) -> np.ndarray:
    """
    Closed-form time kernel of the boundary corrector.

    g_D = eta / (2 sqrt(pi) t^{3/2}) exp(-eta^2/4t - |xi'|^2 t)
    g_N = -1 / sqrt(pi t) exp(-eta^2/4t - |xi'|^2 t)
    """
    t = np.asarray(t, dtype=float)
    damp = np.exp(-np.asarray(eta) ** 2 / (4.0 * t) - np.asarray(xi_sq) * t)
    if bc.type is KernelType.DIRICHLET:
        return eta / (2.0 * math.sqrt(math.pi) * t ** 1.5) * damp
    return -damp / np.sqrt(math.pi * t)


def cumulative_kernel(bc: KernelKind, tau: np.ndarray, xi_sq: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """
    Integral of :func:`half_line_kernel` over [0, tau], in closed form.

    Arguments broadcast against each other; tau = 0 gives 0.
    """
    tau, a, eta = np.broadcast_arrays(np.asarray(tau, dtype=float),
                                      np.asarray(xi_sq, dtype=float),
                                      np.asarray(eta, dtype=float))
    positive = tau > 0
    safe_tau = np.where(positive, tau, 1.0)
    root_a = np.sqrt(a)
    x = eta / (2.0 * np.sqrt(safe_tau))
    q = np.sqrt(a * safe_tau)
    gauss = np.exp(-x * x - q * q)
    with np.errstate(over='ignore', invalid='ignore'):
        lower = np.where(x >= q, gauss * erfcx(np.where(x >= q, x - q, 0.0)),
                         np.exp(-eta * root_a) * erfc(x - q))
    upper = gauss * erfcx(x + q)

    if bc.type is KernelType.DIRICHLET:
        value = 0.5 * (lower + upper)
    else:
        tiny = a * safe_tau < 1e-24
        safe_root = np.where(tiny, 1.0, root_a)
        flux = (lower - upper) / (2.0 * safe_root)
        limit = 2.0 * np.sqrt(safe_tau / math.pi) * np.exp(-x * x) - eta * erfc(x)
        value = -np.where(tiny, limit, flux)
    return np.where(positive, value, 0.0)


def _sub_step_edges(substeps: int) -> np.ndarray:
    """Fractions 0, 1/2, 3/4, ..., 1 - 2^-substeps, 1 of a time step"""
    graded = 1.0 - np.exp2(-np.arange(1, substeps + 1, dtype=float))
    return np.concatenate([[0.0], graded, [1.0]])


def boundary_corrector(bc: KernelKind, h: TimeField, eta: np.ndarray, tgrid: TimeGrid,
                       settings: SolverSettings = SolverSettings()) -> BoundaryLayer:
    """
    Solution of the heat equation with zero initial value and boundary
    datum h (Dirichlet value or Neumann flux), sampled at heights ``eta``.

    The datum is linear between time samples and zero before t = 0; every
    graded sub-interval of every step is weighted by the exact integral of
    the half-line kernel over it.
    """
    if h.tgrid != tgrid:
        raise GridMismatchError("boundary datum and corrector use different time grids")
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0):
        raise ValueError("layer heights must be non-negative")

    space = h.space
    if space is not None:
        axes = tuple(range(1, space.n + 1))
        hhat = sfft.fftn(h.samples, axes=axes).reshape(tgrid.Nt, -1)
        xi_sq = (space.frequency_radius() ** 2).ravel()
    else:
        hhat = h.samples.reshape(tgrid.Nt, 1).astype(complex)
        xi_sq = np.zeros(1)

    edges = _sub_step_edges(settings.substeps)
    mids = 0.5 * (edges[1:] + edges[:-1])
    # h at sub-interval midpoints: (step, sub-interval, column)
    hmid = ((1.0 - mids)[None, :, None] * hhat[:-1, None, :]
            + mids[None, :, None] * hhat[1:, None, :])
    lags = np.arange(1, tgrid.Nt)
    tau = (lags[:, None] - edges[None, :]) * tgrid.dt

    columns = np.array_split(np.arange(xi_sq.size), max(1, min(xi_sq.size, 4 * settings.threads)))

    def solve_columns(cols: np.ndarray) -> np.ndarray:
        big = cumulative_kernel(bc, tau[:, :, None, None], xi_sq[cols][None, None, :, None],
                                eta[None, None, None, :])
        weights = big[:, :-1] - big[:, 1:]
        part = hmid[:, :, cols]
        out = np.zeros((tgrid.Nt, cols.size, eta.size), dtype=complex)
        for i in range(1, tgrid.Nt):
            out[i] = np.einsum('lqce,lqc->ce', weights[:i], part[i - 1::-1])
        return out

    if settings.threads > 1:
        with ThreadPool(settings.threads) as pool:
            pieces = pool.map(solve_columns, columns)
    else:
        pieces = [solve_columns(c) for c in columns]
    uhat = np.concatenate(pieces, axis=1)

    if space is not None:
        uhat = uhat.reshape((tgrid.Nt,) + space.shape + (eta.size,))
        samples = sfft.ifftn(uhat, axes=tuple(range(1, space.n + 1))).real
    else:
        samples = uhat.reshape(tgrid.Nt, eta.size).real
    logger.debug("boundary corrector %s: %d columns, %d layers", bc.name, xi_sq.size, eta.size)
    return BoundaryLayer(tgrid, space, eta, samples)


def heat_kernel_from_symbol(bc: KernelKind, t: float, xi_sq: float, eta: float,
                            cutoff: float = 36.0) -> float:
    """
    Half-line kernel re-derived from the symbol exp(-w eta) (Dirichlet) or
    -exp(-w eta)/w (Neumann) by a numerical inverse tau-transform.

    The substitution tau = +-v^2 removes the 1/w singularity at tau = 0.
    """
    v_max = math.sqrt(2.0) * cutoff / eta
    width = 0.5 / (1.0 + 2.0 * v_max * t)
    v, wv = panel_rule(0.0, v_max, width, 8)
    total = 0.0
    for sign in (1.0, -1.0):
        tau = sign * v * v
        w = principal_root(tau, xi_sq)
        value = np.exp(-w * eta)
        if bc.type is KernelType.NEUMANN:
            value = -value / w
        total += float(np.real(np.sum(wv * 2.0 * v * np.exp(1j * tau * t) * value)))
    return total / (2.0 * math.pi)


def _normal_derivative_at_boundary(field_samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    kn = grid.axis_frequencies()
    spectrum = sfft.fft(field_samples, axis=-1)
    derivative = sfft.ifft(1j * kn * spectrum, axis=-1).real
    return derivative[..., grid.N // 2]


def _trace(bc: KernelKind, whole: SpaceTimeField) -> np.ndarray:
    grid = whole.grid
    if bc.type is KernelType.DIRICHLET:
        return whole.samples[..., grid.N // 2]
    return _normal_derivative_at_boundary(whole.samples, grid)


def _extend_forcing(bc: KernelKind, f: SpaceTimeField) -> SpaceTimeField:
    extend = extend_odd if bc.type is KernelType.DIRICHLET else extend_even
    samples = np.stack([extend(f.at(i)).samples for i in range(f.tgrid.Nt)])
    return SpaceTimeField(f.tgrid, f.grid, samples, half=False)


def pde_residuals(u: SpaceTimeField, f: Optional[SpaceTimeField]) -> np.ndarray:
    """
    L^2 norm per time step of du/dt - Lap u - f by centred differences,
    on layers at least two cells from both ends of the x_n range.
    End time steps hold NaN.
    """
    grid = u.grid
    dt = u.tgrid.dt
    hx = grid.spacing
    samples = u.samples
    out = np.full(u.tgrid.Nt, np.nan)
    inner = slice(2, grid.N // 2 - 2)
    for i in range(1, u.tgrid.Nt - 1):
        slab = samples[i]
        lap = np.zeros_like(slab)
        for axis in range(grid.n - 1):
            lap += (np.roll(slab, 1, axis) - 2.0 * slab + np.roll(slab, -1, axis)) / hx ** 2
        lap[..., 1:-1] += (slab[..., 2:] - 2.0 * slab[..., 1:-1] + slab[..., :-2]) / hx ** 2
        res = (samples[i + 1] - samples[i - 1]) / (2.0 * dt) - lap
        if f is not None:
            res = res - f.samples[i]
        res = res[..., inner]
        out[i] = math.sqrt(float(np.sum(res ** 2)) * grid.cell_volume)
    return out


def solve_halfspace_heat(data: IbvpData, settings: SolverSettings = SolverSettings()) -> SolutionBundle:
    """
    Solve the initial-boundary value problem by the three-part splitting.

    Returns the parts, per-step PDE residuals, and the gap between the
    boundary datum and the initial trace at t = 0 (non-zero for
    incompatible data). Residuals above the threshold are flagged with a
    ResidualWarning.
    """
    grid = data.grid
    tgrid = data.tgrid
    bc = data.bc
    extend = extend_odd if bc.type is KernelType.DIRICHLET else extend_even

    whole1 = whole_space_heat(extend(data.u0), None, tgrid)
    half = slice(grid.N // 2, None)
    u1 = SpaceTimeField(tgrid, grid, whole1.samples[..., half])

    if data.f is not None:
        whole3 = whole_space_heat(Field(grid, np.zeros(grid.shape)), _extend_forcing(bc, data.f), tgrid)
        u3 = SpaceTimeField(tgrid, grid, whole3.samples[..., half])
    else:
        u3 = SpaceTimeField(tgrid, grid, np.zeros((tgrid.Nt,) + grid.half_shape))

    trace1 = _trace(bc, whole1)
    corrected = TimeField(tgrid, data.h.samples - trace1, data.h.space)
    layer = boundary_corrector(bc, corrected, grid.half_coords(), tgrid, settings)
    u2 = layer.to_spacetime(grid)

    u = SpaceTimeField(tgrid, grid, u1.samples + u2.samples + u3.samples)

    residuals = pde_residuals(u, data.f)
    dudt = np.gradient(u.samples, tgrid.dt, axis=0)[..., 2:grid.N // 2 - 2]
    scale = float(np.sqrt(np.max(np.sum(dudt.reshape(tgrid.Nt, -1) ** 2, axis=1)) * grid.cell_volume))
    worst = float(np.nanmax(residuals)) if tgrid.Nt > 2 else 0.0
    relative = worst / scale if scale > 0 else worst

    gap = float(np.sqrt(np.sum(corrected.samples[0] ** 2) * (grid.spacing ** (grid.n - 1))))
    bundle = SolutionBundle(u, u1, u2, u3, residuals, relative, gap)
    if gap > 0:
        bundle.notes.append(f"boundary datum differs from the initial trace at t=0 by {gap:.3g}")
    if relative > settings.residual_threshold:
        bundle.flagged = True
        warnings.warn(f"PDE residual {relative:.3g} relative exceeds {settings.residual_threshold}",
                      ResidualWarning, stacklevel=2)
    logger.info("solved %s problem on %s: relative residual %.3g", bc.name, grid, relative)
    return bundle

