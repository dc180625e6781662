"""
Besov, Triebel-Lizorkin and Bochner norms on sampled fields.

Norms are finite dyadic sums over a filter bank's window. Spectral content
left outside the window is measured on every evaluation and reported with a
WindowTruncationWarning when it exceeds ``TRUNCATION_THRESHOLD`` of the
field's L^p norm.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import fft as sfft
from scipy.integrate import trapezoid

from .errors import (
    GridMismatchError,
    RangeViolationError,
    ValidityRangeWarning,
    WindowTruncationWarning,
)
from .fields import Field, GridSpec, HalfField, TimeField, TimeGrid
from .filterbank import DyadicProfile, FilterBank, make_filter_bank

logger = logging.getLogger(__name__)

TRUNCATION_THRESHOLD = 1e-6


@dataclass(frozen=True)
class NormParams:
    """
    Indices of a Besov or Triebel-Lizorkin norm.

    Args:
        s: Smoothness index
        p: Integrability, 1 <= p <= inf
        sigma: Summability, 1 <= sigma <= inf
        homogeneous: Drop the low-frequency part when True
        decomposition: 'annular' blocks or 'separated' boundary/normal blocks
    """

    s: float
    p: float
    sigma: float = 1.0
    homogeneous: bool = True
    decomposition: str = 'annular'

    def __post_init__(self):
        if not 1.0 <= self.p <= math.inf:
            raise ValueError(f"p must lie in [1, inf], got {self.p}")
        if not 1.0 <= self.sigma <= math.inf:
            raise ValueError(f"sigma must lie in [1, inf], got {self.sigma}")
        if self.decomposition not in ('annular', 'separated'):
            raise ValueError(f"unknown decomposition {self.decomposition!r}")

    def with_s(self, s: float) -> 'NormParams':
        return NormParams(s, self.p, self.sigma, self.homogeneous, self.decomposition)


@dataclass
class NormBreakdown:
    """Norm value with per-block contributions and truncation diagnostics"""

    value: float
    blocks: Dict[int, float] = field(default_factory=dict)
    low_leftover: float = 0.0
    high_leftover: float = 0.0

    @property
    def truncated(self) -> bool:
        return max(self.low_leftover, self.high_leftover) > TRUNCATION_THRESHOLD


def lp_norm(samples: np.ndarray, p: float, cell_volume: float, ndim: Optional[int] = None):
    """
    Discrete L^p norm over the trailing ``ndim`` axes (all axes if None).

    Sums run in numpy's fixed pairwise order so repeated calls agree bitwise.
    """
    magnitude = np.abs(samples)
    axes = tuple(range(-ndim, 0)) if ndim else None
    if p == math.inf:
        return np.max(magnitude, axis=axes)
    return (np.sum(magnitude ** p, axis=axes) * cell_volume) ** (1.0 / p)


def ell_sigma(terms: np.ndarray, sigma: float) -> np.ndarray:
    """l^sigma combination along axis 0"""
    if sigma == math.inf:
        return np.max(terms, axis=0)
    return np.sum(terms ** sigma, axis=0) ** (1.0 / sigma)


class _DyadicFunctional:
    """Shared block machinery for Besov and Triebel-Lizorkin norms"""

    def __init__(self, params: NormParams, bank: FilterBank):
        self.params = params
        self.bank = bank
        if params.decomposition == 'separated' and bank.grid.n < 2:
            raise ValueError("separated decomposition needs at least two dimensions")

    @property
    def grid(self) -> GridSpec:
        return self.bank.grid

    def _multiplier(self, j: int) -> np.ndarray:
        if self.params.decomposition == 'separated':
            return self.bank.split_multiplier(j)
        return self.bank.multiplier(j)

    def _low_multiplier(self) -> np.ndarray:
        bank = self.bank
        if self.params.decomposition == 'separated':
            a, b = bank.split_radii()
            profile = bank.profile
            m = bank.jmin - 1
            return np.broadcast_to(profile.zeta_m(a, m) * profile.zeta_m(b, m), bank.grid.shape)
        return bank.low_multiplier(bank.jmin - 1)

    def _high_multiplier(self) -> np.ndarray:
        bank = self.bank
        if self.params.decomposition == 'separated':
            a, b = bank.split_radii()
            profile = bank.profile
            return 1.0 - np.broadcast_to(
                profile.zeta_m(a, bank.jmax) * profile.zeta_m(b, bank.jmax), bank.grid.shape)
        return 1.0 - bank.low_multiplier(bank.jmax)

    def _spectrum(self, samples: np.ndarray) -> np.ndarray:
        return sfft.fftn(samples, axes=tuple(range(-self.grid.n, 0)))

    def _inverse(self, spectrum: np.ndarray, real: bool) -> np.ndarray:
        out = sfft.ifftn(spectrum, axes=tuple(range(-self.grid.n, 0)))
        return out.real if real else out

    def _leftovers(self, spectrum: np.ndarray, real: bool, reference: np.ndarray) -> Tuple[float, float]:
        p = self.params.p
        nd = self.grid.n
        dv = self.grid.cell_volume
        scale = np.maximum(reference, np.finfo(float).tiny)

        high = lp_norm(self._inverse(spectrum * self._high_multiplier(), real), p, dv, nd)
        high_rel = float(np.max(high / scale))
        if not self.params.homogeneous:
            return 0.0, high_rel

        low_mult = np.array(self._low_multiplier())
        low_mult.flat[0] = 0.0
        low = lp_norm(self._inverse(spectrum * low_mult, real), p, dv, nd)
        return float(np.max(low / scale)), high_rel

    def _warn_truncation(self, low: float, high: float) -> None:
        if max(low, high) > TRUNCATION_THRESHOLD:
            warnings.warn(
                f"spectrum outside window [{self.bank.jmin}, {self.bank.jmax}]: "
                f"low {low:.3g}, high {high:.3g} of the L^p norm",
                WindowTruncationWarning, stacklevel=3)

    def _check(self, f: Field) -> np.ndarray:
        if f.grid != self.grid:
            raise GridMismatchError(f"field grid {f.grid} differs from bank grid {self.grid}")
        return f.physical_samples()


class BesovFunctional(_DyadicFunctional):
    """
    Besov norm as a reusable functional.

    Calling it on a Field returns the norm; :meth:`batched` evaluates it
    on every slice of an array whose trailing axes match the grid.
    """

    def __call__(self, f: Field) -> float:
        return self.breakdown(f).value

    def breakdown(self, f: Field) -> NormBreakdown:
        samples = self._check(f)
        values, blocks, low, high = self._evaluate(samples)
        self._warn_truncation(low, high)
        return NormBreakdown(float(values), {j: float(b) for j, b in blocks.items()}, low, high)

    def batched(self, samples: np.ndarray) -> np.ndarray:
        values, _, low, high = self._evaluate(samples)
        self._warn_truncation(low, high)
        return values

    def _evaluate(self, samples: np.ndarray):
        params = self.params
        nd = self.grid.n
        dv = self.grid.cell_volume
        real = np.isrealobj(samples)
        spectrum = self._spectrum(samples)

        blocks = {}
        for j in self.bank.indices:
            block = self._inverse(spectrum * self._multiplier(j), real)
            blocks[j] = 2.0 ** (params.s * j) * lp_norm(block, params.p, dv, nd)
        terms = list(blocks.values())
        if not params.homogeneous:
            low = self._inverse(spectrum * self._low_multiplier(), real)
            terms.insert(0, lp_norm(low, params.p, dv, nd))
        values = ell_sigma(np.stack([np.asarray(t) for t in terms]), params.sigma)

        reference = lp_norm(samples, params.p, dv, nd)
        low_rel, high_rel = self._leftovers(spectrum, real, reference)
        return values, blocks, low_rel, high_rel


class TriebelFunctional(_DyadicFunctional):
    """Triebel-Lizorkin norm: pointwise l^sigma over blocks, then L^p"""

    def __init__(self, params: NormParams, bank: FilterBank):
        if params.p == math.inf:
            raise ValueError("Triebel-Lizorkin norms with p = inf are not supported")
        super().__init__(params, bank)

    def __call__(self, f: Field) -> float:
        return float(self.batched(self._check(f)))

    def batched(self, samples: np.ndarray) -> np.ndarray:
        params = self.params
        nd = self.grid.n
        dv = self.grid.cell_volume
        real = np.isrealobj(samples)
        spectrum = self._spectrum(samples)

        sigma = params.sigma
        pointwise = None
        for j in self.bank.indices:
            block = np.abs(self._inverse(spectrum * self._multiplier(j), real)) * 2.0 ** (params.s * j)
            pointwise = _accumulate(pointwise, block, sigma)
        if not params.homogeneous:
            low = np.abs(self._inverse(spectrum * self._low_multiplier(), real))
            pointwise = _accumulate(pointwise, low, sigma)
        if sigma != math.inf:
            pointwise = pointwise ** (1.0 / sigma)

        reference = lp_norm(samples, params.p, dv, nd)
        low_rel, high_rel = self._leftovers(spectrum, real, reference)
        self._warn_truncation(low_rel, high_rel)
        return lp_norm(pointwise, params.p, dv, nd)


def _accumulate(acc: Optional[np.ndarray], term: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == math.inf:
        return term if acc is None else np.maximum(acc, term)
    powered = term ** sigma
    return powered if acc is None else acc + powered


class LebesgueFunctional:
    """Plain L^p norm on a grid, with the batched interface of the dyadic norms"""

    def __init__(self, p: float, grid: GridSpec):
        self.p = p
        self.grid = grid

    def __call__(self, f: Field) -> float:
        return float(lp_norm(f.physical_samples(), self.p, self.grid.cell_volume))

    def batched(self, samples: np.ndarray) -> np.ndarray:
        return lp_norm(samples, self.p, self.grid.cell_volume, self.grid.n)


class AbsoluteValue:
    """Norm of scalar-valued signals, the boundary of the half-line"""

    grid = None

    def batched(self, samples: np.ndarray) -> np.ndarray:
        return np.abs(samples)


def besov_norm(f: Field, params: NormParams, bank: FilterBank) -> float:
    """Besov norm of f over the bank's window"""
    return BesovFunctional(params, bank)(f)


def triebel_norm(f: Field, params: NormParams, bank: FilterBank) -> float:
    """Triebel-Lizorkin norm of f over the bank's window; p = inf is rejected"""
    return TriebelFunctional(params, bank)(f)


def make_time_bank(tgrid: TimeGrid, profile: DyadicProfile, kmin: int, kmax: int,
                   pad_factor: int = 4) -> FilterBank:
    """
    Filter bank on the zero-padded periodic time axis used by Bochner norms.

    The padded axis has at least ``pad_factor * Nt`` samples (a power of
    two) with the time step of ``tgrid``; t = 0 sits at its centre.
    """
    return make_filter_bank(profile, kmin, kmax, padded_time_axis(tgrid, pad_factor))


def padded_time_axis(tgrid: TimeGrid, pad_factor: int = 4) -> GridSpec:
    """Zero-padded periodic time axis: a power of two >= pad_factor * Nt samples"""
    if pad_factor < 2:
        raise ValueError(f"pad factor must be at least 2, got {pad_factor}")
    size = 1 << max(4, math.ceil(math.log2(pad_factor * tgrid.Nt)))
    return GridSpec(1, size, size * tgrid.dt)


def _spatial_batched(spatial, samples: np.ndarray) -> np.ndarray:
    if hasattr(spatial, 'batched'):
        return spatial.batched(samples)
    grid = spatial.grid
    return np.array([spatial(Field(grid, s)) for s in samples])


def _check_spatial(h: TimeField, spatial) -> None:
    grid = getattr(spatial, 'grid', None)
    if grid != h.space:
        raise GridMismatchError(f"spatial norm grid {grid} differs from boundary grid {h.space}")


def bochner_tl_norm(h: TimeField, s: float, spatial, tbank: FilterBank,
                    p: float = 1.0, sigma: float = 1.0) -> float:
    """
    Time Triebel-Lizorkin norm with values in a spatial norm.

    h is extended by zero outside [0, T] on the padded axis of ``tbank``;
    for each time block k the spatial norm of (psi_k *_t h)(t) is weighted
    by 2^(s k), combined in l^sigma and integrated in L^p(dt). The time
    integral is the trapezoid rule on the periodic padded axis.

    Args:
        h: Boundary datum
        s: Time smoothness
        spatial: Functional exposing ``grid`` and ``batched`` (or a callable on Fields)
        tbank: Bank from :func:`make_time_bank`
    """
    tgrid = h.tgrid
    padded_grid = tbank.grid
    size = padded_grid.N
    if not math.isclose(padded_grid.spacing, tgrid.dt, rel_tol=1e-12) or size < 2 * tgrid.Nt:
        raise GridMismatchError("time bank does not match the time grid of h")
    _check_spatial(h, spatial)

    padded = np.zeros((size,) + h.samples.shape[1:], dtype=h.samples.dtype)
    padded[size // 2:size // 2 + tgrid.Nt] = h.samples
    spectrum = sfft.fft(padded, axis=0)
    expand = (slice(None),) + (None,) * (padded.ndim - 1)
    real = np.isrealobj(padded)

    pointwise = None
    for k in tbank.indices:
        block = sfft.ifft(spectrum * tbank.multiplier(k)[expand], axis=0)
        block = block.real if real else block
        weighted = 2.0 ** (s * k) * _spatial_batched(spatial, block)
        pointwise = _accumulate(pointwise, weighted, sigma)
    if sigma != math.inf:
        pointwise = pointwise ** (1.0 / sigma)

    low = np.array(tbank.low_multiplier(tbank.jmin - 1))
    low[0] = 0.0
    leftover = low + (1.0 - tbank.low_multiplier(tbank.jmax))
    rest = sfft.ifft(spectrum * leftover[expand], axis=0)
    total = float(np.sqrt(np.sum(np.abs(padded) ** 2)))
    if total > 0:
        ratio = float(np.sqrt(np.sum(np.abs(rest) ** 2))) / total
        if ratio > TRUNCATION_THRESHOLD:
            warnings.warn(f"time spectrum outside window [{tbank.jmin}, {tbank.jmax}]: {ratio:.3g}",
                          WindowTruncationWarning, stacklevel=2)

    return float(lp_norm(pointwise, p, tgrid.dt))


def bochner_lebesgue_norm(h: TimeField, spatial, p: float = 1.0) -> float:
    """L^p(0, T; X) norm by the trapezoid rule on the time grid"""
    _check_spatial(h, spatial)
    values = _spatial_batched(spatial, h.samples)
    if p == math.inf:
        return float(np.max(values))
    return float(trapezoid(values ** p, dx=h.tgrid.dt) ** (1.0 / p))


def validity_range(p: float) -> Tuple[float, float]:
    """Open interval of s where zero extension is bounded on B^s_{p,sigma}"""
    return -1.0 + 1.0 / p, 1.0 / p


def extend_zero(f: HalfField, params: Optional[NormParams] = None) -> Field:
    """
    Zero extension of a half-space field to the whole grid.

    When ``params`` is given and its s lies outside the validity range, the
    extension still succeeds but emits a ValidityRangeWarning.
    """
    if params is not None:
        lo, hi = validity_range(params.p)
        if not lo < params.s < hi:
            warnings.warn(f"s = {params.s} outside ({lo:.4g}, {hi:.4g}) for p = {params.p}",
                          ValidityRangeWarning, stacklevel=2)
    grid = f.grid
    samples = np.zeros(grid.shape, dtype=f.samples.dtype)
    samples[..., grid.N // 2:] = f.samples
    return Field(grid, samples)


def restrict(f: Field) -> HalfField:
    """Restriction to the half-space sub-grid x_n >= 0"""
    grid = f.grid
    return HalfField(grid, f.physical_samples()[..., grid.N // 2:])


def halfspace_norm(f: HalfField, params: NormParams, bank: FilterBank, override: bool = False) -> float:
    """
    Half-space Besov norm, defined through the zero extension.

    Raises:
        RangeViolationError: if s leaves the validity range and ``override`` is False
    """
    lo, hi = validity_range(params.p)
    if not lo < params.s < hi:
        if not override:
            raise RangeViolationError(
                f"s = {params.s} outside the zero-extension range ({lo:.4g}, {hi:.4g}) for p = {params.p}")
        logger.warning("half-space norm evaluated outside the validity range: s=%s p=%s",
                       params.s, params.p)
        return besov_norm(extend_zero(f, params), params, bank)
    return besov_norm(extend_zero(f), params, bank)


class HalfSpaceBesov:
    """Batched half-space Besov norm over slices of half-grid samples"""

    def __init__(self, params: NormParams, bank: FilterBank, override: bool = False):
        lo, hi = validity_range(params.p)
        if not lo < params.s < hi and not override:
            raise RangeViolationError(
                f"s = {params.s} outside the zero-extension range ({lo:.4g}, {hi:.4g}) for p = {params.p}")
        self.functional = BesovFunctional(params, bank)
        self.grid = bank.grid

    def batched(self, samples: np.ndarray) -> np.ndarray:
        grid = self.grid
        full = np.zeros(samples.shape[:-1] + (grid.N,), dtype=samples.dtype)
        full[..., grid.N // 2:] = samples
        return self.functional.batched(full)
