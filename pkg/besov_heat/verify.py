"""
Verification harness: both sides of the kernel, maximal-regularity and
trace estimates over parameter sweeps.

Envelopes use unit constants, so every check is about uniform boundedness
of measured/envelope and about log2 regression slopes, never about
absolute values.
"""

import logging
import math
import os
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum
from multiprocessing.pool import ThreadPool
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sfft
from scipy.integrate import quad, trapezoid

from .errors import (
    BandError,
    PreconditionError,
    QuadratureError,
    ResidualWarning,
    ValidityRangeWarning,
    WindowFloorWarning,
    WindowOutOfBandError,
    WindowTruncationWarning,
)
from .fields import GridSpec, HalfField, SpaceTimeField, TimeField, TimeGrid
from .filterbank import DyadicProfile, FilterBank, auto_window, make_filter_bank
from .kernels import (
    DIRICHLET,
    NEUMANN,
    KernelKind,
    KernelSpec,
    KernelType,
    QuadratureSettings,
    eta_smoothed_l1,
    kernel_l1_norm,
)
from .report import DEGENERATE, FAILED, SweepReport, log2_slope
from .solver import IbvpData, SolverSettings, solve_halfspace_heat
from .spaces import (
    BesovFunctional,
    HalfSpaceBesov,
    LebesgueFunctional,
    NormParams,
    bochner_lebesgue_norm,
    bochner_tl_norm,
    lp_norm,
    make_time_bank,
    padded_time_axis,
    validity_range,
)

logger = logging.getLogger(__name__)

SEED_VARIABLE = 'BESOVHEAT_SEED'

SLOPE_TOLERANCE = 0.25
NEUMANN_SLOPE = -0.5
NEUMANN_SLOPE_TOLERANCE = 0.1
# spectral widths between a scaling carrier and the window edges
SCALING_MARGIN = 3.75

WARNING_FLAGS = (
    (WindowTruncationWarning, 'truncation'),
    (WindowFloorWarning, 'floor'),
    (ValidityRangeWarning, 'validity'),
    (ResidualWarning, 'residual'),
)


class Estimate(Enum):
    ORTHO_DIRICHLET_TIME = 'ortho-dirichlet-time'
    ORTHO_DIRICHLET_SPACE = 'ortho-dirichlet-space'
    SMOOTHING_DIRICHLET = 'smoothing-dirichlet'
    ORTHO_NEUMANN = 'ortho-neumann'
    SMOOTHING_NEUMANN = 'smoothing-neumann'
    MAXREG_DIRICHLET = 'maxreg-dirichlet'
    MAXREG_DIRICHLET_LP = 'maxreg-dirichlet-lp'
    MAXREG_NEUMANN = 'maxreg-neumann'
    MAXREG_NEUMANN_LP = 'maxreg-neumann-lp'
    TRACE_DIRICHLET = 'trace-dirichlet'
    TRACE_NEUMANN = 'trace-neumann'
    LEMMA_B = 'lemma-b'
    SCALING = 'scaling'


@dataclass
class EstimateSpec:
    """
    Which estimate a run checks and the ranges it sweeps.

    Only the fields the chosen estimate reads need to be set; ``validate``
    checks those.
    """

    name: Estimate = Estimate.ORTHO_DIRICHLET_TIME
    bc: str = 'dirichlet'
    b: Optional[Tuple[float, ...]] = None
    dim: int = 2
    k_range: Tuple[int, ...] = (4, 6, 8)
    j_range: Tuple[int, ...] = (0, 1, 2)
    m_range: Tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6)
    k: int = 6
    j: int = 1
    t: float = 0.0
    t_set: Tuple[float, ...] = (0.0, 1.0, 2.0)
    t_scale: str = 'dyadic'
    eta_set: Tuple[float, ...] = (1.0,)
    eta_scale: str = 'parabolic'
    s: float = 0.0
    p: float = 2.0
    sigma: float = 1.0
    variant: str = 'besov'
    family: str = 'dilation'
    family_size: int = 10
    shifts: Tuple[int, ...] = (0, 4, 8)
    lambdas: Tuple[float, ...] = (1.0, 2.0)
    norm: str = 'dirichlet-space'
    orders: Tuple[int, ...] = (2, 3, 4)
    a_set: Tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)

    def kind(self) -> KernelKind:
        return KernelKind.parse(self.bc, self.b)

    def validate(self) -> 'EstimateSpec':
        """
        Raises:
            ValueError: for an empty range or a non-positive height
        """
        name = self.name.value
        required = {
            'ortho': ('k_range', 'j_range', 't_set', 'eta_set'),
            'smoothing': ('m_range', 'eta_set'),
            'maxreg': ('lambdas',) if self.family == 'dilation' else (),
            'trace': ('lambdas',),
            'scaling': ('lambdas',),
            'lemma-b': ('orders', 'a_set'),
        }
        for prefix, names in required.items():
            if name.startswith(prefix):
                for attr in names:
                    if not getattr(self, attr):
                        raise ValueError(f"estimate {name}: {attr} is empty")
        if any(not eta > 0 for eta in self.eta_set):
            raise ValueError("kernel heights must be positive")
        if self.t_scale not in ('absolute', 'dyadic') or self.eta_scale not in ('absolute', 'parabolic'):
            raise ValueError(f"unknown scales {self.t_scale!r}, {self.eta_scale!r}")
        if self.family not in ('dilation', 'translation', 'random'):
            raise ValueError(f"unknown data family {self.family!r}")
        if name.startswith(('trace', 'scaling')) or (name.startswith('maxreg') and self.family == 'dilation'):
            _check_dyadic(self.lambdas)
        NormParams(self.s, self.p, self.sigma)
        self.kind()
        return self


def default_seed(fallback: int = 0) -> int:
    """Seed for random families, from BESOVHEAT_SEED when set"""
    value = os.environ.get(SEED_VARIABLE)
    return int(value) if value not in (None, '') else fallback


def bracket(x):
    """<x> = (1 + |x|^2)^(1/2)"""
    return np.sqrt(1.0 + np.square(x))


def _ordered_map(func: Callable, items: Sequence, threads: int = 1) -> List:
    if threads > 1 and len(items) > 1:
        with ThreadPool(threads) as pool:
            return pool.map(func, items)
    return [func(item) for item in items]


def _flags_from(caught) -> List[str]:
    flags = []
    for record in caught:
        for category, name in WARNING_FLAGS:
            if issubclass(record.category, category):
                flags.append(name)
    return flags


def _lead(kind: KernelKind, k: int) -> float:
    if kind.type is KernelType.DIRICHLET:
        return math.ldexp(1.0, k)
    if kind.type in (KernelType.NEUMANN, KernelType.OBLIQUE):
        return 2.0 ** (k / 2.0)
    raise ValueError(f"no orthogonality envelope for {kind.name} kernels")


def regime_of(k: int, j: int) -> str:
    return 'time' if k >= 2 * j else 'space'


def ortho_envelope(kind: KernelKind, k: int, j: int, t: float, eta: float, dim: int = 2,
                   regime: Optional[str] = None, prefactor: bool = True) -> float:
    """
    Unit-constant bound on the x'-L^1 norm of a kernel block.

    Time regime (k >= 2j) decays like exp(-2^(k/2-1) eta), space regime
    like exp(-2^(j-1) eta); both carry 2^k / <2^k t>^2 in time and the
    polynomial factor 1 + (scale * eta)^(n+2) when ``prefactor`` is set.
    """
    regime = regime or regime_of(k, j)
    scale = 2.0 ** (k / 2.0) if regime == 'time' else math.ldexp(1.0, j)
    poly = 1.0 + (scale * eta) ** (dim + 2) if prefactor else 1.0
    decay = math.exp(-0.5 * scale * eta)
    time = math.ldexp(1.0, k) / float(bracket(math.ldexp(t, k))) ** 2
    return _lead(kind, k) * poly * decay * time


def smoothing_envelope(kind: KernelKind, k: int, m: int, t: float, eta: float, order: int = 2) -> float:
    """Unit-constant bound for the eta-smoothed block phi_m *_eta Psi_{k,j}"""
    gain = 2.0 ** (-abs(k / 2.0 - m))
    height = float(bracket(2.0 ** min(k / 2.0, m) * eta)) ** order
    time = math.ldexp(1.0, k) / float(bracket(math.ldexp(t, k))) ** 2
    return _lead(kind, k) * gain * time / height


def _profile_metadata(profile: DyadicProfile, **extra) -> Dict:
    meta = {'profile': profile.identifier}
    meta.update(extra)
    return meta


def ortho_sweep(kind: KernelKind, k_range: Sequence[int], j_range: Sequence[int],
                t_set: Sequence[float], eta_set: Sequence[float],
                profile: Optional[DyadicProfile] = None,
                settings: QuadratureSettings = QuadratureSettings(),
                dim: int = 2, t_scale: str = 'absolute', eta_scale: str = 'absolute',
                force_regime: Optional[str] = None, slope_tolerance: float = SLOPE_TOLERANCE,
                threads: int = 1) -> SweepReport:
    """
    x'-L^1 norms of kernel blocks against the orthogonality envelope.

    Args:
        kind: Dirichlet, Neumann or oblique
        k_range, j_range: Temporal and spatial dyadic indices
        t_set: Times, or multiples of 2^-k when ``t_scale`` is 'dyadic'
        eta_set: Heights, or multiples of 2^(-k/2) when ``eta_scale`` is 'parabolic'
        force_regime: Use this regime's envelope for every row
        slope_tolerance: Largest log2 slope of the per-regime upper
            envelope of the ratio: in magnitude against k and j, from
            above against log2 eta
        threads: Worker threads over rows

    Returns:
        Report with one row per (k, j, t, eta); quadrature failures are
        kept as failed rows. The global least-squares slopes and the
        t slope are recorded but do not decide the pass flag: at t = 0 the
        Dirichlet block vanishes to first order in eta, which a maximum
        over the other parameters absorbs and a plain regression does not.
    """
    _lead(kind, 0)
    if not (k_range and j_range and t_set and eta_set):
        raise ValueError("every sweep range must be non-empty")
    profile = profile or DyadicProfile()

    tasks = []
    for k in k_range:
        for j in j_range:
            for c_t in t_set:
                t = math.ldexp(c_t, -k) if t_scale == 'dyadic' else float(c_t)
                for c_eta in eta_set:
                    eta = c_eta * 2.0 ** (-k / 2.0) if eta_scale == 'parabolic' else float(c_eta)
                    tasks.append((k, j, t, eta))

    def run(task):
        k, j, t, eta = task
        spec = KernelSpec(kind, k, j, eta, dim=dim)
        try:
            estimate = kernel_l1_norm(spec, t, profile, settings=settings)
            return estimate, None
        except QuadratureError as exc:
            logger.warning("quadrature failed for %s: %s", spec, exc)
            return None, str(exc)

    results = _ordered_map(run, tasks, threads)
    report = SweepReport(f"ortho-{kind.name}", ['k', 'j', 't', 'eta'],
                         _profile_metadata(profile, dim=dim, slope_tolerance=slope_tolerance,
                                           quadrature=asdict(settings)))
    for (k, j, t, eta), (estimate, _) in zip(tasks, results):
        regime = force_regime or regime_of(k, j)
        envelope = ortho_envelope(kind, k, j, t, eta, dim, regime)
        plain = ortho_envelope(kind, k, j, t, eta, dim, regime, prefactor=False)
        params = {'k': k, 'j': j, 't': t, 'eta': eta}
        if estimate is None:
            report.add_row(params, float('nan'), envelope, [FAILED, 'quadrature'], regime,
                           envelope_plain=plain, ratio_plain=float('nan'), tail=float('nan'))
            continue
        report.add_row(params, estimate.value, envelope, [], regime,
                       envelope_plain=plain, ratio_plain=estimate.value / plain, tail=estimate.tail,
                       t_scaled=math.ldexp(t, k))

    report.slopes = {
        'k': report.slope_against('k'),
        'j': report.slope_against('j'),
        'log2_eta': report.slope_against('eta', math.log2),
        'log2_bracket_t': report.slope_against('t_scaled', lambda v: math.log2(float(bracket(v)))),
    }
    checks = []
    for regime in report.regimes():
        upper_k = report.upper_slope_against('k', regime=regime)
        upper_j = report.upper_slope_against('j', regime=regime)
        upper_eta = report.upper_slope_against('eta', math.log2, regime=regime)
        report.slopes.update({f'upper_k_{regime}': upper_k, f'upper_j_{regime}': upper_j,
                              f'upper_log2_eta_{regime}': upper_eta})
        checks += [abs(upper_k), abs(upper_j), upper_eta]
    report.passed = (len(report.usable_rows()) == len(report.rows)
                     and all(v <= slope_tolerance for v in checks if math.isfinite(v)))
    logger.info("ortho sweep %s: %d rows, max ratio %s", kind.name, len(report.rows),
                report.max_ratio_by_regime())
    return report


def neumann_dirichlet_slope(k_range: Sequence[int] = (4, 6, 8), j: int = 0,
                            profile: Optional[DyadicProfile] = None,
                            settings: QuadratureSettings = QuadratureSettings(), dim: int = 2) -> float:
    """
    log2 slope in k of ||Psi_N|| / ||Psi_D|| at t = 0 and eta = 2^(-k/2).

    The Neumann lead is 2^(-k/2) times the Dirichlet one, so the slope
    should be -1/2 within NEUMANN_SLOPE_TOLERANCE.
    """
    if len(set(k_range)) < 2:
        raise ValueError("the Neumann/Dirichlet slope needs two distinct k")
    profile = profile or DyadicProfile()
    ratios = []
    for k in k_range:
        eta = 2.0 ** (-k / 2.0)
        neumann = kernel_l1_norm(KernelSpec(NEUMANN, k, j, eta, dim=dim), 0.0, profile, settings=settings)
        dirichlet = kernel_l1_norm(KernelSpec(DIRICHLET, k, j, eta, dim=dim), 0.0, profile, settings=settings)
        ratios.append(neumann.value / dirichlet.value)
    slope = log2_slope(list(k_range), ratios)
    logger.info("Neumann/Dirichlet k slope over %s: %.4f", list(k_range), slope)
    return slope


def eta_decay_rate(kind: KernelKind, k: int, j: int, heights: Sequence[float] = (6.0, 9.0, 12.0),
                   profile: Optional[DyadicProfile] = None,
                   settings: QuadratureSettings = QuadratureSettings(), dim: int = 2) -> float:
    """
    Slope of ln ||Psi_{k,j}(0)||_{L^1} against 2^(k/2) eta.

    Args:
        heights: Values of 2^(k/2) eta, well inside the exponential tail
    """
    profile = profile or DyadicProfile()
    values = [kernel_l1_norm(KernelSpec(kind, k, j, e * 2.0 ** (-k / 2.0), dim=dim), 0.0, profile,
                             settings=settings).value for e in heights]
    return float(np.polyfit(np.asarray(heights, dtype=float), np.log(values), 1)[0])


def smoothing_regime(k: int, m: int) -> str:
    if m < k / 2.0:
        return 'low'
    return 'peak' if m == k / 2.0 else 'high'


def smoothing_sweep(kind: KernelKind, k: int, j: int, m_range: Sequence[int], t: float,
                    eta_set: Sequence[float], profile: Optional[DyadicProfile] = None,
                    settings: QuadratureSettings = QuadratureSettings(), dim: int = 2,
                    order: int = 2, method: str = 'fourier', eta_scale: str = 'absolute',
                    slope_tolerance: float = SLOPE_TOLERANCE, threads: int = 1) -> SweepReport:
    """
    eta-smoothed kernel blocks against their envelope, for m on both sides
    of k/2. Rows with m < k/2 form the 'low' regime, m > k/2 the 'high'
    one and m = k/2 the 'peak'.

    Args:
        eta_set: Heights, or multiples of 2^(-k/2) when ``eta_scale`` is 'parabolic'
        slope_tolerance: Largest |slope| of the low-regime upper envelope in m,
            and largest slope of the high-regime one; below the envelope
            the high regime may fall faster once 2^m eta is large

    Returns:
        Report with one row per (m, eta)
    """
    _lead(kind, k)
    if not (m_range and eta_set):
        raise ValueError("every sweep range must be non-empty")
    if eta_scale not in ('absolute', 'parabolic'):
        raise ValueError(f"unknown height scale {eta_scale!r}")
    profile = profile or DyadicProfile()
    heights = [c * 2.0 ** (-k / 2.0) if eta_scale == 'parabolic' else float(c) for c in eta_set]
    tasks = [(m, eta) for m in m_range for eta in heights]

    def run(task):
        m, eta = task
        spec = KernelSpec(kind, k, j, eta, m=m, dim=dim)
        try:
            return eta_smoothed_l1(spec, t, profile, settings=settings, method=method), None
        except QuadratureError as exc:
            logger.warning("quadrature failed for %s: %s", spec, exc)
            return None, str(exc)

    results = _ordered_map(run, tasks, threads)
    report = SweepReport(f"smoothing-{kind.name}", ['k', 'j', 'm', 't', 'eta'],
                         _profile_metadata(profile, dim=dim, order=order, method=method,
                                           slope_tolerance=slope_tolerance))
    for (m, eta), (estimate, _) in zip(tasks, results):
        regime = smoothing_regime(k, m)
        envelope = smoothing_envelope(kind, k, m, t, eta, order)
        params = {'k': k, 'j': j, 'm': m, 't': t, 'eta': eta}
        if estimate is None:
            report.add_row(params, float('nan'), envelope, [FAILED, 'quadrature'], regime)
        else:
            report.add_row(params, estimate.value, envelope, [], regime, tail=estimate.tail)

    report.slopes = {
        'm_low': report.upper_slope_against('m', regime='low'),
        'm_high': report.upper_slope_against('m', regime='high'),
        'log2_eta': report.slope_against('eta', math.log2),
    }
    low, high = report.slopes['m_low'], report.slopes['m_high']
    report.passed = (len(report.usable_rows()) == len(report.rows)
                     and (not math.isfinite(low) or abs(low) <= slope_tolerance)
                     and (not math.isfinite(high) or high <= slope_tolerance))
    return report


@dataclass
class BoundaryDatum:
    """Boundary datum of a maximal-regularity family"""

    h: TimeField
    label: str = ''
    params: Dict = field(default_factory=dict)

    @property
    def grid(self) -> GridSpec:
        space = self.h.space
        if space is None:
            raise PreconditionError("maximal regularity needs a boundary of dimension >= 1")
        return GridSpec(space.n + 1, space.N, space.L)

    def onset(self) -> int:
        active = np.flatnonzero(np.max(np.abs(self.h.samples.reshape(self.h.tgrid.Nt, -1)), axis=1) > 0)
        return int(active[0]) if active.size else self.h.tgrid.Nt - 1


@dataclass
class ManufacturedField:
    """Half-space field fed to the trace estimates"""

    u: SpaceTimeField
    label: str = ''
    params: Dict = field(default_factory=dict)


def smooth_bump(t, start: float, stop: float) -> np.ndarray:
    """C-infinity bump equal to 1 at the centre of [start, stop] and 0 outside"""
    ramp = 0.5 * (stop - start)
    t = np.asarray(t, dtype=float)
    return DyadicProfile.step((t - start) / ramp) * DyadicProfile.step((stop - t) / ramp)


def gabor(x, width: float, freq: float, centre: float = 0.0) -> np.ndarray:
    """Gaussian envelope times a cosine"""
    x = np.asarray(x, dtype=float) - centre
    return np.exp(-x * x / (2.0 * width * width)) * np.cos(freq * x)


def gabor_datum(t_centre: float, t_width: float, t_freq: float,
                x_width: float, x_freq: float) -> Callable:
    """
    h(t, x') = gabor in t times gabor in x'_1 (times a Gaussian in x'_2).
    Zero-mean in both variables up to exp(-(freq * width)^2 / 2).
    """
    def fn(t, *x):
        value = gabor(t, t_width, t_freq, t_centre) * gabor(x[0], x_width, x_freq)
        for extra in x[1:]:
            value = value * np.exp(-extra * extra / (2.0 * x_width * x_width))
        return value

    return fn


def scaling_datum(tgrid: TimeGrid, space: GridSpec) -> Callable:
    """
    Gabor datum centred in [0, T] with 4.5 widths of room on either side.

    The carriers sit SCALING_MARGIN spectral widths above the lower edges
    of the automatic space and time windows; ``scaling_grids`` refines the
    grids until the upward dilations fit under the upper edges.
    """
    t_width = tgrid.T / 9.0
    x_width = space.L / 9.0
    jmin, _ = auto_window(space)
    kmin, _ = time_window(tgrid)
    return gabor_datum(0.5 * tgrid.T, t_width, math.ldexp(1.0, kmin) + SCALING_MARGIN / t_width,
                       x_width, math.ldexp(1.0, jmin) + SCALING_MARGIN / x_width)


def _holds(grid: GridSpec, margin: float, factor: float) -> bool:
    try:
        lo, hi = auto_window(grid)
    except WindowOutOfBandError:
        return False
    return math.ldexp(1.0, hi) >= factor * (math.ldexp(1.0, lo) + 2.0 * margin)


def scaling_grids(tgrid: TimeGrid, space: GridSpec, lambdas: Sequence[float],
                  max_size: int = 1 << 16) -> Tuple[TimeGrid, GridSpec]:
    """
    Halve the time step and the boundary spacing, keeping T and L, until
    ``scaling_datum`` dilated by every factor in ``lambdas`` stays in band.

    Raises:
        BandError: if the grids would need more than ``max_size`` samples per axis
    """
    top = max(_check_dyadic(lambdas))
    x_margin = SCALING_MARGIN * 9.0 / space.L
    t_margin = SCALING_MARGIN * 9.0 / tgrid.T
    while not _holds(space, x_margin, top):
        if 2 * space.N > max_size:
            raise BandError(f"no boundary grid up to N = {max_size} holds dilations by {top:g}")
        space = GridSpec(space.n, 2 * space.N, space.L)
    while not _holds(padded_time_axis(tgrid), t_margin, top * top):
        if 2 * (tgrid.Nt - 1) + 1 > max_size:
            raise BandError(f"no time grid up to {max_size} samples holds dilations by {top:g}")
        tgrid = TimeGrid(tgrid.T, 2 * (tgrid.Nt - 1) + 1)
    logger.info("scaling grids: %s, %s", tgrid, space)
    return tgrid, space


def bump_datum(tgrid: TimeGrid, space: GridSpec, cycles: float = 6.0) -> Callable:
    """Compactly supported time bump in [0.05 T, 0.45 T] times a Gabor packet in x'"""
    width = space.L / 12.0
    freq = cycles / width

    def fn(t, *x):
        value = smooth_bump(t, 0.05 * tgrid.T, 0.45 * tgrid.T) * gabor(x[0], width, freq)
        for extra in x[1:]:
            value = value * np.exp(-extra * extra / (2.0 * width * width))
        return value

    return fn


def separable_field(a: Callable, b: Callable, c: Callable) -> Callable:
    """u(t, x', eta) = a(t) b(x') c(eta)"""
    def fn(t, *x):
        return a(t) * b(*x[:-1]) * c(x[-1])

    return fn


def trace_field(tgrid: TimeGrid, grid: GridSpec, cycles: float = 6.0) -> Callable:
    """Separable field vanishing at t = 0, localised near the boundary"""
    width = grid.L / 12.0
    freq = cycles / width

    def tangential(*x):
        value = gabor(x[0], width, freq)
        for extra in x[1:]:
            value = value * np.exp(-extra * extra / (2.0 * width * width))
        return value

    return separable_field(lambda t: smooth_bump(t, 0.0, 0.5 * tgrid.T), tangential,
                           lambda eta: np.exp(-eta * eta / (2.0 * width * width)))


def sample_boundary(fn: Callable, tgrid: TimeGrid, space: GridSpec) -> TimeField:
    """Evaluate fn(t, x'_1, ..., x'_{n-1}) on the boundary grid"""
    t = tgrid.times().reshape((-1,) + (1,) * space.n)
    mesh = [m[None, ...] for m in space.mesh()]
    samples = np.broadcast_to(fn(t, *mesh), (tgrid.Nt,) + space.shape)
    return TimeField(tgrid, np.array(samples, dtype=float), space)


def sample_halfspace(fn: Callable, tgrid: TimeGrid, grid: GridSpec) -> SpaceTimeField:
    """Evaluate fn(t, x'..., eta) on the half-space sub-grid"""
    t = tgrid.times().reshape((-1,) + (1,) * grid.n)
    mesh = [m[None, ...] for m in grid.mesh(half=True)]
    samples = np.broadcast_to(fn(t, *mesh), (tgrid.Nt,) + grid.half_shape)
    return SpaceTimeField(tgrid, grid, np.array(samples, dtype=float))


def _check_dyadic(lambdas: Sequence[float]) -> List[float]:
    lambdas = [float(v) for v in lambdas]
    if len(set(lambdas)) < 2:
        raise ValueError("dilation families need at least two distinct factors")
    for lam in lambdas:
        if not lam > 0 or not float(math.log2(lam)).is_integer():
            raise ValueError(f"dilation factors must be powers of two, got {lam}")
    return lambdas


def parabolic_family(fn: Callable, tgrid: TimeGrid, space: GridSpec,
                     lambdas: Sequence[float]) -> List[BoundaryDatum]:
    """
    h_lam(t, x') = h(lam^2 t, lam x') sampled on grids shrunk by lam^2
    in time and lam in space, so every member resolves the datum alike.
    """
    family = []
    for lam in _check_dyadic(lambdas):
        tg = tgrid.scaled(lam * lam)
        sp = space.scaled(lam)
        h = sample_boundary(lambda t, *x, lam=lam: fn(lam * lam * t, *(lam * xi for xi in x)), tg, sp)
        family.append(BoundaryDatum(h, f"lambda={lam:g}", {'lam': lam}))
    return family


def parabolic_fields(fn: Callable, tgrid: TimeGrid, grid: GridSpec,
                     lambdas: Sequence[float]) -> List[ManufacturedField]:
    """u_lam(t, x) = u(lam^2 t, lam x) on correspondingly shrunk grids"""
    family = []
    for lam in _check_dyadic(lambdas):
        u = sample_halfspace(lambda t, *x, lam=lam: fn(lam * lam * t, *(lam * xi for xi in x)),
                             tgrid.scaled(lam * lam), grid.scaled(lam))
        family.append(ManufacturedField(u, f"lambda={lam:g}", {'lam': lam}))
    return family


def translated_family(h: TimeField, shifts: Sequence[int]) -> List[BoundaryDatum]:
    """Copies of h delayed by whole time steps"""
    family = []
    flat = h.samples.reshape(h.tgrid.Nt, -1)
    for shift in shifts:
        if shift < 0 or (shift and np.any(flat[-shift:] != 0)):
            raise ValueError(f"shift {shift} would push the datum past the horizon")
        samples = np.zeros_like(h.samples)
        samples[shift:] = h.samples[:h.tgrid.Nt - shift]
        family.append(BoundaryDatum(TimeField(h.tgrid, samples, h.space), f"shift={shift}",
                                    {'shift': shift}))
    return family


def random_bump_family(tgrid: TimeGrid, space: GridSpec, count: int,
                       seed: Optional[int] = None) -> List[BoundaryDatum]:
    """
    Band-limited boundary bumps: a smooth time bump in the first half of
    [0, T] times a Gabor packet in x_1' (and a Gaussian in x_2' when n = 3).
    """
    rng = np.random.default_rng(default_seed() if seed is None else seed)
    jmin, jmax = auto_window(space)
    lo = math.log2(max(8.0 / (space.L / 8.0), math.ldexp(1.0, jmin + 1)))
    hi = math.log2(math.ldexp(1.0, jmax - 1))
    family = []
    for index in range(count):
        freq = 2.0 ** rng.uniform(lo, max(lo, hi))
        width = min(6.0 / freq * (1.0 + rng.uniform()), space.L / 10.0)
        centre = rng.uniform(-space.L / 16.0, space.L / 16.0)
        start = rng.uniform(0.02, 0.15) * tgrid.T
        stop = start + rng.uniform(0.15, 0.3) * tgrid.T

        def fn(t, *x, freq=freq, width=width, centre=centre, start=start, stop=stop):
            value = smooth_bump(t, start, stop) * gabor(x[0], width, freq, centre)
            for extra in x[1:]:
                value = value * np.exp(-extra * extra / (2.0 * width * width))
            return value

        family.append(BoundaryDatum(sample_boundary(fn, tgrid, space), f"bump-{index}",
                                    {'freq': freq, 'width': width, 'start': start}))
    return family


def time_window(tgrid: TimeGrid, pad_factor: int = 4) -> Tuple[int, int]:
    return auto_window(padded_time_axis(tgrid, pad_factor))


def auto_time_bank(tgrid: TimeGrid, profile: DyadicProfile, pad_factor: int = 4) -> FilterBank:
    """Time bank whose window is the widest one fitting the padded axis"""
    kmin, kmax = time_window(tgrid, pad_factor)
    return make_time_bank(tgrid, profile, kmin, kmax, pad_factor)


class HalfSpaceLebesgue:
    """L^p norm of half-space slices"""

    def __init__(self, p: float, grid: GridSpec):
        self.p = p
        self.grid = grid

    def batched(self, samples: np.ndarray) -> np.ndarray:
        return lp_norm(samples, self.p, self.grid.cell_volume, self.grid.n)


def hessian_components(u: SpaceTimeField) -> List[np.ndarray]:
    """
    All second derivatives d_i d_j u (ordered pairs): spectral along the
    boundary axes, second-order finite differences along x_n.
    """
    grid = u.grid
    samples = u.samples
    tangential = list(range(1, grid.n))
    freq = grid.axis_frequencies()

    def spectral(values, axis):
        shape = [1] * values.ndim
        shape[axis] = grid.N
        return sfft.ifft(1j * freq.reshape(shape) * sfft.fft(values, axis=axis), axis=axis).real

    def normal(values):
        return np.gradient(values, grid.spacing, axis=-1, edge_order=2)

    first = {axis: spectral(samples, axis) for axis in tangential}
    first['n'] = normal(samples)
    out = []
    for a in tangential + ['n']:
        for b in tangential + ['n']:
            base = first[a]
            out.append(normal(base) if b == 'n' else spectral(base, b))
    return out


def _bulk_functional(variant: str, s: float, p: float, grid: GridSpec, profile: DyadicProfile):
    if variant == 'lp':
        return HalfSpaceLebesgue(p, grid)
    bank = make_filter_bank(profile, *auto_window(grid), grid)
    return HalfSpaceBesov(NormParams(s, p), bank)


def bulk_norms(u: SpaceTimeField, functional, window: Optional[Tuple[int, int]] = None) -> float:
    """
    L^1 in time of ||d_t u|| + ||grad^2 u|| over time indices [start, stop].

    u is taken to vanish before t = 0, so d_t u is a centred difference at
    every index but the last.
    """
    dt = u.tgrid.dt
    before = np.concatenate([np.zeros_like(u.samples[:1]), u.samples])
    dudt = np.gradient(before, dt, axis=0, edge_order=2)[1:]
    total = functional.batched(dudt)
    for component in hessian_components(u):
        total = total + functional.batched(component)
    start, stop = window if window is not None else (0, u.tgrid.Nt - 1)
    return float(trapezoid(total[start:stop + 1], dx=dt))


@dataclass(frozen=True)
class BoundaryNorm:
    """
    Norm of a boundary datum: 'lebesgue' is L^1(0, T; B^space_s_{p,1}),
    'triebel' is F^time_s_{1,1}(R; B^space_s_{p,1}).
    """

    kind: str
    time_s: float
    space_s: float
    p: float
    homogeneous: bool = True

    def __post_init__(self):
        if self.kind not in ('lebesgue', 'triebel'):
            raise ValueError(f"unknown boundary norm {self.kind!r}")

    @classmethod
    def dirichlet_time(cls, s: float, p: float) -> 'BoundaryNorm':
        return cls('triebel', 1.0 - 1.0 / (2.0 * p), s, p)

    @classmethod
    def dirichlet_space(cls, s: float, p: float) -> 'BoundaryNorm':
        return cls('lebesgue', 0.0, s + 2.0 - 1.0 / p, p)

    @classmethod
    def neumann_time(cls, s: float, p: float) -> 'BoundaryNorm':
        return cls('triebel', 0.5 - 1.0 / (2.0 * p), s, p)

    @classmethod
    def neumann_space(cls, s: float, p: float) -> 'BoundaryNorm':
        return cls('lebesgue', 0.0, s + 1.0 - 1.0 / p, p)

    def exponent(self, boundary_dim: int) -> float:
        """Power of lam picked up under h(lam^2 t, lam x')"""
        spatial = self.space_s - boundary_dim / self.p
        if self.kind == 'lebesgue':
            return -2.0 + spatial
        return 2.0 * self.time_s - 2.0 + spatial

    def evaluate(self, h: TimeField, profile: DyadicProfile, time_bank: Optional[FilterBank] = None,
                 space_bank: Optional[FilterBank] = None) -> float:
        space = h.space
        space_bank = space_bank or make_filter_bank(profile, *auto_window(space), space)
        spatial = BesovFunctional(NormParams(self.space_s, self.p, homogeneous=self.homogeneous), space_bank)
        if self.kind == 'lebesgue':
            return bochner_lebesgue_norm(h, spatial)
        time_bank = time_bank or auto_time_bank(h.tgrid, profile)
        return bochner_tl_norm(h, self.time_s, spatial, time_bank)


def boundary_side(bc: KernelKind, h: TimeField, s: float, p: float, variant: str,
                  profile: DyadicProfile) -> float:
    """Right-hand side of the maximal-regularity estimate for datum h"""
    space = h.space
    time_bank = auto_time_bank(h.tgrid, profile)
    space_bank = make_filter_bank(profile, *auto_window(space), space)
    dirichlet = bc.type is KernelType.DIRICHLET
    if variant == 'lp':
        time_s = 1.0 - 1.0 / (2.0 * p) if dirichlet else 0.5 - 1.0 / (2.0 * p)
        space_s = 2.0 - 1.0 / p if dirichlet else 1.0 - 1.0 / p
        time_part = bochner_tl_norm(h, time_s, LebesgueFunctional(p, space), time_bank)
        space_part = BoundaryNorm('lebesgue', 0.0, space_s, p, homogeneous=False).evaluate(
            h, profile, space_bank=space_bank)
        return time_part + space_part
    time_norm = BoundaryNorm.dirichlet_time(s, p) if dirichlet else BoundaryNorm.neumann_time(s, p)
    space_norm = BoundaryNorm.dirichlet_space(s, p) if dirichlet else BoundaryNorm.neumann_space(s, p)
    return (time_norm.evaluate(h, profile, time_bank, space_bank)
            + space_norm.evaluate(h, profile, time_bank, space_bank))


def maxreg_ratio(bc: KernelKind, family: Sequence[BoundaryDatum], s: float, p: float,
                 variant: str = 'besov', profile: Optional[DyadicProfile] = None,
                 solver: SolverSettings = SolverSettings()) -> SweepReport:
    """
    Bulk norms of the solution with boundary datum h against the norms of h.

    Each member is solved with u0 = 0 and f = 0. The bulk side integrates
    ||d_t u|| + ||grad^2 u|| over a horizon shared by the family, measured
    from each member's onset, so delayed copies of a datum are compared on
    equal footing. Warnings raised while solving or measuring become flags.

    Raises:
        PreconditionError: if s is outside (-1 + 1/p, 0] for the Besov variant
    """
    if variant not in ('besov', 'lp'):
        raise ValueError(f"unknown variant {variant!r}")
    if variant == 'besov':
        lo, _ = validity_range(p)
        if not lo < s <= 0:
            raise PreconditionError(f"s = {s} outside (-1 + 1/p, 0] for p = {p}")
    if not family:
        raise ValueError("empty data family")
    profile = profile or DyadicProfile()

    onsets = [member.onset() for member in family]
    active = [member.h.tgrid.Nt - 1 - onset for member, onset in zip(family, onsets) if np.any(member.h.samples)]
    horizon = max(0, min(active) - 1) if active else 0

    def run(index):
        member = family[index]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always')
            grid = member.grid
            data = IbvpData(bc, HalfField(grid, np.zeros(grid.half_shape)), member.h, member.h.tgrid)
            bundle = solve_halfspace_heat(data, solver)
            functional = _bulk_functional(variant, s, p, grid, profile)
            lhs = bulk_norms(bundle.u, functional, (onsets[index], onsets[index] + horizon))
            rhs = boundary_side(bc, member.h, s, p, variant, profile)
        return lhs, rhs, _flags_from(caught)

    # warnings are captured per member, so members run one at a time
    results = [run(index) for index in range(len(family))]
    report = SweepReport(f"maxreg-{bc.name}-{variant}", ['label', 's', 'p'],
                         _profile_metadata(profile, variant=variant, horizon_steps=horizon))
    for member, (lhs, rhs, flags) in zip(family, results):
        params = {'label': member.label, 's': s, 'p': p}
        if rhs == 0:
            report.add_row(params, lhs, 0.0, flags + [DEGENERATE], **member.params)
        else:
            report.add_row(params, lhs, rhs, flags, **member.params)
    report.passed = bool(report.ratios().size) and bool(np.all(np.isfinite(report.ratios())))
    logger.info("maxreg %s: %d members, spread %.3g", bc.name, len(family), report.spread())
    return report


def trace_check(family: Sequence[ManufacturedField], s: float, p: float,
                bc: KernelKind, profile: Optional[DyadicProfile] = None,
                layers: Optional[Sequence[int]] = None) -> SweepReport:
    """
    Boundary-layer norms of u (Dirichlet) or d_eta u (Neumann), maximised
    over sampled eta layers, against the bulk norms of u.

    Raises:
        PreconditionError: if a member does not vanish at t = 0
    """
    if bc.type not in (KernelType.DIRICHLET, KernelType.NEUMANN):
        raise ValueError("trace estimates exist for Dirichlet and Neumann traces only")
    if any(member.u.grid.n < 2 for member in family):
        raise PreconditionError("trace estimates need a boundary of dimension >= 1")
    lo, _ = validity_range(p)
    if not lo < s <= 0:
        raise PreconditionError(f"s = {s} outside (-1 + 1/p, 0] for p = {p}")
    profile = profile or DyadicProfile()
    dirichlet = bc.type is KernelType.DIRICHLET

    for member in family:
        scale = float(np.max(np.abs(member.u.samples)))
        if scale > 0 and float(np.max(np.abs(member.u.samples[0]))) > 1e-12 * scale:
            raise PreconditionError(f"{member.label or 'field'} does not vanish at t = 0")

    def run(member: ManufacturedField):
        u = member.u
        if not np.any(u.samples):
            return 0.0, 0.0, []
        grid = u.grid
        picks = layers if layers is not None else range(0, grid.N // 4, max(1, grid.N // 32))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always')
            values = u.samples if dirichlet else np.gradient(u.samples, grid.spacing, axis=-1, edge_order=2)
            source = SpaceTimeField(u.tgrid, grid, values)
            time_norm = BoundaryNorm.dirichlet_time(s, p) if dirichlet else BoundaryNorm.neumann_time(s, p)
            space_norm = BoundaryNorm.dirichlet_space(s, p) if dirichlet else BoundaryNorm.neumann_space(s, p)
            space = grid.boundary()
            time_bank = auto_time_bank(u.tgrid, profile)
            space_bank = make_filter_bank(profile, *auto_window(space), space)
            lhs = 0.0
            for index in picks:
                layer = source.boundary_layer(index)
                lhs = max(lhs, time_norm.evaluate(layer, profile, time_bank, space_bank)
                          + space_norm.evaluate(layer, profile, time_bank, space_bank))
            rhs = bulk_norms(u, _bulk_functional('besov', s, p, grid, profile))
        return lhs, rhs, _flags_from(caught)

    results = [run(member) for member in family]
    report = SweepReport(f"trace-{bc.name}", ['label', 's', 'p'], _profile_metadata(profile))
    for member, (lhs, rhs, flags) in zip(family, results):
        params = {'label': member.label, 's': s, 'p': p}
        if rhs == 0:
            report.add_row(params, lhs, 0.0, flags + [DEGENERATE], **member.params)
        else:
            report.add_row(params, lhs, rhs, flags, **member.params)
    report.passed = all(math.isfinite(r) for r in report.ratios())
    return report


def band_leftover(h: TimeField, space_bank: FilterBank, time_bank: FilterBank) -> float:
    """
    Relative L^2 energy of h outside the space window (over x') and
    outside the time window (over the zero-padded time axis).
    """
    space = h.space
    total = float(np.sum(h.samples ** 2))
    if total == 0:
        return 0.0
    axes = tuple(range(1, space.n + 1))
    spectrum = np.abs(sfft.fftn(h.samples, axes=axes)) ** 2
    radius = space.frequency_radius()
    outside = (radius < math.ldexp(1.0, space_bank.jmin)) | (radius > math.ldexp(1.0, space_bank.jmax))
    space_out = float(np.sum(spectrum * outside)) / float(np.sum(spectrum))

    size = time_bank.grid.N
    padded = np.zeros((size,) + h.samples.shape[1:])
    padded[size // 2:size // 2 + h.tgrid.Nt] = h.samples
    tspec = np.abs(sfft.fft(padded, axis=0)) ** 2
    tau = np.abs(time_bank.grid.axis_frequencies())
    tout = (tau < math.ldexp(1.0, time_bank.jmin)) | (tau > math.ldexp(1.0, time_bank.jmax))
    time_out = float(np.sum(tspec[tout])) / float(np.sum(tspec))
    return math.sqrt(max(space_out, time_out))


def scaling_exponents(norm: BoundaryNorm, datum: Callable, lambdas: Sequence[float],
                      tgrid: TimeGrid, space: GridSpec, profile: Optional[DyadicProfile] = None,
                      band_tolerance: float = 1e-3, slope_tolerance: float = 0.05) -> SweepReport:
    """
    Homogeneity exponent of a boundary norm under h(lam^2 t, lam x'),
    measured on fixed grids.

    Raises:
        ValueError: for fewer than two distinct or non-dyadic factors
        BandError: if a dilated datum leaves the resolvable band
    """
    lambdas = _check_dyadic(lambdas)
    profile = profile or DyadicProfile()
    space_bank = make_filter_bank(profile, *auto_window(space), space)
    time_bank = auto_time_bank(tgrid, profile)
    target = norm.exponent(space.n)

    values = []
    for lam in lambdas:
        h = sample_boundary(lambda t, *x: datum(lam * lam * t, *(lam * xi for xi in x)), tgrid, space)
        leftover = band_leftover(h, space_bank, time_bank)
        if leftover > band_tolerance:
            raise BandError(f"datum dilated by {lam:g} leaves the band: {leftover:.3g} outside")
        values.append(norm.evaluate(h, profile, time_bank, space_bank))

    report = SweepReport('scaling', ['lam'], _profile_metadata(
        profile, norm=asdict(norm), slope_tolerance=slope_tolerance))
    base_lam, base_value = lambdas[0], values[0]
    for lam, value in zip(lambdas, values):
        envelope = base_value * (lam / base_lam) ** target
        report.add_row({'lam': lam}, value, envelope)
    slope = log2_slope([math.log2(v) for v in lambdas], values)
    report.slopes = {'log2_lambda': slope}
    report.extra_summary = {'analytic_exponent': target, 'slope_error': abs(slope - target)}
    report.passed = abs(slope - target) <= slope_tolerance
    return report


def lemma_b_integral(order: int, a: float) -> float:
    """Integral of (1 + x^2)^(-order/2) over |x| <= a"""
    value, _ = quad(lambda x: (1.0 + x * x) ** (-order / 2.0), 0.0, a, epsabs=1e-14, epsrel=1e-13, limit=200)
    return 2.0 * value


def lemma_b_closed_form(order: int, a: float) -> Optional[float]:
    if order == 2:
        return 2.0 * math.atan(a)
    if order == 3:
        return 2.0 * a / math.sqrt(1.0 + a * a)
    return None


def lemma_b_bound(order: int, a_set: Sequence[float], tolerance: float = 1e-8) -> SweepReport:
    """
    Integral of (1 + x^2)^(-N/2) over |x| <= a against a / (1 + a^2)^(1/2).

    Orders 2 and 3 are also checked against their closed forms.
    """
    if order < 2:
        raise ValueError(f"order must be at least 2, got {order}")
    if not a_set:
        raise ValueError("empty a-set")
    report = SweepReport('lemma-b', ['N', 'a'], {'tolerance': tolerance})
    agreement = 0.0
    for a in a_set:
        if not a > 0:
            raise ValueError(f"a must be positive, got {a}")
        value = lemma_b_integral(order, a)
        exact = lemma_b_closed_form(order, a)
        extra = {}
        if exact is not None:
            extra['closed_form'] = exact
            extra['quadrature_error'] = abs(value - exact)
            agreement = max(agreement, abs(value - exact))
        report.add_row({'N': order, 'a': a}, value, a / math.sqrt(1.0 + a * a), **extra)
    report.slopes = {'log2_a': report.slope_against('a', math.log2)}
    report.extra_summary = {'closed_form_error': agreement}
    report.passed = agreement <= tolerance and all(math.isfinite(r) for r in report.ratios())
    return report
