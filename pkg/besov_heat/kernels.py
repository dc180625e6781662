"""
Boundary potentials and Green functions of the half-space heat equation.

Every kernel is a Fourier multiplier in (tau, xi') times the layer profile
exp(-w eta), w = sqrt(i tau + |xi'|^2) on the principal branch. Dyadic
blocks are evaluated in rescaled variables tau = 2^k sigma, xi' = 2^j zeta
with composite Gauss-Legendre rules on the compact supports, so blocks
related by (k, j, t, x', eta) -> (k-2, j-1, 4t, 2x', 2eta) are computed on
identical node sets.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import j0, roots_legendre

from .errors import QuadratureError
from .filterbank import DyadicProfile

logger = logging.getLogger(__name__)

BRANCH_FACTOR = math.sqrt(2.0) / 2.0


class KernelType(Enum):
    DIRICHLET = 'dirichlet'
    NEUMANN = 'neumann'
    OBLIQUE = 'oblique'
    GREEN_D = 'green_d'
    GREEN_N = 'green_n'


@dataclass(frozen=True)
class KernelKind:
    """
    Kernel family; oblique kernels carry the boundary vector b = (b', b_n).

    Raises:
        ValueError: if an oblique kind lacks b or has b_n <= 0
    """

    type: KernelType
    b: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.type is KernelType.OBLIQUE:
            if not self.b or len(self.b) < 2:
                raise ValueError("oblique kernels need a vector b = (b', b_n)")
            if not self.b[-1] > 0:
                raise ValueError(f"oblique kernels need b_n > 0, got {self.b[-1]}")
        elif self.b is not None:
            raise ValueError(f"{self.type.value} kernels take no vector b")

    @classmethod
    def parse(cls, name: str, b: Optional[Sequence[float]] = None) -> 'KernelKind':
        try:
            kind = KernelType(name.lower())
        except ValueError:
            raise ValueError(f"unknown kernel kind {name!r}") from None
        return cls(kind, tuple(float(v) for v in b) if b is not None else None)

    @property
    def name(self) -> str:
        return self.type.value

    @property
    def radial(self) -> bool:
        return self.type is not KernelType.OBLIQUE

    def tangential(self) -> np.ndarray:
        return np.asarray(self.b[:-1], dtype=float)


DIRICHLET = KernelKind(KernelType.DIRICHLET)
NEUMANN = KernelKind(KernelType.NEUMANN)
GREEN_D = KernelKind(KernelType.GREEN_D)
GREEN_N = KernelKind(KernelType.GREEN_N)


@dataclass(frozen=True)
class KernelSpec:
    """Dyadic block (k in time, j in x') of a kernel at height eta"""

    kind: KernelKind
    k: int
    j: int
    eta: float
    m: Optional[int] = None
    dim: int = 2

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"kernels are evaluated at eta > 0, got {self.eta}")
        if self.dim not in (2, 3):
            raise ValueError(f"kernel dimension must be 2 or 3, got {self.dim}")
        if self.kind.b is not None and len(self.kind.b) != self.dim:
            raise ValueError(f"oblique vector has {len(self.kind.b)} components for n = {self.dim}")

    def rescaled(self, steps: int = 1) -> 'KernelSpec':
        """Block with (k, j, eta) -> (k - 2 steps, j - steps, eta 2^steps)"""
        m = None if self.m is None else self.m - steps
        return KernelSpec(self.kind, self.k - 2 * steps, self.j - steps,
                          math.ldexp(self.eta, steps), m, self.dim)


@dataclass(frozen=True)
class QuadratureSettings:
    """
    Node counts and tolerances of kernel quadrature.

    Node counts per octave are raised automatically so that every octave
    holds at least 1.5 nodes per radian of phase.
    """

    nodes_per_octave: int = 64
    angular_nodes: int = 64
    eta_nodes_per_octave: int = 64
    box_factor: float = 32.0
    panel_nodes: int = 8
    richardson_tolerance: float = 1e-6
    tail_tolerance: float = 0.05
    check: bool = True

    def refined(self) -> 'QuadratureSettings':
        return QuadratureSettings(2 * self.nodes_per_octave, 2 * self.angular_nodes,
                                  2 * self.eta_nodes_per_octave, self.box_factor,
                                  self.panel_nodes, self.richardson_tolerance,
                                  self.tail_tolerance, False)


@dataclass
class KernelSamples:
    """Kernel values on times x boundary points"""

    spec: KernelSpec
    times: np.ndarray
    points: np.ndarray
    values: np.ndarray
    richardson: float = 0.0


@dataclass
class L1Estimate:
    value: float
    tail: float
    radius: float
    richardson: float = 0.0


def principal_root(tau, xi_sq) -> np.ndarray:
    """w = sqrt(i tau + |xi'|^2), principal branch (Re w >= 0)"""
    return np.sqrt(1j * np.asarray(tau, dtype=float) + np.asarray(xi_sq, dtype=float))


def check_branch(w: np.ndarray) -> None:
    """Re w >= |w| cos(pi/4) at every node"""
    if np.any(w.real < BRANCH_FACTOR * np.abs(w) * (1.0 - 1e-12)):
        raise RuntimeError("square root left the principal sector |arg w| <= pi/4")


def symbol_prefactor(kind: KernelKind, tau, w, b_dot_xi=None) -> np.ndarray:
    """Factor multiplying exp(-w eta) in the kernel's symbol"""
    tau = np.asarray(tau, dtype=float)
    kt = kind.type
    if kt is KernelType.DIRICHLET:
        return 1j * tau * np.ones_like(w)
    if kt is KernelType.NEUMANN:
        return -1j * tau / w
    if kt is KernelType.GREEN_D:
        return np.ones_like(w)
    if kt is KernelType.GREEN_N:
        return -1.0 / w
    return 1j * tau / (1j * b_dot_xi - kind.b[-1] * w)


def symbol(kind: KernelKind, tau, xi, eta: float) -> np.ndarray:
    """
    Multiplier of a boundary potential or Green function.

    Args:
        kind: Kernel family
        tau: Time frequency
        xi: Tangential frequency vector(s), trailing axis of length n-1
        eta: Height above the boundary, > 0
    """
    if not eta > 0:
        raise ValueError(f"symbols are evaluated at eta > 0, got {eta}")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    w = principal_root(tau, np.sum(xi ** 2, axis=-1))
    b_dot_xi = None
    if kind.type is KernelType.OBLIQUE:
        b_dot_xi = np.sum(kind.tangential() * xi, axis=-1)
    return symbol_prefactor(kind, tau, w, b_dot_xi) * np.exp(-w * eta)


@lru_cache(maxsize=64)
def _legendre(count: int) -> Tuple[np.ndarray, np.ndarray]:
    return roots_legendre(count)


def octave_rule(lo: int, hi: int, per_octave: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on [2^lo, 2^hi], one panel per octave"""
    x, wts = _legendre(per_octave)
    nodes, weights = [], []
    for e in range(lo, hi):
        a, b = math.ldexp(1.0, e), math.ldexp(1.0, e + 1)
        nodes.append(0.5 * (b - a) * x + 0.5 * (b + a))
        weights.append(0.5 * (b - a) * wts)
    return np.concatenate(nodes), np.concatenate(weights)


def symmetric_rule(nodes: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return np.concatenate([-nodes[::-1], nodes]), np.concatenate([weights[::-1], weights])


def panel_rule(lo: float, hi: float, width: float, per_panel: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule with panels of the given width"""
    x, wts = _legendre(per_panel)
    count = max(1, int(round((hi - lo) / width)))
    edges = np.linspace(lo, hi, count + 1)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    return (half * x + mid).ravel(), (half * wts).ravel()


def _phase_nodes(base: int, phase: float) -> int:
    return max(base, int(math.ceil(1.5 * phase)))


def eta_filter(x, m: int, profile: DyadicProfile, per_octave: int = 64) -> np.ndarray:
    """phi_m in physical space: (1/pi) times the cosine transform of its annular multiplier"""
    x = np.asarray(x, dtype=float)
    reach = float(np.max(np.abs(x))) if x.size else 0.0
    nodes, weights = octave_rule(m - 1, m + 1, _phase_nodes(per_octave, math.ldexp(reach, m + 1)))
    weights = weights * profile.phi_m(nodes, m) / math.pi
    flat = x.ravel()
    out = np.empty_like(flat)
    step = max(1, 4_000_000 // nodes.size)
    for start in range(0, flat.size, step):
        out[start:start + step] = np.cos(np.outer(flat[start:start + step], nodes)) @ weights
    return out.reshape(x.shape)


def smoothed_layer(w: np.ndarray, eta: float, m: int, profile: DyadicProfile,
                   settings: QuadratureSettings = QuadratureSettings(),
                   method: str = 'fourier') -> np.ndarray:
    """
    phi_m convolved in eta with the even layer profile exp(-w |theta|).

    Kernels are extended evenly across eta = 0. 'fourier' integrates
    phi_m(|xi|) e^{i xi eta} 2w / (w^2 + xi^2) over the annulus of phi_m;
    'direct' integrates phi_m(eta - theta) exp(-w |theta|) in theta with
    Gauss-Legendre panels split at the kink theta = 0.
    """
    w = np.asarray(w, dtype=complex)
    if method == 'fourier':
        return _fourier_layer(w, eta, m, profile, settings)
    if method == 'direct':
        return _direct_layer(w, eta, m, profile, settings)
    raise ValueError(f"unknown smoothing method {method!r}")


def _fourier_layer(w, eta, m, profile, settings) -> np.ndarray:
    per_octave = _phase_nodes(settings.eta_nodes_per_octave, math.ldexp(eta, m + 1))
    xi, wx = symmetric_rule(*octave_rule(m - 1, m + 1, per_octave))
    weights = wx * profile.phi_m(np.abs(xi), m) * np.exp(1j * xi * eta) / math.pi
    flat = w.ravel()
    out = np.empty_like(flat)
    step = max(1, 4_000_000 // xi.size)
    for start in range(0, flat.size, step):
        chunk = flat[start:start + step, None]
        out[start:start + step] = (weights * chunk / (chunk ** 2 + xi ** 2)).sum(axis=1)
    return out.reshape(w.shape)


def _direct_layer(w, eta, m, profile, settings) -> np.ndarray:
    unique, inverse = np.unique(w.ravel(), return_inverse=True)
    # exp(-36) is below double precision relative to the peak
    reach = 36.0 / float(np.min(unique.real))
    width = 2.0 * min(math.ldexp(1.0, -m), 1.0 / float(np.max(np.abs(unique))))
    right, w_right = panel_rule(0.0, reach, width, 2 * settings.panel_nodes)
    theta = np.concatenate([-right[::-1], right])
    weights = np.concatenate([w_right[::-1], w_right])
    kernel = weights * eta_filter(eta - theta, m, profile, settings.eta_nodes_per_octave)

    out = np.empty_like(unique)
    step = max(1, 4_000_000 // theta.size)
    with np.errstate(under='ignore'):
        for start in range(0, unique.size, step):
            chunk = unique[start:start + step, None]
            out[start:start + step] = np.exp(-chunk * np.abs(theta)) @ kernel
    return out[inverse.ravel()].reshape(w.shape)


class _BlockIntegrand:
    """Symbol times cut-offs on the rescaled frequency nodes of one block"""

    def __init__(self, spec: KernelSpec, profile: DyadicProfile, settings: QuadratureSettings,
                 t_phase: float, y_max: float, method: str):
        self.spec = spec
        self.profile = profile
        self.settings = settings
        n_sigma = _phase_nodes(settings.nodes_per_octave, t_phase)
        n_zeta = _phase_nodes(settings.nodes_per_octave, y_max)
        self.sigma, self.w_sigma = symmetric_rule(*octave_rule(-1, 1, n_sigma))
        radial, w_radial = octave_rule(-1, 1, n_zeta)

        if spec.dim == 2:
            zeta, w_zeta = symmetric_rule(radial, w_radial)
            self.zeta = zeta[:, None]
            self.w_zeta = w_zeta
        elif spec.kind.radial:
            self.zeta = radial[:, None]
            self.w_zeta = w_radial * radial * 2.0 * math.pi
        else:
            count = max(settings.angular_nodes, int(math.ceil(1.5 * y_max * 2.0)))
            angle = 2.0 * math.pi * np.arange(count) / count
            rho = np.repeat(radial, count)
            ang = np.tile(angle, radial.size)
            self.zeta = np.stack([rho * np.cos(ang), rho * np.sin(ang)], axis=1)
            self.w_zeta = np.repeat(w_radial, count) * rho * (2.0 * math.pi / count)

        self.values = self._evaluate(method)

    def _evaluate(self, method: str) -> np.ndarray:
        spec = self.spec
        profile = self.profile
        tau = np.ldexp(self.sigma, spec.k)[:, None]
        xi = np.ldexp(self.zeta, spec.j)
        radius = np.sqrt(np.sum(self.zeta ** 2, axis=1))
        w = principal_root(tau, np.sum(xi ** 2, axis=1)[None, :])
        check_branch(w)

        b_dot_xi = None
        if spec.kind.type is KernelType.OBLIQUE:
            b_dot_xi = (xi @ spec.kind.tangential())[None, :]
        prefactor = symbol_prefactor(spec.kind, tau, w, b_dot_xi)

        if spec.m is None:
            layer = np.exp(-w * spec.eta)
        else:
            layer = smoothed_layer(w, spec.eta, spec.m, profile, self.settings, method)
        cutoff = profile.phi(np.abs(self.sigma))[:, None] * profile.phi(radius)[None, :]
        return prefactor * layer * cutoff

    def time_transform(self, times: np.ndarray) -> np.ndarray:
        """Sum over sigma nodes: one row per time"""
        phase = np.exp(1j * np.outer(np.ldexp(np.asarray(times, dtype=float), self.spec.k), self.sigma))
        return (phase * self.w_sigma) @ self.values

    def space_transform(self, partial: np.ndarray, points: np.ndarray) -> np.ndarray:
        spec = self.spec
        dim = spec.dim
        scale = math.ldexp(1.0, spec.k) * math.ldexp(1.0, spec.j * (dim - 1)) / (2.0 * math.pi) ** dim
        weighted = partial * self.w_zeta
        y = np.ldexp(points, spec.j)

        if dim == 2:
            y = y.reshape(-1)
            return scale * _chunked(weighted, lambda sl: np.exp(1j * np.outer(self.zeta[:, 0], y[sl])), y.size)
        if spec.kind.radial:
            r = np.sqrt(np.sum(y.reshape(-1, 2) ** 2, axis=1))
            return scale * _chunked(weighted, lambda sl: j0(np.outer(self.zeta[:, 0], r[sl])), r.size)
        y = y.reshape(-1, 2)
        return scale * _chunked(weighted, lambda sl: np.exp(1j * (self.zeta @ y[sl].T)), y.shape[0])


def _chunked(weighted: np.ndarray, kernel, count: int) -> np.ndarray:
    out = np.empty((weighted.shape[0], count), dtype=complex)
    step = max(1, 4_000_000 // max(1, weighted.shape[1]))
    for start in range(0, count, step):
        sl = slice(start, min(count, start + step))
        out[:, sl] = weighted @ kernel(sl)
    return out


def _evaluate_block(spec, times, points, profile, settings, method) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    points = np.asarray(points, dtype=float)
    t_phase = math.ldexp(float(np.max(np.abs(times))), spec.k)
    y_max = math.ldexp(float(np.max(np.abs(points))) if points.size else 0.0, spec.j)
    if spec.dim == 3:
        y_max *= math.sqrt(2.0)
    integrand = _BlockIntegrand(spec, profile, settings, t_phase, y_max, method)
    return integrand.space_transform(integrand.time_transform(times), points)


def eval_kernel_block(spec: KernelSpec, times, points, profile: DyadicProfile,
                      settings: QuadratureSettings = QuadratureSettings(),
                      method: str = 'fourier') -> KernelSamples:
    """
    Dyadic kernel block on a set of times and boundary points.

    Args:
        spec: Kernel block
        times: Time samples
        points: Boundary points, shape (P,) for n = 2 or (P, 2) for n = 3
        profile: Dyadic profile supplying the time and space cut-offs
        settings: Quadrature settings; ``check`` enables the doubling test
        method: eta-smoothing method when ``spec.m`` is set

    Raises:
        QuadratureError: if doubling every node count moves the values by
            more than ``settings.richardson_tolerance`` relative
    """
    values = _evaluate_block(spec, times, points, profile, settings, method)
    richardson = 0.0
    if settings.check:
        fine = _evaluate_block(spec, times, points, profile, settings.refined(), method)
        scale = float(np.max(np.abs(fine)))
        richardson = float(np.max(np.abs(fine - values))) / scale if scale > 0 else 0.0
        if richardson > settings.richardson_tolerance:
            raise QuadratureError(
                f"{spec}: node doubling changed the block by {richardson:.3g} relative")
        values = fine
    return KernelSamples(spec, np.atleast_1d(np.asarray(times, dtype=float)),
                         np.asarray(points, dtype=float), values, richardson)


def _l1_points(spec: KernelSpec, half_width: float, settings: QuadratureSettings):
    """Quadrature points on the doubled box, weights, and the inner-box mask (y' units)"""
    outer = 2.0 * half_width
    if spec.dim == 2:
        y, wy = panel_rule(-outer, outer, 1.0, settings.panel_nodes)
        return y, wy, np.abs(y) <= half_width
    if spec.kind.radial:
        r, wr = panel_rule(0.0, outer, 1.0, settings.panel_nodes)
        points = np.stack([r, np.zeros_like(r)], axis=1)
        return points, wr * 2.0 * math.pi * r, r <= half_width
    y, wy = panel_rule(-outer, outer, 2.0, max(4, settings.panel_nodes // 2))
    gx, gy = np.meshgrid(y, y, indexing='ij')
    points = np.stack([gx.ravel(), gy.ravel()], axis=1)
    weights = np.outer(wy, wy).ravel()
    inner = np.max(np.abs(points), axis=1) <= half_width
    return points, weights, inner


def kernel_l1_norm(spec: KernelSpec, t: float, profile: DyadicProfile,
                   radius: Optional[float] = None,
                   settings: QuadratureSettings = QuadratureSettings(),
                   method: str = 'fourier') -> L1Estimate:
    """
    L^1 norm in x' of a kernel block at time t.

    The norm is integrated over the box of half-width 2R (R defaults to
    ``box_factor * 2^-j``, and the disk of radius 2R replaces the box for
    radial kernels in n = 3); the tail is the relative change against
    the box of half-width R.

    Raises:
        QuadratureError: if the tail exceeds ``settings.tail_tolerance``
    """
    if radius is None:
        radius = math.ldexp(settings.box_factor, -spec.j)
    half_width = math.ldexp(radius, spec.j)
    y, weights, inner = _l1_points(spec, half_width, settings)
    points = np.ldexp(y, -spec.j)
    samples = eval_kernel_block(spec, [t], points, profile, settings, method)

    density = np.abs(samples.values[0]) * weights * math.ldexp(1.0, -spec.j * (spec.dim - 1))
    total = float(np.sum(density))
    inside = float(np.sum(density[inner]))
    tail = (total - inside) / total if total > 0 else 0.0
    if tail > settings.tail_tolerance:
        raise QuadratureError(f"{spec}: L1 tail {tail:.3g} beyond box radius {radius:.4g}")
    logger.debug("L1 %s t=%g: %.6e (tail %.2e)", spec, t, total, tail)
    return L1Estimate(total, tail, radius, samples.richardson)


def eta_smoothed_l1(spec: KernelSpec, t: float, profile: DyadicProfile,
                    radius: Optional[float] = None,
                    settings: QuadratureSettings = QuadratureSettings(),
                    method: str = 'fourier') -> L1Estimate:
    """L^1 norm in x' of the kernel block convolved in eta with phi_m"""
    if spec.m is None:
        raise ValueError("eta smoothing needs the index m")
    return kernel_l1_norm(spec, t, profile, radius, settings, method)
