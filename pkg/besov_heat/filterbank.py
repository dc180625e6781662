"""
Dyadic Littlewood-Paley profile and filter banks on periodic grids.

The profile is built from the smooth step S(x) = e(x) / (e(x) + e(1 - x)),
e(x) = exp(-1/x) for x > 0 and 0 otherwise. zeta(r) = S(2 - r) equals 1 on
[0, 1] and 0 on [2, inf), and every annular multiplier is computed as
phi_m = zeta_m - zeta_{m-1}, so window sums telescope exactly.
"""

import hashlib
import logging
import math
import warnings
from typing import Dict, Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sfft

from .errors import (
    GridMismatchError,
    IndexOutOfWindowError,
    WindowFloorWarning,
    WindowOutOfBandError,
)
from .fields import Field, GridSpec

logger = logging.getLogger(__name__)


def _exp_ramp(x: np.ndarray) -> np.ndarray:
    positive = x > 0
    safe = np.where(positive, x, 1.0)
    return np.where(positive, np.exp(-1.0 / safe), 0.0)


class DyadicProfile:
    """
    Radial cut-off zeta and the dyadic pieces derived from it.

    Args:
        resolution: Number of radii in the tabulation hashed into the
            profile fingerprint recorded by reports
    """

    IDENTIFIER = 'smoothstep-exp'

    def __init__(self, resolution: int = 4096):
        if resolution <= 0:
            raise ValueError(f"resolution must be positive, got {resolution}")
        self.resolution = resolution
        self._fingerprint: Optional[str] = None

    @staticmethod
    def step(x) -> np.ndarray:
        """Smooth step S: 0 for x <= 0, 1 for x >= 1"""
        x = np.asarray(x, dtype=float)
        rise = _exp_ramp(x)
        return rise / (rise + _exp_ramp(1.0 - x))

    def zeta(self, r) -> np.ndarray:
        return self.step(2.0 - np.asarray(r, dtype=float))

    def zeta_m(self, r, m: int) -> np.ndarray:
        """zeta(2^-m r): 1 for r <= 2^m, 0 for r >= 2^(m+1)"""
        return self.zeta(np.ldexp(np.asarray(r, dtype=float), -int(m)))

    def phi_m(self, r, m: int) -> np.ndarray:
        """Annular piece supported in (2^(m-1), 2^(m+1))"""
        return self.zeta_m(r, m) - self.zeta_m(r, m - 1)

    def phi(self, r) -> np.ndarray:
        return self.phi_m(r, 0)

    def window_sum(self, jmin: int, jmax: int, r) -> np.ndarray:
        """Sum of phi_j over jmin..jmax, evaluated term by term"""
        r = np.asarray(r, dtype=float)
        total = np.zeros_like(r)
        for j in range(jmin, jmax + 1):
            total = total + self.phi_m(r, j)
        return total

    def separated_block(self, a, b, m: int) -> np.ndarray:
        """
        Block adapted to the boundary/normal split of frequencies.

        Args:
            a: Tangential radius |xi'|
            b: Normal frequency modulus |xi_n|
            m: Dyadic index
        """
        return (self.phi_m(a, m) * self.zeta_m(b, m - 1)
                + self.zeta_m(a, m) * self.phi_m(b, m))

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            table = self.zeta(np.linspace(0.0, 2.5, self.resolution))
            self._fingerprint = hashlib.sha1(table.astype('<f8').tobytes()).hexdigest()[:12]
        return self._fingerprint

    @property
    def identifier(self) -> str:
        return f"{self.IDENTIFIER}/{self.fingerprint}"


class FilterBank:
    """
    Multipliers of a dyadic window jmin..jmax sampled on a grid's lattice.

    Build instances with :func:`make_filter_bank`, which checks the window
    against the grid.
    """

    def __init__(self, profile: DyadicProfile, jmin: int, jmax: int, grid: GridSpec):
        self.profile = profile
        self.jmin = int(jmin)
        self.jmax = int(jmax)
        self.grid = grid
        self.floor_below_fundamental = False
        self._radius = grid.frequency_radius()
        self._split_radii: Optional[Tuple[np.ndarray, np.ndarray]] = None
        self._cache: Dict[Tuple[str, int], np.ndarray] = {}

    @property
    def indices(self) -> range:
        return range(self.jmin, self.jmax + 1)

    def _check_index(self, j: int) -> None:
        if not self.jmin <= j <= self.jmax:
            raise IndexOutOfWindowError(f"index {j} outside window [{self.jmin}, {self.jmax}]")

    def _cached(self, key: Tuple[str, int], build) -> np.ndarray:
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def multiplier(self, j: int) -> np.ndarray:
        self._check_index(j)
        return self._cached(('phi', j), lambda: self.profile.phi_m(self._radius, j))

    def low_multiplier(self, m: int) -> np.ndarray:
        return self._cached(('zeta', m), lambda: self.profile.zeta_m(self._radius, m))

    def split_radii(self) -> Tuple[np.ndarray, np.ndarray]:
        """(|xi'|, |xi_n|) on the lattice, the last axis being normal"""
        if self.grid.n < 2:
            raise ValueError("separated blocks need at least two dimensions")
        if self._split_radii is None:
            mesh = self.grid.frequency_mesh()
            tangential = np.sqrt(sum(k ** 2 for k in mesh[:-1]))
            self._split_radii = (tangential, np.abs(mesh[-1]))
        return self._split_radii

    def split_multiplier(self, m: int) -> np.ndarray:
        self._check_index(m)

        def build():
            a, b = self.split_radii()
            return np.broadcast_to(self.profile.separated_block(a, b, m), self.grid.shape)

        return self._cached(('split', m), build)

    def apply(self, samples: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
        """
        Multiply the DFT of the trailing n axes of ``samples`` by
        ``multiplier``; leading axes are treated as a batch.
        """
        axes = tuple(range(-self.grid.n, 0))
        out = sfft.ifftn(sfft.fftn(samples, axes=axes) * multiplier, axes=axes)
        if np.isrealobj(samples):
            return out.real
        return out

    def check_grid(self, grid: GridSpec) -> None:
        if grid != self.grid:
            raise GridMismatchError(f"field grid {grid} differs from bank grid {self.grid}")

    def describe(self) -> Dict:
        return {
            'profile': self.profile.identifier,
            'jmin': self.jmin,
            'jmax': self.jmax,
            'grid': self.grid.to_dict(),
            'floor_below_fundamental': self.floor_below_fundamental,
        }


def make_filter_bank(profile: DyadicProfile, jmin: int, jmax: int, grid: GridSpec) -> FilterBank:
    """
    Build a filter bank after checking the window against the grid.

    Raises:
        ValueError: if the window holds fewer than three indices
        WindowOutOfBandError: if 2^(jmax+1) exceeds the Nyquist frequency

    A floor 2^(jmin-1) below the grid's fundamental frequency is accepted
    with a WindowFloorWarning and recorded on the bank.
    """
    if jmax - jmin < 2:
        raise ValueError(f"window [{jmin}, {jmax}] must span at least three indices")
    if math.ldexp(1.0, jmax + 1) > grid.nyquist:
        raise WindowOutOfBandError(
            f"2^{jmax + 1} exceeds the Nyquist frequency {grid.nyquist:.6g} of {grid}")

    bank = FilterBank(profile, jmin, jmax, grid)
    if math.ldexp(1.0, jmin - 1) < grid.fundamental:
        bank.floor_below_fundamental = True
        warnings.warn(
            f"window floor 2^{jmin - 1} lies below the fundamental frequency "
            f"{grid.fundamental:.6g}; the lowest blocks see no lattice points",
            WindowFloorWarning, stacklevel=2)
    logger.debug("filter bank [%d, %d] on %s", jmin, jmax, grid)
    return bank


def auto_window(grid: GridSpec) -> Tuple[int, int]:
    """Widest window whose blocks all sit strictly inside the grid's band"""
    jmax = math.floor(math.log2(grid.nyquist)) - 1
    jmin = math.ceil(math.log2(grid.fundamental)) + 1
    if jmax - jmin < 2:
        raise WindowOutOfBandError(f"grid {grid} is too coarse for a three-block window")
    return jmin, jmax


def _as_field_samples(f: Field, bank: FilterBank) -> np.ndarray:
    bank.check_grid(f.grid)
    return f.physical_samples()


def lp_block(f: Field, j: int, bank: FilterBank) -> Field:
    """Littlewood-Paley block Delta_j f"""
    samples = _as_field_samples(f, bank)
    return Field(bank.grid, bank.apply(samples, bank.multiplier(j)))


def low_pass(f: Field, m: int, bank: FilterBank) -> Field:
    """Low-frequency part S_m f with multiplier zeta_m"""
    samples = _as_field_samples(f, bank)
    return Field(bank.grid, bank.apply(samples, bank.low_multiplier(m)))


def split_block(f: Field, m: int, bank: FilterBank) -> Field:
    """Block of the separated-variable decomposition"""
    samples = _as_field_samples(f, bank)
    return Field(bank.grid, bank.apply(samples, bank.split_multiplier(m)))


def high_leftover(f: Field, bank: FilterBank) -> Field:
    """Part of f above the window, multiplier 1 - zeta_jmax"""
    samples = _as_field_samples(f, bank)
    return Field(bank.grid, bank.apply(samples, 1.0 - bank.low_multiplier(bank.jmax)))


def dyadic_blocks(f: Field, bank: FilterBank, separated: bool = False) -> Iterator[Tuple[int, Field]]:
    """Yield (j, block) over the bank's window"""
    block = split_block if separated else lp_block
    for j in bank.indices:
        yield j, block(f, j, bank)


def sample_radii(jmin: int, jmax: int, samples: int) -> np.ndarray:
    """Radii spread evenly in log2 over [2^jmin, 2^jmax]"""
    return np.exp2(np.linspace(jmin, jmax, samples))


def partition_residual(bank: FilterBank, samples: int = 1000,
                       radii: Optional[Sequence[float]] = None) -> float:
    """
    Largest deviation of the window sum of phi_j from 1.

    Args:
        bank: Filter bank whose window is summed
        samples: Number of radii spread over [2^jmin, 2^jmax] (at least 100)
        radii: Explicit radii, replacing the default spread
    """
    return window_residual(bank.profile, bank.jmin, bank.jmax, samples, radii)


def window_residual(profile: DyadicProfile, jmin: int, jmax: int, samples: int = 1000,
                    radii: Optional[Sequence[float]] = None) -> float:
    """:func:`partition_residual` for a bare window, without a grid"""
    if radii is None:
        if samples < 100:
            raise ValueError(f"need at least 100 sample radii, got {samples}")
        radii = sample_radii(jmin, jmax, samples)
    total = profile.window_sum(jmin, jmax, np.asarray(radii, dtype=float))
    return float(np.max(np.abs(total - 1.0)))


def separated_partition_residual(profile: DyadicProfile, jmin: int, jmax: int,
                                 samples: int = 1000) -> float:
    """
    Deviation from 1 of the separated-block sum on pairs (|xi'|, |xi_n|)
    with 2^jmin <= max(|xi'|, |xi_n|) <= 2^jmax.
    """
    if samples < 100:
        raise ValueError(f"need at least 100 sample pairs, got {samples}")
    big = sample_radii(jmin, jmax, samples)
    fraction = np.linspace(0.0, 1.0, samples)[::-1]
    a = np.concatenate([big, big * fraction])
    b = np.concatenate([big * fraction, big])
    total = np.zeros_like(a)
    for m in range(jmin, jmax + 1):
        total = total + profile.separated_block(a, b, m)
    return float(np.max(np.abs(total - 1.0)))


def telescoping_residual(bank: FilterBank) -> float:
    """
    Largest lattice deviation between partial sums of phi_j and the
    matching difference zeta_m - zeta_{jmin-1}.
    """
    partial = np.zeros(bank.grid.shape)
    worst = 0.0
    floor = bank.low_multiplier(bank.jmin - 1)
    for m in bank.indices:
        partial = partial + bank.multiplier(m)
        worst = max(worst, float(np.max(np.abs(partial - (bank.low_multiplier(m) - floor)))))
    return worst
