"""Sampling grids, field containers and their binary dumps"""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import fft as sfft

from .errors import FieldFormatError, GridMismatchError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    """
    Uniform periodic sampling of the box [-L/2, L/2)^n.

    Sample i along an axis sits at x = (i - N/2) * L / N, so the
    half-space x_n >= 0 is the index range N/2..N-1 of the last axis.
    """

    n: int
    N: int
    L: float

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.n}")
        if self.N < 16 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 16, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"box length must be positive, got {self.L}")

    @property
    def spacing(self) -> float:
        return self.L / self.N

    @property
    def fundamental(self) -> float:
        return 2.0 * math.pi / self.L

    @property
    def nyquist(self) -> float:
        return (self.N // 2) * self.fundamental

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def half_shape(self) -> Tuple[int, ...]:
        return (self.N,) * (self.n - 1) + (self.N // 2,)

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.n

    def coords(self) -> np.ndarray:
        """Sample positions along one axis"""
        return (np.arange(self.N) - self.N // 2) * self.spacing

    def half_coords(self) -> np.ndarray:
        """Sample positions x_n in [0, L/2) of the half-space sub-grid"""
        return np.arange(self.N // 2) * self.spacing

    def axis_frequencies(self) -> np.ndarray:
        """Angular frequencies of one axis in DFT order"""
        return 2.0 * math.pi * sfft.fftfreq(self.N, d=self.spacing)

    def mesh(self, half: bool = False) -> List[np.ndarray]:
        """Sparse coordinate arrays, one per axis, broadcastable to the grid"""
        axes = [self.coords()] * self.n
        if half:
            axes[-1] = self.half_coords()
        return np.meshgrid(*axes, indexing='ij', sparse=True)

    def frequency_mesh(self) -> List[np.ndarray]:
        """Sparse angular-frequency arrays, one per axis"""
        return np.meshgrid(*([self.axis_frequencies()] * self.n), indexing='ij', sparse=True)

    def frequency_radius(self) -> np.ndarray:
        """|xi| on the full frequency lattice"""
        return np.sqrt(sum(k ** 2 for k in self.frequency_mesh()))

    def boundary(self) -> 'GridSpec':
        """Grid of the boundary R^{n-1}"""
        if self.n < 2:
            raise ValueError("a one-dimensional grid has a point as boundary")
        return GridSpec(self.n - 1, self.N, self.L)

    def scaled(self, factor: float) -> 'GridSpec':
        """Same sample count on a box shrunk by ``factor``"""
        return GridSpec(self.n, self.N, self.L / factor)

    def to_dict(self) -> Dict:
        return {'n': self.n, 'N': self.N, 'L': self.L}


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time samples t_i = i * T / (Nt - 1) covering [0, T]"""

    T: float
    Nt: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if self.Nt < 2:
            raise ValueError(f"need at least two time samples, got {self.Nt}")

    @property
    def dt(self) -> float:
        return self.T / (self.Nt - 1)

    def times(self) -> np.ndarray:
        return np.arange(self.Nt) * self.dt

    def scaled(self, factor: float) -> 'TimeGrid':
        return TimeGrid(self.T / factor, self.Nt)

    def to_dict(self) -> Dict:
        return {'T': self.T, 'Nt': self.Nt}


def _check_shape(samples: np.ndarray, expected: Tuple[int, ...], what: str) -> None:
    if samples.shape != tuple(expected):
        raise GridMismatchError(f"{what} samples have shape {samples.shape}, grid expects {tuple(expected)}")


@dataclass
class Field:
    """Samples on the whole periodic grid, physical or frequency side"""

    grid: GridSpec
    samples: np.ndarray
    domain: str = 'physical'

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        _check_shape(self.samples, self.grid.shape, 'field')
        if self.domain not in ('physical', 'frequency'):
            raise ValueError(f"unknown domain {self.domain!r}")

    def to_frequency(self) -> 'Field':
        if self.domain == 'frequency':
            return self
        return Field(self.grid, sfft.fftn(self.samples), 'frequency')

    def to_physical(self) -> 'Field':
        if self.domain == 'physical':
            return self
        return Field(self.grid, sfft.ifftn(self.samples), 'physical')

    def physical_samples(self) -> np.ndarray:
        return self.to_physical().samples

    def spectrum(self) -> np.ndarray:
        return self.to_frequency().samples


@dataclass
class HalfField:
    """Samples on the half-space sub-grid x_n in [0, L/2)"""

    grid: GridSpec
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        _check_shape(self.samples, self.grid.half_shape, 'half-space field')


@dataclass
class TimeField:
    """
    Time-dependent field on a boundary (or spatial) grid.

    ``space`` is None for a scalar-valued signal, as on the boundary of
    the half-line.
    """

    tgrid: TimeGrid
    samples: np.ndarray
    space: Optional[GridSpec] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        shape = (self.tgrid.Nt,) + (self.space.shape if self.space is not None else ())
        _check_shape(self.samples, shape, 'time field')


@dataclass
class SpaceTimeField:
    """Time-dependent field on the whole grid or on its half-space part"""

    tgrid: TimeGrid
    grid: GridSpec
    samples: np.ndarray
    half: bool = True

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        spatial = self.grid.half_shape if self.half else self.grid.shape
        _check_shape(self.samples, (self.tgrid.Nt,) + spatial, 'space-time field')

    def at(self, i: int) -> Union[Field, HalfField]:
        """Spatial slice at time index i"""
        if self.half:
            return HalfField(self.grid, self.samples[i])
        return Field(self.grid, self.samples[i])

    def boundary_layer(self, index: int = 0) -> TimeField:
        """Time field obtained by fixing x_n at half-grid index ``index``"""
        if not self.half:
            raise ValueError("boundary layers are taken from half-space fields")
        space = self.grid.boundary() if self.grid.n > 1 else None
        return TimeField(self.tgrid, self.samples[..., index], space)


AnyField = Union[Field, HalfField, TimeField, SpaceTimeField]


def _header_for(obj: AnyField) -> Dict:
    header = {'schema': SCHEMA_VERSION, 'dtype': '<f8'}
    if isinstance(obj, Field):
        header.update(kind='field', grid=obj.grid.to_dict())
    elif isinstance(obj, HalfField):
        header.update(kind='half', grid=obj.grid.to_dict())
    elif isinstance(obj, TimeField):
        header.update(kind='time', time=obj.tgrid.to_dict(),
                      grid=obj.space.to_dict() if obj.space is not None else None)
    elif isinstance(obj, SpaceTimeField):
        header.update(kind='spacetime', time=obj.tgrid.to_dict(),
                      grid=obj.grid.to_dict(), half=obj.half)
    else:
        raise TypeError(f"cannot dump {type(obj).__name__}")
    return header


def save_field(path: Union[str, Path], obj: AnyField) -> None:
    """
    Write a field as a one-line JSON header, a blank line and raw
    little-endian float64 samples in row-major order.

    Args:
        path: Destination file
        obj: Field container to dump; complex samples must be real to rounding
    """
    samples = obj.physical_samples() if isinstance(obj, Field) else obj.samples
    if np.iscomplexobj(samples):
        scale = max(float(np.max(np.abs(samples))), 1.0)
        if float(np.max(np.abs(samples.imag))) > 1e-9 * scale:
            raise ValueError("refusing to dump samples with a non-negligible imaginary part")
        samples = samples.real
    header = _header_for(obj)
    header['shape'] = list(samples.shape)
    with open(path, 'wb') as f:
        f.write(json.dumps(header).encode('utf-8'))
        f.write(b'\n\n')
        f.write(np.ascontiguousarray(samples, dtype='<f8').tobytes())


def load_field(path: Union[str, Path]) -> AnyField:
    """Read a dump written by :func:`save_field`"""
    try:
        with open(path, 'rb') as f:
            raw = f.read()
    except OSError as exc:
        raise FieldFormatError(f"cannot read {path}: {exc}") from exc

    head, sep, body = raw.partition(b'\n\n')
    if not sep:
        raise FieldFormatError(f"{path}: missing header terminator")
    try:
        header = json.loads(head.decode('utf-8'))
        shape = tuple(header['shape'])
        kind = header['kind']
    except (ValueError, KeyError) as exc:
        raise FieldFormatError(f"{path}: bad header ({exc})") from exc
    if header.get('schema') != SCHEMA_VERSION or header.get('dtype') != '<f8':
        raise FieldFormatError(f"{path}: unsupported schema or dtype")

    count = int(np.prod(shape)) if shape else 1
    if len(body) != 8 * count:
        raise FieldFormatError(f"{path}: expected {8 * count} bytes of samples, found {len(body)}")
    samples = np.frombuffer(body, dtype='<f8').reshape(shape).astype(np.float64)

    try:
        grid = GridSpec(**header['grid']) if header.get('grid') else None
        if kind == 'field':
            return Field(grid, samples)
        if kind == 'half':
            return HalfField(grid, samples)
        tgrid = TimeGrid(**header['time'])
        if kind == 'time':
            return TimeField(tgrid, samples, grid)
        if kind == 'spacetime':
            return SpaceTimeField(tgrid, grid, samples, bool(header.get('half', True)))
    except (TypeError, ValueError) as exc:
        raise FieldFormatError(f"{path}: {exc}") from exc
    raise FieldFormatError(f"{path}: unknown kind {kind!r}")
