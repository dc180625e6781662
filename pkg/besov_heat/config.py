"""
JSON run configuration.

Every block is optional and falls back to the defaults below; keys that
no block declares are rejected with a ConfigError.
"""

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import ConfigError
from .fields import GridSpec, TimeGrid
from .filterbank import DyadicProfile, auto_window
from .kernels import QuadratureSettings
from .solver import SolverSettings
from .verify import Estimate, EstimateSpec, default_seed

STRICT_FACTOR = 100.0
EPSILON_FLOOR = 10.0 * float(np.finfo(float).eps)


@dataclass
class GridConfig:
    n: int = 2
    N: int = 64
    L: float = 32.0
    T: float = 4.0
    Nt: int = 65

    def __post_init__(self):
        self.space()
        self.time()

    def space(self) -> GridSpec:
        return GridSpec(self.n, self.N, self.L)

    def time(self) -> TimeGrid:
        return TimeGrid(self.T, self.Nt)


@dataclass
class BankConfig:
    """Windows left as None are chosen by :func:`auto_window`"""

    jmin: Optional[int] = None
    jmax: Optional[int] = None
    kmin: Optional[int] = None
    kmax: Optional[int] = None
    profile_resolution: int = 4096

    def window(self, grid: GridSpec) -> Tuple[int, int]:
        if self.jmin is None or self.jmax is None:
            jmin, jmax = auto_window(grid)
            return (jmin if self.jmin is None else self.jmin,
                    jmax if self.jmax is None else self.jmax)
        return self.jmin, self.jmax

    def profile(self) -> DyadicProfile:
        return DyadicProfile(self.profile_resolution)


@dataclass
class IoConfig:
    out: str = 'results'


@dataclass
class Tolerances:
    """
    Pass thresholds. The strict profile divides each of them by 100
    except ``spread``, which bounds a ratio rather than an error.
    """

    profile: str = 'default'
    partition: float = 1e-10
    slope: float = 0.25
    scaling_slope: float = 0.05
    invariance: float = 0.1
    translation: float = 1e-6
    closed_form: float = 1e-8
    spread: float = 50.0

    ERRORS = ('partition', 'slope', 'scaling_slope', 'invariance', 'translation', 'closed_form')

    def __post_init__(self):
        if self.profile not in ('default', 'strict'):
            raise ConfigError(f"unknown tolerance profile {self.profile!r}")

    def effective(self, name: str) -> float:
        value = getattr(self, name)
        if self.profile == 'strict' and name in self.ERRORS:
            return value / STRICT_FACTOR
        return value

    def unachievable(self) -> List[str]:
        """Thresholds below ten machine epsilons"""
        return [name for name in self.ERRORS if self.effective(name) < EPSILON_FLOOR]


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    bank: BankConfig = field(default_factory=BankConfig)
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    estimate: EstimateSpec = field(default_factory=EstimateSpec)
    io: IoConfig = field(default_factory=IoConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = field(default_factory=default_seed)

    BLOCKS = {
        'grid': GridConfig,
        'bank': BankConfig,
        'quadrature': QuadratureSettings,
        'solver': SolverSettings,
        'estimate': EstimateSpec,
        'io': IoConfig,
        'tolerances': Tolerances,
    }

    @classmethod
    def from_dict(cls, data: Dict) -> 'RunConfig':
        """
        Build a configuration from parsed JSON.

        Raises:
            ConfigError: on unknown keys or values the blocks reject
        """
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = sorted(set(data) - set(cls.BLOCKS) - {'seed'})
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        blocks = {name: _build_block(name, block_cls, data.get(name, {}))
                  for name, block_cls in cls.BLOCKS.items()}
        config = cls(**blocks)
        if 'seed' in data:
            config.seed = int(data['seed'])
        try:
            config.estimate.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return config

    @classmethod
    def load(cls, path: Union[str, Path, None]) -> 'RunConfig':
        """Read a JSON file; None gives the defaults"""
        if path is None:
            return cls.from_dict({})
        try:
            with open(path, 'r') as f:
                data = json.load(f)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> Dict:
        out = {name: asdict(getattr(self, name)) for name in self.BLOCKS}
        out['estimate']['name'] = self.estimate.name.value
        out['seed'] = self.seed
        return out


def _build_block(name: str, block_cls, values: Dict):
    if not isinstance(values, dict):
        raise ConfigError(f"block {name!r} must be a JSON object")
    known = {f.name for f in fields(block_cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {', '.join(unknown)}")
    values = {key: _coerce(value) for key, value in values.items()}
    if block_cls is EstimateSpec and 'name' in values:
        try:
            values['name'] = Estimate(values['name'])
        except ValueError:
            raise ConfigError(f"unknown estimate {values['name']!r}") from None
    try:
        return block_cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"block {name!r}: {exc}") from exc


def _coerce(value):
    if isinstance(value, list):
        return tuple(value)
    if isinstance(value, float) and math.isnan(value):
        raise ConfigError("NaN is not a valid configuration value")
    return value
