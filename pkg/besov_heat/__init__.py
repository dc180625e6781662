"""Littlewood-Paley norms and the half-space heat equation"""

from .fields import GridSpec, TimeGrid, Field, HalfField, TimeField, SpaceTimeField
from .filterbank import DyadicProfile, FilterBank, make_filter_bank
from .spaces import NormParams, besov_norm, triebel_norm, halfspace_norm, bochner_tl_norm
from .kernels import KernelKind, KernelSpec, kernel_l1_norm
from .solver import IbvpData, solve_halfspace_heat
from .report import SweepReport

__all__ = [
    'GridSpec', 'TimeGrid', 'Field', 'HalfField', 'TimeField', 'SpaceTimeField',
    'DyadicProfile', 'FilterBank', 'make_filter_bank',
    'NormParams', 'besov_norm', 'triebel_norm', 'halfspace_norm', 'bochner_tl_norm',
    'KernelKind', 'KernelSpec', 'kernel_l1_norm',
    'IbvpData', 'solve_halfspace_heat',
    'SweepReport',
]
