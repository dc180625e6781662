"""
Command-line frontend.

Exit codes: 0 when every check passes, 1 on a quantitative failure,
2 on usage, configuration or input errors.
"""

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .config import RunConfig
from .errors import BesovHeatError, ConfigError, FieldFormatError, QuadratureError
from .fields import Field, HalfField, SpaceTimeField, TimeField, load_field, save_field
from .filterbank import (
    make_filter_bank,
    partition_residual,
    separated_partition_residual,
    telescoping_residual,
)
from .kernels import KernelKind, KernelSpec, KernelType, eta_smoothed_l1, kernel_l1_norm
from .report import FAILED, SCHEMA_VERSION, SweepReport
from .solver import IbvpData, solve_halfspace_heat
from .spaces import (
    AbsoluteValue,
    BesovFunctional,
    NormParams,
    besov_norm,
    bochner_lebesgue_norm,
    bochner_tl_norm,
    halfspace_norm,
    make_time_bank,
    triebel_norm,
)
from .verify import (
    NEUMANN_SLOPE,
    NEUMANN_SLOPE_TOLERANCE,
    BoundaryNorm,
    auto_time_bank,
    bump_datum,
    lemma_b_bound,
    maxreg_ratio,
    neumann_dirichlet_slope,
    ortho_sweep,
    parabolic_family,
    parabolic_fields,
    random_bump_family,
    sample_boundary,
    scaling_datum,
    scaling_exponents,
    scaling_grids,
    smoothing_sweep,
    trace_check,
    trace_field,
    translated_family,
)

logger = logging.getLogger(__name__)

BOUNDARY_NORMS = {
    'dirichlet-space': BoundaryNorm.dirichlet_space,
    'dirichlet-time': BoundaryNorm.dirichlet_time,
    'neumann-space': BoundaryNorm.neumann_space,
    'neumann-time': BoundaryNorm.neumann_time,
}


def _banner(title: str, lines: Optional[Dict] = None) -> None:
    print("=" * 60)
    print(title)
    print("=" * 60)
    for key, value in (lines or {}).items():
        print(f"{key}: {value}")


def _write_json(path: Path, payload: Dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_finite)


def _finite(value):
    if isinstance(value, np.ndarray):
        return [None if not math.isfinite(v) else float(v) for v in value.ravel()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _finish(report: SweepReport, out: Path, name: str) -> int:
    prefix = out / name
    report.save(prefix)
    summary = report.summary()
    failed = sum(1 for row in report.rows if FAILED in row['flags'].split(';'))
    print(f"Rows: {summary['rows']} ({summary['usable_rows']} usable, {failed} failed)")
    print(f"Max ratio: {summary['max_ratio']}")
    for key, value in summary['slopes'].items():
        print(f"  slope {key}: {value}")
    print(f"Pass: {summary['pass']}")
    print(f"Report saved to: {prefix.with_suffix('.csv')}")
    print("=" * 60)
    return 0 if report.passed and not failed else 1


def cmd_lp_check(args, config: RunConfig) -> int:
    grid = config.grid.space()
    profile = config.bank.profile()
    jmin, jmax = config.bank.window(grid)
    bank = make_filter_bank(profile, jmin, jmax, grid)
    tolerance = config.tolerances.effective('partition')

    _banner("Littlewood-Paley Partition Check", {'Grid': grid, 'Window': f"[{jmin}, {jmax}]",
                                                  'Profile': profile.identifier})
    residuals = {
        'partition': partition_residual(bank),
        'telescoping': telescoping_residual(bank),
    }
    if grid.n >= 2:
        residuals['separated'] = separated_partition_residual(profile, jmin, jmax)
    passed = all(value <= tolerance for value in residuals.values())
    for name, value in residuals.items():
        print(f"  {name}: {value:.3e}")
    print(f"Tolerance: {tolerance:.1e}  Pass: {passed}")
    print("=" * 60)

    _write_json(Path(args.out) / 'lp_check.json', {
        'schema': SCHEMA_VERSION, 'estimate': 'lp-check', 'residuals': residuals,
        'tolerance': tolerance, 'pass': passed, 'bank': bank.describe()})
    return 0 if passed else 1


def cmd_norm(args, config: RunConfig) -> int:
    obj = load_field(args.field)
    profile = config.bank.profile()
    params = _from_args(
        lambda: NormParams(args.s, args.p, args.sigma, homogeneous=not args.inhomogeneous),
        'norm parameters')

    if isinstance(obj, Field):
        bank = make_filter_bank(profile, *config.bank.window(obj.grid), obj.grid)
        value = (triebel_norm if args.kind == 'triebel' else besov_norm)(obj, params, bank)
    elif isinstance(obj, HalfField):
        bank = make_filter_bank(profile, *config.bank.window(obj.grid), obj.grid)
        value = halfspace_norm(obj, params, bank)
    elif isinstance(obj, TimeField):
        if obj.space is not None:
            bank = make_filter_bank(profile, *config.bank.window(obj.space), obj.space)
            spatial = BesovFunctional(params, bank)
        else:
            spatial = AbsoluteValue()
        if args.time is None:
            value = bochner_lebesgue_norm(obj, spatial)
        elif config.bank.kmin is not None and config.bank.kmax is not None:
            tbank = make_time_bank(obj.tgrid, profile, config.bank.kmin, config.bank.kmax)
            value = bochner_tl_norm(obj, args.time, spatial, tbank)
        else:
            value = bochner_tl_norm(obj, args.time, spatial, auto_time_bank(obj.tgrid, profile))
    else:
        raise FieldFormatError("norms of space-time fields are taken layer by layer; dump a layer first")

    print(f"{value:.16e}")
    _write_json(Path(args.out) / 'norm.json', {
        'schema': SCHEMA_VERSION, 'field': str(args.field), 's': args.s, 'p': args.p,
        'sigma': args.sigma, 'time': args.time, 'kind': args.kind, 'value': value,
        'profile': profile.identifier})
    return 0


def cmd_kernel(args, config: RunConfig) -> int:
    kind = _from_args(lambda: KernelKind.parse(args.kind, args.b), 'kernel kind')
    spec = _from_args(lambda: KernelSpec(kind, args.k, args.j, args.eta, args.m, args.dim),
                      'kernel block')
    profile = config.bank.profile()
    _banner("Kernel Block", {'Kernel': spec, 't': args.t})
    try:
        if spec.m is None:
            estimate = kernel_l1_norm(spec, args.t, profile, settings=config.quadrature)
        else:
            estimate = eta_smoothed_l1(spec, args.t, profile, settings=config.quadrature)
    except QuadratureError as exc:
        print(f"Quadrature failed: {exc}")
        return 1
    print(f"L1 norm: {estimate.value:.16e} (tail {estimate.tail:.2e}, doubling {estimate.richardson:.2e})")
    print("=" * 60)
    _write_json(Path(args.out) / 'kernel.json', {
        'schema': SCHEMA_VERSION, 'kind': kind.name, 'k': spec.k, 'j': spec.j, 'eta': spec.eta,
        'm': spec.m, 'dim': spec.dim, 't': args.t, **dataclasses.asdict(estimate),
        'profile': profile.identifier})
    return 0


def cmd_ortho(args, config: RunConfig) -> int:
    est = config.estimate
    kind = est.kind()
    profile = config.bank.profile()
    slope = config.tolerances.effective('slope')
    _banner("Kernel Orthogonality Sweep", {'Estimate': est.name.value, 'Kernel': kind.name,
                                             'Threads': args.threads})
    if est.name.value.startswith('smoothing'):
        report = smoothing_sweep(kind, est.k, est.j, est.m_range, est.t, est.eta_set, profile,
                                 config.quadrature, est.dim, eta_scale=est.eta_scale,
                                 slope_tolerance=slope, threads=args.threads)
    else:
        report = ortho_sweep(kind, est.k_range, est.j_range, est.t_set, est.eta_set, profile,
                             config.quadrature, est.dim, est.t_scale, est.eta_scale,
                             slope_tolerance=slope, threads=args.threads)
        if kind.type is KernelType.NEUMANN and len(set(est.k_range)) > 1:
            try:
                ratio_slope = neumann_dirichlet_slope(est.k_range, min(est.j_range), profile,
                                                      config.quadrature, est.dim)
            except QuadratureError as exc:
                logger.warning("Neumann/Dirichlet slope failed: %s", exc)
                ratio_slope = float('nan')
            report.slopes['neumann_dirichlet_k'] = ratio_slope
            report.passed = (bool(report.passed)
                             and abs(ratio_slope - NEUMANN_SLOPE) <= NEUMANN_SLOPE_TOLERANCE)
    return _finish(report, Path(args.out), est.name.value)


def _family(config: RunConfig):
    est = config.estimate
    grid = config.grid.space()
    tgrid = config.grid.time()
    space = grid.boundary()
    if est.family == 'dilation':
        return parabolic_family(bump_datum(tgrid, space), tgrid, space, est.lambdas)
    if est.family == 'translation':
        base = sample_boundary(bump_datum(tgrid, space), tgrid, space)
        return translated_family(base, est.shifts)
    return random_bump_family(tgrid, space, est.family_size, config.seed)


def _spread_limit(config: RunConfig, family: str) -> float:
    tolerances = config.tolerances
    if family == 'dilation':
        return 1.0 + tolerances.effective('invariance')
    if family == 'translation':
        return 1.0 + tolerances.effective('translation')
    return tolerances.effective('spread')


def cmd_maxreg(args, config: RunConfig) -> int:
    est = config.estimate
    solver = dataclasses.replace(config.solver, threads=args.threads)
    _banner("Maximal Regularity Ratio", {'Boundary condition': est.bc, 'Variant': est.variant,
                                          'Family': est.family, 's': est.s, 'p': est.p})
    report = maxreg_ratio(est.kind(), _family(config), est.s, est.p, est.variant,
                          config.bank.profile(), solver)
    limit = _spread_limit(config, est.family)
    report.extra_summary = {'spread_limit': limit}
    report.passed = bool(report.passed) and report.spread() <= limit
    print(f"Spread: {report.spread():.6g} (limit {limit:.6g})")
    return _finish(report, Path(args.out), f"maxreg-{est.bc}-{est.variant}-{est.family}")


def cmd_trace(args, config: RunConfig) -> int:
    est = config.estimate
    grid = config.grid.space()
    tgrid = config.grid.time()
    _banner("Boundary Trace Check", {'Boundary condition': est.bc, 's': est.s, 'p': est.p,
                                      'Lambdas': est.lambdas})
    family = parabolic_fields(trace_field(tgrid, grid), tgrid, grid, est.lambdas)
    report = trace_check(family, est.s, est.p, est.kind(), config.bank.profile())
    limit = _spread_limit(config, 'dilation')
    report.extra_summary = {'spread_limit': limit}
    report.passed = bool(report.passed) and report.spread() <= limit
    return _finish(report, Path(args.out), f"trace-{est.bc}")


def cmd_scaling(args, config: RunConfig) -> int:
    est = config.estimate
    if est.norm not in BOUNDARY_NORMS:
        raise ConfigError(f"unknown boundary norm {est.norm!r}; choose from {', '.join(BOUNDARY_NORMS)}")
    norm = BOUNDARY_NORMS[est.norm](est.s, est.p)
    tgrid, space = scaling_grids(config.grid.time(), config.grid.space().boundary(), est.lambdas)
    _banner("Scaling Exponent", {'Norm': est.norm, 's': est.s, 'p': est.p, 'Lambdas': est.lambdas,
                                 'Time grid': tgrid, 'Boundary grid': space})
    report = scaling_exponents(norm, scaling_datum(tgrid, space), est.lambdas, tgrid, space,
                               config.bank.profile(),
                               slope_tolerance=config.tolerances.effective('scaling_slope'))
    print(f"Analytic exponent: {report.extra_summary['analytic_exponent']:.6g}")
    return _finish(report, Path(args.out), f"scaling-{est.norm}")


def cmd_lemma_b(args, config: RunConfig) -> int:
    est = config.estimate
    _banner("Bracket Integral Bound", {'Orders': est.orders, 'a': est.a_set})
    code = 0
    for order in est.orders:
        report = lemma_b_bound(order, est.a_set, config.tolerances.effective('closed_form'))
        print(f"N = {order}:")
        code = max(code, _finish(report, Path(args.out), f"lemma-b-N{order}"))
    return code


def _from_args(build, what: str):
    """Build an object from command-line values; rejections are usage errors"""
    try:
        return build()
    except ValueError as exc:
        raise ConfigError(f"invalid {what}: {exc}") from exc


def _expect(obj, cls, what: str):
    if not isinstance(obj, cls):
        raise FieldFormatError(f"{what} must be a {cls.__name__} dump, got {type(obj).__name__}")
    return obj


def cmd_solve(args, config: RunConfig) -> int:
    bc = _from_args(lambda: KernelKind.parse(args.bc), 'boundary condition')
    grid = config.grid.space()
    tgrid = config.grid.time()
    u0 = (_expect(load_field(args.u0), HalfField, 'initial value') if args.u0
          else HalfField(grid, np.zeros(grid.half_shape)))
    h = (_expect(load_field(args.h), TimeField, 'boundary datum') if args.h
         else IbvpData.zeros(bc, u0.grid, tgrid).h)
    f = _expect(load_field(args.f), SpaceTimeField, 'forcing') if args.f else None
    data = IbvpData(bc, u0, h, h.tgrid, f)

    solver = dataclasses.replace(config.solver, threads=args.threads)
    _banner("Half-Space Heat Solve", {'Boundary condition': bc.name, 'Grid': data.grid,
                                       'Time grid': data.tgrid})
    bundle = solve_halfspace_heat(data, solver)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ('u', 'u1', 'u2', 'u3'):
        save_field(out / f"{name}.bin", getattr(bundle, name))
    _write_json(out / 'solve.json', {
        'schema': SCHEMA_VERSION, 'bc': bc.name, 'relative_residual': bundle.relative_residual,
        'residuals': bundle.residuals, 'compatibility_gap': bundle.compatibility_gap,
        'flagged': bundle.flagged, 'notes': bundle.notes})
    print(f"Relative residual: {bundle.relative_residual:.3e}")
    print(f"Compatibility gap: {bundle.compatibility_gap:.3e}")
    print(f"Fields saved to: {out.absolute()}")
    print("=" * 60)
    return 1 if bundle.flagged else 0


COMMANDS = {
    'lp-check': cmd_lp_check,
    'norm': cmd_norm,
    'kernel': cmd_kernel,
    'ortho': cmd_ortho,
    'maxreg': cmd_maxreg,
    'trace': cmd_trace,
    'scaling': cmd_scaling,
    'lemma-b': cmd_lemma_b,
    'solve': cmd_solve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='besovheat',
        description='Littlewood-Paley norms, half-space heat kernels and estimate sweeps')

    parser.add_argument('--config', type=str, default=None,
                        help='JSON run configuration (default: built-in defaults)')
    parser.add_argument('--out', type=str, default=None,
                        help='Output directory (default: io.out of the configuration)')
    parser.add_argument('--threads', type=int, default=os.cpu_count() or 1,
                        help='Worker threads for sweeps and solves (default: all cores)')
    parser.add_argument('--tolerance-profile', choices=['default', 'strict'], default=None,
                        help='Pass thresholds (default: tolerances.profile of the configuration)')
    parser.add_argument('--verbose', action='store_true', help='Debug logging')

    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('lp-check', help='Partition of unity and telescoping residuals')

    norm = sub.add_parser('norm', help='Norm of a dumped field')
    norm.add_argument('field', type=str, help='Field dump')
    norm.add_argument('--s', type=float, default=0.0, help='Smoothness (default: 0)')
    norm.add_argument('--p', type=float, default=2.0, help='Integrability (default: 2)')
    norm.add_argument('--sigma', type=float, default=1.0, help='Summability (default: 1)')
    norm.add_argument('--time', type=float, default=None,
                      help='Time smoothness of a Bochner Triebel-Lizorkin norm for time fields')
    norm.add_argument('--kind', choices=['besov', 'triebel'], default='besov')
    norm.add_argument('--inhomogeneous', action='store_true', help='Keep the low-frequency part')

    kernel = sub.add_parser('kernel', help='L1 norm of one kernel block')
    kernel.add_argument('--kind', type=str, default='dirichlet',
                        help='dirichlet, neumann, oblique, green_d or green_n')
    kernel.add_argument('--b', type=float, nargs='+', default=None, help='Oblique vector (b\', b_n)')
    kernel.add_argument('--k', type=int, required=True)
    kernel.add_argument('--j', type=int, required=True)
    kernel.add_argument('--eta', type=float, required=True)
    kernel.add_argument('--t', type=float, default=0.0)
    kernel.add_argument('--m', type=int, default=None, help='eta-smoothing index')
    kernel.add_argument('--dim', type=int, default=2)

    for name, text in (('ortho', 'Kernel orthogonality or smoothing sweep'),
                       ('maxreg', 'Maximal regularity ratio over a data family'),
                       ('trace', 'Boundary trace ratio over manufactured fields'),
                       ('scaling', 'Homogeneity exponent of a boundary norm'),
                       ('lemma-b', 'Bracket integral against its envelope')):
        sub.add_parser(name, help=text)

    solve = sub.add_parser('solve', help='Solve the half-space heat problem')
    solve.add_argument('--bc', type=str, default='dirichlet', help='dirichlet or neumann')
    solve.add_argument('--u0', type=str, default=None, help='Initial value (half-space dump)')
    solve.add_argument('--h', type=str, default=None, help='Boundary datum (time dump)')
    solve.add_argument('--f', type=str, default=None, help='Forcing (space-time dump)')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(name)s %(levelname)s: %(message)s')

    try:
        config = RunConfig.load(args.config)
        if args.tolerance_profile is not None:
            config.tolerances = dataclasses.replace(config.tolerances, profile=args.tolerance_profile)
        if args.out is None:
            args.out = config.io.out
        if args.threads < 1:
            raise ConfigError(f"threads must be positive, got {args.threads}")

        unachievable = config.tolerances.unachievable()
        if unachievable:
            print(f"Unachievable tolerances (below 10 machine epsilons): {', '.join(unachievable)}")
            return 1
        return COMMANDS[args.command](args, config)
    except (BesovHeatError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
