"""Unit tests for the half-space heat solver"""

import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import erfc

from besov_heat.errors import GridMismatchError, ResidualWarning
from besov_heat.fields import Field, GridSpec, HalfField, SpaceTimeField, TimeField, TimeGrid
from besov_heat.kernels import DIRICHLET, NEUMANN, KernelKind
from besov_heat.solver import (
    IbvpData,
    SolverSettings,
    boundary_corrector,
    cumulative_kernel,
    extend_even,
    extend_odd,
    graded_eta_grid,
    half_line_kernel,
    heat_kernel_from_symbol,
    solve_halfspace_heat,
    whole_space_heat,
)


class TestSettings:
    """Test solver settings and problem validation"""

    def test_grading_required(self):
        """Test ungraded or coarse sub-steps are refused"""
        with pytest.raises(ValueError):
            SolverSettings(grading=False)
        with pytest.raises(ValueError):
            SolverSettings(substeps=4)
        with pytest.raises(ValueError):
            SolverSettings(eta_ratio=1.0)

    def test_problem_validation(self):
        """Test boundary conditions and grids of a problem"""
        grid = GridSpec(2, 16, 2.0 * math.pi)
        tgrid = TimeGrid(1.0, 5)
        data = IbvpData.zeros(DIRICHLET, grid, tgrid)

        with pytest.raises(ValueError):
            IbvpData(KernelKind.parse('oblique', [0.5, 1.0]), data.u0, data.h, tgrid)
        with pytest.raises(GridMismatchError):
            IbvpData(DIRICHLET, data.u0, data.h, TimeGrid(2.0, 5))
        with pytest.raises(GridMismatchError):
            IbvpData(DIRICHLET, data.u0, TimeField(tgrid, np.zeros(5)), tgrid)


class TestReflections:
    """Test odd and even extensions"""

    def test_symmetry(self):
        """Test u(-x_n) = -u(x_n) and u(-x_n) = u(x_n) on the interior layers"""
        grid = GridSpec(1, 16, 4.0)
        u0 = HalfField(grid, np.arange(1.0, 9.0))
        half = grid.N // 2

        odd = extend_odd(u0).samples
        even = extend_even(u0).samples

        for i in range(1, half):
            assert odd[half - i] == -odd[half + i]
            assert even[half - i] == even[half + i]
        assert odd[half] == 1.0


class TestKernels:
    """Test the closed-form half-line kernels"""

    def test_graded_eta_grid(self):
        """Test geometric layers up to eta_max"""
        eta = graded_eta_grid(1e-3, 1.0, 1.15)

        assert eta[0] == 1e-3
        assert eta[-1] <= 1.0
        assert eta[-1] * 1.15 > 1.0
        assert np.allclose(eta[1:] / eta[:-1], 1.15)

    @pytest.mark.parametrize('bc', [DIRICHLET, NEUMANN])
    @pytest.mark.parametrize('xi_sq', [0.0, 0.25, 4.0])
    def test_cumulative_is_primitive(self, bc, xi_sq):
        """Test d/dtau of the cumulative kernel is the kernel"""
        tau, eta, delta = 0.5, 1.0, 1e-5
        slope = (cumulative_kernel(bc, tau + delta, xi_sq, eta)
                 - cumulative_kernel(bc, tau - delta, xi_sq, eta)) / (2.0 * delta)

        assert float(slope) == pytest.approx(float(half_line_kernel(bc, tau, xi_sq, eta)), rel=1e-6)

    def test_cumulative_at_zero(self):
        """Test the integral over an empty interval"""
        assert float(cumulative_kernel(DIRICHLET, 0.0, 1.0, 1.0)) == 0.0
        assert float(cumulative_kernel(NEUMANN, 0.0, 1.0, 1.0)) == 0.0

    @pytest.mark.parametrize('bc', [DIRICHLET, NEUMANN])
    @pytest.mark.parametrize('t', [0.25, 0.5, 1.0])
    def test_symbol_and_closed_form_agree(self, bc, t):
        """Test the inverse time transform of the symbol at eta = 1, |xi'|^2 = 1"""
        numeric = heat_kernel_from_symbol(bc, t, 1.0, 1.0)

        assert numeric == pytest.approx(float(half_line_kernel(bc, t, 1.0, 1.0)), rel=1e-4)


class TestSolve:
    """Test full solves against exact solutions"""

    def test_zero_data(self):
        """Test zero data give the zero solution"""
        grid = GridSpec(2, 16, 2.0 * math.pi)
        tgrid = TimeGrid(0.5, 6)

        with warnings.catch_warnings():
            warnings.simplefilter('error', ResidualWarning)
            bundle = solve_halfspace_heat(IbvpData.zeros(NEUMANN, grid, tgrid))

        assert not np.any(bundle.u.samples)
        assert bundle.compatibility_gap == 0.0
        assert not bundle.flagged

    def test_dirichlet_constant_datum(self):
        """Test h = 1, u0 = 0 on the half-line against erfc(x / 2 sqrt(t))"""
        grid = GridSpec(1, 64, 16.0)
        tgrid = TimeGrid(1.0, 11)
        data = IbvpData(DIRICHLET, HalfField(grid, np.zeros(32)), TimeField(tgrid, np.ones(11)), tgrid)

        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ResidualWarning)
            bundle = solve_halfspace_heat(data)

        x = grid.half_coords()[None, :]
        t = tgrid.times()[1:, None]
        assert np.allclose(bundle.u.samples[1:], erfc(x / (2.0 * np.sqrt(t))), atol=1e-12)
        assert bundle.compatibility_gap == pytest.approx(1.0)
        assert bundle.notes

    def test_neumann_constant_flux(self):
        """Test d/dx_n u = 1 on the boundary against the closed-form solution"""
        grid = GridSpec(1, 64, 16.0)
        tgrid = TimeGrid(1.0, 11)
        data = IbvpData(NEUMANN, HalfField(grid, np.zeros(32)), TimeField(tgrid, np.ones(11)), tgrid)

        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ResidualWarning)
            bundle = solve_halfspace_heat(data)

        x = grid.half_coords()[None, :]
        t = tgrid.times()[1:, None]
        z = x / (2.0 * np.sqrt(t))
        exact = x * erfc(z) - 2.0 * np.sqrt(t / math.pi) * np.exp(-z * z)
        assert np.allclose(bundle.u.samples[1:], exact, atol=1e-12)

    def test_manufactured_solution(self):
        """Test u = exp(-t) sin(x_n) cos(x') with its forcing and zero trace"""
        grid = GridSpec(2, 32, 2.0 * math.pi)
        tgrid = TimeGrid(1.0, 101)
        x, y = grid.mesh(half=True)
        profile = np.sin(y) * np.cos(x)
        decay = np.exp(-tgrid.times())[:, None, None]
        exact = decay * profile

        data = IbvpData(DIRICHLET, HalfField(grid, profile),
                        TimeField(tgrid, np.zeros((101, 32)), grid.boundary()), tgrid,
                        f=SpaceTimeField(tgrid, grid, exact))
        bundle = solve_halfspace_heat(data)

        assert np.max(np.abs(bundle.u.samples - exact)) < 1e-3
        assert np.max(np.abs(bundle.u2.samples)) < 1e-10
        assert bundle.compatibility_gap < 1e-12


def _solve_quietly(data, settings=SolverSettings()):
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', ResidualWarning)
        return solve_halfspace_heat(data, settings)


def _cubic_datum(N, Nt):
    """Dirichlet problem with u0 = 0 and h = t^3 cos(x') on a 2pi box"""
    grid = GridSpec(2, N, 2.0 * math.pi)
    tgrid = TimeGrid(1.0, Nt)
    x = grid.boundary().coords()
    h = tgrid.times()[:, None] ** 3 * np.cos(x)[None, :]
    return IbvpData(DIRICHLET, HalfField(grid, np.zeros(grid.half_shape)),
                    TimeField(tgrid, h, grid.boundary()), tgrid)


class TestSolverProperties:
    """Test convergence, linearity and causality of the solver"""

    def test_residual_second_order(self):
        """Test the residual drops by about 4 when space and time steps are halved together"""
        coarse = _solve_quietly(_cubic_datum(32, 41))
        fine = _solve_quietly(_cubic_datum(64, 81))

        ratio = np.nanmax(coarse.residuals) / np.nanmax(fine.residuals)
        assert 3.0 < ratio < 5.5

    def test_linearity(self):
        """Test u(a + 2 b) = u(a) + 2 u(b) for all three inputs"""
        grid = GridSpec(2, 16, 2.0 * math.pi)
        tgrid = TimeGrid(0.5, 6)
        rng = np.random.default_rng(0)

        def random_data():
            return IbvpData(NEUMANN, HalfField(grid, rng.standard_normal(grid.half_shape)),
                            TimeField(tgrid, rng.standard_normal((6, 16)), grid.boundary()), tgrid,
                            f=SpaceTimeField(tgrid, grid, rng.standard_normal((6,) + grid.half_shape)))

        a, b = random_data(), random_data()
        combined = IbvpData(NEUMANN, HalfField(grid, a.u0.samples + 2.0 * b.u0.samples),
                            TimeField(tgrid, a.h.samples + 2.0 * b.h.samples, grid.boundary()), tgrid,
                            f=SpaceTimeField(tgrid, grid, a.f.samples + 2.0 * b.f.samples))

        u_a = _solve_quietly(a).u.samples
        u_b = _solve_quietly(b).u.samples
        u_ab = _solve_quietly(combined).u.samples
        assert np.allclose(u_ab, u_a + 2.0 * u_b, atol=1e-10)

    def test_causality(self):
        """Test a datum switched on at t = 1/2 leaves the solution zero until then"""
        grid = GridSpec(2, 16, 2.0 * math.pi)
        tgrid = TimeGrid(1.0, 11)
        t = tgrid.times()[:, None]
        h = np.maximum(t - 0.5, 0.0) * np.cos(grid.boundary().coords())[None, :]
        data = IbvpData(DIRICHLET, HalfField(grid, np.zeros(grid.half_shape)),
                        TimeField(tgrid, h, grid.boundary()), tgrid)

        u = _solve_quietly(data).u.samples

        assert not np.any(u[:6])
        assert np.any(u[6:])


class TestWholeSpace:
    """Test the periodic heat flow"""

    def test_gaussian_spread(self):
        """Test a Gaussian of variance 2 t0 per axis keeps its mass and spreads to 2 (t0 + t)"""
        grid = GridSpec(2, 64, 32.0)
        tgrid = TimeGrid(1.0, 5)
        x, y = grid.mesh()
        r2 = x ** 2 + y ** 2
        t0 = 1.0

        flow = whole_space_heat(Field(grid, np.exp(-r2 / (4.0 * t0)) / (4.0 * math.pi * t0)), None, tgrid)

        for i, t in enumerate(tgrid.times()):
            s = t0 + t
            exact = np.exp(-r2 / (4.0 * s)) / (4.0 * math.pi * s)
            assert np.allclose(flow.samples[i], exact, atol=1e-10)
            assert np.sum(flow.samples[i]) * grid.cell_volume == pytest.approx(1.0, rel=1e-12)
            assert np.sum(r2 * flow.samples[i]) * grid.cell_volume == pytest.approx(4.0 * s, rel=1e-8)


class TestBoundaryCorrector:
    """Test the boundary corrector on a two-dimensional boundary mode"""

    SPACE = GridSpec(1, 16, 2.0 * math.pi)
    TIME = TimeGrid(1.0, 21)
    ETA = np.array([1e-4, 2e-4, 0.5, 1.0])

    def layer(self):
        h = self.TIME.times()[:, None] * np.cos(self.SPACE.coords())[None, :]
        return boundary_corrector(DIRICHLET, TimeField(self.TIME, h, self.SPACE), self.ETA, self.TIME)

    def test_against_quadrature(self):
        """Test h = t cos(x') against the Duhamel integral of the |xi'| = 1 kernel"""
        layer = self.layer()
        centre = self.SPACE.N // 2

        for e, eta in enumerate(self.ETA[2:], start=2):
            exact, _ = quad(lambda tau: float(half_line_kernel(DIRICHLET, tau, 1.0, eta)) * (1.0 - tau),
                            0.0, 1.0, limit=200)
            assert layer.samples[-1, centre, e] == pytest.approx(exact, rel=1e-3)
            assert layer.samples[-1, 0, e] == pytest.approx(-exact, rel=1e-3)

    def test_trace_recovers_datum(self):
        """Test extrapolation to the boundary returns h"""
        layer = self.layer()
        h = self.TIME.times()[:, None] * np.cos(self.SPACE.coords())[None, :]

        later = self.TIME.times() >= 0.2
        assert np.allclose(layer.trace()[later], h[later], atol=1e-3)
