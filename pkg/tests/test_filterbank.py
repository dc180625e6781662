"""Unit tests for the dyadic profile and filter banks"""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from besov_heat.errors import IndexOutOfWindowError, WindowFloorWarning, WindowOutOfBandError
from besov_heat.fields import Field, GridSpec
from besov_heat.filterbank import (
    DyadicProfile,
    auto_window,
    dyadic_blocks,
    high_leftover,
    low_pass,
    lp_block,
    make_filter_bank,
    partition_residual,
    separated_partition_residual,
    telescoping_residual,
    window_residual,
)

PROFILE = DyadicProfile()


class TestDyadicProfile:
    """Test the cut-off and its dyadic pieces"""

    def test_step_limits(self):
        """Test S vanishes below 0, equals 1 above 1 and 1/2 at 1/2"""
        x = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
        values = DyadicProfile.step(x)

        assert np.array_equal(values[[0, 1]], [0.0, 0.0])
        assert values[2] == pytest.approx(0.5)
        assert np.array_equal(values[[3, 4]], [1.0, 1.0])

    def test_zeta_support(self):
        """Test zeta is 1 on [0, 1] and 0 from 2 on"""
        r = np.array([0.0, 0.5, 1.0, 2.0, 3.0])

        assert np.array_equal(PROFILE.zeta(r), [1.0, 1.0, 1.0, 0.0, 0.0])

    def test_phi_support(self):
        """Test phi_m vanishes outside (2^(m-1), 2^(m+1))"""
        m = 3
        r = np.array([0.0, 2.0, 6.0, 16.0, 40.0])
        values = PROFILE.phi_m(r, m)

        assert values[0] == 0.0
        assert values[1] == 0.0
        assert values[3] == 0.0
        assert values[4] == 0.0
        assert values[2] > 0.0

    def test_telescoping_identity(self):
        """Test zeta_m = zeta_{m-1} + phi_m"""
        r = np.exp2(np.linspace(-4.0, 6.0, 501))
        for m in range(-2, 5):
            lhs = PROFILE.zeta_m(r, m)
            rhs = PROFILE.zeta_m(r, m - 1) + PROFILE.phi_m(r, m)
            assert np.max(np.abs(lhs - rhs)) < 1e-15

    def test_separated_block_telescopes(self):
        """Test the separated block equals zeta_m zeta_m - zeta_{m-1} zeta_{m-1}"""
        rng = np.random.default_rng(2)
        a = rng.uniform(0.0, 20.0, 400)
        b = rng.uniform(0.0, 20.0, 400)
        m = 2

        expected = (PROFILE.zeta_m(a, m) * PROFILE.zeta_m(b, m)
                    - PROFILE.zeta_m(a, m - 1) * PROFILE.zeta_m(b, m - 1))

        assert np.allclose(PROFILE.separated_block(a, b, m), expected, atol=1e-14)

    def test_fingerprint(self):
        """Test the fingerprint is stable and recorded in the identifier"""
        other = DyadicProfile()

        assert PROFILE.fingerprint == other.fingerprint
        assert len(PROFILE.fingerprint) == 12
        assert PROFILE.identifier.startswith('smoothstep-exp/')
        assert DyadicProfile(1024).fingerprint != PROFILE.fingerprint

    def test_invalid_resolution(self):
        """Test validation"""
        with pytest.raises(ValueError):
            DyadicProfile(0)


class TestMakeFilterBank:
    """Test window checks"""

    def test_valid_window(self):
        """Test a window inside the band builds quietly"""
        grid = GridSpec(2, 64, 32.0)
        with warnings.catch_warnings():
            warnings.simplefilter('error')
            bank = make_filter_bank(PROFILE, -1, 1, grid)

        assert list(bank.indices) == [-1, 0, 1]
        assert bank.floor_below_fundamental is False

    def test_window_beyond_nyquist(self):
        """Test 2^(jmax+1) above Nyquist is rejected"""
        grid = GridSpec(2, 64, 32.0)
        with pytest.raises(WindowOutOfBandError, match='Nyquist'):
            make_filter_bank(PROFILE, -1, 2, grid)

    def test_window_too_narrow(self):
        """Test windows of fewer than three indices are rejected"""
        with pytest.raises(ValueError):
            make_filter_bank(PROFILE, 0, 1, GridSpec(1, 64, 32.0))

    def test_floor_below_fundamental(self):
        """Test a low floor warns and is recorded"""
        grid = GridSpec(1, 64, 32.0)
        with pytest.warns(WindowFloorWarning):
            bank = make_filter_bank(PROFILE, -3, 1, grid)

        assert bank.floor_below_fundamental is True
        assert bank.describe()['floor_below_fundamental'] is True

    def test_index_outside_window(self):
        """Test multipliers outside the window are refused"""
        bank = make_filter_bank(PROFILE, -1, 1, GridSpec(1, 64, 32.0))
        with pytest.raises(IndexOutOfWindowError):
            bank.multiplier(2)

    def test_auto_window(self):
        """Test the automatic window fits strictly inside the band"""
        for grid in (GridSpec(1, 64, 32.0), GridSpec(2, 128, 2.0 * math.pi), GridSpec(3, 64, 10.0)):
            jmin, jmax = auto_window(grid)
            with warnings.catch_warnings():
                warnings.simplefilter('error')
                make_filter_bank(PROFILE, jmin, jmax, grid)
            assert jmax - jmin >= 2

    def test_auto_window_too_coarse(self):
        """Test grids without room for three blocks"""
        with pytest.raises(WindowOutOfBandError):
            auto_window(GridSpec(1, 16, 1.0))


class TestResiduals:
    """Test partition of unity and telescoping"""

    def test_partition_residual(self):
        """Test the window sum is 1 on the covered radii"""
        bank = make_filter_bank(PROFILE, -1, 1, GridSpec(2, 64, 32.0))

        assert partition_residual(bank) < 1e-10
        assert window_residual(PROFILE, -5, 8) < 1e-10

    def test_residual_sample_count(self):
        """Test fewer than 100 radii are rejected"""
        with pytest.raises(ValueError):
            window_residual(PROFILE, 0, 4, samples=50)

    def test_residual_outside_window(self):
        """Test radii outside the window expose the missing blocks"""
        assert window_residual(PROFILE, 0, 4, radii=[0.25, 64.0]) == pytest.approx(1.0)

    def test_separated_partition(self):
        """Test the separated blocks sum to 1 where max(a, b) is in the window"""
        assert separated_partition_residual(PROFILE, -2, 4) < 1e-10

    def test_telescoping_residual(self):
        """Test partial lattice sums telescope"""
        bank = make_filter_bank(PROFILE, -1, 2, GridSpec(2, 128, 32.0))

        assert telescoping_residual(bank) < 1e-14

    @given(st.floats(min_value=-4.0, max_value=6.0))
    @settings(max_examples=200, deadline=None)
    def test_partition_property(self, log_r):
        """Property: window sum is 1 for every radius in [2^jmin, 2^jmax]"""
        total = PROFILE.window_sum(-4, 6, np.array([2.0 ** log_r]))

        assert abs(total[0] - 1.0) < 1e-12


class TestBlocks:
    """Test block extraction"""

    def test_reconstruction(self):
        """Test low part + blocks + high leftover reproduce the field"""
        grid = GridSpec(2, 64, 32.0)
        bank = make_filter_bank(PROFILE, -1, 1, grid)
        rng = np.random.default_rng(3)
        f = Field(grid, rng.normal(size=grid.shape))

        total = low_pass(f, bank.jmin - 1, bank).samples + high_leftover(f, bank).samples
        for _, block in dyadic_blocks(f, bank):
            total = total + block.samples

        assert np.allclose(total, f.samples, atol=1e-12)

    def test_low_pass_nesting(self):
        """Test S_(m+1) S_m = S_m, and S_m fixes fields band-limited below 2^m"""
        grid = GridSpec(1, 256, 16.0 * math.pi)
        bank = make_filter_bank(PROFILE, -2, 3, grid)
        rng = np.random.default_rng(5)
        f = Field(grid, rng.normal(size=grid.shape))
        x = grid.coords()
        slow = Field(grid, np.cos(x) + 0.5 * np.sin(1.5 * x))

        once = low_pass(f, 1, bank)

        assert np.allclose(low_pass(once, 2, bank).samples, once.samples, atol=1e-12)
        assert np.allclose(low_pass(slow, 1, bank).samples, slow.samples, atol=1e-12)
        assert np.allclose(low_pass(low_pass(slow, 1, bank), 1, bank).samples, slow.samples, atol=1e-12)

    def test_real_in_real_out(self):
        """Test blocks of real fields stay real"""
        grid = GridSpec(1, 64, 32.0)
        bank = make_filter_bank(PROFILE, -1, 1, grid)
        f = Field(grid, np.cos(grid.coords()))

        assert np.isrealobj(lp_block(f, 0, bank).samples)

    def test_single_mode_lands_in_its_blocks(self):
        """Test a pure mode at frequency 1 is split between blocks -1..1 only"""
        grid = GridSpec(1, 128, 2.0 * math.pi * 8.0)
        bank = make_filter_bank(PROFILE, -2, 2, grid)
        f = Field(grid, np.cos(grid.coords()))

        energy = {j: float(np.max(np.abs(block.samples))) for j, block in dyadic_blocks(f, bank)}

        assert energy[-2] < 1e-14
        assert energy[2] < 1e-14
        assert energy[0] == pytest.approx(1.0)

    @given(st.floats(min_value=-3.0, max_value=3.0), st.floats(min_value=-3.0, max_value=3.0))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, a, b):
        """Property: blocks are linear"""
        grid = GridSpec(1, 64, 32.0)
        bank = make_filter_bank(PROFILE, -1, 1, grid)
        x = grid.coords()
        f, g = Field(grid, np.cos(x)), Field(grid, np.sin(2.0 * x))
        combined = Field(grid, a * f.samples + b * g.samples)

        lhs = lp_block(combined, 0, bank).samples
        rhs = a * lp_block(f, 0, bank).samples + b * lp_block(g, 0, bank).samples

        assert np.allclose(lhs, rhs, atol=1e-12)
