"""Unit tests for sweep reports"""

import json
import math
import tempfile
from pathlib import Path

import numpy as np
import pytest

from besov_heat.report import DEGENERATE, FAILED, SweepReport, log2_slope


def sample_report() -> SweepReport:
    report = SweepReport('ortho-dirichlet-time', ['k', 'j'], {'profile': 'smoothstep-exp/abc'})
    for k in (4, 6, 8):
        report.add_row({'k': k, 'j': 1}, measured=2.0 ** k, envelope=2.0, regime='time')
    report.add_row({'k': 2, 'j': 3}, measured=3.0, envelope=1.0, regime='space', flags=['truncation'])
    return report


class TestRows:
    """Test rows, flags and ratios"""

    def test_ratio(self):
        """Test the ratio column is measured / envelope"""
        row = sample_report().rows[0]

        assert row['ratio'] == 8.0
        assert row['regime'] == 'time'
        assert row['flags'] == ''

    def test_non_positive_envelope(self):
        """Test zero envelopes need the degenerate or failed flag"""
        report = SweepReport('maxreg-dirichlet', ['member'])

        with pytest.raises(ValueError):
            report.add_row({'member': 0}, 0.0, 0.0)
        report.add_row({'member': 0}, 0.0, 0.0, flags=[DEGENERATE])
        report.add_row({'member': 1}, float('nan'), float('nan'), flags=[FAILED])

        assert math.isnan(report.rows[0]['ratio'])
        assert report.usable_rows() == []
        assert math.isnan(report.spread())

    def test_extra_columns(self):
        """Test extra keyword columns are kept after the fixed ones"""
        report = SweepReport('lemma-b', ['a'])
        report.add_row({'a': 1.0}, 1.0, 2.0, closed_form=1.5)

        assert list(report.to_dataframe().columns) == [
            'a', 'regime', 'measured', 'envelope', 'ratio', 'flags', 'closed_form']


class TestSummaries:
    """Test per-regime maxima, slopes and spreads"""

    def test_regimes(self):
        """Test regimes keep first-seen order"""
        report = sample_report()

        assert report.regimes() == ['time', 'space']
        assert report.max_ratio_by_regime() == {'time': 128.0, 'space': 3.0}

    def test_slope(self):
        """Test log2(ratio) grows by one per unit of k"""
        report = sample_report()

        assert report.slope_against('k', regime='time') == pytest.approx(1.0)
        assert report.slope_against('k', where=lambda r: r['regime'] == 'time') == pytest.approx(1.0)

    def test_upper_slope(self):
        """Test the per-k maximum is flat when only the other rows fall with k"""
        report = SweepReport('ortho-dirichlet-time', ['k', 'j'])
        for k in (4, 6, 8):
            report.add_row({'k': k, 'j': 1}, measured=2.0, envelope=1.0, regime='time')
            report.add_row({'k': k, 'j': 0}, measured=2.0 ** (4 - k), envelope=1.0, regime='time')
        report.add_row({'k': 10, 'j': 1}, float('nan'), float('nan'), flags=[FAILED], regime='time')

        assert report.slope_against('k') < -0.2
        assert report.upper_slope_against('k', regime='time') == pytest.approx(0.0, abs=1e-12)
        assert math.isnan(report.upper_slope_against('k', regime='space'))
        assert report.upper_slope_against('k', value='measured') == pytest.approx(0.0, abs=1e-12)

    def test_log2_slope_degenerate(self):
        """Test fewer than two distinct abscissae give NaN"""
        assert math.isnan(log2_slope([1.0], [2.0]))
        assert math.isnan(log2_slope([1.0, 1.0], [2.0, 4.0]))

    def test_spread(self):
        """Test max / min over usable rows"""
        assert sample_report().spread() == pytest.approx(128.0 / 3.0)

    def test_summary(self):
        """Test summary fields"""
        report = sample_report()
        report.slopes['k'] = float('nan')
        summary = report.summary()

        assert summary['schema'] == 1
        assert summary['max_ratio'] == 128.0
        assert summary['rows'] == 4
        assert summary['slopes'] == {'k': None}
        assert summary['pass'] is None


class TestPersistence:
    """Test CSV and JSON output"""

    def test_save_and_load(self):
        """Test a saved report loads back with identical rows"""
        report = sample_report()
        report.add_row({'k': 9, 'j': 0}, 0.0, 0.0, flags=[DEGENERATE])
        report.slopes['k'] = 1.0
        report.passed = False

        with tempfile.TemporaryDirectory() as tmpdir:
            prefix = Path(tmpdir) / 'sub' / 'ortho'
            report.save(prefix)
            with open(prefix.with_suffix('.json')) as f:
                summary = json.load(f)
            loaded = SweepReport.load(prefix)

        assert summary['estimate'] == 'ortho-dirichlet-time'
        assert summary['metadata'] == {'profile': 'smoothstep-exp/abc'}
        assert loaded.parameters == ['k', 'j']
        assert len(loaded.rows) == 5
        assert np.array_equal(loaded.ratios(), report.ratios())
        assert loaded.rows[3]['flags'] == 'truncation'
        assert loaded.rows[4]['flags'] == DEGENERATE
        assert loaded.slopes == {'k': 1.0}
        assert loaded.passed is False
