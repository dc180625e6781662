"""Unit tests for the command-line frontend"""

import json
import tempfile
from pathlib import Path

import numpy as np
import pytest

from besov_heat import cli
from besov_heat.cli import main
from besov_heat.fields import Field, GridSpec, load_field, save_field
from besov_heat.filterbank import DyadicProfile, make_filter_bank
from besov_heat.spaces import NormParams, besov_norm
from besov_heat.verify import gabor


def write_config(directory: str, payload) -> str:
    path = Path(directory) / 'run.json'
    path.write_text(json.dumps(payload))
    return str(path)


class TestExitCodes:
    """Test exit codes of the commands"""

    def test_lp_check_defaults(self):
        """Test the default partition check passes and writes its summary"""
        with tempfile.TemporaryDirectory() as tmpdir:
            code = main(['--out', tmpdir, 'lp-check'])
            with open(Path(tmpdir) / 'lp_check.json') as f:
                summary = json.load(f)

        assert code == 0
        assert summary['pass'] is True
        assert summary['bank']['jmin'] == -1

    def test_unknown_config_key(self):
        """Test an unknown configuration key is a usage error"""
        with tempfile.TemporaryDirectory() as tmpdir:
            config = write_config(tmpdir, {'colour': 'blue'})
            assert main(['--config', config, '--out', tmpdir, 'lp-check']) == 2

    def test_window_beyond_nyquist(self):
        """Test a window above the grid's Nyquist frequency"""
        with tempfile.TemporaryDirectory() as tmpdir:
            config = write_config(tmpdir, {'bank': {'jmin': -1, 'jmax': 3}})
            assert main(['--config', config, '--out', tmpdir, 'lp-check']) == 2

    def test_unachievable_tolerance(self):
        """Test thresholds below ten machine epsilons fail the run"""
        with tempfile.TemporaryDirectory() as tmpdir:
            config = write_config(tmpdir, {'tolerances': {'partition': 1e-16}})
            assert main(['--config', config, '--out', tmpdir, 'lp-check']) == 1

    def test_missing_inputs(self):
        """Test missing configuration and field files"""
        with tempfile.TemporaryDirectory() as tmpdir:
            assert main(['--config', str(Path(tmpdir) / 'none.json'), 'lp-check']) == 2
            assert main(['--out', tmpdir, 'norm', str(Path(tmpdir) / 'none.bin')]) == 2

    def test_invalid_kernel_arguments(self):
        """Test a bad height or thread count is a usage error"""
        with tempfile.TemporaryDirectory() as tmpdir:
            assert main(['--out', tmpdir, 'kernel', '--k', '4', '--j', '1', '--eta', '-1']) == 2
            assert main(['--out', tmpdir, '--threads', '0', 'lp-check']) == 2

    def test_internal_errors_propagate(self, monkeypatch):
        """Test a ValueError raised inside a command is not reported as a usage error"""
        def broken(args, config):
            raise ValueError('internal')

        monkeypatch.setitem(cli.COMMANDS, 'lp-check', broken)
        with tempfile.TemporaryDirectory() as tmpdir:
            with pytest.raises(ValueError, match='internal'):
                main(['--out', tmpdir, 'lp-check'])

    def test_lemma_b(self, capsys):
        """Test the bracket integral passes for orders 2, 3 and 4"""
        with tempfile.TemporaryDirectory() as tmpdir:
            code = main(['--out', tmpdir, 'lemma-b'])
            written = sorted(p.name for p in Path(tmpdir).iterdir())

        assert code == 0
        assert 'lemma-b-N2.csv' in written
        assert 'lemma-b-N4.json' in written
        assert 'Pass: True' in capsys.readouterr().out


class TestCommands:
    """Test command outputs"""

    def test_norm_of_dump(self):
        """Test the norm command agrees with the library"""
        grid = GridSpec(1, 1024, 128.0)
        f = Field(grid, gabor(grid.coords(), 8.0, 1.0))
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / 'f.bin'
            save_field(path, f)
            code = main(['--out', tmpdir, 'norm', str(path), '--s', '-0.25'])
            with open(Path(tmpdir) / 'norm.json') as fh:
                summary = json.load(fh)

        bank = make_filter_bank(DyadicProfile(), -3, 3, grid)
        assert code == 0
        assert summary['value'] == pytest.approx(besov_norm(f, NormParams(-0.25, 2.0), bank), rel=1e-14)

    def test_solve_zero_data(self):
        """Test zero data give zero parts on disk"""
        with tempfile.TemporaryDirectory() as tmpdir:
            code = main(['--out', tmpdir, '--threads', '1', 'solve', '--bc', 'neumann'])
            u = load_field(Path(tmpdir) / 'u.bin')
            u2 = load_field(Path(tmpdir) / 'u2.bin')
            with open(Path(tmpdir) / 'solve.json') as f:
                summary = json.load(f)

        assert code == 0
        assert u.samples.shape == (65, 64, 32)
        assert not np.any(u.samples)
        assert not np.any(u2.samples)
        assert summary['flagged'] is False


class TestDefaultRuns:
    """Test every sweep runs on the built-in configuration"""

    def test_scaling(self):
        """Test the default scaling run refines its grids and passes"""
        with tempfile.TemporaryDirectory() as tmpdir:
            code = main(['--out', tmpdir, '--threads', '1', 'scaling'])
            with open(Path(tmpdir) / 'scaling-dirichlet-space.json') as f:
                summary = json.load(f)

        assert code == 0
        assert summary['pass'] is True

    @pytest.mark.parametrize('command,name', [
        ('ortho', 'ortho-dirichlet-time'),
        ('maxreg', 'maxreg-dirichlet-besov-dilation'),
        ('trace', 'trace-dirichlet'),
    ])
    def test_sweeps_complete(self, command, name):
        """Test the default sweeps finish and write their reports"""
        with tempfile.TemporaryDirectory() as tmpdir:
            code = main(['--out', tmpdir, '--threads', '1', command])
            with open(Path(tmpdir) / f'{name}.json') as f:
                summary = json.load(f)

        assert code in (0, 1)
        assert summary['rows'] > 0
        assert summary['pass'] in (True, False)
