"""Sweep reports: tabular rows plus a JSON summary"""

import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

SCHEMA_VERSION = 1
DEGENERATE = 'degenerate'
FAILED = 'failed'


def log2_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log2(y) against x"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        return float('nan')
    return float(np.polyfit(x, np.log2(y), 1)[0])


class SweepReport:
    """
    Rows of measured values against envelopes for one estimate.

    Each row holds its parameters, the measured value, the envelope, their
    ratio and a list of flags. Rows with a zero envelope must be flagged
    degenerate; degenerate and failed rows stay in the table but are left
    out of the summary.
    """

    def __init__(self, estimate: str, parameters: Sequence[str], metadata: Optional[Dict] = None):
        """
        Args:
            estimate: Name of the estimate this sweep checks
            parameters: Ordered parameter column names
            metadata: Profile id, grids, tolerances and other run context
        """
        self.estimate = estimate
        self.parameters = list(parameters)
        self.metadata = dict(metadata or {})
        self.rows: List[Dict] = []
        self.slopes: Dict[str, float] = {}
        self.extra_summary: Dict = {}
        self.passed: Optional[bool] = None

    def add_row(self, params: Dict, measured: float, envelope: float,
                flags: Iterable[str] = (), regime: str = 'all', **extra) -> Dict:
        """
        Append a row; the ratio is measured / envelope.

        Raises:
            ValueError: if the envelope is not positive and the row is not
                flagged degenerate or failed
        """
        flags = sorted(set(flags))
        if not envelope > 0 and DEGENERATE not in flags and FAILED not in flags:
            raise ValueError(f"envelope must be positive, got {envelope} for {params}")
        ratio = measured / envelope if envelope > 0 else float('nan')
        row = {name: params.get(name) for name in self.parameters}
        row.update(regime=regime, measured=float(measured), envelope=float(envelope),
                   ratio=float(ratio), flags=';'.join(flags))
        row.update(extra)
        self.rows.append(row)
        return row

    def usable_rows(self) -> List[Dict]:
        out = []
        for row in self.rows:
            flags = row['flags'].split(';') if row['flags'] else []
            if DEGENERATE in flags or FAILED in flags or not math.isfinite(row['ratio']):
                continue
            out.append(row)
        return out

    def ratios(self, regime: Optional[str] = None) -> np.ndarray:
        rows = self.usable_rows()
        return np.array([r['ratio'] for r in rows if regime is None or r['regime'] == regime])

    def regimes(self) -> List[str]:
        seen = []
        for row in self.rows:
            if row['regime'] not in seen:
                seen.append(row['regime'])
        return seen

    def max_ratio_by_regime(self) -> Dict[str, float]:
        out = {}
        for regime in self.regimes():
            values = self.ratios(regime)
            out[regime] = float(values.max()) if values.size else float('nan')
        return out

    def slope_against(self, column: str, transform=None, regime: Optional[str] = None,
                      where=None) -> float:
        """
        log2-ratio regression slope against a parameter column.

        Args:
            column: Parameter or extra column name
            transform: Optional map applied to the column (e.g. log2)
            regime: Restrict to one regime
            where: Optional row predicate
        """
        rows = [r for r in self.usable_rows()
                if (regime is None or r['regime'] == regime) and (where is None or where(r))]
        x = [r[column] for r in rows]
        if transform is not None:
            x = [transform(v) for v in x]
        return log2_slope(x, [r['ratio'] for r in rows])

    def upper_slope_against(self, column: str, transform=None, regime: Optional[str] = None,
                            value: str = 'ratio') -> float:
        """
        Slope of the upper envelope: the largest ``value`` at each distinct
        ``column`` entry, regressed in log2 against that entry.

        The other swept parameters are maximised out, so a bounded ratio
        gives a flat envelope even when it varies along them.
        """
        best: Dict[float, float] = {}
        for r in self.usable_rows():
            if regime is not None and r['regime'] != regime:
                continue
            y = r.get(value)
            if y is None or not (math.isfinite(y) and y > 0):
                continue
            key = r[column]
            best[key] = max(best.get(key, 0.0), y)
        keys = sorted(best)
        x = [transform(v) for v in keys] if transform is not None else keys
        return log2_slope(x, [best[v] for v in keys])

    def spread(self) -> float:
        values = self.ratios()
        if values.size == 0:
            return float('nan')
        return float(values.max() / values.min())

    def summary(self) -> Dict:
        by_regime = self.max_ratio_by_regime()
        finite = [v for v in by_regime.values() if math.isfinite(v)]
        return {
            'schema': SCHEMA_VERSION,
            'estimate': self.estimate,
            'regime': {k: (v if math.isfinite(v) else None) for k, v in by_regime.items()},
            'max_ratio': max(finite) if finite else None,
            'spread': self.spread() if finite else None,
            'slopes': {k: (v if math.isfinite(v) else None) for k, v in self.slopes.items()},
            'rows': len(self.rows),
            'usable_rows': len(self.usable_rows()),
            'pass': bool(self.passed) if self.passed is not None else None,
            'metadata': self.metadata,
            **self.extra_summary,
        }

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self._columns())

    def _columns(self) -> List[str]:
        columns = self.parameters + ['regime', 'measured', 'envelope', 'ratio', 'flags']
        for row in self.rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
        return columns

    def save(self, prefix: Path) -> None:
        """
        Write ``<prefix>.csv`` (17 significant digits) and ``<prefix>.json``.

        Args:
            prefix: Output path without extension
        """
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        self.to_dataframe().to_csv(prefix.with_suffix('.csv'), index=False, float_format='%.16e')
        with open(prefix.with_suffix('.json'), 'w') as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True, default=_json_default)

    @classmethod
    def load(cls, prefix: Path) -> 'SweepReport':
        prefix = Path(prefix)
        with open(prefix.with_suffix('.json'), 'r') as f:
            summary = json.load(f)
        frame = pd.read_csv(prefix.with_suffix('.csv'))
        frame['flags'] = frame['flags'].fillna('').astype(str)
        base = ['regime', 'measured', 'envelope', 'ratio', 'flags']
        start = list(frame.columns).index('regime')
        report = cls(summary['estimate'], list(frame.columns[:start]), summary.get('metadata'))
        for record in frame.to_dict(orient='records'):
            for key in base[1:4]:
                record[key] = float(record[key])
            report.rows.append(record)
        report.slopes = {k: (v if v is not None else float('nan'))
                         for k, v in summary.get('slopes', {}).items()}
        report.passed = summary.get('pass')
        return report


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")
