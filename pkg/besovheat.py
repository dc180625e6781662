#!/usr/bin/env python3
"""
Littlewood-Paley norms, half-space heat kernels and estimate sweeps.

Usage:
    python besovheat.py lp-check
    python besovheat.py --config runs/ortho.json --out results/ ortho
    python besovheat.py --tolerance-profile strict lemma-b
    python besovheat.py solve --bc neumann --h boundary.bin
"""

import sys

from besov_heat.cli import main

if __name__ == '__main__':
    sys.exit(main())
