"""Multiscale thermo-mechanical simulation of heterogeneous shells.

Off-line stage: unit-cell corrector problems and homogenized coefficients,
tabulated over a macroscopic parameter grid.  On-line stage: homogenized
time integration plus first-/second-order field reconstruction, validated
against a direct fine-mesh solver.
"""

__version__ = "0.1.0"
