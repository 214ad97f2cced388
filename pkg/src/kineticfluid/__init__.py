"""Spectral simulator and verification harness for a kinetic-fluid two-phase model.

Subpackages:
  hermite     velocity-space algebra (ladder operators, projections, quadrature oracle)
  modes       per-frequency linear dynamics and Lyapunov functionals
  wholespace  whole-space decay harness (xi-grid quadrature, decay fits)
  torus       periodic-domain linear harness (conservation, spectral gap)
  solver      nonlinear pseudo-spectral solver with energy diagnostics
  reports     CSV/SVG emission and verdict tables
  cli         campaign command line
"""

__version__ = "0.1.0"
