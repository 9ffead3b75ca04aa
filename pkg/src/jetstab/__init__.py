"""Numerical laboratory for the capillary water-jet free-boundary problem.

Submodules
----------
spectral    Fourier grids, multipliers, Littlewood-Paley blocks, Sobolev norms.
bessel      Modified Bessel functions I0, I1 and their ratio.
linear      Rayleigh-Plateau dispersion, spectral projections, complex coordinate.
dno         Dirichlet-Neumann operator on a perturbed cylinder.
dynamics    Nonlinear evolution, Lawson integrator, growth-rate harness.
paradiff    Paradifferential quantization, paraproducts and the jet symbols.
propagator  Linear paradifferential propagator along a background trajectory.
manifold    Lyapunov-Perron solvers for stable/unstable manifolds and the center set.
cli         Batch command line front end.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    ConvergenceError,
    DomainError,
    JetError,
    NumericError,
    SizeError,
)
