"""L-infinity variational calculus for Hamiltonians H(x, p) on 2-D lattices.

Modules
-------
hamiltonian  Hamiltonian families, Legendre duals, coercivity profiles and
             assumption checkers.
geometry     Masked lattices, stencils and intrinsic distances d_lambda.
action       Action functions by lattice dynamic programming and fronts.
flow         Lax-Oleinik flows T^t / T_t, slope estimates and energies.
verify       Pass/fail checks of the absolute-minimizer criteria.
solver       Midpoint fixed-point Dirichlet solver and sigma-patching.
cli          Scene-driven command line front end.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout
    __version__ = "0.1.0"

from .errors import AbsminError  # noqa: E402

__all__ = ["AbsminError", "__version__"]
