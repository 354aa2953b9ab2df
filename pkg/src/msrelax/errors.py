"""Exception hierarchy for msrelax.

Every hard failure mode has its own class so callers (and the CLI exit-code
logic) can react precisely.  Monitors never raise; they return reports.
"""


class MsrelaxError(Exception):
    """Base class for all package errors."""


# -- geometry ---------------------------------------------------------------

class NonPositiveRadius(MsrelaxError):
    """rho(phi) <= 0 somewhere: the curve left the polar-graph class."""


class Unresolved(MsrelaxError):
    """Top Fourier mode carries too much amplitude; N is too small."""


class OptimFail(MsrelaxError):
    """Annulus-center search diverged."""


# -- sobolev ----------------------------------------------------------------

class NonZeroMean(MsrelaxError):
    """Negative-order norm requested for a signal with nonzero mean."""


# -- elliptic ---------------------------------------------------------------

class NearPole(MsrelaxError):
    """Evaluation point too close to a lattice point."""


class OutOfRadius(MsrelaxError):
    """Point outside the convergence disk of the small-|z| series."""


# -- potential --------------------------------------------------------------

class SolverSingular(MsrelaxError):
    """Bordered collocation system numerically singular."""


class NegativeDissipation(MsrelaxError):
    """D < 0 beyond tolerance: sign/convention bug, not physics."""


class GridTooCoarse(UserWarning):
    """H rasterization warning: interface band under-resolved."""


# -- evolution --------------------------------------------------------------

class StepRejected(MsrelaxError):
    """A stage produced rho <= 0 or excessive pre-projection area drift."""


class RecenterFail(MsrelaxError):
    """A ray from the new pole misses the curve (not star-shaped there)."""


# -- analysis ---------------------------------------------------------------

class HypothesisFail(MsrelaxError):
    """A theorem hypothesis (smallness condition) is violated by the input."""


class EnergyBalanceFail(MsrelaxError):
    """dE/dt = -D violated beyond tolerance."""


class MonotoneViolation(MsrelaxError):
    """E^2 D (or E) increased beyond slack along a trajectory."""


class NoAlgebraicWindow(MsrelaxError):
    """Regime fit: no window with d log E / d log t near -1."""


class NoExponentialWindow(MsrelaxError):
    """Regime fit: no late window with log-linear E decay."""
