"""Z2 lattice gauge theory on finite boxes of Z^m.

The package implements the gauge measure together with its graphical
representations (random currents, high-temperature expansion, random cluster
model), exact desk-scale oracles that verify the identities coupling them,
Monte Carlo samplers, and Wilson loop estimators.
"""

from mpmath import mp

# All exact verifiers compare transcendental quantities at 1e-10 tolerance;
# 150 bits keeps rounding error orders of magnitude below that.
mp.prec = 150

__version__ = "0.1.0"

from .cells import CellComplex, build_complex, edge_coboundary, plaquette_boundary
from .errors import SizeRefusal
from .forms import (
    CouplingParams,
    Current,
    GaugeField,
    Loop,
    TwoFormZ2,
)

__all__ = [
    "CellComplex",
    "CouplingParams",
    "Current",
    "GaugeField",
    "Loop",
    "SizeRefusal",
    "TwoFormZ2",
    "build_complex",
    "edge_coboundary",
    "plaquette_boundary",
    "__version__",
]
