"""
CR Calculus Module

Exact symbolic calculus on the Heisenberg model of a CR manifold:
- Pseudohermitian structures and their Tanaka-Webster data
- Tractor bundle, tractor connection and the D operator
- Invariant powers of the sublaplacian built from tractor D
- Ambient metric and obstruction computations

Main entry points: PHStructure, build_invariant_operator, DefiningFunction
"""

from .ambient import DefiningFunction
from .invariant_ops import build_invariant_operator
from .structures import PHStructure

__version__ = "1.0.0"
__all__ = ["DefiningFunction", "PHStructure", "build_invariant_operator"]
