"""Numerical laboratory for the extension operator of the saddle ``tau = xi_1 xi_2``.

Modules:

- :mod:`hyperext.dyadic`: dyadic intervals, tiles, cell sets, Whitney pairs.
- :mod:`hyperext.decomposition`: fibre slicing and near-tile covers.
- :mod:`hyperext.extension`: field evaluation, norms, rescaling, tails.
- :mod:`hyperext.harness`: experiment suites.
- :mod:`hyperext.search`: annealing over tile unions.
- :mod:`hyperext.cli`: batch interface.
"""
__version__ = "0.1.0"

from . import _backend  # noqa: E402
from .dyadic import CellSet, DomainError, ExponentPair, Tile  # noqa: E402
from .extension import Density, NumericGuardError, SpacetimeGrid, extend, ratio  # noqa: E402

BACKEND = _backend.NAME

__all__ = [
    "BACKEND",
    "CellSet",
    "Density",
    "DomainError",
    "ExponentPair",
    "NumericGuardError",
    "SpacetimeGrid",
    "Tile",
    "extend",
    "ratio",
]
