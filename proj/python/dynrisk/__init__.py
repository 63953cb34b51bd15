"""Dynamic convex risk measures on finite scenario trees."""

from ._dynrisk import (
    InputError,
    Model,
    Tree,
    ValidationError,
    bsde_lattice_risk,
    entropic_lattice_risk,
    format_number,
)

__all__ = [
    "InputError",
    "Model",
    "Tree",
    "ValidationError",
    "bsde_lattice_risk",
    "entropic_lattice_risk",
    "format_number",
]
