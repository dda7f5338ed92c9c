"""Radial solutions of the normalized p-parabolic family via a fictitious dimension."""

__version__ = "0.1.0"

from .params import (  # noqa: E402
    DerivedExponents,
    EquationParams,
    Regime,
    derive,
    range_condition,
    regime,
)

__all__ = [
    "DerivedExponents",
    "EquationParams",
    "Regime",
    "derive",
    "range_condition",
    "regime",
    "__version__",
]
