"""Desk-scale simulator for broadband cascaded quadratic nonlinearities
and their effective-field-theory reductions."""

from .basis import FockBasis, ModeGrid, conserved_charges, enumerate_basis
from .params import (
    PhysicalWaveguideSpec,
    Regime,
    RegimeGeometry,
    SystemParams,
    classify_regime,
    eval_delta,
    eval_f,
    eval_h,
    eval_kappa,
    eval_memory_kernel,
    eval_meson_dispersion,
    eval_omega,
    nondimensionalize,
)

__version__ = "0.1.0"

__all__ = [
    "FockBasis",
    "ModeGrid",
    "PhysicalWaveguideSpec",
    "Regime",
    "RegimeGeometry",
    "SystemParams",
    "classify_regime",
    "conserved_charges",
    "enumerate_basis",
    "eval_delta",
    "eval_f",
    "eval_h",
    "eval_kappa",
    "eval_memory_kernel",
    "eval_meson_dispersion",
    "eval_omega",
    "nondimensionalize",
    "__version__",
]
