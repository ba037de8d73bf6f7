"""Measured quantities: mode populations, spatial two-photon
correlation, band-restricted population and its loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .basis import FockBasis
from .errors import DomainError
from .operators import annihilation_operator, number_operator
from .sw import QuantumState


@dataclass(frozen=True)
class SpatialGrid:
    """Sample points for spatial-domain observables.

    Convention: the spatial annihilation operator at y is
    (1/sqrt(L)) sum_p exp(2 pi i p y / L) a_p over fundamental modes.
    """

    L: float
    y_points: tuple[float, ...]

    def __post_init__(self):
        if any(abs(y) > self.L for y in self.y_points):
            raise ValueError("sample points must lie within one window "
                             "length")

    @classmethod
    def uniform(cls, L: float, n: int) -> "SpatialGrid":
        return cls(L=L, y_points=tuple(np.linspace(0.0, L, n,
                                                   endpoint=False)))


def momentum_distribution(state: QuantumState) -> dict[int, float]:
    """Mode-count populations <a_p^dag a_p> per fundamental index."""
    basis = state.basis
    out = {}
    for p in basis.grid.fh_indices:
        op = number_operator(basis, "fh", p)
        out[p] = float(state.expectation(op).real)
    return out


def sh_distribution(state: QuantumState) -> dict[int, float]:
    basis = state.basis
    return {p: float(state.expectation(
        number_operator(basis, "sh", p)).real)
        for p in basis.grid.sh_indices}


def _spatial_annihilator(basis: FockBasis, y: float) -> sp.csr_matrix:
    grid = basis.grid
    scale = 1.0 / math.sqrt(grid.L)
    mat = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for p in grid.fh_indices:
        phase = np.exp(2j * math.pi * p * y / grid.L)
        mat = mat + scale * phase * annihilation_operator(
            basis, "fh", p).matrix
    return mat.tocsr()


def spatial_density(state: QuantumState, y: float) -> float:
    phi = _spatial_annihilator(state.basis, y)
    if state.is_pure:
        v = phi.dot(state.payload)
        return float(np.real(np.vdot(v, v)))
    return float(np.real(np.trace(
        phi.conj().T.toarray() @ phi.toarray() @ state.payload)))


def g2_spatial(state: QuantumState, y_grid: SpatialGrid) -> np.ndarray:
    """Normalized spatial two-photon correlation g2(y) against y = 0.

    Numerator contractions are evaluated by applying the two spatial
    annihilators to the state; the denominator is the squared density at
    the origin.
    """
    rho0 = spatial_density(state, 0.0)
    if rho0 <= 0:
        raise DomainError("vanishing density at y = 0: g2 undefined")
    phi0 = _spatial_annihilator(state.basis, 0.0)
    out = np.zeros(len(y_grid.y_points))
    for i, y in enumerate(y_grid.y_points):
        phiy = _spatial_annihilator(state.basis, y)
        pair = phi0.dot(phiy)
        if state.is_pure:
            v = pair.dot(state.payload)
            num = float(np.real(np.vdot(v, v)))
        else:
            num = float(np.real(np.trace(
                pair.conj().T.toarray() @ pair.toarray() @ state.payload)))
        out[i] = num / rho0**2
    return out


def intraband_population(state: QuantumState, p_i: float) -> float:
    """Total fundamental population at physical momenta |p / L| < p_i."""
    basis = state.basis
    grid = basis.grid
    if p_i > (max(grid.fh_indices) / grid.L) + 1.0 / grid.L:
        raise DomainError("band edge beyond the momentum grid")
    total = 0.0
    for p in grid.fh_indices:
        if abs(p / grid.L) < p_i:
            total += float(state.expectation(
                number_operator(basis, "fh", p)).real)
    return total


def population_loss(series: Sequence[float]) -> np.ndarray:
    """Normalized loss (N(0) - N(t)) / N(0) of a population series."""
    series = np.asarray(series, dtype=float)
    if series[0] == 0:
        raise DomainError("initial population vanishes; loss undefined")
    return (series[0] - series) / series[0]
