"""Truncated occupation-number basis over a discrete momentum grid.

Truncation is by the conserved charge Q = N_FH + 2 N_SH (one harmonic
photon converts to a fundamental pair, so Q commutes with the full
Hamiltonian and the truncation is exact under the dynamics). An optional
total-momentum sector restriction exploits momentum conservation.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from .errors import BasisSizeError

DIM_CAP_DEFAULT = 2_000_000


@dataclass(frozen=True)
class ModeGrid:
    """Discrete momentum modes in a periodic window of length L.

    Mode with integer index p carries physical (dimensionless) momentum
    p / L. Index ranges are symmetric about zero. The harmonic range
    should cover twice the fundamental range so every fundamental pair
    has a momentum-conserving harmonic partner.
    """

    L: float
    fh_indices: tuple[int, ...]
    sh_indices: tuple[int, ...]

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("window length L must be positive")
        for name, idx in (("fh", self.fh_indices), ("sh", self.sh_indices)):
            if idx and (min(idx) != -max(idx) or len(set(idx)) != len(idx)):
                raise ValueError(f"{name} index range must be symmetric "
                                 "about 0 without duplicates")

    @classmethod
    def symmetric(cls, L: float, fh_extent: int,
                  sh_extent: Optional[int] = None) -> "ModeGrid":
        """Grid with fh indices -fh_extent..fh_extent; sh covers twice
        the fh extent unless overridden."""
        if sh_extent is None:
            sh_extent = 2 * fh_extent
        return cls(
            L=L,
            fh_indices=tuple(range(-fh_extent, fh_extent + 1)),
            sh_indices=tuple(range(-sh_extent, sh_extent + 1)),
        )

    @classmethod
    def fh_only(cls, L: float, fh_extent: int) -> "ModeGrid":
        return cls(L=L, fh_indices=tuple(range(-fh_extent, fh_extent + 1)),
                   sh_indices=())

    @property
    def n_fh(self) -> int:
        return len(self.fh_indices)

    @property
    def n_sh(self) -> int:
        return len(self.sh_indices)

    @property
    def n_modes(self) -> int:
        return self.n_fh + self.n_sh

    def momentum(self, index: int) -> float:
        return index / self.L


def _momentum_multisets(indices: Sequence[int], n: int,
                        target: Optional[int]) -> Iterator[tuple[int, ...]]:
    """Nondecreasing n-tuples of mode indices, optionally with fixed sum.

    With a target, the last member is solved from the momentum balance
    instead of enumerated, which keeps two-photon sectors linear in the
    grid size.
    """
    if n == 0:
        if target is None or target == 0:
            yield ()
        return
    if target is None:
        yield from itertools.combinations_with_replacement(indices, n)
        return
    index_set = set(indices)
    for head in itertools.combinations_with_replacement(indices, n - 1):
        last = target - sum(head)
        if last in index_set and (not head or last >= head[-1]):
            yield head + (last,)


@dataclass(frozen=True)
class FockBasis:
    """Ordered occupation-number basis on a ModeGrid.

    States are tuples of occupations, fundamental modes first (ascending
    index) then harmonic modes. Ordering is lexicographic, so the layout
    is reproducible across runs and serializations.
    """

    grid: ModeGrid
    q_max: int
    momentum_sector: Optional[int]
    states: tuple[tuple[int, ...], ...]
    index: dict = field(repr=False, hash=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def basis_id(self) -> str:
        payload = json.dumps(
            [self.grid.L, self.grid.fh_indices, self.grid.sh_indices,
             self.q_max, self.momentum_sector, self.dim],
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def ordinal(self, state: tuple[int, ...]) -> int:
        return self.index[state]

    def state(self, ordinal: int) -> tuple[int, ...]:
        return self.states[ordinal]

    def mode_position(self, band: str, index: int) -> int:
        """Column of mode `index` of band 'fh'/'sh' in the occupation
        tuples."""
        if band == "fh":
            return self.grid.fh_indices.index(index)
        if band == "sh":
            return self.grid.n_fh + self.grid.sh_indices.index(index)
        raise ValueError(f"unknown band {band!r}")

    def describe(self) -> dict:
        """JSON-ready provenance descriptor."""
        return {
            "L": self.grid.L,
            "fh_indices": list(self.grid.fh_indices),
            "sh_indices": list(self.grid.sh_indices),
            "q_max": self.q_max,
            "momentum_sector": self.momentum_sector,
            "dimension": self.dim,
            "basis_id": self.basis_id,
        }


def enumerate_basis(
    grid: ModeGrid,
    q_max: int,
    momentum_sector: Optional[int] = None,
    dim_cap: int = DIM_CAP_DEFAULT,
) -> FockBasis:
    """Enumerate all occupation vectors with charge N_FH + 2 N_SH <= q_max,
    optionally restricted to one total-momentum sector.

    Ordering is lexicographic on the occupation vectors. The vacuum is
    included whenever the sector is 0 or unrestricted.
    """
    if q_max < 0:
        raise ValueError("q_max must be nonnegative")
    n_fh, n_sh = grid.n_fh, grid.n_sh
    if momentum_sector is None:
        estimate = _dimension_estimate(n_fh, n_sh, q_max)
        if estimate > dim_cap:
            raise BasisSizeError(estimate, dim_cap)
    fh_pos = {p: i for i, p in enumerate(grid.fh_indices)}
    sh_pos = {p: n_fh + i for i, p in enumerate(grid.sh_indices)}

    states: list[tuple[int, ...]] = []
    for q_tot in range(q_max + 1):
        for n_b in range(q_tot // 2 + 1):
            n_a = q_tot - 2 * n_b
            for sh_modes in _momentum_multisets(grid.sh_indices, n_b, None):
                p_sh = sum(sh_modes)
                target = (None if momentum_sector is None
                          else momentum_sector - p_sh)
                for fh_modes in _momentum_multisets(
                        grid.fh_indices, n_a, target):
                    occ = [0] * (n_fh + n_sh)
                    for p in fh_modes:
                        occ[fh_pos[p]] += 1
                    for p in sh_modes:
                        occ[sh_pos[p]] += 1
                    states.append(tuple(occ))
                    if len(states) > dim_cap:
                        raise BasisSizeError(len(states), dim_cap)
    states.sort()
    index = {s: i for i, s in enumerate(states)}
    if len(index) != len(states):
        raise RuntimeError("duplicate states in enumeration")
    return FockBasis(grid=grid, q_max=q_max, momentum_sector=momentum_sector,
                     states=tuple(states), index=index)


def _dimension_estimate(n_fh: int, n_sh: int, q_max: int) -> int:
    """Exact dimension of the charge-truncated basis without a momentum
    restriction (multiset counting)."""
    import math as _math

    total = 0
    for q_tot in range(q_max + 1):
        for n_b in range(q_tot // 2 + 1):
            n_a = q_tot - 2 * n_b
            if (n_a > 0 and n_fh == 0) or (n_b > 0 and n_sh == 0):
                continue
            fh_count = _math.comb(n_fh + n_a - 1, n_a) if n_a else 1
            sh_count = _math.comb(n_sh + n_b - 1, n_b) if n_b else 1
            total += fh_count * sh_count
    return total


def conserved_charges(basis: FockBasis, ordinal: int) -> tuple[int, int]:
    """(Q, P_total) of a basis state: charge N_FH + 2 N_SH and total
    momentum in integer index units."""
    occ = basis.states[ordinal]
    grid = basis.grid
    q = 0
    p_tot = 0
    for i, p in enumerate(grid.fh_indices):
        q += occ[i]
        p_tot += p * occ[i]
    for j, p in enumerate(grid.sh_indices):
        n = occ[grid.n_fh + j]
        q += 2 * n
        p_tot += p * n
    return q, p_tot
