"""Independent brute-force oracles used across the test suite.

Everything here is deliberately literal and unoptimized: operators are
assembled from dense per-mode ladder matrices in a full tensor-product
space and only then projected onto the truncated basis, so agreement
with the sparse builders is a genuine cross-check of two constructions.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from cascade_eft.basis import FockBasis


def dense_mode_ops(n_levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Single-mode annihilation/creation matrices with n_levels levels."""
    a = np.zeros((n_levels, n_levels), dtype=complex)
    for n in range(1, n_levels):
        a[n - 1, n] = math.sqrt(n)
    return a, a.conj().T


class DenseSecondQuantization:
    """Literal tensor-product construction of many-mode operators.

    Modes are ordered as in FockBasis (fundamental ascending, then
    harmonic ascending). Per-mode level counts follow the charge cap: a
    fundamental mode can hold up to q_max photons, a harmonic mode up to
    q_max // 2.
    """

    def __init__(self, basis: FockBasis):
        self.basis = basis
        grid = basis.grid
        self.n_fh = grid.n_fh
        levels = [basis.q_max + 1] * grid.n_fh
        levels += [basis.q_max // 2 + 1] * grid.n_sh
        self.levels = levels
        self.full_dim = int(np.prod(levels))
        if self.full_dim > 200_000:
            raise ValueError("oracle space too large; shrink the test basis")
        # isometry from the truncated basis into the tensor-product space
        strides = np.ones(len(levels), dtype=int)
        for i in range(len(levels) - 2, -1, -1):
            strides[i] = strides[i + 1] * levels[i + 1]
        self._strides = strides
        cols = []
        for state in basis.states:
            cols.append(int(np.dot(strides, state)))
        proj = np.zeros((self.full_dim, basis.dim), dtype=complex)
        for j, c in enumerate(cols):
            proj[c, j] = 1.0
        self.isometry = proj

    def mode_a(self, position: int) -> np.ndarray:
        """Annihilation operator of one mode in the full space."""
        mats = []
        for i, nl in enumerate(self.levels):
            if i == position:
                a, _ = dense_mode_ops(nl)
                mats.append(a)
            else:
                mats.append(np.eye(nl, dtype=complex))
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    def build(self, terms) -> np.ndarray:
        """terms: iterable of (coeff, create_positions, destroy_positions).

        Returns the operator projected onto the truncated basis.
        """
        full = np.zeros((self.full_dim, self.full_dim), dtype=complex)
        cache: dict[int, np.ndarray] = {}

        def a_of(pos):
            if pos not in cache:
                cache[pos] = self.mode_a(pos)
            return cache[pos]

        for coeff, create, destroy in terms:
            op = np.eye(self.full_dim, dtype=complex)
            for pos in destroy:
                op = a_of(pos) @ op
            for pos in reversed(create):
                op = a_of(pos).conj().T @ op
            full += coeff * op
        return self.isometry.conj().T @ full @ self.isometry


def brute_force_states(grid, q_max, momentum_sector=None):
    """Enumerate charge-capped occupation vectors by direct product scan.

    Exponential in mode count; only usable on tiny grids, which is the
    point: it shares no logic with the production enumerator.
    """
    indices = list(grid.fh_indices) + list(grid.sh_indices)
    charges = [1] * grid.n_fh + [2] * grid.n_sh
    ranges = []
    for ch in charges:
        ranges.append(range(q_max // ch + 1))
    out = []
    for occ in itertools.product(*ranges):
        q = sum(n * c for n, c in zip(occ, charges))
        if q > q_max:
            continue
        p = sum(n * idx for n, idx in zip(occ, indices))
        if momentum_sector is not None and p != momentum_sector:
            continue
        out.append(tuple(occ))
    return sorted(out)


def fit_loglog_slope(xs, ys) -> float:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.any(ys <= 0):
        raise ValueError("log-log fit requires positive data")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def memory_kernel_quadrature(theta, q0, qi, tau, q_cut=None) -> complex:
    """Adaptive quadrature of the one-sided oscillatory reservoir
    integral, with an integration-by-parts asymptotic tail beyond q_cut."""
    from scipy.integrate import quad

    a = theta * tau
    if q_cut is None:
        # keep the finite part to ~200 oscillations; the tail series then
        # converges to ~1e-9 absolute with three terms
        q_cut = max(qi + 2.0, math.sqrt(1200.0 / abs(a)))

    def integrand_re(q):
        return math.cos(a * (q * q - q0 * q0))

    def integrand_im(q):
        return math.sin(a * (q * q - q0 * q0))

    re, _ = quad(integrand_re, qi, q_cut, limit=2000, epsabs=1e-13,
                 epsrel=1e-13)
    im, _ = quad(integrand_im, qi, q_cut, limit=2000, epsabs=1e-13,
                 epsrel=1e-13)
    body = re + 1j * im

    # tail of exp(i a q^2) from q_cut to infinity via integration by parts
    phase = np.exp(1j * a * (q_cut**2 - q0**2))
    ia2 = 1.0 / (2j * a)
    tail = -phase * (ia2 / q_cut + ia2**2 / q_cut**3
                     + 3.0 * ia2**3 / q_cut**5)
    return body + tail
