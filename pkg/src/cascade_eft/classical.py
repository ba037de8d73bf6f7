"""Classical mean-field solvers: coupled-wave and cubic-limit split-step
propagation on a periodic grid, plus the dispersive spreading of an
induced spatial potential.

The grids are periodic with the same window length as the quantum
quantization box, so spectra line up mode-for-mode with ModeGrid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .params import SystemParams


@dataclass
class ClassicalField:
    """Complex field samples on a periodic grid of extent L."""

    L: float
    samples: np.ndarray
    band: str = "FH"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        n = len(self.samples)
        if n & (n - 1):
            raise ValueError("grid size must be a power of two")

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def dy(self) -> float:
        return self.L / self.n

    def y_grid(self) -> np.ndarray:
        return np.arange(self.n) * self.dy

    def wavenumbers(self) -> np.ndarray:
        """Signed mode momenta p (cycles per window times 1/L)."""
        return np.fft.fftfreq(self.n, d=self.dy)

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.dy)


def _linear_phases(params: SystemParams, field: ClassicalField, dt: float,
                   band: str) -> np.ndarray:
    s = field.wavenumbers()
    if band == "FH":
        energy = params.theta * 0.5 * s**2
    else:
        energy = params.theta * (-params.xi + params.gamma * s
                                 + 0.5 * params.beta * s**2)
    return np.exp(-1j * energy * dt)


def split_step_coupled_wave(
    phi0: ClassicalField,
    psi0: ClassicalField,
    params: SystemParams,
    t_final: float,
    dt: float,
    n_snapshots: int = 2,
) -> tuple[list[ClassicalField], list[ClassicalField], np.ndarray]:
    """Strang-split integration of the classical two-band coupled-wave
    equations.

    Linear substeps are exact in transform space (including the stiff
    detuning phase of the harmonic band); the conversion substep uses an
    explicit midpoint rule. dt must resolve the detuning phase.
    """
    if dt * abs(params.xi) >= 0.1:
        raise DomainError(
            f"dt {dt} too coarse for detuning {params.xi}: "
            "require dt |xi| < 0.1"
        )
    if phi0.n != psi0.n or phi0.L != psi0.L:
        raise ValueError("field grids differ")
    n_steps = int(round(t_final / dt))
    snap_every = max(1, n_steps // max(n_snapshots - 1, 1))
    half_fh = _linear_phases(params, phi0, dt / 2.0, "FH")
    half_sh = _linear_phases(params, psi0, dt / 2.0, "SH")
    phi = phi0.samples.copy()
    psi = psi0.samples.copy()
    phis, psis, times = [], [], []

    def record(t):
        phis.append(ClassicalField(L=phi0.L, samples=phi.copy(), band="FH"))
        psis.append(ClassicalField(L=psi0.L, samples=psi.copy(), band="SH"))
        times.append(t)

    record(0.0)
    for step in range(n_steps):
        phi = np.fft.ifft(half_fh * np.fft.fft(phi))
        psi = np.fft.ifft(half_sh * np.fft.fft(psi))
        # conversion substep: d phi/dt = -i psi phi*, d psi/dt = -i phi^2/2
        dphi = -1j * psi * np.conj(phi)
        dpsi = -0.5j * phi * phi
        phi_m = phi + 0.5 * dt * dphi
        psi_m = psi + 0.5 * dt * dpsi
        phi, psi = (phi + dt * (-1j * psi_m * np.conj(phi_m)),
                    psi + dt * (-0.5j * phi_m * phi_m))
        phi = np.fft.ifft(half_fh * np.fft.fft(phi))
        psi = np.fft.ifft(half_sh * np.fft.fft(psi))
        if (step + 1) % snap_every == 0 or step == n_steps - 1:
            record((step + 1) * dt)
    return phis, psis, np.asarray(times)


def split_step_nlse(
    phi0: ClassicalField,
    params: SystemParams,
    t_final: float,
    dt: float,
    n_snapshots: int = 2,
) -> tuple[list[ClassicalField], np.ndarray]:
    """Cubic-limit propagation of the fundamental field alone.

    The self-phase substep is an exact phase rotation because |phi| is
    invariant under it.
    """
    if dt * abs(params.xi) >= 0.1:
        raise DomainError("dt too coarse: require dt |xi| < 0.1")
    n_steps = int(round(t_final / dt))
    snap_every = max(1, n_steps // max(n_snapshots - 1, 1))
    half = _linear_phases(params, phi0, dt / 2.0, "FH")
    g = params.theta / (2.0 * params.xi)
    phi = phi0.samples.copy()
    out, times = [], []

    def record(t):
        out.append(ClassicalField(L=phi0.L, samples=phi.copy(), band="FH"))
        times.append(t)

    record(0.0)
    for step in range(n_steps):
        phi = np.fft.ifft(half * np.fft.fft(phi))
        phi = phi * np.exp(-1j * g * np.abs(phi) ** 2 * dt)
        phi = np.fft.ifft(half * np.fft.fft(phi))
        if (step + 1) % snap_every == 0 or step == n_steps - 1:
            record((step + 1) * dt)
    return out, np.asarray(times)


def classical_charge(phi: ClassicalField, psi: ClassicalField) -> float:
    """Conserved intensity integral |phi|^2 + 2 |psi|^2."""
    return float((np.sum(np.abs(phi.samples) ** 2)
                  + 2.0 * np.sum(np.abs(psi.samples) ** 2)) * phi.dy)


def classical_energy(phi: ClassicalField, psi: ClassicalField,
                     params: SystemParams) -> float:
    """Energy functional of the coupled-wave flow, evaluated spectrally
    for the linear part."""
    n = phi.n
    s = phi.wavenumbers()
    phi_s = np.fft.fft(phi.samples) / n
    psi_s = np.fft.fft(psi.samples) / n
    e_fh = params.theta * 0.5 * s**2
    e_sh = params.theta * (-params.xi + params.gamma * s
                           + 0.5 * params.beta * s**2)
    lin = np.sum(e_fh * np.abs(phi_s) ** 2) * phi.L \
        + np.sum(e_sh * np.abs(psi_s) ** 2) * phi.L
    nl = 0.5 * np.sum(np.conj(psi.samples) * phi.samples**2
                      + psi.samples * np.conj(phi.samples) ** 2) * phi.dy
    return float(np.real(lin + nl))


@dataclass
class PotentialSpec:
    """Harmonic-band amplitude profile that induces a potential on the
    fundamental band.

    v_of_y holds complex samples on a periodic grid of extent L. The
    induced potential is -|v|^2 / xi.
    """

    L: float
    v_of_y: np.ndarray
    beta: float
    xi: float

    def __post_init__(self):
        self.v_of_y = np.asarray(self.v_of_y, dtype=complex)
        if not np.all(np.isfinite(self.v_of_y)):
            raise ValueError("potential profile must be finite")

    def potential(self) -> np.ndarray:
        return -np.abs(self.v_of_y) ** 2 / self.xi


def heat_kernel_potential(potential: PotentialSpec, t: float) -> np.ndarray:
    """Potential profile after the harmonic band disperses for time t.

    Gaussian convolution with complex variance, carried out spectrally on
    the periodic grid; equivalent to free-particle dispersion of the
    initial profile. At t = 0 the kernel is the identity.
    """
    v = potential.potential()
    if t == 0:
        return v.copy()
    if potential.beta == 0:
        raise DomainError("dispersive spreading requires beta != 0")
    t_prime = 1j * 8.0 * math.pi**2 * t / potential.beta
    n = len(v)
    dy = potential.L / n
    k = 2.0 * math.pi * np.fft.fftfreq(n, d=dy)
    return np.fft.ifft(np.fft.fft(v) * np.exp(-k**2 * t_prime))


def gaussian_spread_oracle(
    amplitude: float, sigma: float, y: np.ndarray, t_prime: complex
) -> np.ndarray:
    """Closed-form dispersion of a Gaussian profile under the same
    kernel, for cross-checks: variance sigma^2 -> sigma^2 + 2 t'."""
    var = sigma**2 + 2.0 * t_prime
    return amplitude * sigma / np.sqrt(var) * np.exp(-(y**2) / (2.0 * var))
