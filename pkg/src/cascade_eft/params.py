"""Scalar physics: nondimensionalization, regime classification,
phase-matching geometry, and the closed-form coefficient functions used by
every operator builder.

All momenta, energies and times in this module are dimensionless. The
conversion from a physical waveguide description happens once, in
:func:`nondimensionalize`; everything downstream works with the four
dimensionless numbers (theta, xi, gamma, beta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import erf

from .errors import (
    DegenerateDispersionError,
    DomainError,
    GeometryError,
    RegimeError,
    ResonanceError,
)

# |denominator| below this triggers ResonanceError: separates analytic
# poles from near-resonant but finite values.
RESONANCE_TOL = 1e-9

# Default threshold on xi for calling the coupling dispersive.
XI_MIN_DEFAULT = 5.0


DispersionInput = Union[Callable[[float], float], Sequence[float]]


def _as_dispersion(omega_of_k: DispersionInput) -> Callable[[float], float]:
    if callable(omega_of_k):
        return omega_of_k
    poly = Polynomial(list(omega_of_k))
    return poly


def _derivative(f: Callable[[float], float], k: float, order: int) -> float:
    """Central finite difference; exact for Polynomial inputs via .deriv."""
    if isinstance(f, Polynomial):
        return f.deriv(order)(k)
    h = max(1e-6, abs(k) * 1e-6)
    if order == 1:
        return (f(k + h) - f(k - h)) / (2 * h)
    if order == 2:
        return (f(k + h) - 2 * f(k) + f(k - h)) / h**2
    raise ValueError(f"unsupported derivative order {order}")


@dataclass(frozen=True)
class PhysicalWaveguideSpec:
    """Physical description of a quadratically nonlinear waveguide.

    Parameters
    ----------
    r : float
        Nonlinear coupling strength, rad/s per sqrt(photon/m).
    omega_of_k : callable or sequence
        Dispersion relation omega(k) in rad/s versus rad/m. Either a
        callable or polynomial coefficients in ascending order.
    k0 : float
        Carrier angular wavevector of the fundamental band, rad/m.
    """

    r: float
    omega_of_k: DispersionInput
    k0: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("nonlinear coupling r must be positive")

    def dispersion(self) -> Callable[[float], float]:
        return _as_dispersion(self.omega_of_k)


@dataclass(frozen=True)
class SystemParams:
    """Dimensionless model parameters.

    theta: sign of fundamental-band group-velocity dispersion (+1 or -1).
    xi:    normalized phase mismatch between the harmonic band and a
           co-propagating fundamental pair.
    gamma: normalized group-velocity mismatch.
    beta:  harmonic-band group-velocity dispersion relative to the
           fundamental band.
    """

    theta: int
    xi: float
    gamma: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.theta not in (+1, -1):
            raise ValueError("theta must be +1 or -1")
        for name in ("xi", "gamma", "beta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


class Regime(Enum):
    DISPERSIVE = "Dispersive"
    DISSIPATIVE_ELLIPTICAL = "DissipativeElliptical"
    OTHER = "Other"


@dataclass(frozen=True)
class RegimeGeometry:
    """Classification result plus phase-matching geometry.

    In the dissipative regime the resonance condition traces an ellipse in
    the (p, q) plane of harmonic momentum p and pair relative momentum q;
    p0, a_p, a_q describe it. p_i is the half-width of the low-momentum
    band of interest, chosen so the band stays clear of the ellipse.
    """

    regime: Regime
    p0: float = 0.0
    a_p: float = float("nan")
    a_q: float = float("nan")
    p_i: float = float("nan")

    def q_i(self, p: float) -> float:
        """Band-of-interest half width in q at harmonic momentum p,
        clamped at zero for |p| > 2 p_i."""
        if self.regime is not Regime.DISSIPATIVE_ELLIPTICAL:
            return 0.0
        return max(self.p_i - abs(p) / 2.0, 0.0)


def nondimensionalize(spec: PhysicalWaveguideSpec) -> SystemParams:
    """Reduce a physical waveguide description to (theta, xi, gamma, beta).

    Raises DegenerateDispersionError when the fundamental band has no
    curvature at the carrier, which makes the characteristic scales blow up.
    """
    disp = spec.dispersion()
    k0 = spec.k0
    wpp_fh = _derivative(disp, k0, 2)
    wpp_sh = _derivative(disp, 2 * k0, 2)
    if wpp_fh == 0 or not math.isfinite(wpp_fh):
        raise DegenerateDispersionError(
            f"omega''(k0) = {wpp_fh}; characteristic scales undefined"
        )
    theta = +1 if wpp_fh > 0 else -1

    g_c = (spec.r**4 / (4 * math.pi**2 * abs(wpp_fh))) ** (1.0 / 3.0)
    z_c = (4 * math.pi**2 * abs(wpp_fh) / spec.r) ** (2.0 / 3.0)

    # Residual harmonic-band dispersion around the carrier, relative to a
    # frame co-moving at the fundamental group velocity.
    w_ref = disp(k0)
    v_ref = _derivative(disp, k0, 1)
    dw_sh_0 = disp(2 * k0) - 2 * w_ref
    dw_sh_1 = _derivative(disp, 2 * k0, 1) - v_ref

    xi = -theta * dw_sh_0 / g_c
    gamma = theta * 2 * math.pi * dw_sh_1 / (g_c * z_c)
    beta = wpp_sh / abs(wpp_fh)
    return SystemParams(theta=theta, xi=xi, gamma=gamma, beta=beta)


def characteristic_scales(spec: PhysicalWaveguideSpec) -> tuple[float, float]:
    """(g_c, z_c): characteristic frequency and length of the reduction."""
    disp = spec.dispersion()
    wpp = _derivative(disp, spec.k0, 2)
    if wpp == 0:
        raise DegenerateDispersionError("omega''(k0) = 0")
    g_c = (spec.r**4 / (4 * math.pi**2 * abs(wpp))) ** (1.0 / 3.0)
    z_c = (4 * math.pi**2 * abs(wpp) / spec.r) ** (2.0 / 3.0)
    return g_c, z_c


def q0_squared(params: SystemParams, p: float) -> float:
    """Square of the resonant relative momentum at harmonic momentum p.

    Positive values mean a fundamental pair at (p/2 + q0, p/2 - q0) is
    energy matched with a harmonic photon at p.
    """
    return -params.xi + params.gamma * p + 0.25 * (2 * params.beta - 1) * p**2


def q0_of(params: SystemParams, p: float) -> float:
    q2 = q0_squared(params, p)
    if q2 <= 0:
        raise DomainError(f"no real resonance at p={p}: q0^2={q2}")
    return math.sqrt(q2)


def classify_regime(
    params: SystemParams,
    xi_min: float = XI_MIN_DEFAULT,
    p_i: Optional[float] = None,
) -> RegimeGeometry:
    """Classify the coupling regime and compute the resonance geometry.

    Dispersive: beta < 1/2, xi >= xi_min, and the resonance condition has
    no real solution. DissipativeElliptical: beta < 1/2 and the resonance
    traces an ellipse. Everything else is Other, which callers must treat
    as outside the model's validity.

    p_i selects the intra-band half width in the dissipative regime;
    default is a_q / 5, which keeps the band well inside the ellipse.
    """
    if not params.beta < 0.5:
        return RegimeGeometry(regime=Regime.OTHER)
    half = 0.5 - params.beta
    ellipse = params.xi < params.gamma**2 / (2 * half)
    if ellipse:
        p0 = params.gamma / half
        a_p2 = p0**2 - 2 * params.xi / half
        a_q2 = (0.25 - params.beta / 2.0) * a_p2
        a_p = math.sqrt(a_p2)
        a_q = math.sqrt(a_q2)
        if p_i is None:
            p_i = a_q / 5.0
        if not 0 < p_i < a_q:
            raise GeometryError(
                f"p_i={p_i} must lie in (0, a_q={a_q}); band would touch "
                "the resonance ellipse"
            )
        return RegimeGeometry(
            regime=Regime.DISSIPATIVE_ELLIPTICAL,
            p0=p0, a_p=a_p, a_q=a_q, p_i=p_i,
        )
    if params.xi >= xi_min:
        return RegimeGeometry(regime=Regime.DISPERSIVE)
    return RegimeGeometry(regime=Regime.OTHER)


def _denominator(params: SystemParams, p: float, q: float) -> float:
    return (
        0.25 * (1 - 2 * params.beta) * p**2
        - params.gamma * p
        + params.xi
        + q**2
    )


def eval_f(params: SystemParams, p: float, q: float) -> float:
    """Off-resonant three-wave coupling coefficient f(p, q).

    p is the total (harmonic) momentum, q the relative momentum of the
    fundamental pair. Diverges on the resonance surface; near-resonant
    evaluations raise ResonanceError.
    """
    denom = _denominator(params, p, q)
    if abs(denom) < RESONANCE_TOL:
        raise ResonanceError(
            f"coupling denominator {denom} at (p={p}, q={q}) is resonant"
        )
    return -params.theta / (2.0 * denom)


def eval_h(
    params: SystemParams,
    geometry: RegimeGeometry,
    p: float,
    q: float,
) -> float:
    """Intra-band coupling coefficient h(p, q): as f but with the
    harmonic-band frequency shift delta(p) folded into the denominator.

    Only defined inside the band of interest |p| <= 2 p_i, |q| <= q_i(p).
    """
    if geometry.regime is not Regime.DISSIPATIVE_ELLIPTICAL:
        raise RegimeError("h(p, q) requires the dissipative regime")
    if abs(p) > 2 * geometry.p_i or abs(q) > geometry.q_i(p):
        raise DomainError(
            f"(p={p}, q={q}) outside band |p|<=2p_i={2*geometry.p_i}, "
            f"|q|<=q_i(p)={geometry.q_i(p)}"
        )
    return _h_extended(params, geometry, p, q)


def _h_extended(
    params: SystemParams, geometry: RegimeGeometry, p: float, q: float
) -> float:
    """h(p, q) without the band-domain guard, for builders that formally
    extend intra-band sums over a whole (small) grid."""
    denom = _denominator(params, p, q) - eval_delta(params, geometry, p)
    if abs(denom) < RESONANCE_TOL:
        raise ResonanceError(
            f"shifted denominator {denom} at (p={p}, q={q}) is resonant"
        )
    return -params.theta / (2.0 * denom)


def eval_omega(params: SystemParams, p: float) -> float:
    """Detuning energy omega(p) between a co-moving pair and the harmonic
    photon; positive throughout the dispersive regime."""
    return _denominator(params, p, 0.0)


def energy_sh(params: SystemParams, p: float) -> float:
    """Bare harmonic-photon energy at momentum p."""
    return params.theta * (
        -params.xi + params.gamma * p + 0.5 * params.beta * p**2
    )


def energy_fh_pair(params: SystemParams, p: float, q: float) -> float:
    """Bare energy of a fundamental pair at momenta p/2 +- q."""
    return params.theta * (0.25 * p**2 + q**2)


def eval_meson_dispersion(params: SystemParams, p: float) -> float:
    """Dispersion M(p) of the dressed harmonic excitation (optical
    meson): bare harmonic energy plus the pair-continuum level shift."""
    w = eval_omega(params, p)
    if w <= 0:
        raise DomainError(
            f"omega(p)={w} <= 0 at p={p}: meson dispersion undefined "
            "(outside dispersive validity)"
        )
    return energy_sh(params, p) - (math.pi * params.theta / 2.0) / math.sqrt(w)


def eval_kappa(
    params: SystemParams, geometry: RegimeGeometry, p: float
) -> float:
    """Decay rate of a harmonic photon at momentum p into the resonant
    fundamental pair continuum: kappa(p) = pi / q0(p)."""
    _require_dissipative(geometry)
    q0 = q0_of(params, p)
    if geometry.q_i(p) >= q0:
        raise GeometryError(
            f"q_i(p)={geometry.q_i(p)} >= q0(p)={q0}: band touches resonance"
        )
    return math.pi / q0


def eval_delta(
    params: SystemParams, geometry: RegimeGeometry, p: float
) -> float:
    """Frequency shift of a harmonic photon at momentum p from coupling
    to the off-band pair continuum: -theta arctanh(q_i/q0)/q0."""
    _require_dissipative(geometry)
    qi = geometry.q_i(p)
    if qi == 0.0:
        return 0.0
    q0 = q0_of(params, p)
    if qi >= q0:
        raise GeometryError(
            f"q_i(p)={qi} >= q0(p)={q0}: band touches resonance"
        )
    return -(params.theta / q0) * math.atanh(qi / q0)


def eval_memory_kernel(
    params: SystemParams,
    geometry: RegimeGeometry,
    p: float,
    tau: float,
) -> complex:
    """Reservoir memory kernel at delay tau for harmonic momentum p.

    Closed form of the one-sided Fresnel-type integral over the off-band
    pair continuum, evaluated with the complex error function. Singular
    at tau = 0.
    """
    _require_dissipative(geometry)
    if tau <= 0:
        raise DomainError("memory kernel is singular at tau = 0")
    theta = params.theta
    q0 = q0_of(params, p)
    qi = geometry.q_i(p)
    phase = np.exp(1j * theta * (math.pi / 4.0 - q0**2 * tau))
    z = np.exp(-1j * theta * math.pi / 4.0) * qi * math.sqrt(tau)
    return complex(math.sqrt(math.pi / (4.0 * tau)) * phase * (1.0 - erf(z)))


def _require_dissipative(geometry: RegimeGeometry) -> None:
    if geometry.regime is not Regime.DISSIPATIVE_ELLIPTICAL:
        raise RegimeError(
            f"operation requires the dissipative regime, got "
            f"{geometry.regime.value}"
        )
