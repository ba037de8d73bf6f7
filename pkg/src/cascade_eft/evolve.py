"""Time propagation: unitary evolution, master-equation integration with
optional trajectory unraveling, and chirped phase-mismatch schedules.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .errors import NumericalAbort
from .operators import LindbladSet, SparseOperator, Superoperator
from .params import Regime, SystemParams, classify_regime
from .sw import Frame, QuantumState

_DENSE_EIG_DIM = 2000
RTOL_DEFAULT = 1e-9
ATOL_DEFAULT = 1e-12


@dataclass(frozen=True)
class ChirpSchedule:
    """Phase-mismatch ramp xi(t): ramp over duration T, then hold.

    Linear or smoothstep profile. Preparation ramps go from large to
    small |xi|; the reverse direction is allowed but flagged.
    """

    xi_initial: float
    xi_final: float
    ramp_duration: float
    profile: str = "linear"
    hold_duration: float = 0.0

    def __post_init__(self):
        if not self.ramp_duration > 0:
            raise ValueError("ramp duration must be positive")
        if self.profile not in ("linear", "smoothstep"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if abs(self.xi_initial) < abs(self.xi_final):
            warnings.warn("ramp increases |xi|; not a preparation ramp",
                          stacklevel=2)

    def xi_at(self, t: float) -> float:
        if t <= 0:
            return self.xi_initial
        if t >= self.ramp_duration:
            return self.xi_final
        s = t / self.ramp_duration
        if self.profile == "smoothstep":
            s = s * s * (3.0 - 2.0 * s)
        return self.xi_initial + (self.xi_final - self.xi_initial) * s

    @property
    def total_duration(self) -> float:
        return self.ramp_duration + self.hold_duration


@dataclass
class PropagationResult:
    """Snapshots along a propagation plus drift diagnostics."""

    times: np.ndarray
    states: list
    diagnostics: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    expect_sem: dict = field(default_factory=dict)

    def final_state(self):
        return self.states[-1]


def _snapshot_times(t_final: float, n_snapshots: int) -> np.ndarray:
    if n_snapshots < 2:
        return np.array([0.0, t_final])
    return np.linspace(0.0, t_final, n_snapshots)


def unitary_propagate(
    state: QuantumState,
    H: SparseOperator,
    t_final: float,
    n_snapshots: int = 21,
) -> PropagationResult:
    """Schroedinger propagation of a pure state under a static
    Hamiltonian.

    Full eigendecomposition below the dense threshold; Krylov stepping
    above. Norm drift beyond 1e-6 aborts.
    """
    if not state.is_pure:
        raise ValueError("unitary propagation expects a pure state")
    if state.basis_id != H.basis_id:
        raise ValueError("state and Hamiltonian bases differ")
    if not H.is_hermitian(1e-10):
        raise ValueError("Hamiltonian is not Hermitian")
    times = _snapshot_times(t_final, n_snapshots)
    psi0 = state.payload
    snaps: list[QuantumState] = []
    if H.dim <= _DENSE_EIG_DIM:
        evals, evecs = np.linalg.eigh(H.to_dense())
        coeff = evecs.conj().T @ psi0
        for t in times:
            psi = evecs @ (np.exp(-1j * evals * t) * coeff)
            snaps.append(QuantumState(basis=state.basis, frame=state.frame,
                                      payload=psi / np.linalg.norm(psi)))
        method = "eigendecomposition"
        norms = [np.linalg.norm(evecs @ (np.exp(-1j * evals * t)
                                         * coeff)) for t in times]
    else:
        a = (-1j * H.matrix).tocsc()
        psis = spla.expm_multiply(a, psi0, start=0.0, stop=t_final,
                                  num=len(times), endpoint=True)
        norms = [np.linalg.norm(p) for p in psis]
        snaps = [QuantumState(basis=state.basis, frame=state.frame,
                              payload=p / np.linalg.norm(p)) for p in psis]
        method = "krylov"
    drift = max(abs(n - 1.0) for n in norms)
    if drift > 1e-6:
        raise NumericalAbort(f"norm drift {drift} exceeds 1e-6")
    if drift > 1e-9:
        warnings.warn(f"norm drift {drift} above 1e-9", stacklevel=2)
    return PropagationResult(
        times=times, states=snaps,
        diagnostics={"norm_drift": drift, "method": method,
                     "step_count": len(times)},
    )


def _lindblad_rhs_matrices(H, lindblads, weights):
    h = H.toarray() if sp.issparse(H) else np.asarray(H)
    ls = [l.toarray() if sp.issparse(l) else np.asarray(l)
          for l in lindblads]
    kk = [w * (l.conj().T @ l) for l, w in zip(ls, weights)]
    k_sum = sum(kk) if kk else np.zeros_like(h)
    return h, ls, k_sum


def lindblad_propagate(
    state: QuantumState,
    H: SparseOperator,
    lindblads: Optional[LindbladSet] = None,
    extra: Optional[Superoperator] = None,
    t_final: float = 1.0,
    n_snapshots: int = 21,
    method: str = "dense_rk",
    e_ops: Optional[dict[str, SparseOperator]] = None,
    rtol: float = RTOL_DEFAULT,
    atol: float = ATOL_DEFAULT,
    seed: Optional[int] = None,
    n_traj: int = 500,
    psd_floor: float = -1e-7,
) -> PropagationResult:
    """Master-equation propagation.

    dense_rk integrates the full density matrix with adaptive
    Runge-Kutta and accepts an extra (non-Lindblad) superoperator term.
    trajectories unravels the Lindblad part by Monte-Carlo wavefunction
    sampling; it refuses non-Lindblad extras and needs a seed.

    psd_floor is the abort threshold on the smallest density-matrix
    eigenvalue; non-Lindblad extras are only positive up to perturbative
    order, so callers integrating them may widen it deliberately.
    """
    if state.basis_id != H.basis_id:
        raise ValueError("state and Hamiltonian bases differ")
    times = _snapshot_times(t_final, n_snapshots)
    ops = list(lindblads) if lindblads is not None else []
    l_mats = [op.matrix for _, op, _ in ops]
    weights = [w for _, _, w in ops]

    if method == "trajectories":
        if extra is not None:
            raise ValueError("trajectory unraveling cannot integrate "
                             "non-Lindblad terms")
        if seed is None:
            raise ValueError("trajectory method requires a seed")
        return _trajectory_propagate(state, H, l_mats, weights, times,
                                     e_ops, rtol, atol, seed, n_traj)
    if method != "dense_rk":
        raise ValueError(f"unknown method {method!r}")

    rho0 = state.density_matrix().astype(complex)
    dim = rho0.shape[0]
    h, ls, k_sum = _lindblad_rhs_matrices(H.matrix, l_mats, weights)

    def rhs(_t, y):
        rho = y.reshape(dim, dim)
        out = -1j * (h @ rho - rho @ h)
        for l_mat, w in zip(ls, weights):
            out += w * (l_mat @ rho @ l_mat.conj().T)
        out -= 0.5 * (k_sum @ rho + rho @ k_sum)
        if extra is not None:
            out = out + extra.apply(rho)
        return out.ravel()

    sol = solve_ivp(rhs, (0.0, t_final), rho0.ravel(), t_eval=times,
                    rtol=rtol, atol=atol, method="RK45")
    if not sol.success:
        raise NumericalAbort(f"master-equation integration failed: "
                             f"{sol.message}")
    snaps = []
    trace_drift = 0.0
    min_eig = 0.0
    for i, t in enumerate(times):
        rho = sol.y[:, i].reshape(dim, dim)
        tr = np.trace(rho).real
        trace_drift = max(trace_drift, abs(tr - 1.0))
        if trace_drift > 1e-8:
            raise NumericalAbort(f"trace drift {trace_drift} exceeds 1e-8")
        rho = 0.5 * (rho + rho.conj().T)
        eig_min = float(np.linalg.eigvalsh(rho).min())
        min_eig = min(min_eig, eig_min)
        if eig_min < psd_floor:
            raise NumericalAbort(f"density matrix eigenvalue {eig_min} "
                                 f"below {psd_floor}")
        snaps.append(QuantumState(basis=state.basis, frame=state.frame,
                                  payload=rho / tr))
    result = PropagationResult(
        times=times, states=snaps,
        diagnostics={"trace_drift": trace_drift, "min_eigenvalue": min_eig,
                     "method": "dense_rk", "n_rhs_evals": int(sol.nfev)},
    )
    if e_ops:
        for label, op in e_ops.items():
            result.expect[label] = np.array(
                [s.expectation(op).real for s in snaps])
    return result


def _trajectory_propagate(state, H, l_mats, weights, times, e_ops,
                          rtol, atol, seed, n_traj):
    if not state.is_pure:
        raise ValueError("trajectory unraveling expects a pure state")
    dim = len(state.payload)
    h = H.to_dense()
    ls = [math.sqrt(w) * l.toarray() for l, w in zip(l_mats, weights)]
    ks = [l.conj().T @ l for l in ls]
    h_eff = h - 0.5j * sum(ks) if ks else h.astype(complex)

    seqs = np.random.SeedSequence(seed).spawn(n_traj)
    rho_sum = np.zeros((len(times), dim, dim), dtype=complex)
    exp_samples = {label: np.zeros((n_traj, len(times)))
                   for label in (e_ops or {})}

    for k, seq in enumerate(seqs):
        rng = np.random.default_rng(seq)
        psi = state.payload.copy()
        t_now = 0.0
        threshold = rng.random()
        snaps = np.zeros((len(times), dim), dtype=complex)
        idx = 0
        while idx < len(times):
            t_target = times[idx]
            if t_target <= t_now + 1e-15:
                snaps[idx] = psi / np.linalg.norm(psi)
                idx += 1
                continue

            def rhs(_t, y):
                return -1j * (h_eff @ y)

            def jump_event(_t, y, thr=threshold):
                return np.linalg.norm(y) ** 2 - thr

            jump_event.terminal = True
            jump_event.direction = -1
            sol = solve_ivp(rhs, (t_now, t_target), psi, rtol=rtol,
                            atol=atol, events=jump_event, method="RK45",
                            dense_output=False)
            if not sol.success:
                raise NumericalAbort("trajectory integration failed")
            if sol.status == 1:  # jump fired
                t_now = float(sol.t_events[0][0])
                psi = sol.y_events[0][0]
                probs = np.array([np.linalg.norm(l @ psi) ** 2
                                  for l in ls])
                total = probs.sum()
                if total <= 0:
                    # dark state: no jump possible, continue deterministic
                    threshold = 0.0
                    continue
                choice = rng.choice(len(ls), p=probs / total)
                psi = ls[choice] @ psi
                psi = psi / np.linalg.norm(psi)
                threshold = rng.random()
            else:
                psi = sol.y[:, -1]
                t_now = t_target
        for i in range(len(times)):
            v = snaps[i]
            rho_sum[i] += np.outer(v, v.conj())
            for label, op in (e_ops or {}).items():
                exp_samples[label][k, i] = np.real(
                    np.vdot(v, op.matrix.dot(v)))

    snaps_states = []
    for i, t in enumerate(times):
        rho = rho_sum[i] / n_traj
        rho = 0.5 * (rho + rho.conj().T)
        rho = rho / np.trace(rho).real
        snaps_states.append(QuantumState(basis=state.basis,
                                         frame=state.frame, payload=rho))
    result = PropagationResult(
        times=np.asarray(times), states=snaps_states,
        diagnostics={"method": "trajectories", "n_traj": n_traj,
                     "seed": seed},
    )
    for label in (e_ops or {}):
        samples = exp_samples[label]
        result.expect[label] = samples.mean(axis=0)
        result.expect_sem[label] = samples.std(axis=0, ddof=1) \
            / math.sqrt(n_traj)
    return result


def chirped_propagate(
    state: QuantumState,
    H_static_parts: tuple[SparseOperator, SparseOperator],
    schedule: ChirpSchedule,
    t_final: Optional[float] = None,
    n_snapshots: int = 21,
    params_template: Optional[SystemParams] = None,
) -> PropagationResult:
    """Pure-state propagation under H(t) = H_const + xi(t) H_coeff.

    Midpoint-exponential stepping with the step bounded so xi changes by
    at most 0.1 percent per step. When a parameter template is supplied,
    the instantaneous regime is classified along the ramp and leaving the
    model's validity is reported with the crossing time.
    """
    if not state.is_pure:
        raise ValueError("chirped propagation expects a pure state")
    h_const, h_coeff = H_static_parts
    if h_const.basis_id != state.basis_id \
            or h_coeff.basis_id != state.basis_id:
        raise ValueError("state and Hamiltonian bases differ")
    if t_final is None:
        t_final = schedule.total_duration
    times = _snapshot_times(t_final, n_snapshots)

    if params_template is not None:
        _warn_regime_crossing(schedule, params_template)

    hc = h_const.to_dense()
    hx = h_coeff.to_dense()
    psi = state.payload.copy()
    snaps = [QuantumState(basis=state.basis, frame=state.frame,
                          payload=psi.copy())]
    ramp_rate = abs(schedule.xi_final - schedule.xi_initial) \
        / schedule.ramp_duration
    t_now = 0.0
    steps = 0
    for t_target in times[1:]:
        while t_now < t_target - 1e-14:
            xi_now = schedule.xi_at(t_now)
            if t_now < schedule.ramp_duration and ramp_rate > 0:
                h_step = 1e-3 * max(abs(xi_now), 1e-6) / ramp_rate
            else:
                h_step = t_target - t_now
            h_step = min(h_step, t_target - t_now)
            xi_mid = schedule.xi_at(t_now + 0.5 * h_step)
            u = scipy.linalg.expm(-1j * h_step * (hc + xi_mid * hx))
            psi = u @ psi
            t_now += h_step
            steps += 1
        snaps.append(QuantumState(basis=state.basis, frame=state.frame,
                                  payload=psi / np.linalg.norm(psi)))
    drift = abs(np.linalg.norm(psi) - 1.0)
    if drift > 1e-6:
        raise NumericalAbort(f"norm drift {drift} exceeds 1e-6")
    xi_tags = np.array([schedule.xi_at(t) for t in times])
    return PropagationResult(
        times=times, states=snaps,
        diagnostics={"norm_drift": drift, "step_count": steps,
                     "xi_of_t": xi_tags, "method": "midpoint_exponential"},
    )


def _warn_regime_crossing(schedule: ChirpSchedule,
                          template: SystemParams) -> None:
    from dataclasses import replace as _replace

    n_check = 200
    prev = None
    for i in range(n_check + 1):
        t = schedule.ramp_duration * i / n_check
        p = _replace(template, xi=schedule.xi_at(t))
        regime = classify_regime(p).regime
        if prev is not None and regime is Regime.OTHER \
                and prev is not Regime.OTHER:
            warnings.warn(
                f"schedule leaves the classifiable regime near t = {t:.4g}",
                stacklevel=3,
            )
            return
        prev = regime
