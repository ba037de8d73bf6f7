"""Sparse operator builders on a FockBasis: the three-wave Hamiltonian,
its cubic reduction, the frame-change generators, dressed-frame
correction terms, decay channels and master-equation superoperators.

Discretization conventions, fixed once here and used everywhere:
continuum momentum integrals become (1/L) sums over integer mode indices,
field operators carry sqrt(L) relative to mode operators, and Bose
symmetry factors come from ladder rules applied to ordered index sums
(never from kernel double counting).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .basis import FockBasis
from .errors import DomainError, RegimeError
from .params import (
    Regime,
    RegimeGeometry,
    SystemParams,
    _h_extended,
    energy_sh,
    eval_delta,
    eval_f,
    eval_kappa,
    eval_meson_dispersion,
    eval_omega,
)

HERMITICITY_TOL = 1e-12


@dataclass(frozen=True)
class SparseOperator:
    """Sparse matrix tagged with the basis it acts on."""

    basis_id: str
    dim: int
    matrix: sp.csr_matrix = field(repr=False)

    @classmethod
    def from_coo(cls, basis: FockBasis, rows, cols, vals) -> "SparseOperator":
        mat = sp.coo_matrix(
            (np.asarray(vals, dtype=complex),
             (np.asarray(rows, dtype=int), np.asarray(cols, dtype=int))),
            shape=(basis.dim, basis.dim),
        ).tocsr()
        mat.sum_duplicates()
        return cls(basis_id=basis.basis_id, dim=basis.dim, matrix=mat)

    def dagger(self) -> "SparseOperator":
        return SparseOperator(self.basis_id, self.dim,
                              self.matrix.conjugate().transpose().tocsr())

    def hermiticity_defect(self) -> float:
        d = self.matrix - self.matrix.conjugate().transpose()
        return abs(d).max() if d.nnz else 0.0

    def is_hermitian(self, tol: float = HERMITICITY_TOL) -> bool:
        return self.hermiticity_defect() <= tol

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix.dot(vec)

    def expectation(self, payload: np.ndarray) -> complex:
        if payload.ndim == 1:
            return complex(np.vdot(payload, self.matrix.dot(payload)))
        return complex(np.trace(self.matrix.dot(payload)))

    def to_coo_triplets(self) -> list[tuple[int, int, complex]]:
        coo = self.matrix.tocoo()
        return sorted(zip(coo.row.tolist(), coo.col.tolist(),
                          coo.data.tolist()))

    def export_text(self, path: str) -> None:
        """Write `row col re im` triplets, one per line, sorted, for
        cross-implementation diffing."""
        with open(path, "w") as fh:
            fh.write(f"# dim {self.dim} basis {self.basis_id}\n")
            for r, c, v in self.to_coo_triplets():
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        if other.basis_id != self.basis_id:
            raise ValueError("operators live on different bases")
        return SparseOperator(self.basis_id, self.dim,
                              (self.matrix + other.matrix).tocsr())

    def scaled(self, factor: complex) -> "SparseOperator":
        return SparseOperator(self.basis_id, self.dim,
                              (factor * self.matrix).tocsr())


@dataclass(frozen=True)
class LindbladSet:
    """Labelled jump operators with nonnegative rate weights."""

    operators: tuple[tuple[str, SparseOperator, float], ...]

    def __post_init__(self):
        labels = [lbl for lbl, _, _ in self.operators]
        if len(set(labels)) != len(labels):
            raise ValueError("Lindblad labels must be unique")
        if any(w < 0 for _, _, w in self.operators):
            raise ValueError("Lindblad weights must be nonnegative")

    def __iter__(self):
        return iter(self.operators)

    def __len__(self):
        return len(self.operators)


@dataclass(frozen=True)
class Superoperator:
    """Action on density matrices as a sum of A . rho . B sandwiches.

    Terms are (A, B, coeff) with A or B possibly None for identity.
    """

    basis_id: str
    terms: tuple[tuple[Optional[sp.csr_matrix], Optional[sp.csr_matrix],
                       complex], ...] = field(repr=False)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho, dtype=complex)
        for a, b, c in self.terms:
            x = rho if a is None else a.dot(rho)
            if b is not None:
                x = x.dot(b.toarray()) if sp.issparse(b) else x.dot(b)
            out += c * x
        return out


@dataclass(frozen=True)
class TimeDependentOperator:
    """Hermitian operator of the form sum_k env_k(t) M_k + h.c.

    Keeping (static matrix, scalar envelope) pairs lets propagators
    evaluate the operator cheaply at arbitrary times.
    """

    basis_id: str
    dim: int
    pairs: tuple[tuple[Callable[[float], complex], SparseOperator], ...]

    def at_time(self, t: float) -> SparseOperator:
        mat = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for env, op in self.pairs:
            e = complex(env(t))
            mat = mat + e * op.matrix + np.conj(e) * (
                op.matrix.conjugate().transpose())
        return SparseOperator(self.basis_id, self.dim, mat.tocsr())


# ---------------------------------------------------------------------------
# term application engine

class _Builder:
    """Accumulates normal-ordered ladder terms on a basis.

    Application iterates over candidate states that can survive the
    first annihilator, so sparse quartic sums stay cheap on few-photon
    bases.
    """

    def __init__(self, basis: FockBasis):
        self.basis = basis
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[complex] = []
        occ_lists: list[list[int]] = [[] for _ in range(basis.grid.n_modes)]
        for j, state in enumerate(basis.states):
            for m, n in enumerate(state):
                if n:
                    occ_lists[m].append(j)
        self._occupied = occ_lists
        self._all = list(range(basis.dim))

    def add_term(self, coeff: complex, create: Sequence[int],
                 destroy: Sequence[int]) -> None:
        """coeff * prod(a_dag[create]) prod(a[destroy]), normal ordered."""
        if coeff == 0:
            return
        basis = self.basis
        index = basis.index
        states = basis.states
        candidates = (self._occupied[destroy[0]] if destroy else self._all)
        for j in candidates:
            occ = states[j]
            n = list(occ)
            radicand = 1  # integer product of ladder factors; one sqrt
            dead = False
            for m in destroy:
                if n[m] == 0:
                    dead = True
                    break
                radicand *= n[m]
                n[m] -= 1
            if dead:
                continue
            for m in create:
                radicand *= n[m] + 1
                n[m] += 1
            i = index.get(tuple(n))
            if i is None:
                continue  # image outside truncation: projected away
            self.rows.append(i)
            self.cols.append(j)
            self.vals.append(coeff * math.sqrt(radicand))

    def add_term_with_hc(self, coeff, create, destroy) -> None:
        self.add_term(coeff, create, destroy)
        self.add_term(np.conj(coeff), tuple(reversed(destroy)),
                      tuple(reversed(create)))

    def finish(self) -> SparseOperator:
        return SparseOperator.from_coo(self.basis, self.rows, self.cols,
                                       self.vals)


def _fh_pos(basis: FockBasis) -> dict[int, int]:
    return {p: i for i, p in enumerate(basis.grid.fh_indices)}


def _sh_pos(basis: FockBasis) -> dict[int, int]:
    n_fh = basis.grid.n_fh
    return {p: n_fh + i for i, p in enumerate(basis.grid.sh_indices)}


def _nl_triples(basis: FockBasis):
    """All on-grid (P; m, P-m) momentum-conserving conversion triples."""
    fh = set(basis.grid.fh_indices)
    for P in basis.grid.sh_indices:
        for m in basis.grid.fh_indices:
            if P - m in fh:
                yield P, m


def _rel_momentum(P: int, m: int, L: float) -> float:
    """Relative momentum of the fundamental pair (m, P-m)."""
    return (2 * m - P) / (2 * L)


# ---------------------------------------------------------------------------
# Hamiltonian builders

def build_full_hamiltonian(
    basis: FockBasis,
    params: SystemParams,
    interior_restriction: bool = True,
) -> SparseOperator:
    """Full three-wave-mixing Hamiltonian on the truncated basis.

    Conversion terms are kept only for triples whose harmonic and both
    fundamental indices lie on the grid, which localizes truncation error
    at the grid edge and makes charge and momentum conservation exact.
    With interior_restriction off, fundamental pairs lacking an on-grid
    harmonic partner are reported (the terms cannot be represented either
    way).
    """
    grid = basis.grid
    L = grid.L
    b = _Builder(basis)
    fh_pos, sh_pos = _fh_pos(basis), _sh_pos(basis)

    for p in grid.fh_indices:
        k = p / L
        b.add_term(params.theta * 0.5 * k**2,
                   (fh_pos[p],), (fh_pos[p],))
    for p in grid.sh_indices:
        k = p / L
        b.add_term(energy_sh(params, k), (sh_pos[p],), (sh_pos[p],))

    coeff = 1.0 / (2.0 * math.sqrt(L))
    for P, m in _nl_triples(basis):
        b.add_term(coeff, (sh_pos[P],), (fh_pos[m], fh_pos[P - m]))
        b.add_term(coeff, (fh_pos[m], fh_pos[P - m]), (sh_pos[P],))

    if not interior_restriction:
        sh = set(grid.sh_indices)
        missing = {m1 + m2
                   for i, m1 in enumerate(grid.fh_indices)
                   for m2 in grid.fh_indices[i:]
                   if m1 + m2 not in sh}
        if missing:
            warnings.warn(
                f"{len(missing)} fundamental pair totals have no on-grid "
                "harmonic partner; those conversion terms are absent",
                stacklevel=2,
            )
    return b.finish()


def build_linear_hamiltonian(basis: FockBasis,
                             params: SystemParams) -> SparseOperator:
    """Kinetic/detuning part of the full Hamiltonian only."""
    grid = basis.grid
    L = grid.L
    b = _Builder(basis)
    fh_pos, sh_pos = _fh_pos(basis), _sh_pos(basis)
    for p in grid.fh_indices:
        b.add_term(params.theta * 0.5 * (p / L) ** 2,
                   (fh_pos[p],), (fh_pos[p],))
    for p in grid.sh_indices:
        b.add_term(energy_sh(params, p / L), (sh_pos[p],), (sh_pos[p],))
    return b.finish()


def build_conversion_hamiltonian(basis: FockBasis) -> SparseOperator:
    """Three-wave conversion part (interior restricted)."""
    L = basis.grid.L
    b = _Builder(basis)
    fh_pos, sh_pos = _fh_pos(basis), _sh_pos(basis)
    coeff = 1.0 / (2.0 * math.sqrt(L))
    for P, m in _nl_triples(basis):
        b.add_term(coeff, (sh_pos[P],), (fh_pos[m], fh_pos[P - m]))
        b.add_term(coeff, (fh_pos[m], fh_pos[P - m]), (sh_pos[P],))
    return b.finish()


def _fh_pair_totals(basis: FockBasis) -> dict[int, list[int]]:
    """total index s -> every ordered first member m with (m, s-m) on
    grid. Ordered listing double-counts unordered pairs on purpose: the
    ladder rules supply the Bose factors."""
    totals: dict[int, list[int]] = {}
    for m in basis.grid.fh_indices:
        for m2 in basis.grid.fh_indices:
            totals.setdefault(m + m2, []).append(m)
    return totals


def build_cubic_hamiltonian(basis: FockBasis,
                            params: SystemParams) -> SparseOperator:
    """Fundamental-band cubic (cascaded) Hamiltonian: kinetic term plus
    the momentum-conserving quartic with constant kernel theta/(4 xi L).
    """
    if params.xi == 0:
        raise DomainError("cubic Hamiltonian undefined at xi = 0")
    grid = basis.grid
    L = grid.L
    b = _Builder(basis)
    fh_pos = _fh_pos(basis)
    for p in grid.fh_indices:
        b.add_term(params.theta * 0.5 * (p / L) ** 2,
                   (fh_pos[p],), (fh_pos[p],))
    g = params.theta / (4.0 * params.xi * L)
    totals = _fh_pair_totals(basis)
    for s, firsts in totals.items():
        for m_c in firsts:
            for m_d in firsts:
                b.add_term(g, (fh_pos[m_c], fh_pos[s - m_c]),
                           (fh_pos[m_d], fh_pos[s - m_d]))
    return b.finish()


def build_sw_generator(
    basis: FockBasis,
    params: SystemParams,
    coeff: str = "f",
    geometry: Optional[RegimeGeometry] = None,
) -> SparseOperator:
    """Anti-Hermitian generator of the dressing frame change.

    coeff="f": dispersive kernel over all on-grid conversion triples;
    the commutator with the linear Hamiltonian reproduces the conversion
    term exactly on the restricted triple set.
    coeff="h": dissipative-regime kernel, restricted to the intra-band
    region of the supplied geometry.
    """
    grid = basis.grid
    L = grid.L
    b = _Builder(basis)
    fh_pos, sh_pos = _fh_pos(basis), _sh_pos(basis)
    scale = 1.0 / math.sqrt(L)
    for P, m in _nl_triples(basis):
        p, q = P / L, _rel_momentum(P, m, L)
        if coeff == "f":
            c = eval_f(params, p, q)
        elif coeff == "h":
            if geometry is None:
                raise ValueError("geometry required for the intra-band "
                                 "kernel")
            if abs(p) > 2 * geometry.p_i or abs(q) > geometry.q_i(p):
                continue
            c = _h_extended(params, geometry, p, q)
        else:
            raise ValueError(f"unknown kernel {coeff!r}")
        b.add_term(scale * c, (sh_pos[P],), (fh_pos[m], fh_pos[P - m]))
        b.add_term(-scale * c, (fh_pos[m], fh_pos[P - m]), (sh_pos[P],))
    return b.finish()


def _kernel_fn(params: SystemParams, coeff: str,
               geometry: Optional[RegimeGeometry]):
    if coeff == "f":
        return lambda p, q: eval_f(params, p, q)
    if coeff == "h":
        if geometry is None:
            raise ValueError("geometry required for the intra-band kernel")
        return lambda p, q: _h_extended(params, geometry, p, q)
    raise ValueError(f"unknown kernel {coeff!r}")


def build_w_terms(
    basis: FockBasis,
    params: SystemParams,
    coeff: str = "f",
    geometry: Optional[RegimeGeometry] = None,
) -> dict[str, SparseOperator]:
    """Leading dressed-frame correction terms.

    Returns W_lin (harmonic level shift), W_SPM (fundamental quartic),
    W_XPM (harmonic-fundamental cross term) and W_SPM_prime (quartic with
    the next-order kernel correction folded in). Harmonic modes whose
    detuning is nonpositive are dropped from W_lin.
    """
    grid = basis.grid
    L = grid.L
    kern = _kernel_fn(params, coeff, geometry)
    fh_pos, sh_pos = _fh_pos(basis), _sh_pos(basis)
    fh_set = set(grid.fh_indices)

    # W_lin: diagonal shift of harmonic modes
    b_lin = _Builder(basis)
    dropped = 0
    for P in grid.sh_indices:
        w = eval_omega(params, P / L)
        if w <= 0:
            dropped += 1
            continue
        b_lin.add_term(-(math.pi * params.theta / 2.0) / math.sqrt(w),
                       (sh_pos[P],), (sh_pos[P],))
    if dropped:
        warnings.warn(
            f"{dropped} harmonic modes have nonpositive detuning; their "
            "level-shift terms were dropped", stacklevel=2)

    # W_SPM and W_SPM_prime: quartic in the fundamental band
    b_spm = _Builder(basis)
    b_spmp = _Builder(basis)
    g = -1.0 / (4.0 * L)
    for s in sorted({m1 + m2 for m1 in grid.fh_indices
                     for m2 in grid.fh_indices}):
        firsts = [m for m in grid.fh_indices if s - m in fh_set]
        if not firsts:
            continue
        p = s / L
        try:
            w_p = eval_omega(params, p)
        except Exception:  # pragma: no cover - omega is a polynomial
            w_p = -1.0
        for m_d in firsts:
            kd = kern(p, _rel_momentum(s, m_d, L))
            for m_c in firsts:
                create = (fh_pos[m_c], fh_pos[s - m_c])
                destroy = (fh_pos[m_d], fh_pos[s - m_d])
                b_spm.add_term_with_hc(g * kd, create, destroy)
                if w_p > 0:
                    kc = kern(p, _rel_momentum(s, m_c, L))
                    ell = params.theta * (3 * math.pi / 4.0) * (
                        kc - params.theta / (12.0 * w_p)
                    ) / math.sqrt(w_p)
                    b_spmp.add_term_with_hc(g * kd * (1.0 + ell),
                                            create, destroy)

    # W_XPM: harmonic population scatters the fundamental band
    b_xpm = _Builder(basis)
    gx = 1.0 / L
    sh_set = set(grid.sh_indices)
    for P in grid.sh_indices:
        p = P / L
        for m in grid.fh_indices:
            q = (P - 2 * m) / (2.0 * L)
            c = kern(p, q)
            for R in grid.sh_indices:
                m_created = R - P + m
                if m_created in fh_set and R in sh_set:
                    b_xpm.add_term_with_hc(
                        gx * c,
                        (sh_pos[P], fh_pos[m_created]),
                        (sh_pos[R], fh_pos[m]),
                    )
    return {
        "W_lin": b_lin.finish(),
        "W_SPM": b_spm.finish(),
        "W_XPM": b_xpm.finish(),
        "W_SPM_prime": b_spmp.finish(),
    }


def build_dressed_fw_model(
    basis: FockBasis,
    params: SystemParams,
    geometry: RegimeGeometry,
) -> tuple[SparseOperator, LindbladSet]:
    """Reduced model for the dressed fundamental band in the dissipative
    regime: the cubic Hamiltonian plus one two-photon loss channel per
    discrete pair-total momentum."""
    if geometry.regime is not Regime.DISSIPATIVE_ELLIPTICAL:
        raise RegimeError("dressed fundamental-band model requires the "
                          "dissipative regime")
    grid = basis.grid
    L = grid.L
    h_fw = build_cubic_hamiltonian(basis, params)

    fh_pos = _fh_pos(basis)
    fh_set = set(grid.fh_indices)
    amp = -params.theta * math.sqrt(math.pi / 4.0) * abs(params.xi) ** (-1.25)
    ops = []
    for s in sorted({m1 + m2 for m1 in grid.fh_indices
                     for m2 in grid.fh_indices}):
        b = _Builder(basis)
        for m in grid.fh_indices:
            if s - m in fh_set:
                b.add_term(amp / math.sqrt(L), (),
                           (fh_pos[m], fh_pos[s - m]))
        op = b.finish()
        if op.matrix.nnz:
            ops.append((f"two_photon_loss_s={s}", op, 1.0))
    return h_fw, LindbladSet(operators=tuple(ops))


def build_sh_decay(
    basis: FockBasis,
    params: SystemParams,
    geometry: RegimeGeometry,
) -> tuple[SparseOperator, LindbladSet]:
    """Per-mode harmonic decay channels and the accompanying frequency
    shift Hamiltonian.

    Harmonic modes with no real resonant pair momentum do not decay and
    get no jump operator.
    """
    if geometry.regime is not Regime.DISSIPATIVE_ELLIPTICAL:
        raise RegimeError("harmonic decay requires the dissipative regime")
    grid = basis.grid
    L = grid.L
    sh_pos = _sh_pos(basis)
    from .params import q0_squared

    b_ls = _Builder(basis)
    ops = []
    for P in grid.sh_indices:
        p = P / L
        if q0_squared(params, p) <= 0:
            continue
        kappa = eval_kappa(params, geometry, p)
        delta = eval_delta(params, geometry, p)
        b_ls.add_term(delta, (sh_pos[P],), (sh_pos[P],))
        b = _Builder(basis)
        b.add_term(math.sqrt(kappa), (), (sh_pos[P],))
        op = b.finish()
        if op.matrix.nnz:
            ops.append((f"sh_decay_p={P}", op, 1.0))
    return b_ls.finish(), LindbladSet(operators=tuple(ops))


def _require_fh_only(basis: FockBasis) -> None:
    if basis.grid.n_sh:
        raise ValueError("this builder expects a fundamental-only basis "
                         "(harmonic band traced out)")


def _pair_annihilator_entries(basis: FockBasis):
    """Matrix entries of every pair annihilator a_m a_{s-m}, collected in
    one pass over the basis, keyed by (m, s)."""
    grid = basis.grid
    fh_indices = grid.fh_indices
    index = basis.index
    entries: dict[tuple[int, int], tuple[list, list, list]] = {}
    for j, occ in enumerate(basis.states):
        occupied = [i for i in range(grid.n_fh) if occ[i]]
        for i1 in occupied:
            for i2 in occupied:
                n = list(occ)
                if n[i2] == 0:
                    continue
                radicand = n[i2]
                n[i2] -= 1
                if n[i1] == 0:
                    continue
                radicand *= n[i1]
                n[i1] -= 1
                target = index.get(tuple(n))
                if target is None:
                    continue
                m1, m2 = fh_indices[i1], fh_indices[i2]
                key = (m1, m1 + m2)
                rows, cols, vals = entries.setdefault(key, ([], [], []))
                rows.append(target)
                cols.append(j)
                vals.append(math.sqrt(radicand))
    return entries


def build_me_dissipator(
    basis: FockBasis,
    params: SystemParams,
    variant: str,
    geometry: Optional[RegimeGeometry] = None,
) -> Superoperator:
    """Born-Markov dissipator for the fundamental band with the harmonic
    band traced out.

    dispersive: pure commutator action -i[W, .] with the narrowband
    quartic W (equal to the cubic Hamiltonian's interaction part).

    dissipative: non-Lindblad double-commutator form; the resonant pair
    is pinned to the discrete mode nearest q0(p), the principal value
    becomes a symmetric sum excluding that pair.
    """
    _require_fh_only(basis)
    grid = basis.grid
    L = grid.L
    fh_pos = _fh_pos(basis)
    fh_set = set(grid.fh_indices)
    dim = basis.dim

    pair_entries = _pair_annihilator_entries(basis)

    def pair_op(m: int, s: int) -> sp.csr_matrix:
        rows, cols, vals = pair_entries.get((m, s), ((), (), ()))
        return sp.coo_matrix(
            (np.asarray(vals, dtype=complex), (rows, cols)),
            shape=(dim, dim)).tocsr()

    if variant == "dispersive":
        if params.xi == 0:
            raise DomainError("narrowband kernel undefined at xi = 0")
        b = _Builder(basis)
        g = params.theta / (4.0 * params.xi * L)
        totals = _fh_pair_totals(basis)
        for s, firsts in totals.items():
            for m_c in firsts:
                for m_d in firsts:
                    b.add_term(g, (fh_pos[m_c], fh_pos[s - m_c]),
                               (fh_pos[m_d], fh_pos[s - m_d]))
        w = b.finish().matrix
        return Superoperator(basis_id=basis.basis_id,
                             terms=((w, None, -1j), (None, w, +1j)))

    if variant != "dissipative":
        raise ValueError(f"unknown variant {variant!r}")

    if geometry is None or geometry.regime is not Regime.DISSIPATIVE_ELLIPTICAL:
        raise RegimeError("dissipative variant requires dissipative-regime "
                          "geometry")
    from .params import q0_squared

    # grouped normal form: sandwiches A rho B per pair total, plus the
    # one-sided pieces collapsed into a single matrix C acting as
    # C rho + rho C^dag (exactly trace preserving term by term)
    terms: list[tuple] = []
    c_left = sp.csr_matrix((dim, dim), dtype=complex)
    for s in sorted({m1 + m2 for m1 in grid.fh_indices
                     for m2 in grid.fh_indices}):
        firsts = [m for m in grid.fh_indices if s - m in fh_set]
        if not firsts:
            continue
        p = s / L
        q2 = q0_squared(params, p)
        rows_all: list = []
        cols_all: list = []
        vals_all: list = []
        for m in firsts:
            r, c_, v = pair_entries.get((m, s), ((), (), ()))
            rows_all.extend(r)
            cols_all.extend(c_)
            vals_all.extend(v)
        if not rows_all:
            continue
        b_sum = sp.coo_matrix(
            (np.asarray(vals_all, dtype=complex), (cols_all, rows_all)),
            shape=(dim, dim)).conjugate().tocsr()

        res_members: set[int] = set()
        if q2 > 0:
            q0 = math.sqrt(q2)
            m_star = s / 2.0 + L * q0
            m_res = round(m_star)
            if abs(m_res - m_star) > 0.5 or m_res not in fh_set \
                    or s - m_res not in fh_set:
                raise DomainError(
                    f"no grid mode within half a spacing of the resonance "
                    f"at pair total {s} (want index {m_star:.2f})"
                )
            res_members = {m_res, s - m_res}
            a_res = pair_op(m_res, s)
            c = math.pi / (4.0 * q0)
            if a_res.nnz:
                terms.append((a_res, (c * b_sum).tocsr(), 1.0))
                terms.append((b_sum.conjugate().transpose().tocsr(),
                              (c * a_res.conjugate().transpose()).tocsr(),
                              1.0))
            c_left = c_left - c * (b_sum.dot(a_res))

        # principal value: symmetric sum skipping the resonant pair,
        # grouped into one weighted pair annihilator per total
        rows_all, cols_all, vals_all = [], [], []
        for m_d in firsts:
            if m_d in res_members:
                continue
            ent = pair_entries.get((m_d, s))
            if ent is None:
                continue
            f_val = eval_f(params, p, _rel_momentum(s, m_d, L))
            rows_all.extend(ent[0])
            cols_all.extend(ent[1])
            vals_all.extend(f_val * v for v in ent[2])
        a_pv = sp.coo_matrix(
            (np.asarray(vals_all, dtype=complex), (rows_all, cols_all)),
            shape=(dim, dim)).tocsr()
        if a_pv.nnz:
            cc = -0.5j / L
            c_left = c_left - cc * (b_sum.dot(a_pv))
            terms.append((a_pv, (cc * b_sum).tocsr(), 1.0))
            terms.append((b_sum.conjugate().transpose().tocsr(),
                          (np.conj(cc) * a_pv.conjugate().transpose()
                           ).tocsr(), 1.0))
    c_left = c_left.tocsr()
    if c_left.nnz:
        terms.append((c_left, None, 1.0))
        terms.append((None, c_left.conjugate().transpose().tocsr(), 1.0))
    return Superoperator(basis_id=basis.basis_id, terms=tuple(terms))


def build_w_sq(
    basis: FockBasis,
    params: SystemParams,
    sh_amplitudes: Callable[[int, float], complex],
) -> TimeDependentOperator:
    """Squeezing-like drive on the fundamental band sourced by mean
    harmonic amplitudes.

    sh_amplitudes(P, t) supplies the mean amplitude of harmonic mode P at
    time t; modes with zero initial amplitude are dropped (the mean-field
    envelope keeps them zero).
    """
    grid = basis.grid
    L = grid.L
    fh_pos = _fh_pos(basis)
    fh_set = set(grid.fh_indices)
    prefactor = (1j * params.theta * (math.pi / 4.0)
                 * abs(params.xi) ** (-1.5) / math.sqrt(L))
    pairs = []
    sh_range = grid.sh_indices if grid.n_sh else tuple(
        sorted({m1 + m2 for m1 in grid.fh_indices
                for m2 in grid.fh_indices}))
    for P in sh_range:
        if sh_amplitudes(P, 0.0) == 0:
            continue
        b = _Builder(basis)
        for m in grid.fh_indices:
            if P - m in fh_set:
                b.add_term(prefactor, (), (fh_pos[m], fh_pos[P - m]))
        op = b.finish()
        if not op.matrix.nnz:
            continue

        def env(t: float, _P=P) -> complex:
            return complex(sh_amplitudes(_P, t))

        pairs.append((env, op))
    return TimeDependentOperator(basis_id=basis.basis_id, dim=basis.dim,
                                 pairs=tuple(pairs))


def meanfield_sh_amplitude(
    params: SystemParams,
    geometry: RegimeGeometry,
    initial: dict[int, complex],
    L: float,
) -> Callable[[int, float], complex]:
    """Mean-field harmonic amplitude: free meson rotation with the decay
    envelope exp(-kappa t / 2) in the dissipative regime."""

    def amp(P: int, t: float) -> complex:
        a0 = initial.get(P, 0.0)
        if a0 == 0:
            return 0.0
        p = P / L
        if geometry.regime is Regime.DISSIPATIVE_ELLIPTICAL:
            m_p = energy_sh(params, p) + eval_delta(params, geometry, p)
            kappa = eval_kappa(params, geometry, p)
        else:
            m_p = eval_meson_dispersion(params, p)
            kappa = 0.0
        return a0 * np.exp(-1j * m_p * t - kappa * t / 2.0)

    return amp


# ---------------------------------------------------------------------------
# convenience operators used by tests and observables

def number_operator(basis: FockBasis, band: str,
                    index: Optional[int] = None) -> SparseOperator:
    """Number operator of one mode, or of a whole band when index is
    None."""
    b = _Builder(basis)
    grid = basis.grid
    pos = _fh_pos(basis) if band == "fh" else _sh_pos(basis)
    indices = (grid.fh_indices if band == "fh" else grid.sh_indices)
    for p in indices:
        if index is not None and p != index:
            continue
        b.add_term(1.0, (pos[p],), (pos[p],))
    return b.finish()


def charge_operator(basis: FockBasis) -> SparseOperator:
    """Q = N_FH + 2 N_SH."""
    b = _Builder(basis)
    fh_pos, sh_pos = _fh_pos(basis), _sh_pos(basis)
    for p in basis.grid.fh_indices:
        b.add_term(1.0, (fh_pos[p],), (fh_pos[p],))
    for p in basis.grid.sh_indices:
        b.add_term(2.0, (sh_pos[p],), (sh_pos[p],))
    return b.finish()


def momentum_operator(basis: FockBasis) -> SparseOperator:
    """Total momentum in integer index units."""
    b = _Builder(basis)
    fh_pos, sh_pos = _fh_pos(basis), _sh_pos(basis)
    for p in basis.grid.fh_indices:
        b.add_term(float(p), (fh_pos[p],), (fh_pos[p],))
    for p in basis.grid.sh_indices:
        b.add_term(float(p), (sh_pos[p],), (sh_pos[p],))
    return b.finish()


def annihilation_operator(basis: FockBasis, band: str,
                          index: int) -> SparseOperator:
    b = _Builder(basis)
    pos = _fh_pos(basis) if band == "fh" else _sh_pos(basis)
    b.add_term(1.0, (), (pos[index],))
    return b.finish()


def commutator_norm(a: SparseOperator, b: SparseOperator) -> float:
    """Frobenius norm of [a, b]."""
    c = a.matrix.dot(b.matrix) - b.matrix.dot(a.matrix)
    return float(sp.linalg.norm(c)) if c.nnz else 0.0


def frobenius_norm(a: SparseOperator) -> float:
    return float(sp.linalg.norm(a.matrix)) if a.matrix.nnz else 0.0
