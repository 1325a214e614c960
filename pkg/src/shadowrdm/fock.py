"""Fock-space machinery: determinant bases, exact diagonalization, reduced
density matrices, and one-body orbital rotations of correlated states.

Conventions used throughout:

* Spin orbitals are blocked: spatial orbital p maps to spin orbital p
  (alpha) and p + r_spatial (beta).
* A determinant is an integer bit mask; bit i set means spin orbital i is
  occupied.  Creation operators in a ket act lowest-index-innermost, i.e.
  |det> = a+_{i1} a+_{i2} ... |vac> with i1 < i2 < ...
* Everything is real: Hamiltonians are real symmetric and eigenstates are
  chosen real.  Rotated states may be complex when a complex one-body
  unitary is applied for measurement purposes.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Union

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .pairs import PairBasis

DENSE_EIGH_LIMIT = 6000

__all__ = [
    "SpinOrbitalLayout",
    "DeterminantBasis",
    "Wavefunction",
    "RDM1",
    "RDM2",
    "OneBodyRotation",
    "enumerate_basis",
    "annihilate",
    "create",
    "apply_pair_operator",
    "build_hamiltonian",
    "ground_state",
    "compute_rdm2",
    "contract_to_rdm1",
    "energy_from_rdm2",
    "apply_rotation",
    "apply_orbital_unitary",
    "givens_decompose",
    "unitary_factors",
]


class ConvergenceError(RuntimeError):
    """Iterative eigensolver failed to reach the requested residual."""


@dataclass(frozen=True)
class SpinOrbitalLayout:
    """Blocked spin-orbital indexing over r_spatial spatial orbitals."""

    r_spatial: int

    def __post_init__(self):
        if self.r_spatial < 1:
            raise ValueError("need at least one spatial orbital")

    @property
    def r_so(self) -> int:
        return 2 * self.r_spatial

    def alpha(self, p: int) -> int:
        return p

    def beta(self, p: int) -> int:
        return p + self.r_spatial

    def spatial(self, i: int) -> int:
        return i % self.r_spatial

    def is_beta(self, i: int) -> bool:
        return i >= self.r_spatial


def _popcount_below(det: int, i: int) -> int:
    return bin(det & ((1 << i) - 1)).count("1")


def annihilate(det: int, k: int) -> Optional[tuple[int, int]]:
    """Apply a_k; returns (new det, parity sign) or None if k is empty."""
    bit = 1 << k
    if not det & bit:
        return None
    sign = -1 if _popcount_below(det, k) & 1 else 1
    return det ^ bit, sign


def create(det: int, i: int) -> Optional[tuple[int, int]]:
    """Apply a+_i; returns (new det, parity sign) or None if i is occupied."""
    bit = 1 << i
    if det & bit:
        return None
    sign = -1 if _popcount_below(det, i) & 1 else 1
    return det | bit, sign


def apply_pair_operator(det: int, i: int, j: int, k: int, l: int
                        ) -> Optional[tuple[int, int]]:
    """Apply a+_i a+_j a_l a_k to a determinant.

    Returns (determinant, sign) or None when the result is annihilated
    (empty mode annihilated, occupied mode created, or i == j / k == l).
    """
    if i == j or k == l:
        return None
    out = annihilate(det, k)
    if out is None:
        return None
    d, sign = out
    out = annihilate(d, l)
    if out is None:
        return None
    d, s = out
    sign *= s
    out = create(d, j)
    if out is None:
        return None
    d, s = out
    sign *= s
    out = create(d, i)
    if out is None:
        return None
    d, s = out
    return d, sign * s


@dataclass
class DeterminantBasis:
    """All determinants of a fixed particle number (and optionally fixed Sz).

    Determinants are ordered by increasing bit pattern, which is deterministic
    and independent of how the basis was generated.
    """

    layout: SpinOrbitalLayout
    n_electrons: int
    sz2: Optional[int]
    dets: np.ndarray
    index: dict[int, int] = field(repr=False)
    _occ_matrix: Optional[np.ndarray] = field(default=None, repr=False)
    _pair_plans: dict = field(default_factory=dict, repr=False)
    _orbital_rows: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.dets)

    @property
    def size(self) -> int:
        return len(self.dets)

    def occupancy_matrix(self) -> np.ndarray:
        """(size, r_so) float array; entry [b, i] is 1.0 when orbital i is occupied."""
        if self._occ_matrix is None:
            r = self.layout.r_so
            occ = np.zeros((len(self.dets), r))
            for b, det in enumerate(self.dets):
                det = int(det)
                for i in range(r):
                    if det >> i & 1:
                        occ[b, i] = 1.0
            self._occ_matrix = occ
        return self._occ_matrix

    def orbital_rows(self, i: int) -> np.ndarray:
        """Indices of determinants with spin orbital i occupied."""
        rows = self._orbital_rows.get(i)
        if rows is None:
            rows = np.nonzero(self.occupancy_matrix()[:, i] > 0.5)[0]
            self._orbital_rows[i] = rows
        return rows

    def pair_rotation_plan(self, a: int, b: int
                           ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Index plan for the two-level mixing generated by a+_a a_b - a+_b a_a.

        Returns (rows_b, rows_a, signs): determinants with b occupied and a
        empty, their partners with the occupations swapped, and the fermionic
        parity sign of <partner| a+_a a_b |det> for a < b.
        """
        key = (a, b)
        plan = self._pair_plans.get(key)
        if plan is not None:
            return plan
        if not a < b:
            raise ValueError("pair plan requires a < b")
        bit_a, bit_b = 1 << a, 1 << b
        between = ((1 << b) - 1) ^ ((1 << (a + 1)) - 1)
        rows_b, rows_a, signs = [], [], []
        for idx, det in enumerate(self.dets):
            det = int(det)
            if det & bit_b and not det & bit_a:
                partner = det ^ bit_a ^ bit_b
                rows_b.append(idx)
                rows_a.append(self.index[partner])
                signs.append(-1.0 if bin(det & between).count("1") & 1 else 1.0)
        plan = (np.asarray(rows_b, dtype=np.intp),
                np.asarray(rows_a, dtype=np.intp),
                np.asarray(signs))
        self._pair_plans[key] = plan
        return plan


def enumerate_basis(layout: SpinOrbitalLayout, n_electrons: int,
                    sz2: Optional[int] = None) -> DeterminantBasis:
    """Enumerate all determinants with n_electrons (and twice-Sz sz2 if given)."""
    r_so = layout.r_so
    if not 0 <= n_electrons <= r_so:
        raise ValueError(f"electron count {n_electrons} outside [0, {r_so}]")
    if sz2 is not None:
        if abs(sz2) > n_electrons or (n_electrons + sz2) % 2:
            raise ValueError(
                f"sz2={sz2} incompatible with {n_electrons} electrons")
        n_alpha = (n_electrons + sz2) // 2
        n_beta = n_electrons - n_alpha
        r = layout.r_spatial
        if n_alpha > r or n_beta > r:
            raise ValueError(
                f"sz2={sz2} requires more than {r} orbitals per spin")
        dets = []
        for occ_a in combinations(range(r), n_alpha):
            mask_a = sum(1 << p for p in occ_a)
            for occ_b in combinations(range(r), n_beta):
                mask = mask_a | sum(1 << (p + r) for p in occ_b)
                dets.append(mask)
    else:
        dets = [sum(1 << i for i in occ)
                for occ in combinations(range(r_so), n_electrons)]
    dets.sort()
    arr = np.asarray(dets, dtype=np.int64)
    return DeterminantBasis(layout=layout, n_electrons=n_electrons, sz2=sz2,
                            dets=arr, index={int(d): b for b, d in enumerate(arr)})


@dataclass
class Wavefunction:
    """Normalized coefficient vector over a determinant basis."""

    basis: DeterminantBasis
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs)
        if self.coeffs.shape != (len(self.basis),):
            raise ValueError("coefficient vector does not match basis size")
        norm = np.linalg.norm(self.coeffs)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"wavefunction norm {norm} is not 1")

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.coeffs)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.coeffs) ** 2


def random_wavefunction(basis: DeterminantBasis, rng: np.random.Generator
                        ) -> Wavefunction:
    c = rng.standard_normal(len(basis))
    return Wavefunction(basis, c / np.linalg.norm(c))


@dataclass
class RDM1:
    """One-particle reduced density matrix over spin orbitals."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))


@dataclass
class RDM2:
    """Two-particle reduced density matrix.

    Canonical storage is the packed symmetric matrix over ordered pairs
    (i < j); element [(ij), (kl)] equals the tensor element D[i,j,k,l].
    The full antisymmetric 4-index tensor is materialized on demand.
    """

    layout: SpinOrbitalLayout
    n_electrons: int
    packed: np.ndarray
    _tensor: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.packed = np.asarray(self.packed, dtype=float)
        P = self.pair_basis.size
        if self.packed.shape != (P, P):
            raise ValueError(f"packed matrix must be {P}x{P}")

    @property
    def pair_basis(self) -> PairBasis:
        return PairBasis(self.layout.r_so)

    @property
    def trace_full(self) -> float:
        """Trace of the 4-index tensor, sum_ij D[i,j,i,j] = 2 Tr(packed)."""
        return 2.0 * float(np.trace(self.packed))

    @property
    def tensor(self) -> np.ndarray:
        if self._tensor is None:
            r = self.layout.r_so
            pb = self.pair_basis
            t = np.zeros((r, r, r, r))
            for a, (i, j) in enumerate(pb.pairs):
                for b, (k, l) in enumerate(pb.pairs):
                    v = self.packed[a, b]
                    t[i, j, k, l] = v
                    t[j, i, k, l] = -v
                    t[i, j, l, k] = -v
                    t[j, i, l, k] = v
            self._tensor = t
        return self._tensor

    @classmethod
    def from_tensor(cls, layout: SpinOrbitalLayout, n_electrons: int,
                    tensor: np.ndarray, atol: float = 1e-10) -> "RDM2":
        tensor = np.asarray(tensor, dtype=float)
        if np.max(np.abs(tensor + tensor.transpose(1, 0, 2, 3))) > atol:
            raise ValueError("tensor is not antisymmetric in the first index pair")
        if np.max(np.abs(tensor + tensor.transpose(0, 1, 3, 2))) > atol:
            raise ValueError("tensor is not antisymmetric in the second index pair")
        pb = PairBasis(layout.r_so)
        idx = np.asarray(pb.pairs)
        packed = tensor[idx[:, 0][:, None], idx[:, 1][:, None],
                        idx[:, 0][None, :], idx[:, 1][None, :]]
        return cls(layout, n_electrons, packed)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.packed)[0])


@dataclass
class OneBodyRotation:
    """Real orthogonal rotation of the spatial orbitals (same for both spins)."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        r = self.matrix.shape[0]
        if self.matrix.shape != (r, r):
            raise ValueError("rotation matrix must be square")
        resid = np.max(np.abs(self.matrix.T @ self.matrix - np.eye(r)))
        if resid > 1e-8:
            raise ValueError(f"matrix is not orthogonal (residual {resid:.2e})")


# ---------------------------------------------------------------------------
# Hamiltonian assembly and diagonalization
# ---------------------------------------------------------------------------

def _spin_orbital_h(h: np.ndarray) -> np.ndarray:
    r = h.shape[0]
    h_so = np.zeros((2 * r, 2 * r))
    h_so[:r, :r] = h
    h_so[r:, r:] = h
    return h_so


def _antisymmetrized_pair_eri(v_spatial: np.ndarray) -> np.ndarray:
    """Packed pair matrix Vbar[(ij),(kl)] = <ij|kl> - <ij|lk> over spin orbitals.

    v_spatial holds spatial ERIs in chemist notation (pq|rs); the physicist
    element is <ij|kl> = (ik|jl) with spin deltas on (i,k) and (j,l).
    """
    r = v_spatial.shape[0]
    r_so = 2 * r
    pb = PairBasis(r_so)
    # physicist <ij|kl> over spin orbitals
    v_phys = np.zeros((r_so, r_so, r_so, r_so))
    same_spin = np.zeros((r_so, r_so))
    same_spin[:r, :r] = 1.0
    same_spin[r:, r:] = 1.0
    spat = np.concatenate([np.arange(r), np.arange(r)])
    vp = v_spatial[np.ix_(spat, spat, spat, spat)]  # (ik|jl) indexed i,k,j,l
    v_phys = vp.transpose(0, 2, 1, 3) * same_spin[:, None, :, None] \
        * same_spin[None, :, None, :]
    idx = np.asarray(pb.pairs)
    i, j = idx[:, 0], idx[:, 1]
    vbar = (v_phys[i[:, None], j[:, None], idx[None, :, 0], idx[None, :, 1]]
            - v_phys[i[:, None], j[:, None], idx[None, :, 1], idx[None, :, 0]])
    return vbar


def build_hamiltonian(mo, basis: DeterminantBasis) -> scipy.sparse.csr_matrix:
    """Second-quantized Hamiltonian matrix in the determinant basis.

    H = sum h_ik a+_i a_k + 1/2 sum <ij|kl> a+_i a+_j a_l a_k, assembled by
    applying elementary excitation operators to every determinant.  Returned
    sparse; densify with .toarray() for small bases.
    """
    layout = basis.layout
    if mo.r_spatial != layout.r_spatial:
        raise ValueError(
            f"integral set has {mo.r_spatial} orbitals, basis expects "
            f"{layout.r_spatial}")
    r_so = layout.r_so
    h_so = _spin_orbital_h(mo.h)
    vbar = _antisymmetrized_pair_eri(mo.v)
    pb = PairBasis(r_so)

    rows, cols, vals = [], [], []
    for col, det in enumerate(basis.dets):
        det = int(det)
        occ = [i for i in range(r_so) if det >> i & 1]
        # one-body part
        for k in occ:
            d1, s1 = annihilate(det, k)
            for i in range(r_so):
                if h_so[i, k] == 0.0:
                    continue
                out = create(d1, i)
                if out is None:
                    continue
                d2, s2 = out
                row = basis.index.get(d2)
                if row is not None:
                    rows.append(row)
                    cols.append(col)
                    vals.append(s1 * s2 * h_so[i, k])
        # two-body part via ordered pairs: sum_{i<j,k<l} Vbar a+_i a+_j a_l a_k
        for k, l in combinations(occ, 2):
            a_kl = pb.index[(k, l)]
            d1, sk = annihilate(det, k)
            d1, sl0 = annihilate(d1, l)
            s_ann = sk * sl0
            free = [i for i in range(r_so) if not d1 >> i & 1]
            for i, j in combinations(free, 2):
                v = vbar[pb.index[(i, j)], a_kl]
                if v == 0.0:
                    continue
                d2, sj = create(d1, j)
                d2, si = create(d2, i)
                row = basis.index.get(d2)
                if row is not None:
                    rows.append(row)
                    cols.append(col)
                    vals.append(s_ann * sj * si * v)
    n = len(basis)
    H = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return H


def ground_state(H, basis: Optional[DeterminantBasis] = None,
                 max_iter: int = 5000) -> tuple[float, Union[np.ndarray, Wavefunction]]:
    """Lowest eigenpair of a real symmetric matrix.

    Dense solver up to DENSE_EIGH_LIMIT, Lanczos (ARPACK, full
    reorthogonalization) above.  When a basis is supplied the eigenvector is
    wrapped in a Wavefunction.
    """
    sparse_input = scipy.sparse.issparse(H)
    n = H.shape[0]
    if H.shape != (n, n):
        raise ValueError("Hamiltonian must be square")
    if sparse_input:
        sym_resid = abs(H - H.T).max() if n > 1 else 0.0
    else:
        H = np.asarray(H, dtype=float)
        sym_resid = np.max(np.abs(H - H.T)) if n > 1 else 0.0
    if sym_resid > 1e-10:
        raise ValueError(f"Hamiltonian is not symmetric (residual {sym_resid:.2e})")

    if n == 1:
        e0 = float(H[0, 0]) if not sparse_input else float(H[0, 0])
        vec = np.ones(1)
    elif n <= DENSE_EIGH_LIMIT:
        dense = H.toarray() if sparse_input else H
        w, v = np.linalg.eigh(dense)
        e0, vec = float(w[0]), v[:, 0]
    else:
        try:
            w, v = scipy.sparse.linalg.eigsh(H, k=1, which="SA", maxiter=max_iter)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise ConvergenceError(
                f"Lanczos did not converge within {max_iter} iterations") from exc
        e0, vec = float(w[0]), v[:, 0]
        resid = np.linalg.norm(H @ vec - e0 * vec)
        if resid > 1e-10:
            raise ConvergenceError(
                f"Lanczos residual {resid:.2e} exceeds 1e-10")
    vec = vec / np.linalg.norm(vec)
    # fix an overall sign for reproducibility
    pivot = np.argmax(np.abs(vec))
    if vec[pivot] < 0:
        vec = -vec
    if basis is not None:
        return e0, Wavefunction(basis, vec)
    return e0, vec


# ---------------------------------------------------------------------------
# Reduced density matrices
# ---------------------------------------------------------------------------

def compute_rdm2(wfn: Wavefunction) -> RDM2:
    """Two-particle RDM D[(ij),(kl)] = <psi| a+_i a+_j a_l a_k |psi> (packed)."""
    if not wfn.is_real:
        raise ValueError("compute_rdm2 expects a real wavefunction")
    basis = wfn.basis
    layout = basis.layout
    r_so = layout.r_so
    pb = PairBasis(r_so)
    P = pb.size
    packed = np.zeros((P, P))
    coeffs = wfn.coeffs
    pair_index = pb.index
    for b, det in enumerate(basis.dets):
        det = int(det)
        cb = coeffs[b]
        if cb == 0.0:
            continue
        occ = [i for i in range(r_so) if det >> i & 1]
        for k, l in combinations(occ, 2):
            a_kl = pair_index[(k, l)]
            d1, sk = annihilate(det, k)
            d1, sl = annihilate(d1, l)
            s_ann = sk * sl
            free = [i for i in range(r_so) if not d1 >> i & 1]
            for i, j in combinations(free, 2):
                d2, sj = create(d1, j)
                d2, si = create(d2, i)
                row = basis.index.get(d2)
                if row is not None:
                    packed[pair_index[(i, j)], a_kl] += \
                        coeffs[row] * s_ann * sj * si * cb
    packed = 0.5 * (packed + packed.T)  # numerical symmetrization
    return RDM2(layout, basis.n_electrons, packed)


def contract_to_rdm1(rdm2: RDM2, n_electrons: Optional[int] = None) -> RDM1:
    """1-RDM from the 2-RDM: D1[i,k] = 1/(N-1) * sum_j D2[i,j,k,j]."""
    n = rdm2.n_electrons if n_electrons is None else n_electrons
    if n < 2:
        raise ValueError("contraction requires at least two electrons")
    r = rdm2.layout.r_so
    pb = rdm2.pair_basis
    m = np.zeros((r, r))
    for i in range(r):
        for k in range(r):
            acc = 0.0
            for j in range(r):
                if j == i or j == k:
                    continue  # D[i,j,k,j] vanishes when j collides
                a, sa = pb.pair_index(i, j)
                b, sb = pb.pair_index(k, j)
                acc += sa * sb * rdm2.packed[a, b]
            m[i, k] = acc / (n - 1)
    return RDM1(0.5 * (m + m.T))


def energy_from_rdm2(k2, rdm2: RDM2, include_core: bool = True) -> float:
    """Linear energy functional sum_{ijkl} K[i,j,k,l] D[i,j,k,l].

    k2 is a ReducedHamiltonian carrying the packed coefficient matrix; the
    value equals the electronic energy for a 2-RDM with the physical trace,
    plus the scalar core term when include_core is set.
    """
    if k2.packed.shape != rdm2.packed.shape:
        raise ValueError("reduced Hamiltonian and RDM dimensions differ")
    e = float(np.sum(k2.packed * rdm2.packed))
    if include_core:
        e += k2.e_core
    return e


# ---------------------------------------------------------------------------
# One-body rotations lifted to Fock space
# ---------------------------------------------------------------------------

def givens_decompose(u: np.ndarray) -> tuple[list[tuple[int, int, float]], np.ndarray]:
    """Decompose real orthogonal u as G(p1,q1,t1) ... G(pK,qK,tK) @ diag(signs).

    Each G(p,q,t) is the plane rotation with [p,p]=[q,q]=cos t, [p,q]=sin t,
    [q,p]=-sin t.  Sub-diagonal entries are zeroed column by column; the
    residue is a +-1 diagonal.
    """
    u = np.asarray(u, dtype=float)
    r = u.shape[0]
    work = u.copy()
    eliminations = []
    for col in range(r - 1):
        for row in range(r - 1, col, -1):
            a, b = work[col, col], work[row, col]
            if abs(b) < 1e-15:
                continue
            theta = math.atan2(b, a)
            c, s = math.cos(theta), math.sin(theta)
            rp = c * work[col] + s * work[row]
            rq = -s * work[col] + c * work[row]
            work[col], work[row] = rp, rq
            eliminations.append((col, row, theta))
    signs = np.sign(np.diag(work))
    signs[signs == 0] = 1.0
    resid = np.max(np.abs(work - np.diag(signs)))
    if resid > 1e-9:
        raise ValueError(f"Givens elimination left residual {resid:.2e}")
    # work = G_K ... G_1 u, so u = G_1^T ... G_K^T diag(signs)
    factors = [(p, q, -theta) for p, q, theta in eliminations]
    return factors, signs


def unitary_factors(u: np.ndarray) -> list[tuple]:
    """Factor a (possibly complex) unitary into phase and plane-rotation ops.

    Returns a matrix-product sequence, leftmost first, of
    ("phase", r-vector of angles), ("signs", r-vector of +-1) and
    ("givens", p, q, theta) terms whose product reproduces u.  Real
    orthogonal input yields only givens and signs factors, so real states
    stay real.
    """
    u = np.asarray(u)
    if not np.iscomplexobj(u):
        factors, signs = givens_decompose(u)
        ops: list[tuple] = [("givens", p, q, t) for p, q, t in factors]
        if np.any(signs < 0):
            ops.append(("signs", signs))
        return ops
    r = u.shape[0]
    resid = np.max(np.abs(u.conj().T @ u - np.eye(r)))
    if resid > 1e-8:
        raise ValueError(f"matrix is not unitary (residual {resid:.2e})")
    work = u.astype(complex).copy()
    seq: list[tuple] = []  # elimination factors applied from the left, in order
    for col in range(r - 1):
        for row in range(r - 1, col, -1):
            if abs(work[row, col]) < 1e-15:
                continue
            angles = np.zeros(r)
            angles[col] = -cmath.phase(work[col, col])
            angles[row] = -cmath.phase(work[row, col])
            if np.any(angles != 0.0):
                work[col] *= cmath.exp(1j * angles[col])
                work[row] *= cmath.exp(1j * angles[row])
                seq.append(("phase", angles))
            a, b = work[col, col].real, work[row, col].real
            theta = math.atan2(b, a)
            c, s = math.cos(theta), math.sin(theta)
            rp = c * work[col] + s * work[row]
            rq = -s * work[col] + c * work[row]
            work[col], work[row] = rp, rq
            seq.append(("givens", col, row, theta))
    final = np.angle(np.diag(work))
    off = work - np.diag(np.diag(work))
    if np.max(np.abs(off)) > 1e-9:
        raise ValueError("unitary elimination left off-diagonal residue")
    # seq gives L_T ... L_1 u = diag(e^{i final}), hence
    # u = inv(L_1) inv(L_2) ... inv(L_T) diag(e^{i final})
    ops = []
    for kind, *rest in seq:
        if kind == "phase":
            ops.append(("phase", -rest[0]))
        else:
            ops.append(("givens", rest[0], rest[1], -rest[2]))
    if np.any(np.abs(final) > 0):
        ops.append(("phase", final))
    return ops


def _apply_phase(basis: DeterminantBasis, coeffs: np.ndarray,
                 angles: np.ndarray) -> np.ndarray:
    """Multiply each determinant amplitude by exp(i sum of occupied angles).

    The angles are per spatial orbital and act on both spin orbitals.
    """
    r = basis.layout.r_spatial
    out = coeffs.astype(complex, copy=True)
    for p in range(r):
        if angles[p] == 0.0:
            continue
        z = cmath.exp(1j * angles[p])
        for i in (p, p + r):
            rows = basis.orbital_rows(i)
            if len(rows):
                out[rows] *= z
    return out


def _apply_signs(basis: DeterminantBasis, coeffs: np.ndarray,
                 signs: np.ndarray) -> np.ndarray:
    """Real +-1 per spatial orbital, applied per occupied spin orbital."""
    r = basis.layout.r_spatial
    out = coeffs.copy()
    for p in range(r):
        if signs[p] > 0:
            continue
        for i in (p, p + r):
            rows = basis.orbital_rows(i)
            if len(rows):
                out[rows] *= -1.0
    return out


def _apply_givens(basis: DeterminantBasis, coeffs: np.ndarray,
                  p: int, q: int, theta: float) -> np.ndarray:
    """Apply the Fock lift of exp(theta (a+_p a_q - a+_q a_p)) per spin block."""
    r = basis.layout.r_spatial
    c, s = math.cos(theta), math.sin(theta)
    out = coeffs.copy()
    for a, b in ((p, q), (p + r, q + r)):
        if a > b:
            a, b = b, a
            # swapping the pair flips the generator sign, absorbed below
            sign_flip = -1.0
        else:
            sign_flip = 1.0
        rows_b, rows_a, signs = basis.pair_rotation_plan(a, b)
        if not len(rows_b):
            continue
        sv = signs * sign_flip
        ca = out[rows_a]
        cb = out[rows_b]
        out[rows_a] = c * ca + s * sv * cb
        out[rows_b] = -s * sv * ca + c * cb
    return out


def apply_orbital_unitary(wfn: Wavefunction, u: np.ndarray) -> Wavefunction:
    """Lift a spatial-orbital unitary to Fock space and apply it to the state.

    The unitary acts identically on the alpha and beta blocks, preserving
    particle number and Sz.  Real orthogonal input keeps the coefficients
    real; complex input yields a complex state.
    """
    u = np.asarray(u)
    if u.shape != (wfn.basis.layout.r_spatial,) * 2:
        raise ValueError("rotation dimension does not match the layout")
    ops = unitary_factors(u)
    coeffs = wfn.coeffs.copy()
    for kind, *rest in reversed(ops):  # rightmost matrix factor acts first
        if kind == "phase":
            coeffs = _apply_phase(wfn.basis, coeffs, rest[0])
        elif kind == "signs":
            coeffs = _apply_signs(wfn.basis, coeffs, rest[0])
        else:
            coeffs = _apply_givens(wfn.basis, coeffs, *rest)
    norm = np.linalg.norm(coeffs)
    if abs(norm - 1.0) > 1e-10:
        raise RuntimeError(f"rotation broke normalization ({norm})")
    return Wavefunction(wfn.basis, coeffs / norm)


def apply_rotation(wfn: Wavefunction, rotation: OneBodyRotation) -> Wavefunction:
    """Apply a real orthogonal orbital rotation to the wavefunction."""
    return apply_orbital_unitary(wfn, rotation.matrix)
