"""Bi-objective semidefinite program for 2-RDM reconstruction.

The program minimizes  E[D] + w * sum_n Tr(E1_n + E2_n)  over block-PSD
variables subject to the trace constraint Tr(D) = N(N-1)/2 in the packed
pair basis, the linear hole-hole and particle-hole maps Q = f_Q(D) and
G = f_G(D), and the measured shadow equalities applied sample-wise to the
slack-corrected matrix D + E1_n - E2_n.  One PSD slack pair per measured
unitary keeps the equalities feasible for noisy data, where a single
shared pair would be overdetermined as soon as the rows outnumber the
independent 2-RDM components; with exact data every slack is zero and the
model coincides with the shared-pair form.

Limits: mode "energy" drops the shadow rows and slacks entirely (the
variational 2-RDM method), mode "fit" drops the energy term and minimizes
the total slack trace alone.

The solver is a boundary-point (augmented-Lagrangian) method: each sweep
solves the dual normal equations A A^T y = rhs by conjugate gradient, then
splits W = C - A^T(y) - X/sigma per block into PSD parts to update the
dual slack Z = W_+ and the primal X = sigma W_-.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse

from .chem import ReducedHamiltonian
from .fock import RDM2, SpinOrbitalLayout, contract_to_rdm1, energy_from_rdm2
from .pairs import PairBasis
from .shadows import RowStacks, ShadowSample

__all__ = [
    "SolverConfig",
    "SdpProblem",
    "SolveReport",
    "SolveResult",
    "SdpError",
    "f_q_map",
    "f_g_map",
    "assemble_program",
    "solve_boundary_point",
    "sv2rdm_reconstruct",
]

CONDITION_SETS = ("d", "dq", "dqg")
MODES = ("bi", "energy", "fit")


class SdpError(RuntimeError):
    """Solver failure (iteration limit or repeated CG breakdown)."""


# ---------------------------------------------------------------------------
# Linear N-representability maps
# ---------------------------------------------------------------------------

def f_q_map(rdm2: RDM2, n_electrons: Optional[int] = None) -> np.ndarray:
    """Hole-hole matrix Q[(ij),(kl)] = <a_i a_j a+_l a+_k> from the 2-RDM.

    Elementwise over spin orbitals:
      Q^{ij}_{kl} = d_ik d_jl - d_il d_jk - d_jl D1_ik - d_ik D1_jl
                    + d_il D1_jk + d_jk D1_il + D^{ij}_{kl}
    packed against ordered pairs; the delta terms reduce to the identity
    matrix in the packed basis.  Validated against the operator-level
    oracle in the tests.
    """
    n = rdm2.n_electrons if n_electrons is None else n_electrons
    if n < 2:
        raise ValueError("f_Q needs at least two electrons")
    pb = rdm2.pair_basis
    d1 = contract_to_rdm1(rdm2, n).matrix
    P = pb.size
    q = np.eye(P) + rdm2.packed
    pairs = pb.pairs
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            val = 0.0
            if j == l:
                val -= d1[i, k]
            if i == k:
                val -= d1[j, l]
            if i == l:
                val += d1[j, k]
            if j == k:
                val += d1[i, l]
            q[a, b] += val
    return 0.5 * (q + q.T)


def f_g_map(rdm2: RDM2, n_electrons: Optional[int] = None) -> np.ndarray:
    """Particle-hole matrix G[(ij),(kl)] = <a+_i a_j a+_l a_k> from the 2-RDM.

    G^{ij}_{kl} = d_jl D1_ik - D^{il}_{kj}, assembled over the full
    r_so^2 composite index (ij).
    """
    n = rdm2.n_electrons if n_electrons is None else n_electrons
    if n < 2:
        raise ValueError("f_G needs at least two electrons")
    r = rdm2.layout.r_so
    pb = rdm2.pair_basis
    d1 = contract_to_rdm1(rdm2, n).matrix
    g = np.zeros((r * r, r * r))
    for i in range(r):
        for j in range(r):
            ij = i * r + j
            for k in range(r):
                for l in range(r):
                    kl = k * r + l
                    val = d1[i, k] if j == l else 0.0
                    if i != l and k != j:
                        a, sa = pb.pair_index(i, l)
                        b, sb = pb.pair_index(k, j)
                        val -= sa * sb * rdm2.packed[a, b]
                    g[ij, kl] = val
    return 0.5 * (g + g.T)


# ---------------------------------------------------------------------------
# Problem assembly
# ---------------------------------------------------------------------------

@dataclass
class SolverConfig:
    """Penalty weight, limit mode, conditions, and solver tolerances."""

    w: float = 1.0
    mode: str = "bi"            # "bi" | "energy" (w->0) | "fit" (w->inf)
    conditions: str = "dqg"     # "d" | "dq" | "dqg"
    eps_primal: float = 1e-6
    eps_dual: float = 1e-6
    sigma0: float = 1.0
    cg_tol: float = 1e-8
    cg_max: Optional[int] = None       # default 10 * constraint count
    max_outer: int = 20000
    max_restarts: int = 5
    linear_solver: str = "auto"        # "auto" | "direct" | "cg"
    relaxation: float = 1.6            # multiplier over-relaxation in (0, 2)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.conditions not in CONDITION_SETS:
            raise ValueError(f"unknown conditions {self.conditions!r}")
        if self.mode == "bi" and self.w <= 0:
            raise ValueError("penalty weight must be positive")
        if self.linear_solver not in ("auto", "direct", "cg"):
            raise ValueError(f"unknown linear_solver {self.linear_solver!r}")
        if not 0.0 < self.relaxation < 2.0:
            raise ValueError("relaxation must lie in (0, 2)")
        for name in ("eps_primal", "eps_dual", "cg_tol", "sigma0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class _SvecIndex:
    """Symmetric vectorization bookkeeping for one block."""

    def __init__(self, dim: int):
        self.dim = dim
        self.iu, self.ju = np.triu_indices(dim)
        self.scale = np.where(self.iu == self.ju, 1.0, np.sqrt(2.0))
        self.length = len(self.iu)

    def svec(self, m: np.ndarray) -> np.ndarray:
        return m[self.iu, self.ju] * self.scale

    def unsvec(self, v: np.ndarray) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        m[self.iu, self.ju] = v / self.scale
        m = m + m.T
        m[np.arange(self.dim), np.arange(self.dim)] *= 0.5
        return m


class _RowBuilder:
    """Sparse constraint rows in concatenated svec coordinates."""

    def __init__(self, block_offsets: dict[str, int],
                 block_svec: dict[str, _SvecIndex]):
        self.offsets = block_offsets
        self.svec = block_svec
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.b: list[float] = []
        self.n_rows = 0

    def add(self, block: str, a: int, b: int, coeff: float) -> None:
        """Accumulate coeff * M[a, b] (symmetric sense) into the current row."""
        if a > b:
            a, b = b, a
        sv = self.svec[block]
        pos = a * sv.dim - a * (a - 1) // 2 + (b - a)
        self.rows.append(self.n_rows)
        self.cols.append(self.offsets[block] + pos)
        self.vals.append(coeff if a == b else coeff / np.sqrt(2.0))

    def finish_row(self, rhs: float) -> None:
        self.b.append(rhs)
        self.n_rows += 1

    def matrix(self, total: int) -> scipy.sparse.csr_matrix:
        return scipy.sparse.coo_matrix(
            (self.vals, (self.rows, self.cols)),
            shape=(self.n_rows, total)).tocsr()


def _add_one_rdm_terms(rb: _RowBuilder, pb: PairBasis, i: int, k: int,
                       coeff: float, n_electrons: int) -> None:
    """coeff * D1[i,k] expanded as packed 2-RDM elements of the D block."""
    c = coeff / (n_electrons - 1)
    for m in range(pb.r_so):
        if m == i or m == k:
            continue
        a, sa = pb.pair_index(i, m)
        b, sb = pb.pair_index(k, m)
        rb.add("D", a, b, c * sa * sb)


@dataclass
class SdpProblem:
    """Assembled block-SDP: minimize <C, X> s.t. A(X) = b, blocks PSD.

    Core blocks D (and Q, G per the conditions) are plain symmetric
    matrices; the per-sample slack stacks E1, E2 are (n_samples, P, P).
    """

    layout: SpinOrbitalLayout
    n_electrons: int
    config: SolverConfig
    core_names: list[str]
    block_dims: dict[str, int]
    objective: dict[str, np.ndarray]
    sparse_rows: scipy.sparse.csr_matrix
    sparse_b: np.ndarray
    stacks: Optional[RowStacks]
    shadow_b: np.ndarray
    k2: Optional[ReducedHamiltonian]
    svec: dict[str, _SvecIndex] = field(repr=False, default_factory=dict)
    offsets: dict[str, int] = field(repr=False, default_factory=dict)

    @property
    def n_constraints(self) -> int:
        return self.sparse_rows.shape[0] + len(self.shadow_b)

    @property
    def has_slacks(self) -> bool:
        return self.stacks is not None

    @property
    def n_samples(self) -> int:
        return self.stacks.n_samples if self.stacks is not None else 0

    def b_vector(self) -> np.ndarray:
        return np.concatenate([self.sparse_b, self.shadow_b])

    def variable_names(self) -> list[str]:
        return self.core_names + (["E1", "E2"] if self.has_slacks else [])

    # -- linear operator ----------------------------------------------------
    def apply_a(self, x: dict[str, np.ndarray]) -> np.ndarray:
        vec = np.concatenate([self.svec[n].svec(x[n]) for n in self.core_names])
        parts = [self.sparse_rows @ vec]
        if self.has_slacks:
            parts.append(self.stacks.apply(x["D"], x["E1"] - x["E2"]))
        return np.concatenate(parts) if len(parts) > 1 else parts[0]

    def apply_at(self, y: np.ndarray) -> dict[str, np.ndarray]:
        n_sparse = self.sparse_rows.shape[0]
        vec = self.sparse_rows.T @ y[:n_sparse]
        out = {}
        for name in self.core_names:
            off = self.offsets[name]
            out[name] = self.svec[name].unsvec(
                vec[off:off + self.svec[name].length])
        if self.has_slacks:
            ys = y[n_sparse:]
            out["D"] += self.stacks.adjoint(ys)
            per = self.stacks.adjoint_per_sample(ys)
            out["E1"] = per
            out["E2"] = -per
        return out

    def row_norms(self) -> np.ndarray:
        sq = np.asarray(self.sparse_rows.multiply(self.sparse_rows).sum(axis=1))
        norms = [np.sqrt(sq.ravel())]
        if self.has_slacks:
            norms.append(np.sqrt(3.0) * self.stacks.row_norms())
        return np.concatenate(norms) if len(norms) > 1 else norms[0]


def assemble_program(k2: Optional[ReducedHamiltonian],
                     shadows: Optional[Sequence[ShadowSample]],
                     config: SolverConfig, n_electrons: int,
                     layout: SpinOrbitalLayout) -> SdpProblem:
    """Build the block structure, objective, and constraint rows."""
    r_so = layout.r_so
    pb = PairBasis(r_so)
    P = pb.size
    n = n_electrons
    if n < 2:
        raise ValueError("need at least two electrons")
    if config.mode != "fit" and k2 is None:
        raise ValueError(f"mode {config.mode!r} needs a reduced Hamiltonian")
    if k2 is not None and k2.packed.shape != (P, P):
        raise ValueError("reduced Hamiltonian dimension does not match layout")

    use_shadows = config.mode != "energy"
    if use_shadows and not shadows:
        raise ValueError(f"mode {config.mode!r} requires shadow samples")

    core_names = ["D"]
    block_dims = {"D": P}
    if config.conditions in ("dq", "dqg"):
        core_names.append("Q")
        block_dims["Q"] = P
    if config.conditions == "dqg":
        core_names.append("G")
        block_dims["G"] = r_so * r_so

    svec = {name: _SvecIndex(block_dims[name]) for name in core_names}
    offsets = {}
    total = 0
    for name in core_names:
        offsets[name] = total
        total += svec[name].length

    rb = _RowBuilder(offsets, svec)

    # trace: Tr(packed D) = N(N-1)/2
    for a in range(P):
        rb.add("D", a, a, 1.0)
    rb.finish_row(n * (n - 1) / 2.0)

    # hole-hole link rows: Q - f_Q(D) = I (packed identity from the deltas)
    if "Q" in block_dims:
        pairs = pb.pairs
        for a in range(P):
            i, j = pairs[a]
            for b in range(a, P):
                k, l = pairs[b]
                rb.add("Q", a, b, 1.0)
                rb.add("D", a, b, -1.0)
                if j == l:
                    _add_one_rdm_terms(rb, pb, i, k, 1.0, n)
                if i == k:
                    _add_one_rdm_terms(rb, pb, j, l, 1.0, n)
                if i == l:
                    _add_one_rdm_terms(rb, pb, j, k, -1.0, n)
                if j == k:
                    _add_one_rdm_terms(rb, pb, i, l, -1.0, n)
                rb.finish_row(1.0 if a == b else 0.0)

    # particle-hole link rows: G - f_G(D) = 0
    if "G" in block_dims:
        for i in range(r_so):
            for j in range(r_so):
                ij = i * r_so + j
                for k in range(r_so):
                    for l in range(r_so):
                        kl = k * r_so + l
                        if kl < ij:
                            continue
                        rb.add("G", ij, kl, 1.0)
                        if j == l:
                            _add_one_rdm_terms(rb, pb, i, k, -1.0, n)
                        if i != l and k != j:
                            a, sa = pb.pair_index(i, l)
                            b, sb = pb.pair_index(k, j)
                            rb.add("D", a, b, sa * sb)
                        rb.finish_row(0.0)

    sparse_rows = rb.matrix(total)
    sparse_b = np.asarray(rb.b)

    stacks = None
    shadow_b = np.zeros(0)
    if use_shadows:
        stacks = RowStacks.from_samples(list(shadows), layout)
        shadow_b = stacks.all_targets()

    objective = {name: np.zeros((block_dims[name],) * 2) for name in core_names}
    if config.mode in ("bi", "energy") and k2 is not None:
        objective["D"] = k2.packed.copy()
    if use_shadows:
        weight = config.w if config.mode == "bi" else 1.0
        n_s = stacks.n_samples
        eye = np.broadcast_to(np.eye(P), (n_s, P, P)).copy()
        objective["E1"] = weight * eye
        objective["E2"] = weight * eye.copy()

    return SdpProblem(layout, n, config, core_names, block_dims, objective,
                      sparse_rows, sparse_b, stacks, shadow_b, k2, svec,
                      offsets)


# ---------------------------------------------------------------------------
# Boundary-point solver
# ---------------------------------------------------------------------------

@dataclass
class SolveReport:
    energy: float
    slack_trace: float
    iterations: int
    primal_residual: float
    dual_residual: float
    min_eig: dict[str, float]
    wall_time_s: float
    converged: bool
    sigma_final: float
    cg_iterations: int
    restarts: int
    mode: str
    conditions: str
    n_constraints: int
    message: str = ""

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["min_eig"] = {k: float(v) for k, v in self.min_eig.items()}
        return out


@dataclass
class SolveResult:
    rdm2: RDM2
    e1: Optional[np.ndarray]        # (n_samples, P, P) slack stacks
    e2: Optional[np.ndarray]
    report: SolveReport
    blocks: dict[str, np.ndarray] = field(default_factory=dict, repr=False)


class _CgBreakdown(RuntimeError):
    pass


def _group_svec_map(pair_basis: PairBasis, idx: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """svec bookkeeping of a principal sub-block of the packed matrix.

    Returns (iu, ju, scale) over the sub-block of size d = len(idx) and the
    positions of those entries inside the svec of the full P x P block.
    """
    P = pair_basis.size
    d = len(idx)
    iu, ju = np.triu_indices(d)
    scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
    gi, gj = idx[iu], idx[ju]
    gmap = gi * P - gi * (gi - 1) // 2 + (gj - gi)
    return iu, ju, scale, gmap


class _ShadowSvecRows:
    """Scaled svec coefficient rows of the shadow constraints, per group.

    rows[k] has shape (n_samples, d_k, g_k) where g_k = d_k (d_k + 1) / 2;
    entry [n, a] is the svec of the symmetric coefficient matrix of row
    (n, pair a), restricted to the group sub-block and divided by the full
    row norm.  gmaps[k] holds the global D-svec coordinates.
    """

    def __init__(self, stacks: RowStacks, inv_scale_rows: np.ndarray):
        self.groups = stacks.groups
        self.positions = stacks.positions
        self.rows: dict[str, np.ndarray] = {}
        self.gmaps: dict[str, np.ndarray] = {}
        for k, idx in stacks.groups.items():
            m = stacks.wedges[k]
            x, y = m.real, m.imag
            iu, ju, scale, gmap = _group_svec_map(stacks.pair_basis, idx)
            outer = (x[..., :, None] * x[..., None, :]
                     + y[..., :, None] * y[..., None, :])
            rows = outer[..., iu, ju] * scale
            rows *= inv_scale_rows[stacks.positions[k]][..., None]
            self.rows[k] = rows
            self.gmaps[k] = gmap


class _DenseNormalSolver:
    """Cholesky of the full (m x m) normal matrix A A^T + delta I."""

    def __init__(self, problem: "SdpProblem", inv_scale: np.ndarray,
                 delta: float = 1e-12):
        import scipy.linalg
        m = problem.n_constraints
        n_sparse = problem.sparse_rows.shape[0]
        asp = scipy.sparse.diags(inv_scale[:n_sparse]) @ problem.sparse_rows
        normal = np.zeros((m, m))
        normal[:n_sparse, :n_sparse] = (asp @ asp.T).toarray()
        if problem.has_slacks:
            sv = _ShadowSvecRows(problem.stacks, inv_scale[n_sparse:])
            n_d = problem.svec["D"].length
            n_shadow = m - n_sparse
            v_all = np.zeros((n_shadow, n_d))
            for k, rows in sv.rows.items():
                pos = sv.positions[k].ravel()
                v_all[np.ix_(pos, sv.gmaps[k])] = \
                    rows.reshape(-1, rows.shape[-1])
            cross = asp[:, :n_d].tocsr() @ v_all.T
            normal[:n_sparse, n_sparse:] = cross
            normal[n_sparse:, :n_sparse] = cross.T
            ss = v_all @ v_all.T
            # slack coordinates: same coefficients on E1 and (negated) E2
            for k, rows in sv.rows.items():
                gram = 2.0 * np.einsum("nav,nbv->nab", rows, rows,
                                       optimize=True)
                pos = sv.positions[k]
                for n_i in range(rows.shape[0]):
                    ss[np.ix_(pos[n_i], pos[n_i])] += gram[n_i]
            normal[n_sparse:, n_sparse:] = ss
        normal[np.arange(m), np.arange(m)] += delta
        self._factor = scipy.linalg.cho_factor(normal, lower=True,
                                               overwrite_a=True)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        import scipy.linalg
        return scipy.linalg.cho_solve(self._factor, rhs)


class _WoodburyNormalSolver:
    """Direct solve of (A A^T + delta I) y = rhs via a low-rank split.

    A A^T = B + A_D A_D^T where A_D collects the D-block coordinates of all
    rows and B (everything else) is diagonal on the Q/G link rows plus small
    per-sample blocks on the shadow rows.  The trace row has no non-D
    coordinates, so B is augmented by e1 e1^T and the update compensated
    with a signed Woodbury term.  The capacitance matrix over the D svec
    coordinates (+1 signed column) is LU-factorized once per solve call.
    """

    def __init__(self, problem: "SdpProblem", inv_scale: np.ndarray,
                 delta: float = 1e-12):
        import scipy.linalg
        m = problem.n_constraints
        n_sparse = problem.sparse_rows.shape[0]
        n_d = problem.svec["D"].length
        self.m = m
        self.n_sparse = n_sparse
        self.n_d = n_d

        asp = scipy.sparse.diags(inv_scale[:n_sparse]) @ problem.sparse_rows
        asp_d = asp[:, :n_d].tocsr()
        row_sq = np.asarray(asp.multiply(asp).sum(axis=1)).ravel()
        d_sq = np.asarray(asp_d.multiply(asp_d).sum(axis=1)).ravel()
        diag = row_sq - d_sq + delta
        diag[0] += 1.0          # trace row: B e1 e1^T augmentation
        self.sparse_diag_inv = 1.0 / diag

        self.sv = None
        self.block_inv: dict[str, np.ndarray] = {}
        cap = np.eye(n_d)
        if problem.has_slacks:
            self.sv = _ShadowSvecRows(problem.stacks, inv_scale[n_sparse:])
            for k, rows in self.sv.rows.items():
                gram = 2.0 * np.einsum("nav,nbv->nab", rows, rows,
                                       optimize=True)
                d_k = gram.shape[-1]
                gram[:, np.arange(d_k), np.arange(d_k)] += delta
                self.block_inv[k] = np.linalg.inv(gram)
                binv_rows = np.einsum("nab,nbv->nav", self.block_inv[k], rows,
                                      optimize=True)
                contrib = np.einsum("nav,naw->vw", rows, binv_rows,
                                    optimize=True)
                gmap = self.sv.gmaps[k]
                cap[np.ix_(gmap, gmap)] += contrib

        cap += (asp_d.T @ scipy.sparse.diags(self.sparse_diag_inv)
                @ asp_d).toarray()
        v1 = asp_d[0].toarray().ravel() * self.sparse_diag_inv[0]
        chat = np.empty((n_d + 1, n_d + 1))
        chat[:n_d, :n_d] = cap
        chat[:n_d, n_d] = v1
        chat[n_d, :n_d] = v1
        chat[n_d, n_d] = -1.0 + self.sparse_diag_inv[0]
        self._lu = scipy.linalg.lu_factor(chat, overwrite_a=True)
        self.asp_d = asp_d

    def _apply_b_inv(self, y: np.ndarray) -> np.ndarray:
        out = np.empty_like(y)
        out[:self.n_sparse] = y[:self.n_sparse] * self.sparse_diag_inv
        if self.sv is not None:
            ys = y[self.n_sparse:]
            outs = np.empty_like(ys)
            for k, binv in self.block_inv.items():
                pos = self.sv.positions[k]
                yk = ys[pos]
                outs[pos] = np.einsum("nab,nb->na", binv, yk, optimize=True)
            out[self.n_sparse:] = outs
        return out

    def _apply_ad_t(self, y: np.ndarray) -> np.ndarray:
        """A_D^T y over the D svec coordinates."""
        out = self.asp_d.T @ y[:self.n_sparse]
        if self.sv is not None:
            ys = y[self.n_sparse:]
            for k, rows in self.sv.rows.items():
                yk = ys[self.sv.positions[k]]
                vals = np.einsum("na,nav->v", yk, rows, optimize=True)
                np.add.at(out, self.sv.gmaps[k], vals)
        return out

    def _apply_ad(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.m)
        out[:self.n_sparse] = self.asp_d @ v
        if self.sv is not None:
            for k, rows in self.sv.rows.items():
                vk = v[self.sv.gmaps[k]]
                vals = np.einsum("nav,v->na", rows, vk, optimize=True)
                out[self.n_sparse:][self.sv.positions[k]] = vals
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        import scipy.linalg
        u = self._apply_b_inv(rhs)
        w = np.empty(self.n_d + 1)
        w[:self.n_d] = self._apply_ad_t(u)
        w[self.n_d] = u[0]
        z = scipy.linalg.lu_solve(self._lu, w)
        corr = self._apply_ad(z[:self.n_d])
        corr[0] += z[self.n_d]
        return u - self._apply_b_inv(corr)


def _conjugate_gradient(matvec, rhs, x0, tol, max_iter):
    """Plain CG on a positive (semi)definite operator, warm-startable."""
    x = x0.copy()
    r = rhs - matvec(x)
    p = r.copy()
    rs = float(r @ r)
    target = tol * max(float(np.linalg.norm(rhs)), 1e-300)
    n_iter = 0
    while np.sqrt(rs) > target and n_iter < max_iter:
        ap = matvec(p)
        p_ap = float(p @ ap)
        if not np.isfinite(p_ap) or p_ap <= 0.0:
            raise _CgBreakdown(f"curvature {p_ap} at iteration {n_iter}")
        alpha = rs / p_ap
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
        n_iter += 1
    return x, n_iter


def _psd_split(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """w = w_plus - w_minus with both PSD; works on (..., d, d) stacks."""
    vals, vecs = np.linalg.eigh(w)
    pos = np.clip(vals, 0.0, None)
    w_plus = (vecs * pos[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    return w_plus, w_plus - w


def solve_boundary_point(problem: SdpProblem,
                         config: Optional[SolverConfig] = None) -> SolveResult:
    """Augmented-Lagrangian boundary-point iteration.

    Per sweep: (1) CG solve of the regularized normal equations
    (A A^T + 1e-12 I) y = A(C - Z) + (b - A(X))/sigma, warm-started and
    solved inexactly while the outer residuals are large; (2) spectral
    split of W = C - A^T(y) - X/sigma into Z = W_+ and X = sigma W_-;
    (3) sigma halved or doubled when the primal/dual residual ratio leaves
    [1/10, 10].  The returned D block is renormalized to the exact trace.
    """
    cfg = config or problem.config
    t0 = time.perf_counter()
    names = problem.variable_names()
    dims = problem.block_dims

    scale = problem.row_norms()
    scale[scale < 1e-14] = 1.0
    inv_scale = 1.0 / scale
    b = problem.b_vector() * inv_scale
    b_norm = 1.0 + np.linalg.norm(b)

    c = problem.objective
    c_norm = 1.0 + np.sqrt(sum(np.sum(c[n] ** 2) for n in names))

    def apply_a(x):
        return problem.apply_a(x) * inv_scale

    def apply_at(y):
        return problem.apply_at(y * inv_scale)

    def normal_op(y):
        return apply_a(apply_at(y)) + 1e-12 * y

    m = problem.n_constraints
    cg_max = cfg.cg_max if cfg.cg_max is not None else 10 * m
    direct = None
    if cfg.linear_solver != "cg":
        if m <= 4500:
            direct = _DenseNormalSolver(problem, inv_scale)
        else:
            direct = _WoodburyNormalSolver(problem, inv_scale)

    # scaled-identity start satisfying the trace row; slacks start at zero
    P = dims["D"]
    n = problem.n_electrons
    r_so = problem.layout.r_so
    x = {}
    x["D"] = (n * (n - 1) / 2.0 / P) * np.eye(P)
    if "Q" in dims:
        hole_trace = (r_so - n) * (r_so - n - 1) / 2.0
        x["Q"] = max(hole_trace, 1.0) / P * np.eye(P)
    if "G" in dims:
        g_trace = n * (r_so - n + 1)
        x["G"] = max(g_trace, 1.0) / dims["G"] * np.eye(dims["G"])
    if problem.has_slacks:
        n_s = problem.n_samples
        x["E1"] = np.zeros((n_s, P, P))
        x["E2"] = np.zeros((n_s, P, P))
    z = {name: np.zeros_like(x[name]) for name in names}
    y = np.zeros(m)

    sigma = cfg.sigma0
    restarts = 0
    cg_total = 0
    primal_res = dual_res = np.inf
    it = 0
    converged = False
    finishing = False
    message = ""
    while it < cfg.max_outer:
        it += 1
        try:
            rhs = apply_a({k: c[k] - z[k] for k in names})
            rhs += (b - apply_a(x)) / sigma
            if direct is not None:
                y = direct.solve(rhs)
            else:
                # inexact inner solves: track the outer residuals down
                cg_tol = min(0.1, max(cfg.cg_tol,
                                      0.05 * min(primal_res, dual_res)))
                y, cg_iters = _conjugate_gradient(normal_op, rhs, y, cg_tol,
                                                  cg_max)
                cg_total += cg_iters
        except _CgBreakdown as exc:
            restarts += 1
            if restarts > cfg.max_restarts:
                message = f"CG breakdown persisted after {restarts} restarts: {exc}"
                break
            sigma *= 0.5
            y = np.zeros(m)
            continue

        # over-relaxed multiplier step; the final sweeps use rho = 1 so the
        # returned blocks are exact PSD projections
        rho = 1.0 if finishing else cfg.relaxation
        aty = apply_at(y)
        dual_sq = 0.0
        for name in names:
            w = c[name] - aty[name] - x[name] / sigma
            w = 0.5 * (w + np.swapaxes(w, -1, -2))
            w_plus, w_minus = _psd_split(w)
            z[name] = w_plus
            x[name] = (1.0 - rho) * x[name] + rho * sigma * w_minus
            dual_sq += np.sum((aty[name] + z[name] - c[name]) ** 2)
        dual_res = np.sqrt(dual_sq) / c_norm
        primal_res = np.linalg.norm(apply_a(x) - b) / b_norm

        if primal_res <= cfg.eps_primal and dual_res <= cfg.eps_dual:
            if finishing or rho == 1.0:
                converged = True
                break
            finishing = True
            continue
        # a lagging primal residual calls for smaller sigma (X = sigma*W_-
        # moves less per sweep), a lagging dual residual for larger
        if it % 10 == 0:
            if primal_res > 10.0 * dual_res:
                sigma = max(sigma * 0.5, 1e-8)
            elif dual_res > 10.0 * primal_res:
                sigma = min(sigma * 2.0, 1e8)

    if not converged and not message:
        message = (f"iteration limit {cfg.max_outer} reached "
                   f"(primal {primal_res:.2e}, dual {dual_res:.2e})")

    # renormalize the returned 2-RDM to the exact trace
    d_packed = 0.5 * (x["D"] + x["D"].T)
    target = n * (n - 1) / 2.0
    tr = float(np.trace(d_packed))
    if tr > 0:
        d_packed = d_packed * (target / tr)
    rdm2 = RDM2(problem.layout, n, d_packed)

    min_eig = {}
    for name in names:
        eigs = np.linalg.eigvalsh(x[name])
        min_eig[name] = float(eigs.min())
    slack_trace = 0.0
    e1 = e2 = None
    if problem.has_slacks:
        e1, e2 = x["E1"], x["E2"]
        slack_trace = float(np.trace(e1, axis1=1, axis2=2).sum()
                            + np.trace(e2, axis1=1, axis2=2).sum())
    energy = energy_from_rdm2(problem.k2, rdm2) if problem.k2 is not None \
        else float("nan")

    report = SolveReport(
        energy=energy, slack_trace=slack_trace, iterations=it,
        primal_residual=float(primal_res), dual_residual=float(dual_res),
        min_eig=min_eig, wall_time_s=time.perf_counter() - t0,
        converged=converged, sigma_final=sigma, cg_iterations=cg_total,
        restarts=restarts, mode=cfg.mode, conditions=cfg.conditions,
        n_constraints=m, message=message)
    return SolveResult(rdm2, e1, e2, report, blocks=x)


def sv2rdm_reconstruct(k2: ReducedHamiltonian,
                       samples: Sequence[ShadowSample],
                       config: SolverConfig, n_electrons: int,
                       layout: SpinOrbitalLayout) -> tuple[RDM2, SolveReport]:
    """Assemble and solve in one step; returns the 2-RDM block and report."""
    problem = assemble_program(k2, samples, config, n_electrons, layout)
    result = solve_boundary_point(problem, config)
    return result.rdm2, result.report
