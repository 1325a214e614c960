"""Identifiability study: rank of stacked measurement rows and linear
recovery error for real-orthogonal vs complex-unitary ensembles."""
import numpy as np
from shadowrdm import fock
from shadowrdm.pairs import PairBasis

rng = np.random.default_rng(42)

def haar_orthogonal(r, rng):
    a = rng.standard_normal((r, r))
    q, rr = np.linalg.qr(a)
    return q * np.sign(np.diag(rr))

def haar_unitary(r, rng):
    a = (rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))) / np.sqrt(2)
    q, rr = np.linalg.qr(a)
    d = np.diag(rr)
    return q * (d / np.abs(d))

def lifted(u):
    r = u.shape[0]
    w = np.zeros((2 * r, 2 * r), dtype=complex if np.iscomplexobj(u) else float)
    w[:r, :r] = u
    w[r:, r:] = u
    return w

def rows_for_unitary(u, pb):
    """All wedge vectors m^{pq} (p<q spin orbitals) as rows over packed pairs."""
    w = lifted(u)
    idx = np.asarray(pb.pairs)
    i, j = idx[:, 0], idx[:, 1]
    # m[(pq),(ij)] = W_pi W_qj - W_pj W_qi
    m = w[i[:, None], i[None, :]] * 0  # placeholder wrong; build directly
    P = pb.size
    m = np.empty((P, P), dtype=w.dtype)
    for a, (p, q) in enumerate(pb.pairs):
        m[a] = w[p, i] * w[q, j] - w[p, j] * w[q, i]
    return m

def svec_rows(m):
    """Real symmetric functional rows Re(conj(m) m^T) in svec coords."""
    P = m.shape[1]
    iu, ju = np.triu_indices(P)
    scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
    x, y = m.real, m.imag
    R = x[:, :, None] * x[:, None, :] + y[:, :, None] * y[:, None, :]
    return R[:, iu, ju] * scale

# H2-like system: 2 spatial orbitals, 2 electrons, correlated state
lay = fock.SpinOrbitalLayout(2)
basis = fock.enumerate_basis(lay, 2, 0)
c = np.array([0.0, 0.993, -0.118, 0.0])
# order dets: basis lists them sorted; find |0a 0b> and |1a 1b>
c = np.zeros(len(basis))
c[basis.index[(1 << 0) | (1 << 2)]] = 0.993
c[basis.index[(1 << 1) | (1 << 3)]] = -0.118
c /= np.linalg.norm(c)
psi = fock.Wavefunction(basis, c)
d2 = fock.compute_rdm2(psi)
pb = PairBasis(4)
P = pb.size
iu, ju = np.triu_indices(P)
scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
d_svec = d2.packed[iu, ju] * scale

for kind, sampler in [("orthogonal", haar_orthogonal), ("unitary", haar_unitary)]:
    for n_u in (10, 40, 200):
        rows = []
        targets = []
        rng2 = np.random.default_rng(7)
        for _ in range(n_u):
            u = sampler(2, rng2)
            m = rows_for_unitary(u, pb)
            R = svec_rows(m)
            rows.append(R)
            targets.append(R @ d_svec)
        A = np.concatenate(rows)
        s = np.concatenate(targets)
        rank = np.linalg.matrix_rank(A, tol=1e-9)
        x, *_ = np.linalg.lstsq(A, s, rcond=1e-12)
        err = np.linalg.norm(x - d_svec)
        print(f"{kind:11s} n_u={n_u:4d} rank={rank:3d}/{len(d_svec)} "
              f"recovery err={err:.3e}")

# now H4 (r=4): check rank saturation values
lay4 = fock.SpinOrbitalLayout(4)
basis4 = fock.enumerate_basis(lay4, 4, 0)
psi4 = fock.random_wavefunction(basis4, np.random.default_rng(3))
d24 = fock.compute_rdm2(psi4)
pb4 = PairBasis(8)
P4 = pb4.size
iu4, ju4 = np.triu_indices(P4)
scale4 = np.where(iu4 == ju4, 1.0, np.sqrt(2.0))
d4_svec = d24.packed[iu4, ju4] * scale4
for kind, sampler in [("orthogonal", haar_orthogonal), ("unitary", haar_unitary)]:
    for n_u in (20, 60):
        rows, targets = [], []
        rng2 = np.random.default_rng(11)
        for _ in range(n_u):
            u = sampler(4, rng2)
            m = rows_for_unitary(u, pb4)
            R = svec_rows(m)
            rows.append(R)
            targets.append(R @ d4_svec)
        A = np.concatenate(rows)
        s = np.concatenate(targets)
        rank = np.linalg.matrix_rank(A, tol=1e-9)
        x, *_ = np.linalg.lstsq(A, s, rcond=1e-12)
        err = np.linalg.norm(x - d4_svec)
        print(f"H4 {kind:11s} n_u={n_u:4d} rank={rank:4d}/{len(d4_svec)} "
              f"recovery err={err:.3e}")
