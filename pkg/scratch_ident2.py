"""Identify the invisible directions of the complex-spatial ensemble."""
import numpy as np
from shadowrdm import fock
from shadowrdm.pairs import PairBasis

rng = np.random.default_rng(42)

def haar_unitary(r, rng):
    a = (rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))) / np.sqrt(2)
    q, rr = np.linalg.qr(a)
    d = np.diag(rr)
    return q * (d / np.abs(d))

def lifted(u):
    r = u.shape[0]
    w = np.zeros((2 * r, 2 * r), dtype=u.dtype)
    w[:r, :r] = u
    w[r:, r:] = u
    return w

r_spatial = 4
pb = PairBasis(2 * r_spatial)
P = pb.size
iu, ju = np.triu_indices(P)
scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
blocks = pb.spin_blocks()

def svec_rows(m):
    x, y = m.real, m.imag
    R = x[:, :, None] * x[:, None, :] + y[:, :, None] * y[:, None, :]
    return R[:, iu, ju] * scale

rows = []
rng2 = np.random.default_rng(11)
for _ in range(80):
    u = haar_unitary(r_spatial, rng2)
    w = lifted(u)
    idx = np.asarray(pb.pairs)
    i, j = idx[:, 0], idx[:, 1]
    m = np.empty((P, P), dtype=complex)
    for a, (p, q) in enumerate(pb.pairs):
        m[a] = w[p, i] * w[q, j] - w[p, j] * w[q, i]
    rows.append(svec_rows(m))
A = np.concatenate(rows)

# SVD -> null space of row span
U_, S_, Vt = np.linalg.svd(A, full_matrices=True)
null = Vt[np.sum(S_ > 1e-9):]
print("null dim:", null.shape[0], "of", Vt.shape[0])

# classify null vectors by spin-block support
def unsvec(v):
    M = np.zeros((P, P))
    M[iu, ju] = v / scale
    M = M + M.T - np.diag(np.diag(M))
    return M

aa, ab, bb = blocks["aa"], blocks["ab"], blocks["bb"]
support = {"aa": 0, "bb": 0, "ab": 0, "aabb": 0, "other": 0}
phys_null = []
for v in null:
    M = unsvec(v)
    n_aa = np.linalg.norm(M[np.ix_(aa, aa)])
    n_bb = np.linalg.norm(M[np.ix_(bb, bb)])
    n_ab = np.linalg.norm(M[np.ix_(ab, ab)])
    n_cross_aabb = np.linalg.norm(M[np.ix_(aa, bb)])
    n_cross_aaab = np.linalg.norm(M[np.ix_(aa, ab)]) + np.linalg.norm(M[np.ix_(bb, ab)])
    tot = np.linalg.norm(M)
    tag = max([("aa", n_aa), ("bb", n_bb), ("ab", n_ab), ("aabb", n_cross_aabb),
               ("other", n_cross_aaab)], key=lambda t: t[1])[0]
    support[tag] += 1
    # does it live in the Sz-conserving subspace (aa,bb,ab diagonal blocks)?
    sz_part = n_aa + n_bb + n_ab
    if sz_part > 1e-8:
        phys_null.append((v, {"aa": n_aa, "bb": n_bb, "ab": n_ab}))
print("null support tags:", support)
print("Sz-conserving null directions:", len(phys_null))
for v, norms in phys_null:
    print("  norms per block:", {k: round(x, 4) for k, x in norms.items()})

# overlap of those with the FCI-like ground state of a real H4-style Hamiltonian
# quick fake one-/two-electron integrals: random symmetric, repulsion-like
lay = fock.SpinOrbitalLayout(4)
basis = fock.enumerate_basis(lay, 4, 0)

class FakeMO:
    r_spatial = 4
    def __init__(self, rng):
        h = rng.standard_normal((4, 4))
        self.h = 0.5 * (h + h.T)
        a = rng.standard_normal((4, 4, 4, 4))
        a = a + a.transpose(1, 0, 2, 3)[...]
        # build an 8-fold symmetric chemist tensor
        v = np.zeros((4, 4, 4, 4))
        for p in range(4):
            for q in range(p + 1):
                for r_ in range(4):
                    for s in range(r_ + 1):
                        if (p, q) < (r_, s):
                            continue
                        val = rng.standard_normal() * 0.3
                        for a_, b_ in ((p, q), (q, p)):
                            for c_, d_ in ((r_, s), (s, r_)):
                                v[a_, b_, c_, d_] = val
                                v[c_, d_, a_, b_] = val
        self.v = v
        self.e_core = 0.0

mo = FakeMO(np.random.default_rng(5))
H = fock.build_hamiltonian(mo, basis)
e0, psi = fock.ground_state(H, basis)
d2 = fock.compute_rdm2(psi)
d_svec = d2.packed[iu, ju] * scale
print("\nground-state overlap with null directions:")
for v, norms in phys_null:
    print(f"  <null, D_gs> = {abs(np.dot(v, d_svec)):.3e}  blocks {max(norms, key=norms.get)}")

# random Sz=0 state overlap for contrast
psi_r = fock.random_wavefunction(basis, np.random.default_rng(3))
d2r = fock.compute_rdm2(psi_r)
dr_svec = d2r.packed[iu, ju] * scale
print("random-state overlap with null directions:")
for v, norms in phys_null:
    print(f"  <null, D_rand> = {abs(np.dot(v, dr_svec)):.3e}")

# also: a spin-flip-symmetric random state (c real, invariant under alpha<->beta swap)
def spinflip_partner(det, r):
    a = det & ((1 << r) - 1)
    b = det >> r
    return (a << r) | b
c = np.random.default_rng(9).standard_normal(len(basis))
for bidx, det in enumerate(basis.dets):
    p = basis.index[spinflip_partner(int(det), 4)]
    if p > bidx:
        c[p] = c[bidx]
c /= np.linalg.norm(c)
psi_s = fock.Wavefunction(basis, c)
d2s = fock.compute_rdm2(psi_s)
ds_svec = d2s.packed[iu, ju] * scale
print("spin-flip-symmetric state overlap with null directions:")
for v, norms in phys_null:
    print(f"  <null, D_sym> = {abs(np.dot(v, ds_svec)):.3e}")
