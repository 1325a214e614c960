"""Scratch validation of the Fock core before freezing tests."""
import numpy as np
from itertools import combinations
from shadowrdm import fock
from shadowrdm.pairs import PairBasis

rng = np.random.default_rng(0)

# --- basis enumeration counts
lay2 = fock.SpinOrbitalLayout(2)
b = fock.enumerate_basis(lay2, 2, 0)
print("r=2 N=2 sz2=0:", len(b), "(expect 4)")
lay4 = fock.SpinOrbitalLayout(4)
print("r=4 N=4 sz2=0:", len(fock.enumerate_basis(lay4, 4, 0)), "(expect 36)")
print("r=4 N=4 free:", len(fock.enumerate_basis(lay4, 4, None)), "(expect 70)")

# --- minor-determinant oracle for the rotation lift, real and complex
def lifted(u):
    r = u.shape[0]
    w = np.zeros((2 * r, 2 * r), dtype=u.dtype)
    w[:r, :r] = u
    w[r:, r:] = u
    return w

def minor_amplitude(w, det_to, det_from):
    rows = [i for i in range(w.shape[0]) if det_to >> i & 1]
    cols = [i for i in range(w.shape[0]) if det_from >> i & 1]
    return np.linalg.det(w[np.ix_(rows, cols)])

def haar_orthogonal(r, rng):
    a = rng.standard_normal((r, r))
    q, rr = np.linalg.qr(a)
    return q * np.sign(np.diag(rr))

def haar_unitary(r, rng):
    a = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    q, rr = np.linalg.qr(a)
    d = np.diag(rr)
    return q * (d / np.abs(d))

lay = fock.SpinOrbitalLayout(3)
basis = fock.enumerate_basis(lay, 3, 1)
for kind, sampler in [("orthogonal", haar_orthogonal), ("unitary", haar_unitary)]:
    worst = 0.0
    for trial in range(5):
        u = sampler(3, rng)
        w = lifted(u)
        for bidx, det in enumerate(basis.dets):
            e = np.zeros(len(basis)); e[bidx] = 1.0
            psi = fock.Wavefunction(basis, e)
            rot = fock.apply_orbital_unitary(psi, u)
            for tidx, det_to in enumerate(basis.dets):
                amp = minor_amplitude(w, int(det_to), int(det))
                worst = max(worst, abs(rot.coeffs[tidx] - amp))
    print(f"rotation lift vs minors ({kind}): max err {worst:.2e}")

# --- composition & norm preservation
basis44 = fock.enumerate_basis(lay4, 4, 0)
psi = fock.random_wavefunction(basis44, rng)
u1, u2 = haar_orthogonal(4, rng), haar_orthogonal(4, rng)
a = fock.apply_orbital_unitary(fock.apply_orbital_unitary(psi, u1), u2)
bb = fock.apply_orbital_unitary(psi, u2 @ u1)
print("composition err:", np.max(np.abs(a.coeffs - bb.coeffs)))

# --- rdm2: single determinant
lay22 = fock.SpinOrbitalLayout(2)
basisd = fock.enumerate_basis(lay22, 2, None)
det = 0b0011  # orbitals 0,1 occupied
e = np.zeros(len(basisd)); e[basisd.index[det]] = 1.0
d2 = fock.compute_rdm2(fock.Wavefunction(basisd, e))
pb = PairBasis(4)
i01 = pb.index[(0, 1)]
print("single det D[(01),(01)]:", d2.packed[i01, i01], " trace_full:", d2.trace_full)

# --- rdm2 vs element-wise apply_pair_operator oracle on random state
def rdm2_oracle(wfn):
    r = wfn.basis.layout.r_so
    t = np.zeros((r, r, r, r))
    for i in range(r):
        for j in range(r):
            for k in range(r):
                for l in range(r):
                    acc = 0.0
                    for bidx, det in enumerate(wfn.basis.dets):
                        out = fock.apply_pair_operator(int(det), i, j, k, l)
                        if out is None:
                            continue
                        d2_, s = out
                        row = wfn.basis.index.get(d2_)
                        if row is not None:
                            acc += wfn.coeffs[row] * s * wfn.coeffs[bidx]
                    t[i, j, k, l] = acc
    return t

lay3 = fock.SpinOrbitalLayout(3)
basis3 = fock.enumerate_basis(lay3, 2, 0)
w3 = fock.random_wavefunction(basis3, rng)
d2f = fock.compute_rdm2(w3)
torc = rdm2_oracle(w3)
print("rdm2 vs oracle:", np.max(np.abs(d2f.tensor - torc)))
print("trace_full:", d2f.trace_full, "expect", 2 * 1)

# --- rdm covariance under rotation
u = haar_orthogonal(3, rng)
w3r = fock.apply_orbital_unitary(w3, u)
d2r = fock.compute_rdm2(w3r)
wl = lifted(u)
cong = np.einsum("pi,qj,ijkl,rk,sl->pqrs", wl, wl, d2f.tensor, wl, wl)
print("rdm covariance err:", np.max(np.abs(d2r.tensor - cong)))
