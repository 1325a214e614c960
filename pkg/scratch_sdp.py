"""Validate f_Q/f_G maps, constraint assembly, and the boundary-point solver."""
import numpy as np
import time
from itertools import combinations
from shadowrdm import chem, fock, sdp, shadows
from shadowrdm.pairs import PairBasis

rng = np.random.default_rng(1)

# --- operator-level oracles for Q and G
def q_oracle(wfn):
    """<a_i a_j a+_l a+_k> packed."""
    basis = wfn.basis
    r = basis.layout.r_so
    pb = PairBasis(r)
    P = pb.size
    out = np.zeros((P, P))
    for bidx, det in enumerate(basis.dets):
        det = int(det); cb = wfn.coeffs[bidx]
        if cb == 0: continue
        free = [i for i in range(r) if not det >> i & 1]
        for k, l in combinations(free, 2):
            # a+_l a+_k |det>: create k then l
            d1, sk = fock.create(det, k)
            d1, sl = fock.create(d1, l)
            s1 = sk * sl
            occ1 = [i for i in range(r) if d1 >> i & 1]
            for i, j in combinations(occ1, 2):
                # a_i a_j: apply a_j then a_i
                d2, sj = fock.annihilate(d1, j)
                d2, si = fock.annihilate(d2, i)
                row = basis.index.get(d2)
                if row is not None:
                    out[pb.index[(i, j)], pb.index[(k, l)]] += \
                        wfn.coeffs[row] * s1 * sj * si * cb
    return 0.5 * (out + out.T)

def g_oracle(wfn):
    """<a+_i a_j a+_l a_k> full composite basis."""
    basis = wfn.basis
    r = basis.layout.r_so
    out = np.zeros((r * r, r * r))
    for bidx, det in enumerate(basis.dets):
        det = int(det); cb = wfn.coeffs[bidx]
        if cb == 0: continue
        for k in range(r):
            o1 = fock.annihilate(det, k)
            if o1 is None: continue
            d1, s1 = o1
            for l in range(r):
                o2 = fock.create(d1, l)
                if o2 is None: continue
                d2, s2 = o2
                for j in range(r):
                    o3 = fock.annihilate(d2, j)
                    if o3 is None: continue
                    d3, s3 = o3
                    for i in range(r):
                        o4 = fock.create(d3, i)
                        if o4 is None: continue
                        d4, s4 = o4
                        row = basis.index.get(d4)
                        if row is not None:
                            out[i * r + j, k * r + l] += \
                                wfn.coeffs[row] * s1 * s2 * s3 * s4 * cb
    return out

lay = fock.SpinOrbitalLayout(3)
basis = fock.enumerate_basis(lay, 3, None)
errq = errg = 0.0
for t in range(5):
    w = fock.random_wavefunction(basis, rng)
    d2 = fock.compute_rdm2(w)
    errq = max(errq, np.max(np.abs(sdp.f_q_map(d2) - q_oracle(w))))
    errg = max(errg, np.max(np.abs(sdp.f_g_map(d2) - g_oracle(w))))
print("f_Q vs oracle:", errq)
print("f_G vs oracle:", errg)

# trace identities
w = fock.random_wavefunction(basis, rng)
d2 = fock.compute_rdm2(w)
q = sdp.f_q_map(d2)
g = sdp.f_g_map(d2)
r_so, n = 6, 3
print("Tr Q:", np.trace(q), "expect", (r_so-n)*(r_so-n-1)/2)
print("Tr G:", np.trace(g), "expect", n*(r_so-n+1))
print("Q min eig:", np.linalg.eigvalsh(q)[0], " G min eig:", np.linalg.eigvalsh(g)[0])

# --- H2 system: feasibility of the FCI point + energy-only solve
geo = chem.Geometry(((1,(0,0,0)),(1,(0,0,1.4))))
ao = chem.compute_ao_integrals(geo)
scf = chem.rhf_scf(ao, 2)
mo = chem.transform_to_mo(ao, scf.mo_coeffs, 2)
b2 = fock.enumerate_basis(mo.layout, 2, 0)
e0, psi = fock.ground_state(fock.build_hamiltonian(mo, b2), b2)
d2 = fock.compute_rdm2(psi)
k2 = chem.build_reduced_hamiltonian(mo)

cfg = sdp.SolverConfig(mode="bi", conditions="dqg", w=1.0)
samples = shadows.generate_samples(psi, shadows.ShotBudget(8), "exact", seed=0)
prob = sdp.assemble_program(k2, samples, cfg, 2, mo.layout)
print("\nH2 problem constraints:", prob.n_constraints)

# feasibility at the FCI assignment
x_fci = {"D": d2.packed, "Q": sdp.f_q_map(d2), "G": sdp.f_g_map(d2),
         "E1": np.zeros_like(d2.packed), "E2": np.zeros_like(d2.packed)}
resid = prob.apply_a(x_fci) - prob.b_vector()
print("FCI point feasibility:", np.max(np.abs(resid)))

# conditions=d energy-only has exactly 1 constraint
cfg_d = sdp.SolverConfig(mode="energy", conditions="d")
prob_d = sdp.assemble_program(k2, None, cfg_d, 2, mo.layout)
print("energy-only/d constraints:", prob_d.n_constraints)

# --- energy-only DQG on H2: should hit FCI (N=2 exact)
t0 = time.time()
cfg_e = sdp.SolverConfig(mode="energy", conditions="dqg", eps_primal=1e-7, eps_dual=1e-7)
prob_e = sdp.assemble_program(k2, None, cfg_e, 2, mo.layout)
res = sdp.solve_boundary_point(prob_e)
print(f"\nH2 energy-only DQG: E={res.report.energy:.9f} FCI={e0+mo.e_core:.9f} "
      f"gap={res.report.energy-(e0+mo.e_core):.2e} iters={res.report.iterations} "
      f"cg={res.report.cg_iterations} t={time.time()-t0:.1f}s conv={res.report.converged}")
print("   min eigs:", {k: f"{v:.1e}" for k, v in res.report.min_eig.items()})

# --- H4 energy-only DQG: lower bound within 5 mHa
geo4 = chem.hydrogen_chain(4)
ao4 = chem.compute_ao_integrals(geo4)
scf4 = chem.rhf_scf(ao4, 4)
mo4 = chem.transform_to_mo(ao4, scf4.mo_coeffs, 4)
b4 = fock.enumerate_basis(mo4.layout, 4, 0)
e04, psi4 = fock.ground_state(fock.build_hamiltonian(mo4, b4), b4)
k24 = chem.build_reduced_hamiltonian(mo4)
t0 = time.time()
cfg4 = sdp.SolverConfig(mode="energy", conditions="dqg")
prob4 = sdp.assemble_program(k24, None, cfg4, 4, mo4.layout)
res4 = sdp.solve_boundary_point(prob4)
efci4 = e04 + mo4.e_core
print(f"\nH4 energy-only DQG: E={res4.report.energy:.9f} FCI={efci4:.9f} "
      f"gap={res4.report.energy-efci4:.2e} iters={res4.report.iterations} "
      f"cg={res4.report.cg_iterations} t={time.time()-t0:.1f}s conv={res4.report.converged}")

# --- fit-only on exact shadows: recover FCI D
t0 = time.time()
d24 = fock.compute_rdm2(psi4)
samples4 = shadows.generate_samples(psi4, shadows.ShotBudget(24), "exact", seed=5)
cfg_f = sdp.SolverConfig(mode="fit", conditions="dqg")
d_rec, rep = sdp.sv2rdm_reconstruct(k24, samples4, cfg_f, 4, mo4.layout)
frob = np.linalg.norm(d_rec.tensor - d24.tensor)
print(f"\nH4 fit-only DQG exact shadows: frob={frob:.2e} slack={rep.slack_trace:.2e} "
      f"iters={rep.iterations} t={time.time()-t0:.1f}s conv={rep.converged}")
