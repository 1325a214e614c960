"""Validate the integral engine against known H2/STO-3G values and FCI."""
import numpy as np
from shadowrdm import chem, fock

geo = chem.Geometry(((1, (0.0, 0.0, 0.0)), (1, (0.0, 0.0, 1.4))))
ao = chem.compute_ao_integrals(geo)
print("S12:", ao.s[0, 1], "(expect ~0.6593)")
print("(11|11):", ao.eri[0, 0, 0, 0], "(expect ~0.7746)")
print("E_nuc:", ao.e_nuc, "(expect 0.714286)")

res = chem.rhf_scf(ao, 2)
print("E_RHF:", res.energy, "(expect ~ -1.1167)")

mo = chem.transform_to_mo(ao, res.mo_coeffs, 2)
lay = mo.layout
basis = fock.enumerate_basis(lay, 2, 0)
H = fock.build_hamiltonian(mo, basis)
e0, psi = fock.ground_state(H, basis)
print("E_FCI electronic:", e0, "total:", e0 + mo.e_core, "(expect ~ -1.1373)")

d2 = fock.compute_rdm2(psi)
k2 = chem.build_reduced_hamiltonian(mo)
e_func = fock.energy_from_rdm2(k2, d2)
print("E[2D] - E_FCI:", e_func - (e0 + mo.e_core))

d1 = fock.contract_to_rdm1(d2)
print("Tr(1D):", d1.trace, " 1D eigs:", np.linalg.eigvalsh(d1.matrix))

# HF determinant 2-RDM energy = RHF energy
c_hf = np.zeros(len(basis))
det_hf = (1 << 0) | (1 << lay.beta(0))
c_hf[basis.index[det_hf]] = 1.0
d2_hf = fock.compute_rdm2(fock.Wavefunction(basis, c_hf))
print("E[2D_HF] - E_RHF:", fock.energy_from_rdm2(k2, d2_hf) - res.energy)

# round trip fcidump
text = chem.write_fcidump(mo)
mo2 = chem.parse_fcidump(text)
print("fcidump roundtrip dh:", np.max(np.abs(mo2.h - mo.h)),
      "dv:", np.max(np.abs(mo2.v - mo.v)),
      "dE:", abs(mo2.e_core - mo.e_core))
H2 = fock.build_hamiltonian(mo2, basis)
e02, _ = fock.ground_state(H2, basis)
print("fci energy after roundtrip diff:", abs(e02 - e0))

# boys function vs quadrature
import scipy.integrate
for x in (0.0, 1e-5, 1e-3, 0.5, 1.0, 10.0, 100.0):
    ref = scipy.integrate.quad(lambda t: np.exp(-x * t * t), 0, 1, epsabs=1e-14)[0]
    print(f"F0({x}) err: {abs(chem.boys_f0(x) - ref):.2e}")

# H4 chain quick FCI
geo4 = chem.hydrogen_chain(4)
ao4 = chem.compute_ao_integrals(geo4)
r4 = chem.rhf_scf(ao4, 4)
mo4 = chem.transform_to_mo(ao4, r4.mo_coeffs, 4)
b4 = fock.enumerate_basis(mo4.layout, 4, 0)
e04, psi4 = fock.ground_state(fock.build_hamiltonian(mo4, b4), b4)
print("H4 1.0A: E_RHF", r4.energy, "E_FCI", e04 + mo4.e_core)
k24 = chem.build_reduced_hamiltonian(mo4)
d24 = fock.compute_rdm2(psi4)
print("H4 E[2D]-E_FCI:", fock.energy_from_rdm2(k24, d24) - (e04 + mo4.e_core))
print("H4 packed D min eig:", d24.min_eigenvalue(), "trace_full:", d24.trace_full)
