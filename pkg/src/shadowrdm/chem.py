"""Molecular integrals for the energy functional.

A closed-form s-type Gaussian engine plus restricted Hartree-Fock covers
hydrogen systems in a minimal basis; arbitrary active spaces enter through
the FCIDUMP reader.  Units are Bohr and Hartree throughout.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.special

from .fock import SpinOrbitalLayout
from .pairs import PairBasis

ANGSTROM_TO_BOHR = 1.8897259886

# STO-3G hydrogen 1s: (exponent, contraction coefficient) per primitive,
# validated against public basis-set repository data.
STO3G_H = (
    (3.42525091, 0.15432897),
    (0.62391373, 0.53532814),
    (0.16885540, 0.44463454),
)

__all__ = [
    "Geometry",
    "ContractedSGaussian",
    "AOIntegralSet",
    "MOIntegrals",
    "ReducedHamiltonian",
    "ScfError",
    "FcidumpError",
    "boys_f0",
    "compute_ao_integrals",
    "rhf_scf",
    "transform_to_mo",
    "parse_fcidump",
    "write_fcidump",
    "build_reduced_hamiltonian",
    "sto3g_hydrogen",
    "hydrogen_chain",
    "h4_rectangle",
]


class ScfError(RuntimeError):
    """Self-consistent field iteration failed to converge."""


class FcidumpError(ValueError):
    """Malformed FCIDUMP content."""


@dataclass(frozen=True)
class Geometry:
    """Nuclear charges and positions in Bohr."""

    atoms: tuple[tuple[int, tuple[float, float, float]], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("geometry needs at least one atom")
        for z, xyz in self.atoms:
            if not all(math.isfinite(c) for c in xyz):
                raise ValueError("non-finite nuclear coordinate")

    @classmethod
    def from_json(cls, doc) -> "Geometry":
        """Parse {"atoms": [{"Z": 1, "xyz": [x,y,z]}], "units": "bohr"|"angstrom"}."""
        if isinstance(doc, str):
            doc = json.loads(doc)
        unknown = set(doc) - {"atoms", "units"}
        if unknown:
            raise ValueError(f"unknown geometry keys: {sorted(unknown)}")
        units = doc.get("units", "bohr")
        if units not in ("bohr", "angstrom"):
            raise ValueError(f"unknown units {units!r}")
        factor = ANGSTROM_TO_BOHR if units == "angstrom" else 1.0
        atoms = []
        for entry in doc["atoms"]:
            bad = set(entry) - {"Z", "xyz"}
            if bad:
                raise ValueError(f"unknown atom keys: {sorted(bad)}")
            x, y, z = entry["xyz"]
            atoms.append((int(entry["Z"]),
                          (factor * float(x), factor * float(y), factor * float(z))))
        return cls(tuple(atoms))

    def to_json(self) -> dict:
        return {"atoms": [{"Z": z, "xyz": list(xyz)} for z, xyz in self.atoms],
                "units": "bohr"}

    def nuclear_repulsion(self) -> float:
        e = 0.0
        for a in range(len(self.atoms)):
            za, ra = self.atoms[a]
            for b in range(a + 1, len(self.atoms)):
                zb, rb = self.atoms[b]
                e += za * zb / math.dist(ra, rb)
        return e


def hydrogen_chain(n_atoms: int, spacing: float = ANGSTROM_TO_BOHR) -> Geometry:
    """Linear chain of hydrogens along z, equally spaced (Bohr)."""
    return Geometry(tuple((1, (0.0, 0.0, i * spacing)) for i in range(n_atoms)))


def h4_rectangle(rx: float, ry: float) -> Geometry:
    """Four hydrogens at the corners of an rx-by-ry rectangle (Bohr)."""
    return Geometry((
        (1, (0.0, 0.0, 0.0)),
        (1, (rx, 0.0, 0.0)),
        (1, (0.0, ry, 0.0)),
        (1, (rx, ry, 0.0)),
    ))


@dataclass
class ContractedSGaussian:
    """Contracted s-type Gaussian shell, normalized to unit self-overlap."""

    center: tuple[float, float, float]
    primitives: tuple[tuple[float, float], ...]  # (exponent, coefficient)

    def __post_init__(self):
        if any(alpha <= 0 for alpha, _ in self.primitives):
            raise ValueError("Gaussian exponents must be positive")
        # normalize each primitive, then the contraction
        prims = [(a, c * (2.0 * a / math.pi) ** 0.75) for a, c in self.primitives]
        self_overlap = 0.0
        for a1, c1 in prims:
            for a2, c2 in prims:
                self_overlap += c1 * c2 * (math.pi / (a1 + a2)) ** 1.5
        scale = 1.0 / math.sqrt(self_overlap)
        self.primitives = tuple((a, c * scale) for a, c in prims)


def sto3g_hydrogen(center: Sequence[float]) -> ContractedSGaussian:
    return ContractedSGaussian(tuple(float(c) for c in center), STO3G_H)


def basis_for_geometry(geometry: Geometry) -> list[ContractedSGaussian]:
    """One STO-3G s shell per atom; only hydrogen has embedded parameters."""
    shells = []
    for z, xyz in geometry.atoms:
        if z != 1:
            raise ValueError(
                f"no embedded basis for Z={z}; supply integrals via FCIDUMP")
        shells.append(sto3g_hydrogen(xyz))
    return shells


def boys_f0(x):
    """Boys function F0(x) = integral_0^1 exp(-x t^2) dt, |error| <= 1e-12."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("boys_f0 requires x >= 0")
    small = x < 1e-3
    out = np.empty_like(x)
    xs = x[small]
    out[small] = 1.0 - xs / 3.0 + xs**2 / 10.0 - xs**3 / 42.0
    xl = x[~small]
    out[~small] = 0.5 * np.sqrt(np.pi / xl) * scipy.special.erf(np.sqrt(xl))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass
class AOIntegralSet:
    """Atomic-orbital integrals: overlap, kinetic, nuclear attraction,
    chemist-notation ERIs (pq|rs), and the nuclear repulsion energy."""

    s: np.ndarray
    t: np.ndarray
    vne: np.ndarray
    eri: np.ndarray
    e_nuc: float

    @property
    def n_orbitals(self) -> int:
        return self.s.shape[0]


def compute_ao_integrals(geometry: Geometry,
                         basis: Optional[list[ContractedSGaussian]] = None
                         ) -> AOIntegralSet:
    """Closed-form integrals over contracted s-type Gaussians."""
    if basis is None:
        basis = basis_for_geometry(geometry)
    n = len(basis)
    centers = [np.asarray(sh.center) for sh in basis]
    s = np.zeros((n, n))
    t = np.zeros((n, n))
    vne = np.zeros((n, n))
    eri = np.zeros((n, n, n, n))

    for p in range(n):
        for q in range(p + 1):
            ab2 = float(np.sum((centers[p] - centers[q]) ** 2))
            s_pq = t_pq = v_pq = 0.0
            for a1, c1 in basis[p].primitives:
                for a2, c2 in basis[q].primitives:
                    gamma = a1 + a2
                    mu = a1 * a2 / gamma
                    pref = c1 * c2 * math.exp(-mu * ab2)
                    center = (a1 * centers[p] + a2 * centers[q]) / gamma
                    s00 = (math.pi / gamma) ** 1.5
                    s_pq += pref * s00
                    t_pq += pref * mu * (3.0 - 2.0 * mu * ab2) * s00
                    for z, xyz in geometry.atoms:
                        pc2 = float(np.sum((center - np.asarray(xyz)) ** 2))
                        v_pq -= pref * z * (2.0 * math.pi / gamma) \
                            * boys_f0(gamma * pc2)
            s[p, q] = s[q, p] = s_pq
            t[p, q] = t[q, p] = t_pq
            vne[p, q] = vne[q, p] = v_pq

    for p in range(n):
        for q in range(p + 1):
            ab2 = float(np.sum((centers[p] - centers[q]) ** 2))
            pq = p * n + q
            for r in range(n):
                for u in range(r + 1):
                    if p * n + q < r * n + u:
                        continue
                    cd2 = float(np.sum((centers[r] - centers[u]) ** 2))
                    val = 0.0
                    for a1, c1 in basis[p].primitives:
                        for a2, c2 in basis[q].primitives:
                            g1 = a1 + a2
                            mu1 = a1 * a2 / g1
                            p1 = (a1 * centers[p] + a2 * centers[q]) / g1
                            k1 = c1 * c2 * math.exp(-mu1 * ab2)
                            for a3, c3 in basis[r].primitives:
                                for a4, c4 in basis[u].primitives:
                                    g2 = a3 + a4
                                    mu2 = a3 * a4 / g2
                                    p2 = (a3 * centers[r] + a4 * centers[u]) / g2
                                    k2 = c3 * c4 * math.exp(-mu2 * cd2)
                                    pq2 = float(np.sum((p1 - p2) ** 2))
                                    rho = g1 * g2 / (g1 + g2)
                                    val += k1 * k2 \
                                        * 2.0 * math.pi**2.5 \
                                        / (g1 * g2 * math.sqrt(g1 + g2)) \
                                        * boys_f0(rho * pq2)
                    for i, j in ((p, q), (q, p)):
                        for k, l in ((r, u), (u, r)):
                            eri[i, j, k, l] = val
                            eri[k, l, i, j] = val
    return AOIntegralSet(s, t, vne, eri, geometry.nuclear_repulsion())


@dataclass
class RHFResult:
    energy: float              # total energy including nuclear repulsion
    mo_coeffs: np.ndarray      # columns are molecular orbitals
    orbital_energies: np.ndarray
    n_iterations: int
    commutator_norm: float
    energy_history: list[float] = field(default_factory=list, repr=False)


def rhf_scf(ao: AOIntegralSet, n_electrons: int, max_iter: int = 200,
            damping: float = 0.5, n_damped: int = 5) -> RHFResult:
    """Roothaan SCF with symmetric orthogonalization and initial damping.

    Converged when the Fock-density commutator norm falls below 1e-8 and the
    energy change below 1e-10.
    """
    if n_electrons % 2:
        raise ValueError("restricted SCF requires an even electron count")
    n_occ = n_electrons // 2
    n = ao.n_orbitals
    if n_occ > n:
        raise ValueError("more electron pairs than orbitals")
    s_vals, s_vecs = np.linalg.eigh(ao.s)
    if s_vals[0] <= 1e-10:
        raise ValueError(
            f"overlap matrix not positive definite (min eig {s_vals[0]:.2e})")
    x = s_vecs @ np.diag(s_vals**-0.5) @ s_vecs.T
    hcore = ao.t + ao.vne

    def fock_matrix(dens):
        j = np.einsum("pqrs,rs->pq", ao.eri, dens)
        k = np.einsum("prqs,rs->pq", ao.eri, dens)
        return hcore + j - 0.5 * k

    def density(c):
        occ = c[:, :n_occ]
        return 2.0 * occ @ occ.T

    # core-Hamiltonian guess
    _, c0 = np.linalg.eigh(x.T @ hcore @ x)
    c = x @ c0
    dens = density(c)
    energy = 0.5 * np.sum(dens * (hcore + fock_matrix(dens))) + ao.e_nuc
    history = [energy]
    eps = None
    for it in range(1, max_iter + 1):
        f = fock_matrix(dens)
        comm = f @ dens @ ao.s - ao.s @ dens @ f
        comm_norm = np.linalg.norm(comm)
        fp = x.T @ f @ x
        eps, cp = np.linalg.eigh(fp)
        c = x @ cp
        new_dens = density(c)
        if it <= n_damped:
            new_dens = damping * new_dens + (1.0 - damping) * dens
        dens = new_dens
        new_energy = 0.5 * np.sum(dens * (hcore + fock_matrix(dens))) + ao.e_nuc
        de = abs(new_energy - energy)
        energy = new_energy
        history.append(energy)
        if comm_norm <= 1e-8 and de <= 1e-10:
            return RHFResult(energy, c, eps, it, comm_norm, history)
    raise ScfError(
        f"SCF not converged after {max_iter} iterations "
        f"(commutator norm {comm_norm:.2e}, dE {de:.2e})")


@dataclass
class MOIntegrals:
    """Spatial-orbital integrals in the molecular-orbital basis.

    h is the core Hamiltonian, v the chemist-notation ERIs (pq|rs), e_core
    the scalar shift (nuclear repulsion plus any frozen-core energy).
    """

    r_spatial: int
    n_electrons: int
    h: np.ndarray
    v: np.ndarray
    e_core: float
    ms2: int = 0

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        r = self.r_spatial
        if self.h.shape != (r, r) or self.v.shape != (r, r, r, r):
            raise ValueError("integral dimensions do not match r_spatial")

    @property
    def layout(self) -> SpinOrbitalLayout:
        return SpinOrbitalLayout(self.r_spatial)


def transform_to_mo(ao: AOIntegralSet, mo_coeffs: np.ndarray,
                    n_electrons: int) -> MOIntegrals:
    """Transform AO integrals into the MO basis (naive O(r^5) quarter steps)."""
    c = np.asarray(mo_coeffs, dtype=float)
    n = ao.n_orbitals
    if c.shape != (n, n):
        raise ValueError("coefficient matrix does not match the AO dimension")
    ortho = np.max(np.abs(c.T @ ao.s @ c - np.eye(n)))
    if ortho > 1e-8:
        raise ValueError(f"MO coefficients are not S-orthonormal ({ortho:.2e})")
    h = c.T @ (ao.t + ao.vne) @ c
    v = np.einsum("up,uqrs->pqrs", c, ao.eri, optimize=True)
    v = np.einsum("uq,purs->pqrs", c, v, optimize=True)
    v = np.einsum("ur,pqus->pqrs", c, v, optimize=True)
    v = np.einsum("us,pqru->pqrs", c, v, optimize=True)
    return MOIntegrals(n, n_electrons, h, v, ao.e_nuc)


# ---------------------------------------------------------------------------
# FCIDUMP
# ---------------------------------------------------------------------------

def parse_fcidump(text: str) -> MOIntegrals:
    """Read Molpro-convention FCIDUMP text.

    Header `&FCI NORB=..,NELEC=..,MS2=..,` possibly spanning lines up to
    `&END` (or `/`), then `value i j k l` records: chemist (ij|kl) ERIs,
    `value i j 0 0` one-electron elements, `value 0 0 0 0` the core energy.
    ORBSYM is accepted and ignored.
    """
    lines = text.splitlines()
    header_lines = []
    body_start = None
    for ln, line in enumerate(lines):
        header_lines.append(line)
        if "&END" in line.upper() or line.strip() == "/" or line.strip().endswith("/"):
            body_start = ln + 1
            break
    if body_start is None:
        raise FcidumpError("no &END terminator found in FCIDUMP header")
    header = " ".join(header_lines)
    if "&FCI" not in header.upper():
        raise FcidumpError("missing &FCI header")

    def header_int(name):
        m = re.search(rf"{name}\s*=\s*(-?\d+)", header, re.IGNORECASE)
        if not m:
            raise FcidumpError(f"missing {name} in FCIDUMP header")
        return int(m.group(1))

    norb = header_int("NORB")
    nelec = header_int("NELEC")
    ms2 = header_int("MS2") if re.search(r"MS2\s*=", header, re.IGNORECASE) else 0
    if norb < 1:
        raise FcidumpError(f"invalid NORB={norb}")

    h = np.zeros((norb, norb))
    v = np.zeros((norb, norb, norb, norb))
    e_core = 0.0
    for ln in range(body_start, len(lines)):
        line = lines[ln].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise FcidumpError(f"line {ln + 1}: expected 'value i j k l'")
        try:
            val = float(parts[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(p) for p in parts[1:])
        except ValueError as exc:
            raise FcidumpError(f"line {ln + 1}: non-numeric field") from exc
        for idx in (i, j, k, l):
            if idx < 0 or idx > norb:
                raise FcidumpError(f"line {ln + 1}: orbital index {idx} out of range")
        if i == j == k == l == 0:
            e_core = val
        elif k == 0 and l == 0:
            if i == 0 or j == 0:
                raise FcidumpError(f"line {ln + 1}: bad one-electron indices")
            h[i - 1, j - 1] = val
            h[j - 1, i - 1] = val
        elif l == 0 or k == 0:
            raise FcidumpError(f"line {ln + 1}: bad index pattern")
        else:
            a, b, c, d = i - 1, j - 1, k - 1, l - 1
            for p, q in ((a, b), (b, a)):
                for r, s in ((c, d), (d, c)):
                    v[p, q, r, s] = val
                    v[r, s, p, q] = val
    return MOIntegrals(norb, nelec, h, v, e_core, ms2=ms2)


def write_fcidump(mo: MOIntegrals, tol: float = 0.0) -> str:
    """Emit FCIDUMP text; symmetry-unique entries only, 17 significant digits."""
    n = mo.r_spatial
    out = [f" &FCI NORB={n},NELEC={mo.n_electrons},MS2={mo.ms2},",
           "  ORBSYM=" + "1," * n,
           "  ISYM=1,",
           " &END"]

    def fmt(val, i, j, k, l):
        return f" {val:.16e} {i:4d} {j:4d} {k:4d} {l:4d}"

    for i in range(n):
        for j in range(i + 1):
            ij = i * (i + 1) // 2 + j
            for k in range(i + 1):
                for l in range(k + 1):
                    kl = k * (k + 1) // 2 + l
                    if kl > ij:
                        continue
                    val = mo.v[i, j, k, l]
                    if abs(val) > tol:
                        out.append(fmt(val, i + 1, j + 1, k + 1, l + 1))
    for i in range(n):
        for j in range(i + 1):
            if abs(mo.h[i, j]) > tol:
                out.append(fmt(mo.h[i, j], i + 1, j + 1, 0, 0))
    out.append(fmt(mo.e_core, 0, 0, 0, 0))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Reduced Hamiltonian for the linear energy functional
# ---------------------------------------------------------------------------

@dataclass
class ReducedHamiltonian:
    """Packed coefficient matrix K such that sum(K * D_packed) + e_core equals
    the total energy of a 2-RDM with trace N(N-1)/2 in packed form."""

    layout: SpinOrbitalLayout
    n_electrons: int
    packed: np.ndarray
    e_core: float

    def __post_init__(self):
        self.packed = np.asarray(self.packed, dtype=float)
        P = PairBasis(self.layout.r_so).size
        if self.packed.shape != (P, P):
            raise ValueError(f"packed coefficients must be {P}x{P}")


def build_reduced_hamiltonian(mo: MOIntegrals, n_electrons: Optional[int] = None
                              ) -> ReducedHamiltonian:
    """Two-particle reduction of the Hamiltonian over spin orbitals.

    K[i,j,k,l] = (h_ik d_jl + h_jl d_ik) / (2(N-1)) + <ij|kl> / 2, packed
    against the antisymmetric pair basis so that the contraction with a
    packed 2-RDM gives sum_{ijkl} K[i,j,k,l] D[i,j,k,l].
    """
    n = mo.n_electrons if n_electrons is None else n_electrons
    if n < 2:
        raise ValueError("reduced Hamiltonian needs at least two electrons")
    r = mo.r_spatial
    r_so = 2 * r
    layout = SpinOrbitalLayout(r)
    pb = PairBasis(r_so)

    h_so = np.zeros((r_so, r_so))
    h_so[:r, :r] = mo.h
    h_so[r:, r:] = mo.h
    spat = np.concatenate([np.arange(r), np.arange(r)])
    same_spin = np.zeros((r_so, r_so))
    same_spin[:r, :r] = 1.0
    same_spin[r:, r:] = 1.0
    # physicist <ij|kl> over spin orbitals
    v_chem = mo.v[np.ix_(spat, spat, spat, spat)]  # indexed (i,k,j,l)
    v_phys = v_chem.transpose(0, 2, 1, 3) * same_spin[:, None, :, None] \
        * same_spin[None, :, None, :]

    eye = np.eye(r_so)
    k_tensor = (np.einsum("ik,jl->ijkl", h_so, eye)
                + np.einsum("jl,ik->ijkl", h_so, eye)) / (2.0 * (n - 1)) \
        + 0.5 * v_phys
    # antisymmetrized packing: sum over the four signed tensor images
    idx = np.asarray(pb.pairs)
    i, j = idx[:, 0], idx[:, 1]
    k, l = idx[:, 0], idx[:, 1]
    packed = (k_tensor[i[:, None], j[:, None], k[None, :], l[None, :]]
              - k_tensor[j[:, None], i[:, None], k[None, :], l[None, :]]
              - k_tensor[i[:, None], j[:, None], l[None, :], k[None, :]]
              + k_tensor[j[:, None], i[:, None], l[None, :], k[None, :]])
    packed = 0.5 * (packed + packed.T)
    return ReducedHamiltonian(layout, n, packed, mo.e_core)
