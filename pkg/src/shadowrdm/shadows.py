"""Randomized pair-occupation measurements.

Each measurement draws a Haar-random one-body unitary, rotates the state,
and records the expectation values S[p,q] = <n_p n_q> (p < q over spin
orbitals) either exactly, from finite sampling of determinants, or with a
Gaussian surrogate for the sampling noise.  Every measured value is a
linear functional of the packed 2-RDM; `build_constraint_rows` makes those
functionals explicit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import fock
from .fock import SpinOrbitalLayout, Wavefunction
from .pairs import PairBasis

__all__ = [
    "RngStream",
    "ShotBudget",
    "ShadowSample",
    "ShadowConstraintRow",
    "sample_haar_orthogonal",
    "sample_haar_unitary",
    "measure_exact",
    "measure_sampled",
    "measure_gaussian",
    "generate_samples",
    "build_constraint_rows",
    "wedge_rows",
    "measurement_rank",
    "save_samples",
    "load_samples",
]


@dataclass(frozen=True)
class RngStream:
    """Named random stream: (seed, stream) -> reproducible Philox generator.

    Philox is counter-based, so identical (seed, stream) pairs give identical
    sequences on any platform and streams are independent by construction.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ShotBudget:
    """Number of random unitaries and shots per unitary (0 shots = exact)."""

    n_unitaries: int
    shots_per_unitary: int = 0

    def __post_init__(self):
        if self.n_unitaries < 1:
            raise ValueError("need at least one unitary")
        if self.shots_per_unitary < 0:
            raise ValueError("shots must be nonnegative")

    @property
    def total_shots(self) -> int:
        return self.n_unitaries * max(self.shots_per_unitary, 1)

    @property
    def exact(self) -> bool:
        return self.shots_per_unitary == 0


@dataclass
class ShadowSample:
    """One measured unitary: the rotation, the pair-occupation matrix S
    (entries for p < q; diagonal unused and 0), and provenance."""

    unitary: np.ndarray
    s_matrix: np.ndarray
    mode: str                     # "exact" | "sampled" | "gaussian"
    shots: int = 0
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        self.unitary = np.asarray(self.unitary)
        self.s_matrix = np.asarray(self.s_matrix, dtype=float)
        if self.mode not in ("exact", "sampled", "gaussian"):
            raise ValueError(f"unknown measurement mode {self.mode!r}")

    @property
    def r_spatial(self) -> int:
        return self.unitary.shape[0]

    def pair_sum(self) -> float:
        return float(np.sum(np.triu(self.s_matrix, k=1)))


def sample_haar_orthogonal(r_spatial: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed real orthogonal matrix.

    QR of a standard Gaussian matrix with the sign convention diag(R) > 0,
    which makes the distribution exactly Haar over O(r).
    """
    a = rng.standard_normal((r_spatial, r_spatial))
    q, r = np.linalg.qr(a)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


def sample_haar_unitary(r_spatial: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed complex unitary (QR with phase fix diag(R) > 0)."""
    a = (rng.standard_normal((r_spatial, r_spatial))
         + 1j * rng.standard_normal((r_spatial, r_spatial))) / np.sqrt(2.0)
    q, r = np.linalg.qr(a)
    d = np.diag(r).copy()
    d[d == 0] = 1.0
    return q * (d / np.abs(d))


def _pair_occupation(probs: np.ndarray, occ: np.ndarray) -> np.ndarray:
    """S[p,q] = sum_b probs[b] occ[b,p] occ[b,q], zeroed at and below the diagonal."""
    s = (occ * probs[:, None]).T @ occ
    return np.triu(s, k=1)


def measure_exact(wfn: Wavefunction, unitary: np.ndarray,
                  seed: int = 0, stream: int = 0) -> ShadowSample:
    """Exact pair-occupation expectations of the rotated state."""
    rotated = fock.apply_orbital_unitary(wfn, unitary)
    probs = rotated.probabilities()
    occ = wfn.basis.occupancy_matrix()
    return ShadowSample(unitary, _pair_occupation(probs, occ), "exact",
                        0, seed, stream)


def measure_sampled(wfn: Wavefunction, unitary: np.ndarray, shots: int,
                    rng: np.random.Generator,
                    seed: int = 0, stream: int = 0) -> ShadowSample:
    """Finite-shot estimate: draw determinants i.i.d. from the rotated state.

    Sampling is by inverse CDF over the deterministic basis ordering, so a
    given generator state yields the same draws everywhere.
    """
    if shots < 1:
        raise ValueError("sampled mode needs at least one shot")
    rotated = fock.apply_orbital_unitary(wfn, unitary)
    probs = rotated.probabilities()
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    draws = np.searchsorted(cdf, rng.random(shots), side="right")
    counts = np.bincount(draws, minlength=len(probs)).astype(float)
    occ = wfn.basis.occupancy_matrix()
    s = _pair_occupation(counts / shots, occ)
    return ShadowSample(unitary, s, "sampled", shots, seed, stream)


def measure_gaussian(wfn: Wavefunction, unitary: np.ndarray, shots: int,
                     rng: np.random.Generator,
                     seed: int = 0, stream: int = 0) -> ShadowSample:
    """Gaussian surrogate for shot noise.

    Adds Normal(0, S(1-S)/M) element-wise to the exact values, the Bernoulli
    variance a single shot would have, then clips to [0, 1].
    """
    if shots < 1:
        raise ValueError("gaussian mode needs at least one shot")
    exact = measure_exact(wfn, unitary)
    s = exact.s_matrix
    sigma = np.sqrt(np.clip(s * (1.0 - s), 0.0, None) / shots)
    noise = rng.standard_normal(s.shape) * sigma
    noisy = np.clip(np.triu(s + noise, k=1), 0.0, 1.0)
    return ShadowSample(unitary, noisy, "gaussian", shots, seed, stream)


def generate_samples(wfn: Wavefunction, budget: ShotBudget, mode: str,
                     seed: int, ensemble: str = "unitary",
                     stream_base: int = 0) -> list[ShadowSample]:
    """Draw budget.n_unitaries measurement samples with per-unitary streams.

    mode "exact" ignores shots; "sampled" and "gaussian" use
    budget.shots_per_unitary.  ensemble picks the Haar family: "unitary"
    (complex, default; identifies all Sz-conserving 2-RDM components of
    spin-symmetric states) or "orthogonal" (real; rank-deficient for
    correlated states, kept for comparison studies).
    """
    if mode not in ("exact", "sampled", "gaussian"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode != "exact" and budget.shots_per_unitary < 1:
        raise ValueError(f"mode {mode!r} requires shots_per_unitary >= 1")
    if ensemble == "unitary":
        sampler = sample_haar_unitary
    elif ensemble == "orthogonal":
        sampler = sample_haar_orthogonal
    else:
        raise ValueError(f"unknown ensemble {ensemble!r}")
    r = wfn.basis.layout.r_spatial
    samples = []
    for n in range(budget.n_unitaries):
        stream = stream_base + n
        rng = RngStream(seed, stream).generator()
        u = sampler(r, rng)
        if mode == "exact":
            samples.append(measure_exact(wfn, u, seed, stream))
        elif mode == "sampled":
            samples.append(measure_sampled(wfn, u, budget.shots_per_unitary,
                                           rng, seed, stream))
        else:
            samples.append(measure_gaussian(wfn, u, budget.shots_per_unitary,
                                            rng, seed, stream))
    return samples


# ---------------------------------------------------------------------------
# Linear functionals of the packed 2-RDM
# ---------------------------------------------------------------------------

def lift_to_spin_orbitals(u: np.ndarray) -> np.ndarray:
    """Block-diagonal spin-orbital matrix diag(u, u)."""
    r = u.shape[0]
    w = np.zeros((2 * r, 2 * r), dtype=u.dtype)
    w[:r, :r] = u
    w[r:, r:] = u
    return w


def wedge_rows(u: np.ndarray, pair_basis: PairBasis) -> np.ndarray:
    """Matrix of wedge vectors m[(pq), (ij)] = W_pi W_qj - W_pj W_qi.

    W is the spin-orbital lift of the spatial unitary u.  Row (pq) applied
    as the quadratic form m+ Dp m against the packed 2-RDM yields the
    measured value S[p,q]; this is the congruence transform written out in
    the antisymmetric pair basis.
    """
    w = lift_to_spin_orbitals(np.asarray(u))
    idx = np.asarray(pair_basis.pairs)
    i, j = idx[:, 0], idx[:, 1]
    p, q = i, j  # measurement pairs run over the same pair list
    return (w[p[:, None], i[None, :]] * w[q[:, None], j[None, :]]
            - w[p[:, None], j[None, :]] * w[q[:, None], i[None, :]])


@dataclass
class ShadowConstraintRow:
    """One measured value as a linear functional of the packed 2-RDM.

    The functional is Re(conj(m)^T Dp m) where m is the wedge vector of the
    measurement pair; `matrix` materializes the symmetric coefficient
    matrix, `apply` evaluates the functional.
    """

    sample_index: int
    pair: tuple[int, int]
    wedge: np.ndarray
    target: float

    def matrix(self) -> np.ndarray:
        x, y = self.wedge.real, self.wedge.imag
        return np.outer(x, x) + np.outer(y, y)

    def apply(self, packed: np.ndarray) -> float:
        m = self.wedge
        return float(np.real(np.conj(m) @ packed @ m))


def build_constraint_rows(samples: Sequence[ShadowSample],
                          layout: SpinOrbitalLayout) -> list[ShadowConstraintRow]:
    """All (sample, p<q) functionals with their measured targets."""
    pb = PairBasis(layout.r_so)
    rows = []
    for n, sample in enumerate(samples):
        if sample.r_spatial != layout.r_spatial:
            raise ValueError("sample layout does not match")
        m = wedge_rows(sample.unitary, pb)
        for a, (p, q) in enumerate(pb.pairs):
            rows.append(ShadowConstraintRow(n, (p, q), m[a],
                                            float(sample.s_matrix[p, q])))
    return rows


@dataclass
class RowStacks:
    """Batched form of the constraint rows, grouped by spin-pair block.

    For spatial unitaries the wedge vectors decompose over the aa / bb / ab
    pair groups, so each measured row has support in exactly one group.
    Kept per group: the packed-pair indices of the group, the
    (n_samples, d, d) complex wedge stack (sample, measured pair, packed
    component), targets and flat row positions.  Row order matches
    build_constraint_rows (sample-major, then pair order).
    """

    pair_basis: PairBasis
    n_samples: int
    groups: dict[str, np.ndarray]
    wedges: dict[str, np.ndarray]      # (n_samples, d, d) complex
    targets: dict[str, np.ndarray]     # (n_samples, d)
    positions: dict[str, np.ndarray]   # (n_samples, d) flat row indices
    n_rows: int

    @classmethod
    def from_samples(cls, samples: Sequence[ShadowSample],
                     layout: SpinOrbitalLayout) -> "RowStacks":
        pb = PairBasis(layout.r_so)
        groups = pb.spin_blocks()
        P = pb.size
        n_samples = len(samples)
        wedges = {k: np.empty((n_samples, len(idx), len(idx)), dtype=complex)
                  for k, idx in groups.items()}
        targets = {k: np.empty((n_samples, len(idx)))
                   for k, idx in groups.items()}
        positions = {k: np.empty((n_samples, len(idx)), dtype=np.intp)
                     for k, idx in groups.items()}
        pairs = np.asarray(pb.pairs)
        for n, sample in enumerate(samples):
            if sample.r_spatial != layout.r_spatial:
                raise ValueError("sample layout does not match")
            m = wedge_rows(sample.unitary, pb)
            svals = sample.s_matrix[pairs[:, 0], pairs[:, 1]]
            for k, idx in groups.items():
                wedges[k][n] = m[np.ix_(idx, idx)]
                targets[k][n] = svals[idx]
                positions[k][n] = n * P + idx
        return cls(pb, n_samples, groups, wedges, targets, positions,
                   n_samples * P)

    def apply(self, packed: np.ndarray,
              extra: Optional[np.ndarray] = None) -> np.ndarray:
        """Evaluate every functional against packed (+ per-sample extra).

        extra, when given, is an (n_samples, P, P) stack added sample-wise
        (the slack correction E1 - E2 of each measured unitary).
        """
        out = np.empty(self.n_rows)
        for k, idx in self.groups.items():
            sub = packed[np.ix_(idx, idx)]
            m = self.wedges[k]
            if extra is None:
                vals = np.einsum("sai,ij,saj->sa", np.conj(m), sub, m,
                                 optimize=True).real
            else:
                eff = sub[None, :, :] + extra[:, idx[:, None], idx[None, :]]
                vals = np.einsum("sai,sij,saj->sa", np.conj(m), eff, m,
                                 optimize=True).real
            out[self.positions[k].ravel()] = vals.ravel()
        return out

    # backwards-friendly alias used by tests and the least-squares path
    def apply_packed(self, packed: np.ndarray) -> np.ndarray:
        return self.apply(packed)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """sum_rows y_row * Re(conj(m) m^T), scattered into one packed matrix."""
        P = self.pair_basis.size
        out = np.zeros((P, P))
        for k, idx in self.groups.items():
            m = self.wedges[k]
            yk = y[self.positions[k].ravel()].reshape(self.n_samples, -1)
            sub = np.einsum("sa,sai,saj->ij", yk, np.conj(m), m,
                            optimize=True).real
            out[np.ix_(idx, idx)] += sub
        return 0.5 * (out + out.T)

    def adjoint_per_sample(self, y: np.ndarray) -> np.ndarray:
        """Like adjoint but kept per sample: (n_samples, P, P)."""
        P = self.pair_basis.size
        out = np.zeros((self.n_samples, P, P))
        for k, idx in self.groups.items():
            m = self.wedges[k]
            yk = y[self.positions[k].ravel()].reshape(self.n_samples, -1)
            sub = np.einsum("sa,sai,saj->sij", yk, np.conj(m), m,
                            optimize=True).real
            out[:, idx[:, None], idx[None, :]] += sub
        return 0.5 * (out + out.transpose(0, 2, 1))

    def row_norms(self) -> np.ndarray:
        """Frobenius norms of the symmetric coefficient matrices, per row."""
        out = np.empty(self.n_rows)
        for k in self.groups:
            m = self.wedges[k]
            x, y = m.real, m.imag
            xx = np.einsum("sai,sai->sa", x, x)
            yy = np.einsum("sai,sai->sa", y, y)
            xy = np.einsum("sai,sai->sa", x, y)
            out[self.positions[k].ravel()] = \
                np.sqrt(xx**2 + yy**2 + 2.0 * xy**2).ravel()
        return out

    def all_targets(self) -> np.ndarray:
        out = np.empty(self.n_rows)
        for k in self.groups:
            out[self.positions[k].ravel()] = self.targets[k].ravel()
        return out


def measurement_rank(samples: Sequence[ShadowSample], layout: SpinOrbitalLayout,
                     tol: float = 1e-9) -> dict[str, int]:
    """Effective rank of the stacked constraint rows, per spin-pair group.

    Diagnostic for how many unitaries are needed before the row space stops
    growing; computed from the Gram matrix in symmetric (svec) coordinates.
    """
    stacks = RowStacks.from_samples(samples, layout)
    ranks = {}
    for k, idx in stacks.groups.items():
        d = len(idx)
        iu, ju = np.triu_indices(d)
        scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
        m = stacks.wedges[k]
        x, y = m.real, m.imag
        rows = (x[:, :, None] * x[:, None, :]
                + y[:, :, None] * y[:, None, :])[:, iu, ju] * scale
        gram = rows.T @ rows
        eigs = np.linalg.eigvalsh(gram)
        ranks[k] = int(np.sum(eigs > tol * max(eigs[-1], 1e-300)))
    ranks["total"] = sum(v for k, v in ranks.items() if k != "total")
    return ranks


# ---------------------------------------------------------------------------
# JSON-lines interchange
# ---------------------------------------------------------------------------

def save_samples(samples: Iterable[ShadowSample], path) -> None:
    """One JSON record per unitary; complex unitaries store a second array
    with the imaginary part."""
    with open(path, "w") as fh:
        for sample in samples:
            r = sample.r_spatial
            iu, ju = np.triu_indices(2 * r, k=1)
            rec = {
                "r_spatial": r,
                "unitary": [float(v) for v in sample.unitary.real.ravel()],
                "mode": sample.mode,
                "shots": sample.shots,
                "S": [float(v) for v in sample.s_matrix[iu, ju]],
                "seed": sample.seed,
                "stream": sample.stream,
            }
            if np.iscomplexobj(sample.unitary):
                rec["unitary_im"] = [float(v) for v in sample.unitary.imag.ravel()]
            fh.write(json.dumps(rec) + "\n")


def load_samples(path) -> list[ShadowSample]:
    samples = []
    with open(path) as fh:
        for ln, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {ln + 1}: invalid JSON") from exc
            missing = {"r_spatial", "unitary", "mode", "shots", "S", "seed",
                       "stream"} - set(rec)
            if missing:
                raise ValueError(f"line {ln + 1}: missing fields {sorted(missing)}")
            r = int(rec["r_spatial"])
            u = np.asarray(rec["unitary"], dtype=float).reshape(r, r)
            if "unitary_im" in rec:
                u = u + 1j * np.asarray(rec["unitary_im"],
                                        dtype=float).reshape(r, r)
            s = np.zeros((2 * r, 2 * r))
            iu, ju = np.triu_indices(2 * r, k=1)
            s[iu, ju] = np.asarray(rec["S"], dtype=float)
            samples.append(ShadowSample(u, s, rec["mode"], int(rec["shots"]),
                                        int(rec["seed"]), int(rec["stream"])))
    return samples
