"""Flat line and Atiyah bundles over a torus via holonomy representations.

A flat rank-r bundle is a commuting pair of invertible matrices
(rho(1), rho(tau)).  Degree-zero line bundles are the pairs
(e^{i phi}, e^{i theta}); the indecomposable Atiyah bundle is realized by
rho(1) = e^{i phi} I, rho(tau) = e^{i theta} A_delta with A_delta unipotent
upper triangular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (ConvergenceError, DomainError, InvalidCoverError,
                     ShapeError)
from .lattice import CoverSpec, Lattice, cover_lattice, wirtinger_factors
from .sections import SectionGrid


def principal_angle(x: float) -> float:
    """Wrap an angle into the principal range (-pi, pi]."""
    a = math.remainder(x, 2 * math.pi)
    if a <= -math.pi + 1e-300 or a == -math.pi:
        a = math.pi
    return a


@dataclass(frozen=True)
class LineHolonomy:
    """Holonomy angles of a flat unitary line bundle around (1, tau)."""

    phi: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "phi", principal_angle(self.phi))
        object.__setattr__(self, "theta", principal_angle(self.theta))

    def is_trivial(self, tol: float = 1e-12) -> bool:
        return abs(self.phi) <= tol and abs(self.theta) <= tol

    def dual(self) -> "LineHolonomy":
        return LineHolonomy(-self.phi, -self.theta)


def lift_line_holonomy(L: LineHolonomy, k: int) -> LineHolonomy:
    """Holonomy of the pullback to the cover C/(k*Lambda)."""
    if k < 1:
        raise DomainError("k must be >= 1")
    return LineHolonomy(principal_angle(k * L.phi), principal_angle(k * L.theta))


def line_section(L: LineHolonomy, k: int, lat: Lattice, n: int) -> SectionGrid:
    """Unit almost-holomorphic section of the line bundle over C/(k*Lambda).

    In the periodic gauge the section is the pure phase
    c(xi, eta) = exp(i*(omega_x*xi + omega_y*eta)) with omega chosen so that
    the residual connection frequency is the principal lift divided by k.
    sup |dbar s| then equals (1/k)|phi_k*dxi_dzbar + theta_k*deta_dzbar|
    in closed form; that value is attached to the metadata.
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    if n < 8:
        raise DomainError("grid must be at least 8")
    lifted = lift_line_holonomy(L, k)
    omega_x = L.phi - lifted.phi / k   # = 2*pi*(integer)/k
    omega_y = L.theta - lifted.theta / k
    h = k / n
    xi = np.arange(n) * h
    eta = np.arange(n) * h
    X, Y = np.meshgrid(xi, eta, indexing="ij")
    vals = np.exp(1j * (omega_x * X + omega_y * Y))[:, :, None]
    # Seam audit in the flat trivialization: over a full horizontal period
    # the representative must come back through the lifted holonomy.
    left = np.exp(1j * omega_x * k) * vals[0, :, 0]
    res_x = float(np.max(np.abs(left - vals[0, :, 0] * 1.0)))
    top = np.exp(1j * omega_y * k) * vals[:, 0, 0]
    res_y = float(np.max(np.abs(top - vals[:, 0, 0] * 1.0)))
    fxi, feta = wirtinger_factors(lat)
    sup_dbar = abs(lifted.phi * fxi + lifted.theta * feta) / k
    return SectionGrid(
        lattice=lat, a=float(k), b=float(k), values=vals,
        phi=L.phi, theta=L.theta,
        seam_residual=max(res_x, res_y),
        meta={"sup_dbar_exact": sup_dbar, "k": k, "holonomy": L},
    )


def nilpotent_log(A: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """log(A) for unipotent A via the terminating Mercator series."""
    A = np.asarray(A, dtype=complex)
    r = A.shape[0]
    if A.shape != (r, r):
        raise ShapeError("square matrix required")
    N = A - np.eye(r)
    scale = max(np.linalg.norm(A), 1.0)
    if np.linalg.norm(np.linalg.matrix_power(N, r)) > tol * scale:
        raise DomainError("A - I is not nilpotent")
    B = np.zeros_like(N)
    P = np.eye(r, dtype=complex)
    for j in range(1, r):
        P = P @ N
        B += ((-1) ** (j + 1)) * P / j
    return B


def nilpotent_exp(B: np.ndarray) -> np.ndarray:
    """exp(B) for nilpotent B (finite series)."""
    B = np.asarray(B, dtype=complex)
    r = B.shape[0]
    out = np.eye(r, dtype=complex)
    P = np.eye(r, dtype=complex)
    fact = 1.0
    for j in range(1, r):
        P = P @ B
        fact *= j
        out = out + P / fact
    return out


@dataclass(frozen=True)
class AtiyahData:
    """The rank-r indecomposable degree-zero bundle with a unipotent twist."""

    r: int
    delta: float

    def __post_init__(self):
        if self.r < 1:
            raise DomainError("rank must be >= 1")
        if not (self.delta > 0):
            raise DomainError("delta must be positive")

    @property
    def A(self) -> np.ndarray:
        out = np.eye(self.r, dtype=complex)
        idx = np.arange(self.r - 1)
        out[idx, idx + 1] = self.delta
        return out

    @property
    def N(self) -> np.ndarray:
        return self.A - np.eye(self.r)

    @property
    def B(self) -> np.ndarray:
        return nilpotent_log(self.A)


@dataclass
class FlatBundle:
    """Commuting holonomy pair over a fixed lattice."""

    rho1: np.ndarray
    rhotau: np.ndarray
    lattice: Lattice
    commute_tol: float = 1e-10

    def __post_init__(self):
        self.rho1 = np.asarray(self.rho1, dtype=complex)
        self.rhotau = np.asarray(self.rhotau, dtype=complex)
        r = self.rho1.shape[0]
        if self.rho1.shape != (r, r) or self.rhotau.shape != (r, r):
            raise ShapeError("holonomy matrices must be square of equal size")
        comm = self.rho1 @ self.rhotau - self.rhotau @ self.rho1
        scale = max(np.linalg.norm(self.rho1) * np.linalg.norm(self.rhotau), 1.0)
        if np.linalg.norm(comm) > self.commute_tol * scale:
            raise DomainError("holonomy matrices do not commute")
        for M, name in ((self.rho1, "rho1"), (self.rhotau, "rhotau")):
            if abs(np.linalg.det(M)) < 1e-12:
                raise DomainError(f"{name} is singular")

    @property
    def rank(self) -> int:
        return self.rho1.shape[0]

    @staticmethod
    def from_line(L: LineHolonomy, lat: Lattice) -> "FlatBundle":
        return FlatBundle(np.array([[np.exp(1j * L.phi)]]),
                          np.array([[np.exp(1j * L.theta)]]), lat)

    @staticmethod
    def atiyah(L: LineHolonomy, data: AtiyahData, lat: Lattice) -> "FlatBundle":
        eye = np.eye(data.r)
        return FlatBundle(np.exp(1j * L.phi) * eye,
                          np.exp(1j * L.theta) * data.A, lat)


def atiyah_sections(data: AtiyahData, lat: Lattice, n: int) -> list[SectionGrid]:
    """The frame w_1..w_r of almost-holomorphic sections.

    In the periodic gauge with the orthonormal metric each w_j is the
    constant coordinate vector, and dbar w_j = -(i/(2*tau2)) B w_j holds as
    a pointwise algebraic identity.
    """
    if n < 8:
        raise DomainError("grid must be at least 8")
    B = data.B
    out = []
    for j in range(data.r):
        vals = np.zeros((n, n, data.r), dtype=complex)
        vals[:, :, j] = 1.0
        out.append(SectionGrid(
            lattice=lat, a=1.0, b=1.0, values=vals,
            phi=0.0, theta=0.0, bmat=B,
            seam_residual=0.0,
            meta={"atiyah": data, "index": j},
        ))
    return out


def flat_frame_metric(data: AtiyahData, eta: np.ndarray) -> np.ndarray:
    """Alternative metric G(eta) = expm(eta B)^H expm(eta B).

    This is the metric in which the flat-trivialization frame e_j is
    unitary at eta = 0; it is uniformly equivalent to the orthonormal
    metric for small delta.
    """
    B = data.B
    out = np.empty(eta.shape + (data.r, data.r), dtype=complex)
    flat = out.reshape(-1, data.r, data.r)
    for i, e in enumerate(np.ravel(eta)):
        E = nilpotent_exp(e * B)
        flat[i] = E.conj().T @ E
    return out


# ---------------------------------------------------------------------------
# decomposition of commuting pairs


@dataclass(frozen=True)
class Summand:
    rank: int
    line_class: LineHolonomy
    atiyah_rank: int
    degree: int = 0
    moduli: tuple[float, float] = (1.0, 1.0)


@dataclass
class DecompositionReport:
    summands: list[Summand]
    residual: float
    warnings: list[str] = field(default_factory=list)
    stabilization_K: int | None = None

    def rank_multiset(self) -> tuple[int, ...]:
        return tuple(sorted(s.rank for s in self.summands))


def _cluster(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Indices of values grouped by absolute closeness (union-find light)."""
    order = np.argsort(values.real + 1e-3 * values.imag)
    groups: list[list[int]] = []
    scale = max(np.max(np.abs(values)), 1.0)
    for idx in order:
        for g in groups:
            if abs(values[idx] - values[g[0]]) <= tol * scale:
                g.append(idx)
                break
        else:
            groups.append([idx])
    # Merge any groups whose representatives drifted close.
    merged = True
    while merged:
        merged = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                if abs(values[groups[i][0]] - values[groups[j][0]]) <= tol * scale:
                    groups[i].extend(groups.pop(j))
                    merged = True
                    break
            if merged:
                break
    return [np.array(g) for g in groups]


def _invariant_subspaces(M: np.ndarray, tol: float) -> list[np.ndarray]:
    """Orthonormal bases of the generalized eigenspaces of M.

    Eigenvalues of a defective Jordan block of size b split numerically by
    roughly eps**(1/b), so the caller must pass a clustering tolerance at
    least that coarse; decompose_commuting_pair walks a tolerance ladder and
    validates each attempt against the block-diagonalization residual.
    """
    r = M.shape[0]
    T, Z = scipy.linalg.schur(M, output="complex")
    eigs = np.diag(T)
    clusters = _cluster(eigs, tol)
    if len(clusters) == 1:
        return [np.eye(r, dtype=complex)]
    scale = max(np.max(np.abs(eigs)), 1.0)
    bases = []
    for cl in clusters:
        members = eigs[cl]

        def in_cluster(lam, members=members):
            return bool(np.min(np.abs(lam - members)) <= 2 * tol * scale)

        TT, ZZ, sdim = scipy.linalg.schur(M, output="complex", sort=in_cluster)
        bases.append(ZZ[:, :sdim if sdim > 0 else len(cl)])
    return bases


def _nilpotency_ranks(N: np.ndarray, tol: float) -> list[int]:
    """Numerical ranks of N^p for p = 0, 1, ... until rank 0."""
    d = N.shape[0]
    ranks = [d]
    P = np.eye(d, dtype=complex)
    scale = max(np.linalg.norm(N), 1e-30)
    for _ in range(d):
        P = P @ N
        sv = scipy.linalg.svdvals(P)
        rk = int(np.sum(sv > tol * max(scale, 1.0)))
        ranks.append(rk)
        if rk == 0:
            break
    return ranks


def _jordan_chains(N: np.ndarray, tol: float) -> list[np.ndarray]:
    """Chain bases [N^{p-1}v, ..., Nv, v] of a numerically nilpotent N."""
    d = N.shape[0]
    if d == 1:
        return [np.eye(1, dtype=complex)]
    ranks = _nilpotency_ranks(N, tol)
    pmax = len(ranks) - 1  # nilpotency index
    powers = [np.eye(d, dtype=complex)]
    for _ in range(pmax):
        powers.append(powers[-1] @ N)

    def kernel(P):
        u, s, vh = scipy.linalg.svd(P)
        rk = int(np.sum(s > tol * max(s[0] if s.size else 1.0, 1.0)))
        return vh[rk:].conj().T  # (d, d-rk)

    kernels = [kernel(powers[p]) for p in range(pmax + 1)]
    chains: list[list[np.ndarray]] = []
    tops: list[tuple[int, np.ndarray]] = []  # (length, top vector)
    for p in range(pmax, 0, -1):
        blocks_ge_p = ranks[p - 1] - ranks[p]
        blocks_ge_p1 = ranks[p] - ranks[p + 1] if p + 1 < len(ranks) else 0
        new = blocks_ge_p - blocks_ge_p1
        if new <= 0:
            continue
        # Candidates live in ker(N^p); exclude ker(N^{p-1}) and the level-p
        # images of already-chosen longer chains.
        K = kernels[p]
        excl = [kernels[p - 1]]
        for (length, v) in tops:
            if length > p:
                excl.append((powers[length - p] @ v)[:, None])
        E = np.hstack(excl) if excl else np.zeros((d, 0))
        # Project the candidate space away from the excluded span.
        Q, _ = np.linalg.qr(E) if E.shape[1] else (np.zeros((d, 0)), None)
        C = K - Q @ (Q.conj().T @ K)
        u, s, vh = scipy.linalg.svd(C, full_matrices=False)
        picks = u[:, :new]
        for i in range(new):
            v = picks[:, i]
            tops.append((p, v))
            chain = [powers[p - 1 - q] @ v for q in range(p)]
            chains.append(chain)
    return [np.stack(c, axis=1) for c in chains]


def decompose_commuting_pair(bundle: FlatBundle, tol: float = 1e-8):
    """Split a commuting pair into scalar-times-unipotent blocks.

    Returns (DecompositionReport, filtrations, change_of_basis).  In the
    returned basis both matrices are block diagonal; each block is a scalar
    multiple of a unipotent matrix carrying a single Jordan chain.  The
    filtration of a summand is the nested family spanned by the leading
    chain vectors.
    """
    A, C = bundle.rho1, bundle.rhotau
    best = None
    ctol = max(tol, 1e-7)
    while ctol <= 1e-2:
        try:
            out = _decompose_attempt(bundle, tol, ctol)
        except np.linalg.LinAlgError:
            out = None
        if out is not None:
            if out[0].residual <= max(tol, 1e-9):
                if ctol > max(tol, 1e-7):
                    out[0].warnings.append(
                        f"eigenvalue clusters merged at tolerance {ctol:g}")
                return out
            if best is None or out[0].residual < best[0].residual:
                best = out
        ctol *= 10.0
    if best is None:
        raise ConvergenceError("no consistent block decomposition found")
    best[0].warnings.append("block residual above tolerance at every "
                            "clustering level")
    return best


def _decompose_attempt(bundle: FlatBundle, tol: float, ctol: float):
    A, C = bundle.rho1, bundle.rhotau
    warnings: list[str] = []
    blocks: list[np.ndarray] = []  # full-space bases, one per joint block
    for QA in _invariant_subspaces(A, ctol):
        C_r = QA.conj().T @ C @ QA
        for QC in _invariant_subspaces(C_r, ctol):
            blocks.append(QA @ QC)
    if sum(b.shape[1] for b in blocks) != A.shape[0]:
        return None

    cols: list[np.ndarray] = []
    summands: list[Summand] = []
    filtrations: list[list[np.ndarray]] = []
    for Q in blocks:
        A_b = Q.conj().T @ A @ Q
        C_b = Q.conj().T @ C @ Q
        d = Q.shape[1]
        lamA = np.mean(np.diag(scipy.linalg.schur(A_b, output="complex")[0]))
        lamC = np.mean(np.diag(scipy.linalg.schur(C_b, output="complex")[0]))
        NA = A_b - lamA * np.eye(d)
        NC = C_b - lamC * np.eye(d)
        nA, nC = np.linalg.norm(NA), np.linalg.norm(NC)
        if nA > tol and nC > tol:
            N = NA + NC
            warnings.append("joint block has nilpotent parts in both factors")
        elif nC >= nA:
            N = NC
        else:
            N = NA
        if np.linalg.norm(N) <= tol * max(1.0, abs(lamA), abs(lamC)):
            chain_mats = [np.eye(d, dtype=complex)[:, i:i + 1] for i in range(d)]
        else:
            chain_mats = _jordan_chains(N, tol)
        line = LineHolonomy(float(np.angle(lamA)), float(np.angle(lamC)))
        for ch in chain_mats:
            cols.append(Q @ ch)
            summands.append(Summand(
                rank=ch.shape[1], line_class=line, atiyah_rank=ch.shape[1],
                moduli=(float(abs(lamA)), float(abs(lamC))),
            ))
            filt = [ (Q @ ch)[:, : j + 1] for j in range(ch.shape[1]) ]
            filtrations.append(filt)

    T = np.hstack(cols)
    if np.linalg.cond(T) > 1e8:
        warnings.append("ill-conditioned change of basis")
    Tinv = np.linalg.inv(T)
    residual = 0.0
    for M in (A, C):
        Mt = Tinv @ M @ T
        Mblk = np.zeros_like(Mt)
        off = 0
        for s in summands:
            sl = slice(off, off + s.rank)
            Mblk[sl, sl] = Mt[sl, sl]
            off += s.rank
        residual = max(residual,
                       float(np.linalg.norm(T @ Mblk @ Tinv - M)
                             / max(np.linalg.norm(M), 1.0)))
    report = DecompositionReport(summands=summands, residual=residual,
                                 warnings=warnings)
    return report, filtrations, T


def pullback_bundle(bundle: FlatBundle, spec: CoverSpec) -> FlatBundle:
    """Holonomy of the pullback to the sublattice cover.

    The lifted generators are the words rho(1)^a rho(tau)^b and
    rho(1)^c rho(tau)^d read off the sublattice basis rows.
    """
    def power(M, e):
        if e >= 0:
            return np.linalg.matrix_power(M, e)
        return np.linalg.matrix_power(np.linalg.inv(M), -e)

    (a, b), (c, d) = spec.basis
    r1 = power(bundle.rho1, a) @ power(bundle.rhotau, b)
    r2 = power(bundle.rho1, c) @ power(bundle.rhotau, d)
    new_lat, _, _ = cover_lattice(bundle.lattice, spec)
    return FlatBundle(r1, r2, new_lat)


def stabilization_scan(bundle: FlatBundle, tower: list[CoverSpec]) -> int:
    """First level after which summand rank multisets stop changing.

    Level 1 is the base torus; level j+1 is tower[j-1].  Returns the
    smallest K such that the multiset is constant from level K onward.
    """
    multisets = [decompose_commuting_pair(bundle)[0].rank_multiset()]
    for spec in tower:
        lifted = pullback_bundle(bundle, spec)
        multisets.append(decompose_commuting_pair(lifted)[0].rank_multiset())
    K = len(multisets)
    for i in range(len(multisets) - 1, -1, -1):
        if multisets[i] == multisets[-1]:
            K = i + 1
        else:
            break
    return K


TWO_TORSION_LABELS = ("0", "1/2", "tau/2", "(1+tau)/2")


def two_torsion_classify(L: LineHolonomy, tol: float = 1e-9) -> str | None:
    """Which of the four self-dual points the line bundle represents."""
    def sign_of(angle):
        if abs(principal_angle(angle)) <= tol:
            return 1
        if abs(abs(principal_angle(angle)) - math.pi) <= tol:
            return -1
        return 0

    su, sv = sign_of(L.phi), sign_of(L.theta)
    table = {(1, 1): "0", (-1, 1): "1/2", (1, -1): "tau/2", (-1, -1): "(1+tau)/2"}
    return table.get((su, sv))


@dataclass
class PairingReport:
    forced_zero: list[tuple[int, int]]
    unconstrained: list[tuple[int, int]]
    max_violation: float
    notes: list[str]


def pairing_orthogonality(lines: list[LineHolonomy],
                          pairing: np.ndarray,
                          tol: float = 1e-9) -> PairingReport:
    """Check which pairing entries the holonomy invariance forces to zero.

    The pairing is a constant complex symmetric matrix in the flat
    trivialization of the direct sum of the given line bundles; invariance
    under both holonomy generators multiplies entry (i, j) by
    e^{i(phi_i + phi_j)} and e^{i(theta_i + theta_j)}.  Entries with a
    nontrivial multiplier must vanish; diagonal self-dual entries are free.
    """
    S = np.asarray(pairing, dtype=complex)
    m = len(lines)
    if S.shape != (m, m):
        raise ShapeError("pairing size mismatch")
    if np.linalg.norm(S - S.T) > tol * max(np.linalg.norm(S), 1.0):
        raise DomainError("pairing must be symmetric")
    D1 = np.diag([np.exp(1j * L.phi) for L in lines])
    D2 = np.diag([np.exp(1j * L.theta) for L in lines])
    scale = max(np.linalg.norm(S), 1.0)
    for D in (D1, D2):
        if np.linalg.norm(D.T @ S @ D - S) > tol * scale:
            raise DomainError("pairing is not invariant under the holonomy")

    forced, free = [], []
    violation = 0.0
    notes = []
    for i in range(m):
        for j in range(i, m):
            dual = (abs(principal_angle(lines[i].phi + lines[j].phi)) <= tol
                    and abs(principal_angle(lines[i].theta + lines[j].theta)) <= tol)
            if dual:
                free.append((i, j))
                if i == j:
                    notes.append(f"entry ({i},{i}): self-dual, nondegenerate allowed")
            else:
                forced.append((i, j))
                violation = max(violation, float(abs(S[i, j])))
    return PairingReport(forced_zero=forced, unconstrained=free,
                         max_violation=violation, notes=notes)


def lift_degree(d: int, covering_degree: int) -> int:
    """First Chern number of the pullback under a covering of given degree."""
    if covering_degree < 1:
        raise InvalidCoverError("covering degree must be >= 1")
    return covering_degree * d


def h0_indecomposable(d: int, r: int):
    """Dimension of the space of holomorphic sections over a genus-1 base.

    Positive degree gives d; degree zero gives 0 or 1 depending on the
    (unspecified here) line class, so both possibilities are reported.
    """
    if r < 1:
        raise DomainError("rank must be >= 1")
    if d > 0:
        return d
    if d == 0:
        return (0, 1)
    return 0


def global_generation_hypothesis(d: int, r: int) -> bool:
    """Degree threshold under which global generation is guaranteed."""
    if r < 1:
        raise DomainError("rank must be >= 1")
    return d > r + 2
