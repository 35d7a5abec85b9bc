"""Induced distances and systoles, phase trial sections, and the
systole-bound verdict R <= C / sqrt(kappa).

Distances are computed on a patch of the universal cover: an 8-neighbor
weighted grid graph (Dijkstra) by default, with a first-order fast-marching
solver for rectangular conformal charts as an independent cross-check.
The 8-neighbor metric overestimates lengths by at most ~8.24% in the worst
direction; verdicts carry that margin.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .bundles import LineHolonomy
from .errors import DomainError, ResolutionError, UnreachableError
from .geometry import Immersion
from .lattice import wirtinger_factors
from .sections import SectionGrid, dbar

EIGHT_NEIGHBOR_ANISOTROPY = 0.0824

GENERAL_CONSTANT = 2 * np.pi / np.sqrt(3.0)
EXCEPTIONAL_CONSTANT = 2 * (18 + np.pi) / np.sqrt(3.0)


# ---------------------------------------------------------------------------
# distance fields


@dataclass
class DistanceField:
    """Distances from source nodes on a (2w+1) x (2w+1) cover patch."""

    dist: np.ndarray          # (nsrc, W, W)
    window: int
    n: int                    # grid points per fundamental domain side
    spacing: tuple[float, float]

    def center_offset(self) -> int:
        return self.window * self.n


def _patch_edges(imm: Immersion, window: int):
    """Sparse 8-neighbor graph over the cover patch of the induced metric."""
    n = imm.n
    W = (2 * window + 1) * n
    lam = np.sqrt(np.tile(imm.lam2, (2 * window + 1, 2 * window + 1)))
    tau = imm.lattice.tau
    h = 1.0 / n
    steps = [(1, 0), (0, 1), (1, 1), (1, -1)]
    rows, cols, data = [], [], []
    idx = np.arange(W * W).reshape(W, W)
    for dx, dy in steps:
        chord = abs(imm.scale * (dx * h + dy * h * tau))
        if dx >= 0:
            src = idx[: W - dx, :]
            lam_a = lam[: W - dx, :]
        else:
            src = idx[-dx:, :]
            lam_a = lam[-dx:, :]
        if dy >= 0:
            src = src[:, : W - dy]
            lam_a = lam_a[:, : W - dy]
        else:
            src = src[:, -dy:]
            lam_a = lam_a[:, -dy:]
        dst = src + dx * W + dy
        lam_b = lam.reshape(-1)[dst.reshape(-1)].reshape(dst.shape)
        wgt = 0.5 * (lam_a + lam_b) * chord
        rows.append(src.reshape(-1))
        cols.append(dst.reshape(-1))
        data.append(wgt.reshape(-1))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.concatenate(data)
    G = sp.csr_matrix((data, (rows, cols)), shape=(W * W, W * W))
    return G + G.T


def geodesic_distance(imm: Immersion, sources, window: int = 1) -> DistanceField:
    """Dijkstra distance field from source nodes of the center copy.

    `sources` is a list of (i, j) grid indices in [0, n)^2; they are placed
    in the center fundamental domain of the patch.
    """
    n = imm.n
    W = (2 * window + 1) * n
    G = _patch_edges(imm, window)
    off = window * n
    src_idx = [ (off + i) * W + (off + j) for (i, j) in sources ]
    d = _csgraph_dijkstra(G, indices=src_idx, directed=False)
    if np.any(~np.isfinite(d)):
        raise UnreachableError("patch graph is disconnected")
    return DistanceField(d.reshape(len(src_idx), W, W), window, n,
                         (imm.scale / n, imm.scale * imm.lattice.tau2 / n))


def fmm_distance(imm: Immersion, source: tuple[int, int],
                 window: int = 1) -> np.ndarray:
    """First-order fast-marching eikonal distance on a rectangular chart.

    Requires tau1 = 0 (axis-aligned metric).  Used as the dual-method
    cross-check for the graph distances.
    """
    if abs(imm.lattice.tau1) > 1e-12:
        raise DomainError("fast marching implemented for rectangular charts")
    n = imm.n
    W = (2 * window + 1) * n
    lam = np.sqrt(np.tile(imm.lam2, (2 * window + 1, 2 * window + 1)))
    hx = imm.scale / n
    hy = imm.scale * imm.lattice.tau2 / n
    dist = np.full((W, W), np.inf)
    state = np.zeros((W, W), dtype=np.int8)  # 0 far, 1 trial, 2 known
    off = window * n
    i0, j0 = off + source[0], off + source[1]
    dist[i0, j0] = 0.0
    heap = [(0.0, i0, j0)]
    while heap:
        d0, i, j = heapq.heappop(heap)
        if state[i, j] == 2:
            continue
        state[i, j] = 2
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if not (0 <= a < W and 0 <= b < W) or state[a, b] == 2:
                continue
            dxm = np.inf
            if a - 1 >= 0:
                dxm = min(dxm, dist[a - 1, b])
            if a + 1 < W:
                dxm = min(dxm, dist[a + 1, b])
            dym = np.inf
            if b - 1 >= 0:
                dym = min(dym, dist[a, b - 1])
            if b + 1 < W:
                dym = min(dym, dist[a, b + 1])
            f = lam[a, b]
            cand = _eikonal_update(dxm, dym, hx, hy, f)
            if cand < dist[a, b]:
                dist[a, b] = cand
                heapq.heappush(heap, (cand, a, b))
    return dist


def _eikonal_update(dx: float, dy: float, hx: float, hy: float, f: float) -> float:
    """Solve max-quadratic upwind update ((d-dx)/hx)^2 + ((d-dy)/hy)^2 = f^2."""
    if not np.isfinite(dx) and not np.isfinite(dy):
        return np.inf
    if not np.isfinite(dy) or (np.isfinite(dx) and dx + f * hx <= dy):
        return dx + f * hx
    if not np.isfinite(dx) or dy + f * hy <= dx:
        return dy + f * hy
    a = 1.0 / hx ** 2 + 1.0 / hy ** 2
    b = -2.0 * (dx / hx ** 2 + dy / hy ** 2)
    c = dx ** 2 / hx ** 2 + dy ** 2 / hy ** 2 - f ** 2
    disc = b * b - 4 * a * c
    if disc < 0:
        return min(dx + f * hx, dy + f * hy)
    return (-b + math.sqrt(disc)) / (2 * a)


def induced_systole(imm: Immersion, window: int = 2, stride: int = 8) -> float:
    """Shortest nontrivial closed curve length from grid distances.

    R = min over deck translates gamma = (m, n), |m|, |n| <= window, of
    min over sampled base points z of d(z, z + gamma).
    """
    n = imm.n
    W = (2 * window + 1) * n
    srcs = [(i, j) for i in range(0, n, stride) for j in range(0, n, stride)]
    best = np.inf
    G = _patch_edges(imm, window)
    off = window * n
    batch = 32
    for k0 in range(0, len(srcs), batch):
        chunk = srcs[k0:k0 + batch]
        idx = [(off + i) * W + (off + j) for (i, j) in chunk]
        d = _csgraph_dijkstra(G, indices=idx, directed=False)
        d = d.reshape(len(chunk), W, W)
        for s, (i, j) in enumerate(chunk):
            for m in range(-window, window + 1):
                for nn in range(-window, window + 1):
                    if m == 0 and nn == 0:
                        continue
                    best = min(best, d[s, off + i + m * n, off + j + nn * n])
    return float(best)


# ---------------------------------------------------------------------------
# trial sections


@dataclass
class TruncatedDistance:
    """Axis truncated distances delta((0,0),(xi,0)) and delta((0,0),(0,eta)).

    Measured in the universal cover of the induced metric and capped at the
    systole R, so delta reaches exactly R after one full period.
    """

    delta_xi: np.ndarray     # values at xi = i/n, i = 0..n
    delta_eta: np.ndarray    # values at eta = j/n, j = 0..n
    R: float


def axis_truncated_distances(imm: Immersion, R: float, n: int) -> TruncatedDistance:
    if not (R > 0):
        raise DomainError("systole must be positive")
    ts = np.linspace(0.0, 1.0, n + 1)
    if imm.flat:
        a_len, b_len = imm.periods
        dxi = np.minimum(R, a_len * ts)
        deta = np.minimum(R, b_len * ts)
    else:
        fld = geodesic_distance(imm, [(0, 0)], window=1)
        off = fld.center_offset()
        row = fld.dist[0, off:off + n, off]
        col = fld.dist[0, off, off:off + n]
        dxi = np.minimum(R, np.append(row, fld.dist[0, off + n, off]))
        deta = np.minimum(R, np.append(col, fld.dist[0, off, off + n]))
    if abs(dxi[-1] - R) > 1e-9 * max(R, 1.0) or abs(deta[-1] - R) > 1e-9 * max(R, 1.0):
        raise DomainError("truncated distance does not reach R at the period")
    return TruncatedDistance(dxi, deta, R)


def phase_trial_section(L: LineHolonomy, R: float, deltas: TruncatedDistance,
                        imm: Immersion, n: int) -> SectionGrid:
    """The Lipschitz isotropic trial section with truncated-distance phase.

    Periodic-gauge representative
    c(xi, eta) = exp(-i*(delta_xi(xi)*phi + delta_eta(eta)*theta)/R)
                 * exp(i*(phi*xi + theta*eta)),
    which is exactly periodic because delta reaches R at the period; both
    phase ramps carry the minus sign, which is the choice that closes both
    seams simultaneously.
    """
    if R <= 0:
        raise DomainError("R must be positive")
    dx = deltas.delta_xi[:-1]
    dy = deltas.delta_eta[:-1]
    if len(dx) != n or len(dy) != n:
        raise DomainError("delta fields must be sampled on the same grid")
    xi = np.arange(n) / n
    eta = np.arange(n) / n
    ramp = np.exp(-1j * (dx[:, None] * L.phi + dy[None, :] * L.theta) / R)
    gauge = np.exp(1j * (L.phi * xi[:, None] + L.theta * eta[None, :]))
    vals = (ramp * gauge)[:, :, None]
    # Seam residual from the closing identities at xi = 1 and eta = 1.
    close_x = abs(np.exp(-1j * deltas.delta_xi[-1] * L.phi / R)
                  * np.exp(1j * L.phi) - 1.0)
    close_y = abs(np.exp(-1j * deltas.delta_eta[-1] * L.theta / R)
                  * np.exp(1j * L.theta) - 1.0)
    return SectionGrid(
        lattice=imm.lattice, a=1.0, b=1.0, values=vals,
        phi=L.phi, theta=L.theta,
        seam_residual=float(max(close_x, close_y)),
        meta={"self_pairing": 0.0, "R": R, "holonomy": L,
              "grad_bound": 2 * np.pi / (np.sqrt(3.0) * R)},
    )


@dataclass
class RayleighReport:
    lhs: float
    rhs: float
    energy_bound: float
    bound_R: float
    verdict: bool


def rayleigh_bound_check(s: SectionGrid, imm: Immersion, kappa: float,
                         stable: bool = True) -> RayleighReport:
    """Check kappa * Mass(s) <= dbar energy <= (2 pi / (sqrt3 R))^2 Mass(s).

    When the scenario is stable this chain forces R <= (2 pi / sqrt3) /
    sqrt(kappa); the verdict records that comparison.
    """
    from .stability import dbar_energy_chart
    R = s.meta.get("R")
    if R is None:
        raise DomainError("section does not carry its systole")
    w = imm.scale ** 2 * imm.lattice.tau2 * s.hx * s.hy
    mass_da = float(np.sum(np.abs(s.values) ** 2) * w)  # flat: lam2 = 1
    energy = 2.0 * dbar_energy_chart(s, imm)
    lhs = kappa * mass_da
    ebound = (2 * np.pi / (np.sqrt(3.0) * R)) ** 2 * mass_da
    bound_R = GENERAL_CONSTANT / np.sqrt(kappa) if kappa > 0 else np.inf
    verdict = (not stable) or kappa <= 0 or R <= bound_R * 1.0001
    return RayleighReport(lhs, energy, ebound, float(bound_R), bool(verdict))


# ---------------------------------------------------------------------------
# exceptional case (the n = 5, 6 cutoff construction)


@dataclass
class ExceptionalReport:
    U_masks: list[np.ndarray]
    V_masks: list[np.ndarray]
    phi_I: np.ndarray
    phi_V: np.ndarray
    s1: SectionGrid
    localized: SectionGrid
    energies_I: list[float]
    energies_J: list[float]
    selected: int
    case: str
    grad_bound_I: float
    grad_bound_V: float
    max_grad_I: float
    max_grad_V: float
    rayleigh: float
    chain_bound: float
    injectivity_violations: int


def exceptional_cutoffs(imm: Immersion, R: float, n: int,
                        weight=None) -> ExceptionalReport:
    """Cutoff regions and localized sections on the vertical double cover.

    Works on the domain [0,1) x [0,2) of the sublattice (1, 2*tau), with a
    horizontal holonomy of -1 detwisted by the truncated-distance phase.
    d_t is the induced distance to the circle eta = t; U_j = {d_j <= R/3};
    the I-case cutoff ramps as 3 - 6 d_1 / R between R/3 and R/2, the
    V-case uses (3/R) min(d_0, d_1).
    """
    if not imm.flat:
        raise DomainError("exceptional construction implemented on flat tori")
    a_len, b_len = imm.periods
    if R / 6 < 4 * (b_len / n):
        raise ResolutionError("R/6 band resolved by fewer than ~8 cells")
    ny = 2 * n
    xi = np.arange(n) / n
    eta = np.arange(ny) / ny
    X, E = np.meshgrid(xi, eta, indexing="ij")
    y = b_len * E  # physical vertical coordinate in [0, b_len)
    half = b_len / 2.0

    # The double cover stacks two copies of the base torus, so the two
    # exceptional circles sit at y = 0 and y = b_len / 2.  d_0 wraps through
    # the translate at y = b_len; d_1 never needs to.
    d = [np.minimum(np.abs(y), np.abs(y - b_len)), np.abs(y - half)]
    U = [dd <= R / 3.0 for dd in d]
    V = [(d[0] > R / 3.0) & (d[1] > R / 3.0) & (y < half),
         (d[0] > R / 3.0) & (d[1] > R / 3.0) & (y >= half)]

    phi_I = np.clip(3.0 - 6.0 * d[1] / R, 0.0, 1.0)
    phi_V = np.clip(np.minimum(d[0], d[1]) * 3.0 / R, 0.0, 1.0)

    # Horizontal detwist: delta((0,0),(xi,0)) truncated at R.
    delta_xi = np.minimum(R, a_len * X)
    w = np.ones((n, ny)) if weight is None else np.asarray(weight, dtype=float)
    # Periodic-gauge values: the xi phase pi is detwisted by the truncated
    # distance (exactly periodic because delta reaches R at the seam); the
    # eta phase pi stays in the connection and is paid as vertical energy.
    c1 = w * np.exp(1j * (np.pi * X - delta_xi * np.pi / R))
    s1 = SectionGrid(lattice=imm.lattice, a=1.0, b=2.0, values=c1[:, :, None],
                     phi=np.pi, theta=np.pi,
                     meta={"self_pairing": 0.0, "R": R})

    cell = a_len * b_len / (n * ny)
    dens = np.abs(c1) ** 2 * cell
    I = [float(np.sum(dens[U[0]])), float(np.sum(dens[U[1]]))]
    J = [float(np.sum(dens[V[0]])), float(np.sum(dens[V[1]]))]
    selected = int(np.argmax(I))
    phi = phi_I if selected == 1 else np.clip(3.0 - 6.0 * d[0] / R, 0.0, 1.0)

    loc_vals = phi[:, :, None] * s1.values
    localized = SectionGrid(lattice=imm.lattice, a=1.0, b=2.0, values=loc_vals,
                            phi=np.pi, theta=np.pi,
                            meta={"self_pairing": 0.0, "R": R})

    fxi, feta = wirtinger_factors(imm.lattice)
    fxi, feta = fxi / imm.scale, feta / imm.scale

    def zbar_grad(f):
        hx = 1.0 / n
        hy = 1.0 / ny
        gx = (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2 * hx)
        gy = (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2 * hy)
        return np.abs(fxi * gx + feta * gy)

    # Interior gradient magnitudes (kink cells excluded up to one stencil).
    lam = 1.0
    g_I = zbar_grad(phi_I)
    g_V = zbar_grad(phi_V)
    bound_I = (6.0 / R) * np.sqrt(3.0) * lam
    bound_V = (3.0 / R) * np.sqrt(3.0) * lam

    # Support injectivity: vertical integer translates within the support
    # must be at distance >= R (sampled; flat geometry makes it exact).
    supp = phi > 1e-12
    viol = 0
    deck = half  # length of the vertical deck translate of the base torus
    if deck < R - 2 * b_len / ny:
        rng = np.random.default_rng(7)
        cand = np.argwhere(supp)
        for _ in range(min(10000, 4 * len(cand))):
            i, j = cand[rng.integers(len(cand))]
            if supp[i, (j + ny // 2) % ny]:
                viol += 1

    # Rayleigh quotient of the localized section against the proof's chain.
    from .stability import dbar_energy_chart
    sec_loc = localized
    energy = 2.0 * dbar_energy_chart(sec_loc, imm)
    mass_sel = I[selected]
    ray = energy / mass_sel if mass_sel > 0 else np.inf
    chain = (EXCEPTIONAL_CONSTANT / R) ** 2
    return ExceptionalReport(
        U_masks=U, V_masks=V, phi_I=phi_I, phi_V=phi_V, s1=s1,
        localized=localized, energies_I=I, energies_J=J, selected=selected,
        case="I" if max(I) >= max(J) else "V",
        grad_bound_I=bound_I, grad_bound_V=bound_V,
        max_grad_I=float(np.max(g_I)), max_grad_V=float(np.max(g_V)),
        rayleigh=float(ray), chain_bound=float(chain),
        injectivity_violations=viol,
    )


@dataclass
class VerdictReport:
    applicable: bool
    passed: bool
    R: float
    kappa_hat: float
    constant: float
    bound: float
    margin: float


def systole_bound_verdict(lambda_min: float, R: float, kappa_hat: float,
                          case: str = "general",
                          tol: float = 1e-6,
                          grid_margin: float = EIGHT_NEIGHBOR_ANISOTROPY) -> VerdictReport:
    """Assert R <= C / sqrt(kappa) whenever the scenario is stable.

    C is 2 pi / sqrt 3 in the general case and 2 (18 + pi) / sqrt 3 in the
    exceptional one; the grid distance error margin widens the bound.
    """
    if case not in ("general", "exceptional"):
        raise DomainError("case must be 'general' or 'exceptional'")
    C = GENERAL_CONSTANT if case == "general" else EXCEPTIONAL_CONSTANT
    applicable = lambda_min >= -tol
    if kappa_hat <= 0:
        bound = np.inf
    else:
        bound = C / np.sqrt(kappa_hat)
    passed = (not applicable) or R <= bound * (1 + grid_margin)
    margin = bound - R if np.isfinite(bound) else np.inf
    return VerdictReport(bool(applicable), bool(passed), R, kappa_hat, C,
                         float(bound), float(margin))
