"""Model ambient spaces, complex sectional curvature, and test immersions.

Supported ambient kinds are flat Euclidean space, a flat torus, and the
product of a circle with a round sphere (optionally quotiented by a lens
action, which is represented on the sphere cover through holonomy twist
data rather than by meshing the quotient).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .bundles import LineHolonomy
from .errors import DomainError
from .lattice import Lattice
from .weierstrass import eisenstein_invariants, wp


# ---------------------------------------------------------------------------
# ambient spaces


@dataclass(frozen=True)
class AmbientSpace:
    """One of the homogeneous model geometries.

    kind: 'euclidean', 'flat_torus' or 'product_circle_sphere'.
    For the product kind, `circle_radius` (L) and `sphere_radius` (rho) fix
    the metric, `n_sphere` the sphere dimension, and `lens` = (p, q) the
    cyclic quotient acting on the sphere factor.
    """

    kind: str
    dim: int = 4
    circle_radius: float = 1.0
    sphere_radius: float = 1.0
    n_sphere: int = 3
    lens: tuple[int, int] = (1, 0)

    def __post_init__(self):
        if self.kind not in ("euclidean", "flat_torus", "product_circle_sphere"):
            raise DomainError(f"unknown ambient kind {self.kind!r}")
        if self.kind == "product_circle_sphere":
            p, q = self.lens
            if p < 1 or (p > 1 and math.gcd(p, q) != 1):
                raise DomainError("lens parameters must be coprime with p >= 1")
            if self.n_sphere < 3:
                raise DomainError("sphere dimension must be >= 3")
            object.__setattr__(self, "dim", 1 + self.n_sphere + 1)

    @property
    def is_flat(self) -> bool:
        return self.kind in ("euclidean", "flat_torus")

    @property
    def tangent_dim(self) -> int:
        if self.kind == "product_circle_sphere":
            return 1 + self.n_sphere
        return self.dim

    def base_point(self) -> np.ndarray:
        p = np.zeros(self.dim)
        if self.kind == "product_circle_sphere":
            p[1] = self.sphere_radius
        return p

    def tangent_basis(self, point: np.ndarray | None = None) -> np.ndarray:
        """Columns: orthonormal tangent vectors in ambient coordinates."""
        if point is None:
            point = self.base_point()
        if self.kind != "product_circle_sphere":
            return np.eye(self.dim)
        u = point[1:]
        uhat = u / np.linalg.norm(u)
        # Orthonormal complement of uhat inside the sphere coordinates.
        A = np.eye(len(u)) - np.outer(uhat, uhat)
        w, v = np.linalg.eigh(A)
        comp = v[:, w > 0.5]
        basis = np.zeros((self.dim, 1 + comp.shape[1]))
        basis[0, 0] = 1.0
        basis[1:, 1:] = comp
        return basis

    def curvature(self, X, Y, Z, W, point: np.ndarray | None = None) -> complex:
        """(0,4) curvature tensor, extended complex multilinearly.

        Vectors are in ambient coordinates; for the product kind only their
        projections onto the sphere's tangent space enter.
        """
        if self.is_flat:
            return 0.0 + 0.0j
        if point is None:
            point = self.base_point()
        u = point[1:]
        uhat = u / np.linalg.norm(u)

        def sph(v):
            v = np.asarray(v, dtype=complex)
            vs = v[1:]
            return vs - np.dot(vs, uhat) * uhat

        xs, ys, zs, ws = sph(X), sph(Y), sph(Z), sph(W)
        dot = lambda a, b: np.dot(a, b)  # complex bilinear
        k = 1.0 / self.sphere_radius ** 2
        return k * (dot(xs, zs) * dot(ys, ws) - dot(xs, ws) * dot(ys, zs))


# ---------------------------------------------------------------------------
# isotropic planes and kappa-PIC


@dataclass
class IsotropicPlane:
    """Complex 2-plane with (X,X) = (Y,Y) = (X,Y) = 0."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=complex)
        self.Y = np.asarray(self.Y, dtype=complex)
        for r in self.residuals():
            if r > 1e-10:
                raise DomainError("plane is not isotropic")
        if self.wedge_norm_sq() <= 1e-12:
            raise DomainError("plane is degenerate")

    def residuals(self) -> tuple[float, float, float]:
        nx = np.linalg.norm(self.X) ** 2
        ny = np.linalg.norm(self.Y) ** 2
        s = max(nx, ny, 1e-30)
        return (abs(np.dot(self.X, self.X)) / s,
                abs(np.dot(self.Y, self.Y)) / s,
                abs(np.dot(self.X, self.Y)) / s)

    def wedge_norm_sq(self) -> float:
        nx = np.vdot(self.X, self.X).real
        ny = np.vdot(self.Y, self.Y).real
        cross = np.vdot(self.X, self.Y)
        return float(nx * ny - abs(cross) ** 2)


def plane_from_frame(E: np.ndarray) -> IsotropicPlane:
    """Isotropic plane X = e1 + i e2, Y = e3 + i e4 from an orthonormal 4-frame."""
    return IsotropicPlane(E[:, 0] + 1j * E[:, 1], E[:, 2] + 1j * E[:, 3])


def random_isotropic_plane(n: int, rng) -> IsotropicPlane:
    """Random isotropic plane in C^n from a Haar-ish orthonormal 4-frame."""
    if n < 4:
        raise DomainError("no isotropic 2-planes below real dimension 4")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    A = rng.standard_normal((n, 4))
    Q, R = np.linalg.qr(A)
    Q = Q * np.sign(np.diag(R))
    return plane_from_frame(Q)


def complex_sectional_curvature(N: AmbientSpace, at: np.ndarray | None,
                                plane: IsotropicPlane) -> float:
    """K(Pi) = R(X, Y, conj X, conj Y) / |X wedge Y|^2."""
    num = N.curvature(plane.X, plane.Y, np.conj(plane.X), np.conj(plane.Y),
                      point=at)
    den = plane.wedge_norm_sq()
    if den <= 1e-12:
        raise DomainError("degenerate plane")
    if abs(np.imag(num)) > 1e-10 * max(abs(num), 1.0):
        raise DomainError("curvature value is not numerically real")
    return float(np.real(num) / den)


@dataclass
class KappaReport:
    kappa_hat: float
    plane: IsotropicPlane | None
    pic: bool
    samples: int


def kappa_pic_estimate(N: AmbientSpace, samples: int = 2000,
                       refine: int = 200, seed: int = 0) -> KappaReport:
    """Estimate kappa = min K(Pi) over isotropic planes by sampling.

    Sampling happens in the tangent space at the base point (the model
    geometries are homogeneous), followed by local minimization over raw
    4-frame coordinates.  Deterministic for a fixed seed.
    """
    if samples < 1000:
        raise DomainError("need at least 10^3 samples")
    nt = N.tangent_dim
    if nt < 4:
        raise DomainError("tangent dimension too small for isotropic planes")
    if N.is_flat:
        return KappaReport(0.0, None, False, samples)
    basis = N.tangent_basis()
    point = N.base_point()
    rng = np.random.default_rng(seed)

    def k_of_raw(A):
        Q, R = np.linalg.qr(A)
        Q = Q * np.sign(np.diag(R))
        plane = plane_from_frame(basis @ Q)
        return complex_sectional_curvature(N, point, plane), plane

    best_val = np.inf
    best_raw = None
    for _ in range(samples):
        A = rng.standard_normal((nt, 4))
        val, _ = k_of_raw(A)
        if val < best_val:
            best_val, best_raw = val, A

    if refine > 0 and best_raw is not None:
        res = scipy.optimize.minimize(
            lambda x: k_of_raw(x.reshape(nt, 4))[0],
            best_raw.ravel(), method="Nelder-Mead",
            options={"maxiter": refine * 10, "xatol": 1e-10, "fatol": 1e-12})
        if res.fun < best_val:
            best_val, best_raw = res.fun, res.x.reshape(nt, 4)

    _, plane = k_of_raw(best_raw)
    return KappaReport(float(best_val), plane, best_val > 1e-9, samples)


# ---------------------------------------------------------------------------
# immersions


@dataclass
class Immersion:
    """Sampled conformal immersion of a torus chart into a model ambient.

    The chart is z = scale * (xi + eta * tau) over (xi, eta) in [0,1)^2;
    lam2 is the conformal factor with da = lam2 * dxdy.
    """

    lattice: Lattice
    scale: float
    ambient: AmbientSpace
    F: np.ndarray                     # (n, n, dim)
    Fz: np.ndarray                    # (n, n, dim) complex
    lam2: np.ndarray                  # (n, n)
    mask: np.ndarray                  # (n, n) bool, True where active
    flat: bool
    normal_lines: list[tuple[LineHolonomy, np.ndarray]] = field(default_factory=list)
    normal_pairing: np.ndarray | None = None
    second_ff_zero: bool = False
    periods: tuple[float, float] | None = None
    puncture_radius: float | None = None

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def dim(self) -> int:
        return self.F.shape[2]

    def dxdy_weight(self) -> float:
        """Chart measure of one grid cell."""
        return self.scale ** 2 * self.lattice.tau2 / self.n ** 2

    def da_field(self) -> np.ndarray:
        """Induced area of each grid cell (zero on masked cells)."""
        out = self.lam2 * self.dxdy_weight()
        return np.where(self.mask, out, 0.0)

    def area(self) -> float:
        return float(np.sum(self.da_field()))


def elliptic_curve_immersion(lat: Lattice, puncture_radius: float,
                             n: int) -> Immersion:
    """The elliptic curve (wp, wp') in R^4, punctured at the lattice point.

    Holomorphic, hence conformal and minimal; the tangent frame is stored
    analytically, so the conformality residual is exact.
    """
    if not (0 < puncture_radius < 0.3):
        raise DomainError("puncture radius must lie in (0, 0.3)")
    if n < 16:
        raise DomainError("grid too coarse")
    h = 1.0 / n
    xi = np.arange(n) * h
    eta = np.arange(n) * h
    X, Y = np.meshgrid(xi, eta, indexing="ij")
    Z = X + Y * lat.tau
    # Distance to the nearest lattice point, measured in oblique units.
    red = (X - np.round(X)) + (Y - np.round(Y)) * lat.tau
    dist = np.abs(red)
    mask = dist > puncture_radius

    Zs = np.where(mask, Z, 0.37 + 0.41j)  # dummy value off the pole
    p, pp = wp(Zs, lat)
    g2, _ = eisenstein_invariants(lat)
    ppp = 6.0 * p ** 2 - g2 / 2.0

    F = np.stack([p.real, p.imag, pp.real, pp.imag], axis=-1)
    Fz = np.stack([pp / 2, -1j * pp / 2, ppp / 2, -1j * ppp / 2], axis=-1)
    lam2 = np.abs(pp) ** 2 + np.abs(ppp) ** 2
    amb = AmbientSpace(kind="euclidean", dim=4)
    return Immersion(
        lattice=lat, scale=1.0, ambient=amb, F=F, Fz=Fz, lam2=lam2,
        mask=mask, flat=False, puncture_radius=puncture_radius,
    )


def product_geodesic_torus(L: float, rho: float, n_sphere: int,
                           lens: tuple[int, int], n: int) -> Immersion:
    """Totally geodesic flat torus in S^1(L) x (S^{n_sphere}(rho)/lens).

    The image is the circle factor times the short closed geodesic of the
    lens quotient; periods are (2 pi L, 2 pi rho / p).  The normal bundle
    carries the lens rotation by 2 pi q / p per vertical period, recorded as
    holonomy twist data on the complexified normal lines.
    """
    p, q = lens
    if p < 1:
        raise DomainError("lens order must be >= 1")
    if p > 1 and math.gcd(p, q) != 1:
        raise DomainError("lens parameters must be coprime")
    if p > 1 and n_sphere != 3:
        raise DomainError("twisted lens quotients are supported on S^3 only")
    if n_sphere < 3:
        raise DomainError("sphere dimension must be >= 3")
    a_len = 2 * np.pi * L
    b_len = 2 * np.pi * rho / p
    lat = Lattice(0.0, b_len / a_len)
    amb = AmbientSpace(kind="product_circle_sphere", circle_radius=L,
                       sphere_radius=rho, n_sphere=n_sphere, lens=(p, q))
    dim = amb.dim
    h = 1.0 / n
    xi = np.arange(n) * h
    eta = np.arange(n) * h
    X, Y = np.meshgrid(xi, eta, indexing="ij")
    t = a_len * X
    s = b_len * Y
    F = np.zeros((n, n, dim))
    F[:, :, 0] = t
    F[:, :, 1] = rho * np.cos(s / rho)
    F[:, :, 2] = rho * np.sin(s / rho)
    # Tangents in arc-length chart coordinates (z = x + i y, x along S^1).
    Fz = np.zeros((n, n, dim), dtype=complex)
    Fz[:, :, 0] = 0.5
    Fz[:, :, 1] = -0.5j * (-np.sin(s / rho))
    Fz[:, :, 2] = -0.5j * (np.cos(s / rho))
    lam2 = np.ones((n, n))
    mask = np.ones((n, n), dtype=bool)

    e3 = np.zeros(dim)
    e4 = np.zeros(dim)
    e3[3] = 1.0
    e4[4] = 1.0
    alpha = 2 * np.pi * q / p if p > 1 else 0.0
    eps_minus = (e3 - 1j * e4) / np.sqrt(2)   # vertical holonomy e^{+i alpha}
    eps_plus = (e3 + 1j * e4) / np.sqrt(2)    # vertical holonomy e^{-i alpha}
    normal_lines = [
        (LineHolonomy(0.0, alpha), eps_minus),
        (LineHolonomy(0.0, -alpha), eps_plus),
    ]
    pairing = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    return Immersion(
        lattice=lat, scale=a_len, ambient=amb, F=F, Fz=Fz, lam2=lam2,
        mask=mask, flat=True, normal_lines=normal_lines,
        normal_pairing=pairing, second_ff_zero=True,
        periods=(a_len, b_len),
    )


# ---------------------------------------------------------------------------
# derived surface quantities


@dataclass
class SurfaceQuantities:
    lam2: np.ndarray
    tangent_proj: np.ndarray       # (n, n, dim, dim)
    normal_proj: np.ndarray
    da: np.ndarray
    second_ff_norm2: np.ndarray | None
    branch_mask: np.ndarray


def surface_quantities(imm: Immersion) -> SurfaceQuantities:
    """Pointwise projections, area weights, and second-fundamental-form data."""
    n, dim = imm.n, imm.dim
    Fx = 2 * np.real(imm.Fz)
    Fy = -2 * np.imag(imm.Fz)
    nrm_x = np.linalg.norm(Fx, axis=2)
    nrm_y = np.linalg.norm(Fy, axis=2)
    branch = (nrm_x < 1e-8) | (nrm_y < 1e-8)
    safe_x = np.where(branch, 1.0, nrm_x)
    safe_y = np.where(branch, 1.0, nrm_y)
    t1 = Fx / safe_x[:, :, None]
    t2 = Fy / safe_y[:, :, None]
    PT = (np.einsum("xyi,xyj->xyij", t1, t1)
          + np.einsum("xyi,xyj->xyij", t2, t2))
    PN = np.eye(dim)[None, None] - PT

    second = None
    if imm.second_ff_zero:
        second = np.zeros((n, n))
    elif imm.ambient.kind == "euclidean":
        # (d_z F_z)^perp by periodic central differences in the chart.
        h = 1.0 / n
        fxi = 0.5 * (1 - 1j * imm.lattice.tau1 / imm.lattice.tau2)
        feta = 1j / (2 * imm.lattice.tau2)
        dz_xi = (np.roll(imm.Fz, -1, axis=0) - np.roll(imm.Fz, 1, axis=0)) / (2 * h)
        dz_eta = (np.roll(imm.Fz, -1, axis=1) - np.roll(imm.Fz, 1, axis=1)) / (2 * h)
        dzFz = (np.conj(fxi) * dz_xi + np.conj(feta) * dz_eta) / imm.scale
        perp = np.einsum("xyij,xyj->xyi", PN, dzFz)
        second = np.sum(np.abs(perp) ** 2, axis=2)
    return SurfaceQuantities(
        lam2=imm.lam2, tangent_proj=PT, normal_proj=PN,
        da=imm.da_field(), second_ff_norm2=second, branch_mask=branch,
    )
