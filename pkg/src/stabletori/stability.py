"""Discrete second-variation forms, twisted eigenproblems, and cutoffs.

All quadratic forms are assembled as sparse Hermitian matrices over grid
degrees of freedom.  Each form records its measure convention ("dxdy" or
"da") because the two appear side by side in the inequalities being
verified; mixing them silently is the classic error this tag prevents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import scipy.linalg

from .errors import (ConvergenceError, DomainError, IsotropyViolationError,
                     ResolutionError, WrongFormError)
from .geometry import AmbientSpace, Immersion, surface_quantities
from .lattice import Lattice, wirtinger_factors
from .sections import SectionGrid


# ---------------------------------------------------------------------------
# forms


@dataclass
class DiscreteForm:
    """Hermitian quadratic form Q and mass form M over section dofs."""

    Q: sp.spmatrix
    M: sp.spmatrix
    convention: str                 # measure convention of Q ("dxdy" or "da")
    shape: tuple                    # logical dof layout, e.g. (n, n) or (n, n, dim)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.Q = self.Q.tocsr()
        self.M = self.M.tocsr()
        herm = spla.norm(self.Q - self.Q.getH())
        scale = max(spla.norm(self.Q), 1.0)
        if herm > 1e-12 * scale:
            raise DomainError("form is not Hermitian")

    @property
    def dof(self) -> int:
        return self.Q.shape[0]

    def pack(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=complex).reshape(-1)
        sel = self.meta.get("active")
        return v[sel] if sel is not None else v

    def q_value(self, values: np.ndarray) -> float:
        v = self.pack(values)
        return float(np.real(np.vdot(v, self.Q @ v)))

    def m_value(self, values: np.ndarray) -> float:
        v = self.pack(values)
        return float(np.real(np.vdot(v, self.M @ v)))

    def rayleigh(self, values: np.ndarray) -> float:
        return self.q_value(values) / self.m_value(values)


@dataclass
class SpectrumResult:
    lambda_min: float
    eigensection: np.ndarray
    residual: float
    iterations: int


def _cov_diff_1d(n: int, h: float, step_angle: float, scheme: str) -> sp.spmatrix:
    """1D periodic covariant difference with a constant connection phase."""
    shift_fwd = sp.diags([np.ones(n - 1), [1.0]], [1, -(n - 1)], format="csr")
    if scheme == "forward":
        return (shift_fwd * np.exp(-1j * step_angle) - sp.eye(n)) / h
    shift_bwd = shift_fwd.T.tocsr()
    return (shift_fwd * np.exp(-1j * step_angle)
            - shift_bwd * np.exp(1j * step_angle)) / (2 * h)


def chart_metric(periods: tuple[float, float], shear: float = 0.0):
    """Inverse metric entries and area element of the (xi, eta) chart.

    Period vectors are p1 = (a, 0) and p2 = (shear, b) in the flat plane.
    """
    a, b = periods
    G = np.array([[a * a, a * shear], [a * shear, shear * shear + b * b]])
    ginv = np.linalg.inv(G)
    sqrtg = a * b
    return ginv, sqrtg


def flat_twisted_form(periods: tuple[float, float], twist: tuple[float, float],
                      n: int, potential=0.0, shear: float = 0.0,
                      convention: str = "da") -> DiscreteForm:
    """Covariant Dirichlet form + potential on a flat torus chart.

    Q(c) = sum g^{ab} (D_a c)* (D_b c) sqrt(g) h^2 + sum V |c|^2 sqrt(g) h^2
    over the unit (xi, eta) cell, with the holonomy phases (phi, theta)
    entering as constant connection potentials in the difference stencils.
    The mass form is the flat area measure, so generalized eigenvalues are
    physical frequencies squared plus the potential.
    """
    phi, theta = twist
    h = 1.0 / n
    ginv, sqrtg = chart_metric(periods, shear)
    w = sqrtg * h * h

    Fx = _cov_diff_1d(n, h, phi * h, "forward")
    Fy = _cov_diff_1d(n, h, theta * h, "forward")
    Cx = _cov_diff_1d(n, h, phi * h, "central")
    Cy = _cov_diff_1d(n, h, theta * h, "central")
    I = sp.eye(n, format="csr")
    Dxf = sp.kron(Fx, I, format="csr")
    Dyf = sp.kron(I, Fy, format="csr")
    Cx2 = sp.kron(Cx, I, format="csr")
    Cy2 = sp.kron(I, Cy, format="csr")

    Q = w * (ginv[0, 0] * (Dxf.getH() @ Dxf)
             + ginv[1, 1] * (Dyf.getH() @ Dyf)
             + ginv[0, 1] * (Cx2.getH() @ Cy2 + Cy2.getH() @ Cx2))
    V = np.broadcast_to(np.asarray(potential, dtype=float), (n, n)).reshape(-1)
    Q = Q + sp.diags(V * w)
    M = sp.diags(np.full(n * n, w))
    vmin = float(V.min()) * 1.0
    return DiscreteForm(Q, M, convention, (n, n), meta={
        "periods": periods, "twist": twist, "shear": shear,
        "potential_min": vmin, "cell_weight": w,
    })


def lattice_twisted_form(lat: Lattice, scale: float, twist: tuple[float, float],
                         n: int, potential=0.0) -> DiscreteForm:
    """flat_twisted_form for the torus scale*(Z + Z tau)."""
    a = scale
    shear = scale * lat.tau1
    b = scale * lat.tau2
    return flat_twisted_form((a, b), twist, n, potential=potential, shear=shear)


def min_eigenvalue(form: DiscreteForm, dense_cutoff: int = 2000) -> SpectrumResult:
    """Smallest generalized eigenvalue of (Q, M).

    Dense solve below the cutoff; sparse shift-invert Lanczos above it,
    shifted below the known lower bound of the form when available.
    """
    Q, M = form.Q, form.M
    mdiag = M.diagonal()
    if np.any(mdiag <= 0):
        raise DomainError("mass form must be positive definite")
    s = 1.0 / np.sqrt(mdiag)
    S = sp.diags(s)
    Qs = (S @ Q @ S).tocsc()

    if form.dof <= dense_cutoff:
        dense = Qs.toarray()
        vals, vecs = scipy.linalg.eigh(dense)
        lam = float(vals[0])
        y = vecs[:, 0]
        iterations = 0
    else:
        lb = form.meta.get("potential_min", 0.0)
        sigma = lb - 0.1 * max(1.0, abs(lb))
        last_exc = None
        lam = None
        for attempt in range(4):
            try:
                vals, vecs = spla.eigsh(Qs, k=1, sigma=sigma, which="LM",
                                        maxiter=10000, tol=1e-12)
                lam = float(vals[0])
                y = vecs[:, 0]
                break
            except Exception as exc:  # singular shift or no convergence
                last_exc = exc
                sigma -= max(1.0, abs(sigma))
        if lam is None:
            raise ConvergenceError(f"eigensolver failed: {last_exc}")
        iterations = -1
    v = s * y
    res = np.linalg.norm(Q @ v - lam * (M @ v)) / max(np.linalg.norm(v), 1e-30)
    return SpectrumResult(lam, v.reshape(form.shape), float(res), iterations)


# ---------------------------------------------------------------------------
# ambient-valued derivative fields (shared by the index forms and audits)


def _chart_factors(imm: Immersion) -> tuple[complex, complex]:
    fxi, feta = wirtinger_factors(imm.lattice)
    return fxi / imm.scale, feta / imm.scale


def ambient_derivative_fields(imm: Immersion, values: np.ndarray,
                              twist: tuple[float, float] = (0.0, 0.0),
                              extent: int = 1):
    """(d_z s, d_zbar s) of an ambient-valued grid by central differences.

    `values` has shape (extent*n, extent*n, dim) over the cover domain
    [0, extent)^2 in (xi, eta) units.
    """
    fxi, feta = _chart_factors(imm)
    nx = values.shape[0]
    h = extent / nx
    phi, theta = twist
    px = np.exp(-1j * phi * h)
    py = np.exp(-1j * theta * h)
    dx = (np.roll(values, -1, axis=0) * px - np.roll(values, 1, axis=0) / px) / (2 * h)
    dy = (np.roll(values, -1, axis=1) * py - np.roll(values, 1, axis=1) / py) / (2 * h)
    dzb = fxi * dx + feta * dy
    dz = np.conj(fxi) * dx + np.conj(feta) * dy
    return dz, dzb


def euclidean_index_form(imm: Immersion,
                         twist: tuple[float, float] = (0.0, 0.0),
                         extent: int = 1) -> DiscreteForm:
    """Complexified stability form for an immersion into Euclidean space.

    Q(s) = sum ( |(d_zbar s)^perp|^2 - |(d_z s)^top|^2 ) dxdy over the grid,
    restricted to dofs on unmasked nodes; mass form uses the induced area.
    `extent` builds the form on the [0, extent)^2 cover with the immersion
    data repeated periodically.
    """
    if imm.ambient.kind != "euclidean":
        raise WrongFormError("euclidean index form needs a euclidean ambient")
    quants = surface_quantities(imm)
    n, dim = imm.n, imm.dim
    N = extent * n

    def tile(fld):
        reps = (extent, extent) + (1,) * (fld.ndim - 2)
        return np.tile(fld, reps)

    PT = tile(quants.tangent_proj)
    PN = tile(quants.normal_proj)
    mask = tile(imm.mask)
    lam2 = tile(imm.lam2)

    h = extent / N
    phi, theta = twist
    fxi, feta = _chart_factors(imm)
    Cx = _cov_diff_1d(N, h, phi * h, "central")
    Cy = _cov_diff_1d(N, h, theta * h, "central")
    I = sp.eye(N, format="csr")
    Id = sp.eye(dim, format="csr")
    Dx = sp.kron(sp.kron(Cx, I), Id, format="csr")
    Dy = sp.kron(sp.kron(I, Cy), Id, format="csr")
    Dzb = fxi * Dx + feta * Dy
    Dz = np.conj(fxi) * Dx + np.conj(feta) * Dy

    def block_diag_field(P):
        rows = np.repeat(np.arange(N * N) * dim, dim * dim)
        rows = rows + np.tile(np.repeat(np.arange(dim), dim), N * N)
        cols = np.repeat(np.arange(N * N) * dim, dim * dim)
        cols = cols + np.tile(np.tile(np.arange(dim), dim), N * N)
        data = P.reshape(-1)
        return sp.csr_matrix((data, (rows, cols)), shape=(N * N * dim, N * N * dim))

    PNs = block_diag_field(PN.astype(complex))
    PTs = block_diag_field(PT.astype(complex))

    w0 = imm.dxdy_weight() * 1.0   # cell measure is the same on the cover grid
    wcell = np.where(mask, w0, 0.0).reshape(-1)
    W = sp.diags(np.repeat(wcell, dim))

    An = PNs @ Dzb
    At = PTs @ Dz
    Qplus = (An.getH() @ W @ An).tocsr()
    Qminus = (At.getH() @ W @ At).tocsr()
    Q = Qplus - Qminus
    da = (lam2 * np.where(mask, w0, 0.0)).reshape(-1)
    M = sp.diags(np.repeat(da, dim))

    active = np.repeat(mask.reshape(-1), dim)
    idx = np.flatnonzero(active)
    Q = Q[idx][:, idx]
    Qplus = Qplus[idx][:, idx]
    Qminus = Qminus[idx][:, idx]
    M = M.tocsr()[idx][:, idx]
    return DiscreteForm(Q, M, "dxdy", (N, N, dim), meta={
        "active": idx, "immersion": imm, "extent": extent,
        "Qplus": Qplus, "Qminus": Qminus, "twist": twist,
    })


def real_second_variation(imm: Immersion, N: AmbientSpace, n: int) -> DiscreteForm:
    """Second-variation form of a flat totally geodesic torus.

    For the product ambient the complexified normal bundle splits into
    holonomy lines; the real form's spectrum equals that of the scalar
    twisted Laplacian with the constant curvature potential on each line
    (real rotation pairs correspond to the complex scalar).  The returned
    form is the line with the smaller predicted bottom; both lines are in
    the metadata.
    """
    if not imm.flat:
        raise WrongFormError("real second variation implemented for flat tori")
    if N is None:
        N = imm.ambient
    periods = imm.periods
    if N.is_flat:
        return flat_twisted_form(periods, (0.0, 0.0), n, potential=0.0)
    if N.kind != "product_circle_sphere":
        raise WrongFormError("unsupported ambient")
    pot = -1.0 / N.sphere_radius ** 2
    forms = []
    for hol, _eps in imm.normal_lines:
        forms.append(flat_twisted_form(periods, (hol.phi, hol.theta), n,
                                       potential=pot))
    # The two lines are complex conjugate; their spectra coincide.
    out = forms[0]
    out.meta["lines"] = [hol for hol, _ in imm.normal_lines]
    out.meta["all_forms"] = forms
    return out


def pic_index_form(imm: Immersion, N: AmbientSpace, n: int) -> DiscreteForm:
    """Form of the isotropic-section inequality on a flat normal line.

    Q(c) = sum |nabla_zbar c|^2 dxdy - sum R(eps, f_z, conj eps, conj f_z)
    |c|^2 dxdy for the first isotropic normal line; the tangential term
    vanishes for totally geodesic immersions.  Mass form carries da.
    """
    if not imm.flat or not imm.normal_lines:
        raise WrongFormError("pic index form needs a flat twisted scenario")
    hol, eps = imm.normal_lines[0]
    point = imm.F[0, 0]
    fz = imm.Fz[0, 0]
    rterm = np.real(N.curvature(eps, fz, np.conj(eps), np.conj(fz), point=point))
    a, b = imm.periods
    form = flat_twisted_form((a, b), (hol.phi, hol.theta), n,
                             convention="dxdy")
    # |dbar c|^2 is a quarter of the covariant Dirichlet density mode by
    # mode, so the assembled Laplacian form is scaled down before the
    # curvature potential (which is already in dbar normalization) enters.
    w = form.meta["cell_weight"]
    ndof = form.Q.shape[0]
    form.Q = (0.25 * form.Q - rterm * w * sp.eye(ndof)).tocsr()
    form.meta["rterm"] = rterm
    form.meta["line"] = hol
    return form


def dbar_energy_chart(sec: SectionGrid, imm: Immersion) -> float:
    """sum |nabla_zbar c|^2 dxdy for a scalar section in the chart of imm."""
    from .sections import dbar
    d = dbar(sec)
    w = imm.scale ** 2 * imm.lattice.tau2 * sec.hx * sec.hy
    return float(np.sum(np.abs(d.values / imm.scale) ** 2) * w)


def reduced_pic_gap(s: SectionGrid, kappa: float, imm: Immersion,
                    isotropy_tol: float = 1e-8) -> float:
    """Slack of the reduced isotropic inequality,
    2 * int |nabla_zbar s|^2 dxdy - kappa * int |s|^2 da.

    The leading 2 converts the dxdy energy to the da normalization of the
    right-hand side; the lens zero mode saturates the inequality exactly.
    """
    self_pairing = s.meta.get("self_pairing")
    if self_pairing is None or abs(self_pairing) > isotropy_tol:
        raise IsotropyViolationError("section is not registered isotropic")
    energy = dbar_energy_chart(s, imm)
    w = imm.scale ** 2 * imm.lattice.tau2 * s.hx * s.hy
    lam2 = 1.0 if imm.flat else None
    if lam2 is None:
        raise WrongFormError("reduced gap implemented for flat scenarios")
    mass_da = float(np.sum(np.abs(s.values) ** 2) * w)
    return 2.0 * energy - kappa * mass_da


# ---------------------------------------------------------------------------
# logarithmic cutoff


def log_cutoff(epsilon: float, center: tuple[float, float], imm: Immersion,
               n: int | None = None):
    """Logarithmic cutoff around a chart point and its Dirichlet energy.

    phi = clip(log(r / eps^2) / |log eps|, 0, 1) with r the chart distance
    to `center` (in the same units as the immersion scale).  The energy is
    the conformally invariant chart Dirichlet integral, which equals the
    induced-metric energy for any conformal immersion; for the flat metric
    it converges to 2 pi / |log eps|.
    """
    if not (0 < epsilon < 1):
        raise DomainError("epsilon must be in (0, 1)")
    if n is None:
        n = imm.n
    lat = imm.lattice
    h_phys = imm.scale * max(1.0, abs(lat.tau)) / n
    if (epsilon - epsilon ** 2) / h_phys < 8:
        raise ResolutionError("annulus resolved by fewer than 8 cells")
    if epsilon ** 2 / h_phys < 2:
        raise ResolutionError("inner radius under-resolved")
    hx = 1.0 / n
    xi = np.arange(n) * hx
    X, Y = np.meshgrid(xi, xi, indexing="ij")
    dxi = X - center[0]
    deta = Y - center[1]
    dxi -= np.round(dxi)
    deta -= np.round(deta)
    r = np.abs(imm.scale * (dxi + deta * lat.tau))
    with np.errstate(divide="ignore"):
        phi = np.log(r / epsilon ** 2) / (-np.log(epsilon))
    phi = np.clip(phi, 0.0, 1.0)
    phi[r == 0] = 0.0

    ginv, sqrtg = chart_metric((imm.scale, imm.scale * lat.tau2),
                               shear=imm.scale * lat.tau1)
    px = (np.roll(phi, -1, axis=0) - phi) / hx
    py = (np.roll(phi, -1, axis=1) - phi) / hx
    dens = (ginv[0, 0] * px ** 2 + ginv[1, 1] * py ** 2
            + 2 * ginv[0, 1] * px * py)
    energy = float(np.sum(dens) * sqrtg * hx * hx)
    return phi, energy


@dataclass
class CutoffAuditReport:
    lhs_top: float          # int |(d (phi s))^top|^2
    rhs_perp: float         # int |(d_zbar (phi s))^perp|^2
    term_phi2_perp: float   # int phi^2 |(d_zbar s)^perp|^2
    term_grad: float        # int |grad phi|^2 |s|^2
    term_cross: float       # 2 sqrt(int |grad phi|^2) sqrt(int |s|^2 |(d_zbar s)^perp|^2)
    chain_holds: bool
    stability_holds: bool


def cutoff_inequality_audit(values: np.ndarray, phi: np.ndarray,
                            form: DiscreteForm,
                            tol: float = 1e-9) -> CutoffAuditReport:
    """Evaluate the three-term cutoff inequality chain for phi * s.

    `values` is the ambient-valued section on the full grid of the form's
    immersion; `phi` a scalar cutoff on the same grid.
    """
    imm: Immersion = form.meta["immersion"]
    extent = form.meta.get("extent", 1)
    twist = form.meta.get("twist", (0.0, 0.0))
    quants = surface_quantities(imm)

    def tile(fld):
        reps = (extent, extent) + (1,) * (fld.ndim - 2)
        return np.tile(fld, reps)

    PT = tile(quants.tangent_proj)
    PN = tile(quants.normal_proj)
    mask = tile(imm.mask)
    w0 = imm.dxdy_weight()
    w = np.where(mask, w0, 0.0)

    def top(fld):
        return np.einsum("xyij,xyj->xyi", PT, fld)

    def perp(fld):
        return np.einsum("xyij,xyj->xyi", PN, fld)

    def integ(density):
        return float(np.sum(density * w))

    phis = phi[:, :, None] * values
    dz_ps, dzb_ps = ambient_derivative_fields(imm, phis, twist, extent)
    dz_s, dzb_s = ambient_derivative_fields(imm, values, twist, extent)
    nx = values.shape[0]
    h = extent / nx
    fxi, feta = _chart_factors(imm)
    gx = (np.roll(phi, -1, axis=0) - np.roll(phi, 1, axis=0)) / (2 * h)
    gy = (np.roll(phi, -1, axis=1) - np.roll(phi, 1, axis=1)) / (2 * h)
    # |grad phi|^2 = 4 |d_zbar phi|^2 for a real function.
    grad2 = 4.0 * np.abs(fxi * gx + feta * gy) ** 2

    ns2 = np.sum(np.abs(values) ** 2, axis=2)
    perp_dzb_s2 = np.sum(np.abs(perp(dzb_s)) ** 2, axis=2)

    lhs_top = integ(np.sum(np.abs(top(dz_ps)) ** 2, axis=2))
    rhs_perp = integ(np.sum(np.abs(perp(dzb_ps)) ** 2, axis=2))
    t_phi2 = integ(phi ** 2 * perp_dzb_s2)
    t_grad = integ(grad2 * ns2)
    t_cross = 2.0 * np.sqrt(integ(grad2)) * np.sqrt(integ(ns2 * perp_dzb_s2))

    chain = rhs_perp <= t_phi2 + t_grad + t_cross + tol * max(1.0, rhs_perp)
    stab = lhs_top <= rhs_perp + tol * max(1.0, rhs_perp)
    return CutoffAuditReport(lhs_top, rhs_perp, t_phi2, t_grad, t_cross,
                             bool(chain), bool(stab))


# ---------------------------------------------------------------------------
# sweeps and energies


@dataclass
class SweepRow:
    degree: int
    systole: float
    lambda_min: float
    stable: bool


def stability_threshold(disc_error: float = 0.0) -> float:
    """Stable means lambda_min >= -threshold; zero modes sit at zero."""
    return max(1e-6, 5.0 * disc_error)


def covering_sweep(scenario, covers) -> list[SweepRow]:
    """Systole / bottom-eigenvalue table over a tower of covers.

    `scenario` provides level(spec) -> (degree, systole, form, disc_error);
    monotone nonincreasing lambda_min across nested levels is checked and
    recorded in each scenario's diagnostics.
    """
    rows = []
    prev = np.inf
    for spec in covers:
        degree, systole, form, disc_err = scenario.level(spec)
        lam = min_eigenvalue(form).lambda_min
        stable = lam >= -stability_threshold(disc_err)
        rows.append(SweepRow(degree, systole, lam, stable))
        if lam > prev + 1e-8:
            raise DomainError("lambda_min increased along the tower")
        prev = lam
    return rows


def second_ff_energy(values: np.ndarray, imm: Immersion,
                     extent: int = 1) -> float:
    """int |(d_z s)^top|^2 da for an ambient-valued section over a cover."""
    quants = surface_quantities(imm)

    def tile(fld):
        reps = (extent, extent) + (1,) * (fld.ndim - 2)
        return np.tile(fld, reps)

    PT = tile(quants.tangent_proj)
    da = tile(imm.da_field())
    dz, _ = ambient_derivative_fields(imm, values, extent=extent)
    top = np.einsum("xyij,xyj->xyi", PT, dz)
    return float(np.sum(np.sum(np.abs(top) ** 2, axis=2) * da))
