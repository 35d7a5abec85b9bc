"""Twisted spectra, index forms, cutoffs, and covering sweeps."""

import numpy as np
import pytest

from stabletori.errors import (DomainError, IsotropyViolationError,
                               ResolutionError, WrongFormError)
from stabletori.lattice import CoverSpec, Lattice, normalize_lattice
from stabletori.bundles import LineHolonomy
from stabletori.scenarios import (EllipticScenario, FlatTorusScenario,
                                  LensScenario, flat_chart_immersion)
from stabletori.stability import (covering_sweep, cutoff_inequality_audit,
                                  dbar_energy_chart, euclidean_index_form,
                                  flat_twisted_form, lattice_twisted_form,
                                  log_cutoff, min_eigenvalue, pic_index_form,
                                  real_second_variation, reduced_pic_gap,
                                  second_ff_energy, stability_threshold)
from stabletori.systole import (axis_truncated_distances, induced_systole,
                                phase_trial_section)

from conftest import fourier_lambda_min


# ---------------------------------------------------------------------------
# twisted spectrum against the Fourier oracle


def test_zero_twist_has_zero_mode():
    form = flat_twisted_form((1.0, 1.0), (0.0, 0.0), 32)
    res = min_eigenvalue(form)
    assert abs(res.lambda_min) < 1e-12
    assert res.residual < 1e-8


def test_twisted_spectrum_matches_oracle(rng):
    for _ in range(6):
        phi, theta = rng.uniform(0.5, np.pi - 0.5, 2) * rng.choice([-1, 1], 2)
        a, b = rng.uniform(0.7, 2.5, 2)
        form = flat_twisted_form((a, b), (phi, theta), 64)
        got = min_eigenvalue(form).lambda_min
        want = fourier_lambda_min((a, b), (phi, theta))
        assert got == pytest.approx(want, rel=2e-3)


def test_twisted_spectrum_with_shear(rng):
    lat, _ = normalize_lattice(0.3 + 1.1j)
    scale = 1.7
    twist = (1.1, -0.8)
    form = lattice_twisted_form(lat, scale, twist, 64)
    got = min_eigenvalue(form).lambda_min
    want = fourier_lambda_min((scale, scale * lat.tau2), twist,
                              shear=scale * lat.tau1)
    assert got == pytest.approx(want, rel=2e-3)


def test_constant_potential_shifts_spectrum_exactly():
    twist = (0.9, 0.4)
    lam0 = min_eigenvalue(flat_twisted_form((1.0, 1.0), twist, 48)).lambda_min
    lamV = min_eigenvalue(flat_twisted_form((1.0, 1.0), twist, 48,
                                            potential=-2.5)).lambda_min
    assert lamV == pytest.approx(lam0 - 2.5, abs=1e-10)


def test_spectrum_convergence_is_second_order():
    twist = (2.0, 1.2)
    want = fourier_lambda_min((1.0, 1.0), twist)
    errs = []
    for n in (16, 32, 64):
        got = min_eigenvalue(flat_twisted_form((1.0, 1.0), twist, n)).lambda_min
        errs.append(abs(got - want))
    rate1 = np.log2(errs[0] / errs[1])
    rate2 = np.log2(errs[1] / errs[2])
    assert min(rate1, rate2) > 1.8


def test_dense_and_sparse_paths_agree():
    form = flat_twisted_form((1.0, 1.3), (1.7, -0.6), 40, potential=-1.0)
    dense = min_eigenvalue(form, dense_cutoff=10 ** 9).lambda_min
    sparse = min_eigenvalue(form, dense_cutoff=1).lambda_min
    assert sparse == pytest.approx(dense, abs=1e-9)


# ---------------------------------------------------------------------------
# lens second variation


def test_lens_eigenvalue_ladder():
    sc = LensScenario()
    expected = {1: 0.0, 2: -0.75, 3: -1.0}
    for k, want in expected.items():
        got = min_eigenvalue(sc.cover_form(k, k, 64)).lambda_min
        assert got == pytest.approx(want, abs=2e-3)


def test_real_second_variation_uses_both_lines():
    sc = LensScenario()
    form = real_second_variation(sc.base_immersion(32), None, 32)
    assert len(form.meta["all_forms"]) == 2
    lams = [min_eigenvalue(f).lambda_min for f in form.meta["all_forms"]]
    assert lams[0] == pytest.approx(lams[1], abs=1e-9)


def test_real_second_variation_rejects_curved_base():
    imm = EllipticScenario(n=32).immersion()
    with pytest.raises(WrongFormError):
        real_second_variation(imm, None, 32)


def test_pic_index_form_curvature_term():
    # R(eps, f_z, conj eps, conj f_z) = 1/(4 rho^2): the dbar-energy version
    # of the curvature potential, half of kappa = 1/(2 rho^2)
    imm = LensScenario().base_immersion(32)
    form = pic_index_form(imm, imm.ambient, 32)
    assert form.meta["rterm"] == pytest.approx(0.25, rel=1e-12)
    assert form.convention == "dxdy"
    # the zero mode of the dbar form sits at zero: lambda_min(dbar) = 0
    lam = min_eigenvalue(form).lambda_min
    assert abs(lam) < 5e-4


def test_reduced_pic_gap_saturated_by_lens_zero_mode():
    sc = LensScenario()
    imm = sc.cover_immersion(1, 1, 64)
    R = induced_systole(imm, window=1, stride=16)
    hol = sc.line_holonomies()[0]
    deltas = axis_truncated_distances(imm, R, 64)
    s = phase_trial_section(hol, R, deltas, imm, 64)
    gap = reduced_pic_gap(s, 0.5, imm)
    scale = 0.5 * imm.area()
    assert abs(gap) < 2e-3 * scale


def test_reduced_pic_gap_requires_isotropy_certificate():
    sc = LensScenario()
    imm = sc.cover_immersion(1, 1, 32)
    sec = phase_trial_section(sc.line_holonomies()[0], 2.0,
                              axis_truncated_distances(imm, 2.0943951023931953, 32),
                              imm, 32) if False else None
    # simplest: strip the certificate from a valid section
    deltas = axis_truncated_distances(imm, 2.0943951023931953, 32)
    s = phase_trial_section(sc.line_holonomies()[0], 2.0943951023931953,
                            deltas, imm, 32)
    s.meta.pop("self_pairing")
    with pytest.raises(IsotropyViolationError):
        reduced_pic_gap(s, 0.5, imm)


# ---------------------------------------------------------------------------
# elliptic stability


def test_elliptic_form_positive_on_normal_sections():
    sc = EllipticScenario(n=48)
    worst, stable = sc.stability_audit(count=40)
    assert stable
    assert worst >= -1e-6


def test_euclidean_index_form_split_parts_have_signs():
    sc = EllipticScenario(n=32)
    form = sc.form()
    rng = np.random.default_rng(4)
    for _ in range(5):
        v = rng.standard_normal(form.dof) + 1j * rng.standard_normal(form.dof)
        plus = np.real(np.vdot(v, form.meta["Qplus"] @ v))
        minus = np.real(np.vdot(v, form.meta["Qminus"] @ v))
        assert plus >= -1e-10
        assert minus >= -1e-10


def test_second_ff_energy_vanishes_for_flat_immersion():
    imm = flat_chart_immersion(1.0, 1.0, 32)
    vals = np.zeros((32, 32, 4), dtype=complex)
    vals[:, :, 2] = 1.0   # constant normal field
    assert second_ff_energy(vals, imm) == pytest.approx(0.0, abs=1e-20)


# ---------------------------------------------------------------------------
# log cutoff


def test_log_cutoff_energy_matches_analytic_value():
    n = 512
    imm = flat_chart_immersion(1.0, 1.0, n)
    phi, energy = log_cutoff(0.1, (0.5 + 0.5 / n, 0.5 + 0.5 / n), imm, n)
    exact = 2 * np.pi / abs(np.log(0.1))
    assert energy == pytest.approx(exact, rel=0.03)
    assert phi.min() == 0.0 and phi.max() == 1.0


def test_log_cutoff_resolution_guards():
    imm = flat_chart_immersion(1.0, 1.0, 64)
    with pytest.raises(ResolutionError):
        log_cutoff(0.05, (0.5, 0.5), imm, 64)      # annulus unresolved
    imm2 = flat_chart_immersion(1.0, 1.0, 256)
    with pytest.raises(ResolutionError):
        log_cutoff(0.05, (0.5, 0.5), imm2, 256)    # inner radius unresolved
    with pytest.raises(DomainError):
        log_cutoff(1.5, (0.5, 0.5), imm, 64)


def test_cutoff_inequality_audit_chain_holds():
    sc = EllipticScenario(n=128)
    imm = sc.immersion()
    form = sc.form()
    n = 128
    phi, _ = log_cutoff(0.18, (0.5 + 0.5 / n, 0.5 + 0.5 / n), imm, n)
    vals = next(sc.random_normal_sections(1, seed=3))
    rep = cutoff_inequality_audit(vals, phi, form)
    assert rep.chain_holds
    assert rep.stability_holds
    assert rep.rhs_perp >= 0.0 and rep.lhs_top >= 0.0


# ---------------------------------------------------------------------------
# sweeps


def test_stability_threshold_floor_and_scaling():
    assert stability_threshold(0.0) == pytest.approx(1e-6)
    assert stability_threshold(1e-3) == pytest.approx(5e-3)


def test_covering_sweep_lens_onset():
    sc = LensScenario(n=64, systole_n=32)
    covers = [CoverSpec.scaling(k) for k in (1, 2, 3)]
    rows = covering_sweep(sc, covers)
    assert rows[0].stable
    assert not rows[1].stable and not rows[2].stable
    assert rows[0].systole == pytest.approx(2 * np.pi / 3, rel=1e-6)
    assert rows[1].lambda_min == pytest.approx(-0.75, abs=5e-3)


def test_covering_sweep_flat_tower_stays_stable():
    sc = FlatTorusScenario(n=32, systole_n=32)
    rows = covering_sweep(sc, [CoverSpec.scaling(k) for k in (1, 2)])
    assert all(r.stable for r in rows)
    assert rows[1].systole == pytest.approx(2 * rows[0].systole, rel=1e-9)


def test_covering_sweep_rejects_increasing_lambda():
    class Fake:
        def __init__(self):
            self.calls = 0

        def level(self, spec):
            self.calls += 1
            pot = 0.0 if self.calls == 1 else 1.0   # lambda goes up: invalid
            form = flat_twisted_form((1.0, 1.0), (0.0, 0.0), 16, potential=pot)
            return 1, 1.0, form, 0.0

    with pytest.raises(DomainError):
        covering_sweep(Fake(), [CoverSpec.scaling(1), CoverSpec.scaling(2)])
