"""Command line front end.

Subcommands
-----------
sections    line-section decay table over a covering tower
decompose   commuting-pair decomposition report
cutoff      logarithmic cutoff energies against the analytic value
stability   covering sweep: degree, systole, bottom eigenvalue, verdict
systole     the full systole-bound pipeline on the lens scenario
abelian     sublattice systole growth table

Exit codes: 0 pass, 2 assertion failure, 3 config error, 4 resource guard.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import serialize
from .bundles import (FlatBundle, LineHolonomy, decompose_commuting_pair,
                      line_section)
from .errors import ResolutionError, StableToriError
from .lattice import CoverSpec, Lattice, wirtinger_factors
from .scenarios import (EllipticScenario, FlatTorusScenario, LensScenario,
                        flat_chart_immersion, sublattice_growth_table)
from .sections import dbar
from .stability import covering_sweep, log_cutoff, min_eigenvalue
from .systole import (axis_truncated_distances, induced_systole,
                      phase_trial_section, rayleigh_bound_check,
                      systole_bound_verdict)
from .geometry import kappa_pic_estimate, AmbientSpace

EXIT_PASS = 0
EXIT_ASSERT = 2
EXIT_CONFIG = 3
EXIT_RESOURCE = 4

MAX_GRID_DOF = 4_000_000

DEFAULTS = {
    "sections": {"tau": [0.0, 1.0], "phi": np.pi, "theta": np.pi,
                 "k_max": 16, "grid": 256},
    "decompose": {"rank": 4, "count": 5, "grid": 0, "seed": 0},
    "cutoff": {"epsilons": [0.05, 0.06, 0.07, 0.085, 0.1], "grid": 1024},
    "stability": {"scenario": "lens", "L": 2.0, "rho": 1.0, "p": 3, "q": 1,
                  "k_max": 3, "grid": 96},
    "systole": {"L": 2.0, "rho": 1.0, "p": 3, "q": 1, "grid": 96,
                "samples": 20000, "seed": 0},
    "abelian": {"tau": [0.0, 1.0], "k_max": 10},
}


def load_config(sub: str, args) -> dict:
    cfg = dict(DEFAULTS[sub])
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}")
        unknown = set(user) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(user)
    if args.grid is not None:
        cfg["grid"] = args.grid
    if args.seed is not None and "seed" in cfg:
        cfg["seed"] = args.seed
    if cfg.get("grid", 0) and cfg["grid"] ** 2 > MAX_GRID_DOF:
        raise ResourceGuard(f"grid {cfg['grid']} exceeds the dof cap")
    return cfg


class ConfigError(Exception):
    pass


class ResourceGuard(Exception):
    pass


def cmd_sections(cfg, out: Path, svg: bool):
    lat = Lattice(*cfg["tau"])
    L = LineHolonomy(cfg["phi"], cfg["theta"])
    fxi, feta = wirtinger_factors(lat)
    rows = []
    failures = []
    for k in range(1, cfg["k_max"] + 1):
        sec = line_section(L, k, lat, cfg["grid"])
        sup = float(np.max(np.abs(dbar(sec).values)))
        exact = sec.meta["sup_dbar_exact"]
        ratio = sup / exact if exact > 0 else 1.0
        rows.append((k, sup, exact, ratio))
        if exact > 0 and not (0.99 <= ratio <= 1.01):
            failures.append(f"k={k}: sup dbar off by {abs(ratio - 1):.2%}")
    serialize.write_csv(out / "sections.csv",
                        ["k", "sup_dbar", "closed_form", "ratio"], rows,
                        comment="verifies: sup|dbar s| matches the closed-form "
                                "constant and decays like 1/k")
    serialize.write_json(out / "sections.json",
                         {"rows": len(rows), "failures": failures})
    return failures


def cmd_decompose(cfg, out: Path, svg: bool):
    rng = np.random.default_rng(cfg["seed"])
    failures = []
    reports = []
    lat = Lattice(0.0, 1.0)
    for trial in range(cfg["count"]):
        r = cfg["rank"]
        # Random block structure conjugated by a random matrix.
        blocks = []
        left = r
        while left > 0:
            b = int(rng.integers(1, left + 1))
            blocks.append(b)
            left -= b
        A = np.zeros((r, r), dtype=complex)
        C = np.zeros((r, r), dtype=complex)
        off = 0
        for b in blocks:
            phi, theta = rng.uniform(-np.pi, np.pi, 2)
            Ab = np.exp(1j * phi) * np.eye(b)
            Ut = np.eye(b) + np.diag(np.full(b - 1, 0.3), 1) if b > 1 else np.eye(b)
            Cb = np.exp(1j * theta) * Ut
            A[off:off + b, off:off + b] = Ab
            C[off:off + b, off:off + b] = Cb
            off += b
        S = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
        Si = np.linalg.inv(S)
        bundle = FlatBundle(S @ A @ Si, S @ C @ Si, lat, commute_tol=1e-8)
        rep, _, _ = decompose_commuting_pair(bundle)
        reports.append({"trial": trial,
                        "ranks": list(rep.rank_multiset()),
                        "residual": rep.residual})
        if rep.rank_multiset() != tuple(sorted(blocks)):
            failures.append(f"trial {trial}: rank multiset mismatch")
        if rep.residual > 1e-8:
            failures.append(f"trial {trial}: residual {rep.residual:.2e}")
    serialize.write_json(out / "decompose.json",
                         {"reports": reports, "failures": failures})
    return failures


def cmd_cutoff(cfg, out: Path, svg: bool):
    n = cfg["grid"]
    imm = flat_chart_immersion(1.0, 1.0, n)
    center = (0.5 + 0.5 / n, 0.5 + 0.5 / n)
    rows = []
    failures = []
    for eps in cfg["epsilons"]:
        try:
            phi, energy = log_cutoff(eps, center, imm, n=n)
        except ResolutionError as exc:
            failures.append(f"eps={eps}: {exc}")
            continue
        exact = 2 * np.pi / abs(np.log(eps))
        prod = energy * abs(np.log(eps))
        rows.append((eps, energy, exact, prod, abs(energy / exact - 1)))
        if abs(energy / exact - 1) > 0.03:
            failures.append(f"eps={eps}: energy off by {abs(energy/exact-1):.2%}")
        if svg:
            serialize.svg_heatmap(out / f"cutoff_{eps}.svg", phi[::8, ::8],
                                  title="log cutoff")
    serialize.write_csv(out / "cutoff.csv",
                        ["epsilon", "energy", "exact", "energy_times_logeps",
                         "rel_err"], rows,
                        comment="verifies: cutoff Dirichlet energy matches "
                                "2*pi/|log eps| on the flat metric")
    serialize.write_json(out / "cutoff.json", {"failures": failures})
    return failures


def cmd_stability(cfg, out: Path, svg: bool):
    failures = []
    if cfg["scenario"] == "lens":
        scen = LensScenario(L=cfg["L"], rho=cfg["rho"], p=cfg["p"], q=cfg["q"],
                            n=cfg["grid"])
    elif cfg["scenario"] == "flat":
        scen = FlatTorusScenario(n=cfg["grid"])
    else:
        raise ConfigError(f"unknown scenario {cfg['scenario']!r}")
    covers = [CoverSpec.scaling(k) for k in range(1, cfg["k_max"] + 1)]
    rows = covering_sweep(scen, covers)
    serialize.write_csv(out / "stability.csv",
                        ["degree", "R_k", "lambda_min", "stable"],
                        [(r.degree, r.systole, r.lambda_min, r.stable)
                         for r in rows],
                        comment="verifies: covering sweep of the bottom "
                                "eigenvalue against the induced systole")
    serialize.write_json(out / "stability.json", {
        "rows": [{"degree": r.degree, "R": r.systole,
                  "lambda_min": r.lambda_min, "stable": r.stable}
                 for r in rows],
        "failures": failures,
    })
    return failures


def cmd_systole(cfg, out: Path, svg: bool):
    failures = []
    scen = LensScenario(L=cfg["L"], rho=cfg["rho"], p=cfg["p"], q=cfg["q"],
                        n=cfg["grid"])
    form = scen.cover_form(1, 1, cfg["grid"])
    lam = min_eigenvalue(form).lambda_min
    imm = scen.cover_immersion(1, 1, scen.systole_n)
    R = induced_systole(imm, window=1, stride=scen.systole_n // 4)
    amb = AmbientSpace(kind="product_circle_sphere", circle_radius=cfg["L"],
                       sphere_radius=cfg["rho"], n_sphere=3,
                       lens=(cfg["p"], cfg["q"]))
    kap = kappa_pic_estimate(amb, samples=cfg["samples"], seed=cfg["seed"])
    deltas = axis_truncated_distances(imm, R, cfg["grid"])
    hol = scen.line_holonomies()[0]
    trial = phase_trial_section(hol, R, deltas, imm, cfg["grid"])
    ray = rayleigh_bound_check(trial, imm, kap.kappa_hat, stable=lam >= -1e-6)
    verdict = systole_bound_verdict(lam, R, kap.kappa_hat, case="general")
    summary = {
        "R": R, "kappa_hat": kap.kappa_hat, "C": verdict.constant,
        "bound": verdict.bound, "lambda_min": lam,
        "seam_residual": trial.seam_residual,
        "rayleigh_lhs": ray.lhs, "rayleigh_energy": ray.rhs,
        "verdict": verdict.passed,
    }
    if not verdict.passed:
        failures.append("systole bound verdict failed")
    if not ray.verdict:
        failures.append("rayleigh bound check failed")
    if trial.seam_residual > 1e-9:
        failures.append("trial section seam residual too large")
    summary["failures"] = failures
    serialize.write_json(out / "systole.json", summary)
    if svg:
        serialize.svg_heatmap(out / "trial_phase.svg",
                              np.angle(trial.values[:, :, 0]),
                              title="trial section phase")
    return failures


def cmd_abelian(cfg, out: Path, svg: bool):
    tau = complex(cfg["tau"][0], cfg["tau"][1])
    rows = sublattice_growth_table(tau, cfg["k_max"])
    failures = []
    for (k, deg, got, want) in rows:
        if abs(got - want) > 1e-10 * max(1.0, want):
            failures.append(f"k={k}: systole {got} != {want}")
    serialize.write_csv(out / "abelian.csv",
                        ["k", "degree", "systole", "k_times_base"], rows,
                        comment="verifies: systole of the k-fold sublattice "
                                "grows exactly linearly in k")
    serialize.write_json(out / "abelian.json", {"failures": failures})
    return failures


COMMANDS = {
    "sections": cmd_sections,
    "decompose": cmd_decompose,
    "cutoff": cmd_cutoff,
    "stability": cmd_stability,
    "systole": cmd_systole,
    "abelian": cmd_abelian,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stabletori", description=__doc__)
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None)
    parser.add_argument("--out", default=".")
    parser.add_argument("--grid", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--svg", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.subcommand, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceGuard as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        failures = COMMANDS[args.subcommand](cfg, out, args.svg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResourceGuard, MemoryError) as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except ResolutionError as exc:
        print(f"resolution guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except StableToriError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    if failures:
        for f in failures:
            print(f"FAIL: {f}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
